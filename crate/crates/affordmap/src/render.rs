//! PNG rendering of maps: jet overlays for non-negative maps, a diverging ramp for signed ones.

use std::path::Path;

use affordmap_core::colormap::{diverging, jet, to_rgb8};
use affordmap_core::{normalize_01, upsample_bilinear, SpatialMap};
use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// Blends `jet(m)` over `image` with per-pixel weight `alpha * m`, where `m` is the
/// min-max normalized map resized to the image.
pub fn render_overlay(image: &RgbImage, map: &SpatialMap, alpha: f32) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(affordmap_core::Error::Argument(format!("alpha must lie in [0, 1], got {alpha}"))));
    }
    let (w, h) = image.dimensions();
    let resized = upsample_bilinear(map, h as usize, w as usize)?;
    let m = normalize_01(&resized);
    let mut out = image.clone();
    let alpha = alpha as f64;
    for (i, px) in out.pixels_mut().enumerate() {
        let t = m.values()[i] as f64;
        let weight = alpha * t;
        if weight == 0.0 {
            continue;
        }
        let color = to_rgb8(jet(t));
        for (p, c) in px.0.iter_mut().zip(color) {
            let v = (1.0 - weight) * *p as f64 + weight * c as f64;
            *p = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Signed map rendered symmetrically around zero (white), scaled by its largest magnitude.
pub fn render_signed(map: &SpatialMap) -> RgbImage {
    let (lo, hi) = map.min_max();
    let scale = lo.abs().max(hi.abs()) as f64;
    let (h, w) = map.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = map.get(y as usize, x as usize) as f64;
        let t = if scale > 0.0 { v / scale } else { 0.0 };
        Rgb(to_rgb8(diverging(t)))
    })
}

/// Non-negative map rendered with jet after min-max normalization.
pub fn render_heat(map: &SpatialMap) -> RgbImage {
    let m = normalize_01(map);
    let (h, w) = m.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| Rgb(to_rgb8(jet(m.get(y as usize, x as usize) as f64))))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_owned()));
    }
    image::open(path).map(|img| img.into_rgb8()).map_err(|source| Error::Image { path: path.to_owned(), source })
}

pub fn save_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|source| Error::Image { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 40) as u8, (y * 30) as u8, ((x + y) * 10) as u8]))
    }

    #[test]
    fn zero_alpha_and_zero_map_leave_image_alone() {
        let img = checker(6, 4);
        let map = SpatialMap::from_fn(2, 3, |r, c| (r + c) as f32).unwrap();
        assert_eq!(render_overlay(&img, &map, 0.0).unwrap(), img);
        let zero = SpatialMap::zeros(4, 6).unwrap();
        assert_eq!(render_overlay(&img, &zero, 0.7).unwrap(), img);
    }

    #[test]
    fn single_hot_full_alpha_takes_hottest_color() {
        let img = checker(5, 5);
        let map = SpatialMap::from_fn(5, 5, |r, c| if (r, c) == (2, 3) { 1.0 } else { 0.0 }).unwrap();
        let out = render_overlay(&img, &map, 1.0).unwrap();
        assert_eq!(out.get_pixel(3, 2).0, to_rgb8(jet(1.0)));
        assert_eq!(out.get_pixel(0, 0), img.get_pixel(0, 0));
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let img = checker(2, 2);
        let map = SpatialMap::zeros(2, 2).unwrap();
        assert!(render_overlay(&img, &map, 1.5).is_err());
    }

    #[test]
    fn signed_render_maps_zero_to_white() {
        let map = SpatialMap::new(1, 3, vec![-2.0, 0.0, 2.0]).unwrap();
        let img = render_signed(&map);
        assert_eq!(img.get_pixel(1, 0).0, [255, 255, 255]);
        assert_ne!(img.get_pixel(0, 0), img.get_pixel(2, 0));
    }
}
