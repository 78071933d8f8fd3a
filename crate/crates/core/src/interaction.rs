//! Turning recorded cross-attention into a single interaction map.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::map::{AttentionStack, SpatialMap};
use crate::math::{ceil, exp, floor};

/// Arithmetic mean over the selected layers (all layers when `layer_subset` is `None`).
pub fn aggregate_layers(stack: &AttentionStack, layer_subset: Option<&[usize]>) -> Result<SpatialMap> {
    let all: Vec<usize>;
    let layers = match layer_subset {
        Some(s) => s,
        None => {
            all = (0..stack.layers()).collect();
            &all
        }
    };
    if layers.is_empty() {
        return Err(Error::argument("layer subset is empty"));
    }
    if let Some(&bad) = layers.iter().find(|&&l| l >= stack.layers()) {
        return Err(Error::argument(format!("layer {bad} out of range for a stack of {} layers", stack.layers())));
    }
    let (h, w) = stack.grid();
    let mut acc = vec![0.0f64; h * w];
    for &l in layers {
        for (a, &v) in acc.iter_mut().zip(stack.layer(l)) {
            *a += v as f64;
        }
    }
    let n = layers.len() as f64;
    SpatialMap::new(h, w, acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Bilinear resize with half-pixel centers (`align_corners = false`).
pub fn upsample_bilinear(map: &SpatialMap, out_h: usize, out_w: usize) -> Result<SpatialMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::argument(format!("output size must be positive, got {out_h}x{out_w}")));
    }
    let (h, w) = map.dims();
    if (h, w) == (out_h, out_w) {
        return Ok(map.clone());
    }
    let rows: Vec<(usize, usize, f64)> = (0..out_h).map(|i| source_coord(i, h, out_h)).collect();
    let cols: Vec<(usize, usize, f64)> = (0..out_w).map(|j| source_coord(j, w, out_w)).collect();
    let src = map.values();
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let v00 = src[r0 * w + c0] as f64;
            let v01 = src[r0 * w + c1] as f64;
            let v10 = src[r1 * w + c0] as f64;
            let v11 = src[r1 * w + c1] as f64;
            let top = v00 + (v01 - v00) * fc;
            let bottom = v10 + (v11 - v10) * fc;
            out.push((top + (bottom - top) * fr) as f32);
        }
    }
    SpatialMap::new(out_h, out_w, out)
}

fn source_coord(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let x = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (floor(x) as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = if i1 == i0 { 0.0 } else { x - i0 as f64 };
    (i0, i1, frac)
}

/// Min-max stretch to `[0, 1]`; constant maps become all-zero.
pub fn normalize_01(map: &SpatialMap) -> SpatialMap {
    let (lo, hi) = map.min_max();
    let (h, w) = map.dims();
    let values = if hi > lo {
        let (lo, span) = (lo as f64, hi as f64 - lo as f64);
        map.values().iter().map(|&v| (((v as f64 - lo) / span) as f32).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; h * w]
    };
    SpatialMap::new(h, w, values).expect("normalized values are finite")
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`, `radius = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = ceil(3.0 * sigma) as usize;
    let two_s2 = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            exp(-x * x / two_s2)
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Half-sample symmetric reflection of `i` into `0..n` (`d c b a | a b c d | d c b a`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur with symmetric reflection at the borders.
///
/// `sigma == 0` returns the input unchanged. The reflection mode keeps the total
/// mass of the map.
pub fn gaussian_blur(map: &SpatialMap, sigma: f64) -> Result<SpatialMap> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::argument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(map.clone());
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as isize;
    let (h, w) = map.dims();
    let src = map.values();

    let mut horizontal = vec![0.0f64; h * w];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let cc = reflect_index(c as isize + t as isize - radius, w);
                acc += k * row[cc] as f64;
            }
            horizontal[r * w + c] = acc;
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let rr = reflect_index(r as isize + t as isize - radius, h);
                acc += k * horizontal[rr * w + c];
            }
            out.push(acc as f32);
        }
    }
    SpatialMap::new(h, w, out)
}
