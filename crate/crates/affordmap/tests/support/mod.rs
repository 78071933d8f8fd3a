//! Synthetic bundle and dataset trees for the std-side tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use affordmap::tensor_io::{write_map, write_sample_bundle, SampleMeta};
use affordmap_core::{run_pipeline, FusionConfig, Mode, SpatialMap};
use image::{Rgb, RgbImage};

use crate::common::{in_mug_handle, mug_fixture, MUG_GRID};

pub fn meta_for(verb: &str, object: &str, h: usize, w: usize) -> SampleMeta {
    SampleMeta {
        image_path: String::new(),
        verb: verb.into(),
        object: object.into(),
        prompt: format!("a hand that will {verb} the {object}"),
        layer_ids: vec![4, 8, 12],
        grid_h: h,
        grid_w: w,
        source_model: "synthetic".into(),
        extra: BTreeMap::new(),
    }
}

pub fn write_mug_bundle(dir: &Path, seed: u64, verb: &str, object: &str) {
    let fx = mug_fixture(seed);
    write_sample_bundle(dir, &fx.sample, &meta_for(verb, object, MUG_GRID, MUG_GRID)).unwrap();
}

/// Soft handle mask at `res × res`, the shape a rendered heatmap would take.
pub fn handle_gt(res: usize) -> SpatialMap {
    let scale = MUG_GRID as f64 / res as f64;
    SpatialMap::from_fn(res, res, |r, c| {
        let gr = ((r as f64 + 0.5) * scale) as usize;
        let gc = ((c as f64 + 0.5) * scale) as usize;
        if in_mug_handle(gr, gc) {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

pub fn write_gt_png(path: &Path, map: &SpatialMap) {
    let (h, w) = map.dims();
    let img = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([(map.get(y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    img.save(path).unwrap();
}

pub fn write_image(path: &Path, w: u32, h: u32) {
    RgbImage::from_fn(w, h, |x, y| Rgb([(x * 3) as u8, (y * 5) as u8, 90])).save(path).unwrap();
}

const PAIRS: [(&str, &str, &str); 3] = [("seen", "hold", "mug"), ("seen", "pour", "kettle"), ("unseen", "hold", "cup")];

/// `n` mug samples spread over three (verb, object) pairs with mixed GT formats
/// and an image on every fifth sample. Returns the sample directories.
pub fn build_dataset(root: &Path, n: usize) -> Vec<PathBuf> {
    (0..n)
        .map(|i| {
            let (split, verb, object) = PAIRS[i % PAIRS.len()];
            let dir = root.join(split).join(verb).join(object).join(format!("img_{i:03}"));
            write_mug_bundle(&dir, 100 + i as u64, verb, object);
            let gt = handle_gt(48);
            if i % 4 == 3 {
                write_gt_png(&dir.join("gt.png"), &gt);
            } else {
                write_map(&dir.join("gt.npy"), &gt).unwrap();
            }
            if i % 5 == 0 {
                write_image(&dir.join("image.png"), 40, 40);
            }
            dir
        })
        .collect()
}

/// Samples whose GT is the pipeline's own prediction at grid resolution.
pub fn build_oracle_dataset(root: &Path, n: usize, cfg: &FusionConfig) {
    for i in 0..n {
        let dir = root.join("seen").join("hold").join("mug").join(format!("img_{i:03}"));
        write_mug_bundle(&dir, 7 + i as u64, "hold", "mug");
        let pred = run_pipeline(&mug_fixture(7 + i as u64).sample, cfg, Mode::InteractionXGeometry).unwrap();
        write_map(&dir.join("gt.npy"), &pred.affordance_map).unwrap();
    }
}
