#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use std::fs;
use std::path::{Path, PathBuf};

use affordmap::basis_io::{read_basis, write_basis};
use affordmap::tensor_io::{
    read_array, read_ground_truth, read_map, read_sample_bundle, write_array, write_map, write_sample_bundle,
};
use affordmap::Error;
use affordmap_core::npy::ArrayFile;
use affordmap_core::{aggregate_layers, pca_decompose, roi_from_attention, SpatialMap};
use npyz::WriterBuilder;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn rewrites_numpy_files_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["golden_3x5x7_f4.npy", "golden_1_f4.npy", "golden_12x1_f4.npy"] {
        let arr = read_array(&fixture(name)).unwrap();
        let out = dir.path().join(name);
        write_array(&out, &arr).unwrap();
        assert_eq!(fs::read(&out).unwrap(), fs::read(fixture(name)).unwrap(), "{name}");
    }
}

#[test]
fn golden_contents_match_generator() {
    let a = read_array(&fixture("golden_3x5x7_f4.npy")).unwrap();
    assert_eq!(a.shape, vec![3, 5, 7]);
    for (i, &v) in a.data.iter().enumerate() {
        assert_eq!(v, i as f32 * 0.125 - 6.0);
    }
    let b = read_array(&fixture("golden_2x2_f8.npy")).unwrap();
    assert_eq!(b.shape, vec![2, 2]);
    assert_eq!(b.data, vec![1.0, -2.5, 3.25, 1e-3f64 as f32]);
}

#[test]
fn independent_reader_accepts_our_files() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f32> = (0..60).map(|i| (i as f32).sin()).collect();
    let path = dir.path().join("x.npy");
    write_array(&path, &ArrayFile::new(vec![3, 4, 5], data.clone()).unwrap()).unwrap();
    let bytes = fs::read(&path).unwrap();
    let npy = npyz::NpyFile::new(&bytes[..]).unwrap();
    assert_eq!(npy.shape(), &[3, 4, 5]);
    assert_eq!(npy.into_vec::<f32>().unwrap(), data);
}

#[test]
fn reads_files_from_independent_writer() {
    let data: Vec<f32> = (0..24).map(|i| i as f32 / 7.0).collect();
    let mut buf = Vec::new();
    {
        let mut w =
            npyz::WriteOptions::<f32>::new().default_dtype().shape(&[2, 3, 4]).writer(&mut buf).begin_nd().unwrap();
        w.extend(data.iter().copied()).unwrap();
        w.finish().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("y.npy");
    fs::write(&path, buf).unwrap();
    let arr = read_array(&path).unwrap();
    assert_eq!(arr.shape, vec![2, 3, 4]);
    assert_eq!(arr.data, data);
}

#[test]
fn truncated_file_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = fs::read(fixture("golden_3x5x7_f4.npy")).unwrap();
    let path = dir.path().join("t.npy");
    fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    let err = read_array(&path).unwrap_err();
    assert!(matches!(err, Error::Array { source: affordmap_core::Error::Corrupt(_), .. }), "{err}");
    assert!(err.is_validation());
}

#[test]
fn numpy_written_bundle_loads() {
    let b = read_sample_bundle(&fixture("bundle_small")).unwrap();
    assert_eq!(b.features().grid(), (4, 4));
    assert_eq!(b.features().channels(), 3);
    assert_eq!(b.sample.verb.layers(), 2);
    assert_eq!(b.meta.verb, "hold");
    assert_eq!(b.meta.layer_ids, vec![7, 11]);
    assert_eq!(b.meta.extra["timesteps"], serde_json::json!([0.25]));
}

fn copy_fixture_bundle(dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for e in fs::read_dir(fixture("bundle_small")).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dst.join(e.file_name())).unwrap();
    }
}

#[test]
fn missing_file_is_named() {
    for name in ["meta.json", "features.npy", "attn_verb.npy", "attn_object.npy"] {
        let dir = tempfile::tempdir().unwrap();
        copy_fixture_bundle(dir.path());
        fs::remove_file(dir.path().join(name)).unwrap();
        let err = read_sample_bundle(dir.path()).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
        assert!(err.to_string().contains(name), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn inconsistent_grids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixture_bundle(dir.path());
    let p = dir.path().join("attn_verb.npy");
    write_array(&p, &ArrayFile::new(vec![2, 3, 4], vec![0.5; 24]).unwrap()).unwrap();
    assert!(matches!(read_sample_bundle(dir.path()), Err(Error::ShapeMismatch { .. })));

    copy_fixture_bundle(dir.path());
    let p = dir.path().join("features.npy");
    write_array(&p, &ArrayFile::new(vec![16, 3], vec![0.5; 48]).unwrap()).unwrap();
    assert!(matches!(read_sample_bundle(dir.path()), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn bad_meta_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixture_bundle(dir.path());
    let p = dir.path().join("meta.json");
    fs::write(&p, r#"{"verb":"Hold","object":"mug","grid_h":4,"grid_w":4}"#).unwrap();
    assert!(matches!(read_sample_bundle(dir.path()), Err(Error::Meta { .. })));
    fs::write(&p, "{not json").unwrap();
    assert!(matches!(read_sample_bundle(dir.path()), Err(Error::Meta { .. })));
}

#[test]
fn bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::mug_fixture(3);
    let meta = support::meta_for("hold", "mug", 32, 32);
    write_sample_bundle(dir.path(), &fx.sample, &meta).unwrap();
    let b = read_sample_bundle(dir.path()).unwrap();
    assert_eq!(b.sample, fx.sample);
    assert_eq!(b.meta, meta);
}

#[test]
fn ground_truth_from_png_and_npy() {
    let dir = tempfile::tempdir().unwrap();
    let gt = SpatialMap::new(2, 3, vec![0.0, 1.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
    let png = dir.path().join("gt.png");
    support::write_gt_png(&png, &gt);
    let back = read_ground_truth(&png).unwrap();
    assert_eq!(back.dims(), (2, 3));
    for (a, b) in back.values().iter().zip(gt.values()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
    }
    let npy = dir.path().join("gt.npy");
    write_map(&npy, &gt).unwrap();
    assert_eq!(read_ground_truth(&npy).unwrap(), gt);
    assert!(matches!(read_ground_truth(&dir.path().join("none.png")), Err(Error::MissingInput(_))));
}

#[test]
fn basis_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::mug_fixture(5);
    let obj = aggregate_layers(&fx.sample.object, None).unwrap();
    let roi = roi_from_attention(&obj, 0.4, 0.1).unwrap();
    let basis = pca_decompose(&fx.sample.features, roi, 3).unwrap();
    write_basis(dir.path(), &basis).unwrap();
    let stored = read_basis(dir.path()).unwrap();
    assert_eq!(stored.directions, basis.directions);
    assert_eq!(stored.eigenvalues, basis.explained_var);
    assert_eq!(stored.sidecar.roi, basis.roi);
    assert_eq!(stored.sidecar.mean_vec, basis.mean_vec);
    assert_eq!(stored.sidecar.sign_flips, basis.sign_flips);
    let raw = read_array(&dir.path().join("basis.npy")).unwrap();
    assert_eq!(raw.shape, vec![3 * 16 + 3]);
}

#[test]
fn rank_three_map_is_not_a_map() {
    let err = read_map(&fixture("golden_3x5x7_f4.npy")).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_read_is_identity(
        shape in prop::collection::vec(1usize..6, 1..5),
        seed in any::<u32>(),
    ) {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 * 1e-6 - 2.0).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.npy");
        let arr = ArrayFile::new(shape, data).unwrap();
        write_array(&path, &arr).unwrap();
        prop_assert_eq!(read_array(&path).unwrap(), arr);
        prop_assert_eq!(fs::metadata(&path).unwrap().len() % 64, (n * 4 % 64) as u64);
    }
}
