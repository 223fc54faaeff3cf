mod common;

use std::collections::HashSet;
use std::fs;

use ndarray::Array2;
use rand::Rng as _;
use synrl_core::datasets::images::{IDX_IMAGES_FILE, IDX_LABELS_FILE};
use synrl_core::datasets::{
    export_idx_cache, generate_boundary_task, load_image_dataset, load_image_source, read_idx_pair,
    split, BoundaryTaskSpec, ImageDatasetSpec,
};
use synrl_core::rng::seeded;
use synrl_core::Dataset;

fn byte_valued(n: usize, side: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let x = Array2::from_shape_fn((n, side * side), |_| f64::from(rng.random::<u8>()) / 255.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Dataset::from_class_labels(x, &labels, classes).unwrap()
}

#[test]
fn idx_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = byte_valued(37, 5, 10, 1);
    export_idx_cache(&data, dir.path()).unwrap();
    let back = read_idx_pair(
        &dir.path().join(IDX_IMAGES_FILE),
        &dir.path().join(IDX_LABELS_FILE),
        10,
    )
    .unwrap();
    assert_eq!(back, data);

    let again = dir.path().join("again");
    export_idx_cache(&back, &again).unwrap();
    for f in [IDX_IMAGES_FILE, IDX_LABELS_FILE] {
        assert_eq!(
            fs::read(dir.path().join(f)).unwrap(),
            fs::read(again.join(f)).unwrap()
        );
    }
}

#[test]
fn png_tree_and_its_idx_cache_agree() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree");
    common::write_glyph_tree(&tree, 5, 2);
    let (png, skipped) = load_image_source(&tree, 28, 4).unwrap();
    assert_eq!((png.len(), skipped), (20, 0));
    assert!(png.x().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(
        png.class_labels(),
        (0..4).flat_map(|c| [c; 5]).collect::<Vec<_>>()
    );

    let cache = dir.path().join("cache");
    export_idx_cache(&png, &cache).unwrap();
    let (idx, _) = load_image_source(&cache, 28, 4).unwrap();
    assert_eq!(idx, png);
    assert!(load_image_source(&cache, 27, 4).is_err());
    assert!(load_image_source(&tree, 28, 3).is_err());
}

#[test]
fn split_is_a_disjoint_cover() {
    let n = 41;
    // Row r carries r in its first pixel so rows can be traced through the split.
    let x = Array2::from_shape_fn((n, 4), |(r, c)| if c == 0 { r as f64 / 255.0 } else { 0.0 });
    let data = Dataset::from_class_labels(x, &vec![0; n], 2).unwrap();
    let (train, val) = split(&data, 0.75, 3).unwrap();
    assert_eq!((train.len(), val.len()), (30, 11));
    let ids = |d: &Dataset| {
        d.x()
            .column(0)
            .iter()
            .map(|v| (v * 255.0).round() as usize)
            .collect::<Vec<_>>()
    };
    let mut all: Vec<usize> = ids(&train).into_iter().chain(ids(&val)).collect();
    assert_eq!(all.iter().copied().collect::<HashSet<_>>().len(), n);
    all.sort_unstable();
    assert_eq!(all, (0..n).collect::<Vec<_>>());

    let (train2, _) = split(&data, 0.75, 3).unwrap();
    assert_eq!(train, train2);
    let (train3, _) = split(&data, 0.75, 4).unwrap();
    assert_ne!(train, train3);
}

#[test]
fn image_spec_loads_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    common::write_glyph_tree(dir.path(), 8, 5);
    let spec = ImageDatasetSpec {
        classes: 4,
        ..ImageDatasetSpec::new(dir.path())
    };
    let s = load_image_dataset(&spec).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.skipped), (24, 8, 0));
    for row in s.train.y().rows().into_iter().chain(s.val.y().rows()) {
        assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(row.sum(), 1.0);
    }
}

#[test]
fn boundary_labels_are_signs_and_seeded() {
    let spec = BoundaryTaskSpec {
        hidden_units: 12,
        n_points: 400,
        seed: 8,
        ..Default::default()
    };
    let a = generate_boundary_task(&spec).unwrap();
    assert!(a.data.y().iter().all(|&v| v == 1.0 || v == -1.0));
    assert!(a.data.x().iter().all(|&v| (-10.0..=10.0).contains(&v)));
    let b = generate_boundary_task(&spec).unwrap();
    assert_eq!(a.target.to_json().unwrap(), b.target.to_json().unwrap());
    assert_eq!(a.data, b.data);
}
