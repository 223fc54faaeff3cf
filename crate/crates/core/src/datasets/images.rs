//! Greyscale image classification data: class-per-directory PNG trees and
//! IDX image/label pairs (the latter doubling as a preprocessed cache).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_FILE: &str = "images-idx3-ubyte";
pub const IDX_LABELS_FILE: &str = "labels-idx1-ubyte";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageDatasetSpec {
    pub source_path: PathBuf,
    #[serde(default = "default_side")]
    pub image_side: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_side() -> usize {
    28
}
fn default_classes() -> usize {
    10
}
fn default_split() -> f64 {
    0.75
}

impl ImageDatasetSpec {
    pub fn new(source_path: impl Into<PathBuf>) -> Self {
        Self {
            source_path: source_path.into(),
            image_side: default_side(),
            classes: default_classes(),
            split_fraction: default_split(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImageSplit {
    pub train: Dataset,
    pub val: Dataset,
    /// Files that could not be decoded or had the wrong size.
    pub skipped: usize,
}

/// Loads the source, then applies a seeded permutation and a train/validation cut.
pub fn load_image_dataset(spec: &ImageDatasetSpec) -> Result<ImageSplit> {
    let (all, skipped) = load_image_source(&spec.source_path, spec.image_side, spec.classes)?;
    let (train, val) = split(&all, spec.split_fraction, spec.seed)?;
    Ok(ImageSplit {
        train,
        val,
        skipped,
    })
}

/// Loads every sample of a PNG tree or IDX pair, in canonical order
/// (PNG: class directory name, then file name, both lexicographic).
pub fn load_image_source(path: &Path, side: usize, classes: usize) -> Result<(Dataset, usize)> {
    if !path.exists() {
        return Err(Error::malformed(path, "source does not exist"));
    }
    if let Some((images, labels)) = find_idx_pair(path)? {
        let data = read_idx_pair(&images, &labels, classes)?;
        if data.input_dim() != side * side {
            return Err(Error::malformed(
                &images,
                format!(
                    "images have {} pixels, expected {}",
                    data.input_dim(),
                    side * side
                ),
            ));
        }
        return Ok((data, 0));
    }
    load_png_tree(path, side, classes)
}

/// Seeded permutation, then the first `floor(N · fraction)` rows train.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction {fraction} not in (0, 1)"
        )));
    }
    let n = data.len();
    let cut = (n as f64 * fraction).floor() as usize;
    if cut == 0 || cut == n {
        return Err(Error::InvalidConfig(format!(
            "split of {n} samples at {fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    Ok((data.select(&order[..cut])?, data.select(&order[cut..])?))
}

fn load_png_tree(root: &Path, side: usize, classes: usize) -> Result<(Dataset, usize)> {
    let mut class_dirs: Vec<PathBuf> = read_dir_sorted(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::malformed(
            root,
            "no class directories or IDX pair found",
        ));
    }
    if class_dirs.len() != classes {
        return Err(Error::malformed(
            root,
            format!(
                "found {} class directories, expected {classes}",
                class_dirs.len()
            ),
        ));
    }
    let mut files = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        for f in read_dir_sorted(dir)? {
            if f.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                files.push((label, f));
            }
        }
    }
    let decoded: Vec<Option<Vec<u8>>> = files
        .par_iter()
        .map(|(_, f)| decode_grey(f, side))
        .collect();

    let mut pixels = Vec::with_capacity(files.len() * side * side);
    let mut labels = Vec::with_capacity(files.len());
    let mut skipped = 0;
    for ((label, f), img) in files.iter().zip(decoded) {
        match img {
            Some(bytes) => {
                pixels.extend(bytes.iter().map(|&b| f64::from(b) / 255.0));
                labels.push(*label);
            }
            None => {
                log::debug!("skipping unreadable image {}", f.display());
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!(
            "skipped {skipped} unreadable images under {}",
            root.display()
        );
    }
    if labels.is_empty() {
        return Err(Error::malformed(root, "no readable images"));
    }
    let x = Array2::from_shape_vec((labels.len(), side * side), pixels)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok((Dataset::from_class_labels(x, &labels, classes)?, skipped))
}

fn decode_grey(path: &Path, side: usize) -> Option<Vec<u8>> {
    let img = image::open(path).ok()?.to_luma8();
    (img.width() as usize == side && img.height() as usize == side).then(|| img.into_raw())
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    Ok(entries)
}

fn find_idx_pair(dir: &Path) -> Result<Option<(PathBuf, PathBuf)>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let entries = read_dir_sorted(dir)?;
    let find = |suffix: &str| {
        entries
            .iter()
            .find(|p| {
                p.is_file()
                    && p.file_name()
                        .is_some_and(|n| n.to_string_lossy().ends_with(suffix))
            })
            .cloned()
    };
    match (find(IDX_IMAGES_FILE), find(IDX_LABELS_FILE)) {
        (Some(i), Some(l)) => Ok(Some((i, l))),
        (Some(i), None) => Err(Error::malformed(i, "IDX images without a labels file")),
        (None, Some(l)) => Err(Error::malformed(l, "IDX labels without an images file")),
        (None, None) => Ok(None),
    }
}

/// Reads an IDX image/label pair into a one-hot dataset with pixels scaled to `[0, 1]`.
pub fn read_idx_pair(images: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let ibytes = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lbytes = fs::read(labels).map_err(|e| Error::io(labels, e))?;

    let header = |bytes: &[u8], words: usize, path: &Path| -> Result<Vec<u32>> {
        if bytes.len() < 4 * words {
            return Err(Error::malformed(path, "truncated IDX header"));
        }
        Ok(bytes[..4 * words]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    let ih = header(&ibytes, 4, images)?;
    if ih[0] != IDX_IMAGES_MAGIC {
        return Err(Error::malformed(
            images,
            format!("bad magic {:#010x}", ih[0]),
        ));
    }
    let lh = header(&lbytes, 2, labels)?;
    if lh[0] != IDX_LABELS_MAGIC {
        return Err(Error::malformed(
            labels,
            format!("bad magic {:#010x}", lh[0]),
        ));
    }
    let (n, rows, cols) = (ih[1] as usize, ih[2] as usize, ih[3] as usize);
    if lh[1] as usize != n {
        return Err(Error::malformed(
            labels,
            format!("{} labels for {n} images", lh[1]),
        ));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = rows * cols;
    if ibytes.len() != 16 + n * d {
        return Err(Error::malformed(
            images,
            "payload length does not match header",
        ));
    }
    if lbytes.len() != 8 + n {
        return Err(Error::malformed(
            labels,
            "payload length does not match header",
        ));
    }
    let x = Array2::from_shape_vec(
        (n, d),
        ibytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
    .map_err(|e| Error::Shape(e.to_string()))?;
    let label_idx: Vec<usize> = lbytes[8..].iter().map(|&b| usize::from(b)).collect();
    if let Some(&bad) = label_idx.iter().find(|&&l| l >= classes) {
        return Err(Error::malformed(
            labels,
            format!("label {bad} >= {classes} classes"),
        ));
    }
    Dataset::from_class_labels(x, &label_idx, classes)
}

/// Writes `data` as an IDX pair (`images-idx3-ubyte`, `labels-idx1-ubyte`) in `dir`.
///
/// Features must be square images with values in `[0, 1]`; targets must be
/// one-hot over at most 256 classes.
pub fn export_idx_cache(data: &Dataset, dir: &Path) -> Result<()> {
    let d = data.input_dim();
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::Shape(format!("{d} features is not a square image")));
    }
    if data.target_dim() < 2 || data.target_dim() > 256 {
        return Err(Error::Shape(
            "IDX export needs one-hot targets over 2..=256 classes".into(),
        ));
    }
    if data.x().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Shape("pixel values outside [0, 1]".into()));
    }
    let one_hot = data
        .y()
        .rows()
        .into_iter()
        .all(|r| r.iter().all(|&v| v == 0.0 || v == 1.0) && r.sum() == 1.0);
    if !one_hot {
        return Err(Error::Shape("targets are not one-hot".into()));
    }

    let n = data.len() as u32;
    let mut img = Vec::with_capacity(16 + data.len() * d);
    for word in [IDX_IMAGES_MAGIC, n, side as u32, side as u32] {
        img.extend_from_slice(&word.to_be_bytes());
    }
    img.extend(data.x().iter().map(|&v| (v * 255.0).round() as u8));

    let mut lab = Vec::with_capacity(8 + data.len());
    for word in [IDX_LABELS_MAGIC, n] {
        lab.extend_from_slice(&word.to_be_bytes());
    }
    lab.extend(data.class_labels().into_iter().map(|l| l as u8));

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(IDX_IMAGES_FILE), &img)?;
    write_file(&dir.join(IDX_LABELS_FILE), &lab)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
