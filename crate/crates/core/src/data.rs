//! In-memory datasets.

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Row-major samples `x` (N × d, not bias-augmented) with targets `y` (N × c).
///
/// Targets are either one-hot rows (classification over `c > 1` classes) or a
/// single ±1 column (binary sign classification).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array2<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.nrows() != y.nrows() {
            return Err(Error::Shape(format!(
                "{} samples but {} targets",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::Shape("zero-width features or targets".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(
                "dataset contains NaN or infinite values".into(),
            ));
        }
        Ok(Self {
            x: x.as_standard_layout().into_owned(),
            y: y.as_standard_layout().into_owned(),
        })
    }

    /// Builds a one-hot classification dataset from class indices.
    pub fn from_class_labels(x: Array2<f64>, labels: &[usize], classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Shape(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let mut y = Array2::zeros((labels.len(), classes));
        for (row, &label) in labels.iter().enumerate() {
            y[[row, label]] = 1.0;
        }
        Self::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    /// Class index of each row: argmax for one-hot targets, `1` for positive /
    /// `0` for non-positive single-column targets.
    pub fn class_labels(&self) -> Vec<usize> {
        self.y.rows().into_iter().map(|r| target_class(r)).collect()
    }

    /// Copies the given rows, in the given order, into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Shape(format!(
                "row index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Self::new(
            self.x.select(Axis(0), indices),
            self.y.select(Axis(0), indices),
        )
    }
}

pub(crate) fn target_class(row: ArrayView1<'_, f64>) -> usize {
    if row.len() == 1 {
        usize::from(row[0] > 0.0)
    } else {
        argmax(row)
    }
}

/// Index of the first maximal entry.
pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
