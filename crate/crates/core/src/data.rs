use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `m` views of the same `N` samples, each stored as a `d_p × N` matrix, with
/// one integer label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<DMatrix<f64>>,
    labels: Vec<usize>,
    names: Option<Vec<String>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<DMatrix<f64>>, labels: Vec<usize>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Dataset("dataset has no views".into()));
        }
        let n = labels.len();
        for (p, v) in views.iter().enumerate() {
            if v.ncols() != n {
                return Err(Error::Dataset(format!(
                    "view {p} has {} samples, expected {n}",
                    v.ncols()
                )));
            }
            if v.nrows() == 0 {
                return Err(Error::Dataset(format!("view {p} has no features")));
            }
        }
        Ok(Self {
            views,
            labels,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.views.len() {
            return Err(Error::Dataset(format!(
                "{} names for {} views",
                names.len(),
                self.views.len()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.nrows()).collect()
    }

    /// `max(label) + 1`.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&c| c + 1)
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| v.select_columns(indices.iter()))
            .collect();
        Self {
            views,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            names: self.names.clone(),
        }
    }

    pub fn map_views(&self, mut f: impl FnMut(usize, &DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            views: self.views.iter().enumerate().map(|(p, v)| f(p, v)).collect(),
            labels: self.labels.clone(),
            names: self.names.clone(),
        }
    }
}
