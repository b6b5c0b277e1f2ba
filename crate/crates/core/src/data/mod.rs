//! Labeled matrix datasets, their file formats, stratified splitting and
//! the Wishart simulation generator.

mod csv;
mod mds;
mod pgm;
mod split;
mod wishart;

use std::collections::BTreeMap;

pub use self::csv::{load_csv, read_csv, save_csv, write_csv};
pub use self::mds::{load_mds, read_mds, save_mds, write_mds, MDS_HEADER_LEN, MDS_MAGIC};
pub use self::pgm::{load_pgm_dir, parse_pgm};
pub use self::split::stratified_split;
pub use self::wishart::{
    generate_simulation, generate_trial, wishart_classes, wishart_sample, SimulationSpec,
};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Equally shaped matrix samples with integer class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Matrix>,
    labels: Vec<i32>,
    class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(samples: Vec<Matrix>, labels: Vec<i32>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter(
                "dataset needs at least one sample".into(),
            ));
        }
        if samples.len() != labels.len() {
            return Err(Error::dimension(
                format!("{} labels", samples.len()),
                format!("{} labels", labels.len()),
            ));
        }
        let shape = samples[0].shape();
        if let Some((i, bad)) = samples.iter().enumerate().find(|(_, s)| s.shape() != shape) {
            return Err(Error::dimension(
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{} at sample {i}", bad.rows(), bad.cols()),
            ));
        }
        Ok(Dataset {
            samples,
            labels,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn samples(&self) -> &[Matrix] {
        &self.samples
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(m, n)` shared by every sample.
    pub fn shape(&self) -> (usize, usize) {
        self.samples[0].shape()
    }

    /// Sorted distinct class ids.
    pub fn classes(&self) -> Vec<i32> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn class_counts(&self) -> BTreeMap<i32, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let mut d = Dataset::new(samples, labels)?;
        d.class_names = self.class_names.clone();
        Ok(d)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Matrix, i32)> {
        self.samples.iter().zip(self.labels.iter().copied())
    }
}
