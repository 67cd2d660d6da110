use std::io::Write;
use std::path::Path;

use crate::csvio::{fmt_f64, line};
use crate::error::Result;
use crate::Matrix;

/// Labelled samples: one feature row per sample, labels in `{-1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Self {
        assert_eq!(features.rows(), labels.len(), "one label per feature row");
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn row(&self, e: usize) -> &[f64] {
        self.features.row(e)
    }

    /// Number of selected samples (with multiplicity).
    pub(crate) fn selected_len(&self, idx: Option<&[usize]>) -> usize {
        idx.map_or(self.len(), <[usize]>::len)
    }

    /// Visits the selection in order; `None` means every sample once.
    pub(crate) fn for_each(&self, idx: Option<&[usize]>, mut f: impl FnMut(usize)) {
        match idx {
            Some(idx) => idx.iter().for_each(|&e| f(e)),
            None => (0..self.len()).for_each(f),
        }
    }

    /// `‖x_e‖₂` maximized over samples.
    pub fn max_row_norm(&self) -> f64 {
        (0..self.len())
            .map(|e| self.row(e).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Mean of `‖x_e‖₂`.
    pub fn mean_row_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..self.len())
            .map(|e| self.row(e).iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / self.len() as f64
    }

    /// Largest eigenvalue of `XᵀX / m`.
    pub fn gram_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let gram = self.features.transpose().matmul(&self.features).scaled(1.0 / self.len() as f64);
        crate::numerics::sym_spectral_norm(&gram).expect("Gram matrix is symmetric")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in 0..self.len() {
            let cells = self.row(e).iter().map(|&v| fmt_f64(v)).chain(std::iter::once(fmt_f64(self.labels[e])));
            writeln!(out, "{}", line(cells))?;
        }
        out.flush()?;
        Ok(())
    }
}
