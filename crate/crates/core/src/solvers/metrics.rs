use std::fs;
use std::path::Path;

use crate::csvio::{fmt_opt, line, parse_opt};
use crate::error::{Error, Result};
use crate::Vector;

use super::Algorithm;

/// Column names of the per-iteration CSV.
pub const CSV_HEADER: &str = "k,grad_norm_mean,consensus,inner_residual,tracker_drift,S_K,E_K,T_K";

/// Diagnostics of outer iteration `k`, evaluated at `x_{i,k}` and `y_{i,k}^{(T)}`
/// before the update. Accumulators include iteration `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub k: usize,
    /// `‖∇Φ(x̄_k)‖` (oracle).
    pub grad_norm_mean: Option<f64>,
    /// `‖Q_k‖_F`, columns `x_{i,k} − x̄_k`.
    pub consensus: f64,
    /// `(1/n) Σ ‖y_{i,k}^{(T)} − ỹ_k*‖` (oracle).
    pub inner_residual: Option<f64>,
    /// `‖ū_k − mean_i ∇̂f_i‖` (DBOGT).
    pub tracker_drift: Option<f64>,
    /// `Σ_{j ≤ k} ‖Q_j‖²`.
    pub s_k: f64,
    /// `Σ_{j ≤ k} Σ_i ‖x_{i,j} − x_{i,j−1}‖²`.
    pub e_k: f64,
    /// `Σ_{j ≤ k} ‖∇Φ(x̄_j)‖²` (oracle).
    pub t_k: Option<f64>,
    /// `Σ_{j ≤ k} Σ_i ‖y_{i,j}^{(T)} − y_i*(x_{i,j})‖²` with agent `i`'s own minimizer (oracle).
    pub a_k: Option<f64>,
    /// `Σ_{j ≤ k} Σ_i ‖v*_{i,j} − v⁰_{i,j}‖²` for the CG branch (oracle).
    pub b_k: Option<f64>,
    /// `‖ỹ_k* − y*(x̄_k)‖` (oracle).
    pub y_gap: Option<f64>,
    /// `‖x̄_{k+1} − (x̄_k − η_x d̄_k)‖` with `d` the update direction.
    pub average_residual: f64,
    /// Inner gradient-tracking residual (heterogeneous deterministic).
    pub inner_tracking: Option<f64>,
}

impl MetricsRow {
    pub fn csv_cells(&self) -> [Option<f64>; 7] {
        [
            self.grad_norm_mean,
            Some(self.consensus),
            self.inner_residual,
            self.tracker_drift,
            Some(self.s_k),
            Some(self.e_k),
            self.t_k,
        ]
    }
}

/// One parsed CSV line.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub cells: [Option<f64>; 7],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub algorithm: Algorithm,
    pub rows: Vec<MetricsRow>,
    /// `x_{i,K}`.
    pub final_x: Vec<Vector>,
    /// `‖∇Φ(x̄_K)‖` (oracle).
    pub final_grad_norm: Option<f64>,
    /// `κ` of the problem, for the consensus-gap check.
    pub kappa: f64,
}

impl RunMetrics {
    pub fn initial_grad_norm(&self) -> Option<f64> {
        self.rows.first().and_then(|r| r.grad_norm_mean)
    }

    /// `(1/(K+1)) Σ_{j=0}^{K} ‖∇Φ(x̄_j)‖²`.
    pub fn mean_sq_grad_norm(&self) -> Option<f64> {
        let t = self.rows.last()?.t_k?;
        let last = self.final_grad_norm?;
        Some((t + last * last) / (self.rows.len() + 1) as f64)
    }

    pub fn best_grad_norm(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.grad_norm_mean)
            .chain(self.final_grad_norm)
            .reduce(f64::min)
    }

    pub fn final_mean_x(&self) -> Vector {
        Vector::mean_of(&self.final_x)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let cells = std::iter::once(r.k.to_string()).chain(r.csv_cells().into_iter().map(fmt_opt));
            out.push_str(&line(cells));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            Some((_, h)) => return Err(Error::Parse { line: 1, message: format!("unexpected header `{h}`") }),
            None => return Err(Error::Parse { line: 1, message: "empty file".into() }),
        }
        let mut rows = Vec::new();
        for (idx, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: idx + 1, message };
            let parts: Vec<&str> = l.split(',').collect();
            if parts.len() != 8 {
                return Err(err(format!("expected 8 cells, found {}", parts.len())));
            }
            let k = parts[0].trim().parse::<usize>().map_err(|e| err(format!("k: {e}")))?;
            let mut cells = [None; 7];
            for (c, p) in cells.iter_mut().zip(&parts[1..]) {
                *c = parse_opt(p).map_err(|e| err(format!("`{p}`: {e}")))?;
            }
            rows.push(CsvRow { k, cells });
        }
        Ok(rows)
    }
}
