//! Runs an experiment config and writes its CSVs.

use std::fs;
use std::path::Path;

use crate::csvio::{fmt_opt, line};
use crate::error::Result;
use crate::solvers::{run, Algorithm, RunMetrics};

use super::config::ExperimentConfig;

/// One solver run of an experiment.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub name: String,
    pub records: Vec<RunRecord>,
}

pub const SUMMARY_HEADER: &str = "algorithm,seed,initial_grad_norm,final_grad_norm,best_grad_norm,mean_sq_grad_norm";

impl ExperimentSummary {
    pub fn runs_of(&self, alg: Algorithm) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(move |r| r.algorithm == alg)
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        let mut out: Vec<Algorithm> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.algorithm) {
                out.push(r.algorithm);
            }
        }
        out
    }

    /// Mean of `‖∇Φ(x̄_K)‖` over the repeats of `alg`.
    pub fn mean_final(&self, alg: Algorithm) -> Option<f64> {
        mean_std(self.runs_of(alg).map(|r| r.metrics.final_grad_norm)).map(|(m, _)| m)
    }

    pub fn mean_initial(&self, alg: Algorithm) -> Option<f64> {
        mean_std(self.runs_of(alg).map(|r| r.metrics.initial_grad_norm())).map(|(m, _)| m)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        let stats = |m: &RunMetrics| {
            [m.initial_grad_norm(), m.final_grad_norm, m.best_grad_norm(), m.mean_sq_grad_norm()]
        };
        for r in &self.records {
            let cells = [r.algorithm.name().to_string(), r.seed.to_string()]
                .into_iter()
                .chain(stats(&r.metrics).into_iter().map(fmt_opt));
            out.push_str(&line(cells));
            out.push('\n');
        }
        for alg in self.algorithms() {
            let per_run: Vec<[Option<f64>; 4]> = self.runs_of(alg).map(|r| stats(&r.metrics)).collect();
            let cols: Vec<Option<(f64, f64)>> = (0..4).map(|c| mean_std(per_run.iter().map(|s| s[c]))).collect();
            for (label, pick) in [("mean", 0), ("std", 1)] {
                let cells = [alg.name().to_string(), label.to_string()].into_iter().chain(
                    cols.iter().map(|c| fmt_opt(c.map(|(m, s)| if pick == 0 { m } else { s }))),
                );
                out.push_str(&line(cells));
                out.push('\n');
            }
        }
        out
    }

    /// `k` and `log10 ‖∇Φ(x̄_k)‖` per algorithm, averaged over repeats before the log.
    pub fn plotdata_csv(&self) -> String {
        let algs = self.algorithms();
        let header = std::iter::once("k".to_string()).chain(algs.iter().map(|a| format!("log10_grad_norm_{a}")));
        let mut out = line(header);
        out.push('\n');
        let series: Vec<Vec<Option<f64>>> = algs
            .iter()
            .map(|&alg| {
                let runs: Vec<Vec<Option<f64>>> = self.runs_of(alg).map(|r| grad_series(&r.metrics)).collect();
                let len = runs.iter().map(Vec::len).max().unwrap_or(0);
                (0..len)
                    .map(|k| {
                        mean_std(runs.iter().map(|s| s.get(k).copied().flatten()))
                            .map(|(m, _)| m.log10())
                    })
                    .collect()
            })
            .collect();
        let len = series.iter().map(Vec::len).max().unwrap_or(0);
        for k in 0..len {
            let cells = std::iter::once(k.to_string())
                .chain(series.iter().map(|s| fmt_opt(s.get(k).copied().flatten())));
            out.push_str(&line(cells));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for r in &self.records {
            r.metrics.write_csv(dir.join(format!("{}_seed{}.csv", r.algorithm, r.seed)))?;
        }
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        fs::write(dir.join("plotdata.csv"), self.plotdata_csv())?;
        Ok(())
    }
}

/// `‖∇Φ(x̄_k)‖` for `k = 0..=K`.
fn grad_series(m: &RunMetrics) -> Vec<Option<f64>> {
    m.rows.iter().map(|r| r.grad_norm_mean).chain(std::iter::once(m.final_grad_norm)).collect()
}

/// Mean and sample standard deviation; `None` if any value is missing.
fn mean_std(values: impl Iterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Some((mean, std))
}

/// Runs every algorithm of `config` for its repeats (seeds `seed, seed+1, ...`)
/// and writes the CSVs to `out_dir` when given.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentSummary> {
    let resolved = config.resolve()?;
    let mut records = Vec::new();
    for cfg in &resolved.configs {
        for r in 0..config.repeats_for(cfg.algorithm) {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(r as u64);
            let metrics = run(&resolved.problem, &resolved.network, &c)?;
            records.push(RunRecord { algorithm: c.algorithm, seed: c.seed, metrics });
        }
    }
    let summary = ExperimentSummary { name: config.name.clone(), records };
    if let Some(dir) = out_dir {
        summary.write(dir)?;
        fs::write(dir.join("config.txt"), config.serialize())?;
    }
    Ok(summary)
}
