//! Averaged squared gradient norm against the horizon `K`.

use std::fmt;

use crate::csvio::{fmt_f64, fmt_opt, line};
use crate::error::{Error, Result};
use crate::schedule::StepSchedule;
use crate::solvers::{run, Algorithm};

use super::config::ExperimentConfig;

/// How `η_x` depends on the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EtaRule {
    Constant(f64),
    /// `η_x = c K^e`.
    Power { c: f64, exponent: f64 },
}

impl EtaRule {
    /// Exponents matching the rate statements: DBO `K^{-1/3}`, DBOGT constant, DSBO `K^{-1/2}`.
    pub fn rate_default(alg: Algorithm, c: f64) -> Self {
        match alg {
            Algorithm::Dbo => EtaRule::Power { c, exponent: -1.0 / 3.0 },
            Algorithm::Dbogt => EtaRule::Constant(c),
            Algorithm::Dsbo => EtaRule::Power { c, exponent: -0.5 },
        }
    }

    pub fn eta(&self, k: usize) -> f64 {
        match *self {
            EtaRule::Constant(c) => c,
            EtaRule::Power { c, exponent } => c * (k as f64).powf(exponent),
        }
    }
}

impl fmt::Display for EtaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaRule::Constant(c) => write!(f, "{c}"),
            EtaRule::Power { c, exponent } => write!(f, "{c}*K^{exponent}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub k: usize,
    pub eta_x: f64,
    /// `(1/(K+1)) Σ_k ‖∇Φ(x̄_k)‖²`, averaged over repeats.
    pub mean_sq_grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub algorithm: Algorithm,
    pub rule: EtaRule,
    pub rows: Vec<RateRow>,
}

impl RateTable {
    /// Least-squares slope of `log(mean_sq)` against `log K`; `None` for fewer than two horizons.
    pub fn slope(&self) -> Option<f64> {
        if self.rows.len() < 2 {
            return None;
        }
        let pts: Vec<(f64, f64)> =
            self.rows.iter().map(|r| ((r.k as f64).ln(), r.mean_sq_grad_norm.ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    /// `mean_sq(first K) / mean_sq(last K)`.
    pub fn ratio(&self) -> Option<f64> {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if self.rows.len() > 1 => Some(a.mean_sq_grad_norm / b.mean_sq_grad_norm),
            _ => None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,eta_x,mean_sq_grad_norm\n");
        for r in &self.rows {
            out.push_str(&line([r.k.to_string(), fmt_f64(r.eta_x), fmt_f64(r.mean_sq_grad_norm)]));
            out.push('\n');
        }
        out.push_str(&format!("# slope,{}\n", fmt_opt(self.slope())));
        out
    }
}

/// Runs `alg` on the problem and network of `config` once per horizon in `k_list`
/// (ascending), with `η_x` from `rule` and `repeats` seeds each.
pub fn rate_probe(
    config: &ExperimentConfig,
    alg: Algorithm,
    rule: EtaRule,
    k_list: &[usize],
    repeats: usize,
) -> Result<RateTable> {
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::BadParameter("k_list needs horizons >= 1".into()));
    }
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadParameter(format!("k_list must be strictly ascending, got {k_list:?}")));
    }
    if repeats == 0 {
        return Err(Error::BadParameter("repeats >= 1".into()));
    }
    let mut cfg = config.clone();
    cfg.algorithms = vec![alg];
    let resolved = cfg.resolve()?;
    let base = resolved.configs[0].clone();
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let eta_x = rule.eta(k);
        let mut total = 0.0;
        for r in 0..repeats {
            let mut c = base.clone();
            c.k = k;
            c.eta_x = StepSchedule::Constant(eta_x);
            c.record_oracle_metrics = true;
            c.seed = base.seed.wrapping_add(r as u64);
            let m = run(&resolved.problem, &resolved.network, &c)?;
            total += m.mean_sq_grad_norm().expect("oracle metrics are recorded");
        }
        rows.push(RateRow { k, eta_x, mean_sq_grad_norm: total / repeats as f64 });
    }
    Ok(RateTable { algorithm: alg, rule, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets::preset;

    #[test]
    fn rules_follow_the_exponents() {
        assert_eq!(EtaRule::rate_default(Algorithm::Dbogt, 0.3).eta(1000), 0.3);
        assert!((EtaRule::rate_default(Algorithm::Dbo, 1.0).eta(1000) - 0.1).abs() < 1e-12);
        assert!((EtaRule::rate_default(Algorithm::Dsbo, 1.0).eta(400) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn slope_of_an_exact_power_law() {
        let rows = [10usize, 100, 1000]
            .iter()
            .map(|&k| RateRow { k, eta_x: 1.0, mean_sq_grad_norm: 3.0 / k as f64 })
            .collect();
        let t = RateTable { algorithm: Algorithm::Dbo, rule: EtaRule::Constant(1.0), rows };
        assert!((t.slope().unwrap() + 1.0).abs() < 1e-12);
        assert!((t.ratio().unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn single_horizon_has_no_slope() {
        let t = rate_probe(&preset("quadratic-smoke").unwrap(), Algorithm::Dbogt, EtaRule::Constant(0.1), &[5], 1).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.slope().is_none());
        assert!(t.to_csv().ends_with("# slope,\n"));
    }

    #[test]
    fn rejects_unsorted_horizons() {
        let cfg = preset("quadratic-smoke").unwrap();
        for ks in [&[400usize, 100][..], &[], &[0, 5], &[5, 5]] {
            assert!(matches!(rate_probe(&cfg, Algorithm::Dbo, EtaRule::Constant(0.1), ks, 1), Err(Error::BadParameter(_))));
        }
    }
}
