//! Lipschitz and contraction constants used by the step-size and
//! iteration-count presets.

use crate::error::{Error, Result};
use crate::problem::SmoothnessMeta;

/// `c` in the `⌈c · ln κ⌉` lower bound on preset iteration counts.
pub const PRESET_LOG_FACTOR: f64 = 2.0;

/// Derived constants for one set of smoothness metadata and inner-loop settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantsLedger {
    pub mu: f64,
    pub l: f64,
    pub l_f0: f64,
    pub l_g2: f64,
    pub kappa: f64,
    /// Smoothness of `Φ`.
    pub l_phi: f64,
    /// Lipschitz constant of the surrogate `∇̄f(x, y)` in `y`.
    pub l_f: f64,
    pub gamma: f64,
    pub d1: f64,
    pub d2: f64,
    pub eta_y: f64,
    pub t: usize,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    /// `(1 − 2η_y μL/(μ+L))^T`.
    pub delta_y: f64,
    /// `((√κ−1)/(√κ+1))^{2N}`.
    pub delta_kappa: f64,
    /// Bound on the Neumann truncation bias as stated, `L_{f,0} κ (1−εL)^M`.
    pub neumann_bias: f64,
    /// `L_{f,0} κ (1−εμ)^M`, which bounds the bias for any `κ`.
    pub neumann_bias_general: f64,
}

fn inner_rate(mu: f64, l: f64, eta_y: f64) -> f64 {
    1.0 - 2.0 * eta_y * mu * l / (mu + l)
}

fn cg_rate(kappa: f64) -> f64 {
    let s = kappa.sqrt();
    ((s - 1.0) / (s + 1.0)).powi(2)
}

/// Derives every constant; `eta_y` must keep the inner contraction factor in `[0, 1)`
/// and `epsilon` must lie in `(0, 1/L)`.
pub fn constants(meta: &SmoothnessMeta, eta_y: f64, t: usize, n: usize, m: usize, epsilon: f64) -> Result<ConstantsLedger> {
    meta.validate().map_err(|e| Error::BadParameter(e.to_string()))?;
    let (mu, l, l_f0, l_g2) = (meta.mu, meta.l(), meta.l_f0, meta.l_g2);
    let kappa = l / mu;
    let rate = inner_rate(mu, l, eta_y);
    if !(eta_y > 0.0 && (0.0..1.0).contains(&rate)) {
        return Err(Error::BadParameter(format!(
            "eta_y = {eta_y} must lie in (0, (mu+L)/(2 mu L)] = (0, {}]",
            (mu + l) / (2.0 * mu * l)
        )));
    }
    if !(epsilon > 0.0 && epsilon * l < 1.0) {
        return Err(Error::BadParameter(format!("epsilon = {epsilon} must lie in (0, 1/L) with L = {l}")));
    }

    let l_phi = l
        + (2.0 * l * l + l_g2 * l_f0 * l_f0) / mu
        + (l * l_f0 * l_g2 + l.powi(3) + l_g2 * l_f0 * l) / (mu * mu)
        + l_g2 * l * l * l_f0 / mu.powi(3);
    let l_f = l + l * l / mu + l_f0 * (l_g2 / mu + l_g2 * l / (mu * mu));
    let s = 1.0 + kappa.sqrt();
    let cross = kappa + l_g2 * l_f0 / (mu * mu);
    let gamma = 3.0 * l * l + 3.0 * l_g2 * l_g2 * l_f0 / (mu * mu) + 6.0 * l * l * s * s * cross * cross;
    let d1 = 4.0 * s * s * cross * cross;
    let d2 = 2.0 * (kappa * kappa + 2.0 * l_f0 * kappa / mu + 2.0 * l_f0 * kappa * kappa / mu).powi(2);

    Ok(ConstantsLedger {
        mu,
        l,
        l_f0,
        l_g2,
        kappa,
        l_phi,
        l_f,
        gamma,
        d1,
        d2,
        eta_y,
        t,
        n,
        m,
        epsilon,
        delta_y: rate.powi(t as i32),
        delta_kappa: cg_rate(kappa).powi(n as i32),
        neumann_bias: l_f0 * kappa * (1.0 - epsilon * l).powi(m as i32),
        neumann_bias_general: l_f0 * kappa * (1.0 - epsilon * mu).powi(m as i32),
    })
}

impl ConstantsLedger {
    pub fn delta_y_at(&self, t: usize) -> f64 {
        inner_rate(self.mu, self.l, self.eta_y).powi(t as i32)
    }

    pub fn delta_kappa_at(&self, n: usize) -> f64 {
        cg_rate(self.kappa).powi(n as i32)
    }

    pub fn neumann_bias_at(&self, m: usize, epsilon: f64) -> f64 {
        self.l_f0 * self.kappa * (1.0 - epsilon * self.l).powi(m as i32)
    }

    pub fn neumann_bias_general_at(&self, m: usize, epsilon: f64) -> f64 {
        self.l_f0 * self.kappa * (1.0 - epsilon * self.mu).powi(m as i32)
    }
}

fn log_floor(kappa: f64) -> usize {
    (PRESET_LOG_FACTOR * kappa.max(1.0).ln()).ceil().max(1.0) as usize
}

/// Inner steps `T`: at least `⌈2 ln κ⌉` and enough for `δ_y^T < 1/3`.
pub fn preset_t(mu: f64, l: f64, eta_y: f64) -> Result<usize> {
    let rate = inner_rate(mu, l, eta_y);
    if !(mu > 0.0 && l >= mu && eta_y > 0.0 && (0.0..1.0).contains(&rate)) {
        return Err(Error::BadParameter(format!("no inner contraction for mu = {mu}, L = {l}, eta_y = {eta_y}")));
    }
    let mut t = 1usize;
    while rate.powi(t as i32) >= 1.0 / 3.0 {
        t += 1;
    }
    Ok(t.max(log_floor(l / mu)))
}

/// CG steps `N`: at least `⌈2 ln κ⌉` and enough for `δ_κ^N < 1/(8κ)`.
pub fn preset_n(kappa: f64) -> Result<usize> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::BadParameter(format!("kappa must be >= 1, got {kappa}")));
    }
    let rate = cg_rate(kappa);
    let mut n = 1usize;
    while rate.powi(n as i32) >= 1.0 / (8.0 * kappa) {
        n += 1;
    }
    Ok(n.max(log_floor(kappa)))
}
