use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hypergrad::{preset_n, preset_t, Branch, NeumannDepth, Regime};
use crate::jhip::{default_gamma, default_stochastic_schedule};
use crate::problem::SmoothnessMeta;
use crate::schedule::StepSchedule;
use crate::Network;

/// Horizon `τ` of the default diminishing inner stepsize `η₀ / (1 + t/τ)`.
pub const INNER_HORIZON: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dbo,
    Dbogt,
    Dsbo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dbo, Algorithm::Dbogt, Algorithm::Dsbo];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dbo => "dbo",
            Algorithm::Dbogt => "dbogt",
            Algorithm::Dsbo => "dsbo",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Algorithm::Dsbo)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dbo" => Ok(Algorithm::Dbo),
            "dbogt" => Ok(Algorithm::Dbogt),
            "dsbo" => Ok(Algorithm::Dsbo),
            other => Err(format!("unknown algorithm `{other}` (expected dbo, dbogt or dsbo)")),
        }
    }
}

/// Settings of one solver run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub regime: Regime,
    /// Outer iterations `K`.
    pub k: usize,
    /// Inner iterations `T`.
    pub t: usize,
    /// CG or JHIP iterations `N`.
    pub n: usize,
    /// Neumann series length `M`.
    pub m: usize,
    /// Indexed by the outer iteration.
    pub eta_x: StepSchedule,
    /// Indexed by the inner iteration.
    pub eta_y: StepSchedule,
    /// JHIP stepsize, indexed by the JHIP iteration.
    pub gamma: StepSchedule,
    pub epsilon: f64,
    pub neumann_depth: NeumannDepth,
    /// Samples per stochastic oracle call; 0 means full batch.
    pub minibatch: usize,
    pub seed: u64,
    pub record_oracle_metrics: bool,
    /// Start CG from the previous `v^N` and JHIP from the previous `Z^{(N)}`.
    pub warm_start: bool,
    /// Carry the inner gradient tracker across outer iterations instead of restarting it.
    pub persist_inner_tracker: bool,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

impl RunConfig {
    /// Defaults derived from the smoothness metadata and the network: `T`, `N`
    /// from the presets, `η_y = 1/L` (homogeneous) or `η₀ / (1 + t/10)`
    /// (heterogeneous), `ε = 1/(2L)`, `γ = c/L_H` or its diminishing variant.
    ///
    /// `c = (1 + λ_min(W))² / 4` is half the tracking stability bound (1 for a
    /// single agent) and `η₀ = min(2/(μ+L), c/L)`.
    pub fn new(algorithm: Algorithm, meta: &SmoothnessMeta, w: &Network) -> Self {
        let (mu, l) = (meta.mu, meta.l());
        let stochastic = algorithm.is_stochastic();
        let homogeneous = meta.homogeneous_g;
        let c = w.tracking_stability_bound() / 2.0;
        let eta0 = (2.0 / (mu + l)).min(c / l);
        let eta_y = if homogeneous {
            StepSchedule::Constant(1.0 / l)
        } else {
            StepSchedule::Diminishing { initial: eta0, horizon: INNER_HORIZON }
        };
        let gamma = if stochastic { default_stochastic_schedule(meta.l_g1 / c) } else { default_gamma(meta.l_g1 / c) };
        RunConfig {
            algorithm,
            regime: Regime { stochastic, homogeneous },
            k: 100,
            t: preset_t(mu, l, eta0).unwrap_or(10),
            n: preset_n(meta.kappa()).unwrap_or(10),
            m: 20,
            eta_x: StepSchedule::Constant(0.01),
            eta_y,
            gamma,
            epsilon: 0.5 / l,
            neumann_depth: NeumannDepth::Random,
            minibatch: if stochastic { 10 } else { 0 },
            seed: 0,
            record_oracle_metrics: true,
            warm_start: true,
            persist_inner_tracker: false,
            workers: 0,
        }
    }

    pub fn validate(&self, meta: &SmoothnessMeta) -> Result<()> {
        for (name, v) in [("K", self.k), ("T", self.t), ("N", self.n)] {
            if v == 0 {
                return Err(Error::Validation(format!("{name} >= 1")));
            }
        }
        self.eta_x.validate("eta_x")?;
        self.eta_y.validate("eta_y")?;
        self.gamma.validate("gamma")?;
        if self.regime.stochastic != self.algorithm.is_stochastic() {
            let want = if self.algorithm.is_stochastic() { "stochastic" } else { "deterministic" };
            return Err(Error::Validation(format!("{} needs a {want} regime", self.algorithm)));
        }
        if self.regime.branch() == Branch::Neumann {
            if self.m == 0 {
                return Err(Error::Validation("M >= 1".into()));
            }
            let l = meta.l();
            if !(self.epsilon > 0.0) {
                return Err(Error::Validation(format!("epsilon > 0, got {}", self.epsilon)));
            }
            if self.epsilon * l >= 1.0 {
                return Err(Error::Validation(format!("epsilon >= 1/L: epsilon = {}, 1/L = {}", self.epsilon, 1.0 / l)));
            }
        }
        Ok(())
    }
}
