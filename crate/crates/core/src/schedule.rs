use std::fmt;

use crate::error::{Error, Result};

/// Stepsize as a function of an iteration counter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `step(t) = initial / (1 + t / horizon)`, i.e. `O(1/t)`.
    Diminishing { initial: f64, horizon: f64 },
}

impl StepSchedule {
    pub fn step(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant(s) => s,
            StepSchedule::Diminishing { initial, horizon } => initial / (1.0 + t as f64 / horizon),
        }
    }

    pub fn initial(&self) -> f64 {
        self.step(0)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant(s) => s.is_finite() && s > 0.0,
            StepSchedule::Diminishing { initial, horizon } => {
                initial.is_finite() && initial > 0.0 && horizon.is_finite() && horizon > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("{name} must be a positive stepsize, got {self}")))
        }
    }

    /// Parses `0.01` or `dim:0.01/10`.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("dim:") {
            let (a, b) = rest
                .split_once('/')
                .ok_or_else(|| format!("diminishing schedule must be `dim:<initial>/<horizon>`, got `{s}`"))?;
            let initial = a.trim().parse::<f64>().map_err(|e| format!("`{a}`: {e}"))?;
            let horizon = b.trim().parse::<f64>().map_err(|e| format!("`{b}`: {e}"))?;
            Ok(StepSchedule::Diminishing { initial, horizon })
        } else {
            s.parse::<f64>().map(StepSchedule::Constant).map_err(|e| format!("`{s}`: {e}"))
        }
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::Constant(s) => write!(f, "{s}"),
            StepSchedule::Diminishing { initial, horizon } => write!(f, "dim:{initial}/{horizon}"),
        }
    }
}
