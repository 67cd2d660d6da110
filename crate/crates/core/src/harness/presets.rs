//! Named experiment presets.

use crate::error::{Error, Result};
use crate::problem::{HyperCleaningSpec, LogisticSpec, QuadraticSpec};
use crate::schedule::StepSchedule;
use crate::solvers::Algorithm;

use super::config::{ExperimentConfig, NetworkSpec, ProblemSpec, RunOverrides};

pub const PRESETS: [&str; 4] = ["quadratic-smoke", "synthetic-logistic-fig1a", "hypercleaning-fig2a", "hypercleaning-fig2b"];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name.trim() {
        "quadratic-smoke" => Ok(quadratic_smoke()),
        "synthetic-logistic-fig1a" => Ok(logistic_fig1a()),
        "hypercleaning-fig2a" => Ok(hypercleaning(name.trim(), 10.0)),
        "hypercleaning-fig2b" => Ok(hypercleaning(name.trim(), 1000.0)),
        other => Err(Error::Validation(format!("unknown preset `{other}`; available: {}", PRESETS.join(", ")))),
    }
}

fn quadratic_smoke() -> ExperimentConfig {
    let mut spec = QuadraticSpec::new(5, 4, 5, 0.5, 0);
    spec.noise = 0.1;
    ExperimentConfig {
        name: "quadratic-smoke".into(),
        problem: ProblemSpec::Quadratic(spec),
        network: NetworkSpec::Ring { a: 0.4 },
        algorithms: Algorithm::ALL.to_vec(),
        run: RunOverrides { k: Some(50), eta_x: Some(StepSchedule::Constant(0.1)), ..RunOverrides::default() },
        repeats: None,
    }
}

/// 20 agents on ring(20, 0.4), p = q = 50, all stepsizes 0.01.
fn logistic_fig1a() -> ExperimentConfig {
    let mut spec = LogisticSpec::new(20, 50, 50, 0.1, 1);
    spec.feature_scale = 0.2;
    spec.upper_weight = 5000.0;
    let step = Some(StepSchedule::Constant(0.01));
    ExperimentConfig {
        name: "synthetic-logistic-fig1a".into(),
        problem: ProblemSpec::Logistic(spec),
        network: NetworkSpec::Ring { a: 0.4 },
        algorithms: Algorithm::ALL.to_vec(),
        run: RunOverrides {
            k: Some(100),
            t: Some(10),
            n: Some(20),
            eta_x: step,
            eta_y: step,
            gamma: step,
            ..RunOverrides::default()
        },
        repeats: None,
    }
}

/// Heterogeneous hyper-cleaning on ring(20, 0.5), DBO against DBOGT at one `η_x`.
fn hypercleaning(name: &str, eta_x: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        problem: ProblemSpec::HyperCleaning(HyperCleaningSpec::new(20, 10, 20, 0.3, 0.001, 1)),
        network: NetworkSpec::Ring { a: 0.5 },
        algorithms: vec![Algorithm::Dbo, Algorithm::Dbogt],
        run: RunOverrides {
            k: Some(30),
            t: Some(10),
            n: Some(20),
            eta_x: Some(StepSchedule::Constant(eta_x)),
            ..RunOverrides::default()
        },
        repeats: None,
    }
}
