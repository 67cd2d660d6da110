//! Flat `key = value` experiment configuration.
//!
//! Lines are applied in order; `#` starts a comment. A `preset` line loads
//! a named preset and must come before the keys it should not clobber;
//! `problem` switches the problem kind (resetting its parameters to that
//! kind's defaults). Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hypergrad::NeumannDepth;
use crate::problem::{BilevelProblem, HyperCleaningSpec, LogisticSpec, QuadraticSpec};
use crate::schedule::StepSchedule;
use crate::solvers::{Algorithm, RunConfig};
use crate::Network;

use super::presets;

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Quadratic(QuadraticSpec),
    Logistic(LogisticSpec),
    HyperCleaning(HyperCleaningSpec),
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Quadratic(_) => "quadratic",
            ProblemSpec::Logistic(_) => "logistic",
            ProblemSpec::HyperCleaning(_) => "hypercleaning",
        }
    }

    /// Defaults of a problem kind with `n` agents.
    pub fn default_for(kind: &str, n: usize) -> Option<Self> {
        match kind {
            "quadratic" => Some(ProblemSpec::Quadratic(QuadraticSpec::new(n, 4, 5, 0.5, 0))),
            "logistic" => Some(ProblemSpec::Logistic(LogisticSpec::new(n, 50, 50, 0.1, 0))),
            "hypercleaning" => Some(ProblemSpec::HyperCleaning(HyperCleaningSpec::new(n, 10, 20, 0.3, 0.001, 0))),
            _ => None,
        }
    }

    pub fn agents(&self) -> usize {
        match self {
            ProblemSpec::Quadratic(s) => s.n,
            ProblemSpec::Logistic(s) => s.n,
            ProblemSpec::HyperCleaning(s) => s.n,
        }
    }

    pub fn build(&self) -> Result<BilevelProblem> {
        match self {
            ProblemSpec::Quadratic(s) => {
                if s.n == 0 || s.p == 0 || s.q == 0 {
                    return Err(Error::Validation("quadratic problem needs agents, p, q >= 1".into()));
                }
                if !(s.lower_spread >= 0.0 && s.upper_spread >= 0.0 && s.noise >= 0.0) {
                    return Err(Error::Validation("quadratic spreads and noise must be >= 0".into()));
                }
                Ok(s.build())
            }
            ProblemSpec::Logistic(s) => s.build(),
            ProblemSpec::HyperCleaning(s) => s.build(),
        }
    }

    fn set_agents(&mut self, n: usize) {
        match self {
            ProblemSpec::Quadratic(s) => s.n = n,
            ProblemSpec::Logistic(s) => s.n = n,
            ProblemSpec::HyperCleaning(s) => s.n = n,
        }
    }

    fn set_seed(&mut self, seed: u64) {
        match self {
            ProblemSpec::Quadratic(s) => s.seed = seed,
            ProblemSpec::Logistic(s) => s.seed = seed,
            ProblemSpec::HyperCleaning(s) => s.seed = seed,
        }
    }

    fn seed(&self) -> u64 {
        match self {
            ProblemSpec::Quadratic(s) => s.seed,
            ProblemSpec::Logistic(s) => s.seed,
            ProblemSpec::HyperCleaning(s) => s.seed,
        }
    }

    /// Kind-specific keys and values, in serialization order.
    fn entries(&self) -> Vec<(&'static str, String)> {
        match self {
            ProblemSpec::Quadratic(s) => vec![
                ("p", s.p.to_string()),
                ("q", s.q.to_string()),
                ("lower_spread", s.lower_spread.to_string()),
                ("upper_spread", s.upper_spread.to_string()),
                ("noise", s.noise.to_string()),
            ],
            ProblemSpec::Logistic(s) => vec![
                ("p", s.p.to_string()),
                ("train_samples", s.train_samples.to_string()),
                ("val_samples", s.val_samples.to_string()),
                ("noise_rate", s.noise_rate.to_string()),
                ("feature_scale", s.feature_scale.to_string()),
                ("upper_weight", s.upper_weight.to_string()),
            ],
            ProblemSpec::HyperCleaning(s) => vec![
                ("features", s.features.to_string()),
                ("train_samples", s.train_samples.to_string()),
                ("val_samples", s.val_samples.to_string()),
                ("corruption_rate", s.corruption_rate.to_string()),
                ("c_r", s.c_r.to_string()),
                ("separation", s.separation.to_string()),
            ],
        }
    }

    /// `Ok(false)` when the key does not belong to this kind.
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        match self {
            ProblemSpec::Quadratic(s) => match key {
                "p" => s.p = num(value)?,
                "q" => s.q = num(value)?,
                "heterogeneity" => {
                    s.lower_spread = num(value)?;
                    s.upper_spread = s.lower_spread;
                }
                "lower_spread" => s.lower_spread = num(value)?,
                "upper_spread" => s.upper_spread = num(value)?,
                "noise" => s.noise = num(value)?,
                _ => return Ok(false),
            },
            ProblemSpec::Logistic(s) => match key {
                "p" | "q" => s.p = num(value)?,
                "samples_per_agent" => {
                    s.train_samples = num(value)?;
                    s.val_samples = s.train_samples;
                }
                "train_samples" => s.train_samples = num(value)?,
                "val_samples" => s.val_samples = num(value)?,
                "noise_rate" => s.noise_rate = num(value)?,
                "feature_scale" => s.feature_scale = num(value)?,
                "upper_weight" => s.upper_weight = num(value)?,
                _ => return Ok(false),
            },
            ProblemSpec::HyperCleaning(s) => match key {
                "features" => s.features = num(value)?,
                "samples_per_agent" => {
                    s.train_samples = num(value)?;
                    s.val_samples = s.train_samples;
                }
                "train_samples" => s.train_samples = num(value)?,
                "val_samples" => s.val_samples = num(value)?,
                "corruption_rate" => s.corruption_rate = num(value)?,
                "c_r" => s.c_r = num(value)?,
                "separation" => s.separation = num(value)?,
                _ => return Ok(false),
            },
        }
        Ok(true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NetworkSpec {
    /// Self weight `a`, `(1 − a)/2` to each ring neighbour.
    Ring { a: f64 },
    /// Exact averaging `J_n / n`.
    Complete,
}

impl NetworkSpec {
    pub fn build(&self, n: usize) -> Result<Network> {
        match *self {
            NetworkSpec::Ring { a } => {
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::Validation(format!("a in (0,1), got {a}")));
                }
                Network::ring(n, a).map_err(|e| Error::Validation(e.to_string()))
            }
            NetworkSpec::Complete => Network::complete(n).map_err(|e| Error::Validation(e.to_string())),
        }
    }
}

/// Per-run settings that differ from [`RunConfig::new`]'s defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOverrides {
    pub k: Option<usize>,
    pub t: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub eta_x: Option<StepSchedule>,
    pub eta_y: Option<StepSchedule>,
    pub gamma: Option<StepSchedule>,
    pub epsilon: Option<f64>,
    pub neumann_depth: Option<NeumannDepth>,
    pub minibatch: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub warm_start: Option<bool>,
    pub persist_inner_tracker: Option<bool>,
    pub record_oracle_metrics: Option<bool>,
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! put {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        put!(k, t, n, m, eta_x, eta_y, gamma, epsilon, neumann_depth, minibatch, seed, workers, warm_start, persist_inner_tracker, record_oracle_metrics);
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! emit {
            ($($key:literal => $f:ident),*) => { $( if let Some(v) = &self.$f { out.push(($key, v.to_string())); } )* };
        }
        emit!("K" => k, "T" => t, "N" => n, "M" => m, "eta_x" => eta_x, "eta_y" => eta_y, "gamma" => gamma, "epsilon" => epsilon);
        if let Some(d) = self.neumann_depth {
            out.push(("neumann_depth", depth_to_string(d)));
        }
        emit!("minibatch" => minibatch, "seed" => seed, "workers" => workers, "warm_start" => warm_start,
              "persist_inner_tracker" => persist_inner_tracker, "record_oracle_metrics" => record_oracle_metrics);
        out
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        match key {
            "K" | "k" => self.k = Some(num(value)?),
            "T" | "t" => self.t = Some(num(value)?),
            "N" | "n" => self.n = Some(num(value)?),
            "M" | "m" => self.m = Some(num(value)?),
            "eta_x" => self.eta_x = Some(StepSchedule::parse(value)?),
            "eta_y" => self.eta_y = Some(StepSchedule::parse(value)?),
            "gamma" => self.gamma = Some(StepSchedule::parse(value)?),
            "epsilon" => self.epsilon = Some(num(value)?),
            "neumann_depth" => self.neumann_depth = Some(parse_depth(value)?),
            "minibatch" => self.minibatch = Some(num(value)?),
            "seed" => self.seed = Some(num(value)?),
            "workers" => self.workers = Some(num(value)?),
            "warm_start" => self.warm_start = Some(num(value)?),
            "persist_inner_tracker" => self.persist_inner_tracker = Some(num(value)?),
            "record_oracle_metrics" => self.record_oracle_metrics = Some(num(value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| format!("`{value}`: {e}"))
}

/// `random`, `series` or `fixed:<m>`.
pub fn parse_depth(value: &str) -> std::result::Result<NeumannDepth, String> {
    match value.trim() {
        "random" => Ok(NeumannDepth::Random),
        "series" => Ok(NeumannDepth::Series),
        other => match other.strip_prefix("fixed:") {
            Some(m) => Ok(NeumannDepth::Fixed(num(m)?)),
            None => Err(format!("neumann depth must be random, series or fixed:<m>, got `{other}`")),
        },
    }
}

pub fn depth_to_string(d: NeumannDepth) -> String {
    match d {
        NeumannDepth::Random => "random".into(),
        NeumannDepth::Series => "series".into(),
        NeumannDepth::Fixed(m) => format!("fixed:{m}"),
    }
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSpec,
    pub network: NetworkSpec,
    pub algorithms: Vec<Algorithm>,
    pub run: RunOverrides,
    /// `None`: 1 for deterministic algorithms, 5 for DSBO.
    pub repeats: Option<usize>,
}

/// Built inputs of an experiment.
pub struct Resolved {
    pub problem: BilevelProblem,
    pub network: Network,
    pub configs: Vec<RunConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "custom".into(),
            problem: ProblemSpec::default_for("quadratic", 5).expect("known kind"),
            network: NetworkSpec::Ring { a: 0.4 },
            algorithms: Algorithm::ALL.to_vec(),
            run: RunOverrides::default(),
            repeats: None,
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let bad = |message: String| Error::Parse { line: 0, message: format!("{key}: {message}") };
        match key {
            "preset" => *self = presets::preset(value)?,
            "name" => self.name = value.to_string(),
            "problem" => {
                if value != self.problem.kind() {
                    let mut p = ProblemSpec::default_for(value, self.problem.agents()).ok_or_else(|| {
                        bad(format!("unknown problem `{value}` (expected quadratic, logistic or hypercleaning)"))
                    })?;
                    p.set_seed(self.problem.seed());
                    self.problem = p;
                }
            }
            "agents" => {
                let n: usize = num(value).map_err(bad)?;
                if n == 0 {
                    return Err(Error::Validation("agents >= 1".into()));
                }
                self.problem.set_agents(n);
            }
            "problem_seed" => self.problem.set_seed(num(value).map_err(bad)?),
            "network" => {
                self.network = match value {
                    "ring" => match self.network {
                        NetworkSpec::Ring { a } => NetworkSpec::Ring { a },
                        NetworkSpec::Complete => NetworkSpec::Ring { a: 0.4 },
                    },
                    "complete" => NetworkSpec::Complete,
                    other => return Err(bad(format!("unknown network `{other}` (expected ring or complete)"))),
                }
            }
            "a" => {
                let a: f64 = num(value).map_err(bad)?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::Validation(format!("a in (0,1), got {a}")));
                }
                self.network = NetworkSpec::Ring { a };
            }
            "algorithms" | "algorithm" => {
                let algs = value
                    .split(',')
                    .map(|s| s.parse::<Algorithm>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(bad)?;
                if algs.is_empty() {
                    return Err(bad("no algorithm given".into()));
                }
                self.algorithms = algs;
            }
            "repeats" => {
                let r: usize = num(value).map_err(bad)?;
                if r == 0 {
                    return Err(Error::Validation("repeats >= 1".into()));
                }
                self.repeats = Some(r);
            }
            _ => {
                if !self.run.set(key, value).map_err(bad)? && !self.problem.set(key, value).map_err(bad)? {
                    return Err(bad(format!("unknown key for a {} problem", self.problem.kind())));
                }
            }
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    /// Applies every line of `text` on top of `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key, value).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse { line: idx + 1, message },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical text; parsing it gives back `self`.
    pub fn serialize(&self) -> String {
        let mut lines = vec![
            format!("name = {}", self.name),
            format!("problem = {}", self.problem.kind()),
            format!("agents = {}", self.problem.agents()),
            format!("problem_seed = {}", self.problem.seed()),
        ];
        lines.extend(self.problem.entries().into_iter().map(|(k, v)| format!("{k} = {v}")));
        match self.network {
            NetworkSpec::Ring { a } => {
                lines.push("network = ring".into());
                lines.push(format!("a = {a}"));
            }
            NetworkSpec::Complete => lines.push("network = complete".into()),
        }
        let algs: Vec<&str> = self.algorithms.iter().map(Algorithm::name).collect();
        lines.push(format!("algorithms = {}", algs.join(",")));
        lines.extend(self.run.entries().into_iter().map(|(k, v)| format!("{k} = {v}")));
        if let Some(r) = self.repeats {
            lines.push(format!("repeats = {r}"));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn repeats_for(&self, alg: Algorithm) -> usize {
        self.repeats.unwrap_or(if alg.is_stochastic() { 5 } else { 1 })
    }

    /// Defaults for `alg` on the built problem and network, then the overrides.
    pub fn run_config(&self, alg: Algorithm, problem: &BilevelProblem, network: &Network) -> RunConfig {
        let mut cfg = RunConfig::new(alg, problem.meta(), network);
        self.run.apply(&mut cfg);
        cfg
    }

    /// Builds and validates everything.
    pub fn resolve(&self) -> Result<Resolved> {
        let problem = self.problem.build().map_err(|e| match e {
            Error::BadParameter(m) => Error::Validation(m),
            other => other,
        })?;
        let network = self.network.build(problem.n())?;
        let configs = self
            .algorithms
            .iter()
            .map(|&alg| {
                let cfg = self.run_config(alg, &problem, &network);
                cfg.validate(problem.meta()).map(|_| cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Resolved { problem, network, configs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_keys_comments_and_overrides() {
        let cfg = ExperimentConfig::parse_str(
            "# smoke\nproblem = logistic\nagents = 4\np = 6\nsamples_per_agent = 12\nupper_weight = 3\n\
             network = ring\na = 0.3\nalgorithms = dbo,dsbo\nK = 7\neta_x = dim:0.5/10\nneumann_depth = fixed:3\nrepeats = 2\n",
        )
        .unwrap();
        match &cfg.problem {
            ProblemSpec::Logistic(s) => {
                assert_eq!((s.n, s.p, s.train_samples, s.val_samples, s.upper_weight), (4, 6, 12, 12, 3.0));
            }
            other => panic!("wrong problem {other:?}"),
        }
        assert_eq!(cfg.network, NetworkSpec::Ring { a: 0.3 });
        assert_eq!(cfg.algorithms, vec![Algorithm::Dbo, Algorithm::Dsbo]);
        assert_eq!(cfg.run.k, Some(7));
        assert_eq!(cfg.run.eta_x, Some(StepSchedule::Diminishing { initial: 0.5, horizon: 10.0 }));
        assert_eq!(cfg.run.neumann_depth, Some(NeumannDepth::Fixed(3)));
        assert_eq!(cfg.repeats_for(Algorithm::Dsbo), 2);
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let err = ExperimentConfig::parse_str("K = 3\nlearning_rate = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, ref message } if message.contains("learning_rate")), "{err}");
        // a logistic key is unknown to the quadratic problem
        assert!(matches!(ExperimentConfig::parse_str("upper_weight = 2"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse_str("K = many"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse_str("just words"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ring_weight_outside_unit_interval_is_a_validation_error() {
        match ExperimentConfig::parse_str("a = 1.2") {
            Err(Error::Validation(m)) => assert!(m.contains("a in (0,1)"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn large_epsilon_fails_resolution() {
        let cfg = ExperimentConfig::parse_str("problem = quadratic\nheterogeneity = 0\nalgorithms = dsbo\nepsilon = 10").unwrap();
        match cfg.resolve() {
            Err(Error::Validation(m)) => assert!(m.contains("epsilon >= 1/L"), "{m}"),
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn defaults_by_algorithm() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.repeats_for(Algorithm::Dbo), 1);
        assert_eq!(cfg.repeats_for(Algorithm::Dsbo), 5);
        let r = cfg.resolve().unwrap();
        assert_eq!(r.configs.len(), 3);
        assert!(r.configs.iter().zip(Algorithm::ALL).all(|(c, a)| c.algorithm == a));
    }

    fn arb_problem() -> impl Strategy<Value = ProblemSpec> {
        prop_oneof![
            (1usize..30, 1usize..9, 1usize..9, 0.0f64..2.0, 0.0f64..2.0, 0.0f64..1.0, any::<u64>()).prop_map(
                |(n, p, q, lo, up, noise, seed)| {
                    let mut s = QuadraticSpec::new(n, p, q, lo, seed);
                    s.upper_spread = up;
                    s.noise = noise;
                    ProblemSpec::Quadratic(s)
                }
            ),
            (1usize..30, 1usize..60, 1usize..200, 1usize..200, 0.0f64..5.0, 0.01f64..3.0, 0.1f64..1e4, any::<u64>())
                .prop_map(|(n, p, tr, va, m, fs, w, seed)| {
                    let mut s = LogisticSpec::new(n, p, tr, m, seed);
                    s.val_samples = va;
                    s.feature_scale = fs;
                    s.upper_weight = w;
                    ProblemSpec::Logistic(s)
                }),
            (1usize..30, 1usize..20, 1usize..50, 0.0f64..1.0, 1e-4f64..1.0, any::<u64>()).prop_map(
                |(n, d, s, c, cr, seed)| ProblemSpec::HyperCleaning(HyperCleaningSpec::new(n, d, s, c, cr, seed))
            ),
        ]
    }

    fn arb_schedule() -> impl Strategy<Value = StepSchedule> {
        prop_oneof![
            (1e-6f64..10.0).prop_map(StepSchedule::Constant),
            (1e-6f64..10.0, 0.5f64..100.0).prop_map(|(initial, horizon)| StepSchedule::Diminishing { initial, horizon }),
        ]
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        let run = (
            proptest::option::of(1usize..1000),
            proptest::option::of(1usize..50),
            proptest::option::of(arb_schedule()),
            proptest::option::of(arb_schedule()),
            proptest::option::of(1e-6f64..1.0),
            proptest::option::of(prop_oneof![
                Just(NeumannDepth::Random),
                Just(NeumannDepth::Series),
                (0usize..40).prop_map(NeumannDepth::Fixed)
            ]),
            proptest::option::of(any::<u64>()),
            proptest::option::of(any::<bool>()),
        )
            .prop_map(|(k, t, eta_x, gamma, epsilon, depth, seed, warm)| RunOverrides {
                k,
                t,
                eta_x,
                gamma,
                epsilon,
                neumann_depth: depth,
                seed,
                warm_start: warm,
                ..RunOverrides::default()
            });
        (
            arb_problem(),
            prop_oneof![(0.01f64..0.99).prop_map(|a| NetworkSpec::Ring { a }), Just(NetworkSpec::Complete)],
            proptest::sample::subsequence(Algorithm::ALL.to_vec(), 1..=3),
            run,
            proptest::option::of(1usize..10),
            "[a-z][a-z0-9-]{0,12}",
        )
            .prop_map(|(problem, network, algorithms, run, repeats, name)| ExperimentConfig {
                name,
                problem,
                network,
                algorithms,
                run,
                repeats,
            })
    }

    proptest! {
        #[test]
        fn serialization_round_trips(cfg in arb_config()) {
            let text = cfg.serialize();
            let back = ExperimentConfig::parse_str(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.serialize(), text);
        }
    }
}
