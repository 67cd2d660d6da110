//! `dbo-sim`: run decentralized bilevel experiments from presets or config files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bilevel_core::harness::bench::{
    hg_check, jhip_bench, jhip_bench_csv, random_point, HgCheckConfig, JhipBenchConfig,
};
use bilevel_core::harness::{preset, rate_probe, run_experiment, EtaRule, ExperimentConfig, PRESETS};
use bilevel_core::solvers::Algorithm;
use bilevel_core::{Error, StepSchedule};

#[derive(Parser)]
#[command(name = "dbo-sim", version, about = "Decentralized bilevel optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or config file and write per-run CSVs, summary.csv and plotdata.csv.
    Run(RunArgs),
    /// JHIP error against the direct solve on a random instance.
    JhipBench(JhipArgs),
    /// Finite-difference, AID and JHIP errors against the reference hypergradient.
    HgCheck(HgArgs),
    /// Averaged squared gradient norm for several horizons K.
    RateProbe(RateArgs),
    /// List the built-in presets.
    Presets,
}

/// Where the experiment comes from; later sources override earlier ones.
#[derive(Args)]
struct Source {
    /// Built-in preset.
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` config file, applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated subset of dbo, dbogt, dsbo.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long = "M")]
    m: Option<String>,
    /// Constant (`0.01`) or diminishing (`dim:0.01/10`).
    #[arg(long)]
    eta_x: Option<String>,
    #[arg(long)]
    eta_y: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Output directory (default `results/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generated datasets, one CSV per agent and split.
    #[arg(long)]
    dump_data: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct JhipArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    q: usize,
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(long, default_value_t = 10.0)]
    kappa: f64,
    /// Ring self weight.
    #[arg(long, default_value_t = 0.5)]
    a: f64,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise level of the sampled Hessians and Jacobians.
    #[arg(long)]
    sigma: Option<f64>,
    /// Stepsize schedule (default 1/(2L)).
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Output CSV (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HgArgs {
    #[command(flatten)]
    source: Source,
    /// Seed of the evaluation point, uniform in [-scale, scale]^p.
    #[arg(long, default_value_t = 0)]
    point_seed: u64,
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
    #[arg(long, default_value_t = 3000)]
    jhip_steps: usize,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "dbogt")]
    algorithm: String,
    /// Ascending horizons.
    #[arg(long, value_delimiter = ',', default_value = "100,400")]
    k_list: Vec<usize>,
    /// Stepsize scale c in η_x = c·K^e.
    #[arg(long)]
    c: Option<f64>,
    /// Exponent e (default from the algorithm's rate: DBO -1/3, DBOGT 0, DSBO -1/2).
    #[arg(long, allow_hyphen_values = true)]
    exponent: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(source: &Source, default_preset: &str) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&source.preset, &source.config) {
        (Some(name), _) => preset(name)?,
        (None, Some(_)) => ExperimentConfig::default(),
        (None, None) => preset(default_preset)?,
    };
    if let Some(path) = &source.config {
        cfg.apply_str(&fs::read_to_string(path)?)?;
    }
    for kv in &source.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        set_flag(&mut cfg, k, v)?;
    }
    Ok(cfg)
}

fn set_flag(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), Error> {
    cfg.set(key, value).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Validation(message),
        other => other,
    })
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let mut cfg = load(&args.source, "quadratic-smoke")?;
    let flags = [
        ("algorithms", &args.algorithm),
        ("K", &args.k),
        ("T", &args.t),
        ("N", &args.n),
        ("M", &args.m),
        ("eta_x", &args.eta_x),
        ("eta_y", &args.eta_y),
        ("gamma", &args.gamma),
        ("epsilon", &args.epsilon),
        ("seed", &args.seed),
        ("repeats", &args.repeats),
        ("workers", &args.workers),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            set_flag(&mut cfg, key, v)?;
        }
    }
    if args.print_config {
        cfg.resolve()?;
        print!("{}", cfg.serialize());
        return Ok(());
    }
    if let Some(dir) = &args.dump_data {
        let written = cfg.resolve()?.problem.dump_datasets(dir)?;
        eprintln!("wrote {written} dataset files to {}", dir.display());
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    let summary = run_experiment(&cfg, Some(&out))?;
    print!("{}", summary.summary_csv());
    eprintln!("wrote {} runs to {}", summary.records.len(), out.display());
    Ok(())
}

fn cmd_jhip(args: &JhipArgs) -> Result<(), Error> {
    let gamma = args.gamma.as_deref().map(StepSchedule::parse).transpose().map_err(Error::Validation)?;
    let cfg = JhipBenchConfig {
        n: args.n,
        q: args.q,
        p: args.p,
        kappa: args.kappa,
        a: args.a,
        steps: args.steps,
        seed: args.seed,
        sigma: args.sigma,
        gamma,
        noise_seed: args.noise_seed,
    };
    let rows = jhip_bench(&cfg)?;
    write_or_print(args.out.as_deref(), &jhip_bench_csv(&rows))
}

fn cmd_hg(args: &HgArgs) -> Result<(), Error> {
    let cfg = load(&args.source, "quadratic-smoke")?;
    let resolved = cfg.resolve()?;
    let x = random_point(resolved.problem.p(), args.scale, args.point_seed);
    let check = HgCheckConfig { fd_step: args.fd_step, jhip_steps: args.jhip_steps, ..HgCheckConfig::default() };
    let r = hg_check(&resolved.problem, &resolved.network, &x, &check)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    println!("check,error");
    println!("fd_relative,{}", cell(Some(r.fd_rel_err)));
    println!("aid_vs_local_oracle,{}", cell(Some(r.aid_err)));
    println!("jhip_vs_oracle,{}", cell(Some(r.jhip_err)));
    println!("jhip_vs_aid,{}", cell(r.jhip_vs_aid));
    Ok(())
}

fn cmd_rate(args: &RateArgs) -> Result<(), Error> {
    let cfg = load(&args.source, "quadratic-smoke")?;
    let alg: Algorithm = args.algorithm.parse().map_err(Error::Validation)?;
    let c = args.c.unwrap_or(match alg {
        Algorithm::Dbogt => 0.1,
        _ => 0.5,
    });
    let rule = match (args.exponent, EtaRule::rate_default(alg, c)) {
        (Some(e), _) if e == 0.0 => EtaRule::Constant(c),
        (Some(exponent), _) => EtaRule::Power { c, exponent },
        (None, rule) => rule,
    };
    let repeats = args.repeats.unwrap_or_else(|| cfg.repeats_for(alg));
    let table = rate_probe(&cfg, alg, rule, &args.k_list, repeats)?;
    write_or_print(args.out.as_deref(), &table.to_csv())?;
    if let Some(s) = table.slope() {
        eprintln!("{alg} with eta_x = {rule}: log-log slope {s:.3}");
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Validation(_)
        | Error::BadParameter(_)
        | Error::NotDoublyStochastic(_)
        | Error::NotContractive { .. }
        | Error::DimMismatch { .. } => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::JhipBench(a) => cmd_jhip(a),
        Command::HgCheck(a) => cmd_hg(a),
        Command::RateProbe(a) => cmd_rate(a),
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dbo-sim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
