use std::fs;
use std::process::{Command, Output};

fn dbo_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbo-sim")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_smoke_preset_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke");
    let o = dbo_sim(&["run", "--preset", "quadratic-smoke", "--K", "12", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dbo = fs::read_to_string(out.join("dbo_seed0.csv")).unwrap();
    assert_eq!(dbo.lines().count(), 1 + 12);
    for f in ["dbogt_seed0.csv", "dsbo_seed4.csv", "summary.csv", "plotdata.csv", "config.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.starts_with("algorithm,seed,initial_grad_norm"), "{summary}");
}

#[test]
fn same_command_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "8")] {
        let out = dir.path().join(name);
        let o = dbo_sim(&[
            "run", "--preset", "quadratic-smoke", "--algorithm", "dsbo,dbogt", "--K", "8", "--repeats", "2",
            "--workers", workers, "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(out);
    }
    for f in ["dsbo_seed0.csv", "dsbo_seed1.csv", "dbogt_seed1.csv", "summary.csv", "plotdata.csv"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# tiny logistic run\nproblem = logistic\nagents = 3\np = 4\nsamples_per_agent = 8\nalgorithms = dbo\nK = 3\n").unwrap();
    let o = dbo_sim(&["run", "--config", cfg.to_str().unwrap(), "--set", "a=0.3", "--print-config"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("problem = logistic\n") && text.contains("a = 0.3\n") && text.contains("K = 3\n"), "{text}");

    let out = dir.path().join("out");
    let data = dir.path().join("data");
    let o = dbo_sim(&[
        "run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--dump-data", data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("dbo_seed0.csv").exists());
    assert!(data.join("agent_2_val.csv").exists());
}

#[test]
fn validation_errors_exit_with_two() {
    let o = dbo_sim(&["run", "--preset", "newsgroup-like"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("synthetic-logistic-fig1a"), "{}", stderr(&o));

    let o = dbo_sim(&["run", "--set", "a=1.2", "--print-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a in (0,1)"), "{}", stderr(&o));

    let o = dbo_sim(&["run", "--algorithm", "dsbo", "--set", "heterogeneity=0", "--epsilon", "100", "--print-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon >= 1/L"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "K = 3\nlearning_rate = 1\n").unwrap();
    let o = dbo_sim(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = dbo_sim(&[
        "run", "--algorithm", "dbo", "--eta-x", "1e6", "--K", "50", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("divergence"), "{}", stderr(&o));
}

#[test]
fn jhip_bench_emits_error_columns() {
    let o = dbo_sim(&["jhip-bench", "--steps", "300", "--kappa", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,max_err,mean_err,mse");
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(last[0], 300.0);
    assert!(last[1] < 1e-6, "{last:?}");
}

#[test]
fn hg_check_reports_small_errors() {
    let o = dbo_sim(&["hg-check", "--set", "heterogeneity=0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("check,error\n"), "{text}");
    for l in text.lines().skip(1) {
        let (name, v) = l.split_once(',').unwrap();
        let v: f64 = v.parse().unwrap();
        assert!(v <= 1e-4, "{name} = {v}");
    }
}

#[test]
fn rate_probe_table_and_ordering() {
    let o = dbo_sim(&["rate-probe", "--algorithm", "dbogt", "--k-list", "20,80"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("K,eta_x,mean_sq_grad_norm\n20,"), "{text}");
    assert!(text.contains("# slope,-"), "{text}");

    let o = dbo_sim(&["rate-probe", "--k-list", "400,100"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn presets_are_listed() {
    let o = dbo_sim(&["presets"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 4);
}
