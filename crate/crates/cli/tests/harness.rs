//! Harness-level integration: end-to-end CLI behavior (exit codes, CSV
//! shape, seed override), budget mode, scenario determinism, and the
//! confidence-interval coverage sanity check.

use perpsim::config::parse_config;
use perpsim::runner::{run_scenario, RunError};
use perpsim::stats::SummaryStats;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_perpsim"))
}

fn write_temp(name: &str, text: &str) -> std::path::PathBuf {
    let path = std::env::temp_dir().join(format!("perpsim-test-{name}-{}", std::process::id()));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn cli_run_emits_csv() {
    let cfg = write_temp(
        "run",
        "model=arch1\nalpha0=1\nalpha1=0.75\nestimator=si\ndelta=0.05\nreps=4000\nseed=11",
    );
    let out_path = std::env::temp_dir().join(format!("perpsim-out-{}.csv", std::process::id()));
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--workers", "2", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let csv_line = stdout
        .lines()
        .find(|l| l.starts_with("scenario,"))
        .expect("header on stdout");
    assert_eq!(csv_line.split(',').count(), 15);
    let file_text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(file_text.lines().count(), 2);
    assert!(file_text.starts_with("scenario,model,estimator,delta,reps,estimate"));
    std::fs::remove_file(cfg).ok();
    std::fs::remove_file(out_path).ok();
}

#[test]
fn cli_config_error_is_exit_2() {
    let cfg = write_temp(
        "bad",
        "model=arch1\nalpha0=1\nalpha1=0.75\nestimator=si\ndelta=2\nreps=10",
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("delta"), "{err}");
    std::fs::remove_file(cfg).ok();
}

#[test]
fn cli_lyapunov_refusal_is_exit_3() {
    // theta* = 2 for this model; rho < theta* requires
    // delta < e^{-1/theta*} ~ 0.6065, so 0.62 must refuse.
    let cfg = write_temp(
        "refuse",
        "model=custom\nstates=1\nkernel=1\nincrement0=normal:-1:1\nreward0=constant:1\n\
         estimator=sd\ndelta=0.62\nreps=10",
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("largest admissible"), "{err}");
    std::fs::remove_file(cfg).ok();
}

#[test]
fn cli_cramer_failure_is_exit_4() {
    // Positive drift: no Cramer root exists.
    let cfg = write_temp(
        "cramer",
        "model=custom\nstates=1\nkernel=1\nincrement0=normal:0.5:1\nreward0=constant:1\n\
         estimator=si\ndelta=0.1\nreps=10",
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    std::fs::remove_file(cfg).ok();
}

#[test]
fn cli_seed_env_override() {
    let cfg_text =
        "model=arch1\nalpha0=1\nalpha1=0.75\nestimator=si\ndelta=0.05\nreps=2000\nseed=1";
    let cfg = write_temp("seedenv", cfg_text);
    let base = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    let forced = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("PERPSIM_SEED", "777")
        .output()
        .unwrap();
    let line = |o: &std::process::Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .last()
            .unwrap()
            .to_string()
    };
    let (a, b) = (line(&base), line(&forced));
    assert_ne!(a, b);
    assert!(b.split(',').nth(13) == Some("777"), "{b}");
    std::fs::remove_file(cfg).ok();
}

#[test]
fn cli_theta_star_subcommand() {
    let cfg = write_temp("tstar", "model=two_state\nestimator=sd\ndelta=0.1\nreps=10");
    let out = bin()
        .args(["theta-star", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("theta_star=1.60310570"), "{stdout}");
    std::fs::remove_file(cfg).ok();
}

#[test]
fn budget_mode_runs_and_is_flagged() {
    let sc = parse_config(
        "model=arch1\nalpha0=1\nalpha1=0.75\nestimator=si\ndelta=0.05\nbudget_ms=60\nseed=5",
    )
    .unwrap()
    .remove(0);
    let out = run_scenario(&sc, 2).unwrap();
    assert!(out.nondeterministic_n);
    assert!(out.stats.n() > 0);
    assert!(out.row.wall_ms >= 60);
}

#[test]
fn crude_zero_estimate_reports_na_cv() {
    let sc = parse_config(
        "model=custom\nstates=1\nkernel=1\nincrement0=normal:-1:1\nreward0=constant:0\n\
         estimator=crude\ndelta=0.1\nreps=500\nstep_cap=50",
    )
    .unwrap()
    .remove(0);
    let out = run_scenario(&sc, 1).unwrap();
    assert_eq!(out.stats.estimate(), 0.0);
    assert_eq!(out.stats.cv(), None);
    assert!(out.row.to_line().contains(",NA,"));
}

#[test]
fn scenario_rerun_is_bit_identical() {
    let sc = parse_config("model=two_state\nestimator=si\ndelta=0.05\nreps=6000\nseed=99")
        .unwrap()
        .remove(0);
    let a = run_scenario(&sc, 3).unwrap().row.stable_fields();
    let b = run_scenario(&sc, 1).unwrap().row.stable_fields();
    assert_eq!(a, b);
}

#[test]
fn arch_mapping_toggle_changes_estimate() {
    // raw_level=true must skip the ARCH level transformation, which at
    // delta=0.1 changes the barrier by the factor alpha1 and the estimate
    // by roughly alpha1^{theta*} ~ 0.66.
    let mapped = parse_config(
        "model=arch1\nalpha0=1\nalpha1=0.75\nestimator=si\ndelta=0.1\nreps=60000\nseed=17",
    )
    .unwrap()
    .remove(0);
    let raw = parse_config(
        "model=arch1\nalpha0=1\nalpha1=0.75\nestimator=si\ndelta=0.1\nreps=60000\nseed=17\nraw_level=true",
    )
    .unwrap()
    .remove(0);
    let em = run_scenario(&mapped, 2).unwrap().stats.estimate();
    let er = run_scenario(&raw, 2).unwrap().stats.estimate();
    let ratio = er / em;
    assert!(
        ratio > 0.5 && ratio < 0.85,
        "raw/mapped = {ratio} (mapped {em:.4e}, raw {er:.4e})"
    );
}

#[test]
fn ci_coverage_on_normal_model() {
    // 100 independent seeds of the SI estimator on the single-state normal
    // model at delta = 0.3; at least 90 of the nominal-95% intervals must
    // cover the pooled grand mean.
    let base = "model=custom\nstates=1\nkernel=1\nincrement0=normal:-1:1\nreward0=constant:1\n\
                estimator=si\ndelta=0.3\nreps=2500";
    let mut outs = Vec::new();
    for seed in 0..100u64 {
        let sc = parse_config(&format!("{base}\nseed={}", 50_000 + seed))
            .unwrap()
            .remove(0);
        outs.push(run_scenario(&sc, 1).unwrap().stats);
    }
    let mut pooled = SummaryStats::new();
    for s in &outs {
        pooled.merge(s);
    }
    let grand = pooled.estimate();
    let covered = outs
        .iter()
        .filter(|s| {
            let (lo, hi) = s.ci95();
            lo <= grand && grand <= hi
        })
        .count();
    assert!(covered >= 90, "only {covered}/100 CIs covered {grand:.4e}");
    println!("coverage: {covered}/100 CIs covered the grand mean {grand:.4e}");
}

#[test]
fn run_error_exit_codes() {
    assert_eq!(RunError::Config("x".into()).exit_code(), 2);
    assert_eq!(
        RunError::Lyapunov {
            delta: 0.5,
            max_admissible: 0.1
        }
        .exit_code(),
        3
    );
    assert_eq!(RunError::Numeric("x".into()).exit_code(), 4);
}
