use std::path::{Path, PathBuf};
use std::process::Command;

use besd_cli::config::{ExperimentConfig, MethodId};
use besd_cli::experiment::run_experiment;
use besd_cli::plot::{emit_plots, load, recommendation_path};
use besd_core::besd::{split_log, LogRecord};
use besd_core::envs::DomainId;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(DomainId::Gw10);
    cfg.tau_set = vec![50, 100];
    cfg.q_set = vec![2];
    cfg.init_per_tau = 3;
    cfg.lhs_size = 30;
    cfg.cost_budget = 20_000;
    cfg.seeds = vec![0, 1];
    cfg.eval_trials = 5;
    cfg.final_trials = 8;
    cfg.checkpoints = 3;
    cfg.stored_tables = 3;
    cfg.fit_restarts = 2;
    cfg
}

fn besd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_besd"))
}

#[test]
fn reruns_give_identical_summaries() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config();
    let first = run_experiment(&cfg, a.path()).unwrap();
    let second = run_experiment(&cfg, b.path()).unwrap();
    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(read(&first.summary_path), read(&second.summary_path));
    assert_eq!(first.cells.len(), MethodId::ALL.len() * 2);

    let rows: Vec<_> = first.cells.iter().flat_map(|c| &c.rows).collect();
    assert_eq!(rows.len(), first.cells.len() * 3);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.mean)));
    assert!(rows
        .iter()
        .all(|r| r.trials == if r.cost == cfg.cost_budget { 8 } else { 5 }));
}

#[test]
fn plots_cover_every_iteration_and_subgoal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.methods = vec![MethodId::Besd];
    let out = run_experiment(&cfg, dir.path()).unwrap();
    let logs: Vec<PathBuf> = out.cells.iter().map(|c| c.log_path.clone()).collect();

    let plots = dir.path().join("plots");
    let files = emit_plots(&logs, &plots).unwrap();
    assert_eq!(files.len(), 3);
    let curve = std::fs::read_to_string(plots.join("curves.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 3);
    assert!(curve.lines().skip(1).all(|l| l.ends_with(",2")));
    assert!(std::fs::read_to_string(plots.join("curves.svg"))
        .unwrap()
        .contains("<polygon"));

    let records = load(&logs[0]).unwrap();
    let (_, obs) = split_log(&records).unwrap();
    let iterations = obs.iter().filter(|o| o.theta_rec.is_some()).count();
    assert!(iterations > 0);
    assert_eq!(
        recommendation_path(&records).unwrap().len(),
        iterations * cfg.k
    );
    let path_rows = std::fs::read_to_string(plots.join("recommendations.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    let total: usize = logs
        .iter()
        .map(|l| recommendation_path(&load(l).unwrap()).unwrap().len())
        .sum();
    assert_eq!(path_rows, total);

    // one run: no band
    let single = dir.path().join("single");
    emit_plots(&logs[..1], &single).unwrap();
    let curve = std::fs::read_to_string(single.join("curves.csv")).unwrap();
    assert!(curve.lines().skip(1).all(|l| l.contains(",,,1")), "{curve}");
    assert!(!std::fs::read_to_string(single.join("curves.svg"))
        .unwrap()
        .contains("<polygon"));
}

#[test]
fn empty_plot_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_plots(&[], dir.path()).unwrap().is_empty());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    let status = besd()
        .args(["plot", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn corrupt_log_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.methods = vec![MethodId::Ql];
    cfg.seeds = vec![0];
    let out = run_experiment(&cfg, dir.path()).unwrap();
    let path = &out.cells[0].log_path;
    let mut text = std::fs::read_to_string(path).unwrap();
    text.push_str("{not json\n");
    let lines = text.lines().count();
    std::fs::write(path, text).unwrap();
    let err = format!(
        "{:#}",
        emit_plots(std::slice::from_ref(path), &dir.path().join("p")).unwrap_err()
    );
    assert!(err.contains(&format!("line {lines}")), "{err}");
    assert!(err.contains(&path.display().to_string()), "{err}");
}

#[test]
fn cli_runs_replays_and_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    let mut cfg = small_config();
    cfg.methods = vec![MethodId::Besd, MethodId::Ql];
    std::fs::write(&cfg_path, cfg.to_json().unwrap()).unwrap();

    let out_dir = dir.path().join("out");
    let run = besd()
        .arg("run")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "7"])
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let log = out_dir.join("GW10-BESD-seed7.jsonl");
    assert!(log.exists());
    assert!(!out_dir.join("GW10-BESD-seed0.jsonl").exists());

    let replay = besd().arg("replay").arg(&log).output().unwrap();
    assert!(
        replay.status.success(),
        "{}",
        String::from_utf8_lossy(&replay.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&replay.stdout).unwrap();
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["cumulativeCost"], 20_000);
    let last = load(&log)
        .unwrap()
        .iter()
        .rev()
        .find_map(|r| match r {
            LogRecord::Observation(o) => o.theta_rec.clone(),
            _ => None,
        })
        .unwrap();
    assert_eq!(summary["recommendation"], serde_json::json!(last));

    let ql = besd()
        .arg("replay")
        .arg(out_dir.join("GW10-QL-seed7.jsonl"))
        .output()
        .unwrap();
    assert!(!ql.status.success());

    let ratios = besd()
        .args(["ratios", "--trials", "4", "--tau", "100"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--log")
        .arg(&log)
        .output()
        .unwrap();
    assert!(
        ratios.status.success(),
        "{}",
        String::from_utf8_lossy(&ratios.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&ratios.stdout).unwrap();
    assert_eq!(report["trials"], 4);
    assert_eq!(report["metric"], "stepsToGoal");
}

#[test]
fn printed_defaults_parse_back() {
    for domain in ["GW10", "KEY3", "MC"] {
        let out = besd()
            .args(["config", "--domain", domain])
            .output()
            .unwrap();
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.domain.as_str(), domain);
        assert_eq!(cfg.to_json().unwrap(), text.trim_end());
    }
}
