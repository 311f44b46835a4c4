use std::path::Path;

use recon_core::evaluate::AttackReport;
use recon_core::pipeline::*;
use recon_core::Error;

fn toy(blocks: usize, alpha: f64, reconstruct: bool) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.generation.n_blocks = blocks;
    c.generation.n_states = 1;
    c.generation.alpha = alpha;
    c.generation.reference_households_per_state = 4_000;
    c.attack.reconstruct = reconstruct;
    c.attack.topt.t = 5;
    c.attack.topt.t_floor = 2;
    c.attack.topt.node_budget = Some(400);
    c.evaluation.k_max = 5;
    c.evaluation.match_keys = vec!["hud".into()];
    c
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn pearson(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn identity_toy_universe_flags_only_true_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_in(&toy(50, 0.5, false), tmp.path()).unwrap();
    assert_eq!(r.n_blocks, 50);
    assert!(r.blocks.flagged > 0, "alpha high enough to produce flags");
    assert_eq!(r.blocks.hits, r.blocks.flagged);
    assert_eq!(r.blocks.precision, Some(1.0));
    for f in [UNIVERSE_FILE, EMPIRICAL_FILE, STATISTICS_FILE, DETECTIONS_FILE, REPORT_FILE, METRICS_FILE, MANIFEST_FILE] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }
    assert!(!tmp.path().join(FAILED_FILE).exists());
    let m: serde_json::Value = serde_json::from_str(&read(&tmp.path().join(MANIFEST_FILE))).unwrap();
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 1);
    let stages: Vec<&str> = m["stages"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(stages, ["generate", "publish", "attack", "evaluate", "plots"]);
}

#[test]
fn same_config_reproduces_every_artifact() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = toy(12, 0.5, true);
    cfg.jobs = Some(1);
    run_in(&cfg, a.path()).unwrap();
    cfg.jobs = Some(3);
    run_in(&cfg, b.path()).unwrap();
    for f in [UNIVERSE_FILE, STATISTICS_FILE, DETECTIONS_FILE, RECONSTRUCTIONS_FILE, SOLVAR_FILE, METRICS_FILE, SUMMARY_FILE] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f} differs");
    }
}

#[test]
fn staged_commands_match_a_full_run() {
    let full = tempfile::tempdir().unwrap();
    let staged = tempfile::tempdir().unwrap();
    let cfg = toy(10, 0.5, true);
    let r = run_in(&cfg, full.path()).unwrap();
    generate_into(&cfg, staged.path()).unwrap();
    publish_from(&cfg, staged.path()).unwrap();
    attack_from(&cfg, staged.path()).unwrap();
    let s = evaluate_from(&cfg, staged.path()).unwrap();
    assert_eq!(r.blocks, s.blocks);
    for f in [STATISTICS_FILE, DETECTIONS_FILE, RECONSTRUCTIONS_FILE, METRICS_FILE] {
        assert_eq!(read(&full.path().join(f)), read(&staged.path().join(f)), "{f} differs");
    }
    let replay = ScenarioConfig::parse(&read(&staged.path().join(CONFIG_FILE))).unwrap();
    assert_eq!(replay, cfg);
}

#[test]
fn missing_input_leaves_failed_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let err = attack_from(&toy(5, 0.5, false), tmp.path()).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "load", .. }), "{err}");
    assert!(read(&tmp.path().join(FAILED_FILE)).contains("load"));
    let m: serde_json::Value = serde_json::from_str(&read(&tmp.path().join(MANIFEST_FILE))).unwrap();
    assert_eq!(m["status"], "failed");
}

#[test]
fn invalid_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = toy(5, 0.5, false);
    cfg.schema_version = 99;
    assert!(matches!(run_in(&cfg, tmp.path()), Err(Error::Config(_))));
    assert!(matches!(ScenarioConfig::parse("label = 3"), Err(Error::Config(_))));
}

#[test]
fn three_scenario_sweep_writes_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = toy(8, 0.5, false);
    cfg.out_dir = tmp.path().to_path_buf();
    let reports = sweep(&cfg).unwrap();
    let labels: Vec<&str> = reports.iter().map(|r| r.scenario.as_str()).collect();
    assert_eq!(labels, ["identity", "swap", "dp"]);
    for l in &labels {
        assert!(run_dir(tmp.path(), l, 1).join(REPORT_FILE).is_file());
    }
    let table = read(&tmp.path().join(COMPARISON_FILE));
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][..6], ["scenario", "seeds", "blocks", "flagged", "block_precision", "block_recall"]);
    assert!(rows.iter().all(|r| r.len() == rows[0].len()));
    let mut scen: Vec<&str> = rows[1..].iter().map(|r| r[0]).collect();
    scen.sort();
    assert_eq!(scen, ["dp", "identity", "swap"]);

    // The same universe feeds every scenario of a seed.
    let u = |l: &str| read(&run_dir(tmp.path(), l, 1).join(UNIVERSE_FILE));
    assert_eq!(u("identity"), u("dp"));

    let again = report_dir(tmp.path()).unwrap();
    assert_eq!(again.len(), 3);
    assert_eq!(read(&tmp.path().join(COMPARISON_FILE)), table);
}

#[test]
fn putative_violations_track_true_ones_under_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_in(&toy(40, 1.0, true), tmp.path()).unwrap();
    let pts: Vec<(f64, f64)> = r
        .per_block
        .iter()
        .filter_map(|b| b.reconstructed_violations.map(|v| (b.true_violations as f64, v as f64)))
        .collect();
    assert!(pts.len() >= 3, "only {} reconstructed blocks", pts.len());
    let rho = pearson(&pts);
    assert!(rho > 0.0, "correlation {rho}");
    let sidecar = read(&tmp.path().join("violations_scatter.tsv"));
    assert_eq!(sidecar.lines().count(), pts.len() + 1);
}

#[test]
fn plots_need_a_shared_k_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy(6, 0.5, false);
    let r: AttackReport = run_in(&cfg, tmp.path()).unwrap();
    let mut other = r.clone();
    other.k_grid.push(99);
    assert!(emit_plots(&[r.clone(), other], tmp.path()).is_err());

    let out = tempfile::tempdir().unwrap();
    emit_plots(std::slice::from_ref(&r), out.path()).unwrap();
    for stem in ["precision_at_k_hud", "recall_at_k_hud", "solvar_cdf", "violations_scatter"] {
        assert!(out.path().join(format!("{stem}.svg")).is_file());
        assert!(out.path().join(format!("{stem}.tsv")).is_file());
    }
    // Without reconstructions every precision value is undefined and kept as null.
    let prec = read(&out.path().join("precision_at_k_hud.tsv"));
    let series: std::collections::BTreeSet<&str> = prec.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(series.len(), 2, "{series:?}");
    assert!(prec.lines().skip(1).filter(|l| l.starts_with("identity reconstruction")).all(|l| l.ends_with("null")));
}
