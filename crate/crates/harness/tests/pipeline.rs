use std::path::Path;
use std::process::Command;

use stacking_core::stackers::Algorithm;
use stacking_harness::checks::check_trace;
use stacking_harness::experiment::run_stacker_sets;
use stacking_harness::report::{parse_trace, read_trace, summarize, write_trace, TrialSummary};
use stacking_harness::sweep::{cell_stacker, sweep_learning_rates};
use stacking_harness::{run_experiment, run_trial, write_report, ExperimentConfig, Overrides, RunReport};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text, &Overrides::default()).unwrap()
}

fn density_config(k: usize, steps: usize, regime: &str, stackers: &[&str]) -> ExperimentConfig {
    let mut text = format!("scenario = \"density-only\"\n[data]\nk = {k}\nsteps = {steps}\nregime = \"{regime}\"\n");
    for s in stackers {
        text.push_str(&format!("[[stackers]]\n{s}\n"));
    }
    config(&text)
}

const SMALL_OPEN: &str = r#"
scenario = "open"
n_trials = 2
seed = 3
[data]
n_pretrain = 200
n_stream = 400
grid_points = 4
[[stackers]]
algorithm = "obma"
[[stackers]]
algorithm = "eg"
[[stackers]]
algorithm = "ons"
[[stackers]]
algorithm = "soft-bayes"
"#;

fn trace_bytes(r: &RunReport) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(r, &mut buf).unwrap();
    buf
}

#[test]
fn trace_has_one_column_block_per_stacker_and_round_trips() {
    let c = density_config(
        4,
        300,
        "iid-lognormal",
        &["algorithm = \"obma\"", "algorithm = \"eg\"", "algorithm = \"ons\""],
    );
    let report = run_trial(&c, 0).unwrap();
    let bytes = trace_bytes(&report);
    let text = String::from_utf8(bytes.clone()).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 4 + 3 * (4 + 3));
    assert_eq!(&header[..6], &["t", "r_1", "r_2", "r_3", "r_4", "obma_w_1"]);
    assert_eq!(text.lines().count(), 301);

    let parsed = parse_trace(bytes.as_slice()).unwrap();
    for s in &parsed.stackers {
        let mut cum = 0.0;
        for (t, le) in s.log_ens.iter().enumerate() {
            cum += le;
            let avg = cum / (t + 1) as f64;
            assert!((avg - s.avg_pll[t]).abs() <= 1e-9 * (1.0 + avg.abs()));
        }
    }
    // parsed values agree with the in-memory report
    for (p, s) in parsed.stackers.iter().zip(&report.stackers) {
        for (a, b) in p.log_ens.iter().zip(&s.log_ens) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
    let checks = check_trace(&parsed).unwrap();
    assert!(checks.passed(), "{checks:?}");
}

#[test]
fn report_invariants_hold_in_memory() {
    let c = config(SMALL_OPEN);
    for r in run_experiment(&c) {
        let r = r.unwrap();
        for s in &r.stackers {
            let mut cum = 0.0;
            for (t, le) in s.log_ens.iter().enumerate() {
                cum += le;
                assert!((cum / (t + 1) as f64 - s.avg_pll[t]).abs() < 1e-9);
            }
            assert!((s.final_regret() - (r.bcrp.log_wealth - s.log_wealth())).abs() < 1e-9);
            if s.config.algorithm.is_stacking() {
                assert!(s.final_regret() >= -1e-6, "{} regret {}", s.label, s.final_regret());
            }
        }
    }
}

#[test]
fn summary_json_has_the_documented_fields() {
    let c = density_config(3, 200, "single-dominant", &["algorithm = \"obma\"", "algorithm = \"eg\""]);
    let report = run_trial(&c, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let trial_dir = write_report(&report, dir.path()).unwrap();
    let text = std::fs::read_to_string(trial_dir.join("summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        [
            "bcrp",
            "identity_checks",
            "k",
            "market_variability",
            "model_events",
            "models",
            "scenario",
            "schema_version",
            "seed",
            "stackers",
            "steps",
            "suppress",
            "trial"
        ]
    );
    assert_eq!(v["schema_version"], 1);
    let stacker = v["stackers"][0].as_object().unwrap();
    for key in [
        "label",
        "algorithm",
        "learning_rate",
        "final_weights",
        "log_wealth",
        "avg_pll",
        "avg_pll_after_suppress",
        "regret",
        "collapse_steps",
        "evidence",
    ] {
        assert!(stacker.contains_key(key), "missing {key}");
    }
    let typed: TrialSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(typed, summarize(&report));
    assert_eq!(typed.identity_checks.len(), 1);
    assert!(typed.identity_checks[0].holds);
}

#[test]
fn written_reports_are_byte_identical_across_runs() {
    let c = config(SMALL_OPEN);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        for r in run_experiment(&c) {
            write_report(&r.unwrap(), dir).unwrap();
        }
    }
    for trial in ["trial_000", "trial_001"] {
        for file in ["trace.csv", "summary.json"] {
            let x = std::fs::read(a.path().join(trial).join(file)).unwrap();
            let y = std::fs::read(b.path().join(trial).join(file)).unwrap();
            assert!(x == y, "{trial}/{file} differs");
        }
    }
}

#[test]
fn single_model_ensemble_reproduces_the_model() {
    let c = density_config(
        1,
        200,
        "iid-lognormal",
        &[
            "algorithm = \"obma\"",
            "algorithm = \"eg\"",
            "algorithm = \"ons\"",
            "algorithm = \"soft-bayes-online\"",
            "algorithm = \"dons\"",
        ],
    );
    let r = run_trial(&c, 0).unwrap();
    for s in &r.stackers {
        for (t, h) in r.history.iter().enumerate() {
            assert!((s.log_ens[t] - h.log_density(0)).abs() < 1e-12, "{}", s.label);
        }
        assert_eq!(s.final_weights.as_slice(), &[1.0]);
    }
}

#[test]
fn hedge_at_unit_rate_reports_exactly_like_obma() {
    let c = density_config(
        5,
        500,
        "iid-lognormal",
        &["algorithm = \"obma\"", "algorithm = \"hedge\"\nlearning_rate = 1.0"],
    );
    let r = run_trial(&c, 0).unwrap();
    let (a, b) = (&r.stackers[0], &r.stackers[1]);
    for (wa, wb) in a.weights.iter().zip(&b.weights) {
        for (x, y) in wa.as_slice().iter().zip(wb.as_slice()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
    for (x, y) in a.log_ens.iter().zip(&b.log_ens) {
        assert!((x - y).abs() < 1e-10);
    }
    assert!((a.final_regret() - b.final_regret()).abs() < 1e-9);
}

#[test]
fn obma_collapses_on_a_single_dominant_stream() {
    let c = density_config(5, 2000, "single-dominant", &["algorithm = \"obma\""]);
    let r = run_trial(&c, 0).unwrap();
    let w = &r.stackers[0].final_weights;
    assert_eq!(w.argmax(), 0);
    assert!(w.as_slice()[0] > 0.99);
}

#[test]
fn suppression_only_affects_summaries() {
    let base = density_config(3, 300, "iid-lognormal", &["algorithm = \"eg\""]);
    let mut other = base.clone();
    other.suppress = 0;
    let a = run_trial(&base, 0).unwrap();
    let b = run_trial(&other, 0).unwrap();
    assert_eq!(trace_bytes(&a), trace_bytes(&b));
    let (sa, sb) = (summarize(&a), summarize(&b));
    assert_eq!(sa.stackers[0].avg_pll, sb.stackers[0].avg_pll);
    assert_ne!(sa.stackers[0].avg_pll_after_suppress, sb.stackers[0].avg_pll_after_suppress);
}

#[test]
fn a_failing_trial_leaves_the_others_alone() {
    let mut c = density_config(4, 500, "near-zero-outlier", &["algorithm = \"dons\""]);
    c.seeds = (0..20).collect();
    let results = run_experiment(&c);
    let failed: Vec<_> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].trial, 19);
    assert_eq!(failed[0].step, Some(48));
    assert_eq!(failed[0].source_name, "dons");
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 19);
}

#[test]
fn sweep_grid_has_one_row_per_cell() {
    let mut c = config(SMALL_OPEN);
    c.seeds = vec![1];
    let algs = vec!["eg".to_string(), "ons".to_string()];
    let rates = [1.0, 1e-1, 1e-2, 1e-3, 1e-4];
    let rows = sweep_learning_rates(&c, &algs, &rates).unwrap();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert!(r.error.is_none(), "{r:?}");
        assert!(r.weights_valid && r.median_pll.is_finite());
        assert_eq!(r.trials_ok, 1);
    }
    assert_eq!(rows[0].parameter, "learning_rate");
    assert_eq!(rows[5].parameter, "ons_beta");
}

#[test]
fn single_cell_sweep_equals_a_plain_run() {
    let mut c = config(SMALL_OPEN);
    let rows = sweep_learning_rates(&c, &["eg".to_string()], &[0.1]).unwrap();
    let (spec, _) = cell_stacker("eg", 0.1).unwrap();
    c.stackers = vec![stacking_harness::config::LabeledStacker {
        label: spec.label.clone().unwrap(),
        config: spec.to_config().unwrap(),
    }];
    let plls: Vec<f64> = run_experiment(&c)
        .into_iter()
        .map(|r| r.unwrap().stackers[0].avg_pll_after(c.suppress))
        .collect();
    assert_eq!(rows[0].median_pll, stacking_harness::report::median(&plls));
    assert_eq!(rows[0].std_pll, stacking_harness::report::std_dev(&plls));
}

#[test]
fn shared_densities_match_independent_runs() {
    let c = config(SMALL_OPEN);
    let sets = vec![c.stackers[..2].to_vec(), c.stackers[2..].to_vec()];
    let split = run_stacker_sets(&c, &sets);
    let whole = run_experiment(&c);
    for (trial, w) in split.iter().zip(&whole) {
        let w = w.as_ref().unwrap();
        let joined: Vec<f64> = trial
            .iter()
            .flat_map(|r| r.as_ref().unwrap().stackers.iter().map(|s| s.log_wealth()).collect::<Vec<_>>())
            .collect();
        let direct: Vec<f64> = w.stackers.iter().map(|s| s.log_wealth()).collect();
        assert_eq!(joined, direct);
    }
}

#[test]
fn every_algorithm_runs_on_the_drift_and_garch_scenarios() {
    let mut stackers = String::new();
    for a in Algorithm::ALL {
        stackers.push_str(&format!("[[stackers]]\nalgorithm = \"{}\"\n", a.slug()));
    }
    let drift = config(&format!(
        "scenario = \"drift\"\n[data]\nn_segments = 2\nsegment_length = 150\nrff_features = 20\n{stackers}"
    ));
    let garch = config(&format!(
        "scenario = \"garch-sim\"\n[data]\nn_steps = 200\nn_particles = 50\n{stackers}"
    ));
    for c in [drift, garch] {
        let r = run_trial(&c, 0).unwrap();
        assert_eq!(r.stackers.len(), Algorithm::ALL.len());
        for s in &r.stackers {
            assert!(s.log_wealth().is_finite(), "{:?} {}", c.scenario, s.label);
        }
        for (label, check) in r.identity_checks() {
            assert!(check.holds(), "{label}: {}", check.max_abs());
        }
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stacking"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(
        dir.path(),
        "good.toml",
        "scenario = \"density-only\"\n[data]\nk = 3\nsteps = 100\n[[stackers]]\nalgorithm = \"obma\"\n[[stackers]]\nalgorithm = \"eg\"\n",
    );
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .args(["--trials", "2", "--seed", "5", "--suppress", "10"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let trace = out.join("trial_001").join("trace.csv");
    assert!(out.join("aggregate.csv").exists());
    let summary: TrialSummary =
        serde_json::from_slice(&std::fs::read(out.join("trial_001").join("summary.json")).unwrap()).unwrap();
    assert_eq!((summary.seed, summary.suppress), (6, 10));

    let check = bin().arg("check").arg(&trace).output().unwrap();
    assert_eq!(check.status.code(), Some(0));
    let bcrp = bin().arg("bcrp").arg(&trace).output().unwrap();
    assert_eq!(bcrp.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&bcrp.stdout).unwrap();
    assert_eq!(v["weights"].as_array().unwrap().len(), 3);

    // tamper with one log_ens entry
    let text = std::fs::read_to_string(&trace).unwrap();
    let parsed = read_trace(&trace).unwrap();
    let target = parsed.stackers[1].log_ens[20];
    let needle = stacking_harness::report::fmt_f64(target);
    let bad = write(dir.path(), "bad.csv", &text.replacen(&needle, "1.0e0", 1));
    assert_eq!(bin().arg("check").arg(&bad).output().unwrap().status.code(), Some(2));

    let unknown = write(dir.path(), "unknown.toml", "scenario = \"open\"\nfrobnicate = 1\n");
    assert_eq!(bin().arg("run").arg(&unknown).output().unwrap().status.code(), Some(1));
    let missing = dir.path().join("nope.toml");
    assert_eq!(bin().arg("run").arg(&missing).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));

    let failing = write(
        dir.path(),
        "dons.toml",
        "scenario = \"density-only\"\nseeds = [19]\n[data]\nk = 4\nsteps = 500\nregime = \"near-zero-outlier\"\n[[stackers]]\nalgorithm = \"dons\"\n",
    );
    let out2 = dir.path().join("out2");
    let run = bin().arg("run").arg(&failing).arg("-o").arg(&out2).output().unwrap();
    assert_eq!(run.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out2.join("trial_000").join("error.json")).unwrap()).unwrap();
    assert_eq!(err["step"], 48);
}
