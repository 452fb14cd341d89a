use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use maintcause::report::ReportFile;
use maintcause::store::load_dataset;
use maintcause::sweep::CellFile;
use maintcause_core::datagen::{generate_dataset, OutcomeKind};
use maintcause_core::domain::{GridSpec, Split};
use maintcause_core::estimators::{EstimatorKind, HyperGrid, OutcomeEstimator, SciganConfig};
use maintcause_core::eval::{CostSetting, ExperimentConfig};
use maintcause_core::nn::TrainConfig;
use maintcause_core::policy::PolicyName;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        n: 200,
        lambdas: vec![0.0, 30.0],
        seeds: vec![1, 2],
        grid: GridSpec { t_max: 20.0, step: 0.5 },
        ..ExperimentConfig::default()
    };
    cfg.cost_settings.push(CostSetting { name: "pm-third".into(), costs: cfg.cost_settings[0].costs.scaled(1.0) });
    cfg.cost_settings[1].costs.c_pm /= 3.0;
    cfg.estimator.train = TrainConfig { max_epochs: 10, patience: 3, ..TrainConfig::default() };
    cfg.estimator.grid = HyperGrid { learning_rates: vec![0.01], hidden_widths: vec![16] };
    cfg.estimator.scigan =
        SciganConfig { gan_epochs: 5, hidden_width: 16, noise_dim: 4, augmentation: 2, ..SciganConfig::default() };
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maintcause"))
        .current_dir(dir)
        .env("MAINTCAUSE_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().expect("exit code")
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn generate_writes_three_reproducible_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--n", "120", "--lambda", "30", "--seed", "1", "--out", "a"]);
    ok(d, &["generate", "--n", "120", "--lambda", "30", "--seed", "1", "--out", "b"]);
    for f in ["contracts.csv", "oracle.bin", "meta.json"] {
        assert_eq!(bytes(d.join("a").join(f)), bytes(d.join("b").join(f)), "{f} differs");
    }
    let csv = fs::read_to_string(d.join("a/contracts.csv")).unwrap();
    assert_eq!(csv.lines().count(), 121);
    assert!(csv.starts_with("schema_version,config_hash,seed,id,"));
    let meta = fs::read_to_string(d.join("a/meta.json")).unwrap();
    assert!(meta.trim_start().starts_with("{\n  \"schema_version\": 1,"));

    ok(d, &["generate", "--n", "120", "--lambda", "30", "--seed", "2", "--out", "c"]);
    assert_ne!(bytes(d.join("a/contracts.csv")), bytes(d.join("c/contracts.csv")));
}

#[test]
fn persisted_dataset_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--n", "80", "--lambda", "10", "--seed", "4", "--out", "r"]);
    let (ds, oracle, meta) = load_dataset(&d.join("r")).unwrap();
    let (want, want_oracle) = generate_dataset(80, 10.0, 4, &Default::default()).unwrap();
    assert_eq!(meta.seed, 4);
    assert_eq!(ds.split_labels, want.split_labels);
    assert_eq!(oracle, want_oracle);
    for (a, b) in ds.contracts.iter().zip(&want.contracts) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.covariates.machine_type, b.covariates.machine_type);
        assert_eq!(a.covariates.contract_type, b.covariates.contract_type);
        let pairs = [
            (a.pm_freq, b.pm_freq),
            (a.overhauls, b.overhauls),
            (a.failures, b.failures),
            (a.covariates.age_at_start, b.covariates.age_at_start),
            (a.covariates.duration_days, b.covariates.duration_days),
        ];
        for (x, y) in pairs.into_iter().chain(a.features.0.iter().copied().zip(b.features.0.iter().copied())) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn invalid_inputs_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["generate", "--n", "0"]), 2);
    assert_eq!(code(d, &["generate", "--lambda", "-1"]), 2);
    assert_eq!(code(d, &["--config", "missing.json", "generate"]), 2);
    fs::write(d.join("typo.json"), r#"{"n": 100, "lamdbas": [0]}"#).unwrap();
    assert_eq!(code(d, &["--config", "typo.json", "generate"]), 2);
    assert_eq!(code(d, &["train", "--data", "nowhere"]), 3);
    assert_eq!(code(d, &["evaluate", "--data", "nowhere"]), 3);
    assert_eq!(code(d, &["frobnicate"]), 2);

    let mut cfg = small_config();
    cfg.estimator.train.learning_rate = 1e300;
    cfg.estimator.grid.learning_rates = vec![1e300];
    let c = write_config(d, &cfg);
    ok(d, &["--config", &c, "generate", "--out", "bad"]);
    assert_eq!(code(d, &["--config", &c, "train", "--estimator", "mlp", "--data", "bad"]), 4);
}

#[test]
fn train_prescribe_evaluate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let c = write_config(d, &small_config());
    ok(d, &["--config", &c, "--seed", "1", "generate", "--lambda", "30", "--out", "run1"]);

    ok(d, &["train", "--estimator", "scigan", "--data", "run1/"]);
    let ck = d.join("run1/checkpoints");
    let jsons = |dir: &Path| {
        let mut v: Vec<String> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".json"))
            .collect();
        v.sort();
        v
    };
    assert_eq!(jsons(&ck), ["scigan_failures.json", "scigan_overhauls.json"]);
    ok(d, &["train", "--estimator", "mlp", "--data", "run1/"]);
    assert_eq!(jsons(&ck).len(), 4);

    let history = fs::read_to_string(ck.join("mlp_overhauls.history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next().unwrap(), "schema_version,config_hash,seed,epoch,train_mse,valid_mse");
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.split(',').nth(5).unwrap().parse::<f64>().unwrap() >= 0.0));

    // A reloaded checkpoint predicts what the trained model predicted.
    let (ds, _, _) = load_dataset(&d.join("run1")).unwrap();
    let (est, _) =
        maintcause::models::load(&ck, EstimatorKind::Mlp, OutcomeKind::Overhauls, small_config().grid).unwrap();
    let direct = maintcause_core::eval::fit_estimator(
        &ds,
        EstimatorKind::Mlp,
        OutcomeKind::Overhauls,
        &small_config().estimator,
        1,
    )
    .unwrap();
    let c0 = &ds.contracts[0];
    assert_eq!(est.predict(c0, 7.5), direct.predict(c0, 7.5));

    ok(d, &["prescribe", "--data", "run1", "--policy", "MLP-ITE,ORACLE", "--cost-setting", "pm-third"]);
    let rx = fs::read_to_string(d.join("run1/prescriptions.csv")).unwrap();
    let test_n = ds.split(Split::Test).count();
    assert_eq!(rx.lines().count(), 1 + 2 * test_n);
    assert!(rx
        .starts_with("schema_version,config_hash,seed,cost_setting,id,policy,prescribed_t,estimated_cost,true_cost\n"));
    assert_eq!(code(d, &["prescribe", "--data", "run1", "--cost-setting", "nope"]), 2);

    ok(d, &["evaluate", "--data", "run1"]);
    let report: ReportFile = serde_json::from_slice(&bytes(d.join("run1/report.json"))).unwrap();
    report.report.validate().unwrap();
    for setting in ["default", "pm-third"] {
        let o = report.report.policy(30.0, setting, PolicyName::Oracle).unwrap();
        assert_eq!(o.pe.mean, 0.0);
        assert_eq!(o.pcr.mean, 1.0);
    }
    for f in ["pe_vs_lambda.csv", "pcr_vs_lambda.csv"] {
        let t = fs::read_to_string(d.join("run1").join(f)).unwrap();
        assert_eq!(t.lines().count(), 1 + PolicyName::ALL.len());
    }
    let mise = fs::read_to_string(d.join("run1/mise_vs_lambda.csv")).unwrap();
    assert_eq!(mise.lines().count(), 1 + 4);

    // Re-running every step reproduces every file.
    let snapshot: Vec<(String, Vec<u8>)> = walk(&d.join("run1"));
    ok(d, &["train", "--data", "run1"]);
    ok(d, &["prescribe", "--data", "run1", "--policy", "MLP-ITE,ORACLE", "--cost-setting", "pm-third"]);
    ok(d, &["evaluate", "--data", "run1"]);
    assert_eq!(walk(&d.join("run1")), snapshot);
}

fn walk(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in fs::read_dir(&p).unwrap() {
            let e = e.unwrap().path();
            if e.is_dir() {
                stack.push(e);
            } else {
                out.push((e.strip_prefix(dir).unwrap().display().to_string(), fs::read(&e).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn sweep_resumes_to_the_same_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let c = write_config(d, &small_config());
    ok(d, &["--config", &c, "--out", "full", "sweep"]);
    ok(d, &["--config", &c, "--out", "part", "sweep", "--max-cells", "1"]);
    assert!(!d.join("part/report.json").exists());
    ok(d, &["--config", &c, "--out", "part", "sweep", "--max-cells", "2"]);
    // A damaged cell is recomputed rather than trusted.
    let cells: Vec<_> = walk(&d.join("part")).into_iter().filter(|(n, _)| n.starts_with("cells")).collect();
    assert_eq!(cells.len(), 3);
    fs::write(d.join("part").join(&cells[0].0), b"{ truncated").unwrap();
    ok(d, &["--config", &c, "--out", "part", "sweep"]);
    assert_eq!(walk(&d.join("full")), walk(&d.join("part")));

    let report: ReportFile = serde_json::from_slice(&bytes(d.join("full/report.json"))).unwrap();
    let r = &report.report;
    assert_eq!(r.cells.len(), 4);
    assert!(r.incomplete.is_empty());
    assert_eq!(r.mise.len(), 2 * 4);
    assert_eq!(r.policies.len(), 2 * 2 * 4);
    for p in r.policies.iter().filter(|p| p.policy == PolicyName::Oracle) {
        assert!(p.pe.values.iter().all(|v| *v == 0.0));
        assert!(p.pcr.values.iter().all(|v| *v == 1.0));
    }
}

#[test]
fn sweep_cells_match_the_step_by_step_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut cfg = small_config();
    cfg.seeds = vec![2];
    cfg.lambdas = vec![30.0];
    let c = write_config(d, &cfg);
    ok(d, &["--config", &c, "--out", "sw", "sweep"]);
    ok(d, &["--config", &c, "--out", "st", "generate"]);
    ok(d, &["--out", "st", "train"]);
    ok(d, &["--out", "st", "evaluate"]);
    assert_eq!(bytes(d.join("sw/report.json")), bytes(d.join("st/report.json")));
    let cell_dir = fs::read_dir(d.join("sw/cells")).unwrap().next().unwrap().unwrap().path();
    let cell: CellFile = serde_json::from_slice(&bytes(cell_dir.join("seed-2_lambda-30.json"))).unwrap();
    assert_eq!(cell.seed, 2);
    assert!(cell.cell.metrics().is_some());
}

#[test]
fn shipped_config_is_the_default_plus_pm_third() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let cfg = maintcause::config::load(Some(&path)).unwrap();
    let mut expected = ExperimentConfig::default();
    expected.cost_settings.push(CostSetting {
        name: "pm-third".into(),
        costs: maintcause_core::domain::CostParams { c_pm: 73.0 / 3.0, ..Default::default() },
    });
    assert_eq!(cfg, expected);
}
