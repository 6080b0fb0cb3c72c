use std::path::{Path, PathBuf};

use oran_lab::cli::{self, exit, RunManifest, CONFIG_COPY, MANIFEST_FILE};
use oran_lab::harness::{read_csv, ActivationRow, ExperimentSpec, MetricsRow, SummaryRow};
use oran_lab::scheduler::ActivationTraceRow;
use oran_lab::xapps::HistoryRow;
use oran_lab::LabConfig;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut lab = LabConfig::desk();
        lab.model.hidden = vec![16];
        lab.model.scheduler_hidden = vec![16];
        std::fs::write(dir.path().join("lab.toml"), lab.to_toml()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> String {
        self.path("lab.toml").display().to_string()
    }

    fn run(&self, args: &[&str]) -> i32 {
        let mut argv = vec!["oran-lab"];
        argv.extend_from_slice(args);
        cli::run(argv)
    }

    /// Trains a tiny pool into `pool/`.
    fn pool(&self) -> PathBuf {
        let pool = self.path("pool");
        for kind in ["power", "rbg"] {
            let out = self.path(&format!("train-{kind}"));
            let code = self.run(&[
                "train-xapp",
                "--kind",
                kind,
                "--episodes",
                "4",
                "--config",
                &self.config(),
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, exit::OK);
            std::fs::create_dir_all(&pool).unwrap();
            std::fs::copy(out.join(format!("{kind}.ckpt")), pool.join(format!("{kind}.ckpt"))).unwrap();
        }
        pool
    }
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn missing_config_is_a_usage_error() {
    if std::env::var_os(cli::CONFIG_ENV).is_some() {
        // An inherited configuration would satisfy the flag.
        return;
    }
    let ws = Workspace::new();
    let code = ws.run(&["train-xapp", "--kind", "power", "--out", ws.path("o").to_str().unwrap()]);
    assert_eq!(code, exit::USAGE);
}

#[test]
fn invalid_method_is_a_usage_error() {
    let ws = Workspace::new();
    let code = ws.run(&[
        "train-scheduler",
        "--method",
        "3",
        "--pool",
        "pool",
        "--config",
        &ws.config(),
        "--out",
        ws.path("o").to_str().unwrap(),
    ]);
    assert_eq!(code, exit::USAGE);
    assert_eq!(ws.run(&["no-such-command"]), exit::USAGE);
}

#[test]
fn unknown_override_key_is_a_config_error() {
    let ws = Workspace::new();
    let code = ws.run(&[
        "train-xapp",
        "--kind",
        "power",
        "--episodes",
        "1",
        "--config",
        &ws.config(),
        "--set",
        "model.depth=3",
        "--out",
        ws.path("o").to_str().unwrap(),
    ]);
    assert_eq!(code, exit::CONFIG);
}

#[test]
fn missing_pool_is_an_artifact_error() {
    let ws = Workspace::new();
    let code = ws.run(&[
        "train-scheduler",
        "--method",
        "1",
        "--pool",
        ws.path("absent").to_str().unwrap(),
        "--config",
        &ws.config(),
        "--out",
        ws.path("o").to_str().unwrap(),
    ]);
    assert_eq!(code, exit::IO);
}

#[test]
fn train_xapp_writes_history_checkpoint_and_manifest() {
    let ws = Workspace::new();
    let out = ws.path("power");
    let code = ws.run(&[
        "train-xapp",
        "--kind",
        "power",
        "--episodes",
        "10",
        "--seed",
        "7",
        "--config",
        &ws.config(),
        "--set",
        "a2c.learning_rate=0.001",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, exit::OK);
    let history: Vec<HistoryRow> = read_csv(&out.join("power_history.csv")).unwrap();
    assert_eq!(history.len(), 10);
    assert!(history.iter().enumerate().all(|(i, r)| r.episode == i as u64));
    assert!(history.iter().all(|r| r.tau_e.is_finite() && r.tau_e >= 0.0));

    let m = manifest(&out);
    assert_eq!(m.command, "train-xapp");
    assert_eq!(m.seed, Some(7));
    assert_eq!(m.outputs.len(), 2);
    let effective = LabConfig::load(&out.join(CONFIG_COPY)).unwrap().0;
    assert_eq!(effective.a2c.learning_rate, 1e-3);
    assert_ne!(m.config_sha256, m.effective_config_sha256);
}

#[test]
fn scheduler_training_and_evaluation_produce_the_expected_tables() {
    let ws = Workspace::new();
    let pool = ws.pool();
    for m in ["1", "2"] {
        let out = ws.path(&format!("m{m}"));
        let code = ws.run(&[
            "train-scheduler",
            "--method",
            m,
            "--pool",
            pool.to_str().unwrap(),
            "--episodes",
            "6",
            "--config",
            &ws.config(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, exit::OK);
        let history: Vec<HistoryRow> = read_csv(&out.join(format!("method{m}_history.csv"))).unwrap();
        assert_eq!(history.len(), 6);
        let trace: Vec<ActivationTraceRow> = read_csv(&out.join(format!("method{m}_activations.csv"))).unwrap();
        // T = 50 slots per episode with a decision every 10 slots.
        assert_eq!(trace.len(), 6 * 5);
        assert!(trace.iter().all(|r| r.mu_bits.len() == if m == "1" { 2 } else { 4 }));
        assert_eq!(manifest(&out).checkpoints_in.len(), 2);
    }

    let spec = ExperimentSpec {
        episodes_per_cell: 2,
        seeds: vec![1, 2, 3],
        pool_dir: Some(pool),
        scheduler_method1: Some(ws.path("m1/method1.ckpt")),
        scheduler_method2: Some(ws.path("m2/method2.ckpt")),
        ..ExperimentSpec::desk()
    };
    std::fs::write(ws.path("spec.toml"), spec.to_toml()).unwrap();
    let out = ws.path("eval");
    let code = ws.run(&[
        "evaluate",
        "--spec",
        ws.path("spec.toml").to_str().unwrap(),
        "--config",
        &ws.config(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, exit::OK);
    let metrics: Vec<MetricsRow> = read_csv(&out.join("metrics.csv")).unwrap();
    // 5 regimes x 9 cells x 3 seeds x 2 episodes.
    assert_eq!(metrics.len(), 270);
    let summary: Vec<SummaryRow> = read_csv(&out.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 45);
    assert!(summary.iter().all(|r| r.degradation_pct.is_some()));
    let activations: Vec<ActivationRow> = read_csv(&out.join("activations.csv")).unwrap();
    // Only the scheduler regimes make decisions: 2 x 9 x 3 x 2 episodes x 5 periods.
    assert_eq!(activations.len(), 540);
}

#[test]
fn evaluate_without_scheduler_checkpoint_fails_cleanly() {
    let ws = Workspace::new();
    let pool = ws.pool();
    let spec = ExperimentSpec {
        episodes_per_cell: 1,
        seeds: vec![1],
        pool_dir: Some(pool),
        scheduler_method1: Some(ws.path("nothing/method1.ckpt")),
        scheduler_method2: None,
        ..ExperimentSpec::desk()
    };
    std::fs::write(ws.path("spec.toml"), spec.to_toml()).unwrap();
    let code = ws.run(&[
        "evaluate",
        "--spec",
        ws.path("spec.toml").to_str().unwrap(),
        "--config",
        &ws.config(),
        "--out",
        ws.path("eval").to_str().unwrap(),
    ]);
    assert_ne!(code, exit::OK);
}
