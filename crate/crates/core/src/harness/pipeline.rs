//! End-to-end run: train the xApp pool, train the schedulers over the frozen
//! pool, evaluate every regime.

use std::path::{Path, PathBuf};

use crate::config::LabConfig;
use crate::error::{Error, Result};
use crate::harness::{evaluate, summarize, write_csv, Evaluation, ExperimentSpec, Schedulers, SummaryRow};
use crate::scheduler::{activation_trace, train_scheduler, Method, TrainedScheduler};
use crate::xapps::{train_xapp, TrainedXApp, XAppKind, XAppPool};

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub power: TrainedXApp,
    pub rbg: TrainedXApp,
    pub method1: Option<TrainedScheduler>,
    pub method2: Option<TrainedScheduler>,
    pub evaluation: Evaluation,
    pub summary: Vec<SummaryRow>,
}

/// Runs `a` and `b`, concurrently when `jobs > 1`.
fn both<A: Send, B: Send>(jobs: usize, a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    if jobs > 1 {
        rayon::join(a, b)
    } else {
        (a(), b())
    }
}

/// Trains the pool and the schedulers `spec` needs, then evaluates `spec`.
///
/// Training lengths come from `lab.training`; every stage is seeded from
/// `seed` so the whole run is reproducible.
pub fn run_pipeline(lab: &LabConfig, spec: &ExperimentSpec, seed: u64, jobs: usize) -> Result<PipelineOutput> {
    lab.validate()?;
    spec.validate()?;
    let episodes = lab.training.xapp_episodes;
    let (power, rbg) = both(
        jobs,
        || train_xapp(XAppKind::PowerA2C, lab, episodes, seed),
        || train_xapp(XAppKind::RbgA2C, lab, episodes, seed),
    );
    let (power, rbg) = (power?, rbg?);
    let pool = XAppPool::new(&power.checkpoint, &rbg.checkpoint, &lab.network)?;

    let wants = |m: Method| spec.regimes.iter().any(|r| r.method() == Some(m));
    let sched_episodes = lab.training.scheduler_episodes;
    let train = |m: Method| -> Result<Option<TrainedScheduler>> {
        if wants(m) {
            train_scheduler(m, &pool, lab, sched_episodes, seed).map(Some)
        } else {
            Ok(None)
        }
    };
    let (method1, method2) = both(jobs, || train(Method::One), || train(Method::Two));
    let (method1, method2) = (method1?, method2?);
    let schedulers = Schedulers {
        method1: method1.as_ref().map(|t| t.checkpoint.net.clone()),
        method2: method2.as_ref().map(|t| t.checkpoint.net.clone()),
    };
    let evaluation = evaluate(spec, lab, &pool, &schedulers, jobs)?;
    let summary = summarize(&evaluation.metrics)?;
    Ok(PipelineOutput {
        power,
        rbg,
        method1,
        method2,
        evaluation,
        summary,
    })
}

impl PipelineOutput {
    /// Writes every artifact under `dir` and returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let pool_dir = dir.join("pool");
        for (trained, ckpt_name, history_name) in [
            (&self.power, XAppPool::POWER_FILE, "power_history.csv"),
            (&self.rbg, XAppPool::RBG_FILE, "rbg_history.csv"),
        ] {
            let path = pool_dir.join(ckpt_name);
            trained.checkpoint.save(&path)?;
            written.push(path);
            let path = pool_dir.join(history_name);
            write_csv(&path, &trained.history)?;
            written.push(path);
        }
        for (trained, name) in [(&self.method1, "method1"), (&self.method2, "method2")] {
            let Some(trained) = trained else { continue };
            let base = dir.join("schedulers");
            let path = base.join(format!("{name}.ckpt"));
            trained.checkpoint.save(&path)?;
            written.push(path);
            let path = base.join(format!("{name}_history.csv"));
            write_csv(&path, &trained.history)?;
            written.push(path);
            let path = base.join(format!("{name}_activations.csv"));
            write_csv(&path, &activation_trace(&trained.traces))?;
            written.push(path);
        }
        for (name, result) in [
            ("metrics.csv", write_csv(&dir.join("metrics.csv"), &self.evaluation.metrics)),
            ("summary.csv", write_csv(&dir.join("summary.csv"), &self.summary)),
            ("activations.csv", write_csv(&dir.join("activations.csv"), &self.evaluation.activations)),
        ] {
            result?;
            written.push(dir.join(name));
        }
        Ok(written)
    }
}
