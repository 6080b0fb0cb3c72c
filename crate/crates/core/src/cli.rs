//! Command-line front end.
//!
//! Every command writes its outputs, a copy of the effective configuration
//! and a `manifest.json` into `--out`. Rerunning the recorded arguments
//! reproduces the CSVs and checkpoints byte for byte.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, LabConfig};
use crate::error::{Error, Result};
use crate::harness::{
    evaluate, moving_average, run_pipeline, summarize, write_csv, ExperimentSpec, Schedulers,
};
use crate::rl::Checkpoint;
use crate::scheduler::{activation_trace, train_scheduler_with, Method};
use crate::xapps::{train_xapp_with, HistoryRow, XAppKind, XAppPool};

pub const CONFIG_ENV: &str = "ORAN_LAB_CONFIG";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.toml";

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    pub const INVARIANT: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "oran-lab", version, about = "xApp conflict-mitigation lab: train, schedule, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Lab configuration (TOML).
    #[arg(long, env = CONFIG_ENV)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override a configuration value, e.g. `--set safety.z_threshold=-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for independent work units.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Power,
    Rbg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the power or RBG xApp with the other family at its baseline.
    TrainXapp {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Defaults to `training.xapp_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a scheduler over a frozen pool directory (power.ckpt, rbg.ckpt).
    TrainScheduler {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        pool: PathBuf,
        /// Defaults to `training.scheduler_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the regimes of an experiment spec with trained checkpoints.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        spec: PathBuf,
    },
    /// Repeat an evaluation over values of one configuration key.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid: PathBuf,
    },
    /// Train the pool and schedulers, then evaluate: the whole pipeline.
    RunAll {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TrainXapp { .. } => "train-xapp",
            Command::TrainScheduler { .. } => "train-scheduler",
            Command::Evaluate { .. } => "evaluate",
            Command::Sweep { .. } => "sweep",
            Command::RunAll { .. } => "run-all",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::TrainXapp { common, .. }
            | Command::TrainScheduler { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Sweep { common, .. }
            | Command::RunAll { common, .. } => common,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to identify and replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_path: PathBuf,
    /// SHA-256 of the configuration file as read.
    pub config_sha256: String,
    /// SHA-256 of the effective configuration after overrides (`config.toml`).
    pub effective_config_sha256: String,
    pub seed: Option<u64>,
    pub checkpoints_in: Vec<ArtifactRecord>,
    pub outputs: Vec<ArtifactRecord>,
    pub out_dir: PathBuf,
    pub tool_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

/// Sweep description: one key, several values, one evaluation each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Experiment spec, relative to the grid file.
    pub spec: PathBuf,
    /// Dotted configuration key, e.g. `safety.z_threshold` or `power_levels`.
    pub parameter: String,
    pub values: Vec<toml::Value>,
    /// Seed for retraining when the key changes the trained models.
    #[serde(default)]
    pub seed: u64,
}

impl SweepGrid {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grid: Self = toml::from_str(&text).map_err(|e| Error::config(format!("sweep grid: {e}")))?;
        if grid.values.is_empty() {
            return Err(Error::config("sweep grid lists no values"));
        }
        if grid.spec.is_relative() {
            grid.spec = path.parent().unwrap_or(Path::new("")).join(&grid.spec);
        }
        Ok(grid)
    }

    /// Safety-layer keys leave the trained models valid; anything else
    /// retrains the pipeline.
    pub fn needs_retraining(&self) -> bool {
        !self.parameter.starts_with("safety.")
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Sets dotted `key` to `value` and re-validates.
pub fn apply_override(lab: &LabConfig, key: &str, value: toml::Value) -> Result<LabConfig> {
    let mut root: toml::Table = toml::from_str(&lab.to_toml()).map_err(|e| Error::config(e.to_string()))?;
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config("empty override key"))?;
    let mut table = &mut root;
    for part in parts {
        table = table
            .get_mut(part)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| Error::config(format!("unknown configuration section '{part}' in '{key}'")))?;
    }
    if !table.contains_key(last) {
        return Err(Error::config(format!("unknown configuration key '{key}'")));
    }
    // Integers are accepted where floats are expected.
    let value = match (&table[last], value) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(last.to_string(), value);
    let text = toml::to_string(&root).map_err(|e| Error::config(e.to_string()))?;
    let out = LabConfig::parse(&text)?;
    out.validate()?;
    Ok(out)
}

/// Parses `KEY=VALUE`, reading VALUE as a TOML value (bare words become strings).
pub fn parse_override(text: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{text}' is not KEY=VALUE")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

struct Run {
    lab: LabConfig,
    config_path: PathBuf,
    config_sha: String,
    out: PathBuf,
    jobs: usize,
    outputs: Vec<PathBuf>,
    checkpoints_in: Vec<PathBuf>,
}

impl Run {
    fn open(common: &Common) -> Result<Self> {
        let (mut lab, config_sha) = LabConfig::load(&common.config)?;
        for text in &common.overrides {
            let (key, value) = parse_override(text)?;
            lab = apply_override(&lab, &key, value)?;
        }
        if let Some(jobs) = common.jobs {
            lab.training.jobs = jobs.max(1);
        }
        lab.validate()?;
        std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
        Ok(Self {
            jobs: lab.training.jobs,
            lab,
            config_path: common.config.clone(),
            config_sha,
            out: common.out.clone(),
            outputs: Vec::new(),
            checkpoints_in: Vec::new(),
        })
    }

    fn save_checkpoint(&mut self, ckpt: &Checkpoint, name: &str) -> Result<()> {
        let path = self.out.join(name);
        ckpt.save(&path)?;
        self.outputs.push(path);
        Ok(())
    }

    fn save_csv<T: Serialize>(&mut self, rows: &[T], name: &str) -> Result<()> {
        let path = self.out.join(name);
        write_csv(&path, rows)?;
        self.outputs.push(path);
        Ok(())
    }

    fn finish(self, command: &str, argv: &[String], seed: Option<u64>, started: u64) -> Result<RunManifest> {
        let config_copy = self.out.join(CONFIG_COPY);
        let effective = self.lab.to_toml();
        std::fs::write(&config_copy, &effective).map_err(|e| Error::io(&config_copy, e))?;
        let record = |p: &PathBuf| -> Result<ArtifactRecord> {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            Ok(ArtifactRecord {
                path: p.strip_prefix(&self.out).map(Path::to_path_buf).unwrap_or_else(|_| p.clone()),
                sha256: sha256_hex(&bytes),
            })
        };
        let manifest = RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            config_path: self.config_path.clone(),
            config_sha256: self.config_sha.clone(),
            effective_config_sha256: sha256_hex(effective.as_bytes()),
            seed,
            checkpoints_in: self.checkpoints_in.iter().map(record).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(record).collect::<Result<_>>()?,
            out_dir: self.out.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_s: started,
            finished_unix_s: now_unix(),
        };
        let path = self.out.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// Prints a moving-average progress line roughly twenty times per run.
fn progress(label: &str, total: usize, window: usize) -> impl FnMut(&HistoryRow) {
    let every = (total / 20).max(1);
    let mut recent: Vec<f64> = Vec::with_capacity(total);
    let label = label.to_string();
    move |row: &HistoryRow| {
        recent.push(row.tau_e);
        let done = row.episode as usize + 1;
        if done % every == 0 || done == total {
            let lo = recent.len().saturating_sub(window);
            let tail = &recent[lo..];
            let ma = tail.iter().sum::<f64>() / tail.len() as f64;
            eprintln!("{label}: episode {done}/{total}, moving-average tau_e {ma:.4}");
        }
    }
}

fn history_summary(history: &[HistoryRow], window: usize) -> Result<(f64, f64)> {
    let series: Vec<f64> = history.iter().map(|r| r.tau_e).collect();
    let ma = moving_average(&series, window)?;
    let first = ma[window.min(ma.len()) - 1];
    Ok((first, *ma.last().expect("non-empty")))
}

fn execute(cli: &Cli, argv: &[String]) -> Result<RunManifest> {
    let started = now_unix();
    let mut run = Run::open(cli.command.common())?;
    let window = run.lab.training.moving_average_window;
    let seed = match &cli.command {
        Command::TrainXapp {
            kind, episodes, seed, ..
        } => {
            let kind = match kind {
                KindArg::Power => XAppKind::PowerA2C,
                KindArg::Rbg => XAppKind::RbgA2C,
            };
            let episodes = episodes.unwrap_or(run.lab.training.xapp_episodes);
            let trained = train_xapp_with(kind, &run.lab, episodes, *seed, progress(kind.tag(), episodes, window))?;
            let ckpt_name = match kind {
                XAppKind::PowerA2C => XAppPool::POWER_FILE,
                _ => XAppPool::RBG_FILE,
            };
            run.save_checkpoint(&trained.checkpoint, ckpt_name)?;
            run.save_csv(&trained.history, &format!("{}_history.csv", kind.tag()))?;
            if !trained.history.is_empty() {
                let (first, last) = history_summary(&trained.history, window)?;
                eprintln!("{}: moving average {first:.4} -> {last:.4}", kind.tag());
            }
            Some(*seed)
        }
        Command::TrainScheduler {
            method,
            pool,
            episodes,
            seed,
            ..
        } => {
            let method = match method {
                MethodArg::One => Method::One,
                MethodArg::Two => Method::Two,
            };
            let xapps = XAppPool::load(pool, &run.lab.network)?;
            run.checkpoints_in.push(pool.join(XAppPool::POWER_FILE));
            run.checkpoints_in.push(pool.join(XAppPool::RBG_FILE));
            let episodes = episodes.unwrap_or(run.lab.training.scheduler_episodes);
            let label = format!("method{}", method.number());
            let trained = train_scheduler_with(method, &xapps, &run.lab, episodes, *seed, progress(&label, episodes, window))?;
            run.save_checkpoint(&trained.checkpoint, &format!("{label}.ckpt"))?;
            run.save_csv(&trained.history, &format!("{label}_history.csv"))?;
            run.save_csv(&activation_trace(&trained.traces), &format!("{label}_activations.csv"))?;
            Some(*seed)
        }
        Command::Evaluate { spec, .. } => {
            let spec = ExperimentSpec::load(spec)?;
            evaluate_into(&mut run, &spec, "")?;
            None
        }
        Command::Sweep { grid, .. } => {
            let grid = SweepGrid::load(grid)?;
            let spec = ExperimentSpec::load(&grid.spec)?;
            let base = run.lab.clone();
            for value in &grid.values {
                let mut lab = apply_override(&base, &grid.parameter, value.clone())?;
                if grid.parameter.starts_with("safety.") && grid.parameter != "safety.enabled" {
                    lab.safety.enabled = true;
                }
                let prefix = format!("{}={}/", grid.parameter, value_label(value));
                eprintln!("sweep: {}", prefix.trim_end_matches('/'));
                if grid.needs_retraining() {
                    let out = run_pipeline(&lab, &spec, grid.seed, run.jobs)?;
                    let dir = run.out.join(&prefix);
                    run.outputs.extend(out.write(&dir)?);
                } else {
                    let saved = std::mem::replace(&mut run.lab, lab);
                    evaluate_into(&mut run, &spec, &prefix)?;
                    run.lab = saved;
                }
            }
            Some(grid.seed)
        }
        Command::RunAll { spec, seed, .. } => {
            let spec = ExperimentSpec::load(spec)?;
            let out = run_pipeline(&run.lab, &spec, *seed, run.jobs)?;
            for (name, trained) in [("power", &out.power), ("rbg", &out.rbg)] {
                let (first, last) = history_summary(&trained.history, window)?;
                eprintln!("{name}: moving average {first:.4} -> {last:.4}");
            }
            run.outputs.extend(out.write(&run.out)?);
            Some(*seed)
        }
    };
    run.finish(cli.command.name(), argv, seed, started)
}

fn evaluate_into(run: &mut Run, spec: &ExperimentSpec, prefix: &str) -> Result<()> {
    let pool_dir = spec
        .pool_dir
        .as_ref()
        .ok_or_else(|| Error::config("experiment spec names no pool_dir"))?;
    let pool = XAppPool::load(pool_dir, &run.lab.network)?;
    let schedulers = Schedulers::load_for(spec)?;
    run.checkpoints_in.push(pool_dir.join(XAppPool::POWER_FILE));
    run.checkpoints_in.push(pool_dir.join(XAppPool::RBG_FILE));
    for p in [&spec.scheduler_method1, &spec.scheduler_method2].into_iter().flatten() {
        if !run.checkpoints_in.contains(p) && p.exists() {
            run.checkpoints_in.push(p.clone());
        }
    }
    run.checkpoints_in.dedup();
    let result = evaluate(spec, &run.lab, &pool, &schedulers, run.jobs)?;
    let summary = summarize(&result.metrics)?;
    run.save_csv(&result.metrics, &format!("{prefix}metrics.csv"))?;
    run.save_csv(&summary, &format!("{prefix}summary.csv"))?;
    run.save_csv(&result.activations, &format!("{prefix}activations.csv"))?;
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => exit::CONFIG,
        Error::Io { .. }
        | Error::Csv(_)
        | Error::MissingArtifact(_)
        | Error::CheckpointVersion { .. }
        | Error::CorruptCheckpoint(_) => exit::IO,
        Error::Dimension { .. } | Error::Invariant(_) | Error::NonFinite(_) | Error::Empty(_) => exit::INVARIANT,
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv) {
        Ok(manifest) => {
            eprintln!("wrote {} outputs to {}", manifest.outputs.len(), manifest.out_dir.display());
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_sets_nested_and_top_level_keys() {
        let lab = LabConfig::desk();
        let out = apply_override(&lab, "safety.z_threshold", toml::Value::Integer(-3)).unwrap();
        assert_eq!(out.safety.z_threshold, -3.0);
        let out = apply_override(&lab, "power_levels", toml::Value::Integer(8)).unwrap();
        assert_eq!(out.network.power_levels, 8);
        assert!(apply_override(&lab, "safety.nope", toml::Value::Integer(1)).is_err());
        assert!(apply_override(&lab, "nosuch.key", toml::Value::Integer(1)).is_err());
    }

    #[test]
    fn override_text_parsing() {
        assert_eq!(parse_override("a.b=-2.5").unwrap(), ("a.b".into(), toml::Value::Float(-2.5)));
        assert_eq!(
            parse_override("safety.fallback=best-single-rbg").unwrap().1,
            toml::Value::String("best-single-rbg".into())
        );
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn exit_codes_by_error_family() {
        assert_eq!(exit_code(&Error::Config("x".into())), exit::CONFIG);
        assert_eq!(exit_code(&Error::MissingArtifact("p".into())), exit::IO);
        assert_eq!(exit_code(&Error::Invariant("x".into())), exit::INVARIANT);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["oran-lab", "train-xapp", "--kind", "power", "--out", "/tmp/x"]), exit::USAGE);
        assert_eq!(run(["oran-lab", "frobnicate"]), exit::USAGE);
    }
}
