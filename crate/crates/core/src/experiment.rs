//! Experiment configuration, seed orchestration and sweeps.
//!
//! Configs are flat documents of dotted keys (`method.lambda = 500`). A
//! `[section]` line prefixes the keys that follow it with `section.`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::data::{data_root, Dataset, Interpolation};
use crate::error::{Error, Result};
use crate::harness::{
    build_stream_from, run_stream, write_run, Benchmark, Method, MethodParams, Protocol, RunSummary, StreamOptions,
    TrainParams,
};
use crate::layers::{ArchSpec, ModelKind};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub method: Method,
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub arch: ArchSpec,
    pub train: TrainParams,
    pub params: MethodParams,
    /// `None` picks the benchmark default: full task data for MNIST, 2048
    /// for CIFAR.
    pub fisher_cap: Option<usize>,
    pub data_root: Option<PathBuf>,
    pub tasks: Option<usize>,
    pub train_per_task: Option<usize>,
    pub test_per_task: Option<usize>,
    pub pin_classes: bool,
    pub interpolation: Interpolation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: Benchmark::SplitMnist5t,
            method: Method::KanCl,
            protocol: Protocol::TaskIl,
            seeds: vec![0, 1, 2],
            output: PathBuf::from("runs"),
            arch: ArchSpec {
                kind: ModelKind::PureKan,
                input_shape: [1, 28, 28],
                hidden: vec![64],
                classes: 10,
                grid: 5,
                order: 3,
                backbone_widths: vec![16, 32, 64],
                feature_dim: 128,
                match_params: true,
            },
            train: TrainParams::default(),
            params: MethodParams::default(),
            fisher_cap: None,
            data_root: None,
            tasks: None,
            train_per_task: None,
            test_per_task: None,
            pin_classes: false,
            interpolation: Interpolation::Bilinear,
        }
    }
}

/// Every accepted key, in echo order.
pub const CONFIG_KEYS: &[&str] = &[
    "benchmark",
    "method",
    "protocol",
    "seeds",
    "output",
    "architecture.kind",
    "architecture.hidden",
    "architecture.grid",
    "architecture.order",
    "architecture.backbone_widths",
    "architecture.feature_dim",
    "architecture.match_params",
    "optimizer.lr",
    "optimizer.batch",
    "optimizer.epochs",
    "method.lambda",
    "method.lambda_b",
    "method.beta",
    "method.alpha_f",
    "method.alpha_a",
    "method.gamma",
    "method.xi",
    "method.rho",
    "method.delta",
    "method.buffer",
    "method.replay_batch",
    "method.fisher_cap",
    "method.ewc_lambda",
    "method.si_lambda",
    "method.anchor_base",
    "method.fisher_sampled",
    "data.root",
    "data.tasks",
    "data.train_per_task",
    "data.test_per_task",
    "data.pin_classes",
    "data.interpolation",
];

fn type_err(key: &str, want: &str, v: &Value) -> Error {
    Error::Config(format!("`{key}` expects {want}, got `{v}`"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_err(key, "a number", v)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(type_err(key, "a non-negative integer", v)),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| type_err(key, "a string", v))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| type_err(key, "true or false", v))
}

fn as_usize_list(key: &str, v: &Value) -> Result<Vec<usize>> {
    match v {
        Value::Array(items) => items.iter().map(|i| as_usize(key, i)).collect(),
        Value::Integer(_) => Ok(vec![as_usize(key, v)?]),
        _ => Err(type_err(key, "an integer list", v)),
    }
}

fn usize_list(xs: &[usize]) -> Value {
    Value::Array(xs.iter().map(|&x| Value::Integer(x as i64)).collect())
}

fn interp_name(i: Interpolation) -> &'static str {
    match i {
        Interpolation::Bilinear => "bilinear",
        Interpolation::Nearest => "nearest",
    }
}

/// Splits a flat `key = value` document. Values use TOML value syntax;
/// blank lines and lines starting with `#` are skipped.
fn parse_lines(text: &str) -> Result<Vec<(String, Value)>> {
    let mut out: Vec<(String, Value)> = Vec::new();
    let mut section = String::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, raw) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", n + 1)))?;
        let key = match section.as_str() {
            "" => k.trim().to_string(),
            sec => format!("{sec}.{}", k.trim()),
        };
        if out.iter().any(|(seen, _)| *seen == key) {
            return Err(Error::Config(format!("config line {}: duplicate key `{key}`", n + 1)));
        }
        let value = format!("v = {}", raw.trim())
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .ok_or_else(|| Error::Config(format!("config line {}: bad value for `{key}`", n + 1)))?;
        out.push((key, value));
    }
    Ok(out)
}

/// Parses a command-line override value: TOML syntax first, bare words as
/// strings, and comma lists as arrays.
pub fn parse_value(raw: &str) -> Value {
    if let Ok(t) = format!("v = {raw}").parse::<toml::Table>() {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    if raw.contains(',') {
        let parts: Vec<Value> = raw.split(',').map(|p| parse_value(p.trim())).collect();
        return Value::Array(parts);
    }
    Value::String(raw.to_string())
}

impl ExperimentConfig {
    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let p = &mut self.params;
        match key {
            "benchmark" => self.benchmark = Benchmark::parse(as_str(key, v)?)?,
            "method" => self.method = Method::parse(as_str(key, v)?)?,
            "protocol" => self.protocol = Protocol::parse(as_str(key, v)?)?,
            "seeds" => self.seeds = as_usize_list(key, v)?.into_iter().map(|s| s as u64).collect(),
            "output" => self.output = PathBuf::from(as_str(key, v)?),
            "architecture.kind" => self.arch.kind = ModelKind::parse(as_str(key, v)?)?,
            "architecture.hidden" => self.arch.hidden = as_usize_list(key, v)?,
            "architecture.grid" => self.arch.grid = as_usize(key, v)?,
            "architecture.order" => self.arch.order = as_usize(key, v)?,
            "architecture.backbone_widths" => self.arch.backbone_widths = as_usize_list(key, v)?,
            "architecture.feature_dim" => self.arch.feature_dim = as_usize(key, v)?,
            "architecture.match_params" => self.arch.match_params = as_bool(key, v)?,
            "optimizer.lr" => self.train.lr = as_f64(key, v)?,
            "optimizer.batch" => self.train.batch = as_usize(key, v)?,
            "optimizer.epochs" => self.train.epochs = as_usize(key, v)?,
            "method.lambda" => p.lambda = as_f64(key, v)?,
            "method.lambda_b" => p.lambda_b = as_f64(key, v)?,
            "method.beta" => p.beta = as_f64(key, v)?,
            "method.alpha_f" => p.alpha_f = as_f64(key, v)?,
            "method.alpha_a" => p.alpha_a = as_f64(key, v)?,
            "method.gamma" => p.gamma = as_f64(key, v)?,
            "method.xi" => p.xi = as_f64(key, v)?,
            "method.rho" => p.rho = as_f64(key, v)?,
            "method.delta" => p.delta = as_f64(key, v)?,
            "method.buffer" => p.buffer = as_usize(key, v)?,
            "method.replay_batch" => p.replay_batch = as_usize(key, v)?,
            "method.fisher_cap" => self.fisher_cap = Some(as_usize(key, v)?),
            "method.ewc_lambda" => p.ewc_lambda = as_f64(key, v)?,
            "method.si_lambda" => p.si_lambda = as_f64(key, v)?,
            "method.anchor_base" => p.anchor_base = as_bool(key, v)?,
            "method.fisher_sampled" => p.fisher_sampled = as_bool(key, v)?,
            "data.root" => self.data_root = Some(PathBuf::from(as_str(key, v)?)),
            "data.tasks" => self.tasks = Some(as_usize(key, v)?),
            "data.train_per_task" => self.train_per_task = Some(as_usize(key, v)?),
            "data.test_per_task" => self.test_per_task = Some(as_usize(key, v)?),
            "data.pin_classes" => self.pin_classes = as_bool(key, v)?,
            "data.interpolation" => {
                self.interpolation = match as_str(key, v)? {
                    "bilinear" => Interpolation::Bilinear,
                    "nearest" => Interpolation::Nearest,
                    other => return Err(Error::Config(format!("unknown interpolation `{other}`"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Current value of a key, `None` for unset optionals.
    pub fn get(&self, key: &str) -> Result<Option<Value>> {
        let p = &self.params;
        let f = |x: f64| Some(Value::Float(x));
        let u = |x: usize| Some(Value::Integer(x as i64));
        let s = |x: &str| Some(Value::String(x.to_string()));
        Ok(match key {
            "benchmark" => s(self.benchmark.name()),
            "method" => s(self.method.name()),
            "protocol" => s(self.protocol.name()),
            "seeds" => Some(Value::Array(
                self.seeds.iter().map(|&x| Value::Integer(x as i64)).collect(),
            )),
            "output" => s(&self.output.to_string_lossy()),
            "architecture.kind" => s(self.arch.kind.name()),
            "architecture.hidden" => Some(usize_list(&self.arch.hidden)),
            "architecture.grid" => u(self.arch.grid),
            "architecture.order" => u(self.arch.order),
            "architecture.backbone_widths" => Some(usize_list(&self.arch.backbone_widths)),
            "architecture.feature_dim" => u(self.arch.feature_dim),
            "architecture.match_params" => Some(Value::Boolean(self.arch.match_params)),
            "optimizer.lr" => f(self.train.lr),
            "optimizer.batch" => u(self.train.batch),
            "optimizer.epochs" => u(self.train.epochs),
            "method.lambda" => f(p.lambda),
            "method.lambda_b" => f(p.lambda_b),
            "method.beta" => f(p.beta),
            "method.alpha_f" => f(p.alpha_f),
            "method.alpha_a" => f(p.alpha_a),
            "method.gamma" => f(p.gamma),
            "method.xi" => f(p.xi),
            "method.rho" => f(p.rho),
            "method.delta" => f(p.delta),
            "method.buffer" => u(p.buffer),
            "method.replay_batch" => u(p.replay_batch),
            "method.fisher_cap" => self.fisher_cap.and_then(u),
            "method.ewc_lambda" => f(p.ewc_lambda),
            "method.si_lambda" => f(p.si_lambda),
            "method.anchor_base" => Some(Value::Boolean(p.anchor_base)),
            "method.fisher_sampled" => Some(Value::Boolean(p.fisher_sampled)),
            "data.root" => self.data_root.as_ref().and_then(|r| s(&r.to_string_lossy())),
            "data.tasks" => self.tasks.and_then(u),
            "data.train_per_task" => self.train_per_task.and_then(u),
            "data.test_per_task" => self.test_per_task.and_then(u),
            "data.pin_classes" => Some(Value::Boolean(self.pin_classes)),
            "data.interpolation" => s(interp_name(self.interpolation)),
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        })
    }

    /// Checks every field before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        self.params.validate()?;
        self.train.validate()?;
        let arch = self.stream_arch();
        arch.validate()?;
        self.method.check_arch(&arch)?;
        if self.protocol == Protocol::DomainIl
            && matches!(
                self.benchmark,
                Benchmark::PermutedMnist10t | Benchmark::RotationMnist10t
            )
        {
            return Err(Error::Config(
                "permuted/rotation streams already share one label space; use task_il".into(),
            ));
        }
        if self.fisher_cap == Some(0) {
            return Err(Error::Config("method.fisher_cap must be ≥ 1".into()));
        }
        Ok(())
    }

    fn stream_arch(&self) -> ArchSpec {
        let mut a = self.arch.clone();
        a.input_shape = if self.benchmark.is_cifar() {
            [3, 32, 32]
        } else {
            [1, 28, 28]
        };
        a.classes = match self.benchmark {
            Benchmark::SplitCifar100_10t => 100,
            _ => 10,
        };
        a
    }

    /// Parameters with the benchmark-dependent Fisher cap resolved.
    pub fn resolved_params(&self) -> MethodParams {
        let mut p = self.params.clone();
        p.fisher_cap = self
            .fisher_cap
            .unwrap_or(if self.benchmark.is_cifar() { 2048 } else { usize::MAX });
        p
    }

    pub fn stream_options(&self) -> StreamOptions {
        StreamOptions {
            tasks: self.tasks,
            train_per_task: self.train_per_task,
            test_per_task: self.test_per_task,
            pin_classes: self.pin_classes,
            protocol: self.protocol,
            interpolation: self.interpolation,
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_root.clone().unwrap_or_else(data_root)
    }

    /// Flat `key = value` text that [`parse_config`] maps back to `self`.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            if let Some(v) = self.get(key).expect("listed key") {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out
    }
}

/// Parses a config document, then applies `overrides` in order.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let flat = parse_lines(text)?;
    let mut cfg = ExperimentConfig::default();
    for (k, v) in &flat {
        cfg.set(k, v)?;
    }
    for (k, raw) in overrides {
        cfg.set(k, &parse_value(raw))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, overrides)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Contents of `aggregate.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub benchmark: String,
    pub protocol: String,
    pub seeds: Vec<u64>,
    pub acc: Vec<f64>,
    pub fgt: Vec<f64>,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub fgt_mean: f64,
    pub fgt_std: f64,
    pub failures: Vec<SeedFailure>,
    /// At least one seed failed.
    pub partial: bool,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_summaries(cfg: &ExperimentConfig, ok: &[RunSummary], failures: Vec<SeedFailure>) -> Self {
        let acc: Vec<f64> = ok.iter().map(|s| s.acc).collect();
        let fgt: Vec<f64> = ok.iter().map(|s| s.fgt).collect();
        let (acc_mean, acc_std) = mean_std(&acc);
        let (fgt_mean, fgt_std) = mean_std(&fgt);
        Self {
            method: cfg.method.name().into(),
            benchmark: cfg.benchmark.name().into(),
            protocol: cfg.protocol.name().into(),
            seeds: ok.iter().map(|s| s.seed).collect(),
            acc,
            fgt,
            acc_mean,
            acc_std,
            fgt_mean,
            fgt_std,
            partial: !failures.is_empty(),
            failures,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub summaries: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    pub fn all_ok(&self) -> bool {
        self.aggregate.failures.is_empty()
    }
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

fn run_seed(cfg: &ExperimentConfig, data: &(Dataset, Dataset), seed: u64) -> Result<RunSummary> {
    let stream = build_stream_from(cfg.benchmark, &data.0, &data.1, &cfg.stream_options(), seed)?;
    let out = run_stream(
        &cfg.arch,
        &stream,
        cfg.method,
        cfg.resolved_params(),
        cfg.train.clone(),
        seed,
    )?;
    let summary = RunSummary::from_run(&out, &stream, seed, cfg.echo())?;
    write_run(&seed_dir(&cfg.output, seed), &summary, &out.r, &out.epochs)?;
    Ok(summary)
}

/// Runs every seed; a failing seed is recorded and the rest proceed.
/// Writes per-seed outputs and `aggregate.json` under `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let data = cfg.benchmark.load(&cfg.data_dir());
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for &seed in &cfg.seeds {
        let res = data
            .as_ref()
            .map_err(|e| e.to_string())
            .and_then(|d| run_seed(cfg, d, seed).map_err(|e| e.to_string()));
        match res {
            Ok(s) => summaries.push(s),
            Err(error) => failures.push(SeedFailure { seed, error }),
        }
    }
    let aggregate = Aggregate::from_summaries(cfg, &summaries, failures);
    let path = cfg.output.join("aggregate.json");
    fs::write(&path, serde_json::to_string_pretty(&aggregate)?).map_err(|e| Error::io(&path, e))?;
    Ok(ExperimentReport { summaries, aggregate })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub seed: u64,
    pub acc: f64,
    pub fgt: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
    /// Every run of every value succeeded.
    pub all_ok: bool,
}

/// One experiment per value of `axis`, each in `output/<axis>=<value>`,
/// plus `output/sweep.csv`.
pub fn run_sweep(base: &ExperimentConfig, axis: &str, values: &[String]) -> Result<SweepReport> {
    base.get(axis)?;
    if values.is_empty() {
        return Ok(SweepReport {
            warnings: vec![format!("sweep over `{axis}` has no values; nothing to run")],
            all_ok: true,
            ..Default::default()
        });
    }
    let mut configs = Vec::with_capacity(values.len());
    for raw in values {
        let mut cfg = base.clone();
        cfg.set(axis, &parse_value(raw))?;
        cfg.output = base.output.join(format!("{axis}={raw}"));
        cfg.validate()?;
        configs.push((raw.clone(), cfg));
    }
    let mut report = SweepReport {
        all_ok: true,
        ..Default::default()
    };
    for (raw, cfg) in configs {
        let exp = run_experiment(&cfg)?;
        report.all_ok &= exp.all_ok();
        for f in &exp.aggregate.failures {
            report
                .warnings
                .push(format!("{axis}={raw}, seed {}: {}", f.seed, f.error));
        }
        for s in exp.summaries {
            report.rows.push(SweepRow {
                value: raw.clone(),
                seed: s.seed,
                acc: s.acc,
                fgt: s.fgt,
            });
        }
    }
    fs::create_dir_all(&base.output).map_err(|e| Error::io(&base.output, e))?;
    let path = base.output.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Recomputes aggregate statistics from per-seed `summary.json` files.
pub fn read_summaries(out: &Path, seeds: &[u64]) -> Result<Vec<RunSummary>> {
    seeds
        .iter()
        .map(|&s| {
            let p = seed_dir(out, s).join("summary.json");
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}

/// Flat view of a config, handy for diffing.
pub fn config_map(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    CONFIG_KEYS
        .iter()
        .filter_map(|k| cfg.get(k).ok().flatten().map(|v| (k.to_string(), v.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.params.lambda, 500.0);
        assert_eq!(cfg.params.lambda_b, 1000.0);
        assert_eq!(cfg.params.beta, 5.0);
        assert_eq!(cfg.params.alpha_f, 1.0);
        assert_eq!(cfg.params.alpha_a, 0.5);
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.train.batch, 128);
    }

    #[test]
    fn overrides_and_sections() {
        let text = "benchmark = \"split_cifar10_5t\"\n[architecture]\nkind = \"cnn_kan\"\n[method]\nlambda = 250\n";
        let cfg = parse_config(text, &[("method".into(), "kan_cl_bbewc".into())]).unwrap();
        assert_eq!(cfg.method, Method::KanClBbewc);
        assert_eq!(cfg.params.lambda, 250.0);
        assert_eq!(cfg.arch.kind, ModelKind::CnnKan);
        let dotted = parse_config("method.lambda = 250\narchitecture.hidden = [8, 4]", &[]).unwrap();
        assert_eq!(dotted.params.lambda, 250.0);
        assert_eq!(dotted.arch.hidden, vec![8, 4]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("method.rho = 1.5", &[]).is_err());
        assert!(parse_config("method.lamda = 1", &[]).is_err());
        assert!(parse_config("optimizer.batch = \"big\"", &[]).is_err());
        assert!(parse_config("seeds = []", &[]).is_err());
        assert!(parse_config("method = \"kan_cl_bbewc\"", &[]).is_err());
        assert!(parse_config("", &[("method.beta".into(), "-1".into())]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.params.lambda = 0.1 + 0.2;
        cfg.train_per_task = Some(300);
        cfg.fisher_cap = Some(77);
        cfg.seeds = vec![4, 9];
        cfg.data_root = Some(PathBuf::from("/tmp/some data"));
        let back = parse_config(&cfg.echo(), &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(config_map(&back), config_map(&cfg));
    }

    #[test]
    fn override_value_forms() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("kan_cl"), Value::String("kan_cl".into()));
        assert_eq!(
            parse_value("0,1,2"),
            Value::Array(vec![Value::Integer(0), Value::Integer(1), Value::Integer(2)])
        );
        assert_eq!(parse_value("true"), Value::Boolean(true));
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sweep_warns() {
        let r = run_sweep(&ExperimentConfig::default(), "method.rho", &[]).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.warnings.len(), 1);
        assert!(run_sweep(&ExperimentConfig::default(), "method.nope", &[]).is_err());
    }

    #[test]
    fn missing_data_names_fetch_script() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            data_root: Some(dir.path().join("absent")),
            output: dir.path().join("out"),
            seeds: vec![0, 1],
            ..Default::default()
        };
        let rep = run_experiment(&cfg).unwrap();
        assert!(!rep.all_ok());
        assert!(rep.aggregate.partial);
        assert_eq!(rep.aggregate.failures.len(), 2);
        assert!(
            rep.aggregate.failures[0].error.contains("fetch_data.py"),
            "{}",
            rep.aggregate.failures[0].error
        );
        assert!(cfg.output.join("aggregate.json").exists());
    }
}
