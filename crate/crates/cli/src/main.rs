use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use splinecl::experiment::{load_config, parse_config, run_experiment, run_sweep, ExperimentConfig};
use splinecl::harness::{build_stream, Benchmark, ResultMatrix, StreamOptions};
use splinecl::layers::{ArchSpec, ModelKind};
use splinecl::ntk::{mean_k_tilde, run_probe, write_report, ProbeOptions};

#[derive(Parser)]
#[command(
    name = "splinecl",
    version,
    about = "Continual-learning experiments with B-spline heads"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train and evaluate one configuration over its seeds.
    Run(RunArgs),
    /// One run per value of a config key, plus sweep.csv.
    Sweep(SweepArgs),
    /// Cross-task NTK of KAN and MLP heads at initialization.
    Probe(ProbeArgs),
    /// Recompute ACC and FGT from an r_matrix.csv.
    Metrics {
        #[arg(long = "r-matrix")]
        r_matrix: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat dotted-key config file; omitted means all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the named flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    benchmark: Option<String>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    axis: String,
    /// Comma-separated values; may be empty.
    #[arg(long, default_value = "")]
    values: String,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value = "split_mnist_5t")]
    benchmark: String,
    #[arg(long, default_value = "kan,mlp")]
    heads: String,
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Number of seeds, counted from 0.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Hidden widths of the KAN probe head (comma-separated, empty for none).
    #[arg(long, default_value = "")]
    hidden: String,
    #[arg(long, default_value_t = 5)]
    grid: usize,
    /// Use a convolutional backbone in front of the heads.
    #[arg(long)]
    backbone: bool,
    #[arg(long)]
    all_pairs: bool,
    #[arg(long, default_value_t = 1e-8)]
    rank_tol: f64,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "ntk_report.csv")]
    out: PathBuf,
}

fn overrides(c: &ConfigArgs, named: &[(&str, &Option<String>)]) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = named
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect();
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn config(c: &ConfigArgs, named: &[(&str, &Option<String>)]) -> Result<ExperimentConfig> {
    let ov = overrides(c, named)?;
    let mut cfg = match &c.config {
        Some(p) => load_config(p, &ov)?,
        None => parse_config("", &ov)?,
    };
    if let Some(o) = &c.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn widths(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().with_context(|| format!("bad width `{p}`")))
        .collect()
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Run(a) => {
            let seeds = a.seeds.as_ref().map(|s| format!("[{s}]"));
            let cfg = config(
                &a.cfg,
                &[("method", &a.method), ("benchmark", &a.benchmark), ("seeds", &seeds)],
            )?;
            let rep = run_experiment(&cfg)?;
            for s in &rep.summaries {
                println!(
                    "seed {:>3}  ACC {:.4}  FGT {:.4}  ({:.1}s)",
                    s.seed, s.acc, s.fgt, s.wall_clock_seconds
                );
            }
            for f in &rep.aggregate.failures {
                eprintln!("seed {} failed: {}", f.seed, f.error);
            }
            let g = &rep.aggregate;
            if !g.acc.is_empty() {
                println!(
                    "{} on {}: ACC {:.4} ± {:.4}  FGT {:.4} ± {:.4}",
                    g.method, g.benchmark, g.acc_mean, g.acc_std, g.fgt_mean, g.fgt_std
                );
            }
            println!("outputs in {}", cfg.output.display());
            Ok(rep.all_ok())
        }
        Cmd::Sweep(a) => {
            let cfg = config(&a.cfg, &[])?;
            let values: Vec<String> = a
                .values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(String::from)
                .collect();
            let rep = run_sweep(&cfg, &a.axis, &values)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            for r in &rep.rows {
                println!(
                    "{}={}  seed {}  ACC {:.4}  FGT {:.4}",
                    a.axis, r.value, r.seed, r.acc, r.fgt
                );
            }
            Ok(rep.all_ok)
        }
        Cmd::Probe(a) => {
            let benchmark = Benchmark::parse(&a.benchmark)?;
            let heads = a
                .heads
                .split(',')
                .map(|h| match (h.trim(), a.backbone) {
                    ("kan", false) => Ok(ModelKind::PureKan),
                    ("mlp", false) => Ok(ModelKind::PureMlp),
                    ("kan", true) => Ok(ModelKind::CnnKan),
                    ("mlp", true) => Ok(ModelKind::CnnMlp),
                    (other, _) => bail!("unknown head `{other}` (expected kan or mlp)"),
                })
                .collect::<Result<Vec<_>>>()?;
            let opts = ProbeOptions {
                arch: ArchSpec {
                    kind: if a.backbone {
                        ModelKind::CnnKan
                    } else {
                        ModelKind::PureKan
                    },
                    input_shape: [1, 28, 28],
                    hidden: widths(&a.hidden)?,
                    classes: 10,
                    grid: a.grid,
                    order: 3,
                    backbone_widths: vec![16, 32],
                    feature_dim: 64,
                    match_params: true,
                },
                heads,
                n_per_task: a.n,
                all_pairs: a.all_pairs,
                rank_tol: a.rank_tol,
            };
            let root = a.data.clone().unwrap_or_else(splinecl::data::data_root);
            let sopts = StreamOptions {
                train_per_task: Some(a.n),
                test_per_task: Some(1),
                ..Default::default()
            };
            let seeds: Vec<u64> = (0..a.seeds).collect();
            let recs = run_probe(|s| build_stream(benchmark, &root, &sopts, s), &opts, &seeds)?;
            write_report(&a.out, &recs)?;
            for r in &recs {
                println!(
                    "{} seed {} pair {}  K̃ {:.4}  rank {}",
                    r.head, r.seed, r.pair, r.k_tilde, r.rank12
                );
            }
            if let (Some(k), Some(m)) = (mean_k_tilde(&recs, "kan"), mean_k_tilde(&recs, "mlp")) {
                println!("mean K̃: kan {k:.4}  mlp {m:.4}  ratio {:.4}", k / m);
            }
            println!("report written to {}", a.out.display());
            Ok(true)
        }
        Cmd::Metrics { r_matrix } => {
            let text = std::fs::read_to_string(&r_matrix).with_context(|| format!("reading {}", r_matrix.display()))?;
            let r = ResultMatrix::from_csv(&text)?;
            println!("ACC {:.6}  FGT {:.6}", r.acc()?, r.fgt()?);
            Ok(true)
        }
    }
}
