//! Task streams, the continual training loop, evaluation and the ACC/FGT
//! pipeline.

mod method;
mod metrics;
mod stream;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use method::{Method, MethodParams, TrainParams};
pub use metrics::ResultMatrix;
pub use stream::{build_stream, build_stream_from, Benchmark, Protocol, StreamOptions, Task, TaskStream, Transform};
pub use train::{evaluate, run_stream, ClState, EpochRecord, Learner, RunOutput, StepRecord};

/// Contents of `summary.json` for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub benchmark: String,
    pub protocol: String,
    pub seed: u64,
    pub acc: f64,
    pub fgt: f64,
    pub final_accuracies: Vec<f64>,
    pub wall_clock_seconds: f64,
    pub steps: u64,
    pub config_echo: String,
}

impl RunSummary {
    pub fn from_run(out: &RunOutput, stream: &TaskStream, seed: u64, config_echo: String) -> Result<Self> {
        Ok(Self {
            method: out.learner.method.name().to_string(),
            benchmark: stream.benchmark.name().to_string(),
            protocol: stream.protocol.name().to_string(),
            seed,
            acc: out.r.acc()?,
            fgt: out.r.fgt()?,
            final_accuracies: out.r.rows().last().cloned().unwrap_or_default(),
            wall_clock_seconds: out.wall_seconds,
            steps: out.learner.global_step(),
            config_echo,
        })
    }
}

/// Writes `r_matrix.csv`, `summary.json` and `train_log.csv` into `dir`.
pub fn write_run(dir: &Path, summary: &RunSummary, r: &ResultMatrix, epochs: &[EpochRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rp = dir.join("r_matrix.csv");
    fs::write(&rp, r.to_csv()).map_err(|e| Error::io(&rp, e))?;
    let sp = dir.join("summary.json");
    fs::write(&sp, serde_json::to_string_pretty(summary)?).map_err(|e| Error::io(&sp, e))?;
    let lp = dir.join("train_log.csv");
    let mut w = csv::Writer::from_path(&lp)?;
    for e in epochs {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(&lp, e))?;
    Ok(())
}
