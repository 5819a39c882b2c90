//! Empirical NTK of the classification head: per-sample Jacobians, cross-task
//! Grams, normalized cross norms and Fisher overlap between tasks.

use std::path::Path;

use serde::Serialize;

use crate::cl::{path_matches, FisherStore};
use crate::error::{Error, Result};
use crate::harness::TaskStream;
use crate::layers::{build_model, ArchSpec, Model, ModelKind};
use crate::numerics::{numeric_rank, op_norm, Rng, Tensor};

/// Head Jacobian with row `a·C + o` holding `∂f_o(x_a)/∂θ_head`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianBlock {
    pub samples: usize,
    pub outputs: usize,
    pub j: Tensor,
}

impl JacobianBlock {
    pub fn params(&self) -> usize {
        self.j.shape()[1]
    }
}

/// Exact head Jacobian at the model's current parameters, one backward pass
/// per output per sample.
pub fn head_jacobian(model: &Model, x: &Tensor) -> Result<JacobianBlock> {
    x.require_2d("head_jacobian")?;
    let n = x.shape()[0];
    if n == 0 {
        return Err(Error::Empty("Jacobian needs at least one sample".into()));
    }
    let feats = model.features(x)?;
    let c = model.spec().classes;
    let p: usize = model.head_range().map(|i| model.params()[i].len()).sum();
    let mut j = Tensor::zeros(&[n * c, p]);
    for a in 0..n {
        let (_, cache) = model.head.forward(&feats.select_rows(&[a]))?;
        for o in 0..c {
            let mut up = Tensor::zeros(&[1, c]);
            up.data_mut()[o] = 1.0;
            let (grads, _) = model.head.backward(&cache, &up)?;
            let row = j.row_mut(a * c + o);
            let mut at = 0;
            for g in &grads {
                row[at..at + g.len()].copy_from_slice(g.data());
                at += g.len();
            }
        }
    }
    Ok(JacobianBlock {
        samples: n,
        outputs: c,
        j,
    })
}

/// `J₁ J₂ᵀ`.
pub fn cross_gram(j1: &JacobianBlock, j2: &JacobianBlock) -> Result<Tensor> {
    if j1.params() != j2.params() {
        return Err(Error::Dimension(format!(
            "Jacobians over {} and {} parameters",
            j1.params(),
            j2.params()
        )));
    }
    j1.j.matmul_t(&j2.j)
}

/// Operator norms of the three Grams and `K̃ = ‖K₁₂‖ / √(‖K₁₁‖‖K₂₂‖)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossNorm {
    pub norm11: f64,
    pub norm22: f64,
    pub norm12: f64,
    pub k_tilde: f64,
}

pub fn normalized_cross_norm(k12: &Tensor, k11: &Tensor, k22: &Tensor) -> Result<CrossNorm> {
    let norm11 = op_norm(k11)?;
    let norm22 = op_norm(k22)?;
    if !(norm11 > 0.0 && norm22 > 0.0) {
        return Err(Error::Probe(format!("degenerate self-Gram: norms {norm11}, {norm22}")));
    }
    let norm12 = op_norm(k12)?;
    let k_tilde = (norm12 / (norm11 * norm22).sqrt()).clamp(0.0, 1.0 + 1e-9);
    Ok(CrossNorm {
        norm11,
        norm22,
        norm12,
        k_tilde,
    })
}

/// Pairwise cosine similarity of flattened Fisher diagonals restricted to
/// `patterns`; `None` where either Fisher has zero norm.
pub fn fisher_overlap(fishers: &[FisherStore], patterns: &[&str]) -> Result<Vec<Vec<Option<f64>>>> {
    if fishers.len() < 2 {
        return Err(Error::Probe("overlap needs at least two task Fishers".into()));
    }
    let keys: Vec<&String> = fishers[0].fisher.keys().filter(|p| path_matches(p, patterns)).collect();
    if keys.is_empty() {
        return Err(Error::Config(format!(
            "path filter {patterns:?} selects no Fisher entry"
        )));
    }
    let flat = fishers
        .iter()
        .map(|f| {
            let mut v = Vec::new();
            for k in &keys {
                let t = f
                    .fisher
                    .get(*k)
                    .ok_or_else(|| Error::Contract(format!("Fisher stores disagree on `{k}`")))?;
                v.extend_from_slice(t.data());
            }
            Ok(v)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    if flat.iter().any(|v| v.len() != flat[0].len()) {
        return Err(Error::Contract("Fisher shapes differ between tasks".into()));
    }
    let norms: Vec<f64> = flat
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let t = flat.len();
    let mut out = vec![vec![None; t]; t];
    for a in 0..t {
        for b in 0..t {
            if norms[a] > 0.0 && norms[b] > 0.0 {
                let dot: f64 = flat[a].iter().zip(&flat[b]).map(|(x, y)| x * y).sum();
                out[a][b] = Some(if a == b { 1.0 } else { dot / (norms[a] * norms[b]) });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOptions {
    /// Architecture of the KAN probe head; its counterpart is matched.
    pub arch: ArchSpec,
    pub heads: Vec<ModelKind>,
    pub n_per_task: usize,
    /// Probe every task pair instead of only the first.
    pub all_pairs: bool,
    pub rank_tol: f64,
}

/// One line of `ntk_report.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NtkRecord {
    pub benchmark: String,
    pub head: String,
    pub seed: u64,
    pub pair: String,
    pub norm11: f64,
    pub norm22: f64,
    pub norm12: f64,
    pub k_tilde: f64,
    pub rank12: usize,
    pub rank_tol: f64,
}

/// MLP head spec whose parameter count is matched to `kan`'s KAN head.
/// A KAN head without hidden layers is matched by a one-hidden-layer MLP.
pub fn matched_mlp_spec(kan: &ArchSpec) -> ArchSpec {
    let mut spec = kan.clone();
    spec.kind = if kan.kind.has_backbone() {
        ModelKind::CnnMlp
    } else {
        ModelKind::PureMlp
    };
    if kan.hidden.is_empty() {
        let (d, c) = (kan.head_input_dim(), kan.classes);
        let target = kan.kan_head_params() as f64;
        let h = ((target - c as f64) / (d + c + 1) as f64).round().max(1.0) as usize;
        spec.hidden = vec![h];
        spec.match_params = false;
    } else {
        spec.hidden = kan.matched_mlp_hidden();
        spec.match_params = false;
    }
    spec
}

fn head_spec(opts: &ProbeOptions, kind: ModelKind, stream: &TaskStream) -> Result<ArchSpec> {
    let mut kan = opts.arch.clone();
    kan.kind = if kind.has_backbone() {
        ModelKind::CnnKan
    } else {
        ModelKind::PureKan
    };
    kan.input_shape = stream.image_shape();
    kan.classes = stream.output_classes;
    Ok(if kind.is_kan() { kan } else { matched_mlp_spec(&kan) })
}

fn head_tag(kind: ModelKind) -> &'static str {
    if kind.is_kan() {
        "kan"
    } else {
        "mlp"
    }
}

/// K̃ for the first task pair (or all pairs) of one stream at initialization.
pub fn probe_stream(stream: &TaskStream, opts: &ProbeOptions, seed: u64) -> Result<Vec<NtkRecord>> {
    if stream.len() < 2 {
        return Err(Error::Probe("probe needs at least two tasks".into()));
    }
    if opts.n_per_task == 0 {
        return Err(Error::Empty("n_per_task must be ≥ 1".into()));
    }
    let pairs: Vec<(usize, usize)> = if opts.all_pairs {
        (0..stream.len())
            .flat_map(|a| (a + 1..stream.len()).map(move |b| (a, b)))
            .collect()
    } else {
        vec![(0, 1)]
    };
    let mut out = Vec::new();
    for &kind in &opts.heads {
        let spec = head_spec(opts, kind, stream)?;
        // Same init stream for both head types; untrained, as at t = 0.
        let model = build_model(&spec, &mut Rng::new(seed).fork(1))?;
        let mut jac: Vec<Option<JacobianBlock>> = vec![None; stream.len()];
        for &(a, b) in &pairs {
            for t in [a, b] {
                if jac[t].is_none() {
                    let d = &stream.tasks[t].train;
                    let n = opts.n_per_task.min(d.len());
                    let idx: Vec<usize> = (0..n).collect();
                    jac[t] = Some(head_jacobian(&model, &d.images.select_rows(&idx))?);
                }
            }
            let (ja, jb) = (jac[a].as_ref().expect("built"), jac[b].as_ref().expect("built"));
            let k11 = cross_gram(ja, ja)?;
            let k22 = cross_gram(jb, jb)?;
            let k12 = cross_gram(ja, jb)?;
            let cn = normalized_cross_norm(&k12, &k11, &k22)?;
            out.push(NtkRecord {
                benchmark: stream.benchmark.name().to_string(),
                head: head_tag(kind).to_string(),
                seed,
                pair: format!("{a}-{b}"),
                norm11: cn.norm11,
                norm22: cn.norm22,
                norm12: cn.norm12,
                k_tilde: cn.k_tilde,
                rank12: numeric_rank(&k12, opts.rank_tol)?,
                rank_tol: opts.rank_tol,
            });
        }
    }
    Ok(out)
}

/// Runs [`probe_stream`] once per seed, building the stream with `build`.
pub fn run_probe(
    mut build: impl FnMut(u64) -> Result<TaskStream>,
    opts: &ProbeOptions,
    seeds: &[u64],
) -> Result<Vec<NtkRecord>> {
    let mut out = Vec::new();
    for &seed in seeds {
        out.extend(probe_stream(&build(seed)?, opts, seed)?);
    }
    Ok(out)
}

pub fn write_report(path: &Path, records: &[NtkRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Mean K̃ per head tag over a report.
pub fn mean_k_tilde(records: &[NtkRecord], head: &str) -> Option<f64> {
    let v: Vec<f64> = records.iter().filter(|r| r.head == head).map(|r| r.k_tilde).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
