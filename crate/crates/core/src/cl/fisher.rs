//! Diagonal empirical Fisher, (online) EWC and the per-sample gradient pass
//! shared with the per-knot statistics.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::loss::log_prob_grad;
use crate::layers::Model;
use crate::numerics::{Rng, Tensor};

/// Glob-style path selection: `backbone.*` matches by prefix, anything else
/// must match exactly. `*` alone matches every path.
pub fn path_matches(path: &str, patterns: &[&str]) -> bool {
    patterns.iter().any(|p| match p.strip_suffix('*') {
        Some(prefix) => path.starts_with(prefix),
        None => path == *p,
    })
}

/// Parameters regularized by backbone EWC.
pub const BACKBONE_PATTERNS: [&str; 2] = ["backbone.*", "feat_norm.*"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FisherStore {
    pub fisher: BTreeMap<String, Tensor>,
    pub theta: BTreeMap<String, Tensor>,
}

impl FisherStore {
    pub fn is_empty(&self) -> bool {
        self.fisher.is_empty()
    }
}

/// Sums `g²` over per-sample gradients of `log p(label | x)` for the selected
/// registry indices, over the first `min(N, cap)` examples. With
/// `sample_labels`, labels are drawn from the model's predictive
/// distribution instead of the dataset.
pub(crate) fn squared_grad_sums(
    model: &Model,
    data: &Dataset,
    mask: &[bool],
    selected: &[usize],
    cap: usize,
    mut sample_labels: Option<&mut Rng>,
) -> Result<(Vec<Tensor>, usize)> {
    if data.is_empty() || cap == 0 {
        return Err(Error::Empty("Fisher needs at least one sample".into()));
    }
    let n = data.len().min(cap);
    let params = model.params();
    let mut sums: Vec<Tensor> = selected.iter().map(|&i| Tensor::zeros(params[i].shape())).collect();
    for a in 0..n {
        let x = data.images.select_rows(&[a]);
        let (logits, cache) = model.forward(&x)?;
        let label = match sample_labels.as_deref_mut() {
            Some(rng) => sample_from_logits(&logits, mask, rng),
            None => data.labels[a],
        };
        let up = log_prob_grad(&logits, &[label], &[mask])?;
        let grads = model.backward(&cache, &up)?;
        for (sum, &i) in sums.iter_mut().zip(selected) {
            for (s, g) in sum.data_mut().iter_mut().zip(grads[i].data()) {
                *s += g * g;
            }
        }
    }
    Ok((sums, n))
}

fn sample_from_logits(logits: &Tensor, mask: &[bool], rng: &mut Rng) -> usize {
    let row = logits.row(0);
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = row
        .iter()
        .zip(mask)
        .map(|(v, &m)| if m { (v - max).exp() } else { 0.0 })
        .collect();
    let mut u = rng.uniform() * w.iter().sum::<f64>();
    for (c, wc) in w.iter().enumerate() {
        if mask[c] {
            if u < *wc {
                return c;
            }
            u -= wc;
        }
    }
    mask.iter().rposition(|&m| m).unwrap_or(0)
}

/// Empirical Fisher diagonal for every parameter whose path matches one of
/// `patterns`, plus a snapshot of those parameters.
pub fn empirical_fisher(
    model: &Model,
    data: &Dataset,
    mask: &[bool],
    patterns: &[&str],
    cap: usize,
) -> Result<FisherStore> {
    empirical_fisher_with(model, data, mask, patterns, cap, None)
}

pub fn empirical_fisher_with(
    model: &Model,
    data: &Dataset,
    mask: &[bool],
    patterns: &[&str],
    cap: usize,
    sample_labels: Option<&mut Rng>,
) -> Result<FisherStore> {
    let selected: Vec<usize> = model
        .paths()
        .iter()
        .enumerate()
        .filter(|(_, p)| path_matches(p, patterns))
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(format!("path filter {patterns:?} selects no parameter")));
    }
    let (sums, n) = squared_grad_sums(model, data, mask, &selected, cap, sample_labels)?;
    let params = model.params();
    let mut store = FisherStore::default();
    for (sum, &i) in sums.into_iter().zip(&selected) {
        let path = model.paths()[i].clone();
        store.fisher.insert(path.clone(), sum.scale(1.0 / n as f64));
        store.theta.insert(path, params[i].clone());
    }
    Ok(store)
}

/// `λ Σ F (θ − θ*)²`; adds `2λF(θ − θ*)` into `grads` (aligned with the
/// model registry).
pub fn ewc_penalty(model: &Model, store: &FisherStore, lambda: f64, grads: &mut [Tensor]) -> Result<f64> {
    let params = model.params();
    if grads.len() != params.len() {
        return Err(Error::Contract("gradient slots do not match the registry".into()));
    }
    let mut loss = 0.0;
    for (path, f) in &store.fisher {
        let i = model
            .param_index(path)
            .ok_or_else(|| Error::Contract(format!("Fisher path `{path}` not in the model")))?;
        let star = store
            .theta
            .get(path)
            .ok_or_else(|| Error::Contract(format!("no snapshot for `{path}`")))?;
        if f.shape() != params[i].shape() || star.shape() != params[i].shape() {
            return Err(Error::Contract(format!("Fisher/snapshot shape mismatch at `{path}`")));
        }
        let g = grads[i].data_mut();
        for (((gk, &fk), &th), &ts) in g.iter_mut().zip(f.data()).zip(params[i].data()).zip(star.data()) {
            let d = th - ts;
            loss += fk * d * d;
            *gk += 2.0 * lambda * fk * d;
        }
    }
    Ok(lambda * loss)
}

/// `F ← γ F_old + F_new`; the snapshot becomes the newest one.
pub fn online_fisher_update(store: &mut FisherStore, new: FisherStore, gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("online EWC decay {gamma} not in [0, 1]")));
    }
    for (path, f_new) in new.fisher {
        let merged = match store.fisher.get(&path) {
            Some(old) => {
                let mut m = old.scale(gamma);
                m.add_assign(&f_new)?;
                m
            }
            None => f_new,
        };
        store.fisher.insert(path, merged);
    }
    store.theta = new.theta;
    Ok(())
}
