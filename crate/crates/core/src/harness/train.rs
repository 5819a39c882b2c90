use std::time::Instant;

use serde::Serialize;

use crate::cl::{
    activation_mass, anchor_penalty, anneal_scale, combine_importance, empirical_fisher_with, ewc_penalty, knot_fisher,
    mask_gradient, online_fisher_update, FisherStore, ImportanceStore, ReplayBuffer, ReplayItem, SiState,
    BACKBONE_PATTERNS,
};
use crate::error::{Error, Result};
use crate::harness::method::{Method, MethodParams, TrainParams};
use crate::harness::metrics::ResultMatrix;
use crate::harness::stream::TaskStream;
use crate::layers::loss::{cross_entropy, predict};
use crate::layers::{build_model, Adam, ArchSpec, Model};
use crate::numerics::{Rng, Tensor};

const EVAL_BATCH: usize = 512;

/// Loss components of one optimizer step. `bb` holds whichever
/// parameter-space penalty is active (backbone EWC, global EWC or SI).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub task: usize,
    pub ce: f64,
    pub anchor: f64,
    pub bb: f64,
    pub total: f64,
}

/// Per-epoch means; `step` is the global step count at the end of the epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub step: u64,
    pub task: usize,
    pub ce: f64,
    pub anchor: f64,
    pub bb: f64,
    pub total: f64,
}

/// Stores owned by the continual-learning method.
#[derive(Clone, Debug, Default)]
pub struct ClState {
    pub importance: Option<ImportanceStore>,
    pub backbone_fisher: FisherStore,
    pub global_fisher: FisherStore,
    pub si: Option<SiState>,
    pub replay: Option<ReplayBuffer>,
}

/// One model, optimizer and method state trained over a task stream.
#[derive(Clone)]
pub struct Learner {
    pub model: Model,
    pub opt: Adam,
    pub state: ClState,
    pub method: Method,
    pub params: MethodParams,
    pub train: TrainParams,
    paths: Vec<String>,
    shuffle_rng: Rng,
    replay_rng: Rng,
    fisher_rng: Rng,
    global_step: u64,
    trained_tasks: usize,
}

impl Learner {
    /// Builds the model with input shape and output width taken from the
    /// stream.
    pub fn new(
        arch: &ArchSpec,
        stream: &TaskStream,
        method: Method,
        params: MethodParams,
        train: TrainParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        train.validate()?;
        let mut arch = arch.clone();
        arch.input_shape = stream.image_shape();
        arch.classes = stream.output_classes;
        method.check_arch(&arch)?;
        let root = Rng::new(seed);
        let model = build_model(&arch, &mut root.fork(1))?;
        let state = ClState {
            importance: method
                .uses_knot_importance()
                .then(|| ImportanceStore::new(&model))
                .transpose()?,
            si: method.uses_si().then(|| SiState::new(&model, params.xi)).transpose()?,
            replay: method.uses_replay().then(|| ReplayBuffer::new(params.buffer)),
            ..Default::default()
        };
        Ok(Self {
            paths: model.paths().to_vec(),
            opt: Adam::new(train.lr),
            model,
            state,
            method,
            params,
            train,
            shuffle_rng: root.fork(3),
            replay_rng: root.fork(4),
            fisher_rng: root.fork(5),
            global_step: 0,
            trained_tasks: 0,
        })
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    /// Effective (anchor λ, mask β) at a given within-task progress.
    pub fn knot_weights(&self, progress: f64) -> (f64, f64) {
        let mult = if self.method.is_annealed() {
            anneal_scale(self.params.rho, self.params.delta, progress)
        } else {
            1.0
        };
        (self.params.lambda * mult, self.params.beta * mult)
    }

    /// Adds every active penalty gradient into `grads`; returns
    /// `(anchor, bb)` loss values. Terms with zero effective weight are
    /// skipped entirely.
    pub fn add_penalties(&self, grads: &mut [Tensor], progress: f64) -> Result<(f64, f64)> {
        let (lambda, _) = self.knot_weights(progress);
        let mut anchor = 0.0;
        let mut bb = 0.0;
        if let Some(store) = &self.state.importance {
            if lambda != 0.0 {
                anchor = anchor_penalty(&self.model, store, lambda, self.params.anchor_base, grads)?;
            }
        }
        if self.method.uses_backbone_ewc() && self.params.lambda_b != 0.0 && !self.state.backbone_fisher.is_empty() {
            bb += ewc_penalty(&self.model, &self.state.backbone_fisher, self.params.lambda_b, grads)?;
        }
        if self.method.uses_global_ewc() && self.params.ewc_lambda != 0.0 && !self.state.global_fisher.is_empty() {
            bb += ewc_penalty(&self.model, &self.state.global_fisher, self.params.ewc_lambda, grads)?;
        }
        if let Some(si) = &self.state.si {
            if self.params.si_lambda != 0.0 {
                bb += si.penalty(&self.model, self.params.si_lambda, grads)?;
            }
        }
        Ok((anchor, bb))
    }

    fn mask_head(&self, grads: &mut [Tensor], progress: f64) -> Result<()> {
        let (_, beta) = self.knot_weights(progress);
        let Some(store) = &self.state.importance else {
            return Ok(());
        };
        if beta == 0.0 {
            return Ok(());
        }
        for (l, imp) in store.layers.iter().enumerate() {
            let ci = self.model.kan_coeff_index(l).expect("KAN head registered");
            mask_gradient(&mut grads[ci], &imp.s, beta)?;
        }
        Ok(())
    }

    /// Trains on task `t` for the configured number of epochs.
    pub fn train_task(&mut self, stream: &TaskStream, t: usize) -> Result<(Vec<StepRecord>, Vec<EpochRecord>)> {
        let task = stream.tasks.get(t).ok_or(Error::OutOfRange {
            index: t,
            len: stream.len(),
        })?;
        let n = task.train.len();
        if n == 0 {
            return Err(Error::Empty(format!("task {t} has no training data")));
        }
        let per_epoch = n.div_ceil(self.train.batch);
        let total = (per_epoch * self.train.epochs) as f64;
        let mut steps = Vec::with_capacity(per_epoch * self.train.epochs);
        let mut epochs = Vec::with_capacity(self.train.epochs);
        let mut local = 0usize;
        for epoch in 0..self.train.epochs {
            let order = self.shuffle_rng.permutation(n);
            let first = steps.len();
            for chunk in order.chunks(self.train.batch) {
                let progress = local as f64 / total;
                let rec = self.step(stream, t, chunk, epoch == 0, progress)?;
                steps.push(rec);
                local += 1;
            }
            let span = &steps[first..];
            let mean = |f: fn(&StepRecord) -> f64| span.iter().map(f).sum::<f64>() / span.len() as f64;
            epochs.push(EpochRecord {
                step: self.global_step,
                task: t,
                ce: mean(|r| r.ce),
                anchor: mean(|r| r.anchor),
                bb: mean(|r| r.bb),
                total: mean(|r| r.total),
            });
        }
        self.trained_tasks = self.trained_tasks.max(t + 1);
        Ok((steps, epochs))
    }

    fn step(
        &mut self,
        stream: &TaskStream,
        t: usize,
        chunk: &[usize],
        insert: bool,
        progress: f64,
    ) -> Result<StepRecord> {
        let task = &stream.tasks[t];
        let mut x = task.train.images.select_rows(chunk);
        let mut labels: Vec<usize> = chunk.iter().map(|&i| task.train.labels[i]).collect();
        let mut masks: Vec<&[bool]> = vec![stream.mask(t); chunk.len()];
        if let Some(buf) = &self.state.replay {
            let k = self.params.replay_batch.min(buf.len());
            if k > 0 {
                let items = buf.sample(k, &mut self.replay_rng)?;
                let f = x.shape()[1];
                let data = items.iter().flat_map(|it| it.input.iter().copied()).collect();
                x = Tensor::concat_rows(&[&x, &Tensor::new(vec![k, f], data)?])?;
                for it in items {
                    labels.push(it.label);
                    masks.push(stream.mask(it.task));
                }
            }
        }
        let (logits, cache) = self.model.forward(&x)?;
        let (ce, dlogits) = cross_entropy(&logits, &labels, &masks)?;
        let mut grads = self.model.backward(&cache, &dlogits)?;
        let ce_grads = self.state.si.is_some().then(|| grads.clone());
        let (anchor, bb) = self.add_penalties(&mut grads, progress)?;
        self.mask_head(&mut grads, progress)?;
        let total = ce + anchor + bb;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "task {t}, step {}: ce {ce}, anchor {anchor}, bb {bb}, batch rows {:?}…",
                self.global_step + 1,
                &chunk[..chunk.len().min(8)]
            )));
        }
        let before: Option<Vec<Tensor>> = ce_grads
            .is_some()
            .then(|| self.model.params().into_iter().cloned().collect());
        self.opt
            .step(&self.paths, self.model.params_mut(), &grads)
            .map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("task {t}: {msg}")),
                other => other,
            })?;
        if let (Some(si), Some(g), Some(b)) = (&mut self.state.si, &ce_grads, &before) {
            si.accumulate(&self.paths, g, b, &self.model.params())?;
        }
        if insert {
            if let Some(buf) = &mut self.state.replay {
                for &i in chunk {
                    buf.insert(
                        ReplayItem {
                            input: task.train.images.row(i).to_vec(),
                            label: task.train.labels[i],
                            task: t,
                        },
                        &mut self.replay_rng,
                    );
                }
            }
        }
        self.global_step += 1;
        Ok(StepRecord {
            step: self.global_step,
            task: t,
            ce,
            anchor,
            bb,
            total,
        })
    }

    /// Consolidation after task `t`: importance, Fisher and SI updates as
    /// the method requires.
    pub fn post_task(&mut self, stream: &TaskStream, t: usize) -> Result<()> {
        let task = &stream.tasks[t];
        let mask = stream.mask(t);
        let cap = self.params.fisher_cap;
        if let Some(store) = &mut self.state.importance {
            let f = knot_fisher(&self.model, &task.train, mask, cap)?;
            let a = activation_mass(&self.model, &task.train, cap)?;
            let s = f
                .iter()
                .zip(&a)
                .map(|(fl, al)| combine_importance(fl, al, self.params.alpha_f, self.params.alpha_a))
                .collect::<Result<Vec<_>>>()?;
            store.accumulate_and_snapshot(&s, &self.model)?;
        }
        let sampler = |rng: &mut Rng, on: bool| -> Option<Rng> { on.then(|| rng.fork(t as u64)) };
        if self.method.uses_backbone_ewc() && self.params.lambda_b != 0.0 {
            let mut r = sampler(&mut self.fisher_rng, self.params.fisher_sampled);
            let new = empirical_fisher_with(&self.model, &task.train, mask, &BACKBONE_PATTERNS, cap, r.as_mut())?;
            online_fisher_update(&mut self.state.backbone_fisher, new, self.params.gamma)?;
        }
        if self.method.uses_global_ewc() && self.params.ewc_lambda != 0.0 {
            let mut r = sampler(&mut self.fisher_rng, self.params.fisher_sampled);
            let new = empirical_fisher_with(&self.model, &task.train, mask, &["*"], cap, r.as_mut())?;
            online_fisher_update(&mut self.state.global_fisher, new, self.params.gamma)?;
        }
        if let Some(si) = &mut self.state.si {
            si.consolidate(&self.model)?;
        }
        Ok(())
    }

    /// Test accuracy on tasks `0..=upto`, masked by the stream protocol.
    pub fn evaluate(&self, stream: &TaskStream, upto: usize) -> Result<Vec<f64>> {
        evaluate(&self.model, stream, upto)
    }
}

/// Test accuracy on tasks `0..=upto`. Task-IL restricts each task to its
/// class set; the other protocols use every output.
pub fn evaluate(model: &Model, stream: &TaskStream, upto: usize) -> Result<Vec<f64>> {
    if upto >= stream.len() {
        return Err(Error::OutOfRange {
            index: upto,
            len: stream.len(),
        });
    }
    let mut out = Vec::with_capacity(upto + 1);
    for t in 0..=upto {
        let test = &stream.tasks[t].test;
        if test.is_empty() {
            return Err(Error::Empty(format!("task {t} has no test data")));
        }
        let mask = stream.mask(t);
        let mut correct = 0usize;
        let idx: Vec<usize> = (0..test.len()).collect();
        for chunk in idx.chunks(EVAL_BATCH) {
            let (logits, _) = model.forward(&test.images.select_rows(chunk))?;
            let pred = predict(&logits, &vec![mask; chunk.len()])?;
            correct += pred.iter().zip(chunk).filter(|(p, &i)| **p == test.labels[i]).count();
        }
        out.push(correct as f64 / test.len() as f64);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub r: ResultMatrix,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub wall_seconds: f64,
    pub learner: Learner,
}

impl std::fmt::Debug for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Learner")
            .field("method", &self.method)
            .field("kind", &self.model.spec().kind)
            .field("global_step", &self.global_step)
            .field("trained_tasks", &self.trained_tasks)
            .finish()
    }
}

/// Train, consolidate and evaluate over the whole stream.
pub fn run_stream(
    arch: &ArchSpec,
    stream: &TaskStream,
    method: Method,
    params: MethodParams,
    train: TrainParams,
    seed: u64,
) -> Result<RunOutput> {
    let start = Instant::now();
    let mut learner = Learner::new(arch, stream, method, params, train, seed)?;
    let mut r = ResultMatrix::new(stream.len());
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    for t in 0..stream.len() {
        let (s, e) = learner.train_task(stream, t)?;
        steps.extend(s);
        epochs.extend(e);
        learner.post_task(stream, t)?;
        r.push_row(learner.evaluate(stream, t)?)?;
    }
    Ok(RunOutput {
        r,
        steps,
        epochs,
        wall_seconds: start.elapsed().as_secs_f64(),
        learner,
    })
}
