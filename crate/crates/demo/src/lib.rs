//! Browser bindings: B-spline basis curves, per-knot Fisher of two tasks with
//! disjoint input ranges, and the anchor annealing schedule.
//!
//! Every export returns a flat `Float64Array`; shapes are documented per
//! function.

use splinecl::cl::{anneal_scale, knot_fisher};
use splinecl::data::{Dataset, Normalization};
use splinecl::layers::{build_model, ArchSpec, ModelKind};
use splinecl::numerics::{Rng, Tensor};
use splinecl::spline::SplineGrid;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `samples` x-values on [-1, 1] followed by `K` curves of `samples` values
/// each, `K = grid + order`.
pub fn basis_curves_native(grid: usize, order: usize, samples: usize) -> splinecl::Result<Vec<f64>> {
    let g = SplineGrid::uniform(grid, order)?;
    let samples = samples.max(2);
    let xs: Vec<f64> = (0..samples)
        .map(|i| -1.0 + 2.0 * i as f64 / (samples - 1) as f64)
        .collect();
    let k = g.basis_count();
    let mut out = xs.clone();
    out.resize(samples * (k + 1), 0.0);
    for (i, &x) in xs.iter().enumerate() {
        for (b, v) in g.basis_eval(x).into_iter().enumerate() {
            out[(b + 1) * samples + i] = v;
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn basis_curves(grid: usize, order: usize, samples: usize) -> Result<Vec<f64>, JsError> {
    basis_curves_native(grid, order, samples).map_err(js_err)
}

fn interval_task(lo: f64, hi: f64, n: usize, rng: &mut Rng) -> splinecl::Result<Dataset> {
    let mid = 0.5 * (lo + hi);
    let xs: Vec<f64> = (0..n).map(|_| rng.uniform_in(lo, hi)).collect();
    let labels = xs.iter().map(|&x| usize::from(x > mid)).collect();
    Dataset::new(
        "interval",
        Tensor::new(vec![n, 1], xs)?,
        labels,
        [1, 1, 1],
        2,
        Normalization::UnitInterval,
    )
}

/// Per-knot Fisher of one randomly initialised KAN edge pair (1 input, 2
/// outputs) under two tasks drawn uniformly from `[a_lo, a_hi]` and
/// `[b_lo, b_hi]`. Returns `3·K` values: task A's Fisher per basis (summed
/// over outputs), task B's, then their product.
pub fn fisher_disjointness_native(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64, seed: u64) -> splinecl::Result<Vec<f64>> {
    let spec = ArchSpec {
        kind: ModelKind::PureKan,
        input_shape: [1, 1, 1],
        hidden: vec![],
        classes: 2,
        grid: 5,
        order: 3,
        backbone_widths: vec![],
        feature_dim: 2,
        match_params: false,
    };
    let mut rng = Rng::new(seed);
    let model = build_model(&spec, &mut rng)?;
    let k = spec.grid + spec.order;
    let per_basis = |lo: f64, hi: f64, rng: &mut Rng| -> splinecl::Result<Vec<f64>> {
        let (lo, hi) = (lo.min(hi).max(-1.0), hi.max(lo).min(1.0));
        let ds = interval_task(lo, hi, 200, rng)?;
        let f = knot_fisher(&model, &ds, &[true, true], 200)?;
        let mut out = vec![0.0; k];
        for (e, v) in f[0].data().iter().enumerate() {
            out[e % k] += v;
        }
        Ok(out)
    };
    let fa = per_basis(a_lo, a_hi, &mut rng)?;
    let fb = per_basis(b_lo, b_hi, &mut rng)?;
    let prod: Vec<f64> = fa.iter().zip(&fb).map(|(a, b)| a * b).collect();
    Ok([fa, fb, prod].concat())
}

#[wasm_bindgen]
pub fn fisher_disjointness(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    fisher_disjointness_native(a_lo, a_hi, b_lo, b_hi, seed as u64).map_err(js_err)
}

/// Anchor multiplier over within-task progress 0..1, `samples` points.
#[wasm_bindgen]
pub fn anneal_curve(rho: f64, delta: f64, samples: usize) -> Vec<f64> {
    let samples = samples.max(2);
    (0..samples)
        .map(|i| anneal_scale(rho, delta, i as f64 / (samples - 1) as f64))
        .collect()
}
