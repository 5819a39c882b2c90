use proptest::prelude::*;
use splinecl::cl::{anchor_penalty, combine_importance, mask_gradient, ImportanceStore, ReplayBuffer, ReplayItem};
use splinecl::data::{inverse_permutation, pixel_permutation};
use splinecl::harness::ResultMatrix;
use splinecl::layers::loss::predict;
use splinecl::layers::{build_model, ArchSpec, Checkpoint, ModelKind};
use splinecl::ntk::{cross_gram, normalized_cross_norm, JacobianBlock};
use splinecl::numerics::{Rng, Tensor};
use splinecl::spline::SplineGrid;

fn lower_triangle(t: usize, vals: &[f64]) -> Vec<Vec<f64>> {
    let mut at = 0;
    (0..t)
        .map(|s| {
            let row = vals[at..at + s + 1].to_vec();
            at += s + 1;
            row
        })
        .collect()
}

fn kan(inputs: usize, seed: u64) -> splinecl::layers::Model {
    let spec = ArchSpec {
        kind: ModelKind::PureKan,
        input_shape: [1, 1, inputs],
        hidden: vec![3],
        classes: 2,
        grid: 5,
        order: 3,
        backbone_widths: vec![],
        feature_dim: 2,
        match_params: false,
    };
    build_model(&spec, &mut Rng::new(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn basis_is_a_partition_of_unity(g in 1usize..16, d in 0usize..5, x in -1.0f64..1.0) {
        let grid = SplineGrid::uniform(g, d).unwrap();
        let b = grid.basis_eval(x);
        prop_assert_eq!(b.len(), g + d);
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(b.iter().all(|&v| v >= 0.0));
        prop_assert!(b.iter().filter(|&&v| v != 0.0).count() <= d + 1);
    }

    #[test]
    fn fgt_nonnegative_acc_in_unit_interval(t in 1usize..8, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let vals: Vec<f64> = (0..t * (t + 1) / 2).map(|_| rng.uniform()).collect();
        let r = ResultMatrix::from_rows(t, lower_triangle(t, &vals)).unwrap();
        let (acc, fgt) = (r.acc().unwrap(), r.fgt().unwrap());
        prop_assert!((0.0..=1.0).contains(&acc));
        prop_assert!(fgt >= 0.0);
    }

    #[test]
    fn no_forgetting_when_columns_never_drop(t in 2usize..7, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for s in 0..t {
            let mut row: Vec<f64> = (0..s).map(|c| (rows[s - 1][c] + 0.1 * rng.uniform()).min(1.0)).collect();
            row.push(rng.uniform());
            rows.push(row);
        }
        let r = ResultMatrix::from_rows(t, rows).unwrap();
        prop_assert_eq!(r.fgt().unwrap(), 0.0);
    }

    #[test]
    fn masking_never_grows_a_gradient(vals in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 1..30), beta in 0.0f64..10.0) {
        let g0 = Tensor::new(vec![vals.len()], vals.iter().map(|v| v.0).collect()).unwrap();
        let s = Tensor::new(vec![vals.len()], vals.iter().map(|v| v.1).collect()).unwrap();
        let mut g = g0.clone();
        mask_gradient(&mut g, &s, beta).unwrap();
        for (a, b) in g.data().iter().zip(g0.data()) {
            prop_assert!(a.abs() <= b.abs());
            prop_assert!(a * b >= 0.0);
        }
    }

    #[test]
    fn anchor_is_zero_at_snapshot_and_nonnegative(seed in any::<u64>(), shift in -1.0f64..1.0) {
        let m = kan(2, seed);
        let mut store = ImportanceStore::new(&m).unwrap();
        let mut rng = Rng::new(seed ^ 1);
        let s: Vec<Tensor> = store.layers.iter().map(|l| Tensor::from_fn(l.s.shape(), |_| rng.uniform())).collect();
        store.accumulate_and_snapshot(&s, &m).unwrap();
        let mut grads: Vec<Tensor> = m.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        prop_assert_eq!(anchor_penalty(&m, &store, 500.0, true, &mut grads).unwrap(), 0.0);
        store.layers[0].c_star.data_mut()[0] += shift;
        let v = anchor_penalty(&m, &store, 500.0, false, &mut grads).unwrap();
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn importance_is_monotone(seed in any::<u64>(), rounds in 1usize..5) {
        let m = kan(2, seed);
        let mut store = ImportanceStore::new(&m).unwrap();
        let mut rng = Rng::new(seed);
        let mut prev: Vec<Tensor> = store.layers.iter().map(|l| l.s.clone()).collect();
        for _ in 0..rounds {
            let s: Vec<Tensor> = store
                .layers
                .iter()
                .map(|l| {
                    let f = Tensor::from_fn(l.s.shape(), |_| rng.uniform());
                    let a = Tensor::from_fn(&l.s.shape()[1..], |_| rng.uniform());
                    combine_importance(&f, &a, 1.0, 0.5).unwrap()
                })
                .collect();
            store.accumulate_and_snapshot(&s, &m).unwrap();
            for (p, l) in prev.iter().zip(&store.layers) {
                prop_assert!(p.data().iter().zip(l.s.data()).all(|(a, b)| b >= a));
            }
            prev = store.layers.iter().map(|l| l.s.clone()).collect();
        }
    }

    #[test]
    fn reservoir_never_exceeds_capacity(cap in 0usize..20, n in 0usize..100, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let mut b = ReplayBuffer::new(cap);
        for i in 0..n {
            b.insert(ReplayItem { input: vec![i as f64], label: 0, task: 0 }, &mut rng);
        }
        prop_assert_eq!(b.len(), cap.min(n));
        prop_assert_eq!(b.seen(), n as u64);
    }

    #[test]
    fn task_il_prediction_ignores_masked_logits(seed in any::<u64>(), noise in -100.0f64..100.0) {
        let mut rng = Rng::new(seed);
        let logits = Tensor::from_fn(&[6, 10], |_| rng.normal());
        let mask: Vec<bool> = (0..10).map(|c| c == 3 || c == 7).collect();
        let masks = vec![mask.as_slice(); 6];
        let mut perturbed = logits.clone();
        for (i, v) in perturbed.data_mut().iter_mut().enumerate() {
            if !mask[i % 10] {
                *v += noise * (1 + i % 3) as f64;
            }
        }
        prop_assert_eq!(predict(&logits, &masks).unwrap(), predict(&perturbed, &masks).unwrap());
    }

    #[test]
    fn permutation_inverse_round_trips(f in 1usize..300, seed in any::<u64>()) {
        let p = pixel_permutation(f, Some(seed));
        let inv = inverse_permutation(&p);
        prop_assert!((0..f).all(|i| inv[p[i]] == i));
    }

    #[test]
    fn normalized_cross_norm_bounded(n1 in 1usize..6, n2 in 1usize..6, p in 1usize..12, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let j1 = JacobianBlock { samples: n1, outputs: 1, j: Tensor::from_fn(&[n1, p], |_| rng.normal()) };
        let j2 = JacobianBlock { samples: n2, outputs: 1, j: Tensor::from_fn(&[n2, p], |_| rng.normal()) };
        let cn = normalized_cross_norm(
            &cross_gram(&j1, &j2).unwrap(),
            &cross_gram(&j1, &j1).unwrap(),
            &cross_gram(&j2, &j2).unwrap(),
        ).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&cn.k_tilde));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), echo in "[a-z =.\n]{0,40}") {
        let m = kan(3, seed);
        let mut ck = Checkpoint::from_model(&m, echo.clone());
        let mut rng = Rng::new(seed);
        let s = Tensor::from_fn(&[2, 3], |_| rng.uniform());
        let key = "head.kan0.coeffs".to_string();
        ck.insert_prefixed("kancl.S.", [(&key, &s)]);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(&back, &ck);
        let mut fresh = kan(3, seed.wrapping_add(1));
        back.restore_model(&mut fresh).unwrap();
        prop_assert_eq!(fresh.params(), m.params());
    }
}
