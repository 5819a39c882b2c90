use splinecl::data::{Dataset, Normalization};
use splinecl::harness::{
    build_stream_from, run_stream, Benchmark, Method, MethodParams, RunOutput, StreamOptions, TaskStream, TrainParams,
};
use splinecl::layers::{ArchSpec, ModelKind};
use splinecl::numerics::{Rng, Tensor};

const SIDE: usize = 8;

fn blobs(n: usize, seed: u64) -> Dataset {
    let f = SIDE * SIDE;
    let mut centers = Rng::new(99);
    let means: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..f).map(|_| centers.uniform_in(-0.6, 0.6)).collect())
        .collect();
    let mut rng = Rng::new(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
    let images = Tensor::from_fn(&[n, f], |i| {
        (means[labels[i / f]][i % f] + 0.3 * rng.normal()).clamp(-1.0, 1.0)
    });
    Dataset::new(
        "blobs",
        images,
        labels,
        [1, SIDE, SIDE],
        10,
        Normalization::UnitInterval,
    )
    .unwrap()
}

fn stream(tasks: usize) -> TaskStream {
    let opts = StreamOptions {
        tasks: Some(tasks),
        ..Default::default()
    };
    build_stream_from(Benchmark::SplitMnist5t, &blobs(300, 1), &blobs(100, 2), &opts, 7).unwrap()
}

fn arch(kind: ModelKind) -> ArchSpec {
    ArchSpec {
        kind,
        input_shape: [1, SIDE, SIDE],
        hidden: vec![6],
        classes: 10,
        grid: 5,
        order: 3,
        backbone_widths: vec![4],
        feature_dim: 8,
        match_params: false,
    }
}

fn run(kind: ModelKind, method: Method, params: MethodParams, s: &TaskStream) -> RunOutput {
    let train = TrainParams {
        lr: 1e-2,
        batch: 16,
        epochs: 2,
    };
    run_stream(&arch(kind), s, method, params, train, 3).unwrap()
}

fn same_trajectory(a: &RunOutput, b: &RunOutput) {
    assert_eq!(a.steps.len(), b.steps.len());
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!(x.ce.to_bits(), y.ce.to_bits(), "step {}", x.step);
    }
    assert_eq!(a.r.to_csv(), b.r.to_csv());
    assert_eq!(a.learner.model.params(), b.learner.model.params());
}

#[test]
fn zero_anchor_and_mask_matches_finetune() {
    let s = stream(5);
    let off = MethodParams {
        lambda: 0.0,
        beta: 0.0,
        ..Default::default()
    };
    let a = run(ModelKind::PureKan, Method::KanCl, off, &s);
    let b = run(ModelKind::PureKan, Method::Finetune, MethodParams::default(), &s);
    same_trajectory(&a, &b);
    assert!(a.steps.iter().all(|r| r.anchor == 0.0));
}

#[test]
fn zero_backbone_weight_matches_head_only() {
    let s = stream(5);
    let off = MethodParams {
        lambda_b: 0.0,
        ..Default::default()
    };
    let a = run(ModelKind::CnnKan, Method::KanClBbewc, off, &s);
    let b = run(ModelKind::CnnKan, Method::KanCl, MethodParams::default(), &s);
    same_trajectory(&a, &b);
}

#[test]
fn zero_anneal_matches_replay_only() {
    let s = stream(5);
    let off = MethodParams {
        rho: 0.0,
        buffer: 50,
        ..Default::default()
    };
    let a = run(ModelKind::PureKan, Method::KanClReplay, off.clone(), &s);
    let b = run(ModelKind::PureKan, Method::Replay, off, &s);
    same_trajectory(&a, &b);
    assert!(a.steps.iter().all(|r| r.anchor == 0.0));
}

#[test]
fn first_task_of_kan_cl_is_plain_training() {
    let s = stream(1);
    let a = run(ModelKind::PureKan, Method::KanCl, MethodParams::default(), &s);
    let b = run(ModelKind::PureKan, Method::Finetune, MethodParams::default(), &s);
    same_trajectory(&a, &b);
}

#[test]
fn reruns_are_bit_identical() {
    let s = stream(2);
    for m in [Method::KanClBbewc, Method::Ewc, Method::Si, Method::KanClReplay] {
        let a = run(
            ModelKind::CnnKan,
            m,
            MethodParams {
                buffer: 40,
                ..Default::default()
            },
            &s,
        );
        let b = run(
            ModelKind::CnnKan,
            m,
            MethodParams {
                buffer: 40,
                ..Default::default()
            },
            &s,
        );
        same_trajectory(&a, &b);
    }
}

#[test]
fn regularizers_engage_after_first_task() {
    let s = stream(2);
    let a = run(ModelKind::CnnKan, Method::KanClBbewc, MethodParams::default(), &s);
    let first = a.steps.iter().filter(|r| r.task == 0);
    assert!(first.clone().all(|r| r.anchor == 0.0 && r.bb == 0.0));
    let second: Vec<_> = a.steps.iter().filter(|r| r.task == 1).collect();
    assert!(second.iter().any(|r| r.anchor > 0.0));
    assert!(second.iter().any(|r| r.bb > 0.0));
}

#[test]
fn mlp_bbewc_rejects_kan_head() {
    let s = stream(1);
    let train = TrainParams::default();
    assert!(run_stream(
        &arch(ModelKind::CnnKan),
        &s,
        Method::MlpBbewc,
        MethodParams::default(),
        train.clone(),
        0
    )
    .is_err());
    assert!(run_stream(
        &arch(ModelKind::PureMlp),
        &s,
        Method::MlpBbewc,
        MethodParams::default(),
        train,
        0
    )
    .is_err());
}
