use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    filter_classes, load_cifar_split, load_mnist, permute_pixels, pixel_permutation, rotate_images, CifarVariant,
    Dataset, Interpolation,
};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    SplitMnist5t,
    PermutedMnist10t,
    RotationMnist10t,
    SplitCifar10_5t,
    SplitCifar100_10t,
    /// Reduced CIFAR-10 run: classes 0–3 in two pinned tasks.
    SplitCifar10_2t,
}

impl Benchmark {
    pub const ALL: [Benchmark; 6] = [
        Self::SplitMnist5t,
        Self::PermutedMnist10t,
        Self::RotationMnist10t,
        Self::SplitCifar10_5t,
        Self::SplitCifar100_10t,
        Self::SplitCifar10_2t,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SplitMnist5t => "split_mnist_5t",
            Self::PermutedMnist10t => "permuted_mnist_10t",
            Self::RotationMnist10t => "rotation_mnist_10t",
            Self::SplitCifar10_5t => "split_cifar10_5t",
            Self::SplitCifar100_10t => "split_cifar100_10t",
            Self::SplitCifar10_2t => "split_cifar10_2t",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark `{s}`")))
    }

    pub fn default_tasks(self) -> usize {
        match self {
            Self::SplitMnist5t | Self::SplitCifar10_5t => 5,
            Self::PermutedMnist10t | Self::RotationMnist10t | Self::SplitCifar100_10t => 10,
            Self::SplitCifar10_2t => 2,
        }
    }

    pub fn is_cifar(self) -> bool {
        matches!(
            self,
            Self::SplitCifar10_5t | Self::SplitCifar100_10t | Self::SplitCifar10_2t
        )
    }

    /// Train and test splits from the local cache.
    pub fn load(self, root: &Path) -> Result<(Dataset, Dataset)> {
        match self {
            Self::SplitCifar100_10t => load_cifar_split(root, CifarVariant::C100),
            Self::SplitCifar10_5t | Self::SplitCifar10_2t => load_cifar_split(root, CifarVariant::C10),
            _ => Ok((load_mnist(root, true)?, load_mnist(root, false)?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    TaskIl,
    ClassIl,
    DomainIl,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Self::TaskIl => "task_il",
            Self::ClassIl => "class_il",
            Self::DomainIl => "domain_il",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Self::TaskIl, Self::ClassIl, Self::DomainIl]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Transform {
    Identity,
    Permutation { seed: Option<u64> },
    Rotation { degrees: f64 },
}

#[derive(Clone, Debug)]
pub struct Task {
    pub id: usize,
    pub train: Dataset,
    pub test: Dataset,
    /// Original class labels of this task.
    pub classes: Vec<usize>,
    /// Output units used while training/evaluating this task.
    pub mask: Vec<bool>,
    pub transform: Transform,
}

#[derive(Clone, Debug)]
pub struct TaskStream {
    pub benchmark: Benchmark,
    pub protocol: Protocol,
    pub tasks: Vec<Task>,
    /// Width of the shared output layer.
    pub output_classes: usize,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.tasks[0].train.image_shape
    }

    /// Mask applied to task `t` under the stream's protocol.
    pub fn mask(&self, t: usize) -> &[bool] {
        &self.tasks[t].mask
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamOptions {
    pub tasks: Option<usize>,
    pub train_per_task: Option<usize>,
    pub test_per_task: Option<usize>,
    /// Keep classes in label order instead of a seeded shuffle.
    pub pin_classes: bool,
    pub protocol: Protocol,
    pub interpolation: Interpolation,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            tasks: None,
            train_per_task: None,
            test_per_task: None,
            pin_classes: false,
            protocol: Protocol::TaskIl,
            interpolation: Interpolation::Bilinear,
        }
    }
}

fn cap(ds: Dataset, n: Option<usize>) -> Result<Dataset> {
    match n {
        Some(n) if n < ds.len() => ds.take(n),
        _ => Ok(ds),
    }
}

/// Loads the benchmark's datasets from `root` and builds the stream.
pub fn build_stream(benchmark: Benchmark, root: &Path, opts: &StreamOptions, seed: u64) -> Result<TaskStream> {
    let (train, test) = benchmark.load(root)?;
    build_stream_from(benchmark, &train, &test, opts, seed)
}

/// Builds a stream from already loaded train/test datasets.
pub fn build_stream_from(
    benchmark: Benchmark,
    train: &Dataset,
    test: &Dataset,
    opts: &StreamOptions,
    seed: u64,
) -> Result<TaskStream> {
    let t_count = opts.tasks.unwrap_or_else(|| benchmark.default_tasks());
    if t_count == 0 {
        return Err(Error::Config("a stream needs at least one task".into()));
    }
    let mut rng = Rng::new(seed).fork(0x57_12ea);
    let mut tasks = Vec::with_capacity(t_count);
    let split = !matches!(benchmark, Benchmark::PermutedMnist10t | Benchmark::RotationMnist10t);
    let output_classes;
    if split {
        let pool: Vec<usize> = if benchmark == Benchmark::SplitCifar10_2t {
            (0..4).collect()
        } else {
            (0..train.classes).collect()
        };
        if !pool.len().is_multiple_of(t_count) {
            return Err(Error::Config(format!(
                "{} classes cannot be split evenly into {t_count} tasks",
                pool.len()
            )));
        }
        let mut order = pool.clone();
        if !opts.pin_classes && benchmark != Benchmark::SplitCifar10_2t {
            rng.shuffle(&mut order);
        }
        let per = pool.len() / t_count;
        output_classes = if opts.protocol == Protocol::DomainIl {
            per
        } else {
            train.classes
        };
        for (id, group) in order.chunks(per).enumerate() {
            let remap = opts.protocol == Protocol::DomainIl;
            let tr = cap(filter_classes(train, group, remap)?, opts.train_per_task)?;
            let te = cap(filter_classes(test, group, remap)?, opts.test_per_task)?;
            let mask = match opts.protocol {
                Protocol::TaskIl => (0..output_classes).map(|c| group.contains(&c)).collect(),
                Protocol::ClassIl | Protocol::DomainIl => vec![true; output_classes],
            };
            tasks.push(Task {
                id,
                train: tr,
                test: te,
                classes: group.to_vec(),
                mask,
                transform: Transform::Identity,
            });
        }
    } else {
        output_classes = train.classes;
        let base_train = cap(train.clone(), opts.train_per_task)?;
        let base_test = cap(test.clone(), opts.test_per_task)?;
        for id in 0..t_count {
            let (tr, te, transform) = if benchmark == Benchmark::PermutedMnist10t {
                let pseed = (id > 0).then(|| rng.next_u64());
                let perm = pixel_permutation(train.features(), pseed);
                (
                    permute_pixels(&base_train, &perm)?,
                    permute_pixels(&base_test, &perm)?,
                    Transform::Permutation { seed: pseed },
                )
            } else {
                let degrees = id as f64 * 180.0 / t_count as f64;
                (
                    rotate_images(&base_train, degrees, opts.interpolation)?,
                    rotate_images(&base_test, degrees, opts.interpolation)?,
                    Transform::Rotation { degrees },
                )
            };
            tasks.push(Task {
                id,
                train: tr,
                test: te,
                classes: (0..output_classes).collect(),
                mask: vec![true; output_classes],
                transform,
            });
        }
    }
    Ok(TaskStream {
        benchmark,
        protocol: opts.protocol,
        tasks,
        output_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Normalization;
    use crate::numerics::Tensor;

    fn fake(classes: usize, per_class: usize) -> Dataset {
        let n = classes * per_class;
        let mut rng = Rng::new(5);
        Dataset::new(
            "fake",
            Tensor::from_fn(&[n, 16], |_| rng.uniform_in(-1.0, 1.0)),
            (0..n).map(|i| i % classes).collect(),
            [1, 4, 4],
            classes,
            Normalization::UnitInterval,
        )
        .unwrap()
    }

    #[test]
    fn split_mnist_five_disjoint_pairs() {
        let d = fake(10, 6);
        let s = build_stream_from(Benchmark::SplitMnist5t, &d, &d, &StreamOptions::default(), 1).unwrap();
        assert_eq!(s.len(), 5);
        let mut all: Vec<usize> = s.tasks.iter().flat_map(|t| t.classes.clone()).collect();
        assert!(s.tasks.iter().all(|t| t.classes.len() == 2));
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        for t in &s.tasks {
            assert!(t.train.labels.iter().all(|l| t.classes.contains(l)));
            assert_eq!(t.mask.iter().filter(|&&m| m).count(), 2);
        }
        let other = build_stream_from(Benchmark::SplitMnist5t, &d, &d, &StreamOptions::default(), 2).unwrap();
        assert_ne!(
            s.tasks.iter().map(|t| t.classes.clone()).collect::<Vec<_>>(),
            other.tasks.iter().map(|t| t.classes.clone()).collect::<Vec<_>>()
        );
        let pinned = StreamOptions {
            pin_classes: true,
            ..Default::default()
        };
        let p = build_stream_from(Benchmark::SplitMnist5t, &d, &d, &pinned, 2).unwrap();
        assert_eq!(p.tasks[0].classes, vec![0, 1]);
    }

    #[test]
    fn split_cifar100_ten_by_ten() {
        let d = fake(100, 1);
        let s = build_stream_from(Benchmark::SplitCifar100_10t, &d, &d, &StreamOptions::default(), 0).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.tasks.iter().all(|t| t.classes.len() == 10));
    }

    #[test]
    fn uneven_split_is_rejected() {
        let d = fake(10, 2);
        let opts = StreamOptions {
            tasks: Some(3),
            ..Default::default()
        };
        assert!(build_stream_from(Benchmark::SplitMnist5t, &d, &d, &opts, 0).is_err());
    }

    #[test]
    fn permuted_first_task_is_identity() {
        let d = fake(10, 2);
        let s = build_stream_from(Benchmark::PermutedMnist10t, &d, &d, &StreamOptions::default(), 3).unwrap();
        assert_eq!(s.tasks[0].train.images, d.images);
        assert_ne!(s.tasks[1].train.images, d.images);
        assert_eq!(s.tasks[0].transform, Transform::Permutation { seed: None });
    }

    #[test]
    fn rotation_angles_evenly_spaced() {
        let d = fake(10, 1);
        let s = build_stream_from(Benchmark::RotationMnist10t, &d, &d, &StreamOptions::default(), 3).unwrap();
        for (t, task) in s.tasks.iter().enumerate() {
            assert_eq!(
                task.transform,
                Transform::Rotation {
                    degrees: t as f64 * 18.0
                }
            );
        }
    }
}
