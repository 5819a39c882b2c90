use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayItem {
    pub input: Vec<f64>,
    pub label: usize,
    pub task: usize,
}

/// Fixed-capacity reservoir: after `n` insertions every inserted example is
/// retained with probability `capacity / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<ReplayItem>,
    seen: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[ReplayItem] {
        &self.items
    }

    pub fn insert(&mut self, item: ReplayItem, rng: &mut Rng) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else if self.capacity > 0 {
            let j = (rng.next_u64() % self.seen) as usize;
            if j < self.capacity {
                self.items[j] = item;
            }
        }
    }

    /// `n` distinct stored items, uniformly at random.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<&ReplayItem>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        if self.items.is_empty() {
            return Err(Error::Empty("cannot sample from an empty replay buffer".into()));
        }
        if n > self.items.len() {
            return Err(Error::OutOfRange {
                index: n,
                len: self.items.len(),
            });
        }
        // Partial Fisher–Yates over an index vector.
        let mut idx: Vec<usize> = (0..self.items.len()).collect();
        for i in 0..n {
            let j = i + rng.below(idx.len() - i);
            idx.swap(i, j);
        }
        Ok(idx[..n].iter().map(|&i| &self.items[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(i: usize) -> ReplayItem {
        ReplayItem {
            input: vec![i as f64],
            label: i % 3,
            task: 0,
        }
    }

    #[test]
    fn large_capacity_keeps_everything() {
        let mut rng = Rng::new(0);
        let mut b = ReplayBuffer::new(50);
        for i in 0..20 {
            b.insert(item(i), &mut rng);
        }
        assert_eq!(b.len(), 20);
        assert_eq!(b.items()[7], item(7));
        assert!(b.sample(0, &mut rng).unwrap().is_empty());
        let s = b.sample(20, &mut rng).unwrap();
        let mut seen: Vec<usize> = s.iter().map(|x| x.input[0] as usize).collect();
        seen.sort();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn empty_buffer_cannot_be_sampled() {
        assert!(ReplayBuffer::new(4).sample(1, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn capacity_one_retains_uniformly() {
        // Chi-square over 10⁵ trials, 10 stream positions, 9 dof: the 0.999
        // quantile is 27.88.
        let n = 10;
        let trials = 100_000;
        let mut rng = Rng::new(11);
        let mut counts = vec![0usize; n];
        for _ in 0..trials {
            let mut b = ReplayBuffer::new(1);
            for i in 0..n {
                b.insert(item(i), &mut rng);
            }
            counts[b.items()[0].input[0] as usize] += 1;
        }
        let expect = trials as f64 / n as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 27.88, "{chi2} {counts:?}");
    }
}
