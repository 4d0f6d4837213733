use rand::Rng;

use crate::error::{Error, Result};

/// How the bootstrap value of the next state is formed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextSelection {
    /// Greedy joint action under the target network for these requested FoVs.
    GreedyMax { fovs: Vec<usize> },
    /// Sum of the target network's values at these output indices.
    Given(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    /// Output heads chosen by the action; the joint value is their sum.
    pub selected: Vec<usize>,
    pub reward: T,
    pub next_state: Vec<T>,
    pub next: NextSelection,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<X> {
    capacity: usize,
    items: Vec<X>,
    cursor: usize,
}

impl<X> ReplayBuffer<X> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
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

    /// Stores `item`, overwriting the oldest entry once full.
    pub fn push(&mut self, item: X) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> Option<&X> {
        self.items.get(index)
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.len() < count || self.items.is_empty() {
            return Err(Error::InsufficientData(format!(
                "{} stored transitions, batch of {count} requested",
                self.items.len()
            )));
        }
        Ok((0..count).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<&X>> {
        Ok(self
            .sample_indices(count, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.len(), 3);
        let mut stored: Vec<i32> = (0..3).map(|i| *b.get(i).unwrap()).collect();
        stored.sort();
        assert_eq!(stored, vec![2, 3, 4]);
        assert!(ReplayBuffer::<u8>::new(0).is_err());
    }

    #[test]
    fn insufficient_data() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(1);
        assert!(b.sample(2, &mut rng::stream(1, "r")).is_err());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(20).unwrap();
        for i in 0..20 {
            b.push(i);
        }
        let mut counts = [0usize; 20];
        let draws = 100_000;
        let mut r = rng::stream(2, rng::REPLAY);
        for _ in 0..draws / 10 {
            for i in b.sample_indices(10, &mut r).unwrap() {
                counts[i] += 1;
            }
        }
        let p = 1.0 / 20.0;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "count {c}");
        }
    }

    proptest! {
        #[test]
        fn size_never_exceeds_capacity(cap in 1usize..50, pushes in 0usize..200) {
            let mut b = ReplayBuffer::new(cap).unwrap();
            for i in 0..pushes {
                b.push(i);
                prop_assert!(b.len() <= cap);
            }
            prop_assert_eq!(b.len(), pushes.min(cap));
        }
    }
}
