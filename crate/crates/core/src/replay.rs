//! Fixed-budget episodic memory maintained by reservoir sampling.
//!
//! Every sample offered to the buffer ends up stored with probability
//! `budget / seen`, independent of when it arrived, so the buffer tracks
//! the distribution of the whole stream without any notion of tasks.

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::nn::Batch;
use crate::seeding::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    budget: usize,
    input_dim: usize,
    /// Row-major `[len, input_dim]`.
    inputs: Vec<f64>,
    labels: Vec<usize>,
    seen: u64,
    rng: Rng,
}

impl ReplayBuffer {
    pub fn new(budget: usize, input_dim: usize, rng: Rng) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidConfig("replay budget must be positive".into()));
        }
        Ok(Self {
            budget,
            input_dim,
            inputs: Vec::with_capacity(budget * input_dim),
            labels: Vec::with_capacity(budget),
            seen: 0,
            rng,
        })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of samples ever offered.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn offer(&mut self, input: ArrayView1<'_, f64>, label: usize) -> Result<()> {
        ensure_dim("replay input", self.input_dim, input.len())?;
        let draw = if (self.seen as usize) < self.budget {
            self.seen
        } else {
            // uniform over the seen + 1 positions, this sample included
            self.rng.random_range(0..=self.seen)
        };
        self.place(input, label, draw);
        Ok(())
    }

    /// Applies one reservoir decision with an externally supplied draw.
    fn place(&mut self, input: ArrayView1<'_, f64>, label: usize, draw: u64) {
        if (self.seen as usize) < self.budget {
            self.inputs.extend(input.iter());
            self.labels.push(label);
        } else if (draw as usize) < self.budget {
            let slot = draw as usize;
            self.inputs[slot * self.input_dim..(slot + 1) * self.input_dim]
                .iter_mut()
                .zip(input.iter())
                .for_each(|(d, &s)| *d = s);
            self.labels[slot] = label;
        }
        self.seen += 1;
    }

    /// Offers every row of `batch` in order.
    pub fn offer_batch(&mut self, batch: &Batch) -> Result<()> {
        ensure_dim("replay input", self.input_dim, batch.input_dim())?;
        for (row, &label) in batch.inputs.rows().into_iter().zip(&batch.labels) {
            self.offer(row, label)?;
        }
        Ok(())
    }

    /// Draws `k` stored exemplars uniformly: without replacement when the
    /// buffer holds at least `k` items, with replacement otherwise. An empty
    /// buffer yields an empty batch.
    pub fn sample_batch(&mut self, k: usize) -> Batch {
        let size = self.len();
        if size == 0 || k == 0 {
            return Batch::empty(self.input_dim);
        }
        let picks: Vec<usize> = if size >= k {
            rand::seq::index::sample(&mut self.rng, size, k).into_vec()
        } else {
            (0..k).map(|_| self.rng.random_range(0..size)).collect()
        };
        let mut inputs = Array2::zeros((k, self.input_dim));
        for (mut row, &i) in inputs.rows_mut().into_iter().zip(&picks) {
            row.iter_mut().zip(self.input(i)).for_each(|(d, &s)| *d = s);
        }
        let labels = picks.iter().map(|&i| self.labels[i]).collect();
        Batch { inputs, labels }
    }

    pub fn class_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                h[l] += 1;
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use ndarray::arr1;

    fn buf(budget: usize, seed: u64) -> ReplayBuffer {
        ReplayBuffer::new(budget, 1, seeding::rng(seed, &[])).unwrap()
    }

    fn offer_scalar(b: &mut ReplayBuffer, v: f64) {
        b.offer(arr1(&[v]).view(), v as usize).unwrap();
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(ReplayBuffer::new(0, 3, seeding::rng(0, &[])).is_err());
    }

    #[test]
    fn not_full_branch_appends_at_seen_index() {
        let mut b = buf(5, 0);
        for v in 0..3 {
            offer_scalar(&mut b, v as f64);
        }
        offer_scalar(&mut b, 9.0);
        assert_eq!(b.input(3), &[9.0]);
        assert_eq!(b.seen(), 4);
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn out_of_budget_draw_leaves_buffer_unchanged() {
        let mut b = buf(5, 0);
        for v in 0..5 {
            offer_scalar(&mut b, v as f64);
        }
        let before = b.labels().to_vec();
        b.place(arr1(&[42.0]).view(), 42, 7);
        assert_eq!(b.labels(), &before[..]);
        assert_eq!(b.seen(), 6);
        b.place(arr1(&[42.0]).view(), 42, 2);
        assert_eq!(b.labels()[2], 42);
        assert_eq!(b.seen(), 7);
    }

    #[test]
    fn single_item_sampled_with_replacement() {
        let mut b = buf(5, 1);
        offer_scalar(&mut b, 3.0);
        let s = b.sample_batch(3);
        assert_eq!(s.labels, vec![3, 3, 3]);
        assert_eq!(s.inputs.column(0).to_vec(), vec![3.0; 3]);
    }

    #[test]
    fn empty_buffer_gives_empty_batch() {
        let mut b = buf(5, 1);
        assert!(b.sample_batch(4).is_empty());
    }

    #[test]
    fn sampling_deterministic_given_state() {
        let mut a = buf(50, 4);
        for v in 0..200 {
            offer_scalar(&mut a, v as f64);
        }
        let mut b = a.clone();
        assert_eq!(a.sample_batch(10), b.sample_batch(10));
    }

    #[test]
    fn full_size_sample_has_no_duplicates() {
        let mut b = buf(20, 4);
        for v in 0..100 {
            offer_scalar(&mut b, v as f64);
        }
        let mut labels = b.sample_batch(20).labels;
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 20);
    }

    #[test]
    fn batch_into_empty_buffer_kept_in_order() {
        let mut b = ReplayBuffer::new(4, 2, seeding::rng(0, &[])).unwrap();
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (10 * i + j) as f64);
        let batch = Batch::new(x.clone(), vec![0, 1, 2, 3]).unwrap();
        b.offer_batch(&batch).unwrap();
        assert_eq!(b.labels(), &[0, 1, 2, 3]);
        for i in 0..4 {
            assert_eq!(b.input(i), x.row(i).as_slice().unwrap());
        }
        let before = b.clone();
        b.offer_batch(&Batch::empty(2)).unwrap();
        assert_eq!(b, before);
    }

    #[test]
    fn offer_batch_equals_elementwise_offers() {
        let mut a = buf(8, 77);
        let mut b = buf(8, 77);
        for chunk in 0..10 {
            let x = Array2::from_shape_fn((7, 1), |(i, _)| (chunk * 7 + i) as f64);
            let labels = (0..7).map(|i| chunk * 7 + i).collect();
            let batch = Batch::new(x, labels).unwrap();
            a.offer_batch(&batch).unwrap();
            for r in 0..7 {
                b.offer(batch.inputs.row(r), batch.labels[r]).unwrap();
            }
        }
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_width_rejected() {
        let mut b = buf(3, 0);
        assert!(b.offer(arr1(&[1.0, 2.0]).view(), 0).is_err());
    }
}
