//! Parameter traces emitted by samplers: rows of `(iteration, chain or
//! particle, θ)`.

use alloc::vec::Vec;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    dim: usize,
    iterations: Vec<u64>,
    members: Vec<usize>,
    values: Vec<f64>,
}

impl Trace {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn push(&mut self, iteration: u64, member: usize, theta: &[f64]) {
        debug_assert_eq!(theta.len(), self.dim);
        self.iterations.push(iteration);
        self.members.push(member);
        self.values.extend_from_slice(theta);
    }

    /// Appends another trace, offsetting its member indices.
    pub fn extend_from(&mut self, other: &Trace, member_offset: usize) {
        self.iterations.extend_from_slice(&other.iterations);
        self.members
            .extend(other.members.iter().map(|m| m + member_offset));
        self.values.extend_from_slice(&other.values);
    }

    pub fn row(&self, k: usize) -> (u64, usize, &[f64]) {
        (
            self.iterations[k],
            self.members[k],
            &self.values[k * self.dim..(k + 1) * self.dim],
        )
    }

    pub fn rows(&self) -> impl Iterator<Item = (u64, usize, &[f64])> + '_ {
        (0..self.len()).map(move |k| self.row(k))
    }

    /// Sorts rows by `(iteration, member)`, keeping equal keys in order.
    pub fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&k| (self.iterations[k], self.members[k]));
        let mut it = Vec::with_capacity(self.len());
        let mut mem = Vec::with_capacity(self.len());
        let mut val = Vec::with_capacity(self.values.len());
        for k in order {
            it.push(self.iterations[k]);
            mem.push(self.members[k]);
            val.extend_from_slice(&self.values[k * self.dim..(k + 1) * self.dim]);
        }
        self.iterations = it;
        self.members = mem;
        self.values = val;
    }
}
