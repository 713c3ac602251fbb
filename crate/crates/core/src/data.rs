//! Paired covariates and observations: the empirical measure `P_n`.

use alloc::vec::Vec;

use crate::{Error, Result};

/// `n` observations `y_i ∈ R^d` with scalar covariates `x_i` (times).
///
/// Independent data are represented with every covariate equal to zero; the
/// kernels then reduce to the unindexed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Vec<f64>,
    observations: Vec<f64>,
    obs_dim: usize,
}

impl Dataset {
    pub fn new(covariates: Vec<f64>, observations: Vec<f64>, obs_dim: usize) -> Result<Self> {
        if obs_dim == 0 {
            return Err(Error::argument("observation dimension must be positive"));
        }
        if observations.len() != covariates.len() * obs_dim {
            return Err(Error::shape(alloc::format!(
                "{} covariates need {} observation values, got {}",
                covariates.len(),
                covariates.len() * obs_dim,
                observations.len()
            )));
        }
        if covariates.iter().chain(&observations).any(|v| !v.is_finite()) {
            return Err(Error::argument("dataset contains non-finite values"));
        }
        Ok(Self {
            covariates,
            observations,
            obs_dim,
        })
    }

    /// Independent observations, all sharing covariate `0.0`.
    pub fn iid(observations: Vec<f64>, obs_dim: usize) -> Result<Self> {
        let n = if obs_dim == 0 { 0 } else { observations.len() / obs_dim };
        Self::new(alloc::vec![0.0; n], observations, obs_dim)
    }

    pub fn empty(obs_dim: usize) -> Self {
        Self {
            covariates: Vec::new(),
            observations: Vec::new(),
            obs_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn covariate(&self, i: usize) -> f64 {
        self.covariates[i]
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    /// Row-major `n × d` observation block.
    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.covariates
            .iter()
            .copied()
            .zip(self.observations.chunks_exact(self.obs_dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_observations() {
        assert!(matches!(
            Dataset::new(alloc::vec![0.0, 1.0], alloc::vec![1.0, 2.0, 3.0], 2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn iid_uses_zero_covariates() {
        let d = Dataset::iid(alloc::vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.covariates(), &[0.0, 0.0]);
        assert_eq!(d.observation(1), &[3.0, 4.0]);
    }
}
