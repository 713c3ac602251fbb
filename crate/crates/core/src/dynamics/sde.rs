//! Additive-noise SDEs `du = f(x, u) dx + ε ∘ dW`.

use alloc::vec;
use alloc::vec::Vec;

use super::{OdeSystem, Trajectory};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeScheme {
    /// Reversible Heun: strong order ½ in general, order 1 for additive
    /// noise, and a second-order deterministic part.
    ReversibleHeun,
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeSystem<S> {
    pub drift: S,
    pub rates: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub scheme: SdeScheme,
}

impl<S: OdeSystem> SdeSystem<S> {
    pub fn new(drift: S, rates: Vec<f64>, diffusion: Vec<f64>, scheme: SdeScheme) -> Result<Self> {
        if diffusion.len() != drift.state_dim() {
            return Err(Error::shape("one diffusion constant per state component is required"));
        }
        if diffusion.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::argument("diffusion constants must be nonnegative"));
        }
        if rates.len() != drift.rate_dim() {
            return Err(Error::argument("rate vector length differs from system"));
        }
        Ok(Self {
            drift,
            rates,
            diffusion,
            scheme,
        })
    }
}

/// Simulates one path on the grid `k · step`, `k = 0..=K`, `K = ⌈horizon/step⌉`.
pub fn simulate_sde<S: OdeSystem>(sys: &SdeSystem<S>, step: f64, horizon: f64, seed: u64) -> Result<Trajectory> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::argument("SDE step must be positive"));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::argument("SDE horizon must be nonnegative"));
    }
    let d = sys.drift.state_dim();
    let steps = libm::ceil(horizon / step - 1e-9).max(0.0) as usize;
    let sqrt_h = libm::sqrt(step);
    let mut rng = rng::stream(seed, 0);

    let mut y = sys.drift.initial_state().to_vec();
    let mut z = y.clone();
    let mut fz = vec![0.0; d];
    let mut fz_new = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * d);
    times.push(0.0);
    states.extend_from_slice(&y);

    sys.drift.rhs(0.0, &z, &sys.rates, &mut fz);
    for k in 0..steps {
        let x = k as f64 * step;
        rng::fill_standard_normal(&mut rng, &mut dw);
        for (w, e) in dw.iter_mut().zip(&sys.diffusion) {
            *w *= sqrt_h * e;
        }
        match sys.scheme {
            SdeScheme::EulerMaruyama => {
                sys.drift.rhs(x, &y, &sys.rates, &mut fz);
                for i in 0..d {
                    y[i] += fz[i] * step + dw[i];
                }
            }
            SdeScheme::ReversibleHeun => {
                for i in 0..d {
                    z[i] = 2.0 * y[i] - z[i] + fz[i] * step + dw[i];
                }
                sys.drift.rhs(x + step, &z, &sys.rates, &mut fz_new);
                for i in 0..d {
                    y[i] += 0.5 * (fz[i] + fz_new[i]) * step + dw[i];
                }
                core::mem::swap(&mut fz, &mut fz_new);
            }
        }
        let x_next = (k + 1) as f64 * step;
        if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure { x: x_next });
        }
        times.push(x_next);
        states.extend_from_slice(&y);
    }
    Ok(Trajectory::new(times, d, 0, states, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;

    impl OdeSystem for Decay {
        fn state_dim(&self) -> usize {
            1
        }
        fn rate_dim(&self) -> usize {
            0
        }
        fn initial_state(&self) -> &[f64] {
            &[0.0]
        }
        fn rhs(&self, _x: f64, u: &[f64], _r: &[f64], du: &mut [f64]) {
            du[0] = -u[0];
        }
        fn state_jacobian(&self, _: f64, _: &[f64], _: &[f64], jac: &mut [f64]) {
            jac[0] = -1.0;
        }
        fn rate_jacobian(&self, _: f64, _: &[f64], _: &[f64], _: &mut [f64]) {}
    }

    fn terminal_variance(scheme: SdeScheme, paths: u64) -> f64 {
        let sys = SdeSystem::new(Decay, vec![], vec![1.0], scheme).unwrap();
        let ends: Vec<f64> = (0..paths)
            .map(|s| {
                let tr = simulate_sde(&sys, 0.01, 1.0, rng::derive_seed(1, s)).unwrap();
                tr.state(tr.len() - 1)[0]
            })
            .collect();
        let m = ends.iter().sum::<f64>() / ends.len() as f64;
        ends.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (ends.len() - 1) as f64
    }

    #[test]
    fn ornstein_uhlenbeck_terminal_variance() {
        let exact = 0.5 * (1.0 - libm::exp(-2.0));
        for scheme in [SdeScheme::ReversibleHeun, SdeScheme::EulerMaruyama] {
            let v = terminal_variance(scheme, 200);
            assert!((v - exact).abs() / exact < 0.10, "{scheme:?}: {v} vs {exact}");
        }
    }

    #[test]
    fn ornstein_uhlenbeck_many_paths() {
        let exact = 0.5 * (1.0 - libm::exp(-2.0));
        for scheme in [SdeScheme::ReversibleHeun, SdeScheme::EulerMaruyama] {
            let v = terminal_variance(scheme, 20_000);
            assert!((v - exact).abs() / exact < 0.03, "{scheme:?}: {v} vs {exact}");
        }
    }

    #[test]
    fn grid_reaches_horizon() {
        let sys = SdeSystem::new(Decay, vec![], vec![0.0], SdeScheme::ReversibleHeun).unwrap();
        let tr = simulate_sde(&sys, 0.01, 60.0, 1).unwrap();
        assert_eq!(tr.len(), 6001);
        assert_eq!(tr.times()[6000], 60.0);
    }

    #[test]
    fn rejects_negative_diffusion() {
        assert!(SdeSystem::new(Decay, vec![], vec![-1.0], SdeScheme::EulerMaruyama).is_err());
    }
}
