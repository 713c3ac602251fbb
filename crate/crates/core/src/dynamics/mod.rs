//! ODE integration with forward sensitivities, additive-noise SDE simulation,
//! and the Lotka–Volterra and ERK signalling systems.

mod erk;
mod lotka_volterra;
mod ode;
mod sde;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::models::{Evaluation, ForwardMap, ParamTransform};
use crate::{Error, Result};

pub use erk::{Erk, Modulation, ERK_CONSERVATION, ERK_INITIAL, ERK_PRESET_RATES};
pub use lotka_volterra::{LotkaVolterra, LvParams};
pub use ode::{integrate, integrate_rate_sensitivities};
pub use sde::{simulate_sde, SdeScheme, SdeSystem};

/// Default fixed integration step.
pub const DEFAULT_STEP: f64 = 0.01;

/// Autonomous or time-dependent ODE `du/dx = f(x, u; rates)` with `u(0) = u₀`.
///
/// Jacobian buffers arrive zeroed; implementations only need to write the
/// nonzero entries.
pub trait OdeSystem: Send + Sync {
    fn state_dim(&self) -> usize;

    fn rate_dim(&self) -> usize;

    fn initial_state(&self) -> &[f64];

    fn rhs(&self, x: f64, u: &[f64], rates: &[f64], du: &mut [f64]);

    /// Row-major `d × d` matrix `∂f/∂u`.
    fn state_jacobian(&self, x: f64, u: &[f64], rates: &[f64], jac: &mut [f64]);

    /// Row-major `d × R` matrix `∂f/∂rates`.
    fn rate_jacobian(&self, x: f64, u: &[f64], rates: &[f64], jac: &mut [f64]);
}

impl<S: OdeSystem + ?Sized> OdeSystem for &S {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn rate_dim(&self) -> usize {
        (**self).rate_dim()
    }
    fn initial_state(&self) -> &[f64] {
        (**self).initial_state()
    }
    fn rhs(&self, x: f64, u: &[f64], rates: &[f64], du: &mut [f64]) {
        (**self).rhs(x, u, rates, du)
    }
    fn state_jacobian(&self, x: f64, u: &[f64], rates: &[f64], jac: &mut [f64]) {
        (**self).state_jacobian(x, u, rates, jac)
    }
    fn rate_jacobian(&self, x: f64, u: &[f64], rates: &[f64], jac: &mut [f64]) {
        (**self).rate_jacobian(x, u, rates, jac)
    }
}

/// An ODE system together with a rate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeProblem<S> {
    pub system: S,
    pub rates: Vec<f64>,
}

impl<S: OdeSystem> OdeProblem<S> {
    pub fn integrate(&self, times: &[f64], step: f64) -> Result<Trajectory> {
        integrate(&self.system, &self.rates, times, None, step)
    }
}

/// States (and optionally sensitivities) on an output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    state_dim: usize,
    param_dim: usize,
    states: Vec<f64>,
    sensitivities: Option<Vec<f64>>,
}

impl Trajectory {
    pub(crate) fn new(
        times: Vec<f64>,
        state_dim: usize,
        param_dim: usize,
        states: Vec<f64>,
        sensitivities: Option<Vec<f64>>,
    ) -> Self {
        debug_assert_eq!(states.len(), times.len() * state_dim);
        Self {
            times,
            state_dim,
            param_dim,
            states,
            sensitivities,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    /// Row-major `T × d`.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn has_sensitivities(&self) -> bool {
        self.sensitivities.is_some()
    }

    /// Row-major `d × p` block `∂u/∂θ` at output `k`.
    pub fn sensitivity(&self, k: usize) -> Option<&[f64]> {
        let block = self.state_dim * self.param_dim;
        self.sensitivities
            .as_ref()
            .map(|s| &s[k * block..(k + 1) * block])
    }

    /// Time series of one state component.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states
            .chunks_exact(self.state_dim)
            .map(|u| u[i])
            .collect()
    }

    /// Index of the output time equal to `t` up to `1e-9` relative rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let k = self.times.partition_point(|s| *s < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }

    /// States at the given times, which must all lie on the output grid.
    pub fn states_at(&self, times: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len() * self.state_dim);
        for &t in times {
            let k = self
                .index_of(t)
                .ok_or_else(|| Error::argument(format!("time {t} is not on the trajectory grid")))?;
            out.extend_from_slice(self.state(k));
        }
        Ok(out)
    }
}

/// Forward map `θ ↦ (u_θ(x))_{observed}` for an ODE whose rates are partly
/// controlled by θ through a per-component transform.
#[derive(Debug, Clone)]
pub struct OdeForwardMap<S> {
    system: S,
    base_rates: Vec<f64>,
    free: Vec<usize>,
    transform: ParamTransform,
    observed: Vec<usize>,
    step: f64,
}

impl<S: OdeSystem> OdeForwardMap<S> {
    /// `free[k]` is the rate index set by `transform.forward(θ)[k]`; all
    /// state components are observed.
    pub fn new(system: S, base_rates: Vec<f64>, free: Vec<usize>, transform: ParamTransform) -> Result<Self> {
        if base_rates.len() != system.rate_dim() {
            return Err(Error::argument(format!(
                "expected {} rates, got {}",
                system.rate_dim(),
                base_rates.len()
            )));
        }
        if free.len() != transform.dim() {
            return Err(Error::shape("transform length differs from free-rate count"));
        }
        if free.iter().any(|&i| i >= base_rates.len()) {
            return Err(Error::argument("free-rate index out of range"));
        }
        let observed = (0..system.state_dim()).collect();
        Ok(Self {
            system,
            base_rates,
            free,
            transform,
            observed,
            step: DEFAULT_STEP,
        })
    }

    pub fn with_step(mut self, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::argument("integration step must be positive"));
        }
        self.step = step;
        Ok(self)
    }

    pub fn with_observed(mut self, observed: Vec<usize>) -> Result<Self> {
        if observed.is_empty() || observed.iter().any(|&i| i >= self.system.state_dim()) {
            return Err(Error::argument("observed components out of range"));
        }
        self.observed = observed;
        Ok(self)
    }

    pub fn system(&self) -> &S {
        &self.system
    }

    /// Same map over a different system (e.g. an intervened one).
    pub fn with_system<T: OdeSystem>(&self, system: T) -> Result<OdeForwardMap<T>> {
        let mut m = OdeForwardMap::new(system, self.base_rates.clone(), self.free.clone(), self.transform.clone())?;
        m.observed = self.observed.clone();
        m.step = self.step;
        Ok(m)
    }

    pub fn base_rates(&self) -> &[f64] {
        &self.base_rates
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn transform(&self) -> &ParamTransform {
        &self.transform
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn rates(&self, theta: &[f64]) -> Vec<f64> {
        let mut rates = self.base_rates.clone();
        for (&i, r) in self.free.iter().zip(self.transform.forward(theta)) {
            rates[i] = r;
        }
        rates
    }

    /// θ that reproduces the base rates.
    pub fn theta_of_base(&self) -> Vec<f64> {
        let r: Vec<f64> = self.free.iter().map(|&i| self.base_rates[i]).collect();
        self.transform.inverse(&r)
    }

    /// Full trajectory (all states) at θ on a time grid.
    pub fn trajectory(&self, theta: &[f64], times: &[f64], with_sensitivities: bool) -> Result<Trajectory> {
        crate::models::check_theta(theta, self.free.len())?;
        let rates = self.rates(theta);
        let sens = with_sensitivities.then(|| self.rate_sensitivity(theta));
        integrate(&self.system, &rates, times, sens.as_deref(), self.step)
    }

    fn rate_sensitivity(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.free.len();
        let mut d = vec![0.0; self.base_rates.len() * p];
        for (k, (&i, dr)) in self.free.iter().zip(self.transform.derivative(theta)).enumerate() {
            d[i * p + k] = dr;
        }
        d
    }
}

impl<S: OdeSystem> ForwardMap for OdeForwardMap<S> {
    fn param_dim(&self) -> usize {
        self.free.len()
    }

    fn obs_dim(&self) -> usize {
        self.observed.len()
    }

    fn evaluate(&self, theta: &[f64], covariates: &[f64], with_sensitivities: bool) -> Result<Evaluation> {
        let p = self.free.len();
        let d_obs = self.observed.len();
        let d = self.system.state_dim();
        if covariates.is_empty() {
            return Evaluation::checked(covariates, d_obs, p, Vec::new(), with_sensitivities.then(Vec::new));
        }
        // integrate over the sorted distinct covariates, then scatter back
        let mut order: Vec<usize> = (0..covariates.len()).collect();
        order.sort_by(|&a, &b| covariates[a].total_cmp(&covariates[b]));
        let mut grid: Vec<f64> = Vec::with_capacity(covariates.len());
        let mut slot = vec![0usize; covariates.len()];
        for &i in &order {
            if grid.last().map_or(true, |l| l.to_bits() != covariates[i].to_bits()) {
                grid.push(covariates[i]);
            }
            slot[i] = grid.len() - 1;
        }
        let traj = self
            .trajectory(theta, &grid, with_sensitivities)
            .map_err(|e| match e {
                Error::IntegrationFailure { x } => Error::ModelEvaluation { x },
                other => other,
            })?;
        let mut values = Vec::with_capacity(covariates.len() * d_obs);
        let mut sens = with_sensitivities.then(|| Vec::with_capacity(covariates.len() * d_obs * p));
        for &k in &slot {
            let u = traj.state(k);
            values.extend(self.observed.iter().map(|&i| u[i]));
            if let (Some(out), Some(s)) = (sens.as_mut(), traj.sensitivity(k)) {
                for &i in &self.observed {
                    out.extend_from_slice(&s[i * p..(i + 1) * p]);
                }
            }
        }
        debug_assert!(d >= d_obs);
        Evaluation::checked(covariates, d_obs, p, values, sens)
    }
}
