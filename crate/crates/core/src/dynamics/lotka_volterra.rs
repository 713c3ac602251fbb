//! Predator–prey system
//!
//! ```text
//! du₁/dx = α u₁ − β u₁ u₂
//! du₂/dx = δ u₁ u₂ − γ u₂
//! ```
//!
//! with rates ordered `[α, β, γ, δ]`.

use alloc::vec;
use alloc::vec::Vec;

use super::{OdeForwardMap, OdeProblem, OdeSystem, SdeScheme, SdeSystem};
use crate::math::inv_logit;
use crate::models::{ParamTransform, Transform};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LotkaVolterra {
    initial: [f64; 2],
}

impl LotkaVolterra {
    pub fn new(initial: [f64; 2]) -> Result<Self> {
        if initial.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::argument("initial populations must be nonnegative"));
        }
        Ok(Self { initial })
    }
}

impl OdeSystem for LotkaVolterra {
    fn state_dim(&self) -> usize {
        2
    }

    fn rate_dim(&self) -> usize {
        4
    }

    fn initial_state(&self) -> &[f64] {
        &self.initial
    }

    fn rhs(&self, _x: f64, u: &[f64], r: &[f64], du: &mut [f64]) {
        du[0] = r[0] * u[0] - r[1] * u[0] * u[1];
        du[1] = r[3] * u[0] * u[1] - r[2] * u[1];
    }

    fn state_jacobian(&self, _x: f64, u: &[f64], r: &[f64], jac: &mut [f64]) {
        jac[0] = r[0] - r[1] * u[1];
        jac[1] = -r[1] * u[0];
        jac[2] = r[3] * u[1];
        jac[3] = r[3] * u[0] - r[2];
    }

    fn rate_jacobian(&self, _x: f64, u: &[f64], _r: &[f64], jac: &mut [f64]) {
        // row 0: ∂f₁/∂(α, β, γ, δ); row 1: ∂f₂/∂(α, β, γ, δ)
        jac[0] = u[0];
        jac[1] = -u[0] * u[1];
        jac[6] = -u[1];
        jac[7] = u[0] * u[1];
    }
}

/// Rates, initial populations and intrinsic noise of a Lotka–Volterra scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct LvParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub xi: [f64; 2],
    pub epsilon: [f64; 2],
}

impl LvParams {
    /// α = logit⁻¹(−2), β = logit⁻¹(−4), γ = 0.4, δ = 0.02, ξ = (10, 10), ε = (0, 0.4).
    pub fn preset() -> Self {
        Self {
            alpha: inv_logit(-2.0),
            beta: inv_logit(-4.0),
            gamma: 0.4,
            delta: 0.02,
            xi: [10.0, 10.0],
            epsilon: [0.0, 0.4],
        }
    }

    /// α = logit⁻¹(−1), β = logit⁻¹(−3), γ = 0.4, δ = 0.02, ξ = (10, 15), ε = (0.1, 0.2).
    pub fn alternative() -> Self {
        Self {
            alpha: inv_logit(-1.0),
            beta: inv_logit(-3.0),
            gamma: 0.4,
            delta: 0.02,
            xi: [10.0, 15.0],
            epsilon: [0.1, 0.2],
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        vec![self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.delta];
        if all.iter().chain(&self.xi).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::argument("Lotka–Volterra rates and initial populations must be nonnegative"));
        }
        if self.epsilon.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::argument("Lotka–Volterra diffusion constants must be nonnegative"));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<OdeProblem<LotkaVolterra>> {
        self.validate()?;
        Ok(OdeProblem {
            system: LotkaVolterra::new(self.xi)?,
            rates: self.rates(),
        })
    }

    pub fn sde(&self, scheme: SdeScheme) -> Result<SdeSystem<LotkaVolterra>> {
        let p = self.problem()?;
        SdeSystem::new(p.system, p.rates, self.epsilon.to_vec(), scheme)
    }

    /// Forward map in `(θ₁, θ₂) = (logit α, logit β)` with γ, δ, ξ fixed.
    pub fn forward_map(&self) -> Result<OdeForwardMap<LotkaVolterra>> {
        let p = self.problem()?;
        OdeForwardMap::new(
            p.system,
            p.rates,
            vec![0, 1],
            ParamTransform::uniform(Transform::Logistic, 2),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate;
    use crate::math;

    #[test]
    fn presets() {
        let p = LvParams::preset();
        assert!((math::logit(p.alpha) + 2.0).abs() < 1e-12);
        assert!((math::logit(p.beta) + 4.0).abs() < 1e-12);
        assert_eq!((p.gamma, p.delta, p.xi, p.epsilon), (0.4, 0.02, [10.0, 10.0], [0.0, 0.4]));
        let a = LvParams::alternative();
        assert_eq!((a.xi, a.epsilon), ([10.0, 15.0], [0.1, 0.2]));
    }

    #[test]
    fn negative_rates_rejected() {
        let mut p = LvParams::preset();
        p.gamma = -0.1;
        assert!(matches!(p.problem(), Err(Error::Argument(_))));
    }

    #[test]
    fn decoupled_species() {
        let mut p = LvParams::preset();
        p.beta = 0.0;
        p.delta = 0.0;
        let prob = p.problem().unwrap();
        let tr = integrate(&prob.system, &prob.rates, &[3.0], None, 0.001).unwrap();
        let prey = 10.0 * math::exp(p.alpha * 3.0);
        let pred = 10.0 * math::exp(-p.gamma * 3.0);
        assert!((tr.state(0)[0] - prey).abs() / prey < 1e-10);
        assert!((tr.state(0)[1] - pred).abs() / pred < 1e-10);
    }

    #[test]
    fn forward_map_round_trips_truth() {
        let p = LvParams::preset();
        let f = p.forward_map().unwrap();
        let t = f.theta_of_base();
        assert!((t[0] + 2.0).abs() < 1e-12 && (t[1] + 4.0).abs() < 1e-12);
    }
}
