//! Statistical models `P_θ(·|x)` built around deterministic forward maps.
//!
//! The central type is [`GaussianObsModel`]: a forward map `w_θ(x) ∈ R^d`
//! observed under independent Gaussian noise with per-dimension standard
//! deviations `σ_d`,
//!
//! ```text
//! p_θ(y | x) = ∏_d N(y_d; w_θ(x)_d, σ_d²)
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math::{self, LN_2PI};
use crate::rng;
use crate::{Error, Result};

/// Forward-map output at a list of covariates.
///
/// `values` is `points × obs_dim` row-major. When present, `sensitivities`
/// is `points × obs_dim × param_dim` row-major, i.e. one `∂w/∂θ` Jacobian
/// (`obs_dim × param_dim`) per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    points: usize,
    obs_dim: usize,
    param_dim: usize,
    values: Vec<f64>,
    sensitivities: Option<Vec<f64>>,
}

impl Evaluation {
    pub fn new(
        points: usize,
        obs_dim: usize,
        param_dim: usize,
        values: Vec<f64>,
        sensitivities: Option<Vec<f64>>,
    ) -> Result<Self> {
        if values.len() != points * obs_dim {
            return Err(Error::shape(format!(
                "expected {} forward values, got {}",
                points * obs_dim,
                values.len()
            )));
        }
        if let Some(s) = &sensitivities {
            if s.len() != points * obs_dim * param_dim {
                return Err(Error::shape(format!(
                    "expected {} sensitivity entries, got {}",
                    points * obs_dim * param_dim,
                    s.len()
                )));
            }
        }
        Ok(Self {
            points,
            obs_dim,
            param_dim,
            values,
            sensitivities,
        })
    }

    /// Like [`Evaluation::new`] but rejects non-finite entries, reporting the
    /// offending covariate.
    pub fn checked(
        covariates: &[f64],
        obs_dim: usize,
        param_dim: usize,
        values: Vec<f64>,
        sensitivities: Option<Vec<f64>>,
    ) -> Result<Self> {
        let eval = Self::new(covariates.len(), obs_dim, param_dim, values, sensitivities)?;
        for (k, &x) in covariates.iter().enumerate() {
            let bad_value = eval.value(k).iter().any(|v| !v.is_finite());
            let bad_sens = eval
                .sensitivity(k)
                .is_some_and(|s| s.iter().any(|v| !v.is_finite()));
            if bad_value || bad_sens {
                return Err(Error::ModelEvaluation { x });
            }
        }
        Ok(eval)
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn has_sensitivities(&self) -> bool {
        self.sensitivities.is_some()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.obs_dim..(k + 1) * self.obs_dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `∂w/∂θ` at point `k` as an `obs_dim × param_dim` row-major block.
    pub fn sensitivity(&self, k: usize) -> Option<&[f64]> {
        let block = self.obs_dim * self.param_dim;
        self.sensitivities
            .as_ref()
            .map(|s| &s[k * block..(k + 1) * block])
    }
}

/// Deterministic map `(θ, x) ↦ w_θ(x)`, optionally with its Jacobian in θ.
///
/// Evaluation is batched over covariates because ODE-backed maps produce a
/// whole trajectory per integration.
pub trait ForwardMap: Send + Sync {
    fn param_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn evaluate(
        &self,
        theta: &[f64],
        covariates: &[f64],
        with_sensitivities: bool,
    ) -> Result<Evaluation>;
}

impl<T: ForwardMap + ?Sized> ForwardMap for &T {
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn evaluate(&self, theta: &[f64], covariates: &[f64], with_sens: bool) -> Result<Evaluation> {
        (**self).evaluate(theta, covariates, with_sens)
    }
}

impl<T: ForwardMap + ?Sized> ForwardMap for alloc::boxed::Box<T> {
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn evaluate(&self, theta: &[f64], covariates: &[f64], with_sens: bool) -> Result<Evaluation> {
        (**self).evaluate(theta, covariates, with_sens)
    }
}

pub(crate) fn check_theta(theta: &[f64], param_dim: usize) -> Result<()> {
    if theta.len() != param_dim {
        return Err(Error::shape(format!(
            "parameter has length {}, model expects {}",
            theta.len(),
            param_dim
        )));
    }
    Ok(())
}

/// Location family `w_θ(x) = θ`, independent of the covariate.
///
/// With unit noise this is the 1-D Gaussian location toy used to
/// cross-check the particle flow against the grid oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationModel {
    pub dim: usize,
}

impl ForwardMap for LocationModel {
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn obs_dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, theta: &[f64], covariates: &[f64], with_sens: bool) -> Result<Evaluation> {
        check_theta(theta, self.dim)?;
        let d = self.dim;
        let values = covariates.iter().flat_map(|_| theta.iter().copied()).collect();
        let sens = with_sens.then(|| {
            let mut s = vec![0.0; covariates.len() * d * d];
            for k in 0..covariates.len() {
                for j in 0..d {
                    s[k * d * d + j * d + j] = 1.0;
                }
            }
            s
        });
        Evaluation::checked(covariates, d, d, values, sens)
    }
}

/// Per-coordinate linear map `w_θ(x)_d = θ_d · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub dim: usize,
}

impl ForwardMap for LinearModel {
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn obs_dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, theta: &[f64], covariates: &[f64], with_sens: bool) -> Result<Evaluation> {
        check_theta(theta, self.dim)?;
        let d = self.dim;
        let values = covariates
            .iter()
            .flat_map(|&x| theta.iter().map(move |t| t * x))
            .collect();
        let sens = with_sens.then(|| {
            let mut s = vec![0.0; covariates.len() * d * d];
            for (k, &x) in covariates.iter().enumerate() {
                for j in 0..d {
                    s[k * d * d + j * d + j] = x;
                }
            }
            s
        });
        Evaluation::checked(covariates, d, d, values, sens)
    }
}

/// A conditional density `p_θ(·|x)` frozen at one `(θ, x)`.
pub trait LocalDensity {
    fn obs_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn log_density(&self, y: &[f64]) -> f64;
    /// `∇_θ log p_θ(y|x)`.
    fn score(&self, y: &[f64], out: &mut [f64]);
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]);
    /// Reparametrised draw `y = f_θ(u, x)` for standard-normal `u` of length
    /// `obs_dim`, writing `∂f/∂θ` (`obs_dim × param_dim`) into `jac`.
    /// Returns `false` when the model has no such representation.
    fn reparametrise(&self, _u: &[f64], _y: &mut [f64], _jac: &mut [f64]) -> bool {
        false
    }
}

/// A family `{P_θ(·|x)}` that can be frozen at a parameter and covariate.
pub trait StatisticalModel {
    type Local: LocalDensity;
    fn param_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn localize(&self, theta: &[f64], x: f64) -> Result<Self::Local>;
}

/// Forward map plus diagonal Gaussian measurement noise.
#[derive(Debug, Clone)]
pub struct GaussianObsModel<F> {
    forward: F,
    sigma: Vec<f64>,
}

impl<F: ForwardMap> GaussianObsModel<F> {
    pub fn new(forward: F, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != forward.obs_dim() {
            return Err(Error::shape(format!(
                "noise has {} scales, forward map has {} outputs",
                sigma.len(),
                forward.obs_dim()
            )));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::argument("noise scales must be finite and nonnegative"));
        }
        Ok(Self { forward, sigma })
    }

    pub fn forward(&self) -> &F {
        &self.forward
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn param_dim(&self) -> usize {
        self.forward.param_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.forward.obs_dim()
    }

    fn require_density(&self) -> Result<()> {
        if self.sigma.iter().any(|s| *s == 0.0) {
            return Err(Error::argument(
                "zero noise scale: the observation model has no density",
            ));
        }
        Ok(())
    }

    /// Log density of `y` around a known forward value `mean`.
    pub fn log_density_at(&self, mean: &[f64], y: &[f64]) -> f64 {
        diag_gaussian_log_density(mean, &self.sigma, y)
    }

    pub fn log_density(&self, theta: &[f64], y: &[f64], x: f64) -> Result<f64> {
        self.require_density()?;
        check_len(y, self.obs_dim(), "observation")?;
        let eval = self.forward.evaluate(theta, &[x], false)?;
        Ok(self.log_density_at(eval.value(0), y))
    }

    /// `(∂w/∂θ)ᵀ Σ⁻¹ (y − w_θ(x))`.
    pub fn log_density_grad(&self, theta: &[f64], y: &[f64], x: f64) -> Result<Vec<f64>> {
        self.require_density()?;
        check_len(y, self.obs_dim(), "observation")?;
        let eval = self.forward.evaluate(theta, &[x], true)?;
        let sens = eval
            .sensitivity(0)
            .ok_or_else(|| Error::precondition("forward map returned no sensitivities"))?;
        let mut grad = vec![0.0; self.param_dim()];
        accumulate_score(eval.value(0), sens, &self.sigma, y, &mut grad);
        Ok(grad)
    }

    /// `count` i.i.d. draws `w_θ(x) + σ ⊙ ε`, row-major `count × d`.
    pub fn sample(&self, theta: &[f64], x: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(Error::argument("sample count must be at least 1"));
        }
        let eval = self.forward.evaluate(theta, &[x], false)?;
        let mut rng = rng::stream(seed, 0);
        let mut out = vec![0.0; count * self.obs_dim()];
        for row in out.chunks_exact_mut(self.obs_dim()) {
            for ((o, w), s) in row.iter_mut().zip(eval.value(0)).zip(&self.sigma) {
                *o = w + s * rng::standard_normal(&mut rng);
            }
        }
        Ok(out)
    }
}

fn check_len(v: &[f64], expected: usize, what: &str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::shape(format!(
            "{what} has length {}, expected {expected}",
            v.len()
        )));
    }
    Ok(())
}

pub(crate) fn diag_gaussian_log_density(mean: &[f64], sigma: &[f64], y: &[f64]) -> f64 {
    mean.iter()
        .zip(sigma)
        .zip(y)
        .map(|((m, s), v)| {
            let r = (v - m) / s;
            -0.5 * LN_2PI - math::ln(*s) - 0.5 * r * r
        })
        .sum()
}

/// Adds `(∂w/∂θ)ᵀ Σ⁻¹ (y − w)` into `grad`.
pub(crate) fn accumulate_score(mean: &[f64], sens: &[f64], sigma: &[f64], y: &[f64], grad: &mut [f64]) {
    let p = grad.len();
    for d in 0..mean.len() {
        let r = (y[d] - mean[d]) / (sigma[d] * sigma[d]);
        let row = &sens[d * p..(d + 1) * p];
        for (g, s) in grad.iter_mut().zip(row) {
            *g += s * r;
        }
    }
}

/// [`GaussianObsModel`] frozen at `(θ, x)`.
#[derive(Debug, Clone)]
pub struct GaussianLocal {
    mean: Vec<f64>,
    sens: Vec<f64>,
    sigma: Vec<f64>,
    param_dim: usize,
}

impl LocalDensity for GaussianLocal {
    fn obs_dim(&self) -> usize {
        self.mean.len()
    }
    fn param_dim(&self) -> usize {
        self.param_dim
    }
    fn log_density(&self, y: &[f64]) -> f64 {
        diag_gaussian_log_density(&self.mean, &self.sigma, y)
    }
    fn score(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        accumulate_score(&self.mean, &self.sens, &self.sigma, y, out);
    }
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, m), s) in out.iter_mut().zip(&self.mean).zip(&self.sigma) {
            *o = m + s * rng::standard_normal(rng);
        }
    }
    fn reparametrise(&self, u: &[f64], y: &mut [f64], jac: &mut [f64]) -> bool {
        for d in 0..self.mean.len() {
            y[d] = self.mean[d] + self.sigma[d] * u[d];
        }
        jac.copy_from_slice(&self.sens);
        true
    }
}

impl<F: ForwardMap> StatisticalModel for GaussianObsModel<F> {
    type Local = GaussianLocal;

    fn param_dim(&self) -> usize {
        self.forward.param_dim()
    }

    fn obs_dim(&self) -> usize {
        self.forward.obs_dim()
    }

    fn localize(&self, theta: &[f64], x: f64) -> Result<GaussianLocal> {
        let eval = self.forward.evaluate(theta, &[x], true)?;
        let sens = eval
            .sensitivity(0)
            .ok_or_else(|| Error::precondition("forward map returned no sensitivities"))?
            .to_vec();
        Ok(GaussianLocal {
            mean: eval.value(0).to_vec(),
            sens,
            sigma: self.sigma.clone(),
            param_dim: self.param_dim(),
        })
    }
}

/// Componentwise bijection between unconstrained θ and constrained rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// `rate = logit⁻¹(θ)`, rates in (0, 1).
    Logistic,
    /// `rate = exp(θ)`, rates in (0, ∞).
    Exp,
}

impl Transform {
    pub fn forward(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => theta,
            Transform::Logistic => math::inv_logit(theta),
            Transform::Exp => math::exp(theta),
        }
    }

    pub fn inverse(self, rate: f64) -> f64 {
        match self {
            Transform::Identity => rate,
            Transform::Logistic => math::logit(rate),
            Transform::Exp => math::ln(rate),
        }
    }

    /// `d rate / d θ`.
    pub fn derivative(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Logistic => {
                let s = math::inv_logit(theta);
                s * (1.0 - s)
            }
            Transform::Exp => math::exp(theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamTransform {
    components: Vec<Transform>,
}

impl ParamTransform {
    pub fn new(components: Vec<Transform>) -> Self {
        Self { components }
    }

    pub fn uniform(kind: Transform, dim: usize) -> Self {
        Self::new(vec![kind; dim])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Transform] {
        &self.components
    }

    pub fn forward(&self, theta: &[f64]) -> Vec<f64> {
        self.components.iter().zip(theta).map(|(t, v)| t.forward(*v)).collect()
    }

    pub fn inverse(&self, rates: &[f64]) -> Vec<f64> {
        self.components.iter().zip(rates).map(|(t, v)| t.inverse(*v)).collect()
    }

    pub fn derivative(&self, theta: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .zip(theta)
            .map(|(t, v)| t.derivative(*v))
            .collect()
    }
}

/// Equal-weight mixture `P_Q = (1/N) Σ_i P_{θ^i}` over an ensemble.
#[derive(Debug, Clone, Copy)]
pub struct MixturePredictive<'a, F> {
    particles: &'a [f64],
    model: &'a GaussianObsModel<F>,
}

impl<'a, F: ForwardMap> MixturePredictive<'a, F> {
    /// `particles` is row-major `N × p`.
    pub fn new(particles: &'a [f64], model: &'a GaussianObsModel<F>) -> Result<Self> {
        let p = model.param_dim();
        if particles.is_empty() {
            return Err(Error::precondition("mixture needs at least one particle"));
        }
        if particles.len() % p != 0 {
            return Err(Error::shape("particle block is not a multiple of the parameter dimension"));
        }
        Ok(Self { particles, model })
    }

    pub fn components(&self) -> usize {
        self.particles.len() / self.model.param_dim()
    }

    pub fn weights(&self) -> Vec<f64> {
        let n = self.components();
        vec![1.0 / n as f64; n]
    }

    /// `draws_per_particle` draws from each component at `x`, pooled in
    /// particle order (row-major `N·draws × d`). Component `i` uses stream
    /// `i` of `seed`.
    pub fn predictive_draws(&self, x: f64, draws_per_particle: usize, seed: u64) -> Result<Vec<f64>> {
        if draws_per_particle == 0 {
            return Err(Error::argument("draws per particle must be at least 1"));
        }
        let p = self.model.param_dim();
        let d = self.model.obs_dim();
        let mut out = Vec::with_capacity(self.components() * draws_per_particle * d);
        for (i, theta) in self.particles.chunks_exact(p).enumerate() {
            let eval = self.model.forward().evaluate(theta, &[x], false)?;
            let mut rng = rng::stream(seed, i as u64);
            for _ in 0..draws_per_particle {
                for (w, s) in eval.value(0).iter().zip(self.model.sigma()) {
                    out.push(w + s * rng::standard_normal(&mut rng));
                }
            }
        }
        Ok(out)
    }
}
