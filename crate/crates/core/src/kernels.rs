//! Gaussian kernels on observation and covariate space, closed-form kernel
//! mean embeddings under the diagonal Gaussian observation model, and the
//! parameter-space kernel
//!
//! ```text
//! κ(θ, ϑ) = ⟨μ(P_n) − μ(P̄_θ), μ(P_n) − μ(P̄_ϑ)⟩
//! ```
//!
//! whose double integral against `Q ⊗ Q` is `MMD²(P_n, P_Q)`.
//!
//! All kernels use the convention `k(y, y') = exp(−‖y − y'‖² / (2ℓ²))`, with a
//! separate bandwidth per observation dimension. Under `N(w, diag σ²)` the
//! embeddings factorise over dimensions:
//!
//! ```text
//! ∫ k(y_i, y) dP_θ(y|x)        = ∏_d (ℓ_d²/(ℓ_d²+σ_d²))^{1/2}  exp(−(y_d − w_d)²        / (2(ℓ_d²+σ_d²)))
//! ∬ k(y, y') dP_θ(y|x) dP_ϑ(y'|x') = ∏_d (ℓ_d²/(ℓ_d²+2σ_d²))^{1/2} exp(−(w_d − w'_d)² / (2(ℓ_d²+2σ_d²)))
//! ```
//!
//! Covariates enter through `k_X(x, x') = exp(−(x − x')²/(2ℓ_X²))`, or in the
//! zero-bandwidth limit through exact equality of the stored covariates. In
//! that limit the kernel costs `O(n)` per evaluation instead of `O(n²)`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::cache::{key_of, EvalCache};
use crate::data::Dataset;
use crate::math;
use crate::models::{Evaluation, ForwardMap, GaussianObsModel, LocalDensity, StatisticalModel};
use crate::rng;
use crate::{Error, Result};

/// Bandwidth on covariate space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateBandwidth {
    Finite(f64),
    /// `ℓ_X → 0`: covariates interact only when bitwise equal.
    ZeroLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    ell_y: Vec<f64>,
    ell_x: CovariateBandwidth,
}

impl KernelConfig {
    pub fn new(ell_y: Vec<f64>, ell_x: CovariateBandwidth) -> Result<Self> {
        if ell_y.is_empty() {
            return Err(Error::argument("at least one observation bandwidth is required"));
        }
        if ell_y.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::argument("observation bandwidths must be finite and positive"));
        }
        if let CovariateBandwidth::Finite(l) = ell_x {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::argument("covariate bandwidth must be finite and positive"));
            }
        }
        Ok(Self { ell_y, ell_x })
    }

    pub fn zero_limit(ell_y: Vec<f64>) -> Result<Self> {
        Self::new(ell_y, CovariateBandwidth::ZeroLimit)
    }

    pub fn ell_y(&self) -> &[f64] {
        &self.ell_y
    }

    pub fn ell_x(&self) -> CovariateBandwidth {
        self.ell_x
    }

    pub fn y_kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let q: f64 = a
            .iter()
            .zip(b)
            .zip(&self.ell_y)
            .map(|((u, v), l)| (u - v) * (u - v) / (l * l))
            .sum();
        math::exp(-0.5 * q)
    }

    pub fn x_kernel(&self, x: f64, x2: f64) -> f64 {
        match self.ell_x {
            CovariateBandwidth::ZeroLimit => {
                if x.to_bits() == x2.to_bits() {
                    1.0
                } else {
                    0.0
                }
            }
            CovariateBandwidth::Finite(l) => math::exp(-0.5 * (x - x2) * (x - x2) / (l * l)),
        }
    }
}

/// A kernel mean embedding integral and, optionally, its gradient in θ.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingValue {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

/// Per-dimension constants of the two closed forms.
#[derive(Debug, Clone)]
struct ClosedForm {
    inv_single: Vec<f64>,
    inv_double: Vec<f64>,
    pref_single: f64,
    pref_double: f64,
}

impl ClosedForm {
    fn new(ell: &[f64], sigma: &[f64]) -> Self {
        let mut inv_single = Vec::with_capacity(ell.len());
        let mut inv_double = Vec::with_capacity(ell.len());
        let mut pref_single = 1.0;
        let mut pref_double = 1.0;
        for (l, s) in ell.iter().zip(sigma) {
            let l2 = l * l;
            let s1 = l2 + s * s;
            let s2 = l2 + 2.0 * s * s;
            inv_single.push(1.0 / s1);
            inv_double.push(1.0 / s2);
            pref_single *= math::sqrt(l2 / s1);
            pref_double *= math::sqrt(l2 / s2);
        }
        Self {
            inv_single,
            inv_double,
            pref_single,
            pref_double,
        }
    }

    #[inline]
    fn single(&self, y: &[f64], w: &[f64]) -> f64 {
        let q: f64 = y
            .iter()
            .zip(w)
            .zip(&self.inv_single)
            .map(|((a, b), i)| (a - b) * (a - b) * i)
            .sum();
        self.pref_single * math::exp(-0.5 * q)
    }

    /// Adds `scale · ∇_θ single(y, w_θ)` into `out`.
    #[inline]
    fn single_grad(&self, y: &[f64], w: &[f64], sens: &[f64], scale: f64, out: &mut [f64]) {
        let p = out.len();
        let e = self.single(y, w) * scale;
        for d in 0..w.len() {
            let c = e * (y[d] - w[d]) * self.inv_single[d];
            for (o, s) in out.iter_mut().zip(&sens[d * p..(d + 1) * p]) {
                *o += c * s;
            }
        }
    }

    #[inline]
    fn double(&self, wa: &[f64], wb: &[f64]) -> f64 {
        let q: f64 = wa
            .iter()
            .zip(wb)
            .zip(&self.inv_double)
            .map(|((a, b), i)| (a - b) * (a - b) * i)
            .sum();
        self.pref_double * math::exp(-0.5 * q)
    }

    /// Adds `scale · ∇_θ double(w_θ, w_ϑ)` into `out`.
    #[inline]
    fn double_grad(&self, wa: &[f64], sens_a: &[f64], wb: &[f64], scale: f64, out: &mut [f64]) {
        let p = out.len();
        let e = self.double(wa, wb) * scale;
        for d in 0..wa.len() {
            let c = -e * (wa[d] - wb[d]) * self.inv_double[d];
            for (o, s) in out.iter_mut().zip(&sens_a[d * p..(d + 1) * p]) {
                *o += c * s;
            }
        }
    }
}

/// `∫ k(y, ·) dN(w, diag σ²)` with optional gradient given `∂w/∂θ`.
pub fn single_embedding(
    y: &[f64],
    mean: &[f64],
    sens: Option<&[f64]>,
    sigma: &[f64],
    ell: &[f64],
    param_dim: usize,
) -> EmbeddingValue {
    let cf = ClosedForm::new(ell, sigma);
    let value = cf.single(y, mean);
    let gradient = sens.map(|s| {
        let mut g = vec![0.0; param_dim];
        cf.single_grad(y, mean, s, 1.0, &mut g);
        g
    });
    EmbeddingValue { value, gradient }
}

/// `∬ k dN(w_a, diag σ²) dN(w_b, diag σ²)` with optional gradient in `θ_a`.
pub fn double_embedding(
    mean_a: &[f64],
    sens_a: Option<&[f64]>,
    mean_b: &[f64],
    sigma: &[f64],
    ell: &[f64],
    param_dim: usize,
) -> EmbeddingValue {
    let cf = ClosedForm::new(ell, sigma);
    let value = cf.double(mean_a, mean_b);
    let gradient = sens_a.map(|s| {
        let mut g = vec![0.0; param_dim];
        cf.double_grad(mean_a, s, mean_b, 1.0, &mut g);
        g
    });
    EmbeddingValue { value, gradient }
}

/// How data covariates interact, expressed over the distinct covariates
/// ("support") of the dataset.
#[derive(Debug, Clone)]
enum CovariateCoupling {
    /// Only identical covariates interact.
    Diagonal,
    /// Dense `S × S` Gram matrix of `k_X` over the support.
    Dense(Vec<f64>),
}

/// Precomputed data statistics plus an evaluation cache for computing
/// `κ_{P_n}` and `∇₁κ_{P_n}` under a [`GaussianObsModel`].
///
/// Forward evaluations are taken at the distinct covariates of the dataset
/// and cached by the exact bit pattern of θ (LRU, default capacity 64).
pub struct SteinContext<'a, F> {
    data: &'a Dataset,
    model: &'a GaussianObsModel<F>,
    kernel: KernelConfig,
    closed: ClosedForm,
    support: Vec<f64>,
    counts: Vec<f64>,
    datum_support: Vec<usize>,
    coupling: CovariateCoupling,
    inv_n2: f64,
    self_term: f64,
    cache: EvalCache,
}

impl<'a, F: ForwardMap> SteinContext<'a, F> {
    pub fn new(data: &'a Dataset, model: &'a GaussianObsModel<F>, kernel: KernelConfig) -> Result<Self> {
        let d = model.obs_dim();
        if data.obs_dim() != d {
            return Err(Error::shape(format!(
                "dataset has {} observation dims, model has {d}",
                data.obs_dim()
            )));
        }
        if kernel.ell_y().len() != d {
            return Err(Error::shape(format!(
                "kernel has {} bandwidths, model has {d} observation dims",
                kernel.ell_y().len()
            )));
        }
        let mut support: Vec<f64> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        let mut datum_support = Vec::with_capacity(data.len());
        {
            // first-appearance order; BTreeMap on bits keeps this O(n log n)
            let mut index = alloc::collections::BTreeMap::new();
            for &x in data.covariates() {
                let s = *index.entry(x.to_bits()).or_insert_with(|| {
                    support.push(x);
                    counts.push(0.0);
                    support.len() - 1
                });
                counts[s] += 1.0;
                datum_support.push(s);
            }
        }
        let coupling = match kernel.ell_x() {
            CovariateBandwidth::ZeroLimit => CovariateCoupling::Diagonal,
            CovariateBandwidth::Finite(_) => {
                let s = support.len();
                let mut g = vec![0.0; s * s];
                for a in 0..s {
                    for b in 0..s {
                        g[a * s + b] = kernel.x_kernel(support[a], support[b]);
                    }
                }
                CovariateCoupling::Dense(g)
            }
        };
        let n = data.len();
        let inv_n2 = if n == 0 { 0.0 } else { 1.0 / (n as f64 * n as f64) };
        let closed = ClosedForm::new(kernel.ell_y(), model.sigma());

        let mut ctx = Self {
            data,
            model,
            kernel,
            closed,
            support,
            counts,
            datum_support,
            coupling,
            inv_n2,
            self_term: 0.0,
            cache: EvalCache::new(64),
        };
        ctx.self_term = ctx.compute_self_term();
        Ok(ctx)
    }

    /// Replaces the evaluation cache with an empty one of the given capacity
    /// (`N + 2` for a flow over `N` particles).
    pub fn with_cache_capacity(mut self, capacity: usize) -> Self {
        self.cache = EvalCache::new(capacity);
        self
    }

    pub fn cache_capacity(&self) -> usize {
        self.cache.capacity()
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.len()
    }

    pub fn dataset(&self) -> &Dataset {
        self.data
    }

    pub fn model(&self) -> &GaussianObsModel<F> {
        self.model
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn param_dim(&self) -> usize {
        self.model.param_dim()
    }

    /// Distinct covariates, in order of first appearance.
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// The θ-independent term `(1/n²) Σ_{i,j} k((x_i,y_i),(x_j,y_j))`.
    pub fn self_term(&self) -> f64 {
        self.self_term
    }

    fn compute_self_term(&self) -> f64 {
        let n = self.data.len();
        let mut total = 0.0;
        match &self.coupling {
            CovariateCoupling::Diagonal => {
                let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.support.len()];
                for (i, &s) in self.datum_support.iter().enumerate() {
                    members[s].push(i);
                }
                for group in &members {
                    for &i in group {
                        for &j in group {
                            total += self
                                .kernel
                                .y_kernel(self.data.observation(i), self.data.observation(j));
                        }
                    }
                }
            }
            CovariateCoupling::Dense(g) => {
                let s = self.support.len();
                for i in 0..n {
                    for j in 0..n {
                        let kx = g[self.datum_support[i] * s + self.datum_support[j]];
                        total += kx * self.kernel.y_kernel(self.data.observation(i), self.data.observation(j));
                    }
                }
            }
        }
        total * self.inv_n2
    }

    /// Forward evaluation over the support, through the cache.
    pub fn evaluate(&self, theta: &[f64], with_sensitivities: bool) -> Result<Arc<Evaluation>> {
        let key = key_of(theta);
        if let Some(e) = self.cache.get(&key, with_sensitivities) {
            return Ok(e);
        }
        let eval = Arc::new(
            self.model
                .forward()
                .evaluate(theta, &self.support, with_sensitivities)?,
        );
        self.cache.insert(key, eval.clone());
        Ok(eval)
    }

    /// `(1/n²) Σ_{i,j} k_X(x_i,x_j) ∫ k(y_i, y) dP_θ(y|x_j) = ⟨μ(P_n), μ(P̄_θ)⟩`.
    pub fn data_fit(&self, eval: &Evaluation) -> f64 {
        let mut total = 0.0;
        match &self.coupling {
            CovariateCoupling::Diagonal => {
                for (i, &s) in self.datum_support.iter().enumerate() {
                    total += self.counts[s] * self.closed.single(self.data.observation(i), eval.value(s));
                }
            }
            CovariateCoupling::Dense(g) => {
                let ns = self.support.len();
                for (i, &si) in self.datum_support.iter().enumerate() {
                    let y = self.data.observation(i);
                    for t in 0..ns {
                        let w = self.counts[t] * g[si * ns + t];
                        total += w * self.closed.single(y, eval.value(t));
                    }
                }
            }
        }
        total * self.inv_n2
    }

    /// Adds `scale · ∇_θ data_fit` into `out`.
    pub fn data_fit_grad(&self, eval: &Evaluation, scale: f64, out: &mut [f64]) -> Result<()> {
        require_sens(eval)?;
        let scale = scale * self.inv_n2;
        match &self.coupling {
            CovariateCoupling::Diagonal => {
                for (i, &s) in self.datum_support.iter().enumerate() {
                    let sens = eval.sensitivity(s).unwrap_or_default();
                    self.closed.single_grad(
                        self.data.observation(i),
                        eval.value(s),
                        sens,
                        scale * self.counts[s],
                        out,
                    );
                }
            }
            CovariateCoupling::Dense(g) => {
                let ns = self.support.len();
                for (i, &si) in self.datum_support.iter().enumerate() {
                    let y = self.data.observation(i);
                    for t in 0..ns {
                        let w = self.counts[t] * g[si * ns + t];
                        let sens = eval.sensitivity(t).unwrap_or_default();
                        self.closed.single_grad(y, eval.value(t), sens, scale * w, out);
                    }
                }
            }
        }
        Ok(())
    }

    /// `κ₀(θ,ϑ) = ⟨μ(P̄_θ), μ(P̄_ϑ)⟩`.
    pub fn cross_term(&self, a: &Evaluation, b: &Evaluation) -> f64 {
        let mut total = 0.0;
        match &self.coupling {
            CovariateCoupling::Diagonal => {
                for (s, c) in self.counts.iter().enumerate() {
                    total += c * c * self.closed.double(a.value(s), b.value(s));
                }
            }
            CovariateCoupling::Dense(g) => {
                let ns = self.support.len();
                for s in 0..ns {
                    for t in 0..ns {
                        let w = self.counts[s] * self.counts[t] * g[s * ns + t];
                        total += w * self.closed.double(a.value(s), b.value(t));
                    }
                }
            }
        }
        total * self.inv_n2
    }

    /// Adds `scale · ∇_θ κ₀(θ,ϑ)` (gradient in the first argument) into `out`.
    pub fn cross_term_grad(&self, a: &Evaluation, b: &Evaluation, scale: f64, out: &mut [f64]) -> Result<()> {
        require_sens(a)?;
        let scale = scale * self.inv_n2;
        match &self.coupling {
            CovariateCoupling::Diagonal => {
                for (s, c) in self.counts.iter().enumerate() {
                    let sens = a.sensitivity(s).unwrap_or_default();
                    self.closed
                        .double_grad(a.value(s), sens, b.value(s), scale * c * c, out);
                }
            }
            CovariateCoupling::Dense(g) => {
                let ns = self.support.len();
                for s in 0..ns {
                    let sens = a.sensitivity(s).unwrap_or_default();
                    for t in 0..ns {
                        let w = self.counts[s] * self.counts[t] * g[s * ns + t];
                        self.closed
                            .double_grad(a.value(s), sens, b.value(t), scale * w, out);
                    }
                }
            }
        }
        Ok(())
    }

    /// `κ_{P_n}` from two evaluations.
    pub fn kernel_from(&self, a: &Evaluation, b: &Evaluation) -> f64 {
        self.self_term - self.data_fit(a) - self.data_fit(b) + self.cross_term(a, b)
    }

    /// Adds `scale · ∇₁κ_{P_n}` from two evaluations into `out`.
    pub fn kernel_grad_from(&self, a: &Evaluation, b: &Evaluation, scale: f64, out: &mut [f64]) -> Result<()> {
        self.data_fit_grad(a, -scale, out)?;
        self.cross_term_grad(a, b, scale, out)
    }

    pub fn stein_kernel(&self, theta: &[f64], vartheta: &[f64]) -> Result<f64> {
        let a = self.evaluate(theta, false)?;
        let b = self.evaluate(vartheta, false)?;
        Ok(self.kernel_from(&a, &b))
    }

    /// `∇₁κ_{P_n}(θ, ϑ)`.
    pub fn stein_kernel_grad(&self, theta: &[f64], vartheta: &[f64]) -> Result<Vec<f64>> {
        let a = self.evaluate(theta, true)?;
        let b = self.evaluate(vartheta, false)?;
        let mut g = vec![0.0; self.param_dim()];
        self.kernel_grad_from(&a, &b, 1.0, &mut g)?;
        Ok(g)
    }

    /// `MMD²(P_n, P̄_θ) = κ_{P_n}(θ, θ)`.
    pub fn mmd_squared(&self, theta: &[f64]) -> Result<f64> {
        self.stein_kernel(theta, theta)
    }

    /// Row-major `m × m` Gram matrix `[κ_{P_n}(θ_a, θ_b)]`.
    pub fn gram(&self, thetas: &[Vec<f64>]) -> Result<Vec<f64>> {
        let evals = thetas
            .iter()
            .map(|t| self.model.forward().evaluate(t, &self.support, false))
            .collect::<Result<Vec<_>>>()?;
        let m = thetas.len();
        let fits: Vec<f64> = evals.iter().map(|e| self.data_fit(e)).collect();
        let mut g = vec![0.0; m * m];
        for a in 0..m {
            for b in a..m {
                let v = self.self_term - fits[a] - fits[b] + self.cross_term(&evals[a], &evals[b]);
                g[a * m + b] = v;
                g[b * m + a] = v;
            }
        }
        Ok(g)
    }

    fn eval_at(&self, theta: &[f64], x: f64, with_grad: bool) -> Result<(Arc<Evaluation>, usize)> {
        match self.support.iter().position(|s| s.to_bits() == x.to_bits()) {
            Some(k) => Ok((self.evaluate(theta, with_grad)?, k)),
            None => Ok((
                Arc::new(self.model.forward().evaluate(theta, &[x], with_grad)?),
                0,
            )),
        }
    }

    /// `∫ k(y_obs, y) dP_θ(y | x)`.
    pub fn embed_single(&self, y_obs: &[f64], theta: &[f64], x: f64, with_grad: bool) -> Result<EmbeddingValue> {
        if y_obs.len() != self.model.obs_dim() {
            return Err(Error::shape("observation dimension does not match model"));
        }
        let (eval, k) = self.eval_at(theta, x, with_grad)?;
        let value = self.closed.single(y_obs, eval.value(k));
        let gradient = if with_grad {
            let sens = eval
                .sensitivity(k)
                .ok_or_else(|| Error::precondition("sensitivities unavailable"))?;
            let mut g = vec![0.0; self.param_dim()];
            self.closed.single_grad(y_obs, eval.value(k), sens, 1.0, &mut g);
            Some(g)
        } else {
            None
        };
        Ok(EmbeddingValue { value, gradient })
    }

    /// `∬ k(y, y') dP_θ(y | x_i) dP_ϑ(y' | x_j)`, gradient in θ.
    pub fn embed_double(
        &self,
        theta: &[f64],
        vartheta: &[f64],
        x_i: f64,
        x_j: f64,
        with_grad: bool,
    ) -> Result<EmbeddingValue> {
        let (ea, ka) = self.eval_at(theta, x_i, with_grad)?;
        let (eb, kb) = self.eval_at(vartheta, x_j, false)?;
        let value = self.closed.double(ea.value(ka), eb.value(kb));
        let gradient = if with_grad {
            let sens = ea
                .sensitivity(ka)
                .ok_or_else(|| Error::precondition("sensitivities unavailable"))?;
            let mut g = vec![0.0; self.param_dim()];
            self.closed
                .double_grad(ea.value(ka), sens, eb.value(kb), 1.0, &mut g);
            Some(g)
        } else {
            None
        };
        Ok(EmbeddingValue { value, gradient })
    }
}

fn require_sens(eval: &Evaluation) -> Result<()> {
    if eval.has_sensitivities() || eval.points() == 0 {
        Ok(())
    } else {
        Err(Error::precondition(
            "kernel gradient requires forward sensitivities",
        ))
    }
}

/// Monte Carlo estimate of an embedding and its θ-gradient, with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEmbedding {
    pub estimate: EmbeddingValue,
    pub value_se: f64,
    pub gradient_se: Vec<f64>,
}

struct Moments {
    n: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            n: 0.0,
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
        }
    }

    fn push(&mut self, v: &[f64]) {
        self.n += 1.0;
        for ((s, q), x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(v) {
            *s += x;
            *q += x * x;
        }
    }

    fn finish(self) -> MonteCarloEmbedding {
        let n = self.n;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let se: Vec<f64> = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = if n > 1.0 { (q / n - m * m).max(0.0) * n / (n - 1.0) } else { 0.0 };
                math::sqrt(var / n)
            })
            .collect();
        MonteCarloEmbedding {
            estimate: EmbeddingValue {
                value: mean[0],
                gradient: Some(mean[1..].to_vec()),
            },
            value_se: se[0],
            gradient_se: se[1..].to_vec(),
        }
    }
}

/// Score-function estimate of `∇_θ ∫ k(y_obs, y) dP_θ(y|x)`
/// as the sample mean of `k(y_obs, y) ∇_θ log p_θ(y|x)`, `y ~ P_θ(·|x)`.
pub fn score_gradient_embedding<M: StatisticalModel>(
    model: &M,
    kernel: &KernelConfig,
    y_obs: &[f64],
    theta: &[f64],
    x: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<MonteCarloEmbedding> {
    if mc_samples == 0 {
        return Err(Error::argument("mc_samples must be positive"));
    }
    let local = model.localize(theta, x)?;
    let (d, p) = (local.obs_dim(), local.param_dim());
    let mut rng = rng::stream(seed, 0);
    let mut y = vec![0.0; d];
    let mut row = vec![0.0; p + 1];
    let mut acc = Moments::new(p + 1);
    for _ in 0..mc_samples {
        local.draw(&mut rng, &mut y);
        let k = kernel.y_kernel(y_obs, &y);
        local.score(&y, &mut row[1..]);
        row[0] = k;
        for v in &mut row[1..] {
            *v *= k;
        }
        acc.push(&row);
    }
    Ok(acc.finish())
}

/// Reparametrisation estimate of `∇_θ ∫ k(y_obs, y) dP_θ(y|x)`
/// as the sample mean of `(∂f_θ/∂θ)ᵀ ∇₂k(y_obs, f_θ(u))`, `u ~ N(0, I)`.
pub fn reparam_gradient_embedding<M: StatisticalModel>(
    model: &M,
    kernel: &KernelConfig,
    y_obs: &[f64],
    theta: &[f64],
    x: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<MonteCarloEmbedding> {
    if mc_samples == 0 {
        return Err(Error::argument("mc_samples must be positive"));
    }
    let local = model.localize(theta, x)?;
    let (d, p) = (local.obs_dim(), local.param_dim());
    let mut rng = rng::stream(seed, 0);
    let mut u = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut jac = vec![0.0; d * p];
    let mut row = vec![0.0; p + 1];
    let mut acc = Moments::new(p + 1);
    for _ in 0..mc_samples {
        rng::fill_standard_normal(&mut rng, &mut u);
        if !local.reparametrise(&u, &mut y, &mut jac) {
            return Err(Error::UnsupportedModel(
                "model has no reparametrised sampling form",
            ));
        }
        let k = kernel.y_kernel(y_obs, &y);
        row[0] = k;
        row[1..].iter_mut().for_each(|v| *v = 0.0);
        for dd in 0..d {
            let l = kernel.ell_y()[dd];
            // ∂k/∂y_d at the second argument
            let c = k * (y_obs[dd] - y[dd]) / (l * l);
            for (r, j) in row[1..].iter_mut().zip(&jac[dd * p..(dd + 1) * p]) {
                *r += c * j;
            }
        }
        acc.push(&row);
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LocationModel;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_embedding_examples() {
        let one = single_embedding(&[0.0], &[0.0], None, &[0.0], &[1.0], 1);
        assert_eq!(one.value, 1.0);
        let half = single_embedding(&[0.7], &[0.7], None, &[1.0], &[1.0], 1);
        assert!(approx(half.value, 0.5f64.sqrt(), 1e-15));
        let two = single_embedding(&[1.0, 1.0], &[0.0, 0.0], None, &[1.0, 1.0], &[1.0, 1.0], 2);
        assert!(approx(two.value, 0.5 * (-0.5f64).exp(), 1e-15));
        assert!(approx(two.value, 0.30327, 1e-5));
    }

    #[test]
    fn double_embedding_examples() {
        let same = double_embedding(&[0.2], None, &[0.2], &[1.0], &[1.0], 1);
        assert!(approx(same.value, (1.0f64 / 3.0).sqrt(), 1e-15));
        let noiseless = double_embedding(&[4.0], None, &[4.0], &[0.0], &[1.0], 1);
        assert_eq!(noiseless.value, 1.0);
        let apart = double_embedding(&[3.0], None, &[0.0], &[1.0], &[1.0], 1);
        assert!(approx(apart.value, (1.0f64 / 3.0).sqrt() * (-1.5f64).exp(), 1e-15));
        assert!(approx(apart.value, 0.128825, 1e-6));
    }

    #[test]
    fn bandwidth_validation() {
        assert!(KernelConfig::zero_limit(vec![0.0]).is_err());
        assert!(KernelConfig::new(vec![1.0], CovariateBandwidth::Finite(0.0)).is_err());
        assert!(KernelConfig::new(vec![1.0], CovariateBandwidth::Finite(f64::INFINITY)).is_err());
        assert!(KernelConfig::zero_limit(vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn zero_limit_only_matches_identical_covariates() {
        let k = KernelConfig::zero_limit(vec![1.0]).unwrap();
        assert_eq!(k.x_kernel(0.5, 0.5), 1.0);
        assert_eq!(k.x_kernel(0.5, 0.5 + f64::EPSILON), 0.0);
    }

    #[test]
    fn perfect_fit_cancels() {
        let data = Dataset::new(vec![0.0], vec![1.25], 1).unwrap();
        let model = GaussianObsModel::new(LocationModel { dim: 1 }, vec![0.0]).unwrap();
        let ctx = SteinContext::new(&data, &model, KernelConfig::zero_limit(vec![1.0]).unwrap()).unwrap();
        assert_eq!(ctx.stein_kernel(&[1.25], &[1.25]).unwrap(), 0.0);
    }

    #[test]
    fn empty_dataset_gives_zero_kernel() {
        let data = Dataset::empty(1);
        let model = GaussianObsModel::new(LocationModel { dim: 1 }, vec![1.0]).unwrap();
        let ctx = SteinContext::new(&data, &model, KernelConfig::zero_limit(vec![1.0]).unwrap()).unwrap();
        assert_eq!(ctx.stein_kernel(&[0.3], &[-1.0]).unwrap(), 0.0);
        assert_eq!(ctx.stein_kernel_grad(&[0.3], &[-1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn mismatched_bandwidths_rejected() {
        let data = Dataset::new(vec![0.0], vec![1.0], 1).unwrap();
        let model = GaussianObsModel::new(LocationModel { dim: 1 }, vec![1.0]).unwrap();
        let k = KernelConfig::zero_limit(vec![1.0, 1.0]).unwrap();
        assert!(matches!(SteinContext::new(&data, &model, k), Err(Error::Shape(_))));
    }

    #[test]
    fn cache_is_bounded() {
        let data = Dataset::iid(vec![0.1, 0.2], 1).unwrap();
        let model = GaussianObsModel::new(LocationModel { dim: 1 }, vec![1.0]).unwrap();
        let ctx = SteinContext::new(&data, &model, KernelConfig::zero_limit(vec![1.0]).unwrap())
            .unwrap()
            .with_cache_capacity(3);
        for k in 0..10 {
            ctx.stein_kernel(&[k as f64], &[0.0]).unwrap();
        }
        assert_eq!(ctx.cached_entries(), 3);
    }
}
