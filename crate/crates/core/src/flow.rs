//! Interacting-particle Langevin discretisation of the gradient flow of
//!
//! ```text
//! F(Q) = ½ · MMD²(P_n, P_Q) + λ · KL(Q, Q₀)
//! ```
//!
//! Each particle moves by Euler–Maruyama on
//!
//! ```text
//! dθⁱ = [λ ∇log q₀(θⁱ) − (1/(N−1)) Σ_{j≠i} ∇₁κ(θⁱ, θʲ)] dt + √(2λ) dWⁱ
//! ```
//!
//! with drifts computed against a frozen snapshot of the ensemble and noise
//! drawn from one seeded stream per particle.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::kernels::SteinContext;
use crate::math;
use crate::models::ForwardMap;
use crate::par;
use crate::rng::{self, StreamRng};
use crate::trace::Trace;
use crate::{Error, Result};

/// Reference measure `Q₀` through its log-density and score.
pub trait ReferenceMeasure: Send + Sync {
    fn dim(&self) -> usize;

    /// Log-density, normalised.
    fn log_density(&self, theta: &[f64]) -> f64;

    /// Adds `scale · ∇log q₀(θ)` into `out`.
    fn add_score(&self, theta: &[f64], scale: f64, out: &mut [f64]);

    fn sample(&self, rng: &mut StreamRng, out: &mut [f64]);
}

/// Independent Gaussian reference `N(mean, diag sd²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianReference {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl GaussianReference {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.len() != sd.len() || mean.is_empty() {
            return Err(Error::shape("reference mean and sd must have equal nonzero length"));
        }
        if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::argument("reference sd must be positive and mean finite"));
        }
        Ok(Self { mean, sd })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            sd: vec![1.0; dim],
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }
}

impl ReferenceMeasure for GaussianReference {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((t, m), s)| {
                let z = (t - m) / s;
                -0.5 * z * z - math::ln(*s) - 0.5 * math::LN_2PI
            })
            .sum()
    }

    fn add_score(&self, theta: &[f64], scale: f64, out: &mut [f64]) {
        for (((o, t), m), s) in out.iter_mut().zip(theta).zip(&self.mean).zip(&self.sd) {
            *o -= scale * (t - m) / (s * s);
        }
    }

    fn sample(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for ((o, m), s) in out.iter_mut().zip(&self.mean).zip(&self.sd) {
            *o = m + s * rng::standard_normal(rng);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowInit {
    /// Independent draws from `Q₀`.
    Prior,
    /// Every particle starts at the given point.
    WarmStart(Vec<f64>),
    /// Explicit `N × p` row-major starting ensemble.
    Ensemble(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub lambda: f64,
    pub step: f64,
    pub iterations: u64,
    pub particles: usize,
    pub init: FlowInit,
    /// Record every `thin`-th iteration in the trace and retained sample.
    pub thin: u64,
    /// Fraction of iterations discarded before retaining snapshots.
    pub burn_in: f64,
    /// Restarts with a halved step after a divergence, at most this many times.
    pub max_halvings: u32,
}

impl FlowConfig {
    pub fn new(lambda: f64, particles: usize, iterations: u64) -> Self {
        Self {
            lambda,
            step: 1e-3,
            iterations,
            particles,
            init: FlowInit::Prior,
            thin: 10,
            burn_in: 2.0 / 3.0,
            max_halvings: 5,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::argument("flow lambda must be positive"));
        }
        if !(self.step.is_finite() && self.step >= 0.0) {
            return Err(Error::argument("flow step must be nonnegative"));
        }
        if self.iterations == 0 {
            return Err(Error::argument("flow needs at least one iteration"));
        }
        if self.particles < 2 {
            return Err(Error::argument("flow needs at least two particles"));
        }
        if self.thin == 0 {
            return Err(Error::argument("thinning interval must be positive"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::argument("burn-in fraction must lie in [0, 1)"));
        }
        match &self.init {
            FlowInit::Prior => {}
            FlowInit::WarmStart(t) if t.len() == dim => {}
            FlowInit::Ensemble(e) if e.len() == dim * self.particles => {}
            _ => return Err(Error::shape("initial ensemble has the wrong dimension")),
        }
        Ok(())
    }
}

/// `N` particles in `R^p`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    theta: Vec<f64>,
    iteration: u64,
}

impl Ensemble {
    pub fn new(dim: usize, theta: Vec<f64>) -> Result<Self> {
        if dim == 0 || theta.len() % dim != 0 || theta.len() / dim < 2 {
            return Err(Error::shape("ensemble needs at least two particles of equal length"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("ensemble coordinates must be finite"));
        }
        Ok(Self {
            dim,
            theta,
            iteration: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.theta[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }
}

/// Drift of particle `i`, computed from scratch.
pub fn drift<F: ForwardMap, R: ReferenceMeasure + ?Sized>(
    ensemble: &Ensemble,
    i: usize,
    ctx: &SteinContext<'_, F>,
    reference: &R,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = ensemble.len();
    let theta = ensemble.particle(i);
    let ei = ctx.evaluate(theta, true)?;
    let mut g = vec![0.0; ensemble.dim()];
    reference.add_score(theta, lambda, &mut g);
    let w = -1.0 / (n - 1) as f64;
    for j in (0..n).filter(|&j| j != i) {
        let ej = ctx.evaluate(ensemble.particle(j), false)?;
        ctx.kernel_grad_from(&ei, &ej, w, &mut g)?;
    }
    Ok(g)
}

/// All drifts against the current ensemble, sharing one forward evaluation per
/// particle.
pub fn drifts<F: ForwardMap, R: ReferenceMeasure + ?Sized>(
    ensemble: &Ensemble,
    ctx: &SteinContext<'_, F>,
    reference: &R,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = ensemble.len();
    let p = ensemble.dim();
    let evals = par::map_indexed(n, |i| {
        ctx.model()
            .forward()
            .evaluate(ensemble.particle(i), ctx.support(), true)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let w = 1.0 / (n - 1) as f64;
    let rows = par::map_indexed(n, |i| -> Result<Vec<f64>> {
        let mut g = vec![0.0; p];
        reference.add_score(ensemble.particle(i), lambda, &mut g);
        // Σ_{j≠i} ∇₁κ(θⁱ,θʲ) = −(N−1)∇a(θⁱ) + Σ_{j≠i} ∇₁κ₀(θⁱ,θʲ)
        ctx.data_fit_grad(&evals[i], 1.0, &mut g)?;
        for j in (0..n).filter(|&j| j != i) {
            ctx.cross_term_grad(&evals[i], &evals[j], -w, &mut g)?;
        }
        Ok(g)
    });
    let mut out = Vec::with_capacity(n * p);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// One Euler–Maruyama update in place. `streams` holds one generator per
/// particle.
pub fn step<F: ForwardMap, R: ReferenceMeasure + ?Sized>(
    ensemble: &mut Ensemble,
    ctx: &SteinContext<'_, F>,
    reference: &R,
    lambda: f64,
    h: f64,
    streams: &mut [StreamRng],
) -> Result<()> {
    let n = ensemble.len();
    if streams.len() != n {
        return Err(Error::shape("one random stream per particle is required"));
    }
    let g = drifts(ensemble, ctx, reference, lambda)?;
    let noise = math::sqrt(2.0 * lambda * h);
    let p = ensemble.dim;
    let mut next = ensemble.theta.clone();
    for (i, s) in streams.iter_mut().enumerate() {
        for k in 0..p {
            let xi = rng::standard_normal(s);
            next[i * p + k] += h * g[i * p + k] + noise * xi;
        }
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: ensemble.iteration + 1,
            step: h,
            last_finite: ensemble.theta.clone(),
        });
    }
    ensemble.theta = next;
    ensemble.iteration += 1;
    Ok(())
}

/// `½ (1/N²) Σ_{i,j} κ(θⁱ,θʲ) − λ (1/N) Σ_i log q₀(θⁱ)`, the part of the
/// objective that can be evaluated on an empirical ensemble.
pub fn free_energy<F: ForwardMap, R: ReferenceMeasure + ?Sized>(
    ensemble: &Ensemble,
    ctx: &SteinContext<'_, F>,
    reference: &R,
    lambda: f64,
) -> Result<f64> {
    let n = ensemble.len();
    let thetas: Vec<Vec<f64>> = (0..n).map(|i| ensemble.particle(i).to_vec()).collect();
    let gram = ctx.gram(&thetas)?;
    let mmd2 = gram.iter().sum::<f64>() / (n * n) as f64;
    let prior: f64 = thetas.iter().map(|t| reference.log_density(t)).sum::<f64>() / n as f64;
    Ok(0.5 * mmd2 - lambda * prior)
}

#[derive(Debug, Clone)]
pub struct FlowOutput {
    pub ensemble: Ensemble,
    /// Every `thin`-th iteration (and the initial state), all particles.
    pub trace: Trace,
    /// Post-burn-in thinned snapshots, pooled, row-major.
    pub retained: Vec<f64>,
    /// Step size of the successful run.
    pub step: f64,
    pub warnings: Vec<String>,
}

fn initial_ensemble<R: ReferenceMeasure + ?Sized>(cfg: &FlowConfig, reference: &R, seed: u64) -> Result<Ensemble> {
    let p = reference.dim();
    let theta = match &cfg.init {
        FlowInit::Prior => {
            let init_seed = rng::derive_seed(seed, 1);
            let mut t = vec![0.0; cfg.particles * p];
            for (i, row) in t.chunks_exact_mut(p).enumerate() {
                reference.sample(&mut rng::stream(init_seed, i as u64), row);
            }
            t
        }
        FlowInit::WarmStart(t) => t.repeat(cfg.particles),
        FlowInit::Ensemble(e) => e.clone(),
    };
    Ensemble::new(p, theta)
}

fn run_once<F: ForwardMap, R: ReferenceMeasure + ?Sized>(
    ctx: &SteinContext<'_, F>,
    reference: &R,
    cfg: &FlowConfig,
    h: f64,
    seed: u64,
) -> Result<FlowOutput> {
    let mut ens = initial_ensemble(cfg, reference, seed)?;
    let noise_seed = rng::derive_seed(seed, 0);
    let mut streams: Vec<StreamRng> = (0..cfg.particles)
        .map(|i| rng::stream(noise_seed, i as u64))
        .collect();
    let burn = (cfg.burn_in * cfg.iterations as f64) as u64;
    let mut trace = Trace::new(ens.dim());
    let mut retained = Vec::new();
    let record = |ens: &Ensemble, trace: &mut Trace| {
        for i in 0..ens.len() {
            trace.push(ens.iteration(), i, ens.particle(i));
        }
    };
    record(&ens, &mut trace);
    for _ in 0..cfg.iterations {
        step(&mut ens, ctx, reference, cfg.lambda, h, &mut streams)?;
        let it = ens.iteration();
        if it % cfg.thin == 0 {
            record(&ens, &mut trace);
            if it > burn {
                retained.extend_from_slice(ens.as_slice());
            }
        }
    }
    if retained.is_empty() {
        retained.extend_from_slice(ens.as_slice());
    }
    Ok(FlowOutput {
        ensemble: ens,
        trace,
        retained,
        step: h,
        warnings: Vec::new(),
    })
}

/// Runs the particle system. A divergence restarts the run from scratch with
/// half the step, up to `cfg.max_halvings` times.
pub fn run<F: ForwardMap, R: ReferenceMeasure + ?Sized>(
    ctx: &SteinContext<'_, F>,
    reference: &R,
    cfg: &FlowConfig,
    seed: u64,
) -> Result<FlowOutput> {
    let p = reference.dim();
    if p != ctx.param_dim() {
        return Err(Error::shape("reference dimension differs from model parameter dimension"));
    }
    cfg.validate(p)?;
    let mut h = cfg.step;
    let mut warnings = Vec::new();
    let mut halvings = 0;
    loop {
        match run_once(ctx, reference, cfg, h, seed) {
            Ok(mut out) => {
                out.warnings = warnings;
                return Ok(out);
            }
            Err(e @ (Error::Divergence { .. } | Error::ModelEvaluation { .. })) if halvings < cfg.max_halvings => {
                warnings.push(format!("{e}; retrying with step {:e}", h / 2.0));
                h /= 2.0;
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
