//! Metropolis-adjusted Langevin sampling for the standard posterior, the
//! MMD-Bayes generalised posterior, and the joint density of `N` interacting
//! particles whose overdamped Langevin dynamics is the particle flow.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::Dataset;
use crate::flow::ReferenceMeasure;
use crate::kernels::SteinContext;
use crate::math;
use crate::models::{Evaluation, ForwardMap, GaussianObsModel};
use crate::par;
use crate::rng::{self, StreamRng};
use crate::trace::Trace;
use crate::{Error, Result};

/// Unnormalised log-density with gradient.
pub trait LogTarget: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &[f64]) -> Result<f64>;

    /// `(log π(θ), ∇log π(θ))`.
    fn log_density_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<T: LogTarget + ?Sized> LogTarget for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        (**self).log_density(theta)
    }
    fn log_density_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).log_density_grad(theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainInit {
    /// All chains start at the same point.
    Point(Vec<f64>),
    /// One starting point per chain.
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerConfig {
    /// Pilot iterations per bisection probe.
    pub pilot_iterations: usize,
    pub max_probes: usize,
    pub target_low: f64,
    pub target_high: f64,
    /// Search interval for `log₁₀ s`.
    pub log10_bounds: (f64, f64),
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            pilot_iterations: 200,
            max_probes: 30,
            target_low: 0.4,
            target_high: 0.8,
            log10_bounds: (-40.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Proposal scale `s`; `None` tunes it by bisection before the main run.
    pub step: Option<f64>,
    pub iterations: usize,
    pub chains: usize,
    pub init: ChainInit,
    /// Final fraction of each chain that is retained.
    pub retain: f64,
    /// Trace every `thin`-th iteration.
    pub thin: usize,
    pub tuner: TunerConfig,
}

impl ChainConfig {
    /// Ten chains of 5000 iterations keeping the final third.
    pub fn new(init: Vec<f64>) -> Self {
        Self {
            step: None,
            iterations: 5000,
            chains: 10,
            init: ChainInit::Point(init),
            retain: 1.0 / 3.0,
            thin: 1,
            tuner: TunerConfig::default(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(s) = self.step {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::argument("MALA step must be positive"));
            }
        }
        if self.iterations == 0 || self.chains == 0 {
            return Err(Error::argument("MALA needs at least one chain and one iteration"));
        }
        if !(self.retain > 0.0 && self.retain <= 1.0) {
            return Err(Error::argument("retained fraction must lie in (0, 1]"));
        }
        if self.thin == 0 {
            return Err(Error::argument("thinning interval must be positive"));
        }
        let t = &self.tuner;
        if !(t.target_low < t.target_high && t.log10_bounds.0 < t.log10_bounds.1 && t.pilot_iterations > 0) {
            return Err(Error::argument("invalid tuner settings"));
        }
        match &self.init {
            ChainInit::Point(p) if p.len() == dim => Ok(()),
            ChainInit::Points(ps) if ps.len() == self.chains && ps.iter().all(|p| p.len() == dim) => Ok(()),
            _ => Err(Error::shape("initial points do not match target dimension or chain count")),
        }
    }

    fn start(&self, chain: usize) -> &[f64] {
        match &self.init {
            ChainInit::Point(p) => p,
            ChainInit::Points(ps) => &ps[chain],
        }
    }
}

#[derive(Debug, Clone)]
pub struct MalaOutput {
    pub dim: usize,
    /// Retained samples pooled over chains, row-major.
    pub samples: Vec<f64>,
    pub trace: Trace,
    /// Acceptance rate per chain over the whole run.
    pub acceptance: Vec<f64>,
    pub step: f64,
    pub warnings: Vec<String>,
}

impl MalaOutput {
    pub fn sample_count(&self) -> usize {
        self.samples.len() / self.dim
    }
}

struct State {
    theta: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

impl State {
    fn at<T: LogTarget + ?Sized>(target: &T, theta: Vec<f64>) -> Result<Self> {
        let (logp, grad) = target.log_density_grad(&theta)?;
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::precondition("target is not finite at the initial point"));
        }
        Ok(Self { theta, logp, grad })
    }
}

/// `log q(to | from)` up to the shared normalising constant.
fn log_proposal(to: &[f64], from: &State, s: f64) -> f64 {
    let half = 0.5 * s * s;
    let q: f64 = to
        .iter()
        .zip(&from.theta)
        .zip(&from.grad)
        .map(|((t, f), g)| {
            let r = t - f - half * g;
            r * r
        })
        .sum();
    -q / (2.0 * s * s)
}

/// One MALA transition; returns whether the proposal was accepted.
fn transition<T: LogTarget + ?Sized>(target: &T, state: &mut State, s: f64, rng: &mut StreamRng) -> bool {
    let half = 0.5 * s * s;
    let proposal: Vec<f64> = state
        .theta
        .iter()
        .zip(&state.grad)
        .map(|(t, g)| t + half * g + s * rng::standard_normal(rng))
        .collect();
    let u: f64 = rng.random();
    let Ok((logp, grad)) = target.log_density_grad(&proposal) else {
        return false;
    };
    if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return false;
    }
    let cand = State {
        theta: proposal,
        logp,
        grad,
    };
    let log_alpha = cand.logp - state.logp + log_proposal(&state.theta, &cand, s) - log_proposal(&cand.theta, state, s);
    if math::ln(u) < log_alpha {
        *state = cand;
        true
    } else {
        false
    }
}

/// Acceptance rate of a short pilot chain.
fn pilot<T: LogTarget + ?Sized>(target: &T, start: &[f64], s: f64, iterations: usize, seed: u64) -> Result<f64> {
    let mut state = State::at(target, start.to_vec())?;
    let mut rng = rng::stream(seed, 0);
    let accepted = (0..iterations)
        .filter(|_| transition(target, &mut state, s, &mut rng))
        .count();
    Ok(accepted as f64 / iterations as f64)
}

/// Bisection on `log₁₀ s` until a pilot chain's acceptance lies in the target
/// band (or the probe budget runs out, in which case the last midpoint is used).
pub fn tune_step<T: LogTarget + ?Sized>(target: &T, start: &[f64], cfg: &TunerConfig, seed: u64) -> Result<f64> {
    let (mut lo, mut hi) = cfg.log10_bounds;
    let mut mid = 0.5 * (lo + hi);
    for probe in 0..cfg.max_probes {
        mid = 0.5 * (lo + hi);
        let s = libm::pow(10.0, mid);
        let acc = pilot(target, start, s, cfg.pilot_iterations, rng::derive_seed(seed, probe as u64))?;
        if acc > cfg.target_high {
            lo = mid;
        } else if acc < cfg.target_low {
            hi = mid;
        } else {
            break;
        }
    }
    Ok(libm::pow(10.0, mid))
}

struct ChainResult {
    trace: Trace,
    kept: Vec<f64>,
    acceptance: f64,
    warning: Option<String>,
}

fn run_chain<T: LogTarget + ?Sized>(target: &T, cfg: &ChainConfig, s: f64, chain: usize, seed: u64) -> Result<ChainResult> {
    let dim = target.dim();
    let mut state = State::at(target, cfg.start(chain).to_vec())?;
    let mut rng = rng::stream(seed, chain as u64);
    let keep_from = cfg.iterations - (math::round(cfg.retain * cfg.iterations as f64) as usize).clamp(1, cfg.iterations);
    let mut trace = Trace::new(dim);
    let mut kept = Vec::with_capacity((cfg.iterations - keep_from) * dim);
    let mut accepted = 0usize;
    let mut run_of_rejections = 0usize;
    let mut warning = None;
    trace.push(0, chain, &state.theta);
    for it in 1..=cfg.iterations {
        if transition(target, &mut state, s, &mut rng) {
            accepted += 1;
            run_of_rejections = 0;
        } else {
            run_of_rejections += 1;
            if run_of_rejections == 500 && warning.is_none() {
                warning = Some(format!(
                    "chain {chain}: no accepted proposal in 500 consecutive iterations (ending at {it}) with step {s:e}"
                ));
            }
        }
        if it % cfg.thin == 0 {
            trace.push(it as u64, chain, &state.theta);
        }
        if it > keep_from {
            kept.extend_from_slice(&state.theta);
        }
    }
    Ok(ChainResult {
        trace,
        kept,
        acceptance: accepted as f64 / cfg.iterations as f64,
        warning,
    })
}

/// Runs `cfg.chains` independent MALA chains (stream `c` for chain `c`) and
/// pools the retained tails.
pub fn mala<T: LogTarget + ?Sized>(target: &T, cfg: &ChainConfig, seed: u64) -> Result<MalaOutput> {
    let dim = target.dim();
    cfg.validate(dim)?;
    let step = match cfg.step {
        Some(s) => s,
        None => tune_step(target, cfg.start(0), &cfg.tuner, rng::derive_seed(seed, 1))?,
    };
    let chain_seed = rng::derive_seed(seed, 0);
    let results = par::map_indexed(cfg.chains, |c| run_chain(target, cfg, step, c, chain_seed));
    let mut out = MalaOutput {
        dim,
        samples: Vec::new(),
        trace: Trace::new(dim),
        acceptance: Vec::with_capacity(cfg.chains),
        step,
        warnings: Vec::new(),
    };
    for r in results {
        let r = r?;
        out.trace.extend_from(&r.trace, 0);
        out.samples.extend_from_slice(&r.kept);
        out.acceptance.push(r.acceptance);
        out.warnings.extend(r.warning);
    }
    Ok(out)
}

/// `log q₀(θ) + Σ_i log p_θ(y_i | x_i)`.
pub struct BayesTarget<'a, F, R: ?Sized> {
    data: &'a Dataset,
    model: &'a GaussianObsModel<F>,
    reference: &'a R,
}

impl<'a, F: ForwardMap, R: ReferenceMeasure + ?Sized> BayesTarget<'a, F, R> {
    pub fn new(data: &'a Dataset, model: &'a GaussianObsModel<F>, reference: &'a R) -> Result<Self> {
        if data.obs_dim() != model.obs_dim() || reference.dim() != model.param_dim() {
            return Err(Error::shape("dataset, model and reference dimensions disagree"));
        }
        if model.sigma().iter().any(|s| *s == 0.0) {
            return Err(Error::precondition("standard posterior needs positive observation noise"));
        }
        Ok(Self { data, model, reference })
    }

    fn eval(&self, theta: &[f64], sens: bool) -> Result<Evaluation> {
        self.model.forward().evaluate(theta, self.data.covariates(), sens)
    }
}

impl<F: ForwardMap, R: ReferenceMeasure + ?Sized> LogTarget for BayesTarget<'_, F, R> {
    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        let mut lp = self.reference.log_density(theta);
        if self.data.is_empty() {
            return Ok(lp);
        }
        let e = self.eval(theta, false)?;
        for i in 0..self.data.len() {
            lp += self.model.log_density_at(e.value(i), self.data.observation(i));
        }
        Ok(lp)
    }

    fn log_density_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.dim();
        let mut grad = vec![0.0; p];
        let mut lp = self.reference.log_density(theta);
        self.reference.add_score(theta, 1.0, &mut grad);
        if self.data.is_empty() {
            return Ok((lp, grad));
        }
        let e = self.eval(theta, true)?;
        let sigma = self.model.sigma();
        for i in 0..self.data.len() {
            let (w, y) = (e.value(i), self.data.observation(i));
            lp += self.model.log_density_at(w, y);
            let s = e.sensitivity(i).unwrap_or_default();
            for d in 0..w.len() {
                let c = (y[d] - w[d]) / (sigma[d] * sigma[d]);
                for (g, sv) in grad.iter_mut().zip(&s[d * p..(d + 1) * p]) {
                    *g += c * sv;
                }
            }
        }
        Ok((lp, grad))
    }
}

/// MMD-Bayes learning rate `β`, stored as `log β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRate {
    pub log_beta: f64,
}

impl LearningRate {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::argument("learning rate must be positive"));
        }
        Ok(Self { log_beta: math::ln(beta) })
    }

    pub fn from_log(log_beta: f64) -> Result<Self> {
        if log_beta.is_nan() || log_beta == f64::INFINITY {
            return Err(Error::argument("log learning rate must be finite or −∞"));
        }
        Ok(Self { log_beta })
    }

    /// `β = exp(n · p)`.
    pub fn exp_np(n: usize, p: usize) -> Self {
        Self {
            log_beta: (n * p) as f64,
        }
    }

    /// `β · x` computed as `sign(x) · exp(log β + ln|x|)`, saturating at the
    /// largest finite double.
    pub fn scale(&self, x: f64) -> f64 {
        if x == 0.0 || self.log_beta == f64::NEG_INFINITY {
            return 0.0;
        }
        let v = math::exp(self.log_beta + math::ln(x.abs()));
        let v = if v.is_finite() { v } else { f64::MAX };
        if x < 0.0 {
            -v
        } else {
            v
        }
    }

    /// True when `exp(log β)` itself is not representable.
    pub fn overflows(&self) -> bool {
        !math::exp(self.log_beta).is_finite()
    }
}

/// `log q₀(θ) − β · MMD²(P_n, P̄_θ)`.
pub struct MmdBayesTarget<'a, 'c, F, R: ?Sized> {
    ctx: &'c SteinContext<'a, F>,
    reference: &'c R,
    rate: LearningRate,
}

impl<'a, 'c, F: ForwardMap, R: ReferenceMeasure + ?Sized> MmdBayesTarget<'a, 'c, F, R> {
    pub fn new(ctx: &'c SteinContext<'a, F>, reference: &'c R, rate: LearningRate) -> Result<Self> {
        if reference.dim() != ctx.param_dim() {
            return Err(Error::shape("reference dimension differs from model"));
        }
        Ok(Self { ctx, reference, rate })
    }

    pub fn rate(&self) -> LearningRate {
        self.rate
    }
}

impl<F: ForwardMap, R: ReferenceMeasure + ?Sized> LogTarget for MmdBayesTarget<'_, '_, F, R> {
    fn dim(&self) -> usize {
        self.ctx.param_dim()
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        let mmd2 = self.ctx.mmd_squared(theta)?;
        Ok(self.reference.log_density(theta) - self.rate.scale(mmd2))
    }

    fn log_density_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.ctx.evaluate(theta, true)?;
        let mmd2 = self.ctx.kernel_from(&e, &e);
        // d/dθ κ(θ,θ) = 2∇₁κ(θ,θ)
        let mut dk = vec![0.0; self.dim()];
        self.ctx.kernel_grad_from(&e, &e, 2.0, &mut dk)?;
        let mut grad = vec![0.0; self.dim()];
        self.reference.add_score(theta, 1.0, &mut grad);
        for (g, d) in grad.iter_mut().zip(&dk) {
            *g -= self.rate.scale(*d);
        }
        Ok((self.reference.log_density(theta) - self.rate.scale(mmd2), grad))
    }
}

/// `Σ_i log q₀(θⁱ) − (1/λ)(1/(N−1)) Σ_{i<j} κ(θⁱ, θʲ)` on `R^{Np}`.
pub struct JointParticleTarget<'a, 'c, F, R: ?Sized> {
    ctx: &'c SteinContext<'a, F>,
    reference: &'c R,
    lambda: f64,
    particles: usize,
}

impl<'a, 'c, F: ForwardMap, R: ReferenceMeasure + ?Sized> JointParticleTarget<'a, 'c, F, R> {
    pub fn new(ctx: &'c SteinContext<'a, F>, reference: &'c R, lambda: f64, particles: usize) -> Result<Self> {
        if particles < 2 {
            return Err(Error::argument("joint target needs at least two particles"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::argument("lambda must be positive"));
        }
        if reference.dim() != ctx.param_dim() {
            return Err(Error::shape("reference dimension differs from model"));
        }
        Ok(Self {
            ctx,
            reference,
            lambda,
            particles,
        })
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    fn evaluations(&self, theta: &[f64], sens: bool) -> Result<Vec<Arc<Evaluation>>> {
        let p = self.ctx.param_dim();
        if theta.len() != p * self.particles {
            return Err(Error::shape("joint state has the wrong length"));
        }
        theta
            .chunks_exact(p)
            .map(|t| {
                self.ctx
                    .model()
                    .forward()
                    .evaluate(t, self.ctx.support(), sens)
                    .map(Arc::new)
            })
            .collect()
    }
}

impl<F: ForwardMap, R: ReferenceMeasure + ?Sized> LogTarget for JointParticleTarget<'_, '_, F, R> {
    fn dim(&self) -> usize {
        self.ctx.param_dim() * self.particles
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        let p = self.ctx.param_dim();
        let evals = self.evaluations(theta, false)?;
        let n = self.particles;
        let mut pair = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                pair += self.ctx.kernel_from(&evals[i], &evals[j]);
            }
        }
        let prior: f64 = theta.chunks_exact(p).map(|t| self.reference.log_density(t)).sum();
        Ok(prior - pair / (self.lambda * (n - 1) as f64))
    }

    fn log_density_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.ctx.param_dim();
        let n = self.particles;
        let evals = self.evaluations(theta, true)?;
        let c = 1.0 / (self.lambda * (n - 1) as f64);
        let mut grad = vec![0.0; n * p];
        let mut pair = 0.0;
        for i in 0..n {
            let gi = &mut grad[i * p..(i + 1) * p];
            self.reference.add_score(&theta[i * p..(i + 1) * p], 1.0, gi);
            for j in 0..n {
                if j == i {
                    continue;
                }
                if j > i {
                    pair += self.ctx.kernel_from(&evals[i], &evals[j]);
                }
                // κ is symmetric, so ∂/∂θⁱ of κ(θⁱ,θʲ) in either slot is ∇₁κ(θⁱ,θʲ)
                self.ctx.kernel_grad_from(&evals[i], &evals[j], -c, gi)?;
            }
        }
        let prior: f64 = theta.chunks_exact(p).map(|t| self.reference.log_density(t)).sum();
        Ok((prior - pair * c, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::GaussianReference;

    struct StdNormal(usize);

    impl LogTarget for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density(&self, t: &[f64]) -> Result<f64> {
            Ok(-0.5 * t.iter().map(|v| v * v).sum::<f64>())
        }
        fn log_density_grad(&self, t: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.log_density(t)?, t.iter().map(|v| -v).collect()))
        }
    }

    #[test]
    fn standard_normal_moments() {
        let mut cfg = ChainConfig::new(vec![0.0]);
        cfg.iterations = 3000;
        cfg.chains = 10;
        cfg.retain = 1.0 / 3.0;
        let out = mala(&StdNormal(1), &cfg, 11).unwrap();
        assert_eq!(out.sample_count(), 10_000);
        let m = crate::stats::mean(&out.samples);
        let v = crate::stats::variance(&out.samples);
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((v - 1.0).abs() < 0.1, "variance {v}");
        assert!(out.acceptance.iter().all(|a| (0.3..0.9).contains(a)));
    }

    #[test]
    fn tuner_lands_in_band() {
        let s = tune_step(&StdNormal(2), &[0.0, 0.0], &TunerConfig::default(), 5).unwrap();
        let acc = pilot(&StdNormal(2), &[0.0, 0.0], s, 2000, 9).unwrap();
        assert!((0.35..0.85).contains(&acc), "acceptance {acc} at step {s}");
    }

    #[test]
    fn tiny_step_triggers_warning() {
        struct Cliff;
        impl LogTarget for Cliff {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, t: &[f64]) -> Result<f64> {
                Ok(if t[0] == 0.0 { 0.0 } else { -1e300 })
            }
            fn log_density_grad(&self, t: &[f64]) -> Result<(f64, Vec<f64>)> {
                Ok((self.log_density(t)?, vec![0.0]))
            }
        }
        let mut cfg = ChainConfig::new(vec![0.0]);
        cfg.step = Some(1.0);
        cfg.iterations = 600;
        cfg.chains = 1;
        let out = mala(&Cliff, &cfg, 1).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.acceptance[0], 0.0);
    }

    #[test]
    fn learning_rate_in_log_space() {
        let r = LearningRate::exp_np(61, 2);
        assert_eq!(r.log_beta, 122.0);
        assert!(!r.overflows());
        let big = LearningRate::exp_np(80, 11);
        assert!(big.overflows());
        assert_eq!(big.scale(1e-3), f64::MAX);
        assert_eq!(big.scale(0.0), 0.0);
        assert!((r.scale(2.0) - 2.0 * 122f64.exp()).abs() / (2.0 * 122f64.exp()) < 1e-14);
        assert!(LearningRate::new(0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ChainConfig::new(vec![0.0, 0.0]);
        assert!(c.validate(2).is_ok());
        assert!(c.validate(3).is_err());
        c.retain = 0.0;
        assert!(c.validate(2).is_err());
        c.retain = 0.5;
        c.step = Some(-1.0);
        assert!(c.validate(2).is_err());
        let _ = GaussianReference::standard(1);
    }
}
