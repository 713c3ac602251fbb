//! Scenario presets and the end-to-end pipeline: data generation, fitting,
//! λ calibration, predictive summaries and coverage metrics.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::dynamics::{simulate_sde, Erk, LvParams, Modulation, SdeScheme, ERK_PRESET_RATES};
use crate::flow::{self, FlowConfig, FlowInit, GaussianReference, ReferenceMeasure};
use crate::kernels::{KernelConfig, SteinContext};
use crate::math;
use crate::mcmc::{self, BayesTarget, ChainConfig, ChainInit, JointParticleTarget, LearningRate, MmdBayesTarget};
use crate::models::{ForwardMap, GaussianObsModel, LocationModel};
use crate::par;
use crate::rng;
use crate::stats;
use crate::trace::Trace;
use crate::{Error, Result};

/// Observation model used for inference in every scenario.
pub type ScenarioModel = GaussianObsModel<Box<dyn ForwardMap>>;

/// Integration step used when simulating data and truth paths.
pub const SIMULATION_STEP: f64 = 0.01;

/// Pooled predictive draws per time point.
pub const DEFAULT_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Deterministic Lotka–Volterra trajectory.
    LvOde(LvParams),
    /// Lotka–Volterra with additive intrinsic noise `ε`.
    LvSde { params: LvParams, scheme: SdeScheme },
    /// ERK system with the given rate modulation.
    Erk { modulation: Modulation },
    /// Independent latent values `mean + spread·ξ`, one per datum.
    Location { mean: f64, spread: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Per-dimension noise standard deviations.
    Fixed(Vec<f64>),
    /// `σ_i² = factor · σ̂_i²` with `σ̂_i` the standard deviation of `u_i(X)`,
    /// `X ~ Uniform(0, horizon)`, along the generating trajectory.
    RelativeToScale(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub generator: Generator,
    /// Observation covariates.
    pub times: Vec<f64>,
    pub noise: NoiseSpec,
    /// Simulation horizon; also the quadrature range for relative noise.
    pub horizon: f64,
    /// Integration step of the inference model.
    pub model_step: f64,
    /// MEK inhibitor strength applied to predictions (ERK only).
    pub intervention: Option<f64>,
    /// Grid for predictive summaries and truth comparison.
    pub prediction_times: Vec<f64>,
}

/// `start, start + step, …` up to `end` inclusive, built by multiplication.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = math::round((end - start) / step) as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

impl Scenario {
    pub const PRESETS: [&'static str; 5] = [
        "lv-well-specified",
        "lv-misspecified",
        "lv-alternative",
        "erk",
        "gaussian-location",
    ];

    /// Looks up a preset by name (see [`Scenario::PRESETS`]).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "lv-well-specified" => Ok(Self::lv_well_specified()),
            "lv-misspecified" => Ok(Self::lv_misspecified()),
            "lv-alternative" => Ok(Self::lv_alternative()),
            "erk" => Ok(Self::erk()),
            "gaussian-location" => Ok(Self::gaussian_location(20)),
            _ => Err(Error::argument(format!("unknown scenario `{name}`"))),
        }
    }

    fn lv(name: &str, generator: Generator) -> Self {
        Self {
            name: name.to_string(),
            generator,
            times: uniform_grid(0.0, 60.0, 1.0),
            noise: NoiseSpec::Fixed(vec![1.0, 1.0]),
            horizon: 60.0,
            model_step: SIMULATION_STEP,
            intervention: None,
            prediction_times: uniform_grid(0.0, 60.0, 0.25),
        }
    }

    /// Data from the Lotka–Volterra ODE at the preset rates.
    pub fn lv_well_specified() -> Self {
        Self::lv("lv-well-specified", Generator::LvOde(LvParams::preset()))
    }

    /// Data from the stochastic Lotka–Volterra model with `ε = (0, 0.4)`.
    pub fn lv_misspecified() -> Self {
        Self::lv(
            "lv-misspecified",
            Generator::LvSde {
                params: LvParams::preset(),
                scheme: SdeScheme::ReversibleHeun,
            },
        )
    }

    /// Stochastic data at the alternative rates and initial populations.
    pub fn lv_alternative() -> Self {
        Self::lv(
            "lv-alternative",
            Generator::LvSde {
                params: LvParams::alternative(),
                scheme: SdeScheme::ReversibleHeun,
            },
        )
    }

    /// Modulated ERK data at `x_i = 0.5625 i`, `i = 1..80`, predicting under
    /// a MEK inhibitor with `γ = 0.01`.
    pub fn erk() -> Self {
        Self {
            name: "erk".to_string(),
            generator: Generator::Erk {
                modulation: Modulation::Sinusoidal,
            },
            times: (1..=80).map(|i| i as f64 * 0.5625).collect(),
            noise: NoiseSpec::RelativeToScale(0.01),
            horizon: 60.0,
            model_step: 0.05625,
            intervention: Some(0.01),
            prediction_times: uniform_grid(0.0, 60.0, 0.25),
        }
    }

    /// `n` independent draws with latent spread 0.5 around 0.5 and unit
    /// observation noise, fitted with a unit-noise location model.
    pub fn gaussian_location(n: usize) -> Self {
        Self {
            name: "gaussian-location".to_string(),
            generator: Generator::Location { mean: 0.5, spread: 0.5 },
            times: vec![0.0; n],
            noise: NoiseSpec::Fixed(vec![1.0]),
            horizon: 0.0,
            model_step: SIMULATION_STEP,
            intervention: None,
            prediction_times: vec![0.0],
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self.generator {
            Generator::LvOde(_) | Generator::LvSde { .. } => 2,
            Generator::Erk { .. } => 11,
            Generator::Location { .. } => 1,
        }
    }

    pub fn param_dim(&self) -> usize {
        match self.generator {
            Generator::LvOde(_) | Generator::LvSde { .. } => 2,
            Generator::Erk { .. } => 11,
            Generator::Location { .. } => 1,
        }
    }

    fn is_dynamic(&self) -> bool {
        !matches!(self.generator, Generator::Location { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::argument("scenario has no observation times"));
        }
        if !(self.model_step.is_finite() && self.model_step > 0.0) {
            return Err(Error::argument("model step must be positive"));
        }
        if self.is_dynamic() {
            let bad = |t: &f64| !(t.is_finite() && *t >= 0.0 && *t <= self.horizon * (1.0 + 1e-12));
            if self.times.iter().chain(&self.prediction_times).any(bad) {
                return Err(Error::argument("observation and prediction times must lie in [0, horizon]"));
            }
            if self.times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::argument("observation times must be strictly increasing"));
            }
        }
        if self.prediction_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::argument("prediction times must be strictly increasing"));
        }
        match &self.noise {
            NoiseSpec::Fixed(sd) if sd.len() != self.obs_dim() => {
                return Err(Error::shape("noise vector length differs from observation dimension"))
            }
            NoiseSpec::Fixed(sd) if sd.iter().any(|s| !(s.is_finite() && *s >= 0.0)) => {
                return Err(Error::argument("noise standard deviations must be nonnegative"))
            }
            NoiseSpec::RelativeToScale(f) if !(f.is_finite() && *f >= 0.0) => {
                return Err(Error::argument("relative noise factor must be nonnegative"))
            }
            NoiseSpec::RelativeToScale(_) if !self.is_dynamic() => {
                return Err(Error::argument("relative noise needs a dynamic generator"))
            }
            _ => {}
        }
        if let Some(g) = self.intervention {
            if !matches!(self.generator, Generator::Erk { .. }) {
                return Err(Error::UnsupportedModel("interventions are defined for the ERK model only"));
            }
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::argument("MEK inhibitor scale must lie in (0, 1]"));
            }
        }
        if let Generator::LvOde(p) | Generator::LvSde { params: p, .. } = &self.generator {
            p.validate()?;
        }
        if let Generator::Location { mean, spread } = self.generator {
            if !(mean.is_finite() && spread.is_finite() && spread >= 0.0) {
                return Err(Error::argument("location generator needs finite mean and nonnegative spread"));
            }
        }
        Ok(())
    }

    /// Noise standard deviations, resolved against the generating trajectory
    /// for relative noise.
    pub fn noise_sd(&self) -> Result<Vec<f64>> {
        match &self.noise {
            NoiseSpec::Fixed(sd) => Ok(sd.clone()),
            NoiseSpec::RelativeToScale(factor) => {
                let grid = uniform_grid(0.0, self.horizon, SIMULATION_STEP);
                let truth = self.deterministic_path(&grid, None)?;
                Ok(time_average_sd(&truth)
                    .into_iter()
                    .map(|s| math::sqrt(*factor) * s)
                    .collect())
            }
        }
    }

    /// Parameter value that generated the data when the model is well
    /// specified (and the centre of the generator otherwise).
    pub fn true_theta(&self) -> Vec<f64> {
        match &self.generator {
            Generator::LvOde(p) | Generator::LvSde { params: p, .. } => {
                vec![math::logit(p.alpha), math::logit(p.beta)]
            }
            Generator::Erk { .. } => ERK_PRESET_RATES.iter().map(|&r| math::logit(r)).collect(),
            Generator::Location { mean, .. } => vec![*mean],
        }
    }

    /// Standard normal reference measure on the parameter space.
    pub fn reference(&self) -> GaussianReference {
        GaussianReference::standard(self.param_dim())
    }

    /// Zero-limit kernel with `ℓ_Y = σ`.
    pub fn kernel(&self, sigma: &[f64]) -> Result<KernelConfig> {
        KernelConfig::zero_limit(sigma.to_vec())
    }

    /// Inference model with noise `sigma`, optionally under a MEK inhibitor.
    pub fn model(&self, sigma: Vec<f64>, intervention: Option<f64>) -> Result<ScenarioModel> {
        let forward: Box<dyn ForwardMap> = match &self.generator {
            Generator::LvOde(p) | Generator::LvSde { params: p, .. } => {
                if intervention.is_some() {
                    return Err(Error::UnsupportedModel("interventions are defined for the ERK model only"));
                }
                Box::new(p.forward_map()?.with_step(self.model_step)?)
            }
            Generator::Erk { .. } => {
                let sys = Erk::new(Modulation::None, intervention)?;
                Box::new(sys.forward_map(&ERK_PRESET_RATES)?.with_step(self.model_step)?)
            }
            Generator::Location { .. } => {
                if intervention.is_some() {
                    return Err(Error::UnsupportedModel("interventions are defined for the ERK model only"));
                }
                Box::new(LocationModel { dim: 1 })
            }
        };
        GaussianObsModel::new(forward, sigma)
    }

    fn deterministic_path(&self, times: &[f64], intervention: Option<f64>) -> Result<Truth> {
        let traj = match &self.generator {
            Generator::LvOde(p) | Generator::LvSde { params: p, .. } => p.problem()?.integrate(times, SIMULATION_STEP)?,
            Generator::Erk { modulation } => Erk::preset(*modulation, intervention)?.integrate(times, SIMULATION_STEP)?,
            Generator::Location { mean, .. } => {
                return Ok(Truth {
                    times: times.to_vec(),
                    dim: 1,
                    states: vec![*mean; times.len()],
                })
            }
        };
        Ok(Truth {
            times: times.to_vec(),
            dim: traj.state_dim(),
            states: traj.states().to_vec(),
        })
    }

    /// Noiseless generating path on `times`. Stochastic generators use the
    /// same path as [`generate_dataset`] with equal seed; the location
    /// generator reports its centre.
    pub fn truth(&self, times: &[f64], seed: u64, intervention: Option<f64>) -> Result<Truth> {
        self.validate()?;
        match &self.generator {
            Generator::LvSde { params, scheme } => {
                if intervention.is_some() {
                    return Err(Error::UnsupportedModel("interventions are defined for the ERK model only"));
                }
                let horizon = times.iter().copied().fold(self.horizon, f64::max);
                let path = simulate_sde(&params.sde(*scheme)?, SIMULATION_STEP, horizon, rng::derive_seed(seed, 0))?;
                Ok(Truth {
                    times: times.to_vec(),
                    dim: 2,
                    states: path.states_at(times)?,
                })
            }
            _ => self.deterministic_path(times, intervention),
        }
    }
}

/// Per-component standard deviation over a uniform time grid (trapezoidal
/// weights).
fn time_average_sd(path: &Truth) -> Vec<f64> {
    let m = path.times.len();
    let w = |k: usize| if m > 1 && (k == 0 || k == m - 1) { 0.5 } else { 1.0 };
    let total: f64 = (0..m).map(w).sum();
    (0..path.dim)
        .map(|i| {
            let mean = (0..m).map(|k| w(k) * path.state(k)[i]).sum::<f64>() / total;
            let var = (0..m)
                .map(|k| {
                    let d = path.state(k)[i] - mean;
                    w(k) * d * d
                })
                .sum::<f64>()
                / total;
            math::sqrt(var)
        })
        .collect()
}

/// Noiseless reference values on a time grid, row-major `times × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub times: Vec<f64>,
    pub dim: usize,
    pub states: Vec<f64>,
}

impl Truth {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub dataset: Dataset,
    /// Standard deviations of the added noise; the inference model uses them.
    pub noise_sd: Vec<f64>,
}

/// Simulates the generator, reads it at the observation times and adds
/// independent Gaussian noise. The latent path uses `derive_seed(seed, 0)`,
/// the noise `derive_seed(seed, 1)`.
pub fn generate_dataset(scenario: &Scenario, seed: u64) -> Result<GeneratedData> {
    scenario.validate()?;
    let noise_sd = scenario.noise_sd()?;
    let d = scenario.obs_dim();
    let latent = match scenario.generator {
        Generator::Location { mean, spread } => {
            let mut r = rng::stream(rng::derive_seed(seed, 0), 0);
            (0..scenario.times.len())
                .map(|_| mean + spread * rng::standard_normal(&mut r))
                .collect()
        }
        _ => scenario.truth(&scenario.times, seed, None)?.states,
    };
    let mut r = rng::stream(rng::derive_seed(seed, 1), 0);
    let mut obs = latent;
    for row in obs.chunks_exact_mut(d) {
        for (v, s) in row.iter_mut().zip(&noise_sd) {
            *v += s * rng::standard_normal(&mut r);
        }
    }
    Ok(GeneratedData {
        dataset: Dataset::new(scenario.times.clone(), obs, d)?,
        noise_sd,
    })
}

/// Sampler used for the PCUQ mixing distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcuqSampler {
    /// Euler–Maruyama particle flow.
    Flow,
    /// MALA on the joint density of the `N` particles.
    JointMala,
}

/// Parameter samples with their trace.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub dim: usize,
    /// Retained parameters, pooled, row-major.
    pub samples: Vec<f64>,
    /// Rows `(iteration, chain or particle, θ)`.
    pub trace: Trace,
    pub step: f64,
    /// Mean MALA acceptance rate, when a MALA sampler was used.
    pub acceptance: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitOutput {
    pub fn sample_count(&self) -> usize {
        self.samples.len() / self.dim
    }

    fn from_mala(out: mcmc::MalaOutput) -> Self {
        let acc = stats::mean(&out.acceptance);
        Self {
            dim: out.dim,
            samples: out.samples,
            trace: out.trace,
            step: out.step,
            acceptance: Some(acc),
            warnings: out.warnings,
        }
    }
}

/// Standard Bayesian posterior by MALA.
pub fn fit_bayes<R: ReferenceMeasure + ?Sized>(
    data: &Dataset,
    model: &ScenarioModel,
    reference: &R,
    chain: &ChainConfig,
    seed: u64,
) -> Result<FitOutput> {
    let target = BayesTarget::new(data, model, reference)?;
    Ok(FitOutput::from_mala(mcmc::mala(&target, chain, seed)?))
}

/// MMD-Bayes generalised posterior by MALA.
pub fn fit_mmd_bayes<R: ReferenceMeasure + ?Sized>(
    ctx: &SteinContext<'_, Box<dyn ForwardMap>>,
    reference: &R,
    rate: LearningRate,
    chain: &ChainConfig,
    seed: u64,
) -> Result<FitOutput> {
    let target = MmdBayesTarget::new(ctx, reference, rate)?;
    let mut out = FitOutput::from_mala(mcmc::mala(&target, chain, seed)?);
    if rate.overflows() {
        out.warnings.push(format!(
            "learning rate exp({}) exceeds the f64 range; the MMD term saturates at f64::MAX",
            rate.log_beta
        ));
    }
    Ok(out)
}

/// PCUQ mixing distribution. The flow uses `flow_cfg` directly; the joint
/// sampler runs `chain` on `R^{Np}` with `N`, λ and the initialisation taken
/// from `flow_cfg`, and pools every particle of every retained state.
pub fn fit_pcuq<R: ReferenceMeasure + ?Sized>(
    ctx: &SteinContext<'_, Box<dyn ForwardMap>>,
    reference: &R,
    flow_cfg: &FlowConfig,
    sampler: PcuqSampler,
    chain: &ChainConfig,
    seed: u64,
) -> Result<FitOutput> {
    match sampler {
        PcuqSampler::Flow => {
            let out = flow::run(ctx, reference, flow_cfg, seed)?;
            Ok(FitOutput {
                dim: out.ensemble.dim(),
                samples: out.retained,
                trace: out.trace,
                step: out.step,
                acceptance: None,
                warnings: out.warnings,
            })
        }
        PcuqSampler::JointMala => {
            let p = reference.dim();
            let n = flow_cfg.particles;
            flow_cfg.validate(p)?;
            let start = match &flow_cfg.init {
                FlowInit::Prior => {
                    let mut t = vec![0.0; n * p];
                    let init_seed = rng::derive_seed(seed, 2);
                    for (i, row) in t.chunks_exact_mut(p).enumerate() {
                        reference.sample(&mut rng::stream(init_seed, i as u64), row);
                    }
                    t
                }
                FlowInit::WarmStart(t) => t.repeat(n),
                FlowInit::Ensemble(e) => e.clone(),
            };
            let mut cfg = chain.clone();
            cfg.init = ChainInit::Point(start);
            let target = JointParticleTarget::new(ctx, reference, flow_cfg.lambda, n)?;
            let out = mcmc::mala(&target, &cfg, seed)?;
            let mut trace = Trace::new(p);
            for (it, c, theta) in out.trace.rows() {
                for (i, t) in theta.chunks_exact(p).enumerate() {
                    trace.push(it, c * n + i, t);
                }
            }
            Ok(FitOutput {
                dim: p,
                samples: out.samples,
                trace,
                step: out.step,
                acceptance: Some(stats::mean(&out.acceptance)),
                warnings: out.warnings,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub ladder: Vec<f64>,
    pub chain: ChainConfig,
    /// λ is overwritten per rung.
    pub flow: FlowConfig,
}

impl CalibrationConfig {
    /// Ladder `10^{-3}, 10^{-2.5}, …, 10²`.
    pub fn default_ladder() -> Vec<f64> {
        (0..11).map(|k| math::exp10(-3.0 + 0.5 * k as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub lambda_star: f64,
    pub ladder: Vec<f64>,
    /// Covariance trace of the Bayes posterior samples.
    pub bayes_spread: f64,
    /// Covariance trace of the PCUQ samples per rung; `None` for failed rungs.
    pub pcuq_spread: Vec<Option<f64>>,
    /// Whether the successful rungs have non-decreasing spread in λ.
    pub monotone: bool,
    pub warnings: Vec<String>,
}

/// Chooses λ so that the PCUQ spread matches the Bayes posterior spread on
/// data simulated from the model itself at `theta`.
///
/// Synthetic noise uses `derive_seed(seed, 0)`, the Bayes chains
/// `derive_seed(seed, 1)` and every rung of the flow `derive_seed(seed, 2)`.
pub fn calibrate_lambda<R: ReferenceMeasure + ?Sized>(
    model: &ScenarioModel,
    reference: &R,
    kernel: &KernelConfig,
    theta: &[f64],
    times: &[f64],
    cfg: &CalibrationConfig,
    seed: u64,
) -> Result<CalibrationResult> {
    if cfg.ladder.is_empty() || cfg.ladder.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::argument("λ ladder must be nonempty and positive"));
    }
    let p = model.param_dim();
    let d = model.obs_dim();
    let eval = model.forward().evaluate(theta, times, false)?;
    let mut r = rng::stream(rng::derive_seed(seed, 0), 0);
    let mut obs = eval.values().to_vec();
    for row in obs.chunks_exact_mut(d) {
        for (v, s) in row.iter_mut().zip(model.sigma()) {
            *v += s * rng::standard_normal(&mut r);
        }
    }
    let data = Dataset::new(times.to_vec(), obs, d)?;
    let bayes = fit_bayes(&data, model, reference, &cfg.chain, rng::derive_seed(seed, 1))?;
    let bayes_spread = stats::covariance_trace(&bayes.samples, p);
    let ctx = SteinContext::new(&data, model, kernel.clone())?;
    let mut warnings = bayes.warnings;
    let mut spread = Vec::with_capacity(cfg.ladder.len());
    for &lambda in &cfg.ladder {
        let mut fc = cfg.flow.clone();
        fc.lambda = lambda;
        match flow::run(&ctx, reference, &fc, rng::derive_seed(seed, 2)) {
            Ok(out) => {
                warnings.extend(out.warnings);
                spread.push(Some(stats::covariance_trace(&out.retained, p)));
            }
            Err(e) if e.is_numerical() => {
                warnings.push(format!("rung λ = {lambda:e} skipped: {e}"));
                spread.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let best = spread
        .iter()
        .enumerate()
        .filter_map(|(k, s)| s.map(|s| (k, math::abs(s - bayes_spread) / bayes_spread)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::precondition("every λ rung failed"))?;
    let ok: Vec<f64> = spread.iter().flatten().copied().collect();
    let monotone = ok.windows(2).all(|w| w[1] >= w[0]);
    Ok(CalibrationResult {
        lambda_star: cfg.ladder[best.0],
        ladder: cfg.ladder.clone(),
        bayes_spread,
        pcuq_spread: spread,
        monotone,
        warnings,
    })
}

/// Mean and quartiles of a predictive distribution per time and dimension,
/// each row-major `times × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub times: Vec<f64>,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub q25: Vec<f64>,
    pub q50: Vec<f64>,
    pub q75: Vec<f64>,
}

impl PredictiveSummary {
    /// Mean width `q75 − q25` per dimension.
    pub fn mean_width(&self) -> Vec<f64> {
        let t = self.times.len() as f64;
        (0..self.dim)
            .map(|i| {
                self.q75
                    .iter()
                    .zip(&self.q25)
                    .skip(i)
                    .step_by(self.dim)
                    .map(|(a, b)| a - b)
                    .sum::<f64>()
                    / t
            })
            .collect()
    }
}

/// Mixture predictive of `params` (row-major, `M × p`) at `times`, from
/// `draws` pooled draws per time point.
///
/// Draw `k` uses parameter `k mod M` when `M ≤ draws`, otherwise an evenly
/// spaced subset of `draws` parameters. Noise at time index `t` comes from
/// stream `t` of `seed`.
pub fn predictive_summary(
    params: &[f64],
    model: &ScenarioModel,
    times: &[f64],
    draws: usize,
    seed: u64,
) -> Result<PredictiveSummary> {
    let p = model.param_dim();
    let d = model.obs_dim();
    if params.is_empty() || params.len() % p != 0 {
        return Err(Error::precondition("predictive summary needs a nonempty parameter block"));
    }
    if draws == 0 || times.is_empty() {
        return Err(Error::argument("predictive summary needs draws and times"));
    }
    let m = params.len() / p;
    let used: Vec<usize> = if m <= draws {
        (0..m).collect()
    } else {
        (0..draws).map(|k| k * m / draws).collect()
    };
    let paths = par::map_indexed(used.len(), |j| {
        let theta = &params[used[j] * p..(used[j] + 1) * p];
        model.forward().evaluate(theta, times, false)
    });
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    let sigma = model.sigma();
    let cells = par::map_indexed(times.len(), |t| {
        let mut r = rng::stream(seed, t as u64);
        let mut cols = vec![Vec::with_capacity(draws); d];
        for k in 0..draws {
            let w = paths[k % paths.len()].value(t);
            for i in 0..d {
                cols[i].push(w[i] + sigma[i] * rng::standard_normal(&mut r));
            }
        }
        cols.into_iter()
            .map(|c| {
                let q = stats::quantiles(&c, &[0.25, 0.5, 0.75]);
                [stats::mean(&c), q[0], q[1], q[2]]
            })
            .collect::<Vec<_>>()
    });
    let mut s = PredictiveSummary {
        times: times.to_vec(),
        dim: d,
        mean: Vec::with_capacity(times.len() * d),
        q25: Vec::with_capacity(times.len() * d),
        q50: Vec::with_capacity(times.len() * d),
        q75: Vec::with_capacity(times.len() * d),
    };
    for cell in cells.iter().flatten() {
        s.mean.push(cell[0]);
        s.q25.push(cell[1]);
        s.q50.push(cell[2]);
        s.q75.push(cell[3]);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMetrics {
    /// Fraction of truth values inside `[q25, q75]`, per dimension.
    pub coverage: Vec<f64>,
    /// Mean band width per dimension.
    pub mean_width: Vec<f64>,
    /// Number of shared time points.
    pub points: usize,
}

/// Compares a predictive band with the truth on the times both share
/// (matched to 1e-9 relative).
pub fn coverage_metrics(summary: &PredictiveSummary, truth: &Truth) -> Result<CoverageMetrics> {
    if truth.dim != summary.dim {
        return Err(Error::shape("truth and summary have different dimensions"));
    }
    let d = summary.dim;
    let mut hits = vec![0usize; d];
    let mut width = vec![0.0; d];
    let mut points = 0;
    let mut j = 0;
    for (k, &t) in summary.times.iter().enumerate() {
        while j < truth.times.len() && truth.times[j] < t && !same_time(truth.times[j], t) {
            j += 1;
        }
        if j == truth.times.len() || !same_time(truth.times[j], t) {
            continue;
        }
        points += 1;
        let u = truth.state(j);
        for i in 0..d {
            let (lo, hi) = (summary.q25[k * d + i], summary.q75[k * d + i]);
            if lo <= u[i] && u[i] <= hi {
                hits[i] += 1;
            }
            width[i] += hi - lo;
        }
    }
    if points == 0 {
        return Err(Error::argument(format!(
            "prediction grid [{}, {}] ({} points) shares no time with truth grid [{}, {}] ({} points)",
            summary.times.first().copied().unwrap_or(f64::NAN),
            summary.times.last().copied().unwrap_or(f64::NAN),
            summary.times.len(),
            truth.times.first().copied().unwrap_or(f64::NAN),
            truth.times.last().copied().unwrap_or(f64::NAN),
            truth.times.len(),
        )));
    }
    Ok(CoverageMetrics {
        coverage: hits.iter().map(|&h| h as f64 / points as f64).collect(),
        mean_width: width.iter().map(|w| w / points as f64).collect(),
        points,
    })
}

fn same_time(a: f64, b: f64) -> bool {
    math::abs(a - b) <= 1e-9 * math::abs(a).max(math::abs(b)).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn location_model(sigma: f64) -> ScenarioModel {
        GaussianObsModel::new(Box::new(LocationModel { dim: 1 }) as Box<dyn ForwardMap>, vec![sigma]).unwrap()
    }

    #[test]
    fn grids_hit_endpoints() {
        let g = uniform_grid(0.0, 60.0, 0.25);
        assert_eq!(g.len(), 241);
        assert_eq!(*g.last().unwrap(), 60.0);
    }

    #[test]
    fn presets_validate() {
        for name in Scenario::PRESETS {
            Scenario::preset(name).unwrap().validate().unwrap();
        }
        assert!(Scenario::preset("nope").is_err());
    }

    #[test]
    fn zero_noise_ode_data_equal_trajectory() {
        let mut s = Scenario::lv_well_specified();
        s.noise = NoiseSpec::Fixed(vec![0.0, 0.0]);
        let g = generate_dataset(&s, 3).unwrap();
        let truth = s.truth(&s.times, 3, None).unwrap();
        assert_eq!(g.dataset.observations(), &truth.states[..]);
        assert_eq!(g.dataset.len(), 61);
    }

    #[test]
    fn intervention_rejected_outside_erk() {
        let mut s = Scenario::lv_well_specified();
        s.intervention = Some(0.5);
        assert!(matches!(s.validate(), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn single_parameter_zero_noise_quartiles_equal_value() {
        let m = location_model(0.0);
        let s = predictive_summary(&[1.25], &m, &[0.0, 1.0], 100, 1).unwrap();
        for v in [&s.mean, &s.q25, &s.q50, &s.q75] {
            assert!(v.iter().all(|&x| x == 1.25));
        }
    }

    #[test]
    fn coverage_hand_cases() {
        let s = PredictiveSummary {
            times: vec![0.0, 1.0, 2.0],
            dim: 1,
            mean: vec![0.0; 3],
            q25: vec![-1.0, 5.0, 5.0],
            q75: vec![1.0, 5.0, 5.0],
            q50: vec![0.0; 3],
        };
        let truth = Truth {
            times: vec![0.0, 1.0, 2.0],
            dim: 1,
            states: vec![0.0, 0.0, 0.0],
        };
        let c = coverage_metrics(&s, &truth).unwrap();
        assert!((c.coverage[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.mean_width[0] - 2.0 / 3.0).abs() < 1e-15);
        let inf = PredictiveSummary {
            q25: vec![f64::NEG_INFINITY; 3],
            q75: vec![f64::INFINITY; 3],
            ..s.clone()
        };
        assert_eq!(coverage_metrics(&inf, &truth).unwrap().coverage[0], 1.0);
        let off = Truth {
            times: vec![7.0],
            dim: 1,
            states: vec![0.0],
        };
        assert!(matches!(coverage_metrics(&s, &off), Err(Error::Argument(_))));
    }

    #[test]
    fn default_ladder_spans_five_decades() {
        let l = CalibrationConfig::default_ladder();
        assert_eq!(l.len(), 11);
        assert!((l[0] - 1e-3).abs() < 1e-18 && (l[10] - 100.0).abs() < 1e-12);
    }
}
