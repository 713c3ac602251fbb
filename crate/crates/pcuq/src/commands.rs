//! The subcommands. Each one reads its inputs from the resolved
//! configuration, writes its CSV outputs under `run.out` and merges a record
//! into `<out>/manifest.json`.

use std::path::{Path, PathBuf};

use pcuq_core::experiments::{
    self, CalibrationConfig, FitOutput, PredictiveSummary, Scenario, ScenarioModel,
};
use pcuq_core::flow::{FlowConfig, FlowInit, GaussianReference, ReferenceMeasure};
use pcuq_core::kernels::{CovariateBandwidth, KernelConfig, SteinContext};
use pcuq_core::mcmc::{ChainConfig, ChainInit, LearningRate, TunerConfig};
use pcuq_core::oracle::{self, FixedPointConfig, Grid, OracleProblem};
use pcuq_core::{rng, Error};
use serde_json::json;

use crate::config::{InitKeyword, InitSpec, Method, RunConfig};
use crate::csvio;
use crate::error::CliError;
use crate::manifest::Recorder;

const FIT_SALT: u64 = 101;
const PREDICT_SALT: u64 = 102;
const CALIBRATE_SALT: u64 = 103;
const CHAIN_INIT_SALT: u64 = 104;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenerateData,
    Fit,
    Predict,
    CalibrateLambda,
    Report,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenerateData => "generate-data",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::CalibrateLambda => "calibrate-lambda",
            Command::Report => "report",
            Command::Oracle => "oracle",
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    prepare_out_dir(&cfg.run.out)?;
    let mut rec = Recorder::new(cmd.name(), &cfg.run.out);
    match cmd {
        Command::GenerateData => generate_data(cfg, &scenario, &mut rec)?,
        Command::Fit => match cfg.run.method {
            Method::Oracle => run_oracle(cfg, &scenario, &mut rec)?,
            _ => fit(cfg, &scenario, &mut rec)?,
        },
        Command::Predict => predict(cfg, &scenario, &mut rec)?,
        Command::CalibrateLambda => calibrate(cfg, &scenario, &mut rec)?,
        Command::Report => report(cfg, &scenario, &mut rec)?,
        Command::Oracle => run_oracle(cfg, &scenario, &mut rec)?,
    }
    rec.finish(cfg)
}

/// Creates the output directory and checks that it accepts files, so an
/// unusable destination fails before any computation.
fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let probe = dir.join(".pcuq-write-check");
    std::fs::write(&probe, b"").map_err(|e| CliError::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))
}

fn sigma(s: &Scenario) -> Result<Vec<f64>, CliError> {
    let sd = s.noise_sd()?;
    if sd.len() != s.obs_dim() {
        return Err(CliError::Config(format!(
            "data.noise_sd: expected {} entries, got {}",
            s.obs_dim(),
            sd.len()
        )));
    }
    Ok(sd)
}

fn kernel(cfg: &RunConfig, sigma: &[f64]) -> Result<KernelConfig, CliError> {
    let ell_y = cfg.kernel.ell_y.clone().unwrap_or_else(|| sigma.to_vec());
    if ell_y.len() != sigma.len() {
        return Err(CliError::Config(format!(
            "kernel.ell_y: expected {} entries, got {}",
            sigma.len(),
            ell_y.len()
        )));
    }
    let ell_x = match cfg.kernel.ell_x {
        Some(l) => CovariateBandwidth::Finite(l),
        None => CovariateBandwidth::ZeroLimit,
    };
    KernelConfig::new(ell_y, ell_x).map_err(|e| CliError::Config(format!("kernel: {e}")))
}

fn point(path: &str, v: &[f64], dim: usize) -> Result<Vec<f64>, CliError> {
    if v.len() != dim {
        return Err(CliError::Config(format!("{path}: expected {dim} coordinates, got {}", v.len())));
    }
    Ok(v.to_vec())
}

pub fn flow_config(cfg: &RunConfig, s: &Scenario) -> Result<FlowConfig, CliError> {
    let f = &cfg.flow;
    let init = match &f.init {
        InitSpec::Keyword(InitKeyword::Prior) => FlowInit::Prior,
        InitSpec::Keyword(InitKeyword::Truth) => FlowInit::WarmStart(s.true_theta()),
        InitSpec::Point(v) => FlowInit::WarmStart(point("flow.init", v, s.param_dim())?),
    };
    Ok(FlowConfig {
        lambda: f.lambda,
        step: f.step,
        iterations: f.iterations,
        particles: f.particles,
        init,
        thin: f.thin,
        burn_in: f.burn_in,
        max_halvings: f.max_halvings,
    })
}

pub fn chain_config(cfg: &RunConfig, s: &Scenario, reference: &GaussianReference) -> Result<ChainConfig, CliError> {
    let c = &cfg.chain;
    let p = s.param_dim();
    let init = match &c.init {
        InitSpec::Keyword(InitKeyword::Truth) => ChainInit::Point(s.true_theta()),
        InitSpec::Keyword(InitKeyword::Prior) => {
            let seed = rng::derive_seed(cfg.run.seed, CHAIN_INIT_SALT);
            ChainInit::Points(
                (0..c.chains)
                    .map(|k| {
                        let mut t = vec![0.0; p];
                        reference.sample(&mut rng::stream(seed, k as u64), &mut t);
                        t
                    })
                    .collect(),
            )
        }
        InitSpec::Point(v) => ChainInit::Point(point("chain.init", v, p)?),
    };
    Ok(ChainConfig {
        step: c.step,
        iterations: c.iterations,
        chains: c.chains,
        init,
        retain: c.retain,
        thin: c.thin,
        tuner: TunerConfig {
            pilot_iterations: c.pilot_iterations,
            ..TunerConfig::default()
        },
    })
}

fn read_data(cfg: &RunConfig, s: &Scenario) -> Result<pcuq_core::Dataset, CliError> {
    let path = cfg.dataset_path();
    let data = csvio::read_dataset(&path)?;
    if data.obs_dim() != s.obs_dim() {
        return Err(CliError::format(
            &path,
            format!("scenario `{}` has {} outputs, file has {}", s.name, s.obs_dim(), data.obs_dim()),
        ));
    }
    Ok(data)
}

fn generate_data(cfg: &RunConfig, s: &Scenario, rec: &mut Recorder) -> Result<(), CliError> {
    let generated = experiments::generate_dataset(s, cfg.run.seed)?;
    let truth = s.truth(&s.prediction_times, cfg.run.seed, None)?;
    let intervened = match s.intervention {
        Some(g) => Some(s.truth(&s.prediction_times, cfg.run.seed, Some(cfg.predict.gamma.unwrap_or(g)))?),
        None => None,
    };
    rec.stage("simulate");
    let path = cfg.out_path("dataset.csv");
    csvio::write_dataset(&path, &generated.dataset)?;
    rec.output(&path);
    let path = cfg.out_path("truth.csv");
    csvio::write_truth(&path, &truth)?;
    rec.output(&path);
    if let Some(t) = intervened {
        let path = cfg.out_path("truth_intervened.csv");
        csvio::write_truth(&path, &t)?;
        rec.output(&path);
    }
    rec.stage("write");
    rec.results.insert("observations".into(), json!(generated.dataset.len()));
    rec.results.insert("noise_sd".into(), json!(generated.noise_sd));
    Ok(())
}

fn fit(cfg: &RunConfig, s: &Scenario, rec: &mut Recorder) -> Result<(), CliError> {
    let data = read_data(cfg, s)?;
    let sigma = sigma(s)?;
    let model = s.model(sigma.clone(), None)?;
    let reference = s.reference();
    let chain = chain_config(cfg, s, &reference)?;
    let seed = rng::derive_seed(cfg.run.seed, FIT_SALT);
    rec.stage("setup");
    let result = match cfg.run.method {
        Method::Bayes => experiments::fit_bayes(&data, &model, &reference, &chain, seed),
        Method::MmdBayes => {
            let ctx = SteinContext::new(&data, &model, kernel(cfg, &sigma)?)?;
            let rate = match cfg.mmd_bayes.log_beta {
                Some(b) => LearningRate::from_log(b)?,
                None => LearningRate::exp_np(data.len(), s.param_dim()),
            };
            rec.results.insert("log_beta".into(), json!(rate.log_beta));
            experiments::fit_mmd_bayes(&ctx, &reference, rate, &chain, seed)
        }
        Method::Pcuq => {
            let ctx = SteinContext::new(&data, &model, kernel(cfg, &sigma)?)?;
            let flow = flow_config(cfg, s)?;
            rec.results.insert("lambda".into(), json!(flow.lambda));
            experiments::fit_pcuq(&ctx, &reference, &flow, cfg.flow.sampler.into(), &chain, seed)
        }
        Method::Oracle => unreachable!("dispatched to the oracle command"),
    };
    rec.stage("sample");
    let out = match result {
        Ok(out) => out,
        Err(Error::Divergence {
            iteration,
            step,
            last_finite,
        }) => {
            let path = cfg.out_path("partial_ensemble.csv");
            csvio::write_samples(&path, s.param_dim(), &last_finite)?;
            rec.output(&path);
            rec.results.insert("diverged_at".into(), json!(iteration));
            let err = Error::Divergence {
                iteration,
                step,
                last_finite,
            };
            rec.warnings.push(err.to_string());
            return Err(err.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_fit(cfg, &out, rec)
}

fn write_fit(cfg: &RunConfig, out: &FitOutput, rec: &mut Recorder) -> Result<(), CliError> {
    let path = cfg.out_path("trace.csv");
    csvio::write_trace(&path, &out.trace)?;
    rec.output(&path);
    let path = cfg.out_path("samples.csv");
    csvio::write_samples(&path, out.dim, &out.samples)?;
    rec.output(&path);
    rec.stage("write");
    rec.warnings.extend(out.warnings.iter().cloned());
    rec.results.insert("method".into(), json!(cfg.run.method.name()));
    rec.results.insert("samples".into(), json!(out.sample_count()));
    rec.results.insert("step".into(), json!(out.step));
    if let Some(a) = out.acceptance {
        rec.results.insert("acceptance".into(), json!(a));
    }
    Ok(())
}

/// Model used for prediction, under the scenario's intervention when asked.
fn predictive_model(cfg: &RunConfig, s: &Scenario, sigma: Vec<f64>) -> Result<(ScenarioModel, Option<f64>), CliError> {
    let gamma = match s.intervention {
        Some(g) if cfg.predict.intervention => Some(cfg.predict.gamma.unwrap_or(g)),
        _ => None,
    };
    Ok((s.model(sigma, gamma)?, gamma))
}

fn predict(cfg: &RunConfig, s: &Scenario, rec: &mut Recorder) -> Result<(), CliError> {
    let samples_path = cfg.samples_path();
    let (dim, samples) = csvio::read_samples(&samples_path)?;
    if dim != s.param_dim() {
        return Err(CliError::format(
            &samples_path,
            format!("scenario `{}` has {} parameters, file has {dim}", s.name, s.param_dim()),
        ));
    }
    let (model, gamma) = predictive_model(cfg, s, sigma(s)?)?;
    rec.stage("setup");
    let seed = rng::derive_seed(cfg.run.seed, PREDICT_SALT);
    let summary = experiments::predictive_summary(&samples, &model, &s.prediction_times, cfg.predict.draws, seed)?;
    rec.stage("simulate");
    let path = cfg.out_path("predictive.csv");
    csvio::write_predictive(&path, &summary)?;
    rec.output(&path);
    rec.stage("write");
    rec.results.insert("gamma".into(), json!(gamma));
    rec.results.insert("mean_width".into(), json!(summary.mean_width()));
    Ok(())
}

fn calibrate(cfg: &RunConfig, s: &Scenario, rec: &mut Recorder) -> Result<(), CliError> {
    let sigma = sigma(s)?;
    let model = s.model(sigma.clone(), None)?;
    let reference = s.reference();
    let kernel = kernel(cfg, &sigma)?;
    let mut flow = flow_config(cfg, s)?;
    if let Some(it) = cfg.calibration.flow_iterations {
        flow.iterations = it;
    }
    let calib = CalibrationConfig {
        ladder: cfg.ladder(),
        chain: chain_config(cfg, s, &reference)?,
        flow,
    };
    rec.stage("setup");
    let seed = rng::derive_seed(cfg.run.seed, CALIBRATE_SALT);
    let result = experiments::calibrate_lambda(&model, &reference, &kernel, &s.true_theta(), &s.times, &calib, seed)?;
    rec.stage("calibrate");
    let path = cfg.out_path("calibration.csv");
    csvio::write_calibration(&path, &result)?;
    rec.output(&path);
    rec.stage("write");
    rec.warnings.extend(result.warnings.iter().cloned());
    if !result.monotone {
        rec.warnings
            .push("PCUQ spread is not monotone in λ; finer flow settings may be needed".into());
    }
    rec.results.insert("lambda_star".into(), json!(result.lambda_star));
    rec.results.insert("bayes_spread".into(), json!(result.bayes_spread));
    rec.results.insert("monotone".into(), json!(result.monotone));
    Ok(())
}

fn report(cfg: &RunConfig, s: &Scenario, rec: &mut Recorder) -> Result<(), CliError> {
    let mut inputs: Vec<(String, PathBuf)> = cfg
        .report
        .predictive
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if inputs.is_empty() {
        inputs.push((cfg.run.method.name().to_string(), cfg.out_path("predictive.csv")));
    }
    let truth_path = cfg.report.truth.clone().unwrap_or_else(|| {
        if s.intervention.is_some() && cfg.predict.intervention {
            cfg.out_path("truth_intervened.csv")
        } else {
            cfg.out_path("truth.csv")
        }
    });
    let truth = csvio::read_truth(&truth_path)?;
    let mut rows = Vec::with_capacity(inputs.len());
    for (label, path) in &inputs {
        let summary: PredictiveSummary = csvio::read_predictive(path)?;
        let m = experiments::coverage_metrics(&summary, &truth).map_err(|e| match e {
            Error::Argument(msg) => CliError::format(path, msg),
            other => other.into(),
        })?;
        rec.results.insert(
            label.clone(),
            json!({ "coverage": m.coverage, "mean_width": m.mean_width, "points": m.points }),
        );
        rows.push((label.clone(), m));
    }
    rec.stage("compare");
    let path = cfg.out_path("metrics.csv");
    csvio::write_metrics(&path, &rows)?;
    rec.output(&path);
    rec.stage("write");
    Ok(())
}

fn run_oracle(cfg: &RunConfig, s: &Scenario, rec: &mut Recorder) -> Result<(), CliError> {
    let p = s.param_dim();
    let points = match (cfg.oracle.points, p) {
        (Some(n), 1 | 2) => n,
        (None, 1) => 401,
        (None, 2) => 41,
        _ => {
            return Err(CliError::Config(format!(
                "oracle: the grid solver supports one or two parameters, scenario `{}` has {p}",
                s.name
            )))
        }
    };
    let data = read_data(cfg, s)?;
    let sigma = sigma(s)?;
    let model = s.model(sigma.clone(), None)?;
    let reference = s.reference();
    let ctx = SteinContext::new(&data, &model, kernel(cfg, &sigma)?)?;
    let grid = Grid::around(reference.mean(), reference.sd(), cfg.oracle.width_sd, points)?;
    let problem = OracleProblem::new(&ctx, &reference, grid)?;
    rec.stage("setup");
    let fp = FixedPointConfig {
        lambda: cfg.oracle.lambda.unwrap_or(cfg.flow.lambda),
        damping: cfg.oracle.damping,
        tol: cfg.oracle.tol,
        max_iter: cfg.oracle.max_iter,
        adaptive: true,
    };
    let sol = oracle::solve_fixed_point(&problem, &fp, None)?;
    rec.stage("solve");
    let path = cfg.out_path("oracle.csv");
    csvio::write_grid_measure(&path, &sol.measure)?;
    rec.output(&path);
    rec.stage("write");
    rec.results.insert("lambda".into(), json!(fp.lambda));
    rec.results.insert("iterations".into(), json!(sol.iterations));
    rec.results.insert("residual".into(), json!(sol.residual));
    rec.results.insert("mean".into(), json!(sol.measure.mean()));
    Ok(())
}
