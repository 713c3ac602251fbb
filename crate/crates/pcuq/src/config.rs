//! Run configuration: a sectioned TOML file, `--set section.key=value`
//! overrides and command-line flags, resolved into one validated
//! [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pcuq_core::experiments::{PcuqSampler, Scenario};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bayes,
    MmdBayes,
    Pcuq,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bayes => "bayes",
            Method::MmdBayes => "mmd-bayes",
            Method::Pcuq => "pcuq",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKeyword {
    /// Draws from the reference measure.
    Prior,
    /// The scenario's data-generating parameter.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Keyword(InitKeyword),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerName {
    Flow,
    JointMala,
}

impl From<SamplerName> for PcuqSampler {
    fn from(s: SamplerName) -> Self {
        match s {
            SamplerName::Flow => PcuqSampler::Flow,
            SamplerName::JointMala => PcuqSampler::JointMala,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            scenario: "lv-misspecified".into(),
            method: Method::Pcuq,
            seed: 1,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Dataset size for the location scenario.
    pub n: Option<usize>,
    /// Overrides the scenario's noise standard deviations.
    pub noise_sd: Option<Vec<f64>>,
    /// Dataset read by `fit` and `calibrate-lambda`; default `<out>/dataset.csv`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    /// Observation bandwidths; default equal to the noise standard deviations.
    pub ell_y: Option<Vec<f64>>,
    /// Covariate bandwidth; absent means the zero limit.
    pub ell_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub lambda: f64,
    pub step: f64,
    pub iterations: u64,
    pub particles: usize,
    pub init: InitSpec,
    pub thin: u64,
    pub burn_in: f64,
    pub max_halvings: u32,
    pub sampler: SamplerName,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            step: 1e-3,
            iterations: 5000,
            particles: 10,
            init: InitSpec::Keyword(InitKeyword::Truth),
            thin: 10,
            burn_in: 2.0 / 3.0,
            max_halvings: 5,
            sampler: SamplerName::Flow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    /// Proposal scale; absent means tuned by bisection.
    pub step: Option<f64>,
    pub iterations: usize,
    pub chains: usize,
    pub init: InitSpec,
    pub retain: f64,
    pub thin: usize,
    pub pilot_iterations: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            step: None,
            iterations: 5000,
            chains: 10,
            init: InitSpec::Keyword(InitKeyword::Truth),
            retain: 1.0 / 3.0,
            thin: 1,
            pilot_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmdBayesSection {
    /// `log β`; absent means `β = exp(n·p)`.
    pub log_beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    pub draws: usize,
    /// Apply the scenario's intervention (if it has one).
    pub intervention: bool,
    /// Overrides the scenario's MEK inhibitor strength.
    pub gamma: Option<f64>,
    /// Parameter samples; default `<out>/samples.csv`.
    pub samples: Option<PathBuf>,
    /// Prediction grid spacing; default the scenario grid.
    pub x_step: Option<f64>,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            draws: pcuq_core::experiments::DEFAULT_DRAWS,
            intervention: true,
            gamma: None,
            samples: None,
            x_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub log10_min: f64,
    pub log10_max: f64,
    pub rungs: usize,
    /// Flow iterations per rung; default `flow.iterations`.
    pub flow_iterations: Option<u64>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            log10_min: -3.0,
            log10_max: 2.0,
            rungs: 11,
            flow_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// Points per axis; default 401 in one dimension and 41 in two.
    pub points: Option<usize>,
    /// Half-width of the grid in reference standard deviations.
    pub width_sd: f64,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Regularisation weight; default `flow.lambda`.
    pub lambda: Option<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            points: None,
            width_sd: 5.0,
            damping: 0.5,
            tol: 1e-8,
            max_iter: 100_000,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Method label → predictive CSV; default `{run.method: <out>/predictive.csv}`.
    pub predictive: BTreeMap<String, PathBuf>,
    /// Truth CSV; default `<out>/truth_intervened.csv` for intervened
    /// predictions and `<out>/truth.csv` otherwise.
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub kernel: KernelSection,
    pub flow: FlowSection,
    pub chain: ChainSection,
    pub mmd_bayes: MmdBayesSection,
    pub predict: PredictSection,
    pub calibration: CalibrationSection,
    pub oracle: OracleSection,
    pub report: ReportSection,
}

/// Command-line values that take precedence over the file and `--set`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub scenario: Option<String>,
    pub method: Option<Method>,
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for s in &overrides.sets {
            apply_set(&mut table, s)?;
        }
        let flag = |t: &mut toml::Table, key: &str, v: toml::Value| set_path(t, key, v);
        if let Some(seed) = overrides.seed {
            let v = i64::try_from(seed).map_err(|_| CliError::Config("run.seed: must fit in i64".into()))?;
            flag(&mut table, "run.seed", toml::Value::Integer(v))?;
        }
        if let Some(out) = &overrides.out {
            flag(&mut table, "run.out", toml::Value::String(out.display().to_string()))?;
        }
        if let Some(s) = &overrides.scenario {
            flag(&mut table, "run.scenario", toml::Value::String(s.clone()))?;
        }
        if let Some(m) = overrides.method {
            flag(&mut table, "run.method", toml::Value::String(m.name().into()))?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut s = Scenario::preset(&self.run.scenario).map_err(|e| CliError::Config(format!("run.scenario: {e}")))?;
        if let Some(n) = self.data.n {
            if s.name != "gaussian-location" {
                return Err(CliError::Config("data.n: only the gaussian-location scenario has a free size".into()));
            }
            s = Scenario::gaussian_location(n);
        }
        if let Some(sd) = &self.data.noise_sd {
            s.noise = pcuq_core::experiments::NoiseSpec::Fixed(sd.clone());
        }
        if let Some(h) = self.predict.x_step {
            if s.horizon > 0.0 {
                s.prediction_times = pcuq_core::experiments::uniform_grid(0.0, s.horizon, h);
            }
        }
        s.validate().map_err(|e| CliError::Config(format!("scenario `{}`: {e}", s.name)))?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, why: &str| Err(CliError::Config(format!("{path}: {why}")));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !Scenario::PRESETS.contains(&self.run.scenario.as_str()) {
            return bad("run.scenario", &format!("expected one of {}", Scenario::PRESETS.join(", ")));
        }
        if let Some(n) = self.data.n {
            if n == 0 {
                return bad("data.n", "must be positive");
            }
        }
        if let Some(sd) = &self.data.noise_sd {
            if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return bad("data.noise_sd", "entries must be positive");
            }
        }
        if let Some(l) = &self.kernel.ell_y {
            if l.is_empty() || l.iter().any(|v| !positive(*v)) {
                return bad("kernel.ell_y", "entries must be positive");
            }
        }
        if let Some(l) = self.kernel.ell_x {
            if !positive(l) {
                return bad("kernel.ell_x", "must be positive (omit for the zero limit)");
            }
        }
        let f = &self.flow;
        if !positive(f.lambda) {
            return bad("flow.lambda", "must be positive");
        }
        if !(f.step.is_finite() && f.step >= 0.0) {
            return bad("flow.step", "must be nonnegative");
        }
        if f.iterations == 0 {
            return bad("flow.iterations", "must be positive");
        }
        if f.particles < 2 {
            return bad("flow.particles", "must be at least 2");
        }
        if f.thin == 0 {
            return bad("flow.thin", "must be positive");
        }
        if !(0.0..1.0).contains(&f.burn_in) {
            return bad("flow.burn_in", "must lie in [0, 1)");
        }
        let c = &self.chain;
        if let Some(s) = c.step {
            if !positive(s) {
                return bad("chain.step", "must be positive");
            }
        }
        if c.iterations == 0 {
            return bad("chain.iterations", "must be positive");
        }
        if c.chains == 0 {
            return bad("chain.chains", "must be positive");
        }
        if !(c.retain > 0.0 && c.retain <= 1.0) {
            return bad("chain.retain", "must lie in (0, 1]");
        }
        if c.thin == 0 {
            return bad("chain.thin", "must be positive");
        }
        if c.pilot_iterations == 0 {
            return bad("chain.pilot_iterations", "must be positive");
        }
        if let Some(b) = self.mmd_bayes.log_beta {
            if !b.is_finite() {
                return bad("mmd_bayes.log_beta", "must be finite");
            }
        }
        if self.predict.draws == 0 {
            return bad("predict.draws", "must be positive");
        }
        if let Some(g) = self.predict.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return bad("predict.gamma", "must lie in (0, 1]");
            }
        }
        if let Some(h) = self.predict.x_step {
            if !positive(h) {
                return bad("predict.x_step", "must be positive");
            }
        }
        let k = &self.calibration;
        if k.rungs == 0 {
            return bad("calibration.rungs", "must be positive");
        }
        if !(k.log10_min.is_finite() && k.log10_max.is_finite() && k.log10_min <= k.log10_max) {
            return bad("calibration.log10_min", "must not exceed calibration.log10_max");
        }
        if k.flow_iterations == Some(0) {
            return bad("calibration.flow_iterations", "must be positive");
        }
        let o = &self.oracle;
        if let Some(p) = o.points {
            if p < 2 {
                return bad("oracle.points", "must be at least 2");
            }
        }
        if !positive(o.width_sd) {
            return bad("oracle.width_sd", "must be positive");
        }
        if !(o.damping > 0.0 && o.damping <= 1.0) {
            return bad("oracle.damping", "must lie in (0, 1]");
        }
        if !positive(o.tol) {
            return bad("oracle.tol", "must be positive");
        }
        if o.max_iter == 0 {
            return bad("oracle.max_iter", "must be positive");
        }
        if let Some(l) = o.lambda {
            if !positive(l) {
                return bad("oracle.lambda", "must be positive");
            }
        }
        Ok(())
    }

    /// `<out>/<name>`.
    pub fn out_path(&self, name: &str) -> PathBuf {
        self.run.out.join(name)
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.data.path.clone().unwrap_or_else(|| self.out_path("dataset.csv"))
    }

    pub fn samples_path(&self) -> PathBuf {
        self.predict.samples.clone().unwrap_or_else(|| self.out_path("samples.csv"))
    }

    /// Geometric ladder from the calibration section.
    pub fn ladder(&self) -> Vec<f64> {
        let k = &self.calibration;
        if k.rungs == 1 {
            return vec![10f64.powf(k.log10_min)];
        }
        let d = (k.log10_max - k.log10_min) / (k.rungs - 1) as f64;
        (0..k.rungs).map(|i| 10f64.powf(k.log10_min + d * i as f64)).collect()
    }
}

/// Applies `section.key=value`; the value is parsed as a TOML value and
/// falls back to a bare string.
fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {assignment}: expected key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    set_path(table, key, value)
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("{key}: malformed key")));
    }
    let (last, sections) = parts.split_last().expect("nonempty");
    let mut t = table;
    for s in sections {
        let entry = t
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key}: `{s}` is not a section")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}
