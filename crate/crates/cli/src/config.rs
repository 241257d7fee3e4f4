//! Run configuration.
//!
//! One TOML file describes a run. Values are resolved in this order, later
//! sources winning:
//!
//! 1. built-in defaults,
//! 2. the `paper_scale` preset, when enabled,
//! 3. the configuration file,
//! 4. command-line flags.
//!
//! The preset only touches sizes and iteration counts, and file values for
//! those fields are replaced when it is on. The root `seed` is copied into
//! every experiment section. Relative paths in a file are taken relative to
//! the file's directory.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ebcal::data::{Interval, ModelRunSet};
use ebcal::estimate::optim::NelderMeadOptions;
use ebcal::estimate::{FitOptions, LossKind, OrderingPolicy};
use ebcal::harness::{
    search_schedule, DominanceConfig, EquivalenceOptions, LdmConfig, PriorCell, SensitivityConfig, WaveStudyConfig,
};
use ebcal::io::read_observations_file;
use ebcal::kernels::{KernelFamily, KernelSpec};
use ebcal::mcmc::ChainOptions;
use ebcal::mean::{Basis, MeanSpec};
use ebcal::model::{CalibrationModel, ParamBounds};
use ebcal::predict::PredictionTarget;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "EBCAL_OUT";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Fit,
    Predict,
    Mcmc,
    WaveStudy,
    Sensitivity,
    Ldm,
    KernelDominance,
    EquivalenceCheck,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::Fit,
        Task::Predict,
        Task::Mcmc,
        Task::WaveStudy,
        Task::Sensitivity,
        Task::Ldm,
        Task::KernelDominance,
        Task::EquivalenceCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Fit => "fit",
            Task::Predict => "predict",
            Task::Mcmc => "mcmc",
            Task::WaveStudy => "wave-study",
            Task::Sensitivity => "sensitivity",
            Task::Ldm => "ldm",
            Task::KernelDominance => "kernel-dominance",
            Task::EquivalenceCheck => "equivalence-check",
        }
    }

    pub fn from_name(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }

    fn uses_data(self) -> bool {
        matches!(self, Task::Fit | Task::Predict | Task::Mcmc)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LossChoice {
    #[default]
    Mle,
    Cv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    Nn,
    Given,
    Dim0,
}

impl From<OrderingArg> for OrderingPolicy {
    fn from(o: OrderingArg) -> Self {
        match o {
            OrderingArg::Nn => OrderingPolicy::NearestNeighbor,
            OrderingArg::Given => OrderingPolicy::AsGiven,
            OrderingArg::Dim0 => OrderingPolicy::SortDim0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with columns `t0..t{p-1}, y`.
    pub observations: Option<PathBuf>,
    /// CSV with columns `t0..t{p-1}, c0..c{q-1}, z`.
    pub runs: Option<PathBuf>,
    /// CSV with columns `t0..t{p-1}`; a grid over the domain otherwise.
    pub targets: Option<PathBuf>,
    /// Input domain, one `[lower, upper]` per column; the bounding box of
    /// the observations otherwise.
    pub domain: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel_f: KernelFamily,
    pub kernel_delta: KernelFamily,
    pub mean_f: Basis,
    pub mean_delta: Basis,
    /// Search box for θ; the bounding box of the run settings otherwise.
    pub theta: Option<Vec<[f64; 2]>>,
    pub amplitude_f: [f64; 2],
    pub length_scale_f: [f64; 2],
    pub amplitude_delta: [f64; 2],
    pub length_scale_delta: [f64; 2],
    /// Shared by every mean coefficient.
    pub coefficient: [f64; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel_f: KernelFamily::SquaredExponentialAniso,
            kernel_delta: KernelFamily::SquaredExponentialAniso,
            mean_f: Basis::Zero,
            mean_delta: Basis::Zero,
            theta: None,
            amplitude_f: [0.01, 100.0],
            length_scale_f: [0.01, 10.0],
            amplitude_delta: [0.001, 100.0],
            length_scale_delta: [0.01, 10.0],
            coefficient: [-100.0, 100.0],
        }
    }
}

fn interval(b: [f64; 2]) -> Interval {
    Interval::new(b[0], b[1])
}

/// Geometric midpoint for positive boxes, arithmetic otherwise.
fn start_value(b: [f64; 2]) -> f64 {
    if b[0] > 0.0 {
        (b[0] * b[1]).sqrt()
    } else {
        0.5 * (b[0] + b[1])
    }
}

impl ModelConfig {
    /// Template with the configured families, means and box, started at
    /// the middle of the box.
    pub fn template(&self, runs: &ModelRunSet) -> Result<CalibrationModel> {
        let (p, q) = (runs.input_dim(), runs.calib_dim());
        let theta_box: Vec<Interval> = match &self.theta {
            Some(b) => b.iter().copied().map(interval).collect(),
            None => (0..q)
                .map(|j| {
                    let c = runs.calib_settings().column(j);
                    Interval::new(c.min(), c.max())
                })
                .collect(),
        };
        if theta_box.len() != q {
            return Err(CliError::Config(format!(
                "model.theta: {} intervals given but the runs have {q} calibration columns",
                theta_box.len()
            )));
        }
        let kernel = |family, dim, amp: [f64; 2], ell: [f64; 2]| {
            let k = KernelSpec::expected_length_scales(family, dim);
            KernelSpec::new(family, dim, start_value(amp), vec![start_value(ell); k])
        };
        let kernel_f = kernel(self.kernel_f, p + q, self.amplitude_f, self.length_scale_f)?;
        let kernel_delta = kernel(self.kernel_delta, p, self.amplitude_delta, self.length_scale_delta)?;
        let coef = start_value(self.coefficient);
        let mean_f = MeanSpec::new(self.mean_f, p + q, vec![coef; self.mean_f.size(p + q)])?;
        let mean_delta = MeanSpec::new(self.mean_delta, p, vec![coef; self.mean_delta.size(p)])?;
        let model = CalibrationModel {
            bounds: ParamBounds {
                theta: theta_box.clone(),
                kernel_f_amplitude: interval(self.amplitude_f),
                kernel_f_length_scales: vec![interval(self.length_scale_f); kernel_f.length_scales.len()],
                kernel_delta_amplitude: interval(self.amplitude_delta),
                kernel_delta_length_scales: vec![interval(self.length_scale_delta); kernel_delta.length_scales.len()],
                mean_f_coefficients: vec![interval(self.coefficient); mean_f.coefficients.len()],
                mean_delta_coefficients: vec![interval(self.coefficient); mean_delta.coefficients.len()],
            },
            theta: theta_box.iter().map(|b| 0.5 * (b.lower + b.upper)).collect(),
            sigma: 1.0,
            mean_f,
            mean_delta,
            kernel_f,
            kernel_delta,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub loss: LossChoice,
    /// Folds for the cross-validation loss.
    pub cv_k: usize,
    pub ordering: OrderingPolicy,
    /// Fixed noise scale; estimated from the data when absent.
    pub sigma: Option<f64>,
    pub restarts: usize,
    /// Short screening budget per start; every start runs in full when 0.
    pub screen_evals: usize,
    /// Screened starts continued to the full budget.
    pub polish: usize,
    pub max_evals: usize,
    pub parallel: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        let s = search_schedule();
        Self {
            loss: LossChoice::Mle,
            cv_k: 10,
            ordering: OrderingPolicy::NearestNeighbor,
            sigma: None,
            restarts: s.restarts,
            screen_evals: s.screen_evals,
            polish: s.polish,
            max_evals: s.nelder_mead.max_evals,
            parallel: true,
        }
    }
}

impl FitConfig {
    pub fn loss_kind(&self) -> LossKind {
        match self.loss {
            LossChoice::Mle => LossKind::Mle,
            LossChoice::Cv => LossKind::Cv { folds: self.cv_k },
        }
    }

    pub fn options(&self, seed: u64) -> FitOptions {
        let base = search_schedule();
        FitOptions {
            loss: self.loss_kind(),
            ordering: self.ordering,
            sigma: self.sigma,
            restarts: self.restarts,
            nelder_mead: NelderMeadOptions { max_evals: self.max_evals, ..base.nelder_mead },
            screen_evals: self.screen_evals,
            polish: self.polish,
            parallel: self.parallel,
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// `fit.json` written by the `fit` task.
    pub fit: Option<PathBuf>,
    /// Points per axis of the default target grid.
    pub grid: usize,
    pub level: f64,
    pub target: PredictionTarget,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { fit: None, grid: 15, level: 0.95, target: PredictionTarget::LatentProcess }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub thinning: usize,
    /// Starting point from a `fit.json`; a likelihood fit otherwise.
    pub init: Option<PathBuf>,
    /// Posterior draws pooled for the predictive distribution.
    pub draws: usize,
    pub level: f64,
    pub target: PredictionTarget,
    /// Inverse-gamma shape and scale for `σ` and the amplitudes.
    pub ig_shape: f64,
    pub ig_scale: f64,
    /// Gamma shape and rate for the length scales.
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// Normal prior for every θ component.
    pub theta_mean: f64,
    pub theta_sd: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in_fraction: 0.2,
            thinning: 1,
            init: None,
            draws: 50,
            level: 0.95,
            target: PredictionTarget::LatentProcess,
            ig_shape: 3.0,
            ig_scale: 1.0,
            gamma_shape: 1.0,
            gamma_rate: 3.0,
            theta_mean: 0.0,
            theta_sd: 2.0,
        }
    }
}

impl McmcConfig {
    pub fn cell(&self) -> PriorCell {
        PriorCell { ig_scale: self.ig_scale, gamma_shape: self.gamma_shape, theta_mean: self.theta_mean, theta_sd: self.theta_sd }
    }

    pub fn chain_options(&self, seed: u64) -> ChainOptions {
        ChainOptions { iterations: self.iterations, burn_in_fraction: self.burn_in_fraction, thinning: self.thinning, adapt: true, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub paper_scale: bool,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub fit: FitConfig,
    pub predict: PredictConfig,
    pub mcmc: McmcConfig,
    pub wave: WaveStudyConfig,
    pub sensitivity: SensitivityConfig,
    pub ldm: LdmConfig,
    pub dominance: DominanceConfig,
    pub equivalence: EquivalenceOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Fit,
            seed: 0,
            out: None,
            paper_scale: false,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            fit: FitConfig::default(),
            predict: PredictConfig::default(),
            mcmc: McmcConfig::default(),
            wave: WaveStudyConfig::default(),
            sensitivity: SensitivityConfig::default(),
            ldm: LdmConfig::default(),
            dominance: DominanceConfig::default(),
            equivalence: EquivalenceOptions::default(),
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub loss: Option<LossChoice>,
    pub cv_k: Option<usize>,
    pub paper_scale: bool,
    pub ordering: Option<OrderingPolicy>,
    pub observations: Option<PathBuf>,
    pub runs: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub fit_file: Option<PathBuf>,
    pub init_file: Option<PathBuf>,
    pub iterations: Option<usize>,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Parse TOML text; relative paths are joined onto `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(t) = table.get("task") {
        let name = t.as_str().ok_or_else(|| CliError::Config("task: expected a string".into()))?;
        if Task::from_name(name).is_none() {
            let known: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
            return Err(CliError::Usage(format!("unknown task '{name}' (expected one of {})", known.join(", "))));
        }
    }
    let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    for p in [&mut cfg.out, &mut cfg.data.observations, &mut cfg.data.runs, &mut cfg.data.targets, &mut cfg.predict.fit, &mut cfg.mcmc.init] {
        rebase(base, p);
    }
    Ok(cfg)
}

/// Read a configuration file without validating it.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new("")))
}

/// Read and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let cfg = load_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| CliError::Output(format!("cannot serialize config: {e}")))
}

fn err<T>(field: &str, msg: impl std::fmt::Display) -> Result<T> {
    Err(CliError::Config(format!("{field}: {msg}")))
}

fn check_box(field: &str, b: [f64; 2], positive: bool) -> Result<()> {
    if !(b[0].is_finite() && b[1].is_finite() && b[0] <= b[1]) {
        return err(field, format!("[{}, {}] is not a finite interval with lower <= upper", b[0], b[1]));
    }
    if positive && b[0] < 0.0 {
        return err(field, format!("lower bound {} must be non-negative", b[0]));
    }
    Ok(())
}

fn check_file(field: &str, p: &Option<PathBuf>, required: bool) -> Result<()> {
    match p {
        Some(path) if !path.is_file() => err(field, format!("file '{}' does not exist", path.display())),
        None if required => err(field, "required for this task"),
        _ => Ok(())
    }
}

fn check_folds(field: &str, losses: &[LossKind], n: usize, what: &str) -> Result<()> {
    for l in losses {
        if let LossKind::Cv { folds } = *l {
            if folds < 2 {
                return err(field, format!("cv folds K = {folds} must be at least 2"));
            }
            if folds > n {
                return err(field, format!("cv folds K = {folds} exceeds {what} n = {n} (K <= n required)"));
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Apply flags, the paper preset and seed propagation.
    pub fn resolve(mut self, o: &Overrides, env_out: Option<PathBuf>) -> Self {
        if let Some(t) = o.task {
            self.task = t;
        }
        self.paper_scale |= o.paper_scale;
        if self.paper_scale {
            self.wave.sizes = WaveStudyConfig::paper_scale().sizes;
            let p = LdmConfig::paper_scale();
            (self.ldm.train, self.ldm.test) = (p.train, p.test);
            (self.sensitivity.n, self.sensitivity.iterations) = (125, 10_000);
            self.mcmc.iterations = 10_000;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(k) = o.cv_k {
            self.fit.cv_k = k;
        }
        if let Some(l) = o.loss {
            self.fit.loss = l;
        }
        if o.loss.is_some() || o.cv_k.is_some() {
            let chosen = match o.loss {
                Some(_) => vec![self.fit.loss_kind()],
                None => self.wave.losses.iter().map(|l| match l {
                    LossKind::Cv { .. } => LossKind::Cv { folds: self.fit.cv_k },
                    other => *other,
                }).collect(),
            };
            self.wave.losses = chosen.clone();
            self.ldm.losses = chosen;
        }
        if let Some(ord) = o.ordering {
            self.fit.ordering = ord;
            self.wave.ordering = ord;
            self.ldm.ordering = ord;
        }
        if let Some(it) = o.iterations {
            self.mcmc.iterations = it;
            self.sensitivity.iterations = it;
        }
        for (dst, src) in [
            (&mut self.data.observations, &o.observations),
            (&mut self.data.runs, &o.runs),
            (&mut self.data.targets, &o.targets),
            (&mut self.predict.fit, &o.fit_file),
            (&mut self.mcmc.init, &o.init_file),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        self.wave.seed = self.seed;
        self.sensitivity.seed = self.seed;
        self.ldm.seed = self.seed;
        self.dominance.seed = self.seed;
        self.equivalence.seed = self.seed;
        if o.out.is_some() {
            self.out.clone_from(&o.out);
        }
        if self.out.is_none() {
            let root = env_out.unwrap_or_else(|| PathBuf::from("ebcal-out"));
            self.out = Some(root.join(self.task.name()));
        }
        self
    }

    /// Schema checks that need no computation beyond counting observations.
    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return err("seed", format!("{} exceeds {}", self.seed, i64::MAX));
        }
        let data = self.task.uses_data();
        check_file("data.observations", &self.data.observations, data)?;
        check_file("data.runs", &self.data.runs, data)?;
        check_file("data.targets", &self.data.targets, false)?;
        check_file("predict.fit", &self.predict.fit, self.task == Task::Predict)?;
        check_file("mcmc.init", &self.mcmc.init, false)?;
        if let Some(d) = &self.data.domain {
            for (j, b) in d.iter().enumerate() {
                check_box(&format!("data.domain[{j}]"), *b, false)?;
            }
        }

        let m = &self.model;
        if let Some(t) = &m.theta {
            if t.is_empty() {
                return err("model.theta", "at least one interval required");
            }
            for (j, b) in t.iter().enumerate() {
                check_box(&format!("model.theta[{j}]"), *b, false)?;
            }
        }
        check_box("model.amplitude_f", m.amplitude_f, true)?;
        check_box("model.amplitude_delta", m.amplitude_delta, true)?;
        check_box("model.coefficient", m.coefficient, false)?;
        for (f, b) in [("model.length_scale_f", m.length_scale_f), ("model.length_scale_delta", m.length_scale_delta)] {
            check_box(f, b, true)?;
            if b[0] <= 0.0 {
                return err(f, "lower bound must be positive");
            }
        }

        let f = &self.fit;
        if f.restarts == 0 {
            return err("fit.restarts", "must be at least 1");
        }
        if f.max_evals == 0 {
            return err("fit.max_evals", "must be at least 1");
        }
        if let Some(s) = f.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return err("fit.sigma", format!("{s} must be positive"));
            }
        }
        if f.loss == LossChoice::Cv {
            if f.cv_k < 2 {
                return err("fit.cv_k", format!("K = {} must be at least 2", f.cv_k));
            }
            if let (true, Some(path)) = (data, &self.data.observations) {
                let n = read_observations_file(path, None)?.len();
                if f.cv_k > n {
                    return err("fit.cv_k", format!("K = {} exceeds the number of observations n = {n} (K <= n required)", f.cv_k));
                }
            }
        }

        for (field, level) in [("predict.level", self.predict.level), ("mcmc.level", self.mcmc.level)] {
            if !(level > 0.0 && level < 1.0) {
                return err(field, format!("{level} must lie in (0, 1)"));
            }
        }
        if self.predict.grid == 0 {
            return err("predict.grid", "must be at least 1");
        }

        let mc = &self.mcmc;
        if !(0.0..1.0).contains(&mc.burn_in_fraction) {
            return err("mcmc.burn_in_fraction", format!("{} must lie in [0, 1)", mc.burn_in_fraction));
        }
        if mc.iterations <= mc.chain_options(0).burn_in() {
            return err("mcmc.iterations", "must exceed the burn-in");
        }
        if mc.thinning == 0 {
            return err("mcmc.thinning", "must be at least 1");
        }
        for (field, v) in [
            ("mcmc.ig_shape", mc.ig_shape),
            ("mcmc.ig_scale", mc.ig_scale),
            ("mcmc.gamma_shape", mc.gamma_shape),
            ("mcmc.gamma_rate", mc.gamma_rate),
            ("mcmc.theta_sd", mc.theta_sd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(field, format!("{v} must be positive"));
            }
        }

        let w = &self.wave;
        if w.sizes.is_empty() || w.sizes.iter().any(|&n| n < 2) {
            return err("wave.sizes", "need at least one size, each at least 2");
        }
        if w.replicates == 0 {
            return err("wave.replicates", "must be at least 1");
        }
        check_folds("wave.losses", &w.losses, *w.sizes.iter().min().unwrap_or(&0), "the smallest size")?;
        check_folds("ldm.losses", &self.ldm.losses, self.ldm.train, "the training set")?;
        if self.sensitivity.iterations == 0 || self.sensitivity.n < 2 {
            return err("sensitivity", "need n >= 2 and at least one iteration");
        }
        if self.equivalence.instances == 0 {
            return err("equivalence.instances", "must be at least 1");
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("ebcal-out").join(self.task.name()))
    }
}
