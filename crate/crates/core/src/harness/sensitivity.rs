use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::{fit, FitOptions, FitResult, LossKind, OrderingPolicy};
use crate::harness::report::{rmse, ExperimentReport};
use crate::harness::search_schedule;
use crate::harness::wave::{wave_data, wave_grid, wave_template, WaveData};
use crate::mcmc::{default_scales, posterior_predictive, run_chain, Chain, ChainOptions, Prior, PriorSpec};
use crate::model::CalibrationModel;
use crate::models::WaveConfig;
use crate::params::ParamKind;
use crate::predict::PredictionTarget;
use crate::seed::derive_seed;

/// One combination of prior hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorCell {
    /// Scale of the inverse-gamma priors on `σ`, `η_f`, `η_δ`.
    pub ig_scale: f64,
    /// Shape of the gamma priors on the length scales.
    pub gamma_shape: f64,
    pub theta_mean: f64,
    pub theta_sd: f64,
}

impl PriorCell {
    pub fn label(&self) -> String {
        format!("ig={}/ga={}/mu={}/sd={}", self.ig_scale, self.gamma_shape, self.theta_mean, self.theta_sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityConfig {
    pub n: usize,
    pub iterations: usize,
    pub ig_shape: f64,
    pub ig_scales: Vec<f64>,
    pub gamma_rate: f64,
    pub gamma_shapes: Vec<f64>,
    pub theta_means: Vec<f64>,
    pub theta_sds: Vec<f64>,
    pub predictive_draws: usize,
    pub grid: usize,
    pub seed: u64,
    pub wave: WaveConfig,
    /// Search used for the empirical-Bayes starting point of every chain.
    pub init_fit: FitOptions,
    pub parallel: bool,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            n: 32,
            iterations: 2000,
            ig_shape: 3.0,
            ig_scales: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            gamma_rate: 3.0,
            gamma_shapes: vec![1.0, 5.0],
            theta_means: vec![0.0, 1.0, 1.5],
            theta_sds: vec![0.25, 0.5, 1.0, 2.0],
            predictive_draws: 50,
            grid: 15,
            seed: 0,
            wave: WaveConfig::default(),
            init_fit: search_schedule(),
            parallel: true,
        }
    }
}

impl SensitivityConfig {
    /// Cartesian product of the four prior settings.
    pub fn cells(&self) -> Vec<PriorCell> {
        let mut out = Vec::new();
        for &ig_scale in &self.ig_scales {
            for &gamma_shape in &self.gamma_shapes {
                for &theta_mean in &self.theta_means {
                    for &theta_sd in &self.theta_sds {
                        out.push(PriorCell { ig_scale, gamma_shape, theta_mean, theta_sd });
                    }
                }
            }
        }
        out
    }
}

/// Inverse-gamma on the noise scale and amplitudes, gamma on length scales
/// and independent normals on `θ`.
pub fn wave_priors(template: &CalibrationModel, cell: &PriorCell, ig_shape: f64, gamma_rate: f64) -> Result<PriorSpec> {
    PriorSpec::from_fn(template, |e| match e.kind {
        ParamKind::Theta => Prior::Normal { mean: cell.theta_mean, sd: cell.theta_sd },
        ParamKind::LengthScaleF | ParamKind::LengthScaleDelta => Prior::Gamma { shape: cell.gamma_shape, rate: gamma_rate },
        ParamKind::CoefficientF | ParamKind::CoefficientDelta => Prior::Normal { mean: 0.0, sd: 10.0 },
        ParamKind::Sigma | ParamKind::AmplitudeF | ParamKind::AmplitudeDelta => {
            Prior::InverseGamma { shape: ig_shape, scale: cell.ig_scale }
        }
    })
}

/// The weakly informative cell: IG(3, 1), Gamma(1, 3), N(0, 2).
pub fn noninformative_priors(template: &CalibrationModel) -> Result<PriorSpec> {
    let cell = PriorCell { ig_scale: 1.0, gamma_shape: 1.0, theta_mean: 0.0, theta_sd: 2.0 };
    wave_priors(template, &cell, 3.0, 3.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveMcmcOutcome {
    pub chain: Chain,
    pub posterior_mean: Vec<f64>,
    pub rmse: f64,
    pub skipped_draws: usize,
}

/// One chain from `init`, scored by the pooled posterior-predictive mean on
/// the test grid.
#[allow(clippy::too_many_arguments)]
pub fn run_wave_mcmc(
    data: &WaveData,
    wave: &WaveConfig,
    priors: &PriorSpec,
    init: &CalibrationModel,
    iterations: usize,
    draws: usize,
    grid: usize,
    seed: u64,
) -> Result<WaveMcmcOutcome> {
    let template = wave_template();
    let x0 = priors.layout().extract(init);
    let opts = ChainOptions { iterations, seed, ..Default::default() };
    let chain = run_chain(&template, &data.obs, &data.runs, priors, &x0, &default_scales(&template), &opts)?;
    let (g, truth) = wave_grid(wave, grid);
    let ens = posterior_predictive(
        &chain,
        &template,
        &data.obs,
        &data.runs,
        &g,
        PredictionTarget::LatentProcess,
        draws.min(chain.len()),
        0.95,
    )?;
    Ok(WaveMcmcOutcome {
        posterior_mean: chain.mean(),
        rmse: rmse(ens.mean.as_slice(), &truth),
        skipped_draws: ens.skipped,
        chain,
    })
}

/// Empirical-Bayes likelihood fit used to start the chains.
pub(crate) fn eb_start(data: &WaveData, opts: &FitOptions, seed: u64) -> Result<FitResult> {
    let o = FitOptions { loss: LossKind::Mle, ordering: OrderingPolicy::NearestNeighbor, seed, ..opts.clone() };
    fit(&wave_template(), &data.obs, &data.runs, &o)
}

/// One chain per prior cell, all on the same data set and from the same
/// empirical-Bayes starting point.
pub fn run_sensitivity_grid(cfg: &SensitivityConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("sensitivity-grid", cfg.seed, cfg);
    let data = wave_data(&cfg.wave, cfg.n, cfg.n, derive_seed(cfg.seed, &[0]))?;
    let start = Instant::now();
    let eb = eb_start(&data, &cfg.init_fit, derive_seed(cfg.seed, &[1]))?;
    report.time("eb-fit", start.elapsed().as_secs_f64());
    report.push("eb", "rmse", crate::harness::wave::grid_rmse(&eb.model, &data, &cfg.wave, cfg.grid)?);
    for (j, t) in eb.theta_hat.iter().enumerate() {
        report.push("eb", format!("theta[{j}]"), *t);
    }

    let cells = cfg.cells();
    let template = wave_template();
    let one = |(k, cell): (usize, &PriorCell)| -> Result<(WaveMcmcOutcome, f64)> {
        let t0 = Instant::now();
        let priors = wave_priors(&template, cell, cfg.ig_shape, cfg.gamma_rate)?;
        let out = run_wave_mcmc(
            &data,
            &cfg.wave,
            &priors,
            &eb.model,
            cfg.iterations,
            cfg.predictive_draws,
            cfg.grid,
            derive_seed(cfg.seed, &[2, k as u64]),
        )?;
        Ok((out, t0.elapsed().as_secs_f64()))
    };
    let results: Vec<Result<(WaveMcmcOutcome, f64)>> = if cfg.parallel {
        cells.par_iter().enumerate().map(one).collect()
    } else {
        cells.iter().enumerate().map(one).collect()
    };
    for (cell, res) in cells.iter().zip(results) {
        let (out, secs) = res?;
        let run = cell.label();
        report.push(&run, "rmse", out.rmse);
        report.push(&run, "acceptance", out.chain.acceptance_rate);
        report.push(&run, "skipped_draws", out.skipped_draws as f64);
        for (name, v) in out.chain.names.iter().zip(&out.posterior_mean) {
            report.push(&run, format!("mean_{name}"), *v);
        }
        report.point(format!("mu={}/sd={}", cell.theta_mean, cell.theta_sd), cfg.n as f64, out.rmse);
        report.time(&run, secs);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::optim::NelderMeadOptions;

    #[test]
    fn full_grid_has_120_cells() {
        let cfg = SensitivityConfig::default();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 120);
        let mut labels: Vec<String> = cells.iter().map(PriorCell::label).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 120);
    }

    #[test]
    fn positive_priors_only_on_positive_entries() {
        let t = wave_template();
        let p = noninformative_priors(&t).unwrap();
        assert_eq!(p.priors().len(), 2 + 1 + 4 + 1 + 2 + 1);
        assert_eq!(p.priors()[0], Prior::Normal { mean: 0.0, sd: 2.0 });
        assert_eq!(*p.priors().last().unwrap(), Prior::InverseGamma { shape: 3.0, scale: 1.0 });
    }

    fn quick(cells: (Vec<f64>, Vec<f64>)) -> SensitivityConfig {
        SensitivityConfig {
            n: 24,
            iterations: 300,
            ig_scales: vec![1.0],
            gamma_shapes: vec![1.0],
            theta_means: cells.0,
            theta_sds: cells.1,
            predictive_draws: 20,
            seed: 3,
            init_fit: FitOptions {
                restarts: 4,
                nelder_mead: NelderMeadOptions { max_evals: 400, ..Default::default() },
                screen_evals: 0,
                ..search_schedule()
            },
            ..Default::default()
        }
    }

    #[test]
    fn reduced_grid_runs_end_to_end() {
        let r = run_sensitivity_grid(&quick((vec![1.0], vec![1.0]))).unwrap();
        r.check_finite().unwrap();
        assert_eq!(r.values("acceptance").len(), 1);
        assert!(r.values("rmse").iter().all(|&v| v > 0.0));
    }

    #[test]
    fn badly_informative_prior_hurts() {
        let r = run_sensitivity_grid(&SensitivityConfig {
            n: 64,
            iterations: 1500,
            ..quick((vec![0.0], vec![0.25, 2.0]))
        })
        .unwrap();
        let bad = r.metric("ig=1/ga=1/mu=0/sd=0.25", "rmse").unwrap();
        let flat = r.metric("ig=1/ga=1/mu=0/sd=2", "rmse").unwrap();
        assert!(bad > flat, "bad {bad} vs non-informative {flat}");
    }
}
