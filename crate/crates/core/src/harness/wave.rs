use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Interval, ModelRunSet, ObservationSet};
use crate::design::{latin_hypercube, DesignSpec};
use crate::error::Result;
use crate::estimate::{fit, sigma_hat, FitOptions, FitResult, LossKind, OrderingPolicy};
use crate::harness::report::{median, rmse, ExperimentReport};
use crate::harness::{loss_label, search_schedule};
use crate::kernels::KernelSpec;
use crate::mean::MeanSpec;
use crate::model::{CalibrationModel, FactoredModel, ParamBounds};
use crate::models::{generate_synthetic, unit_grid, WaveConfig};
use crate::predict::PredictionTarget;
use crate::seed::derive_seed;

/// One synthetic wave data set: observations on `[0, 1]²` and model runs on
/// `[0, 1]² × [0, 2]²`, both from Latin hypercubes.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveData {
    pub obs: ObservationSet,
    pub runs: ModelRunSet,
}

pub fn wave_data(cfg: &WaveConfig, n: usize, s: usize, seed: u64) -> Result<WaveData> {
    let unit = vec![Interval::new(0.0, 1.0); 2];
    let x = latin_hypercube(&DesignSpec::new(n, unit.clone(), derive_seed(seed, &[0])))?;
    let obs = generate_synthetic(|r| cfg.truth(r[0], r[1]), &x, unit, cfg.sigma0, derive_seed(seed, &[1]))?;
    let mut box4 = vec![Interval::new(0.0, 1.0); 2];
    box4.extend([Interval::new(0.0, 2.0); 2]);
    let d = latin_hypercube(&DesignSpec::new(s, box4, derive_seed(seed, &[2])))?;
    let z = DVector::from_fn(s, |i, _| cfg.model(d[(i, 0)], d[(i, 1)], d[(i, 2)], d[(i, 3)]));
    let runs = ModelRunSet::new(d.columns(0, 2).into(), d.columns(2, 2).into(), z)?;
    Ok(WaveData { obs, runs })
}

/// Zero-mean anisotropic squared-exponential emulator and discrepancy with
/// the search box used for the wave problem.
pub fn wave_template() -> CalibrationModel {
    CalibrationModel {
        mean_f: MeanSpec::zero(4),
        mean_delta: MeanSpec::zero(2),
        kernel_f: KernelSpec::se_aniso(1.0, vec![0.5; 4]).expect("valid kernel"),
        kernel_delta: KernelSpec::se_aniso(1.0, vec![0.5; 2]).expect("valid kernel"),
        theta: vec![1.0, 1.0],
        sigma: 0.2,
        bounds: ParamBounds {
            theta: vec![Interval::new(0.0, 2.0); 2],
            kernel_f_amplitude: Interval::new(0.01, 100.0),
            kernel_f_length_scales: vec![Interval::new(0.01, 10.0); 4],
            kernel_delta_amplitude: Interval::new(0.001, 100.0),
            kernel_delta_length_scales: vec![Interval::new(0.01, 10.0); 2],
            mean_f_coefficients: vec![],
            mean_delta_coefficients: vec![],
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveStudyConfig {
    /// Observation counts; the number of model runs equals `n`.
    pub sizes: Vec<usize>,
    pub losses: Vec<LossKind>,
    pub replicates: usize,
    pub seed: u64,
    pub wave: WaveConfig,
    /// Side of the square test grid.
    pub grid: usize,
    pub ordering: OrderingPolicy,
    pub fit: FitOptions,
    /// Seed the cross-validation search with the likelihood estimate when
    /// both losses run on the same data.
    pub warm_start_cv: bool,
    pub parallel: bool,
}

impl Default for WaveStudyConfig {
    fn default() -> Self {
        Self {
            sizes: vec![32, 64, 128],
            losses: vec![LossKind::Mle, LossKind::Cv { folds: 10 }],
            replicates: 5,
            seed: 0,
            wave: WaveConfig::default(),
            grid: 15,
            ordering: OrderingPolicy::NearestNeighbor,
            fit: search_schedule(),
            warm_start_cv: true,
            parallel: true,
        }
    }
}

impl WaveStudyConfig {
    pub fn paper_scale() -> Self {
        Self { sizes: vec![125, 250, 500], ..Self::default() }
    }
}

/// Outcome of one fit in the study.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveRun {
    pub n: usize,
    pub replicate: usize,
    pub loss: LossKind,
    pub fit: FitResult,
    pub rmse: f64,
    pub seconds: f64,
}

pub(crate) fn grid_rmse(model: &CalibrationModel, data: &WaveData, cfg: &WaveConfig, grid: usize) -> Result<f64> {
    let (g, truth) = wave_grid(cfg, grid);
    let pd = FactoredModel::new(model, &data.obs, &data.runs)?.predict(&g, PredictionTarget::LatentProcess)?;
    Ok(rmse(pd.mean.as_slice(), &truth))
}

fn run_replicate(cfg: &WaveStudyConfig, n: usize, rep: usize) -> Result<(f64, Vec<WaveRun>)> {
    let seed = derive_seed(cfg.seed, &[n as u64, rep as u64]);
    let data = wave_data(&cfg.wave, n, n, seed)?;
    let sigma = sigma_hat(&data.obs, cfg.ordering)?;
    let template = wave_template();
    let mut out: Vec<WaveRun> = Vec::new();
    for (k, &loss) in cfg.losses.iter().enumerate() {
        let start = Instant::now();
        let warm = match loss {
            LossKind::Cv { .. } if cfg.warm_start_cv => out.iter().find(|r| r.loss == LossKind::Mle).map(|r| r.fit.model.clone()),
            _ => None,
        };
        let opts = FitOptions {
            loss,
            ordering: cfg.ordering,
            sigma: Some(sigma),
            template_start: warm.is_some(),
            seed: derive_seed(seed, &[10 + k as u64]),
            ..cfg.fit.clone()
        };
        let f = fit(warm.as_ref().unwrap_or(&template), &data.obs, &data.runs, &opts)?;
        let e = grid_rmse(&f.model, &data, &cfg.wave, cfg.grid)?;
        out.push(WaveRun { n, replicate: rep, loss, fit: f, rmse: e, seconds: start.elapsed().as_secs_f64() });
    }
    Ok((sigma, out))
}

/// RMSE sweep over sizes, losses and replicates on the wave problem.
pub fn run_wave_study(cfg: &WaveStudyConfig) -> Result<(ExperimentReport, Vec<WaveRun>)> {
    let tasks: Vec<(usize, usize)> = cfg.sizes.iter().flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r))).collect();
    let results: Vec<Result<(f64, Vec<WaveRun>)>> = if cfg.parallel {
        tasks.par_iter().map(|&(n, r)| run_replicate(cfg, n, r)).collect()
    } else {
        tasks.iter().map(|&(n, r)| run_replicate(cfg, n, r)).collect()
    };

    let mut report = ExperimentReport::new("wave-study", cfg.seed, cfg);
    let mut runs = Vec::new();
    let mut sigmas: Vec<(usize, f64)> = Vec::new();
    for (&(n, rep), res) in tasks.iter().zip(results) {
        let (sigma, rs) = res?;
        report.push(format!("n={n}/rep={rep}"), "sigma_hat", sigma);
        report.point("sigma_hat", n as f64, sigma);
        sigmas.push((n, sigma));
        for r in rs {
            let run = format!("n={n}/rep={rep}/{}", loss_label(r.loss));
            report.push(&run, "rmse", r.rmse);
            for (j, t) in r.fit.theta_hat.iter().enumerate() {
                report.push(&run, format!("theta[{j}]"), *t);
            }
            report.push(&run, "loss", r.fit.loss_value);
            report.push(&run, "evaluations", r.fit.trace.evaluations as f64);
            report.point(loss_label(r.loss), n as f64, r.rmse);
            report.time(&run, r.seconds);
            runs.push(r);
        }
    }
    for &n in &cfg.sizes {
        let s: Vec<f64> = sigmas.iter().filter(|x| x.0 == n).map(|x| x.1).collect();
        report.push(format!("n={n}"), "median_sigma_hat", median(&s));
        for &loss in &cfg.losses {
            let sel: Vec<&WaveRun> = runs.iter().filter(|r| r.n == n && r.loss == loss).collect();
            let run = format!("n={n}/{}", loss_label(loss));
            report.push(&run, "median_rmse", median(&sel.iter().map(|r| r.rmse).collect::<Vec<_>>()));
            for j in 0..2 {
                report.push(&run, format!("median_theta[{j}]"), median(&sel.iter().map(|r| r.fit.theta_hat[j]).collect::<Vec<_>>()));
            }
        }
    }
    Ok((report, runs))
}

/// Median `σ̂ₙ` per size from data generation alone.
pub fn run_wave_sigma_study(cfg: &WaveStudyConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("wave-sigma", cfg.seed, cfg);
    for &n in &cfg.sizes {
        let mut s = Vec::with_capacity(cfg.replicates);
        for rep in 0..cfg.replicates {
            let seed = derive_seed(cfg.seed, &[n as u64, rep as u64]);
            let data = wave_data(&cfg.wave, n, n, seed)?;
            let v = sigma_hat(&data.obs, cfg.ordering)?;
            report.push(format!("n={n}/rep={rep}"), "sigma_hat", v);
            report.point("sigma_hat", n as f64, v);
            s.push(v);
        }
        report.push(format!("n={n}"), "median_sigma_hat", median(&s));
    }
    Ok(report)
}

/// The `m × m` test grid with the true process values.
pub fn wave_grid(cfg: &WaveConfig, m: usize) -> (DMatrix<f64>, Vec<f64>) {
    let g = unit_grid(m);
    let truth = (0..g.nrows()).map(|i| cfg.truth(g[(i, 0)], g[(i, 1)])).collect();
    (g, truth)
}
