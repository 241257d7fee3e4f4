use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Interval, ModelRunSet, ObservationSet};
use crate::design::{latin_hypercube, DesignSpec};
use crate::error::{CalibError, Result};
use crate::estimate::{fit, sigma_hat, FitOptions, LossKind, OrderingPolicy};
use crate::harness::report::{rmse, ExperimentReport};
use crate::harness::{loss_label, search_schedule};
use crate::kernels::KernelSpec;
use crate::mean::MeanSpec;
use crate::model::{CalibrationModel, FactoredModel, ParamBounds};
use crate::models::{bundled_ldm_records, ldm_energy, LdmRecord};
use crate::predict::PredictionTarget;
use crate::seed::derive_seed;

/// Literature means and standard deviations of `(θ_vol, θ_surf, θ_sym, θ_C)`.
pub const LDM_THETA_PRIOR: [(f64, f64); 4] = [(15.42, 0.203), (16.91, 0.645), (22.47, 0.525), (0.69, 0.015)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdmConfig {
    pub train: usize,
    pub test: usize,
    /// Each training nucleus appears this many times among the model runs.
    pub run_copies: usize,
    /// Half-width of the θ box in prior standard deviations.
    pub theta_box_sd: f64,
    pub losses: Vec<LossKind>,
    pub ordering: OrderingPolicy,
    pub fit: FitOptions,
    pub warm_start_cv: bool,
    pub seed: u64,
}

impl Default for LdmConfig {
    fn default() -> Self {
        Self {
            train: 150,
            test: 50,
            run_copies: 2,
            theta_box_sd: 3.0,
            losses: vec![LossKind::Mle, LossKind::Cv { folds: 10 }],
            ordering: OrderingPolicy::NearestNeighbor,
            fit: search_schedule(),
            warm_start_cv: true,
            seed: 0,
        }
    }
}

impl LdmConfig {
    pub fn paper_scale() -> Self {
        Self { train: 450, test: 145, ..Self::default() }
    }

    pub fn theta_box(&self) -> Vec<Interval> {
        LDM_THETA_PRIOR.iter().map(|&(m, s)| Interval::new(m - self.theta_box_sd * s, m + self.theta_box_sd * s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdmData {
    pub train: Vec<LdmRecord>,
    pub test: Vec<LdmRecord>,
    pub obs: ObservationSet,
    pub runs: ModelRunSet,
}

fn inputs(records: &[LdmRecord]) -> DMatrix<f64> {
    DMatrix::from_fn(records.len(), 2, |i, j| if j == 0 { records[i].z as f64 } else { records[i].n as f64 })
}

impl LdmData {
    pub fn test_inputs(&self) -> DMatrix<f64> {
        inputs(&self.test)
    }

    pub fn test_energies(&self) -> Vec<f64> {
        self.test.iter().map(|r| r.binding_energy).collect()
    }
}

/// Random train/test split of `records` and a Latin-hypercube run design
/// whose `(Z, N)` inputs are a shuffled copy of the duplicated training set.
pub fn ldm_data(records: &[LdmRecord], cfg: &LdmConfig) -> Result<LdmData> {
    if cfg.train + cfg.test > records.len() || cfg.train < 2 || cfg.run_copies == 0 {
        return Err(CalibError::InsufficientData { needed: cfg.train + cfg.test, got: records.len() });
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0])));
    let train: Vec<LdmRecord> = idx[..cfg.train].iter().map(|&i| records[i]).collect();
    let test: Vec<LdmRecord> = idx[cfg.train..cfg.train + cfg.test].iter().map(|&i| records[i]).collect();

    let x = inputs(&train);
    let y = DVector::from_iterator(train.len(), train.iter().map(|r| r.binding_energy));
    let obs = ObservationSet::with_bounding_domain(x, y)?;

    let s = cfg.run_copies * cfg.train;
    let theta = latin_hypercube(&DesignSpec::new(s, cfg.theta_box(), derive_seed(cfg.seed, &[1])))?;
    let mut nuclei: Vec<LdmRecord> = (0..cfg.run_copies).flat_map(|_| train.iter().copied()).collect();
    nuclei.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2])));
    let t = inputs(&nuclei);
    let z = DVector::from_fn(s, |i, _| {
        ldm_energy(t[(i, 0)], t[(i, 1)], theta[(i, 0)], theta[(i, 1)], theta[(i, 2)], theta[(i, 3)])
    });
    let runs = ModelRunSet::new(t, theta, z)?;
    Ok(LdmData { train, test, obs, runs })
}

/// Zero-mean squared-exponential emulator over `(Z, N, θ)` and discrepancy
/// over `(Z, N)`, both with a length scale per input.
pub fn ldm_template(theta_box: &[Interval]) -> CalibrationModel {
    let theta: Vec<f64> = theta_box.iter().map(|b| 0.5 * (b.lower + b.upper)).collect();
    let mut ell_f = vec![20.0, 20.0];
    ell_f.extend(theta_box.iter().map(|b| b.width()));
    let mut ell_f_bounds = vec![Interval::new(1.0, 1000.0); 2];
    ell_f_bounds.extend(theta_box.iter().map(|b| Interval::new(0.05 * b.width(), 1000.0 * b.width())));
    CalibrationModel {
        mean_f: MeanSpec::zero(6),
        mean_delta: MeanSpec::zero(2),
        kernel_f: KernelSpec::se_aniso(1e5, ell_f).expect("valid kernel"),
        kernel_delta: KernelSpec::se_aniso(10.0, vec![10.0, 10.0]).expect("valid kernel"),
        theta,
        sigma: 1.0,
        bounds: ParamBounds {
            theta: theta_box.to_vec(),
            kernel_f_amplitude: Interval::new(1.0, 1e8),
            kernel_f_length_scales: ell_f_bounds,
            kernel_delta_amplitude: Interval::new(1e-2, 1e4),
            kernel_delta_length_scales: vec![Interval::new(0.5, 1000.0); 2],
            mean_f_coefficients: vec![],
            mean_delta_coefficients: vec![],
        },
    }
}

/// Calibrate the liquid drop model on the training nuclei under each loss
/// and score binding-energy predictions on the held-out nuclei.
pub fn run_ldm_benchmark(cfg: &LdmConfig) -> Result<ExperimentReport> {
    let records = bundled_ldm_records()?;
    let data = ldm_data(&records, cfg)?;
    let mut report = ExperimentReport::new("ldm-benchmark", cfg.seed, cfg);
    let estimated = sigma_hat(&data.obs, cfg.ordering)?;
    report.push("data", "sigma_hat", estimated);
    // An explicit noise scale in the fit options replaces the estimate.
    let sigma = cfg.fit.sigma.unwrap_or(estimated);
    report.push("data", "sigma", sigma);
    report.push("data", "train", data.train.len() as f64);
    report.push("data", "test", data.test.len() as f64);
    report.push("data", "runs", data.runs.len() as f64);

    let template = ldm_template(&cfg.theta_box());
    let x_test = data.test_inputs();
    let truth = data.test_energies();
    let mut mle_model: Option<CalibrationModel> = None;
    for (k, &loss) in cfg.losses.iter().enumerate() {
        let start = Instant::now();
        let warm = match loss {
            LossKind::Cv { .. } if cfg.warm_start_cv => mle_model.clone(),
            _ => None,
        };
        let opts = FitOptions {
            loss,
            ordering: cfg.ordering,
            sigma: Some(sigma),
            template_start: warm.is_some(),
            seed: derive_seed(cfg.seed, &[10 + k as u64]),
            ..cfg.fit.clone()
        };
        let f = fit(warm.as_ref().unwrap_or(&template), &data.obs, &data.runs, &opts)?;
        let pd = FactoredModel::new(&f.model, &data.obs, &data.runs)?.predict(&x_test, PredictionTarget::LatentProcess)?;
        let e = rmse(pd.mean.as_slice(), &truth);
        let run = loss_label(loss);
        report.push(&run, "rmse", e);
        for (name, v) in f.param_names.iter().zip(f.theta_hat.iter().chain(&f.phi_hat)) {
            report.push(&run, name, *v);
        }
        report.push(&run, "loss", f.loss_value);
        report.push(&run, "evaluations", f.trace.evaluations as f64);
        for (i, r) in data.test.iter().enumerate() {
            report.point(format!("{run}/residual"), (r.z + r.n) as f64, pd.mean[i] - truth[i]);
        }
        report.time(&run, start.elapsed().as_secs_f64());
        if loss == LossKind::Mle {
            mle_model = Some(f.model);
        }
    }
    Ok(report)
}
