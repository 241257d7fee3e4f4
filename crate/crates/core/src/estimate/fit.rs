use serde::{Deserialize, Serialize};

use crate::data::{ModelRunSet, ObservationSet};
use crate::error::{CalibError, Result};
use crate::estimate::loss::{CalibrationLoss, Loss, LossKind};
use crate::estimate::optim::{multi_start, MultiStartOptions, NelderMeadOptions};
use crate::estimate::sigma::{sigma_hat, OrderingPolicy};
use crate::model::CalibrationModel;
use crate::params::{ParamEntry, ParamLayout};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub loss: LossKind,
    pub ordering: OrderingPolicy,
    /// Use this noise scale instead of estimating it.
    pub sigma: Option<f64>,
    pub restarts: usize,
    pub nelder_mead: NelderMeadOptions,
    /// Also start one search from the template's own parameter values.
    pub template_start: bool,
    /// Screening budget per start, 0 for none; see
    /// [`MultiStartOptions::screen_evals`].
    pub screen_evals: usize,
    pub polish: usize,
    pub parallel: bool,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            loss: LossKind::Mle,
            ordering: OrderingPolicy::NearestNeighbor,
            sigma: None,
            restarts: 8,
            nelder_mead: NelderMeadOptions::default(),
            template_start: false,
            screen_evals: 0,
            polish: 1,
            parallel: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub evaluations: usize,
    pub restarts: usize,
    /// Whether the start that produced the estimate met the tolerances.
    pub converged: bool,
    pub failed_starts: usize,
    pub start_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    /// Hyperparameters in layout order after θ.
    pub phi_hat: Vec<f64>,
    pub param_names: Vec<String>,
    pub sigma_hat: f64,
    pub loss_value: f64,
    pub trace: OptimizerTrace,
    /// The template with every estimate substituted.
    pub model: CalibrationModel,
}

fn to_natural(e: &ParamEntry, u: f64) -> f64 {
    let b = e.bound;
    let v = if e.log_scaled() {
        (b.lower.ln() + u * (b.upper.ln() - b.lower.ln())).exp()
    } else {
        b.lower + u * b.width()
    };
    b.clamp(v)
}

fn to_unit(e: &ParamEntry, v: f64) -> f64 {
    let b = e.bound;
    let v = b.clamp(v);
    let u = if e.log_scaled() {
        (v.ln() - b.lower.ln()) / (b.upper.ln() - b.lower.ln())
    } else {
        (v - b.lower) / b.width()
    };
    u.clamp(0.0, 1.0)
}

/// Minimize `loss` over the box of `template`, holding `sigma` fixed.
///
/// Fixed entries (degenerate intervals) take their bound value; free entries
/// are searched on a unit cube that is logarithmic for positive parameters.
pub fn fit_with_loss(template: &CalibrationModel, loss: &dyn Loss, sigma: f64, opts: &FitOptions) -> Result<FitResult> {
    template.validate_structure()?;
    let layout = ParamLayout::new(template);
    for e in layout.entries() {
        if !e.bound.is_well_formed() {
            return Err(CalibError::InvalidParameter(format!("bounds for {} are not a valid interval", e.name)));
        }
    }
    let free = layout.free_indices();
    let entries = layout.entries();
    let base: Vec<f64> = entries.iter().map(|e| e.bound.lower).collect();
    let expand = |u: &[f64]| {
        let mut x = base.clone();
        for (k, &i) in free.iter().enumerate() {
            x[i] = to_natural(&entries[i], u[k]);
        }
        x
    };
    let objective = |u: &[f64]| loss.evaluate(&expand(u)).value;

    let mut extra = Vec::new();
    if opts.template_start {
        let current = layout.extract(template);
        extra.push(free.iter().map(|&i| to_unit(&entries[i], current[i])).collect::<Vec<_>>());
    }
    let ms = MultiStartOptions {
        restarts: opts.restarts,
        seed: derive_seed(opts.seed, &[2]),
        nelder_mead: opts.nelder_mead,
        screen_evals: opts.screen_evals,
        polish: opts.polish,
        parallel: opts.parallel,
    };
    let results = multi_start(objective, free.len(), &extra, &ms);

    let failures: Vec<String> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.value.is_finite())
        .map(|(i, r)| format!("start {i}: no finite loss in {} evaluations", r.evals))
        .collect();
    let best = results
        .iter()
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(CalibError::AllStartsFailed { failures: failures.clone() })?;

    let x = expand(&best.x);
    let mut model = layout.apply(template, &x);
    model.sigma = sigma;
    let q = template.calib_dim();
    Ok(FitResult {
        theta_hat: x[..q].to_vec(),
        phi_hat: x[q..].to_vec(),
        param_names: layout.names(),
        sigma_hat: sigma,
        loss_value: best.value,
        trace: OptimizerTrace {
            evaluations: results.iter().map(|r| r.evals).sum(),
            restarts: results.len(),
            converged: best.converged,
            failed_starts: failures.len(),
            start_values: results.iter().map(|r| r.value).collect(),
        },
        model,
    })
}

/// Estimate `σ` by differencing, then minimize the chosen loss over the box.
pub fn fit(template: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet, opts: &FitOptions) -> Result<FitResult> {
    template.check_data(obs, runs)?;
    let sigma = match opts.sigma {
        Some(s) if s >= 0.0 && s.is_finite() => s,
        Some(s) => return Err(CalibError::InvalidParameter(format!("sigma must be >= 0, got {s}"))),
        None => sigma_hat(obs, opts.ordering)?,
    };
    let loss = CalibrationLoss::new(template, obs, runs, sigma, opts.loss, derive_seed(opts.seed, &[1]))?;
    fit_with_loss(template, &loss, sigma, opts)
}
