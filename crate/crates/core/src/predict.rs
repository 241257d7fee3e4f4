//! Gaussian predictive distributions at new controllable inputs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{augment_with_theta, ModelRunSet, ObservationSet};
use crate::error::{CalibError, Result};
use crate::linalg::{JitteredCholesky, JITTER_LEVELS};
use crate::model::{CalibrationModel, FactoredModel};

/// Relative size of a negative variance that is treated as round-off.
const NEGATIVE_VARIANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionTarget {
    /// A new noisy observation `y*`; adds `σ²I`.
    Observation,
    /// The latent process `ζ = f(·, θ) + δ`.
    LatentProcess,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub target: PredictionTarget,
}

impl PredictiveDistribution {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CredibleBand {
    pub level: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Symmetrize, then clamp round-off negatives on the diagonal to zero.
fn finish_cov(mut cov: DMatrix<f64>, prior_var: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = cov.nrows();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        let v = cov[(i, i)];
        if v < 0.0 {
            if v >= -NEGATIVE_VARIANCE_TOL * prior_var[i].max(1.0) {
                cov[(i, i)] = 0.0;
            } else {
                return Err(CalibError::NegativeVariance { index: i, value: v });
            }
        }
    }
    Ok(cov)
}

impl FactoredModel {
    /// Predictive law of the latent process or of new observations at the
    /// rows of `targets`, given all of `d = (y, z)`.
    pub fn predict(&self, targets: &DMatrix<f64>, target: PredictionTarget) -> Result<PredictiveDistribution> {
        let model = &self.model;
        let p = model.input_dim();
        if targets.ncols() != p {
            return Err(CalibError::dims("prediction inputs", p, targets.ncols()));
        }
        let (n, s, m) = (self.obs.len(), self.runs.len(), targets.nrows());
        let t_aug = augment_with_theta(targets, &model.theta);
        let y_aug = augment_with_theta(self.obs.inputs(), &model.theta);
        let z_aug = self.runs.augmented_inputs();

        // Cᵀ with rows ordered (z, y) to match the factorization.
        let mut ct = DMatrix::zeros(s + n, m);
        ct.view_mut((0, 0), (s, m)).copy_from(&model.kernel_f.cross_cov_unchecked(&z_aug, &t_aug));
        let cy = model.kernel_f.cross_cov_unchecked(&y_aug, &t_aug)
            + model.kernel_delta.cross_cov_unchecked(self.obs.inputs(), targets);
        ct.view_mut((s, 0), (n, m)).copy_from(&cy);

        let prior_mean = model.prior_mean_at(targets)?;
        let mean = prior_mean + ct.tr_mul(&self.alpha);

        let k_star = model.kernel_f.gram_unchecked(&t_aug)
            + model.kernel_delta.gram_unchecked(targets);
        let prior_var = k_star.diagonal();
        self.chol.solve_lower_in_place(&mut ct);
        let mut cov = k_star - ct.tr_mul(&ct);
        if target == PredictionTarget::Observation {
            let s2 = model.sigma * model.sigma;
            for i in 0..m {
                cov[(i, i)] += s2;
            }
        }
        let cov = finish_cov(cov, &prior_var)?;
        Ok(PredictiveDistribution { mean, cov, target })
    }
}

/// Predictive distribution of `y*` or `ζ*` at `targets` given the data.
pub fn predictive(
    model: &CalibrationModel,
    obs: &ObservationSet,
    runs: &ModelRunSet,
    targets: &DMatrix<f64>,
    target: PredictionTarget,
) -> Result<PredictiveDistribution> {
    FactoredModel::new(model, obs, runs)?.predict(targets, target)
}

/// Law of the latent process `ζ(t) = f(t, θ) + δ(t)` given only the model
/// runs: mean `m_ζ` and covariance `K_ζ` at the rows of `targets`.
pub fn conditional_prior(
    model: &CalibrationModel,
    runs: &ModelRunSet,
    targets: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    conditional_prior_with_jitter_levels(model, runs, targets, &JITTER_LEVELS)
}

/// [`conditional_prior`] with an explicit jitter schedule for `K_f(runs)`.
pub fn conditional_prior_with_jitter_levels(
    model: &CalibrationModel,
    runs: &ModelRunSet,
    targets: &DMatrix<f64>,
    levels: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    model.validate_structure()?;
    let p = model.input_dim();
    if targets.ncols() != p {
        return Err(CalibError::dims("prediction inputs", p, targets.ncols()));
    }
    if runs.input_dim() != p || runs.calib_dim() != model.calib_dim() {
        return Err(CalibError::dims("model-run columns", p + model.calib_dim(), runs.input_dim() + runs.calib_dim()));
    }
    let t_aug = augment_with_theta(targets, &model.theta);
    let mut mean = model.prior_mean_at(targets)?;
    let k_star = model.kernel_f.gram_unchecked(&t_aug)
        + model.kernel_delta.gram_unchecked(targets);
    let prior_var = k_star.diagonal();
    let mut cov = k_star;
    if !runs.is_empty() {
        let z_aug = runs.augmented_inputs();
        let chol = JitteredCholesky::factor_with_levels(&model.kernel_f.gram_unchecked(&z_aug), levels)?;
        let resid = runs.outputs() - model.mean_f.eval_rows(&z_aug)?;
        let mut c = model.kernel_f.cross_cov_unchecked(&z_aug, &t_aug);
        let alpha = chol.solve_vec(&resid);
        mean += c.tr_mul(&alpha);
        chol.solve_lower_in_place(&mut c);
        cov -= c.tr_mul(&c);
    }
    Ok((mean, finish_cov(cov, &prior_var)?))
}

/// Equal-tailed pointwise credible band `mean ± z_{(1+level)/2} · sd`.
pub fn credible_band(pd: &PredictiveDistribution, level: f64) -> Result<CredibleBand> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CalibError::InvalidLevel(level));
    }
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
    let sd = pd.variances().map(|v| v.max(0.0).sqrt());
    Ok(CredibleBand {
        level,
        lower: &pd.mean - &sd * z,
        upper: &pd.mean + &sd * z,
    })
}
