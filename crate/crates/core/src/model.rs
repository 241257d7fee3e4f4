//! The joint Gaussian law of the complete data set `d = (y, z)`.
//!
//! Observations follow `y_i = f(t_i, θ) + δ(t_i) + σ ε_i` and model runs
//! `z_j = f(t̃_j, θ̃_j)`, with independent GP priors on the emulator `f` and
//! the discrepancy `δ`. Marginally `d ~ N(M, K)` where
//!
//! ```text
//! M = [ m_f(T_y(θ)) + m_δ(T_y) ]      K = [ K_f(T_y,T_y) + K_δ(T_y,T_y) + σ²I   K_f(T_y,T_z) ]
//!     [ m_f(T_z(θ̃))           ]          [ K_f(T_z,T_y)                        K_f(T_z,T_z) ]
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{augment_with_theta, Interval, ModelRunSet, ObservationSet};
use crate::error::{CalibError, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{JitteredCholesky, JITTER_LEVELS};
use crate::mean::MeanSpec;

/// The compact box Υ for `(θ, φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub theta: Vec<Interval>,
    pub kernel_f_amplitude: Interval,
    pub kernel_f_length_scales: Vec<Interval>,
    pub kernel_delta_amplitude: Interval,
    pub kernel_delta_length_scales: Vec<Interval>,
    #[serde(default)]
    pub mean_f_coefficients: Vec<Interval>,
    #[serde(default)]
    pub mean_delta_coefficients: Vec<Interval>,
}

impl ParamBounds {
    /// Degenerate box pinning every entry at its current value.
    pub fn pinned(kernel_f: &KernelSpec, kernel_delta: &KernelSpec, mean_f: &MeanSpec, mean_delta: &MeanSpec, theta: &[f64]) -> Self {
        let fix = |v: &[f64]| v.iter().map(|&x| Interval::fixed(x)).collect::<Vec<_>>();
        Self {
            theta: fix(theta),
            kernel_f_amplitude: Interval::fixed(kernel_f.amplitude),
            kernel_f_length_scales: fix(&kernel_f.length_scales),
            kernel_delta_amplitude: Interval::fixed(kernel_delta.amplitude),
            kernel_delta_length_scales: fix(&kernel_delta.length_scales),
            mean_f_coefficients: fix(&mean_f.coefficients),
            mean_delta_coefficients: fix(&mean_delta.coefficients),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub mean_f: MeanSpec,
    pub mean_delta: MeanSpec,
    pub kernel_f: KernelSpec,
    pub kernel_delta: KernelSpec,
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub bounds: ParamBounds,
}

impl CalibrationModel {
    /// Number of controllable inputs `p`.
    pub fn input_dim(&self) -> usize {
        self.kernel_delta.input_dim
    }

    /// Number of calibration parameters `q`.
    pub fn calib_dim(&self) -> usize {
        self.theta.len()
    }

    /// Dimension and hyperparameter validity, without the bounds check.
    pub fn validate_structure(&self) -> Result<()> {
        let (p, q) = (self.input_dim(), self.calib_dim());
        self.kernel_f.validate()?;
        self.kernel_delta.validate()?;
        self.mean_f.validate()?;
        self.mean_delta.validate()?;
        if self.kernel_f.input_dim != p + q {
            return Err(CalibError::dims("kernel_f input dimension (p + q)", p + q, self.kernel_f.input_dim));
        }
        if self.mean_f.input_dim != p + q {
            return Err(CalibError::dims("mean_f input dimension (p + q)", p + q, self.mean_f.input_dim));
        }
        if self.mean_delta.input_dim != p {
            return Err(CalibError::dims("mean_delta input dimension", p, self.mean_delta.input_dim));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CalibError::InvalidParameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(CalibError::InvalidParameter("theta must be finite".into()));
        }
        let b = &self.bounds;
        let checks = [
            ("bounds.theta", q, b.theta.len()),
            ("bounds.kernel_f_length_scales", self.kernel_f.length_scales.len(), b.kernel_f_length_scales.len()),
            (
                "bounds.kernel_delta_length_scales",
                self.kernel_delta.length_scales.len(),
                b.kernel_delta_length_scales.len(),
            ),
            ("bounds.mean_f_coefficients", self.mean_f.coefficients.len(), b.mean_f_coefficients.len()),
            (
                "bounds.mean_delta_coefficients",
                self.mean_delta.coefficients.len(),
                b.mean_delta_coefficients.len(),
            ),
        ];
        for (what, expected, actual) in checks {
            if expected != actual {
                return Err(CalibError::dims(what, expected, actual));
            }
        }
        Ok(())
    }

    /// Structure plus membership of `(θ, φ)` in Υ.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        let layout = crate::params::ParamLayout::new(self);
        for (entry, value) in layout.entries().iter().zip(layout.extract(self)) {
            if !entry.bound.is_well_formed() {
                return Err(CalibError::InvalidParameter(format!("bounds for {} are not a valid interval", entry.name)));
            }
            if !entry.bound.contains(value) {
                return Err(CalibError::InvalidParameter(format!(
                    "{} = {value} outside bounds [{}, {}]",
                    entry.name, entry.bound.lower, entry.bound.upper
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, obs: &ObservationSet, runs: &ModelRunSet) -> Result<()> {
        self.validate_structure()?;
        let (p, q) = (self.input_dim(), self.calib_dim());
        if obs.input_dim() != p {
            return Err(CalibError::dims("observation inputs", p, obs.input_dim()));
        }
        if runs.input_dim() != p {
            return Err(CalibError::dims("model-run inputs", p, runs.input_dim()));
        }
        if runs.calib_dim() != q {
            return Err(CalibError::dims("model-run calibration settings", q, runs.calib_dim()));
        }
        Ok(())
    }

    /// `m_f(t, θ) + m_δ(t)` at the rows of `inputs`, with the model's own θ.
    pub fn prior_mean_at(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        let aug = augment_with_theta(inputs, &self.theta);
        Ok(self.mean_f.eval_rows(&aug)? + self.mean_delta.eval_rows(inputs)?)
    }

    /// `K_f((T,θ),(T',θ)) + K_δ(T,T')`.
    pub fn prior_cov_between(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let aa = augment_with_theta(a, &self.theta);
        let bb = augment_with_theta(b, &self.theta);
        Ok(self.kernel_f.cross_cov(&aa, &bb)? + self.kernel_delta.cross_cov(a, b)?)
    }
}

/// Mean and covariance blocks of `d`, split by observation / model run.
#[derive(Debug, Clone)]
pub(crate) struct JointBlocks {
    pub mean_y: DVector<f64>,
    pub mean_z: DVector<f64>,
    pub k_yy: DMatrix<f64>,
    pub k_yz: DMatrix<f64>,
    pub k_zz: DMatrix<f64>,
}

impl JointBlocks {
    pub fn assemble(model: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet) -> Result<Self> {
        model.check_data(obs, runs)?;
        let ty = augment_with_theta(obs.inputs(), &model.theta);
        let tz = runs.augmented_inputs();
        let mean_y = model.mean_f.eval_rows(&ty)? + model.mean_delta.eval_rows(obs.inputs())?;
        let mean_z = model.mean_f.eval_rows(&tz)?;
        let mut k_yy = model.kernel_f.gram_unchecked(&ty);
        k_yy += model.kernel_delta.gram_unchecked(obs.inputs());
        let s2 = model.sigma * model.sigma;
        for i in 0..k_yy.nrows() {
            k_yy[(i, i)] += s2;
        }
        let k_yz = model.kernel_f.cross_cov_unchecked(&ty, &tz);
        let k_zz = model.kernel_f.gram_unchecked(&tz);
        Ok(Self { mean_y, mean_z, k_yy, k_yz, k_zz })
    }
}

/// `M(θ, φ)`: observation means first, then model-run means.
pub fn joint_mean(model: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet) -> Result<DVector<f64>> {
    model.check_data(obs, runs)?;
    let ty = augment_with_theta(obs.inputs(), &model.theta);
    let mean_y = model.mean_f.eval_rows(&ty)? + model.mean_delta.eval_rows(obs.inputs())?;
    let mean_z = model.mean_f.eval_rows(&runs.augmented_inputs())?;
    let (n, s) = (mean_y.len(), mean_z.len());
    Ok(DVector::from_fn(n + s, |i, _| if i < n { mean_y[i] } else { mean_z[i - n] }))
}

/// `K(θ, φ, σ)` in `(y, z)` order.
pub fn joint_cov(model: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet) -> Result<DMatrix<f64>> {
    let b = JointBlocks::assemble(model, obs, runs)?;
    let (n, s) = (b.k_yy.nrows(), b.k_zz.nrows());
    let mut k = DMatrix::zeros(n + s, n + s);
    k.view_mut((0, 0), (n, n)).copy_from(&b.k_yy);
    k.view_mut((0, n), (n, s)).copy_from(&b.k_yz);
    k.view_mut((n, 0), (s, n)).copy_from(&b.k_yz.transpose());
    k.view_mut((n, n), (s, s)).copy_from(&b.k_zz);
    Ok(k)
}

/// `log N(d; M, K)`.
pub fn log_likelihood(model: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet) -> Result<f64> {
    Ok(FactoredModel::new(model, obs, runs)?.log_likelihood())
}

/// A Cholesky factorization of the joint data covariance, ordered `(z, y)`.
///
/// Placing the model runs first makes the leading block of the factor the
/// factor of `K_f(T_z, T_z)` and the trailing block the factor of the
/// covariance of `y` conditional on `z`. The factorization is immutable and
/// can be shared across threads for repeated predictions.
#[derive(Debug, Clone)]
pub struct FactoredModel {
    pub(crate) model: CalibrationModel,
    pub(crate) obs: ObservationSet,
    pub(crate) runs: ModelRunSet,
    pub(crate) chol: JitteredCholesky,
    /// `L⁻¹ (d - M)` in `(z, y)` order.
    pub(crate) white: DVector<f64>,
    /// `K⁻¹ (d - M)` in `(z, y)` order.
    pub(crate) alpha: DVector<f64>,
}

impl FactoredModel {
    pub fn new(model: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet) -> Result<Self> {
        Self::with_jitter_levels(model, obs, runs, &JITTER_LEVELS)
    }

    /// Like [`FactoredModel::new`] with a custom relative jitter schedule;
    /// a leading `0.0` tries an exact factorization first.
    pub fn with_jitter_levels(model: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet, levels: &[f64]) -> Result<Self> {
        let b = JointBlocks::assemble(model, obs, runs)?;
        let (n, s) = (b.k_yy.nrows(), b.k_zz.nrows());
        let mut k = DMatrix::zeros(n + s, n + s);
        k.view_mut((0, 0), (s, s)).copy_from(&b.k_zz);
        k.view_mut((s, 0), (n, s)).copy_from(&b.k_yz);
        k.view_mut((0, s), (s, n)).copy_from(&b.k_yz.transpose());
        k.view_mut((s, s), (n, n)).copy_from(&b.k_yy);
        let chol = JitteredCholesky::factor_with_levels(&k, levels)?;
        let resid = DVector::from_fn(n + s, |i, _| {
            if i < s {
                runs.outputs()[i] - b.mean_z[i]
            } else {
                obs.outputs()[i - s] - b.mean_y[i - s]
            }
        });
        let white = chol.solve_lower_vec(&resid);
        let mut a = DMatrix::from_column_slice(n + s, 1, white.as_slice());
        chol.solve_upper_in_place(&mut a);
        let alpha = DVector::from_column_slice(a.as_slice());
        Ok(Self {
            model: model.clone(),
            obs: obs.clone(),
            runs: runs.clone(),
            chol,
            white,
            alpha,
        })
    }

    pub fn model(&self) -> &CalibrationModel {
        &self.model
    }

    pub fn n_obs(&self) -> usize {
        self.obs.len()
    }

    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn log_likelihood(&self) -> f64 {
        let dim = self.white.len() as f64;
        -0.5 * self.white.norm_squared() - 0.5 * self.chol.log_det() - 0.5 * dim * (2.0 * PI).ln()
    }

    /// Absolute jitter that was needed to factor the joint covariance.
    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }
}
