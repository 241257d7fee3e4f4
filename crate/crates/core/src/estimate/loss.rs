use std::f64::consts::PI;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ModelRunSet, ObservationSet};
use crate::error::{CalibError, Result};
use crate::model::{CalibrationModel, FactoredModel};
use crate::params::ParamLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossKind {
    Mle,
    Cv { folds: usize },
}

/// A loss evaluation. Covariance failures become `+∞` with `pd_failure` set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub pd_failure: bool,
}

impl LossValue {
    pub fn finite(value: f64) -> Self {
        Self { value, pd_failure: false }
    }

    pub fn failed() -> Self {
        Self { value: f64::INFINITY, pd_failure: true }
    }
}

/// An objective over the packed parameter vector of a model template.
pub trait Loss: Sync {
    fn evaluate(&self, params: &[f64]) -> LossValue;
}

/// Seeded random partition of `0..n` into `k` blocks whose sizes differ by at
/// most one.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(CalibError::InvalidParameter(format!(
            "cross-validation needs 2 <= K <= n, got K = {k} with n = {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

fn with_candidate(template: &CalibrationModel, candidate: &[f64], sigma: f64) -> Result<CalibrationModel> {
    let layout = ParamLayout::new(template);
    if candidate.len() != layout.len() {
        return Err(CalibError::dims("candidate parameter vector", layout.len(), candidate.len()));
    }
    let mut m = layout.apply(template, candidate);
    m.sigma = sigma;
    m.validate_structure()?;
    Ok(m)
}

fn factor_or_flag(m: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet) -> Result<Option<FactoredModel>> {
    match FactoredModel::new(m, obs, runs) {
        Ok(f) => Ok(Some(f)),
        Err(CalibError::NotPositiveDefinite { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Negative log-likelihood of the complete data at `candidate` (packed as in
/// [`ParamLayout`]) with the noise scale held at `sigma`.
pub fn loss_mle(
    template: &CalibrationModel,
    obs: &ObservationSet,
    runs: &ModelRunSet,
    candidate: &[f64],
    sigma: f64,
) -> Result<LossValue> {
    let m = with_candidate(template, candidate, sigma)?;
    Ok(match factor_or_flag(&m, obs, runs)? {
        Some(f) => LossValue::finite(-f.log_likelihood()),
        None => LossValue::failed(),
    })
}

/// Per-fold negative log predictive densities of held-out observations,
/// each conditioned on the remaining observations and every model run.
pub fn loss_cv_folds(
    template: &CalibrationModel,
    obs: &ObservationSet,
    runs: &ModelRunSet,
    candidate: &[f64],
    sigma: f64,
    folds: &[Vec<usize>],
) -> Result<Option<Vec<f64>>> {
    let n = obs.len();
    let mut seen = vec![false; n];
    for fold in folds {
        if fold.is_empty() {
            return Err(CalibError::InvalidParameter("empty cross-validation fold".into()));
        }
        for &i in fold {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(CalibError::InvalidParameter("folds must partition the observations".into()));
            }
        }
    }
    let m = with_candidate(template, candidate, sigma)?;
    let Some(f) = factor_or_flag(&m, obs, runs)? else {
        return Ok(None);
    };
    // With the factor ordered (z, y), X = L_yy⁻¹ gives the y-block of the
    // joint precision as XᵀX. For a held-out block I, with P = (XᵀX)_II and
    // a = (K⁻¹r)_I, the conditional residual is P⁻¹a with covariance P⁻¹.
    let s = f.n_runs();
    let x = f.chol.trailing_lower_inverse(s);
    let mut out = Vec::with_capacity(folds.len());
    for fold in folds {
        let k = fold.len();
        let xi = x.select_columns(fold);
        let p = xi.tr_mul(&xi);
        let a = DVector::from_iterator(k, fold.iter().map(|&i| f.alpha[s + i]));
        let Some(pc) = p.cholesky() else {
            return Ok(None);
        };
        let l = pc.l();
        let log_det_p: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let w = l.solve_lower_triangular(&a).unwrap_or_else(|| DVector::from_element(k, f64::NAN));
        let v = 0.5 * w.norm_squared() - 0.5 * log_det_p + 0.5 * k as f64 * (2.0 * PI).ln();
        if !v.is_finite() {
            return Ok(None);
        }
        out.push(v);
    }
    Ok(Some(out))
}

/// `L_CV(K)`: sum of the fold terms from [`loss_cv_folds`].
pub fn loss_cv(
    template: &CalibrationModel,
    obs: &ObservationSet,
    runs: &ModelRunSet,
    candidate: &[f64],
    sigma: f64,
    folds: &[Vec<usize>],
) -> Result<LossValue> {
    Ok(match loss_cv_folds(template, obs, runs, candidate, sigma, folds)? {
        Some(v) => LossValue::finite(v.iter().sum()),
        None => LossValue::failed(),
    })
}

/// The calibration loss bound to a template and a data set.
pub struct CalibrationLoss<'a> {
    pub template: &'a CalibrationModel,
    pub obs: &'a ObservationSet,
    pub runs: &'a ModelRunSet,
    pub sigma: f64,
    pub folds: Option<Vec<Vec<usize>>>,
}

impl<'a> CalibrationLoss<'a> {
    pub fn new(
        template: &'a CalibrationModel,
        obs: &'a ObservationSet,
        runs: &'a ModelRunSet,
        sigma: f64,
        kind: LossKind,
        seed: u64,
    ) -> Result<Self> {
        template.check_data(obs, runs)?;
        let folds = match kind {
            LossKind::Mle => None,
            LossKind::Cv { folds } => Some(cv_folds(obs.len(), folds, seed)?),
        };
        Ok(Self { template, obs, runs, sigma, folds })
    }
}

impl Loss for CalibrationLoss<'_> {
    fn evaluate(&self, params: &[f64]) -> LossValue {
        let r = match &self.folds {
            None => loss_mle(self.template, self.obs, self.runs, params, self.sigma),
            Some(folds) => loss_cv(self.template, self.obs, self.runs, params, self.sigma, folds),
        };
        r.unwrap_or_else(|_| LossValue::failed())
    }
}

/// Dense reference for one fold, used by tests: condition the joint normal
/// on everything outside the fold.
#[cfg(test)]
pub(crate) fn fold_oracle(m: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet, fold: &[usize]) -> f64 {
    use crate::model::{joint_cov, joint_mean};
    use nalgebra::DMatrix;
    let k = joint_cov(m, obs, runs).unwrap();
    let mu = joint_mean(m, obs, runs).unwrap();
    let n = obs.len();
    let d = DVector::from_fn(n + runs.len(), |i, _| if i < n { obs.outputs()[i] } else { runs.outputs()[i - n] });
    let rest: Vec<usize> = (0..n + runs.len()).filter(|i| !fold.contains(i)).collect();
    let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| k[(r[i], c[j])]);
    let k_ff = sub(fold, fold);
    let k_fr = sub(fold, &rest);
    let k_rr_inv = sub(&rest, &rest).try_inverse().unwrap();
    let r_rest = DVector::from_iterator(rest.len(), rest.iter().map(|&i| d[i] - mu[i]));
    let cond_mean = DVector::from_iterator(fold.len(), fold.iter().map(|&i| mu[i])) + &k_fr * &k_rr_inv * r_rest;
    let cond_cov = k_ff - &k_fr * &k_rr_inv * k_fr.transpose();
    let e = DVector::from_iterator(fold.len(), fold.iter().map(|&i| d[i])) - cond_mean;
    let quad = (e.transpose() * cond_cov.clone().try_inverse().unwrap() * &e)[(0, 0)];
    0.5 * quad + 0.5 * cond_cov.determinant().ln() + 0.5 * fold.len() as f64 * (2.0 * PI).ln()
}
