//! Property checks shared by the property suite and the acceptance run.
//! Each check returns `Err` with a description of the first violation.

#![allow(dead_code)]

use std::f64::consts::PI;

use ebcal::data::{augment_with_theta, Interval, ModelRunSet, ObservationSet};
use ebcal::design::{latin_hypercube, DesignSpec};
use ebcal::estimate::{cv_folds, loss_cv, sigma_hat, OrderingPolicy};
use ebcal::harness::random_instance;
use ebcal::io::{read_model_runs, read_observations, write_model_runs, write_observations};
use ebcal::kernels::KernelSpec;
use ebcal::model::{joint_cov, joint_mean, CalibrationModel, FactoredModel};
use ebcal::params::ParamLayout;
use ebcal::predict::{predictive, PredictionTarget};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

pub type Check = std::result::Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn kernel() -> impl Strategy<Value = KernelSpec> {
    (0usize..3, 0.1f64..5.0, prop::collection::vec(0.05f64..3.0, 2)).prop_map(|(f, amp, ls)| match f {
        0 => KernelSpec::se_iso(2, amp, ls[0]).unwrap(),
        1 => KernelSpec::se_aniso(amp, ls).unwrap(),
        _ => KernelSpec::matern(amp, ls).unwrap(),
    })
}

pub fn points(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..12).prop_flat_map(move |n| {
        prop::collection::vec(-2.0f64..2.0, n * d).prop_map(move |v| DMatrix::from_row_slice(n, d, &v))
    })
}

/// Exact symmetry, numerical PSD and linear amplitude scaling of the Gram matrix.
pub fn kernel_laws(k: &KernelSpec, x: &DMatrix<f64>, c: f64) -> Check {
    let g = k.gram(x).map_err(|e| e.to_string())?;
    ensure((&g - g.transpose()).amax() == 0.0, || "gram not exactly symmetric".into())?;
    let min = g.clone().symmetric_eigen().eigenvalues.min();
    ensure(min >= -1e-8 * k.amplitude * x.nrows() as f64, || format!("min eigenvalue {min}"))?;
    let scaled = k.with_amplitude(c * k.amplitude).gram(x).map_err(|e| e.to_string())?;
    let err = (&scaled - &g * c).amax();
    ensure(err <= 1e-13 * c * k.amplitude, || format!("amplitude scaling off by {err}"))
}

/// Every one-dimensional projection has one point per equal-width bin.
pub fn lhs_one_per_bin(n: usize, p: usize, seed: u64, lo: f64, w: f64) -> Check {
    let d = latin_hypercube(&DesignSpec::new(n, vec![Interval::new(lo, lo + w); p], seed)).map_err(|e| e.to_string())?;
    for j in 0..p {
        let mut count = vec![0usize; n];
        for &v in d.column(j).iter() {
            ensure((lo..=lo + w).contains(&v), || format!("{v} outside [{lo}, {}]", lo + w))?;
            let b = (((v - lo) / w) * n as f64).floor() as usize;
            count[b.min(n - 1)] += 1;
        }
        ensure(count.iter().all(|&c| c == 1), || format!("column {j} bin counts {count:?}"))?;
    }
    Ok(())
}

fn line_obs(t: &[f64], y: &[f64]) -> ObservationSet {
    ObservationSet::with_bounding_domain(DMatrix::from_row_slice(t.len(), 1, t), DVector::from_row_slice(y)).unwrap()
}

/// `σ̂(y + c) = σ̂(y)` and `σ̂(a·y) = |a|·σ̂(y)`.
pub fn sigma_laws(t: &[f64], y: &[f64], shift: f64, scale: f64) -> Check {
    let s = |v: &[f64]| sigma_hat(&line_obs(t, v), OrderingPolicy::NearestNeighbor).unwrap();
    let base = s(y);
    let shifted = s(&y.iter().map(|v| v + shift).collect::<Vec<_>>());
    let scaled = s(&y.iter().map(|v| v * scale).collect::<Vec<_>>());
    ensure((shifted - base).abs() <= 1e-9 * (1.0 + base), || format!("shift: {shifted} vs {base}"))?;
    ensure((scaled - scale.abs() * base).abs() <= 1e-12 * (1.0 + scale.abs() * base), || {
        format!("scale {scale}: {scaled} vs {}", scale.abs() * base)
    })
}

fn data_vector(obs: &ObservationSet, runs: &ModelRunSet) -> DVector<f64> {
    let n = obs.len();
    DVector::from_fn(n + runs.len(), |i, _| if i < n { obs.outputs()[i] } else { runs.outputs()[i - n] })
}

/// Prior covariance between `targets` and every entry of `d = (y, z)`.
fn target_cross(m: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet, targets: &DMatrix<f64>) -> DMatrix<f64> {
    let cy = m.prior_cov_between(targets, obs.inputs()).unwrap();
    let cz = m.kernel_f.cross_cov(&augment_with_theta(targets, &m.theta), &runs.augmented_inputs()).unwrap();
    let (j, n, s) = (targets.nrows(), obs.len(), runs.len());
    DMatrix::from_fn(j, n + s, |a, b| if b < n { cy[(a, b)] } else { cz[(a, b - n)] })
}

/// The joint covariance of `d` with the diagonal inflation the factorization
/// actually applied, so the oracle conditions on the same matrix.
fn regularized_joint_cov(m: &CalibrationModel, obs: &ObservationSet, runs: &ModelRunSet) -> DMatrix<f64> {
    let jitter = FactoredModel::new(m, obs, runs).unwrap().jitter();
    let mut k = joint_cov(m, obs, runs).unwrap();
    for i in 0..k.nrows() {
        k[(i, i)] += jitter;
    }
    k
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Predictive mean and covariance against explicit block conditioning of
/// the joint normal of `(ζ*, y, z)`.
pub fn conditioning_oracle(n: usize, s: usize, j: usize, seed: u64, tol: f64) -> std::result::Result<f64, String> {
    let (m, obs, runs) = random_instance(n, s, seed);
    let targets = DMatrix::from_fn(j, 1, |i, _| (i as f64 + 0.5 + (seed % 7) as f64 * 0.1) / (j as f64 + 0.7));
    let pd = predictive(&m, &obs, &runs, &targets, PredictionTarget::LatentProcess).map_err(|e| e.to_string())?;

    let k = regularized_joint_cov(&m, &obs, &runs);
    let r = data_vector(&obs, &runs) - joint_mean(&m, &obs, &runs).unwrap();
    let c = target_cross(&m, &obs, &runs, &targets);
    let lu = k.lu();
    let mean = m.prior_mean_at(&targets).unwrap() + &c * lu.solve(&r).ok_or("singular joint covariance")?;
    let cov = m.prior_cov_between(&targets, &targets).unwrap() - &c * lu.solve(&c.transpose()).unwrap();

    let em = rel_err(&DMatrix::from_column_slice(j, 1, pd.mean.as_slice()), &DMatrix::from_column_slice(j, 1, mean.as_slice()));
    let ec = rel_err(&pd.cov, &cov);
    let worst = em.max(ec);
    ensure(worst <= tol, || format!("n={n} s={s} J={j} seed={seed}: mean rel {em:.2e}, cov rel {ec:.2e}"))?;
    Ok(worst)
}

/// `L_CV(K = n)` against the sum of dense leave-one-out predictive densities.
pub fn leave_one_out_oracle(n: usize, s: usize, seed: u64) -> Check {
    let (m, obs, runs) = random_instance(n, s, seed);
    let cand = ParamLayout::new(&m).extract(&m);
    let folds = cv_folds(n, n, seed).map_err(|e| e.to_string())?;
    let got = loss_cv(&m, &obs, &runs, &cand, m.sigma, &folds).map_err(|e| e.to_string())?;
    ensure(!got.pd_failure, || "factorization flagged".into())?;

    let k = regularized_joint_cov(&m, &obs, &runs);
    let d = data_vector(&obs, &runs);
    let mu = joint_mean(&m, &obs, &runs).unwrap();
    let total = n + s;
    let mut want = 0.0;
    for i in 0..n {
        let rest: Vec<usize> = (0..total).filter(|&r| r != i).collect();
        let k_rr = DMatrix::from_fn(rest.len(), rest.len(), |a, b| k[(rest[a], rest[b])]);
        let k_ir = DMatrix::from_fn(1, rest.len(), |_, b| k[(i, rest[b])]);
        let r = DVector::from_iterator(rest.len(), rest.iter().map(|&q| d[q] - mu[q]));
        let lu = k_rr.lu();
        let cm = mu[i] + (&k_ir * lu.solve(&r).unwrap())[(0, 0)];
        let cv = k[(i, i)] - (&k_ir * lu.solve(&k_ir.transpose()).unwrap())[(0, 0)];
        want += 0.5 * (d[i] - cm).powi(2) / cv + 0.5 * cv.ln() + 0.5 * (2.0 * PI).ln();
    }
    ensure((got.value - want).abs() <= 1e-8 * want.abs().max(1.0), || format!("n={n} s={s}: {} vs {want}", got.value))
}

pub fn observation_set() -> impl Strategy<Value = ObservationSet> {
    (1usize..10, 1usize..4).prop_flat_map(|(n, p)| {
        (prop::collection::vec(finite(), n * p), prop::collection::vec(finite(), n)).prop_map(move |(x, y)| {
            ObservationSet::with_bounding_domain(DMatrix::from_row_slice(n, p, &x), DVector::from_vec(y)).unwrap()
        })
    })
}

pub fn run_set() -> impl Strategy<Value = ModelRunSet> {
    (1usize..10, 1usize..3, 1usize..3).prop_flat_map(|(s, p, q)| {
        (prop::collection::vec(finite(), s * p), prop::collection::vec(finite(), s * q), prop::collection::vec(finite(), s))
            .prop_map(move |(x, t, z)| {
                ModelRunSet::new(DMatrix::from_row_slice(s, p, &x), DMatrix::from_row_slice(s, q, &t), DVector::from_vec(z)).unwrap()
            })
    })
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1e-12f64..1e-12, prop::num::f64::NORMAL]
}

/// Writing then reading a data set reproduces it bit for bit.
pub fn csv_round_trip(obs: &ObservationSet, runs: &ModelRunSet) -> Check {
    let mut buf = Vec::new();
    write_observations(&mut buf, obs).map_err(|e| e.to_string())?;
    let back = read_observations(buf.as_slice(), Some(obs.domain().to_vec())).map_err(|e| e.to_string())?;
    ensure(&back == obs, || format!("observations changed:\n{}", String::from_utf8_lossy(&buf)))?;
    let mut buf = Vec::new();
    write_model_runs(&mut buf, runs).map_err(|e| e.to_string())?;
    let back = read_model_runs(buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(&back == runs, || format!("runs changed:\n{}", String::from_utf8_lossy(&buf)))
}
