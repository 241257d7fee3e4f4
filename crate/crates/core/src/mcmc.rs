//! Random-walk Metropolis–Hastings over `(θ, φ, σ)`.
//!
//! Components are updated one at a time. Positive parameters move on the log
//! scale (with the Jacobian term in the acceptance ratio). During burn-in the
//! per-component step sizes are tuned toward a 20–40% acceptance rate; they
//! are frozen afterwards.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::data::{Interval, ModelRunSet, ObservationSet};
use crate::error::{CalibError, Result};
use crate::model::{CalibrationModel, FactoredModel};
use crate::params::{ParamEntry, ParamKind, ParamLayout};
use crate::predict::{PredictionTarget, PredictiveDistribution};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            Prior::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
            Prior::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && lower < upper,
        };
        if ok {
            Ok(())
        } else {
            Err(CalibError::InvalidParameter(format!("malformed prior {self:?}")))
        }
    }

    /// Support contained in `(0, ∞)`.
    pub fn positive_support(&self) -> bool {
        matches!(self, Prior::Gamma { .. } | Prior::InverseGamma { .. })
    }

    /// Normalized log density; `-∞` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
            }
            Prior::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            Prior::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
            }
            Prior::Uniform { lower, upper } => {
                if x < lower || x > upper {
                    f64::NEG_INFINITY
                } else {
                    -(upper - lower).ln()
                }
            }
        }
    }
}

/// One prior per entry of the layout `θ | φ | σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    layout: ParamLayout,
    priors: Vec<Prior>,
}

impl PriorSpec {
    pub fn new(template: &CalibrationModel, priors: Vec<Prior>) -> Result<Self> {
        let layout = sampling_layout(template);
        if priors.len() != layout.len() {
            return Err(CalibError::dims("prior list", layout.len(), priors.len()));
        }
        for (e, p) in layout.entries().iter().zip(&priors) {
            p.validate()?;
            if p.positive_support() && !e.positive {
                return Err(CalibError::InvalidParameter(format!(
                    "{} can be negative but its prior {p:?} has positive support",
                    e.name
                )));
            }
        }
        Ok(Self { layout, priors })
    }

    /// Build the list by calling `choose` on every layout entry.
    pub fn from_fn(template: &CalibrationModel, choose: impl Fn(&ParamEntry) -> Prior) -> Result<Self> {
        let layout = sampling_layout(template);
        let priors = layout.entries().iter().map(choose).collect();
        Self::new(template, priors)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    pub fn log_prior(&self, x: &[f64]) -> f64 {
        if x.len() != self.priors.len() {
            return f64::NEG_INFINITY;
        }
        self.priors.iter().zip(x).map(|(p, &v)| p.log_density(v)).sum()
    }
}

fn sampling_layout(template: &CalibrationModel) -> ParamLayout {
    ParamLayout::with_sigma(template, Interval::new(0.0, f64::INFINITY))
}

/// Unnormalized log posterior at `candidate` (layout `θ | φ | σ`).
///
/// Any invalid candidate, out-of-support value or factorization failure
/// yields `-∞`.
pub fn log_posterior(
    template: &CalibrationModel,
    obs: &ObservationSet,
    runs: &ModelRunSet,
    candidate: &[f64],
    priors: &PriorSpec,
) -> f64 {
    let lp = priors.log_prior(candidate);
    if lp == f64::NEG_INFINITY || lp.is_nan() {
        return f64::NEG_INFINITY;
    }
    let model = priors.layout.apply(template, candidate);
    if model.validate_structure().is_err() {
        return f64::NEG_INFINITY;
    }
    match FactoredModel::new(&model, obs, runs) {
        Ok(f) if f.log_likelihood().is_finite() => f.log_likelihood() + lp,
        _ => f64::NEG_INFINITY,
    }
}

/// Metropolis rule: accept when `ln u < log_ratio`.
pub fn mh_accept(log_ratio: f64, u: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || u.ln() < log_ratio
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainOptions {
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub thinning: usize,
    /// Tune step sizes during burn-in.
    pub adapt: bool,
    pub seed: u64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { iterations: 2000, burn_in_fraction: 0.2, thinning: 1, adapt: true, seed: 0 }
    }
}

impl ChainOptions {
    pub fn burn_in(&self) -> usize {
        (self.iterations as f64 * self.burn_in_fraction).floor() as usize
    }
}

const ADAPT_BATCH: usize = 50;
const TARGET_ACCEPTANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub names: Vec<String>,
    /// Retained draws, one row per sample.
    pub samples: DMatrix<f64>,
    pub log_posterior: Vec<f64>,
    /// Post-burn-in acceptance over all component proposals.
    pub acceptance_rate: f64,
    pub acceptance_by_param: Vec<f64>,
    /// Step sizes after adaptation.
    pub proposal_scales: Vec<f64>,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.samples.row(i).iter().copied().collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.samples.ncols()).map(|j| self.samples.column(j).mean()).collect()
    }

    /// Batch-means Monte-Carlo standard error of each column mean.
    pub fn mcse(&self) -> Vec<f64> {
        (0..self.samples.ncols())
            .map(|j| batch_means_se(self.samples.column(j).as_slice()))
            .collect()
    }

    /// One row per retained sample, headed by the parameter names.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        header.push("log_posterior".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.samples.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.log_posterior[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Standard error of the mean of `x` from `⌊√n⌋` non-overlapping batches.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let n = x.len();
    let b = (n as f64).sqrt().floor() as usize;
    if b < 2 {
        return f64::NAN;
    }
    let size = n / b;
    let means: Vec<f64> = (0..b).map(|k| x[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var * size as f64 / n as f64).sqrt()
}

/// Sample from an arbitrary log density.
///
/// `positive[j]` switches component `j` to multiplicative moves; a zero
/// entry in `scales` holds that component fixed.
pub fn run_chain_with<F>(
    log_density: F,
    names: Vec<String>,
    init: &[f64],
    positive: &[bool],
    scales: &[f64],
    opts: &ChainOptions,
) -> Result<Chain>
where
    F: Fn(&[f64]) -> f64,
{
    let d = init.len();
    if names.len() != d || positive.len() != d || scales.len() != d {
        return Err(CalibError::dims("chain setup", d, names.len().min(positive.len()).min(scales.len())));
    }
    if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(CalibError::InvalidParameter("proposal scales must be finite and >= 0".into()));
    }
    if opts.thinning == 0 || !(0.0..1.0).contains(&opts.burn_in_fraction) {
        return Err(CalibError::InvalidParameter("thinning must be >= 1 and burn-in fraction in [0, 1)".into()));
    }
    let burn_in = opts.burn_in();
    if opts.iterations <= burn_in {
        return Err(CalibError::InvalidParameter(format!(
            "{} iterations leave no draws after a burn-in of {burn_in}",
            opts.iterations
        )));
    }
    if (0..d).any(|j| positive[j] && scales[j] > 0.0 && init[j] <= 0.0) {
        return Err(CalibError::InvalidInitialState);
    }
    let mut x = init.to_vec();
    let mut lp = log_density(&x);
    if !lp.is_finite() {
        return Err(CalibError::InvalidInitialState);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut log_scale: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let active: Vec<usize> = (0..d).filter(|&j| scales[j] > 0.0).collect();
    let mut batch_acc = vec![0usize; d];
    let mut batches = 0usize;
    let mut accepted = vec![0usize; d];
    let mut proposed = vec![0usize; d];
    let mut rows = Vec::new();
    let mut trace = Vec::new();

    for it in 0..opts.iterations {
        for &j in &active {
            let step = log_scale[j].exp() * rng.sample::<f64, _>(StandardNormal);
            let old = x[j];
            let (new, log_jac) = if positive[j] { (old * step.exp(), step) } else { (old + step, 0.0) };
            x[j] = new;
            let lp_new = log_density(&x);
            let u: f64 = rng.gen();
            let ok = lp_new.is_finite() && mh_accept(lp_new - lp + log_jac, u);
            if ok {
                lp = lp_new;
            } else {
                x[j] = old;
            }
            if it < burn_in {
                batch_acc[j] += ok as usize;
            } else {
                proposed[j] += 1;
                accepted[j] += ok as usize;
            }
        }
        if opts.adapt && it < burn_in && (it + 1) % ADAPT_BATCH == 0 {
            batches += 1;
            let gain = 3.0 / (batches as f64).sqrt();
            for &j in &active {
                let rate = batch_acc[j] as f64 / ADAPT_BATCH as f64;
                log_scale[j] += gain * (rate - TARGET_ACCEPTANCE);
                batch_acc[j] = 0;
            }
        }
        if it >= burn_in && (it - burn_in).is_multiple_of(opts.thinning) {
            rows.extend_from_slice(&x);
            trace.push(lp);
        }
    }

    let total_prop: usize = proposed.iter().sum();
    let total_acc: usize = accepted.iter().sum();
    Ok(Chain {
        names,
        samples: DMatrix::from_row_slice(trace.len(), d, &rows),
        log_posterior: trace,
        acceptance_rate: if total_prop == 0 { 0.0 } else { total_acc as f64 / total_prop as f64 },
        acceptance_by_param: (0..d)
            .map(|j| if proposed[j] == 0 { 0.0 } else { accepted[j] as f64 / proposed[j] as f64 })
            .collect(),
        proposal_scales: (0..d).map(|j| if scales[j] > 0.0 { log_scale[j].exp() } else { 0.0 }).collect(),
        seed: opts.seed,
        iterations: opts.iterations,
        burn_in,
        thinning: opts.thinning,
    })
}

/// Starting step sizes: 0.1 on the log scale for positive entries, 5% of
/// the box width otherwise, and zero for entries pinned by their bounds.
pub fn default_scales(template: &CalibrationModel) -> Vec<f64> {
    let layout = sampling_layout(template);
    layout
        .entries()
        .iter()
        .map(|e| match (e.kind, e.bound.is_fixed()) {
            (_, true) => 0.0,
            (ParamKind::Sigma, _) => 0.1,
            (_, _) if e.positive => 0.1,
            _ => 0.05 * e.bound.width().max(1e-3),
        })
        .collect()
}

/// Sample the calibration posterior starting from `init` (layout `θ | φ | σ`).
pub fn run_chain(
    template: &CalibrationModel,
    obs: &ObservationSet,
    runs: &ModelRunSet,
    priors: &PriorSpec,
    init: &[f64],
    scales: &[f64],
    opts: &ChainOptions,
) -> Result<Chain> {
    template.check_data(obs, runs)?;
    let layout = priors.layout();
    let positive: Vec<bool> = layout.entries().iter().map(|e| e.positive).collect();
    run_chain_with(
        |x| log_posterior(template, obs, runs, x, priors),
        layout.names(),
        init,
        &positive,
        scales,
        opts,
    )
}

/// Mixture of per-draw predictive distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEnsemble {
    pub draws: Vec<PredictiveDistribution>,
    pub mean: DVector<f64>,
    /// Pointwise mixture variance.
    pub variance: DVector<f64>,
    pub level: f64,
    /// Pointwise equal-tailed mixture quantiles at `level`.
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Draws whose predictive could not be formed.
    pub skipped: usize,
}

/// Quantile of an equal-weight mixture of normals by bisection on its CDF.
fn mixture_quantile(means: &[f64], sds: &[f64], p: f64) -> f64 {
    let std = Normal::standard();
    let cdf = |x: f64| {
        means
            .iter()
            .zip(sds)
            .map(|(&m, &s)| if s > 0.0 { std.cdf((x - m) / s) } else if x >= m { 1.0 } else { 0.0 })
            .sum::<f64>()
            / means.len() as f64
    };
    let zmax = 40.0;
    let mut lo = means.iter().zip(sds).map(|(m, s)| m - zmax * s).fold(f64::INFINITY, f64::min);
    let mut hi = means.iter().zip(sds).map(|(m, s)| m + zmax * s).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Posterior predictive at `targets` from `n_draws` retained samples spread
/// evenly over the chain.
#[allow(clippy::too_many_arguments)]
pub fn posterior_predictive(
    chain: &Chain,
    template: &CalibrationModel,
    obs: &ObservationSet,
    runs: &ModelRunSet,
    targets: &DMatrix<f64>,
    target: PredictionTarget,
    n_draws: usize,
    level: f64,
) -> Result<PredictiveEnsemble> {
    if n_draws == 0 || n_draws > chain.len() {
        return Err(CalibError::InsufficientData { needed: n_draws.max(1), got: chain.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CalibError::InvalidLevel(level));
    }
    let layout = sampling_layout(template);
    if chain.samples.ncols() != layout.len() {
        return Err(CalibError::dims("chain columns", layout.len(), chain.samples.ncols()));
    }
    let m = targets.nrows();
    let mut draws = Vec::with_capacity(n_draws);
    let mut skipped = 0;
    for k in 0..n_draws {
        let i = k * chain.len() / n_draws;
        let model = layout.apply(template, &chain.sample(i));
        match FactoredModel::new(&model, obs, runs).and_then(|f| f.predict(targets, target)) {
            Ok(pd) => draws.push(pd),
            Err(CalibError::NotPositiveDefinite { .. }) | Err(CalibError::NegativeVariance { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if draws.is_empty() {
        return Err(CalibError::InsufficientData { needed: 1, got: 0 });
    }
    // Running means keep a repeated draw exactly equal to itself.
    let mut mean: DVector<f64> = DVector::zeros(m);
    let mut second: DVector<f64> = DVector::zeros(m);
    for (k, pd) in draws.iter().enumerate() {
        let w = 1.0 / (k + 1) as f64;
        let var = pd.variances();
        for i in 0..m {
            mean[i] += (pd.mean[i] - mean[i]) * w;
            let s = var[i] + pd.mean[i] * pd.mean[i];
            second[i] += (s - second[i]) * w;
        }
    }
    let variance = DVector::from_fn(m, |i, _| (second[i] - mean[i] * mean[i]).max(0.0));
    let (mut lower, mut upper) = (DVector::zeros(m), DVector::zeros(m));
    let tail = 0.5 * (1.0 - level);
    for i in 0..m {
        let mu: Vec<f64> = draws.iter().map(|d| d.mean[i]).collect();
        let sd: Vec<f64> = draws.iter().map(|d| d.cov[(i, i)].max(0.0).sqrt()).collect();
        lower[i] = mixture_quantile(&mu, &sd, tail);
        upper[i] = mixture_quantile(&mu, &sd, 1.0 - tail);
    }
    Ok(PredictiveEnsemble { draws, mean, variance, level, lower, upper, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::mean::{Basis, MeanSpec};
    use crate::model::ParamBounds;
    use crate::predict::predictive;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn prior_densities() {
        let n = Prior::Normal { mean: 1.0, sd: 2.0 };
        assert!((n.log_density(1.0) - (-(2.0f64).ln() - 0.5 * LN_2PI)).abs() < 1e-14);
        // Gamma(1, 3) is Exp(3).
        let g = Prior::Gamma { shape: 1.0, rate: 3.0 };
        assert!((g.log_density(0.5) - (3.0f64.ln() - 1.5)).abs() < 1e-12);
        assert_eq!(g.log_density(-0.1), f64::NEG_INFINITY);
        // IG(3, 1) at x = 1: 3·0 − ln 2 − 4·0 − 1.
        let ig = Prior::InverseGamma { shape: 3.0, scale: 1.0 };
        assert!((ig.log_density(1.0) - (-(2.0f64).ln() - 1.0)).abs() < 1e-12);
        assert_eq!(ig.log_density(0.0), f64::NEG_INFINITY);
        let u = Prior::Uniform { lower: 0.0, upper: 4.0 };
        assert_eq!(u.log_density(2.0), -(4.0f64).ln());
        assert_eq!(u.log_density(4.5), f64::NEG_INFINITY);
        assert!(Prior::Gamma { shape: 0.0, rate: 1.0 }.validate().is_err());
    }

    #[test]
    fn mh_rule() {
        assert!(mh_accept(0.5, 0.999_999));
        assert!(mh_accept(0.0, 1.0));
        assert!(!mh_accept(-1.0, 0.5));
        assert!(mh_accept(-1.0, 0.3));
        assert!(!mh_accept(f64::NAN, 0.0));
        assert!(!mh_accept(f64::NEG_INFINITY, 1e-300));
    }

    #[test]
    fn batch_means_on_iid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..40_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let se = batch_means_se(&x);
        assert!((se / (1.0 / 200.0) - 1.0).abs() < 0.25, "{se}");
    }

    #[test]
    fn standard_normal_target() {
        let opts = ChainOptions { iterations: 62_500, seed: 11, ..Default::default() };
        let c = run_chain_with(|x| -0.5 * x[0] * x[0], names(1), &[3.0], &[false], &[1.0], &opts).unwrap();
        assert_eq!(c.len(), 50_000);
        let col = c.samples.column(0);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
        assert!(mean.abs() < 3.0 * c.mcse()[0], "mean {mean} se {}", c.mcse()[0]);
        assert!((var - 1.0).abs() < 0.15, "{var}");
        assert!(c.acceptance_rate > 0.2 && c.acceptance_rate < 0.6, "{}", c.acceptance_rate);
    }

    #[test]
    fn log_scale_moves_target_gamma() {
        // Gamma(3, 2): mean 1.5, variance 0.75.
        let g = Prior::Gamma { shape: 3.0, rate: 2.0 };
        let opts = ChainOptions { iterations: 50_000, seed: 5, ..Default::default() };
        let c = run_chain_with(|x| g.log_density(x[0]), names(1), &[1.0], &[true], &[0.5], &opts).unwrap();
        let m = c.mean()[0];
        assert!((m - 1.5).abs() < 3.0 * c.mcse()[0] + 1e-3, "{m}");
        assert!(c.samples.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn acceptance_falls_with_scale() {
        let rate = |s: f64| {
            let opts = ChainOptions { iterations: 20_000, adapt: false, seed: 2, ..Default::default() };
            run_chain_with(|x| -0.5 * x[0] * x[0], names(1), &[0.0], &[false], &[s], &opts).unwrap().acceptance_rate
        };
        let (a, b, c) = (rate(0.3), rate(2.0), rate(10.0));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn adaptation_lands_in_band() {
        let opts = ChainOptions { iterations: 20_000, seed: 9, ..Default::default() };
        let c = run_chain_with(|x| -0.5 * x[0] * x[0] / 1e-4, names(1), &[0.0], &[false], &[5.0], &opts).unwrap();
        assert!(c.acceptance_rate > 0.2 && c.acceptance_rate < 0.4, "{}", c.acceptance_rate);
    }

    #[test]
    fn three_state_detailed_balance() {
        let target: [f64; 3] = [0.2, 0.3, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut state = 0usize;
        let mut counts = [0usize; 3];
        let steps = 1_000_000;
        for _ in 0..steps {
            let prop = (state + rng.gen_range(1..3)) % 3;
            if mh_accept(target[prop].ln() - target[state].ln(), rng.gen()) {
                state = prop;
            }
            counts[state] += 1;
        }
        for k in 0..3 {
            let freq = counts[k] as f64 / steps as f64;
            assert!((freq - target[k]).abs() / target[k] < 0.02, "state {k}: {freq}");
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let f = |x: &[f64]| -0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1]);
        let opts = ChainOptions { iterations: 500, seed: 1, ..Default::default() };
        let a = run_chain_with(f, names(2), &[0.1, 0.2], &[false; 2], &[1.0; 2], &opts).unwrap();
        let b = run_chain_with(f, names(2), &[0.1, 0.2], &[false; 2], &[1.0; 2], &opts).unwrap();
        assert_eq!(a, b);
        let c = run_chain_with(f, names(2), &[0.1, 0.2], &[false; 2], &[1.0; 2], &ChainOptions { seed: 2, ..opts }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn bad_setup_rejected() {
        let f = |x: &[f64]| if x[0] > 0.0 { 0.0 } else { f64::NEG_INFINITY };
        let o = ChainOptions::default();
        assert_eq!(run_chain_with(f, names(1), &[-1.0], &[false], &[1.0], &o).unwrap_err(), CalibError::InvalidInitialState);
        assert!(run_chain_with(f, names(1), &[1.0], &[false], &[-1.0], &o).is_err());
        assert!(run_chain_with(f, names(1), &[1.0], &[false], &[1.0], &ChainOptions { iterations: 0, ..o }).is_err());
    }

    /// `y_i = β + ε_i` with σ = 1 and every covariance amplitude zero, so
    /// the intercept `β` has a conjugate normal posterior and `θ` (which no
    /// longer enters the likelihood) keeps its prior.
    fn conjugate_toy() -> (CalibrationModel, ObservationSet, ModelRunSet) {
        let ys = [0.8, 1.7, 1.1, 0.4, 1.9, 1.3];
        let obs = ObservationSet::new(
            DMatrix::from_fn(6, 1, |i, _| i as f64 / 5.0),
            DVector::from_row_slice(&ys),
            vec![Interval::new(0.0, 1.0)],
        )
        .unwrap();
        let model = CalibrationModel {
            mean_f: MeanSpec::zero(2),
            mean_delta: MeanSpec::new(Basis::Constant, 1, vec![0.0]).unwrap(),
            kernel_f: KernelSpec::se_aniso(0.0, vec![0.5, 0.5]).unwrap(),
            kernel_delta: KernelSpec::se_iso(1, 0.0, 0.3).unwrap(),
            theta: vec![0.5],
            sigma: 1.0,
            bounds: ParamBounds {
                theta: vec![Interval::new(-10.0, 10.0)],
                kernel_f_amplitude: Interval::fixed(0.0),
                kernel_f_length_scales: vec![Interval::fixed(0.5); 2],
                kernel_delta_amplitude: Interval::fixed(0.0),
                kernel_delta_length_scales: vec![Interval::fixed(0.3)],
                mean_f_coefficients: vec![],
                mean_delta_coefficients: vec![Interval::new(-10.0, 10.0)],
            },
        };
        (model, obs, ModelRunSet::empty(1, 1))
    }

    fn toy_priors(model: &CalibrationModel) -> PriorSpec {
        PriorSpec::from_fn(model, |e| match e.kind {
            ParamKind::Theta => Prior::Normal { mean: 0.5, sd: 0.7 },
            ParamKind::CoefficientDelta => Prior::Normal { mean: 0.0, sd: 2.0 },
            ParamKind::Sigma => Prior::InverseGamma { shape: 3.0, scale: 1.0 },
            // Covers the pinned zero amplitudes.
            _ => Prior::Uniform { lower: 0.0, upper: 10.0 },
        })
        .unwrap()
    }

    #[test]
    fn positive_prior_on_signed_parameter_rejected() {
        let (m, _, _) = conjugate_toy();
        let e = PriorSpec::from_fn(&m, |_| Prior::Gamma { shape: 2.0, rate: 1.0 }).unwrap_err();
        assert!(matches!(e, CalibError::InvalidParameter(ref s) if s.contains("theta[0]")));
    }

    #[test]
    fn flat_prior_shift_is_constant() {
        let (m, obs, runs) = conjugate_toy();
        let pr = PriorSpec::from_fn(&m, |e| match e.kind {
            ParamKind::Theta | ParamKind::CoefficientDelta => Prior::Uniform { lower: -100.0, upper: 100.0 },
            _ => Prior::Uniform { lower: 0.0, upper: 100.0 },
        })
        .unwrap();
        let layout = pr.layout().clone();
        let base = layout.extract(&m);
        let diff = |beta: f64| {
            let mut x = base.clone();
            let k = x.len() - 2;
            x[k] = beta;
            let lp = log_posterior(&m, &obs, &runs, &x, &pr);
            let ll = crate::model::log_likelihood(&layout.apply(&m, &x), &obs, &runs).unwrap();
            lp - ll
        };
        assert!((diff(0.3) - diff(1.9)).abs() < 1e-12);
        let mut bad = base.clone();
        bad[1] = -0.5;
        assert_eq!(log_posterior(&m, &obs, &runs, &bad, &pr), f64::NEG_INFINITY);
    }

    #[test]
    fn conjugate_normal_mean_posterior() {
        let (m, obs, runs) = conjugate_toy();
        let pr = toy_priors(&m);
        let init = pr.layout().extract(&m);
        let mut scales = default_scales(&m);
        // Hold σ = 1.
        *scales.last_mut().unwrap() = 0.0;
        let c = run_chain(&m, &obs, &runs, &pr, &init, &scales, &ChainOptions {
            iterations: 20_000,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        // Posterior of β: precision 1/4 + 6, mean (Σy) / precision.
        let sum: f64 = obs.outputs().iter().sum();
        let prec = 0.25 + 6.0;
        let beta_mean = sum / prec;
        let mean = c.mean();
        let se = c.mcse();
        let b = c.names.iter().position(|n| n == "beta_delta[0]").unwrap();
        assert!((mean[b] - beta_mean).abs() < 3.0 * se[b], "{} vs {beta_mean} (se {})", mean[b], se[b]);
        assert!((mean[0] - 0.5).abs() < 3.0 * se[0], "{} (se {})", mean[0], se[0]);
        // Fixed components never move.
        assert!(c.samples.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(c.acceptance_by_param[1], 0.0);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let opts = ChainOptions { iterations: 10, burn_in_fraction: 0.5, seed: 1, ..Default::default() };
        let c = run_chain_with(|x| -x[0] * x[0], names(1), &[0.0], &[false], &[1.0], &opts).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x0,log_posterior");
        assert_eq!(text.lines().count(), 6);
        let thin = run_chain_with(|x| -x[0] * x[0], names(1), &[0.0], &[false], &[1.0], &ChainOptions { thinning: 2, ..opts })
            .unwrap();
        assert_eq!(thin.len(), 3);
    }

    fn predictive_toy() -> (CalibrationModel, ObservationSet, ModelRunSet, PriorSpec) {
        let (mut m, obs, runs) = conjugate_toy();
        m.kernel_delta.amplitude = 0.5;
        m.bounds.kernel_delta_amplitude = Interval::new(0.01, 10.0);
        let pr = toy_priors(&m);
        (m, obs, runs, pr)
    }

    fn chain_of(rows: &[Vec<f64>], layout: &ParamLayout) -> Chain {
        let d = rows[0].len();
        Chain {
            names: layout.names(),
            samples: DMatrix::from_row_iterator(rows.len(), d, rows.iter().flatten().copied()),
            log_posterior: vec![0.0; rows.len()],
            acceptance_rate: 0.0,
            acceptance_by_param: vec![0.0; d],
            proposal_scales: vec![0.0; d],
            seed: 0,
            iterations: rows.len(),
            burn_in: 0,
            thinning: 1,
        }
    }

    #[test]
    fn repeated_draw_is_plug_in() {
        let (m, obs, runs, pr) = predictive_toy();
        let x = pr.layout().extract(&m);
        let chain = chain_of(&vec![x; 5], pr.layout());
        let targets = DMatrix::from_column_slice(3, 1, &[0.1, 0.5, 0.95]);
        let ens = posterior_predictive(&chain, &m, &obs, &runs, &targets, PredictionTarget::Observation, 5, 0.95).unwrap();
        let plug = predictive(&m, &obs, &runs, &targets, PredictionTarget::Observation).unwrap();
        assert_eq!(ens.mean, plug.mean);
        assert_eq!(ens.skipped, 0);
        let band = crate::predict::credible_band(&plug, 0.95).unwrap();
        for i in 0..3 {
            assert!((ens.variance[i] - plug.cov[(i, i)]).abs() < 1e-12);
            assert!((ens.lower[i] - band.lower[i]).abs() < 1e-9);
            assert!((ens.upper[i] - band.upper[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn two_draws_average_means() {
        let (m, obs, runs, pr) = predictive_toy();
        let x = pr.layout().extract(&m);
        let mut y = x.clone();
        y[0] = 0.9;
        let k = y.len() - 2;
        y[k] = 1.4;
        let chain = chain_of(&[x.clone(), y.clone()], pr.layout());
        let targets = DMatrix::from_column_slice(2, 1, &[0.2, 0.7]);
        let ens = posterior_predictive(&chain, &m, &obs, &runs, &targets, PredictionTarget::LatentProcess, 2, 0.9).unwrap();
        let a = predictive(&pr.layout().apply(&m, &x), &obs, &runs, &targets, PredictionTarget::LatentProcess).unwrap();
        let b = predictive(&pr.layout().apply(&m, &y), &obs, &runs, &targets, PredictionTarget::LatentProcess).unwrap();
        for i in 0..2 {
            assert!((ens.mean[i] - 0.5 * (a.mean[i] + b.mean[i])).abs() < 1e-12);
            assert!(ens.lower[i] < ens.mean[i] && ens.mean[i] < ens.upper[i]);
        }
        assert!(posterior_predictive(&chain, &m, &obs, &runs, &targets, PredictionTarget::LatentProcess, 3, 0.9).is_err());
    }

    #[test]
    fn mixture_quantile_of_equal_components() {
        let q = mixture_quantile(&[1.0, 1.0], &[2.0, 2.0], 0.975);
        assert!((q - (1.0 + 2.0 * 1.959963984540054)).abs() < 1e-9);
        // Symmetric two-point mixture has median at the centre.
        assert!(mixture_quantile(&[-1.0, 1.0], &[0.5, 0.5], 0.5).abs() < 1e-9);
    }
}
