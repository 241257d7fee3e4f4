//! How fast the emulator's share of the conditional covariance vanishes as
//! model runs accumulate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Interval, ModelRunSet};
use crate::design::{latin_hypercube, DesignSpec};
use crate::error::Result;
use crate::harness::report::ExperimentReport;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::mean::MeanSpec;
use crate::model::{CalibrationModel, ParamBounds};
use crate::predict::conditional_prior;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DominanceConfig {
    pub run_counts: Vec<usize>,
    pub thetas: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
    pub families: Vec<KernelFamily>,
    /// Shared by `k_f` and `k_δ`, as are the unit amplitudes.
    pub length_scale: f64,
    pub seed: u64,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        Self {
            run_counts: vec![0, 5, 20, 80, 320],
            thetas: vec![0.3, 0.5, 0.8],
            pairs: vec![(0.2, 0.4), (0.3, 0.7)],
            families: vec![KernelFamily::SquaredExponentialAniso, KernelFamily::TensorMatern],
            length_scale: 0.2,
            seed: 0,
        }
    }
}

pub fn family_label(f: KernelFamily) -> &'static str {
    match f {
        KernelFamily::SquaredExponentialIso | KernelFamily::SquaredExponentialAniso => "se",
        KernelFamily::TensorMatern => "matern",
    }
}

fn dominance_model(family: KernelFamily, ell: f64, theta: f64) -> CalibrationModel {
    let (kf, kd) = match family {
        KernelFamily::TensorMatern => (KernelSpec::matern(1.0, vec![ell; 2]), KernelSpec::matern(1.0, vec![ell])),
        _ => (KernelSpec::se_aniso(1.0, vec![ell; 2]), KernelSpec::se_aniso(1.0, vec![ell])),
    };
    let (kf, kd) = (kf.expect("valid kernel"), kd.expect("valid kernel"));
    let (mf, md) = (MeanSpec::zero(2), MeanSpec::zero(1));
    CalibrationModel {
        bounds: ParamBounds::pinned(&kf, &kd, &mf, &md, &[theta]),
        mean_f: mf,
        mean_delta: md,
        kernel_f: kf,
        kernel_delta: kd,
        theta: vec![theta],
        sigma: 0.0,
    }
}

/// `|k_ζ(a, b) − k_δ(a, b)|` after conditioning the emulator on `s` runs
/// placed by a Latin hypercube over `[0, 1]²`.
pub fn covariance_gap(family: KernelFamily, ell: f64, theta: f64, s: usize, pair: (f64, f64), seed: u64) -> Result<f64> {
    let model = dominance_model(family, ell, theta);
    let runs = if s == 0 {
        ModelRunSet::empty(1, 1)
    } else {
        let d = latin_hypercube(&DesignSpec::new(s, vec![Interval::new(0.0, 1.0); 2], seed))?;
        ModelRunSet::new(d.columns(0, 1).into(), d.columns(1, 1).into(), DVector::zeros(s))?
    };
    let targets = DMatrix::from_column_slice(2, 1, &[pair.0, pair.1]);
    let (_, k_zeta) = conditional_prior(&model, &runs, &targets)?;
    let k_delta = model.kernel_delta.eval(&[pair.0], &[pair.1])?;
    Ok((k_zeta[(0, 1)] - k_delta).abs())
}

/// Gap for every combination; the run design for a given `s` is shared
/// across kernels, θ values and pairs.
pub fn run_kernel_dominance(cfg: &DominanceConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("kernel-dominance", cfg.seed, cfg);
    let start = std::time::Instant::now();
    for &family in &cfg.families {
        for &theta in &cfg.thetas {
            for &pair in &cfg.pairs {
                let group = format!("{}/theta={theta}/pair=({},{})", family_label(family), pair.0, pair.1);
                for &s in &cfg.run_counts {
                    let gap = covariance_gap(family, cfg.length_scale, theta, s, pair, derive_seed(cfg.seed, &[s as u64]))?;
                    report.push(format!("{group}/s={s}"), "gap", gap);
                    report.point(&group, s as f64, gap);
                }
            }
        }
    }
    report.time("total", start.elapsed().as_secs_f64());
    Ok(report)
}
