//! Experiment drivers. Each returns an [`ExperimentReport`] whose metrics
//! are a pure function of its configuration.

mod dominance;
mod equivalence;
mod ldm;
mod report;
mod sensitivity;
mod wave;

pub use dominance::{covariance_gap, family_label, run_kernel_dominance, DominanceConfig};
pub use equivalence::{
    check_hierarchical_equivalence, hierarchical_log_likelihood, random_instance, EquivalenceCase, EquivalenceOptions,
    EquivalenceOutcome,
};
pub use ldm::{ldm_data, ldm_template, run_ldm_benchmark, LdmConfig, LdmData};
pub use report::{median, rmse, ExperimentReport, Metric, SeriesPoint};
pub use sensitivity::{
    noninformative_priors, run_sensitivity_grid, run_wave_mcmc, wave_priors, PriorCell, SensitivityConfig, WaveMcmcOutcome,
};
pub use wave::{
    run_wave_sigma_study, run_wave_study, wave_data, wave_grid, wave_template, WaveData, WaveRun, WaveStudyConfig,
};

use crate::estimate::optim::NelderMeadOptions;
use crate::estimate::{FitOptions, LossKind};

/// Multi-start schedule used by the drivers: many short screening runs of
/// the adaptive simplex, then the two most promising continued to the full
/// budget.
pub fn search_schedule() -> FitOptions {
    FitOptions {
        restarts: 24,
        screen_evals: 80,
        polish: 2,
        nelder_mead: NelderMeadOptions { adaptive: true, ..Default::default() },
        ..Default::default()
    }
}

pub fn loss_label(loss: LossKind) -> String {
    match loss {
        LossKind::Mle => "mle".into(),
        LossKind::Cv { folds } => format!("cv{folds}"),
    }
}
