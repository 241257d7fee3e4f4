//! Strategy over run configurations, shared with the acceptance run.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ebcal::estimate::{LossKind, OrderingPolicy};
use ebcal::kernels::KernelFamily;
use ebcal::mean::Basis;
use ebcal::predict::PredictionTarget;
use ebcal_cli::config::{parse_config_str, to_toml, LossChoice, RunConfig, Task};
use proptest::prelude::*;

fn bounds() -> impl Strategy<Value = [f64; 2]> {
    (0.001f64..10.0, 0.0f64..100.0).prop_map(|(a, w)| [a, a + w])
}

pub fn config() -> impl Strategy<Value = RunConfig> {
    (
        (prop::sample::select(Task::ALL.to_vec()), 0u64..1 << 40, any::<bool>(), prop::option::of("[a-z]{1,8}")),
        (
            prop::sample::select(vec![KernelFamily::SquaredExponentialIso, KernelFamily::SquaredExponentialAniso, KernelFamily::TensorMatern]),
            prop::sample::select(vec![Basis::Zero, Basis::Constant, Basis::Linear, Basis::Polynomial { degree: 2 }]),
            prop::option::of(prop::collection::vec(bounds(), 1..4)),
            bounds(),
            bounds(),
        ),
        (any::<bool>(), 2usize..40, prop::option::of(0.01f64..2.0), 1usize..50, 0usize..200),
        (0.5f64..0.99, 1usize..30, any::<bool>(), 100usize..5000, 0.1f64..10.0),
        (prop::collection::vec(2usize..600, 1..4), 1usize..10, prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..3)),
    )
        .prop_map(|(top, model, fit, mc, study)| {
            let mut c = RunConfig { task: top.0, seed: top.1, paper_scale: top.2, out: top.3.map(PathBuf::from), ..Default::default() };
            c.model.kernel_f = model.0;
            c.model.mean_delta = model.1;
            c.model.theta = model.2;
            c.model.amplitude_f = model.3;
            c.model.length_scale_delta = model.4;
            c.fit.loss = if fit.0 { LossChoice::Cv } else { LossChoice::Mle };
            c.fit.cv_k = fit.1;
            c.fit.sigma = fit.2;
            c.fit.restarts = fit.3;
            c.fit.screen_evals = fit.4;
            c.fit.ordering = if fit.0 { OrderingPolicy::SortDim0 } else { OrderingPolicy::AsGiven };
            c.predict.level = mc.0;
            c.predict.grid = mc.1;
            c.predict.target = if mc.2 { PredictionTarget::Observation } else { PredictionTarget::LatentProcess };
            c.mcmc.iterations = mc.3;
            c.mcmc.theta_sd = mc.4;
            c.wave.sizes = study.0;
            c.wave.replicates = study.1;
            c.wave.losses = vec![LossKind::Cv { folds: fit.1 }, LossKind::Mle];
            c.dominance.pairs = study.2;
            c
        })
}

/// `parse(serialize(c)) == c` and the text is a fixed point.
pub fn config_round_trip(c: &RunConfig) -> Result<(), String> {
    let text = to_toml(c).map_err(|e| e.to_string())?;
    let back = parse_config_str(&text, Path::new("")).map_err(|e| e.to_string())?;
    if &back != c {
        return Err(format!("parsed config differs from\n{text}"));
    }
    let again = to_toml(&back).map_err(|e| e.to_string())?;
    if again != text {
        return Err(format!("serialization not a fixed point:\n{text}\n---\n{again}"));
    }
    Ok(())
}
