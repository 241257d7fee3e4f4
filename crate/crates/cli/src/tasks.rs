use std::path::{Path, PathBuf};

use ebcal::data::{Interval, ModelRunSet, ObservationSet};
use ebcal::estimate::{fit, FitResult};
use ebcal::harness::{
    check_hierarchical_equivalence, run_kernel_dominance, run_ldm_benchmark, run_sensitivity_grid, run_wave_study,
    wave_data, wave_priors, ExperimentReport,
};
use ebcal::io::{read_inputs_file, read_model_runs_file, read_observations_file, write_file, write_model_runs, write_observations, write_predictions};
use ebcal::mcmc::{default_scales, posterior_predictive, run_chain};
use ebcal::model::FactoredModel;
use ebcal::models::{linspace, WaveConfig};
use ebcal::predict::credible_band;
use ebcal::seed::derive_seed;
use nalgebra::DMatrix;

use crate::config::{to_toml, RunConfig, Task};
use crate::error::{CliError, Result};

/// Largest default target grid.
const MAX_GRID_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    /// Human-readable result lines.
    pub summary: Vec<String>,
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| output_err(path, e))
}

fn load_data(cfg: &RunConfig) -> Result<(ObservationSet, ModelRunSet)> {
    let need = |p: &Option<PathBuf>, field: &str| p.clone().ok_or_else(|| CliError::Config(format!("{field}: required for this task")));
    let domain = cfg.data.domain.as_ref().map(|d| d.iter().map(|b| Interval::new(b[0], b[1])).collect());
    let obs = read_observations_file(&need(&cfg.data.observations, "data.observations")?, domain)?;
    let runs = read_model_runs_file(&need(&cfg.data.runs, "data.runs")?)?;
    Ok((obs, runs))
}

/// Tensor grid with `m` points per axis over `domain`, first axis slowest.
pub fn domain_grid(domain: &[Interval], m: usize) -> Result<DMatrix<f64>> {
    let p = domain.len();
    let total = (m as f64).powi(p as i32);
    if total > MAX_GRID_POINTS as f64 {
        return Err(CliError::Config(format!(
            "data.targets: a {m}-point grid in {p} dimensions has {total} points; give a targets file instead"
        )));
    }
    let axes: Vec<Vec<f64>> = domain.iter().map(|b| linspace(b.lower, b.upper, m)).collect();
    let rows = total as usize;
    Ok(DMatrix::from_fn(rows, p, |r, j| {
        let stride = m.pow((p - 1 - j) as u32);
        axes[j][(r / stride) % m]
    }))
}

fn targets(cfg: &RunConfig, obs: &ObservationSet, grid: usize) -> Result<DMatrix<f64>> {
    let t = match &cfg.data.targets {
        Some(path) => read_inputs_file(path)?,
        None => domain_grid(obs.domain(), grid)?,
    };
    if t.ncols() != obs.input_dim() {
        return Err(CliError::Config(format!(
            "data.targets: {} input columns but the observations have {}",
            t.ncols(),
            obs.input_dim()
        )));
    }
    Ok(t)
}

fn write_report(report: &mut ExperimentReport, dir: &Path) -> Result<()> {
    report.check_finite()?;
    report.write_to(dir)?;
    Ok(())
}

fn estimates_csv(f: &FitResult) -> String {
    let mut s = String::from("param,value\n");
    for (name, v) in f.param_names.iter().zip(f.theta_hat.iter().chain(&f.phi_hat)) {
        s.push_str(&format!("{name},{v:?}\n"));
    }
    s.push_str(&format!("sigma,{:?}\nloss,{:?}\n", f.sigma_hat, f.loss_value));
    s
}

fn read_fit(path: &Path) -> Result<FitResult> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: not a fit result: {e}", path.display())))
}

fn run_fit(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let (obs, runs) = load_data(cfg)?;
    let template = cfg.model.template(&runs)?;
    let f = fit(&template, &obs, &runs, &cfg.fit.options(derive_seed(cfg.seed, &[0])))?;
    let json = serde_json::to_string_pretty(&f).map_err(|e| output_err(dir, e))? + "\n";
    write_text(&dir.join("fit.json"), &json)?;
    write_text(&dir.join("estimates.csv"), &estimates_csv(&f))?;
    let mut lines: Vec<String> = f.theta_hat.iter().enumerate().map(|(j, t)| format!("theta[{j}] = {t:.6}")).collect();
    lines.push(format!("sigma = {:.6}", f.sigma_hat));
    lines.push(format!("loss = {:.6} after {} evaluations", f.loss_value, f.trace.evaluations));
    Ok(lines)
}

fn run_predict(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let path = cfg.predict.fit.clone().ok_or_else(|| CliError::Config("predict.fit: required for this task".into()))?;
    let f = read_fit(&path)?;
    let (obs, runs) = load_data(cfg)?;
    let t = targets(cfg, &obs, cfg.predict.grid)?;
    let pd = FactoredModel::new(&f.model, &obs, &runs)?.predict(&t, cfg.predict.target)?;
    let band = credible_band(&pd, cfg.predict.level)?;
    let out = dir.join("predictions.csv");
    write_file(&out, |w| {
        write_predictions(
            w,
            &t,
            pd.mean.as_slice(),
            pd.variances().as_slice(),
            band.lower.as_slice(),
            band.upper.as_slice(),
            cfg.predict.level,
        )
    })?;
    Ok(vec![format!("{} predictions written to {}", t.nrows(), out.display())])
}

fn run_mcmc(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let (obs, runs) = load_data(cfg)?;
    let template = cfg.model.template(&runs)?;
    let init = match &cfg.mcmc.init {
        Some(p) => read_fit(p)?.model,
        None => {
            let mut o = cfg.fit.options(derive_seed(cfg.seed, &[0]));
            o.loss = ebcal::estimate::LossKind::Mle;
            fit(&template, &obs, &runs, &o)?.model
        }
    };
    let mc = &cfg.mcmc;
    let priors = wave_priors(&template, &mc.cell(), mc.ig_shape, mc.gamma_rate)?;
    let x0 = priors.layout().extract(&init);
    let chain = run_chain(&template, &obs, &runs, &priors, &x0, &default_scales(&template), &mc.chain_options(derive_seed(cfg.seed, &[1])))?;
    write_file(&dir.join("chain.csv"), |w| chain.write_csv(w))?;

    let mut summary = String::from("param,mean,mcse,acceptance\n");
    for (j, ((name, m), se)) in chain.names.iter().zip(chain.mean()).zip(chain.mcse()).enumerate() {
        summary.push_str(&format!("{name},{m:?},{se:?},{:?}\n", chain.acceptance_by_param[j]));
    }
    write_text(&dir.join("summary.csv"), &summary)?;

    let mut lines = vec![format!("{} draws kept, acceptance {:.3}", chain.len(), chain.acceptance_rate)];
    let t = targets(cfg, &obs, cfg.predict.grid)?;
    let ens = posterior_predictive(&chain, &template, &obs, &runs, &t, mc.target, mc.draws.min(chain.len()), mc.level)?;
    let var = ens.variance.as_slice();
    write_file(&dir.join("predictions.csv"), |w| {
        write_predictions(w, &t, ens.mean.as_slice(), var, ens.lower.as_slice(), ens.upper.as_slice(), mc.level)
    })?;
    lines.push(format!("posterior predictive from {} draws ({} skipped)", ens.draws.len(), ens.skipped));
    for (name, m) in chain.names.iter().zip(chain.mean()).filter(|(n, _)| n.starts_with("theta")) {
        lines.push(format!("{name} posterior mean = {m:.6}"));
    }
    Ok(lines)
}

fn metric_lines(report: &ExperimentReport, metrics: &[&str]) -> Vec<String> {
    report
        .metrics
        .iter()
        .filter(|m| metrics.contains(&m.metric.as_str()))
        .map(|m| format!("{} {} = {:.6}", m.run, m.metric, m.value))
        .collect()
}

/// Write the resolved config, run the task and write its outputs.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| output_err(&dir, e))?;
    write_text(&dir.join("config.toml"), &to_toml(cfg)?)?;
    let summary = match cfg.task {
        Task::Fit => run_fit(cfg, &dir)?,
        Task::Predict => run_predict(cfg, &dir)?,
        Task::Mcmc => run_mcmc(cfg, &dir)?,
        Task::WaveStudy => {
            let (mut r, _) = run_wave_study(&cfg.wave)?;
            write_report(&mut r, &dir)?;
            metric_lines(&r, &["median_sigma_hat", "median_rmse", "median_theta[0]", "median_theta[1]"])
        }
        Task::Sensitivity => {
            let mut r = run_sensitivity_grid(&cfg.sensitivity)?;
            write_report(&mut r, &dir)?;
            let rm = r.values("rmse");
            vec![format!("{} cells, rmse from {:.4} to {:.4}", rm.len() - 1, min(&rm), max(&rm))]
        }
        Task::Ldm => {
            let mut r = run_ldm_benchmark(&cfg.ldm)?;
            write_report(&mut r, &dir)?;
            metric_lines(&r, &["sigma_hat", "rmse", "theta[0]", "theta[1]", "theta[2]", "theta[3]"])
        }
        Task::KernelDominance => {
            let mut r = run_kernel_dominance(&cfg.dominance)?;
            write_report(&mut r, &dir)?;
            vec![format!("{} gaps recorded", r.values("gap").len())]
        }
        Task::EquivalenceCheck => {
            let mut out = check_hierarchical_equivalence(&cfg.equivalence)?;
            write_report(&mut out.report, &dir)?;
            let line = format!(
                "{} instances, max |difference| = {:.3e}, tolerance {:.1e}",
                out.cases.len(),
                out.max_abs_diff,
                cfg.equivalence.tolerance
            );
            if !out.passed {
                return Err(CliError::CheckFailed(line));
            }
            vec![line + ", pass"]
        }
    };
    Ok(Outcome { out_dir: dir, summary })
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Synthetic wave observations and runs of size `n` each.
pub fn write_wave_sample(n: usize, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    let d = wave_data(&WaveConfig::default(), n, n, seed)?;
    let (o, r) = (dir.join("observations.csv"), dir.join("runs.csv"));
    write_file(&o, |w| write_observations(w, &d.obs))?;
    write_file(&r, |w| write_model_runs(w, &d.runs))?;
    Ok(vec![o, r])
}
