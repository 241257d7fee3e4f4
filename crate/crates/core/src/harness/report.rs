use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CalibError, Result};
use crate::io::write_file;

/// Root mean squared error between predictions and truth.
pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "rmse length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    let ss: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / pred.len() as f64).sqrt()
}

/// Median of the finite entries; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub run: String,
    pub metric: String,
    pub value: f64,
}

/// One point of a plot-ready long table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub group: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    /// Everything needed to re-run the experiment.
    pub config: serde_json::Value,
    pub metrics: Vec<Metric>,
    pub series: Vec<SeriesPoint>,
    /// Wall-clock seconds per named stage; kept apart from the metrics so
    /// that those stay reproducible.
    pub timings: Vec<(String, f64)>,
    pub artifacts: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn new<C: Serialize>(name: &str, seed: u64, config: &C) -> Self {
        Self {
            name: name.to_string(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            metrics: Vec::new(),
            series: Vec::new(),
            timings: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn push(&mut self, run: impl Into<String>, metric: impl Into<String>, value: f64) {
        self.metrics.push(Metric { run: run.into(), metric: metric.into(), value });
    }

    pub fn point(&mut self, group: impl Into<String>, x: f64, y: f64) {
        self.series.push(SeriesPoint { group: group.into(), x, y });
    }

    pub fn time(&mut self, stage: impl Into<String>, seconds: f64) {
        self.timings.push((stage.into(), seconds));
    }

    pub fn metric(&self, run: &str, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.run == run && m.metric == metric).map(|m| m.value)
    }

    /// Every value recorded under `metric`, in insertion order.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.metrics.iter().filter(|m| m.metric == metric).map(|m| m.value).collect()
    }

    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.1).sum()
    }

    /// Fails on the first non-finite metric.
    pub fn check_finite(&self) -> Result<()> {
        match self.metrics.iter().find(|m| !m.value.is_finite()) {
            Some(m) => Err(CalibError::InvalidParameter(format!("metric {}/{} is {}", m.run, m.metric, m.value))),
            None => Ok(()),
        }
    }

    pub fn metrics_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["run", "metric", "value"])?;
        for m in &self.metrics {
            w.write_record([m.run.as_str(), m.metric.as_str(), &format!("{:?}", m.value)])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| CalibError::Io(e.to_string()))?).expect("utf8"))
    }

    pub fn series_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "x", "y"])?;
        for p in &self.series {
            w.write_record([p.group.as_str(), &format!("{:?}", p.x), &format!("{:?}", p.y)])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| CalibError::Io(e.to_string()))?).expect("utf8"))
    }

    /// Write `config.json`, `metrics.csv`, `series.csv` and `timings.csv`
    /// into `dir` and record their paths.
    pub fn write_to(&mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CalibError::Io(format!("{}: {e}", dir.display())))?;
        let snapshot = serde_json::json!({ "name": self.name, "seed": self.seed, "config": self.config });
        let files = [
            ("config.json", serde_json::to_string_pretty(&snapshot).expect("json") + "\n"),
            ("metrics.csv", self.metrics_csv()?),
            ("series.csv", self.series_csv()?),
            ("timings.csv", {
                let mut s = String::from("stage,seconds\n");
                for (k, v) in &self.timings {
                    s.push_str(&format!("{k},{v:.3}\n"));
                }
                s
            }),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            write_file(&path, |w| {
                use std::io::Write;
                w.write_all(body.as_bytes())?;
                Ok(())
            })?;
            if !self.artifacts.contains(&path) {
                self.artifacts.push(path);
            }
        }
        Ok(())
    }
}
