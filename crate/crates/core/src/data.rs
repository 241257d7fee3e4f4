//! Experimental observations and computer-model runs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Closed interval `[lower, upper]`. A degenerate interval pins a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn fixed(value: f64) -> Self {
        Self { lower: value, upper: value }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn is_fixed(&self) -> bool {
        self.lower == self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    pub fn is_well_formed(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite() && self.lower <= self.upper
    }
}

impl From<(f64, f64)> for Interval {
    fn from((lower, upper): (f64, f64)) -> Self {
        Self { lower, upper }
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Err(CalibError::Data {
                    row: i + 1,
                    column: format!("{what}[{j}]"),
                    message: format!("non-finite value {}", m[(i, j)]),
                });
            }
        }
    }
    Ok(())
}

/// Observations `y_i` of the physical process at controllable inputs `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
    domain: Vec<Interval>,
}

impl ObservationSet {
    pub fn new(inputs: DMatrix<f64>, outputs: DVector<f64>, domain: Vec<Interval>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(CalibError::InsufficientData { needed: 1, got: 0 });
        }
        if outputs.len() != inputs.nrows() {
            return Err(CalibError::dims("observation outputs", inputs.nrows(), outputs.len()));
        }
        if domain.len() != inputs.ncols() {
            return Err(CalibError::dims("observation domain", inputs.ncols(), domain.len()));
        }
        check_finite(&inputs, "t")?;
        check_finite(&DMatrix::from_column_slice(outputs.len(), 1, outputs.as_slice()), "y")?;
        for (j, iv) in domain.iter().enumerate() {
            if !iv.is_well_formed() {
                return Err(CalibError::InvalidParameter(format!("domain[{j}] is not a valid interval")));
            }
            for i in 0..inputs.nrows() {
                if !iv.contains(inputs[(i, j)]) {
                    return Err(CalibError::Data {
                        row: i + 1,
                        column: format!("t{j}"),
                        message: format!("{} outside domain [{}, {}]", inputs[(i, j)], iv.lower, iv.upper),
                    });
                }
            }
        }
        Ok(Self { inputs, outputs, domain })
    }

    /// Observation set whose domain is the bounding box of the inputs.
    pub fn with_bounding_domain(inputs: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self> {
        let domain = (0..inputs.ncols())
            .map(|j| {
                let c = inputs.column(j);
                Interval::new(c.min(), c.max())
            })
            .collect();
        Self::new(inputs, outputs, domain)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn domain(&self) -> &[Interval] {
        &self.domain
    }

    /// Subset of the observations at the given row indices (in that order).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(CalibError::InsufficientData { needed: 1, got: 0 });
        }
        let inputs = self.inputs.select_rows(rows);
        let outputs = self.outputs.select_rows(rows);
        Ok(Self { inputs, outputs, domain: self.domain.clone() })
    }
}

/// Computer-model evaluations `z_j = f(t̃_j, θ̃_j)`. May be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRunSet {
    inputs: DMatrix<f64>,
    calib_settings: DMatrix<f64>,
    outputs: DVector<f64>,
}

impl ModelRunSet {
    pub fn new(inputs: DMatrix<f64>, calib_settings: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self> {
        let s = inputs.nrows();
        if calib_settings.nrows() != s {
            return Err(CalibError::dims("model-run calibration settings", s, calib_settings.nrows()));
        }
        if outputs.len() != s {
            return Err(CalibError::dims("model-run outputs", s, outputs.len()));
        }
        check_finite(&inputs, "t")?;
        check_finite(&calib_settings, "theta")?;
        check_finite(&DMatrix::from_column_slice(s, 1, outputs.as_slice()), "z")?;
        Ok(Self { inputs, calib_settings, outputs })
    }

    /// No emulation data, for `p` inputs and `q` calibration parameters.
    pub fn empty(p: usize, q: usize) -> Self {
        Self {
            inputs: DMatrix::zeros(0, p),
            calib_settings: DMatrix::zeros(0, q),
            outputs: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn calib_dim(&self) -> usize {
        self.calib_settings.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn calib_settings(&self) -> &DMatrix<f64> {
        &self.calib_settings
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    /// Rows `(t̃_j, θ̃_j)` concatenated.
    pub fn augmented_inputs(&self) -> DMatrix<f64> {
        let (s, p, q) = (self.len(), self.input_dim(), self.calib_dim());
        DMatrix::from_fn(s, p + q, |i, j| {
            if j < p {
                self.inputs[(i, j)]
            } else {
                self.calib_settings[(i, j - p)]
            }
        })
    }

    /// Check every calibration setting lies in `bounds`.
    pub fn check_calib_bounds(&self, bounds: &[Interval]) -> Result<()> {
        if bounds.len() != self.calib_dim() {
            return Err(CalibError::dims("calibration bounds", self.calib_dim(), bounds.len()));
        }
        for (j, iv) in bounds.iter().enumerate() {
            for i in 0..self.len() {
                let v = self.calib_settings[(i, j)];
                if !iv.contains(v) {
                    return Err(CalibError::Data {
                        row: i + 1,
                        column: format!("c{j}"),
                        message: format!("{v} outside calibration bounds [{}, {}]", iv.lower, iv.upper),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Rows `(t_i, θ)`: the inputs with one calibration vector appended to each.
pub fn augment_with_theta(inputs: &DMatrix<f64>, theta: &[f64]) -> DMatrix<f64> {
    let (n, p) = inputs.shape();
    DMatrix::from_fn(n, p + theta.len(), |i, j| if j < p { inputs[(i, j)] } else { theta[j - p] })
}
