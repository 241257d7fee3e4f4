//! Linear-in-coefficients mean functions `m(x) = h(x)ᵀβ` over a fixed basis catalog.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Basis catalog. `Polynomial { degree }` uses the intercept plus the pure
/// powers `x_j^k` for `k = 1..=degree` of every input (no cross terms).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "kebab-case")]
pub enum Basis {
    Zero,
    Constant,
    Linear,
    Polynomial { degree: u8 },
}

impl Basis {
    pub fn size(&self, dim: usize) -> usize {
        match *self {
            Basis::Zero => 0,
            Basis::Constant => 1,
            Basis::Linear => 1 + dim,
            Basis::Polynomial { degree } => 1 + dim * degree as usize,
        }
    }

    fn fill(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match *self {
            Basis::Zero => {}
            Basis::Constant => out.push(1.0),
            Basis::Linear => {
                out.push(1.0);
                out.extend_from_slice(x);
            }
            Basis::Polynomial { degree } => {
                out.push(1.0);
                for &v in x {
                    let mut p = 1.0;
                    for _ in 0..degree {
                        p *= v;
                        out.push(p);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSpec {
    #[serde(flatten)]
    pub basis: Basis,
    pub input_dim: usize,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl MeanSpec {
    pub fn new(basis: Basis, input_dim: usize, coefficients: Vec<f64>) -> Result<Self> {
        let spec = Self { basis, input_dim, coefficients };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero(input_dim: usize) -> Self {
        Self { basis: Basis::Zero, input_dim, coefficients: Vec::new() }
    }

    pub fn constant(input_dim: usize, c: f64) -> Self {
        Self { basis: Basis::Constant, input_dim, coefficients: vec![c] }
    }

    pub fn validate(&self) -> Result<()> {
        if let Basis::Polynomial { degree } = self.basis {
            if !(1..=3).contains(&degree) {
                return Err(CalibError::InvalidParameter(format!(
                    "polynomial mean degree must be 1..=3, got {degree}"
                )));
            }
        }
        let expected = self.basis.size(self.input_dim);
        if self.coefficients.len() != expected {
            return Err(CalibError::dims("mean coefficients", expected, self.coefficients.len()));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(CalibError::InvalidParameter("mean coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.basis == Basis::Zero
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(CalibError::dims("mean input", self.input_dim, x.len()));
        }
        let mut h = Vec::with_capacity(self.coefficients.len());
        self.basis.fill(x, &mut h);
        Ok(h.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }

    /// Mean at every row of `x`.
    pub fn eval_rows(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.input_dim {
            return Err(CalibError::dims("mean input columns", self.input_dim, x.ncols()));
        }
        if self.is_zero() {
            return Ok(DVector::zeros(x.nrows()));
        }
        let mut h = Vec::with_capacity(self.coefficients.len());
        let mut row = vec![0.0; self.input_dim];
        Ok(DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                self.basis.fill(&row, &mut h);
                h.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
            }),
        ))
    }

    /// Basis design matrix `H` with rows `h(x_i)ᵀ`.
    pub fn design_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.basis.size(self.input_dim);
        let mut h = Vec::with_capacity(r);
        let mut out = DMatrix::zeros(x.nrows(), r);
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            self.basis.fill(&row, &mut h);
            for (j, v) in h.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        out
    }
}
