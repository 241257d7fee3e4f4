//! Stationary covariance functions.
//!
//! Every family is parametrized by an amplitude, which is the marginal
//! variance `k(a, a)`, and positive length scales. The Matérn family is the
//! tensor product of one-dimensional Matérn kernels with smoothness 5/2 that
//! share a single amplitude.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `η exp(-|a - b|² / 2ℓ²)` with one shared length scale.
    #[serde(rename = "se-iso")]
    SquaredExponentialIso,
    /// `η exp(-Σ_d (a_d - b_d)² / 2ℓ_d²)`.
    #[serde(rename = "se-aniso")]
    SquaredExponentialAniso,
    /// `η Π_d m(|a_d - b_d| / ℓ_d)` with `m(r) = (1 + √5 r + 5r²/3) exp(-√5 r)`.
    #[serde(rename = "matern")]
    TensorMatern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub input_dim: usize,
    pub amplitude: f64,
    pub length_scales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(
        family: KernelFamily,
        input_dim: usize,
        amplitude: f64,
        length_scales: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self { family, input_dim, amplitude, length_scales };
        spec.validate()?;
        Ok(spec)
    }

    pub fn se_iso(input_dim: usize, amplitude: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponentialIso, input_dim, amplitude, vec![length_scale])
    }

    pub fn se_aniso(amplitude: f64, length_scales: Vec<f64>) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponentialAniso, length_scales.len(), amplitude, length_scales)
    }

    pub fn matern(amplitude: f64, length_scales: Vec<f64>) -> Result<Self> {
        Self::new(KernelFamily::TensorMatern, length_scales.len(), amplitude, length_scales)
    }

    /// Number of length-scale hyperparameters this family carries.
    pub fn expected_length_scales(family: KernelFamily, input_dim: usize) -> usize {
        match family {
            KernelFamily::SquaredExponentialIso => 1,
            _ => input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(CalibError::InvalidParameter(format!(
                "kernel amplitude must be a finite non-negative number, got {}",
                self.amplitude
            )));
        }
        let expected = Self::expected_length_scales(self.family, self.input_dim);
        if self.length_scales.len() != expected {
            return Err(CalibError::dims("kernel length scales", expected, self.length_scales.len()));
        }
        if let Some(bad) = self.length_scales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(CalibError::InvalidParameter(format!(
                "kernel length scales must be positive, got {bad}"
            )));
        }
        Ok(())
    }

    /// Length scale that applies to input dimension `d`.
    pub fn length_scale(&self, d: usize) -> f64 {
        match self.family {
            KernelFamily::SquaredExponentialIso => self.length_scales[0],
            _ => self.length_scales[d],
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self { amplitude, ..self.clone() }
    }

    /// `k(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.input_dim {
            return Err(CalibError::dims("kernel input a", self.input_dim, a.len()));
        }
        if b.len() != self.input_dim {
            return Err(CalibError::dims("kernel input b", self.input_dim, b.len()));
        }
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.family {
            KernelFamily::SquaredExponentialIso | KernelFamily::SquaredExponentialAniso => {
                let mut q = 0.0;
                for d in 0..self.input_dim {
                    let inv = 1.0 / self.length_scale(d);
                    let u = a[d] * inv - b[d] * inv;
                    q += u * u;
                }
                self.amplitude * (-0.5 * q).exp()
            }
            KernelFamily::TensorMatern => {
                let mut k = self.amplitude;
                for d in 0..self.input_dim {
                    let inv = 1.0 / self.length_scale(d);
                    k *= matern52((a[d] * inv - b[d] * inv).abs());
                }
                k
            }
        }
    }

    /// Cross-covariance matrix between the rows of `a` (n×d) and `b` (m×d).
    pub fn cross_cov(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() != self.input_dim {
            return Err(CalibError::dims("cross_cov columns of A", self.input_dim, a.ncols()));
        }
        if b.ncols() != self.input_dim {
            return Err(CalibError::dims("cross_cov columns of B", self.input_dim, b.ncols()));
        }
        Ok(self.cross_cov_unchecked(a, b))
    }

    pub(crate) fn cross_cov_unchecked(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = (a.nrows(), b.nrows());
        let mut k = vec![0.0; n * m];
        self.fill(a, b, &mut k, false);
        DMatrix::from_vec(n, m, k)
    }

    /// `cross_cov(a, a)`, evaluating one triangle and mirroring it.
    pub fn gram(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() != self.input_dim {
            return Err(CalibError::dims("gram columns", self.input_dim, a.ncols()));
        }
        Ok(self.gram_unchecked(a))
    }

    pub(crate) fn gram_unchecked(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut k = vec![0.0; n * n];
        self.fill(a, a, &mut k, true);
        for j in 0..n {
            for i in 0..j {
                k[j * n + i] = k[i * n + j];
            }
        }
        DMatrix::from_vec(n, n, k)
    }

    /// Column-major kernel values into `out`; with `lower` only entries
    /// `i >= j` are written.
    fn fill(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, out: &mut [f64], lower: bool) {
        let (n, m) = (a.nrows(), b.nrows());
        let scaled = |x: &DMatrix<f64>, d: usize| -> Vec<f64> {
            let inv = 1.0 / self.length_scale(d);
            x.column(d).iter().map(|v| v * inv).collect()
        };
        let first = |j: usize| if lower { j } else { 0 };
        match self.family {
            KernelFamily::SquaredExponentialIso | KernelFamily::SquaredExponentialAniso => {
                for d in 0..self.input_dim {
                    let (ac, bc) = (scaled(a, d), scaled(b, d));
                    for j in 0..m {
                        let bj = bc[j];
                        let i0 = first(j);
                        for (q, ai) in out[j * n + i0..(j + 1) * n].iter_mut().zip(&ac[i0..]) {
                            let u = ai - bj;
                            *q += u * u;
                        }
                    }
                }
                let amp = self.amplitude;
                for j in 0..m {
                    for q in &mut out[j * n + first(j)..(j + 1) * n] {
                        *q = amp * (-0.5 * *q).exp();
                    }
                }
            }
            KernelFamily::TensorMatern => {
                for j in 0..m {
                    out[j * n + first(j)..(j + 1) * n].fill(self.amplitude);
                }
                for d in 0..self.input_dim {
                    let (ac, bc) = (scaled(a, d), scaled(b, d));
                    for j in 0..m {
                        let bj = bc[j];
                        let i0 = first(j);
                        for (q, ai) in out[j * n + i0..(j + 1) * n].iter_mut().zip(&ac[i0..]) {
                            *q *= matern52((ai - bj).abs());
                        }
                    }
                }
            }
        }
    }
}

fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}
