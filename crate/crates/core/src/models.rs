//! Built-in test problems: a transverse harmonic wave and the liquid drop
//! model of nuclear binding energies.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Interval, ObservationSet};
use crate::error::{CalibError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveConfig {
    pub wave_number: f64,
    pub phase: f64,
    pub true_theta: [f64; 2],
    /// Constant systematic offset of the physical process.
    pub beta: f64,
    pub sigma0: f64,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self { wave_number: 5.0, phase: 1.0, true_theta: [1.2, 1.8], beta: 1.0, sigma0: 0.2 }
    }
}

impl WaveConfig {
    pub fn model(&self, t: f64, x: f64, theta1: f64, theta2: f64) -> f64 {
        theta1 * (self.wave_number * x - theta2 * t + self.phase).sin()
    }

    pub fn truth(&self, t: f64, x: f64) -> f64 {
        self.model(t, x, self.true_theta[0], self.true_theta[1]) + self.beta
    }
}

/// `θ₁ sin(5x - θ₂t + 1)`.
pub fn wave_model(t: f64, x: f64, theta1: f64, theta2: f64) -> f64 {
    WaveConfig::default().model(t, x, theta1, theta2)
}

pub fn wave_truth(t: f64, x: f64, cfg: &WaveConfig) -> f64 {
    cfg.truth(t, x)
}

/// `m` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect(),
    }
}

/// The `m × m` uniform grid on `[0, 1]²` (endpoints included), first
/// coordinate varying slowest.
pub fn unit_grid(m: usize) -> DMatrix<f64> {
    let g = linspace(0.0, 1.0, m);
    DMatrix::from_fn(m * m, 2, |r, c| if c == 0 { g[r / m] } else { g[r % m] })
}

/// Observations `truth(row) + σ₀ ε` at the rows of `design`.
pub fn generate_synthetic<F>(truth: F, design: &DMatrix<f64>, domain: Vec<Interval>, sigma0: f64, seed: u64) -> Result<ObservationSet>
where
    F: Fn(&[f64]) -> f64,
{
    if !(sigma0 >= 0.0 && sigma0.is_finite()) {
        return Err(CalibError::InvalidParameter(format!("noise scale must be >= 0, got {sigma0}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row = vec![0.0; design.ncols()];
    let y = DVector::from_iterator(
        design.nrows(),
        (0..design.nrows()).map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = design[(i, j)];
            }
            let e: f64 = StandardNormal.sample(&mut rng);
            truth(&row) + sigma0 * e
        }),
    );
    ObservationSet::new(design.clone(), y, domain)
}

/// Liquid drop binding energy in MeV with `A = Z + N`:
/// `θ_vol A - θ_surf A^{2/3} - θ_sym (N - Z)²/A - θ_C Z(Z - 1)/A^{1/3}`.
pub fn ldm_energy(z: f64, n: f64, vol: f64, surf: f64, sym: f64, coul: f64) -> f64 {
    let a = z + n;
    vol * a - surf * a.powf(2.0 / 3.0) - sym * (n - z).powi(2) / a - coul * z * (z - 1.0) / a.cbrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdmRecord {
    #[serde(rename = "Z")]
    pub z: u32,
    #[serde(rename = "N")]
    pub n: u32,
    /// Binding energy, MeV.
    #[serde(rename = "E")]
    pub binding_energy: f64,
}

impl LdmRecord {
    pub fn is_even_even(&self) -> bool {
        self.z.is_multiple_of(2) && self.n.is_multiple_of(2)
    }
}

/// One line of an atomic-mass table.
#[derive(Debug, Clone, PartialEq)]
pub struct AmeNuclide {
    pub z: u32,
    pub n: u32,
    pub symbol: String,
    /// Atomic mass, u.
    pub mass: f64,
    /// Uncertainty as `digits × 10^-scale` u, kept exact for ordering.
    pub uncertainty_digits: u64,
    pub uncertainty_scale: u32,
    /// Value derived from systematics rather than measured.
    pub extrapolated: bool,
}

const AMU_MEV: f64 = 931.494_102_42;
const HYDROGEN_MASS_U: f64 = 1.007_825_031_90;
const NEUTRON_MASS_U: f64 = 1.008_664_915_95;

impl AmeNuclide {
    pub fn uncertainty(&self) -> f64 {
        self.uncertainty_digits as f64 * 10f64.powi(-(self.uncertainty_scale as i32))
    }

    /// `(Z m_H + N m_n - M) c²` in MeV.
    pub fn binding_energy(&self) -> f64 {
        (self.z as f64 * HYDROGEN_MASS_U + self.n as f64 * NEUTRON_MASS_U - self.mass) * AMU_MEV
    }

    fn cmp_uncertainty(&self, other: &Self) -> Ordering {
        let s = self.uncertainty_scale.max(other.uncertainty_scale);
        let a = self.uncertainty_digits as u128 * 10u128.pow(s - self.uncertainty_scale);
        let b = other.uncertainty_digits as u128 * 10u128.pow(s - other.uncertainty_scale);
        a.cmp(&b)
    }
}

/// Parse `Z-Symbol-A,mass(unc)[#]` lines; `#` starts a comment line.
pub fn parse_ame(text: &str) -> Result<Vec<AmeNuclide>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| CalibError::Data { row: lineno + 1, column: "mass".into(), message: msg.to_string() };
        let (key, val) = line.split_once(',').ok_or_else(|| err("expected 'Z-Sym-A,mass(unc)'"))?;
        let mut parts = key.split('-');
        let (Some(z), Some(sym), Some(a), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(err("malformed nuclide key"));
        };
        let z: u32 = z.parse().map_err(|_| err("bad Z"))?;
        let a: u32 = a.parse().map_err(|_| err("bad A"))?;
        if a < z {
            return Err(err("A < Z"));
        }
        let extrapolated = val.ends_with('#');
        let val = val.trim_end_matches('#');
        let (m, unc) = val.strip_suffix(')').and_then(|v| v.split_once('(')).ok_or_else(|| err("missing uncertainty"))?;
        let scale = m.split_once('.').map_or(0, |(_, frac)| frac.len()) as u32;
        out.push(AmeNuclide {
            z,
            n: a - z,
            symbol: sym.to_string(),
            mass: m.parse().map_err(|_| err("bad mass"))?,
            uncertainty_digits: unc.parse().map_err(|_| err("bad uncertainty"))?,
            uncertainty_scale: scale,
            extrapolated,
        });
    }
    Ok(out)
}

/// The `count` measured even-even nuclei (Z, N ≥ 2) with the smallest mass
/// uncertainty, ties broken by (Z, N), returned sorted by (Z, N).
pub fn even_even_selection(nuclides: &[AmeNuclide], count: usize) -> Vec<LdmRecord> {
    let mut ee: Vec<&AmeNuclide> = nuclides
        .iter()
        .filter(|x| !x.extrapolated && x.z >= 2 && x.n >= 2 && x.z % 2 == 0 && x.n % 2 == 0)
        .collect();
    ee.sort_by(|a, b| a.cmp_uncertainty(b).then(a.z.cmp(&b.z)).then(a.n.cmp(&b.n)));
    ee.truncate(count);
    ee.sort_by_key(|x| (x.z, x.n));
    ee.iter().map(|x| LdmRecord { z: x.z, n: x.n, binding_energy: x.binding_energy() }).collect()
}

/// Atomic-mass source table shipped with the crate.
pub const AME_TABLE: &str = include_str!("../data/ame2020_isotope_masses.txt");

/// Bundled even-even binding energies (`Z,N,E`), derived from [`AME_TABLE`]
/// by [`even_even_selection`] with `count = 595`.
pub const LDM_CSV: &str = include_str!("../data/ldm_even_even.csv");

pub const LDM_NUCLEI: usize = 595;

pub fn bundled_ldm_records() -> Result<Vec<LdmRecord>> {
    crate::io::read_ldm(LDM_CSV.as_bytes())
}
