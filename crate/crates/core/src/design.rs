//! Space-filling designs.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Interval;
use crate::error::{CalibError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub count: usize,
    pub bounds: Vec<Interval>,
    pub seed: u64,
}

impl DesignSpec {
    pub fn new(count: usize, bounds: Vec<Interval>, seed: u64) -> Self {
        Self { count, bounds, seed }
    }

    /// `count` points in the unit cube `[0, 1]^dim`.
    pub fn unit(count: usize, dim: usize, seed: u64) -> Self {
        Self::new(count, vec![Interval::new(0.0, 1.0); dim], seed)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(CalibError::InvalidParameter("design count must be at least 1".into()));
        }
        if self.bounds.is_empty() {
            return Err(CalibError::InvalidParameter("design dimension must be at least 1".into()));
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if !(b.is_well_formed() && b.lower < b.upper) {
                return Err(CalibError::InvalidParameter(format!(
                    "design bounds[{j}] must satisfy lower < upper, got [{}, {}]",
                    b.lower, b.upper
                )));
            }
        }
        Ok(())
    }
}

/// Plain Latin hypercube: every column has exactly one point in each of the
/// `count` equal-width bins, uniformly jittered inside its bin.
pub fn latin_hypercube(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = DMatrix::zeros(n, spec.dim());
    let mut perm: Vec<usize> = (0..n).collect();
    for (j, b) in spec.bounds.iter().enumerate() {
        perm.shuffle(&mut rng);
        for (i, &bin) in perm.iter().enumerate() {
            let u = (bin as f64 + rng.gen::<f64>()) / n as f64;
            // Keep the draw inside its bin after the affine map.
            out[(i, j)] = (b.lower + u * b.width()).min(b.upper);
        }
    }
    Ok(out)
}

/// Midpoints of `count` equal subdivisions of a single interval.
pub fn equally_spaced(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if spec.dim() != 1 {
        return Err(CalibError::dims("equally spaced design dimension", 1, spec.dim()));
    }
    let b = spec.bounds[0];
    let n = spec.count;
    Ok(DMatrix::from_fn(n, 1, |i, _| b.lower + (i as f64 + 0.5) / n as f64 * b.width()))
}

/// Write a design as CSV with header `t0,...,t{p-1}`. Values use the
/// shortest representation that round-trips exactly.
pub fn write_design_csv(path: &Path, design: &DMatrix<f64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(design_csv_string(design).as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn design_csv_string(design: &DMatrix<f64>) -> String {
    let header: Vec<String> = (0..design.ncols()).map(|j| format!("t{j}")).collect();
    let mut s = header.join(",");
    s.push('\n');
    for i in 0..design.nrows() {
        let row: Vec<String> = design.row(i).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn occupancy(col: impl Iterator<Item = f64>, n: usize, lo: f64, hi: f64) -> Vec<usize> {
        let mut counts = vec![0; n];
        for v in col {
            let bin = (((v - lo) / (hi - lo)) * n as f64).floor() as usize;
            counts[bin.min(n - 1)] += 1;
        }
        counts
    }

    #[test]
    fn single_point_inside_bounds() {
        let d = latin_hypercube(&DesignSpec::new(1, vec![Interval::new(-1.0, 3.0); 2], 4)).unwrap();
        assert!(d.iter().all(|v| (-1.0..=3.0).contains(v)));
    }

    #[test]
    fn four_points_one_per_quarter() {
        let d = latin_hypercube(&DesignSpec::unit(4, 1, 11)).unwrap();
        let mut v: Vec<f64> = d.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        for (i, x) in v.iter().enumerate() {
            assert!(*x >= i as f64 * 0.25 && *x <= (i + 1) as f64 * 0.25);
        }
    }

    #[test]
    fn fifty_by_three_histogram() {
        let d = latin_hypercube(&DesignSpec::unit(50, 3, 2024)).unwrap();
        for j in 0..3 {
            assert_eq!(occupancy(d.column(j).iter().copied(), 50, 0.0, 1.0), vec![1; 50]);
        }
    }

    #[test]
    fn equally_spaced_midpoints() {
        let two = equally_spaced(&DesignSpec::unit(2, 1, 0)).unwrap();
        assert_eq!(two.as_slice(), &[0.25, 0.75]);
        assert_eq!(equally_spaced(&DesignSpec::unit(1, 1, 0)).unwrap().as_slice(), &[0.5]);
        let four = equally_spaced(&DesignSpec::new(4, vec![Interval::new(2.0, 6.0)], 0)).unwrap();
        assert_eq!(four.as_slice(), &[2.5, 3.5, 4.5, 5.5]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(latin_hypercube(&DesignSpec::unit(0, 2, 0)).is_err());
        assert!(latin_hypercube(&DesignSpec::new(3, vec![Interval::new(1.0, 1.0)], 0)).is_err());
        assert!(equally_spaced(&DesignSpec::unit(3, 2, 0)).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let a = latin_hypercube(&DesignSpec::unit(10, 2, 5)).unwrap();
        let b = latin_hypercube(&DesignSpec::unit(10, 2, 5)).unwrap();
        let c = latin_hypercube(&DesignSpec::unit(10, 2, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_header_and_exact_values() {
        let d = DMatrix::from_row_slice(1, 2, &[0.1 + 0.2, 1.0 / 3.0]);
        let s = design_csv_string(&d);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("t0,t1"));
        let vals: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals, vec![0.1 + 0.2, 1.0 / 3.0]);
    }

    proptest! {
        #[test]
        fn one_per_bin_any_seed(n in 1usize..60, p in 1usize..4, seed in any::<u64>(), lo in -5.0f64..5.0, w in 0.1f64..10.0) {
            let d = latin_hypercube(&DesignSpec::new(n, vec![Interval::new(lo, lo + w); p], seed)).unwrap();
            for j in 0..p {
                let occ = occupancy(d.column(j).iter().copied(), n, lo, lo + w);
                prop_assert_eq!(occ, vec![1; n]);
            }
        }

        #[test]
        fn sorted_gaps_at_most_two_over_n(n in 2usize..200, seed in any::<u64>()) {
            let d = latin_hypercube(&DesignSpec::unit(n, 1, seed)).unwrap();
            let mut v: Vec<f64> = d.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            let gap = v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            prop_assert!(gap <= 2.0 / n as f64 + 1e-12);
        }
    }
}
