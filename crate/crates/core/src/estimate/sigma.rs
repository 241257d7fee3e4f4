use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::ObservationSet;
use crate::error::{CalibError, Result};

/// How observations are sequenced before differencing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingPolicy {
    /// Greedy nearest-neighbour path from the lexicographically smallest input.
    #[default]
    #[serde(rename = "nn")]
    NearestNeighbor,
    /// Rows in file order.
    #[serde(rename = "given")]
    AsGiven,
    /// Stable sort on the first input column.
    #[serde(rename = "dim0")]
    SortDim0,
}

impl std::str::FromStr for OrderingPolicy {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(Self::NearestNeighbor),
            "given" => Ok(Self::AsGiven),
            "dim0" => Ok(Self::SortDim0),
            other => Err(CalibError::InvalidParameter(format!("unknown ordering '{other}' (nn, given, dim0)"))),
        }
    }
}

fn lex_cmp(x: &DMatrix<f64>, a: usize, b: usize) -> std::cmp::Ordering {
    for j in 0..x.ncols() {
        match x[(a, j)].total_cmp(&x[(b, j)]) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.cmp(&b)
}

/// Row visiting order under `policy`.
pub fn ordering(inputs: &DMatrix<f64>, policy: OrderingPolicy) -> Vec<usize> {
    let n = inputs.nrows();
    match policy {
        OrderingPolicy::AsGiven => (0..n).collect(),
        OrderingPolicy::SortDim0 => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| inputs[(a, 0)].total_cmp(&inputs[(b, 0)]).then(a.cmp(&b)));
            idx
        }
        OrderingPolicy::NearestNeighbor => {
            if n == 0 {
                return Vec::new();
            }
            let p = inputs.ncols();
            let rows: Vec<Vec<f64>> = (0..n).map(|i| inputs.row(i).iter().copied().collect()).collect();
            let start = (0..n).min_by(|&a, &b| lex_cmp(inputs, a, b)).unwrap();
            let mut visited = vec![false; n];
            let mut path = Vec::with_capacity(n);
            let mut cur = start;
            visited[cur] = true;
            path.push(cur);
            for _ in 1..n {
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                for (k, r) in rows.iter().enumerate() {
                    if visited[k] {
                        continue;
                    }
                    let d: f64 = (0..p).map(|j| (r[j] - rows[cur][j]).powi(2)).sum();
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                visited[best] = true;
                path.push(best);
                cur = best;
            }
            path
        }
    }
}

/// Difference-based noise scale `sqrt(Σ (y_{i+1} - y_i)² / (2(n - 1)))`
/// over the sequence chosen by `policy`.
pub fn sigma_hat(obs: &ObservationSet, policy: OrderingPolicy) -> Result<f64> {
    let n = obs.len();
    if n < 2 {
        return Err(CalibError::InsufficientData { needed: 2, got: n });
    }
    let order = ordering(obs.inputs(), policy);
    let y = obs.outputs();
    let ss: f64 = order.windows(2).map(|w| (y[w[1]] - y[w[0]]).powi(2)).sum();
    Ok((ss / (2.0 * (n - 1) as f64)).sqrt())
}
