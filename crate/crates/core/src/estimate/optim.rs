//! Box-constrained Nelder–Mead with Latin-hypercube restarts.
//!
//! The search runs in the unit cube; callers map it onto their own box.
//! Trial points are clipped to the cube, so every evaluated point is feasible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{latin_hypercube, DesignSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values is at most this.
    pub ftol: f64,
    /// ...and every vertex lies within this distance (unit-cube scale) of the best.
    pub xtol: f64,
    /// Initial simplex edge, as a fraction of the unit cube.
    pub initial_step: f64,
    /// Dimension-dependent expansion, contraction and shrink coefficients
    /// (Gao and Han, 2012) instead of the classic (2, 1/2, 1/2).
    #[serde(default)]
    pub adaptive: bool,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 2000, ftol: 1e-6, xtol: 1e-6, initial_step: 0.1, adaptive: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clip01(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// A Nelder–Mead search that can be paused and resumed.
#[derive(Debug, Clone)]
pub struct NelderMead {
    simplex: Vec<Vec<f64>>,
    values: Vec<f64>,
    evals: usize,
    converged: bool,
    dead: bool,
    coefficients: (f64, f64, f64),
    opts: NelderMeadOptions,
}

impl NelderMead {
    /// Build the initial simplex around `x0` (clipped to the cube).
    pub fn new<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Self {
        let d = x0.len();
        let mut start = x0.to_vec();
        clip01(&mut start);
        let mut simplex = vec![start.clone()];
        for i in 0..d {
            let mut v = start.clone();
            v[i] = if v[i] + opts.initial_step <= 1.0 { v[i] + opts.initial_step } else { v[i] - opts.initial_step };
            simplex.push(v);
        }
        let values: Vec<f64> = simplex.iter().map(|x| sanitize(f(x))).collect();
        let coefficients = if opts.adaptive && d > 1 {
            let df = d as f64;
            (1.0 + 2.0 / df, 0.75 - 0.5 / df, 1.0 - 1.0 / df)
        } else {
            (2.0, 0.5, 0.5)
        };
        let dead = values.iter().all(|v| v.is_infinite());
        let mut nm = Self { evals: d + 1, simplex, values, converged: d == 0, dead, coefficients, opts: *opts };
        nm.order();
        nm
    }

    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.simplex = idx.iter().map(|&i| self.simplex[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    pub fn evals(&self) -> usize {
        self.evals
    }

    pub fn is_done(&self) -> bool {
        self.converged || self.dead || self.evals >= self.opts.max_evals
    }

    pub fn best_value(&self) -> f64 {
        self.values[0]
    }

    pub fn result(&self) -> NelderMeadResult {
        NelderMeadResult { x: self.simplex[0].clone(), value: self.values[0], evals: self.evals, converged: self.converged }
    }

    /// Iterate until converged, or until `limit` (capped by `max_evals`)
    /// evaluations have been spent in total.
    pub fn advance<F: FnMut(&[f64]) -> f64>(&mut self, mut f: F, limit: usize) {
        let limit = limit.min(self.opts.max_evals);
        let d = self.simplex.len() - 1;
        let (chi, gamma, shrink) = self.coefficients;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            sanitize(f(x))
        };
        while !self.converged && !self.dead && self.evals < limit {
            let (simplex, fv) = (&mut self.simplex, &mut self.values);
            let fspread = if fv[d].is_finite() { fv[d] - fv[0] } else { f64::INFINITY };
            let xspread = simplex[1..]
                .iter()
                .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if fspread <= self.opts.ftol && xspread <= self.opts.xtol {
                self.converged = true;
                break;
            }

            let mut centroid = vec![0.0; d];
            for v in &simplex[..d] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / d as f64;
                }
            }
            let worst = simplex[d].clone();
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect();
                clip01(&mut p);
                p
            };

            let xr = along(1.0);
            let fr = eval(&xr, &mut self.evals);
            if fr < fv[0] {
                let xe = along(chi);
                let fe = eval(&xe, &mut self.evals);
                if fe < fr {
                    simplex[d] = xe;
                    fv[d] = fe;
                } else {
                    simplex[d] = xr;
                    fv[d] = fr;
                }
            } else if fr < fv[d - 1] {
                simplex[d] = xr;
                fv[d] = fr;
            } else {
                let xc = if fr < fv[d] { along(gamma) } else { along(-gamma) };
                let fc = eval(&xc, &mut self.evals);
                if fc < fv[d].min(fr) {
                    simplex[d] = xc;
                    fv[d] = fc;
                } else {
                    // Shrink toward the best vertex.
                    for i in 1..=d {
                        let shrunk: Vec<f64> =
                            simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + shrink * (x - b)).collect();
                        simplex[i] = shrunk;
                        fv[i] = eval(&simplex[i], &mut self.evals);
                    }
                }
            }
            self.order();
        }
    }
}

/// Minimize `f` over `[0, 1]^d` from `x0`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let mut nm = NelderMead::new(&mut f, x0, opts);
    nm.advance(&mut f, opts.max_evals);
    nm.result()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartOptions {
    pub restarts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
    /// When positive, every start first runs for this many evaluations and
    /// only the best `polish` starts are continued to convergence or the cap.
    #[serde(default)]
    pub screen_evals: usize,
    #[serde(default = "default_polish")]
    pub polish: usize,
    /// Run restarts on the rayon pool.
    pub parallel: bool,
}

fn default_polish() -> usize {
    1
}

impl Default for MultiStartOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            nelder_mead: NelderMeadOptions::default(),
            screen_evals: 0,
            polish: 1,
            parallel: true,
        }
    }
}

fn map_maybe_parallel<T: Send, R: Send>(items: Vec<T>, parallel: bool, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    if parallel {
        items.into_par_iter().map(f).collect()
    } else {
        items.into_iter().map(f).collect()
    }
}

/// Nelder–Mead from any `extra_starts` followed by `restarts`
/// Latin-hypercube points of the unit cube. Results come back in start order.
pub fn multi_start<F>(f: F, dim: usize, extra_starts: &[Vec<f64>], opts: &MultiStartOptions) -> Vec<NelderMeadResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut starts: Vec<Vec<f64>> = extra_starts.to_vec();
    if opts.restarts > 0 && dim > 0 {
        let lhs = latin_hypercube(&DesignSpec::unit(opts.restarts, dim, opts.seed)).expect("valid unit design");
        starts.extend((0..lhs.nrows()).map(|i| lhs.row(i).iter().copied().collect::<Vec<_>>()));
    } else if starts.is_empty() {
        starts.push(vec![0.5; dim]);
    }
    let nm = &opts.nelder_mead;
    let screening = opts.screen_evals > 0;
    let first_limit = if screening { opts.screen_evals } else { nm.max_evals };
    let mut states = map_maybe_parallel(starts, opts.parallel, |x0| {
        let mut s = NelderMead::new(&f, &x0, nm);
        s.advance(&f, first_limit);
        s
    });
    if screening {
        let mut rank: Vec<usize> = (0..states.len()).collect();
        rank.sort_by(|&a, &b| states[a].best_value().total_cmp(&states[b].best_value()));
        let chosen: Vec<usize> = rank.into_iter().take(opts.polish).collect();
        let picked: Vec<(usize, NelderMead)> = chosen.iter().map(|&i| (i, states[i].clone())).collect();
        for (i, s) in map_maybe_parallel(picked, opts.parallel, |(i, mut s)| {
            s.advance(&f, nm.max_evals);
            (i, s)
        }) {
            states[i] = s;
        }
    }
    states.iter().map(NelderMead::result).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum_inside() {
        let r = nelder_mead(|x| (x[0] - 0.3).powi(2) + 2.0 * (x[1] - 0.7).powi(2), &[0.9, 0.1], &NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-4 && (r.x[1] - 0.7).abs() < 1e-4);
    }

    #[test]
    fn minimum_outside_box_lands_on_boundary() {
        let r = nelder_mead(|x| (x[0] + 1.0).powi(2) + (x[1] - 0.5).powi(2), &[0.8, 0.8], &NelderMeadOptions::default());
        assert!(r.x[0].abs() < 1e-6);
        assert!((r.x[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn rosenbrock_scaled_into_cube() {
        let f = |x: &[f64]| {
            let (a, b) = (4.0 * x[0] - 2.0, 4.0 * x[1] - 2.0);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = nelder_mead(f, &[0.2, 0.2], &NelderMeadOptions { max_evals: 5000, ..Default::default() });
        assert!((r.x[0] - 0.75).abs() < 1e-3 && (r.x[1] - 0.75).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn infinite_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] > 0.6 { f64::INFINITY } else { (x[0] - 0.5).powi(2) };
        let r = nelder_mead(f, &[0.55], &NelderMeadOptions::default());
        assert!((r.x[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn respects_eval_budget() {
        let r = nelder_mead(|x| x.iter().map(|v| (v - 0.4).powi(2)).sum(), &[0.0; 6], &NelderMeadOptions { max_evals: 50, ..Default::default() });
        assert!(r.evals <= 50 + 6);
        assert!(!r.converged);
    }

    #[test]
    fn resumed_search_matches_uninterrupted() {
        let f = |x: &[f64]| (x[0] - 0.2).powi(2) + (x[1] - 0.9).powi(2) + x[0] * x[1];
        let opts = NelderMeadOptions::default();
        let whole = nelder_mead(f, &[0.6, 0.3], &opts);
        let mut nm = NelderMead::new(f, &[0.6, 0.3], &opts);
        nm.advance(f, 17);
        assert!(nm.evals() >= 17 && !nm.is_done());
        nm.advance(f, opts.max_evals);
        assert_eq!(nm.result(), whole);
    }

    #[test]
    fn screening_continues_only_the_best_start() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 0.37).powi(2)).sum::<f64>();
        let opts = MultiStartOptions { restarts: 5, screen_evals: 20, polish: 1, ..Default::default() };
        let r = multi_start(f, 3, &[], &opts);
        assert_eq!(r.iter().filter(|x| x.evals > 30).count(), 1);
        let best = r.iter().min_by(|a, b| a.value.total_cmp(&b.value)).unwrap();
        assert!(best.converged);
        assert!(best.x.iter().all(|v| (v - 0.37).abs() < 1e-4));
    }

    #[test]
    fn adaptive_coefficients_converge() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 0.6).powi(2)).sum::<f64>();
        let r = nelder_mead(f, &[0.1; 8], &NelderMeadOptions { adaptive: true, max_evals: 20_000, ..Default::default() });
        assert!(r.converged);
        assert!(r.x.iter().all(|v| (v - 0.6).abs() < 1e-3), "{:?}", r.x);
    }

    #[test]
    fn multi_start_is_deterministic_and_finds_global() {
        // Two basins; the deeper one is near 0.85.
        let f = |x: &[f64]| -(-(x[0] - 0.15).powi(2) / 0.002).exp() - 2.0 * (-(x[0] - 0.85).powi(2) / 0.002).exp();
        let opts = MultiStartOptions { restarts: 8, seed: 3, ..Default::default() };
        let a = multi_start(f, 1, &[], &opts);
        let b = multi_start(f, 1, &[], &MultiStartOptions { parallel: false, ..opts.clone() });
        assert_eq!(a, b);
        let best = a.iter().min_by(|x, y| x.value.total_cmp(&y.value)).unwrap();
        assert!((best.x[0] - 0.85).abs() < 1e-3);
    }
}
