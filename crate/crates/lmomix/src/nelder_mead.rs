//! Box-constrained Nelder–Mead simplex minimization.
//!
//! Proposals are reflected and then clipped coordinate-wise onto the box, the
//! conventional treatment for bound constraints with this method. Vertex
//! ordering breaks value ties lexicographically on coordinates, so runs are
//! bit-for-bit reproducible for any deterministic objective, including ones
//! returning +∞ over infeasible regions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Axis-aligned box constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "bounds need matching nonempty lo/hi, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidParameter(format!(
                    "bad bound pair [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| v >= a && v <= b)
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (v, (a, b)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*a, *b);
        }
    }

    /// Coordinate-wise intersection; errors when any axis becomes empty.
    pub fn intersect(&self, other: &Bounds) -> Result<Bounds> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidParameter(
                "intersecting bounds of different dimensions".into(),
            ));
        }
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        Bounds::new(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop when max vertex distance to the best point, relative to
    /// max(1, |best|), falls below this.
    pub rel_diameter_tol: f64,
    /// Initial simplex step as a fraction of each box width.
    pub initial_step_frac: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iters: 500, rel_diameter_tol: 1e-6, initial_step_frac: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn vertex_cmp(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> Ordering {
    match a.1.partial_cmp(&b.1) {
        Some(Ordering::Equal) | None => a
            .0
            .iter()
            .zip(&b.0)
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal),
        Some(o) => o,
    }
}

/// Minimizes `f` over the box from `x0`. Non-finite objective values are
/// treated as +∞ (worse than everything), never propagated.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Result<NelderMeadResult> {
    let n = bounds.dim();
    if x0.len() != n {
        return Err(Error::InvalidParameter(format!(
            "start point has dimension {}, bounds have {n}",
            x0.len()
        )));
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| -> f64 {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    bounds.clip(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&start);
    simplex.push((start.clone(), v0));
    for j in 0..n {
        let step = opts.initial_step_frac * (bounds.hi[j] - bounds.lo[j]);
        let mut p = start.clone();
        p[j] = if p[j] + step <= bounds.hi[j] { p[j] + step } else { p[j] - step };
        let v = eval(&p);
        simplex.push((p, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        simplex.sort_by(vertex_cmp);
        let best = &simplex[0];
        let scale = best.0.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&best.0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if diameter <= opts.rel_diameter_tol * scale {
            converged = true;
            break;
        }
        iterations += 1;

        let worst = simplex[n].clone();
        let second_worst_val = simplex[n - 1].1;
        let best_val = simplex[0].1;
        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let propose = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            bounds.clip(&mut p);
            p
        };

        let xr = propose(1.0);
        let fr = eval(&xr);
        if fr < best_val {
            let xe = propose(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second_worst_val {
            simplex[n] = (xr, fr);
            continue;
        }
        // Contraction: outside when the reflection improved on the worst,
        // inside otherwise.
        let (xc, fc) = if fr < worst.1 {
            let xc = propose(0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = propose(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let anchor = simplex[0].0.clone();
        for (p, v) in simplex.iter_mut().skip(1) {
            for (pi, ai) in p.iter_mut().zip(&anchor) {
                *pi = ai + 0.5 * (*pi - ai);
            }
            bounds.clip(p);
            *v = eval(p);
        }
    }

    simplex.sort_by(vertex_cmp);
    let (x, value) = simplex.swap_remove(0);
    Ok(NelderMeadResult { x, value, iterations, evaluations, converged })
}
