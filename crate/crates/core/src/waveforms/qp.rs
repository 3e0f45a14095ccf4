//! Minimum-norm solutions of `A x = b` inside a box.

use nalgebra::{DMatrix, DVector};

use super::WaveformError;

#[derive(Debug, Clone)]
pub struct BoxQp {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    /// Constraint names used in error reports.
    pub rows: Vec<String>,
    /// Variable names used in error reports.
    pub cols: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the equality rows, in the caller's row scaling.
    pub lambda: DVector<f64>,
    /// Indices of variables sitting on a bound.
    pub at_bound: Vec<usize>,
    pub iterations: usize,
}

const MAX_ITER: usize = 200;

/// Smallest singular value counted towards the rank, relative to the largest.
pub const RANK_TOL: f64 = 1e-10;

pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * top).count()
}

fn clip(u: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(u.len(), u.iter().zip(lo.iter().zip(hi.iter())).map(|(v, (l, h))| v.clamp(*l, *h)))
}

// convex dual whose gradient is A clip(A^T lambda) - b
fn dual(u: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, b: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        let (v, l, h) = (u[i], lo[i], hi[i]);
        s += if v > h {
            h * v - 0.5 * h * h
        } else if v < l {
            l * v - 0.5 * l * l
        } else {
            0.5 * v * v
        };
    }
    s - b.dot(lambda)
}

impl BoxQp {
    /// Minimise `|x|^2 / 2` subject to `A x = b`, `lo <= x <= hi`.
    ///
    /// Rows are normalised first. A zero row with a nonzero target, a
    /// rank-deficient `A` and an empty feasible set are all reported as errors.
    pub fn solve(&self, tol: f64) -> Result<QpSolution, WaveformError> {
        let (m, n) = self.a.shape();
        if self.b.len() != m || self.lo.len() != n || self.hi.len() != n {
            return Err(WaveformError::Domain("dimension mismatch in constrained solve".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(self.lo[i] <= 0.0 && 0.0 <= self.hi[i])) {
            return Err(WaveformError::Domain(format!(
                "bounds on `{}` exclude zero: [{}, {}]",
                self.cols[i], self.lo[i], self.hi[i]
            )));
        }
        let mut scale = DVector::zeros(m);
        for i in 0..m {
            let norm = self.a.row(i).norm();
            if norm == 0.0 {
                if self.b[i] != 0.0 {
                    return Err(WaveformError::Infeasible {
                        constraint: self.rows[i].clone(),
                        detail: "no electrode in the subset has any authority over it".into(),
                    });
                }
                scale[i] = 0.0;
            } else {
                scale[i] = 1.0 / norm;
            }
        }
        let keep: Vec<usize> = (0..m).filter(|&i| scale[i] != 0.0).collect();
        let a = DMatrix::from_fn(keep.len(), n, |r, c| self.a[(keep[r], c)] * scale[keep[r]]);
        let b = DVector::from_iterator(keep.len(), keep.iter().map(|&i| self.b[i] * scale[i]));
        let rank = numerical_rank(&a);
        if rank < keep.len() {
            return Err(WaveformError::Rank { rank, rows: keep.len() });
        }

        let target = tol * (1.0 + b.amax());
        let mut lambda = DVector::zeros(keep.len());
        for it in 0..MAX_ITER {
            let u = a.transpose() * &lambda;
            let x = clip(&u, &self.lo, &self.hi);
            let f = &a * &x - &b;
            if f.amax() <= target {
                let at_bound = (0..n).filter(|&i| u[i] >= self.hi[i] || u[i] <= self.lo[i]).collect();
                let mut full = DVector::zeros(m);
                for (r, &i) in keep.iter().enumerate() {
                    full[i] = lambda[r] * scale[i];
                }
                return Ok(QpSolution { x, lambda: full, at_bound, iterations: it });
            }
            let free: Vec<usize> = (0..n).filter(|&i| u[i] > self.lo[i] && u[i] < self.hi[i]).collect();
            let mut j = DMatrix::zeros(keep.len(), keep.len());
            for &c in &free {
                let col = a.column(c);
                j += col * col.transpose();
            }
            let step = match j.clone().cholesky() {
                Some(ch) => -ch.solve(&f),
                None => {
                    // no curvature along some direction: damp and let the line search decide
                    let reg = 1e-10 * (1.0 + j.diagonal().amax());
                    for d in 0..keep.len() {
                        j[(d, d)] += reg;
                    }
                    j.cholesky().map_or_else(|| -f.clone(), |ch| -ch.solve(&f))
                }
            };
            let slope = f.dot(&step);
            let base = dual(&u, &self.lo, &self.hi, &b, &lambda);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &lambda + t * &step;
                let ut = a.transpose() * &trial;
                let decrease = dual(&ut, &self.lo, &self.hi, &b, &trial) <= base + 1e-4 * t * slope;
                // near the solution the dual value is flat to rounding; fall back on the residual
                let closer = || (&a * clip(&ut, &self.lo, &self.hi) - &b).norm() < (1.0 - 1e-4 * t) * f.norm();
                if decrease || closer() {
                    lambda = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || !lambda.iter().all(|v| v.is_finite()) || lambda.amax() > 1e15 {
                break;
            }
        }
        Err(self.infeasibility(&a, &b, &keep, &lambda))
    }

    fn infeasibility(&self, a: &DMatrix<f64>, b: &DVector<f64>, keep: &[usize], lambda: &DVector<f64>) -> WaveformError {
        let u = a.transpose() * lambda;
        let x = clip(&u, &self.lo, &self.hi);
        let f = a * &x - b;
        let worst = f.iamax();
        let saturated: Vec<&str> = (0..x.len())
            .filter(|&i| x[i] >= self.hi[i] || x[i] <= self.lo[i])
            .map(|i| self.cols[i].as_str())
            .collect();
        WaveformError::Infeasible {
            constraint: self.rows[keep[worst]].clone(),
            detail: format!("not reachable within bounds; saturated: [{}]", saturated.join(", ")),
        }
    }
}
