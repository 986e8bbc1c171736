//! Minimum-norm transfer allocation as a quadratic program.
//!
//! With `x_ij = alpha_i^j w_j` the problem is
//! `min 1/2 sum x_ij^2` subject to row sums `w_i`, column sums `w_j` and
//! `x >= 0`. Its dual in the row and column multipliers `(a, b)` is the
//! concave, continuously differentiable
//! `phi(a, b) = a.w + b.w - 1/2 sum_{i != j} max(0, a_i + b_j)^2`,
//! whose maximiser gives `x_ij = max(0, a_i + b_j)`. We maximise it with a
//! semismooth Newton iteration and a backtracking line search.

use nalgebra::{DMatrix, DVector};

use super::TransferMatrix;
use crate::error::{Error, Result};

const KKT_TOL: f64 = 1e-13;
const MAX_ITER: usize = 500;

fn dual_value(w: &[f64], z: &[f64]) -> f64 {
    let m = w.len();
    let mut v = 0.0;
    for i in 0..m {
        v += (z[i] + z[m + i]) * w[i];
    }
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let x = (z[i] + z[m + j]).max(0.0);
                v -= 0.5 * x * x;
            }
        }
    }
    v
}

fn gradient(w: &[f64], z: &[f64], g: &mut [f64]) {
    let m = w.len();
    g[..m].copy_from_slice(w);
    g[m..].copy_from_slice(w);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let x = (z[i] + z[m + j]).max(0.0);
                g[i] -= x;
                g[m + j] -= x;
            }
        }
    }
}

/// Positive weights, at least three, already known to pass the dominance
/// check.
pub(super) fn min_norm(w: &[f64]) -> Result<TransferMatrix> {
    let m = w.len();
    let scale = w.iter().cloned().fold(0.0, f64::max);
    let total: f64 = w.iter().sum();
    // start from uniform multipliers: every pair active
    let start = total / (2.0 * m as f64 * (m as f64 - 1.0));
    let mut z = vec![start; 2 * m];
    let mut g = vec![0.0; 2 * m];
    let mut trial = vec![0.0; 2 * m];
    for _ in 0..MAX_ITER {
        gradient(w, &z, &mut g);
        let kkt = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if kkt <= KKT_TOL * scale {
            return Ok(to_matrix(w, &z));
        }
        let mut h = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                if i != j && z[i] + z[m + j] > 0.0 {
                    let (a, b) = (i, m + j);
                    h[(a, a)] += 1.0;
                    h[(b, b)] += 1.0;
                    h[(a, b)] += 1.0;
                    h[(b, a)] += 1.0;
                }
            }
        }
        let rhs = DVector::from_column_slice(&g);
        let svd = h.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max().max(1.0);
        let mut d = svd.solve(&rhs, cutoff).map_err(|e| Error::Convergence(e.to_string()))?;
        let mut slope: f64 = d.dot(&rhs);
        if !(slope > 0.0) {
            // no active pairs along the gradient; fall back to steepest ascent
            d = rhs.clone();
            slope = d.dot(&rhs);
        }
        let f0 = dual_value(w, &z);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            for k in 0..2 * m {
                trial[k] = z[k] + t * d[k];
            }
            if dual_value(w, &trial) >= f0 + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            gradient(w, &z, &mut g);
            let kkt = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if kkt <= 1e-10 * scale {
                return Ok(to_matrix(w, &z));
            }
            return Err(Error::Convergence(format!("line search stalled with KKT residual {kkt:e}")));
        }
        z.copy_from_slice(&trial);
    }
    Err(Error::Convergence(format!("no convergence in {MAX_ITER} Newton steps")))
}

fn to_matrix(w: &[f64], z: &[f64]) -> TransferMatrix {
    let m = w.len();
    let mut t = TransferMatrix::zeros(m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                t.set(i, j, (z[i] + z[m + j]).max(0.0) / w[j]);
            }
        }
    }
    t
}
