//! Transfer coefficients `alpha_i^j`: the share survivor `i` receives when
//! `j` dies. Every solver returns the minimum-norm allocation of expected
//! transfers `x_ij = alpha_i^j w_j` subject to
//!
//! * fairness balance: `sum_{j != i} alpha_i^j w_j = w_i` for every recipient,
//! * clearing: `sum_{i != j} alpha_i^j = 1` for every deceased,
//! * `alpha >= 0`.

mod qp;

use serde::Serialize;

use crate::error::{domain, Error, Infeasibility, Result};


/// Relative tolerance for weight comparisons.
const WEIGHT_TOL: f64 = 1e-12;

/// Dense `alpha[i][j]`, recipient `i`, deceased `j`; the diagonal is zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferMatrix {
    n: usize,
    alpha: Vec<f64>,
}

impl TransferMatrix {
    pub fn zeros(n: usize) -> Self {
        TransferMatrix { n, alpha: vec![0.0; n * n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, recipient: usize, deceased: usize) -> f64 {
        self.alpha[recipient * self.n + deceased]
    }

    #[inline]
    pub(crate) fn set(&mut self, recipient: usize, deceased: usize, v: f64) {
        self.alpha[recipient * self.n + deceased] = v;
    }

    /// Rows as nested vectors.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.alpha.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn column_sum(&self, deceased: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, deceased)).sum()
    }

    /// `max_i |sum_j alpha_i^j w_j - w_i|`, skipping zero-weight recipients.
    pub fn balance_residual(&self, w: &[f64]) -> f64 {
        (0..self.n)
            .filter(|&i| w[i] > 0.0)
            .map(|i| ((0..self.n).map(|j| self.get(i, j) * w[j]).sum::<f64>() - w[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| (0..self.n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Dominance check `sum_{j != i} w_j >= w_i` with per-survivor slack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Feasibility {
    pub pass: bool,
    pub slack: Vec<f64>,
    pub violating: Option<usize>,
}

impl Feasibility {
    pub fn into_result(self, w: &[f64]) -> Result<()> {
        match self.violating {
            None => Ok(()),
            Some(i) => {
                let others: f64 = w.iter().sum::<f64>() - w[i];
                Err(Error::Infeasible(Infeasibility { index: i, weight: w[i], others }))
            }
        }
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if let Some(x) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(domain(format!("weights must be finite and non-negative, found {x}")));
    }
    Ok(())
}

pub fn feasibility(w: &[f64]) -> Result<Feasibility> {
    if w.len() < 2 {
        return Err(domain("feasibility needs at least two survivors"));
    }
    check_weights(w)?;
    let total: f64 = w.iter().sum();
    let tol = WEIGHT_TOL * total.max(f64::MIN_POSITIVE);
    let slack: Vec<f64> = w.iter().map(|&wi| total - 2.0 * wi).collect();
    let violating = slack
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < -tol)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    Ok(Feasibility { pass: violating.is_none(), slack, violating })
}

/// Pair condition `(m - 2)(w_i + w_j) >= sum_{l != i,j} w_l` under which the
/// closed-form n-survivor coefficients are non-negative. Returns the first
/// violating pair, if any.
pub fn feasibility_large_n(w: &[f64], n_survivors: usize) -> Result<Option<(usize, usize)>> {
    if n_survivors < 3 || w.len() != n_survivors {
        return Err(domain("large-pool condition needs at least three survivors and one weight each"));
    }
    check_weights(w)?;
    let total: f64 = w.iter().sum();
    let m = n_survivors as f64;
    let tol = WEIGHT_TOL * total.max(f64::MIN_POSITIVE);
    // the binding pair is the two smallest weights
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    let (i, j) = (idx[0], idx[1]);
    let lhs = (m - 2.0) * (w[i] + w[j]);
    let rhs = total - w[i] - w[j];
    Ok(if lhs < rhs - tol { Some((i.min(j), i.max(j))) } else { None })
}

/// Closed form for exactly three positive weights:
/// `alpha_i^j = (w_i + w_j - w_l) / (2 w_j)`.
pub fn solve_alpha_3peer(w: &[f64]) -> Result<TransferMatrix> {
    if w.len() != 3 {
        return Err(domain("three-survivor solver needs exactly three weights"));
    }
    solve_alpha(w)
}

/// Closed form for `m >= 4` survivors,
/// `alpha_i^j = [(m-1)(w_i + w_j) - W] / ((m-1)(m-2) w_j)`, which is the
/// minimum-norm solution whenever it is non-negative. With a common payout
/// intensity the weights reduce to `lambda_i s_i`. Three or two survivors fall
/// back to the corresponding small-pool rule.
pub fn solve_alpha_npeer_equal_theta(w: &[f64]) -> Result<TransferMatrix> {
    check_weights(w)?;
    if w.len() >= 3 && w.iter().all(|&x| x > 0.0) {
        if let Some((i, j)) = feasibility_large_n(w, w.len())? {
            feasibility(w)?.into_result(w)?;
            return Err(Error::Infeasible(Infeasibility {
                index: i,
                weight: w[i] + w[j],
                others: (w.iter().sum::<f64>() - w[i] - w[j]) / (w.len() as f64 - 2.0),
            }));
        }
    }
    solve_alpha(w)
}

/// Minimum-norm coefficients for any survivor count: closed form when it is
/// non-negative, otherwise the quadratic program. Zero-weight survivors get a
/// zero row; a zero-weight deceased's (empty) balance is split in proportion
/// to the others' weights.
pub fn solve_alpha(w: &[f64]) -> Result<TransferMatrix> {
    assemble(w, |wp| {
        if feasibility_large_n(wp, wp.len())?.is_none() {
            Ok(closed_form(wp))
        } else {
            qp::min_norm(wp)
        }
    })
}

/// Minimum-norm coefficients from the quadratic program alone, for three or
/// more survivors. Used as the oracle for the closed forms.
pub fn solve_alpha_general(w: &[f64]) -> Result<TransferMatrix> {
    if w.len() < 3 {
        return Err(domain("the general solver needs at least three survivors"));
    }
    assemble(w, qp::min_norm)
}

fn assemble(w: &[f64], solve: impl Fn(&[f64]) -> Result<TransferMatrix>) -> Result<TransferMatrix> {
    let n = w.len();
    if n < 2 {
        return Err(domain("transfer coefficients need at least two survivors"));
    }
    feasibility(w)?.into_result(w)?;
    let positive: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    let mut out = TransferMatrix::zeros(n);
    fill_zero_columns(w, &positive, &mut out);
    let wp: Vec<f64> = positive.iter().map(|&i| w[i]).collect();
    let sub = match wp.len() {
        0 => return Ok(out),
        1 => unreachable!("a single positive weight fails the dominance check"),
        2 => {
            let mut t = TransferMatrix::zeros(2);
            t.set(0, 1, 1.0);
            t.set(1, 0, 1.0);
            t
        }
        _ => solve(&wp)?,
    };
    for (a, &i) in positive.iter().enumerate() {
        for (b, &j) in positive.iter().enumerate() {
            if a != b {
                out.set(i, j, sub.get(a, b));
            }
        }
    }
    Ok(out)
}

fn fill_zero_columns(w: &[f64], positive: &[usize], out: &mut TransferMatrix) {
    let n = w.len();
    for j in (0..n).filter(|&j| w[j] == 0.0) {
        let recipients: Vec<usize> = if positive.is_empty() { (0..n).filter(|&i| i != j).collect() } else { positive.to_vec() };
        let total: f64 = recipients.iter().map(|&i| if positive.is_empty() { 1.0 } else { w[i] }).sum();
        for &i in &recipients {
            out.set(i, j, if positive.is_empty() { 1.0 } else { w[i] } / total);
        }
    }
}

fn closed_form(w: &[f64]) -> TransferMatrix {
    let m = w.len();
    let mf = m as f64;
    let total: f64 = w.iter().sum();
    let mut t = TransferMatrix::zeros(m);
    for j in 0..m {
        for i in (0..m).filter(|&i| i != j) {
            let v = ((mf - 1.0) * (w[i] + w[j]) - total) / ((mf - 1.0) * (mf - 2.0) * w[j]);
            t.set(i, j, v.max(0.0));
        }
    }
    t
}

/// Per-member coefficients for a pool whose survivors fall into classes of
/// identical weight: `counts[c]` members of weight `w[c]`. Returns, for the
/// death of one member of class `deceased`, the share each remaining member
/// of every class receives. Uses the closed form when it is non-negative.
pub fn class_shares(w: &[f64], counts: &[usize], deceased: usize, out: &mut [f64]) -> Result<bool> {
    let m: usize = counts.iter().sum();
    let mf = m as f64;
    let total: f64 = w.iter().zip(counts).map(|(w, c)| w * *c as f64).sum();
    if m < 4 {
        return Ok(false);
    }
    // two smallest individual weights among survivors
    let mut low = [f64::INFINITY; 2];
    for (c, &k) in counts.iter().enumerate() {
        for _ in 0..k.min(2) {
            let x = w[c];
            if x < low[0] {
                low[1] = low[0];
                low[0] = x;
            } else if x < low[1] {
                low[1] = x;
            }
        }
    }
    let (lo, lo2) = (low[0], low[1]);
    if lo <= 0.0 || (mf - 1.0) * (lo + lo2) < total * (1.0 - WEIGHT_TOL) {
        return Ok(false);
    }
    let wj = w[deceased];
    let denom = (mf - 1.0) * (mf - 2.0) * wj;
    for (c, o) in out.iter_mut().enumerate() {
        *o = if counts[c] == 0 { 0.0 } else { (((mf - 1.0) * (w[c] + wj) - total) / denom).max(0.0) };
    }
    Ok(true)
}
