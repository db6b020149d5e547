//! Numeric ground truth: reachability on a chain with all parameters fixed.

use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::model::{induced_graph, Pdtmc, StateId};
use crate::ratfun::{RatFunError, Valuation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("chain is not stochastic at the point; offending rows: {0:?}")]
    NonStochasticAtPoint(Vec<StateId>),
    #[error(transparent)]
    RatFun(#[from] RatFunError),
}

/// A chain with exact rational transition probabilities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteDtmc {
    pub rows: Vec<Vec<(usize, BigRational)>>,
    pub initial: usize,
    pub targets: BTreeSet<usize>,
}

pub fn instantiate(m: &Pdtmc, point: &Valuation, targets: &BTreeSet<StateId>) -> Result<ConcreteDtmc, OracleError> {
    let mut rows = Vec::with_capacity(m.n_states());
    let mut bad = Vec::new();
    for s in m.states() {
        let mut row = Vec::with_capacity(m.row(s).len());
        let mut sum = BigRational::zero();
        let mut in_range = true;
        for (t, f) in m.row(s) {
            let v = f.eval(point)?;
            if v.is_negative() || v > BigRational::one() {
                in_range = false;
            }
            sum += &v;
            if !v.is_zero() {
                row.push((t.index(), v));
            }
        }
        if !in_range || !sum.is_one() {
            bad.push(s);
        }
        rows.push(row);
    }
    if !bad.is_empty() {
        return Err(OracleError::NonStochasticAtPoint(bad));
    }
    Ok(ConcreteDtmc { rows, initial: m.initial().index(), targets: targets.iter().map(|t| t.index()).collect() })
}

impl ConcreteDtmc {
    /// States that reach a target with positive probability.
    fn can_reach(&self) -> Vec<bool> {
        let n = self.rows.len();
        let mut pred = vec![Vec::new(); n];
        for (s, row) in self.rows.iter().enumerate() {
            for (t, _) in row {
                pred[*t].push(s);
            }
        }
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = self.targets.iter().copied().collect();
        for &t in &stack {
            seen[t] = true;
        }
        while let Some(v) = stack.pop() {
            for &u in &pred[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Unknowns: non-target states that can reach a target.
    fn unknowns(&self) -> (Vec<usize>, Vec<Option<usize>>) {
        let reach = self.can_reach();
        let mut order = Vec::new();
        let mut index = vec![None; self.rows.len()];
        for s in 0..self.rows.len() {
            if reach[s] && !self.targets.contains(&s) {
                index[s] = Some(order.len());
                order.push(s);
            }
        }
        (order, index)
    }

    /// Exact `Pr[F targets]` from the initial state by Gaussian elimination
    /// on `x = P x + b` restricted to states that can reach a target.
    pub fn solve_reach(&self) -> BigRational {
        if self.targets.contains(&self.initial) {
            return BigRational::one();
        }
        let (order, index) = self.unknowns();
        let Some(i0) = index[self.initial] else {
            return BigRational::zero();
        };
        let k = order.len();
        let mut a = vec![vec![BigRational::zero(); k + 1]; k];
        for (i, &s) in order.iter().enumerate() {
            a[i][i] = BigRational::one();
            for (t, p) in &self.rows[s] {
                if self.targets.contains(t) {
                    a[i][k] += p;
                } else if let Some(j) = index[*t] {
                    a[i][j] -= p;
                }
            }
        }
        gauss_exact(&mut a);
        a[i0][k].clone()
    }

    /// Floating-point variant with partial pivoting.
    pub fn solve_reach_f64(&self) -> f64 {
        if self.targets.contains(&self.initial) {
            return 1.0;
        }
        let (order, index) = self.unknowns();
        let Some(i0) = index[self.initial] else {
            return 0.0;
        };
        let k = order.len();
        let mut a = vec![vec![0.0f64; k + 1]; k];
        for (i, &s) in order.iter().enumerate() {
            a[i][i] = 1.0;
            for (t, p) in &self.rows[s] {
                let p = p.to_f64().unwrap_or(f64::NAN);
                if self.targets.contains(t) {
                    a[i][k] += p;
                } else if let Some(j) = index[*t] {
                    a[i][j] -= p;
                }
            }
        }
        for col in 0..k {
            let piv = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).expect("non-empty range");
            a.swap(col, piv);
            let d = a[col][col];
            for x in &mut a[col][col..=k] {
                *x /= d;
            }
            let pivot_row = a[col].clone();
            for (r, row) in a.iter_mut().enumerate() {
                if r != col && row[col] != 0.0 {
                    let f = row[col];
                    for (x, p) in row[col..=k].iter_mut().zip(&pivot_row[col..=k]) {
                        *x -= f * p;
                    }
                }
            }
        }
        a[i0][k]
    }

    /// Value iteration from below on the whole chain, with no graph
    /// pruning; converges to the least fixed point.
    pub fn solve_reach_iterative(&self, tol: f64, max_iter: usize) -> f64 {
        let n = self.rows.len();
        let rows: Vec<Vec<(usize, f64)>> =
            self.rows.iter().map(|r| r.iter().map(|(t, p)| (*t, p.to_f64().unwrap_or(f64::NAN))).collect()).collect();
        let mut x = vec![0.0f64; n];
        for &t in &self.targets {
            x[t] = 1.0;
        }
        for _ in 0..max_iter {
            let mut delta = 0.0f64;
            for s in 0..n {
                if self.targets.contains(&s) {
                    continue;
                }
                let v: f64 = rows[s].iter().map(|(t, p)| p * x[*t]).sum();
                delta = delta.max((v - x[s]).abs());
                x[s] = v;
            }
            if delta < tol {
                break;
            }
        }
        x[self.initial]
    }
}

fn gauss_exact(a: &mut [Vec<BigRational>]) {
    let k = a.len();
    for col in 0..k {
        let piv = (col..k).find(|&r| !a[r][col].is_zero()).expect("system is non-singular");
        a.swap(col, piv);
        let d = a[col][col].clone();
        if !d.is_one() {
            for x in &mut a[col][col..=k] {
                if !x.is_zero() {
                    *x /= &d;
                }
            }
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for j in col..=k {
                if !pivot_row[j].is_zero() {
                    row[j] -= &f * &pivot_row[j];
                }
            }
        }
    }
}

/// Convenience: instantiate and solve exactly.
pub fn reach_at(m: &Pdtmc, targets: &BTreeSet<StateId>, point: &Valuation) -> Result<BigRational, OracleError> {
    Ok(instantiate(m, point, targets)?.solve_reach())
}

/// States of `m` that cannot reach `targets` in the graph.
pub fn cannot_reach(m: &Pdtmc, targets: &BTreeSet<StateId>) -> BTreeSet<StateId> {
    let goal: Vec<StateId> = targets.iter().copied().collect();
    let seen = induced_graph(m).backward_reachable(&goal);
    m.states().filter(|s| !seen[s.index()]).collect()
}

/// `|a - b| / |b|`, or `|a|` when `b` is zero.
pub fn relative_error(a: &BigRational, b: &BigRational) -> f64 {
    let diff = (a - b).abs();
    let r = if b.is_zero() { diff } else { diff / b.abs() };
    r.to_f64().unwrap_or(f64::INFINITY)
}
