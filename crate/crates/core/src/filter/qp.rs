/*
Copyright 2026 The cdfplan Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! `min ½‖u − u_nom‖²  s.t.  a_k·u ≥ b_k,  |u_i| ≤ u_max`.
//!
//! Hildreth's dual coordinate ascent does the work. Nearly parallel rows can
//! stall it; small problems are then finished exactly by enumerating active
//! sets of at most `N` linearly independent constraints, since any KKT point
//! is the unique optimum.

use super::{dot, ConstraintRow, FilterStatus};
use crate::scalar::Scalar;

/// Worst constraint violation tolerated before a problem is declared
/// infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;

const MAX_SWEEPS: usize = 10_000;
const HILDRETH_TOL: f64 = 1e-10;
const MAX_ENUMERATED_SETS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T = f64> {
    pub u: Vec<T>,
    pub status: FilterStatus,
    /// One multiplier per input row; box multipliers are not reported.
    pub multipliers: Vec<T>,
    pub kkt_residual: T,
    /// Active sets tried or dual sweeps run.
    pub iterations: usize,
}

struct Problem<T> {
    g: Vec<Vec<T>>,
    b: Vec<T>,
    rows: usize,
}

fn build<T: Scalar>(n: usize, rows: &[ConstraintRow<T>], u_max: T) -> Problem<T> {
    let mut g: Vec<Vec<T>> = rows.iter().map(|r| r.a.clone()).collect();
    let mut b: Vec<T> = rows.iter().map(|r| r.b).collect();
    for i in 0..n {
        for s in [T::one(), -T::one()] {
            let mut e = vec![T::zero(); n];
            e[i] = s;
            g.push(e);
            b.push(-u_max);
        }
    }
    Problem { g, b, rows: rows.len() }
}

fn tol<T: Scalar>() -> T {
    T::epsilon().sqrt() * T::lit(0.1)
}

/// Infinity-norm KKT residual of `(u, λ)` for the problem with the box rows
/// appended after `rows`; `lambda` covers the rows and the box (`2N` entries,
/// `+e_i` then `-e_i` per joint).
pub fn kkt_residual<T: Scalar>(u_nom: &[T], rows: &[ConstraintRow<T>], u_max: T, u: &[T], lambda: &[T]) -> T {
    let p = build(u_nom.len(), rows, u_max);
    residual(&p, u_nom, u, lambda)
}

fn residual<T: Scalar>(p: &Problem<T>, u_nom: &[T], u: &[T], lambda: &[T]) -> T {
    let n = u_nom.len();
    let mut r = T::zero();
    for i in 0..n {
        let mut s = u[i] - u_nom[i];
        for (k, g) in p.g.iter().enumerate() {
            s = s - lambda[k] * g[i];
        }
        r = r.max(s.abs());
    }
    for (k, g) in p.g.iter().enumerate() {
        let slack = dot(g, u) - p.b[k];
        r = r.max(-slack).max(-lambda[k]).max((lambda[k] * slack).abs());
    }
    r
}

pub fn solve_filter_qp<T: Scalar>(u_nom: &[T], rows: &[ConstraintRow<T>], u_max: T) -> QpSolution<T> {
    let n = u_nom.len();
    let p = build(n, rows, u_max);
    let m = p.g.len();
    let stop = |iters| QpSolution {
        u: vec![T::zero(); n],
        status: FilterStatus::Infeasible,
        multipliers: vec![T::zero(); p.rows],
        kkt_residual: T::infinity(),
        iterations: iters,
    };
    let t = tol::<T>();
    // a zero row is either vacuous or unsatisfiable
    for (g, &b) in p.g.iter().zip(&p.b) {
        if g.iter().all(|&v| v == T::zero()) && b > t {
            return stop(0);
        }
    }
    if p.g.iter().zip(&p.b).all(|(g, &b)| dot(g, u_nom) - b >= -t * (T::one() + b.abs())) {
        let lambda = vec![T::zero(); m];
        return QpSolution {
            u: u_nom.to_vec(),
            status: FilterStatus::Inactive,
            multipliers: vec![T::zero(); p.rows],
            kkt_residual: residual(&p, u_nom, u_nom, &lambda),
            iterations: 0,
        };
    }
    let (hu, hl, sweeps, converged) = hildreth(&p, u_nom);
    let solved = if converged {
        Some((hu, hl, sweeps))
    } else if subset_count(m, n) <= MAX_ENUMERATED_SETS {
        enumerate(&p, u_nom).map(|(u, l, tried)| (u, l, sweeps + tried))
    } else {
        let worst = p.g.iter().zip(&p.b).map(|(g, &b)| b - dot(g, &hu)).fold(T::zero(), T::max);
        (worst <= T::lit(FEASIBILITY_TOL)).then_some((hu, hl, sweeps))
    };
    match solved {
        Some((u, lambda, iters)) => {
            let kkt = residual(&p, u_nom, &u, &lambda);
            let active = lambda.iter().any(|&l| l > T::zero());
            QpSolution {
                u,
                status: if active { FilterStatus::Active } else { FilterStatus::Inactive },
                multipliers: lambda[..p.rows].to_vec(),
                kkt_residual: kkt,
                iterations: iters,
            }
        }
        None => stop(MAX_SWEEPS),
    }
}

fn subset_count(m: usize, n: usize) -> usize {
    let mut total = 0usize;
    let mut c = 1usize;
    for k in 1..=n.min(m) {
        c = c.saturating_mul(m - k + 1) / k;
        total = total.saturating_add(c);
    }
    total
}

fn enumerate<T: Scalar>(p: &Problem<T>, u_nom: &[T]) -> Option<(Vec<T>, Vec<T>, usize)> {
    let n = u_nom.len();
    let m = p.g.len();
    let t = tol::<T>();
    let mut tried = 0usize;
    let mut best: Option<(Vec<T>, Vec<T>, T)> = None;
    if p.g.iter().zip(&p.b).all(|(g, &b)| b - dot(g, u_nom) <= t * (T::one() + b.abs())) {
        return Some((u_nom.to_vec(), vec![T::zero(); m], 0));
    }
    for size in 1..=n.min(m) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            tried += 1;
            if let Some(lam_s) = equality_multipliers(p, u_nom, &idx) {
                if lam_s.iter().all(|&l| l >= -t) {
                    let mut u = u_nom.to_vec();
                    for (&k, &l) in idx.iter().zip(&lam_s) {
                        for i in 0..n {
                            u[i] = u[i] + l * p.g[k][i];
                        }
                    }
                    let worst = p
                        .g
                        .iter()
                        .zip(&p.b)
                        .map(|(g, &b)| (b - dot(g, &u)) / (T::one() + b.abs()))
                        .fold(T::zero(), T::max);
                    if worst <= t {
                        let mut lambda = vec![T::zero(); m];
                        for (&k, &l) in idx.iter().zip(&lam_s) {
                            lambda[k] = l.max(T::zero());
                        }
                        return Some((u, lambda, tried));
                    }
                    if best.as_ref().is_none_or(|b| worst < b.2) {
                        let mut lambda = vec![T::zero(); m];
                        for (&k, &l) in idx.iter().zip(&lam_s) {
                            lambda[k] = l.max(T::zero());
                        }
                        best = Some((u, lambda, worst));
                    }
                }
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    // rounding can push a true optimum just past the strict tolerance
    match best {
        Some((u, l, w)) if w <= T::lit(FEASIBILITY_TOL) => Some((u, l, tried)),
        _ => None,
    }
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Multipliers making the rows in `set` tight, or `None` when they are
/// linearly dependent.
fn equality_multipliers<T: Scalar>(p: &Problem<T>, u_nom: &[T], set: &[usize]) -> Option<Vec<T>> {
    let k = set.len();
    let mut a = vec![vec![T::zero(); k + 1]; k];
    for (r, &i) in set.iter().enumerate() {
        for (c, &j) in set.iter().enumerate() {
            a[r][c] = dot(&p.g[i], &p.g[j]);
        }
        a[r][k] = p.b[i] - dot(&p.g[i], u_nom);
    }
    let scale = a.iter().map(|row| row[..k].iter().fold(T::zero(), |m, v| m.max(v.abs()))).fold(T::zero(), T::max);
    if scale == T::zero() {
        return None;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())?;
        if a[piv][col].abs() <= scale * T::epsilon().sqrt() {
            return None;
        }
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    let v = a[col][c];
                    a[r][c] = a[r][c] - f * v;
                }
            }
        }
    }
    Some((0..k).map(|r| a[r][k] / a[r][r]).collect())
}

/// Returns `(u, λ, sweeps, converged)`.
fn hildreth<T: Scalar>(p: &Problem<T>, u_nom: &[T]) -> (Vec<T>, Vec<T>, usize, bool) {
    let m = p.g.len();
    let norms: Vec<T> = p.g.iter().map(|g| dot(g, g)).collect();
    let mut lambda = vec![T::zero(); m];
    let mut u = u_nom.to_vec();
    let tol = T::lit(HILDRETH_TOL).max(T::epsilon() * T::lit(64.0));
    for sweep in 1..=MAX_SWEEPS {
        for k in 0..m {
            if norms[k] == T::zero() {
                continue;
            }
            let step = (p.b[k] - dot(&p.g[k], &u)) / norms[k];
            let next = (lambda[k] + step).max(T::zero());
            let d = next - lambda[k];
            if d != T::zero() {
                for (ui, &gi) in u.iter_mut().zip(&p.g[k]) {
                    *ui = *ui + d * gi;
                }
                lambda[k] = next;
            }
        }
        if residual(p, u_nom, &u, &lambda) <= tol {
            return (u, lambda, sweep, true);
        }
    }
    (u, lambda, MAX_SWEEPS, false)
}
