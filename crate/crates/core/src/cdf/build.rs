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
use rayon::prelude::*;

use super::oracle::{beyond_reach, contact_tolerance, in_contact, search_node, unreachable_sentinel};
use super::{table_len, CdfField, MAX_DIMS};
use crate::arm::{ArmModel, Vec2};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Resolution and extent of a tabulated field.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub q_cells: usize,
    pub p_cells: usize,
    pub p_min: Vec2<f64>,
    pub p_max: Vec2<f64>,
    /// Oracle search cells per field cell along each joint axis.
    pub search_refine: usize,
    /// Largest allowed number of table entries.
    pub max_entries: usize,
}

impl GridSpec {
    pub const DEFAULT_CELLS: usize = 48;
    pub const DEFAULT_MAX_ENTRIES: usize = 16 << 20;
    pub const DEFAULT_REFINE: usize = 2;

    /// Default grid whose box covers everything the arm can touch.
    pub fn for_arm<T: Scalar>(arm: &ArmModel<T>) -> Self {
        let search = Self::DEFAULT_CELLS * Self::DEFAULT_REFINE;
        let tau = contact_tolerance(arm, search).to_f64_lossy();
        let half = (arm.reach() + arm.link_inflation()).to_f64_lossy() + tau + 0.05;
        let b = arm.base();
        let (bx, by) = (b.x.to_f64_lossy(), b.y.to_f64_lossy());
        Self {
            q_cells: Self::DEFAULT_CELLS,
            p_cells: Self::DEFAULT_CELLS,
            p_min: Vec2::new(bx - half, by - half),
            p_max: Vec2::new(bx + half, by + half),
            search_refine: Self::DEFAULT_REFINE,
            max_entries: Self::DEFAULT_MAX_ENTRIES,
        }
    }

    pub fn search_cells(&self) -> usize {
        self.q_cells * self.search_refine
    }
}

/// Tabulates the oracle distance at every `(q, p)` node.
///
/// For each workspace node the contact set is marked on the search grid and an
/// exact periodic Euclidean distance transform yields the distance from every
/// search configuration to it; field nodes coincide with every
/// `search_refine`-th search node, so stored values equal the brute-force
/// oracle at those nodes.
pub fn build_cdf_field<T: Scalar>(arm: &ArmModel<T>, spec: &GridSpec) -> Result<CdfField<T>> {
    let n = arm.dof();
    if n + 2 > MAX_DIMS {
        return Err(Error::Config(format!("at most {} joints supported", MAX_DIMS - 2)));
    }
    if spec.q_cells < 2 || spec.p_cells < 2 || spec.search_refine == 0 {
        return Err(Error::Config("grid needs ≥ 2 cells per axis and search_refine ≥ 1".into()));
    }
    if spec.search_cells() < 8 {
        return Err(Error::Config("oracle search grid needs ≥ 8 cells per joint axis".into()));
    }
    let required = table_len(n, spec.q_cells, spec.p_cells).unwrap_or(usize::MAX);
    if required > spec.max_entries {
        return Err(Error::BudgetExceeded { required, allowed: spec.max_entries });
    }
    let search = spec.search_cells();
    let search_total = search
        .checked_pow(n as u32)
        .filter(|&s| s <= 1 << 28)
        .ok_or_else(|| Error::Config("oracle search grid too large".into()))?;

    let tau = contact_tolerance(arm, search);
    let d_max = unreachable_sentinel::<T>(n);
    let p_min = Vec2::new(T::lit(spec.p_min.x), T::lit(spec.p_min.y));
    let p_max = Vec2::new(T::lit(spec.p_max.x), T::lit(spec.p_max.y));
    let mut field = CdfField::from_parts(
        n,
        spec.q_cells,
        spec.p_cells,
        p_min,
        p_max,
        vec![0.0; required],
        T::zero(),
        T::zero(),
        d_max,
    )?;

    let q_nodes = spec.q_cells.pow(n as u32);
    let p_nodes = spec.p_cells * spec.p_cells;
    let cell = 2.0 * std::f64::consts::PI / search as f64;
    let search_angles: Vec<T> = (0..search).map(|j| search_node(j, search)).collect();

    let columns: Vec<Vec<f32>> = (0..p_nodes)
        .into_par_iter()
        .map(|flat_p| {
            let p = field.p_node(flat_p / spec.p_cells, flat_p % spec.p_cells);
            let mut column = vec![d_max.to_f64_lossy() as f32; q_nodes];
            if beyond_reach(arm, p, tau) {
                return column;
            }
            let mut sq = vec![f64::INFINITY; search_total];
            let mut angles = vec![T::zero(); n];
            let mut any = false;
            for (flat, slot) in sq.iter_mut().enumerate() {
                let mut rem = flat;
                for a in angles.iter_mut().rev() {
                    *a = search_angles[rem % search];
                    rem /= search;
                }
                if in_contact(arm, &angles, p, tau) {
                    *slot = 0.0;
                    any = true;
                }
            }
            if !any {
                return column;
            }
            periodic_edt(&mut sq, n, search);
            for (qi, out) in column.iter_mut().enumerate() {
                // field node index → search node index
                let mut rem = qi;
                let mut s_flat = 0;
                let mut stride = 1;
                for _ in 0..n {
                    s_flat += (rem % spec.q_cells) * spec.search_refine * stride;
                    rem /= spec.q_cells;
                    stride *= search;
                }
                *out = (sq[s_flat].sqrt() * cell) as f32;
            }
            column
        })
        .collect();

    for (flat_p, column) in columns.iter().enumerate() {
        for (qi, &v) in column.iter().enumerate() {
            field.values[qi * p_nodes + flat_p] = v;
        }
    }
    let (lq, lp) = grid_lipschitz(&field);
    field.lipschitz_q = lq;
    field.lipschitz_p = lp;
    Ok(field)
}

/// In-place squared Euclidean distance transform on a periodic `size^dims`
/// grid (unit spacing). Zero entries are sites, infinite entries are free.
pub(crate) fn periodic_edt(sq: &mut [f64], dims: usize, size: usize) {
    let mut line = vec![0.0; size];
    let mut out = vec![0.0; size];
    let mut stride = 1;
    for _ in 0..dims {
        for base in 0..sq.len() {
            // visit each line once: its first element has axis coordinate 0
            if (base / stride) % size != 0 {
                continue;
            }
            for (k, l) in line.iter_mut().enumerate() {
                *l = sq[base + k * stride];
            }
            lower_envelope_periodic(&line, &mut out);
            for (k, &o) in out.iter().enumerate() {
                sq[base + k * stride] = o;
            }
        }
        stride *= size;
    }
}

/// 1-D squared distance transform with circular distance, via the lower
/// envelope of parabolas over three tiled copies.
fn lower_envelope_periodic(f: &[f64], out: &mut [f64]) {
    let s = f.len() as i64;
    let sites: Vec<(f64, f64)> = (-1..=1)
        .flat_map(|tile| {
            f.iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(move |(j, &v)| ((j as i64 + tile * s) as f64, v))
        })
        .collect();
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut v = vec![0usize; sites.len()];
    let mut z = vec![0.0f64; sites.len() + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for qi in 1..sites.len() {
        let (pq, fq) = sites[qi];
        // sites are sorted by position and z[0] = -inf, so k never underflows
        let mut x;
        loop {
            let (pv, fv) = sites[v[k]];
            x = ((fq + pq * pq) - (fv + pv * pv)) / (2.0 * (pq - pv));
            if x > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = qi;
        z[k] = x;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (x, o) in out.iter_mut().enumerate() {
        let x = x as f64;
        while z[k + 1] < x {
            k += 1;
        }
        let (pv, fv) = sites[v[k]];
        *o = (x - pv) * (x - pv) + fv;
    }
}

/// Per-cell gradient-norm bounds of the multilinear interpolant, maximized
/// over all cells: `(L_q, L_p)`.
pub(crate) fn grid_lipschitz<T: Scalar>(field: &CdfField<T>) -> (T, T) {
    let n = field.dof();
    let cq = field.q_cells();
    let cp = field.p_cells();
    let dims = n + 2;
    let wq = field.q_spacing().to_f64_lossy();
    let ws = field.p_spacing();
    let (wx, wy) = (ws.x.to_f64_lossy(), ws.y.to_f64_lossy());
    let q_total = cq.pow(n as u32);
    let values = field.values();

    let (lq, lp) = (0..q_total)
        .into_par_iter()
        .map(|q_flat| {
            let mut origin = [0usize; MAX_DIMS];
            let mut rem = q_flat;
            for d in (0..n).rev() {
                origin[d] = rem % cq;
                rem /= cq;
            }
            let mut best = (0.0f64, 0.0f64);
            let mut corner_idx = [0usize; MAX_DIMS];
            let mut vals = [0.0f64; 1 << MAX_DIMS];
            for px in 0..cp - 1 {
                for py in 0..cp - 1 {
                    origin[n] = px;
                    origin[n + 1] = py;
                    for (c, val) in vals.iter_mut().enumerate().take(1 << dims) {
                        for d in 0..dims {
                            let up = c >> (dims - 1 - d) & 1;
                            corner_idx[d] = if d < n { (origin[d] + up) % cq } else { origin[d] + up };
                        }
                        *val = values[field.index(&corner_idx[..n], corner_idx[n], corner_idx[n + 1])] as f64;
                    }
                    let mut slope = [0.0f64; MAX_DIMS];
                    for c in 0..(1usize << dims) {
                        for (d, s) in slope.iter_mut().enumerate().take(dims) {
                            let bit = 1 << (dims - 1 - d);
                            if c & bit == 0 {
                                let w = if d < n { wq } else if d == n { wx } else { wy };
                                *s = s.max((vals[c | bit] - vals[c]).abs() / w);
                            }
                        }
                    }
                    let gq = slope[..n].iter().map(|s| s * s).sum::<f64>().sqrt();
                    let gp = (slope[n] * slope[n] + slope[n + 1] * slope[n + 1]).sqrt();
                    best.0 = best.0.max(gq);
                    best.1 = best.1.max(gp);
                }
            }
            best
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    (T::lit(lq), T::lit(lp))
}
