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
//! Brute-force evaluation of the configuration-space distance.

use crate::arm::{wrapped_distance, ArmModel, JointVector, WorkPoint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue<T = f64> {
    /// Distance in radians, or the sentinel `π·√N` when unreachable.
    pub distance: T,
    pub reachable: bool,
}

/// Half the search-grid cell diagonal, mapped to workspace meters through the
/// arm's clearance Lipschitz bound.
pub fn contact_tolerance<T: Scalar>(arm: &ArmModel<T>, search_cells: usize) -> T {
    let n = T::from_usize_lossy(arm.dof());
    let cell = (T::PI() + T::PI()) / T::from_usize_lossy(search_cells);
    T::lit(0.5) * arm.workspace_lipschitz_bound() * cell * n.sqrt()
}

/// Metric diameter of the joint torus.
pub fn unreachable_sentinel<T: Scalar>(dof: usize) -> T {
    T::PI() * T::from_usize_lossy(dof).sqrt()
}

pub(crate) fn search_node<T: Scalar>(j: usize, search_cells: usize) -> T {
    -T::PI() + T::from_usize_lossy(j) * (T::PI() + T::PI()) / T::from_usize_lossy(search_cells)
}

/// True when the body at `angles` touches or contains `p` within `tau`.
pub(crate) fn in_contact<T: Scalar>(arm: &ArmModel<T>, angles: &[T], p: WorkPoint<T>, tau: T) -> bool {
    arm.clearance_unchecked(angles, p) <= tau
}

/// Points farther than this from the base can never be in contact.
pub(crate) fn beyond_reach<T: Scalar>(arm: &ArmModel<T>, p: WorkPoint<T>, tau: T) -> bool {
    (p - arm.base()).norm() > arm.reach() + arm.link_inflation() + tau
}

/// Minimum wrapped distance from `q` to any search-grid configuration whose
/// body lies within the contact tolerance of `p`.
///
/// Configurations where `p` penetrates the body count as contact, so the
/// distance is zero throughout the colliding set.
pub fn cdf_oracle<T: Scalar>(
    arm: &ArmModel<T>,
    q: &JointVector<T>,
    p: WorkPoint<T>,
    search_cells: usize,
) -> Result<OracleValue<T>> {
    if search_cells < 8 {
        return Err(Error::InvalidInput(format!("search grid needs ≥ 8 cells per axis, got {search_cells}")));
    }
    if q.len() != arm.dof() {
        return Err(Error::DimensionMismatch { expected: arm.dof(), actual: q.len() });
    }
    let n = arm.dof();
    let tau = contact_tolerance(arm, search_cells);
    let unreachable = OracleValue { distance: unreachable_sentinel(n), reachable: false };
    if beyond_reach(arm, p, tau) {
        return Ok(unreachable);
    }

    let total = search_cells
        .checked_pow(n as u32)
        .ok_or_else(|| Error::InvalidInput("search grid too large".into()))?;
    let mut star = vec![T::zero(); n];
    let mut best: Option<T> = None;
    for flat in 0..total {
        let mut rem = flat;
        for slot in star.iter_mut().rev() {
            *slot = search_node(rem % search_cells, search_cells);
            rem /= search_cells;
        }
        if in_contact(arm, &star, p, tau) {
            let d = wrapped_distance(q.as_slice(), &star);
            if best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
    }
    Ok(match best {
        Some(distance) => OracleValue { distance, reachable: true },
        None => unreachable,
    })
}
