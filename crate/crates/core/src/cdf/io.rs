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
//! Binary field files.
//!
//! Layout, all little-endian: magic `CDF1`; `N`, `C_q`, `C_p` as u64; axis
//! ranges `q_min, q_max, px_min, px_max, py_min, py_max` as f64; `L_q`, `L_p`,
//! `D_max` as f64; then the value table as row-major f32.

use std::io::{Read, Write};

use super::CdfField;
use crate::arm::Vec2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FIELD_MAGIC: &[u8; 4] = b"CDF1";

pub fn write_field<T: Scalar, W: Write>(field: &CdfField<T>, mut w: W) -> Result<()> {
    let (lo, hi) = field.p_box();
    let (lq, lp) = field.certified_lipschitz();
    w.write_all(FIELD_MAGIC)?;
    for v in [field.dof(), field.q_cells(), field.p_cells()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let pi = std::f64::consts::PI;
    let reals = [
        -pi,
        pi,
        lo.x.to_f64_lossy(),
        hi.x.to_f64_lossy(),
        lo.y.to_f64_lossy(),
        hi.y.to_f64_lossy(),
        lq.to_f64_lossy(),
        lp.to_f64_lossy(),
        field.unreachable_sentinel().to_f64_lossy(),
    ];
    for v in reals {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(field.values().len() * 4);
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<T: Scalar, R: Read>(mut r: R) -> Result<CdfField<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut u = [0u8; 8];
    let mut ints = [0usize; 3];
    for slot in ints.iter_mut() {
        r.read_exact(&mut u)?;
        *slot = usize::try_from(u64::from_le_bytes(u)).map_err(|_| Error::Format("size overflow".into()))?;
    }
    let mut reals = [0f64; 9];
    for slot in reals.iter_mut() {
        r.read_exact(&mut u)?;
        *slot = f64::from_le_bytes(u);
    }
    if reals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite header value".into()));
    }
    let [dof, q_cells, p_cells] = ints;
    let len = super::table_len(dof, q_cells, p_cells)
        .filter(|&l| l <= 1 << 31)
        .ok_or_else(|| Error::Format("table size out of range".into()))?;
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite table value".into()));
    }
    let [_, _, px0, px1, py0, py1, lq, lp, d_max] = reals;
    CdfField::from_parts(
        dof,
        q_cells,
        p_cells,
        Vec2::new(T::lit(px0), T::lit(py0)),
        Vec2::new(T::lit(px1), T::lit(py1)),
        values,
        T::lit(lq),
        T::lit(lp),
        T::lit(d_max),
    )
}
