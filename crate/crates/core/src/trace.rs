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
//! Episode traces: one JSON object per line, one line per tick.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Event {
    Replan,
    ReplanFailed,
    Infeasible,
    GoalReached,
    GoalUnreachable,
    Collision,
    /// Some cloud points had no match in the previous frame.
    VelocityReset,
    Jog,
}

/// Closest cloud point to the arm in configuration-space distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgminPoint {
    pub obstacle: u32,
    pub index: u32,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSnapshot {
    pub id: u32,
    pub pos: [f64; 2],
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandStatus {
    Inactive,
    Active,
    Infeasible,
    /// Filter switched off; `u = u_nom`.
    Bypassed,
}

impl From<FilterStatus> for CommandStatus {
    fn from(s: FilterStatus) -> Self {
        match s {
            FilterStatus::Inactive => Self::Inactive,
            FilterStatus::Active => Self::Active,
            FilterStatus::Infeasible => Self::Infeasible,
        }
    }
}

/// State at the start of a tick and the command applied over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub tick: u64,
    /// seconds
    pub t: f64,
    /// radians
    pub q: Vec<f64>,
    /// meters
    pub ee: [f64; 2],
    /// rad/s
    pub u_nom: Vec<f64>,
    /// rad/s
    pub u: Vec<f64>,
    pub h: f64,
    pub dhdt: f64,
    pub status: CommandStatus,
    pub rows_kept: usize,
    pub argmin: Option<ArgminPoint>,
    /// Index of the plan waypoint being tracked.
    pub waypoint: Option<usize>,
    /// Workspace clearance against the true cloud, meters; `None` without
    /// obstacles.
    pub clearance: Option<f64>,
    pub obstacles: Vec<ObstacleSnapshot>,
    pub events: Vec<Event>,
}

impl TraceRecord {
    pub fn correction_norm(&self) -> f64 {
        self.u.iter().zip(&self.u_nom).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

pub fn write_record<W: Write>(w: &mut W, r: &TraceRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, r).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_trace<W: Write>(mut w: W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        write_record(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace, rejecting malformed lines and non-increasing ticks.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut out: Vec<TraceRecord> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("trace line {}: {e}", i + 1)))?;
        if let Some(prev) = out.last() {
            if !(rec.t > prev.t) || rec.tick <= prev.tick {
                return Err(Error::Format(format!("trace line {}: time does not increase", i + 1)));
            }
        }
        out.push(rec);
    }
    Ok(out)
}
