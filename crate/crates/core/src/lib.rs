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
//! Safe planning and control for planar arms on configuration-space distance
//! fields.
//!
//! * [`arm`] — planar serial-arm kinematics and capsule clearance.
//! * [`cdf`] — exact distance oracle, tabulated Lipschitz-certified field and
//!   the barrier `h(q, P)`.
//! * [`planner`] — safe bubble cover planner and a dense-checking baseline.
//! * [`filter`] — sampled distributionally-robust CBF quadratic program.
//! * [`sim`] — deterministic episode engine, metrics and planner benchmarks.
//! * [`config`], [`trace`], [`wire`] — scenario files, trace records and the
//!   serve-mode protocol.
//!
//! Kinematics, fields and the filter are generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below pin the common precisions.

pub mod arm;
pub mod cdf;
pub mod config;
pub mod error;
pub mod filter;
pub mod planner;
pub mod scalar;
pub mod sim;
pub mod trace;
pub mod wire;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ArmModel32 = arm::ArmModel<f32>;
pub type ArmModel64 = arm::ArmModel<f64>;
pub type JointVector32 = arm::JointVector<f32>;
pub type JointVector64 = arm::JointVector<f64>;
pub type PointCloud32 = cdf::PointCloud<f32>;
pub type PointCloud64 = cdf::PointCloud<f64>;
pub type CdfField32 = cdf::CdfField<f32>;
pub type CdfField64 = cdf::CdfField<f64>;
pub type FilterParams32 = filter::FilterParams<f32>;
pub type FilterParams64 = filter::FilterParams<f64>;


