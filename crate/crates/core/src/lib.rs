//! Semiclassical Monte Carlo simulation of a laser-driven two-level particle
//! moving along the axis of a lossy single-mode cavity.
//!
//! All quantities use recoil units, `ħ = k = ω_R = 1` (particle mass `1/2`).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod friction;
pub mod output;
pub mod params;
pub mod scan;

pub use dynamics::{IntegratorConfig, Scheme, State};
pub use ensemble::{EnsembleConfig, EnsembleStats, InitialConditions, PositionHistogram};
pub use friction::{DragConfig, FrictionMap, FrictionModel};
pub use params::{derive, DerivedParams, SystemParams, TransversePump};
pub use scan::{AxisSpec, GridSpec, ScanAxis, ScanResult};
