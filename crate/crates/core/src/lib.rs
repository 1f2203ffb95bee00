//! Numerical null control of a two-component reaction-diffusion system with
//! fast diffusion `σΔ` in the second component, and its shadow limit.
//!
//! The solvers are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, with `F32`-suffixed variants for single
//! precision.

// `!(x > 0)` style guards deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod hum;
pub mod io;
pub mod mesh;
pub mod nonlinear;
pub mod pde;
pub mod scalar;
pub mod semilinear;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid1D = mesh::Grid1D<f64>;
pub type TimeGrid = mesh::TimeGrid<f64>;
pub type Trajectory = pde::Trajectory<f64>;
pub type ControlField = pde::ControlField<f64>;
pub type CoefficientField = pde::CoefficientField<f64>;
pub type NonlinearityPair = nonlinear::NonlinearityPair<f64>;
pub type HumConfig = hum::HumConfig<f64>;
pub type HumResult = hum::HumResult<f64>;
pub type FixedPointConfig = semilinear::FixedPointConfig<f64>;
pub type FixedPointResult = semilinear::FixedPointResult<f64>;

pub type Grid1DF32 = mesh::Grid1D<f32>;
pub type TimeGridF32 = mesh::TimeGrid<f32>;
pub type TrajectoryF32 = pde::Trajectory<f32>;
pub type ControlFieldF32 = pde::ControlField<f32>;
pub type CoefficientFieldF32 = pde::CoefficientField<f32>;
pub type NonlinearityPairF32 = nonlinear::NonlinearityPair<f32>;
pub type HumConfigF32 = hum::HumConfig<f32>;
pub type HumResultF32 = hum::HumResult<f32>;
pub type FixedPointConfigF32 = semilinear::FixedPointConfig<f32>;
pub type FixedPointResultF32 = semilinear::FixedPointResult<f32>;
