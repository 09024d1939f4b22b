//! Method-of-characteristics solvers for `⟨c, Du⟩ = f` on planar domains
//! whose characteristics run from the boundary into an interior stop set Σ.
//!
//! The pieces build on each other: [`geometry`] describes Ω and Σ,
//! [`timefield`] provides the time function and transport field,
//! [`characteristics`] integrates the rescaled flow, [`linear_solver`]
//! evaluates the explicit solution, [`bv_analysis`] checks the a-priori bounds
//! and [`quasilinear`] iterates the linear solver for coefficient functionals.

pub mod builtin;
pub mod bv_analysis;
pub mod characteristics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod grid;
pub mod inpaint;
pub mod linear_solver;
pub mod pnm;
pub mod quasilinear;
pub mod report;
pub mod timefield;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Point = Vec2;
