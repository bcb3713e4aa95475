//! Numerical laboratory for the radial Lane-Emden system
//! `-Δu = v^p`, `-Δv = u^q` on `R^N`.
//!
//! * [`exponent_algebra`]: scaling exponents, the Sobolev hyperbola and the
//!   Joseph-Lundgren curve.
//! * [`closed_form`]: the singular solution and its explicit linearized supersolution.
//! * [`radial_ivp`]: integration and shooting of regular radial solutions.
//! * [`profile_analysis`]: intersections and ratio suprema against the singular solution.
//! * [`hardy_rellich_eig`]: principal eigenvalue of the weighted Rellich quotient on annuli.

pub mod banded;
pub mod closed_form;
pub mod error;
pub mod exponent_algebra;
pub mod hardy_rellich_eig;
pub mod io;
pub mod ode;
pub mod profile_analysis;
pub mod radial_ivp;

pub use error::{Error, Result};
pub use exponent_algebra::{
    classify, derive_scaling, hardy_rellich_constant, jl_curve_q, jl_diagonal, CurveRoot, JlPosition,
    ParameterTriple, RegionVerdict, ScalingData, SobolevPosition,
};
