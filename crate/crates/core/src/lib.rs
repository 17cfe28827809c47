//! Wave-optics toolkit for Talbot self-imaging of orbital-angular-momentum
//! lattices.
//!
//! The crate prepares spin-orbit lattice fields with birefringent gradient
//! pairs ([`spinorbit`]), propagates them with the paraxial Fresnel
//! propagator ([`propagation`]) and measures the resulting intensity
//! patterns ([`analysis`]). Fields live on a [`Grid2D`] and are indexed
//! `[[i, j]]` with `i` along x and `j` along y.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
mod error;
pub mod fft;
pub mod grid_field;
pub mod numeric;
pub mod propagation;
pub mod selftest;
pub mod spinorbit;

pub use error::{Error, Result};
pub use grid_field::{
    gaussian_envelope, intensity, make_grid, project, resize_canvas, strip_phase, Grid2D, Intensity, IntensityImage,
    JonesField, JonesVector, ScalarField,
};
pub use propagation::{
    carpet, fraunhofer_distance, propagate, propagate_jones, talbot_length, thin_lens, Carpet, CarpetSpec,
    PropagationPlan,
};
pub use spinorbit::{apply_lov_sequence, lattice_intensity_closed_form, LovParams, MaterialParams, SpinOrbitParams};

/// Transverse axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            other => Err(Error::InvalidArgument(format!("unknown axis {other:?}, expected x or y"))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}
