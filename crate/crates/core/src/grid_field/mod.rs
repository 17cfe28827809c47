//! Sampled transverse plane, field containers and their elementary
//! construction and measurement operations.

mod field;
mod grid;
pub mod io;

pub use field::{
    gaussian_envelope, intensity, project, resize_canvas, strip_phase, Intensity, IntensityImage, JonesField,
    JonesVector, ScalarField, ANALYZER_NORM_TOLERANCE,
};
pub(crate) use field::resize_array;
pub use grid::{make_grid, Grid2D};
