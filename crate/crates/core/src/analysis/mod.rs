//! Image analysis: post-processing, SNR, correlation, registration, lattice
//! spacing and the chirality metric.

mod filter;
mod metrics;
mod registration;

pub use filter::{
    adaptive_sigma, background_subtract, estimate_noise, gaussian_filter, gaussian_kernel, FilterSigma,
    ADAPTIVE_SIGMA_MAX, ADAPTIVE_SIGMA_MIN,
};
pub use metrics::{
    angular_moment, beam_width, chirality_metric, lattice_sites, ncc, snr, MaskRole, RegionMask, CHIRALITY_ORDER,
};
pub use registration::{
    estimate_lattice_spacing, estimate_shift, register, spectral_shift, Registration, SpacingEstimate,
    SpacingMethod, REGISTRATION_THRESHOLD,
};
