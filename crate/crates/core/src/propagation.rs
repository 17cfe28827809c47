//! Paraxial free-space propagation, thin lenses, characteristic distances
//! and Talbot carpets.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::fft::{fft_frequencies, Fft2};
use crate::grid_field::{resize_array, Grid2D, JonesField, ScalarField};
use crate::Axis;

/// Self-imaging distance `z_T = 2a²/λ`.
pub fn talbot_length(a: f64, wavelength: f64) -> Result<f64> {
    if !(a > 0.0 && wavelength > 0.0) {
        return invalid(format!("talbot length needs positive a and λ, got ({a}, {wavelength})"));
    }
    Ok(2.0 * a * a / wavelength)
}

/// Far-field distance `z_F = 8w0²/λ`.
pub fn fraunhofer_distance(w0: f64, wavelength: f64) -> Result<f64> {
    if !(w0 > 0.0 && wavelength > 0.0) {
        return invalid(format!("fraunhofer distance needs positive w0 and λ, got ({w0}, {wavelength})"));
    }
    Ok(8.0 * w0 * w0 / wavelength)
}

/// Rayleigh range `πw0²/λ` of a Gaussian beam.
pub fn rayleigh_range(w0: f64, wavelength: f64) -> f64 {
    PI * w0 * w0 / wavelength
}

/// 1/e amplitude radius `w0·√(1 + (z/z_R)²)` of a Gaussian beam.
pub fn gaussian_beam_radius(w0: f64, wavelength: f64, z: f64) -> f64 {
    let zr = rayleigh_range(w0, wavelength);
    w0 * (1.0 + (z / zr).powi(2)).sqrt()
}

/// `e^{ikz}` evaluated from the fractional number of wavelengths, which
/// keeps the phase accurate for long distances.
fn carrier_phase(z: f64, wavelength: f64) -> Complex64 {
    let cycles = z / wavelength;
    Complex64::from_polar(1.0, 2.0 * PI * (cycles - cycles.floor()))
}

/// Precomputed spectral propagator for one grid and wavelength. Immutable
/// and shareable; each call to [`propagate`] uses private scratch.
#[derive(Debug, Clone)]
pub struct PropagationPlan {
    grid: Grid2D,
    wavelength: f64,
    pad_factor: usize,
    band_limit: bool,
    fft: Fft2,
    fx: Vec<f64>,
    fy: Vec<f64>,
    chirp_sign: f64,
}

impl PropagationPlan {
    /// Default plan: zero-padding by 2, band limiting enabled.
    pub fn new(grid: Grid2D, wavelength: f64) -> Result<Self> {
        Self::with_options(grid, wavelength, 2, true)
    }

    pub fn with_options(grid: Grid2D, wavelength: f64, pad_factor: usize, band_limit: bool) -> Result<Self> {
        if pad_factor < 1 {
            return invalid("pad_factor must be at least 1");
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return invalid(format!("wavelength must be positive, got {wavelength}"));
        }
        let (px, py) = (grid.nx() * pad_factor, grid.ny() * pad_factor);
        Ok(Self {
            grid,
            wavelength,
            pad_factor,
            band_limit,
            fft: Fft2::new(px, py),
            fx: fft_frequencies(px, grid.dx()),
            fy: fft_frequencies(py, grid.dy()),
            chirp_sign: -1.0,
        })
    }

    /// Flips the sign of the quadratic transfer-function phase. Only for
    /// negative-control self tests.
    #[doc(hidden)]
    pub fn with_corrupted_transfer_sign(mut self) -> Self {
        self.chirp_sign = -self.chirp_sign;
        self
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn pad_factor(&self) -> usize {
        self.pad_factor
    }

    pub fn band_limit(&self) -> bool {
        self.band_limit
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        self.fft.shape()
    }

    /// Distance beyond which the sampled transfer function aliases:
    /// `min(L_pad·d) / λ` over both axes.
    pub fn critical_distance(&self) -> f64 {
        let (px, py) = self.padded_shape();
        let lx = px as f64 * self.grid.dx() * self.grid.dx();
        let ly = py as f64 * self.grid.dy() * self.grid.dy();
        lx.min(ly) / self.wavelength
    }

    /// Paraxial transfer function `e^{ikz}·exp(−iπλz(fx² + fy²))`.
    pub fn transfer_function(&self, fx: f64, fy: f64, z: f64) -> Complex64 {
        carrier_phase(z, self.wavelength)
            * Complex64::from_polar(1.0, self.chirp_sign * PI * self.wavelength * z * (fx * fx + fy * fy))
    }

    fn check(&self, field: &ScalarField) -> Result<()> {
        self.grid.ensure_same(field.grid(), "propagation plan")?;
        if (field.wavelength() - self.wavelength).abs() > 1e-12 * self.wavelength {
            return invalid(format!(
                "field wavelength {:e} differs from plan wavelength {:e}",
                field.wavelength(),
                self.wavelength
            ));
        }
        Ok(())
    }

    fn propagate_array(&self, amplitudes: &Array2<Complex64>, z: f64) -> Array2<Complex64> {
        let (px, py) = self.padded_shape();
        let mut buf = resize_array(amplitudes, px, py);
        self.fft.forward(&mut buf);
        let carrier = carrier_phase(z, self.wavelength);
        let chirp = self.chirp_sign * PI * self.wavelength * z;
        let (bx, by) = if self.band_limit && z > 0.0 {
            let bx = px as f64 * self.grid.dx() / (2.0 * self.wavelength * z);
            let by = py as f64 * self.grid.dy() / (2.0 * self.wavelength * z);
            (bx, by)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let (fx, fy) = (&self.fx, &self.fy);
        Zip::indexed(&mut buf).par_for_each(|(u, v), c| {
            let (f1, f2) = (fx[u], fy[v]);
            if f1.abs() > bx || f2.abs() > by {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c *= carrier * Complex64::from_polar(1.0, chirp * (f1 * f1 + f2 * f2));
            }
        });
        self.fft.inverse(&mut buf);
        resize_array(&buf, self.grid.nx(), self.grid.ny())
    }
}

/// Fresnel propagation by distance `z >= 0` through the plan's padded
/// spectral window. `z = 0` returns the input unchanged.
pub fn propagate(field: &ScalarField, z: f64, plan: &PropagationPlan) -> Result<ScalarField> {
    plan.check(field)?;
    if !(z >= 0.0 && z.is_finite()) {
        return invalid(format!("propagation distance must be finite and non-negative, got {z}"));
    }
    if z == 0.0 {
        return Ok(field.clone());
    }
    Ok(ScalarField::from_parts(
        *field.grid(),
        plan.propagate_array(field.amplitudes(), z),
        field.wavelength(),
    ))
}

/// Propagates both circular components independently.
pub fn propagate_jones(field: &JonesField, z: f64, plan: &PropagationPlan) -> Result<JonesField> {
    let (r, l) = field.clone().into_components();
    let (r, l) = rayon::join(|| propagate(&r, z, plan), || propagate(&l, z, plan));
    JonesField::from_components(r?, l?)
}

/// Multiplies by the thin-lens phase `exp(−ik(x² + y²)/(2f))`; negative `f`
/// is a diverging lens.
pub fn thin_lens(field: &ScalarField, focal_length: f64) -> Result<ScalarField> {
    if focal_length == 0.0 || !focal_length.is_finite() {
        return invalid(format!("focal length must be finite and non-zero, got {focal_length}"));
    }
    let g = *field.grid();
    let k = 2.0 * PI / field.wavelength();
    let mut out = field.amplitudes().clone();
    Zip::indexed(&mut out).par_for_each(|(i, j), c| {
        let (x, y) = g.coord(i, j);
        *c *= Complex64::from_polar(1.0, -k * (x * x + y * y) / (2.0 * focal_length));
    });
    Ok(ScalarField::from_parts(g, out, field.wavelength()))
}

pub fn thin_lens_jones(field: &JonesField, focal_length: f64) -> Result<JonesField> {
    let (r, l) = field.clone().into_components();
    JonesField::from_components(thin_lens(&r, focal_length)?, thin_lens(&l, focal_length)?)
}

/// Direct evaluation of the Fresnel diffraction integral as a Riemann sum
/// over the input samples, on the same grid. Separable in x and y, so the
/// cost is O(n³) rather than O(n⁴); intended for small cross-check grids.
pub fn fresnel_quadrature(field: &ScalarField, z: f64) -> Result<ScalarField> {
    if !(z > 0.0 && z.is_finite()) {
        return invalid(format!("quadrature needs a positive distance, got {z}"));
    }
    let g = *field.grid();
    let lambda = field.wavelength();
    let k = 2.0 * PI / lambda;
    let kernel = |n: usize, coord: &dyn Fn(usize) -> f64| {
        Array2::from_shape_fn((n, n), |(p, q)| {
            let d = coord(p) - coord(q);
            Complex64::from_polar(1.0, k * d * d / (2.0 * z))
        })
    };
    let kx = kernel(g.nx(), &|i| g.x(i));
    let ky = kernel(g.ny(), &|j| g.y(j));
    let prefactor = carrier_phase(z, lambda) / Complex64::new(0.0, lambda * z) * (g.dx() * g.dy());
    let out = kx.dot(field.amplitudes()).dot(&ky.t()) * prefactor;
    ScalarField::new(g, out, lambda)
}

/// Where to cut the carpet and at which distances.
#[derive(Debug, Clone, PartialEq)]
pub struct CarpetSpec {
    /// Axis held fixed: `Axis::X` slices at `x = offset` and keeps y.
    pub axis: Axis,
    pub offset: f64,
    pub z_samples: Vec<f64>,
}

impl CarpetSpec {
    pub fn new(axis: Axis, offset: f64, z_samples: Vec<f64>) -> Result<Self> {
        if z_samples.is_empty() {
            return invalid("carpet needs at least one z sample");
        }
        if z_samples.iter().any(|z| !(*z >= 0.0 && z.is_finite())) {
            return invalid("carpet z samples must be finite and non-negative");
        }
        if z_samples.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("carpet z samples must be strictly increasing");
        }
        Ok(Self { axis, offset, z_samples })
    }

    /// `count` evenly spaced samples over `[start, stop]`.
    pub fn linspace(axis: Axis, offset: f64, start: f64, stop: f64, count: usize) -> Result<Self> {
        let z = match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count)
                .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
                .collect(),
        };
        Self::new(axis, offset, z)
    }
}

/// Intensity along one transverse line for a sequence of distances.
#[derive(Debug, Clone, PartialEq)]
pub struct Carpet {
    pub z: Vec<f64>,
    /// Transverse coordinates along the slice.
    pub coords: Vec<f64>,
    /// `rows[[k, s]]`: intensity at `z[k]`, transverse sample `s`.
    pub rows: Array2<f64>,
}

impl Carpet {
    /// CSV with a header `z_m,<coords…>` and one row per distance.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["z_m".to_string()];
        header.extend(self.coords.iter().map(|c| format!("{c:e}")));
        w.write_record(&header).map_err(csv_err)?;
        for (k, z) in self.z.iter().enumerate() {
            let mut rec = vec![format!("{z:e}")];
            rec.extend(self.rows.row(k).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| crate::Error::Format(e.to_string()))
    }

    /// Array laid out `[[transverse, z]]` for image export (rows = z).
    pub fn as_image_array(&self) -> Array2<f64> {
        self.rows.t().to_owned()
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Format(e.to_string())
}

/// Propagates `field` to every distance in `spec` and records the slice.
pub fn carpet(field: &ScalarField, spec: &CarpetSpec, plan: &PropagationPlan) -> Result<Carpet> {
    plan.check(field)?;
    let spec = CarpetSpec::new(spec.axis, spec.offset, spec.z_samples.clone())?;
    let g = *field.grid();
    let (fixed, len) = match spec.axis {
        Axis::X => (g.fractional_i(spec.offset).round(), g.ny()),
        Axis::Y => (g.fractional_j(spec.offset).round(), g.nx()),
    };
    let limit = match spec.axis {
        Axis::X => g.nx(),
        Axis::Y => g.ny(),
    };
    if !(fixed >= 0.0 && (fixed as usize) < limit) {
        return invalid(format!("carpet offset {:e} lies outside the grid", spec.offset));
    }
    let fixed = fixed as usize;
    let coords: Vec<f64> = match spec.axis {
        Axis::X => (0..len).map(|j| g.y(j)).collect(),
        Axis::Y => (0..len).map(|i| g.x(i)).collect(),
    };
    let rows: Vec<Result<Vec<f64>>> = spec
        .z_samples
        .par_iter()
        .map(|&z| {
            let out = propagate(field, z, plan)?;
            let a = out.amplitudes();
            Ok(match spec.axis {
                Axis::X => a.row(fixed).iter().map(|c| c.norm_sqr()).collect(),
                Axis::Y => a.column(fixed).iter().map(|c| c.norm_sqr()).collect(),
            })
        })
        .collect();
    let mut data = Array2::zeros((spec.z_samples.len(), len));
    for (k, row) in rows.into_iter().enumerate() {
        for (s, v) in row?.into_iter().enumerate() {
            data[[k, s]] = v;
        }
    }
    Ok(Carpet { z: spec.z_samples, coords, rows: data })
}
