//! Spin-orbit lattice preparation with birefringent gradient pairs, the
//! closed-form filtered lattice intensity, and OAM diagnostics.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix2;
use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid_field::{Grid2D, IntensityImage, JonesField, ScalarField};
use crate::Axis;

/// 2×2 complex Jones matrix acting on circular-basis vectors.
pub type JonesMatrix = Matrix2<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Pauli matrix for the given transverse axis.
pub fn pauli(axis: Axis) -> JonesMatrix {
    match axis {
        Axis::X => Matrix2::new(ZERO, ONE, ONE, ZERO),
        Axis::Y => Matrix2::new(ZERO, -I, I, ZERO),
    }
}

/// `exp(i·angle·σ) = cos(angle)·1 + i·sin(angle)·σ`.
pub fn pauli_rotation(axis: Axis, angle: f64) -> JonesMatrix {
    let (s, c) = angle.sin_cos();
    JonesMatrix::identity() * Complex64::new(c, 0.0) + pauli(axis) * Complex64::new(0.0, s)
}

/// Gradient-pair settings: lattice spacing `a`, number of pairs, and the
/// gradient origin `(x0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LovParams {
    pub a: f64,
    pub pairs: usize,
    pub origin: (f64, f64),
}

impl LovParams {
    pub fn new(a: f64, pairs: usize) -> Result<Self> {
        Self::with_origin(a, pairs, (0.0, 0.0))
    }

    pub fn with_origin(a: f64, pairs: usize, origin: (f64, f64)) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return invalid(format!("lattice spacing must be positive, got {a}"));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return invalid("gradient origin must be finite");
        }
        Ok(Self { a, pairs, origin })
    }
}

/// Prism material and geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub birefringence: f64,
    pub incline: f64,
    pub wavelength: f64,
}

/// OAM number `ell` and the full polarization-rotation distance `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinOrbitParams {
    pub ell: i32,
    pub d: f64,
}

impl SpinOrbitParams {
    pub fn new(ell: i32, d: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return invalid(format!("rotation distance d must be positive, got {d}"));
        }
        Ok(Self { ell, d })
    }
}

/// Product `(Ux·Uy)^N` at one transverse point.
pub fn lov_operator(x: f64, y: f64, params: &LovParams) -> JonesMatrix {
    let ux = pauli_rotation(Axis::X, PI / params.a * (x - params.origin.0));
    let uy = pauli_rotation(Axis::Y, PI / params.a * (y - params.origin.1));
    let pair = ux * uy;
    let mut m = JonesMatrix::identity();
    for _ in 0..params.pairs {
        m = pair * m;
    }
    m
}

/// Sends every sample through `pairs` gradient pairs, `Uy` first within a pair.
pub fn apply_lov_sequence(input: &JonesField, params: &LovParams) -> JonesField {
    let grid = *input.grid();
    let mut r = input.r().clone();
    let mut l = input.l().clone();
    if params.pairs == 0 {
        return JonesField::from_parts(grid, r, l, input.wavelength());
    }
    Zip::indexed(&mut r).and(&mut l).par_for_each(|(i, j), r, l| {
        let (x, y) = grid.coord(i, j);
        let m = lov_operator(x, y, params);
        let (a, b) = (*r, *l);
        *r = m[(0, 0)] * a + m[(0, 1)] * b;
        *l = m[(1, 0)] * a + m[(1, 1)] * b;
    });
    JonesField::from_parts(grid, r, l, input.wavelength())
}

/// Closed-form intensity of the two-pair lattice filtered on `<L|`:
/// `|α|² cos²(πx/a) cos²(πy/a) (2 − cos(2π(x+y)/a) − cos(2π(x−y)/a))`,
/// with `x, y` relative to the gradient origin. `params.pairs` is ignored.
pub fn lattice_intensity_closed_form(grid: &Grid2D, params: &LovParams, envelope: &ScalarField) -> Result<IntensityImage> {
    grid.ensure_same(envelope.grid(), "lattice envelope")?;
    let a = params.a;
    let mut values = Array2::zeros(grid.shape());
    Zip::indexed(&mut values)
        .and(envelope.amplitudes())
        .par_for_each(|(i, j), v, env| {
            let (x, y) = grid.coord(i, j);
            let (x, y) = (x - params.origin.0, y - params.origin.1);
            let cx = (PI * x / a).cos();
            let cy = (PI * y / a).cos();
            let bracket = 2.0 - (2.0 * PI * (x + y) / a).cos() - (2.0 * PI * (x - y) / a).cos();
            // bracket can dip a few ulps below zero at the lattice points
            *v = (env.norm_sqr() * cx * cx * cy * cy * bracket).max(0.0);
        });
    Ok(IntensityImage::from_parts(*grid, values))
}

/// `a = λ / (Δn·tanθ)`, reported as a magnitude.
pub fn lattice_spacing_from_materials(m: &MaterialParams) -> Result<f64> {
    if !(m.wavelength > 0.0 && m.wavelength.is_finite()) {
        return invalid(format!("wavelength must be positive, got {}", m.wavelength));
    }
    if !(m.birefringence != 0.0 && m.birefringence.is_finite()) {
        return invalid("birefringence must be non-zero");
    }
    if !(m.incline > 0.0 && m.incline < FRAC_PI_2) {
        return invalid(format!("incline angle must lie in (0, π/2), got {}", m.incline));
    }
    let a = (m.wavelength / (m.birefringence * m.incline.tan())).abs();
    if !(a > 0.0 && a.is_finite()) {
        return invalid("lattice spacing is unbounded for these materials");
    }
    Ok(a)
}

/// Single-site spin-orbit state
/// `A(r,φ)[cos(πr/d)|R> + i·e^{iℓφ}·sin(πr/d)|L>]` about the grid origin.
pub fn spin_orbit_reference(grid: &Grid2D, p: &SpinOrbitParams, envelope: &ScalarField) -> Result<JonesField> {
    grid.ensure_same(envelope.grid(), "spin-orbit envelope")?;
    let mut r = Array2::zeros(grid.shape());
    let mut l = Array2::zeros(grid.shape());
    Zip::indexed(&mut r)
        .and(&mut l)
        .and(envelope.amplitudes())
        .par_for_each(|(i, j), r, l, env| {
            let (x, y) = grid.coord(i, j);
            let rho = x.hypot(y);
            let phi = y.atan2(x);
            let (s, c) = (PI * rho / p.d).sin_cos();
            *r = env * c;
            *l = env * I * Complex64::from_polar(s, p.ell as f64 * phi);
        });
    Ok(JonesField::from_parts(*grid, r, l, envelope.wavelength()))
}

/// Largest `‖(Ux·Uy)^N|R> − exp(i(π/d)(xσx + yσy))|R>‖` over samples with
/// `r <= d`, both sides weighted by the envelope. The gradient spacing is
/// `a = N·d`.
pub fn trotter_error(grid: &Grid2D, d: f64, pairs: usize, envelope: &ScalarField) -> Result<f64> {
    trotter_error_within(grid, d, pairs, envelope, d)
}

/// [`trotter_error`] restricted to samples with `r <= radius`.
pub fn trotter_error_within(grid: &Grid2D, d: f64, pairs: usize, envelope: &ScalarField, radius: f64) -> Result<f64> {
    if pairs == 0 {
        return invalid("trotter error needs at least one pair");
    }
    let exact = spin_orbit_reference(grid, &SpinOrbitParams::new(1, d)?, envelope)?;
    let lov = LovParams::new(pairs as f64 * d, pairs)?;
    let mut worst = Array2::<f64>::zeros(grid.shape());
    Zip::indexed(&mut worst)
        .and(envelope.amplitudes())
        .and(exact.r())
        .and(exact.l())
        .par_for_each(|(i, j), w, env, er, el| {
            let (x, y) = grid.coord(i, j);
            if x.hypot(y) > radius {
                return;
            }
            let m = lov_operator(x, y, &lov);
            let dr = env * m[(0, 0)] - er;
            let dl = env * m[(1, 0)] - el;
            *w = (dr.norm_sqr() + dl.norm_sqr()).sqrt();
        });
    Ok(worst.iter().copied().fold(0.0, f64::max))
}

/// Bilinear interpolation of a complex array at fractional sample indices.
fn bilinear(a: &Array2<Complex64>, fi: f64, fj: f64) -> Option<Complex64> {
    let (nx, ny) = a.dim();
    let (i0, j0) = (fi.floor(), fj.floor());
    if i0 < 0.0 || j0 < 0.0 || i0 as usize + 1 >= nx || j0 as usize + 1 >= ny {
        return None;
    }
    let (i, j) = (i0 as usize, j0 as usize);
    let (ti, tj) = (fi - i0, fj - j0);
    Some(
        a[[i, j]] * ((1.0 - ti) * (1.0 - tj))
            + a[[i + 1, j]] * (ti * (1.0 - tj))
            + a[[i, j + 1]] * ((1.0 - ti) * tj)
            + a[[i + 1, j + 1]] * (ti * tj),
    )
}

/// Net phase winding of a scalar field around a circle, in units of 2π.
pub fn phase_winding(field: &ScalarField, center: (f64, f64), radius: f64) -> Result<i32> {
    let g = field.grid();
    if !(radius >= 3.0 * g.dx().max(g.dy())) {
        return invalid(format!("winding radius {radius:e} is below 3 sample pitches"));
    }
    let points = ((2.0 * PI * radius / (0.5 * g.dx().min(g.dy()))).ceil() as usize).max(64);
    let max = field.amplitudes().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let threshold = 1e-9 * max;
    let mut samples = Vec::with_capacity(points);
    for k in 0..points {
        let t = 2.0 * PI * k as f64 / points as f64;
        let (x, y) = (center.0 + radius * t.cos(), center.1 + radius * t.sin());
        let v = bilinear(field.amplitudes(), g.fractional_i(x), g.fractional_j(y))
            .ok_or_else(|| Error::InvalidArgument(format!("winding loop leaves the grid at ({x:e}, {y:e})")))?;
        if !(v.norm() > threshold) {
            return Err(Error::DegenerateLoop { amplitude: v.norm(), threshold });
        }
        samples.push(v);
    }
    let total: f64 = (0..points)
        .map(|k| (samples[(k + 1) % points] * samples[k].conj()).arg())
        .sum();
    Ok((total / (2.0 * PI)).round() as i32)
}
