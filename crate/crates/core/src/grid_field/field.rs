use ndarray::{Array2, Zip};
use num_complex::Complex64;

use super::grid::Grid2D;
use crate::error::{invalid, Error, Result};
use crate::numeric::compensated_sum;

/// Normalization tolerance for analyzer Jones vectors.
pub const ANALYZER_NORM_TOLERANCE: f64 = 1e-12;

/// Two-component polarization state in the circular basis, `|R> = (1, 0)`,
/// `|L> = (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub r: Complex64,
    pub l: Complex64,
}

impl JonesVector {
    pub const R: JonesVector = JonesVector {
        r: Complex64::new(1.0, 0.0),
        l: Complex64::new(0.0, 0.0),
    };
    pub const L: JonesVector = JonesVector {
        r: Complex64::new(0.0, 0.0),
        l: Complex64::new(1.0, 0.0),
    };

    pub const fn new(r: Complex64, l: Complex64) -> Self {
        Self { r, l }
    }

    /// Horizontal linear polarization, `(|R> + |L>)/√2`.
    pub fn horizontal() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(Complex64::new(s, 0.0), Complex64::new(s, 0.0))
    }

    /// Vertical linear polarization, `i(|R> - |L>)/√2`.
    pub fn vertical() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(Complex64::new(0.0, s), Complex64::new(0.0, -s))
    }

    pub fn norm(&self) -> f64 {
        (self.r.norm_sqr() + self.l.norm_sqr()).sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return invalid("cannot normalize a zero or non-finite Jones vector");
        }
        Ok(Self::new(self.r / n, self.l / n))
    }

    /// Hermitian inner product `<self|other>`.
    pub fn inner(&self, other: &JonesVector) -> Complex64 {
        self.r.conj() * other.r + self.l.conj() * other.l
    }
}

fn all_finite(a: &Array2<Complex64>) -> bool {
    a.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

fn check_shape<T>(grid: &Grid2D, a: &Array2<T>, what: &str) -> Result<()> {
    if a.dim() != grid.shape() {
        return Err(Error::GridMismatch(format!(
            "{what} array has shape {:?}, grid is {:?}",
            a.dim(),
            grid.shape()
        )));
    }
    Ok(())
}

fn check_wavelength(wavelength: f64) -> Result<()> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return invalid(format!("wavelength must be positive, got {wavelength}"));
    }
    Ok(())
}

/// Complex scalar amplitude sampled on a grid, indexed `[[i, j]]` with `i`
/// along x.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    amplitudes: Array2<Complex64>,
    wavelength: f64,
}

impl ScalarField {
    pub fn new(grid: Grid2D, amplitudes: Array2<Complex64>, wavelength: f64) -> Result<Self> {
        check_shape(&grid, &amplitudes, "amplitude")?;
        check_wavelength(wavelength)?;
        if !all_finite(&amplitudes) {
            return invalid("field amplitudes must be finite");
        }
        Ok(Self { grid, amplitudes, wavelength })
    }

    /// Internal constructor for operations that preserve the invariants.
    pub(crate) fn from_parts(grid: Grid2D, amplitudes: Array2<Complex64>, wavelength: f64) -> Self {
        debug_assert_eq!(amplitudes.dim(), grid.shape());
        Self { grid, amplitudes, wavelength }
    }

    /// Evaluates `f(x, y)` at every sample.
    pub fn from_fn<F>(grid: Grid2D, wavelength: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Complex64 + Sync,
    {
        let mut amplitudes = Array2::zeros(grid.shape());
        Zip::indexed(&mut amplitudes).par_for_each(|(i, j), v| {
            let (x, y) = grid.coord(i, j);
            *v = f(x, y);
        });
        Self::new(grid, amplitudes, wavelength)
    }

    pub fn constant(grid: Grid2D, wavelength: f64, value: Complex64) -> Result<Self> {
        Self::new(grid, Array2::from_elem(grid.shape(), value), wavelength)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn amplitudes(&self) -> &Array2<Complex64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Array2<Complex64> {
        self.amplitudes
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Integrated power `Σ|E|² dx dy`.
    pub fn power(&self) -> f64 {
        compensated_sum(self.amplitudes.iter().map(|c| c.norm_sqr())) * self.grid.dx() * self.grid.dy()
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Result<ScalarField> {
        ScalarField::new(self.grid, self.amplitudes.mapv(|c| c * factor), self.wavelength)
    }

    /// Pointwise product with a field on the same grid.
    pub fn multiply(&self, other: &ScalarField) -> Result<ScalarField> {
        self.grid.ensure_same(&other.grid, "multiply")?;
        ScalarField::new(self.grid, &self.amplitudes * &other.amplitudes, self.wavelength)
    }
}

/// Two circular-basis components per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct JonesField {
    grid: Grid2D,
    r: Array2<Complex64>,
    l: Array2<Complex64>,
    wavelength: f64,
}

impl JonesField {
    pub fn new(grid: Grid2D, r: Array2<Complex64>, l: Array2<Complex64>, wavelength: f64) -> Result<Self> {
        check_shape(&grid, &r, "R component")?;
        check_shape(&grid, &l, "L component")?;
        check_wavelength(wavelength)?;
        if !all_finite(&r) || !all_finite(&l) {
            return invalid("Jones field components must be finite");
        }
        Ok(Self { grid, r, l, wavelength })
    }

    pub(crate) fn from_parts(grid: Grid2D, r: Array2<Complex64>, l: Array2<Complex64>, wavelength: f64) -> Self {
        Self { grid, r, l, wavelength }
    }

    /// Scalar envelope times a uniform polarization state.
    pub fn from_scalar(envelope: &ScalarField, polarization: JonesVector) -> Self {
        let a = envelope.amplitudes();
        Self {
            grid: envelope.grid,
            r: a.mapv(|c| c * polarization.r),
            l: a.mapv(|c| c * polarization.l),
            wavelength: envelope.wavelength,
        }
    }

    pub fn from_components(r: ScalarField, l: ScalarField) -> Result<Self> {
        r.grid.ensure_same(&l.grid, "Jones components")?;
        if r.wavelength != l.wavelength {
            return invalid("Jones components carry different wavelengths");
        }
        Ok(Self {
            grid: r.grid,
            wavelength: r.wavelength,
            r: r.amplitudes,
            l: l.amplitudes,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn r(&self) -> &Array2<Complex64> {
        &self.r
    }

    pub fn l(&self) -> &Array2<Complex64> {
        &self.l
    }

    pub fn r_component(&self) -> ScalarField {
        ScalarField::from_parts(self.grid, self.r.clone(), self.wavelength)
    }

    pub fn l_component(&self) -> ScalarField {
        ScalarField::from_parts(self.grid, self.l.clone(), self.wavelength)
    }

    pub fn into_components(self) -> (ScalarField, ScalarField) {
        (
            ScalarField::from_parts(self.grid, self.r, self.wavelength),
            ScalarField::from_parts(self.grid, self.l, self.wavelength),
        )
    }

    /// Jones vector at sample `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> JonesVector {
        JonesVector::new(self.r[[i, j]], self.l[[i, j]])
    }

    pub fn power(&self) -> f64 {
        let s = compensated_sum(self.r.iter().zip(self.l.iter()).map(|(a, b)| a.norm_sqr() + b.norm_sqr()));
        s * self.grid.dx() * self.grid.dy()
    }
}

/// Non-negative real intensity on a grid, arbitrary linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    grid: Grid2D,
    values: Array2<f64>,
}

impl IntensityImage {
    pub fn new(grid: Grid2D, values: Array2<f64>) -> Result<Self> {
        check_shape(&grid, &values, "intensity")?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return invalid(format!("intensity values must be finite and non-negative, found {v}"));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts(grid: Grid2D, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), grid.shape());
        Self { grid, values }
    }

    pub fn from_fn<F>(grid: Grid2D, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let mut values = Array2::zeros(grid.shape());
        Zip::indexed(&mut values).par_for_each(|(i, j), v| {
            let (x, y) = grid.coord(i, j);
            *v = f(x, y);
        });
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    /// Multiplies every value by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<IntensityImage> {
        IntensityImage::new(self.grid, self.values.mapv(|v| v * factor))
    }

    /// Swaps the x and y axes.
    pub fn transposed(&self) -> IntensityImage {
        IntensityImage::from_parts(self.grid.transposed(), self.values.t().to_owned())
    }

    /// Pointwise sum with another image on the same grid.
    pub fn add(&self, other: &IntensityImage) -> Result<IntensityImage> {
        self.grid.ensure_same(&other.grid, "add")?;
        Ok(IntensityImage::from_parts(self.grid, &self.values + &other.values))
    }
}

/// Anything whose pointwise intensity can be measured.
pub trait Intensity {
    fn intensity(&self) -> IntensityImage;
}

impl Intensity for ScalarField {
    fn intensity(&self) -> IntensityImage {
        IntensityImage::from_parts(self.grid, self.amplitudes.mapv(|c| c.norm_sqr()))
    }
}

impl Intensity for JonesField {
    fn intensity(&self) -> IntensityImage {
        let mut values = Array2::zeros(self.grid.shape());
        Zip::from(&mut values)
            .and(&self.r)
            .and(&self.l)
            .par_for_each(|v, r, l| *v = r.norm_sqr() + l.norm_sqr());
        IntensityImage::from_parts(self.grid, values)
    }
}

/// Pointwise squared magnitude, summed over components for Jones fields.
pub fn intensity<F: Intensity + ?Sized>(field: &F) -> IntensityImage {
    field.intensity()
}

/// Real Gaussian amplitude `exp(-(x² + y²)/w0²)` centered on the origin.
pub fn gaussian_envelope(grid: &Grid2D, w0: f64, wavelength: f64) -> Result<ScalarField> {
    if !(w0 > 0.0 && w0.is_finite()) {
        return invalid(format!("beam waist must be positive, got {w0}"));
    }
    let inv = 1.0 / (w0 * w0);
    ScalarField::from_fn(*grid, wavelength, |x, y| Complex64::new((-(x * x + y * y) * inv).exp(), 0.0))
}

/// Projects a Jones field onto a unit analyzer state: `analyzer† · E`.
pub fn project(field: &JonesField, analyzer: JonesVector) -> Result<ScalarField> {
    if (analyzer.norm() - 1.0).abs() > ANALYZER_NORM_TOLERANCE {
        return invalid(format!("analyzer must be normalized, |v| = {}", analyzer.norm()));
    }
    let (cr, cl) = (analyzer.r.conj(), analyzer.l.conj());
    let mut out = Array2::zeros(field.grid.shape());
    Zip::from(&mut out)
        .and(&field.r)
        .and(&field.l)
        .par_for_each(|o, r, l| *o = cr * r + cl * l);
    Ok(ScalarField::from_parts(field.grid, out, field.wavelength))
}

/// Replaces every amplitude by its magnitude.
pub fn strip_phase(field: &ScalarField) -> ScalarField {
    ScalarField::from_parts(
        field.grid,
        field.amplitudes.mapv(|c| Complex64::new(c.norm(), 0.0)),
        field.wavelength,
    )
}

/// Copies the overlapping, center-aligned region of `src` into an array of
/// shape `(nx, ny)`, zero elsewhere.
pub(crate) fn resize_array<T: Clone + Default>(
    src: &Array2<T>,
    nx: usize,
    ny: usize,
) -> Array2<T> {
    let (ox, oy) = src.dim();
    let mut out = Array2::from_elem((nx, ny), T::default());
    // Shift that keeps sample (old/2) on (new/2).
    let sx = (nx / 2) as isize - (ox / 2) as isize;
    let sy = (ny / 2) as isize - (oy / 2) as isize;
    let i0 = 0.max(-sx) as usize;
    let i1 = (ox as isize).min(nx as isize - sx) as usize;
    let j0 = 0.max(-sy) as usize;
    let j1 = (oy as isize).min(ny as isize - sy) as usize;
    for i in i0..i1 {
        let ti = (i as isize + sx) as usize;
        for j in j0..j1 {
            out[[ti, (j as isize + sy) as usize]] = src[[i, j]].clone();
        }
    }
    out
}

/// Zero-pads or crops a field about its center sample; pitch is unchanged.
pub fn resize_canvas(field: &ScalarField, new_nx: usize, new_ny: usize) -> Result<ScalarField> {
    let grid = field.grid.resized(new_nx, new_ny)?;
    Ok(ScalarField::from_parts(
        grid,
        resize_array(&field.amplitudes, new_nx, new_ny),
        field.wavelength,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_field::make_grid;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(seed: u64, nx: usize, ny: usize) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = make_grid(nx, ny, 1e-3, 1e-3).unwrap();
        let a = Array2::from_shape_simple_fn((nx, ny), || {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        ScalarField::new(grid, a, 800e-9).unwrap()
    }

    #[test]
    fn gaussian_envelope_values() {
        let w0 = 1e-3;
        let g = make_grid(64, 64, 8e-3, 8e-3).unwrap();
        let env = gaussian_envelope(&g, w0, 800e-9).unwrap();
        let (i0, j0) = g.index_of(0.0, 0.0).unwrap();
        assert_eq!(env.amplitudes()[[i0, j0]].re, 1.0);
        // dx = 0.125 mm, so r = w0 is 8 samples along x
        assert!((env.amplitudes()[[i0 + 8, j0]].re - (-1.0f64).exp()).abs() < 1e-15);
        let half = gaussian_envelope(&g, 8.0 * g.dx() * std::f64::consts::SQRT_2, 800e-9).unwrap();
        assert!((half.amplitudes()[[i0 + 8, j0]].re - 0.60653).abs() < 1e-5);
        assert!(matches!(gaussian_envelope(&g, 0.0, 800e-9), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn intensity_of_scalar_and_jones() {
        let g = make_grid(4, 4, 1.0, 1.0).unwrap();
        let f = ScalarField::constant(g, 1e-6, Complex64::new(1.0, 1.0)).unwrap();
        assert!(intensity(&f).values().iter().all(|&v| v == 2.0));
        let env = ScalarField::constant(g, 1e-6, Complex64::new(1.0, 0.0)).unwrap();
        let j = JonesField::from_scalar(&env, JonesVector::R);
        assert!(intensity(&j).values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn projection_examples() {
        let g = make_grid(4, 4, 1.0, 1.0).unwrap();
        let env = ScalarField::constant(g, 1e-6, Complex64::new(1.0, 0.0)).unwrap();
        let r = JonesField::from_scalar(&env, JonesVector::R);
        let l = JonesField::from_scalar(&env, JonesVector::L);
        let h = JonesField::from_scalar(&env, JonesVector::horizontal());
        assert!(project(&r, JonesVector::L).unwrap().amplitudes().iter().all(|c| c.norm() == 0.0));
        assert!(project(&l, JonesVector::L).unwrap().amplitudes().iter().all(|c| *c == Complex64::new(1.0, 0.0)));
        let ph = project(&h, JonesVector::L).unwrap();
        assert!(ph.amplitudes().iter().all(|c| (c.re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15));
        let bad = JonesVector::new(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        assert!(matches!(project(&h, bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn horizontal_and_vertical_are_orthonormal() {
        let h = JonesVector::horizontal();
        let v = JonesVector::vertical();
        assert!(h.inner(&v).norm() < 1e-15);
        assert!((h.norm() - 1.0).abs() < 1e-15 && (v.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn strip_phase_examples() {
        let g = make_grid(2, 2, 1.0, 1.0).unwrap();
        let f = ScalarField::constant(g, 1e-6, Complex64::new(0.0, 1.0)).unwrap();
        assert!(strip_phase(&f).amplitudes().iter().all(|c| *c == Complex64::new(1.0, 0.0)));
        let f = ScalarField::constant(g, 1e-6, Complex64::new(-3.0, 0.0)).unwrap();
        assert!(strip_phase(&f).amplitudes().iter().all(|c| *c == Complex64::new(3.0, 0.0)));
        let f = random_field(3, 16, 12);
        let (a, b) = (intensity(&f), intensity(&strip_phase(&f)));
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-14 * x.max(1e-300));
        }
    }

    #[test]
    fn pad_places_field_in_center() {
        let f = random_field(1, 4, 4);
        let p = resize_canvas(&f, 8, 8).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let inside = (2..6).contains(&i) && (2..6).contains(&j);
                let v = p.amplitudes()[[i, j]];
                if inside {
                    assert_eq!(v, f.amplitudes()[[i - 2, j - 2]]);
                } else {
                    assert_eq!(v, Complex64::new(0.0, 0.0));
                }
            }
        }
        assert_eq!(p.power(), f.power());
        assert_eq!(p.grid().coord(4, 4), f.grid().coord(2, 2));
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let g = make_grid(2, 2, 1.0, 1.0).unwrap();
        let mut a = Array2::from_elem((2, 2), Complex64::new(1.0, 0.0));
        assert!(ScalarField::new(g, a.clone(), 0.0).is_err());
        a[[0, 0]] = Complex64::new(f64::NAN, 0.0);
        assert!(ScalarField::new(g, a, 1e-6).is_err());
        let wrong = Array2::from_elem((3, 2), Complex64::new(1.0, 0.0));
        assert!(matches!(ScalarField::new(g, wrong, 1e-6), Err(Error::GridMismatch(_))));
        assert!(IntensityImage::new(g, Array2::from_elem((2, 2), -1.0)).is_err());
    }

    proptest! {
        #[test]
        fn pad_then_crop_is_identity(seed in 0u64..1000, nx in 2usize..20, ny in 2usize..20,
                                     px in 0usize..9, py in 0usize..9) {
            let f = random_field(seed, nx, ny);
            let p = resize_canvas(&f, nx + px, ny + py).unwrap();
            let c = resize_canvas(&p, nx, ny).unwrap();
            prop_assert_eq!(c, f);
        }

        #[test]
        fn intensity_ignores_global_phase(seed in 0u64..1000, theta in -10.0f64..10.0) {
            let f = random_field(seed, 9, 7);
            let g = f.scaled(Complex64::from_polar(1.0, theta)).unwrap();
            for (a, b) in intensity(&f).values().iter().zip(intensity(&g).values()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            }
        }

        #[test]
        fn projections_partition_intensity(seed in 0u64..1000) {
            let r = random_field(seed, 8, 8);
            let l = random_field(seed + 7919, 8, 8);
            let j = JonesField::from_components(r, l).unwrap();
            let total = intensity(&j);
            let ir = intensity(&project(&j, JonesVector::R).unwrap());
            let il = intensity(&project(&j, JonesVector::L).unwrap());
            for ((t, a), b) in total.values().iter().zip(ir.values()).zip(il.values()) {
                prop_assert!((t - a - b).abs() <= 1e-12 * t.max(1e-300));
            }
        }
    }
}
