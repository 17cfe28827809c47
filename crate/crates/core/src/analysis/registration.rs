use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fft::{fft_frequencies, Fft2};
use crate::grid_field::{resize_array, IntensityImage};
use crate::numeric::{compensated_sum, median, parabolic_offset};

use super::filter::blur_array;

/// Minimum normalized correlation accepted by [`estimate_shift`].
pub const REGISTRATION_THRESHOLD: f64 = 0.2;

/// Result of a cross-correlation registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    /// Translation mapping the first image onto the second, meters.
    pub dx: f64,
    pub dy: f64,
    /// Normalized correlation at the integer peak.
    pub peak: f64,
}

fn zero_mean_complex(values: &Array2<f64>) -> (Array2<Complex64>, f64) {
    let mean = compensated_sum(values.iter().copied()) / values.len() as f64;
    let c = values.mapv(|v| Complex64::new(v - mean, 0.0));
    let energy = compensated_sum(c.iter().map(|z| z.norm_sqr()));
    (c, energy)
}

fn signed(k: usize, n: usize) -> isize {
    if k > n / 2 {
        k as isize - n as isize
    } else {
        k as isize
    }
}

/// Circular normalized cross-correlation `Σ a(p)·b(p+s) / (‖a‖‖b‖)` of the
/// zero-mean images, with a 3-point parabolic refinement per axis.
pub fn register(a: &IntensityImage, b: &IntensityImage) -> Result<Registration> {
    a.grid().ensure_same(b.grid(), "registration")?;
    let g = a.grid();
    let (nx, ny) = g.shape();
    let (mut fa, ea) = zero_mean_complex(a.values());
    let (mut fb, eb) = zero_mean_complex(b.values());
    if !(ea > 0.0 && eb > 0.0) {
        return Err(Error::NoRegistration { peak: 0.0, threshold: REGISTRATION_THRESHOLD });
    }
    let fft = Fft2::new(nx, ny);
    fft.forward(&mut fa);
    fft.forward(&mut fb);
    Zip::from(&mut fb).and(&fa).par_for_each(|pb, pa| *pb *= pa.conj());
    fft.inverse(&mut fb);
    let norm = (ea * eb).sqrt();
    let c = fb.mapv(|z| z.re / norm);

    let (mut bi, mut bj, mut best) = (0, 0, f64::NEG_INFINITY);
    for ((i, j), &v) in c.indexed_iter() {
        if v > best {
            best = v;
            bi = i;
            bj = j;
        }
    }
    if !(best >= REGISTRATION_THRESHOLD) {
        return Err(Error::NoRegistration { peak: best, threshold: REGISTRATION_THRESHOLD });
    }
    let at = |i: isize, j: isize| c[[i.rem_euclid(nx as isize) as usize, j.rem_euclid(ny as isize) as usize]];
    let (pi, pj) = (bi as isize, bj as isize);
    let oi = parabolic_offset(at(pi - 1, pj), best, at(pi + 1, pj));
    let oj = parabolic_offset(at(pi, pj - 1), best, at(pi, pj + 1));
    Ok(Registration {
        dx: (signed(bi, nx) as f64 + oi) * g.dx(),
        dy: (signed(bj, ny) as f64 + oj) * g.dy(),
        peak: best,
    })
}

/// Translation `(dx, dy)` in meters mapping `a` onto `b`.
pub fn estimate_shift(a: &IntensityImage, b: &IntensityImage) -> Result<(f64, f64)> {
    register(a, b).map(|r| (r.dx, r.dy))
}

/// Translate an image by `(sx, sy)` pixels with a Fourier phase ramp
/// (circular). Negative lobes of the band-limited result are clamped.
pub fn spectral_shift(image: &IntensityImage, sx: f64, sy: f64) -> Result<IntensityImage> {
    if !(sx.is_finite() && sy.is_finite()) {
        return invalid("shift must be finite");
    }
    let (nx, ny) = image.grid().shape();
    let fft = Fft2::new(nx, ny);
    let mut data = image.values().mapv(|v| Complex64::new(v, 0.0));
    fft.forward(&mut data);
    let fx = fft_frequencies(nx, 1.0);
    let fy = fft_frequencies(ny, 1.0);
    Zip::indexed(&mut data).par_for_each(|(i, j), z| {
        let phase = -2.0 * std::f64::consts::PI * (fx[i] * sx + fy[j] * sy);
        *z *= Complex64::from_polar(1.0, phase);
    });
    fft.inverse(&mut data);
    Ok(IntensityImage::from_parts(*image.grid(), data.mapv(|z| z.re.max(0.0))))
}

/// How a [`SpacingEstimate`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpacingMethod {
    /// Autocorrelation of the envelope-normalized lattice modulation.
    Autocorrelation,
}

impl std::fmt::Display for SpacingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("autocorrelation")
    }
}

/// Lattice period estimate in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingEstimate {
    pub a_hat: f64,
    pub uncertainty: f64,
    pub method: SpacingMethod,
}

/// Linear (zero-padded) autocorrelation normalized to 1 at zero lag,
/// optionally of the zero-mean image.
fn autocorrelation(values: &Array2<f64>, centered: bool) -> Array2<f64> {
    let (nx, ny) = values.dim();
    let (px, py) = (2 * nx, 2 * ny);
    let input = if centered {
        zero_mean_complex(values).0
    } else {
        values.mapv(|v| Complex64::new(v, 0.0))
    };
    let mut data = resize_array(&input, px, py);
    let fft = Fft2::new(px, py);
    fft.forward(&mut data);
    data.par_mapv_inplace(|z| Complex64::new(z.norm_sqr(), 0.0));
    fft.inverse(&mut data);
    let zero = data[[0, 0]].re;
    let scale = if zero > 0.0 { 1.0 / zero } else { 0.0 };
    data.mapv(|z| z.re * scale)
}

/// Lag profiles `A(k, 0)` and `A(0, k)` for `k = 0..n/2`.
fn axis_profiles(ac: &Array2<f64>, nx: usize, ny: usize) -> (Vec<f64>, Vec<f64>) {
    let px: Vec<f64> = (0..=nx / 2).map(|k| ac[[k, 0]]).collect();
    let py: Vec<f64> = (0..=ny / 2).map(|k| ac[[0, k]]).collect();
    (px, py)
}

fn local_maxima(p: &[f64]) -> Vec<usize> {
    (1..p.len().saturating_sub(1)).filter(|&k| p[k] > p[k - 1] && p[k] >= p[k + 1]).collect()
}

/// Height of each local maximum above the higher of the minima separating
/// it from its neighbouring maxima (or the profile ends).
fn prominences(p: &[f64], maxima: &[usize]) -> Vec<f64> {
    maxima
        .iter()
        .enumerate()
        .map(|(n, &k)| {
            let lo = if n == 0 { 0 } else { maxima[n - 1] };
            let hi = maxima.get(n + 1).copied().unwrap_or(p.len() - 1);
            let left = p[lo..=k].iter().copied().fold(f64::INFINITY, f64::min);
            let right = p[k..=hi].iter().copied().fold(f64::INFINITY, f64::min);
            p[k] - left.max(right)
        })
        .collect()
}

/// First local maximum whose prominence reaches half the largest one and
/// whose height clears `3·floor`. Prominence rather than height keeps a
/// broad envelope term from promoting sub-period ripples.
fn first_lattice_peak(p: &[f64], floor: f64) -> Option<usize> {
    let maxima = local_maxima(p);
    let prom = prominences(p, &maxima);
    let dominant = prom.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    maxima
        .iter()
        .zip(&prom)
        .find(|(&k, &pr)| pr >= 0.5 * dominant && p[k] > 3.0 * floor)
        .map(|(&k, _)| k)
}

/// Local maximum of `p` nearest to `guess`, searched within `±guess/4`.
fn peak_near(p: &[f64], guess: f64) -> Option<usize> {
    let lo = ((0.75 * guess).floor() as usize).max(1);
    let hi = ((1.25 * guess).ceil() as usize).min(p.len().saturating_sub(2));
    (lo..=hi)
        .filter(|&k| p[k] > p[k - 1] && p[k] >= p[k + 1])
        .min_by(|&x, &y| (x as f64 - guess).abs().total_cmp(&(y as f64 - guess).abs()))
}

/// Refined peak position (samples) and the disagreement between the
/// parabolic and log-parabolic vertex estimates.
fn refine(p: &[f64], k: usize) -> (f64, f64) {
    let (l, c, r) = (p[k - 1], p[k], p[k + 1]);
    let lin = parabolic_offset(l, c, r);
    let spread = if l > 0.0 && c > 0.0 && r > 0.0 {
        (parabolic_offset(l.ln(), c.ln(), r.ln()) - lin).abs()
    } else {
        0.5
    };
    (k as f64 + lin, spread)
}

fn coarse_periods(ac: &Array2<f64>, nx: usize, ny: usize) -> Result<(usize, usize)> {
    let floor = median(&ac.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let (px, py) = axis_profiles(ac, nx, ny);
    let kx = first_lattice_peak(&px, floor);
    let ky = first_lattice_peak(&py, floor);
    match (kx, ky) {
        (Some(kx), Some(ky)) => Ok((kx, ky)),
        _ => Err(Error::NoLatticeFound(format!(
            "no autocorrelation peak above 3x the floor {floor:.3e} along {}",
            if kx.is_none() { "x" } else { "y" }
        ))),
    }
}

/// Lattice period from the 2D autocorrelation along the grid axes.
///
/// A coarse period is read from the plain autocorrelation. The image is
/// then high-passed at that scale and its autocorrelation divided by the
/// autocorrelation of the local modulation amplitude, which removes the
/// pull of a finite beam envelope toward shorter lags before the
/// sub-sample parabolic fit.
pub fn estimate_lattice_spacing(image: &IntensityImage) -> Result<SpacingEstimate> {
    let g = image.grid();
    let (nx, ny) = g.shape();
    let values = image.values();
    if !(image.max() > 0.0) {
        return Err(Error::NoLatticeFound("image is empty".into()));
    }
    let ac = autocorrelation(values, true);
    let (kx, ky) = coarse_periods(&ac, nx, ny)?;

    let sigma = 0.5 * (kx + ky) as f64;
    let smooth = blur_array(values, sigma);
    let modulation = values - &smooth;
    let amplitude = blur_array(&modulation.mapv(|v| v * v), sigma).mapv(|v| v.max(0.0).sqrt());
    let ac_mod = autocorrelation(&modulation, false);
    let ac_amp = autocorrelation(&amplitude, false);
    let (mx, my) = axis_profiles(&ac_mod, nx, ny);
    let (ax, ay) = axis_profiles(&ac_amp, nx, ny);
    let normalize = |m: &[f64], a: &[f64]| -> Vec<f64> {
        m.iter().zip(a).map(|(m, a)| if *a > 1e-6 { m / a } else { 0.0 }).collect()
    };
    let (nxp, nyp) = (normalize(&mx, &ax), normalize(&my, &ay));

    let pick = |p: &[f64], coarse: usize| -> (f64, f64) {
        match peak_near(p, coarse as f64) {
            Some(k) => refine(p, k),
            None => (coarse as f64, 0.5),
        }
    };
    let (sx, ex) = pick(&nxp, kx);
    let (sy, ey) = pick(&nyp, ky);
    let (ax_m, ay_m) = (sx * g.dx(), sy * g.dy());
    let a_hat = 0.5 * (ax_m + ay_m);
    let fit = 0.5 * (ex * g.dx() + ey * g.dy());
    Ok(SpacingEstimate {
        a_hat,
        uncertainty: 0.5 * (ax_m - ay_m).abs() + fit,
        method: SpacingMethod::Autocorrelation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_field::{gaussian_envelope, make_grid, Grid2D, ScalarField};
    use crate::spinorbit::{lattice_intensity_closed_form, LovParams};
    use proptest::prelude::*;

    fn lattice(n: usize, a_px: f64, w0_over_a: Option<f64>) -> IntensityImage {
        let g = make_grid(n, n, n as f64 * 1e-5, n as f64 * 1e-5).unwrap();
        let a = a_px * 1e-5;
        let env = match w0_over_a {
            Some(w) => gaussian_envelope(&g, w * a, 800e-9).unwrap(),
            None => ScalarField::constant(g, 800e-9, Complex64::new(1.0, 0.0)).unwrap(),
        };
        lattice_intensity_closed_form(&g, &LovParams::new(a, 1).unwrap(), &env).unwrap()
    }

    fn shifted_integer(img: &IntensityImage, si: isize, sj: isize) -> IntensityImage {
        let (nx, ny) = img.grid().shape();
        let v = img.values();
        let out = Array2::from_shape_fn((nx, ny), |(i, j)| {
            v[[
                (i as isize - si).rem_euclid(nx as isize) as usize,
                (j as isize - sj).rem_euclid(ny as isize) as usize,
            ]]
        });
        IntensityImage::new(*img.grid(), out).unwrap()
    }

    fn smooth_blob(n: usize) -> IntensityImage {
        let g = Grid2D::new(n, n, 1e-6, 2e-6).unwrap();
        IntensityImage::from_fn(g, |x, y| {
            let (u, v) = (x / 1e-6, y / 2e-6);
            (-(u - 3.0).powi(2) / 20.0 - (v + 2.0).powi(2) / 12.0).exp() + 0.5 * (-(u + 6.0).powi(2) / 8.0 - (v - 5.0).powi(2) / 30.0).exp()
        })
        .unwrap()
    }

    #[test]
    fn identical_images_register_at_origin() {
        let a = lattice(64, 16.0, Some(1.5));
        let r = register(&a, &a).unwrap();
        assert_eq!((r.dx, r.dy), (0.0, 0.0));
        assert!((r.peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integer_shift_is_exact() {
        let a = smooth_blob(64);
        let b = shifted_integer(&a, 3, -2);
        let (dx, dy) = estimate_shift(&a, &b).unwrap();
        assert!((dx - 3e-6).abs() < 1e-18, "{dx}");
        assert!((dy + 4e-6).abs() < 1e-18, "{dy}");
    }

    #[test]
    fn spectral_shift_integer_matches_roll() {
        let a = smooth_blob(32);
        let b = spectral_shift(&a, 3.0, -2.0).unwrap();
        let c = shifted_integer(&a, 3, -2);
        for (p, q) in b.values().iter().zip(c.values()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_image_fails_registration() {
        let g = make_grid(32, 32, 32.0, 32.0).unwrap();
        let a = IntensityImage::from_fn(g, |x, _| if x < 0.0 { 1.0 } else { 0.0 }).unwrap();
        let flat = IntensityImage::from_fn(g, |_, _| 1.0).unwrap();
        assert!(matches!(register(&a, &flat), Err(Error::NoRegistration { .. })));
    }

    #[test]
    fn spacing_on_enveloped_lattice() {
        for &a_px in &[12.0, 16.0, 24.0] {
            let img = lattice(384, a_px, Some(3.0));
            let est = estimate_lattice_spacing(&img).unwrap();
            let rel = est.a_hat / (a_px * 1e-5) - 1.0;
            assert!(rel.abs() < 0.02, "a={a_px} rel={rel}");
            assert!(est.uncertainty >= 0.0);
        }
    }

    #[test]
    fn spacing_scale_and_transpose_invariant() {
        let img = lattice(256, 16.0, Some(3.0));
        let base = estimate_lattice_spacing(&img).unwrap().a_hat;
        let scaled = estimate_lattice_spacing(&img.scaled(42.0).unwrap()).unwrap().a_hat;
        let trans = estimate_lattice_spacing(&img.transposed()).unwrap().a_hat;
        assert!((scaled - base).abs() < 1e-12 * base);
        assert!((trans - base).abs() < 1e-12 * base);
    }

    #[test]
    fn spacing_without_lattice_fails() {
        let g = make_grid(64, 64, 64.0, 64.0).unwrap();
        let blob = IntensityImage::from_fn(g, |x, y| (-(x * x + y * y) / 50.0).exp()).unwrap();
        assert!(matches!(estimate_lattice_spacing(&blob), Err(Error::NoLatticeFound(_))));
        let zero = IntensityImage::from_fn(g, |_, _| 0.0).unwrap();
        assert!(estimate_lattice_spacing(&zero).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn subpixel_round_trip(sx in -2.0f64..2.0, sy in -2.0f64..2.0) {
            let a = lattice(128, 16.0, Some(2.0));
            let b = spectral_shift(&a, sx, sy).unwrap();
            let (dx, dy) = estimate_shift(&a, &b).unwrap();
            let g = a.grid();
            prop_assert!((dx / g.dx() - sx).abs() < 0.1, "{} vs {}", dx / g.dx(), sx);
            prop_assert!((dy / g.dy() - sy).abs() < 0.1, "{} vs {}", dy / g.dy(), sy);
        }

        #[test]
        fn spacing_within_two_percent(a_px in 12.0f64..40.0) {
            let est = estimate_lattice_spacing(&lattice(256, a_px, None)).unwrap();
            let rel = est.a_hat / (a_px * 1e-5) - 1.0;
            prop_assert!(rel.abs() < 0.02, "a={} rel={}", a_px, rel);
        }
    }
}
