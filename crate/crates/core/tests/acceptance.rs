//! Acceptance criteria, one line per criterion. Exits nonzero if any fail.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use talbot_core::analysis::{
    background_subtract, beam_width, chirality_metric, estimate_lattice_spacing, estimate_shift, gaussian_filter,
    lattice_sites, ncc, snr, FilterSigma, RegionMask,
};
use talbot_core::propagation::{gaussian_beam_radius, rayleigh_range};
use talbot_core::spinorbit::{phase_winding, trotter_error, trotter_error_within};
use talbot_core::{
    apply_lov_sequence, fraunhofer_distance, gaussian_envelope, intensity, lattice_intensity_closed_form, make_grid,
    project, propagate, strip_phase, talbot_length, Grid2D, IntensityImage, JonesField, JonesVector, LovParams,
    PropagationPlan, ScalarField,
};

type Outcome = Result<(bool, String), String>;

struct Criterion {
    id: &'static str,
    title: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// `<L|` projection of the N-pair gradient state with the given envelope.
fn lov_l_field(envelope: &ScalarField, a: f64, pairs: usize) -> Result<ScalarField, String> {
    let params = LovParams::new(a, pairs).map_err(err)?;
    let lov = apply_lov_sequence(&JonesField::from_scalar(envelope, JonesVector::R), &params);
    project(&lov, JonesVector::L).map_err(err)
}

fn unit_envelope(grid: Grid2D, wavelength: f64) -> Result<ScalarField, String> {
    ScalarField::constant(grid, wavelength, Complex64::new(1.0, 0.0)).map_err(err)
}

/// Circular roll by whole samples: `out(i, j) = img(i - si, j - sj)`.
fn roll(img: &IntensityImage, si: isize, sj: isize) -> IntensityImage {
    let (nx, ny) = img.grid().shape();
    let v = img.values();
    let out = Array2::from_shape_fn((nx, ny), |(i, j)| {
        v[[(i as isize - si).rem_euclid(nx as isize) as usize, (j as isize - sj).rem_euclid(ny as isize) as usize]]
    });
    IntensityImage::new(*img.grid(), out).unwrap()
}

fn ac1_closed_form() -> Outcome {
    const N: usize = 512;
    const A_PX: f64 = 32.0;
    const TOL: f64 = 1e-12;
    let dx = 1e-6;
    let g = make_grid(N, N, N as f64 * dx, N as f64 * dx).map_err(err)?;
    let env = unit_envelope(g, 800e-9)?;
    let a = A_PX * dx;
    let pipeline = intensity(&lov_l_field(&env, a, 2)?);
    let closed = lattice_intensity_closed_form(&g, &LovParams::new(a, 2).map_err(err)?, &env).map_err(err)?;
    let peak = closed.max();
    let dev = pipeline
        .values()
        .iter()
        .zip(closed.values())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
        / peak;
    Ok((dev < TOL, format!("max relative deviation {dev:.2e} (< {TOL:e})")))
}

fn ac2_self_imaging() -> Outcome {
    const N: usize = 512;
    const A_PX: usize = 16;
    const PAD: usize = 2;
    const MIN_NCC: f64 = 0.99;
    let (dx, lambda) = (2e-6, 800e-9);
    let a = A_PX as f64 * dx;
    let g = make_grid(N, N, N as f64 * dx, N as f64 * dx).map_err(err)?;
    let field = lov_l_field(&unit_envelope(g, lambda)?, a, 2)?;
    let plan = PropagationPlan::with_options(g, lambda, PAD, true).map_err(err)?;
    let zt = talbot_length(a, lambda).map_err(err)?;
    let i0 = intensity(&field);
    let it = intensity(&propagate(&field, zt, &plan).map_err(err)?);
    let ih = intensity(&propagate(&field, 0.5 * zt, &plan).map_err(err)?);
    let window = RegionMask::central(&g, 0.5).map_err(err)?;
    let full = ncc(&i0, &it, &window).map_err(err)?;
    let half = (A_PX / 2) as isize;
    let shifted = ncc(&roll(&i0, half, half), &ih, &window).map_err(err)?;
    Ok((
        full >= MIN_NCC && shifted >= MIN_NCC,
        format!("{}x{} periods; NCC(I0, I(zT)) = {full:.5}, NCC(shifted I0, I(zT/2)) = {shifted:.5} (>= {MIN_NCC})", N / A_PX, N / A_PX),
    ))
}

fn ac3_distances() -> Outcome {
    let zt = talbot_length(2.547e-3, 810.8e-9).map_err(err)?;
    let zf = fraunhofer_distance(4.1e-3, 810.8e-9).map_err(err)?;
    let ok = (zt - 16.0).abs() <= 0.1 && (zf - 166.0).abs() <= 1.0;
    Ok((ok, format!("z_T = {zt:.3} m (16.0 +- 0.1), z_F = {zf:.2} m (166 +- 1)")))
}

fn ac4_gaussian_beam() -> Outcome {
    const N: usize = 512;
    let (dx, lambda) = (5e-6, 800e-9);
    let w0 = 24.0 * dx;
    let g = Grid2D::new(N, N, dx, dx).map_err(err)?;
    let f = gaussian_envelope(&g, w0, lambda).map_err(err)?;
    let plan = PropagationPlan::new(g, lambda).map_err(err)?;
    let zr = rayleigh_range(w0, lambda);
    let mut parts = Vec::new();
    let mut ok = true;
    for (mult, tol) in [(1.0, 0.005), (2.0, 0.01)] {
        let z = mult * zr;
        let (wx, wy) = beam_width(&intensity(&propagate(&f, z, &plan).map_err(err)?)).map_err(err)?;
        let expect = gaussian_beam_radius(w0, lambda, z);
        let rel = (0.5 * (wx + wy) / expect - 1.0).abs();
        ok &= rel < tol;
        parts.push(format!("{mult}z_R: w = {:.4} um, rel err {rel:.2e} (< {tol})", 0.5 * (wx + wy) * 1e6));
    }
    Ok((ok, parts.join(", ")))
}

/// Direct double sum of the Fresnel integral written out with four loops.
fn naive_fresnel(field: &ScalarField, z: f64, out_range: std::ops::Range<usize>) -> Array2<Complex64> {
    let g = field.grid();
    let lambda = field.wavelength();
    let k = 2.0 * PI / lambda;
    let cycles = z / lambda;
    let pref = Complex64::from_polar(1.0, 2.0 * PI * (cycles - cycles.floor())) / Complex64::new(0.0, lambda * z)
        * g.dx()
        * g.dy();
    let m = out_range.len();
    let mut out = Array2::zeros((m, m));
    for (oi, i) in out_range.clone().enumerate() {
        for (oj, j) in out_range.clone().enumerate() {
            let (x, y) = g.coord(i, j);
            let mut acc = Complex64::new(0.0, 0.0);
            for p in 0..g.nx() {
                for q in 0..g.ny() {
                    let (xp, yp) = g.coord(p, q);
                    let r2 = (x - xp).powi(2) + (y - yp).powi(2);
                    acc += field.amplitudes()[[p, q]] * Complex64::from_polar(1.0, k * r2 / (2.0 * z));
                }
            }
            out[[oi, oj]] = pref * acc;
        }
    }
    out
}

fn ac5_quadrature() -> Outcome {
    const N: usize = 64;
    const TOL: f64 = 1e-6;
    let (dx, lambda) = (4e-6, 800e-9);
    let a = 20.0 * dx;
    let g = make_grid(N, N, N as f64 * dx, N as f64 * dx).map_err(err)?;
    let field = lov_l_field(&gaussian_envelope(&g, 7.0 * dx, lambda).map_err(err)?, a, 2)?;
    let plan = PropagationPlan::with_options(g, lambda, 8, true).map_err(err)?;
    let zt = talbot_length(a, lambda).map_err(err)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, z) in [("z_T/8", zt / 8.0), ("z_T/2", zt / 2.0)] {
        let spectral = propagate(&field, z, &plan).map_err(err)?;
        let range = N / 4..3 * N / 4;
        let reference = naive_fresnel(&field, z, range.clone());
        let peak = reference.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for (oi, i) in range.clone().enumerate() {
            for (oj, j) in range.clone().enumerate() {
                worst = worst.max((spectral.amplitudes()[[i, j]] - reference[[oi, oj]]).norm());
            }
        }
        let rel = worst / peak;
        ok &= rel < TOL;
        parts.push(format!("{label}: {rel:.2e}"));
    }
    Ok((ok, format!("max relative deviation {} (< {TOL:e})", parts.join(", "))))
}

fn ac6_winding() -> Outcome {
    const N: usize = 256;
    let dx = 1e-6;
    let a = 32.0 * dx;
    let g = make_grid(N, N, N as f64 * dx, N as f64 * dx).map_err(err)?;
    let env = gaussian_envelope(&g, 3.0 * a, 800e-9).map_err(err)?;
    let l = lov_l_field(&env, a, 2)?;
    let radius = a / 8.0;
    let sites = lattice_sites(&g, a, (0.0, 0.0), radius, 2.0 * dx);
    let mut windings = Vec::with_capacity(sites.len());
    for &s in &sites {
        windings.push(phase_winding(&l, s, radius).map_err(err)?);
    }
    let sign = windings[0].signum();
    let ok = windings.iter().all(|&w| w.abs() == 1 && w.signum() == sign);
    Ok((ok, format!("{} interior sites, winding {} at all: {ok}", sites.len(), windings[0])))
}

fn ac7_chirality() -> Outcome {
    const N: usize = 512;
    const A_PX: f64 = 16.0;
    const CONTROL_FRACTION: f64 = 0.1;
    let (dx, lambda) = (2e-6, 800e-9);
    let a = A_PX * dx;
    let g = make_grid(N, N, N as f64 * dx, N as f64 * dx).map_err(err)?;
    let oam = lov_l_field(&unit_envelope(g, lambda)?, a, 2)?;
    let control = strip_phase(&oam);
    let plan = PropagationPlan::new(g, lambda).map_err(err)?;
    let zt = talbot_length(a, lambda).map_err(err)?;
    let radius = 0.5 * a;
    let inner = make_grid(N / 2, N / 2, 0.5 * N as f64 * dx, 0.5 * N as f64 * dx).map_err(err)?;
    let sites = lattice_sites(&inner, a, (0.0, 0.0), radius, 0.0);
    let metric = |f: &ScalarField, z: f64| -> Result<f64, String> {
        chirality_metric(&intensity(&propagate(f, z, &plan).map_err(err)?), &sites, radius).map_err(err)
    };
    let (m1, m7) = (metric(&oam, zt / 8.0)?, metric(&oam, 7.0 * zt / 8.0)?);
    let (c1, c7) = (metric(&control, zt / 8.0)?, metric(&control, 7.0 * zt / 8.0)?);
    let scale = m1.abs().min(m7.abs());
    let ok = m1 * m7 < 0.0 && c1.abs() < CONTROL_FRACTION * scale && c7.abs() < CONTROL_FRACTION * scale;
    Ok((ok, format!("OAM: {m1:+.4e} at z_T/8, {m7:+.4e} at 7z_T/8; control: {c1:+.2e}, {c7:+.2e}")))
}

fn ac8_estimators() -> Outcome {
    const SPACING_TOL: f64 = 0.02;
    let (a, lambda) = (0.577e-3, 810.8e-9);
    let dx = a / 24.0;
    let n = 384;
    let g = make_grid(n, n, n as f64 * dx, n as f64 * dx).map_err(err)?;
    let field = lov_l_field(&gaussian_envelope(&g, 3.0 * a, lambda).map_err(err)?, a, 2)?;
    let plan = PropagationPlan::new(g, lambda).map_err(err)?;
    let zt = talbot_length(a, lambda).map_err(err)?;
    let i0 = intensity(&field);
    let ih = intensity(&propagate(&field, 0.5 * zt, &plan).map_err(err)?);
    let est = estimate_lattice_spacing(&i0).map_err(err)?;
    let rel = est.a_hat / a - 1.0;
    let (sx, sy) = estimate_shift(&i0, &ih).map_err(err)?;
    let (ex, ey) = ((sx.abs() - 0.5 * a) / dx, (sy.abs() - 0.5 * a) / dx);
    let ok = rel.abs() < SPACING_TOL && ex.abs() <= 1.0 && ey.abs() <= 1.0;
    Ok((
        ok,
        format!(
            "a_hat = {:.4} mm ({:+.2}%), shift = ({:.4}, {:.4}) mm vs a/2 = {:.4} mm (off by {ex:+.2}, {ey:+.2} px)",
            est.a_hat * 1e3,
            rel * 100.0,
            sx * 1e3,
            sy * 1e3,
            0.5 * a * 1e3
        ),
    ))
}

fn ac9_snr() -> Outcome {
    const MU: f64 = 50.0;
    const SIGMA: f64 = 5.0;
    const LEVEL: f64 = 30.0;
    let n = 256;
    let g = make_grid(n, n, n as f64 * 1e-5, n as f64 * 1e-5).map_err(err)?;
    let signal = RegionMask::central(&g, 0.5).map_err(err)?;
    let background = RegionMask::border_frame(&g, 0.05).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, SIGMA).map_err(err)?;
    let mut values = Array2::zeros(g.shape());
    for ((i, j), v) in values.indexed_iter_mut() {
        *v = if signal.mask()[[i, j]] { MU } else { LEVEL + noise.sample(&mut rng) };
    }
    let frame = IntensityImage::new(g, values).map_err(err)?;
    let raw = snr(&frame, &signal, &background).map_err(err)?;
    let dark = IntensityImage::from_fn(g, |_, _| LEVEL).map_err(err)?;
    let post_img = gaussian_filter(&background_subtract(&frame, &dark).map_err(err)?, FilterSigma::Adaptive).map_err(err)?;
    let post = snr(&post_img, &signal, &background).map_err(err)?;
    let rel = raw / (MU / SIGMA) - 1.0;
    Ok((rel.abs() < 0.05 && post > raw, format!("snr_raw = {raw:.3} ({:+.2}% vs mu/sigma), snr_post = {post:.3}", rel * 100.0)))
}

fn ac10_trotter() -> Outcome {
    const PAIRS: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];
    let d = 1.0;
    let g = make_grid(128, 128, 2.5 * d, 2.5 * d).map_err(err)?;
    let env = unit_envelope(g, 800e-9)?;
    let mut full = Vec::new();
    for &n in &PAIRS {
        full.push(trotter_error(&g, d, n, &env).map_err(err)?);
    }
    let core1 = trotter_error_within(&g, d, 1, &env, d / 4.0).map_err(err)?;
    let core64 = trotter_error_within(&g, d, 64, &env, d / 4.0).map_err(err)?;
    let monotone = full.windows(2).all(|w| w[1] <= w[0]);
    let ratio = core1 / core64;
    Ok((
        monotone && ratio >= 10.0,
        format!("errors (r<=d) {:?}; r<=d/4: N=1 {core1:.3e}, N=64 {core64:.3e}, ratio {ratio:.1}", full.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()),
    ))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: "AC1", title: "closed-form lattice equality", budget: Some(Duration::from_secs(5)), run: ac1_closed_form },
        Criterion { id: "AC2", title: "Talbot self-imaging", budget: Some(Duration::from_secs(30)), run: ac2_self_imaging },
        Criterion { id: "AC3", title: "characteristic distances", budget: None, run: ac3_distances },
        Criterion { id: "AC4", title: "Gaussian beam radius", budget: None, run: ac4_gaussian_beam },
        Criterion { id: "AC5", title: "spectral vs direct quadrature", budget: Some(Duration::from_secs(60)), run: ac5_quadrature },
        Criterion { id: "AC6", title: "OAM phase winding", budget: None, run: ac6_winding },
        Criterion { id: "AC7", title: "chirality asymmetry", budget: None, run: ac7_chirality },
        Criterion { id: "AC8", title: "spacing and shift estimators", budget: None, run: ac8_estimators },
        Criterion { id: "AC9", title: "SNR estimator", budget: None, run: ac9_snr },
        Criterion { id: "AC10", title: "product-formula convergence", budget: None, run: ac10_trotter },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match outcome {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(budget) = c.budget {
            if elapsed > budget {
                passed = false;
                detail.push_str(&format!("; runtime {:.2} s exceeds {} s", elapsed.as_secs_f64(), budget.as_secs()));
            }
        }
        if !passed {
            failures += 1;
        }
        println!(
            "[{}] {} {}: {} ({:.2} s)",
            if passed { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
