//! Desk-scale invariant suites behind `talbot selftest`.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::{
    background_subtract, beam_width, estimate_lattice_spacing, estimate_shift, gaussian_filter, ncc, snr,
    spectral_shift, FilterSigma, MaskRole, RegionMask,
};
use crate::grid_field::io::{decode_pgm, encode_pgm16};
use crate::grid_field::{
    gaussian_envelope, intensity, make_grid, project, resize_canvas, Grid2D, IntensityImage, JonesField, JonesVector,
    ScalarField,
};
use crate::propagation::{fresnel_quadrature, gaussian_beam_radius, propagate, rayleigh_range, PropagationPlan};
use crate::spinorbit::{
    apply_lov_sequence, lattice_intensity_closed_form, phase_winding, trotter_error_within, LovParams,
};
use crate::Result;

const LAMBDA: f64 = 800e-9;

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Seed for the synthetic-noise generators.
    pub seed: u64,
    /// Negative control: flip the sign of the propagator's quadratic phase.
    pub corrupt_transfer_sign: bool,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checks: Vec<CheckResult>,
    pub elapsed: Duration,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Suite {
    name: &'static str,
    checks: Vec<CheckResult>,
    start: Instant,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self { name, checks: Vec::new(), start: Instant::now() }
    }

    /// Record a check from a `(passed, detail)` computation; errors count
    /// as failures.
    fn check(&mut self, name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) {
        let (passed, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        self.checks.push(CheckResult { name, passed, detail });
    }

    fn finish(self) -> SuiteResult {
        SuiteResult { name: self.name, checks: self.checks, elapsed: self.start.elapsed() }
    }
}

fn unit(grid: Grid2D) -> Result<ScalarField> {
    ScalarField::constant(grid, LAMBDA, Complex64::new(1.0, 0.0))
}

fn max_rel_diff(a: &IntensityImage, b: &IntensityImage) -> f64 {
    let peak = a.max().max(b.max());
    a.values().iter().zip(b.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / peak
}

/// Run every suite. Results come back in a fixed order.
pub fn run_selftest(opts: &SelftestOptions) -> Vec<SuiteResult> {
    vec![grid_field_suite(opts), spinorbit_suite(), propagation_suite(opts), analysis_suite(opts)]
}

fn grid_field_suite(opts: &SelftestOptions) -> SuiteResult {
    let mut s = Suite::new("grid_field");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    s.check("coordinate round trip", || {
        let g = Grid2D::with_center(37, 50, 1.3e-6, 0.7e-6, (2e-6, -5e-6))?;
        let ok = (0..g.nx()).all(|i| (0..g.ny()).all(|j| {
            let (x, y) = g.coord(i, j);
            g.index_of(x, y) == Some((i, j))
        }));
        Ok((ok, format!("{} samples", g.len())))
    });
    s.check("pad then crop is identity", || {
        let g = make_grid(24, 18, 1e-3, 1e-3)?;
        let f = ScalarField::from_fn(g, LAMBDA, |x, y| Complex64::new(x * 1e3, y * 2e3))?;
        let back = resize_canvas(&resize_canvas(&f, 61, 40)?, 24, 18)?;
        Ok((back == f, String::new()))
    });
    s.check("analyzer completeness", || {
        let g = make_grid(16, 16, 1e-3, 1e-3)?;
        let (u, v): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = ScalarField::from_fn(g, LAMBDA, |x, y| Complex64::new(u + x * 1e3, y * 1e3))?;
        let l = ScalarField::from_fn(g, LAMBDA, |x, y| Complex64::new(y * 1e3, v - x * 1e3))?;
        let field = JonesField::from_components(r, l)?;
        let total = intensity(&field);
        let mut worst = 0.0f64;
        for (p, q) in [(JonesVector::R, JonesVector::L), (JonesVector::horizontal(), JonesVector::vertical())] {
            let sum = intensity(&project(&field, p)?).add(&intensity(&project(&field, q)?))?;
            worst = worst.max(max_rel_diff(&sum, &total));
        }
        Ok((worst < 1e-12, format!("max relative deviation {worst:.2e}")))
    });
    s.check("16-bit image round trip", || {
        let g = make_grid(20, 12, 1.0, 1.0)?;
        let img = IntensityImage::from_fn(g, |x, y| 1.0 + (x * 0.7).sin() * (y * 0.4).cos())?;
        let (bytes, scale) = encode_pgm16(img.values());
        let back = decode_pgm(&bytes)?.mapv(|v| v / scale);
        let worst = img.values().iter().zip(back.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        Ok((worst <= 0.5 / scale + 1e-15, format!("max error {worst:.2e}")))
    });
    s.finish()
}

fn spinorbit_suite() -> SuiteResult {
    let mut s = Suite::new("spinorbit");
    s.check("closed form matches operator pipeline", || {
        let g = make_grid(128, 128, 128e-6, 128e-6)?;
        let p = LovParams::new(16e-6, 2)?;
        let env = unit(g)?;
        let lov = apply_lov_sequence(&JonesField::from_scalar(&env, JonesVector::R), &p);
        let a = intensity(&project(&lov, JonesVector::L)?);
        let b = lattice_intensity_closed_form(&g, &p, &env)?;
        let d = max_rel_diff(&a, &b);
        Ok((d < 1e-12, format!("max relative deviation {d:.2e}")))
    });
    s.check("operator is unitary", || {
        let g = make_grid(64, 64, 64e-6, 64e-6)?;
        let env = gaussian_envelope(&g, 20e-6, LAMBDA)?;
        let input = JonesField::from_scalar(&env, JonesVector::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)));
        let out = apply_lov_sequence(&input, &LovParams::new(11e-6, 3)?);
        let rel = (out.power() / input.power() - 1.0).abs();
        Ok((rel < 1e-12, format!("relative power change {rel:.2e}")))
    });
    s.check("unit winding at lattice sites", || {
        let a = 32e-6;
        let g = make_grid(128, 128, 128e-6, 128e-6)?;
        let lov = apply_lov_sequence(&JonesField::from_scalar(&unit(g)?, JonesVector::R), &LovParams::new(a, 2)?);
        let l = project(&lov, JonesVector::L)?;
        let mut windings = Vec::new();
        for (m, n) in [(0.0, 0.0), (1.0, 0.0), (0.0, -1.0), (-1.0, 1.0)] {
            windings.push(phase_winding(&l, (m * a, n * a), 0.125 * a)?);
        }
        Ok((windings.iter().all(|&w| w == 1), format!("{windings:?}")))
    });
    s.check("product formula converges", || {
        let g = make_grid(64, 64, 2.5, 2.5)?;
        let env = unit(g)?;
        let errs: Vec<f64> = [1, 2, 4, 8, 16]
            .iter()
            .map(|&n| trotter_error_within(&g, 1.0, n, &env, 0.25))
            .collect::<Result<_>>()?;
        let ok = errs.windows(2).all(|w| w[1] <= w[0]);
        Ok((ok, format!("{errs:.3?}")))
    });
    s.finish()
}

fn propagation_suite(opts: &SelftestOptions) -> SuiteResult {
    let mut s = Suite::new("propagation");
    let plan_for = |g: Grid2D, pad: usize, band: bool| -> Result<PropagationPlan> {
        let p = PropagationPlan::with_options(g, LAMBDA, pad, band)?;
        Ok(if opts.corrupt_transfer_sign { p.with_corrupted_transfer_sign() } else { p })
    };
    // tilted, defocused beam: asymmetric enough that a conjugated chirp shows
    let probe = |n: usize| -> Result<ScalarField> {
        let g = Grid2D::new(n, n, 1e-5, 1e-5)?;
        ScalarField::from_fn(g, LAMBDA, |x, y| {
            let r2 = x * x + y * y;
            Complex64::from_polar((-r2 / 36e-10).exp(), x / 3e-5 + r2 / 2e-9)
        })
    };
    s.check("unitarity", || {
        let f = probe(64)?;
        let plan = plan_for(*f.grid(), 4, false)?;
        let z = 0.1 * plan.critical_distance();
        let rel = (propagate(&f, z, &plan)?.power() / f.power() - 1.0).abs();
        Ok((rel < 1e-9, format!("relative power change {rel:.2e}")))
    });
    s.check("semigroup", || {
        let f = probe(64)?;
        let plan = plan_for(*f.grid(), 4, false)?;
        let z = 0.05 * plan.critical_distance();
        let two = propagate(&propagate(&f, z, &plan)?, 2.0 * z, &plan)?;
        let one = propagate(&f, 3.0 * z, &plan)?;
        let peak = one.amplitudes().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let d = two.amplitudes().iter().zip(one.amplitudes()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        // both paths wrap identically only up to truncation at the padded edge
        Ok((d < 1e-6 * peak, format!("max deviation {:.2e} of peak", d / peak)))
    });
    s.check("direct quadrature cross-check", || {
        let f = probe(48)?;
        let plan = plan_for(*f.grid(), 4, false)?;
        let z = 48.0 * 1e-10 / LAMBDA * 1.5;
        let a = propagate(&f, z, &plan)?;
        let b = fresnel_quadrature(&f, z)?;
        let peak = b.amplitudes().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for i in 12..36 {
            for j in 12..36 {
                worst = worst.max((a.amplitudes()[[i, j]] - b.amplitudes()[[i, j]]).norm() / peak);
            }
        }
        Ok((worst < 1e-6, format!("max relative deviation {worst:.2e}")))
    });
    s.check("Gaussian beam radius", || {
        let (dx, w0) = (1e-5, 16e-5);
        let g = Grid2D::new(256, 256, dx, dx)?;
        let f = gaussian_envelope(&g, w0, LAMBDA)?;
        let plan = plan_for(g, 2, true)?;
        let zr = rayleigh_range(w0, LAMBDA);
        let (w, _) = beam_width(&intensity(&propagate(&f, zr, &plan)?))?;
        let rel = w / gaussian_beam_radius(w0, LAMBDA, zr) - 1.0;
        Ok((rel.abs() < 5e-3, format!("relative error {rel:.2e}")))
    });
    s.finish()
}

fn analysis_suite(opts: &SelftestOptions) -> SuiteResult {
    let mut s = Suite::new("analysis");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let lattice = |n: usize, a_px: f64, w0_over_a: f64| -> Result<IntensityImage> {
        let g = make_grid(n, n, n as f64 * 1e-5, n as f64 * 1e-5)?;
        let a = a_px * 1e-5;
        lattice_intensity_closed_form(&g, &LovParams::new(a, 2)?, &gaussian_envelope(&g, w0_over_a * a, LAMBDA)?)
    };
    s.check("sub-pixel shift round trip", || {
        let img = lattice(128, 16.0, 2.0)?;
        let mut worst = 0.0f64;
        for _ in 0..8 {
            let (sx, sy): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (dx, dy) = estimate_shift(&img, &spectral_shift(&img, sx, sy)?)?;
            worst = worst.max((dx / 1e-5 - sx).abs()).max((dy / 1e-5 - sy).abs());
        }
        Ok((worst < 0.1, format!("max error {worst:.3} px")))
    });
    s.check("lattice spacing", || {
        let est = estimate_lattice_spacing(&lattice(288, 24.0, 3.0)?)?;
        let rel = est.a_hat / 24e-5 - 1.0;
        Ok((rel.abs() < 0.02, format!("relative error {rel:.2e}")))
    });
    s.check("ncc identity", || {
        let img = lattice(64, 16.0, 1.5)?;
        let v = ncc(&img, &img, &RegionMask::full(img.grid(), MaskRole::Window))?;
        Ok(((v - 1.0).abs() < 1e-12, format!("{v}")))
    });
    s.check("snr of synthetic frame", || {
        let g = make_grid(128, 128, 1.28e-3, 1.28e-3)?;
        let noise = Normal::new(0.0, 5.0).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        let signal = RegionMask::central(&g, 0.5)?;
        let background = RegionMask::border_frame(&g, 0.1)?;
        let mut values = ndarray::Array2::zeros(g.shape());
        for ((i, j), v) in values.indexed_iter_mut() {
            let base: f64 = if signal.mask()[[i, j]] { 50.0 } else { 30.0 };
            *v = (base + noise.sample(&mut rng)).max(0.0);
        }
        let frame = IntensityImage::new(g, values)?;
        let raw = snr(&frame, &signal, &background)?;
        let dark = IntensityImage::from_fn(g, |_, _| 25.0)?;
        let post = gaussian_filter(&background_subtract(&frame, &dark)?, FilterSigma::Adaptive)?;
        let filtered = snr(&post, &signal, &background)?;
        let ok = (raw / 10.0 - 1.0).abs() < 0.05 && filtered > raw;
        Ok((ok, format!("raw {raw:.3}, post-processed {filtered:.3}")))
    });
    s.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let results = run_selftest(&SelftestOptions::default());
        for r in &results {
            for c in &r.checks {
                assert!(c.passed, "{}::{} failed: {}", r.name, c.name, c.detail);
            }
        }
        assert_eq!(results.len(), 4);
    }

    #[test]
    fn corrupted_transfer_sign_is_caught() {
        let results = run_selftest(&SelftestOptions { seed: 3, corrupt_transfer_sign: true });
        let prop = results.iter().find(|r| r.name == "propagation").unwrap();
        assert!(!prop.passed());
        assert!(results.iter().filter(|r| r.name != "propagation").all(|r| r.passed()));
    }
}
