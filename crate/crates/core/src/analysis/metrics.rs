use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid_field::{Grid2D, IntensityImage};
use crate::numeric::{compensated_sum, mean_std};

/// What a mask selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskRole {
    Signal,
    Background,
    Window,
}

/// Boolean selection of image samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    mask: Array2<bool>,
    role: MaskRole,
}

impl RegionMask {
    pub fn new(mask: Array2<bool>, role: MaskRole) -> Result<Self> {
        if !mask.iter().any(|&m| m) {
            return invalid("region mask selects no samples");
        }
        Ok(Self { mask, role })
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn role(&self) -> MaskRole {
        self.role
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Every sample.
    pub fn full(grid: &Grid2D, role: MaskRole) -> Self {
        Self { mask: Array2::from_elem(grid.shape(), true), role }
    }

    /// Border frame whose width is `fraction` of each image dimension
    /// (at least one sample).
    pub fn border_frame(grid: &Grid2D, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 0.5) {
            return invalid(format!("border fraction must lie in (0, 0.5), got {fraction}"));
        }
        let (nx, ny) = grid.shape();
        let bx = ((nx as f64 * fraction).round() as usize).max(1);
        let by = ((ny as f64 * fraction).round() as usize).max(1);
        let mask = Array2::from_shape_fn((nx, ny), |(i, j)| i < bx || i >= nx - bx || j < by || j >= ny - by);
        Self::new(mask, MaskRole::Background)
    }

    /// Samples above `fraction` of the image maximum.
    pub fn above_fraction_of_max(image: &IntensityImage, fraction: f64) -> Result<Self> {
        let t = fraction * image.max();
        Self::new(image.values().mapv(|v| v > t), MaskRole::Signal)
    }

    /// Central block covering the middle `fraction` of each axis.
    pub fn central(grid: &Grid2D, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return invalid(format!("central fraction must lie in (0, 1], got {fraction}"));
        }
        let (nx, ny) = grid.shape();
        let (wx, wy) = ((nx as f64 * fraction).round() as usize, (ny as f64 * fraction).round() as usize);
        let (x0, y0) = ((nx - wx) / 2, (ny - wy) / 2);
        let mask = Array2::from_shape_fn((nx, ny), |(i, j)| (x0..x0 + wx).contains(&i) && (y0..y0 + wy).contains(&j));
        Self::new(mask, MaskRole::Window)
    }

    fn ensure_fits(&self, image: &IntensityImage) -> Result<()> {
        if self.mask.dim() != image.grid().shape() {
            return Err(Error::GridMismatch(format!(
                "mask shape {:?} vs image {:?}",
                self.mask.dim(),
                image.grid().shape()
            )));
        }
        Ok(())
    }

    fn select(&self, image: &IntensityImage) -> Result<Vec<f64>> {
        self.ensure_fits(image)?;
        Ok(image
            .values()
            .iter()
            .zip(self.mask.iter())
            .filter_map(|(v, &m)| m.then_some(*v))
            .collect())
    }
}

/// `mean(signal) / std(background)` with the unbiased estimator.
pub fn snr(image: &IntensityImage, signal: &RegionMask, background: &RegionMask) -> Result<f64> {
    let s = signal.select(image)?;
    let b = background.select(image)?;
    if b.len() < 2 {
        return Err(Error::DegenerateBackground);
    }
    let (mean_signal, _) = mean_std(&s);
    let (_, std_bg) = mean_std(&b);
    if !(std_bg > 0.0) {
        return Err(Error::DegenerateBackground);
    }
    Ok(mean_signal / std_bg)
}

/// Pearson correlation of the windowed samples of two images.
pub fn ncc(a: &IntensityImage, b: &IntensityImage, window: &RegionMask) -> Result<f64> {
    a.grid().ensure_same(b.grid(), "ncc")?;
    let xa = window.select(a)?;
    let xb = window.select(b)?;
    pearson(&xa, &xb)
}

pub(crate) fn pearson(xa: &[f64], xb: &[f64]) -> Result<f64> {
    let n = xa.len() as f64;
    let ma = compensated_sum(xa.iter().copied()) / n;
    let mb = compensated_sum(xb.iter().copied()) / n;
    let cov = compensated_sum(xa.iter().zip(xb).map(|(p, q)| (p - ma) * (q - mb)));
    let va = compensated_sum(xa.iter().map(|p| (p - ma) * (p - ma)));
    let vb = compensated_sum(xb.iter().map(|q| (q - mb) * (q - mb)));
    if !(va > 0.0 && vb > 0.0) {
        return Err(Error::DegenerateWindow("windowed image has zero variance".into()));
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Angular harmonic used by [`chirality_metric`]. The filtered lattice is
/// inversion-symmetric about every site at every distance, so odd
/// harmonics vanish identically; the square-lattice orientation lives in
/// the fourth.
pub const CHIRALITY_ORDER: u32 = 4;

/// `Σ I·e^{i·order·φ}` over samples with `0 < r <= radius` around `center`,
/// divided by `Σ I` over the same samples.
pub fn angular_moment(image: &IntensityImage, center: (f64, f64), radius: f64, order: u32) -> Result<Complex64> {
    let g = image.grid();
    let (ci, cj) = (g.fractional_i(center.0), g.fractional_j(center.1));
    let (ri, rj) = (radius / g.dx(), radius / g.dy());
    if !(radius > 0.0) || ci - ri < 0.0 || cj - rj < 0.0 || ci + ri > (g.nx() - 1) as f64 || cj + rj > (g.ny() - 1) as f64 {
        return invalid(format!("site disk at ({:e}, {:e}) radius {radius:e} leaves the grid", center.0, center.1));
    }
    let (i0, i1) = ((ci - ri).floor().max(0.0) as usize, ((ci + ri).ceil() as usize).min(g.nx() - 1));
    let (j0, j1) = ((cj - rj).floor().max(0.0) as usize, ((cj + rj).ceil() as usize).min(g.ny() - 1));
    let mut re = Vec::new();
    let mut im = Vec::new();
    let mut tot = Vec::new();
    for i in i0..=i1 {
        for j in j0..=j1 {
            let (x, y) = g.coord(i, j);
            let (dx, dy) = (x - center.0, y - center.1);
            let r = dx.hypot(dy);
            if r > radius || r == 0.0 {
                continue;
            }
            let v = image.values()[[i, j]];
            let phi = order as f64 * dy.atan2(dx);
            re.push(v * phi.cos());
            im.push(v * phi.sin());
            tot.push(v);
        }
    }
    let total = compensated_sum(tot);
    if !(total > 0.0) {
        return Err(Error::DegenerateSite { x: center.0, y: center.1 });
    }
    Ok(Complex64::new(compensated_sum(re), compensated_sum(im)) / total)
}

/// Signed lobe orientation about lattice sites, averaged over sites.
/// Positive when the pattern around a site is turned counter-clockwise
/// (x right, y up) from the lattice axes; mirror images flip the sign and
/// azimuthally symmetric rings give zero.
pub fn chirality_metric(image: &IntensityImage, sites: &[(f64, f64)], radius: f64) -> Result<f64> {
    if sites.is_empty() {
        return invalid("chirality metric needs at least one site");
    }
    let mut acc = Vec::with_capacity(sites.len());
    for &s in sites {
        acc.push(angular_moment(image, s, radius, CHIRALITY_ORDER)?.im);
    }
    Ok(compensated_sum(acc) / sites.len() as f64)
}

/// Square-lattice sites `origin + (m·a, n·a)` whose disk of `radius` lies
/// at least `margin` inside the grid.
pub fn lattice_sites(grid: &Grid2D, a: f64, origin: (f64, f64), radius: f64, margin: f64) -> Vec<(f64, f64)> {
    let (x_lo, x_hi) = (grid.x(0) + radius + margin, grid.x(grid.nx() - 1) - radius - margin);
    let (y_lo, y_hi) = (grid.y(0) + radius + margin, grid.y(grid.ny() - 1) - radius - margin);
    let m0 = ((x_lo - origin.0) / a).ceil() as i64;
    let m1 = ((x_hi - origin.0) / a).floor() as i64;
    let n0 = ((y_lo - origin.1) / a).ceil() as i64;
    let n1 = ((y_hi - origin.1) / a).floor() as i64;
    let mut out = Vec::new();
    for m in m0..=m1 {
        for n in n0..=n1 {
            out.push((origin.0 + m as f64 * a, origin.1 + n as f64 * a));
        }
    }
    out
}


/// Second-moment (D4σ) beam widths `(2·σx, 2·σy)` about the intensity
/// centroid. For `exp(−2r²/w²)` both equal `w`.
pub fn beam_width(image: &IntensityImage) -> Result<(f64, f64)> {
    let g = image.grid();
    let total = compensated_sum(image.values().iter().copied());
    if !(total > 0.0) {
        return invalid("beam width of an all-zero image");
    }
    let weighted = |f: &dyn Fn(f64, f64) -> f64| {
        compensated_sum(image.values().indexed_iter().map(|((i, j), v)| {
            let (x, y) = g.coord(i, j);
            v * f(x, y)
        })) / total
    };
    let (mx, my) = (weighted(&|x, _| x), weighted(&|_, y| y));
    let vx = weighted(&|x, _| (x - mx) * (x - mx));
    let vy = weighted(&|_, y| (y - my) * (y - my));
    Ok((2.0 * vx.sqrt(), 2.0 * vy.sqrt()))
}
