use ndarray::{Array2, Axis as NdAxis, Zip};

use crate::error::{invalid, Result};
use crate::grid_field::IntensityImage;
use crate::numeric::median;

/// Pointwise `max(image − background, 0)`.
pub fn background_subtract(image: &IntensityImage, background: &IntensityImage) -> Result<IntensityImage> {
    image.grid().ensure_same(background.grid(), "background subtraction")?;
    let mut out = image.values().clone();
    Zip::from(&mut out)
        .and(background.values())
        .par_for_each(|v, b| *v = (*v - b).max(0.0));
    Ok(IntensityImage::from_parts(*image.grid(), out))
}

/// Gaussian filter width: fixed in pixels, or chosen from the image noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterSigma {
    Fixed(f64),
    Adaptive,
}

impl std::str::FromStr for FilterSigma {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("adaptive") {
            return Ok(FilterSigma::Adaptive);
        }
        s.parse::<f64>()
            .map(FilterSigma::Fixed)
            .map_err(|_| crate::Error::InvalidArgument(format!("filter sigma must be a number or 'adaptive', got {s:?}")))
    }
}

/// Relative noise level -> σ in pixels. Linear between entries, clamped
/// to the end values.
const ADAPTIVE_TABLE: [(f64, f64); 5] = [(0.0, 0.5), (0.01, 0.75), (0.03, 1.25), (0.1, 2.5), (0.3, 4.0)];
pub const ADAPTIVE_SIGMA_MIN: f64 = 0.5;
pub const ADAPTIVE_SIGMA_MAX: f64 = 4.0;

/// Robust per-pixel noise estimate from the median absolute deviation of
/// horizontal neighbour differences.
pub fn estimate_noise(image: &IntensityImage) -> f64 {
    let v = image.values();
    let (nx, ny) = v.dim();
    let mut diffs = Vec::with_capacity((nx - 1) * ny);
    for i in 0..nx - 1 {
        for j in 0..ny {
            diffs.push(v[[i + 1, j]] - v[[i, j]]);
        }
    }
    let m = median(&diffs);
    let dev: Vec<f64> = diffs.iter().map(|d| (d - m).abs()).collect();
    // 1.4826 turns a MAD into σ for Gaussian noise; differences carry √2 σ.
    1.4826 * median(&dev) / std::f64::consts::SQRT_2
}

/// σ (pixels) picked by the adaptive mode for this image.
pub fn adaptive_sigma(image: &IntensityImage) -> f64 {
    let values: Vec<f64> = image.values().iter().copied().collect();
    let span = image.max() - median(&values);
    let rho = if span > 0.0 { estimate_noise(image) / span } else { 0.0 };
    let t = &ADAPTIVE_TABLE;
    let sigma = if rho <= t[0].0 {
        t[0].1
    } else if rho >= t[t.len() - 1].0 {
        t[t.len() - 1].1
    } else {
        let k = t.windows(2).position(|w| rho < w[1].0).unwrap_or(t.len() - 2);
        let ((x0, y0), (x1, y1)) = (t[k], t[k + 1]);
        y0 + (y1 - y0) * (rho - x0) / (x1 - x0)
    };
    sigma.clamp(ADAPTIVE_SIGMA_MIN, ADAPTIVE_SIGMA_MAX)
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(4σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil().max(1.0) as isize;
    let taps: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Symmetric reflection of an index into `0..n` (`d c b a | a b c d`).
fn reflect(mut k: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    k = k.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

fn convolve_axis(data: &Array2<f64>, kernel: &[f64], axis: usize) -> Array2<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = Array2::zeros(data.dim());
    let n = data.len_of(NdAxis(axis));
    Zip::from(out.lanes_mut(NdAxis(axis)))
        .and(data.lanes(NdAxis(axis)))
        .par_for_each(|mut o, src| {
            for p in 0..n {
                let mut acc = 0.0;
                for (t, w) in kernel.iter().enumerate() {
                    acc += w * src[reflect(p as isize + t as isize - r, n)];
                }
                o[p] = acc;
            }
        });
    out
}

/// Separable Gaussian blur with reflective boundaries.
pub fn gaussian_filter(image: &IntensityImage, sigma: FilterSigma) -> Result<IntensityImage> {
    let s = match sigma {
        FilterSigma::Fixed(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("filter sigma must be positive, got {s}"));
            }
            s
        }
        FilterSigma::Adaptive => adaptive_sigma(image),
    };
    let kernel = gaussian_kernel(s);
    let once = convolve_axis(image.values(), &kernel, 0);
    let twice = convolve_axis(&once, &kernel, 1);
    Ok(IntensityImage::from_parts(*image.grid(), twice.mapv(|v| v.max(0.0))))
}

/// Blur of an arbitrary real array (may be negative), same kernel rules.
pub(crate) fn blur_array(data: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let kernel = gaussian_kernel(sigma);
    convolve_axis(&convolve_axis(data, &kernel, 0), &kernel, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_field::make_grid;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> IntensityImage {
        let g = make_grid(nx, ny, nx as f64, ny as f64).unwrap();
        IntensityImage::new(g, Array2::from_shape_fn((nx, ny), |(i, j)| f(i, j))).unwrap()
    }

    #[test]
    fn background_subtraction_clamps() {
        let a = img(4, 4, |i, j| (i + j) as f64);
        assert!(background_subtract(&a, &a).unwrap().values().iter().all(|&v| v == 0.0));
        let zero = img(4, 4, |_, _| 0.0);
        assert_eq!(background_subtract(&a, &zero).unwrap(), a);
        let b = img(4, 4, |_, _| 2.0);
        let d = background_subtract(&a, &b).unwrap();
        assert_eq!(d.values()[[0, 0]], 0.0);
        assert_eq!(d.values()[[3, 3]], 4.0);
        let other = img(4, 5, |_, _| 0.0);
        assert!(background_subtract(&a, &other).is_err());
    }

    #[test]
    fn constant_image_is_unchanged() {
        let a = img(20, 13, |_, _| 3.25);
        let f = gaussian_filter(&a, FilterSigma::Fixed(2.5)).unwrap();
        assert!(f.values().iter().all(|v| (v - 3.25).abs() < 1e-12));
    }

    #[test]
    fn impulse_response_peak() {
        let a = img(41, 41, |i, j| if i == 20 && j == 20 { 1.0 } else { 0.0 });
        let f = gaussian_filter(&a, FilterSigma::Fixed(2.0)).unwrap();
        let peak = f.values()[[20, 20]];
        // the 4σ truncation renormalizes the taps by about 3e-5
        assert!((peak - 1.0 / (2.0 * std::f64::consts::PI * 4.0)).abs() < 1e-5, "{peak}");
        assert!((f.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let a = img(16, 16, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let f = gaussian_filter(&a, FilterSigma::Fixed(0.05)).unwrap();
        for (x, y) in f.values().iter().zip(a.values()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_non_positive_sigma() {
        let a = img(4, 4, |_, _| 1.0);
        assert!(gaussian_filter(&a, FilterSigma::Fixed(0.0)).is_err());
        assert!(gaussian_filter(&a, FilterSigma::Fixed(-1.0)).is_err());
        assert!("bogus".parse::<FilterSigma>().is_err());
        assert_eq!("Adaptive".parse::<FilterSigma>().unwrap(), FilterSigma::Adaptive);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(9, 4), 1);
    }

    #[test]
    fn adaptive_sigma_grows_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clean = img(64, 64, |i, j| 100.0 * (1.0 + ((i as f64) / 5.0).sin() * ((j as f64) / 5.0).cos()));
        let noisy = img(64, 64, |i, j| clean.values()[[i, j]] + 30.0 * rng.random::<f64>());
        let (s_clean, s_noisy) = (adaptive_sigma(&clean), adaptive_sigma(&noisy));
        assert!(s_clean < s_noisy, "{s_clean} {s_noisy}");
        assert!((ADAPTIVE_SIGMA_MIN..=ADAPTIVE_SIGMA_MAX).contains(&s_noisy));
        let flat = img(8, 8, |_, _| 1.0);
        assert_eq!(adaptive_sigma(&flat), ADAPTIVE_SIGMA_MIN);
    }

    #[test]
    fn interior_brightness_is_conserved() {
        let a = img(64, 64, |i, j| if (28..36).contains(&i) && (20..30).contains(&j) { 5.0 } else { 0.0 });
        let f = gaussian_filter(&a, FilterSigma::Fixed(3.0)).unwrap();
        assert!((f.total() / a.total() - 1.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn filter_commutes_with_transpose(seed in 0u64..500, sigma in 0.3f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = img(23, 17, |_, _| rng.random::<f64>());
            let lhs = gaussian_filter(&a.transposed(), FilterSigma::Fixed(sigma)).unwrap();
            let rhs = gaussian_filter(&a, FilterSigma::Fixed(sigma)).unwrap().transposed();
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
