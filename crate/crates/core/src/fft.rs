//! Two-dimensional complex FFT over `[[i, j]]` arrays built from rustfft
//! row transforms.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Reusable forward/inverse plans for one array shape.
#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("nx", &self.nx).field("ny", &self.ny).finish()
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.fwd_x, &self.fwd_y);
    }

    /// Inverse transform scaled by `1/(nx·ny)`, in place.
    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.inv_x, &self.inv_y);
        let s = 1.0 / (self.nx * self.ny) as f64;
        data.par_mapv_inplace(|c| c * s);
    }

    fn run(&self, data: &mut Array2<Complex64>, fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.dim(), (self.nx, self.ny), "FFT plan shape mismatch");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        rows(data.as_slice_mut().unwrap(), self.ny, fy);
        // Columns: transpose into a (ny, nx) buffer, transform rows, copy back.
        let mut t = Array2::<Complex64>::zeros((self.ny, self.nx));
        t.assign(&data.t());
        rows(t.as_slice_mut().unwrap(), self.nx, fx);
        data.assign(&t.t());
    }
}

fn rows(buf: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    let rows_per_task = (16384 / len.max(1)).max(1);
    buf.par_chunks_mut(len * rows_per_task).for_each(|chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// Sample frequencies in FFT order for `n` samples at pitch `d`
/// (`0, 1, …, n/2−1, −n/2, …, −1` over `n·d`, matching numpy's `fftfreq`).
pub fn fft_frequencies(n: usize, d: f64) -> Vec<f64> {
    let span = n as f64 * d;
    (0..n)
        .map(|k| {
            let m = if k < n.div_ceil(2) { k as isize } else { k as isize - n as isize };
            m as f64 / span
        })
        .collect()
}
