use crate::error::{invalid, Error, Result};

/// Uniform transverse sampling lattice.
///
/// Sample `(i, j)` sits at `x = (i - nx/2)·dx + cx`, `y = (j - ny/2)·dy + cy`
/// with integer division, so even sample counts place the grid center on
/// sample `(nx/2, ny/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    center: (f64, f64),
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        Self::with_center(nx, ny, dx, dy, (0.0, 0.0))
    }

    pub fn with_center(nx: usize, ny: usize, dx: f64, dy: f64, center: (f64, f64)) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return invalid(format!("grid needs at least 2x2 samples, got {nx}x{ny}"));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return invalid(format!("sample pitch must be positive and finite, got ({dx}, {dy})"));
        }
        if !(center.0.is_finite() && center.1.is_finite()) {
            return invalid("grid center must be finite");
        }
        Ok(Self { nx, ny, dx, dy, center })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extent_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn extent_y(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.nx / 2) as f64) * self.dx + self.center.0
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.ny / 2) as f64) * self.dy + self.center.1
    }

    /// Physical coordinate of sample `(i, j)`.
    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x(i), self.y(j))
    }

    /// Fractional sample index of a physical x coordinate.
    #[inline]
    pub fn fractional_i(&self, x: f64) -> f64 {
        (x - self.center.0) / self.dx + (self.nx / 2) as f64
    }

    #[inline]
    pub fn fractional_j(&self, y: f64) -> f64 {
        (y - self.center.1) / self.dy + (self.ny / 2) as f64
    }

    /// Nearest sample to a physical coordinate, or `None` when it falls
    /// outside the grid.
    pub fn index_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = self.fractional_i(x).round();
        let fj = self.fractional_j(y).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// Same sample counts, pitch and center.
    pub fn same_as(&self, other: &Grid2D) -> bool {
        self == other
    }

    pub(crate) fn ensure_same(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} @ ({:e}, {:e}) vs {}x{} @ ({:e}, {:e})",
                self.nx, self.ny, self.dx, self.dy, other.nx, other.ny, other.dx, other.dy
            )))
        }
    }

    /// Grid with new sample counts, same pitch and center.
    pub fn resized(&self, nx: usize, ny: usize) -> Result<Grid2D> {
        Grid2D::with_center(nx, ny, self.dx, self.dy, self.center)
    }

    pub fn transposed(&self) -> Grid2D {
        Grid2D {
            nx: self.ny,
            ny: self.nx,
            dx: self.dy,
            dy: self.dx,
            center: (self.center.1, self.center.0),
        }
    }
}

/// Builds a grid centered on the origin with pitch `extent / count`.
pub fn make_grid(nx: usize, ny: usize, extent_x: f64, extent_y: f64) -> Result<Grid2D> {
    if !(extent_x > 0.0 && extent_y > 0.0) {
        return invalid(format!("grid extent must be positive, got ({extent_x}, {extent_y})"));
    }
    if nx < 2 || ny < 2 {
        return invalid(format!("grid needs at least 2x2 samples, got {nx}x{ny}"));
    }
    Grid2D::new(nx, ny, extent_x / nx as f64, extent_y / ny as f64)
}
