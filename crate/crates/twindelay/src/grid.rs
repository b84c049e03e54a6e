//! Uniform time grids and grid-sampled matrix functions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{lerp, mat_norm};

/// Uniform grid on `[0, horizon]` with nodes `t_i = i * step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    step: f64,
    len: usize,
}

impl Grid {
    pub fn new(horizon: f64, step: f64) -> Result<Grid> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        let n = (horizon / step).round();
        if n < 1.0 || n > 1e8 {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} / step {step} gives an unusable node count"
            )));
        }
        // The horizon must be (numerically) a whole number of steps.
        if (n * step - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} is not an integer multiple of step {step}"
            )));
        }
        Ok(Grid { step, len: n as usize + 1 })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of nodes (cells + 1).
    pub fn len(&self) -> usize {
        self.len
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn horizon(&self) -> f64 {
        (self.len - 1) as f64 * self.step
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.node(i))
    }

    /// True if `other` has the same step (so samples can be combined node-wise).
    pub fn same_step(&self, other: &Grid) -> bool {
        (self.step - other.step).abs() <= 1e-12 * self.step
    }

    /// Index of the node nearest `t`, if `t` lies on the grid to within
    /// a relative tolerance; `None` for genuinely off-grid times.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = t / self.step;
        let i = x.round();
        if i < 0.0 || i as usize >= self.len {
            return None;
        }
        if (x - i).abs() <= 1e-6 {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Cell index and fractional offset for interpolation; `t` is clamped
    /// to `[0, horizon]`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        if t <= 0.0 {
            return (0, 0.0);
        }
        let x = t / self.step;
        let mut i = x.floor() as usize;
        if i >= self.len - 1 {
            return (self.len - 2, 1.0);
        }
        let mut w = x - i as f64;
        // Snap to the nearest node when within rounding slop of it, so that
        // grid-aligned times are evaluated exactly.
        if w < 1e-9 {
            w = 0.0;
        } else if w > 1.0 - 1e-9 {
            i += 1;
            w = 0.0;
            if i == self.len - 1 {
                return (self.len - 2, 1.0);
            }
        }
        (i, w)
    }
}

/// Matrix-valued function sampled on a [`Grid`], with linear interpolation
/// between nodes and constant extension outside `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn {
    pub grid: Grid,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<DMatrix<f64>>,
}

impl GridFn {
    pub fn zeros(grid: Grid, rows: usize, cols: usize) -> GridFn {
        GridFn {
            grid,
            rows,
            cols,
            values: vec![DMatrix::zeros(rows, cols); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, rows: usize, cols: usize, f: impl Fn(f64) -> DMatrix<f64>) -> GridFn {
        let values: Vec<_> = grid.nodes().map(f).collect();
        for v in &values {
            assert_eq!((v.nrows(), v.ncols()), (rows, cols), "sample has wrong shape");
        }
        GridFn { grid, rows, cols, values }
    }

    pub fn from_values(grid: Grid, values: Vec<DMatrix<f64>>) -> Result<GridFn> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let (rows, cols) = (values[0].nrows(), values[0].ncols());
        if values.iter().any(|v| v.nrows() != rows || v.ncols() != cols) {
            return Err(Error::DimensionMismatch("inconsistent sample shapes".into()));
        }
        Ok(GridFn { grid, rows, cols, values })
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let (i, w) = self.grid.locate(t);
        if w == 0.0 {
            self.values[i].clone()
        } else if w == 1.0 {
            self.values[i + 1].clone()
        } else {
            lerp(&self.values[i], &self.values[i + 1], w)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(mat_norm).fold(0.0, f64::max)
    }

    /// Trapezoid cumulative integral, node by node.
    pub fn cumulative(&self) -> GridFn {
        let h = self.grid.step();
        let mut values = Vec::with_capacity(self.values.len());
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        values.push(acc.clone());
        for i in 1..self.values.len() {
            acc += (&self.values[i - 1] + &self.values[i]) * (0.5 * h);
            values.push(acc.clone());
        }
        GridFn { grid: self.grid, rows: self.rows, cols: self.cols, values }
    }

    /// Trapezoid integral over the full grid.
    pub fn integral(&self) -> DMatrix<f64> {
        let h = self.grid.step();
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.values.len() {
            let w = if i == 0 || i == self.values.len() - 1 { 0.5 } else { 1.0 };
            acc += &self.values[i] * (w * h);
        }
        acc
    }

    pub fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> GridFn {
        let values: Vec<_> = self.values.iter().map(&f).collect();
        let (rows, cols) = (values[0].nrows(), values[0].ncols());
        GridFn { grid: self.grid, rows, cols, values }
    }

    pub fn scaled(&self, c: f64) -> GridFn {
        self.map(|v| v * c)
    }

    pub fn add(&self, other: &GridFn) -> Result<GridFn> {
        if self.grid != other.grid || self.rows != other.rows || self.cols != other.cols {
            return Err(Error::GridMismatch("adding grid functions with different layout".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(GridFn { grid: self.grid, rows: self.rows, cols: self.cols, values })
    }

    pub fn sub(&self, other: &GridFn) -> Result<GridFn> {
        self.add(&other.scaled(-1.0))
    }
}
