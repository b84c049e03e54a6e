//! State spaces on the history interval `[-1, 0]` and their dual pairings.
//!
//! Two dual pairs are used throughout: bounded measurable histories paired
//! with BV functionals (delay differential equations), and normalized BV
//! histories paired with bounded-function functionals (renewal equations).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::linalg::mat_norm;
use crate::measure::HalfLineMeasure;

/// Bounded measurable history on `[-1, 0]`: node samples representing the
/// L-infinity class (`samples.values[i]` is the value at `theta = -1 + i h`)
/// plus a distinguished point value at `theta = 0`. The point value matters
/// because BV functionals may carry an atom at zero; the samples alone
/// determine all integrals against densities.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub samples: GridFn,
    pub at_zero: DMatrix<f64>,
}

impl History {
    pub fn new(samples: GridFn, at_zero: DMatrix<f64>) -> Result<History> {
        if (at_zero.nrows(), at_zero.ncols()) != (samples.rows, samples.cols) {
            return Err(Error::DimensionMismatch("history point value shape".into()));
        }
        Ok(History { samples, at_zero })
    }

    pub fn grid(&self) -> Grid {
        self.samples.grid
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.samples.rows, self.samples.cols)
    }

    pub fn constant(grid: Grid, value: DMatrix<f64>) -> History {
        let (r, c) = (value.nrows(), value.ncols());
        History { samples: GridFn::from_fn(grid, r, c, |_| value.clone()), at_zero: value }
    }

    pub fn from_fn(grid: Grid, rows: usize, cols: usize, f: impl Fn(f64) -> DMatrix<f64>) -> History {
        let samples = GridFn::from_fn(grid, rows, cols, |u| f(u - grid.horizon()));
        let at_zero = f(0.0);
        History { samples, at_zero }
    }

    /// The jump history: zero class on `[-1, 0)` with point value `I` at 0.
    /// Used as the initial condition of fundamental solutions.
    pub fn heaviside(grid: Grid, dim: usize) -> History {
        History {
            samples: GridFn::zeros(grid, dim, dim),
            at_zero: DMatrix::identity(dim, dim),
        }
    }

    /// Value of the L-infinity class at `theta` (linear interpolation).
    pub fn eval_class(&self, theta: f64) -> DMatrix<f64> {
        self.samples.eval(theta + self.grid().horizon())
    }

    /// Point value: `at_zero` exactly at `theta = 0`, the class value below.
    pub fn eval_point(&self, theta: f64) -> DMatrix<f64> {
        if theta >= -1e-12 {
            self.at_zero.clone()
        } else {
            self.eval_class(theta)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.sup_norm().max(mat_norm(&self.at_zero))
    }

    pub fn axpy(&mut self, c: f64, other: &History) {
        for (a, b) in self.samples.values.iter_mut().zip(&other.samples.values) {
            *a += b * c;
        }
        self.at_zero += &other.at_zero * c;
    }

    pub fn diff_norm(&self, other: &History) -> f64 {
        let mut worst = mat_norm(&(&self.at_zero - &other.at_zero));
        for (a, b) in self.samples.values.iter().zip(&other.samples.values) {
            worst = worst.max(mat_norm(&(a - b)));
        }
        worst
    }
}

/// Pairing of a BV functional (measure `zeta` on `[0, 1]`) with a history:
/// `<zeta, y> = int_{[0,1]} zeta(d sigma) y(-sigma)`. Atoms use point values
/// (an atom at zero sees `at_zero`), the density integrates the class.
pub fn pair_history(zeta: &HalfLineMeasure, y: &History) -> Result<DMatrix<f64>> {
    if zeta.cols != y.samples.rows {
        return Err(Error::DimensionMismatch("functional and history dimensions".into()));
    }
    let tol = zeta.merge_tol();
    let mut acc = DMatrix::zeros(zeta.rows, y.samples.cols);
    for a in &zeta.atoms {
        let v = if a.loc <= tol { y.at_zero.clone() } else { y.eval_class(-a.loc) };
        acc += &a.weight * v;
    }
    let g = zeta.grid();
    let h = g.step();
    let n = zeta.density.values.len();
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += &zeta.density.values[i] * y.eval_class(-g.node(i)) * (w * h);
    }
    Ok(acc)
}

/// Normalized BV history on `[-1, 0]`, vanishing at `theta = 0`, stored
/// through its defining measure in the reflected variable `sigma = -theta`:
/// `psi(theta) = -measure([0, -theta))`. Atoms of the measure are point
/// masses (cohorts) sitting at `theta = -loc`.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeHistory {
    pub measure: HalfLineMeasure,
}

impl CumulativeHistory {
    pub fn new(measure: HalfLineMeasure) -> CumulativeHistory {
        CumulativeHistory { measure }
    }

    pub fn zero(grid: Grid, rows: usize, cols: usize) -> CumulativeHistory {
        CumulativeHistory { measure: HalfLineMeasure::zero(grid, rows, cols) }
    }

    /// Unit point mass at `theta = 0` in coordinate `j` (as a BV function:
    /// 0 at `theta = 0` and `-e_j` on `[-1, 0)`).
    pub fn dirac_at_zero(grid: Grid, dim: usize, j: usize) -> CumulativeHistory {
        let mut w = DMatrix::zeros(dim, 1);
        w[(j, 0)] = 1.0;
        CumulativeHistory {
            measure: HalfLineMeasure::from_atoms(grid, dim, 1, vec![crate::measure::Atom { loc: 0.0, weight: w }])
                .expect("valid atom"),
        }
    }

    pub fn grid(&self) -> Grid {
        self.measure.grid()
    }

    /// BV-function value `psi(theta)`.
    pub fn value(&self, theta: f64) -> DMatrix<f64> {
        -self.measure.eval_open(-theta)
    }

    pub fn tv_norm(&self) -> f64 {
        self.measure.tv_norm()
    }

    pub fn diff_tv(&self, other: &CumulativeHistory) -> Result<f64> {
        Ok(crate::resolvent::measure_sub(&self.measure, &other.measure)?.tv_norm())
    }
}

/// Pairing of a bounded-function functional `ydual` (sampled on `[0, 1]`,
/// evaluated at `sigma = -theta`) with a BV history:
/// `<ydual, psi> = int_{[-1,0]} ydual(-theta) psi(d theta)`.
pub fn pair_cumulative(ydual: &GridFn, psi: &CumulativeHistory) -> Result<DMatrix<f64>> {
    if ydual.cols != psi.measure.rows {
        return Err(Error::DimensionMismatch("functional and BV history dimensions".into()));
    }
    let mut acc = DMatrix::zeros(ydual.rows, psi.measure.cols);
    for a in &psi.measure.atoms {
        acc += ydual.eval(a.loc) * &a.weight;
    }
    let g = psi.measure.grid();
    let h = g.step();
    let n = psi.measure.density.values.len();
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += ydual.eval(g.node(i)) * &psi.measure.density.values[i] * (w * h);
    }
    Ok(acc)
}
