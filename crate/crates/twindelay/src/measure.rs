//! Matrix-valued measures on `[0, T]` stored as exact atoms plus a gridded
//! absolutely continuous density.
//!
//! Atoms are kept at exact (possibly off-grid) locations and never smeared
//! onto the grid; the density is sampled at the grid nodes and integrated
//! with the trapezoid rule. Singular continuous parts are deliberately not
//! representable.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::linalg::{mat_norm, CMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub loc: f64,
    pub weight: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HalfLineMeasure {
    pub rows: usize,
    pub cols: usize,
    /// Sorted by location; merged when closer than `merge_tol()`.
    pub atoms: Vec<Atom>,
    /// Absolutely continuous part, sampled on the grid.
    pub density: GridFn,
}

impl HalfLineMeasure {
    pub fn zero(grid: Grid, rows: usize, cols: usize) -> HalfLineMeasure {
        HalfLineMeasure { rows, cols, atoms: Vec::new(), density: GridFn::zeros(grid, rows, cols) }
    }

    pub fn from_atoms(grid: Grid, rows: usize, cols: usize, atoms: Vec<Atom>) -> Result<HalfLineMeasure> {
        let mut m = HalfLineMeasure::zero(grid, rows, cols);
        m.atoms = atoms;
        m.normalize()?;
        Ok(m)
    }

    pub fn from_density(density: GridFn) -> HalfLineMeasure {
        HalfLineMeasure { rows: density.rows, cols: density.cols, atoms: Vec::new(), density }
    }

    pub fn new(density: GridFn, atoms: Vec<Atom>) -> Result<HalfLineMeasure> {
        let mut m = HalfLineMeasure::from_density(density);
        m.atoms = atoms;
        m.normalize()?;
        Ok(m)
    }

    pub fn grid(&self) -> Grid {
        self.density.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid().horizon()
    }

    /// Atoms closer than this are considered co-located.
    pub fn merge_tol(&self) -> f64 {
        self.grid().step() * 1e-6
    }

    fn normalize(&mut self) -> Result<()> {
        let tol = self.merge_tol();
        let horizon = self.horizon();
        for a in &self.atoms {
            if a.loc < -tol || !a.loc.is_finite() {
                return Err(Error::InvalidArgument(format!("atom location {} outside [0, T]", a.loc)));
            }
            if (a.weight.nrows(), a.weight.ncols()) != (self.rows, self.cols) {
                return Err(Error::DimensionMismatch("atom weight shape".into()));
            }
        }
        self.atoms.retain(|a| a.loc <= horizon + tol);
        self.atoms
            .sort_by(|a, b| a.loc.partial_cmp(&b.loc).expect("finite atom locations"));
        let mut merged: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in self.atoms.drain(..) {
            match merged.last_mut() {
                Some(prev) if (a.loc - prev.loc).abs() <= tol => prev.weight += a.weight,
                _ => merged.push(Atom { loc: a.loc.max(0.0), weight: a.weight }),
            }
        }
        merged.retain(|a| mat_norm(&a.weight) != 0.0);
        self.atoms = merged;
        Ok(())
    }

    /// Weight of the atom at zero (zero matrix if absent).
    pub fn atom_at_zero(&self) -> DMatrix<f64> {
        match self.atoms.first() {
            Some(a) if a.loc <= self.merge_tol() => a.weight.clone(),
            _ => DMatrix::zeros(self.rows, self.cols),
        }
    }

    pub fn is_pure_atom(&self) -> bool {
        self.density.values.iter().all(|v| mat_norm(v) == 0.0)
    }

    /// Total variation norm (in the max-row-sum matrix norm):
    /// sum of atom norms plus the trapezoid integral of the density norm.
    pub fn tv_norm(&self) -> f64 {
        let atom_part: f64 = self.atoms.iter().map(|a| mat_norm(&a.weight)).sum();
        let h = self.grid().step();
        let n = self.density.values.len();
        let mut dens_part = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            dens_part += w * h * mat_norm(&self.density.values[i]);
        }
        atom_part + dens_part
    }

    /// Distribution-function value `mu([0, t])`; the normalized BV function
    /// associated with the measure.
    pub fn eval_closed(&self, t: f64) -> DMatrix<f64> {
        let tol = self.merge_tol();
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        for a in &self.atoms {
            if a.loc <= t + tol {
                acc += &a.weight;
            } else {
                break;
            }
        }
        acc + self.density_cumulative_at(t)
    }

    /// `mu([0, t))`: excludes an atom sitting exactly at `t`.
    pub fn eval_open(&self, t: f64) -> DMatrix<f64> {
        let tol = self.merge_tol();
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        for a in &self.atoms {
            if a.loc < t - tol {
                acc += &a.weight;
            } else {
                break;
            }
        }
        acc + self.density_cumulative_at(t)
    }

    fn density_cumulative_at(&self, t: f64) -> DMatrix<f64> {
        if t <= 0.0 {
            return DMatrix::zeros(self.rows, self.cols);
        }
        let h = self.grid().step();
        let (i, w) = self.grid().locate(t.min(self.horizon()));
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        // trapezoid over full cells [0, t_i]
        for j in 0..i {
            acc += (&self.density.values[j] + &self.density.values[j + 1]) * (0.5 * h);
        }
        if w > 0.0 {
            // partial cell [t_i, t]
            let end = crate::linalg::lerp(&self.density.values[i], &self.density.values[i + 1], w);
            acc += (&self.density.values[i] + &end) * (0.5 * w * h);
        }
        acc
    }

    /// Cached evaluator for the distribution function `t -> mu([0, t])`,
    /// for use in inner loops (amortized O(atoms) per call).
    pub fn distribution(&self) -> DistFn {
        DistFn { atoms: self.atoms.clone(), cum: self.density.cumulative(), tol: self.merge_tol() }
    }

    /// Laplace transform `int exp(-z s) mu(ds)` over `[0, T]`.
    pub fn laplace(&self, z: Complex<f64>) -> CMatrix {
        let mut acc = CMatrix::zeros(self.rows, self.cols);
        for a in &self.atoms {
            let e = (-z * a.loc).exp();
            for r in 0..self.rows {
                for c in 0..self.cols {
                    acc[(r, c)] += e * a.weight[(r, c)];
                }
            }
        }
        let h = self.grid().step();
        let n = self.density.values.len();
        for i in 0..n {
            let wq = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let e = (-z * self.grid().node(i)).exp() * (wq * h);
            for r in 0..self.rows {
                for c in 0..self.cols {
                    acc[(r, c)] += e * self.density.values[i][(r, c)];
                }
            }
        }
        acc
    }

    /// Exponentially weighted measure `exp(-gamma s) mu(ds)`.
    pub fn exp_scale(&self, gamma: f64) -> HalfLineMeasure {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { loc: a.loc, weight: &a.weight * (-gamma * a.loc).exp() })
            .collect();
        let grid = self.grid();
        let density = GridFn::from_values(
            grid,
            self.density
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| v * (-gamma * grid.node(i)).exp())
                .collect(),
        )
        .expect("same layout");
        HalfLineMeasure { rows: self.rows, cols: self.cols, atoms, density }
    }

    /// Measure convolution `(mu * nu)(E) = int mu(ds) nu(E - s)`, truncated to
    /// the longer of the two horizons. Atom locations add exactly; all
    /// atom-density and density-density interactions land in the density.
    pub fn convolve(&self, other: &HalfLineMeasure) -> Result<HalfLineMeasure> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "convolving ({},{}) with ({},{})",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        if !self.grid().same_step(&other.grid()) {
            return Err(Error::GridMismatch("convolving measures with different steps".into()));
        }
        let grid = if self.horizon() >= other.horizon() { self.grid() } else { other.grid() };
        let horizon = grid.horizon();
        let tol = grid.step() * 1e-6;

        let mut atoms = Vec::new();
        for a in &self.atoms {
            for b in &other.atoms {
                let loc = a.loc + b.loc;
                if loc <= horizon + tol {
                    atoms.push(Atom { loc, weight: &a.weight * &b.weight });
                }
            }
        }

        let h = grid.step();
        let mut density = Vec::with_capacity(grid.len());
        let nl = self.density.values.len();
        let nr = other.density.values.len();
        // identically zero densities contribute nothing; skipping them turns
        // pure-atom convolution into pure atom arithmetic
        let left_zero = self.density.sup_norm() == 0.0;
        let right_zero = other.density.sup_norm() == 0.0;
        for i in 0..grid.len() {
            let t = grid.node(i);
            let mut v = DMatrix::zeros(self.rows, other.cols);
            // atoms of self against the density of other
            if !right_zero {
                for a in &self.atoms {
                    let u = t - a.loc;
                    if u >= -tol && u <= other.horizon() + tol {
                        v += &a.weight * other.density.eval(u.max(0.0));
                    }
                }
            }
            // density of self against atoms of other
            if !left_zero {
                for b in &other.atoms {
                    let u = t - b.loc;
                    if u >= -tol && u <= self.horizon() + tol {
                        v += self.density.eval(u.max(0.0)) * &b.weight;
                    }
                }
            }
            // density against density: trapezoid over s in [max(0, t-Tr), min(t, Tl)]
            let j_lo = i.saturating_sub(nr - 1);
            let j_hi = i.min(nl - 1);
            if !left_zero && !right_zero && j_hi > j_lo {
                for j in j_lo..=j_hi {
                    let wq = if j == j_lo || j == j_hi { 0.5 } else { 1.0 };
                    v += &self.density.values[j] * &other.density.values[i - j] * (wq * h);
                }
            }
            density.push(v);
        }
        HalfLineMeasure::new(GridFn::from_values(grid, density)?, atoms)
    }

    /// Measure-star-function convolution
    /// `(mu ⋆ f)(t) = int_{[0,t]} mu(ds) f(t - s)` sampled on `f`'s grid.
    pub fn convolve_fn(&self, f: &GridFn) -> Result<GridFn> {
        if self.cols != f.rows {
            return Err(Error::DimensionMismatch(format!(
                "measure ({},{}) against function with {} rows",
                self.rows, self.cols, f.rows
            )));
        }
        if !self.grid().same_step(&f.grid) {
            return Err(Error::GridMismatch("measure and function live on different steps".into()));
        }
        let grid = f.grid;
        let tol = self.merge_tol();
        let h = grid.step();
        let nk = self.density.values.len();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let t = grid.node(i);
            let mut v = DMatrix::zeros(self.rows, f.cols);
            for a in &self.atoms {
                if a.loc <= t + tol {
                    v += &a.weight * f.eval((t - a.loc).max(0.0));
                }
            }
            let j_hi = i.min(nk - 1);
            if j_hi > 0 {
                for j in 0..=j_hi {
                    let wq = if j == 0 || j == j_hi { 0.5 } else { 1.0 };
                    v += &self.density.values[j] * &f.values[i - j] * (wq * h);
                }
            }
            values.push(v);
        }
        GridFn::from_values(grid, values)
    }

    /// One value `(mu ⋆ f)(t) = int_{[0,t]} mu(ds) f(t-s)` at a node-aligned
    /// time, without materializing the whole convolution.
    pub fn convolve_fn_at(&self, f: &GridFn, t: f64) -> Result<DMatrix<f64>> {
        if self.cols != f.rows {
            return Err(Error::DimensionMismatch("measure against function rows".into()));
        }
        if !self.grid().same_step(&f.grid) {
            return Err(Error::GridMismatch("measure and function live on different steps".into()));
        }
        let i = f
            .grid
            .node_index(t)
            .ok_or_else(|| Error::InvalidArgument(format!("time {t} is not a grid node")))?;
        let tol = self.merge_tol();
        let h = f.grid.step();
        let mut v = DMatrix::zeros(self.rows, f.cols);
        for a in &self.atoms {
            if a.loc <= t + tol {
                v += &a.weight * f.eval((t - a.loc).max(0.0));
            }
        }
        let j_hi = i.min(self.density.values.len() - 1);
        if j_hi > 0 {
            for j in 0..=j_hi {
                let wq = if j == 0 || j == j_hi { 0.5 } else { 1.0 };
                v += &self.density.values[j] * &f.values[i - j] * (wq * h);
            }
        }
        Ok(v)
    }

    /// Same measure with a (node-aligned) longer or shorter horizon; density
    /// is zero-padded or truncated, atoms beyond the new horizon are dropped.
    pub fn with_horizon(&self, horizon: f64) -> Result<HalfLineMeasure> {
        let grid = Grid::new(horizon, self.grid().step())?;
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            if i < self.density.values.len() {
                values.push(self.density.values[i].clone());
            } else {
                values.push(DMatrix::zeros(self.rows, self.cols));
            }
        }
        HalfLineMeasure::new(GridFn::from_values(grid, values)?, self.atoms.clone())
    }
}

/// Cached distribution function of a measure: `value(t) = mu([0, t])`, with
/// constant extension `mu([0, T])` for `t` beyond the horizon and zero for
/// `t < 0`.
#[derive(Clone, Debug)]
pub struct DistFn {
    atoms: Vec<Atom>,
    cum: GridFn,
    tol: f64,
}

impl DistFn {
    pub fn value(&self, t: f64) -> DMatrix<f64> {
        let mut acc = if t <= -self.tol {
            return DMatrix::zeros(self.cum.rows, self.cum.cols);
        } else {
            self.cum.eval(t.max(0.0))
        };
        for a in &self.atoms {
            if a.loc <= t + self.tol {
                acc += &a.weight;
            } else {
                break;
            }
        }
        acc
    }
}

/// Serialization form of [`HalfLineMeasure`]; the density block is optional
/// for purely atomic measures.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureJson {
    pub dims: [usize; 2],
    #[serde(default)]
    pub atoms: Vec<AtomJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomJson {
    pub t: f64,
    pub w: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityJson {
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl HalfLineMeasure {
    pub fn to_json(&self) -> MeasureJson {
        let density = if self.is_pure_atom() {
            None
        } else {
            Some(DensityJson {
                h: self.grid().step(),
                horizon: self.horizon(),
                samples: self
                    .density
                    .values
                    .iter()
                    .map(|m| (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect())
                    .collect(),
            })
        };
        MeasureJson {
            dims: [self.rows, self.cols],
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomJson {
                    t: a.loc,
                    w: (0..a.weight.nrows())
                        .map(|r| (0..a.weight.ncols()).map(|c| a.weight[(r, c)]).collect())
                        .collect(),
                })
                .collect(),
            density,
        }
    }

    /// Rebuild from JSON; `fallback_grid` supplies the grid when no density
    /// block is present.
    pub fn from_json(json: &MeasureJson, fallback_grid: Option<Grid>) -> Result<HalfLineMeasure> {
        let [rows, cols] = json.dims;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("dims entries must be positive".into()));
        }
        let parse_mat = |m: &Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
            if m.len() != rows || m.iter().any(|r| r.len() != cols) {
                return Err(Error::DimensionMismatch("matrix entry does not match dims".into()));
            }
            Ok(DMatrix::from_fn(rows, cols, |r, c| m[r][c]))
        };
        let atoms = json
            .atoms
            .iter()
            .map(|a| Ok(Atom { loc: a.t, weight: parse_mat(&a.w)? }))
            .collect::<Result<Vec<_>>>()?;
        let density = match &json.density {
            Some(d) => {
                let grid = Grid::new(d.horizon, d.h)?;
                if d.samples.len() != grid.len() {
                    return Err(Error::GridMismatch(format!(
                        "density.samples has {} entries, grid needs {}",
                        d.samples.len(),
                        grid.len()
                    )));
                }
                let values = d.samples.iter().map(parse_mat).collect::<Result<Vec<_>>>()?;
                GridFn::from_values(grid, values)?
            }
            None => {
                let grid = fallback_grid.ok_or_else(|| {
                    Error::InvalidArgument("pure-atom measure needs an ambient grid".into())
                })?;
                GridFn::zeros(grid, rows, cols)
            }
        };
        HalfLineMeasure::new(density, atoms)
    }
}
