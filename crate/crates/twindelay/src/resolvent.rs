//! Resolvent kernels of measures and renewal-equation solvers.
//!
//! The resolvent `rho` of a kernel measure `mu` is the unique measure with
//! `rho - mu * rho = mu = rho - rho * mu`. It exists iff `I - mu({0})` is
//! invertible. For purely atomic kernels it is computed exactly by a Neumann
//! series on atom locations (after reducing away the atom at zero); for
//! kernels with a density part the density of `rho` is obtained by marching
//! a Volterra equation node by node with an implicit small linear solve.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::linalg::mat_norm;
use crate::measure::{Atom, HalfLineMeasure};

/// Default accuracy budget for grid-based operations: second-order in the
/// step, scaled per unit horizon and by a Gronwall-type growth factor in the
/// kernel's total variation.
pub fn default_tol(h: f64, horizon: f64, tv: f64) -> f64 {
    10.0 * h * h * horizon.max(1.0) * (tv * (tv * horizon).exp()).max(1.0)
}

fn merge_atoms(mut atoms: Vec<Atom>, tol: f64) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.loc.partial_cmp(&b.loc).expect("finite atom locations"));
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match merged.last_mut() {
            Some(prev) if (a.loc - prev.loc).abs() <= tol => prev.weight += a.weight,
            _ => merged.push(a),
        }
    }
    merged.retain(|a| mat_norm(&a.weight) != 0.0);
    merged
}

fn convolve_atoms(a: &[Atom], b: &[Atom], horizon: f64, tol: f64) -> Vec<Atom> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let loc = x.loc + y.loc;
            if loc <= horizon + tol {
                out.push(Atom { loc, weight: &x.weight * &y.weight });
            }
        }
    }
    merge_atoms(out, tol)
}

/// Exact resolvent of a purely atomic kernel, including the atom-at-zero
/// reduction. With `A = mu({0})` and `nu = (I-A)^{-1}(mu - A d0)` the
/// resolvent is `A(I-A)^{-1} d0 + (sum_j nu^{*j}) (I-A)^{-1}`; the Neumann
/// series terminates because every convolution power pushes the support
/// further to the right of zero.
fn atom_resolvent(atoms: &[Atom], dim: usize, horizon: f64, tol: f64) -> Result<Vec<Atom>> {
    let eye = DMatrix::identity(dim, dim);
    let a0 = atoms
        .iter()
        .find(|a| a.loc <= tol)
        .map(|a| a.weight.clone())
        .unwrap_or_else(|| DMatrix::zeros(dim, dim));
    let ia_inv = (&eye - &a0)
        .lu()
        .try_inverse()
        .ok_or(Error::SingularAtZero)?;
    let nu: Vec<Atom> = atoms
        .iter()
        .filter(|a| a.loc > tol)
        .map(|a| Atom { loc: a.loc, weight: &ia_inv * &a.weight })
        .collect();

    let mut series = nu.clone();
    let mut generation = nu.clone();
    let mut rounds = 0usize;
    while !generation.is_empty() {
        rounds += 1;
        if rounds > 200_000 {
            return Err(Error::InvalidArgument(
                "atomic Neumann series does not reach the horizon in a reasonable number of generations".into(),
            ));
        }
        generation = convolve_atoms(&generation, &nu, horizon, tol);
        series.extend(generation.iter().cloned());
        series = merge_atoms(series, tol);
    }

    let mut out: Vec<Atom> = series
        .into_iter()
        .map(|a| Atom { loc: a.loc, weight: &a.weight * &ia_inv })
        .collect();
    let c0 = &a0 * &ia_inv;
    if mat_norm(&c0) != 0.0 {
        out.push(Atom { loc: 0.0, weight: c0 });
    }
    Ok(merge_atoms(out, tol))
}

/// Interpolate in a prefix `values[0..=hi]` of node samples at time `t`
/// (which must not exceed `grid.node(hi)` by more than rounding slop).
fn interp_prefix(values: &[DMatrix<f64>], grid: Grid, t: f64) -> DMatrix<f64> {
    let (i, w) = grid.locate(t);
    if w == 0.0 {
        values[i].clone()
    } else if w == 1.0 {
        values[i + 1].clone()
    } else {
        crate::linalg::lerp(&values[i], &values[i + 1], w)
    }
}

/// Solve `x = mu ⋆ x + f` by marching over `f`'s grid: atoms of `mu` act by
/// exact (interpolated) delays, the density by trapezoid quadrature; the
/// self-coupling at each node (atom at zero, sub-step atoms, density cell at
/// zero) is resolved by one small linear solve per node.
pub fn renewal_solve(mu: &HalfLineMeasure, f: &GridFn) -> Result<GridFn> {
    if mu.cols != f.rows {
        return Err(Error::DimensionMismatch(format!(
            "kernel ({},{}) against forcing with {} rows",
            mu.rows, mu.cols, f.rows
        )));
    }
    if !mu.grid().same_step(&f.grid) {
        return Err(Error::GridMismatch("kernel and forcing on different steps".into()));
    }
    let grid = f.grid;
    let h = grid.step();
    let tol = mu.merge_tol();
    let dim = mu.rows;
    let nk = mu.density.values.len();
    let eye = DMatrix::identity(dim, dim);

    let a0 = {
        let a = mu.atom_at_zero();
        if a.nrows() == dim { a } else { DMatrix::zeros(dim, dim) }
    };
    let lu0 = (&eye - &a0).lu();
    if lu0.determinant().abs() < 1e-300 {
        return Err(Error::SingularAtZero);
    }

    // Constant implicit coefficient for nodes i >= 1.
    let mut implicit = a0.clone();
    for a in &mu.atoms {
        if a.loc > tol && a.loc < h - tol {
            implicit += &a.weight * (1.0 - a.loc / h);
        }
    }
    implicit += &mu.density.values[0] * (0.5 * h);
    let lu = (&eye - &implicit).lu();
    if lu.determinant().abs() < 1e-300 {
        return Err(Error::InvalidArgument(
            "implicit marching matrix is singular; reduce the step".into(),
        ));
    }

    let mut values: Vec<DMatrix<f64>> = Vec::with_capacity(grid.len());
    values.push(
        lu0.solve(&f.values[0])
            .ok_or(Error::SingularAtZero)?,
    );
    for i in 1..grid.len() {
        let t = grid.node(i);
        let mut rhs = f.values[i].clone();
        for a in &mu.atoms {
            if a.loc <= tol {
                continue; // implicit
            }
            if a.loc > t + tol {
                break;
            }
            if a.loc < h - tol {
                // sub-step delay: explicit part of the interpolation
                rhs += &a.weight * &values[i - 1] * (a.loc / h);
            } else {
                rhs += &a.weight * interp_prefix(&values, grid, (t - a.loc).max(0.0));
            }
        }
        let j_hi = i.min(nk - 1);
        for j in 1..=j_hi {
            let wq = if j == j_hi { 0.5 } else { 1.0 };
            rhs += &mu.density.values[j] * &values[i - j] * (wq * h);
        }
        values.push(lu.solve(&rhs).ok_or(Error::SingularAtZero)?);
    }
    GridFn::from_values(grid, values)
}

/// Resolvent of a measure kernel. Purely atomic kernels get the exact
/// Neumann series; mixed kernels get exact atoms plus a marched density.
pub fn resolvent_measure(mu: &HalfLineMeasure) -> Result<HalfLineMeasure> {
    if mu.rows != mu.cols {
        return Err(Error::DimensionMismatch("resolvent needs a square kernel".into()));
    }
    let grid = mu.grid();
    let horizon = grid.horizon();
    let tol = mu.merge_tol();
    let atoms = atom_resolvent(&mu.atoms, mu.rows, horizon, tol)?;
    if mu.is_pure_atom() {
        return HalfLineMeasure::from_atoms(grid, mu.rows, mu.cols, atoms);
    }
    // Density part solves r_d = G + mu ⋆ r_d with G = beta + beta * r_atoms,
    // where beta is the density of mu and r_atoms the (exact) atom part of
    // the resolvent.
    let beta = &mu.density;
    let mut g_values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let t = grid.node(i);
        let mut v = beta.values[i].clone();
        for a in &atoms {
            if a.loc <= tol {
                // beta shifted by the atom at zero
                v += &beta.values[i] * &a.weight;
            } else if a.loc <= t + tol {
                v += beta.eval((t - a.loc).max(0.0)) * &a.weight;
            }
        }
        g_values.push(v);
    }
    let g = GridFn::from_values(grid, g_values)?;
    let r_d = renewal_solve(mu, &g)?;
    HalfLineMeasure::new(r_d, atoms)
}

/// Difference `a - b` of two measures on the same grid layout.
pub fn measure_sub(a: &HalfLineMeasure, b: &HalfLineMeasure) -> Result<HalfLineMeasure> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::DimensionMismatch("subtracting measures of different shape".into()));
    }
    let density = a.density.sub(&b.density)?;
    let mut atoms = a.atoms.clone();
    atoms.extend(b.atoms.iter().map(|x| Atom { loc: x.loc, weight: -&x.weight }));
    HalfLineMeasure::new(density, atoms)
}

/// Total-variation norms of the two defect measures
/// `rho - mu - mu * rho` and `rho - mu - rho * mu`.
pub fn resolvent_residuals(mu: &HalfLineMeasure, rho: &HalfLineMeasure) -> Result<(f64, f64)> {
    let right = measure_sub(&measure_sub(rho, mu)?, &mu.convolve(rho)?)?;
    let left = measure_sub(&measure_sub(rho, mu)?, &rho.convolve(mu)?)?;
    Ok((right.tv_norm(), left.tv_norm()))
}

/// Function-function convolution `(k * f)(t) = int k(t-s) f(s) ds` with the
/// kernel restricted to its own (possibly shorter) support.
pub fn conv_l1(k: &GridFn, f: &GridFn) -> Result<GridFn> {
    if k.cols != f.rows {
        return Err(Error::DimensionMismatch("convolution shapes".into()));
    }
    if !k.grid.same_step(&f.grid) {
        return Err(Error::GridMismatch("convolution steps differ".into()));
    }
    let grid = f.grid;
    let h = grid.step();
    let nk = k.values.len();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let mut v = DMatrix::zeros(k.rows, f.cols);
        let j_lo = i.saturating_sub(nk - 1);
        if i > j_lo {
            for j in j_lo..=i {
                let wq = if j == j_lo || j == i { 0.5 } else { 1.0 };
                v += &k.values[i - j] * &f.values[j] * (wq * h);
            }
        }
        values.push(v);
    }
    GridFn::from_values(grid, values)
}

/// Solve `x = k * x + f` (L1 convolution kernel) by trapezoid marching.
pub fn l1_march(k: &GridFn, f: &GridFn) -> Result<GridFn> {
    if k.cols != f.rows {
        return Err(Error::DimensionMismatch("marching shapes".into()));
    }
    if !k.grid.same_step(&f.grid) {
        return Err(Error::GridMismatch("marching steps differ".into()));
    }
    let grid = f.grid;
    let h = grid.step();
    let nk = k.values.len();
    let dim = k.rows;
    let eye = DMatrix::identity(dim, dim);
    let lu = (&eye - &k.values[0] * (0.5 * h)).lu();
    if lu.determinant().abs() < 1e-300 {
        return Err(Error::InvalidArgument("implicit marching matrix is singular".into()));
    }
    let mut values: Vec<DMatrix<f64>> = Vec::with_capacity(grid.len());
    values.push(f.values[0].clone());
    for i in 1..grid.len() {
        let mut rhs = f.values[i].clone();
        let j_lo = i.saturating_sub(nk - 1);
        for j in j_lo..i {
            let wq = if j == j_lo { 0.5 } else { 1.0 };
            rhs += &k.values[i - j] * &values[j] * (wq * h);
        }
        values.push(lu.solve(&rhs).expect("checked determinant"));
    }
    GridFn::from_values(grid, values)
}

/// L1 resolvent: the unique `r` with `r = k + k * r = k + r * k`.
pub fn resolvent_l1(k: &GridFn) -> Result<GridFn> {
    if k.rows != k.cols {
        return Err(Error::DimensionMismatch("L1 resolvent needs a square kernel".into()));
    }
    l1_march(k, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;
    use nalgebra::dmatrix;

    fn atom(loc: f64, w: f64) -> Atom {
        Atom { loc, weight: dmatrix![w] }
    }

    #[test]
    fn doubling_atom_resolvent() {
        let g = Grid::new(3.0, 0.01).unwrap();
        let mu = HalfLineMeasure::from_atoms(g, 1, 1, vec![atom(1.0, 2.0)]).unwrap();
        let rho = resolvent_measure(&mu).unwrap();
        let locs: Vec<f64> = rho.atoms.iter().map(|a| a.loc).collect();
        let ws: Vec<f64> = rho.atoms.iter().map(|a| a.weight[(0, 0)]).collect();
        assert_eq!(locs, vec![1.0, 2.0, 3.0]);
        assert_eq!(ws, vec![2.0, 4.0, 8.0]);
        let (r, l) = resolvent_residuals(&mu, &rho).unwrap();
        assert!(r < 1e-12 && l < 1e-12);
    }

    #[test]
    fn half_atom_at_zero() {
        let g = Grid::new(1.0, 0.01).unwrap();
        let mu = HalfLineMeasure::from_atoms(g, 1, 1, vec![atom(0.0, 0.5)]).unwrap();
        let rho = resolvent_measure(&mu).unwrap();
        assert_eq!(rho.atoms.len(), 1);
        assert_eq!(rho.atoms[0].loc, 0.0);
        assert!((rho.atoms[0].weight[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_atom_at_zero_is_singular() {
        let g = Grid::new(1.0, 0.01).unwrap();
        let mu = HalfLineMeasure::from_atoms(g, 1, 1, vec![atom(0.0, 1.0)]).unwrap();
        assert!(matches!(resolvent_measure(&mu), Err(Error::SingularAtZero)));
    }

    #[test]
    fn constant_density_resolvent_is_exponential() {
        // kernel c ds has resolvent density c exp(c t)
        let c = 0.8;
        let g = Grid::new(1.0, 1e-3).unwrap();
        let mu = HalfLineMeasure::from_density(GridFn::from_fn(g, 1, 1, |_| dmatrix![c]));
        let rho = resolvent_measure(&mu).unwrap();
        assert!(rho.atoms.is_empty());
        let mut worst = 0.0f64;
        for (i, v) in rho.density.values.iter().enumerate() {
            let want = c * (c * g.node(i)).exp();
            worst = worst.max((v[(0, 0)] - want).abs());
        }
        assert!(worst < 1e-5, "worst deviation {worst}");
        let (r, l) = resolvent_residuals(&mu, &rho).unwrap();
        let tol = default_tol(1e-3, 1.0, mu.tv_norm());
        assert!(r < tol && l < tol, "residuals {r} {l} vs {tol}");
    }

    #[test]
    fn mixed_zero_atom_plus_density() {
        // mu = 0.5 d0 + ds  =>  rho = d0 + 4 exp(2t) ds
        let g = Grid::new(1.0, 1e-3).unwrap();
        let mu = HalfLineMeasure::new(
            GridFn::from_fn(g, 1, 1, |_| dmatrix![1.0]),
            vec![atom(0.0, 0.5)],
        )
        .unwrap();
        let rho = resolvent_measure(&mu).unwrap();
        assert_eq!(rho.atoms.len(), 1);
        assert!((rho.atoms[0].weight[(0, 0)] - 1.0).abs() < 1e-14);
        let mut worst = 0.0f64;
        for (i, v) in rho.density.values.iter().enumerate() {
            let want = 4.0 * (2.0 * g.node(i)).exp();
            worst = worst.max((v[(0, 0)] - want).abs());
        }
        assert!(worst < 1e-4, "worst deviation {worst}");
    }

    #[test]
    fn renewal_doubling_example() {
        // x = 2 x(t-1) + 1 gives x = 2^{floor(t)+1} - 1 at the nodes
        let g = Grid::new(3.0, 0.01).unwrap();
        let mu = HalfLineMeasure::from_atoms(g, 1, 1, vec![atom(1.0, 2.0)]).unwrap();
        let f = GridFn::from_fn(g, 1, 1, |_| dmatrix![1.0]);
        let x = renewal_solve(&mu, &f).unwrap();
        assert_eq!(x.eval(0.5)[(0, 0)], 1.0);
        assert_eq!(x.eval(1.0)[(0, 0)], 3.0);
        assert_eq!(x.eval(2.5)[(0, 0)], 7.0);
        assert_eq!(x.eval(3.0)[(0, 0)], 15.0);
        // representation through the resolvent agrees
        let rho = resolvent_measure(&mu).unwrap();
        let alt = f.add(&rho.convolve_fn(&f).unwrap()).unwrap();
        assert!(alt.sub(&x).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn exponential_weight_commutes_with_resolvent() {
        let g = Grid::new(2.0, 2e-3).unwrap();
        let mu = HalfLineMeasure::new(
            GridFn::from_fn(g, 1, 1, |t| dmatrix![0.3 * (1.0 + t).ln()]),
            vec![atom(0.5, 0.4)],
        )
        .unwrap();
        let gamma = 0.6;
        let a = resolvent_measure(&mu.exp_scale(gamma)).unwrap();
        let b = resolvent_measure(&mu).unwrap().exp_scale(gamma);
        let diff = measure_sub(&a, &b).unwrap();
        assert!(diff.tv_norm() < default_tol(2e-3, 2.0, mu.tv_norm()));
    }

    #[test]
    fn l1_resolvent_of_constant_kernel() {
        // k = 1 on [0,1] (its own grid): r = e^t on [0,1]
        let g = Grid::new(1.0, 1e-3).unwrap();
        let k = GridFn::from_fn(g, 1, 1, |_| dmatrix![1.0]);
        let r = resolvent_l1(&k).unwrap();
        assert!((r.eval(1.0)[(0, 0)] - 1.0f64.exp()).abs() < 1e-5);
    }

    #[test]
    fn sub_step_atom_is_handled() {
        // delay shorter than the step exercises the implicit interpolation
        let g = Grid::new(1.0, 0.01).unwrap();
        let mu = HalfLineMeasure::from_atoms(g, 1, 1, vec![atom(0.004, 0.5)]).unwrap();
        let f = GridFn::from_fn(g, 1, 1, |_| dmatrix![1.0]);
        let x = renewal_solve(&mu, &f).unwrap();
        // x is approximately the solution of x(t) = 1 + 0.5 x(t - 0.004),
        // which saturates towards 2 in a few delays
        assert!((x.eval(1.0)[(0, 0)] - 2.0).abs() < 1e-2);
        assert!(x.values.iter().all(|v| v[(0, 0)] <= 2.0 + 1e-9));
    }
}
