//! Finite-rank perturbation engines: rebuild the concrete semigroups from
//! the plain shift semigroups plus a finite-rank kernel, as an independent
//! route used for cross-validation.
//!
//! Bounded case: the perturbed orbit is determined by a scalar/matrix output
//! `v` solving `v = F + k * v`, where both the kernel `k` and the forcing
//! `F` are pairings of probe functionals with shift orbits. Relatively
//! bounded case (cumulative states): the perturbation enters through a
//! Stieltjes integral of the cumulative output against the orbit of the
//! newborn cohort.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::measure::{Atom, HalfLineMeasure};
use crate::renewal::{bv_forcing_measure, ReKernel, ReSystem};
use crate::resolvent::{l1_march, resolvent_measure};
use crate::semigroup::{shift_cumulative, shift_history};
use crate::state::{pair_cumulative, pair_history, CumulativeHistory, History};

/// Kernel of the bounded-rank equation for a delay system:
/// `k_ij(t) = <row_i, S0(t) q_j>` with `q_j` the unit jump history. Computed
/// through the pairing with the shifted jump, not from the kernel measure.
pub fn delay_rank_kernel(zeta: &HalfLineMeasure, grid: Grid) -> Result<GridFn> {
    let q = History::heaviside(zeta.grid(), zeta.rows);
    let values = grid
        .nodes()
        .map(|t| pair_history(zeta, &shift_history(t, &q)))
        .collect::<Result<Vec<_>>>()?;
    GridFn::from_values(grid, values)
}

/// Forcing of the bounded-rank equation: `F(t) = <zeta, S0(t) y>`.
pub fn delay_rank_forcing(zeta: &HalfLineMeasure, y: &History, grid: Grid) -> Result<GridFn> {
    let values = grid
        .nodes()
        .map(|t| pair_history(zeta, &shift_history(t, y)))
        .collect::<Result<Vec<_>>>()?;
    GridFn::from_values(grid, values)
}

/// Output of the perturbed system: `v = F + k * v`.
pub fn rank_output(kernel: &GridFn, forcing: &GridFn) -> Result<GridFn> {
    l1_march(kernel, forcing)
}

/// Perturbed semigroup action rebuilt from the output alone: below zero the
/// history shifts, above zero the state is `y(0)` plus the running integral
/// of the output.
pub fn delay_apply_bounded(zeta: &HalfLineMeasure, t: f64, y: &History) -> Result<History> {
    if y.samples.rows != zeta.cols {
        return Err(Error::DimensionMismatch("history dimension".into()));
    }
    let horizon = t.max(1.0);
    let grid = Grid::new(horizon, zeta.grid().step())?;
    let k = delay_rank_kernel(zeta, grid)?;
    let f = delay_rank_forcing(zeta, y, grid)?;
    let vc = rank_output(&k, &f)?.cumulative();
    let hist = y.grid();
    let samples = hist
        .nodes()
        .map(|node| {
            let u = t + node - hist.horizon();
            if u >= -1e-12 {
                &y.at_zero + vc.eval(u.max(0.0))
            } else {
                y.eval_class(u)
            }
        })
        .collect();
    History::new(
        GridFn::from_values(hist, samples)?,
        &y.at_zero + vc.eval(t),
    )
}

/// Kernel of the smooth renewal instantiation through the dual pairing:
/// `k(t) = <k_fun, S0(t) q>` with `q` the newborn cohort.
pub fn renewal_rank_kernel(k_fun: &GridFn, grid: Grid) -> Result<GridFn> {
    let q = dirac_basis(k_fun.grid, k_fun.cols);
    let values = grid
        .nodes()
        .map(|t| {
            let mut m = DMatrix::zeros(k_fun.rows, k_fun.cols);
            for (j, qj) in q.iter().enumerate() {
                let col = pair_cumulative(k_fun, &shift_cumulative(t, qj))?;
                m.set_column(j, &col.column(0));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    GridFn::from_values(grid, values)
}

fn dirac_basis(grid: Grid, dim: usize) -> Vec<CumulativeHistory> {
    (0..dim).map(|j| CumulativeHistory::dirac_at_zero(grid, dim, j)).collect()
}

/// Forcing of the smooth renewal instantiation: `F(t) = <k_fun, S0(t) psi>`.
pub fn renewal_rank_forcing(
    k_fun: &GridFn,
    psi: &CumulativeHistory,
    grid: Grid,
) -> Result<GridFn> {
    let values = grid
        .nodes()
        .map(|t| pair_cumulative(k_fun, &shift_cumulative(t, psi)))
        .collect::<Result<Vec<_>>>()?;
    GridFn::from_values(grid, values)
}

/// Relatively bounded route for BV renewal states: the base state shifts,
/// every atom of the cumulative output `dV` plants the cohort orbit
/// `S0(t - tau) q` scaled by the atom's weight, and the absolutely
/// continuous part of `dV` spreads into a density in reflected age.
pub fn re_apply_stieltjes(
    sys: &ReSystem,
    t: f64,
    psi: &CumulativeHistory,
) -> Result<CumulativeHistory> {
    let ReKernel::Bv(l) = &sys.kernel else {
        return Err(Error::InvalidArgument("the Stieltjes route needs a BV kernel".into()));
    };
    if t < 0.0 || t > sys.grid.horizon() + 1e-9 {
        return Err(Error::InvalidArgument(format!("time {t} outside the system horizon")));
    }
    // cumulative output V = V0 + R * V0 as a measure, with V0 the exact
    // forcing measure of the instantiation
    let nf = bv_forcing_measure(sys, psi)?;
    let r = resolvent_measure(&l.with_horizon(sys.grid.horizon())?)?;
    let conv = r.convolve(&nf)?;
    let dv = {
        let density = nf.density.add(&conv.density)?;
        let mut atoms = nf.atoms;
        atoms.extend(conv.atoms);
        HalfLineMeasure::new(density, atoms)?
    };

    let base = shift_cumulative(t, psi);
    let hist = psi.grid();
    let tol = dv.merge_tol();
    let mut atoms = base.measure.atoms.clone();
    for a in &dv.atoms {
        if a.loc <= t + tol {
            // the cohort orbit S0(t - tau) q is the unit atom at age t - tau
            atoms.push(Atom { loc: (t - a.loc).max(0.0), weight: a.weight.clone() });
        }
    }
    let values = hist
        .nodes()
        .enumerate()
        .map(|(j, s)| {
            let mut v = base.measure.density.values[j].clone();
            if s <= t + tol {
                v += dv.density.eval((t - s).max(0.0));
            }
            v
        })
        .collect();
    Ok(CumulativeHistory::new(HalfLineMeasure::new(
        GridFn::from_values(hist, values)?,
        atoms,
    )?))
}
