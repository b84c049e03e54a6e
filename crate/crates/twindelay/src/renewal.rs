//! Renewal equations for cumulative birth functions, with either a bounded
//! measurable kernel density (`b = k * b + f`, states are cumulative-birth
//! BV functions) or a BV kernel measure (`B = L ⋆ B + f`, births may occur
//! in bursts so the cumulative output itself is a measure).
//!
//! The state at time `t` assigns to `theta` the value `B(t+theta) - B(t)`;
//! as a measure in `sigma = -theta` it is the initial measure shifted right
//! by `t` plus the birth measure on `(0, t]` reflected about `t`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::linalg::CMatrix;
use crate::measure::{Atom, HalfLineMeasure};
use crate::resolvent::{l1_march, resolvent_measure};
use crate::state::CumulativeHistory;

#[derive(Clone, Debug)]
pub enum ReKernel {
    /// Bounded measurable kernel on `[0, 1]` (zero beyond one).
    Smooth(GridFn),
    /// Kernel measure on `[0, 1]`; must be continuous at zero (no atoms
    /// within ten steps of zero).
    Bv(HalfLineMeasure),
}

#[derive(Clone, Debug)]
pub struct ReSystem {
    pub dim: usize,
    pub kernel: ReKernel,
    pub grid: Grid,
}

impl ReSystem {
    pub fn smooth(k: GridFn, horizon: f64) -> Result<ReSystem> {
        if k.rows != k.cols {
            return Err(Error::DimensionMismatch("kernel must be square".into()));
        }
        if (k.grid.horizon() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGrid("kernel must live on the unit interval".into()));
        }
        let grid = Grid::new(horizon, k.grid.step())?;
        Ok(ReSystem { dim: k.rows, kernel: ReKernel::Smooth(k), grid })
    }

    pub fn bv(l: HalfLineMeasure, horizon: f64) -> Result<ReSystem> {
        if l.rows != l.cols {
            return Err(Error::DimensionMismatch("kernel must be square".into()));
        }
        if (l.horizon() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGrid("kernel must live on the unit interval".into()));
        }
        let h = l.grid().step();
        if l.atoms.iter().any(|a| a.loc < 10.0 * h) {
            return Err(Error::InvalidArgument(
                "kernel measure must be continuous at zero (no atoms within ten steps)".into(),
            ));
        }
        let grid = Grid::new(horizon, h)?;
        Ok(ReSystem { dim: l.rows, kernel: ReKernel::Bv(l), grid })
    }

    pub fn history_grid(&self) -> Grid {
        match &self.kernel {
            ReKernel::Smooth(k) => k.grid,
            ReKernel::Bv(l) => l.grid(),
        }
    }

    /// The kernel as a measure on `[0, 1]` (for Laplace transforms).
    pub fn kernel_measure(&self) -> HalfLineMeasure {
        match &self.kernel {
            ReKernel::Smooth(k) => HalfLineMeasure::from_density(k.clone()),
            ReKernel::Bv(l) => l.clone(),
        }
    }
}

fn check_state(sys: &ReSystem, psi: &CumulativeHistory) -> Result<()> {
    if psi.measure.rows != sys.dim || psi.measure.cols != 1 {
        return Err(Error::DimensionMismatch("state dimension".into()));
    }
    if !psi.grid().same_step(&sys.history_grid()) {
        return Err(Error::GridMismatch("state and kernel on different steps".into()));
    }
    Ok(())
}

/// Forcing of the smooth-kernel equation:
/// `f(t) = int k(t + sigma) psi(d sigma)` with the kernel zero beyond one.
pub fn smooth_forcing(sys: &ReSystem, psi: &CumulativeHistory) -> Result<GridFn> {
    let ReKernel::Smooth(k) = &sys.kernel else {
        return Err(Error::InvalidArgument("smooth forcing needs a smooth kernel".into()));
    };
    check_state(sys, psi)?;
    let hist = sys.history_grid();
    let nh = hist.len();
    let h = hist.step();
    let snap = psi.measure.merge_tol();
    let values = (0..sys.grid.len())
        .map(|i| {
            let t = sys.grid.node(i);
            let mut v = DMatrix::zeros(sys.dim, 1);
            for a in &psi.measure.atoms {
                if t + a.loc <= 1.0 + snap {
                    v += k.eval(t + a.loc) * &a.weight;
                }
            }
            // density over sigma in [0, 1 - t]
            if i + 1 < nh {
                let j_hi = nh - 1 - i;
                for j in 0..=j_hi {
                    let wq = if j == 0 || j == j_hi { 0.5 } else { 1.0 };
                    v += &k.values[i + j] * &psi.measure.density.values[j] * (wq * h);
                }
            }
            v
        })
        .collect();
    GridFn::from_values(sys.grid, values)
}

/// Birth rate `b = k * b + f` for the smooth kernel.
pub fn birth_rate(sys: &ReSystem, psi: &CumulativeHistory) -> Result<GridFn> {
    let ReKernel::Smooth(k) = &sys.kernel else {
        return Err(Error::InvalidArgument("birth rate needs a smooth kernel".into()));
    };
    l1_march(k, &smooth_forcing(sys, psi)?)
}

/// Forcing measure of the BV-kernel equation: the measure whose distribution
/// function is `f(t) = int [L(t+sigma) - L(sigma)] psi(d sigma)`. Atoms of
/// the kernel hitting atoms of the state produce exact atoms.
pub fn bv_forcing_measure(sys: &ReSystem, psi: &CumulativeHistory) -> Result<HalfLineMeasure> {
    let ReKernel::Bv(l) = &sys.kernel else {
        return Err(Error::InvalidArgument("measure forcing needs a BV kernel".into()));
    };
    check_state(sys, psi)?;
    let tol = l.merge_tol();
    let mut atoms = Vec::new();
    for a in &l.atoms {
        for p in &psi.measure.atoms {
            let loc = a.loc - p.loc;
            if loc > -tol {
                atoms.push(Atom { loc: loc.max(0.0), weight: &a.weight * &p.weight });
            }
        }
    }
    let hist = sys.history_grid();
    let nh = hist.len();
    let h = hist.step();
    let values = (0..sys.grid.len())
        .map(|i| {
            let t = sys.grid.node(i);
            let mut v = DMatrix::zeros(sys.dim, 1);
            // kernel atoms sweeping through the state's density
            for a in &l.atoms {
                let u = a.loc - t;
                if u >= -tol {
                    v += &a.weight * psi.measure.density.eval(u.max(0.0));
                }
            }
            // kernel density against the state's atoms
            for p in &psi.measure.atoms {
                if t + p.loc <= 1.0 + tol {
                    v += l.density.eval(t + p.loc) * &p.weight;
                }
            }
            // density against density over sigma in [0, 1 - t]
            if i + 1 < nh {
                let j_hi = nh - 1 - i;
                for j in 0..=j_hi {
                    let wq = if j == 0 || j == j_hi { 0.5 } else { 1.0 };
                    v += &l.density.values[i + j] * &psi.measure.density.values[j] * (wq * h);
                }
            }
            v
        })
        .collect();
    HalfLineMeasure::new(GridFn::from_values(sys.grid, values)?, atoms)
}

/// Birth measure `dB` on `[0, T]`: the density of the running integral of
/// the birth rate (smooth kernels), or the resolvent representation
/// `nu_f + R * nu_f` with exact atoms (BV kernels).
pub fn births_measure(sys: &ReSystem, psi: &CumulativeHistory) -> Result<HalfLineMeasure> {
    match &sys.kernel {
        ReKernel::Smooth(_) => Ok(HalfLineMeasure::from_density(birth_rate(sys, psi)?)),
        ReKernel::Bv(l) => {
            let nf = bv_forcing_measure(sys, psi)?;
            let r = resolvent_measure(&l.with_horizon(sys.grid.horizon())?)?;
            let conv = r.convolve(&nf)?;
            let density = nf.density.add(&conv.density)?;
            let mut atoms = nf.atoms;
            atoms.extend(conv.atoms);
            HalfLineMeasure::new(density, atoms)
        }
    }
}

/// Node values of the cumulative birth function `B`.
pub fn cumulative_births(sys: &ReSystem, psi: &CumulativeHistory) -> Result<GridFn> {
    let db = births_measure(sys, psi)?;
    let dist = db.distribution();
    GridFn::from_values(sys.grid, sys.grid.nodes().map(|t| dist.value(t)).collect())
}

/// State at time `t` built from the initial measure and a birth measure:
/// the initial part shifts right by `t` (mass pushed past age one is lost),
/// births on `[0, t]` enter reflected (`sigma = t - u`).
pub fn state_from_births(
    psi: &CumulativeHistory,
    db: &HalfLineMeasure,
    t: f64,
) -> Result<CumulativeHistory> {
    let hist = psi.grid();
    let tol = db.merge_tol();
    let mut atoms: Vec<Atom> = psi
        .measure
        .atoms
        .iter()
        .map(|a| Atom { loc: a.loc + t, weight: a.weight.clone() })
        .collect();
    for a in &db.atoms {
        if a.loc <= t + tol {
            atoms.push(Atom { loc: (t - a.loc).max(0.0), weight: a.weight.clone() });
        }
    }
    let values = hist
        .nodes()
        .map(|s| {
            let mut v = DMatrix::zeros(psi.measure.rows, 1);
            if s >= t - tol {
                v += psi.measure.density.eval((s - t).max(0.0));
            }
            if s <= t + tol {
                v += db.density.eval((t - s).max(0.0));
            }
            v
        })
        .collect();
    Ok(CumulativeHistory::new(HalfLineMeasure::new(
        GridFn::from_values(hist, values)?,
        atoms,
    )?))
}

/// Semigroup action: solve for the births and translate.
pub fn apply(sys: &ReSystem, t: f64, psi: &CumulativeHistory) -> Result<CumulativeHistory> {
    if t < 0.0 || t > sys.grid.horizon() + 1e-9 {
        return Err(Error::InvalidArgument(format!("time {t} outside the system horizon")));
    }
    check_state(sys, psi)?;
    let db = births_measure(sys, psi)?;
    state_from_births(psi, &db, t)
}

/// `Delta(lambda) = I - int exp(-lambda a) kernel(da)`.
pub fn characteristic_matrix(sys: &ReSystem, lambda: nalgebra::Complex<f64>) -> CMatrix {
    let mut m = -sys.kernel_measure().laplace(lambda);
    for i in 0..sys.dim {
        m[(i, i)] += nalgebra::Complex::new(1.0, 0.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn unit_grid(h: f64) -> Grid {
        Grid::new(1.0, h).unwrap()
    }

    fn dirac(h: f64) -> CumulativeHistory {
        CumulativeHistory::dirac_at_zero(unit_grid(h), 1, 0)
    }

    #[test]
    fn smooth_forcing_of_newborn_cohort_is_the_kernel() {
        let h = 0.01;
        let k = GridFn::from_fn(unit_grid(h), 1, 1, |a| dmatrix![a * (1.0 - a)]);
        let sys = ReSystem::smooth(k.clone(), 2.0).unwrap();
        let f = smooth_forcing(&sys, &dirac(h)).unwrap();
        for (i, v) in f.values.iter().enumerate() {
            let t = sys.grid.node(i);
            let want = if t <= 1.0 { t * (1.0 - t) } else { 0.0 };
            assert!((v[(0, 0)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_kernel_births_grow_exponentially() {
        // k = 1, cohort at zero: b(t) = e^t on [0, 1]
        let h = 1e-3;
        let k = GridFn::from_fn(unit_grid(h), 1, 1, |_| dmatrix![1.0]);
        let sys = ReSystem::smooth(k, 1.0).unwrap();
        let b = birth_rate(&sys, &dirac(h)).unwrap();
        assert!((b.eval(1.0)[(0, 0)] - 1.0f64.exp()).abs() < 1e-5);
    }

    #[test]
    fn cell_division_doubling_is_exact() {
        // L = 2 delta_1: every unit of time the cohort doubles
        let h = 0.01;
        let l = HalfLineMeasure::from_atoms(
            unit_grid(h),
            1,
            1,
            vec![Atom { loc: 1.0, weight: dmatrix![2.0] }],
        )
        .unwrap();
        let sys = ReSystem::bv(l, 3.0).unwrap();
        let psi = dirac(h);
        let bb = cumulative_births(&sys, &psi).unwrap();
        assert_eq!(bb.eval(0.5)[(0, 0)], 0.0);
        assert_eq!(bb.eval(1.0)[(0, 0)], 2.0);
        assert_eq!(bb.eval(2.0)[(0, 0)], 6.0);
        assert_eq!(bb.eval(3.0)[(0, 0)], 14.0);
        // state at t = 1.5: a cohort of mass 2, aged 0.5
        let st = apply(&sys, 1.5, &psi).unwrap();
        assert_eq!(st.measure.atoms.len(), 1);
        assert!((st.measure.atoms[0].loc - 0.5).abs() < 1e-12);
        assert_eq!(st.measure.atoms[0].weight[(0, 0)], 2.0);
        assert_eq!(st.value(-0.75)[(0, 0)], -2.0);
        assert_eq!(st.value(-0.25)[(0, 0)], 0.0);
    }

    #[test]
    fn bv_births_match_direct_marching() {
        // mixed kernel: atom at 0.6 plus a density ramp; compare the
        // resolvent representation of B against direct marching of
        // B = L ⋆ B + f at the nodes
        let h = 2e-3;
        let g = unit_grid(h);
        let l = HalfLineMeasure::new(
            GridFn::from_fn(g, 1, 1, |a| dmatrix![0.8 * a]),
            vec![Atom { loc: 0.6, weight: dmatrix![0.7] }],
        )
        .unwrap();
        let sys = ReSystem::bv(l.clone(), 2.0).unwrap();
        let psi = CumulativeHistory::new(
            HalfLineMeasure::new(
                GridFn::from_fn(g, 1, 1, |s| dmatrix![1.0 - s]),
                vec![Atom { loc: 0.25, weight: dmatrix![0.5] }],
            )
            .unwrap(),
        );
        let bb = cumulative_births(&sys, &psi).unwrap();
        let nf = bv_forcing_measure(&sys, &psi).unwrap();
        let fdist = nf.distribution();
        let f = GridFn::from_values(sys.grid, sys.grid.nodes().map(|t| fdist.value(t)).collect())
            .unwrap();
        let direct = crate::resolvent::renewal_solve(&l.with_horizon(2.0).unwrap(), &f).unwrap();
        let tol = crate::resolvent::default_tol(h, 2.0, l.tv_norm()) * psi.tv_norm();
        assert!(
            bb.sub(&direct).unwrap().sup_norm() < tol,
            "deviation {}",
            bb.sub(&direct).unwrap().sup_norm()
        );
    }

    #[test]
    fn shifted_initial_mass_ages_and_expires() {
        // kernel zero: the state just shifts and truncates
        let h = 0.01;
        let l = HalfLineMeasure::zero(unit_grid(h), 1, 1);
        let sys = ReSystem::bv(l, 2.0).unwrap();
        let psi = CumulativeHistory::new(
            HalfLineMeasure::from_atoms(
                unit_grid(h),
                1,
                1,
                vec![Atom { loc: 0.3, weight: dmatrix![1.5] }],
            )
            .unwrap(),
        );
        let st = apply(&sys, 0.5, &psi).unwrap();
        assert_eq!(st.measure.atoms.len(), 1);
        assert!((st.measure.atoms[0].loc - 0.8).abs() < 1e-12);
        let gone = apply(&sys, 0.8, &psi).unwrap();
        assert_eq!(gone.tv_norm(), 0.0);
    }

    #[test]
    fn characteristic_matrix_of_doubling() {
        let h = 0.01;
        let l = HalfLineMeasure::from_atoms(
            unit_grid(h),
            1,
            1,
            vec![Atom { loc: 1.0, weight: dmatrix![2.0] }],
        )
        .unwrap();
        let sys = ReSystem::bv(l, 2.0).unwrap();
        // det(I - 2 e^{-z}) vanishes at z = ln 2
        let z = nalgebra::Complex::new(2.0f64.ln(), 0.0);
        assert!(characteristic_matrix(&sys, z)[(0, 0)].norm() < 1e-12);
    }
}
