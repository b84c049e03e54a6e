//! Neutral delay equations
//! `d/dt [x(t) - int eta(d sigma) x(t-sigma)] = int zeta(d sigma) x(t-sigma)`.
//!
//! Integrating once turns this into `x = eta ⋆ x + Z * x + f + g`: the
//! neutral kernel acts on `x` itself, the delayed right hand side through
//! the cumulative integral (as for retarded equations), `f` is the retarded
//! forcing and `g` collects the history seen through `eta`. The same
//! semigroup is rebuilt independently through a Stieltjes perturbation of
//! the retarded semigroup, which serves as a cross-validation route.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::linalg::CMatrix;
use crate::measure::{Atom, HalfLineMeasure};
use crate::resolvent::resolvent_measure;
use crate::rfde::{self, RfdeSystem, Trajectory};
use crate::state::{pair_history, History};

#[derive(Clone, Debug)]
pub struct NfdeSystem {
    pub dim: usize,
    /// Neutral kernel on `[0, 1]`; must be continuous at zero (the jump is
    /// normalized away into the `x(t)` term), which we enforce by rejecting
    /// atoms within ten steps of zero.
    pub eta: HalfLineMeasure,
    /// Delayed kernel on `[0, 1]`.
    pub zeta: HalfLineMeasure,
    pub grid: Grid,
}

impl NfdeSystem {
    pub fn new(eta: HalfLineMeasure, zeta: HalfLineMeasure, horizon: f64) -> Result<NfdeSystem> {
        if eta.rows != eta.cols || zeta.rows != zeta.cols || eta.rows != zeta.rows {
            return Err(Error::DimensionMismatch("kernels must be square and match".into()));
        }
        if (eta.horizon() - 1.0).abs() > 1e-9 || (zeta.horizon() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGrid("kernels must live on the unit delay interval".into()));
        }
        if !eta.grid().same_step(&zeta.grid()) {
            return Err(Error::GridMismatch("kernels on different steps".into()));
        }
        let h = eta.grid().step();
        if eta.atoms.iter().any(|a| a.loc < 10.0 * h) {
            return Err(Error::InvalidArgument(
                "neutral kernel must be continuous at zero (no atoms within ten steps)".into(),
            ));
        }
        let grid = Grid::new(horizon, h)?;
        Ok(NfdeSystem { dim: eta.rows, eta, zeta, grid })
    }

    pub fn history_grid(&self) -> Grid {
        self.eta.grid()
    }

    /// The retarded part alone, used as the unperturbed semigroup.
    pub fn retarded_part(&self) -> RfdeSystem {
        RfdeSystem::new(self.zeta.clone(), self.grid.horizon()).expect("validated on construction")
    }
}

/// History contribution seen through the neutral kernel:
/// `g(t) = int_{(t,1]} eta(d sigma) phi(t-sigma) - int_{[0,1]} eta(d sigma) phi(-sigma)`.
/// Vanishes identically for the jump history (all class values are zero).
pub fn boundary_term(sys: &NfdeSystem, phi: &History) -> Result<GridFn> {
    if phi.samples.rows != sys.dim {
        return Err(Error::DimensionMismatch("history dimension".into()));
    }
    let base = pair_history(&sys.eta, phi)?;
    let hist = sys.history_grid();
    let tol = sys.eta.merge_tol();
    let nh = hist.len();
    let hh = hist.step();
    let values = (0..sys.grid.len())
        .map(|i| {
            let t = sys.grid.node(i);
            let mut v = -&base;
            if t < 1.0 - tol {
                for a in &sys.eta.atoms {
                    if a.loc > t + tol {
                        v += &a.weight * phi.eval_class(t - a.loc);
                    }
                }
                // density over sigma in [t, 1]; t is node-aligned
                if let Some(j0) = hist.node_index(t) {
                    for j in j0..nh {
                        let wq = if j == j0 || j == nh - 1 { 0.5 } else { 1.0 };
                        v += &sys.eta.density.values[j]
                            * phi.eval_class(t - hist.node(j))
                            * (wq * hh);
                    }
                }
            }
            v
        })
        .collect();
    GridFn::from_values(sys.grid, values)
}

/// Solve the initial value problem by marching the integrated equation.
pub fn solve_nfde(sys: &NfdeSystem, phi: &History) -> Result<Trajectory> {
    let f = rfde::build_forcing(&sys.retarded_part(), phi)?.add(&boundary_term(sys, phi)?)?;
    let x = rfde::march_mixed(Some(&sys.eta), Some(&sys.zeta), &f)?;
    Ok(Trajectory { phi: phi.clone(), x })
}

/// Semigroup action by translation along the solution.
pub fn apply(sys: &NfdeSystem, t: f64, phi: &History) -> Result<History> {
    if t < 0.0 || t > sys.grid.horizon() + 1e-9 {
        return Err(Error::InvalidArgument(format!("time {t} outside the system horizon")));
    }
    Ok(solve_nfde(sys, phi)?.state_at(t))
}

pub fn fundamental_solution(sys: &NfdeSystem) -> Result<GridFn> {
    let q = History::heaviside(sys.history_grid(), sys.dim);
    Ok(solve_nfde(sys, &q)?.x)
}

/// Characteristic matrix
/// `Delta(lambda) = lambda (I - int e^{-lambda s} eta(ds)) - int e^{-lambda s} zeta(ds)`.
pub fn characteristic_matrix(sys: &NfdeSystem, lambda: nalgebra::Complex<f64>) -> CMatrix {
    let mut m = -sys.zeta.laplace(lambda) - sys.eta.laplace(lambda) * lambda;
    for i in 0..sys.dim {
        m[(i, i)] += lambda;
    }
    m
}

/// Precomputed data for the perturbation route: the retarded resolvent
/// density, the perturbation kernel and its resolvent, and the combined
/// measure through which histories are reconstructed.
#[derive(Clone, Debug)]
pub struct NfdePerturbation {
    /// L1 resolvent of the retarded kernel's distribution function.
    pub rho: GridFn,
    /// Perturbation kernel measure: the neutral kernel plus its smoothing
    /// by the retarded resolvent.
    pub kernel: HalfLineMeasure,
    /// Resolvent of the kernel.
    pub resolvent: HalfLineMeasure,
    /// `(delta_0 + rho) + (delta_0 + rho) * resolvent`: applying a point
    /// probe at `sigma_0` to the perturbed fundamental family shifts this
    /// measure by `sigma_0`.
    pub ww: HalfLineMeasure,
}

/// Kernel of the perturbation renewal equation, assembled as an exact
/// measure: the atoms are those of the neutral kernel, the density is the
/// neutral density plus all interactions with the retarded resolvent.
pub fn perturbation_kernel(sys: &NfdeSystem, rho: &GridFn) -> Result<HalfLineMeasure> {
    let grid = sys.grid;
    let tol = sys.eta.merge_tol();
    // eta-density convolved with rho
    let b_eta = GridFn::from_values(
        grid,
        (0..grid.len())
            .map(|i| {
                if i < sys.eta.density.values.len() {
                    sys.eta.density.values[i].clone()
                } else {
                    DMatrix::zeros(sys.dim, sys.dim)
                }
            })
            .collect(),
    )?;
    let conv = crate::resolvent::conv_l1(&b_eta, rho)?;
    let values = (0..grid.len())
        .map(|i| {
            let t = grid.node(i);
            let mut v = &b_eta.values[i] + &conv.values[i];
            for a in &sys.eta.atoms {
                if a.loc <= t + tol {
                    v += &a.weight * rho.eval(t - a.loc);
                }
            }
            v
        })
        .collect();
    HalfLineMeasure::new(GridFn::from_values(grid, values)?, sys.eta.atoms.clone())
}

pub fn prepare_perturbation(sys: &NfdeSystem) -> Result<NfdePerturbation> {
    let rho = rfde::zeta_fun_resolvent(&sys.retarded_part())?;
    let kernel = perturbation_kernel(sys, &rho)?;
    let resolvent = resolvent_measure(&kernel)?;
    let mut m0 = HalfLineMeasure::from_density(rho.clone());
    m0.atoms.push(Atom { loc: 0.0, weight: DMatrix::identity(sys.dim, sys.dim) });
    let ww = add_measures(&m0, &m0.convolve(&resolvent)?)?;
    Ok(NfdePerturbation { rho, kernel, resolvent, ww })
}

fn add_measures(a: &HalfLineMeasure, b: &HalfLineMeasure) -> Result<HalfLineMeasure> {
    let density = a.density.add(&b.density)?;
    let mut atoms = a.atoms.clone();
    atoms.extend(b.atoms.iter().cloned());
    HalfLineMeasure::new(density, atoms)
}

/// Cumulative output of the unperturbed (retarded) semigroup:
/// `V0(t) = (eta ⋆ z)(t) + g(t)` with `z` the retarded solution.
pub fn v0_values(sys: &NfdeSystem, phi: &History) -> Result<GridFn> {
    let z = rfde::solve_ivp(&sys.retarded_part(), phi)?.x;
    sys.eta.convolve_fn(&z)?.add(&boundary_term(sys, phi)?)
}

/// Semigroup action rebuilt through the Stieltjes perturbation formula:
/// every state value is the corresponding unperturbed value plus a Stieltjes
/// integral of the cumulative output against the shifted `ww` measure.
pub fn apply_via_stieltjes(
    sys: &NfdeSystem,
    pert: &NfdePerturbation,
    t: f64,
    phi: &History,
) -> Result<History> {
    let base = rfde::apply(&sys.retarded_part(), t, phi)?;
    let v0 = v0_values(sys, phi)?;
    let hist = sys.history_grid();
    let correction = |sigma0: f64| -> Result<DMatrix<f64>> {
        let s = t - sigma0;
        if s < -1e-12 {
            return Ok(DMatrix::zeros(sys.dim, 1));
        }
        pert.ww.convolve_fn_at(&v0, s.max(0.0))
    };
    let mut samples = Vec::with_capacity(hist.len());
    for j in 0..hist.len() {
        let sigma0 = hist.horizon() - hist.node(j);
        samples.push(&base.samples.values[j] + correction(sigma0)?);
    }
    let at_zero = &base.at_zero + correction(0.0)?;
    History::new(GridFn::from_values(hist, samples)?, at_zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn unit_grid(h: f64) -> Grid {
        Grid::new(1.0, h).unwrap()
    }

    fn atom_measure(h: f64, loc: f64, w: f64) -> HalfLineMeasure {
        HalfLineMeasure::from_atoms(unit_grid(h), 1, 1, vec![Atom { loc, weight: dmatrix![w] }])
            .unwrap()
    }

    #[test]
    fn eta_atom_near_zero_is_rejected() {
        let h = 0.01;
        let bad = atom_measure(h, 0.05, 0.5);
        let zeta = HalfLineMeasure::zero(unit_grid(h), 1, 1);
        assert!(NfdeSystem::new(bad, zeta, 2.0).is_err());
    }

    #[test]
    fn pure_neutral_constant_solution() {
        // d/dt[x - a x(t-1)] = 0 with phi = 1 keeps x = 1
        let h = 0.01;
        let sys = NfdeSystem::new(
            atom_measure(h, 1.0, 0.4),
            HalfLineMeasure::zero(unit_grid(h), 1, 1),
            3.0,
        )
        .unwrap();
        let phi = History::constant(sys.history_grid(), dmatrix![1.0]);
        let x = solve_nfde(&sys, &phi).unwrap().x;
        for v in &x.values {
            assert!((v[(0, 0)] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_eta_reduces_to_retarded() {
        let h = 0.005;
        let zeta = atom_measure(h, 1.0, -1.0);
        let sys = NfdeSystem::new(HalfLineMeasure::zero(unit_grid(h), 1, 1), zeta.clone(), 2.0)
            .unwrap();
        let phi = History::from_fn(sys.history_grid(), 1, 1, |th| dmatrix![1.0 + th]);
        let x = solve_nfde(&sys, &phi).unwrap().x;
        let rsys = RfdeSystem::new(zeta, 2.0).unwrap();
        let z = rfde::solve_ivp(&rsys, &phi).unwrap().x;
        assert!(x.sub(&z).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn neutral_method_of_steps() {
        // d/dt[x - 0.5 x(t-1)] = -x(t-1), phi = 1:
        // x = 1 - t on [0,1], then 2 - 2.5 t + 0.5 t^2 on [1,2]
        let h = 1e-3;
        let sys = NfdeSystem::new(atom_measure(h, 1.0, 0.5), atom_measure(h, 1.0, -1.0), 2.0)
            .unwrap();
        let phi = History::constant(sys.history_grid(), dmatrix![1.0]);
        let x = solve_nfde(&sys, &phi).unwrap().x;
        assert!((x.eval(0.5)[(0, 0)] - 0.5).abs() < 1e-8);
        assert!((x.eval(1.0)[(0, 0)]).abs() < 1e-8);
        assert!((x.eval(1.5)[(0, 0)] + 0.625).abs() < 1e-6);
        assert!((x.eval(2.0)[(0, 0)] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn kernel_matches_cumulative_output_of_jump() {
        // V0(t) applied to the jump history equals the kernel's distribution
        let h = 0.005;
        let g = unit_grid(h);
        let zeta = HalfLineMeasure::from_density(GridFn::from_fn(g, 1, 1, |s| dmatrix![-(1.0 - s)]));
        let sys = NfdeSystem::new(atom_measure(h, 0.5, 0.3), zeta, 2.0).unwrap();
        let q = History::heaviside(sys.history_grid(), 1);
        let v0 = v0_values(&sys, &q).unwrap();
        let rho = rfde::zeta_fun_resolvent(&sys.retarded_part()).unwrap();
        let k = perturbation_kernel(&sys, &rho).unwrap();
        let dist = k.distribution();
        let mut worst = 0.0f64;
        for (i, v) in v0.values.iter().enumerate() {
            let t = sys.grid.node(i);
            // compare away from the kernel's jump, where the distribution
            // convention and the translation value differ by half the jump
            if (t - 0.5).abs() > 2.0 * h {
                worst = worst.max((v[(0, 0)] - dist.value(t)[(0, 0)]).abs());
            }
        }
        assert!(worst < 1e-4, "worst deviation {worst}");
    }

    #[test]
    fn stieltjes_route_matches_translation() {
        let h = 0.005;
        let g = unit_grid(h);
        let zeta = HalfLineMeasure::from_density(GridFn::from_fn(g, 1, 1, |s| dmatrix![-(1.0 - s)]));
        let sys = NfdeSystem::new(atom_measure(h, 0.5, 0.3), zeta, 2.0).unwrap();
        let phi = History::from_fn(sys.history_grid(), 1, 1, |th| dmatrix![(1.0 + th) * (1.0 + th)]);
        let pert = prepare_perturbation(&sys).unwrap();
        for &t in &[0.3, 1.0, 1.7] {
            let a = apply(&sys, t, &phi).unwrap();
            let b = apply_via_stieltjes(&sys, &pert, t, &phi).unwrap();
            assert!(a.diff_norm(&b) < 2e-3, "t={t}, diff={}", a.diff_norm(&b));
        }
    }

    #[test]
    fn characteristic_matrix_value() {
        let h = 0.01;
        let sys = NfdeSystem::new(atom_measure(h, 1.0, 0.5), atom_measure(h, 1.0, -1.0), 2.0)
            .unwrap();
        // Delta(0) = 0 (1 - 0.5) - (-1) = 1
        let d = characteristic_matrix(&sys, nalgebra::Complex::new(0.0, 0.0));
        assert!((d[(0, 0)].re - 1.0).abs() < 1e-12);
    }
}
