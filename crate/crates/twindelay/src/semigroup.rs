//! Shift semigroups on the two state spaces and a common interface over all
//! concrete semigroups, together with structural checks (semigroup law,
//! generator integral identity).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::measure::{Atom, HalfLineMeasure};
use crate::neutral::NfdeSystem;
use crate::renewal::ReSystem;
use crate::rfde::RfdeSystem;
use crate::state::{pair_cumulative, pair_history, CumulativeHistory, History};

/// Shift on bounded histories: `(S0(t) y)(theta) = y(t + theta)` with `y`
/// extended by its distinguished value at zero.
pub fn shift_history(t: f64, y: &History) -> History {
    if t == 0.0 {
        return y.clone();
    }
    let grid = y.grid();
    let horizon = grid.horizon();
    let samples = GridFn::from_values(
        grid,
        grid.nodes()
            .map(|u| {
                let s = t + u - horizon;
                if s >= -1e-12 {
                    y.at_zero.clone()
                } else {
                    y.eval_class(s)
                }
            })
            .collect(),
    )
    .expect("layout preserved");
    History { samples, at_zero: y.at_zero.clone() }
}

/// Shift on cumulative (BV) states: mass ages by `t`, anything pushed past
/// age one is forgotten, nothing new appears at zero.
pub fn shift_cumulative(t: f64, psi: &CumulativeHistory) -> CumulativeHistory {
    if t == 0.0 {
        return psi.clone();
    }
    let grid = psi.grid();
    let tol = psi.measure.merge_tol();
    let atoms = psi
        .measure
        .atoms
        .iter()
        .map(|a| Atom { loc: a.loc + t, weight: a.weight.clone() })
        .collect();
    let values = grid
        .nodes()
        .map(|s| {
            if s >= t - tol {
                psi.measure.density.eval((s - t).max(0.0))
            } else {
                DMatrix::zeros(psi.measure.rows, psi.measure.cols)
            }
        })
        .collect();
    CumulativeHistory::new(
        HalfLineMeasure::new(
            GridFn::from_values(grid, values).expect("layout preserved"),
            atoms,
        )
        .expect("shifted atoms stay admissible"),
    )
}

/// A state of either dual pair.
#[derive(Clone, Debug)]
pub enum State {
    Hist(History),
    Cum(CumulativeHistory),
}

impl State {
    pub fn norm(&self) -> f64 {
        match self {
            State::Hist(y) => y.sup_norm(),
            State::Cum(p) => p.tv_norm(),
        }
    }
}

/// A functional of either dual pair.
#[derive(Clone, Debug)]
pub enum Probe {
    Meas(HalfLineMeasure),
    Fun(GridFn),
}

/// Distance between two states in the norm of their space (supremum for
/// histories, total variation for cumulative states).
pub fn state_diff(a: &State, b: &State) -> Result<f64> {
    match (a, b) {
        (State::Hist(x), State::Hist(y)) => Ok(x.diff_norm(y)),
        (State::Cum(x), State::Cum(y)) => x.diff_tv(y),
        _ => Err(Error::InvalidArgument("comparing states of different spaces".into())),
    }
}

/// Every concrete semigroup the crate provides, behind one interface.
#[derive(Clone, Debug)]
pub enum TwinSemigroup {
    /// Pure shift on histories (the unperturbed semigroup of delay equations
    /// with zero kernel).
    ShiftHistory,
    /// Pure shift on cumulative states (renewal equations with zero kernel).
    ShiftCumulative,
    Rfde(RfdeSystem),
    Nfde(NfdeSystem),
    Re(ReSystem),
}

impl TwinSemigroup {
    pub fn apply(&self, t: f64, state: &State) -> Result<State> {
        if t < 0.0 {
            return Err(Error::InvalidArgument(format!("negative time {t}")));
        }
        match (self, state) {
            (TwinSemigroup::ShiftHistory, State::Hist(y)) => Ok(State::Hist(shift_history(t, y))),
            (TwinSemigroup::ShiftCumulative, State::Cum(p)) => {
                Ok(State::Cum(shift_cumulative(t, p)))
            }
            (TwinSemigroup::Rfde(sys), State::Hist(y)) => {
                Ok(State::Hist(crate::rfde::apply(sys, t, y)?))
            }
            (TwinSemigroup::Nfde(sys), State::Hist(y)) => {
                Ok(State::Hist(crate::neutral::apply(sys, t, y)?))
            }
            (TwinSemigroup::Re(sys), State::Cum(p)) => Ok(State::Cum(crate::renewal::apply(sys, t, p)?)),
            _ => Err(Error::InvalidArgument("state space does not match the semigroup".into())),
        }
    }

    /// Dual pairing between a probe functional and a state.
    pub fn pair(&self, probe: &Probe, state: &State) -> Result<DMatrix<f64>> {
        match (probe, state) {
            (Probe::Meas(m), State::Hist(y)) => pair_history(m, y),
            (Probe::Fun(f), State::Cum(p)) => pair_cumulative(f, p),
            _ => Err(Error::InvalidArgument("probe does not match the state space".into())),
        }
    }

    /// States orbit `S(t_k) y` for increasing times, sharing one solve where
    /// the semigroup is realized by translation along a trajectory.
    pub fn orbit(&self, state: &State, times: &[f64]) -> Result<Vec<State>> {
        match (self, state) {
            (TwinSemigroup::Rfde(sys), State::Hist(y)) => {
                let traj = crate::rfde::solve_ivp(sys, y)?;
                times.iter().map(|&t| Ok(State::Hist(traj.state_at(t)))).collect()
            }
            (TwinSemigroup::Nfde(sys), State::Hist(y)) => {
                let traj = crate::neutral::solve_nfde(sys, y)?;
                times.iter().map(|&t| Ok(State::Hist(traj.state_at(t)))).collect()
            }
            (TwinSemigroup::Re(sys), State::Cum(p)) => {
                let db = crate::renewal::births_measure(sys, p)?;
                times
                    .iter()
                    .map(|&t| Ok(State::Cum(crate::renewal::state_from_births(p, &db, t)?)))
                    .collect()
            }
            _ => times.iter().map(|&t| self.apply(t, state)).collect(),
        }
    }
}

/// Residual of the semigroup law `S(t) S(s) y = S(t+s) y`: the state-space
/// distance plus the worst pairing discrepancy over the supplied probes.
pub fn check_semigroup_law(
    sg: &TwinSemigroup,
    state: &State,
    t: f64,
    s: f64,
    probes: &[Probe],
) -> Result<f64> {
    let two_step = sg.apply(t, &sg.apply(s, state)?)?;
    let one_step = sg.apply(t + s, state)?;
    let mut worst = state_diff(&two_step, &one_step)?;
    for p in probes {
        let d = sg.pair(p, &two_step)? - sg.pair(p, &one_step)?;
        worst = worst.max(crate::linalg::mat_norm(&d));
    }
    Ok(worst)
}

/// Residual of the generator integral identity for a delay system: if `z`
/// is an admissible derivative of `y` (`y' = z` with `z(0) = <zeta, y>`)
/// then `S(t) y - y = int_0^t S(tau) z dtau`. Returns the supremum of the
/// defect over the history nodes and the distinguished point.
pub fn check_generator_integral(
    sys: &RfdeSystem,
    y: &History,
    z: &History,
    t: f64,
) -> Result<f64> {
    let hist = sys.history_grid();
    let horizon = hist.horizon();
    let traj_y = crate::rfde::solve_ivp(sys, y)?;
    let traj_z = crate::rfde::solve_ivp(sys, z)?;
    let zc = z.samples.cumulative(); // integral of the class of z over [-1, theta]
    let xc = traj_z.x.cumulative(); // integral of the extension of z beyond zero
    let state_t = traj_y.state_at(t);

    // int_theta^{t+theta} of the extended z, split at zero
    let seg = |theta: f64| -> DMatrix<f64> {
        let hi = t + theta;
        if hi <= 0.0 {
            zc.eval(hi + horizon) - zc.eval(theta + horizon)
        } else {
            (zc.eval(horizon) - zc.eval(theta + horizon)) + xc.eval(hi)
        }
    };

    let mut worst = 0.0f64;
    for j in 0..hist.len() {
        let theta = hist.node(j) - horizon;
        let lhs = &state_t.samples.values[j] - &y.samples.values[j];
        worst = worst.max(crate::linalg::mat_norm(&(lhs - seg(theta))));
    }
    let lhs0 = &state_t.at_zero - &y.at_zero;
    worst = worst.max(crate::linalg::mat_norm(&(lhs0 - xc.eval(t))));
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn grid(h: f64) -> crate::grid::Grid {
        crate::grid::Grid::new(1.0, h).unwrap()
    }

    #[test]
    fn shift_history_is_exact_on_nodes() {
        let g = grid(0.01);
        let y = History::from_fn(g, 1, 1, |th| dmatrix![th * th]);
        let a = shift_history(0.25, &shift_history(0.5, &y));
        let b = shift_history(0.75, &y);
        assert_eq!(a.diff_norm(&b), 0.0);
        // value: y(0.75 + theta) for theta = -0.9 is y(-0.15)
        assert!((b.eval_class(-0.9)[(0, 0)] - 0.0225).abs() < 1e-12);
        // beyond zero the distinguished value extends
        assert_eq!(b.eval_class(-0.5)[(0, 0)], 0.0);
    }

    #[test]
    fn shift_cumulative_ages_atoms_exactly() {
        let g = grid(0.01);
        let psi = CumulativeHistory::new(
            HalfLineMeasure::new(
                GridFn::from_fn(g, 1, 1, |s| dmatrix![1.0 + s]),
                vec![Atom { loc: 0.2, weight: dmatrix![2.0] }],
            )
            .unwrap(),
        );
        let a = shift_cumulative(0.3, &shift_cumulative(0.2, &psi));
        let b = shift_cumulative(0.5, &psi);
        assert!(a.diff_tv(&b).unwrap() < 1e-15);
        assert!((b.measure.atoms[0].loc - 0.7).abs() < 1e-12);
        // density moved right: at sigma = 0.6 the old value at 0.1
        assert!((b.measure.density.eval(0.6)[(0, 0)] - 1.1).abs() < 1e-12);
        assert_eq!(b.measure.density.eval(0.3)[(0, 0)], 0.0);
    }

    #[test]
    fn kernel_pairing_recovers_smooth_kernel() {
        // <k, S0(t) q> = k(t): the defining property of the smooth-kernel
        // renewal instantiation
        let g = grid(0.01);
        let k = GridFn::from_fn(g, 1, 1, |a| dmatrix![a * (1.0 - a)]);
        let q = CumulativeHistory::dirac_at_zero(g, 1, 0);
        for &t in &[0.0, 0.3, 0.77, 1.0] {
            let v = pair_cumulative(&k, &shift_cumulative(t, &q)).unwrap();
            assert!((v[(0, 0)] - t * (1.0 - t)).abs() < 1e-12, "t={t}");
        }
        // after the horizon the cohort is gone
        assert_eq!(pair_cumulative(&k, &shift_cumulative(1.5, &q)).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn semigroup_law_for_delay_system() {
        let g = grid(0.005);
        let zeta = HalfLineMeasure::from_atoms(
            g,
            1,
            1,
            vec![Atom { loc: 1.0, weight: dmatrix![-1.0] }],
        )
        .unwrap();
        let sg = TwinSemigroup::Rfde(RfdeSystem::new(zeta, 2.0).unwrap());
        let y = State::Hist(History::from_fn(g, 1, 1, |th| dmatrix![(1.0 + th).cos()]));
        let probes = vec![
            Probe::Meas(
                HalfLineMeasure::from_atoms(g, 1, 1, vec![Atom { loc: 0.5, weight: dmatrix![1.0] }])
                    .unwrap(),
            ),
            Probe::Meas(HalfLineMeasure::from_density(GridFn::from_fn(g, 1, 1, |s| dmatrix![s]))),
        ];
        let r = check_semigroup_law(&sg, &y, 0.75, 0.5, &probes).unwrap();
        assert!(r < 5e-4, "residual {r}");
    }

    #[test]
    fn generator_integral_identity() {
        // y(theta) = cos(theta), z = y' = -sin(theta) except z(0) = <zeta, y>
        let g = grid(0.002);
        let zeta = HalfLineMeasure::from_atoms(
            g,
            1,
            1,
            vec![Atom { loc: 1.0, weight: dmatrix![-1.0] }],
        )
        .unwrap();
        let sys = RfdeSystem::new(zeta.clone(), 2.0).unwrap();
        let y = History::from_fn(g, 1, 1, |th| dmatrix![th.cos()]);
        let mut z = History::from_fn(g, 1, 1, |th| dmatrix![-th.sin()]);
        z.at_zero = pair_history(&zeta, &y).unwrap();
        let r = check_generator_integral(&sys, &y, &z, 1.5).unwrap();
        assert!(r < 5e-5, "residual {r}");
    }
}
