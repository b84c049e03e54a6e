//! Acceptance gate: twelve end-to-end criteria, one reported line each.
//! Every criterion runs even if an earlier one fails; the test asserts at
//! the end so the full scoreboard is always printed.

use std::time::Instant;

use nalgebra::{dmatrix, DMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twindelay::grid::GridFn;
use twindelay::linalg::mat_norm;
use twindelay::measure::{Atom, HalfLineMeasure};
use twindelay::neutral::{self, NfdeSystem};
use twindelay::perturbation;
use twindelay::renewal::{self, ReSystem};
use twindelay::resolvent::{default_tol, resolvent_residuals};
use twindelay::rfde::{self, RfdeSystem};
use twindelay::semigroup::{check_generator_integral, check_semigroup_law, State, TwinSemigroup};
use twindelay::stability::{self, decay_corroborate, Verdict};
use twindelay::state::{pair_history, CumulativeHistory, History};
use twindelay::verify::{
    self, rand_ac_measure, rand_cumulative, rand_density, rand_domain_pair,
    rand_history, rand_mixed_measure,
};
use twindelay::{resolvent_measure, Error, Grid, Result};

struct Outcome {
    name: &'static str,
    detail: String,
    pass: bool,
}

fn report(results: &mut Vec<Outcome>, name: &'static str, r: Result<(bool, String)>) {
    let (pass, detail) = match r {
        Ok((p, d)) => (p, d),
        Err(e) => (false, format!("error: {e}")),
    };
    results.push(Outcome { name, detail, pass });
}

fn grid_time(rng: &mut impl Rng, h: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo / h).ceil() as i64;
    let b = (hi / h).floor() as i64;
    rng.random_range(a..=b) as f64 * h
}

fn delay_oracle_error(h: f64) -> Result<f64> {
    let g = Grid::new(1.0, h)?;
    let zeta =
        HalfLineMeasure::from_atoms(g, 1, 1, vec![Atom { loc: 1.0, weight: dmatrix![-1.0] }])?;
    let sys = RfdeSystem::new(zeta, 2.0)?;
    let traj = rfde::solve_ivp(&sys, &History::constant(g, dmatrix![1.0]))?;
    Ok(traj.x.eval(1.0)[(0, 0)].abs().max((traj.x.eval(2.0)[(0, 0)] + 0.5).abs()))
}

fn criterion_1() -> Result<(bool, String)> {
    let start = Instant::now();
    let err = delay_oracle_error(1e-3)?;
    let dt = start.elapsed().as_secs_f64();
    Ok((err <= 2e-3 && dt < 1.0, format!("error {err:.2e}, {dt:.2}s")))
}

fn criterion_2() -> Result<(bool, String)> {
    let e1 = delay_oracle_error(1e-3)?;
    let e2 = delay_oracle_error(5e-4)?;
    let atom_ok = e1 / e2 >= 3.0 || e1 < 1e-10;
    // the point-delay oracle is atom-exact, so also show the second-order
    // contract on a kernel where the error is actually of size h^2:
    // x' = -int_0^1 x(t-s) ds against a fine-grid reference
    let ac_error = |h: f64| -> Result<f64> {
        let g = Grid::new(1.0, h)?;
        let zeta = HalfLineMeasure::from_density(GridFn::from_fn(g, 1, 1, |_| dmatrix![-1.0]));
        let sys = RfdeSystem::new(zeta, 2.0)?;
        let traj = rfde::solve_ivp(&sys, &History::constant(g, dmatrix![1.0]))?;
        Ok(traj.x.eval(2.0)[(0, 0)])
    };
    let reference = ac_error(6.25e-5)?;
    let a1 = (ac_error(1e-3)? - reference).abs();
    let a2 = (ac_error(5e-4)? - reference).abs();
    let ratio = a1 / a2;
    Ok((
        atom_ok && ratio >= 3.0,
        format!("atom-exact at both steps: {atom_ok}, distributed-kernel ratio {ratio:.2}"),
    ))
}

fn criterion_3() -> Result<(bool, String)> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = Grid::new(1.0, 1e-3)?;
    let mut atom_worst = 0.0_f64;
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let count = rng.random_range(1..=5);
        // locations bounded away from zero keep the number of surviving
        // convolution generations small; residuals stay exact either way
        let atoms = (0..count)
            .map(|_| Atom {
                loc: rng.random_range(0.25..=1.0),
                weight: DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.4..0.4) / n as f64),
            })
            .collect();
        let mu = HalfLineMeasure::from_atoms(grid, n, n, atoms)?.with_horizon(2.0)?;
        let rho = resolvent_measure(&mu)?;
        let (r1, r2) = resolvent_residuals(&mu, &rho)?;
        atom_worst = atom_worst.max(r1.max(r2));
    }
    let mut mixed_worst = 0.0_f64;
    let mut mixed_tol = 0.0_f64;
    for n in [2, 1] {
        let mu = rand_mixed_measure(&mut rng, grid, n).with_horizon(2.0)?;
        let rho = resolvent_measure(&mu)?;
        let (r1, r2) = resolvent_residuals(&mu, &rho)?;
        mixed_worst = mixed_worst.max(r1.max(r2));
        mixed_tol = mixed_tol.max(default_tol(1e-3, 2.0, mu.tv_norm().max(rho.tv_norm())));
    }
    let dt = start.elapsed().as_secs_f64();
    let pass = atom_worst <= 1e-10 && mixed_worst <= mixed_tol && dt < 5.0;
    Ok((
        pass,
        format!("atoms {atom_worst:.1e}, mixed {mixed_worst:.1e} (tol {mixed_tol:.1e}), {dt:.2}s"),
    ))
}

fn criterion_4() -> Result<(bool, String)> {
    let grid = Grid::new(1.0, 1e-2)?;
    let half = HalfLineMeasure::from_atoms(
        grid,
        1,
        1,
        vec![Atom { loc: 0.0, weight: dmatrix![0.5] }],
    )?
    .with_horizon(2.0)?;
    let exact = resolvent_measure(&half)?.atom_at_zero()[(0, 0)] == 1.0;
    let full = HalfLineMeasure::from_atoms(
        grid,
        1,
        1,
        vec![Atom { loc: 0.0, weight: dmatrix![1.0] }],
    )?
    .with_horizon(2.0)?;
    let rejected = matches!(resolvent_measure(&full), Err(Error::SingularAtZero));
    Ok((exact && rejected, format!("half-mass exact: {exact}, unit mass rejected: {rejected}")))
}

fn criterion_5() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 5e-3;
    let grid = Grid::new(1.0, h)?;

    let mut shift_worst = 0.0_f64;
    for _ in 0..50 {
        let t = grid_time(&mut rng, h, h, 1.0);
        let s = grid_time(&mut rng, h, h, 1.0);
        let y = State::Hist(rand_history(&mut rng, grid, 2));
        shift_worst =
            shift_worst.max(check_semigroup_law(&TwinSemigroup::ShiftHistory, &y, t, s, &[])?);
        let p = State::Cum(rand_cumulative(&mut rng, grid, 2));
        shift_worst =
            shift_worst.max(check_semigroup_law(&TwinSemigroup::ShiftCumulative, &p, t, s, &[])?);
    }

    let mut worst_ratio = 0.0_f64;
    for i in 0..20 {
        let t = grid_time(&mut rng, h, 0.2, 1.4);
        let s = grid_time(&mut rng, h, 0.2, 1.4);
        let (sg, state, tv) = match i % 3 {
            0 => {
                let zeta = rand_ac_measure(&mut rng, grid, 2);
                let tv = zeta.tv_norm();
                let sg = TwinSemigroup::Rfde(RfdeSystem::new(zeta, 3.0)?);
                (sg, State::Hist(rand_history(&mut rng, grid, 2)), tv)
            }
            1 => {
                let eta = HalfLineMeasure::from_atoms(
                    grid,
                    1,
                    1,
                    vec![Atom {
                        loc: grid_time(&mut rng, h, 0.3, 0.9),
                        weight: dmatrix![rng.random_range(-0.4..0.4)],
                    }],
                )?;
                let zeta = rand_ac_measure(&mut rng, grid, 1);
                let tv = eta.tv_norm() + zeta.tv_norm();
                let sg = TwinSemigroup::Nfde(NfdeSystem::new(eta, zeta, 3.0)?);
                (sg, State::Hist(rand_history(&mut rng, grid, 1)), tv)
            }
            _ => {
                let k = rand_density(&mut rng, grid, 1, 1, 0.8);
                let tv = HalfLineMeasure::from_density(k.clone()).tv_norm();
                let sg = TwinSemigroup::Re(ReSystem::smooth(k, 3.0)?);
                (sg, State::Cum(rand_cumulative(&mut rng, grid, 1)), tv)
            }
        };
        let res = check_semigroup_law(&sg, &state, t, s, &[])?;
        worst_ratio = worst_ratio.max(res / (5.0 * default_tol(h, 3.0, tv)));
    }
    let pass = shift_worst <= 1e-12 && worst_ratio <= 1.0;
    Ok((
        pass,
        format!("shift {shift_worst:.1e}, concrete worst residual/tol {worst_ratio:.2}"),
    ))
}

fn criterion_6() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 5e-3;
    let grid = Grid::new(1.0, h)?;
    let mut worst_ratio = 0.0_f64;
    for _ in 0..10 {
        let zeta = rand_ac_measure(&mut rng, grid, 2);
        let tv = zeta.tv_norm();
        let sys = RfdeSystem::new(zeta.clone(), 3.0)?;
        let (y, z) = rand_domain_pair(&mut rng, grid, &zeta)?;
        let res = check_generator_integral(&sys, &y, &z, 1.5)?;
        worst_ratio = worst_ratio.max(res / (5.0 * default_tol(h, 3.0, tv)));
    }
    Ok((worst_ratio <= 1.0, format!("worst residual/tol {worst_ratio:.2}")))
}

fn criterion_7() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 5e-3;
    let grid = Grid::new(1.0, h)?;

    let mut rfde_ratio = 0.0_f64;
    for _ in 0..10 {
        let zeta = rand_ac_measure(&mut rng, grid, 2);
        let tv = zeta.tv_norm();
        let sys = RfdeSystem::new(zeta.clone(), 2.0)?;
        let phi = rand_history(&mut rng, grid, 2);
        let t = grid_time(&mut rng, h, 0.2, 1.8);
        let a = rfde::apply(&sys, t, &phi)?;
        let b = perturbation::delay_apply_bounded(&zeta, t, &phi)?;
        rfde_ratio = rfde_ratio.max(a.diff_norm(&b) / (5.0 * default_tol(h, 2.0, tv)));
    }

    let mut nfde_ratio = 0.0_f64;
    for _ in 0..10 {
        let eta = HalfLineMeasure::from_atoms(
            grid,
            1,
            1,
            vec![Atom {
                loc: grid_time(&mut rng, h, 0.3, 0.9),
                weight: dmatrix![rng.random_range(-0.4..0.4)],
            }],
        )?;
        let zeta = rand_ac_measure(&mut rng, grid, 1);
        let tv = eta.tv_norm() + zeta.tv_norm();
        let sys = NfdeSystem::new(eta, zeta, 2.0)?;
        let pert = neutral::prepare_perturbation(&sys)?;
        let phi = rand_history(&mut rng, grid, 1);
        let t = grid_time(&mut rng, h, 0.2, 1.8);
        let a = neutral::apply(&sys, t, &phi)?;
        let b = neutral::apply_via_stieltjes(&sys, &pert, t, &phi)?;
        nfde_ratio = nfde_ratio.max(a.diff_norm(&b) / (5.0 * default_tol(h, 2.0, tv)));
    }

    let mut re_ratio = 0.0_f64;
    for _ in 0..10 {
        let l = HalfLineMeasure::new(
            rand_density(&mut rng, grid, 1, 1, 0.5),
            vec![Atom {
                loc: grid_time(&mut rng, h, 0.3, 0.9),
                weight: dmatrix![rng.random_range(-0.6..0.6)],
            }],
        )?;
        let tv = l.tv_norm();
        let sys = ReSystem::bv(l, 2.0)?;
        let psi = rand_cumulative(&mut rng, grid, 1);
        let t = grid_time(&mut rng, h, 0.2, 1.8);
        let a = renewal::apply(&sys, t, &psi)?;
        let b = perturbation::re_apply_stieltjes(&sys, t, &psi)?;
        re_ratio = re_ratio.max(a.diff_tv(&b)? / (5.0 * default_tol(h, 2.0, tv)));
    }

    let pass = rfde_ratio <= 1.0 && nfde_ratio <= 1.0 && re_ratio <= 1.0;
    Ok((
        pass,
        format!("residual/tol rfde {rfde_ratio:.2}, nfde {nfde_ratio:.2}, re-bv {re_ratio:.2}"),
    ))
}

fn criterion_8() -> Result<(bool, String)> {
    // zeta = -delta_1, unit history: the transform of the orbit value at
    // theta is e^{lambda theta} (e^{-lambda theta} - 1 + Delta(1)^{-1} *
    // numerator) with the resolvent value 1/(e + 1) at lambda = 1
    let h = 1e-3;
    let g = Grid::new(1.0, h)?;
    let zeta =
        HalfLineMeasure::from_atoms(g, 1, 1, vec![Atom { loc: 1.0, weight: dmatrix![-1.0] }])?;
    let sys = RfdeSystem::new(zeta, 30.0)?;
    let traj = rfde::solve_ivp(&sys, &History::constant(g, dmatrix![1.0]))?;
    let lambda = 1.0_f64;
    let xhat = 1.0 / (1.0_f64.exp() + 1.0);
    let mut worst = 0.0_f64;
    for &theta in &[-1.0, -0.5, 0.0] {
        let x_at = |u: f64| if u <= 0.0 { 1.0 } else { traj.x.eval(u)[(0, 0)] };
        // trapezoid over the solver grid
        let n = sys.grid.len();
        let mut acc = 0.0;
        for i in 0..n {
            let t = i as f64 * h;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += w * h * (-lambda * t).exp() * x_at(t + theta);
        }
        let analytic = (lambda * theta).exp()
            * (((-lambda * theta).exp() - 1.0) / lambda + xhat);
        worst = worst.max((acc - analytic).abs());
    }
    Ok((worst <= 1e-3, format!("worst transform deviation {worst:.1e}")))
}

fn criterion_9() -> Result<(bool, String)> {
    let g = Grid::new(1.0, 1e-2)?;
    let l = HalfLineMeasure::from_atoms(g, 1, 1, vec![Atom { loc: 1.0, weight: dmatrix![2.0] }])?;
    let sys = ReSystem::bv(l, 3.0)?;
    let psi = CumulativeHistory::dirac_at_zero(g, 1, 0);
    let bc = renewal::cumulative_births(&sys, &psi)?;
    let births_exact = bc.eval(1.0)[(0, 0)] == 2.0 && bc.eval(2.0)[(0, 0)] == 6.0;
    let st = renewal::apply(&sys, 1.5, &psi)?;
    let cohort = st.measure.atoms.len() == 1
        && (st.measure.atoms[0].loc - 0.5).abs() < 1e-12
        && st.measure.atoms[0].weight[(0, 0)] == 2.0;
    Ok((births_exact && cohort, format!("births exact: {births_exact}, cohort exact: {cohort}")))
}

fn criterion_10() -> Result<(bool, String)> {
    let start = Instant::now();
    let g = Grid::new(1.0, 1e-3)?;
    let atom_sys = |w: f64| -> Result<RfdeSystem> {
        let zeta =
            HalfLineMeasure::from_atoms(g, 1, 1, vec![Atom { loc: 1.0, weight: dmatrix![w] }])?;
        RfdeSystem::new(zeta, 2.0)
    };
    let stable = stability::rfde_stability(&atom_sys(-0.5)?)?.verdict == Verdict::Stable;

    let unstable_report = stability::rfde_stability(&atom_sys(1.0)?)?;
    let lambert = 0.567_143_290_409_783_8;
    let unstable = unstable_report.verdict == Verdict::Unstable
        && unstable_report
            .witness_root
            .is_some_and(|z| (z.re - lambert).abs() < 1e-6 && z.im.abs() < 1e-6);

    let gl = Grid::new(1.0, 1e-2)?;
    let l = HalfLineMeasure::from_atoms(gl, 1, 1, vec![Atom { loc: 1.0, weight: dmatrix![2.0] }])?;
    let re_report = stability::re_stability(&ReSystem::bv(l, 2.0)?)?;
    let doubling = re_report.verdict == Verdict::Unstable
        && re_report
            .witness_root
            .is_some_and(|z| (z.re - std::f64::consts::LN_2).abs() < 1e-6);

    // neutral example with a flat distributed difference part and c = 1
    let gn = Grid::new(1.0, 0.01)?;
    let eta = HalfLineMeasure::from_density(GridFn::from_fn(gn, 1, 1, |_| dmatrix![0.5]));
    let zeta =
        HalfLineMeasure::from_atoms(gn, 1, 1, vec![Atom { loc: 0.0, weight: dmatrix![-1.0] }])?;
    let nf_short = NfdeSystem::new(eta.clone(), zeta.clone(), 2.0)?;
    let nf_stable = stability::nfde_stability(&nf_short)?.verdict == Verdict::Stable;
    let nf_long = NfdeSystem::new(eta, zeta, 50.0)?;
    let ratio = decay_corroborate(
        &TwinSemigroup::Nfde(nf_long),
        &State::Hist(History::constant(gn, dmatrix![1.0])),
        50.0,
    )?;
    let dt = start.elapsed().as_secs_f64();
    let pass = stable && unstable && doubling && nf_stable && ratio <= 0.1 && dt < 30.0;
    Ok((
        pass,
        format!(
            "stable {stable}, unstable+witness {unstable}, doubling+witness {doubling}, \
             neutral stable {nf_stable}, decay ratio {ratio:.3}, {dt:.1}s"
        ),
    ))
}

fn criterion_11() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = 200;
    let h = 1.0 / m as f64;
    let grid = Grid::new(1.0, h)?;

    // step history sampled on the probe lattice; Dirac probes of unit total
    // variation recover its supremum norm
    let values: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = History::new(
        GridFn::from_values(grid, values.iter().map(|&v| dmatrix![v]).collect())?,
        dmatrix![values[values.len() - 1]],
    )?;
    let mut recovered = 0.0_f64;
    for i in 0..m {
        let probe = HalfLineMeasure::from_atoms(
            grid,
            1,
            1,
            vec![Atom { loc: i as f64 * h, weight: dmatrix![1.0] }],
        )?;
        recovered = recovered.max(mat_norm(&pair_history(&probe, &y)?));
    }
    let sup_err = (recovered - y.sup_norm()).abs();

    // atom functional paired with the sign-pattern history gives its total
    // variation with no quadrature at all
    let mut atoms = Vec::new();
    for i in 1..=5 {
        atoms.push(Atom { loc: i as f64 * 0.15, weight: dmatrix![rng.random_range(-1.0..1.0)] });
    }
    let mu = HalfLineMeasure::from_atoms(grid, 1, 1, atoms.clone())?;
    let sign_at = |u: f64| -> f64 {
        for a in &atoms {
            if (u + a.loc).abs() < h / 2.0 {
                return a.weight[(0, 0)].signum();
            }
        }
        0.0
    };
    let sign_hist = History::new(
        GridFn::from_values(
            grid,
            grid.nodes().map(|s| dmatrix![sign_at(s - 1.0)]).collect(),
        )?,
        dmatrix![sign_at(0.0)],
    )?;
    let tv_err = (pair_history(&mu, &sign_hist)?[(0, 0)] - mu.tv_norm()).abs();

    Ok((
        sup_err <= 1e-12 && tv_err == 0.0,
        format!("sup defect {sup_err:.1e}, tv defect {tv_err:.1e}"),
    ))
}

fn criterion_12() -> Result<(bool, String)> {
    let start = Instant::now();
    let a = verify::run_all(42)?;
    let b = verify::run_all(42)?;
    let mut all_pass = true;
    let mut deterministic = true;
    for ((sa, ca), (_, cb)) in a.iter().zip(&b) {
        for (x, y) in ca.iter().zip(cb) {
            all_pass &= x.passed();
            deterministic &= x.residual.to_bits() == y.residual.to_bits();
            if !x.passed() {
                eprintln!("  [{sa}] {}: residual {:.3e} > tol {:.3e}", x.name, x.residual, x.tol);
            }
        }
    }
    let dt = start.elapsed().as_secs_f64();
    Ok((
        all_pass && deterministic && dt < 60.0,
        format!("all pass: {all_pass}, deterministic: {deterministic}, {dt:.1}s"),
    ))
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    report(&mut results, "1 delay oracle match", criterion_1());
    report(&mut results, "2 grid convergence", criterion_2());
    report(&mut results, "3 resolvent identities", criterion_3());
    report(&mut results, "4 atom-at-zero reduction", criterion_4());
    report(&mut results, "5 semigroup law", criterion_5());
    report(&mut results, "6 generator integral identity", criterion_6());
    report(&mut results, "7 perturbation consistency", criterion_7());
    report(&mut results, "8 transform cross-check", criterion_8());
    report(&mut results, "9 cell-division exactness", criterion_9());
    report(&mut results, "10 stability verdicts", criterion_10());
    report(&mut results, "11 norming dualities", criterion_11());
    report(&mut results, "12 self-check suites", criterion_12());

    let mut failed = 0;
    for r in &results {
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {} — {}", r.name, r.detail);
        if !r.pass {
            failed += 1;
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
