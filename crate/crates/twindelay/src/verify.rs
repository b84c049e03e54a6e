//! Seeded self-check suites: every module's key invariants exercised on
//! random instances, with residuals reported against explicit tolerances.
//! Identical seeds give identical reports.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::linalg::mat_norm;
use crate::measure::{Atom, HalfLineMeasure};
use crate::neutral::{self, NfdeSystem};
use crate::perturbation;
use crate::renewal::{self, ReSystem};
use crate::resolvent::{
    default_tol, measure_sub, resolvent_measure, resolvent_residuals,
};
use crate::rfde::{self, RfdeSystem};
use crate::semigroup::{
    check_generator_integral, check_semigroup_law, Probe, State, TwinSemigroup,
};
use crate::stability::{self, Verdict};
use crate::state::{pair_history, CumulativeHistory, History};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
}

impl Check {
    fn new(name: &str, residual: f64, tol: f64) -> Check {
        Check { name: name.into(), residual, tol }
    }

    pub fn passed(&self) -> bool {
        self.residual.is_finite() && self.residual <= self.tol
    }
}

pub const SUITES: &[&str] =
    &["measures", "resolvent", "semigroup", "perturbation", "rfde", "nfde", "re"];

pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Check>> {
    match name {
        "measures" => suite_measures(seed),
        "resolvent" => suite_resolvent(seed),
        "semigroup" => suite_semigroup(seed),
        "perturbation" => suite_perturbation(seed),
        "rfde" => suite_rfde(seed),
        "nfde" => suite_nfde(seed),
        "re" => suite_re(seed),
        other => Err(Error::InvalidArgument(format!("unknown suite {other:?}"))),
    }
}

pub fn run_all(seed: u64) -> Result<Vec<(String, Vec<Check>)>> {
    SUITES.iter().map(|s| Ok((s.to_string(), run_suite(s, seed)?))).collect()
}

// ---- random instance generators (shared with the acceptance tests) ----

pub fn rand_atoms(rng: &mut impl Rng, n: usize, count: usize, scale: f64) -> Vec<Atom> {
    (0..count)
        .map(|_| Atom {
            loc: rng.random_range(0.05..=1.0),
            weight: DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale)),
        })
        .collect()
}

pub fn rand_atom_measure(rng: &mut impl Rng, grid: Grid, n: usize, count: usize) -> HalfLineMeasure {
    HalfLineMeasure::from_atoms(grid, n, n, rand_atoms(rng, n, count, 0.4 / n as f64)).unwrap()
}

/// Smooth density from a short random trigonometric sum.
pub fn rand_density(rng: &mut impl Rng, grid: Grid, rows: usize, cols: usize, scale: f64) -> GridFn {
    let a = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale));
    let b = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale));
    let c = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale));
    let w = rng.random_range(1.0..4.0);
    GridFn::from_values(
        grid,
        grid.nodes().map(|s| &a + &b * s + &c * (w * s).sin()).collect(),
    )
    .unwrap()
}

pub fn rand_mixed_measure(rng: &mut impl Rng, grid: Grid, n: usize) -> HalfLineMeasure {
    let count = rng.random_range(1..=3);
    HalfLineMeasure::new(
        rand_density(rng, grid, n, n, 0.3 / n as f64),
        rand_atoms(rng, n, count, 0.3 / n as f64),
    )
    .unwrap()
}

pub fn rand_ac_measure(rng: &mut impl Rng, grid: Grid, n: usize) -> HalfLineMeasure {
    HalfLineMeasure::from_density(rand_density(rng, grid, n, n, 0.5 / n as f64))
}

/// Smooth random history, continuous at the distinguished point.
pub fn rand_history(rng: &mut impl Rng, grid: Grid, n: usize) -> History {
    let f = rand_density(rng, grid, n, 1, 1.0);
    let at_zero = f.values[f.values.len() - 1].clone();
    History::new(f, at_zero).unwrap()
}

pub fn rand_cumulative(rng: &mut impl Rng, grid: Grid, n: usize) -> CumulativeHistory {
    let atoms = (0..rng.random_range(1..=2))
        .map(|_| Atom {
            loc: rng.random_range(0.1..0.9),
            weight: DMatrix::from_fn(n, 1, |_, _| rng.random_range(-0.5..0.5)),
        })
        .collect();
    CumulativeHistory::new(
        HalfLineMeasure::new(rand_density(rng, grid, n, 1, 0.5), atoms).unwrap(),
    )
}

/// Random pair `(y, z)` with `y` smooth, `z = y'` and the distinguished
/// value of `z` set to the pairing, as the generator domain requires.
pub fn rand_domain_pair(
    rng: &mut impl Rng,
    grid: Grid,
    zeta: &HalfLineMeasure,
) -> Result<(History, History)> {
    let n = zeta.rows;
    let a = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let w: f64 = rng.random_range(1.0..3.0);
    let horizon = grid.horizon();
    let yf = |th: f64| &a + &b * th + &c * (w * th).sin();
    let zf = |th: f64| &b + &c * w * (w * th).cos();
    let y = History::new(
        GridFn::from_values(grid, grid.nodes().map(|s| yf(s - horizon)).collect())?,
        yf(0.0),
    )?;
    let z0 = pair_history(zeta, &y)?;
    let z = History::new(
        GridFn::from_values(grid, grid.nodes().map(|s| zf(s - horizon)).collect())?,
        z0,
    )?;
    Ok((y, z))
}

// ---- suites ----

fn suite_measures(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(1.0, 1e-3)?;
    let mut checks = Vec::new();

    let mut assoc = 0.0_f64;
    for _ in 0..5 {
        let a = rand_atom_measure(&mut rng, grid, 2, 3).with_horizon(3.0)?;
        let b = rand_atom_measure(&mut rng, grid, 2, 3).with_horizon(3.0)?;
        let c = rand_atom_measure(&mut rng, grid, 2, 3).with_horizon(3.0)?;
        let left = a.convolve(&b)?.convolve(&c)?;
        let right = a.convolve(&b.convolve(&c)?)?;
        assoc = assoc.max(measure_sub(&left, &right)?.tv_norm());
    }
    checks.push(Check::new("atom convolution associativity", assoc, 1e-12));

    let m = rand_mixed_measure(&mut rng, grid, 2);
    let dist = m.distribution();
    let mut dv = 0.0_f64;
    for _ in 0..20 {
        // agreement is exact on nodes; between nodes the distribution is
        // interpolated and only O(h^2) close
        let t = rng.random_range(0..grid.len()) as f64 * grid.step();
        dv = dv.max(mat_norm(&(dist.value(t) - m.eval_closed(t))));
    }
    checks.push(Check::new("distribution matches closed evaluation", dv, 1e-12));

    let back = HalfLineMeasure::from_json(&m.to_json(), Some(grid))?;
    checks.push(Check::new(
        "serialization round-trip",
        measure_sub(&m, &back)?.tv_norm(),
        0.0,
    ));

    let lam = nalgebra::Complex::new(0.7, 1.3);
    let atom = &m.atoms[0];
    let single = HalfLineMeasure::from_atoms(grid, 2, 2, vec![atom.clone()])?;
    let expect = atom.weight.map(|w| nalgebra::Complex::new(w, 0.0) * (-lam * atom.loc).exp());
    let got = single.laplace(lam);
    let lap_err = (0..2)
        .flat_map(|r| (0..2).map(move |c| (r, c)))
        .map(|(r, c)| (got[(r, c)] - expect[(r, c)]).norm())
        .fold(0.0_f64, f64::max);
    checks.push(Check::new("transform of a point mass", lap_err, 1e-12));
    Ok(checks)
}

fn suite_resolvent(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(1.0, 1e-3)?;
    let mut checks = Vec::new();

    let mut atom_res = 0.0_f64;
    for _ in 0..5 {
        let n = rng.random_range(1..=3);
        let count = rng.random_range(1..=5);
        let mu = rand_atom_measure(&mut rng, grid, n, count).with_horizon(2.0)?;
        let rho = resolvent_measure(&mu)?;
        let (r1, r2) = resolvent_residuals(&mu, &rho)?;
        atom_res = atom_res.max(r1.max(r2));
    }
    checks.push(Check::new("pure-atom resolvent identity", atom_res, 1e-10));

    let mu = rand_mixed_measure(&mut rng, grid, 2).with_horizon(2.0)?;
    let rho = resolvent_measure(&mu)?;
    let (r1, r2) = resolvent_residuals(&mu, &rho)?;
    let tol = default_tol(1e-3, 2.0, mu.tv_norm().max(rho.tv_norm()));
    checks.push(Check::new("mixed-measure resolvent identity", r1.max(r2), tol));

    let half = HalfLineMeasure::from_atoms(
        grid,
        1,
        1,
        vec![Atom { loc: 0.0, weight: DMatrix::from_element(1, 1, 0.5) }],
    )?
    .with_horizon(2.0)?;
    let rho = resolvent_measure(&half)?;
    checks.push(Check::new(
        "half mass at zero resolves to unit mass",
        (rho.atom_at_zero()[(0, 0)] - 1.0).abs(),
        0.0,
    ));

    let full = HalfLineMeasure::from_atoms(
        grid,
        1,
        1,
        vec![Atom { loc: 0.0, weight: DMatrix::from_element(1, 1, 1.0) }],
    )?
    .with_horizon(2.0)?;
    let singular = matches!(resolvent_measure(&full), Err(Error::SingularAtZero));
    checks.push(Check::new(
        "unit mass at zero is rejected",
        if singular { 0.0 } else { 1.0 },
        0.0,
    ));
    Ok(checks)
}

fn suite_semigroup(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 5e-3;
    let grid = Grid::new(1.0, h)?;
    let mut checks = Vec::new();

    let mut shift_h = 0.0_f64;
    let mut shift_c = 0.0_f64;
    for _ in 0..5 {
        let y = State::Hist(rand_history(&mut rng, grid, 2));
        let (t, s) = grid_times(&mut rng, h);
        shift_h = shift_h.max(check_semigroup_law(&TwinSemigroup::ShiftHistory, &y, t, s, &[])?);
        let p = State::Cum(rand_cumulative(&mut rng, grid, 2));
        shift_c =
            shift_c.max(check_semigroup_law(&TwinSemigroup::ShiftCumulative, &p, t, s, &[])?);
    }
    checks.push(Check::new("shift law on histories", shift_h, 1e-12));
    checks.push(Check::new("shift law on cumulative states", shift_c, 1e-12));

    let zeta = rand_ac_measure(&mut rng, grid, 2);
    let tv = zeta.tv_norm();
    let sys = RfdeSystem::new(zeta.clone(), 3.0)?;
    let sg = TwinSemigroup::Rfde(sys.clone());
    let y = State::Hist(rand_history(&mut rng, grid, 2));
    let probes = [Probe::Meas(rand_mixed_measure(&mut rng, grid, 2))];
    let law = check_semigroup_law(&sg, &y, 0.75, 0.5, &probes)?;
    checks.push(Check::new(
        "delay semigroup law",
        law,
        5.0 * default_tol(h, 3.0, tv),
    ));

    let (yd, zd) = rand_domain_pair(&mut rng, grid, &zeta)?;
    let gen = check_generator_integral(&sys, &yd, &zd, 1.5)?;
    checks.push(Check::new(
        "generator integral identity",
        gen,
        5.0 * default_tol(h, 3.0, tv),
    ));
    Ok(checks)
}

fn grid_times(rng: &mut impl Rng, h: f64) -> (f64, f64) {
    let steps = (1.0 / h) as i64;
    let t = rng.random_range(1..steps) as f64 * h;
    let s = rng.random_range(1..steps) as f64 * h;
    (t, s)
}

fn suite_perturbation(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 5e-3;
    let grid = Grid::new(1.0, h)?;
    let mut checks = Vec::new();

    let zeta = rand_ac_measure(&mut rng, grid, 2);
    let tv = zeta.tv_norm();
    let sys = RfdeSystem::new(zeta.clone(), 2.0)?;
    let phi = rand_history(&mut rng, grid, 2);
    let mut worst = 0.0_f64;
    for &t in &[0.6, 1.4] {
        let a = rfde::apply(&sys, t, &phi)?;
        let b = perturbation::delay_apply_bounded(&zeta, t, &phi)?;
        worst = worst.max(a.diff_norm(&b));
    }
    checks.push(Check::new(
        "bounded-rank route matches translation",
        worst,
        5.0 * default_tol(h, 2.0, tv),
    ));

    let hre = 2e-3;
    let gre = Grid::new(1.0, hre)?;
    let kf = rand_density(&mut rng, gre, 1, 1, 0.8);
    let re = ReSystem::smooth(kf.clone(), 2.0)?;
    let psi = rand_cumulative(&mut rng, gre, 1);
    let k = perturbation::renewal_rank_kernel(&kf, re.grid)?;
    let f = perturbation::renewal_rank_forcing(&kf, &psi, re.grid)?;
    let v = perturbation::rank_output(&k, &f)?;
    let b = renewal::birth_rate(&re, &psi)?;
    checks.push(Check::new(
        "rank output is the birth rate",
        v.sub(&b)?.sup_norm(),
        2e-3,
    ));

    let l = HalfLineMeasure::new(
        rand_density(&mut rng, gre, 1, 1, 0.5),
        vec![Atom { loc: rng.random_range(0.3..0.9), weight: DMatrix::from_element(1, 1, 0.6) }],
    )?;
    let re_bv = ReSystem::bv(l, 2.0)?;
    let psi2 = rand_cumulative(&mut rng, gre, 1);
    let mut bv_worst = 0.0_f64;
    for &t in &[0.5, 1.5] {
        let a = renewal::apply(&re_bv, t, &psi2)?;
        let b = perturbation::re_apply_stieltjes(&re_bv, t, &psi2)?;
        bv_worst = bv_worst.max(a.diff_tv(&b)?);
    }
    checks.push(Check::new("cumulative route matches direct aging", bv_worst, 1e-8));
    Ok(checks)
}

fn suite_rfde(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // x'(t) = -x(t-1), unit history: x(1) = 0, x(2) = -1/2
    let oracle = |h: f64| -> Result<f64> {
        let g = Grid::new(1.0, h)?;
        let zeta = HalfLineMeasure::from_atoms(
            g,
            1,
            1,
            vec![Atom { loc: 1.0, weight: DMatrix::from_element(1, 1, -1.0) }],
        )?;
        let sys = RfdeSystem::new(zeta, 2.0)?;
        let traj = rfde::solve_ivp(&sys, &History::constant(g, DMatrix::from_element(1, 1, 1.0)))?;
        Ok((traj.x.eval(1.0)[(0, 0)]).abs().max((traj.x.eval(2.0)[(0, 0)] + 0.5).abs()))
    };
    let e1 = oracle(1e-3)?;
    checks.push(Check::new("piecewise-polynomial oracle", e1, 2e-3));
    let e2 = oracle(5e-4)?;
    let ratio = if e2 > 0.0 { e1 / e2 } else { f64::INFINITY };
    checks.push(Check::new(
        "error shrinks at least 3x under step halving",
        if ratio >= 3.0 || e1 < 1e-10 { 0.0 } else { 3.0 - ratio },
        0.0,
    ));

    let h = 5e-3;
    let grid = Grid::new(1.0, h)?;
    let zeta = rand_ac_measure(&mut rng, grid, 2);
    let tv = zeta.tv_norm();
    let sys = RfdeSystem::new(zeta, 2.0)?;
    let phi = rand_history(&mut rng, grid, 2);
    let rho = rfde::zeta_fun_resolvent(&sys)?;
    let mut worst = 0.0_f64;
    for &t in &[0.7, 1.3] {
        let a = rfde::apply(&sys, t, &phi)?;
        let b = rfde::apply_via_kernel(&sys, &rho, t, &phi)?;
        worst = worst.max(a.diff_norm(&b));
    }
    checks.push(Check::new(
        "kernel route matches translation",
        worst,
        5.0 * default_tol(h, 2.0, tv),
    ));
    Ok(checks)
}

fn suite_nfde(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 5e-3;
    let grid = Grid::new(1.0, h)?;
    let mut checks = Vec::new();

    // d/dt [x - 0.5 x(t-1)] = -x(t-1), unit history: method of steps gives
    // x(1) = 0, x(1.5) = -5/8, x(2) = -1 (computed by hand from the
    // piecewise-linear pieces)
    let g = Grid::new(1.0, 1e-3)?;
    let eta = HalfLineMeasure::from_atoms(
        g,
        1,
        1,
        vec![Atom { loc: 1.0, weight: DMatrix::from_element(1, 1, 0.5) }],
    )?;
    let zeta = HalfLineMeasure::from_atoms(
        g,
        1,
        1,
        vec![Atom { loc: 1.0, weight: DMatrix::from_element(1, 1, -1.0) }],
    )?;
    let sys = NfdeSystem::new(eta, zeta, 2.0)?;
    let traj = neutral::solve_nfde(&sys, &History::constant(g, DMatrix::from_element(1, 1, 1.0)))?;
    let worst = (traj.x.eval(1.0)[(0, 0)])
        .abs()
        .max((traj.x.eval(1.5)[(0, 0)] + 0.625).abs())
        .max((traj.x.eval(2.0)[(0, 0)] + 1.0).abs());
    checks.push(Check::new("neutral method-of-steps oracle", worst, 1e-5));

    let eta = HalfLineMeasure::from_atoms(
        grid,
        1,
        1,
        vec![Atom { loc: 0.5, weight: DMatrix::from_element(1, 1, 0.3) }],
    )?;
    let zeta = rand_ac_measure(&mut rng, grid, 1);
    let sys = NfdeSystem::new(eta, zeta, 2.0)?;
    let pert = neutral::prepare_perturbation(&sys)?;
    let phi = rand_history(&mut rng, grid, 1);
    let mut diff = 0.0_f64;
    for &t in &[0.4, 1.2] {
        let a = neutral::apply(&sys, t, &phi)?;
        let b = neutral::apply_via_stieltjes(&sys, &pert, t, &phi)?;
        diff = diff.max(a.diff_norm(&b));
    }
    checks.push(Check::new("cumulative-output route matches translation", diff, 5e-3));

    let eta = HalfLineMeasure::from_density(GridFn::from_fn(grid, 1, 1, |_| {
        DMatrix::from_element(1, 1, 0.5)
    }));
    let zeta = HalfLineMeasure::from_atoms(
        grid,
        1,
        1,
        vec![Atom { loc: 0.0, weight: DMatrix::from_element(1, 1, -1.0) }],
    )?;
    let sys = NfdeSystem::new(eta, zeta, 2.0)?;
    let report = stability::nfde_stability(&sys)?;
    checks.push(Check::new(
        "distributed-difference example is stable",
        if report.verdict == Verdict::Stable { 0.0 } else { 1.0 },
        0.0,
    ));
    Ok(checks)
}

fn suite_re(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let g = Grid::new(1.0, 1e-2)?;
    let l = HalfLineMeasure::from_atoms(
        g,
        1,
        1,
        vec![Atom { loc: 1.0, weight: DMatrix::from_element(1, 1, 2.0) }],
    )?;
    let sys = ReSystem::bv(l, 3.0)?;
    let psi = CumulativeHistory::dirac_at_zero(g, 1, 0);
    let bc = renewal::cumulative_births(&sys, &psi)?;
    let worst = (bc.eval(1.0)[(0, 0)] - 2.0)
        .abs()
        .max((bc.eval(2.0)[(0, 0)] - 6.0).abs())
        .max((bc.eval(3.0)[(0, 0)] - 14.0).abs());
    checks.push(Check::new("doubling generations are exact", worst, 0.0));

    let h = 2e-3;
    let grid = Grid::new(1.0, h)?;
    let kf = rand_density(&mut rng, grid, 1, 1, 0.8);
    let sys = ReSystem::smooth(kf.clone(), 2.0)?;
    let q = CumulativeHistory::dirac_at_zero(grid, 1, 0);
    let f = renewal::smooth_forcing(&sys, &q)?;
    let mut newborn = 0.0_f64;
    for &t in &[0.0, 0.4, 0.9] {
        newborn = newborn.max(mat_norm(&(f.eval(t) - kf.eval(t))));
    }
    checks.push(Check::new("newborn cohort forcing is the kernel", newborn, 1e-12));

    // node-aligned jump locations: the direct marching oracle lerps across
    // discontinuities of B and loses accuracy when jumps fall between nodes
    let snap = |x: f64| (x / h).round() * h;
    let l = HalfLineMeasure::new(
        rand_density(&mut rng, grid, 1, 1, 0.5),
        vec![Atom { loc: snap(rng.random_range(0.3..0.9)), weight: DMatrix::from_element(1, 1, 0.5) }],
    )?;
    let sys = ReSystem::bv(l.clone(), 2.0)?;
    let psi = {
        let raw = rand_cumulative(&mut rng, grid, 1);
        let atoms = raw
            .measure
            .atoms
            .iter()
            .map(|a| Atom { loc: snap(a.loc), weight: a.weight.clone() })
            .collect();
        CumulativeHistory::new(HalfLineMeasure::new(raw.measure.density.clone(), atoms)?)
    };
    let nf = renewal::bv_forcing_measure(&sys, &psi)?;
    let fdist = nf.distribution();
    let fvals =
        GridFn::from_values(sys.grid, sys.grid.nodes().map(|t| fdist.value(t)).collect())?;
    let direct = crate::resolvent::renewal_solve(&l.with_horizon(2.0)?, &fvals)?;
    let via_measure = renewal::cumulative_births(&sys, &psi)?;
    let res = direct.sub(&via_measure)?.sup_norm();
    checks.push(Check::new(
        "measure-level births match direct marching",
        res,
        default_tol(h, 2.0, l.tv_norm().max(1.0)) * (1.0 + psi.tv_norm()),
    ));
    Ok(checks)
}
