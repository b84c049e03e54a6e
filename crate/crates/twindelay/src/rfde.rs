//! Delay differential equations `x'(t) = int_{[0,1]} zeta(d sigma) x(t - sigma)`
//! solved through their integrated renewal form.
//!
//! Integrating the equation once gives `x = Z * x + f` where `Z` is the
//! distribution function of the kernel measure and `*` is L1 convolution.
//! Using `int_0^t Z(t-s) x(s) ds = int zeta(du) X(t-u)` with `X` the running
//! integral of `x`, the solver marches node by node, handling the kernel's
//! atoms exactly (so discrete delays do not degrade the O(h^2) order).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::linalg::CMatrix;
use crate::measure::HalfLineMeasure;
use crate::state::History;

#[derive(Clone, Debug)]
pub struct RfdeSystem {
    pub dim: usize,
    /// Kernel measure on the delay interval, reflected to `[0, 1]`.
    pub zeta: HalfLineMeasure,
    /// Solution grid on `[0, T]`, same step as the kernel grid.
    pub grid: Grid,
}

impl RfdeSystem {
    pub fn new(zeta: HalfLineMeasure, horizon: f64) -> Result<RfdeSystem> {
        if zeta.rows != zeta.cols {
            return Err(Error::DimensionMismatch("kernel must be square".into()));
        }
        if (zeta.horizon() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGrid("kernel must live on the unit delay interval".into()));
        }
        let grid = Grid::new(horizon, zeta.grid().step())?;
        Ok(RfdeSystem { dim: zeta.rows, zeta, grid })
    }

    pub fn history_grid(&self) -> Grid {
        self.zeta.grid()
    }
}

/// Solve `x = mu ⋆ X + f` where `X(t) = int_0^t x`; kernel atoms act on the
/// (continuous) cumulative integral, so they are handled exactly.
pub fn march_cumulative(mu: &HalfLineMeasure, f: &GridFn) -> Result<GridFn> {
    march_mixed(None, Some(mu), f)
}

/// Solve `x = eta ⋆ x + mu ⋆ X + f` with `X = int_0^t x`: a renewal kernel
/// acting on `x` directly plus one acting through the cumulative integral.
/// Node-wise self-coupling (atom at zero and sub-step atoms of either
/// kernel, density cells at zero) is resolved by one small linear solve.
pub fn march_mixed(
    eta: Option<&HalfLineMeasure>,
    mu: Option<&HalfLineMeasure>,
    f: &GridFn,
) -> Result<GridFn> {
    let dim = f.rows;
    for m in [eta, mu].into_iter().flatten() {
        if m.cols != dim || m.rows != dim {
            return Err(Error::DimensionMismatch("kernel and forcing dimensions".into()));
        }
        if !m.grid().same_step(&f.grid) {
            return Err(Error::GridMismatch("kernel and forcing on different steps".into()));
        }
    }
    let grid = f.grid;
    let h = grid.step();
    let cols = f.cols;
    let eye = DMatrix::identity(dim, dim);

    // Implicit coefficient on x_i (valid for every node i >= 1).
    let mut coupling = DMatrix::zeros(dim, dim);
    if let Some(e) = eta {
        let tol = e.merge_tol();
        for a in &e.atoms {
            if a.loc <= tol {
                coupling += &a.weight;
            } else if a.loc < h - tol {
                coupling += &a.weight * (1.0 - a.loc / h);
            }
        }
        coupling += &e.density.values[0] * (0.5 * h);
    }
    if let Some(m) = mu {
        let tol = m.merge_tol();
        // coefficient of X_i, which couples to x_i with factor h/2
        let mut c = DMatrix::zeros(dim, dim);
        for a in &m.atoms {
            if a.loc < h - tol {
                c += &a.weight * (1.0 - a.loc / h);
            }
        }
        c += &m.density.values[0] * (0.5 * h);
        coupling += c * (0.5 * h);
    }
    let lu = (&eye - &coupling).lu();
    if lu.determinant().abs() < 1e-300 {
        return Err(Error::InvalidArgument("implicit marching matrix is singular".into()));
    }

    // Node 0: X_0 = 0 and only an eta-atom at zero couples.
    let a0 = eta.map(|e| {
        let w = e.atom_at_zero();
        if w.nrows() == dim { w } else { DMatrix::zeros(dim, dim) }
    });
    let x0 = match &a0 {
        Some(a) if mat_norm_nonzero(a) => (&eye - a)
            .lu()
            .solve(&f.values[0])
            .ok_or(Error::SingularAtZero)?,
        _ => f.values[0].clone(),
    };

    let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(grid.len());
    let mut cum: Vec<DMatrix<f64>> = Vec::with_capacity(grid.len());
    xs.push(x0);
    cum.push(DMatrix::zeros(dim, cols));
    for i in 1..grid.len() {
        let t = grid.node(i);
        let partial = &cum[i - 1] + &xs[i - 1] * (0.5 * h); // known part of X_i
        let mut rhs = f.values[i].clone();

        if let Some(e) = eta {
            let tol = e.merge_tol();
            let nk = e.density.values.len();
            for a in &e.atoms {
                if a.loc <= tol {
                    continue; // implicit
                }
                if a.loc > t + tol {
                    break;
                }
                if a.loc < h - tol {
                    rhs += &a.weight * &xs[i - 1] * (a.loc / h); // explicit part of interpolation
                } else {
                    let tau = (t - a.loc).max(0.0);
                    let (j, wj) = grid.locate(tau);
                    let v = if wj == 0.0 {
                        xs[j].clone()
                    } else {
                        crate::linalg::lerp(&xs[j], &xs[j + 1], wj)
                    };
                    rhs += &a.weight * v;
                }
            }
            let j_hi = i.min(nk - 1);
            for j in 1..=j_hi {
                let wq = if j == j_hi { 0.5 } else { 1.0 };
                rhs += &e.density.values[j] * &xs[i - j] * (wq * h);
            }
        }

        if let Some(m) = mu {
            let tol = m.merge_tol();
            let nk = m.density.values.len();
            for a in &m.atoms {
                if a.loc > t + tol {
                    break;
                }
                if a.loc < h - tol {
                    let w = 1.0 - a.loc / h; // interpolation weight on X_i
                    rhs += &a.weight * (&cum[i - 1] * (a.loc / h) + &partial * w);
                } else {
                    let tau = (t - a.loc).max(0.0);
                    let (j, wj) = grid.locate(tau);
                    let v = if wj == 0.0 {
                        cum[j].clone()
                    } else {
                        crate::linalg::lerp(&cum[j], &cum[j + 1], wj)
                    };
                    rhs += &a.weight * v;
                }
            }
            let j_hi = i.min(nk - 1);
            rhs += &m.density.values[0] * &partial * (0.5 * h);
            for j in 1..=j_hi {
                let wq = if j == j_hi { 0.5 } else { 1.0 };
                rhs += &m.density.values[j] * &cum[i - j] * (wq * h);
            }
        }

        let x_i = lu.solve(&rhs).expect("checked determinant");
        cum.push(&partial + &x_i * (0.5 * h));
        xs.push(x_i);
    }
    GridFn::from_values(grid, xs)
}

fn mat_norm_nonzero(m: &DMatrix<f64>) -> bool {
    crate::linalg::mat_norm(m) != 0.0
}

/// Forcing of the integrated equation for initial history `phi`:
/// `f(t) = phi(0) + int_0^1 (Z(t+s) - Z(s)) phi(-s) ds`, with the kernel's
/// atoms integrated exactly against the history's running integral.
pub fn build_forcing(sys: &RfdeSystem, phi: &History) -> Result<GridFn> {
    if phi.samples.rows != sys.dim {
        return Err(Error::DimensionMismatch("history dimension".into()));
    }
    let hist = sys.history_grid();
    // running integral of s -> phi(-s) over [0, 1]
    let phi_rev = GridFn::from_values(
        hist,
        hist.nodes().map(|s| phi.eval_class(-s)).collect(),
    )?;
    let phi_cum = phi_rev.cumulative();
    let z_ac = sys.zeta.density.cumulative();

    let nh = hist.len();
    let values = (0..sys.grid.len())
        .map(|i| {
            let t = sys.grid.node(i);
            let mut v = phi.at_zero.clone();
            // atom at c contributes w * int_{[max(c-t,0), c)} phi(-s) ds
            for a in &sys.zeta.atoms {
                let lo = (a.loc - t).max(0.0);
                if lo < a.loc {
                    v += &a.weight * (phi_cum.eval(a.loc) - phi_cum.eval(lo));
                }
            }
            // absolutely continuous part by trapezoid in s
            let h = hist.step();
            for j in 0..nh {
                let s = hist.node(j);
                let wq = if j == 0 || j == nh - 1 { 0.5 } else { 1.0 };
                let dz = z_ac.eval(t + s) - &z_ac.values[j];
                v += dz * &phi_rev.values[j] * (wq * h);
            }
            v
        })
        .collect();
    GridFn::from_values(sys.grid, values)
}

/// A solved trajectory, retaining the initial history so that semigroup
/// states can be extracted at any time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub phi: History,
    pub x: GridFn,
}

impl Trajectory {
    /// History state at time `t`: translation along the solution, with the
    /// point value at `theta = 0` set to `x(t)`.
    pub fn state_at(&self, t: f64) -> History {
        let hist = self.phi.grid();
        let horizon = hist.horizon();
        let samples = GridFn::from_values(
            hist,
            hist.nodes()
                .map(|u| {
                    let s = t + u - horizon; // time t + theta
                    if s >= -1e-12 {
                        self.x.eval(s.max(0.0))
                    } else {
                        self.phi.eval_class(s)
                    }
                })
                .collect(),
        )
        .expect("layout preserved");
        History { samples, at_zero: self.x.eval(t) }
    }
}

/// Solve the initial value problem from history `phi` over the system grid.
pub fn solve_ivp(sys: &RfdeSystem, phi: &History) -> Result<Trajectory> {
    let f = build_forcing(sys, phi)?;
    let x = march_cumulative(&sys.zeta, &f)?;
    Ok(Trajectory { phi: phi.clone(), x })
}

/// Inhomogeneous problem `x'(t) = <zeta, x_t> + g(t)`: the integrated form
/// just adds the running integral of `g` to the forcing.
pub fn forced_solve(sys: &RfdeSystem, phi: &History, g: &GridFn) -> Result<Trajectory> {
    let f = build_forcing(sys, phi)?.add(&g.cumulative())?;
    let x = march_cumulative(&sys.zeta, &f)?;
    Ok(Trajectory { phi: phi.clone(), x })
}

/// Matrix fundamental solution: columns start from the jump history.
pub fn fundamental_solution(sys: &RfdeSystem) -> Result<GridFn> {
    let q = History::heaviside(sys.history_grid(), sys.dim);
    Ok(solve_ivp(sys, &q)?.x)
}

pub fn apply(sys: &RfdeSystem, t: f64, phi: &History) -> Result<History> {
    if t < 0.0 || t > sys.grid.horizon() + 1e-9 {
        return Err(Error::InvalidArgument(format!("time {t} outside the system horizon")));
    }
    Ok(solve_ivp(sys, phi)?.state_at(t))
}

/// `Delta(lambda) = lambda I - int exp(-lambda s) zeta(ds)`.
pub fn characteristic_matrix(sys: &RfdeSystem, lambda: nalgebra::Complex<f64>) -> CMatrix {
    let mut m = -sys.zeta.laplace(lambda);
    for i in 0..sys.dim {
        m[(i, i)] += lambda;
    }
    m
}

/// L1 resolvent of the kernel's distribution function (`rho = Z + Z * rho`),
/// the density appearing in the kernel representation of the semigroup.
pub fn zeta_fun_resolvent(sys: &RfdeSystem) -> Result<GridFn> {
    let dist = sys.zeta.distribution();
    let z = GridFn::from_values(
        sys.grid,
        sys.grid.nodes().map(|t| dist.value(t)).collect(),
    )?;
    // rho = Z + mu ⋆ P with P the running integral of rho
    march_cumulative(&sys.zeta, &z)
}

/// Kernel representation value `K_t(theta, sigma)`: the state at `theta` is
/// the BV-in-`sigma` Stieltjes integral of this kernel against the history.
pub fn semigroup_kernel(
    sys: &RfdeSystem,
    rho: &GridFn,
    t: f64,
    theta: f64,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    let n = sys.dim;
    if sigma <= 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let u = t + theta;
    let mut k = if sigma + u >= 0.0 { DMatrix::identity(n, n) } else { DMatrix::zeros(n, n) };
    if u < 0.0 {
        return Ok(k);
    }
    let rho_cum = rho.cumulative();
    let p_u = rho_cum.eval(u);
    k += &p_u;

    // int_0^sigma [Z(u+tau) - Z(tau) + int_0^u rho(xi)(Z(u+tau-xi) - Z(tau)) dxi] dtau
    // split the kernel into atoms (integrated exactly) and density.
    for a in &sys.zeta.atoms {
        let c = a.loc;
        // int_0^sigma H(u + tau - c) dtau
        let l1 = (sigma - (c - u).max(0.0)).max(0.0);
        // -(1 + P(u)) int_0^sigma H(tau - c) dtau
        let l2 = (sigma - c).max(0.0);
        k += &a.weight * l1 - (DMatrix::identity(n, n) + &p_u) * &a.weight * l2;
        // + int_0^sigma int_0^u rho(xi) H(u + tau - xi - c) dxi dtau
        //   = int_0^sigma P(min(u, u + tau - c)) dtau   (only tau with u+tau>c)
        let g = sys.grid;
        let h = g.step();
        let m = ((sigma / h).floor() as usize).min(g.len() - 1);
        let mut acc = DMatrix::zeros(n, n);
        let val = |tau: f64| -> DMatrix<f64> {
            let cap = (u + tau - c).min(u);
            if cap <= 0.0 {
                DMatrix::zeros(n, n)
            } else {
                rho_cum.eval(cap)
            }
        };
        for j in 0..=m {
            let wq = if j == 0 { 0.5 } else { 1.0 };
            acc += val(g.node(j)) * (wq * h);
        }
        acc -= val(g.node(m)) * (0.5 * h);
        let rem = sigma - g.node(m);
        if rem > 1e-12 {
            acc += (val(g.node(m)) + val(sigma)) * (0.5 * rem);
        }
        k += acc * &a.weight;
    }
    // density contribution, all parts by trapezoid in tau
    let z_ac = sys.zeta.density.cumulative();
    let g = sys.grid;
    let h = g.step();
    let m = ((sigma / h).floor() as usize).min(g.len() - 1);
    let dens_term = |tau: f64| -> DMatrix<f64> {
        let mut d = z_ac.eval(u + tau) - z_ac.eval(tau);
        // + int_0^u rho(xi)(Z_ac(u+tau-xi) - Z_ac(tau)) dxi
        let mu = ((u / h).floor() as usize).min(g.len() - 1);
        if mu > 0 {
            let mut inner = DMatrix::zeros(n, n);
            for j in 0..=mu {
                let wq = if j == 0 || j == mu { 0.5 } else { 1.0 };
                let xi = g.node(j);
                inner += &rho.values[j] * (z_ac.eval(u + tau - xi) - z_ac.eval(tau)) * (wq * h);
            }
            d += inner;
        }
        d
    };
    let mut acc = DMatrix::zeros(n, n);
    for j in 0..=m {
        let wq = if j == 0 { 0.5 } else { 1.0 };
        acc += dens_term(g.node(j)) * (wq * h);
    }
    acc -= dens_term(g.node(m)) * (0.5 * h);
    let rem = sigma - g.node(m);
    if rem > 1e-12 {
        acc += (dens_term(g.node(m)) + dens_term(sigma)) * (0.5 * rem);
    }
    k += acc;
    Ok(k)
}

/// Apply the semigroup through the kernel representation (distinct route
/// from [`apply`], used for cross-validation).
pub fn apply_via_kernel(sys: &RfdeSystem, rho: &GridFn, t: f64, phi: &History) -> Result<History> {
    let hist = sys.history_grid();
    let n = sys.dim;
    let h = hist.step();
    let nh = hist.len();
    let rho_cum = rho.cumulative();
    let z_ac = sys.zeta.density.cumulative();
    let phi_rev = GridFn::from_values(hist, hist.nodes().map(|s| phi.eval_class(-s)).collect())?;
    let phi_cum = phi_rev.cumulative();
    let eye = DMatrix::identity(n, n);

    let value_at = |theta: f64| -> DMatrix<f64> {
        let u = t + theta;
        if u < -1e-12 {
            return phi.eval_class(u);
        }
        let u = u.max(0.0);
        let p_u = rho_cum.eval(u);
        // jump of the kernel at sigma = 0 hits the distinguished point value
        let mut v = (&eye + &p_u) * &phi.at_zero;
        // exact atom contributions to the absolutely continuous density in sigma
        for a in &sys.zeta.atoms {
            let c = a.loc;
            // H(u + s - c): integrate phi(-s) over s in [max(c-u,0), 1]
            let lo = (c - u).max(0.0);
            v += &a.weight * (phi_cum.eval(1.0) - phi_cum.eval(lo));
            // -(1 + P(u)) zeta-atom step at s = c
            v -= (&eye + &p_u) * &a.weight * (phi_cum.eval(1.0) - phi_cum.eval(c));
            // + [int_0^u rho(xi) H(u+s-xi-c) dxi] phi(-s) integrated in s
            for j in 0..nh {
                let s = hist.node(j);
                let wq = if j == 0 || j == nh - 1 { 0.5 } else { 1.0 };
                let cap = (u + s - c).min(u);
                if cap > 0.0 {
                    v += rho_cum.eval(cap) * &a.weight * &phi_rev.values[j] * (wq * h);
                }
            }
        }
        // density of the kernel measure
        let g = sys.grid;
        let hg = g.step();
        let mu_idx = ((u / hg).floor() as usize).min(g.len() - 1);
        for j in 0..nh {
            let s = hist.node(j);
            let wq = if j == 0 || j == nh - 1 { 0.5 } else { 1.0 };
            let mut d = z_ac.eval(u + s) - &z_ac.values[j];
            if mu_idx > 0 {
                let mut inner = DMatrix::zeros(n, n);
                for l in 0..=mu_idx {
                    let wq2 = if l == 0 || l == mu_idx { 0.5 } else { 1.0 };
                    let xi = g.node(l);
                    inner += &rho.values[l] * (z_ac.eval(u + s - xi) - &z_ac.values[j]) * (wq2 * hg);
                }
                d += inner;
            }
            v += d * &phi_rev.values[j] * (wq * h);
        }
        v
    };

    let samples = GridFn::from_values(
        hist,
        hist.nodes().map(|uu| value_at(uu - hist.horizon())).collect(),
    )?;
    let at_zero = value_at(0.0);
    History::new(samples, at_zero)
}
