//! Space-time error norms, experimental orders of convergence and the
//! comparison of coarse runs against a fine reference run.
//!
//! Discrete fields are constant in time on every interval (`Y^n` for the
//! state, `P^{n-1}` for the adjoint). The exact or reference field is sampled
//! at the two Gauss nodes of the interval and the spatial integral uses the
//! load cache, whose cut elements are split along the polygonal interface so
//! that each branch of a piecewise field is evaluated on its own side.

use crate::assembly::QuadCache;
use crate::geometry::Side;
use crate::optimizer::{ControlField, OptimalSolution};
use crate::solver::{Discretization, Trajectory};
use crate::space::BasisEval;
use crate::{Error, Result, Vec2};

/// One line of a convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: usize,
    pub err_state: f64,
    pub err_control: f64,
    pub err_adjoint: f64,
    pub order_state: Option<f64>,
    pub order_control: Option<f64>,
    pub order_adjoint: Option<f64>,
    pub iterations: usize,
    /// Seconds spent in setup and optimization.
    pub wall_time: f64,
}

impl ConvergenceRow {
    pub fn h(&self) -> f64 {
        2.0 / self.n as f64
    }
}

/// `(sum_n int_{I_n} ||field - exact||^2 dt)^{1/2}` with `exact(x, side, t)`.
pub fn l2_space_time_error(
    disc: &Discretization,
    field: &Trajectory,
    exact: impl Fn(Vec2, Side, f64) -> f64,
) -> f64 {
    let load = &disc.caches.load;
    let mut total = 0.0;
    for n in 1..=disc.grid.m {
        let values = load.sample(field.on_interval(n));
        for (t, wt) in disc.grid.gauss(n) {
            total += wt
                * load
                    .points
                    .iter()
                    .zip(&values)
                    .map(|(q, v)| q.weight * (v - exact(q.x, q.side, t)).powi(2))
                    .sum::<f64>();
        }
    }
    total.sqrt()
}

/// `(int_0^T ||control - exact||^2_{L^2(Gamma)} dt)^{1/2}`: the control lives
/// at the interface quadrature points and time Gauss nodes, so the norm is a
/// plain weighted sum.
pub fn l2_interface_error(disc: &Discretization, control: &ControlField, exact: impl Fn(Vec2, f64) -> f64) -> f64 {
    let points = &disc.caches.interface.points;
    let mut total = 0.0;
    for n in 1..=disc.grid.m {
        for (tau, (t, wt)) in disc.grid.gauss(n).into_iter().enumerate() {
            total += wt
                * control
                    .slice(n, tau)
                    .iter()
                    .zip(points)
                    .map(|(u, q)| q.weight * (u - exact(q.x, t)).powi(2))
                    .sum::<f64>();
        }
    }
    total.sqrt()
}

/// Pairwise orders `log(E_k / E_{k+1}) / log(h_k / h_{k+1})`.
pub fn eoc(errors: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(errors.len(), h.len(), "one mesh size per error");
    if let Some(&bad) = errors.iter().find(|e| e.is_nan() || **e <= 0.0) {
        return Err(Error::NonPositiveError(bad));
    }
    Ok(errors
        .windows(2)
        .zip(h.windows(2))
        .map(|(e, h)| (e[0].ln() - e[1].ln()) / (h[0].ln() - h[1].ln()))
        .collect())
}

/// Fills the order columns from consecutive rows; the first row gets none.
pub fn fill_orders(rows: &mut [ConvergenceRow]) -> Result<()> {
    let h: Vec<f64> = rows.iter().map(ConvergenceRow::h).collect();
    type Column = (fn(&ConvergenceRow) -> f64, fn(&mut ConvergenceRow) -> &mut Option<f64>);
    let columns: [Column; 3] = [
        (|r| r.err_state, |r| &mut r.order_state),
        (|r| r.err_control, |r| &mut r.order_control),
        (|r| r.err_adjoint, |r| &mut r.order_adjoint),
    ];
    for (get, set) in columns {
        let errors: Vec<f64> = rows.iter().map(get).collect();
        let orders = eoc(&errors, &h)?;
        for (row, o) in rows.iter_mut().skip(1).zip(orders) {
            *set(row) = Some(o);
        }
    }
    Ok(())
}

/// State, control and adjoint errors of a solution against the exact
/// optimal triple, or `None` when the problem has no closed form.
pub fn exact_errors(disc: &Discretization, sol: &OptimalSolution) -> Option<[f64; 3]> {
    let p = &disc.problem;
    if !p.has_exact() {
        return None;
    }
    let state = l2_space_time_error(disc, &sol.state, |x, s, t| p.exact_state(x, s, t).map_or(0.0, |j| j.value));
    let adjoint = l2_space_time_error(disc, &sol.adjoint, |x, s, t| {
        p.exact_adjoint(x, s, t).map_or(0.0, |j| j.value)
    });
    let control = l2_interface_error(disc, &sol.control, |x, t| p.exact_control(x, t).unwrap_or(0.0));
    Some([state, control, adjoint])
}

/// Coarse basis functions evaluated at the points of a fine cache.
struct Transfer {
    bases: Vec<BasisEval>,
}

impl Transfer {
    fn new(coarse: &Discretization, cache: &QuadCache) -> Result<Self> {
        let space = &coarse.space;
        let bases = cache
            .points
            .iter()
            .map(|q| {
                let loc = space.mesh.locate_point(q.x)?;
                Ok(space.eval_at(loc.element, q.x, q.side))
            })
            .collect::<Result<_>>()?;
        Ok(Self { bases })
    }

    fn sample(&self, coeffs: &[f64]) -> Vec<f64> {
        self.bases
            .iter()
            .map(|b| b.active_dofs.iter().zip(&b.values).map(|(&d, v)| coeffs[d] * v).sum())
            .collect()
    }
}

/// Coarse interval containing time `t` (which must not be a knot).
fn containing_interval(disc: &Discretization, t: f64) -> usize {
    ((t / disc.grid.dt).floor() as usize + 1).clamp(1, disc.grid.m)
}

/// Errors `[state, control, adjoint]` of a coarse run against a reference run
/// on a nested finer mesh and time grid. The coarse control away from its own
/// quadrature points is the projection of its adjoint trace.
pub fn self_convergence(
    reference: &Discretization,
    reference_solution: &OptimalSolution,
    coarse: &Discretization,
    coarse_solution: &OptimalSolution,
) -> Result<[f64; 3]> {
    let (nr, nc) = (reference.space.mesh.n, coarse.space.mesh.n);
    let (mr, mc) = (reference.grid.m, coarse.grid.m);
    if nc == 0 || nr % nc != 0 || mr % mc != 0 {
        return Err(Error::IncompatibleMeshes(format!(
            "coarse N={nc}, M={mc} is not nested in reference N={nr}, M={mr}"
        )));
    }
    if reference.problem.id() != coarse.problem.id() || reference.problem.t_final != coarse.problem.t_final {
        return Err(Error::IncompatibleMeshes("runs belong to different problems".into()));
    }
    let load = &reference.caches.load;
    let iface = &reference.caches.interface;
    let volume = Transfer::new(coarse, load)?;
    let trace = Transfer::new(coarse, iface)?;
    let alpha = coarse.problem.alpha;
    let bounds = &coarse.problem.bounds;

    let mut sums = [0.0; 3];
    type Samples = (usize, Vec<f64>, Vec<f64>, Vec<f64>);
    let mut cached: Option<Samples> = None;
    for n in 1..=mr {
        let y_ref = load.sample(reference_solution.state.on_interval(n));
        let p_ref = load.sample(reference_solution.adjoint.on_interval(n));
        for (tau, (t, wt)) in reference.grid.gauss(n).into_iter().enumerate() {
            let k = containing_interval(coarse, t);
            if cached.as_ref().is_none_or(|c| c.0 != k) {
                let y = volume.sample(coarse_solution.state.on_interval(k));
                let p = volume.sample(coarse_solution.adjoint.on_interval(k));
                let pg = trace.sample(coarse_solution.adjoint.on_interval(k));
                cached = Some((k, y, p, pg));
            }
            let (_, y_c, p_c, pg_c) = cached.as_ref().expect("filled above");
            let sq = |a: &[f64], b: &[f64], cache: &QuadCache| {
                cache
                    .points
                    .iter()
                    .zip(a.iter().zip(b))
                    .map(|(q, (u, v))| q.weight * (u - v).powi(2))
                    .sum::<f64>()
            };
            sums[0] += wt * sq(&y_ref, y_c, load);
            sums[2] += wt * sq(&p_ref, p_c, load);
            let u_ref = reference_solution.control.slice(n, tau);
            let mut control = 0.0;
            for ((q, u), p) in iface.points.iter().zip(u_ref).zip(pg_c) {
                let u_c = bounds.project(-p / alpha, q.x, t)?;
                control += q.weight * (u - u_c).powi(2);
            }
            sums[1] += wt * control;
        }
    }
    Ok(sums.map(f64::sqrt))
}
