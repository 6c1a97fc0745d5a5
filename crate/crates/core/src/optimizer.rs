//! Box constraints, the variationally discretized control, the reduced cost
//! and gradient, and the projected fixed-point iteration.
//!
//! The control is never given a finite element basis. It lives at the
//! interface quadrature points and the two time Gauss nodes of every interval,
//! which is exactly where the interface load samples it.

use crate::solver::{adjoint_solve, forward_solve, Discretization, Trajectory};
use crate::{Error, Result, Vec2};

/// One side of a box constraint.
#[derive(Clone, Copy, Debug)]
pub enum Bound {
    /// No constraint (`-inf` below, `+inf` above).
    Open,
    Constant(f64),
    /// Depends on the point and the time.
    Field(fn(Vec2, f64) -> f64),
}

/// What to do where the lower bound exceeds the upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossingPolicy {
    /// Report [`Error::InfeasibleBounds`].
    Reject,
    /// Use `max(lower, min(upper, v))`, which is the lower bound there.
    LowerWins,
}

#[derive(Clone, Copy, Debug)]
pub struct AdmissibleSet {
    pub lower: Bound,
    pub upper: Bound,
    pub crossing: CrossingPolicy,
}

impl AdmissibleSet {
    pub fn new(lower: Bound, upper: Bound) -> Self {
        Self {
            lower,
            upper,
            crossing: CrossingPolicy::Reject,
        }
    }

    pub fn unbounded() -> Self {
        Self::new(Bound::Open, Bound::Open)
    }

    pub fn is_unbounded(&self) -> bool {
        matches!((self.lower, self.upper), (Bound::Open, Bound::Open))
    }

    pub fn lower_at(&self, x: Vec2, t: f64) -> f64 {
        match self.lower {
            Bound::Open => f64::NEG_INFINITY,
            Bound::Constant(c) => c,
            Bound::Field(f) => f(x, t),
        }
    }

    pub fn upper_at(&self, x: Vec2, t: f64) -> f64 {
        match self.upper {
            Bound::Open => f64::INFINITY,
            Bound::Constant(c) => c,
            Bound::Field(f) => f(x, t),
        }
    }

    /// Pointwise projection onto `[lower, upper]` at `(x, t)`.
    pub fn project(&self, v: f64, x: Vec2, t: f64) -> Result<f64> {
        let (lo, hi) = (self.lower_at(x, t), self.upper_at(x, t));
        if lo > hi && self.crossing == CrossingPolicy::Reject {
            return Err(Error::InfeasibleBounds {
                lower: lo,
                upper: hi,
                x: x.x,
                y: x.y,
                t,
            });
        }
        Ok(lo.max(hi.min(v)))
    }
}

/// Control values at `(interval n, time node tau, interface point q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlField {
    /// Number of time intervals.
    pub m: usize,
    /// Number of interface quadrature points.
    pub q: usize,
    pub values: Vec<f64>,
}

impl ControlField {
    pub fn zeros(m: usize, q: usize) -> Self {
        Self {
            m,
            q,
            values: vec![0.0; 2 * m * q],
        }
    }

    pub fn zeros_for(disc: &Discretization) -> Self {
        Self::zeros(disc.grid.m, disc.control_points())
    }

    /// Samples a function of `(x, t)` at every control point.
    pub fn from_fn(disc: &Discretization, f: impl Fn(Vec2, f64) -> f64) -> Self {
        let mut c = Self::zeros_for(disc);
        for n in 1..=disc.grid.m {
            for (tau, (t, _)) in disc.grid.gauss(n).into_iter().enumerate() {
                for (v, p) in c.slice_mut(n, tau).iter_mut().zip(&disc.caches.interface.points) {
                    *v = f(p.x, t);
                }
            }
        }
        c
    }

    fn offset(&self, n: usize, tau: usize) -> usize {
        debug_assert!((1..=self.m).contains(&n) && tau < 2);
        ((n - 1) * 2 + tau) * self.q
    }

    pub fn slice(&self, n: usize, tau: usize) -> &[f64] {
        let o = self.offset(n, tau);
        &self.values[o..o + self.q]
    }

    pub fn slice_mut(&mut self, n: usize, tau: usize) -> &mut [f64] {
        let o = self.offset(n, tau);
        &mut self.values[o..o + self.q]
    }

    /// Discrete `L^2(0,T; L^2(Gamma))` inner product.
    pub fn inner(&self, other: &Self, disc: &Discretization) -> f64 {
        let weights: Vec<f64> = disc.caches.interface.points.iter().map(|p| p.weight).collect();
        let mut s = 0.0;
        for n in 1..=self.m {
            for (tau, (_, wt)) in disc.grid.gauss(n).into_iter().enumerate() {
                let a = self.slice(n, tau);
                let b = other.slice(n, tau);
                s += wt * a.iter().zip(b).zip(&weights).map(|((x, y), w)| w * x * y).sum::<f64>();
            }
        }
        s
    }

    pub fn norm(&self, disc: &Discretization) -> f64 {
        self.inner(self, disc).sqrt()
    }

    /// `self - other`.
    pub fn difference(&self, other: &Self) -> Self {
        Self {
            m: self.m,
            q: self.q,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Pointwise projection of every control value, with the bounds evaluated at
/// the value's point and time node.
pub fn project_admissible(
    set: &AdmissibleSet,
    raw: &ControlField,
    disc: &Discretization,
) -> Result<ControlField> {
    if set.is_unbounded() {
        return Ok(raw.clone());
    }
    let mut out = raw.clone();
    for n in 1..=raw.m {
        for (tau, (t, _)) in disc.grid.gauss(n).into_iter().enumerate() {
            for (v, p) in out.slice_mut(n, tau).iter_mut().zip(&disc.caches.interface.points) {
                *v = set.project(*v, p.x, t)?;
            }
        }
    }
    Ok(out)
}

/// Interface traces of the adjoint, `P^{n-1}(x_q)`, in control layout.
pub fn adjoint_trace(disc: &Discretization, adjoint: &Trajectory) -> ControlField {
    let mut c = ControlField::zeros_for(disc);
    let iface = &disc.caches.interface;
    for n in 1..=disc.grid.m {
        let p = adjoint.on_interval(n);
        let trace: Vec<f64> = (0..iface.len()).map(|q| iface.eval(p, q)).collect();
        c.slice_mut(n, 0).copy_from_slice(&trace);
        c.slice_mut(n, 1).copy_from_slice(&trace);
    }
    c
}

/// `J = 1/2 sum_n int_{I_n} ||Y^n - y_d||^2 + alpha/2 ||u||^2`, with the same
/// quadrature as the loads.
pub fn reduced_cost(disc: &Discretization, control: &ControlField, state: &Trajectory) -> f64 {
    let load = &disc.caches.load;
    let p = &disc.problem;
    let mut tracking = 0.0;
    for n in 1..=disc.grid.m {
        let y = load.sample(state.on_interval(n));
        for (t, wt) in disc.grid.gauss(n) {
            tracking += wt
                * load
                    .points
                    .iter()
                    .zip(&y)
                    .map(|(q, v)| q.weight * (v - p.y_d(q.x, q.side, t)).powi(2))
                    .sum::<f64>();
        }
    }
    0.5 * tracking + 0.5 * p.alpha * control.inner(control, disc)
}

/// `alpha u + P^{n-1}|_Gamma`, the representative of the reduced gradient in
/// the discrete `L^2(0,T; L^2(Gamma))` inner product.
pub fn reduced_gradient(disc: &Discretization, control: &ControlField, adjoint: &Trajectory) -> ControlField {
    let mut g = adjoint_trace(disc, adjoint);
    for (v, u) in g.values.iter_mut().zip(&control.values) {
        *v += disc.problem.alpha * u;
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor in `(0, 1]`; `1` is the plain iteration.
    pub damping: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            damping: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerReport {
    pub iterations: usize,
    /// Relative control change of every iteration.
    pub changes: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct OptimalSolution {
    pub control: ControlField,
    pub state: Trajectory,
    pub adjoint: Trajectory,
    pub report: OptimizerReport,
}

impl OptimalSolution {
    /// Turns an unconverged run into [`Error::NotConverged`].
    pub fn ensure_converged(&self) -> Result<()> {
        if self.report.converged {
            Ok(())
        } else {
            Err(Error::NotConverged {
                iterations: self.report.iterations,
                change: self.report.changes.last().copied().unwrap_or(f64::NAN),
            })
        }
    }
}

/// Projected fixed-point iteration `u_k = P_ad(-P_{k-1}|_Gamma / alpha)`,
/// stopped when the relative change `||u_k - u_{k-1}|| / max(||u_k||, 1)`
/// drops to `tol`. Each accepted control is followed by fresh state and
/// adjoint solves, so the returned triple is consistent.
pub fn fixed_point_solve(
    disc: &Discretization,
    init: &ControlField,
    options: OptimizerOptions,
) -> Result<OptimalSolution> {
    let damping_ok = options.damping > 0.0 && options.damping <= 1.0;
    if options.tol.is_nan() || options.tol <= 0.0 || !damping_ok {
        return Err(Error::Config {
            line: 0,
            message: format!(
                "tolerance must be positive and damping in (0, 1], got {} and {}",
                options.tol, options.damping
            ),
        });
    }
    let set = &disc.problem.bounds;
    let alpha = disc.problem.alpha;
    let mut control = project_admissible(set, init, disc)?;
    let mut state = forward_solve(disc, &control)?;
    let mut adjoint = adjoint_solve(disc, &state)?;
    let mut changes = Vec::new();
    let mut converged = false;
    while changes.len() < options.max_iter {
        let mut next = adjoint_trace(disc, &adjoint);
        for v in &mut next.values {
            *v = -*v / alpha;
        }
        let mut next = project_admissible(set, &next, disc)?;
        if options.damping < 1.0 {
            for (v, u) in next.values.iter_mut().zip(&control.values) {
                *v = options.damping * *v + (1.0 - options.damping) * u;
            }
        }
        let change = next.difference(&control).norm(disc) / next.norm(disc).max(1.0);
        changes.push(change);
        control = next;
        // release the old trajectories before computing new ones
        drop(std::mem::take(&mut adjoint.steps));
        drop(std::mem::take(&mut state.steps));
        state = forward_solve(disc, &control)?;
        adjoint = adjoint_solve(disc, &state)?;
        if change <= options.tol {
            converged = true;
            break;
        }
    }
    let cost = reduced_cost(disc, &control, &state);
    Ok(OptimalSolution {
        control,
        state,
        adjoint,
        report: OptimizerReport {
            iterations: changes.len(),
            changes,
            cost,
            converged,
        },
    })
}
