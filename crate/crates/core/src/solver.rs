//! Backward Euler time stepping for the state and the discrete adjoint.
//!
//! The state step on `I_n = (t_{n-1}, t_n]` is
//! `(M + dt A) Y^n = M Y^{n-1} + int_{I_n} (f, w) + int_{I_n} <g + u, w>_Gamma`
//! with the Dirichlet trace imposed at `t_n`, and the adjoint runs backwards,
//! `(M + dt A) P^{n-1} = M P^n + int_{I_n} (Y^n - y_d, w)`, from `P^M = 0`.
//! Both share one factorization of `M + dt A`.

use crate::assembly::{assemble_mass, assemble_stiffness, build_caches, elliptic_projection, Caches};
use crate::geometry::Side;
use crate::linalg::{ConstrainedSystem, CsrMatrix};
use crate::manufactured::ProblemSpec;
use crate::mesh::TriMesh;
use crate::optimizer::ControlField;
use crate::quadrature::time_gauss;
use crate::space::SgfemSpace;
use crate::{Error, Result};
use std::borrow::Cow;
use std::str::FromStr;

/// Memory allowed for precomputed per-interval data loads.
const DATA_CACHE_BUDGET_BYTES: usize = 512 << 20;

/// Time step rule relating the step count to the mesh size `h = 2 / N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtRule {
    /// `dt = h^2`.
    H2,
    /// `dt = h`.
    H1,
}

impl DtRule {
    /// Number of steps on `[0, t_final]` for `N` squares per direction.
    pub fn steps(self, n: usize, t_final: f64) -> usize {
        let h = 2.0 / n as f64;
        let dt = match self {
            DtRule::H2 => h * h,
            DtRule::H1 => h,
        };
        // guard against round-off pushing an exact ratio up by one
        let ratio = t_final / dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * rounded {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

impl FromStr for DtRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "h2" => Ok(DtRule::H2),
            "h1" => Ok(DtRule::H1),
            other => Err(format!("unknown time step rule `{other}` (expected h2 or h1)")),
        }
    }
}

/// Uniform partition of `[0, T]` into `M` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub m: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, m: usize) -> Self {
        assert!(m >= 1 && t_final > 0.0);
        Self {
            t_final,
            m,
            dt: t_final / m as f64,
        }
    }

    pub fn knot(&self, n: usize) -> f64 {
        if n == self.m {
            self.t_final
        } else {
            n as f64 * self.dt
        }
    }

    /// Start and length of interval `I_n`, `1 <= n <= M`.
    pub fn interval(&self, n: usize) -> (f64, f64) {
        (self.knot(n - 1), self.dt)
    }

    /// Two Gauss nodes and weights of interval `I_n`.
    pub fn gauss(&self, n: usize) -> [(f64, f64); 2] {
        let (t0, dt) = self.interval(n);
        time_gauss(t0, dt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    State,
    Adjoint,
}

/// Coefficient vectors at the knots: `Y^0..Y^M` or `P^0..P^M`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub role: Role,
    pub steps: Vec<Vec<f64>>,
}

impl Trajectory {
    /// The discrete field on interval `I_n`: `Y^n` for the state and
    /// `P^{n-1}` for the adjoint.
    pub fn on_interval(&self, n: usize) -> &[f64] {
        match self.role {
            Role::State => &self.steps[n],
            Role::Adjoint => &self.steps[n - 1],
        }
    }

    pub fn num_intervals(&self) -> usize {
        self.steps.len() - 1
    }
}

enum DataLoads {
    /// `(int (f, w) + int <g, w>, int (y_d, w))` per interval.
    PerInterval(Vec<(Vec<f64>, Vec<f64>)>),
    /// Time-independent data: loads per unit time.
    Constant(Vec<f64>, Vec<f64>),
    OnTheFly,
}

/// Everything fixed for one (problem, mesh, time grid): space, quadrature
/// caches, matrices, the factorized step operator and the data loads.
pub struct Discretization {
    pub problem: ProblemSpec,
    pub space: SgfemSpace,
    pub caches: Caches,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub grid: TimeGrid,
    system: ConstrainedSystem,
    data: DataLoads,
}

impl Discretization {
    pub fn new(problem: ProblemSpec, n: usize, m: usize) -> Result<Self> {
        let space = SgfemSpace::new(TriMesh::uniform(n), problem.interface);
        let caches = build_caches(&space)?;
        let mass = assemble_mass(&space, &caches.matrix);
        let stiffness = assemble_stiffness(&space, &caches.matrix, problem.beta);
        let grid = TimeGrid::new(problem.t_final, m);
        let step = mass.linear_combination(1.0, &stiffness, grid.dt);
        let free = space.constrained.iter().map(|c| !c).collect();
        let system = ConstrainedSystem::new(step, free)?;
        let mut disc = Self {
            problem,
            space,
            caches,
            mass,
            stiffness,
            grid,
            system,
            data: DataLoads::OnTheFly,
        };
        disc.data = if disc.problem.data_time_independent() {
            let (f, d) = disc.unit_time_loads();
            DataLoads::Constant(f, d)
        } else if 2 * m * disc.n_dofs() * std::mem::size_of::<f64>() <= DATA_CACHE_BUDGET_BYTES {
            DataLoads::PerInterval(
                (1..=m)
                    .map(|k| (disc.compute_data_load(k), disc.compute_desired_load(k)))
                    .collect(),
            )
        } else {
            DataLoads::OnTheFly
        };
        Ok(disc)
    }

    pub fn n_dofs(&self) -> usize {
        self.space.num_dofs()
    }

    /// Interface quadrature points carrying the control.
    pub fn control_points(&self) -> usize {
        self.caches.interface.len()
    }

    pub fn step_system(&self) -> &ConstrainedSystem {
        &self.system
    }

    fn unit_time_loads(&self) -> (Vec<f64>, Vec<f64>) {
        let p = &self.problem;
        let load = &self.caches.load;
        let f: Vec<f64> = load.points.iter().map(|q| p.f(q.x, q.side, 0.0)).collect();
        let g: Vec<f64> = self.caches.interface.points.iter().map(|q| p.g(q.x, 0.0)).collect();
        let mut fl = load.load_from_samples(&f, self.n_dofs());
        self.caches.interface.add_load_from_samples(&g, 1.0, &mut fl);
        let yd: Vec<f64> = load.points.iter().map(|q| p.y_d(q.x, q.side, 0.0)).collect();
        (fl, load.load_from_samples(&yd, self.n_dofs()))
    }

    fn compute_data_load(&self, n: usize) -> Vec<f64> {
        let p = &self.problem;
        let load = &self.caches.load;
        let iface = &self.caches.interface;
        let mut fl = vec![0.0; self.n_dofs()];
        for (t, wt) in self.grid.gauss(n) {
            let f: Vec<f64> = load.points.iter().map(|q| p.f(q.x, q.side, t)).collect();
            load.add_load_from_samples(&f, wt, &mut fl);
            let g: Vec<f64> = iface.points.iter().map(|q| p.g(q.x, t)).collect();
            iface.add_load_from_samples(&g, wt, &mut fl);
        }
        fl
    }

    fn compute_desired_load(&self, n: usize) -> Vec<f64> {
        let p = &self.problem;
        let load = &self.caches.load;
        let mut dl = vec![0.0; self.n_dofs()];
        for (t, wt) in self.grid.gauss(n) {
            let yd: Vec<f64> = load.points.iter().map(|q| p.y_d(q.x, q.side, t)).collect();
            load.add_load_from_samples(&yd, wt, &mut dl);
        }
        dl
    }

    /// `int_{I_n} (f, w) + int_{I_n} <g, w>_Gamma`.
    pub fn data_load(&self, n: usize) -> Cow<'_, [f64]> {
        match &self.data {
            DataLoads::PerInterval(v) => Cow::Borrowed(&v[n - 1].0),
            DataLoads::Constant(f, _) => Cow::Owned(f.iter().map(|v| v * self.grid.dt).collect()),
            DataLoads::OnTheFly => Cow::Owned(self.compute_data_load(n)),
        }
    }

    /// `int_{I_n} (y_d, w)`.
    pub fn desired_load(&self, n: usize) -> Cow<'_, [f64]> {
        match &self.data {
            DataLoads::PerInterval(v) => Cow::Borrowed(&v[n - 1].1),
            DataLoads::Constant(_, d) => Cow::Owned(d.iter().map(|v| v * self.grid.dt).collect()),
            DataLoads::OnTheFly => Cow::Owned(self.compute_desired_load(n)),
        }
    }

    /// Adds `int_{I_n} <u, w>_Gamma` for the control carried at the interface
    /// points and the interval's two time nodes.
    pub fn add_control_load(&self, control: &ControlField, n: usize, out: &mut [f64]) {
        for tau in 0..2 {
            let w = self.grid.gauss(n)[tau].1;
            self.caches
                .interface
                .add_load_from_samples(control.slice(n, tau), w, out);
        }
    }

    /// Full-length vector holding the Dirichlet values at `t_n` on the
    /// constrained DOFs.
    pub fn boundary_values(&self, n: usize) -> Vec<f64> {
        let mut fixed = vec![0.0; self.n_dofs()];
        if self.problem.homogeneous_boundary() {
            return fixed;
        }
        let t = self.grid.knot(n);
        for &k in &self.space.mesh.boundary_nodes {
            fixed[self.space.std_dof[k]] =
                self.problem.boundary_value(self.space.mesh.nodes[k], t);
        }
        fixed
    }

    /// `Y^0 = R_h y_0`.
    pub fn initial_state(&self) -> Result<Vec<f64>> {
        if !self.problem.has_exact() {
            return Ok(vec![0.0; self.n_dofs()]);
        }
        let p = &self.problem;
        elliptic_projection(
            &self.space,
            &self.caches,
            &self.stiffness,
            p.beta,
            |x, side: Side| p.y0(x, side).0,
            |x, side: Side| p.y0(x, side).1,
        )
    }
}

/// Backward Euler from `y0` with per-step sources; `sources(n, rhs)` adds the
/// right-hand side contributions of interval `I_n` beyond `M Y^{n-1}`, and
/// `fixed(n)` gives the Dirichlet values at `t_n`.
pub fn forward_steps(
    disc: &Discretization,
    y0: Vec<f64>,
    mut sources: impl FnMut(usize, &mut [f64]),
    fixed: impl Fn(usize) -> Vec<f64>,
) -> Result<Trajectory> {
    let mut steps = Vec::with_capacity(disc.grid.m + 1);
    steps.push(y0);
    let mut rhs = vec![0.0; disc.n_dofs()];
    for n in 1..=disc.grid.m {
        disc.mass.mul_vec_into(&steps[n - 1], &mut rhs);
        sources(n, &mut rhs);
        steps.push(disc.system.solve(&rhs, &fixed(n))?);
    }
    Ok(Trajectory {
        role: Role::State,
        steps,
    })
}

/// Backward recursion `(M + dt A) P^{n-1} = M P^n + s_n` from `P^M = 0` with
/// homogeneous constraints; `sources(n, rhs)` adds `s_n`.
pub fn adjoint_steps(
    disc: &Discretization,
    mut sources: impl FnMut(usize, &mut [f64]),
) -> Result<Trajectory> {
    let m = disc.grid.m;
    let zero = vec![0.0; disc.n_dofs()];
    let mut steps = vec![Vec::new(); m + 1];
    steps[m] = zero.clone();
    let mut rhs = vec![0.0; disc.n_dofs()];
    for n in (1..=m).rev() {
        disc.mass.mul_vec_into(&steps[n], &mut rhs);
        sources(n, &mut rhs);
        steps[n - 1] = disc.system.solve(&rhs, &zero)?;
    }
    Ok(Trajectory {
        role: Role::Adjoint,
        steps,
    })
}

/// State trajectory for a given control.
pub fn forward_solve(disc: &Discretization, control: &ControlField) -> Result<Trajectory> {
    check_control(disc, control)?;
    forward_steps(
        disc,
        disc.initial_state()?,
        |n, rhs| {
            for (r, f) in rhs.iter_mut().zip(disc.data_load(n).iter()) {
                *r += f;
            }
            disc.add_control_load(control, n, rhs);
        },
        |n| disc.boundary_values(n),
    )
}

/// Discrete adjoint of a state trajectory.
pub fn adjoint_solve(disc: &Discretization, state: &Trajectory) -> Result<Trajectory> {
    let dt = disc.grid.dt;
    let mut my = vec![0.0; disc.n_dofs()];
    adjoint_steps(disc, |n, rhs| {
        disc.mass.mul_vec_into(&state.steps[n], &mut my);
        for ((r, a), d) in rhs.iter_mut().zip(&my).zip(disc.desired_load(n).iter()) {
            *r += dt * a - d;
        }
    })
}

fn check_control(disc: &Discretization, control: &ControlField) -> Result<()> {
    if control.m != disc.grid.m || control.q != disc.control_points() {
        return Err(Error::IncompatibleMeshes(format!(
            "control has {} intervals x {} points, discretization {} x {}",
            control.m,
            control.q,
            disc.grid.m,
            disc.control_points()
        )));
    }
    Ok(())
}
