//! The shipped problems: two manufactured examples with known optimal triples
//! (a circle and a cubic interface) and a flower-shaped interface without a
//! closed-form solution.
//!
//! A zero-data problem on the circle, whose optimal triple vanishes, serves
//! as a baseline.
//!
//! Exact states and adjoints are products of a time factor and a spatial
//! polynomial-like part, carried as [`Jet`]s so that the source `f`, the
//! desired state `y_d` and the flux datum `g` follow from the printed triples
//! without numerical differentiation.

use crate::geometry::{LevelSetInterface, Side};
use crate::optimizer::{AdmissibleSet, Bound, CrossingPolicy};
use crate::Vec2;
use std::fmt;

/// Value, gradient, Laplacian and time derivative of a field at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec2,
    pub lap: f64,
    pub dt: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet {
        value: 0.0,
        grad: Vec2::new(0.0, 0.0),
        lap: 0.0,
        dt: 0.0,
    };
}

/// Spatial value, gradient and Laplacian.
#[derive(Clone, Copy, Debug)]
struct Spatial {
    v: f64,
    g: Vec2,
    l: f64,
}

impl Spatial {
    fn product(self, o: Spatial) -> Spatial {
        Spatial {
            v: self.v * o.v,
            g: o.g * self.v + self.g * o.v,
            l: self.v * o.l + 2.0 * self.g.dot(&o.g) + self.l * o.v,
        }
    }

    fn scale(self, c: f64) -> Spatial {
        Spatial {
            v: self.v * c,
            g: self.g * c,
            l: self.l * c,
        }
    }

    /// Multiplies by a time factor `a(t)` with derivative `da`.
    fn in_time(self, a: f64, da: f64) -> Jet {
        Jet {
            value: a * self.v,
            grad: self.g * a,
            lap: a * self.l,
            dt: da * self.v,
        }
    }
}

/// `(x1^2 - 1)(x2^2 - 1)`, vanishing on the boundary of the square.
fn bubble(x: Vec2) -> Spatial {
    let (a, b) = (x.x * x.x - 1.0, x.y * x.y - 1.0);
    Spatial {
        v: a * b,
        g: Vec2::new(2.0 * x.x * b, 2.0 * x.y * a),
        l: 2.0 * b + 2.0 * a,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Example {
    /// Circle of radius 1/2, time-dependent box constraints.
    Circle,
    /// Cubic curve without control constraints.
    CubicUnconstrained,
    /// Cubic curve with a time-dependent lower bound.
    CubicConstrained,
    /// Flower-shaped interface, no exact solution.
    Flower,
    /// Circle interface with all data zero.
    Quiescent,
}

impl Example {
    pub const ALL: [Example; 5] = [
        Example::Circle,
        Example::CubicUnconstrained,
        Example::CubicConstrained,
        Example::Flower,
        Example::Quiescent,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Example::Circle => "ex1",
            Example::CubicUnconstrained => "ex2c1",
            Example::CubicConstrained => "ex2c2",
            Example::Flower => "ex3",
            Example::Quiescent => "zero",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.id() == id)
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

const R0: f64 = 0.5;

/// A complete problem: geometry, coefficients, data and, where known, the
/// exact optimal triple.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub example: Example,
    pub interface: LevelSetInterface,
    /// Conductivities indexed by [`Side::index`].
    pub beta: [f64; 2],
    pub alpha: f64,
    pub bounds: AdmissibleSet,
    pub t_final: f64,
}

pub fn example1(beta_minus: f64, beta_plus: f64) -> ProblemSpec {
    ProblemSpec {
        example: Example::Circle,
        interface: LevelSetInterface::circle(R0),
        beta: [beta_minus, beta_plus],
        alpha: 1.0,
        // the bounds cross on parts of the circle; the exact control is the
        // lower bound there
        bounds: AdmissibleSet {
            lower: Bound::Field(ex1_lower),
            upper: Bound::Field(ex1_upper),
            crossing: CrossingPolicy::LowerWins,
        },
        t_final: 1.0,
    }
}

pub fn example2(constrained: bool, beta_minus: f64, beta_plus: f64) -> ProblemSpec {
    ProblemSpec {
        example: if constrained {
            Example::CubicConstrained
        } else {
            Example::CubicUnconstrained
        },
        interface: LevelSetInterface::cubic(),
        beta: [beta_minus, beta_plus],
        alpha: 1.0,
        bounds: if constrained {
            AdmissibleSet::new(Bound::Field(ex2_lower), Bound::Constant(1.0))
        } else {
            AdmissibleSet::unbounded()
        },
        t_final: 1.0,
    }
}

pub fn example3(beta_minus: f64, beta_plus: f64) -> ProblemSpec {
    ProblemSpec {
        example: Example::Flower,
        interface: LevelSetInterface::flower(),
        beta: [beta_minus, beta_plus],
        alpha: 1.0,
        bounds: AdmissibleSet::unbounded(),
        t_final: 1.0,
    }
}

pub fn zero_data(beta_minus: f64, beta_plus: f64) -> ProblemSpec {
    ProblemSpec {
        example: Example::Quiescent,
        interface: LevelSetInterface::circle(R0),
        beta: [beta_minus, beta_plus],
        alpha: 1.0,
        bounds: AdmissibleSet::unbounded(),
        t_final: 1.0,
    }
}

/// Problem by identifier (`ex1`, `ex2c1`, `ex2c2`, `ex3`, `zero`).
pub fn by_id(id: &str, beta_minus: f64, beta_plus: f64) -> Option<ProblemSpec> {
    Some(match Example::from_id(id)? {
        Example::Circle => example1(beta_minus, beta_plus),
        Example::CubicUnconstrained => example2(false, beta_minus, beta_plus),
        Example::CubicConstrained => example2(true, beta_minus, beta_plus),
        Example::Flower => example3(beta_minus, beta_plus),
        Example::Quiescent => zero_data(beta_minus, beta_plus),
    })
}

fn ex1_lower(x: Vec2, t: f64) -> f64 {
    use std::f64::consts::PI;
    t * ((PI * x.x).sin() - (PI * x.y).cos())
}

fn ex1_upper(x: Vec2, t: f64) -> f64 {
    t * (x.x * x.x + x.y)
}

fn ex2_lower(x: Vec2, t: f64) -> f64 {
    t * (x.y - 3.0 * x.x.powi(3) + 0.3 * x.x * x.x)
}

/// `x2 - 3 x1^3 + 3.3 x1^2 - 0.72 x1 - 0.38`, the cubic level set.
fn cubic_phi(x: Vec2) -> Spatial {
    Spatial {
        v: x.y - 3.0 * x.x.powi(3) + 3.3 * x.x * x.x - 0.72 * x.x - 0.38,
        g: Vec2::new(-9.0 * x.x * x.x + 6.6 * x.x - 0.72, 1.0),
        l: -18.0 * x.x + 6.6,
    }
}

impl ProblemSpec {
    pub fn id(&self) -> &'static str {
        self.example.id()
    }

    pub fn has_exact(&self) -> bool {
        self.example != Example::Flower
    }

    /// True when all data are independent of time.
    pub fn data_time_independent(&self) -> bool {
        matches!(self.example, Example::Flower | Example::Quiescent)
    }

    /// True when the Dirichlet trace is zero.
    pub fn homogeneous_boundary(&self) -> bool {
        matches!(self.example, Example::Flower | Example::Quiescent)
    }

    fn beta_of(&self, side: Side) -> f64 {
        self.beta[side.index()]
    }

    /// Exact optimal state on the given side's branch.
    pub fn exact_state(&self, x: Vec2, side: Side, t: f64) -> Option<Jet> {
        match self.example {
            Example::Circle => {
                let [bm, bp] = self.beta;
                let r2 = x.norm_squared();
                let r = r2.sqrt();
                let cube = Spatial {
                    v: r2 * r,
                    g: x * (3.0 * r),
                    l: 9.0 * r,
                };
                let s = match side {
                    Side::Minus => {
                        let quad = Spatial {
                            v: (r2 / (R0 * R0) - 1.0) / 4.0,
                            g: x / (2.0 * R0 * R0),
                            l: 1.0 / (R0 * R0),
                        };
                        Spatial {
                            v: cube.v / bm + quad.v / bm,
                            g: (cube.g + quad.g) / bm,
                            l: (cube.l + quad.l) / bm,
                        }
                    }
                    Side::Plus => Spatial {
                        v: cube.v / bp + (1.0 / bm - 1.0 / bp) * R0.powi(3),
                        g: cube.g / bp,
                        l: cube.l / bp,
                    },
                };
                let e = t.exp();
                Some(s.in_time(e, e))
            }
            Example::CubicUnconstrained | Example::CubicConstrained => {
                let (x1, x2) = (x.x, x.y);
                let s = match side {
                    Side::Minus => Spatial {
                        v: -3.0 * x1.powi(3) + x2 * x2 - 0.38,
                        g: Vec2::new(-9.0 * x1 * x1, 2.0 * x2),
                        l: -18.0 * x1 + 2.0,
                    },
                    Side::Plus => Spatial {
                        v: -x2 + x2 * x2 - 3.3 * x1 * x1 + 0.72 * x1,
                        g: Vec2::new(-6.6 * x1 + 0.72, -1.0 + 2.0 * x2),
                        l: 2.0 - 6.6,
                    },
                };
                Some(s.in_time((t - 1.0).cos(), -(t - 1.0).sin()))
            }
            Example::Flower => None,
            Example::Quiescent => Some(Jet::ZERO),
        }
    }

    /// Exact optimal adjoint state on the given side's branch.
    pub fn exact_adjoint(&self, x: Vec2, side: Side, t: f64) -> Option<Jet> {
        let inv_b = 1.0 / self.beta_of(side);
        match self.example {
            Example::Circle => {
                let phi = Spatial {
                    v: x.norm_squared() - R0 * R0,
                    g: x * 2.0,
                    l: 4.0,
                };
                Some(phi.product(bubble(x)).scale(inv_b).in_time(t - 1.0, 1.0))
            }
            Example::CubicUnconstrained | Example::CubicConstrained => Some(
                cubic_phi(x)
                    .product(bubble(x))
                    .scale(inv_b)
                    .in_time((t - 1.0).sin(), (t - 1.0).cos()),
            ),
            Example::Flower => None,
            Example::Quiescent => Some(Jet::ZERO),
        }
    }

    /// Exact optimal control as printed with the problem.
    pub fn exact_control(&self, x: Vec2, t: f64) -> Option<f64> {
        match self.example {
            Example::Circle => Some(ex1_lower(x, t).max(ex1_upper(x, t).min(0.0))),
            Example::CubicUnconstrained => Some(0.0),
            Example::CubicConstrained => Some(ex2_lower(x, t).max(0.0)),
            Example::Flower => None,
            Example::Quiescent => Some(0.0),
        }
    }

    /// Volume source.
    pub fn f(&self, x: Vec2, side: Side, t: f64) -> f64 {
        match self.exact_state(x, side, t) {
            Some(y) => y.dt - self.beta_of(side) * y.lap,
            None => 1.0,
        }
    }

    /// Desired state.
    pub fn y_d(&self, x: Vec2, side: Side, t: f64) -> f64 {
        match (self.exact_state(x, side, t), self.exact_adjoint(x, side, t)) {
            (Some(y), Some(p)) => y.value + p.dt + self.beta_of(side) * p.lap,
            _ => match side {
                Side::Minus => 10.0,
                Side::Plus => 1.0,
            },
        }
    }

    /// Flux jump datum `g = [beta d_n y] - u` of the exact triple, with
    /// `[v] = v^- - v^+` and `n` pointing into the plus side. The branches are
    /// evaluated as smooth extensions, so points near the interface work too.
    pub fn g(&self, x: Vec2, t: f64) -> f64 {
        match (
            self.exact_state(x, Side::Minus, t),
            self.exact_state(x, Side::Plus, t),
            self.exact_control(x, t),
        ) {
            (Some(ym), Some(yp), Some(u)) => {
                let n = self.interface.normal(x);
                self.beta[0] * ym.grad.dot(&n) - self.beta[1] * yp.grad.dot(&n) - u
            }
            _ => 0.0,
        }
    }

    /// Initial state and its gradient.
    pub fn y0(&self, x: Vec2, side: Side) -> (f64, Vec2) {
        self.exact_state(x, side, 0.0)
            .map_or((0.0, Vec2::zeros()), |j| (j.value, j.grad))
    }

    /// Dirichlet datum at a boundary point.
    pub fn boundary_value(&self, x: Vec2, t: f64) -> f64 {
        let side = self.interface.side(x, 0.0);
        self.exact_state(x, side, t).map_or(0.0, |j| j.value)
    }
}
