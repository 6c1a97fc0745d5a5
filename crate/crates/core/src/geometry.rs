//! Level-set interfaces and the geometric queries the discretization needs:
//! element classification, the one-sided distance used by the enrichment, and
//! subdivision of cut triangles into single-sided pieces plus interface
//! segments.

use crate::{Error, Result, Vec2};
use nalgebra::Vector2;

/// Interior edge samples used to detect roots between same-signed vertices.
const EDGE_SAMPLES: usize = 8;
/// Maximum depth of the quadrisection applied to elements with complicated cuts.
const MAX_SUBDIVISION_DEPTH: usize = 4;
/// Relative chord-to-curve deviation above which a cut triangle is refined.
const CHORD_DEVIATION: f64 = 0.1;
/// Vertices with `|phi| < VERTEX_TIE_FACTOR * h` are assigned to the minus side.
pub const VERTEX_TIE_FACTOR: f64 = 1e-12;

const NEWTON_MAX_ITER: usize = 100;
/// Samples along the interface curve used to seed the closest-point search.
const CURVE_SAMPLES: usize = 720;
const NEWTON_TOL: f64 = 1e-12;

/// Which subdomain a point belongs to. `Minus` is `{phi < 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Minus => 0,
            Side::Plus => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InterfaceKind {
    /// `x1^2 + x2^2 - r0^2`.
    Circle { radius: f64 },
    /// `x2 - 3 x1 (x1 - 0.3)(x1 - 0.8) - 0.38`.
    Cubic,
    /// `r^4 (1 + 0.4 sin 6 theta) - 0.3`.
    Flower,
    /// `normal . x - offset`, mostly useful for tests.
    Line { normal: Vector2<f64>, offset: f64 },
}

/// Classification of a mesh triangle relative to the interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementClass {
    InsideMinus,
    InsidePlus,
    Cut,
}

/// Closest-point information for a query point.
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    pub foot: Vec2,
    /// Unit normal at the foot point, pointing into the plus side.
    pub normal: Vec2,
    /// Positive on the plus side.
    pub signed_distance: f64,
    /// Set when the Newton iteration stalled and the first-order estimate
    /// `phi / |grad phi|` was used instead.
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct SubTriangle {
    pub vertices: [Vec2; 3],
    pub side: Side,
}

impl SubTriangle {
    pub fn area(&self) -> f64 {
        triangle_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2 {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Segment {
    pub start: Vec2,
    pub end: Vec2,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

/// A cut triangle split into single-sided pieces, with the straight segments
/// approximating the interface inside it.
#[derive(Clone, Debug, Default)]
pub struct CutDecomposition {
    pub sub_triangles: Vec<SubTriangle>,
    pub interface_segments: Vec<Segment>,
}

impl CutDecomposition {
    pub fn area(&self) -> f64 {
        self.sub_triangles.iter().map(SubTriangle::area).sum()
    }

    pub fn interface_length(&self) -> f64 {
        self.interface_segments.iter().map(Segment::length).sum()
    }
}

/// Signed area of a triangle (positive for counter-clockwise vertices).
pub fn triangle_area(v: &[Vec2; 3]) -> f64 {
    let a = v[1] - v[0];
    let b = v[2] - v[0];
    0.5 * (a.x * b.y - a.y * b.x)
}

fn longest_edge(v: &[Vec2; 3]) -> f64 {
    (v[1] - v[0])
        .norm()
        .max((v[2] - v[1]).norm())
        .max((v[0] - v[2]).norm())
}

/// The interface as the zero level set of a scalar field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSetInterface {
    pub kind: InterfaceKind,
}

impl LevelSetInterface {
    pub fn circle(radius: f64) -> Self {
        Self {
            kind: InterfaceKind::Circle { radius },
        }
    }

    pub fn cubic() -> Self {
        Self {
            kind: InterfaceKind::Cubic,
        }
    }

    pub fn flower() -> Self {
        Self {
            kind: InterfaceKind::Flower,
        }
    }

    pub fn line(normal: Vec2, offset: f64) -> Self {
        Self {
            kind: InterfaceKind::Line { normal, offset },
        }
    }

    pub fn phi(&self, x: Vec2) -> f64 {
        match self.kind {
            InterfaceKind::Circle { radius } => x.norm_squared() - radius * radius,
            InterfaceKind::Cubic => {
                let (x1, x2) = (x.x, x.y);
                x2 - 3.0 * x1 * (x1 - 0.3) * (x1 - 0.8) - 0.38
            }
            InterfaceKind::Flower => {
                let s = x.norm_squared();
                if s == 0.0 {
                    return -0.3;
                }
                let (x1, x2) = (x.x, x.y);
                // r^4 sin(6 theta) = Im((x1 + i x2)^6) / r^2
                let im6 = 6.0 * x1.powi(5) * x2 - 20.0 * x1.powi(3) * x2.powi(3)
                    + 6.0 * x1 * x2.powi(5);
                s * s + 0.4 * im6 / s - 0.3
            }
            InterfaceKind::Line { normal, offset } => normal.dot(&x) - offset,
        }
    }

    pub fn grad_phi(&self, x: Vec2) -> Vec2 {
        match self.kind {
            InterfaceKind::Circle { .. } => 2.0 * x,
            InterfaceKind::Cubic => Vec2::new(-9.0 * x.x * x.x + 6.6 * x.x - 0.72, 1.0),
            InterfaceKind::Flower => {
                let r = x.norm();
                if r == 0.0 {
                    return Vec2::zeros();
                }
                let theta = x.y.atan2(x.x);
                let (st, ct) = theta.sin_cos();
                let (s6, c6) = (6.0 * theta).sin_cos();
                let d_r = 4.0 * r.powi(3) * (1.0 + 0.4 * s6);
                // (1/r) d/dtheta
                let d_t = 2.4 * r.powi(3) * c6;
                Vec2::new(d_r * ct - d_t * st, d_r * st + d_t * ct)
            }
            InterfaceKind::Line { normal, .. } => normal,
        }
    }

    /// Unit normal `grad phi / |grad phi|`, pointing into the plus side.
    pub fn normal(&self, x: Vec2) -> Vec2 {
        let g = self.grad_phi(x);
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            Vec2::new(1.0, 0.0)
        }
    }

    /// Side of a point, with `|phi| < tie_tol` resolved to the minus side.
    pub fn side(&self, x: Vec2, tie_tol: f64) -> Side {
        if self.phi(x) >= tie_tol {
            Side::Plus
        } else {
            Side::Minus
        }
    }

    /// Exact distance to the interface, for the shapes where it is known in
    /// closed form.
    pub fn analytic_distance(&self, x: Vec2) -> Option<f64> {
        match self.kind {
            InterfaceKind::Circle { radius } => Some((x.norm() - radius).abs()),
            InterfaceKind::Line { normal, offset } => {
                Some((normal.dot(&x) - offset).abs() / normal.norm())
            }
            InterfaceKind::Cubic | InterfaceKind::Flower => None,
        }
    }

    /// Foot point on the interface curve for the shapes without a closed-form
    /// distance. The curve parameter is seeded from the nearest of
    /// `CURVE_SAMPLES` samples and refined by a safeguarded Newton iteration on
    /// the squared distance, bracketed by the neighbouring samples.
    pub fn closest_point(&self, x: Vec2) -> Result<Projection> {
        let (lo, hi) = match self.kind {
            InterfaceKind::Cubic => (-2.0, 2.0),
            InterfaceKind::Flower => (0.0, std::f64::consts::TAU),
            _ => {
                let p = self.project(x);
                return Ok(p);
            }
        };
        let ds = (hi - lo) / CURVE_SAMPLES as f64;
        let dist2 = |s: f64| (self.curve(s)[0] - x).norm_squared();
        let k = (0..=CURVE_SAMPLES)
            .min_by(|&a, &b| {
                dist2(lo + a as f64 * ds).total_cmp(&dist2(lo + b as f64 * ds))
            })
            .expect("nonempty sample set");
        let s0 = lo + k as f64 * ds;
        let (mut a, mut b) = (s0 - ds, s0 + ds);
        let slope = |s: f64| {
            let [g, g1, g2] = self.curve(s);
            let d = g - x;
            (d.dot(&g1), g1.norm_squared() + d.dot(&g2))
        };
        let mut s = s0;
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (f1, f2) = slope(s);
            if f1 > 0.0 {
                b = s;
            } else {
                a = s;
            }
            let mut next = if f2 > 0.0 { s - f1 / f2 } else { f64::NAN };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            let step = (next - s).abs();
            s = next;
            if step <= NEWTON_TOL * (hi - lo) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence { x: x.x, y: x.y });
        }
        let foot = self.curve(s)[0];
        let normal = self.normal(foot);
        Ok(Projection {
            foot,
            normal,
            signed_distance: (x - foot).norm().copysign(self.phi(x)),
            fallback: false,
        })
    }

    /// Parametrized interface curve with its first two derivatives.
    fn curve(&self, s: f64) -> [Vec2; 3] {
        match self.kind {
            InterfaceKind::Cubic => {
                let c = ((3.0 * s - 3.3) * s + 0.72) * s + 0.38;
                let c1 = (9.0 * s - 6.6) * s + 0.72;
                let c2 = 18.0 * s - 6.6;
                [Vec2::new(s, c), Vec2::new(1.0, c1), Vec2::new(0.0, c2)]
            }
            InterfaceKind::Flower => {
                // r(theta) = (0.3 / g)^(1/4) with g = 1 + 0.4 sin 6 theta
                let (s6, c6) = (6.0 * s).sin_cos();
                let g = 1.0 + 0.4 * s6;
                let g1 = 2.4 * c6;
                let g2 = -14.4 * s6;
                let k = 0.3f64.powf(0.25);
                let r = k * g.powf(-0.25);
                let r1 = -0.25 * k * g.powf(-1.25) * g1;
                let r2 = k * (5.0 / 16.0 * g.powf(-2.25) * g1 * g1 - 0.25 * g.powf(-1.25) * g2);
                let e = Vec2::new(s.cos(), s.sin());
                let t = Vec2::new(-s.sin(), s.cos());
                [e * r, e * r1 + t * r, e * (r2 - r) + t * (2.0 * r1)]
            }
            _ => unreachable!("only the cubic and the flower are parametrized"),
        }
    }

    /// Closest-point data, analytic where available, otherwise Newton with a
    /// first-order fallback.
    pub fn project(&self, x: Vec2) -> Projection {
        match self.kind {
            InterfaceKind::Circle { radius } => {
                let r = x.norm();
                let normal = if r > 0.0 { x / r } else { Vec2::new(1.0, 0.0) };
                Projection {
                    foot: normal * radius,
                    normal,
                    signed_distance: r - radius,
                    fallback: false,
                }
            }
            InterfaceKind::Line { normal, offset } => {
                let n = normal / normal.norm();
                let sd = (normal.dot(&x) - offset) / normal.norm();
                Projection {
                    foot: x - n * sd,
                    normal: n,
                    signed_distance: sd,
                    fallback: false,
                }
            }
            InterfaceKind::Cubic | InterfaceKind::Flower => {
                self.closest_point(x).unwrap_or_else(|_| {
                    let g = self.grad_phi(x);
                    let gn = g.norm().max(f64::MIN_POSITIVE);
                    let sd = self.phi(x) / gn;
                    Projection {
                        foot: x - g / gn * sd,
                        normal: g / gn,
                        signed_distance: sd,
                        fallback: true,
                    }
                })
            }
        }
    }

    pub fn signed_distance(&self, x: Vec2) -> f64 {
        self.project(x).signed_distance
    }

    /// `dist(x, Gamma)` on the plus side and `0` where `phi(x) <= 0`.
    pub fn one_sided_distance(&self, x: Vec2) -> f64 {
        if self.phi(x) <= 0.0 {
            return 0.0;
        }
        self.project(x).signed_distance.abs()
    }

    /// Like [`Self::one_sided_distance`], but reports a stalled closest-point
    /// iteration instead of falling back.
    pub fn try_one_sided_distance(&self, x: Vec2) -> Result<f64> {
        if self.phi(x) <= 0.0 {
            return Ok(0.0);
        }
        match self.kind {
            InterfaceKind::Cubic | InterfaceKind::Flower => {
                Ok(self.closest_point(x)?.signed_distance.abs())
            }
            _ => Ok(self.project(x).signed_distance.abs()),
        }
    }

    /// Sign changes along the edge `a -> b`, sampled at the endpoints and
    /// `EDGE_SAMPLES - 1` interior points.
    fn edge_sign_changes(&self, a: Vec2, b: Vec2, tol: f64) -> usize {
        let mut changes = 0;
        let mut prev = self.side(a, tol);
        for k in 1..=EDGE_SAMPLES {
            let s = k as f64 / EDGE_SAMPLES as f64;
            let side = self.side(a + (b - a) * s, tol);
            if side != prev {
                changes += 1;
            }
            prev = side;
        }
        changes
    }

    /// Cut iff the level set takes both signs on the closed element, including
    /// roots hidden between two same-signed vertices of an edge.
    pub fn classify_element(&self, vertices: &[Vec2; 3]) -> ElementClass {
        let tol = VERTEX_TIE_FACTOR * longest_edge(vertices);
        let sides = vertices.map(|v| self.side(v, tol));
        if sides[0] != sides[1] || sides[1] != sides[2] {
            return ElementClass::Cut;
        }
        for k in 0..3 {
            if self.edge_sign_changes(vertices[k], vertices[(k + 1) % 3], tol) > 0 {
                return ElementClass::Cut;
            }
        }
        match sides[0] {
            Side::Minus => ElementClass::InsideMinus,
            Side::Plus => ElementClass::InsidePlus,
        }
    }

    /// Splits a triangle into single-sided pieces. Elements whose edges carry
    /// more than one root (or roots between same-signed vertices) are
    /// quadrisected up to a fixed depth before the straight-cut split.
    pub fn decompose_cut_element(&self, vertices: &[Vec2; 3]) -> CutDecomposition {
        let tol = VERTEX_TIE_FACTOR * longest_edge(vertices);
        let parent_area = triangle_area(vertices).abs();
        let mut out = CutDecomposition::default();
        self.decompose_rec(*vertices, 0, tol, &mut out);
        out.sub_triangles
            .retain(|t| t.area() > 1e-15 * parent_area);
        let h = longest_edge(vertices);
        out.interface_segments.retain(|s| s.length() > 1e-15 * h);
        out
    }

    fn decompose_rec(&self, tri: [Vec2; 3], depth: usize, tol: f64, out: &mut CutDecomposition) {
        let sides = tri.map(|v| self.side(v, tol));
        let changes: [usize; 3] =
            std::array::from_fn(|k| self.edge_sign_changes(tri[k], tri[(k + 1) % 3], tol));
        let total: usize = changes.iter().sum();
        let vertices_agree = sides[0] == sides[1] && sides[1] == sides[2];

        if total == 0 {
            out.sub_triangles.push(SubTriangle {
                vertices: tri,
                side: sides[0],
            });
            return;
        }
        let complicated =
            changes.iter().any(|&c| c > 1) || vertices_agree || self.strongly_curved(&tri, tol);
        if complicated && depth < MAX_SUBDIVISION_DEPTH {
            let m01 = (tri[0] + tri[1]) * 0.5;
            let m12 = (tri[1] + tri[2]) * 0.5;
            let m20 = (tri[2] + tri[0]) * 0.5;
            for child in [
                [tri[0], m01, m20],
                [m01, tri[1], m12],
                [m20, m12, tri[2]],
                [m01, m12, m20],
            ] {
                self.decompose_rec(child, depth + 1, tol, out);
            }
            return;
        }
        if vertices_agree {
            out.sub_triangles.push(SubTriangle {
                vertices: tri,
                side: sides[0],
            });
            return;
        }
        // exactly one vertex differs from the other two
        let lone = (0..3)
            .find(|&k| sides[k] != sides[(k + 1) % 3] && sides[k] != sides[(k + 2) % 3])
            .expect("vertex signs differ");
        let a = tri[lone];
        let b = tri[(lone + 1) % 3];
        let c = tri[(lone + 2) % 3];
        let r1 = self.edge_root(a, b, tol);
        let r2 = self.edge_root(a, c, tol);
        let lone_side = sides[lone];
        let other = sides[(lone + 1) % 3];
        out.sub_triangles.push(SubTriangle {
            vertices: [a, r1, r2],
            side: lone_side,
        });
        out.sub_triangles.push(SubTriangle {
            vertices: [r1, b, c],
            side: other,
        });
        out.sub_triangles.push(SubTriangle {
            vertices: [r1, c, r2],
            side: other,
        });
        out.interface_segments.push(Segment { start: r1, end: r2 });
    }

    /// True when the straight chord between the two edge roots strays from
    /// the interface by more than `CHORD_DEVIATION` times its length, or
    /// crosses it.
    fn strongly_curved(&self, tri: &[Vec2; 3], tol: f64) -> bool {
        let sides = tri.map(|v| self.side(v, tol));
        let Some(lone) = (0..3)
            .find(|&k| sides[k] != sides[(k + 1) % 3] && sides[k] != sides[(k + 2) % 3])
        else {
            return false;
        };
        let a = tri[lone];
        let r1 = self.edge_root(a, tri[(lone + 1) % 3], tol);
        let r2 = self.edge_root(a, tri[(lone + 2) % 3], tol);
        let len = (r2 - r1).norm();
        let mut signs = (false, false);
        for k in 1..EDGE_SAMPLES {
            let m = r1 + (r2 - r1) * (k as f64 / EDGE_SAMPLES as f64);
            let value = self.phi(m);
            let g = self.grad_phi(m).norm();
            if g > 0.0 && value.abs() / g > CHORD_DEVIATION * len {
                return true;
            }
            if value.abs() > tol {
                if value > 0.0 {
                    signs.0 = true;
                } else {
                    signs.1 = true;
                }
            }
        }
        // the curve crosses its own chord
        signs.0 && signs.1
    }

    /// Root of `phi` on the segment `a -> b`, whose endpoints have different
    /// sides. Bisection on the tie-aware sign down to machine resolution.
    fn edge_root(&self, a: Vec2, b: Vec2, tol: f64) -> Vec2 {
        let (fa, fb) = (self.phi(a), self.phi(b));
        // bisect on the sign of phi itself when it brackets a root, otherwise
        // on the tie-aware side
        let strict = fa * fb < 0.0;
        if !strict {
            // a vertex lying on the interface is the root
            return if fa.abs() <= fb.abs() { a } else { b };
        }
        let side_a = self.side(a, tol);
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let p = a + (b - a) * mid;
            let value = self.phi(p);
            if value == 0.0 {
                return p;
            }
            let same = if strict {
                (value < 0.0) == (fa < 0.0)
            } else {
                self.side(p, tol) == side_a
            };
            if same {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        a + (b - a) * (0.5 * (lo + hi))
    }
}
