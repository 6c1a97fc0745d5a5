//! Quadrature on the reference triangle and segment, and the composite rules
//! built on cut decompositions.

use crate::geometry::{triangle_area, CutDecomposition, Segment, Side};
use crate::{Error, Result, Vec2};

/// Points and positive weights on a reference cell.
#[derive(Clone, Debug)]
pub struct QuadRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

/// Rule on the reference triangle `(0,0), (1,0), (0,1)`; weights sum to 1/2.
pub type TriangleRule = QuadRule<[f64; 2]>;
/// Rule on `[0, 1]`; weights sum to 1.
pub type LineRule = QuadRule<f64>;

/// A rule already mapped to physical coordinates.
#[derive(Clone, Debug, Default)]
pub struct PhysicalRule {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
}

impl PhysicalRule {
    pub fn integrate(&self, f: impl Fn(Vec2) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn extend(&mut self, other: PhysicalRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

pub fn element_rule(order: usize) -> Result<TriangleRule> {
    match order {
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            Ok(QuadRule {
                points: vec![[a, a], [b, a], [a, b]],
                weights: vec![1.0 / 6.0; 3],
                degree: 2,
            })
        }
        4 => {
            // six-point symmetric rule, abscissae and weights in closed form
            let s10 = 10f64.sqrt();
            let root = (38.0 - 44.0 * (0.4f64).sqrt()).sqrt();
            let a = (8.0 - s10 + root) / 18.0;
            let b = (8.0 - s10 - root) / 18.0;
            let wr = (213125.0 - 53320.0 * s10).sqrt();
            let wa = 0.5 * (620.0 + wr) / 3720.0;
            let wb = 0.5 * (620.0 - wr) / 3720.0;
            Ok(QuadRule {
                points: vec![
                    [a, a],
                    [1.0 - 2.0 * a, a],
                    [a, 1.0 - 2.0 * a],
                    [b, b],
                    [1.0 - 2.0 * b, b],
                    [b, 1.0 - 2.0 * b],
                ],
                weights: vec![wa, wa, wa, wb, wb, wb],
                degree: 4,
            })
        }
        other => Err(Error::UnsupportedOrder(other)),
    }
}

/// Gauss-Legendre rules on `[0, 1]`: order 3 has two points, order 5 three.
pub fn segment_rule(order: usize) -> Result<LineRule> {
    match order {
        3 => {
            let d = 0.5 / 3f64.sqrt();
            Ok(QuadRule {
                points: vec![0.5 - d, 0.5 + d],
                weights: vec![0.5, 0.5],
                degree: 3,
            })
        }
        5 => {
            let d = 0.5 * (0.6f64).sqrt();
            Ok(QuadRule {
                points: vec![0.5 - d, 0.5, 0.5 + d],
                weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
                degree: 5,
            })
        }
        other => Err(Error::UnsupportedOrder(other)),
    }
}

/// Two-point Gauss nodes on `[t0, t0 + dt]` as `(time, weight)` pairs.
pub fn time_gauss(t0: f64, dt: f64) -> [(f64, f64); 2] {
    let d = 0.5 / 3f64.sqrt();
    [(t0 + (0.5 - d) * dt, 0.5 * dt), (t0 + (0.5 + d) * dt, 0.5 * dt)]
}

pub fn map_to_triangle(rule: &TriangleRule, v: &[Vec2; 3]) -> PhysicalRule {
    let jac = 2.0 * triangle_area(v).abs();
    let (e1, e2) = (v[1] - v[0], v[2] - v[0]);
    PhysicalRule {
        points: rule
            .points
            .iter()
            .map(|&[s, t]| v[0] + e1 * s + e2 * t)
            .collect(),
        weights: rule.weights.iter().map(|w| w * jac).collect(),
    }
}

pub fn map_to_segment(rule: &LineRule, seg: &Segment) -> PhysicalRule {
    let len = seg.length();
    PhysicalRule {
        points: rule
            .points
            .iter()
            .map(|&s| seg.start + (seg.end - seg.start) * s)
            .collect(),
        weights: rule.weights.iter().map(|w| w * len).collect(),
    }
}

/// One composite rule per side, indexed by [`Side::index`].
pub fn cut_rule(decomposition: &CutDecomposition, order: usize) -> Result<[PhysicalRule; 2]> {
    let rule = element_rule(order)?;
    let mut out: [PhysicalRule; 2] = Default::default();
    for piece in &decomposition.sub_triangles {
        out[piece.side.index()].extend(map_to_triangle(&rule, &piece.vertices));
    }
    Ok(out)
}

/// Composite segment rule over all interface segments of a decomposition.
pub fn interface_rule(decomposition: &CutDecomposition, order: usize) -> Result<PhysicalRule> {
    let rule = segment_rule(order)?;
    let mut out = PhysicalRule::default();
    for seg in &decomposition.interface_segments {
        out.extend(map_to_segment(&rule, seg));
    }
    Ok(out)
}

pub fn side_rule(rules: &[PhysicalRule; 2], side: Side) -> &PhysicalRule {
    &rules[side.index()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSetInterface;
    use approx::assert_abs_diff_eq;

    fn integrate_ref(rule: &TriangleRule, f: impl Fn(f64, f64) -> f64) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }

    /// `int x^a y^b` over the reference triangle is `a! b! / (a + b + 2)!`.
    fn monomial_moment(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn element_rule_moments() {
        let r2 = element_rule(2).unwrap();
        assert_abs_diff_eq!(integrate_ref(&r2, |x, _| x), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(integrate_ref(&r2, |x, y| x * y), 1.0 / 24.0, epsilon = 1e-15);
        let r4 = element_rule(4).unwrap();
        assert_abs_diff_eq!(integrate_ref(&r4, |x, _| x.powi(4)), 1.0 / 30.0, epsilon = 1e-14);
        for (rule, deg) in [(&r2, 2), (&r4, 4)] {
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    let got = integrate_ref(rule, |x, y| x.powi(a as i32) * y.powi(b as i32));
                    assert_abs_diff_eq!(got, monomial_moment(a, b), epsilon = 1e-14);
                }
            }
        }
        assert!(matches!(element_rule(3), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn segment_rule_moments() {
        let r3 = segment_rule(3).unwrap();
        let int = |r: &LineRule, k: i32| -> f64 {
            r.points.iter().zip(&r.weights).map(|(s, w)| w * s.powi(k)).sum()
        };
        assert_abs_diff_eq!(int(&r3, 2), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(int(&r3, 3), 1.0 / 4.0, epsilon = 1e-15);
        let r5 = segment_rule(5).unwrap();
        for k in 0..=5 {
            assert_abs_diff_eq!(int(&r5, k), 1.0 / (k as f64 + 1.0), epsilon = 1e-15);
        }
        assert!(segment_rule(4).is_err());
    }

    #[test]
    fn cut_rule_partitions_the_parent() {
        let circle = LevelSetInterface::circle(0.5);
        let tri = [Vec2::new(0.25, 0.0), Vec2::new(0.5, 0.0), Vec2::new(0.5, 0.25)];
        let dec = circle.decompose_cut_element(&tri);
        let rules = cut_rule(&dec, 4).unwrap();
        let total = rules[0].measure() + rules[1].measure();
        assert_abs_diff_eq!(total, triangle_area(&tri), epsilon = 1e-14);
        assert!(rules.iter().all(|r| r.weights.iter().all(|&w| w > 0.0)));
    }

    #[test]
    fn trivial_decomposition_reduces_to_element_rule() {
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0), Vec2::new(0.5, 0.5)];
        let far = LevelSetInterface::circle(10.0);
        let dec = far.decompose_cut_element(&tri);
        assert_eq!(dec.sub_triangles.len(), 1);
        let rules = cut_rule(&dec, 2).unwrap();
        let plain = map_to_triangle(&element_rule(2).unwrap(), &tri);
        assert_eq!(rules[Side::Minus.index()].points, plain.points);
        assert_eq!(rules[Side::Minus.index()].weights, plain.weights);
    }

    #[test]
    fn piecewise_beta_on_half_cut_square() {
        // square (0,1)^2 split along its diagonal, cut by x1 = 0.3
        let line = LevelSetInterface::line(Vec2::new(1.0, 0.0), 0.3);
        let tris = [
            [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)],
            [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)],
        ];
        let (beta_m, beta_p) = (1.0, 10.0);
        let mut got = 0.0;
        for t in &tris {
            let rules = cut_rule(&line.decompose_cut_element(t), 4).unwrap();
            got += beta_m * rules[0].measure() + beta_p * rules[1].measure();
        }
        // the strip x1 < 0.3 has area 0.3
        let exact = beta_m * 0.3 + beta_p * 0.7;
        assert_abs_diff_eq!(got, exact, epsilon = 1e-12);
    }

    #[test]
    fn linear_integrand_on_cut_element_matches_subdivision_oracle() {
        let circle = LevelSetInterface::circle(0.5);
        let tri = [Vec2::new(0.25, 0.25), Vec2::new(0.5, 0.25), Vec2::new(0.5, 0.5)];
        let f = |x: Vec2| 1.0 + 2.0 * x.x - 3.0 * x.y;
        let rules = cut_rule(&circle.decompose_cut_element(&tri), 4).unwrap();
        let got = rules[0].integrate(f) + rules[1].integrate(f);
        // oracle: uniform refinement of the parent into 4^6 triangles
        let r4 = element_rule(4).unwrap();
        let mut pieces = vec![tri];
        for _ in 0..6 {
            pieces = pieces
                .into_iter()
                .flat_map(|[a, b, c]| {
                    let (ab, bc, ca) = ((a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0);
                    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
                })
                .collect();
        }
        let oracle: f64 = pieces
            .iter()
            .map(|t| map_to_triangle(&r4, t).integrate(f))
            .sum();
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-10);
    }

    #[test]
    fn time_rule_integrates_cubics() {
        let (t0, dt) = (0.3, 0.2);
        let q = time_gauss(t0, dt);
        let got: f64 = q.iter().map(|(t, w)| w * t.powi(3)).sum();
        let exact = ((t0 + dt).powi(4) - t0.powi(4)) / 4.0;
        assert_abs_diff_eq!(got, exact, epsilon = 1e-15);
    }
}
