//! Uniform triangulation of the square `(-1, 1)^2`.

use crate::geometry::triangle_area;
use crate::{Error, Result, Vec2};
use std::collections::HashMap;
use std::io::Write;

#[derive(Clone, Debug)]
pub struct TriMesh {
    /// Grid squares per direction.
    pub n: usize,
    pub nodes: Vec<Vec2>,
    /// Counter-clockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub boundary_nodes: Vec<usize>,
    pub is_boundary: Vec<bool>,
    /// Grid spacing `2 / n`.
    pub h: f64,
}

/// Barycentric location of a point in the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLocation {
    pub element: usize,
    pub barycentric: [f64; 3],
}

impl TriMesh {
    /// `n x n` squares, each split along the bottom-left to top-right diagonal.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "mesh needs at least one square per direction");
        let h = 2.0 / n as f64;
        let np = n + 1;
        let mut nodes = Vec::with_capacity(np * np);
        let mut is_boundary = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                nodes.push(Vec2::new(-1.0 + i as f64 * h, -1.0 + j as f64 * h));
                is_boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            }
        }
        let boundary_nodes = (0..np * np).filter(|&k| is_boundary[k]).collect();
        Self {
            n,
            nodes,
            elements,
            boundary_nodes,
            is_boundary,
            h,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_vertices(&self, e: usize) -> [Vec2; 3] {
        self.elements[e].map(|k| self.nodes[k])
    }

    pub fn element_area(&self, e: usize) -> f64 {
        triangle_area(&self.element_vertices(e))
    }

    /// Undirected edges with the number of elements sharing each.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::new();
        for tri in &self.elements {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Element containing `x` and its barycentric coordinates. Points on shared
    /// edges go to the lowest element index.
    pub fn locate_point(&self, x: Vec2) -> Result<PointLocation> {
        let slack = 1e-14;
        if !(x.x.abs() <= 1.0 + slack && x.y.abs() <= 1.0 + slack) {
            return Err(Error::OutOfDomain { x: x.x, y: x.y });
        }
        let n = self.n as isize;
        let ci = (((x.x + 1.0) / self.h).floor() as isize).clamp(0, n - 1);
        let cj = (((x.y + 1.0) / self.h).floor() as isize).clamp(0, n - 1);
        let mut best: Option<PointLocation> = None;
        for j in (cj - 1).max(0)..=(cj + 1).min(n - 1) {
            for i in (ci - 1).max(0)..=(ci + 1).min(n - 1) {
                for k in 0..2 {
                    let e = 2 * (j as usize * self.n + i as usize) + k;
                    if best.is_some_and(|b| b.element <= e) {
                        continue;
                    }
                    let lambda = self.barycentric(e, x);
                    if lambda.iter().all(|&l| l >= -1e-12) {
                        best = Some(PointLocation {
                            element: e,
                            barycentric: clamp_barycentric(lambda),
                        });
                    }
                }
            }
        }
        best.ok_or(Error::OutOfDomain { x: x.x, y: x.y })
    }

    /// Barycentric coordinates of `x` with respect to element `e` (not clamped).
    pub fn barycentric(&self, e: usize, x: Vec2) -> [f64; 3] {
        let [a, b, c] = self.element_vertices(e);
        let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        let l1 = ((x.x - a.x) * (c.y - a.y) - (c.x - a.x) * (x.y - a.y)) / det;
        let l2 = ((b.x - a.x) * (x.y - a.y) - (x.x - a.x) * (b.y - a.y)) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Plain-text dump: a header line, one `x y` line per node, then one
    /// `a b c` line per element.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.num_nodes(), self.num_elements())?;
        for p in &self.nodes {
            writeln!(out, "{:.17e} {:.17e}", p.x, p.y)?;
        }
        for t in &self.elements {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

fn clamp_barycentric(mut l: [f64; 3]) -> [f64; 3] {
    for v in &mut l {
        *v = v.max(0.0);
    }
    let s: f64 = l.iter().sum();
    l.map(|v| v / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn counting() {
        let m = TriMesh::uniform(2);
        assert_eq!(m.num_nodes(), 9);
        assert_eq!(m.num_elements(), 8);
        assert_eq!(m.boundary_nodes.len(), 8);
        let m = TriMesh::uniform(8);
        assert_eq!(m.num_nodes(), 81);
        assert_eq!(m.num_elements(), 128);
        assert_abs_diff_eq!(m.h, 0.25);
    }

    #[test]
    fn areas_positive_equal_and_sum_to_four() {
        for n in [2, 5, 16] {
            let m = TriMesh::uniform(n);
            let a0 = m.element_area(0);
            let mut total = 0.0;
            for e in 0..m.num_elements() {
                let a = m.element_area(e);
                assert!(a > 0.0);
                assert_abs_diff_eq!(a, a0, epsilon = 1e-15);
                total += a;
            }
            assert_abs_diff_eq!(total, 4.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn conforming_edges_and_boundary_tags() {
        let m = TriMesh::uniform(6);
        for (&(a, b), &count) in &m.edge_incidence() {
            let on_boundary = m.is_boundary[a]
                && m.is_boundary[b]
                && {
                    let (pa, pb) = (m.nodes[a], m.nodes[b]);
                    (pa.x == pb.x && pa.x.abs() == 1.0) || (pa.y == pb.y && pa.y.abs() == 1.0)
                };
            assert_eq!(count, if on_boundary { 1 } else { 2 });
        }
        for (k, p) in m.nodes.iter().enumerate() {
            assert_eq!(m.is_boundary[k], p.x.abs().max(p.y.abs()) == 1.0);
        }
    }

    #[test]
    fn locate_corner_and_centroid() {
        let m = TriMesh::uniform(4);
        let loc = m.locate_point(Vec2::new(-1.0, -1.0)).unwrap();
        assert_eq!(loc.element, 0);
        assert_abs_diff_eq!(loc.barycentric[0], 1.0, epsilon = 1e-15);
        let e = 13;
        let [a, b, c] = m.element_vertices(e);
        let loc = m.locate_point((a + b + c) / 3.0).unwrap();
        assert_eq!(loc.element, e);
        for l in loc.barycentric {
            assert_abs_diff_eq!(l, 1.0 / 3.0, epsilon = 1e-14);
        }
        assert!(m.locate_point(Vec2::new(1.5, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn barycentric_round_trip(x in -1.0f64..=1.0, y in -1.0f64..=1.0, n in 2usize..20) {
            let m = TriMesh::uniform(n);
            let p = Vec2::new(x, y);
            let loc = m.locate_point(p).unwrap();
            let s: f64 = loc.barycentric.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-14);
            prop_assert!(loc.barycentric.iter().all(|&l| (0.0..=1.0).contains(&l)));
            let verts = m.element_vertices(loc.element);
            let q = verts[0] * loc.barycentric[0] + verts[1] * loc.barycentric[1] + verts[2] * loc.barycentric[2];
            prop_assert!((q - p).norm() < 1e-14);
        }
    }
}
