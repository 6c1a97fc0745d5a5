//! The enriched approximation space: linear hat functions plus, at every node
//! of a cut element, the hat function times the one-sided distance minus its
//! nodal interpolant.
//!
//! DOFs are numbered node by node, an enriched node's enrichment DOF directly
//! after its standard DOF, which keeps the envelope of the system matrices
//! close to that of plain linear elements.

use crate::geometry::{CutDecomposition, ElementClass, LevelSetInterface, Side, VERTEX_TIE_FACTOR};
use crate::mesh::TriMesh;
use crate::Vec2;

/// Basis functions active at one point of one element.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BasisEval {
    pub active_dofs: Vec<usize>,
    pub values: Vec<f64>,
    pub gradients: Vec<Vec2>,
}

/// Pinned DOF values for a Dirichlet condition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintRecord {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

impl ConstraintRecord {
    /// Writes the pinned values into a full coefficient vector.
    pub fn impose(&self, coeffs: &mut [f64]) {
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            coeffs[d] = v;
        }
    }
}

#[derive(Clone, Debug)]
pub struct SgfemSpace {
    pub mesh: TriMesh,
    pub interface: LevelSetInterface,
    pub classes: Vec<ElementClass>,
    /// Decomposition of each cut element, `None` elsewhere.
    pub decompositions: Vec<Option<CutDecomposition>>,
    /// Vertices of cut elements, sorted.
    pub enr_nodes: Vec<usize>,
    /// Enriched boundary nodes whose enrichment DOF is pinned to zero and
    /// therefore not created.
    pub pinned_enrichment: Vec<usize>,
    pub std_dof: Vec<usize>,
    pub enr_dof: Vec<Option<usize>>,
    /// One-sided distance at every node; defines the nodal interpolant.
    pub nodal_distance: Vec<f64>,
    /// `true` for standard DOFs of boundary nodes.
    pub constrained: Vec<bool>,
    num_dofs: usize,
}

/// Alias matching the construction operation's name in the crate docs.
pub fn build_space(mesh: TriMesh, interface: LevelSetInterface) -> SgfemSpace {
    SgfemSpace::new(mesh, interface)
}

impl SgfemSpace {
    pub fn new(mesh: TriMesh, interface: LevelSetInterface) -> Self {
        let classes: Vec<ElementClass> = (0..mesh.num_elements())
            .map(|e| interface.classify_element(&mesh.element_vertices(e)))
            .collect();
        let decompositions = classes
            .iter()
            .enumerate()
            .map(|(e, c)| {
                (*c == ElementClass::Cut)
                    .then(|| interface.decompose_cut_element(&mesh.element_vertices(e)))
            })
            .collect();
        let mut enriched = vec![false; mesh.num_nodes()];
        for (e, c) in classes.iter().enumerate() {
            if *c == ElementClass::Cut {
                for &k in &mesh.elements[e] {
                    enriched[k] = true;
                }
            }
        }
        let enr_nodes: Vec<usize> = (0..mesh.num_nodes()).filter(|&k| enriched[k]).collect();
        let pinned_enrichment: Vec<usize> = enr_nodes
            .iter()
            .copied()
            .filter(|&k| mesh.is_boundary[k])
            .collect();
        let mut std_dof = Vec::with_capacity(mesh.num_nodes());
        let mut enr_dof = Vec::with_capacity(mesh.num_nodes());
        let mut constrained = Vec::new();
        let mut next = 0;
        for (&boundary, &enrich) in mesh.is_boundary.iter().zip(&enriched) {
            std_dof.push(next);
            constrained.push(boundary);
            next += 1;
            if enrich && !boundary {
                enr_dof.push(Some(next));
                constrained.push(false);
                next += 1;
            } else {
                enr_dof.push(None);
            }
        }
        let nodal_distance = mesh
            .nodes
            .iter()
            .map(|&p| match interface.side(p, tie_tolerance(&mesh)) {
                Side::Minus => 0.0,
                Side::Plus => interface.project(p).signed_distance,
            })
            .collect();
        Self {
            mesh,
            interface,
            classes,
            decompositions,
            enr_nodes,
            pinned_enrichment,
            std_dof,
            enr_dof,
            nodal_distance,
            constrained,
            num_dofs: next,
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn num_enrichment_dofs(&self) -> usize {
        self.enr_dof.iter().flatten().count()
    }

    /// True when some vertex of `e` carries an enrichment DOF.
    pub fn is_enriched_element(&self, e: usize) -> bool {
        self.mesh.elements[e].iter().any(|&k| self.enr_dof[k].is_some())
    }

    /// Global DOFs with support on element `e`, in evaluation order: the three
    /// standard DOFs, then the enrichment DOFs of enriched vertices.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let tri = self.mesh.elements[e];
        let mut dofs: Vec<usize> = tri.iter().map(|&k| self.std_dof[k]).collect();
        dofs.extend(tri.iter().filter_map(|&k| self.enr_dof[k]));
        dofs
    }

    /// Side of a point inside element `e`. Uncut elements take their class;
    /// cut elements use the sign of the level set with the vertex tie rule.
    pub fn point_side(&self, e: usize, x: Vec2) -> Side {
        match self.classes[e] {
            ElementClass::InsideMinus => Side::Minus,
            ElementClass::InsidePlus => Side::Plus,
            ElementClass::Cut => self.interface.side(x, tie_tolerance(&self.mesh)),
        }
    }

    /// One-sided distance and its gradient at `x`, taken from the given side:
    /// zero on the minus side, the signed distance on the plus side.
    pub fn distance_on_side(&self, x: Vec2, side: Side) -> (f64, Vec2) {
        match side {
            Side::Minus => (0.0, Vec2::zeros()),
            Side::Plus => {
                let p = self.interface.project(x);
                (p.signed_distance, p.normal)
            }
        }
    }

    /// Basis functions at the physical point `x` of element `e`, with the
    /// enrichment evaluated from `side`.
    pub fn eval_at(&self, e: usize, x: Vec2, side: Side) -> BasisEval {
        let tri = self.mesh.elements[e];
        let verts = self.mesh.element_vertices(e);
        let lambda = self.mesh.barycentric(e, x);
        let grads = hat_gradients(&verts);
        let mut out = BasisEval::default();
        for k in 0..3 {
            out.active_dofs.push(self.std_dof[tri[k]]);
            out.values.push(lambda[k]);
            out.gradients.push(grads[k]);
        }
        if !self.is_enriched_element(e) {
            return out;
        }
        let (d, grad_d) = self.distance_on_side(x, side);
        let nodal = tri.map(|k| self.nodal_distance[k]);
        let interp: f64 = (0..3).map(|k| lambda[k] * nodal[k]).sum();
        let grad_interp: Vec2 = (0..3).map(|k| grads[k] * nodal[k]).sum();
        let r = d - interp;
        let grad_r = grad_d - grad_interp;
        for k in 0..3 {
            if let Some(dof) = self.enr_dof[tri[k]] {
                out.active_dofs.push(dof);
                out.values.push(lambda[k] * r);
                out.gradients.push(grads[k] * r + grad_r * lambda[k]);
            }
        }
        out
    }

    /// Basis functions at a point of the reference triangle of element `e`.
    pub fn eval_basis(&self, e: usize, reference_point: [f64; 2]) -> BasisEval {
        let [a, b, c] = self.mesh.element_vertices(e);
        let x = a + (b - a) * reference_point[0] + (c - a) * reference_point[1];
        self.eval_at(e, x, self.point_side(e, x))
    }

    /// Value of the discrete function with coefficients `coeffs`.
    pub fn evaluate(&self, coeffs: &[f64], e: usize, x: Vec2, side: Side) -> f64 {
        let b = self.eval_at(e, x, side);
        b.active_dofs
            .iter()
            .zip(&b.values)
            .map(|(&d, v)| coeffs[d] * v)
            .sum()
    }

    /// Pins the standard DOFs of boundary nodes to `boundary_value(node)`.
    pub fn apply_dirichlet(&self, boundary_value: impl Fn(usize) -> f64) -> ConstraintRecord {
        let mut rec = ConstraintRecord::default();
        for &k in &self.mesh.boundary_nodes {
            rec.dofs.push(self.std_dof[k]);
            rec.values.push(boundary_value(k));
        }
        rec
    }

    pub fn homogeneous_constraints(&self) -> ConstraintRecord {
        self.apply_dirichlet(|_| 0.0)
    }

    /// Nodal interpolant in the standard block; enrichment coefficients zero.
    pub fn interpolate(&self, f: impl Fn(Vec2) -> f64) -> Vec<f64> {
        let mut c = vec![0.0; self.num_dofs];
        for (k, &p) in self.mesh.nodes.iter().enumerate() {
            c[self.std_dof[k]] = f(p);
        }
        c
    }

    /// Coefficient vector equal to one on every standard DOF.
    pub fn standard_ones(&self) -> Vec<f64> {
        self.interpolate(|_| 1.0)
    }
}

/// Level-set tie tolerance of the mesh triangles (their longest edge is the
/// diagonal).
fn tie_tolerance(mesh: &TriMesh) -> f64 {
    VERTEX_TIE_FACTOR * mesh.h * std::f64::consts::SQRT_2
}

/// Constant gradients of the three barycentric coordinates.
pub fn hat_gradients(v: &[Vec2; 3]) -> [Vec2; 3] {
    let det = (v[1].x - v[0].x) * (v[2].y - v[0].y) - (v[2].x - v[0].x) * (v[1].y - v[0].y);
    let g1 = Vec2::new(v[2].y - v[0].y, v[0].x - v[2].x) / det;
    let g2 = Vec2::new(v[0].y - v[1].y, v[1].x - v[0].x) / det;
    [-g1 - g2, g1, g2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle_space(n: usize, r: f64) -> SgfemSpace {
        SgfemSpace::new(TriMesh::uniform(n), LevelSetInterface::circle(r))
    }

    #[test]
    fn enriched_nodes_hug_the_interface() {
        let s = circle_space(8, 0.5);
        assert!(!s.enr_nodes.is_empty());
        for &k in &s.enr_nodes {
            let d = (s.mesh.nodes[k].norm() - 0.5).abs();
            assert!(d <= 2.0 * s.mesh.h);
        }
        assert!(s.pinned_enrichment.is_empty());
    }

    #[test]
    fn far_interface_gives_plain_linear_elements() {
        let s = circle_space(8, 10.0);
        assert!(s.enr_nodes.is_empty());
        assert_eq!(s.num_dofs(), 81);
    }

    #[test]
    fn dof_count_matches_direct_classification() {
        let s = circle_space(16, 0.5);
        // oracle: an element is cut iff its distance range to the origin
        // straddles the radius; vertices exactly on the circle count as inside
        let mut marked = vec![false; s.mesh.num_nodes()];
        for tri in &s.mesh.elements {
            let r: Vec<f64> = tri.iter().map(|&k| s.mesh.nodes[k].norm()).collect();
            let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
            // the farthest point of a triangle is a vertex, the nearest may be
            // on an edge
            let [a, b, c] = tri.map(|k| s.mesh.nodes[k]);
            let nearest = [(a, b), (b, c), (c, a)]
                .iter()
                .map(|&(p, q)| {
                    let t = (-(p.dot(&(q - p))) / (q - p).norm_squared()).clamp(0.0, 1.0);
                    (p + (q - p) * t).norm()
                })
                .fold(lo, f64::min);
            let hi = r.iter().cloned().fold(0.0, f64::max);
            if nearest <= 0.5 && hi > 0.5 {
                for &k in tri {
                    marked[k] = true;
                }
            }
        }
        let count = marked.iter().filter(|&&m| m).count();
        assert_eq!(s.enr_nodes.len(), count);
        assert_eq!(s.num_dofs(), 289 + count);
    }

    #[test]
    fn enrichment_vanishes_at_nodes() {
        for iface in [LevelSetInterface::circle(0.5), LevelSetInterface::cubic(), LevelSetInterface::flower()] {
            let s = SgfemSpace::new(TriMesh::uniform(16), iface);
            let mut worst = 0.0_f64;
            for e in 0..s.mesh.num_elements() {
                if !s.is_enriched_element(e) {
                    continue;
                }
                for r in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] {
                    let b = s.eval_basis(e, r);
                    for v in &b.values[3..] {
                        worst = worst.max(v.abs());
                    }
                }
            }
            assert!(worst <= 1e-14, "{:?}: {worst}", iface.kind);
        }
    }

    #[test]
    fn standard_block_is_a_partition_of_unity() {
        let s = circle_space(8, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let e = rng.random_range(0..s.mesh.num_elements());
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let r = if a + b > 1.0 { [1.0 - a, 1.0 - b] } else { [a, b] };
            let ev = s.eval_basis(e, r);
            let sum: f64 = ev.values[..3].iter().sum();
            let gsum: Vec2 = ev.gradients[..3].iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-14);
            assert!(gsum.norm() <= 1e-12);
        }
    }

    #[test]
    fn interpolation_is_exact_at_nodes() {
        let s = circle_space(8, 0.5);
        let c = s.interpolate(|x| 2.0 * x.x - x.y + 0.5);
        for (k, &p) in s.mesh.nodes.iter().enumerate() {
            let loc = s.mesh.locate_point(p).unwrap();
            let side = s.point_side(loc.element, p);
            let v = s.evaluate(&c, loc.element, p, side);
            assert_abs_diff_eq!(v, 2.0 * p.x - p.y + 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(c[s.std_dof[k]], 2.0 * p.x - p.y + 0.5);
        }
    }

    #[test]
    fn enrichment_gradient_matches_one_sided_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for iface in [LevelSetInterface::circle(0.5), LevelSetInterface::cubic()] {
            let s = SgfemSpace::new(TriMesh::uniform(8), iface);
            let cut: Vec<usize> = (0..s.mesh.num_elements())
                .filter(|&e| s.classes[e] == ElementClass::Cut)
                .collect();
            let mut checked = 0;
            while checked < 20 {
                let e = cut[rng.random_range(0..cut.len())];
                let (a, b): (f64, f64) = (rng.random(), rng.random());
                let [p0, p1, p2] = s.mesh.element_vertices(e);
                let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
                let x = p0 + (p1 - p0) * a + (p2 - p0) * b;
                let side = s.point_side(e, x);
                let eps = 1e-6;
                // keep the whole stencil on one side of the interface
                let stencil_ok = [Vec2::new(eps, 0.0), Vec2::new(0.0, eps)]
                    .iter()
                    .all(|&d| s.point_side(e, x + d) == side && s.point_side(e, x - d) == side);
                if !stencil_ok || s.interface.phi(x).abs() < 1e-3 {
                    continue;
                }
                let ev = s.eval_at(e, x, side);
                for (k, g) in ev.gradients.iter().enumerate().skip(3) {
                    let val = |y: Vec2| s.eval_at(e, y, side).values[k];
                    let fd = Vec2::new(
                        (val(x + Vec2::new(eps, 0.0)) - val(x - Vec2::new(eps, 0.0))) / (2.0 * eps),
                        (val(x + Vec2::new(0.0, eps)) - val(x - Vec2::new(0.0, eps))) / (2.0 * eps),
                    );
                    assert!((fd - g).norm() <= 1e-6, "fd {fd:?} vs {g:?}");
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn dirichlet_records() {
        let s = circle_space(4, 0.5);
        let rec = s.homogeneous_constraints();
        assert_eq!(rec.dofs.len(), 16);
        assert!(rec.values.iter().all(|&v| v == 0.0));
        let rec = s.apply_dirichlet(|k| s.mesh.nodes[k].x);
        let corner = s.mesh.num_nodes() - 1;
        let pos = rec.dofs.iter().position(|&d| d == s.std_dof[corner]).unwrap();
        assert_eq!(rec.values[pos], 1.0);
        assert!(rec.dofs.iter().all(|&d| s.constrained[d]));
    }

    #[test]
    fn cubic_touches_the_boundary_and_pins_enrichment_there() {
        let s = SgfemSpace::new(TriMesh::uniform(16), LevelSetInterface::cubic());
        assert!(!s.pinned_enrichment.is_empty());
        assert_eq!(
            s.num_dofs(),
            s.mesh.num_nodes() + s.enr_nodes.len() - s.pinned_enrichment.len()
        );
    }
}
