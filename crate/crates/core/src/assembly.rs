//! Mass and stiffness matrices, volume and interface loads, and the elliptic
//! projection over the enriched space.
//!
//! Basis values at quadrature points are evaluated once and kept in
//! [`QuadCache`]s. The matrix cache uses the low-order rule on plain elements
//! and the high-order rule on cut or enriched ones; the load cache uses the
//! high-order rule everywhere so that cost functionals and error norms see the
//! same quadrature as the mass matrix.

use crate::geometry::{ElementClass, Side};
use crate::linalg::{ConstrainedSystem, CsrMatrix};
use crate::quadrature::{cut_rule, element_rule, interface_rule, map_to_triangle, time_gauss, PhysicalRule};
use crate::space::SgfemSpace;
use crate::{Result, Vec2};

/// Triangle rule order on plain elements in the matrix cache.
pub const PLAIN_ORDER: usize = 2;
/// Triangle rule order on cut and enriched elements, and in the load cache.
pub const FINE_ORDER: usize = 4;
/// Segment rule order on interface segments.
pub const SEGMENT_ORDER: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub x: Vec2,
    pub weight: f64,
    pub side: Side,
    pub element: usize,
}

/// Quadrature points with the basis functions active at each of them.
#[derive(Clone, Debug, Default)]
pub struct QuadCache {
    pub points: Vec<QuadPoint>,
    offsets: Vec<usize>,
    dofs: Vec<usize>,
    values: Vec<f64>,
    grads: Vec<Vec2>,
}

impl QuadCache {
    fn new() -> Self {
        Self {
            offsets: vec![0],
            ..Self::default()
        }
    }

    fn push(&mut self, space: &SgfemSpace, element: usize, rule: &PhysicalRule, side: Side) {
        for (&x, &weight) in rule.points.iter().zip(&rule.weights) {
            let b = space.eval_at(element, x, side);
            self.points.push(QuadPoint {
                x,
                weight,
                side,
                element,
            });
            self.dofs.extend(b.active_dofs);
            self.values.extend(b.values);
            self.grads.extend(b.gradients);
            self.offsets.push(self.dofs.len());
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn basis(&self, q: usize) -> (&[usize], &[f64], &[Vec2]) {
        let r = self.offsets[q]..self.offsets[q + 1];
        (&self.dofs[r.clone()], &self.values[r.clone()], &self.grads[r])
    }

    /// Value of the discrete function `coeffs` at point `q`.
    pub fn eval(&self, coeffs: &[f64], q: usize) -> f64 {
        let (dofs, values, _) = self.basis(q);
        dofs.iter().zip(values).map(|(&d, v)| coeffs[d] * v).sum()
    }

    pub fn eval_grad(&self, coeffs: &[f64], q: usize) -> Vec2 {
        let (dofs, _, grads) = self.basis(q);
        dofs.iter().zip(grads).map(|(&d, g)| g * coeffs[d]).sum()
    }

    /// `sum_q w_q f(point_q)`.
    pub fn integrate(&self, f: impl Fn(&QuadPoint) -> f64) -> f64 {
        self.points.iter().map(|p| p.weight * f(p)).sum()
    }

    /// Load vector `(sum_q w_q s_q phi_i(x_q))_i` for point samples `s`.
    pub fn load_from_samples(&self, samples: &[f64], n_dofs: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_dofs];
        self.add_load_from_samples(samples, 1.0, &mut out);
        out
    }

    /// Adds `scale * sum_q w_q s_q phi_i(x_q)` to `out`.
    pub fn add_load_from_samples(&self, samples: &[f64], scale: f64, out: &mut [f64]) {
        for (q, p) in self.points.iter().enumerate() {
            let s = scale * p.weight * samples[q];
            if s == 0.0 {
                continue;
            }
            let (dofs, values, _) = self.basis(q);
            for (&d, v) in dofs.iter().zip(values) {
                out[d] += s * v;
            }
        }
    }

    /// Samples of the discrete function `coeffs` at every point.
    pub fn sample(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|q| self.eval(coeffs, q)).collect()
    }
}

/// All quadrature caches of one space.
#[derive(Clone, Debug)]
pub struct Caches {
    pub matrix: QuadCache,
    pub load: QuadCache,
    /// Points on the interface segments; enrichment evaluated with zero
    /// distance, gradients unused.
    pub interface: QuadCache,
}

pub fn build_caches(space: &SgfemSpace) -> Result<Caches> {
    let plain = element_rule(PLAIN_ORDER)?;
    let fine = element_rule(FINE_ORDER)?;
    let mut matrix = QuadCache::new();
    let mut load = QuadCache::new();
    let mut interface = QuadCache::new();
    for e in 0..space.mesh.num_elements() {
        let verts = space.mesh.element_vertices(e);
        match (&space.classes[e], &space.decompositions[e]) {
            (ElementClass::Cut, Some(dec)) => {
                let rules = cut_rule(dec, FINE_ORDER)?;
                for side in [Side::Minus, Side::Plus] {
                    matrix.push(space, e, &rules[side.index()], side);
                    load.push(space, e, &rules[side.index()], side);
                }
                interface.push(space, e, &interface_rule(dec, SEGMENT_ORDER)?, Side::Minus);
            }
            (class, _) => {
                let side = if *class == ElementClass::InsidePlus {
                    Side::Plus
                } else {
                    Side::Minus
                };
                let fine_rule = map_to_triangle(&fine, &verts);
                if space.is_enriched_element(e) {
                    matrix.push(space, e, &fine_rule, side);
                } else {
                    matrix.push(space, e, &map_to_triangle(&plain, &verts), side);
                }
                load.push(space, e, &fine_rule, side);
            }
        }
    }
    Ok(Caches {
        matrix,
        load,
        interface,
    })
}

/// Shared sparsity pattern of all matrices on `space`.
pub fn pattern(space: &SgfemSpace) -> CsrMatrix {
    let groups: Vec<Vec<usize>> = (0..space.mesh.num_elements())
        .map(|e| space.element_dofs(e))
        .collect();
    CsrMatrix::from_groups(space.num_dofs(), groups.iter().map(Vec::as_slice))
}

/// `a(v, w) = int beta grad v . grad w` with `beta = beta[side]`.
pub fn assemble_stiffness(space: &SgfemSpace, cache: &QuadCache, beta: [f64; 2]) -> CsrMatrix {
    let mut a = pattern(space);
    for (q, p) in cache.points.iter().enumerate() {
        let (dofs, _, grads) = cache.basis(q);
        let c = p.weight * beta[p.side.index()];
        for k in 0..dofs.len() {
            for l in k..dofs.len() {
                let v = c * grads[k].dot(&grads[l]);
                a.add(dofs[k], dofs[l], v);
                if k != l {
                    a.add(dofs[l], dofs[k], v);
                }
            }
        }
    }
    a
}

/// `(v, w) = int v w`.
pub fn assemble_mass(space: &SgfemSpace, cache: &QuadCache) -> CsrMatrix {
    let mut m = pattern(space);
    for (q, p) in cache.points.iter().enumerate() {
        let (dofs, values, _) = cache.basis(q);
        for a in 0..dofs.len() {
            let wa = p.weight * values[a];
            for b in a..dofs.len() {
                let v = wa * values[b];
                m.add(dofs[a], dofs[b], v);
                if a != b {
                    m.add(dofs[b], dofs[a], v);
                }
            }
        }
    }
    m
}

/// `int_{t0}^{t0+dt} (f, w) dt` with two Gauss nodes in time; `f(x, side, t)`.
pub fn assemble_volume_load(
    cache: &QuadCache,
    n_dofs: usize,
    f: impl Fn(Vec2, Side, f64) -> f64,
    t0: f64,
    dt: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; n_dofs];
    for (t, wt) in time_gauss(t0, dt) {
        let samples: Vec<f64> = cache.points.iter().map(|p| f(p.x, p.side, t)).collect();
        cache.add_load_from_samples(&samples, wt, &mut out);
    }
    out
}

/// `int_{t0}^{t0+dt} <gamma, w>_Gamma dt` with two Gauss nodes in time.
pub fn assemble_interface_load(
    cache: &QuadCache,
    n_dofs: usize,
    gamma: impl Fn(Vec2, f64) -> f64,
    t0: f64,
    dt: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; n_dofs];
    for (t, wt) in time_gauss(t0, dt) {
        let samples: Vec<f64> = cache.points.iter().map(|p| gamma(p.x, t)).collect();
        cache.add_load_from_samples(&samples, wt, &mut out);
    }
    out
}

/// Elliptic projection `R_h w`: `a(R_h w, v) = a(w, v)` for all discrete `v`
/// vanishing on the boundary, with `R_h w` matching the trace of `w` at the
/// boundary nodes. `grad_w(x, side)` is the piecewise gradient.
pub fn elliptic_projection(
    space: &SgfemSpace,
    caches: &Caches,
    stiffness: &CsrMatrix,
    beta: [f64; 2],
    w: impl Fn(Vec2, Side) -> f64,
    grad_w: impl Fn(Vec2, Side) -> Vec2,
) -> Result<Vec<f64>> {
    let n = space.num_dofs();
    let mut rhs = vec![0.0; n];
    let cache = &caches.load;
    for (q, p) in cache.points.iter().enumerate() {
        let (dofs, _, grads) = cache.basis(q);
        let gw = grad_w(p.x, p.side) * (p.weight * beta[p.side.index()]);
        for (&d, g) in dofs.iter().zip(grads) {
            rhs[d] += gw.dot(g);
        }
    }
    let mut fixed = vec![0.0; n];
    for &k in &space.mesh.boundary_nodes {
        let x = space.mesh.nodes[k];
        fixed[space.std_dof[k]] = w(x, space.interface.side(x, 0.0));
    }
    let free: Vec<bool> = space.constrained.iter().map(|c| !c).collect();
    let system = ConstrainedSystem::new(stiffness.clone(), free)?;
    system.solve(&rhs, &fixed)
}
