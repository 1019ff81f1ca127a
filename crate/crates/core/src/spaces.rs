//! Taylor-Hood P2/P1 layout, evaluation, interpolation and L^p norms.
//!
//! Scalar P2 nodes are numbered vertices first, then edge midpoints. The global vector is
//! `[u_x nodes | u_y nodes | pressure vertices | mean multiplier]`.

use std::sync::Arc;

use crate::mesh::{edge_topology, EdgeSet, TriMesh};
use crate::quadrature::{triangle_rule, QuadRule, DEFAULT_DEGREE};

/// Reference coordinates of the six P2 nodes: vertices, then midpoints of edges (0,1), (1,2), (2,0).
pub const P2_NODES: [[f64; 2]; 6] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [0.5, 0.0],
    [0.5, 0.5],
    [0.0, 0.5],
];

const EDGE_PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
    pub area: f64,
    pub diameter: f64,
}

#[derive(Debug)]
pub struct ThSpace {
    pub mesh: Arc<TriMesh>,
    pub edges: EdgeSet,
    pub rule: QuadRule,
    pub geometry: Vec<ElementGeometry>,
    /// Per scalar P2 node.
    pub boundary: Vec<bool>,
    ref_p2: Vec<[f64; 6]>,
}

/// Velocity/pressure pair (or velocity/multiplier pair for the adjoint) over a space.
#[derive(Debug, Clone)]
pub struct ThFunction {
    pub space: Arc<ThSpace>,
    pub coeffs: Vec<f64>,
}

/// Values of a discrete field at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointValue {
    pub velocity: [f64; 2],
    /// `grad[c][d]` is the derivative of component `c` in direction `d`.
    pub grad: [[f64; 2]; 2],
    pub pressure: f64,
    pub divergence: f64,
}

/// A vector field sampled at every quadrature point of every element, indexed `t * nq + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadField {
    pub nq: usize,
    pub values: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    All,
    Element(usize),
}

pub fn barycentric(xi: [f64; 2]) -> [f64; 3] {
    [1.0 - xi[0] - xi[1], xi[0], xi[1]]
}

pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

pub fn p2_gradients(l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        out[i] = [s * g[i][0], s * g[i][1]];
    }
    for (k, &(i, j)) in EDGE_PAIRS.iter().enumerate() {
        out[3 + k] = [
            4.0 * (l[j] * g[i][0] + l[i] * g[j][0]),
            4.0 * (l[j] * g[i][1] + l[i] * g[j][1]),
        ];
    }
    out
}

/// Laplacians of the P2 basis, constant on the element.
pub fn p2_laplacians(g: &[[f64; 2]; 3]) -> [f64; 6] {
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    let mut out = [0.0; 6];
    for i in 0..3 {
        out[i] = 4.0 * dot(g[i], g[i]);
    }
    for (k, &(i, j)) in EDGE_PAIRS.iter().enumerate() {
        out[3 + k] = 8.0 * dot(g[i], g[j]);
    }
    out
}

impl ThSpace {
    pub fn new(mesh: Arc<TriMesh>) -> Self {
        let edges = edge_topology(&mesh);
        let rule = triangle_rule(DEFAULT_DEGREE).expect("default rule exists");
        let geometry = (0..mesh.num_triangles())
            .map(|t| {
                let [p, q, r] = mesh.coords(t);
                let det = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
                let g1 = [(r[1] - p[1]) / det, -(r[0] - p[0]) / det];
                let g2 = [-(q[1] - p[1]) / det, (q[0] - p[0]) / det];
                let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
                ElementGeometry {
                    grad_lambda: [g0, g1, g2],
                    area: 0.5 * det,
                    diameter: mesh.diameter(t),
                }
            })
            .collect();
        let mut boundary = mesh.boundary_flags.clone();
        boundary.extend(edges.interior.iter().map(|&i| !i));
        let ref_p2 = rule
            .points
            .iter()
            .map(|&xi| p2_values(barycentric(xi)))
            .collect();
        ThSpace {
            mesh,
            edges,
            rule,
            geometry,
            boundary,
            ref_p2,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_triangles()
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_vertices() + self.edges.len()
    }

    pub fn num_velocity_dofs(&self) -> usize {
        2 * self.num_nodes()
    }

    pub fn num_pressure_dofs(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn dim(&self) -> usize {
        self.num_velocity_dofs() + self.num_pressure_dofs() + 1
    }

    pub fn velocity_dof(&self, component: usize, node: usize) -> usize {
        component * self.num_nodes() + node
    }

    pub fn pressure_dof(&self, vertex: usize) -> usize {
        self.num_velocity_dofs() + vertex
    }

    pub fn multiplier_dof(&self) -> usize {
        self.dim() - 1
    }

    /// Whether global velocity dof `dof` sits on the boundary.
    pub fn is_dirichlet(&self, dof: usize) -> bool {
        dof < self.num_velocity_dofs() && self.boundary[dof % self.num_nodes()]
    }

    /// Global scalar P2 node numbers of element `t`.
    pub fn nodes(&self, t: usize) -> [usize; 6] {
        let [a, b, c] = self.mesh.triangles[t];
        let nv = self.mesh.num_vertices();
        let e = self.edges.tri_edges[t];
        [a, b, c, nv + e[0], nv + e[1], nv + e[2]]
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let nv = self.mesh.num_vertices();
        if node < nv {
            self.mesh.vertices[node]
        } else {
            let [a, b] = self.edges.edges[node - nv];
            let (p, q) = (self.mesh.vertices[a], self.mesh.vertices[b]);
            [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
        }
    }

    pub fn nq(&self) -> usize {
        self.rule.len()
    }

    /// Reference P2 values at quadrature point `q`.
    pub fn p2_at_quad(&self, q: usize) -> &[f64; 6] {
        &self.ref_p2[q]
    }

    /// Physical weight of quadrature point `q` in element `t`.
    pub fn quad_weight(&self, t: usize, q: usize) -> f64 {
        2.0 * self.geometry[t].area * self.rule.weights[q]
    }

    pub fn quad_point(&self, t: usize, q: usize) -> [f64; 2] {
        self.mesh.to_physical(t, self.rule.points[q])
    }

    pub fn zero(self: &Arc<Self>) -> ThFunction {
        ThFunction {
            space: Arc::clone(self),
            coeffs: vec![0.0; self.dim()],
        }
    }
}

pub fn build_space(m: TriMesh) -> Arc<ThSpace> {
    Arc::new(ThSpace::new(Arc::new(m)))
}

impl QuadField {
    pub fn zeros(space: &ThSpace) -> Self {
        QuadField {
            nq: space.nq(),
            values: vec![[0.0; 2]; space.num_elements() * space.nq()],
        }
    }

    pub fn constant(space: &ThSpace, c: [f64; 2]) -> Self {
        QuadField {
            nq: space.nq(),
            values: vec![c; space.num_elements() * space.nq()],
        }
    }

    pub fn from_fn(space: &ThSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let nq = space.nq();
        let mut values = Vec::with_capacity(space.num_elements() * nq);
        for t in 0..space.num_elements() {
            for q in 0..nq {
                values.push(f(space.quad_point(t, q)));
            }
        }
        QuadField { nq, values }
    }

    /// Velocity of a discrete field at the quadrature points.
    pub fn from_velocity(f: &ThFunction) -> Self {
        let space = &f.space;
        let nq = space.nq();
        let mut values = Vec::with_capacity(space.num_elements() * nq);
        for t in 0..space.num_elements() {
            let nodes = space.nodes(t);
            for q in 0..nq {
                let phi = space.p2_at_quad(q);
                let mut v = [0.0; 2];
                for (a, &n) in nodes.iter().enumerate() {
                    v[0] += phi[a] * f.coeffs[space.velocity_dof(0, n)];
                    v[1] += phi[a] * f.coeffs[space.velocity_dof(1, n)];
                }
                values.push(v);
            }
        }
        QuadField { nq, values }
    }

    pub fn at(&self, t: usize, q: usize) -> [f64; 2] {
        self.values[t * self.nq + q]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self + alpha * (other - self)`.
    pub fn lerp(&self, other: &QuadField, alpha: f64) -> QuadField {
        QuadField {
            nq: self.nq,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| [a[0] + alpha * (b[0] - a[0]), a[1] + alpha * (b[1] - a[1])])
                .collect(),
        }
    }

    pub fn axpy(&self, alpha: f64, other: &QuadField) -> QuadField {
        QuadField {
            nq: self.nq,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| [a[0] + alpha * b[0], a[1] + alpha * b[1]])
                .collect(),
        }
    }

    /// `(self, other)_{L^2}` on the space's quadrature.
    pub fn inner(&self, other: &QuadField, space: &ThSpace) -> f64 {
        let mut s = 0.0;
        for t in 0..space.num_elements() {
            for q in 0..self.nq {
                let (a, b) = (self.at(t, q), other.at(t, q));
                s += space.quad_weight(t, q) * (a[0] * b[0] + a[1] * b[1]);
            }
        }
        s
    }
}

impl ThFunction {
    pub fn from_coeffs(space: Arc<ThSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.dim());
        ThFunction { space, coeffs }
    }

    pub fn velocity_coeffs(&self) -> &[f64] {
        &self.coeffs[..self.space.num_velocity_dofs()]
    }

    /// Pressure-vertex coefficients; the same slots hold the adjoint multiplier.
    pub fn pressure_coeffs(&self) -> &[f64] {
        let nv = self.space.num_velocity_dofs();
        &self.coeffs[nv..nv + self.space.num_pressure_dofs()]
    }

    pub fn scaled(&self, s: f64) -> ThFunction {
        ThFunction {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|c| s * c).collect(),
        }
    }

    pub fn sub(&self, other: &ThFunction) -> ThFunction {
        ThFunction {
            space: Arc::clone(&self.space),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Evaluation at one reference point of element `t`.
    pub fn eval(&self, t: usize, xi: [f64; 2]) -> PointValue {
        let s = &*self.space;
        let l = barycentric(xi);
        let g = &s.geometry[t].grad_lambda;
        let phi = p2_values(l);
        let dphi = p2_gradients(l, g);
        let nodes = s.nodes(t);
        let mut out = PointValue::default();
        for (a, &n) in nodes.iter().enumerate() {
            for c in 0..2 {
                let coef = self.coeffs[s.velocity_dof(c, n)];
                out.velocity[c] += coef * phi[a];
                out.grad[c][0] += coef * dphi[a][0];
                out.grad[c][1] += coef * dphi[a][1];
            }
        }
        let verts = s.mesh.triangles[t];
        for i in 0..3 {
            out.pressure += self.coeffs[s.pressure_dof(verts[i])] * l[i];
        }
        out.divergence = out.grad[0][0] + out.grad[1][1];
        out
    }

    pub fn evaluate(&self, t: usize, points: &[[f64; 2]]) -> Vec<PointValue> {
        points.iter().map(|&xi| self.eval(t, xi)).collect()
    }

    /// Elementwise constant Laplacian of the velocity.
    pub fn velocity_laplacian(&self, t: usize) -> [f64; 2] {
        let s = &*self.space;
        let lap = p2_laplacians(&s.geometry[t].grad_lambda);
        let nodes = s.nodes(t);
        let mut out = [0.0; 2];
        for (a, &n) in nodes.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += lap[a] * self.coeffs[s.velocity_dof(c, n)];
            }
        }
        out
    }

    /// Elementwise constant pressure gradient.
    pub fn pressure_gradient(&self, t: usize) -> [f64; 2] {
        let s = &*self.space;
        let g = &s.geometry[t].grad_lambda;
        let verts = s.mesh.triangles[t];
        let mut out = [0.0; 2];
        for i in 0..3 {
            let p = self.coeffs[s.pressure_dof(verts[i])];
            out[0] += p * g[i][0];
            out[1] += p * g[i][1];
        }
        out
    }

    /// `∫ p` over the domain.
    pub fn pressure_mean(&self) -> f64 {
        let s = &*self.space;
        let mut m = 0.0;
        for t in 0..s.num_elements() {
            let verts = s.mesh.triangles[t];
            let avg: f64 = verts.iter().map(|&v| self.coeffs[s.pressure_dof(v)]).sum::<f64>() / 3.0;
            m += avg * s.geometry[t].area;
        }
        m
    }

    /// Transfer onto a space built on a refinement of this function's mesh, using the fine
    /// mesh's parent map. Exact for P2/P1 fields.
    pub fn prolong(&self, fine: &Arc<ThSpace>) -> ThFunction {
        let parents = fine
            .mesh
            .parents
            .as_ref()
            .expect("fine mesh carries a parent map");
        let coarse = &self.space.mesh;
        let mut coeffs = vec![0.0; fine.dim()];
        for t in 0..fine.num_elements() {
            let parent = parents[t];
            let nodes = fine.nodes(t);
            for (a, &n) in nodes.iter().enumerate() {
                let x = fine.mesh.to_physical(t, P2_NODES[a]);
                let v = self.eval(parent, coarse.to_reference(parent, x));
                coeffs[fine.velocity_dof(0, n)] = v.velocity[0];
                coeffs[fine.velocity_dof(1, n)] = v.velocity[1];
                if a < 3 {
                    coeffs[fine.pressure_dof(fine.mesh.triangles[t][a])] = v.pressure;
                }
            }
        }
        for (i, c) in coeffs.iter_mut().enumerate() {
            if fine.is_dirichlet(i) {
                *c = 0.0;
            }
        }
        let last = fine.multiplier_dof();
        coeffs[last] = self.coeffs[self.space.multiplier_dof()];
        ThFunction {
            space: Arc::clone(fine),
            coeffs,
        }
    }
}

fn interpolate_impl(
    space: &Arc<ThSpace>,
    velocity: impl Fn([f64; 2]) -> [f64; 2],
    pressure: impl Fn([f64; 2]) -> f64,
    mask: bool,
) -> ThFunction {
    let mut coeffs = vec![0.0; space.dim()];
    for n in 0..space.num_nodes() {
        if mask && space.boundary[n] {
            continue;
        }
        let v = velocity(space.node_coords(n));
        coeffs[space.velocity_dof(0, n)] = v[0];
        coeffs[space.velocity_dof(1, n)] = v[1];
    }
    for v in 0..space.num_pressure_dofs() {
        coeffs[space.pressure_dof(v)] = pressure(space.mesh.vertices[v]);
    }
    ThFunction {
        space: Arc::clone(space),
        coeffs,
    }
}

/// Nodal interpolation with boundary velocity nodes set to zero.
pub fn interpolate(
    space: &Arc<ThSpace>,
    velocity: impl Fn([f64; 2]) -> [f64; 2],
    pressure: impl Fn([f64; 2]) -> f64,
) -> ThFunction {
    interpolate_impl(space, velocity, pressure, true)
}

/// Nodal interpolation keeping boundary values.
pub fn interpolate_unmasked(
    space: &Arc<ThSpace>,
    velocity: impl Fn([f64; 2]) -> [f64; 2],
    pressure: impl Fn([f64; 2]) -> f64,
) -> ThFunction {
    interpolate_impl(space, velocity, pressure, false)
}

/// L^p norm of a pointwise magnitude `f(t, xi, x)` where `xi` is the reference point and `x`
/// its physical image. For `p = ∞` the maximum is taken over quadrature points and P2 nodes.
pub fn norm_lp(
    space: &ThSpace,
    p: f64,
    region: Region,
    f: impl Fn(usize, [f64; 2], [f64; 2]) -> f64,
) -> f64 {
    assert!(p >= 1.0, "norm_lp needs p >= 1");
    let elements = match region {
        Region::All => 0..space.num_elements(),
        Region::Element(t) => t..t + 1,
    };
    if p.is_infinite() {
        let mut m: f64 = 0.0;
        for t in elements {
            for &xi in space.rule.points.iter().chain(P2_NODES.iter()) {
                m = m.max(f(t, xi, space.mesh.to_physical(t, xi)).abs());
            }
        }
        return m;
    }
    let mut s = 0.0;
    for t in elements {
        for (q, &xi) in space.rule.points.iter().enumerate() {
            let v = f(t, xi, space.mesh.to_physical(t, xi)).abs();
            s += space.quad_weight(t, q) * v.powf(p);
        }
    }
    s.powf(1.0 / p)
}

pub fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured, refine_marked, refine_uniform, Rect};
    use proptest::prelude::*;

    fn square(n: usize) -> Arc<ThSpace> {
        build_space(build_structured(n, n, Rect::UNIT))
    }

    #[test]
    fn dof_counts() {
        let s = square(1);
        assert_eq!(s.num_velocity_dofs(), 18);
        assert_eq!(s.num_pressure_dofs(), 4);
        assert_eq!(s.dim(), 23);
        let masked = (0..s.num_nodes()).filter(|&n| s.boundary[n]).count();
        assert_eq!(masked, 8);
    }

    #[test]
    fn dofs_grow_fourfold() {
        let mut m = build_structured(2, 2, Rect::UNIT);
        let mut counts = vec![];
        for _ in 0..4 {
            counts.push(build_space(m.clone()).num_velocity_dofs() as f64);
            m = refine_uniform(&m);
        }
        let ratios: Vec<f64> = counts.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.windows(2).all(|r| (r[1] - 4.0).abs() < (r[0] - 4.0).abs()));
        assert!((ratios[2] - 4.0).abs() < 0.3);
    }

    #[test]
    fn linear_field_has_identity_gradient() {
        let s = square(3);
        let f = interpolate_unmasked(&s, |x| x, |_| 0.0);
        for t in 0..s.num_elements() {
            for v in f.evaluate(t, &s.rule.points) {
                assert!((v.grad[0][0] - 1.0).abs() < 1e-13);
                assert!(v.grad[0][1].abs() < 1e-13);
                assert!(v.grad[1][0].abs() < 1e-13);
                assert!((v.grad[1][1] - 1.0).abs() < 1e-13);
                assert!((v.divergence - 2.0).abs() < 1e-13);
                assert_eq!(v.pressure, 0.0);
            }
        }
    }

    #[test]
    fn quadratic_gradient_exact() {
        let s = square(2);
        let f = interpolate_unmasked(&s, |x| [x[1] * x[1], 0.0], |_| 0.0);
        for t in 0..s.num_elements() {
            for (xi, v) in s.rule.points.iter().zip(f.evaluate(t, &s.rule.points)) {
                let x = s.mesh.to_physical(t, *xi);
                assert!((v.velocity[0] - x[1] * x[1]).abs() < 1e-13);
                assert!(v.grad[0][0].abs() < 1e-13);
                assert!((v.grad[0][1] - 2.0 * x[1]).abs() < 1e-13);
                assert!(v.grad[1][0].abs() < 1e-13 && v.grad[1][1].abs() < 1e-13);
            }
            let lap = f.velocity_laplacian(t);
            assert!((lap[0] - 2.0).abs() < 1e-12 && lap[1].abs() < 1e-12);
        }
    }

    #[test]
    fn norms_of_simple_fields() {
        let s = square(4);
        let one = norm_lp(&s, 2.0, Region::All, |_, _, _| 1.0);
        assert!((one - 1.0).abs() < 1e-14);
        let x1 = norm_lp(&s, 2.0, Region::All, |_, _, x| x[0]);
        assert!((x1 - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        let sup = norm_lp(&s, f64::INFINITY, Region::All, |_, _, x| x[0]);
        assert_eq!(sup, 1.0);
        let l1_elem = norm_lp(&s, 1.0, Region::Element(0), |_, _, _| 1.0);
        assert!((l1_elem - s.geometry[0].area).abs() < 1e-15);
    }

    #[test]
    fn prolongation_is_exact_for_p2() {
        let s = square(2);
        let field = |x: [f64; 2]| [x[0] * x[1] * (1.0 - x[0]), x[1] * x[1] - x[0]];
        let f = interpolate_unmasked(&s, field, |x| 2.0 * x[0] - x[1]);
        let fine_mesh = refine_marked(&s.mesh, &[0, 3, 5]);
        let fine = build_space(fine_mesh);
        let g = f.prolong(&fine);
        for t in 0..fine.num_elements() {
            for &xi in &fine.rule.points {
                let x = fine.mesh.to_physical(t, xi);
                let v = g.eval(t, xi);
                let exact = field(x);
                if fine.nodes(t).iter().any(|&n| fine.boundary[n]) {
                    continue;
                }
                assert!((v.velocity[0] - exact[0]).abs() < 1e-13);
                assert!((v.velocity[1] - exact[1]).abs() < 1e-13);
                assert!((v.pressure - (2.0 * x[0] - x[1])).abs() < 1e-13);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn p2_p1_reproduction(c in proptest::collection::vec(-2.0f64..2.0, 15)) {
            let s = square(3);
            let vel = |x: [f64; 2]| {
                let q = |o: usize| c[o] + c[o + 1] * x[0] + c[o + 2] * x[1]
                    + c[o + 3] * x[0] * x[0] + c[o + 4] * x[0] * x[1] + c[o + 5] * x[1] * x[1];
                [q(0), q(6)]
            };
            let pre = |x: [f64; 2]| c[12] + c[13] * x[0] + c[14] * x[1];
            let f = interpolate_unmasked(&s, vel, pre);
            for t in 0..s.num_elements() {
                for &xi in &s.rule.points {
                    let x = s.mesh.to_physical(t, xi);
                    let v = f.eval(t, xi);
                    let e = vel(x);
                    prop_assert!((v.velocity[0] - e[0]).abs() < 1e-13);
                    prop_assert!((v.velocity[1] - e[1]).abs() < 1e-13);
                    prop_assert!((v.pressure - pre(x)).abs() < 1e-13);
                    let div = c[1] + 2.0 * c[3] * x[0] + c[4] * x[1]
                        + c[8] + c[10] * x[0] + 2.0 * c[11] * x[1];
                    prop_assert!((v.divergence - div).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn holder_chain(c in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let s = square(4);
            let f = |_: usize, _: [f64; 2], x: [f64; 2]| {
                c[0] + c[1] * x[0] * x[1] + (c[2] * x[0]).sin() + c[3] * x[1] * x[1]
            };
            let l1 = norm_lp(&s, 1.0, Region::All, f);
            let l2 = norm_lp(&s, 2.0, Region::All, f);
            let linf = norm_lp(&s, f64::INFINITY, Region::All, f);
            prop_assert!(l1 <= l2 * (1.0 + 1e-12));
            prop_assert!(l2 <= linf * (1.0 + 1e-12));
        }

        #[test]
        fn masked_boundary_is_zero(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let s = square(3);
            let f = interpolate(&s, |x| [a + x[0], b * x[1]], |_| 0.0);
            for n in 0..s.num_nodes() {
                if s.boundary[n] {
                    prop_assert_eq!(f.coeffs[s.velocity_dof(0, n)], 0.0);
                    prop_assert_eq!(f.coeffs[s.velocity_dof(1, n)], 0.0);
                }
            }
        }
    }
}
