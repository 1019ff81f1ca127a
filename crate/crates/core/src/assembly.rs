//! Element-loop assembly of the discrete Navier-Stokes forms.
//!
//! Velocity blocks act on the `2 * num_nodes` velocity dofs; the divergence block maps
//! velocity dofs to pressure vertices. Blocks are stored without boundary conditions;
//! [`saddle_matrix`] pins the Dirichlet rows and columns when the full system is built.

use crate::spaces::{barycentric, p2_gradients, QuadField, ThFunction, ThSpace};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct SystemBlocks {
    pub nu: f64,
    /// `ν (∇φ_j, ∇φ_i)`.
    pub laplacian: CsrMatrix,
    /// `−(ψ_k, div φ_j)`, one row per pressure vertex.
    pub divergence: CsrMatrix,
    /// `(φ_j, φ_i)`.
    pub mass: CsrMatrix,
    /// `∫ ψ_k` for every pressure basis function.
    pub mean: Vec<f64>,
}

/// Per-element P2 gradients at every quadrature point, `[q][a]`.
fn element_gradients(s: &ThSpace, t: usize) -> Vec<[[f64; 2]; 6]> {
    let g = &s.geometry[t].grad_lambda;
    s.rule
        .points
        .iter()
        .map(|&xi| p2_gradients(barycentric(xi), g))
        .collect()
}

/// Velocity value and gradient of `w` at each quadrature point of element `t`.
fn transport_at_quad(
    w: &ThFunction,
    t: usize,
    dphi: &[[[f64; 2]; 6]],
) -> Vec<([f64; 2], [[f64; 2]; 2])> {
    let s = &*w.space;
    let nodes = s.nodes(t);
    (0..s.nq())
        .map(|q| {
            let phi = s.p2_at_quad(q);
            let mut val = [0.0; 2];
            let mut grad = [[0.0; 2]; 2];
            for (a, &n) in nodes.iter().enumerate() {
                for c in 0..2 {
                    let coef = w.coeffs[s.velocity_dof(c, n)];
                    val[c] += coef * phi[a];
                    grad[c][0] += coef * dphi[q][a][0];
                    grad[c][1] += coef * dphi[q][a][1];
                }
            }
            (val, grad)
        })
        .collect()
}

pub fn assemble_stokes(s: &ThSpace, nu: f64) -> SystemBlocks {
    assert!(nu > 0.0, "viscosity must be positive");
    let nvel = s.num_velocity_dofs();
    let np = s.num_pressure_dofs();
    let mut lap = Vec::with_capacity(s.num_elements() * 72);
    let mut mass = Vec::with_capacity(s.num_elements() * 72);
    let mut div = Vec::with_capacity(s.num_elements() * 36);
    let mut mean = vec![0.0; np];
    for t in 0..s.num_elements() {
        let nodes = s.nodes(t);
        let verts = s.mesh.triangles[t];
        let dphi = element_gradients(s, t);
        let mut k = [[0.0; 6]; 6];
        let mut m = [[0.0; 6]; 6];
        // bx[i][a] = ∫ ψ_i ∂_x φ_a, by likewise
        let mut bx = [[0.0; 6]; 3];
        let mut by = [[0.0; 6]; 3];
        for q in 0..s.nq() {
            let w = s.quad_weight(t, q);
            let phi = s.p2_at_quad(q);
            let l = barycentric(s.rule.points[q]);
            for b in 0..6 {
                for a in 0..6 {
                    k[b][a] += w * (dphi[q][a][0] * dphi[q][b][0] + dphi[q][a][1] * dphi[q][b][1]);
                    m[b][a] += w * phi[a] * phi[b];
                }
            }
            for i in 0..3 {
                mean[verts[i]] += w * l[i];
                for a in 0..6 {
                    bx[i][a] += w * l[i] * dphi[q][a][0];
                    by[i][a] += w * l[i] * dphi[q][a][1];
                }
            }
        }
        for c in 0..2 {
            for b in 0..6 {
                let row = s.velocity_dof(c, nodes[b]);
                for a in 0..6 {
                    let col = s.velocity_dof(c, nodes[a]);
                    lap.push((row, col, nu * k[b][a]));
                    mass.push((row, col, m[b][a]));
                }
            }
        }
        for i in 0..3 {
            for a in 0..6 {
                div.push((verts[i], s.velocity_dof(0, nodes[a]), -bx[i][a]));
                div.push((verts[i], s.velocity_dof(1, nodes[a]), -by[i][a]));
            }
        }
    }
    SystemBlocks {
        nu,
        laplacian: CsrMatrix::from_triplets(nvel, &lap).expect("indices in range"),
        divergence: CsrMatrix::from_triplets_rect(np, nvel, &div).expect("indices in range"),
        mass: CsrMatrix::from_triplets(nvel, &mass).expect("indices in range"),
        mean,
    }
}

fn convection_impl(s: &ThSpace, w: &ThFunction, transport: bool, reaction: bool) -> CsrMatrix {
    let nvel = s.num_velocity_dofs();
    let mut trip = Vec::with_capacity(s.num_elements() * 144);
    for t in 0..s.num_elements() {
        let nodes = s.nodes(t);
        let dphi = element_gradients(s, t);
        let wq = transport_at_quad(w, t, &dphi);
        let mut n = [[0.0; 6]; 6];
        let mut r = [[[[0.0; 6]; 6]; 2]; 2];
        for q in 0..s.nq() {
            let wt = s.quad_weight(t, q);
            let phi = s.p2_at_quad(q);
            let (val, grad) = wq[q];
            for b in 0..6 {
                for a in 0..6 {
                    if transport {
                        n[b][a] += wt * (val[0] * dphi[q][a][0] + val[1] * dphi[q][a][1]) * phi[b];
                    }
                    if reaction {
                        let pp = wt * phi[a] * phi[b];
                        for d in 0..2 {
                            for c in 0..2 {
                                r[d][c][b][a] += pp * grad[d][c];
                            }
                        }
                    }
                }
            }
        }
        for d in 0..2 {
            for b in 0..6 {
                let row = s.velocity_dof(d, nodes[b]);
                for c in 0..2 {
                    for a in 0..6 {
                        let col = s.velocity_dof(c, nodes[a]);
                        let mut v = 0.0;
                        if transport && c == d {
                            v += n[b][a];
                        }
                        if reaction {
                            v += r[d][c][b][a];
                        }
                        if v != 0.0 {
                            trip.push((row, col, v));
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(nvel, &trip).expect("indices in range")
}

/// `N(w)` with entries `∫ (w·∇)φ_j · φ_i`.
pub fn assemble_convection(s: &ThSpace, w: &ThFunction) -> CsrMatrix {
    convection_impl(s, w, true, false)
}

/// `N′(w)` with entries `∫ (φ_j·∇)w · φ_i`.
pub fn assemble_reaction(s: &ThSpace, w: &ThFunction) -> CsrMatrix {
    convection_impl(s, w, false, true)
}

/// `N(w) + N′(w)`.
pub fn assemble_newton_jacobian(s: &ThSpace, w: &ThFunction) -> CsrMatrix {
    convection_impl(s, w, true, true)
}

/// Entries `b(w; φ_i, φ_j) + b(φ_i; w, φ_j)` in row `i`, column `j`: the operator acting on
/// the adjoint velocity when tested with `φ_i`.
pub fn assemble_adjoint_operator(s: &ThSpace, w: &ThFunction) -> CsrMatrix {
    let nvel = s.num_velocity_dofs();
    let mut trip = Vec::with_capacity(s.num_elements() * 144);
    for t in 0..s.num_elements() {
        let nodes = s.nodes(t);
        let dphi = element_gradients(s, t);
        let wq = transport_at_quad(w, t, &dphi);
        // entry for test (c, a) against adjoint (d, b)
        let mut loc = [[[[0.0; 6]; 6]; 2]; 2];
        for q in 0..s.nq() {
            let wt = s.quad_weight(t, q);
            let phi = s.p2_at_quad(q);
            let (val, grad) = wq[q];
            for a in 0..6 {
                let transport = val[0] * dphi[q][a][0] + val[1] * dphi[q][a][1];
                for b in 0..6 {
                    for c in 0..2 {
                        // b(w; ψ_a e_c, ψ_b e_c)
                        loc[c][c][a][b] += wt * transport * phi[b];
                        for d in 0..2 {
                            // b(ψ_a e_c; w, ψ_b e_d) = ∫ ψ_a ∂_c w_d ψ_b
                            loc[c][d][a][b] += wt * phi[a] * grad[d][c] * phi[b];
                        }
                    }
                }
            }
        }
        for c in 0..2 {
            for a in 0..6 {
                let row = s.velocity_dof(c, nodes[a]);
                for d in 0..2 {
                    for b in 0..6 {
                        let v = loc[c][d][a][b];
                        if v != 0.0 {
                            trip.push((row, s.velocity_dof(d, nodes[b]), v));
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(nvel, &trip).expect("indices in range")
}

/// Velocity load `∫ f·φ_i` from values at the quadrature points; Dirichlet rows are zero.
pub fn assemble_load(s: &ThSpace, f: &QuadField) -> Vec<f64> {
    let mut rhs = vec![0.0; s.num_velocity_dofs()];
    for t in 0..s.num_elements() {
        let nodes = s.nodes(t);
        for q in 0..s.nq() {
            let w = s.quad_weight(t, q);
            let phi = s.p2_at_quad(q);
            let fv = f.at(t, q);
            for (a, &n) in nodes.iter().enumerate() {
                rhs[s.velocity_dof(0, n)] += w * fv[0] * phi[a];
                rhs[s.velocity_dof(1, n)] += w * fv[1] * phi[a];
            }
        }
    }
    for (i, r) in rhs.iter_mut().enumerate() {
        if s.is_dirichlet(i) {
            *r = 0.0;
        }
    }
    rhs
}

pub fn assemble_load_fn(s: &ThSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    assemble_load(s, &QuadField::from_fn(s, f))
}

/// `b(v1; v2, v3) = ∫ (v1·∇)v2 · v3`.
pub fn trilinear_value(s: &ThSpace, v1: &ThFunction, v2: &ThFunction, v3: &ThFunction) -> f64 {
    let mut total = 0.0;
    for t in 0..s.num_elements() {
        for (q, &xi) in s.rule.points.iter().enumerate() {
            let a = v1.eval(t, xi);
            let b = v2.eval(t, xi);
            let c = v3.eval(t, xi);
            let mut integrand = 0.0;
            for d in 0..2 {
                integrand += (a.velocity[0] * b.grad[d][0] + a.velocity[1] * b.grad[d][1]) * c.velocity[d];
            }
            total += s.quad_weight(t, q) * integrand;
        }
    }
    total
}

/// Full saddle-point matrix
/// `[[A + X, Bᵀ, 0], [B, 0, m], [0, mᵀ, 0]]` with Dirichlet rows and columns replaced by the
/// identity.
pub fn saddle_matrix(s: &ThSpace, blocks: &SystemBlocks, extra: Option<&CsrMatrix>) -> CsrMatrix {
    let nvel = s.num_velocity_dofs();
    let lambda = s.multiplier_dof();
    let mut trip = Vec::with_capacity(
        blocks.laplacian.nnz() + extra.map_or(0, |x| x.nnz()) + 2 * blocks.divergence.nnz() + 2 * blocks.mean.len() + nvel,
    );
    let free = |i: usize| !s.is_dirichlet(i);
    let blocks_iter = blocks
        .laplacian
        .triplets()
        .chain(extra.into_iter().flat_map(|x| x.triplets()));
    for (i, j, v) in blocks_iter {
        if free(i) && free(j) {
            trip.push((i, j, v));
        }
    }
    for (k, j, v) in blocks.divergence.triplets() {
        if free(j) {
            trip.push((nvel + k, j, v));
            trip.push((j, nvel + k, v));
        }
    }
    for (k, &m) in blocks.mean.iter().enumerate() {
        trip.push((nvel + k, lambda, m));
        trip.push((lambda, nvel + k, m));
    }
    for i in 0..nvel {
        if !free(i) {
            trip.push((i, i, 1.0));
        }
    }
    CsrMatrix::from_triplets(s.dim(), &trip).expect("indices in range")
}

/// Zero the Dirichlet entries of a full system vector.
pub fn pin_boundary(s: &ThSpace, v: &mut [f64]) {
    for (i, x) in v.iter_mut().enumerate().take(s.num_velocity_dofs()) {
        if s.is_dirichlet(i) {
            *x = 0.0;
        }
    }
}
