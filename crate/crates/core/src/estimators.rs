//! Residual a posteriori indicators, the total reliability bound, Dörfler marking and the
//! adaptive solve/estimate/mark/refine loop.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{refine_marked, TriMesh};
use crate::ocp::{bang_bang_from_adjoint, solve_ocp_from, OcpOptions, OcpProblem, OcpRun, ProblemData};
use crate::quadrature::{edge_rule, EdgeQuadRule};
use crate::solvers::NewtonOptions;
use crate::spaces::{build_space, norm2, norm_lp, PointValue, QuadField, Region, ThFunction, ThSpace};

/// Degree of the edge rule used for jump norms.
const EDGE_DEGREE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregate {
    /// `(Σ_T η_T^t)^{1/t}`.
    Power(f64),
    /// `max_T η_T`.
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    /// Per-element indicators `η_T ≥ 0`.
    pub values: Vec<f64>,
    pub aggregate: Aggregate,
    pub total: f64,
    /// Spatial dimension.
    pub dim: usize,
    /// Weight applied to the edge-jump term.
    pub jump_weight: f64,
}

impl IndicatorField {
    pub fn new(values: Vec<f64>, aggregate: Aggregate, jump_weight: f64) -> Self {
        let total = aggregate_of(&values, aggregate);
        IndicatorField {
            values,
            aggregate,
            total,
            dim: 2,
            jump_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn recompute_total(&self) -> f64 {
        aggregate_of(&self.values, self.aggregate)
    }
}

fn aggregate_of(values: &[f64], aggregate: Aggregate) -> f64 {
    match aggregate {
        Aggregate::Power(t) => values.iter().map(|v| v.powf(t)).sum::<f64>().powf(1.0 / t),
        Aggregate::Max => values.iter().copied().fold(0.0, f64::max),
    }
}

/// Norms of the three residual contributions on one element.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalResiduals {
    pub h: f64,
    pub element: f64,
    pub divergence: f64,
    /// One entry per interior edge of the element.
    pub jumps: Vec<f64>,
}

impl LocalResiduals {
    pub fn scaled(&self, s: f64) -> Self {
        LocalResiduals {
            h: self.h,
            element: s * self.element,
            divergence: s * self.divergence,
            jumps: self.jumps.iter().map(|j| s * j).collect(),
        }
    }
}

/// `(h^{2t} R^t + h^t D^t + h^{t+1} Σ_E J_E^t)^{1/t}`.
pub fn combine_state(r: &LocalResiduals, t: f64) -> f64 {
    let h = r.h;
    let jumps: f64 = r.jumps.iter().map(|j| j.powf(t)).sum();
    let power = h.powf(2.0 * t) * r.element.powf(t) + h.powf(t) * r.divergence.powf(t) + h.powf(t + 1.0) * jumps;
    power.powf(1.0 / t)
}

/// `h² R + h D + ½ h max_E J_E`.
pub fn combine_adjoint(r: &LocalResiduals) -> f64 {
    let jump = r.jumps.iter().copied().fold(0.0, f64::max);
    r.h * r.h * r.element + r.h * r.divergence + 0.5 * r.h * jump
}

fn check_exponent(t: f64) -> Result<()> {
    if !(2.0..=4.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "state indicator exponent must lie in [2, 4], got {t}"
        )));
    }
    Ok(())
}

/// Points and weights of an edge rule on edge `e`, plus the element-local reference coordinates
/// of each point in both adjacent triangles.
struct EdgeSamples {
    weights: Vec<f64>,
    left: Vec<[f64; 2]>,
    right: Vec<[f64; 2]>,
}

fn edge_samples(s: &ThSpace, e: usize, rule: &EdgeQuadRule, with_nodes: bool) -> EdgeSamples {
    let [a, b] = s.edges.edges[e];
    let (pa, pb) = (s.mesh.vertices[a], s.mesh.vertices[b]);
    let len = s.edges.lengths[e];
    let (t1, t2) = s.edges.adjacent[e];
    let t2 = t2.expect("interior edge");
    let mut params: Vec<(f64, f64)> = rule.points.iter().zip(&rule.weights).map(|(&p, &w)| (p, w * len)).collect();
    if with_nodes {
        params.extend([(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]);
    }
    let mut out = EdgeSamples {
        weights: Vec::with_capacity(params.len()),
        left: Vec::with_capacity(params.len()),
        right: Vec::with_capacity(params.len()),
    };
    for (p, w) in params {
        let x = [pa[0] + p * (pb[0] - pa[0]), pa[1] + p * (pb[1] - pa[1])];
        out.weights.push(w);
        out.left.push(s.mesh.to_reference(t1, x));
        out.right.push(s.mesh.to_reference(t2, x));
    }
    out
}

fn interior_edges(s: &ThSpace) -> impl Iterator<Item = usize> + '_ {
    (0..s.edges.len()).filter(|&e| s.edges.interior[e])
}

/// `(ν∇v − p I) n` at one point.
fn stress_flux(nu: f64, v: &PointValue, n: [f64; 2]) -> [f64; 2] {
    let g = &v.grad;
    [
        nu * (g[0][0] * n[0] + g[0][1] * n[1]) - v.pressure * n[0],
        nu * (g[1][0] * n[0] + g[1][1] * n[1]) - v.pressure * n[1],
    ]
}

/// Per-element residual norms of the state equation in `L^t`.
pub fn state_residuals(
    s: &ThSpace,
    nu: f64,
    state: &ThFunction,
    forcing: &QuadField,
    t: f64,
) -> Result<Vec<LocalResiduals>> {
    check_exponent(t)?;
    let rule = edge_rule(EDGE_DEGREE)?;
    let mut local: Vec<LocalResiduals> = (0..s.num_elements())
        .map(|k| LocalResiduals {
            h: s.geometry[k].diameter,
            ..Default::default()
        })
        .collect();
    for (k, loc) in local.iter_mut().enumerate() {
        let lap = state.velocity_laplacian(k);
        let gp = state.pressure_gradient(k);
        let (mut rs, mut ds) = (0.0, 0.0);
        for (q, &xi) in s.rule.points.iter().enumerate() {
            let v = state.eval(k, xi);
            let f = forcing.at(k, q);
            let conv = [
                v.velocity[0] * v.grad[0][0] + v.velocity[1] * v.grad[0][1],
                v.velocity[0] * v.grad[1][0] + v.velocity[1] * v.grad[1][1],
            ];
            let res = [
                f[0] + nu * lap[0] - conv[0] - gp[0],
                f[1] + nu * lap[1] - conv[1] - gp[1],
            ];
            let w = s.quad_weight(k, q);
            rs += w * norm2(res).powf(t);
            ds += w * v.divergence.abs().powf(t);
        }
        loc.element = rs.powf(1.0 / t);
        loc.divergence = ds.powf(1.0 / t);
    }
    for e in interior_edges(s) {
        let (t1, t2) = s.edges.adjacent[e];
        let t2 = t2.expect("interior edge");
        let n = s.edges.normals[e];
        let pts = edge_samples(s, e, &rule, false);
        let mut js = 0.0;
        for i in 0..pts.weights.len() {
            let a = stress_flux(nu, &state.eval(t1, pts.left[i]), n);
            let b = stress_flux(nu, &state.eval(t2, pts.right[i]), n);
            js += pts.weights[i] * norm2([a[0] - b[0], a[1] - b[1]]).powf(t);
        }
        let j = js.powf(1.0 / t);
        local[t1].jumps.push(j);
        local[t2].jumps.push(j);
    }
    Ok(local)
}

/// State indicators `η_st,t,T` for the state `(y, p)` driven by the total forcing `forcing`.
pub fn estimate_state(
    s: &ThSpace,
    nu: f64,
    state: &ThFunction,
    forcing: &QuadField,
    t: f64,
) -> Result<IndicatorField> {
    let local = state_residuals(s, nu, state, forcing, t)?;
    let values = local.iter().map(|r| combine_state(r, t)).collect();
    Ok(IndicatorField::new(values, Aggregate::Power(t), 1.0))
}

/// Pointwise adjoint residual `y − y_Ω + νΔz − (∇y)ᵀz + (y·∇)z + div(y) z − ∇r`.
fn adjoint_residual_at(
    nu: f64,
    y: &PointValue,
    z: &PointValue,
    lap: [f64; 2],
    gr: [f64; 2],
    desired: [f64; 2],
) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (i, o) in out.iter_mut().enumerate() {
        let transport: f64 = (0..2).map(|j| y.grad[j][i] * z.velocity[j]).sum();
        let convect: f64 = (0..2).map(|j| y.velocity[j] * z.grad[i][j]).sum();
        *o = y.velocity[i] - desired[i] + nu * lap[i] - transport + convect + y.divergence * z.velocity[i] - gr[i];
    }
    out
}

/// `(ν∇z + y ⊗ z − r I) n` at one point.
fn adjoint_flux(nu: f64, y: &PointValue, z: &PointValue, n: [f64; 2]) -> [f64; 2] {
    let zn = z.velocity[0] * n[0] + z.velocity[1] * n[1];
    let base = stress_flux(nu, z, n);
    [base[0] + y.velocity[0] * zn, base[1] + y.velocity[1] * zn]
}

/// Per-element maximum-norm residuals of the adjoint equation.
pub fn adjoint_residuals(
    s: &ThSpace,
    nu: f64,
    state: &ThFunction,
    adjoint: &ThFunction,
    desired: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<Vec<LocalResiduals>> {
    let rule = edge_rule(EDGE_DEGREE)?;
    let mut local: Vec<LocalResiduals> = Vec::with_capacity(s.num_elements());
    for k in 0..s.num_elements() {
        let lap = adjoint.velocity_laplacian(k);
        let gr = adjoint.pressure_gradient(k);
        let element = norm_lp(s, f64::INFINITY, Region::Element(k), |t, xi, x| {
            let (y, z) = (state.eval(t, xi), adjoint.eval(t, xi));
            norm2(adjoint_residual_at(nu, &y, &z, lap, gr, desired(x)))
        });
        let divergence = norm_lp(s, f64::INFINITY, Region::Element(k), |t, xi, _| adjoint.eval(t, xi).divergence);
        local.push(LocalResiduals {
            h: s.geometry[k].diameter,
            element,
            divergence,
            jumps: Vec::new(),
        });
    }
    for e in interior_edges(s) {
        let (t1, t2) = s.edges.adjacent[e];
        let t2 = t2.expect("interior edge");
        let n = s.edges.normals[e];
        let pts = edge_samples(s, e, &rule, true);
        let mut j: f64 = 0.0;
        for i in 0..pts.weights.len() {
            let a = adjoint_flux(nu, &state.eval(t1, pts.left[i]), &adjoint.eval(t1, pts.left[i]), n);
            let b = adjoint_flux(nu, &state.eval(t2, pts.right[i]), &adjoint.eval(t2, pts.right[i]), n);
            j = j.max(norm2([a[0] - b[0], a[1] - b[1]]));
        }
        local[t1].jumps.push(j);
        local[t2].jumps.push(j);
    }
    Ok(local)
}

/// Adjoint indicators `η_adj,T`, aggregated by the maximum. `adjoint` carries the adjoint
/// pressure in its pressure slot.
pub fn estimate_adjoint(
    s: &ThSpace,
    nu: f64,
    state: &ThFunction,
    adjoint: &ThFunction,
    desired: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<IndicatorField> {
    let local = adjoint_residuals(s, nu, state, adjoint, desired)?;
    let values = local.iter().map(combine_adjoint).collect();
    Ok(IndicatorField::new(values, Aggregate::Max, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub dim: f64,
    /// Integrability exponent, must exceed the dimension.
    pub p: f64,
    pub gamma: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            dim: 2.0,
            p: 3.0,
            gamma: 1.0,
        }
    }
}

impl BoundParams {
    /// `μ = n p / (n + p)`.
    pub fn mu(&self) -> f64 {
        self.dim * self.p / (self.dim + self.p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        if !(n >= 1.0 && n.is_finite()) {
            return Err(Error::InvalidParameter(format!("dimension must be >= 1, got {n}")));
        }
        if !(self.p > n && self.p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exponent p must exceed the dimension {n}, got {}",
                self.p
            )));
        }
        if !(self.gamma > n / (n + 2.0) && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "growth exponent must lie in ({}, 1], got {}",
                n / (n + 2.0),
                self.gamma
            )));
        }
        Ok(())
    }
}

/// `(η_st,2 + η_st,p + |ln h_min|^{4/n} η_adj,∞ + div_term)^γ`.
pub fn total_reliability_bound(
    eta_st2: f64,
    eta_stp: f64,
    eta_adj: f64,
    div_term: f64,
    h_min: f64,
    params: BoundParams,
) -> Result<f64> {
    params.validate()?;
    if !(h_min > 0.0 && h_min.is_finite()) {
        return Err(Error::InvalidParameter(format!("h_min must be positive, got {h_min}")));
    }
    for (name, v) in [("eta_st2", eta_st2), ("eta_stp", eta_stp), ("eta_adj", eta_adj), ("div_term", div_term)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    let weight = h_min.ln().abs().powf(4.0 / params.dim);
    Ok((eta_st2 + eta_stp + weight * eta_adj + div_term).powf(params.gamma))
}

/// `‖div y‖_{L^μ}`.
pub fn divergence_norm(state: &ThFunction, mu: f64) -> f64 {
    norm_lp(&state.space, mu, Region::All, |t, xi, _| state.eval(t, xi).divergence)
}

/// Smallest set of elements carrying a `theta` share of the indicator power, largest first.
/// Maximum aggregates mark every element with `η_T ≥ (1 − θ) max η`.
pub fn mark_dorfler(ind: &IndicatorField, theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!("marking fraction must lie in (0, 1], got {theta}")));
    }
    let mut order: Vec<usize> = (0..ind.values.len()).filter(|&t| ind.values[t] > 0.0).collect();
    order.sort_by(|&i, &j| ind.values[j].total_cmp(&ind.values[i]).then(i.cmp(&j)));
    if order.is_empty() {
        return Ok(order);
    }
    match ind.aggregate {
        Aggregate::Max => {
            let threshold = (1.0 - theta) * ind.values[order[0]];
            Ok(order.into_iter().filter(|&t| ind.values[t] >= threshold).collect())
        }
        Aggregate::Power(t) => {
            if theta == 1.0 {
                return Ok(order);
            }
            let powers: Vec<f64> = order.iter().map(|&i| ind.values[i].powf(t)).collect();
            let total: f64 = powers.iter().sum();
            let mut acc = 0.0;
            let mut marked = Vec::new();
            for (k, &i) in order.iter().enumerate() {
                marked.push(i);
                acc += powers[k];
                if acc >= theta * total {
                    break;
                }
            }
            Ok(marked)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkBy {
    Adjoint,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub theta: f64,
    pub levels: usize,
    pub mark_by: MarkBy,
    /// Exponent of the state indicator used for marking by the state.
    pub t_prime: f64,
    pub newton: NewtonOptions,
    pub ocp: OcpOptions,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            theta: 0.5,
            levels: 4,
            mark_by: MarkBy::Adjoint,
            t_prime: 2.0,
            newton: NewtonOptions::default(),
            ocp: OcpOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveLevel {
    pub space: Arc<ThSpace>,
    pub run: OcpRun,
    pub adjoint_indicators: IndicatorField,
    /// Elements marked for the next refinement; empty on the last level.
    pub marked: Vec<usize>,
}

impl AdaptiveLevel {
    pub fn dofs(&self) -> usize {
        self.space.num_velocity_dofs() + self.space.num_pressure_dofs()
    }
}

/// State-equation forcing of the final iterate: control plus extra forcing.
pub fn total_forcing(problem: &OcpProblem, control: &QuadField) -> QuadField {
    match &problem.extra {
        Some(f) => control.axpy(1.0, f),
        None => control.clone(),
    }
}

/// SOLVE, ESTIMATE, MARK, REFINE, starting on `mesh`, with warm starts prolonged from the
/// previous level.
pub fn adaptive_loop(data: &ProblemData, mesh: TriMesh, opts: AdaptiveOptions) -> Result<Vec<AdaptiveLevel>> {
    if opts.levels == 0 {
        return Err(Error::InvalidParameter("adaptive loop needs at least one level".into()));
    }
    let mut space = build_space(mesh);
    let mut warm: Option<(ThFunction, ThFunction)> = None;
    let mut out = Vec::with_capacity(opts.levels);
    for level in 0..opts.levels {
        let problem = OcpProblem::new(Arc::clone(&space), data.clone(), opts.newton);
        let (start, init) = match &warm {
            Some((y, z)) => (Some(bang_bang_from_adjoint(z, &data.bounds)), Some(y)),
            None => (None, None),
        };
        let run = solve_ocp_from(&problem, start, init, opts.ocp)?;
        let last = run.last();
        let adjoint_indicators = estimate_adjoint(&space, data.nu, &last.state, &last.adjoint, |x| (data.desired)(x))?;
        let marked = if level + 1 == opts.levels {
            Vec::new()
        } else {
            match opts.mark_by {
                MarkBy::Adjoint => mark_dorfler(&adjoint_indicators, opts.theta)?,
                MarkBy::State => {
                    let f = total_forcing(&problem, &last.control);
                    mark_dorfler(&estimate_state(&space, data.nu, &last.state, &f, opts.t_prime)?, opts.theta)?
                }
            }
        };
        let next = if marked.is_empty() {
            None
        } else {
            Some(build_space(refine_marked(&space.mesh, &marked)))
        };
        if let Some(fine) = &next {
            warm = Some((last.state.prolong(fine), last.adjoint.prolong(fine)));
        }
        out.push(AdaptiveLevel {
            space: Arc::clone(&space),
            run,
            adjoint_indicators,
            marked,
        });
        match next {
            Some(fine) => space = fine,
            None => break,
        }
    }
    Ok(out)
}

/// Heuristic default for the continuity constant of the trilinear form.
pub const DEFAULT_CB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    pub grad_l2: f64,
    pub grad_l12_5: f64,
    pub nu: f64,
    pub c_b: f64,
    /// `‖∇y‖_{L²} < ν / C_b`.
    pub state_condition: bool,
    /// `2‖∇y‖_{L²} < ν / C_b`.
    pub adjoint_condition: bool,
}

pub fn check_assumptions(state: &ThFunction, nu: f64, c_b: f64) -> Result<AssumptionReport> {
    if !(nu > 0.0 && c_b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "viscosity and trilinear constant must be positive, got nu = {nu}, c_b = {c_b}"
        )));
    }
    let frob = |t: usize, xi: [f64; 2]| {
        let g = state.eval(t, xi).grad;
        (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]).sqrt()
    };
    let grad_l2 = norm_lp(&state.space, 2.0, Region::All, |t, xi, _| frob(t, xi));
    let grad_l12_5 = norm_lp(&state.space, 12.0 / 5.0, Region::All, |t, xi, _| frob(t, xi));
    let limit = nu / c_b;
    Ok(AssumptionReport {
        grad_l2,
        grad_l12_5,
        nu,
        c_b,
        state_condition: grad_l2 < limit,
        adjoint_condition: 2.0 * grad_l2 < limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured, Rect};
    use crate::ocp::ControlBounds;
    use crate::spaces::interpolate_unmasked;
    use proptest::prelude::*;

    fn square(n: usize) -> Arc<ThSpace> {
        build_space(build_structured(n, n, Rect::UNIT))
    }

    fn smooth_state(s: &Arc<ThSpace>, scale: f64) -> ThFunction {
        interpolate_unmasked(
            s,
            |x| [scale * (x[0] * x[1]).sin(), scale * (x[0] - x[1] * x[1]).cos()],
            |x| scale * (x[0] + 2.0 * x[1]).sin(),
        )
    }

    #[test]
    fn zero_inputs_give_zero_indicators() {
        let s = square(3);
        let z = s.zero();
        let f = QuadField::zeros(&s);
        let st = estimate_state(&s, 1.0, &z, &f, 2.0).unwrap();
        assert!(st.values.iter().all(|&v| v == 0.0));
        assert_eq!(st.total, 0.0);
        let adj = estimate_adjoint(&s, 1.0, &z, &z, |_| [0.0, 0.0]).unwrap();
        assert!(adj.values.iter().all(|&v| v == 0.0));
        assert_eq!(adj.total, 0.0);
    }

    #[test]
    fn desired_equal_to_state_with_zero_adjoint_is_silent() {
        let s = square(3);
        let lin = |x: [f64; 2]| [x[0] - 0.5 * x[1], 2.0 * x[1] - x[0]];
        let y = interpolate_unmasked(&s, lin, |_| 0.0);
        let ind = estimate_adjoint(&s, 1.0, &y, &s.zero(), lin).unwrap();
        assert!(ind.total < 1e-13, "{}", ind.total);
    }

    #[test]
    fn exact_linear_state_has_no_jumps_or_residual() {
        let s = square(4);
        // y = A x with trace(A) = 0, constant pressure
        let a = [[0.3, -0.7], [1.1, -0.3]];
        let y = interpolate_unmasked(&s, |x| [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]], |_| 0.25);
        let forcing = QuadField::from_fn(&s, |x| {
            let v = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
            [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
        });
        let local = state_residuals(&s, 0.7, &y, &forcing, 3.0).unwrap();
        for r in &local {
            assert!(r.element < 1e-12, "{}", r.element);
            assert!(r.divergence < 1e-12);
            assert!(r.jumps.iter().all(|&j| j < 1e-12));
        }
        let ind = estimate_state(&s, 0.7, &y, &forcing, 3.0).unwrap();
        assert!(ind.total < 1e-12);
    }

    #[test]
    fn interior_edge_jumps_are_shared() {
        let s = square(3);
        let local = state_residuals(&s, 1.0, &smooth_state(&s, 1.0), &QuadField::zeros(&s), 2.0).unwrap();
        let count: usize = local.iter().map(|r| r.jumps.len()).sum();
        assert_eq!(count, 2 * s.edges.num_interior());
    }

    #[test]
    fn exponent_out_of_range_is_rejected() {
        let s = square(2);
        let f = QuadField::zeros(&s);
        for t in [1.5, 4.5, f64::NAN] {
            assert!(matches!(estimate_state(&s, 1.0, &s.zero(), &f, t), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn linear_adjoint_constant_pressure_reduces_to_data_term() {
        let s = square(4);
        let z = interpolate_unmasked(&s, |x| [x[0] - 2.0 * x[1], 0.5 * x[0] - x[1]], |_| 3.0);
        let c = [0.4, -0.3];
        let local = adjoint_residuals(&s, 1.0, &s.zero(), &z, |_| c).unwrap();
        let ind = estimate_adjoint(&s, 1.0, &s.zero(), &z, |_| c).unwrap();
        for (t, r) in local.iter().enumerate() {
            assert!(r.jumps.iter().all(|&j| j < 1e-12));
            assert!(r.divergence < 1e-12);
            let h = s.geometry[t].diameter;
            assert!((ind.values[t] - h * h * norm2(c)).abs() < 1e-13);
        }
    }

    #[test]
    fn pressure_and_forcing_scaling_is_homogeneous() {
        let s = square(4);
        let p = |x: [f64; 2]| (3.0 * x[0]).sin() * x[1];
        let f = |x: [f64; 2]| [x[0] * x[1], (x[0] - x[1]).cos()];
        for t in [2.0, 3.0, 4.0] {
            let base = estimate_state(
                &s,
                1.0,
                &interpolate_unmasked(&s, |_| [0.0, 0.0], p),
                &QuadField::from_fn(&s, f),
                t,
            )
            .unwrap();
            let scale = 7.5;
            let scaled = estimate_state(
                &s,
                1.0,
                &interpolate_unmasked(&s, |_| [0.0, 0.0], |x| scale * p(x)),
                &QuadField::from_fn(&s, |x| {
                    let v = f(x);
                    [scale * v[0], scale * v[1]]
                }),
                t,
            )
            .unwrap();
            for (a, b) in base.values.iter().zip(&scaled.values) {
                assert!((b - scale * a).abs() <= 1e-12 * (scale * a).max(1e-300), "{a} {b}");
            }
            assert!((scaled.total - scale * base.total).abs() <= 1e-12 * scale * base.total);
        }
    }

    #[test]
    fn bound_trivial_cases() {
        let p = BoundParams::default();
        assert_eq!(total_reliability_bound(0.0, 0.0, 0.0, 0.0, 0.1, p).unwrap(), 0.0);
        let h: f64 = 1.0 / 16.0;
        let v = total_reliability_bound(1.0, 2.0, 3.0, 4.0, h, p).unwrap();
        assert!((v - (1.0 + 2.0 + h.ln().powi(2) * 3.0 + 4.0)).abs() < 1e-12);
        let g = BoundParams { gamma: 0.8, ..p };
        let v = total_reliability_bound(1.0, 0.0, 0.0, 0.0, h, g).unwrap();
        assert_eq!(v, 1.0);
        assert!((p.mu() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn bound_parameter_domain() {
        let p = BoundParams::default();
        let bad = [
            BoundParams { p: 2.0, ..p },
            BoundParams { gamma: 0.5, ..p },
            BoundParams { gamma: 1.1, ..p },
        ];
        for b in bad {
            assert!(matches!(total_reliability_bound(1.0, 1.0, 1.0, 1.0, 0.1, b), Err(Error::InvalidParameter(_))));
        }
        assert!(total_reliability_bound(1.0, 1.0, 1.0, 1.0, 0.0, p).is_err());
        assert!(total_reliability_bound(-1.0, 1.0, 1.0, 1.0, 0.1, p).is_err());
    }

    #[test]
    fn dorfler_examples() {
        let equal = IndicatorField::new(vec![1.0; 4], Aggregate::Power(2.0), 1.0);
        assert_eq!(mark_dorfler(&equal, 0.5).unwrap().len(), 2);
        let ind = IndicatorField::new(vec![0.1, 0.0, 0.5, 0.2, 0.0, 0.3], Aggregate::Power(2.0), 1.0);
        let mut all = mark_dorfler(&ind, 1.0).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 2, 3, 5]);
        assert_eq!(mark_dorfler(&ind, 1e-12).unwrap(), vec![2]);
        let max = IndicatorField::new(ind.values.clone(), Aggregate::Max, 0.5);
        assert_eq!(mark_dorfler(&max, 1e-12).unwrap(), vec![2]);
        assert_eq!(mark_dorfler(&max, 0.5).unwrap(), vec![2, 5]);
        let mut all = mark_dorfler(&max, 1.0).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 2, 3, 5]);
        assert!(mark_dorfler(&ind, 0.0).is_err());
        assert!(mark_dorfler(&ind, 1.5).is_err());
        let zero = IndicatorField::new(vec![0.0; 3], Aggregate::Power(2.0), 1.0);
        assert!(mark_dorfler(&zero, 0.5).unwrap().is_empty());
    }

    #[test]
    fn assumption_report_cases() {
        let s = square(4);
        let r = check_assumptions(&s.zero(), 1.0, DEFAULT_CB).unwrap();
        assert_eq!((r.grad_l2, r.grad_l12_5), (0.0, 0.0));
        assert!(r.state_condition && r.adjoint_condition);
        let y = smooth_state(&s, 1.0);
        let r = check_assumptions(&y, 1e6, DEFAULT_CB).unwrap();
        assert!(r.state_condition && r.adjoint_condition);
        // ‖∇y‖ just above ν/(2 C_b) but below ν/C_b
        let g = check_assumptions(&y, 1.0, 1.0).unwrap().grad_l2;
        let nu = 1.5 * g * DEFAULT_CB;
        let r = check_assumptions(&y, nu, DEFAULT_CB).unwrap();
        assert!(r.state_condition && !r.adjoint_condition);
        let r = check_assumptions(&y.scaled(10.0), nu, DEFAULT_CB).unwrap();
        assert!(!r.state_condition && !r.adjoint_condition);
        assert!((r.grad_l2 - 10.0 * g).abs() < 1e-12 * r.grad_l2);
        assert!(check_assumptions(&y, 0.0, 1.0).is_err());
        assert!(check_assumptions(&y, 1.0, -1.0).is_err());
    }

    fn quadratic_data() -> ProblemData {
        ProblemData {
            nu: 1.0,
            bounds: ControlBounds::new([-1.0, -1.0], [1.0, 1.0]).unwrap(),
            desired: Arc::new(|x| [(3.0 * x[0]).sin() * x[1], x[0] * (1.0 - x[1])]),
            extra_forcing: None,
        }
    }

    #[test]
    fn single_level_loop_does_not_refine() {
        let mesh = build_structured(4, 4, Rect::UNIT);
        let opts = AdaptiveOptions {
            levels: 1,
            ..Default::default()
        };
        let out = adaptive_loop(&quadratic_data(), mesh.clone(), opts).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].marked.is_empty());
        assert_eq!(out[0].space.num_elements(), mesh.num_triangles());
        let zero = AdaptiveOptions { levels: 0, ..opts };
        assert!(adaptive_loop(&quadratic_data(), mesh, zero).is_err());
    }

    #[test]
    fn loop_refines_marked_elements() {
        let mesh = build_structured(4, 4, Rect::UNIT);
        let opts = AdaptiveOptions {
            levels: 3,
            mark_by: MarkBy::State,
            ..Default::default()
        };
        let out = adaptive_loop(&quadratic_data(), mesh, opts).unwrap();
        assert_eq!(out.len(), 3);
        for w in out.windows(2) {
            assert!(!w[0].marked.is_empty());
            assert!(w[1].space.num_elements() > w[0].space.num_elements());
            w[1].space.mesh.check().unwrap();
        }
        assert!(out[2].run.converged);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn aggregate_matches_entries(values in proptest::collection::vec(0.0f64..10.0, 1..40), t in 2.0f64..4.0) {
            let ind = IndicatorField::new(values.clone(), Aggregate::Power(t), 1.0);
            let direct = values.iter().map(|v| v.powf(t)).sum::<f64>().powf(1.0 / t);
            prop_assert!((ind.total - direct).abs() <= 1e-13 * direct.max(1.0));
            prop_assert_eq!(ind.recompute_total(), ind.total);
            let m = IndicatorField::new(values.clone(), Aggregate::Max, 0.5);
            prop_assert_eq!(m.total, values.iter().copied().fold(0.0, f64::max));
        }

        #[test]
        fn local_combination_is_homogeneous(
            h in 0.01f64..1.0,
            r in 0.0f64..5.0,
            d in 0.0f64..5.0,
            jumps in proptest::collection::vec(0.0f64..5.0, 0..3),
            s in 0.01f64..100.0,
            t in 2.0f64..4.0,
        ) {
            let loc = LocalResiduals { h, element: r, divergence: d, jumps };
            let a = combine_state(&loc, t);
            let b = combine_state(&loc.scaled(s), t);
            prop_assert!((b - s * a).abs() <= 1e-12 * (s * a).max(1e-300));
            let a = combine_adjoint(&loc);
            let b = combine_adjoint(&loc.scaled(s));
            prop_assert!((b - s * a).abs() <= 1e-12 * (s * a).max(1e-300));
        }

        #[test]
        fn dorfler_marks_minimal_prefix(values in proptest::collection::vec(0.0f64..1.0, 1..30), theta in 0.01f64..1.0) {
            let ind = IndicatorField::new(values.clone(), Aggregate::Power(2.0), 1.0);
            let marked = mark_dorfler(&ind, theta).unwrap();
            let total: f64 = values.iter().map(|v| v * v).sum();
            let got: f64 = marked.iter().map(|&i| values[i] * values[i]).sum();
            if total > 0.0 {
                prop_assert!(got >= theta * total * (1.0 - 1e-12));
                let without_last: f64 = marked[..marked.len() - 1].iter().map(|&i| values[i] * values[i]).sum();
                prop_assert!(without_last < theta * total);
                let smallest = marked.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
                for (i, &v) in values.iter().enumerate() {
                    if !marked.contains(&i) {
                        prop_assert!(v <= smallest);
                    }
                }
            }
        }
    }
}
