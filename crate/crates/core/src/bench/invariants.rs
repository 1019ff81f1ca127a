//! Randomized consistency checks of the discrete problem, as run by `check-invariants`.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::assembly::{assemble_adjoint_operator, assemble_newton_jacobian, trilinear_value};
use crate::error::Result;
use crate::estimators::{estimate_adjoint, estimate_state};
use crate::ocp::{cost, first_variation, second_variation, ControlBounds, CostEval, OcpProblem, ProblemData};
use crate::solvers::NewtonOptions;
use crate::spaces::{QuadField, ThFunction, ThSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    /// Worst observed discrepancy.
    pub value: f64,
    pub tol: f64,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.value <= self.tol
    }
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Uniform random control strictly inside the box, shrunk towards its centre by `shrink`.
pub fn random_control(problem: &OcpProblem, rng: &mut impl Rng, shrink: f64) -> QuadField {
    let b = problem.bounds();
    let mid = b.midpoint();
    let mut f = QuadField::zeros(problem.space());
    for v in &mut f.values {
        for i in 0..2 {
            let half = 0.5 * (b.b[i] - b.a[i]) * shrink;
            v[i] = mid[i] + if half > 0.0 { rng.gen_range(-half..half) } else { 0.0 };
        }
    }
    f
}

pub fn random_direction(s: &ThSpace, rng: &mut impl Rng) -> QuadField {
    let mut f = QuadField::zeros(s);
    for v in &mut f.values {
        *v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    }
    f
}

/// Random velocity/pressure coefficients, with zero boundary velocity when `masked`.
pub fn random_field(s: &Arc<ThSpace>, rng: &mut impl Rng, masked: bool) -> ThFunction {
    let mut f = s.zero();
    let nvel = s.num_velocity_dofs();
    for (i, c) in f.coeffs.iter_mut().enumerate().take(nvel + s.num_pressure_dofs()) {
        if !(masked && i < nvel && s.is_dirichlet(i)) {
            *c = rng.gen_range(-1.0..1.0);
        }
    }
    f
}

/// `∫ div(w) (v₂·v₃)`.
pub fn divergence_pairing(s: &ThSpace, w: &ThFunction, v2: &ThFunction, v3: &ThFunction) -> f64 {
    let mut total = 0.0;
    for t in 0..s.num_elements() {
        for (q, &xi) in s.rule.points.iter().enumerate() {
            let (a, b, c) = (w.eval(t, xi), v2.eval(t, xi), v3.eval(t, xi));
            total += s.quad_weight(t, q) * a.divergence * (b.velocity[0] * c.velocity[0] + b.velocity[1] * c.velocity[1]);
        }
    }
    total
}

/// `J(u_new) − J(u)` from the state increment, `(δy, y − y_Ω + ½δy)`, which avoids the
/// cancellation of subtracting two cost values.
pub fn cost_increment(problem: &OcpProblem, base: &CostEval, u_new: &QuadField) -> Result<f64> {
    let s = problem.space();
    let next = cost(problem, u_new, Some(&base.state))?;
    let delta = QuadField::from_velocity(&next.state.sub(&base.state));
    let misfit = QuadField::from_velocity(&base.state).axpy(-1.0, &problem.desired);
    Ok(delta.inner(&misfit.axpy(0.5, &delta), s))
}

/// Central differences of the reduced cost against `(z, g)` at step `t`.
pub fn gradient_consistency(problem: &OcpProblem, pairs: usize, t: f64, seed: u64) -> Result<InvariantCheck> {
    let s = problem.space();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = random_control(problem, &mut rng, 0.5);
        let g = random_direction(s, &mut rng);
        let base = cost(problem, &u, None)?;
        let dp = cost_increment(problem, &base, &u.axpy(t, &g))?;
        let dm = cost_increment(problem, &base, &u.axpy(-t, &g))?;
        let fd = (dp - dm) / (2.0 * t);
        worst = worst.max(relative(fd, first_variation(s, &base.adjoint, &g)));
    }
    Ok(InvariantCheck {
        name: "gradient vs central differences",
        value: worst,
        tol: 1e-4,
    })
}

/// Second central differences against `‖φ_g‖² − 2b(φ_g; φ_g, z)`.
pub fn second_variation_consistency(problem: &OcpProblem, dirs: usize, t: f64, seed: u64) -> Result<InvariantCheck> {
    let s = problem.space();
    let mut rng = StdRng::seed_from_u64(seed);
    let u = random_control(problem, &mut rng, 0.5);
    let base = cost(problem, &u, None)?;
    let mut worst: f64 = 0.0;
    for _ in 0..dirs {
        let g = random_direction(s, &mut rng);
        let dp = cost_increment(problem, &base, &u.axpy(t, &g))?;
        let dm = cost_increment(problem, &base, &u.axpy(-t, &g))?;
        let fd = (dp + dm) / (t * t);
        worst = worst.max(relative(fd, second_variation(problem, &u, &g)?));
    }
    Ok(InvariantCheck {
        name: "second variation vs second differences",
        value: worst,
        tol: 1e-2,
    })
}

/// `b(w; v₂, v₃) + b(w; v₃, v₂) + ∫ div(w)(v₂·v₃)` for random discrete triples vanishing on the
/// boundary.
pub fn trilinear_skew(s: &Arc<ThSpace>, triples: usize, seed: u64) -> InvariantCheck {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..triples {
        let w = random_field(s, &mut rng, true);
        let v2 = random_field(s, &mut rng, true);
        let v3 = random_field(s, &mut rng, true);
        let sum = trilinear_value(s, &w, &v2, &v3) + trilinear_value(s, &w, &v3, &v2) + divergence_pairing(s, &w, &v2, &v3);
        worst = worst.max(sum.abs());
    }
    InvariantCheck {
        name: "trilinear skew identity",
        value: worst,
        tol: 1e-12,
    }
}

/// Entrywise distance between the adjoint operator and the transposed Newton Jacobian.
pub fn adjoint_transpose(s: &Arc<ThSpace>, seed: u64) -> InvariantCheck {
    let mut rng = StdRng::seed_from_u64(seed);
    let w = random_field(s, &mut rng, false);
    let jac = assemble_newton_jacobian(s, &w);
    let adj = assemble_adjoint_operator(s, &w);
    InvariantCheck {
        name: "adjoint operator = Jacobian transpose",
        value: adj.max_abs_diff(&jac.transpose()),
        tol: 1e-12,
    }
}

/// `(φ_g, h) = (g, z_h)` for the linearized and adjoint solves at the state of a random control.
pub fn discrete_duality(problem: &OcpProblem, pairs: usize, seed: u64) -> Result<InvariantCheck> {
    let s = problem.space();
    let mut rng = StdRng::seed_from_u64(seed);
    let u = random_control(problem, &mut rng, 0.5);
    let base = cost(problem, &u, None)?;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let g = random_direction(s, &mut rng);
        let h = random_direction(s, &mut rng);
        let phi = problem.solver.solve_linearized(&base.state, &g)?;
        let z = problem.solver.solve_adjoint(&base.state, &h)?;
        let lhs = QuadField::from_velocity(&phi).inner(&h, s);
        let rhs = g.inner(&QuadField::from_velocity(&z), s);
        worst = worst.max(relative(lhs, rhs));
    }
    Ok(InvariantCheck {
        name: "linearized/adjoint duality",
        value: worst,
        tol: 1e-9,
    })
}

/// Zero inputs give zero indicators, and scaling pressure and forcing of a velocity-free state
/// scales every state indicator.
pub fn estimator_homogeneity(s: &Arc<ThSpace>, nu: f64, seed: u64) -> Result<InvariantCheck> {
    let mut rng = StdRng::seed_from_u64(seed);
    let zero = s.zero();
    let mut worst: f64 = estimate_state(s, nu, &zero, &QuadField::zeros(s), 2.0)?.total;
    worst = worst.max(estimate_adjoint(s, nu, &zero, &zero, |_| [0.0, 0.0])?.total);
    let mut p = random_field(s, &mut rng, false);
    for c in &mut p.coeffs[..s.num_velocity_dofs()] {
        *c = 0.0;
    }
    let f = random_direction(s, &mut rng);
    let scale = 3.7;
    for t in [2.0, 3.0] {
        let a = estimate_state(s, nu, &p, &f, t)?;
        let b = estimate_state(s, nu, &p.scaled(scale), &f.axpy(scale - 1.0, &f), t)?;
        for (x, y) in a.values.iter().zip(&b.values) {
            worst = worst.max(relative(scale * x, *y));
        }
    }
    Ok(InvariantCheck {
        name: "estimator zero and scaling cases",
        value: worst,
        tol: 1e-12,
    })
}

/// Problem with O(1) smooth data used by the invariant checks, so that finite differences of the
/// cost stay above roundoff.
pub fn invariant_problem(space: Arc<ThSpace>, nu: f64, bounds: ControlBounds, newton: NewtonOptions) -> OcpProblem {
    let data = ProblemData {
        nu,
        bounds,
        desired: Arc::new(|x| [(3.0 * x[1]).sin() * x[0], x[0] * x[1] - 0.3]),
        extra_forcing: Some(Arc::new(|x| [2.0 * x[1], -x[0]])),
    };
    OcpProblem::new(space, data, newton)
}

/// Every check at its default sample size.
pub fn run_all(problem: &OcpProblem, seed: u64) -> Result<Vec<InvariantCheck>> {
    let s = problem.space();
    Ok(vec![
        gradient_consistency(problem, 5, 1e-4, seed)?,
        second_variation_consistency(problem, 3, 1e-3, seed + 1)?,
        trilinear_skew(s, 20, seed + 2),
        adjoint_transpose(s, seed + 3),
        discrete_duality(problem, 5, seed + 4)?,
        estimator_homogeneity(s, problem.data.nu, seed + 5)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::manufactured::make_ocp_benchmark;
    use crate::mesh::{build_structured, Rect};
    use crate::spaces::build_space;

    fn unit_box() -> ControlBounds {
        ControlBounds::new([-1.0, -1.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn all_checks_pass_on_the_invariant_problem() {
        let s = build_space(build_structured(4, 4, Rect::UNIT));
        let problem = invariant_problem(s, 1.0, unit_box(), NewtonOptions { tol: 1e-13, max_iter: 30 });
        for c in run_all(&problem, 11).unwrap() {
            assert!(c.passed(), "{}: {} > {}", c.name, c.value, c.tol);
        }
    }

    #[test]
    fn all_checks_pass_on_a_coarse_manufactured_problem() {
        let bench = make_ocp_benchmark(0.1, unit_box());
        let s = build_space(build_structured(4, 4, Rect::UNIT));
        let problem = OcpProblem::new(s, bench.problem_data(), NewtonOptions { tol: 1e-13, max_iter: 30 });
        for c in run_all(&problem, 11).unwrap() {
            assert!(c.passed(), "{}: {} > {}", c.name, c.value, c.tol);
        }
    }

    #[test]
    fn random_controls_are_admissible() {
        let bench = make_ocp_benchmark(1.0, ControlBounds::new([-1.0, 0.0], [3.0, 0.0]).unwrap());
        let s = build_space(build_structured(2, 2, Rect::UNIT));
        let problem = OcpProblem::new(s, bench.problem_data(), NewtonOptions::default());
        let mut rng = StdRng::seed_from_u64(1);
        let u = random_control(&problem, &mut rng, 0.5);
        assert!(u.values.iter().all(|v| problem.bounds().contains(*v, 0.0) && v[1] == 0.0));
    }

    #[test]
    fn relative_discrepancy() {
        assert_eq!(relative(0.0, 0.0), 0.0);
        assert!((relative(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
