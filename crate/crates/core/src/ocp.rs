//! Bang-bang optimal control with variational discretization of the control.
//!
//! Controls live at the quadrature points of the space ([`QuadControl`]); the discrete adjoint
//! velocity induces the bang-bang vertex through its sign at those points.

use std::sync::Arc;

use crate::assembly::trilinear_value;
use crate::error::{Error, Result};
use crate::solvers::{FlowSolver, NewtonOptions, NewtonReport};
use crate::spaces::{QuadField, ThFunction, ThSpace};

pub type QuadControl = QuadField;
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl ControlBounds {
    /// Box `[a₁, b₁] × [a₂, b₂]`; `a_i = b_i` is accepted as a degenerate box.
    pub fn new(a: [f64; 2], b: [f64; 2]) -> Result<Self> {
        for i in 0..2 {
            if !(a[i].is_finite() && b[i].is_finite()) || a[i] > b[i] {
                return Err(Error::InvalidParameter(format!(
                    "control bounds need finite a_{i} <= b_{i}, got [{}, {}]",
                    a[i], b[i]
                )));
            }
        }
        Ok(ControlBounds { a, b })
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [0.5 * (self.a[0] + self.b[0]), 0.5 * (self.a[1] + self.b[1])]
    }

    pub fn is_degenerate(&self) -> bool {
        self.a == self.b
    }

    /// `a_i` where `z_i > 0`, `b_i` where `z_i < 0`, the midpoint where `z_i = 0`.
    pub fn bang_bang(&self, z: [f64; 2]) -> [f64; 2] {
        std::array::from_fn(|i| {
            if z[i] > 0.0 {
                self.a[i]
            } else if z[i] < 0.0 {
                self.b[i]
            } else {
                0.5 * (self.a[i] + self.b[i])
            }
        })
    }

    pub fn contains(&self, u: [f64; 2], slack: f64) -> bool {
        (0..2).all(|i| u[i] >= self.a[i] - slack && u[i] <= self.b[i] + slack)
    }
}

/// Problem data given as closures, so it can be sampled on any mesh.
#[derive(Clone)]
pub struct ProblemData {
    pub nu: f64,
    pub bounds: ControlBounds,
    pub desired: VectorFn,
    pub extra_forcing: Option<VectorFn>,
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData")
            .field("nu", &self.nu)
            .field("bounds", &self.bounds)
            .field("extra_forcing", &self.extra_forcing.is_some())
            .finish()
    }
}

/// Problem data sampled on one space.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    pub solver: FlowSolver,
    pub data: ProblemData,
    pub desired: QuadField,
    pub extra: Option<QuadField>,
    pub newton: NewtonOptions,
}

impl OcpProblem {
    pub fn new(space: Arc<ThSpace>, data: ProblemData, newton: NewtonOptions) -> Self {
        let desired = QuadField::from_fn(&space, |x| (data.desired)(x));
        let extra = data
            .extra_forcing
            .as_ref()
            .map(|f| QuadField::from_fn(&space, |x| f(x)));
        OcpProblem {
            solver: FlowSolver::new(space, data.nu),
            data,
            desired,
            extra,
            newton,
        }
    }

    pub fn space(&self) -> &Arc<ThSpace> {
        &self.solver.space
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.data.bounds
    }
}

#[derive(Debug, Clone)]
pub struct CostEval {
    pub value: f64,
    pub state: ThFunction,
    pub adjoint: ThFunction,
    pub report: NewtonReport,
}

#[derive(Debug, Clone)]
pub struct OcpIterate {
    pub control: QuadControl,
    pub state: ThFunction,
    pub adjoint: ThFunction,
    pub cost: f64,
    pub gap: f64,
    /// Step that produced this iterate; zero for the starting point.
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OcpRun {
    pub iterates: Vec<OcpIterate>,
    pub converged: bool,
    /// Number of cost evaluations (state plus adjoint solves).
    pub evaluations: usize,
}

impl OcpRun {
    pub fn last(&self) -> &OcpIterate {
        self.iterates.last().expect("a run holds at least one iterate")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcpOptions {
    /// The loop stops once `gap ≤ gap_tol · (1 + |J_h|)`.
    pub gap_tol: f64,
    pub max_outer: usize,
}

impl Default for OcpOptions {
    fn default() -> Self {
        OcpOptions {
            gap_tol: 1e-8,
            max_outer: 100,
        }
    }
}

pub fn bang_bang_from_adjoint(z: &ThFunction, bounds: &ControlBounds) -> QuadControl {
    let mut v = QuadField::from_velocity(z);
    for x in &mut v.values {
        *x = bounds.bang_bang(*x);
    }
    v
}

/// `J_h(u) = ½‖y_h − y_Ω‖²` together with the state and adjoint at `u`.
pub fn cost(problem: &OcpProblem, u: &QuadControl, init: Option<&ThFunction>) -> Result<CostEval> {
    let s = problem.space();
    let (state, report) = problem
        .solver
        .solve_state(u, problem.extra.as_ref(), init, problem.newton)?;
    let misfit = QuadField::from_velocity(&state).axpy(-1.0, &problem.desired);
    let value = 0.5 * misfit.inner(&misfit, s);
    let adjoint = problem.solver.solve_adjoint(&state, &misfit)?;
    Ok(CostEval {
        value,
        state,
        adjoint,
        report,
    })
}

/// `J′(u)g = (z, g)`.
pub fn first_variation(space: &ThSpace, z: &ThFunction, g: &QuadControl) -> f64 {
    QuadField::from_velocity(z).inner(g, space)
}

/// `J″(u)g² = ‖φ_g‖² − 2 b(φ_g; φ_g, z)` with `φ_g = S′(u)g`.
pub fn second_variation(problem: &OcpProblem, u: &QuadControl, g: &QuadControl) -> Result<f64> {
    let s = problem.space();
    let eval = cost(problem, u, None)?;
    let phi = problem.solver.solve_linearized(&eval.state, g)?;
    let pv = QuadField::from_velocity(&phi);
    Ok(pv.inner(&pv, s) - 2.0 * trilinear_value(s, &phi, &phi, &eval.adjoint))
}

/// `(z, u − v*)` where `v*` is the bang-bang vertex of `z`.
pub fn vi_gap(space: &ThSpace, z: &ThFunction, u: &QuadControl, bounds: &ControlBounds) -> f64 {
    let zq = QuadField::from_velocity(z);
    let mut gap = 0.0;
    for t in 0..space.num_elements() {
        for q in 0..space.nq() {
            let (zv, uv) = (zq.at(t, q), u.at(t, q));
            let v = bounds.bang_bang(zv);
            let local = zv[0] * (uv[0] - v[0]) + zv[1] * (uv[1] - v[1]);
            gap += space.quad_weight(t, q) * local;
        }
    }
    gap
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const LINE_SEARCH_EVALS: usize = 20;
const BACKTRACK_STEPS: usize = 30;

struct Candidate {
    alpha: f64,
    eval: CostEval,
}

/// Conditional-gradient loop starting from the midpoint control.
pub fn solve_ocp(problem: &OcpProblem, opts: OcpOptions) -> Result<OcpRun> {
    solve_ocp_from(problem, None, None, opts)
}

/// As [`solve_ocp`], with an optional starting control and state warm start.
pub fn solve_ocp_from(
    problem: &OcpProblem,
    start: Option<QuadControl>,
    warm: Option<&ThFunction>,
    opts: OcpOptions,
) -> Result<OcpRun> {
    let s = problem.space();
    let bounds = *problem.bounds();
    let mut u = start.unwrap_or_else(|| QuadField::constant(s, bounds.midpoint()));
    let mut evaluations = 1;
    let mut current = cost(problem, &u, warm)?;
    let mut run = OcpRun {
        iterates: vec![],
        converged: false,
        evaluations: 0,
    };
    let mut step = 0.0;
    loop {
        let vertex = bang_bang_from_adjoint(&current.adjoint, &bounds);
        let gap = vi_gap(s, &current.adjoint, &u, &bounds);
        run.iterates.push(OcpIterate {
            control: u.clone(),
            state: current.state.clone(),
            adjoint: current.adjoint.clone(),
            cost: current.value,
            gap,
            step,
        });
        run.evaluations = evaluations;
        // Unless the admissible set is a single point, the starting control is never accepted
        // without one step.
        if (run.iterates.len() > 1 || bounds.is_degenerate()) && gap <= opts.gap_tol * (1.0 + current.value.abs()) {
            run.converged = true;
            return Ok(run);
        }
        if run.iterates.len() > opts.max_outer {
            return Err(Error::MaxOuterIterations {
                iterations: opts.max_outer,
                gap,
                run: Box::new(run),
            });
        }
        let direction = vertex.axpy(-1.0, &u);
        let j0 = current.value;
        let eval_at = |alpha: f64, evaluations: &mut usize| -> Result<Candidate> {
            *evaluations += 1;
            let trial = u.axpy(alpha, &direction);
            Ok(Candidate {
                alpha,
                eval: cost(problem, &trial, Some(&current.state))?,
            })
        };

        // Full step first: accepted when it decreases J and J is still nonincreasing at α = 1.
        let full = eval_at(1.0, &mut evaluations)?;
        let slope = first_variation(s, &full.eval.adjoint, &direction);
        let chosen = if full.eval.value <= j0 && slope <= 0.0 {
            full
        } else {
            let mut best = full;
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut x1 = hi - GOLDEN * (hi - lo);
            let mut x2 = lo + GOLDEN * (hi - lo);
            let mut f1 = eval_at(x1, &mut evaluations)?;
            let mut f2 = eval_at(x2, &mut evaluations)?;
            let mut used = 3;
            loop {
                for c in [&f1, &f2] {
                    if c.eval.value < best.eval.value {
                        best = Candidate {
                            alpha: c.alpha,
                            eval: c.eval.clone(),
                        };
                    }
                }
                if used >= LINE_SEARCH_EVALS {
                    break;
                }
                if f1.eval.value <= f2.eval.value {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - GOLDEN * (hi - lo);
                    f1 = eval_at(x1, &mut evaluations)?;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + GOLDEN * (hi - lo);
                    f2 = eval_at(x2, &mut evaluations)?;
                }
                used += 1;
            }
            let mut alpha = best.alpha;
            let mut tries = 0;
            while best.eval.value > j0 && tries < BACKTRACK_STEPS {
                alpha *= 0.5;
                best = eval_at(alpha, &mut evaluations)?;
                tries += 1;
            }
            if best.eval.value > j0 {
                run.evaluations = evaluations;
                return Err(Error::MaxOuterIterations {
                    iterations: run.iterates.len(),
                    gap,
                    run: Box::new(run),
                });
            }
            best
        };
        step = chosen.alpha;
        u = u.axpy(step, &direction);
        current = chosen.eval;
    }
}

/// Quadrature measure of the points where some component of `u` lies strictly inside its
/// interval by more than `tol`.
pub fn interior_measure(space: &ThSpace, u: &QuadControl, bounds: &ControlBounds, tol: f64) -> f64 {
    let mut m = 0.0;
    for t in 0..space.num_elements() {
        for q in 0..space.nq() {
            let v = u.at(t, q);
            if (0..2).any(|i| v[i] > bounds.a[i] + tol && v[i] < bounds.b[i] - tol) {
                m += space.quad_weight(t, q);
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthFlag {
    Ok,
    /// `{|z_i| ≤ ε}` is empty for every ε.
    NoActiveSet,
    /// `{|z_i| ≤ ε}` is the whole domain for every ε.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub gamma: f64,
    pub eps: Vec<f64>,
    pub measures: Vec<f64>,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub flag: GrowthFlag,
}

/// Least-squares slope of `log |{|z_i| ≤ ε}|` against `log ε`.
pub fn growth_exponent(z: &ThFunction, eps: &[f64], component: usize) -> GrowthFit {
    let s = &*z.space;
    let zq = QuadField::from_velocity(z);
    let total: f64 = (0..s.num_elements())
        .flat_map(|t| (0..s.nq()).map(move |q| (t, q)))
        .map(|(t, q)| s.quad_weight(t, q))
        .sum();
    let measures: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let mut m = 0.0;
            for t in 0..s.num_elements() {
                for q in 0..s.nq() {
                    if zq.at(t, q)[component].abs() <= e {
                        m += s.quad_weight(t, q);
                    }
                }
            }
            m
        })
        .collect();
    let full = |m: f64| (m - total).abs() <= 1e-12 * total;
    if measures.iter().all(|&m| m == 0.0) {
        return GrowthFit {
            gamma: f64::NAN,
            eps: eps.to_vec(),
            measures,
            residual: f64::NAN,
            flag: GrowthFlag::NoActiveSet,
        };
    }
    if measures.iter().all(|&m| full(m)) {
        return GrowthFit {
            gamma: 0.0,
            eps: eps.to_vec(),
            measures,
            residual: 0.0,
            flag: GrowthFlag::Degenerate,
        };
    }
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(&measures)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&e, &m)| (e.ln(), m.ln()))
        .collect();
    let (gamma, residual) = if pts.len() < 2 {
        (f64::NAN, f64::NAN)
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let res = (pts
            .iter()
            .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        (slope, res)
    };
    GrowthFit {
        gamma,
        eps: eps.to_vec(),
        measures,
        residual,
        flag: GrowthFlag::Ok,
    }
}
