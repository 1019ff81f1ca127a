//! Convergence ladders on the manufactured problems: errors, estimators and EOCs per level.

use std::sync::Arc;
use std::time::Instant;

use crate::bench::manufactured::{ManufacturedNs, ManufacturedOcp};
use crate::error::{Error, Result};
use crate::estimators::{
    adaptive_loop, divergence_norm, estimate_adjoint, estimate_state, total_forcing, total_reliability_bound,
    AdaptiveOptions, BoundParams, MarkBy,
};
use crate::mesh::{refine_uniform, TriMesh};
use crate::ocp::{bang_bang_from_adjoint, interior_measure, solve_ocp_from, OcpOptions, OcpProblem, OcpRun};
use crate::solvers::{FlowSolver, NewtonOptions};
use crate::spaces::{build_space, norm2, norm_lp, QuadField, Region, ThFunction, ThSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    pub levels: usize,
    pub mode: Mode,
    pub theta: f64,
    pub mark_by: MarkBy,
    pub newton: NewtonOptions,
    pub ocp: OcpOptions,
    pub bound: BoundParams,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            levels: 4,
            mode: Mode::Uniform,
            theta: 0.5,
            mark_by: MarkBy::Adjoint,
            newton: NewtonOptions::default(),
            ocp: OcpOptions::default(),
            bound: BoundParams::default(),
        }
    }
}

/// One row of a convergence table. Columns that do not apply to a study are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub level: usize,
    /// Largest element diameter.
    pub h: f64,
    pub h_min: f64,
    pub ndof_v: usize,
    pub ndof_p: usize,
    pub err_u_l1: f64,
    pub err_y_l2: f64,
    pub err_z_linf: f64,
    pub err_p_l2: f64,
    pub eta_st2: f64,
    pub eta_stp: f64,
    pub eta_adj_inf: f64,
    pub div_term: f64,
    pub total_bound: f64,
    pub eoc_u: f64,
    pub eoc_y: f64,
    pub wall_s: f64,
    pub cost: f64,
    pub gap: f64,
    pub converged: bool,
    /// Measure of the points where the control is strictly inside the box.
    pub interior_measure: f64,
}

impl RunRecord {
    fn blank(level: usize, s: &ThSpace) -> Self {
        RunRecord {
            level,
            h: s.mesh.h_max(),
            h_min: s.mesh.h_min(),
            ndof_v: s.num_velocity_dofs(),
            ndof_p: s.num_pressure_dofs(),
            err_u_l1: f64::NAN,
            err_y_l2: f64::NAN,
            err_z_linf: f64::NAN,
            err_p_l2: f64::NAN,
            eta_st2: f64::NAN,
            eta_stp: f64::NAN,
            eta_adj_inf: f64::NAN,
            div_term: f64::NAN,
            total_bound: f64::NAN,
            eoc_u: f64::NAN,
            eoc_y: f64::NAN,
            wall_s: 0.0,
            cost: f64::NAN,
            gap: f64::NAN,
            converged: false,
            interior_measure: f64::NAN,
        }
    }
}

/// Errors at or below this are treated as zero when forming EOCs.
pub const ERROR_FLOOR: f64 = 1e-13;

/// `log(e₀/e₁) / log(h₀/h₁)`, NaN when either error is at roundoff level or the mesh size did
/// not change.
pub fn eoc(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    if !(e0 > ERROR_FLOOR && e1 > ERROR_FLOOR && h0 > 0.0 && h1 > 0.0) || h0 == h1 {
        return f64::NAN;
    }
    let r = (e0 / e1).ln() / (h0 / h1).ln();
    if r.is_finite() {
        r
    } else {
        f64::NAN
    }
}

/// Fills the EOC columns from the error and `h` columns.
pub fn fill_eocs(records: &mut [RunRecord]) {
    for k in 0..records.len() {
        if k == 0 {
            records[k].eoc_u = f64::NAN;
            records[k].eoc_y = f64::NAN;
            continue;
        }
        let (a, b) = (&records[k - 1], &records[k]);
        let eu = eoc(a.err_u_l1, b.err_u_l1, a.h, b.h);
        let ey = eoc(a.err_y_l2, b.err_y_l2, a.h, b.h);
        records[k].eoc_u = eu;
        records[k].eoc_y = ey;
    }
}

pub type VectorField<'a> = &'a dyn Fn([f64; 2]) -> [f64; 2];

/// `‖y_h − y‖_{L²}` of the velocity.
pub fn velocity_error_l2(f: &ThFunction, exact: VectorField) -> f64 {
    norm_lp(&f.space, 2.0, Region::All, |t, xi, x| {
        let v = f.eval(t, xi).velocity;
        let e = exact(x);
        norm2([v[0] - e[0], v[1] - e[1]])
    })
}

/// `‖y_h − y‖_{L^∞}` of the velocity over quadrature points and nodes.
pub fn velocity_error_linf(f: &ThFunction, exact: VectorField) -> f64 {
    norm_lp(&f.space, f64::INFINITY, Region::All, |t, xi, x| {
        let v = f.eval(t, xi).velocity;
        let e = exact(x);
        norm2([v[0] - e[0], v[1] - e[1]])
    })
}

pub fn pressure_error_l2(f: &ThFunction, exact: &dyn Fn([f64; 2]) -> f64) -> f64 {
    norm_lp(&f.space, 2.0, Region::All, |t, xi, x| f.eval(t, xi).pressure - exact(x))
}

/// `Σ w |u_h − u|` over the quadrature points, with the Euclidean pointwise norm.
pub fn control_error_l1(s: &ThSpace, u: &QuadField, exact: VectorField) -> f64 {
    let mut e = 0.0;
    for t in 0..s.num_elements() {
        for q in 0..s.nq() {
            let a = u.at(t, q);
            let b = exact(s.quad_point(t, q));
            e += s.quad_weight(t, q) * norm2([a[0] - b[0], a[1] - b[1]]);
        }
    }
    e
}

/// Velocity and pressure ladder for the forced Navier-Stokes benchmark.
pub fn run_ns_convergence(
    bench: &ManufacturedNs,
    mesh: TriMesh,
    levels: usize,
    newton: NewtonOptions,
    bound: BoundParams,
) -> Result<NsRun> {
    if levels < 2 {
        return Err(Error::InvalidParameter("a convergence ladder needs at least two levels".into()));
    }
    bound.validate()?;
    let mut mesh = mesh;
    let mut records = Vec::with_capacity(levels);
    let mut warm: Option<ThFunction> = None;
    for level in 0..levels {
        if level > 0 {
            mesh = refine_uniform(&mesh);
        }
        let start = Instant::now();
        let s = build_space(mesh.clone());
        let solver = FlowSolver::new(Arc::clone(&s), bench.nu);
        let f = QuadField::from_fn(&s, |x| bench.forcing(x));
        let init = warm.as_ref().map(|w| w.prolong(&s));
        let (y, report) = solver.solve_state(&f, None, init.as_ref(), newton)?;
        let mut r = RunRecord::blank(level, &s);
        r.err_y_l2 = velocity_error_l2(&y, &|x| bench.velocity.velocity(x));
        r.err_p_l2 = pressure_error_l2(&y, &|x| bench.pressure.value(x));
        r.eta_st2 = estimate_state(&s, bench.nu, &y, &f, 2.0)?.total;
        r.eta_stp = estimate_state(&s, bench.nu, &y, &f, bound.p)?.total;
        r.div_term = divergence_norm(&y, bound.mu());
        r.converged = report.converged;
        r.wall_s = start.elapsed().as_secs_f64();
        records.push(r);
        warm = Some(y);
    }
    fill_eocs(&mut records);
    Ok(NsRun {
        records,
        state: warm.expect("at least one level"),
    })
}

#[derive(Debug, Clone)]
pub struct NsRun {
    pub records: Vec<RunRecord>,
    /// Solution on the finest level.
    pub state: ThFunction,
}

/// Final discrete fields of a ladder.
#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub records: Vec<RunRecord>,
    pub runs: Vec<OcpRun>,
}

impl ConvergenceRun {
    pub fn finest(&self) -> &OcpRun {
        self.runs.last().expect("ladder has at least one level")
    }
}

fn measure_level(
    bench: &ManufacturedOcp,
    problem: &OcpProblem,
    run: &OcpRun,
    level: usize,
    bound: BoundParams,
) -> Result<RunRecord> {
    let s = problem.space();
    let last = run.last();
    let mut r = RunRecord::blank(level, s);
    r.err_u_l1 = control_error_l1(s, &last.control, &|x| bench.control(x));
    r.err_y_l2 = velocity_error_l2(&last.state, &|x| bench.state.velocity(x));
    r.err_z_linf = velocity_error_linf(&last.adjoint, &|x| bench.adjoint.velocity(x));
    r.err_p_l2 = pressure_error_l2(&last.state, &|x| bench.pressure.value(x));
    let f = total_forcing(problem, &last.control);
    r.eta_st2 = estimate_state(s, bench.nu, &last.state, &f, 2.0)?.total;
    r.eta_stp = estimate_state(s, bench.nu, &last.state, &f, bound.p)?.total;
    r.eta_adj_inf = estimate_adjoint(s, bench.nu, &last.state, &last.adjoint, |x| bench.desired(x))?.total;
    r.div_term = divergence_norm(&last.state, bound.mu());
    r.total_bound = total_reliability_bound(r.eta_st2, r.eta_stp, r.eta_adj_inf, r.div_term, r.h_min, bound)?;
    r.cost = last.cost;
    r.gap = last.gap;
    r.converged = run.converged;
    r.interior_measure = interior_measure(s, &last.control, &bench.bounds, 1e-12);
    Ok(r)
}

/// Control-problem ladder starting from `mesh`, refined uniformly or adaptively.
pub fn run_convergence(bench: &ManufacturedOcp, mesh: TriMesh, opts: StudyOptions) -> Result<ConvergenceRun> {
    if opts.levels < 2 {
        return Err(Error::InvalidParameter("a convergence ladder needs at least two levels".into()));
    }
    opts.bound.validate()?;
    if !(2.0..=4.0).contains(&opts.bound.p) {
        return Err(Error::InvalidParameter(format!(
            "state indicator exponent p must lie in [2, 4], got {}",
            opts.bound.p
        )));
    }
    let data = bench.problem_data();
    let mut records = Vec::with_capacity(opts.levels);
    let mut runs = Vec::with_capacity(opts.levels);
    match opts.mode {
        Mode::Uniform => {
            let mut mesh = mesh;
            let mut warm: Option<(ThFunction, ThFunction)> = None;
            for level in 0..opts.levels {
                if level > 0 {
                    mesh = refine_uniform(&mesh);
                }
                let start = Instant::now();
                let s = build_space(mesh.clone());
                let problem = OcpProblem::new(Arc::clone(&s), data.clone(), opts.newton);
                let (u0, y0) = match &warm {
                    Some((y, z)) => {
                        let z = z.prolong(&s);
                        (Some(bang_bang_from_adjoint(&z, &data.bounds)), Some(y.prolong(&s)))
                    }
                    None => (None, None),
                };
                let run = solve_ocp_from(&problem, u0, y0.as_ref(), opts.ocp)?;
                let mut r = measure_level(bench, &problem, &run, level, opts.bound)?;
                r.wall_s = start.elapsed().as_secs_f64();
                let last = run.last();
                warm = Some((last.state.clone(), last.adjoint.clone()));
                records.push(r);
                runs.push(run);
            }
        }
        Mode::Adaptive => {
            let start = Instant::now();
            let levels = adaptive_loop(
                &data,
                mesh,
                AdaptiveOptions {
                    theta: opts.theta,
                    levels: opts.levels,
                    mark_by: opts.mark_by,
                    t_prime: 2.0,
                    newton: opts.newton,
                    ocp: opts.ocp,
                },
            )?;
            let per_level = start.elapsed().as_secs_f64() / levels.len() as f64;
            for (k, lvl) in levels.into_iter().enumerate() {
                let problem = OcpProblem::new(Arc::clone(&lvl.space), data.clone(), opts.newton);
                let mut r = measure_level(bench, &problem, &lvl.run, k, opts.bound)?;
                r.wall_s = per_level;
                records.push(r);
                runs.push(lvl.run);
            }
        }
    }
    fill_eocs(&mut records);
    Ok(ConvergenceRun { records, runs })
}
