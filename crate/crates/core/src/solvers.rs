//! Newton's method for the discrete state equation, the linearized solve and the adjoint solve.

use std::sync::Arc;

use crate::assembly::{
    assemble_adjoint_operator, assemble_convection, assemble_load, assemble_newton_jacobian,
    assemble_stokes, pin_boundary, saddle_matrix, SystemBlocks,
};
use crate::error::{Error, Result};
use crate::spaces::{QuadField, ThFunction, ThSpace};
use crate::sparse::{factorize, norm, CsrMatrix, Factorization};

const MAX_HALVINGS: usize = 8;
const RESIDUAL_TOL: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

/// Factorization of a bordered saddle-point matrix `[[A, Bᵀ, 0], [B, 0, m], [0, mᵀ, 0]]`.
///
/// The dense multiplier row is kept out of the LU: the continuity rows of a zero-trace velocity
/// sum to zero, so the multiplier is `1ᵀr_p / |Ω|` and the pressure is found from a system with
/// one pressure node pinned, then shifted to satisfy the mean row. Every solve is checked
/// against the full bordered matrix.
pub struct SaddleFactorization {
    full: CsrMatrix,
    reduced: Factorization,
    nvel: usize,
    mean: Vec<f64>,
    area: f64,
}

impl std::fmt::Debug for SaddleFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleFactorization")
            .field("dim", &self.full.nrows())
            .finish()
    }
}

impl SaddleFactorization {
    pub fn new(space: &ThSpace, full: CsrMatrix, mean: &[f64]) -> Result<Self> {
        let nvel = space.num_velocity_dofs();
        let lambda = space.multiplier_dof();
        let mut trip: Vec<_> = full
            .triplets()
            .filter(|&(i, j, _)| i != lambda && j != lambda && i != nvel && j != nvel)
            .collect();
        trip.push((nvel, nvel, 1.0));
        trip.push((lambda, lambda, 1.0));
        let reduced = factorize(&CsrMatrix::from_triplets(full.nrows(), &trip)?)?;
        Ok(SaddleFactorization {
            full,
            reduced,
            nvel,
            mean: mean.to_vec(),
            area: mean.iter().sum(),
        })
    }

    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let np = self.mean.len();
        let (nvel, lam) = (self.nvel, self.nvel + np);
        let lambda = r[nvel..lam].iter().sum::<f64>() / self.area;
        let mut rr = r.to_vec();
        for k in 0..np {
            rr[nvel + k] -= self.mean[k] * lambda;
        }
        rr[nvel] = 0.0;
        rr[lam] = 0.0;
        let mut x = self.reduced.solve(&rr)?;
        let mp: f64 = (0..np).map(|k| self.mean[k] * x[nvel + k]).sum();
        let shift = (r[lam] - mp) / self.area;
        for v in &mut x[nvel..lam] {
            *v += shift;
        }
        x[lam] = lambda;
        Ok(x)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.apply(b)?;
        for step in 0..=REFINEMENT_STEPS {
            let ax = self.full.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            if norm(&r) <= RESIDUAL_TOL * bnorm {
                return Ok(x);
            }
            if step == REFINEMENT_STEPS || x.iter().any(|v| !v.is_finite()) {
                break;
            }
            let dx = self.apply(&r)?;
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        Err(Error::SingularMatrix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Euclidean norm of the algebraic residual after each iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub damping: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Relative to the norm of the load vector.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 30,
        }
    }
}

/// Space, viscosity and the fixed Stokes blocks.
#[derive(Debug, Clone)]
pub struct FlowSolver {
    pub space: Arc<ThSpace>,
    pub blocks: SystemBlocks,
}

impl FlowSolver {
    pub fn new(space: Arc<ThSpace>, nu: f64) -> Self {
        let blocks = assemble_stokes(&space, nu);
        FlowSolver { space, blocks }
    }

    pub fn nu(&self) -> f64 {
        self.blocks.nu
    }

    fn full_rhs(&self, velocity_load: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.space.dim()];
        rhs[..velocity_load.len()].copy_from_slice(velocity_load);
        rhs
    }

    /// Algebraic residual of the discrete Navier-Stokes system at `x` for velocity load `load`.
    pub fn residual(&self, x: &[f64], load: &[f64]) -> Vec<f64> {
        let s = &*self.space;
        let nvel = s.num_velocity_dofs();
        let np = s.num_pressure_dofs();
        let w = ThFunction::from_coeffs(Arc::clone(&self.space), x.to_vec());
        let y = &x[..nvel];
        let p = &x[nvel..nvel + np];
        let lambda = x[nvel + np];
        let mut r = vec![0.0; s.dim()];
        let ay = self.blocks.laplacian.matvec(y);
        let ny = assemble_convection(s, &w).matvec(y);
        for i in 0..nvel {
            r[i] = ay[i] + ny[i] - load[i];
        }
        for (k, j, v) in self.blocks.divergence.triplets() {
            r[j] += v * p[k];
            r[nvel + k] += v * y[j];
        }
        for k in 0..np {
            r[nvel + k] += self.blocks.mean[k] * lambda;
            r[nvel + np] += self.blocks.mean[k] * p[k];
        }
        pin_boundary(s, &mut r);
        r
    }

    fn solve_saddle(&self, extra: Option<&CsrMatrix>, rhs: &[f64]) -> Result<Vec<f64>> {
        let a = saddle_matrix(&self.space, &self.blocks, extra);
        SaddleFactorization::new(&self.space, a, &self.blocks.mean)?.solve(rhs)
    }

    pub fn solve_stokes(&self, load: &[f64]) -> Result<ThFunction> {
        let x = self.solve_saddle(None, &self.full_rhs(load))?;
        Ok(ThFunction::from_coeffs(Arc::clone(&self.space), x))
    }

    /// Newton iteration for `ν(∇y,∇v) + b(y;y,v) − (p, div v) = (u + f, v)`.
    pub fn solve_state(
        &self,
        u: &QuadField,
        extra: Option<&QuadField>,
        init: Option<&ThFunction>,
        opts: NewtonOptions,
    ) -> Result<(ThFunction, NewtonReport)> {
        if opts.tol <= 0.0 {
            return Err(Error::InvalidParameter("Newton tolerance must be positive".into()));
        }
        let s = &*self.space;
        let forcing = match extra {
            Some(f) => u.axpy(1.0, f),
            None => u.clone(),
        };
        let load = assemble_load(s, &forcing);
        let scale = norm(&load);
        let mut report = NewtonReport {
            iterations: 0,
            residuals: vec![],
            converged: false,
            damping: vec![],
        };
        let mut x = match init {
            Some(f) => {
                let mut c = f.coeffs.clone();
                pin_boundary(s, &mut c);
                c
            }
            None => {
                report.iterations = 1;
                report.damping.push(1.0);
                self.solve_stokes(&load)?.coeffs
            }
        };
        let mut r = self.residual(&x, &load);
        let mut rn = norm(&r);
        if init.is_none() {
            report.residuals.push(rn);
        }
        let done = |rn: f64| rn == 0.0 || rn <= opts.tol * scale;
        while !done(rn) {
            if report.iterations >= opts.max_iter || !rn.is_finite() {
                return Err(Error::NewtonDiverged {
                    iterations: report.iterations,
                    residual: rn,
                });
            }
            let w = ThFunction::from_coeffs(Arc::clone(&self.space), x.clone());
            let jac = assemble_newton_jacobian(s, &w);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let dx = self.solve_saddle(Some(&jac), &rhs)?;
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
                let tr = self.residual(&trial, &load);
                let tn = norm(&tr);
                if tn < rn || done(tn) {
                    accepted = Some((trial, tr, tn));
                    break;
                }
                alpha *= 0.5;
            }
            report.iterations += 1;
            let Some((trial, tr, tn)) = accepted else {
                return Err(Error::NewtonDiverged {
                    iterations: report.iterations,
                    residual: rn,
                });
            };
            report.damping.push(alpha);
            report.residuals.push(tn);
            x = trial;
            r = tr;
            rn = tn;
        }
        report.converged = true;
        Ok((ThFunction::from_coeffs(Arc::clone(&self.space), x), report))
    }

    /// `S′(u)g`: one saddle-point solve with the Newton Jacobian at `y`.
    pub fn solve_linearized(&self, y: &ThFunction, g: &QuadField) -> Result<ThFunction> {
        let s = &*self.space;
        let load = assemble_load(s, g);
        if load.iter().all(|&v| v == 0.0) {
            return Ok(self.space.zero());
        }
        let jac = assemble_newton_jacobian(s, y);
        let x = self.solve_saddle(Some(&jac), &self.full_rhs(&load))?;
        Ok(ThFunction::from_coeffs(Arc::clone(&self.space), x))
    }

    /// Adjoint velocity and multiplier for transport field `y` and right-hand side `rhs`.
    pub fn solve_adjoint(&self, y: &ThFunction, rhs: &QuadField) -> Result<ThFunction> {
        let s = &*self.space;
        let load = assemble_load(s, rhs);
        if load.iter().all(|&v| v == 0.0) {
            return Ok(self.space.zero());
        }
        let adj = assemble_adjoint_operator(s, y);
        let x = self.solve_saddle(Some(&adj), &self.full_rhs(&load))?;
        Ok(ThFunction::from_coeffs(Arc::clone(&self.space), x))
    }
}

/// Convenience wrapper building the Stokes blocks on the fly.
pub fn solve_state(
    space: &Arc<ThSpace>,
    u: &QuadField,
    extra: Option<&QuadField>,
    nu: f64,
    init: Option<&ThFunction>,
    tol: f64,
    max_iter: usize,
) -> Result<(ThFunction, NewtonReport)> {
    FlowSolver::new(Arc::clone(space), nu).solve_state(u, extra, init, NewtonOptions { tol, max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured, Rect};
    use crate::spaces::{build_space, norm_lp, Region};
    use rand::{Rng, SeedableRng};

    fn solver(n: usize, nu: f64) -> FlowSolver {
        FlowSolver::new(build_space(build_structured(n, n, Rect::UNIT)), nu)
    }

    fn random_quad(s: &ThSpace, rng: &mut impl Rng) -> QuadField {
        let mut f = QuadField::zeros(s);
        for v in &mut f.values {
            *v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        }
        f
    }

    #[test]
    fn zero_data_zero_solution() {
        let fs = solver(4, 1.0);
        let u = QuadField::zeros(&fs.space);
        let (y, rep) = fs.solve_state(&u, None, None, NewtonOptions::default()).unwrap();
        assert!(y.coeffs.iter().all(|&c| c == 0.0));
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn tiny_viscosity_fails_cleanly() {
        let fs = solver(4, 1e-6);
        let u = QuadField::from_fn(&fs.space, |x| [(3.0 * x[1]).sin(), x[0] * x[0]]);
        let err = fs.solve_state(&u, None, None, NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NewtonDiverged { .. }), "{err}");
    }

    #[test]
    fn solution_satisfies_invariants() {
        let fs = solver(6, 0.5);
        let u = QuadField::from_fn(&fs.space, |x| [10.0 * x[1], -5.0 * x[0] * x[0]]);
        let (y, rep) = fs.solve_state(&u, None, None, NewtonOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.residuals.iter().all(|r| r.is_finite()));
        assert!(y.pressure_mean().abs() < 1e-12);
        for i in 0..fs.space.num_velocity_dofs() {
            if fs.space.is_dirichlet(i) {
                assert_eq!(y.coeffs[i], 0.0);
            }
        }
        let load = assemble_load(&fs.space, &u);
        assert!(norm(&fs.residual(&y.coeffs, &load)) <= 1e-10 * norm(&load));
    }

    #[test]
    fn linearized_and_adjoint_zero_rhs() {
        let fs = solver(3, 1.0);
        let y = fs.space.zero();
        let g = QuadField::zeros(&fs.space);
        assert!(fs.solve_linearized(&y, &g).unwrap().coeffs.iter().all(|&c| c == 0.0));
        assert!(fs.solve_adjoint(&y, &g).unwrap().coeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn duality_pairing() {
        let fs = solver(4, 0.3);
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let u = random_quad(&fs.space, &mut rng);
        let (y, _) = fs.solve_state(&u, None, None, NewtonOptions::default()).unwrap();
        for _ in 0..5 {
            let g = random_quad(&fs.space, &mut rng);
            let h = random_quad(&fs.space, &mut rng);
            let phi = fs.solve_linearized(&y, &g).unwrap();
            let z = fs.solve_adjoint(&y, &h).unwrap();
            let lhs = QuadField::from_velocity(&phi).inner(&h, &fs.space);
            let rhs = g.inner(&QuadField::from_velocity(&z), &fs.space);
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()));
            assert!(z.pressure_mean().abs() < 1e-12);
        }
    }

    #[test]
    fn linearized_matches_finite_differences() {
        let fs = solver(4, 0.5);
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let u = random_quad(&fs.space, &mut rng);
        let g = random_quad(&fs.space, &mut rng);
        let opts = NewtonOptions { tol: 1e-13, max_iter: 30 };
        let (y, _) = fs.solve_state(&u, None, None, opts).unwrap();
        let phi = fs.solve_linearized(&y, &g).unwrap();
        let mut errs = vec![];
        for t in [1e-2, 1e-3, 1e-4] {
            let (yt, _) = fs.solve_state(&u.axpy(t, &g), None, Some(&y), opts).unwrap();
            let fd = yt.sub(&y).scaled(1.0 / t);
            let d = fd.sub(&phi);
            errs.push(norm_lp(&fs.space, 2.0, Region::All, |e, xi, _| {
                let v = d.eval(e, xi).velocity;
                v[0].hypot(v[1])
            }));
        }
        assert!(errs[1] < 0.2 * errs[0] && errs[2] < 0.2 * errs[1], "{errs:?}");
    }

    #[test]
    fn bordered_solve_matches_direct() {
        let fs = solver(3, 0.7);
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        let w = random_quad(&fs.space, &mut rng);
        let (y, _) = fs.solve_state(&w, None, None, NewtonOptions::default()).unwrap();
        let jac = crate::assembly::assemble_newton_jacobian(&fs.space, &y);
        let a = saddle_matrix(&fs.space, &fs.blocks, Some(&jac));
        let mut b: Vec<f64> = (0..fs.space.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        pin_boundary(&fs.space, &mut b);
        let x = SaddleFactorization::new(&fs.space, a.clone(), &fs.blocks.mean)
            .unwrap()
            .solve(&b)
            .unwrap();
        let xd = crate::sparse::solve_direct(&a, &b).unwrap();
        let d = x.iter().zip(&xd).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(d < 1e-10 * norm(&xd), "{d}");
    }

    #[test]
    fn stokes_when_transport_vanishes() {
        let fs = solver(4, 1.0);
        let g = QuadField::from_fn(&fs.space, |x| [x[1], 1.0 - x[0]]);
        let phi = fs.solve_linearized(&fs.space.zero(), &g).unwrap();
        let st = fs.solve_stokes(&assemble_load(&fs.space, &g)).unwrap();
        let d: f64 = phi.coeffs.iter().zip(&st.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }
}
