//! Closed-form manufactured fields built from separable stream functions.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::ocp::{ControlBounds, ProblemData};

/// One-dimensional profile with derivatives up to third order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `sin²(πt)`
    SinSq,
    /// `sin²(πt) (t − ½)`
    SinSqShifted,
}

impl Profile {
    pub fn derivative(self, k: usize, t: f64) -> f64 {
        let a = 2.0 * PI * t;
        let s = [
            0.5 * (1.0 - a.cos()),
            PI * a.sin(),
            2.0 * PI * PI * a.cos(),
            -4.0 * PI * PI * PI * a.sin(),
        ];
        match self {
            Profile::SinSq => s[k],
            Profile::SinSqShifted => {
                let m = t - 0.5;
                match k {
                    0 => s[0] * m,
                    1 => s[1] * m + s[0],
                    2 => s[2] * m + 2.0 * s[1],
                    3 => s[3] * m + 3.0 * s[2],
                    _ => unreachable!("derivatives up to order 3"),
                }
            }
        }
    }
}

/// Velocity `(∂₂ψ, −∂₁ψ)` of the stream function `ψ(x) = F(x₁) G(x₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamField {
    pub fx: Profile,
    pub gy: Profile,
}

impl StreamField {
    fn d(&self, x: [f64; 2], i: usize, j: usize) -> f64 {
        self.fx.derivative(i, x[0]) * self.gy.derivative(j, x[1])
    }

    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        [self.d(x, 0, 1), -self.d(x, 1, 0)]
    }

    /// `grad[c][d] = ∂_d v_c`.
    pub fn grad(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        [
            [self.d(x, 1, 1), self.d(x, 0, 2)],
            [-self.d(x, 2, 0), -self.d(x, 1, 1)],
        ]
    }

    pub fn laplacian(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.d(x, 2, 1) + self.d(x, 0, 3),
            -self.d(x, 3, 0) - self.d(x, 1, 2),
        ]
    }
}

/// Mean-free scalar fields on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarField {
    /// `sin(2πx₁) cos(2πx₂)`
    SinCos,
    /// `sin(2πx₁) sin(2πx₂)`
    SinSin,
}

impl ScalarField {
    pub fn value(self, x: [f64; 2]) -> f64 {
        let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
        match self {
            ScalarField::SinCos => a.sin() * b.cos(),
            ScalarField::SinSin => a.sin() * b.sin(),
        }
    }

    pub fn grad(self, x: [f64; 2]) -> [f64; 2] {
        let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
        let k = 2.0 * PI;
        match self {
            ScalarField::SinCos => [k * a.cos() * b.cos(), -k * a.sin() * b.sin()],
            ScalarField::SinSin => [k * a.cos() * b.sin(), k * a.sin() * b.cos()],
        }
    }
}

fn transport(v: [f64; 2], grad: [[f64; 2]; 2]) -> [f64; 2] {
    [
        grad[0][0] * v[0] + grad[0][1] * v[1],
        grad[1][0] * v[0] + grad[1][1] * v[1],
    ]
}

fn transpose_apply(grad: [[f64; 2]; 2], z: [f64; 2]) -> [f64; 2] {
    [
        grad[0][0] * z[0] + grad[1][0] * z[1],
        grad[0][1] * z[0] + grad[1][1] * z[1],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedNs {
    pub nu: f64,
    pub velocity: StreamField,
    pub pressure: ScalarField,
}

pub fn make_ns_benchmark(nu: f64) -> ManufacturedNs {
    assert!(nu > 0.0, "viscosity must be positive");
    ManufacturedNs {
        nu,
        velocity: StreamField {
            fx: Profile::SinSq,
            gy: Profile::SinSq,
        },
        pressure: ScalarField::SinCos,
    }
}

impl ManufacturedNs {
    /// `−νΔy + (y·∇)y + ∇p`.
    pub fn forcing(&self, x: [f64; 2]) -> [f64; 2] {
        let v = self.velocity.velocity(x);
        let lap = self.velocity.laplacian(x);
        let conv = transport(v, self.velocity.grad(x));
        let gp = self.pressure.grad(x);
        [
            -self.nu * lap[0] + conv[0] + gp[0],
            -self.nu * lap[1] + conv[1] + gp[1],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedOcp {
    pub nu: f64,
    pub bounds: ControlBounds,
    pub state: StreamField,
    pub pressure: ScalarField,
    pub adjoint: StreamField,
    pub adjoint_pressure: ScalarField,
}

pub fn make_ocp_benchmark(nu: f64, bounds: ControlBounds) -> ManufacturedOcp {
    assert!(nu > 0.0, "viscosity must be positive");
    ManufacturedOcp {
        nu,
        bounds,
        state: StreamField {
            fx: Profile::SinSq,
            gy: Profile::SinSq,
        },
        pressure: ScalarField::SinCos,
        adjoint: StreamField {
            fx: Profile::SinSqShifted,
            gy: Profile::SinSq,
        },
        adjoint_pressure: ScalarField::SinSin,
    }
}

impl ManufacturedOcp {
    /// Closures for the control problem whose solution is this benchmark.
    pub fn problem_data(&self) -> ProblemData {
        let (a, b) = (*self, *self);
        ProblemData {
            nu: self.nu,
            bounds: self.bounds,
            desired: Arc::new(move |x| a.desired(x)),
            extra_forcing: Some(Arc::new(move |x| b.extra_forcing(x))),
        }
    }

    pub fn control(&self, x: [f64; 2]) -> [f64; 2] {
        self.bounds.bang_bang(self.adjoint.velocity(x))
    }

    /// Extra state forcing `−νΔȳ + (ȳ·∇)ȳ + ∇p̄ − ū`.
    pub fn extra_forcing(&self, x: [f64; 2]) -> [f64; 2] {
        let y = self.state.velocity(x);
        let lap = self.state.laplacian(x);
        let conv = transport(y, self.state.grad(x));
        let gp = self.pressure.grad(x);
        let u = self.control(x);
        [
            -self.nu * lap[0] + conv[0] + gp[0] - u[0],
            -self.nu * lap[1] + conv[1] + gp[1] - u[1],
        ]
    }

    /// Desired state `ȳ + νΔz̄ + (ȳ·∇)z̄ − (∇ȳ)ᵀz̄ − ∇r̄`.
    pub fn desired(&self, x: [f64; 2]) -> [f64; 2] {
        let y = self.state.velocity(x);
        let z = self.adjoint.velocity(x);
        let lap = self.adjoint.laplacian(x);
        let conv = transport(y, self.adjoint.grad(x));
        let react = transpose_apply(self.state.grad(x), z);
        let gr = self.adjoint_pressure.grad(x);
        [
            y[0] + self.nu * lap[0] + conv[0] - react[0] - gr[0],
            y[1] + self.nu * lap[1] + conv[1] - react[1] - gr[1],
        ]
    }

    /// Residual of `−νΔy + (y·∇)y + ∇p − (ū + f)` at `x`, zero for the exact fields.
    pub fn state_residual(&self, x: [f64; 2]) -> [f64; 2] {
        let y = self.state.velocity(x);
        let lap = self.state.laplacian(x);
        let conv = transport(y, self.state.grad(x));
        let gp = self.pressure.grad(x);
        let u = self.control(x);
        let f = self.extra_forcing(x);
        std::array::from_fn(|c| -self.nu * lap[c] + conv[c] + gp[c] - u[c] - f[c])
    }

    /// Residual of `−νΔz − (y·∇)z + (∇y)ᵀz + ∇r − (ȳ − y_Ω)` at `x`.
    pub fn adjoint_residual(&self, x: [f64; 2]) -> [f64; 2] {
        let y = self.state.velocity(x);
        let z = self.adjoint.velocity(x);
        let lap = self.adjoint.laplacian(x);
        let conv = transport(y, self.adjoint.grad(x));
        let react = transpose_apply(self.state.grad(x), z);
        let gr = self.adjoint_pressure.grad(x);
        let yd = self.desired(x);
        std::array::from_fn(|c| {
            -self.nu * lap[c] - conv[c] + react[c] + gr[c] - (y[c] - yd[c])
        })
    }
}
