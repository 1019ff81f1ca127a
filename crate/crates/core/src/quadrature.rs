//! Quadrature on the reference triangle `{(0,0), (1,0), (0,1)}` and on the unit interval.
//!
//! Triangle rules are fully symmetric with strictly positive weights and all points in the
//! interior. Weights are scaled so they sum to the reference area 1/2.

use crate::error::{Error, Result};

/// Volume rule used throughout assembly. Exact for degree 6, which covers the trilinear
/// integrand `P2 * grad(P2) * P2` (degree 5).
pub const DEFAULT_DEGREE: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    /// Reference coordinates `(xi, eta)`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeQuadRule {
    /// Points in `[0, 1]`.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral of `f` over the reference triangle.
    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

impl EdgeQuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

enum Orbit {
    /// Centroid, weight.
    Centroid(f64),
    /// `(a, a, 1-2a)` and permutations, weight.
    S21(f64, f64),
    /// All permutations of `(a, b, 1-a-b)`, weight.
    S111(f64, f64, f64),
}

// Orbit parameters are Newton-refined against the exact monomial moments. Weights are
// normalized to sum to one.
const RULE_4: &[Orbit] = &[
    Orbit::S21(0.223_381_589_678_011_47, 0.445_948_490_915_964_9),
    Orbit::S21(0.109_951_743_655_321_87, 0.091_576_213_509_770_74),
];

const RULE_5: &[Orbit] = &[
    Orbit::Centroid(0.225),
    Orbit::S21(0.132_394_152_788_506_18, 0.470_142_064_105_115_1),
    Orbit::S21(0.125_939_180_544_827_15, 0.101_286_507_323_456_34),
];

const RULE_6: &[Orbit] = &[
    Orbit::S21(0.116_786_275_726_379_37, 0.249_286_745_170_910_42),
    Orbit::S21(0.050_844_906_370_206_817, 0.063_089_014_491_502_23),
    Orbit::S111(
        0.082_851_075_618_373_575,
        0.053_145_049_844_816_947,
        0.310_352_451_033_784_4,
    ),
];

const RULE_8: &[Orbit] = &[
    Orbit::Centroid(0.144_315_607_677_787_17),
    Orbit::S21(0.095_091_634_267_284_62, 0.459_292_588_292_723_16),
    Orbit::S21(0.103_217_370_534_718_25, 0.170_569_307_751_760_2),
    Orbit::S21(0.032_458_497_623_198_08, 0.050_547_228_317_030_975),
    Orbit::S111(
        0.027_230_314_174_434_994,
        0.008_394_777_409_957_605,
        0.263_112_829_634_638_1,
    ),
];

const RULE_9: &[Orbit] = &[
    Orbit::Centroid(0.097_135_796_282_798_83),
    Orbit::S21(0.031_334_700_227_139_07, 0.489_682_519_198_737_6),
    Orbit::S21(0.077_827_541_004_774_28, 0.437_089_591_492_936_6),
    Orbit::S21(0.079_647_738_927_210_25, 0.188_203_535_619_032_73),
    Orbit::S21(0.025_577_675_658_698_03, 0.044_729_513_394_452_71),
    Orbit::S111(
        0.043_283_539_377_289_38,
        0.036_838_412_054_736_28,
        0.221_962_989_160_765_7,
    ),
];

const RULE_10: &[Orbit] = &[
    Orbit::Centroid(0.090_817_990_382_753_58),
    Orbit::S21(0.036_725_957_756_466_7, 0.485_577_633_383_657_4),
    Orbit::S21(0.045_321_059_435_527_93, 0.109_481_575_485_037_05),
    Orbit::S111(
        0.072_757_916_845_420_11,
        0.141_707_219_414_879_95,
        0.307_939_838_764_120_95,
    ),
    Orbit::S111(
        0.028_327_242_531_057_485,
        0.025_003_534_762_686_386,
        0.246_672_560_639_902_7,
    ),
    Orbit::S111(
        0.009_421_666_963_732_823,
        0.009_540_815_400_299_458,
        0.066_803_251_012_200_27,
    ),
];

fn expand(orbits: &[Orbit], exact_degree: usize) -> QuadRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    // barycentric (l0, l1, l2) maps to reference (xi, eta) = (l1, l2)
    let mut push = |w: f64, l: [f64; 3]| {
        points.push([l[1], l[2]]);
        weights.push(0.5 * w);
    };
    for orbit in orbits {
        match *orbit {
            Orbit::Centroid(w) => push(w, [1.0 / 3.0; 3]),
            Orbit::S21(w, a) => {
                let c = 1.0 - 2.0 * a;
                push(w, [a, a, c]);
                push(w, [a, c, a]);
                push(w, [c, a, a]);
            }
            Orbit::S111(w, a, b) => {
                let c = 1.0 - a - b;
                for l in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    push(w, l);
                }
            }
        }
    }
    QuadRule {
        points,
        weights,
        exact_degree,
    }
}

/// Symmetric rule on the reference triangle exact for polynomials of total degree `degree`.
pub fn triangle_rule(degree: usize) -> Result<QuadRule> {
    let rule = match degree {
        1 => QuadRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exact_degree: 1,
        },
        2 => QuadRule {
            points: vec![
                [1.0 / 6.0, 1.0 / 6.0],
                [2.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 2.0 / 3.0],
            ],
            weights: vec![1.0 / 6.0; 3],
            exact_degree: 2,
        },
        3 | 4 => expand(RULE_4, 4),
        5 => expand(RULE_5, 5),
        6 => expand(RULE_6, 6),
        7 | 8 => expand(RULE_8, 8),
        9 => expand(RULE_9, 9),
        10 => expand(RULE_10, 10),
        _ => return Err(Error::UnsupportedDegree(degree)),
    };
    Ok(rule)
}

/// Gauss-Legendre rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn edge_rule(degree: usize) -> Result<EdgeQuadRule> {
    if !(1..=10).contains(&degree) {
        return Err(Error::UnsupportedDegree(degree));
    }
    let n = degree / 2 + 1;
    let (nodes, weights) = gauss_legendre(n);
    Ok(EdgeQuadRule {
        points: nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights: weights.iter().map(|w| 0.5 * w).collect(),
        exact_degree: 2 * n - 1,
    })
}

/// Nodes and weights on `[-1, 1]` by Newton iteration on the Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}
