//! Symmetric quadrature on the reference triangle `{(0,0), (1,0), (0,1)}`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub degree: usize,
    /// Barycentric coordinates `(λ1, λ2, λ3)`; `λ2`, `λ3` are the reference `x`, `y`.
    pub points: Vec<[f64; 3]>,
    /// Sum to the reference area 1/2.
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Degree used by every assembly loop and norm in the crate.
pub const DEFAULT_DEGREE: usize = 6;

struct Builder {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Builder {
    fn new() -> Self {
        Self { points: Vec::new(), weights: Vec::new() }
    }

    fn centroid(mut self, w: f64) -> Self {
        let t = 1.0 / 3.0;
        self.points.push([t, t, t]);
        self.weights.push(w);
        self
    }

    /// Orbit of `(a, a, 1 - 2a)`.
    fn s21(mut self, a: f64, w: f64) -> Self {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
        self
    }

    /// Orbit of `(a, b, 1 - a - b)`.
    fn s111(mut self, a: f64, b: f64, w: f64) -> Self {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
        self
    }

    fn build(self, degree: usize) -> QuadRule {
        QuadRule { degree, points: self.points, weights: self.weights }
    }
}

/// Rule exact for polynomials up to `degree` (1 ≤ degree ≤ 6).
/// Degree 3 is served by the degree-4 rule.
pub fn quad_rule(degree: usize) -> Result<QuadRule> {
    let rule = match degree {
        1 => Builder::new().centroid(0.5).build(1),
        2 => Builder::new().s21(1.0 / 6.0, 1.0 / 6.0).build(2),
        3 | 4 => Builder::new()
            .s21(0.445_948_490_915_964_886_318_3, 0.111_690_794_839_005_732_847_5)
            .s21(0.091_576_213_509_770_743_459_57, 0.054_975_871_827_660_933_819_16)
            .build(4),
        5 => Builder::new()
            .centroid(0.1125)
            .s21(0.470_142_064_105_115_089_770_4, 0.066_197_076_394_253_090_368_82)
            .s21(0.101_286_507_323_456_338_801, 0.062_969_590_272_413_576_297_84)
            .build(5),
        6 => Builder::new()
            .s21(0.249_286_745_170_910_421_291_6, 0.058_393_137_863_189_683_012_64)
            .s21(0.063_089_014_491_502_228_340_33, 0.025_422_453_185_103_408_460_47)
            .s111(0.053_145_049_844_816_947_353_25, 0.310_352_451_033_784_405_416_6, 0.041_425_537_809_186_787_596_78)
            .build(6),
        _ => return Err(Error::param(format!("no quadrature rule of degree {degree} (supported: 1..=6)"))),
    };
    Ok(rule)
}
