//! Small fixed-size linear algebra for membrane gradients (3×2) and
//! deformation gradients (3×3), plus the extended-value type used for
//! energies that may be `+∞`.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Absolute floor used by relative tolerances at unit scale.
pub const UNIT_TOL: f64 = 1e-12;

/// Below this cross-product norm a 3×2 gradient is treated as rank-deficient.
pub const RANK_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);
    pub const E1: Vec3 = Vec3([1.0, 0.0, 0.0]);
    pub const E2: Vec3 = Vec3([0.0, 1.0, 0.0]);
    pub const E3: Vec3 = Vec3([0.0, 0.0, 1.0]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector in the same direction, `None` for the zero vector.
    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(*self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// A unit vector orthogonal to `self` (which must be nonzero).
    pub fn any_orthogonal(&self) -> Option<Vec3> {
        let a = self.0.map(f64::abs);
        // cross with the least-aligned basis vector
        let basis = if a[0] <= a[1] && a[0] <= a[2] {
            Vec3::E1
        } else if a[1] <= a[2] {
            Vec3::E2
        } else {
            Vec3::E3
        };
        cross(self, &basis).normalized()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3(self.0.map(|x| -x))
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3(self.0.map(|x| x * s))
    }
}

/// `a ∧ b`.
pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    Vec3([
        a.0[1] * b.0[2] - a.0[2] * b.0[1],
        a.0[2] * b.0[0] - a.0[0] * b.0[2],
        a.0[0] * b.0[1] - a.0[1] * b.0[0],
    ])
}

/// A membrane gradient `ξ = (ξ₁ | ξ₂)`, stored by columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat32 {
    pub cols: [Vec3; 2],
}

impl Mat32 {
    pub const ZERO: Mat32 = Mat32 { cols: [Vec3::ZERO; 2] };

    pub const fn from_cols(c1: Vec3, c2: Vec3) -> Self {
        Mat32 { cols: [c1, c2] }
    }

    /// The flat embedding `(e₁ | e₂)`.
    pub const fn identity_embedding() -> Self {
        Mat32::from_cols(Vec3::E1, Vec3::E2)
    }

    /// `(s₁ e₁ | s₂ e₂)`; every gradient is equivalent to one of these up to
    /// rotations on both sides.
    pub fn diagonal(s1: f64, s2: f64) -> Self {
        Mat32::from_cols(Vec3::E1 * s1, Vec3::E2 * s2)
    }

    /// Rank-one matrix `a ⊗ n` with `a ∈ ℝ³`, `n ∈ ℝ²`.
    pub fn rank_one(a: &Vec3, n: [f64; 2]) -> Self {
        Mat32::from_cols(*a * n[0], *a * n[1])
    }

    /// Row-major entries `[ξ₁₁, ξ₁₂, ξ₂₁, ξ₂₂, ξ₃₁, ξ₃₂]`.
    pub fn to_row_major(&self) -> [f64; 6] {
        let [a, b] = self.cols;
        [a[0], b[0], a[1], b[1], a[2], b[2]]
    }

    pub fn from_row_major(e: [f64; 6]) -> Self {
        Mat32::from_cols(Vec3([e[0], e[2], e[4]]), Vec3([e[1], e[3], e[5]]))
    }

    pub fn cross(&self) -> Vec3 {
        cross(&self.cols[0], &self.cols[1])
    }

    /// `|ξ₁ ∧ ξ₂|`.
    pub fn area_factor(&self) -> f64 {
        self.cross().norm()
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.area_factor() < RANK_TOL
    }

    pub fn norm_sq(&self) -> f64 {
        self.cols[0].norm_sq() + self.cols[1].norm_sq()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.cols[0].is_finite() && self.cols[1].is_finite()
    }

    /// `(ξ | ζ)`.
    pub fn with_third(&self, zeta: Vec3) -> Mat33 {
        Mat33 {
            cols: [self.cols[0], self.cols[1], zeta],
        }
    }

    /// Singular values `σ₁ ≥ σ₂ ≥ 0`, from the 2×2 Gram matrix:
    /// `σ₁² + σ₂² = |ξ|²` and `σ₁σ₂ = |ξ₁ ∧ ξ₂|`.
    pub fn stretches(&self) -> (f64, f64) {
        let s = self.norm_sq();
        let a = self.area_factor();
        let disc = (s * s - 4.0 * a * a).max(0.0).sqrt();
        let l1 = 0.5 * (s + disc);
        let s1 = l1.sqrt();
        let s2 = if s1 > 0.0 { a / s1 } else { 0.0 };
        (s1, s2.min(s1))
    }

    pub fn max_abs_diff(&self, other: &Mat32) -> f64 {
        self.to_row_major()
            .iter()
            .zip(other.to_row_major())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Add for Mat32 {
    type Output = Mat32;
    fn add(self, o: Mat32) -> Mat32 {
        Mat32::from_cols(self.cols[0] + o.cols[0], self.cols[1] + o.cols[1])
    }
}

impl Sub for Mat32 {
    type Output = Mat32;
    fn sub(self, o: Mat32) -> Mat32 {
        Mat32::from_cols(self.cols[0] - o.cols[0], self.cols[1] - o.cols[1])
    }
}

impl Mul<f64> for Mat32 {
    type Output = Mat32;
    fn mul(self, s: f64) -> Mat32 {
        Mat32::from_cols(self.cols[0] * s, self.cols[1] * s)
    }
}

/// A 3×3 deformation gradient stored by columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat33 {
    pub cols: [Vec3; 3],
}

impl Mat33 {
    pub const IDENTITY: Mat33 = Mat33 {
        cols: [Vec3::E1, Vec3::E2, Vec3::E3],
    };

    pub const fn from_cols(c1: Vec3, c2: Vec3, c3: Vec3) -> Self {
        Mat33 { cols: [c1, c2, c3] }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Mat33::from_cols(Vec3::E1 * a, Vec3::E2 * b, Vec3::E3 * c)
    }

    /// Cofactor expansion along the first row.
    pub fn det(&self) -> f64 {
        det3(self)
    }

    pub fn norm_sq(&self) -> f64 {
        self.cols.iter().map(Vec3::norm_sq).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Gradient of `det` with respect to the entries, laid out by columns:
    /// `∂det/∂F_{·k}` is the cross product of the other two columns.
    pub fn det_gradient(&self) -> Mat33 {
        let [a, b, c] = self.cols;
        Mat33::from_cols(cross(&b, &c), cross(&c, &a), cross(&a, &b))
    }

    /// First two columns.
    pub fn membrane_part(&self) -> Mat32 {
        Mat32::from_cols(self.cols[0], self.cols[1])
    }
}

/// Determinant by the rule of Sarrus, written independently of `cross` so the
/// identity `det(ξ₁|ξ₂|ζ) = ⟨ξ₁∧ξ₂, ζ⟩` can be checked against it.
pub fn det3(f: &Mat33) -> f64 {
    // m[r][c]
    let m = |r: usize, c: usize| f.cols[c].0[r];
    m(0, 0) * m(1, 1) * m(2, 2) + m(0, 1) * m(1, 2) * m(2, 0) + m(0, 2) * m(1, 0) * m(2, 1)
        - m(0, 2) * m(1, 1) * m(2, 0)
        - m(0, 0) * m(1, 2) * m(2, 1)
        - m(0, 1) * m(1, 0) * m(2, 2)
}

/// An energy value in `ℝ ∪ {+∞}`.
///
/// Densities are nonnegative; loaded totals may be negative. `+∞` absorbs
/// addition and sorts above every finite value, so `min` and `<` behave.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtValue {
    Finite(f64),
    Infinite,
}

impl ExtValue {
    pub const ZERO: ExtValue = ExtValue::Finite(0.0);

    /// Maps non-finite floats (including NaN) to `+∞`.
    pub fn from_f64(x: f64) -> Self {
        if x.is_finite() {
            ExtValue::Finite(x)
        } else {
            ExtValue::Infinite
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtValue::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtValue::Finite(x) => Some(x),
            ExtValue::Infinite => None,
        }
    }

    /// The value as a float, with `+∞` mapped to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn min(self, other: ExtValue) -> ExtValue {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: ExtValue) -> ExtValue {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Scaling by a nonnegative weight, with the measure-theory convention
    /// `0 · ∞ = 0`.
    pub fn scale(self, w: f64) -> ExtValue {
        debug_assert!(w >= 0.0);
        match self {
            ExtValue::Finite(x) => ExtValue::Finite(w * x),
            ExtValue::Infinite if w == 0.0 => ExtValue::ZERO,
            ExtValue::Infinite => ExtValue::Infinite,
        }
    }
}

impl Default for ExtValue {
    fn default() -> Self {
        ExtValue::ZERO
    }
}

impl From<f64> for ExtValue {
    fn from(x: f64) -> Self {
        ExtValue::from_f64(x)
    }
}

impl Add for ExtValue {
    type Output = ExtValue;
    fn add(self, o: ExtValue) -> ExtValue {
        match (self, o) {
            (ExtValue::Finite(a), ExtValue::Finite(b)) => ExtValue::from_f64(a + b),
            _ => ExtValue::Infinite,
        }
    }
}

impl Add<f64> for ExtValue {
    type Output = ExtValue;
    fn add(self, o: f64) -> ExtValue {
        self + ExtValue::from_f64(o)
    }
}

impl AddAssign for ExtValue {
    fn add_assign(&mut self, o: ExtValue) {
        *self = *self + o;
    }
}

impl Sum for ExtValue {
    fn sum<I: Iterator<Item = ExtValue>>(iter: I) -> ExtValue {
        iter.fold(ExtValue::ZERO, |acc, x| acc + x)
    }
}

impl PartialOrd for ExtValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Eq for ExtValue {}

impl Ord for ExtValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtValue::Finite(a), ExtValue::Finite(b)) => a.total_cmp(b),
            (ExtValue::Finite(_), ExtValue::Infinite) => Ordering::Less,
            (ExtValue::Infinite, ExtValue::Finite(_)) => Ordering::Greater,
            (ExtValue::Infinite, ExtValue::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtValue::Finite(x) => write!(f, "{x}"),
            ExtValue::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for ExtValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtValue::Finite(x) => s.serialize_f64(*x),
            ExtValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(ExtValue::from_f64(x)),
            Repr::Str(s) if s == "inf" || s == "+inf" => Ok(ExtValue::Infinite),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad energy value {s:?}"))),
        }
    }
}
