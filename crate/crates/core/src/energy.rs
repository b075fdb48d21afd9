//! Stored-energy densities `W(F) = h(|det F|) + |F|^p` with pluggable barrier
//! `h`, and a sampler that checks the growth conditions empirically.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{cross, ExtValue, Mat33, Vec3};

/// A barrier `h: [0,∞) → (0,+∞]` with `h(t) = +∞` iff `t = 0`.
pub trait Barrier: Send + Sync + fmt::Debug {
    fn eval(&self, t: f64) -> ExtValue;

    /// `h'(t)` for `t > 0`.
    fn derivative(&self, t: f64) -> f64;

    /// A constant `r(δ) < ∞` with `h(t) ≤ r(δ)` for every `t ≥ δ`.
    fn plateau(&self, delta: f64) -> f64;

    fn name(&self) -> String;
}

/// `h(t) = 1/t`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Reciprocal;

impl Barrier for Reciprocal {
    fn eval(&self, t: f64) -> ExtValue {
        if t > 0.0 {
            ExtValue::from_f64(1.0 / t)
        } else {
            ExtValue::Infinite
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        -1.0 / (t * t)
    }

    fn plateau(&self, delta: f64) -> f64 {
        1.0 / delta
    }

    fn name(&self) -> String {
        "reciprocal".into()
    }
}

/// `h(t) = max(−ln t, 0) + 1/t`, decreasing on `(0, ∞)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ShiftedLog;

impl Barrier for ShiftedLog {
    fn eval(&self, t: f64) -> ExtValue {
        if t > 0.0 {
            ExtValue::from_f64((-t.ln()).max(0.0) + 1.0 / t)
        } else {
            ExtValue::Infinite
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        let log_part = if t < 1.0 { -1.0 / t } else { 0.0 };
        log_part - 1.0 / (t * t)
    }

    fn plateau(&self, delta: f64) -> f64 {
        (-delta.ln()).max(0.0) + 1.0 / delta
    }

    fn name(&self) -> String {
        "shifted-log".into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierKind {
    Reciprocal,
    ShiftedLog,
}

impl BarrierKind {
    pub fn build(self) -> Arc<dyn Barrier> {
        match self {
            BarrierKind::Reciprocal => Arc::new(Reciprocal),
            BarrierKind::ShiftedLog => Arc::new(ShiftedLog),
        }
    }
}

/// Serializable description of a model in the family, e.g. `reciprocal:p=2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub barrier: BarrierKind,
    pub p: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            barrier: BarrierKind::Reciprocal,
            p: 2.0,
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let barrier = match parts.next().map(str::trim) {
            Some("reciprocal") => BarrierKind::Reciprocal,
            Some("shifted-log") | Some("log") => BarrierKind::ShiftedLog,
            other => {
                return Err(Error::param(
                    "model",
                    format!("unknown barrier {other:?}, expected reciprocal or shifted-log"),
                ))
            }
        };
        let mut p = 2.0;
        for kv in parts {
            match kv.split_once('=') {
                Some(("p", v)) => {
                    p = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::param("model", format!("bad exponent {v:?}")))?
                }
                _ => return Err(Error::param("model", format!("unknown model option {kv:?}"))),
            }
        }
        Ok(ModelSpec { barrier, p })
    }
}

/// Constants of the lower bound `W(F) ≥ C |F|^p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coercivity {
    pub constant: f64,
    pub exponent: f64,
}

/// Anything that can act as a stored-energy density on 3×3 gradients.
pub trait StoredEnergy: Send + Sync {
    fn energy(&self, f: &Mat33) -> ExtValue;

    fn coercivity(&self) -> Coercivity;

    /// The model-family view, when the density has the form `h(|det|) + |·|^p`.
    fn as_model(&self) -> Option<&EnergyModel> {
        None
    }
}

/// `W(F) = h(|det F|) + |F|^p`, Frobenius norm.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    barrier: Arc<dyn Barrier>,
    p: f64,
}

impl EnergyModel {
    pub fn new(barrier: Arc<dyn Barrier>, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::param("p", format!("exponent must be > 1, got {p}")));
        }
        Ok(EnergyModel { barrier, p })
    }

    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        EnergyModel::new(spec.barrier.build(), spec.p)
    }

    /// `h(t) = 1/t` with exponent `p`.
    pub fn reciprocal(p: f64) -> Result<Self> {
        EnergyModel::new(Arc::new(Reciprocal), p)
    }

    pub fn shifted_log(p: f64) -> Result<Self> {
        EnergyModel::new(Arc::new(ShiftedLog), p)
    }

    pub fn barrier(&self) -> &dyn Barrier {
        self.barrier.as_ref()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `|F|^p` from the squared norm.
    #[inline]
    pub fn power_of_norm_sq(&self, norm_sq: f64) -> f64 {
        if self.p == 2.0 {
            norm_sq
        } else {
            norm_sq.powf(0.5 * self.p)
        }
    }

    pub fn eval(&self, f: &Mat33) -> ExtValue {
        self.barrier.eval(f.det().abs()) + self.power_of_norm_sq(f.norm_sq())
    }

    /// Gradient `∂W/∂F` (by columns); `None` where `det F = 0`.
    pub fn gradient(&self, f: &Mat33) -> Option<Mat33> {
        let det = f.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dh = self.barrier.derivative(det.abs()) * det.signum();
        let cof = f.det_gradient();
        let ns = f.norm_sq();
        let c = if self.p == 2.0 {
            2.0
        } else {
            self.p * ns.powf(0.5 * self.p - 1.0)
        };
        let mut g = Mat33::default();
        for k in 0..3 {
            g.cols[k] = cof.cols[k] * dh + f.cols[k] * c;
        }
        Some(g)
    }

    /// Empirical check of coercivity, the `(C₂)` witness and the `(C₃)`
    /// symmetry on random and near-singular samples.
    pub fn check_conditions(
        &self,
        sample_count: usize,
        deltas: &[f64],
        seed: u64,
    ) -> Result<ConditionReport> {
        if sample_count == 0 {
            return Err(Error::param("sample_count", "must be at least 1"));
        }
        if let Some(d) = deltas.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::param("deltas", format!("δ must be positive, got {d}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples: Vec<Mat33> = (0..sample_count).map(|_| random_mat33(&mut rng, 3.0)).collect();
        // near-singular samples A + εB with det A = 0
        let mut singular = Vec::new();
        for _ in 0..sample_count.div_ceil(6).max(1) {
            let a = random_singular(&mut rng);
            singular.push(a);
            let b = random_mat33(&mut rng, 1.0);
            for k in 1..=6 {
                let eps = 10f64.powi(-k);
                let mut f = a;
                for c in 0..3 {
                    f.cols[c] = a.cols[c] + b.cols[c] * eps;
                }
                samples.push(f);
            }
        }
        singular.push(Mat33::from_cols(Vec3::E1, Vec3::E2, Vec3::E1 + Vec3::E2));

        let mut per_delta: Vec<DeltaReport> = deltas
            .iter()
            .map(|&delta| DeltaReport {
                delta,
                samples: 0,
                empirical_c: 0.0,
                witness_bound: self.barrier.plateau(delta) + 1.0,
                witness_violations: 0,
            })
            .collect();
        let mut min_coercivity_ratio = f64::INFINITY;
        let mut symmetry_defect: f64 = 0.0;
        for f in &samples {
            let w = self.eval(f);
            let np = self.power_of_norm_sq(f.norm_sq());
            if let Some(w) = w.finite() {
                if np > 0.0 {
                    min_coercivity_ratio = min_coercivity_ratio.min(w / np);
                }
            }
            let det = f.det().abs();
            for d in per_delta.iter_mut().filter(|d| det >= d.delta) {
                d.samples += 1;
                let ratio = w.to_f64() / (1.0 + np);
                d.empirical_c = d.empirical_c.max(ratio);
                if ratio > d.witness_bound {
                    d.witness_violations += 1;
                }
            }
            let mut flipped = *f;
            flipped.cols[2] = -f.cols[2];
            let defect = match (w, self.eval(&flipped)) {
                (ExtValue::Finite(a), ExtValue::Finite(b)) => (a - b).abs(),
                (ExtValue::Infinite, ExtValue::Infinite) => 0.0,
                _ => f64::INFINITY,
            };
            symmetry_defect = symmetry_defect.max(defect);
        }
        let singular_infinite = singular.iter().filter(|f| !self.eval(f).is_finite()).count();
        Ok(ConditionReport {
            per_delta,
            singular_samples: singular.len(),
            singular_infinite,
            symmetry_defect,
            min_coercivity_ratio,
        })
    }
}

impl StoredEnergy for EnergyModel {
    fn energy(&self, f: &Mat33) -> ExtValue {
        self.eval(f)
    }

    fn coercivity(&self) -> Coercivity {
        Coercivity {
            constant: 1.0,
            exponent: self.p,
        }
    }

    fn as_model(&self) -> Option<&EnergyModel> {
        Some(self)
    }
}

/// Wraps an arbitrary closure as a stored energy; used for densities outside
/// the model family.
pub struct FnEnergy<F> {
    pub f: F,
    pub coercivity: Coercivity,
}

impl<F: Fn(&Mat33) -> ExtValue + Send + Sync> StoredEnergy for FnEnergy<F> {
    fn energy(&self, f: &Mat33) -> ExtValue {
        (self.f)(f)
    }

    fn coercivity(&self) -> Coercivity {
        self.coercivity
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaReport {
    pub delta: f64,
    pub samples: usize,
    /// `max W(F) / (1 + |F|^p)` over samples with `|det F| ≥ δ`.
    pub empirical_c: f64,
    /// `r(δ) + 1`.
    pub witness_bound: f64,
    pub witness_violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub per_delta: Vec<DeltaReport>,
    pub singular_samples: usize,
    pub singular_infinite: usize,
    pub symmetry_defect: f64,
    /// `min W(F) / |F|^p`; at least 1 for the model family.
    pub min_coercivity_ratio: f64,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.singular_infinite == self.singular_samples
            && self.symmetry_defect == 0.0
            && self.min_coercivity_ratio >= 1.0 - 1e-12
            && self.per_delta.iter().all(|d| d.witness_violations == 0)
    }
}

pub(crate) fn random_vec3<R: Rng>(rng: &mut R, half_width: f64) -> Vec3 {
    Vec3(std::array::from_fn(|_| rng.random_range(-half_width..half_width)))
}

fn random_mat33<R: Rng>(rng: &mut R, half_width: f64) -> Mat33 {
    Mat33::from_cols(
        random_vec3(rng, half_width),
        random_vec3(rng, half_width),
        random_vec3(rng, half_width),
    )
}

fn random_singular<R: Rng>(rng: &mut R) -> Mat33 {
    // small integer entries keep every product exact, so det is exactly 0
    let mut int_vec = || Vec3(std::array::from_fn(|_| rng.random_range(-3i32..=3) as f64));
    let a = int_vec();
    let b = int_vec();
    let (s, t) = (rng.random_range(-2i32..=2) as f64, rng.random_range(-2i32..=2) as f64);
    let mut cols = [a, b, a * s + b * t];
    cols.swap(2, rng.random_range(0..3));
    debug_assert_eq!(cross(&cols[0], &cols[1]).dot(&cols[2]), 0.0);
    Mat33 { cols }
}
