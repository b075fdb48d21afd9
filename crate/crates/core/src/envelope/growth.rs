use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::laminate::Split;
use super::table::EnvelopeTable;
use crate::energy::{random_vec3, EnergyModel};
use crate::error::Result;
use crate::fiber::w0_growth_constant;
use crate::tensor::{Mat32, Vec3};

/// `ZW₀(ξ) ≤ c (1 + |ξ|^p)` for every `ξ`, through the chain
/// `c̄₁ → r₁ = c̄₁ 2^{2p+1} → c = r₁ 2^{p+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthCertificate {
    pub c_bar1: f64,
    pub r1: f64,
    pub c: f64,
    pub p: f64,
}

impl GrowthCertificate {
    pub fn bound(&self, xi: &Mat32) -> f64 {
        self.c * (1.0 + xi.norm().powf(self.p))
    }
}

pub fn growth_certificate(model: &EnergyModel) -> Result<GrowthCertificate> {
    let p = model.p();
    let c_bar1 = w0_growth_constant(model, 1.0)?;
    let r1 = c_bar1 * 2f64.powf(2.0 * p + 1.0);
    Ok(GrowthCertificate {
        c_bar1,
        r1,
        c: r1 * 2f64.powf(p + 1.0),
        p,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableAudit {
    pub entries: usize,
    pub growth_violations: usize,
    /// `max value / (c (1 + |ξ|^p))`.
    pub max_growth_ratio: f64,
    /// Entries above `W₀ + 1e−9`.
    pub w0_violations: usize,
    /// Entries below `|ξ|^p − 1e−9`.
    pub floor_violations: usize,
    /// Entries whose value increases with lamination depth.
    pub depth_violations: usize,
    pub infinite_entries: usize,
}

impl TableAudit {
    pub fn passed(&self) -> bool {
        self.growth_violations == 0
            && self.w0_violations == 0
            && self.floor_violations == 0
            && self.depth_violations == 0
            && self.infinite_entries == 0
    }
}

pub fn audit_table(table: &EnvelopeTable, cert: &GrowthCertificate) -> TableAudit {
    let mut audit = TableAudit {
        entries: table.entries.len(),
        growth_violations: 0,
        max_growth_ratio: 0.0,
        w0_violations: 0,
        floor_violations: 0,
        depth_violations: 0,
        infinite_entries: 0,
    };
    for e in &table.entries {
        let Some(v) = e.value.finite() else {
            audit.infinite_entries += 1;
            continue;
        };
        let ratio = v / cert.bound(&e.xi);
        audit.max_growth_ratio = audit.max_growth_ratio.max(ratio);
        if ratio > 1.0 {
            audit.growth_violations += 1;
        }
        if e.w0.is_finite() && v > e.w0.to_f64() + 1e-9 {
            audit.w0_violations += 1;
        }
        if v < e.xi.norm().powf(cert.p) - 1e-9 {
            audit.floor_violations += 1;
        }
        if (1..=table.depth).any(|d| e.value_at_depth(d) > e.value_at_depth(d - 1)) {
            audit.depth_violations += 1;
        }
    }
    audit
}

/// Where probe base points are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ProbeRegion {
    /// Entries uniform in `[−half_width, half_width]`.
    Box { half_width: f64 },
    /// `(u | t u + η w)` with `η ≤ max_offset`: close to rank one.
    NearRankDeficient { half_width: f64, max_offset: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeParams {
    pub samples: usize,
    pub region: ProbeRegion,
    /// Rank-one segment length `s ≤ max_step`.
    pub max_step: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeWitness {
    pub xi: Mat32,
    pub split: Split,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub samples_used: usize,
    /// Samples dropped because some value was undefined or infinite.
    pub skipped: usize,
    /// `max f(ξ) − λ f(ξ⁺) − (1 − λ) f(ξ⁻)`.
    pub max_violation: f64,
    /// The same divided by the chord value `λ f(ξ⁺) + (1 − λ) f(ξ⁻)`.
    pub max_relative: f64,
    pub witness: Option<ProbeWitness>,
}

fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = random_vec3(rng, 1.0);
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

/// Samples rank-one segments and records the worst failure of
/// `f(λξ⁺ + (1−λ)ξ⁻) ≤ λf(ξ⁺) + (1−λ)f(ξ⁻)`.
pub fn rank_one_convexity_probe<F: Fn(&Mat32) -> Option<f64>>(f: F, params: &ProbeParams) -> ProbeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut report = ProbeReport {
        samples_used: 0,
        skipped: 0,
        max_violation: f64::NEG_INFINITY,
        max_relative: f64::NEG_INFINITY,
        witness: None,
    };
    for _ in 0..params.samples {
        let xi = match params.region {
            ProbeRegion::Box { half_width } => {
                Mat32::from_row_major(std::array::from_fn(|_| rng.random_range(-half_width..=half_width)))
            }
            ProbeRegion::NearRankDeficient { half_width, max_offset } => {
                let u = random_vec3(&mut rng, half_width);
                let t = rng.random_range(-1.0..1.0);
                let w = random_unit(&mut rng);
                let eta = rng.random_range(0.0..max_offset);
                let mut cols = [u, u * t + w * eta];
                if rng.random_bool(0.5) {
                    cols.swap(0, 1);
                }
                Mat32 { cols }
            }
        };
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let split = Split {
            lambda: rng.random_range(0.05..0.95),
            a: random_unit(&mut rng),
            n: [theta.cos(), theta.sin()],
            s: rng.random_range(0.0..params.max_step),
        };
        let (p, m) = split.endpoints(&xi);
        let (Some(fx), Some(fp), Some(fm)) = (f(&xi), f(&p), f(&m)) else {
            report.skipped += 1;
            continue;
        };
        if !(fx.is_finite() && fp.is_finite() && fm.is_finite()) {
            report.skipped += 1;
            continue;
        }
        report.samples_used += 1;
        let chord = split.lambda * fp + (1.0 - split.lambda) * fm;
        let violation = fx - chord;
        let relative = violation / chord.abs().max(f64::MIN_POSITIVE);
        if relative > report.max_relative {
            report.max_relative = relative;
        }
        if violation > report.max_violation {
            report.max_violation = violation;
            report.witness = Some(ProbeWitness { xi, split, violation });
        }
    }
    report
}
