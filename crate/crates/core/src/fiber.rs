//! The reduced membrane density `W₀(ξ) = inf_ζ W(ξ | ζ)`.
//!
//! For the model family `det(ξ|ζ) = ⟨ξ₁∧ξ₂, ζ⟩`, so only the component of `ζ`
//! along the unit normal `ν` of `ξ` enters the barrier while every tangential
//! component raises `|ζ|`. The infimum is then a 1D problem in `t = ⟨ν, ζ⟩`:
//!
//! ```text
//! W₀(ξ) = min_{t ≥ 0} h(t |ξ₁∧ξ₂|) + (|ξ|² + t²)^{p/2}
//! ```
//!
//! This reduction is checked against [`w0_bruteforce`], a full 3D grid search
//! that only calls the energy as a black box.

use std::sync::Arc;

use serde::Serialize;

use crate::energy::{EnergyModel, StoredEnergy};
use crate::error::{Error, Result};
use crate::optim::{golden_section, nelder_mead3};
use crate::tensor::{ExtValue, Mat32, Vec3, RANK_TOL};

/// A minimizing third column and the value it attains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiberMinimum {
    pub value: ExtValue,
    /// Normal coordinate `t = ⟨ν, ζ⟩` of the minimizer (0 when infeasible).
    pub t: f64,
    pub zeta: Vec3,
}

impl FiberMinimum {
    const INFEASIBLE: FiberMinimum = FiberMinimum {
        value: ExtValue::Infinite,
        t: 0.0,
        zeta: Vec3::ZERO,
    };
}

/// The 1D normal-direction profile `g(t) = h(t a) + (|ξ|² + t²)^{p/2}`.
pub(crate) fn normal_profile(model: &EnergyModel, a: f64, xi_sq: f64, t: f64) -> f64 {
    model.barrier().eval(t * a).to_f64() + model.power_of_norm_sq(xi_sq + t * t)
}

/// Minimizes the normal profile over `t ≥ t_min`. Assumes unimodality
/// (true for the shipped barriers).
pub(crate) fn minimize_profile(model: &EnergyModel, a: f64, xi_sq: f64, t_min: f64) -> (f64, f64) {
    let g = |t: f64| normal_profile(model, a, xi_sq, t);
    // coercivity bracket: g(t*) ≤ g(t₀) and g(t) ≥ (|ξ|² + t²)^{p/2}
    let t0 = t_min.max(1.0);
    let g0 = g(t0);
    let t_hi = (g0.powf(2.0 / model.p()) - xi_sq).max(0.0).sqrt().max(t0);
    golden_section(g, t_min, t_hi, 1e-12)
}

/// `W₀(ξ)` for the model family by bracketed 1D minimization along the normal.
pub fn w0_closed_form(model: &EnergyModel, xi: &Mat32) -> FiberMinimum {
    let c = xi.cross();
    let a = c.norm();
    if a < RANK_TOL {
        return FiberMinimum::INFEASIBLE;
    }
    let nu = c * (1.0 / a);
    let (t, value) = minimize_profile(model, a, xi.norm_sq(), 0.0);
    FiberMinimum {
        value: ExtValue::from_f64(value),
        t,
        zeta: nu * t,
    }
}

/// General-purpose `W₀` for densities outside the model family: multi-start
/// Nelder–Mead in `ζ ∈ ℝ³`.
pub fn w0_numeric(energy: &dyn StoredEnergy, xi: &Mat32) -> FiberMinimum {
    let f = |z: &Vec3| energy.energy(&xi.with_third(*z)).to_f64();
    let normal = xi.cross().normalized();
    let mut starts: Vec<Vec3> = Vec::new();
    if let Some(nu) = normal {
        for s in [0.5, 1.0, 2.0] {
            starts.push(nu * s);
            starts.push(-nu * s);
        }
    }
    starts.extend([Vec3::E1, Vec3::E2, Vec3::E3]);
    let mut best = FiberMinimum::INFEASIBLE;
    for s in starts {
        if !f(&s).is_finite() {
            continue;
        }
        let (z, v) = nelder_mead3(f, s, 0.25, 4000, 1e-15);
        let v = ExtValue::from_f64(v);
        if v < best.value {
            best = FiberMinimum {
                value: v,
                t: normal.map_or(0.0, |n| n.dot(&z)),
                zeta: z,
            };
        }
    }
    best
}

/// Brute-force oracle: the minimum of `W(ξ|ζ)` over a uniform
/// `grid_n³` grid restricted to the ball `|ζ| ≤ R`.
///
/// `R` comes from coercivity: for any feasible probe `ζ₀`,
/// `C(|ξ|² + |ζ|²)^{p/2} ≤ W(ξ|ζ) ≤ W(ξ|ζ₀)` at a minimizer, so
/// `R² = (W(ξ|ζ₀)/C)^{2/p} − |ξ|²`. Grids with `grid_n − 1` dividing
/// each other are nested, so refinement never increases the result.
pub fn w0_bruteforce(energy: &dyn StoredEnergy, xi: &Mat32, grid_n: usize) -> ExtValue {
    assert!(grid_n >= 2, "grid_n must be at least 2");
    let co = energy.coercivity();
    let xi_sq = xi.norm_sq();
    let mut probes: Vec<Vec3> = vec![Vec3::E1, Vec3::E2, Vec3::E3];
    if let Some(nu) = xi.cross().normalized() {
        probes.extend((-6..=6).map(|k| nu * 2f64.powf(k as f64 / 2.0)));
    }
    let best_probe = probes
        .iter()
        .map(|z| energy.energy(&xi.with_third(*z)))
        .min()
        .unwrap_or(ExtValue::Infinite);
    let Some(w_probe) = best_probe.finite() else {
        return ExtValue::Infinite;
    };
    let r_sq = (w_probe / co.constant).powf(2.0 / co.exponent) - xi_sq;
    let r = r_sq.max(0.0).sqrt();
    let denom = (grid_n - 1) as f64;
    let node = |i: usize| -r + 2.0 * r * (i as f64 / denom);
    let ball = r * r * (1.0 + 1e-12);
    let mut best = ExtValue::Infinite;
    for i in 0..grid_n {
        let x = node(i);
        for j in 0..grid_n {
            let y = node(j);
            if x * x + y * y > ball {
                continue;
            }
            for k in 0..grid_n {
                let z = node(k);
                if x * x + y * y + z * z > ball {
                    continue;
                }
                let w = energy.energy(&xi.with_third(Vec3::new(x, y, z)));
                if w < best {
                    best = w;
                }
            }
        }
    }
    best
}

/// `c̄_δ = r(δ) + 1`: with the unit normal as witness,
/// `|ξ₁∧ξ₂| ≥ δ ⇒ W₀(ξ) ≤ h(|ξ₁∧ξ₂|) + |(ξ|ν)|^p ≤ c̄_δ (1 + |ξ|^p)`.
///
/// The middle step uses `(|ξ|² + 1)^{p/2} ≤ 2^{p/2−1}(|ξ|^p + 1)` for `p ≥ 2`,
/// so for `p > 2` the constant is scaled by `2^{p/2−1}`.
pub fn w0_growth_constant(model: &EnergyModel, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::param("delta", format!("δ must be positive, got {delta}")));
    }
    let r = model.barrier().plateau(delta);
    let norm_factor = if model.p() > 2.0 {
        2f64.powf(0.5 * model.p() - 1.0)
    } else {
        1.0
    };
    Ok((r + 1.0) * norm_factor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiberStrategy {
    ClosedForm,
    Numeric,
}

/// `W₀` bound to a particular stored energy.
#[derive(Clone)]
pub struct ReducedDensity {
    energy: Arc<dyn StoredEnergy>,
    strategy: FiberStrategy,
}

impl ReducedDensity {
    /// Uses the closed form when `energy` belongs to the model family and
    /// the numeric search otherwise.
    pub fn new(energy: Arc<dyn StoredEnergy>) -> Self {
        let strategy = if energy.as_model().is_some() {
            FiberStrategy::ClosedForm
        } else {
            FiberStrategy::Numeric
        };
        ReducedDensity { energy, strategy }
    }

    pub fn from_model(model: EnergyModel) -> Self {
        ReducedDensity::new(Arc::new(model))
    }

    pub fn numeric(energy: Arc<dyn StoredEnergy>) -> Self {
        ReducedDensity {
            energy,
            strategy: FiberStrategy::Numeric,
        }
    }

    pub fn strategy(&self) -> FiberStrategy {
        self.strategy
    }

    pub fn energy(&self) -> &dyn StoredEnergy {
        self.energy.as_ref()
    }

    pub fn model(&self) -> Option<&EnergyModel> {
        self.energy.as_model()
    }

    /// `(C, p)` with `W₀(ξ) ≥ C|ξ|^p`.
    pub fn coercivity(&self) -> (f64, f64) {
        let c = self.energy.coercivity();
        (c.constant, c.exponent)
    }

    pub fn minimizer(&self, xi: &Mat32) -> FiberMinimum {
        match (self.strategy, self.energy.as_model()) {
            (FiberStrategy::ClosedForm, Some(m)) => w0_closed_form(m, xi),
            _ => w0_numeric(self.energy.as_ref(), xi),
        }
    }

    pub fn eval(&self, xi: &Mat32) -> ExtValue {
        self.minimizer(xi).value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{Coercivity, FnEnergy};
    use crate::tensor::Mat33;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> EnergyModel {
        EnergyModel::reciprocal(2.0).unwrap()
    }

    /// h = 1/t, p = 2: `g(t) = 1/(ta) + |ξ|² + t²`, stationary at
    /// `t³ = 1/(2a)`, giving `|ξ|² + 3 (2a)^{-2/3}`.
    fn reciprocal_p2_exact(xi: &Mat32) -> f64 {
        let a = xi.area_factor();
        xi.norm_sq() + 3.0 * (2.0 * a).powf(-2.0 / 3.0)
    }

    #[test]
    fn flat_embedding_value_and_witness() {
        let m = w0_closed_form(&model(), &Mat32::identity_embedding());
        let expected = 2.0 + 3.0 * 2f64.powf(-2.0 / 3.0);
        assert!((m.value.to_f64() - expected).abs() < 1e-12);
        assert!((m.value.to_f64() - 3.889_881).abs() < 1e-6);
        assert!((m.t - 2f64.powf(-1.0 / 3.0)).abs() < 1e-7);
        assert!((m.zeta - Vec3::E3 * m.t).norm() < 1e-15);
    }

    #[test]
    fn flat_embedding_against_fine_1d_grid() {
        // 10⁶-point grid on (0, 4]
        let n = 1_000_000;
        let best = (1..=n)
            .map(|i| {
                let t = 4.0 * i as f64 / n as f64;
                1.0 / t + t * t
            })
            .fold(f64::INFINITY, f64::min);
        let m = w0_closed_form(&model(), &Mat32::identity_embedding());
        assert!((m.value.to_f64() - (2.0 + best)).abs() < 1e-9);
    }

    #[test]
    fn doubled_embedding() {
        let xi = Mat32::diagonal(2.0, 2.0);
        let v = w0_closed_form(&model(), &xi).value.to_f64();
        assert!((v - 8.75).abs() < 1e-8, "{v}");
        let bf = w0_bruteforce(&model(), &xi, 201).to_f64();
        assert!((v - bf).abs() < 1e-3, "{v} vs {bf}");
    }

    #[test]
    fn rank_deficient_is_infinite() {
        let c = Vec3::new(0.3, -0.2, 1.0);
        let xi = Mat32::from_cols(c, c * 2.0);
        assert_eq!(w0_closed_form(&model(), &xi).value, ExtValue::Infinite);
        assert_eq!(w0_bruteforce(&model(), &xi, 11), ExtValue::Infinite);
        assert_eq!(w0_closed_form(&model(), &Mat32::ZERO).value, ExtValue::Infinite);
    }

    #[test]
    fn bruteforce_agrees_on_embedding() {
        let bf = w0_bruteforce(&model(), &Mat32::identity_embedding(), 201);
        let cf = w0_closed_form(&model(), &Mat32::identity_embedding()).value;
        assert!((bf.to_f64() - cf.to_f64()).abs() < 1e-3);
        assert!(bf >= cf);
    }

    #[test]
    fn bruteforce_tiny_grid_can_be_empty() {
        // the corners of a 2-point grid lie outside the search ball
        assert_eq!(w0_bruteforce(&model(), &Mat32::identity_embedding(), 2), ExtValue::Infinite);
    }

    #[test]
    fn bruteforce_nested_refinement_is_monotone() {
        let xi = Mat32::from_cols(Vec3::new(1.0, 0.2, -0.4), Vec3::new(0.3, 0.9, 0.5));
        let coarse = w0_bruteforce(&model(), &xi, 101);
        let fine = w0_bruteforce(&model(), &xi, 401);
        assert!(fine.to_f64() <= coarse.to_f64() + 1e-12);
    }

    #[test]
    fn growth_constants() {
        let m = model();
        assert_eq!(w0_growth_constant(&m, 1.0).unwrap(), 2.0);
        assert!((w0_growth_constant(&m, 0.1).unwrap() - 11.0).abs() < 1e-12);
        assert!(w0_growth_constant(&m, 0.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let delta = 0.5;
        let c = w0_growth_constant(&m, delta).unwrap();
        let mut checked = 0;
        while checked < 1000 {
            let xi = Mat32::from_row_major(std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
            if xi.area_factor() < delta {
                continue;
            }
            checked += 1;
            let w = w0_closed_form(&m, &xi).value.to_f64();
            assert!(w <= c * (1.0 + xi.norm_sq()));
        }
    }

    #[test]
    fn growth_constant_for_p_above_two() {
        let m = EnergyModel::shifted_log(3.0).unwrap();
        let c = w0_growth_constant(&m, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 500 {
            let xi = Mat32::from_row_major(std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
            if xi.area_factor() < 1.0 {
                continue;
            }
            checked += 1;
            let w = w0_closed_form(&m, &xi).value.to_f64();
            assert!(w <= c * (1.0 + xi.norm().powf(3.0)));
        }
    }

    #[test]
    fn barrier_blow_up_along_path() {
        let m = model();
        let path = |s: f64| Mat32::from_cols(Vec3::E1, Vec3::E3 * s + Vec3::E1 * (1.0 - s));
        let mut last = 0.0;
        for k in 0..60 {
            let s = 0.1 * 0.7f64.powi(k);
            let v = w0_closed_form(&m, &path(s)).value.to_f64();
            assert!(v > last, "not increasing at s = {s}");
            last = v;
        }
        assert_eq!(w0_closed_form(&m, &path(0.0)).value, ExtValue::Infinite);
    }

    #[test]
    fn numeric_matches_closed_form_and_falls_back() {
        let m = model();
        let blackbox = FnEnergy {
            f: move |f: &Mat33| m.eval(f),
            coercivity: Coercivity { constant: 1.0, exponent: 2.0 },
        };
        let density = ReducedDensity::new(Arc::new(blackbox));
        assert_eq!(density.strategy(), FiberStrategy::Numeric);
        let xi = Mat32::from_cols(Vec3::new(1.0, 0.2, -0.4), Vec3::new(0.3, 0.9, 0.5));
        let num = density.eval(&xi).to_f64();
        let exact = reciprocal_p2_exact(&xi);
        assert!((num - exact).abs() < 1e-8, "{num} vs {exact}");
        let closed = ReducedDensity::from_model(model());
        assert_eq!(closed.strategy(), FiberStrategy::ClosedForm);
    }

    #[test]
    fn general_exponent_matches_numeric() {
        let m = EnergyModel::shifted_log(3.0).unwrap();
        let xi = Mat32::from_cols(Vec3::new(0.7, 0.1, 0.0), Vec3::new(-0.2, 0.5, 0.3));
        let cf = w0_closed_form(&m, &xi).value.to_f64();
        let num = w0_numeric(&m, &xi).value.to_f64();
        assert!((cf - num).abs() < 1e-8, "{cf} vs {num}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closed_form_matches_stationary_point(e in prop::array::uniform6(-2.0f64..2.0)) {
            let xi = Mat32::from_row_major(e);
            prop_assume!(xi.area_factor() > 1e-3);
            let v = w0_closed_form(&model(), &xi).value.to_f64();
            let exact = reciprocal_p2_exact(&xi);
            prop_assert!((v - exact).abs() <= 1e-10 * exact);
        }

        #[test]
        fn coercive_and_below_probes(e in prop::array::uniform6(-2.0f64..2.0), z in prop::array::uniform3(-3.0f64..3.0)) {
            let xi = Mat32::from_row_major(e);
            prop_assume!(xi.area_factor() > 1e-6);
            let v = w0_closed_form(&model(), &xi).value.to_f64();
            prop_assert!(v >= xi.norm_sq());
            let probe = model().eval(&xi.with_third(Vec3(z))).to_f64();
            prop_assert!(v <= probe + 1e-12 * (1.0 + probe));
        }
    }
}
