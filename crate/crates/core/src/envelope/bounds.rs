//! Upper bounds on the envelope from explicit `Aff₀` test functions.

use crate::error::{Error, Result};
use crate::pw_affine::PwAffineField;
use crate::tensor::{ExtValue, Mat32, Vec3, RANK_TOL};

/// A density on membrane gradients.
pub trait MembraneDensity: Sync {
    fn eval(&self, xi: &Mat32) -> ExtValue;
}

impl<F: Fn(&Mat32) -> ExtValue + Sync> MembraneDensity for F {
    fn eval(&self, xi: &Mat32) -> ExtValue {
        self(xi)
    }
}

/// `(1/|D|) ∫_D f(ξ + ∇φ)`.
pub fn zw0_upper_from_testfn(density: &dyn MembraneDensity, xi: &Mat32, phi: &PwAffineField) -> Result<ExtValue> {
    if !phi.is_aff0() {
        return Err(Error::NotAff0(phi.boundary_max()));
    }
    let area = phi.mesh().total_area();
    Ok(phi.energy_integral(|g| density.eval(&(*xi + *g))).scale(1.0 / area))
}

/// A unit vector orthogonal to both columns of `ξ`: the unit normal when
/// the columns span a plane, otherwise orthogonal to the nonzero column.
/// `None` for `ξ = 0`.
pub fn orthogonal_normal(xi: &Mat32) -> Option<Vec3> {
    let c = xi.cross();
    if c.norm() >= RANK_TOL {
        return c.normalized();
    }
    let [a, b] = xi.cols;
    if a.norm() >= b.norm() && a.norm() > 0.0 {
        a.any_orthogonal()
    } else if b.norm() > 0.0 {
        b.any_orthogonal()
    } else {
        None
    }
}

/// The four shifted gradients `(ξ₁∓ν | ξ₂±ν)`, `(ξ₁∓ν | ξ₂∓ν)` in cell order
/// of the diamond hat.
pub fn four_corners(xi: &Mat32, nu: &Vec3) -> [Mat32; 4] {
    let [a, b] = xi.cols;
    let n = *nu;
    [
        Mat32::from_cols(a - n, b + n),
        Mat32::from_cols(a - n, b - n),
        Mat32::from_cols(a + n, b - n),
        Mat32::from_cols(a + n, b + n),
    ]
}

/// `¼ Σ f` over the four diamond corners with `ν` from [`orthogonal_normal`].
/// Refused when `ξ₁ = ±ξ₂`.
pub fn four_corner_bound(xi: &Mat32, density: &dyn MembraneDensity) -> Result<ExtValue> {
    let [a, b] = xi.cols;
    let delta = (a + b).norm().min((a - b).norm());
    if !(delta > 0.0) {
        return Err(Error::Undefined(format!(
            "four-corner bound needs ξ₁ ≠ ±ξ₂ (min |ξ₁ ± ξ₂| = {delta:e})"
        )));
    }
    let nu = orthogonal_normal(xi).expect("ξ ≠ 0 when ξ₁ ≠ ±ξ₂");
    Ok(four_corners(xi, &nu)
        .iter()
        .map(|c| density.eval(c))
        .sum::<ExtValue>()
        .scale(0.25))
}

/// `ν` for the square refinement: as [`orthogonal_normal`], and `e₃` at `ξ = 0`.
pub fn square_normal(xi: &Mat32) -> Vec3 {
    orthogonal_normal(xi).unwrap_or(Vec3::E3)
}

/// The single-column shifts `(ξ₁ | ξ₂+ν)`, `(ξ₁−ν | ξ₂)`, `(ξ₁ | ξ₂−ν)`,
/// `(ξ₁+ν | ξ₂)` in cell order of the square hat.
pub fn square_shifts(xi: &Mat32, nu: &Vec3) -> [Mat32; 4] {
    let [a, b] = xi.cols;
    let n = *nu;
    [
        Mat32::from_cols(a, b + n),
        Mat32::from_cols(a - n, b),
        Mat32::from_cols(a, b - n),
        Mat32::from_cols(a + n, b),
    ]
}

/// `¼ Σ inner` over the square shifts.
pub fn square_refine_bound<F: FnMut(&Mat32) -> ExtValue>(xi: &Mat32, mut inner: F) -> ExtValue {
    let nu = square_normal(xi);
    square_shifts(xi, &nu).iter().map(&mut inner).sum::<ExtValue>().scale(0.25)
}

/// Square refinement with the four-corner bound inside; finite for every `ξ`
/// whenever `f` is finite on full-rank gradients.
pub fn composed_bound(xi: &Mat32, density: &dyn MembraneDensity) -> ExtValue {
    square_refine_bound(xi, |s| four_corner_bound(s, density).unwrap_or(ExtValue::Infinite))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::w0_closed_form;
    use crate::pw_affine::{build_diamond_hat, build_square_hat, TriMesh};
    use crate::tensor::cross;
    use crate::EnergyModel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn w0() -> impl Fn(&Mat32) -> ExtValue + Sync {
        let m = EnergyModel::reciprocal(2.0).unwrap();
        move |xi: &Mat32| w0_closed_form(&m, xi).value
    }

    fn rand_mat(rng: &mut ChaCha8Rng) -> Mat32 {
        Mat32::from_row_major(std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
    }

    #[test]
    fn zero_test_function_gives_density() {
        let f = w0();
        let xi = Mat32::from_cols(Vec3::new(1.0, 0.3, 0.0), Vec3::new(0.0, 1.2, 0.5));
        let zero = PwAffineField::zero(TriMesh::crossed_square()).into_aff0(None).unwrap();
        let v = zw0_upper_from_testfn(&f, &xi, &zero).unwrap();
        assert!((v.to_f64() - f(&xi).to_f64()).abs() < 1e-12);
        let not_aff0 = PwAffineField::affine(TriMesh::crossed_square(), &xi, Vec3::ZERO);
        assert!(zw0_upper_from_testfn(&f, &xi, &not_aff0).is_err());
    }

    #[test]
    fn diamond_hat_equals_four_corner_average() {
        let f = w0();
        let xi = Mat32::identity_embedding();
        let hat = build_diamond_hat(&Vec3::E3, 1.0).unwrap();
        let via_hat = zw0_upper_from_testfn(&f, &xi, &hat).unwrap().to_f64();
        let via_corners = four_corner_bound(&xi, &f).unwrap().to_f64();
        assert!((via_hat - via_corners).abs() < 1e-12);
        // every corner has |cross| = √3, so all four values agree:
        // W₀ = |ξ'|² + 3(2√3)^{-2/3} with |ξ'|² = 4
        let corner = 4.0 + 3.0 * (2.0 * 3f64.sqrt()).powf(-2.0 / 3.0);
        assert!((via_corners - corner).abs() < 1e-10, "{via_corners} vs {corner}");
    }

    #[test]
    fn square_hat_equals_square_shift_average() {
        let f = w0();
        let xi = Mat32::from_cols(Vec3::new(1.0, 0.3, 0.0), Vec3::new(0.0, 1.2, 0.5));
        let nu = square_normal(&xi);
        let hat = build_square_hat(&nu, 1.0).unwrap();
        let via_hat = zw0_upper_from_testfn(&f, &xi, &hat).unwrap().to_f64();
        let via_shifts = square_refine_bound(&xi, |s| f(s)).to_f64();
        assert!((via_hat - via_shifts).abs() < 1e-12);
    }

    #[test]
    fn four_corner_growth_at_embedding() {
        let f = w0();
        let xi = Mat32::identity_embedding();
        let v = four_corner_bound(&xi, &f).unwrap().to_f64();
        let c_delta = 1.0 / 2f64.sqrt() + 1.0;
        assert!(v <= c_delta * 2f64.powi(5) * (1.0 + xi.norm_sq()));
    }

    #[test]
    fn rank_one_gradient_gets_finite_bound() {
        let f = w0();
        let xi = Mat32::from_cols(Vec3::E1, Vec3::ZERO);
        assert_eq!(f(&xi), ExtValue::Infinite);
        let v = four_corner_bound(&xi, &f).unwrap();
        assert!(v.is_finite());
        let nu = orthogonal_normal(&xi).unwrap();
        assert!(nu.dot(&Vec3::E1).abs() < 1e-15);
    }

    #[test]
    fn four_corner_refuses_equal_columns() {
        let f = w0();
        let c = Vec3::new(0.2, 0.4, 1.0);
        assert!(four_corner_bound(&Mat32::from_cols(c, c), &f).is_err());
        assert!(four_corner_bound(&Mat32::from_cols(c, -c), &f).is_err());
        assert!(four_corner_bound(&Mat32::ZERO, &f).is_err());
    }

    #[test]
    fn composed_bound_at_zero() {
        let f = w0();
        let m = EnergyModel::reciprocal(2.0).unwrap();
        let cert = crate::envelope::growth_certificate(&m).unwrap();
        let v = composed_bound(&Mat32::ZERO, &f).to_f64();
        assert!(v.is_finite());
        assert!(v <= cert.r1 * 8.0);
        assert!(v <= cert.c);
    }

    #[test]
    fn corner_inequality_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let mut xi = rand_mat(&mut rng);
            if rng.random_bool(0.3) {
                // make it rank one
                xi.cols[1] = xi.cols[0] * rng.random_range(-2.0..2.0);
            }
            let [a, b] = xi.cols;
            let delta = (a + b).norm().min((a - b).norm());
            let nu = orthogonal_normal(&xi).unwrap();
            for c in four_corners(&xi, &nu) {
                assert!(cross(&c.cols[0], &c.cols[1]).norm() >= delta - 1e-10);
            }
        }
    }

    #[test]
    fn square_shift_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for k in 0..1000 {
            let mut xi = rand_mat(&mut rng);
            match k % 4 {
                1 => xi.cols[1] = xi.cols[0] * rng.random_range(-2.0..2.0),
                2 => xi.cols[0] = Vec3::ZERO,
                3 if k % 8 == 3 => xi = Mat32::ZERO,
                _ => {}
            }
            let nu = square_normal(&xi);
            let [a, b] = xi.cols;
            for s in square_shifts(&xi, &nu) {
                let [c, d] = s.cols;
                for (sum, base) in [((c + d).norm_sq(), (a + b).norm_sq()), ((c - d).norm_sq(), (a - b).norm_sq())] {
                    assert!((sum - (base + 1.0)).abs() <= 1e-10 * (1.0 + base));
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn composed_bound_is_finite_everywhere(e in prop::array::uniform6(-2.0f64..2.0), rank in 0usize..3) {
            let mut xi = Mat32::from_row_major(e);
            if rank == 1 {
                xi.cols[1] = xi.cols[0] * 0.7;
            } else if rank == 0 {
                xi = Mat32::ZERO;
            }
            let f = w0();
            prop_assert!(composed_bound(&xi, &f).is_finite());
        }
    }
}
