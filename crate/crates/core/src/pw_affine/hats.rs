//! The two explicit `Aff₀` test functions: a pyramid on the diamond and a
//! pyramid on the unit square, both with values along a fixed unit vector.

use super::field::{PwAffineField, ReferenceCell};
use super::mesh::TriMesh;
use crate::error::{Error, Result};
use crate::tensor::{Vec3, UNIT_TOL};

fn check_unit(nu: &Vec3) -> Result<()> {
    let n = nu.norm();
    if !nu.is_finite() || (n - 1.0).abs() > 1e-9 {
        return Err(Error::param("nu", format!("|ν| must be 1, got {n}")));
    }
    Ok(())
}

fn check_height(t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::param("t", "hat height must be finite"));
    }
    Ok(())
}

/// `φ = ν φ_t` on the diamond with `φ_t(0) = t`; the cell gradients are
/// `(−tν | tν)`, `(−tν | −tν)`, `(tν | −tν)`, `(tν | tν)`.
pub fn build_diamond_hat(nu: &Vec3, t: f64) -> Result<PwAffineField> {
    check_unit(nu)?;
    check_height(t)?;
    let mesh = TriMesh::diamond();
    let mut values = vec![Vec3::ZERO; mesh.vertex_count()];
    values[0] = *nu * t;
    let f = PwAffineField::new(mesh, values)?;
    f.into_aff0(Some(ReferenceCell::Diamond))
}

/// `φ = ν φ_t` on the crossed unit square with `φ_t(½, ½) = t/2`; the cell
/// gradients are `(0 | tν)`, `(−tν | 0)`, `(0 | −tν)`, `(tν | 0)`.
pub fn build_square_hat(nu: &Vec3, t: f64) -> Result<PwAffineField> {
    check_unit(nu)?;
    check_height(t)?;
    let mesh = TriMesh::crossed_square();
    let mut values = vec![Vec3::ZERO; mesh.vertex_count()];
    values[4] = *nu * (0.5 * t);
    let f = PwAffineField::new(mesh, values)?;
    debug_assert!(f.boundary_max() <= UNIT_TOL);
    f.into_aff0(Some(ReferenceCell::UnitSquare))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{cross, Mat32};

    #[test]
    fn diamond_gradients() {
        let f = build_diamond_hat(&Vec3::E3, 1.0).unwrap();
        let expected = [(-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (1.0, 1.0)];
        for (g, (a, b)) in f.gradient_cells().iter().zip(expected) {
            let want = Mat32::from_cols(Vec3::E3 * a, Vec3::E3 * b);
            assert!(g.gradient.max_abs_diff(&want) < 1e-15, "{g:?}");
        }
        // shifted corners (e₁∓e₃ | e₂±e₃)
        let xi = Mat32::identity_embedding();
        for g in f.gradient_cells() {
            let c = xi + g.gradient;
            assert!((cross(&c.cols[0], &c.cols[1]).norm() - 3f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn diamond_vanishes_on_boundary() {
        let nu = Vec3::new(0.6, 0.0, 0.8);
        let f = build_diamond_hat(&nu, 2.5).unwrap();
        for x in [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]] {
            assert!(f.eval(x).unwrap().norm() < 1e-15, "{x:?}");
        }
        assert!((f.eval([0.0, 0.0]).unwrap() - nu * 2.5).norm() < 1e-15);
    }

    #[test]
    fn square_gradients() {
        let nu = Vec3::new(0.0, 0.6, -0.8);
        let f = build_square_hat(&nu, 1.0).unwrap();
        let expected = [
            Mat32::from_cols(Vec3::ZERO, nu),
            Mat32::from_cols(-nu, Vec3::ZERO),
            Mat32::from_cols(Vec3::ZERO, -nu),
            Mat32::from_cols(nu, Vec3::ZERO),
        ];
        for (g, want) in f.gradient_cells().iter().zip(expected) {
            assert!(g.gradient.max_abs_diff(&want) < 1e-15);
            assert!((g.area - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_height_and_bad_normals() {
        for f in [build_square_hat(&Vec3::E1, 0.0).unwrap(), build_diamond_hat(&Vec3::E1, 0.0).unwrap()] {
            assert_eq!(f.sup_norm(), 0.0);
        }
        assert!(build_square_hat(&Vec3::new(1.0, 1.0, 0.0), 1.0).is_err());
        assert!(build_diamond_hat(&Vec3::ZERO, 1.0).is_err());
        assert!(build_diamond_hat(&Vec3::E1, f64::NAN).is_err());
    }
}
