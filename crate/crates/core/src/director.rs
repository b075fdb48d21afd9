//! Continuous director fields `φ` with `det(∇v | φ)` bounded away from zero
//! on piecewise-affine membranes, and the integral `∫ W(∇v | φ)` they give.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, StoredEnergy};
use crate::error::{Error, Result};
use crate::fiber::minimize_profile;
use crate::optim::nelder_mead3;
use crate::pw_affine::{point_segment_distance, Point, PwAffineField, TriMesh};
use crate::tensor::{ExtValue, Mat32, Vec3};

/// Candidates closer than this angle to some plane `{det(ξᵢ|ζ) = 0}` are skipped.
pub const ANGULAR_TOL: f64 = 1e-6;

const SPIRAL_POINTS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn factor(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }
}

/// Deterministic unit-vector sequence: coordinate axes, the 12 icosahedron
/// vertices, then a golden-angle spiral.
pub fn candidate_directions() -> Vec<Vec3> {
    let mut out = vec![Vec3::E3, Vec3::E1, Vec3::E2];
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    for a in [-1.0, 1.0] {
        for b in [-phi, phi] {
            for v in [Vec3::new(0.0, a, b), Vec3::new(a, b, 0.0), Vec3::new(b, 0.0, a)] {
                out.push(v.normalized().unwrap());
            }
        }
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for k in 0..SPIRAL_POINTS {
        let z = 1.0 - (2.0 * k as f64 + 1.0) / SPIRAL_POINTS as f64;
        let r = (1.0 - z * z).sqrt();
        let th = golden * k as f64;
        out.push(Vec3::new(r * th.cos(), r * th.sin(), z));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleNormal {
    pub zeta_bar: Vec3,
    pub j_v: u64,
    pub signs: Vec<Sign>,
    /// `min_i |det(ξᵢ | ζ̄)|`.
    pub min_det: f64,
}

/// A unit `ζ̄` off every plane `{det(ξᵢ|ζ) = 0}`, chosen among
/// [`candidate_directions`] to maximize `min_i |det(ξᵢ|ζ̄)|`.
pub fn feasible_normal(cells: &[Mat32]) -> Result<FeasibleNormal> {
    if cells.is_empty() {
        return Err(Error::Mesh("no cells".into()));
    }
    let normals: Vec<(Vec3, f64)> = cells
        .iter()
        .map(|xi| {
            let c = xi.cross();
            let a = c.norm();
            if xi.is_rank_deficient() {
                Err(Error::RankDeficient(a))
            } else {
                Ok((c, a))
            }
        })
        .collect::<Result<_>>()?;
    let sin_tol = ANGULAR_TOL.sin();
    let mut best: Option<(Vec3, f64)> = None;
    for z in candidate_directions() {
        let mut worst = f64::INFINITY;
        let mut ok = true;
        for (c, a) in &normals {
            let d = c.dot(&z).abs();
            if d < sin_tol * a {
                ok = false;
                break;
            }
            worst = worst.min(d);
        }
        if ok && best.is_none_or(|(_, m)| worst > m) {
            best = Some((z, worst));
        }
    }
    let (zeta_bar, min_det) =
        best.ok_or_else(|| Error::Infeasible("every candidate direction lies on a cell plane".into()))?;
    let signs = normals.iter().map(|(c, _)| Sign::of(c.dot(&zeta_bar))).collect();
    Ok(FeasibleNormal {
        zeta_bar,
        j_v: (1.0 / min_det).ceil().max(1.0) as u64,
        signs,
        min_det,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedMin {
    pub value: ExtValue,
    pub zeta: Vec3,
}

/// `min W(ξ|ζ)` over `{± det(ξ|ζ) ≥ 1/j}`. For the model family the
/// tangential part of `ζ` vanishes at the minimum, leaving a 1D problem.
pub fn cell_min_constrained(energy: &dyn StoredEnergy, xi: &Mat32, sign: Sign, j: u64) -> Result<ConstrainedMin> {
    if j == 0 {
        return Err(Error::param("j", "must be at least 1"));
    }
    let c = xi.cross();
    let a = c.norm();
    if xi.is_rank_deficient() {
        return Err(Error::RankDeficient(a));
    }
    let nu = c * (1.0 / a);
    let t_min = 1.0 / (j as f64 * a);
    if let Some(model) = energy.as_model() {
        let (t, value) = minimize_profile(model, a, xi.norm_sq(), t_min);
        return Ok(ConstrainedMin {
            value: ExtValue::from_f64(value),
            zeta: nu * (sign.factor() * t),
        });
    }
    let bound = 1.0 / j as f64;
    let f = |z: &Vec3| {
        if sign.factor() * c.dot(z) < bound {
            f64::INFINITY
        } else {
            energy.energy(&xi.with_third(*z)).to_f64()
        }
    };
    let mut best = ConstrainedMin {
        value: ExtValue::Infinite,
        zeta: Vec3::ZERO,
    };
    for scale in [1.0, 2.0, 4.0] {
        let start = nu * (sign.factor() * t_min.max(1.0 / a) * scale);
        let (z, v) = nelder_mead3(f, start, 0.25 * t_min.max(0.1), 4000, 1e-14);
        let v = ExtValue::from_f64(v);
        if v < best.value {
            best = ConstrainedMin { value: v, zeta: z };
        }
    }
    Ok(best)
}

/// Shared direction, sign partition and per-cell constrained minimizers for
/// a membrane `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectorAssignment {
    pub gradients: Vec<Mat32>,
    pub j: u64,
    pub j_v: u64,
    pub zeta_bar: Vec3,
    pub signs: Vec<Sign>,
    pub zeta: Vec<Vec3>,
    pub cell_values: Vec<ExtValue>,
}

impl DirectorAssignment {
    pub fn new(energy: &dyn StoredEnergy, v: &PwAffineField, j: u64) -> Result<Self> {
        let gradients: Vec<Mat32> = (0..v.mesh().cell_count()).map(|c| v.cell_gradient(c)).collect();
        let normal = feasible_normal(&gradients)?;
        if j < normal.j_v {
            return Err(Error::param("j", format!("j = {j} is below j_v = {}", normal.j_v)));
        }
        let mut zeta = Vec::with_capacity(gradients.len());
        let mut cell_values = Vec::with_capacity(gradients.len());
        for (xi, s) in gradients.iter().zip(&normal.signs) {
            let m = cell_min_constrained(energy, xi, *s, j)?;
            zeta.push(m.zeta);
            cell_values.push(m.value);
        }
        Ok(DirectorAssignment {
            gradients,
            j,
            j_v: normal.j_v,
            zeta_bar: normal.zeta_bar,
            signs: normal.signs,
            zeta,
            cell_values,
        })
    }

    /// `Σ |Dᵢ| W(ξᵢ | ζᵢ)`.
    pub fn cellwise_energy(&self, mesh: &TriMesh) -> ExtValue {
        self.cell_values
            .iter()
            .zip(mesh.areas())
            .map(|(v, a)| v.scale(*a))
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `φₙ = (1 − αₙ) ζ̄ + αₙ ζᵢ` on cell `i`, `αₙ = min(n · dist(x, ∂Dᵢ), 1)`.
#[derive(Clone, Debug)]
pub struct BlendedDirector {
    mesh: TriMesh,
    zeta_bar: Vec3,
    zeta: Vec<Vec3>,
    n: f64,
}

pub fn blended_director(v: &PwAffineField, assignment: &DirectorAssignment, n: u64) -> Result<BlendedDirector> {
    if assignment.zeta.len() != v.mesh().cell_count() {
        return Err(Error::Mesh(format!(
            "assignment has {} cells, membrane has {}",
            assignment.zeta.len(),
            v.mesh().cell_count()
        )));
    }
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    Ok(BlendedDirector {
        mesh: v.mesh().clone(),
        zeta_bar: assignment.zeta_bar,
        zeta: assignment.zeta.clone(),
        n: n as f64,
    })
}

impl BlendedDirector {
    pub fn alpha(&self, cell: usize, x: Point) -> f64 {
        let [a, b, c] = self.mesh.cell_points(cell);
        let d = point_segment_distance(x, a, b)
            .min(point_segment_distance(x, b, c))
            .min(point_segment_distance(x, c, a));
        (self.n * d).min(1.0)
    }

    pub fn eval(&self, cell: usize, x: Point) -> Vec3 {
        let al = self.alpha(cell, x);
        self.zeta_bar * (1.0 - al) + self.zeta[cell] * al
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    /// Nodal interpolation on `refinements` uniform refinements of the cell
    /// mesh. Returns the fine mesh, nodal values and each fine cell's parent.
    /// Points on coarse edges get `ζ̄`, so the interpolant stays continuous
    /// and, by convexity, inside the same constraint sets.
    pub fn to_p1(&self, refinements: usize) -> (TriMesh, Vec<Vec3>, Vec<usize>) {
        let mut mesh = self.mesh.clone();
        for _ in 0..refinements {
            mesh = mesh.refine_uniform();
        }
        let per = 4usize.pow(refinements as u32);
        let parent: Vec<usize> = (0..mesh.cell_count()).map(|c| c / per).collect();
        let mut values = vec![None; mesh.vertex_count()];
        for (c, t) in mesh.triangles().iter().enumerate() {
            for &i in t {
                if values[i].is_none() {
                    values[i] = Some(self.eval(parent[c], mesh.vertices()[i]));
                }
            }
        }
        (mesh, values.into_iter().map(|v| v.unwrap_or(self.zeta_bar)).collect(), parent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NirfResult {
    pub value: ExtValue,
    /// Uniform refinement levels per cell used by the quadrature.
    pub levels: usize,
    pub rel_change: f64,
}

fn subdivide(tris: &[[Point; 3]]) -> Vec<[Point; 3]> {
    let mid = |p: Point, q: Point| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
    let mut out = Vec::with_capacity(4 * tris.len());
    for &[a, b, c] in tris {
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        out.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    out
}

/// `∫_Σ W(∇v | φₙ)` by the edge-midpoint rule on uniformly refined
/// sub-triangles of each cell, refined until the relative change drops
/// below `1e−4` (at most 8 levels).
pub fn nirf_value(energy: &dyn StoredEnergy, v: &PwAffineField, j: u64, n: u64) -> Result<NirfResult> {
    let assignment = DirectorAssignment::new(energy, v, j)?;
    let phi = blended_director(v, &assignment, n)?;
    let mesh = v.mesh();
    let integrate = |cell: usize, tris: &[[Point; 3]]| -> ExtValue {
        let xi = assignment.gradients[cell];
        let mut total = ExtValue::ZERO;
        for t in tris {
            let area = crate::pw_affine::signed_area(t[0], t[1], t[2]).abs();
            for k in 0..3 {
                let (p, q) = (t[k], t[(k + 1) % 3]);
                let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                total += energy.energy(&xi.with_third(phi.eval(cell, m))).scale(area / 3.0);
            }
        }
        total
    };
    let mut tris: Vec<Vec<[Point; 3]>> = (0..mesh.cell_count()).map(|c| vec![mesh.cell_points(c)]).collect();
    let sum = |tris: &[Vec<[Point; 3]>]| -> ExtValue { tris.iter().enumerate().map(|(c, t)| integrate(c, t)).sum() };
    let mut prev = sum(&tris);
    let mut rel_change = f64::INFINITY;
    let mut levels = 0;
    while levels < 8 {
        tris = tris.iter().map(|t| subdivide(t)).collect();
        levels += 1;
        let next = sum(&tris);
        rel_change = match (prev, next) {
            (ExtValue::Finite(a), ExtValue::Finite(b)) => (b - a).abs() / b.abs().max(f64::MIN_POSITIVE),
            _ => f64::INFINITY,
        };
        prev = next;
        if !prev.is_finite() || rel_change < 1e-4 {
            break;
        }
    }
    Ok(NirfResult {
        value: prev,
        levels,
        rel_change,
    })
}

/// Smallest `±det(ξᵢ | φ) · j` over the nodes of a fine P1 director.
pub fn det_margin(assignment: &DirectorAssignment, parent: &[usize], mesh: &TriMesh, values: &[Vec3]) -> f64 {
    let mut worst = f64::INFINITY;
    for (c, t) in mesh.triangles().iter().enumerate() {
        let i = parent[c];
        let xi = assignment.gradients[i];
        let s = assignment.signs[i].factor();
        for &v in t {
            worst = worst.min(s * xi.with_third(values[v]).det() * assignment.j as f64);
        }
    }
    worst
}

/// Convenience for the model family.
pub fn constrained_value(model: &EnergyModel, xi: &Mat32, j: u64) -> Result<ExtValue> {
    Ok(cell_min_constrained(model, xi, Sign::Plus, j)?.value)
}
