use serde::{Deserialize, Serialize};

use super::mesh::{Point, TriMesh};
use crate::error::{Error, Result};
use crate::tensor::{ExtValue, Mat32, Vec3};

/// Largest boundary value still accepted as zero for `Aff₀` fields.
pub const AFF0_TOL: f64 = 1e-12;

/// The reference domain an `Aff₀` template is defined on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceCell {
    /// `Y = (0,1)²`.
    UnitSquare,
    /// `D = {|x₁| + |x₂| < 1}`.
    Diamond,
}

impl ReferenceCell {
    pub fn area(self) -> f64 {
        match self {
            ReferenceCell::UnitSquare => 1.0,
            ReferenceCell::Diamond => 2.0,
        }
    }

    /// Counter-clockwise outline.
    pub fn polygon(self) -> Vec<Point> {
        match self {
            ReferenceCell::UnitSquare => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            ReferenceCell::Diamond => vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellGradient {
    pub cell: usize,
    pub gradient: Mat32,
    pub area: f64,
}

/// A continuous piecewise-affine map `D → ℝ³` given by nodal values.
#[derive(Clone, Debug, PartialEq)]
pub struct PwAffineField {
    mesh: TriMesh,
    values: Vec<Vec3>,
    aff0: bool,
    reference: Option<ReferenceCell>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldJson {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    values: Vec<Vec3>,
    #[serde(default)]
    aff0: bool,
    #[serde(default)]
    reference: Option<ReferenceCell>,
}

/// Gradient of the affine interpolant of `values` on the triangle `p`.
pub fn triangle_gradient(p: [Point; 3], values: [Vec3; 3]) -> Mat32 {
    let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
    let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
    let det = e1[0] * e2[1] - e2[0] * e1[1];
    let d1 = values[1] - values[0];
    let d2 = values[2] - values[0];
    // ∇v [e1 e2] = [d1 d2]
    let inv = [[e2[1] / det, -e2[0] / det], [-e1[1] / det, e1[0] / det]];
    Mat32::from_cols(d1 * inv[0][0] + d2 * inv[1][0], d1 * inv[0][1] + d2 * inv[1][1])
}

impl PwAffineField {
    pub fn new(mesh: TriMesh, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(Error::Mesh(format!(
                "{} nodal values for {} vertices",
                values.len(),
                mesh.vertex_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Mesh("non-finite nodal value".into()));
        }
        Ok(PwAffineField {
            mesh,
            values,
            aff0: false,
            reference: None,
        })
    }

    /// `x ↦ ξ x + b`.
    pub fn affine(mesh: TriMesh, xi: &Mat32, b: Vec3) -> Self {
        let values = mesh
            .vertices()
            .iter()
            .map(|x| xi.cols[0] * x[0] + xi.cols[1] * x[1] + b)
            .collect();
        PwAffineField::new(mesh, values).expect("affine values are finite")
    }

    pub fn zero(mesh: TriMesh) -> Self {
        let n = mesh.vertex_count();
        PwAffineField::new(mesh, vec![Vec3::ZERO; n]).expect("zero field is valid")
    }

    /// Marks the field as `Aff₀`, checking that it vanishes on the boundary.
    pub fn into_aff0(mut self, reference: Option<ReferenceCell>) -> Result<Self> {
        let worst = self.boundary_max();
        if worst > AFF0_TOL {
            return Err(Error::NotAff0(worst));
        }
        if let Some(r) = reference {
            let area = self.mesh.total_area();
            if (area - r.area()).abs() > 1e-12 * r.area() {
                return Err(Error::Mesh(format!("mesh area {area} does not match the {r:?} reference cell")));
            }
        }
        self.aff0 = true;
        self.reference = reference;
        Ok(self)
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn is_aff0(&self) -> bool {
        self.aff0
    }

    pub fn reference(&self) -> Option<ReferenceCell> {
        self.reference
    }

    /// Largest `|v|` over boundary vertices.
    pub fn boundary_max(&self) -> f64 {
        self.values
            .iter()
            .zip(self.mesh.boundary_flags())
            .filter(|(_, b)| **b)
            .map(|(v, _)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(Vec3::norm).fold(0.0, f64::max)
    }

    pub fn cell_gradient(&self, cell: usize) -> Mat32 {
        let t = self.mesh.triangles()[cell];
        triangle_gradient(self.mesh.cell_points(cell), t.map(|i| self.values[i]))
    }

    pub fn gradient_cells(&self) -> Vec<CellGradient> {
        (0..self.mesh.cell_count())
            .map(|cell| CellGradient {
                cell,
                gradient: self.cell_gradient(cell),
                area: self.mesh.areas()[cell],
            })
            .collect()
    }

    /// `Σ |Dᵢ| f(∇v|_{Dᵢ})`.
    pub fn energy_integral<F: Fn(&Mat32) -> ExtValue>(&self, density: F) -> ExtValue {
        let mut total = ExtValue::ZERO;
        for cell in 0..self.mesh.cell_count() {
            total += density(&self.cell_gradient(cell)).scale(self.mesh.areas()[cell]);
            if !total.is_finite() {
                break;
            }
        }
        total
    }

    /// Value of the interpolant inside `cell`.
    pub fn eval_in_cell(&self, cell: usize, x: Point) -> Vec3 {
        let l = self.mesh.barycentric(cell, x);
        let t = self.mesh.triangles()[cell];
        self.values[t[0]] * l[0] + self.values[t[1]] * l[1] + self.values[t[2]] * l[2]
    }

    pub fn eval(&self, x: Point) -> Option<Vec3> {
        self.mesh.locate(x).map(|c| self.eval_in_cell(c, x))
    }

    /// Nodal sum; the pointwise sum of two fields on the same mesh.
    pub fn add(&self, other: &PwAffineField) -> Result<PwAffineField> {
        if self.mesh != other.mesh {
            return Err(Error::Mesh("fields live on different meshes".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a + *b).collect();
        PwAffineField::new(self.mesh.clone(), values)
    }

    /// `ξ x + φ(x)`.
    pub fn shifted_by(&self, xi: &Mat32) -> PwAffineField {
        let values = self
            .mesh
            .vertices()
            .iter()
            .zip(&self.values)
            .map(|(x, v)| *v + xi.cols[0] * x[0] + xi.cols[1] * x[1])
            .collect();
        PwAffineField::new(self.mesh.clone(), values).expect("shifted values are finite")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FieldJson {
            vertices: self.mesh.vertices().to_vec(),
            triangles: self.mesh.triangles().to_vec(),
            values: self.values.clone(),
            aff0: self.aff0,
            reference: self.reference,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: FieldJson = serde_json::from_str(s)?;
        let field = PwAffineField::new(TriMesh::new(f.vertices, f.triangles)?, f.values)?;
        if f.aff0 {
            field.into_aff0(f.reference)
        } else {
            Ok(field)
        }
    }
}
