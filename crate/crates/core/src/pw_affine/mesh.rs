use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Triangles with area at or below this are rejected.
pub const MIN_CELL_AREA: f64 = 1e-14;

pub type Point = [f64; 2];

/// Signed area of the triangle `(a, b, c)`; positive when counter-clockwise.
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// A triangulated polygonal domain. Triangles are stored counter-clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    areas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshJson {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Builds a conforming mesh; boundary vertices are those on an edge used
    /// by exactly one triangle. Clockwise triangles are reoriented.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = TriMesh::unflagged(vertices, triangles)?;
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &edge_count {
            if count > 2 {
                return Err(Error::Mesh(format!("edge ({a}, {b}) shared by {count} triangles")));
            }
            if count == 1 {
                mesh.boundary[a] = true;
                mesh.boundary[b] = true;
            }
        }
        Ok(mesh)
    }

    /// Builds a mesh with caller-supplied boundary flags, for meshes with
    /// hanging nodes where edge counting does not identify the boundary.
    pub fn with_boundary(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, boundary: Vec<bool>) -> Result<Self> {
        if boundary.len() != vertices.len() {
            return Err(Error::Mesh(format!(
                "{} boundary flags for {} vertices",
                boundary.len(),
                vertices.len()
            )));
        }
        let mut mesh = TriMesh::unflagged(vertices, triangles)?;
        mesh.boundary = boundary;
        Ok(mesh)
    }

    fn unflagged(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Mesh("mesh has no triangles".into()));
        }
        if let Some(v) = vertices.iter().find(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::Mesh(format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        for (cell, t) in triangles.iter_mut().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {cell} references a missing vertex")));
            }
            let mut a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if a < 0.0 {
                t.swap(1, 2);
                a = -a;
            }
            if !(a > MIN_CELL_AREA) {
                return Err(Error::DegenerateCell { cell, area: a });
            }
            areas.push(a);
        }
        Ok(TriMesh {
            boundary: vec![false; n],
            vertices,
            triangles,
            areas,
        })
    }

    /// Structured mesh of `[x0, x1] × [y0, y1]` with `nx × ny` rectangles,
    /// each split along its rising diagonal.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("n", "grid needs at least one cell per side"));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    x0 + (x1 - x0) * (i as f64 / nx as f64),
                    y0 + (y1 - y0) * (j as f64 / ny as f64),
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriMesh::new(vertices, triangles)
    }

    /// `(0,1)²` split into `2n²` triangles.
    pub fn unit_square(n: usize) -> Result<Self> {
        TriMesh::rectangle(0.0, 1.0, 0.0, 1.0, n, n)
    }

    /// Unit square cut by both diagonals; cells are bottom, right, top, left.
    pub fn crossed_square() -> Self {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let triangles = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        TriMesh::new(vertices, triangles).expect("crossed square is valid")
    }

    /// `{|x₁| + |x₂| < 1}` cut into its quadrant triangles, ordered
    /// (+,−), (+,+), (−,+), (−,−).
    pub fn diamond() -> Self {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let triangles = vec![[0, 4, 1], [0, 1, 2], [0, 2, 3], [0, 3, 4]];
        TriMesh::new(vertices, triangles).expect("diamond is valid")
    }

    /// Splits every triangle into four through its edge midpoints.
    pub fn refine_uniform(&self) -> TriMesh {
        let mut vertices = self.vertices.clone();
        let mut boundary = self.boundary.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let boundary_edges = self.boundary_edges();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>, boundary: &mut Vec<bool>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                boundary.push(boundary_edges.contains_key(&key));
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices, &mut boundary);
            let bc = midpoint(b, c, &mut vertices, &mut boundary);
            let ca = midpoint(c, a, &mut vertices, &mut boundary);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        TriMesh::with_boundary(vertices, triangles, boundary).expect("refinement keeps cells valid")
    }

    /// Edges used by one triangle, mapped to that triangle.
    pub fn boundary_edges(&self) -> HashMap<(usize, usize), usize> {
        let mut count: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (cell, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let e = count.entry((a.min(b), a.max(b))).or_insert((0, cell));
                e.0 += 1;
            }
        }
        count
            .into_iter()
            .filter(|(_, (n, _))| *n == 1)
            .map(|(k, (_, cell))| (k, cell))
            .collect()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn cell_points(&self, cell: usize) -> [Point; 3] {
        self.triangles[cell].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, cell: usize) -> Point {
        let [a, b, c] = self.cell_points(cell);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Barycentric coordinates of `x` in `cell`.
    pub fn barycentric(&self, cell: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.cell_points(cell);
        let area = signed_area(a, b, c);
        let l1 = signed_area(x, b, c) / area;
        let l2 = signed_area(a, x, c) / area;
        [l1, l2, 1.0 - l1 - l2]
    }

    /// First cell containing `x` (closed, with a small tolerance).
    pub fn locate(&self, x: Point) -> Option<usize> {
        (0..self.triangles.len()).find(|&c| self.barycentric(c, x).iter().all(|&l| l >= -1e-12))
    }

    /// Axis-aligned bounding box `[xmin, ymin, xmax, ymax]`.
    pub fn bounding_box(&self) -> [f64; 4] {
        self.vertices.iter().fold(
            [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            |b, v| [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])],
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MeshJson {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MeshJson = serde_json::from_str(s)?;
        TriMesh::new(m.vertices, m.triangles)
    }
}

/// Distance from `x` to the segment `[a, b]`.
pub fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len_sq = d[0] * d[0] + d[1] * d[1];
    let s = if len_sq > 0.0 {
        (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let p = [a[0] + s * d[0] - x[0], a[1] + s * d[1] - x[1]];
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_square() {
        let m = TriMesh::unit_square(4).unwrap();
        assert_eq!(m.cell_count(), 32);
        assert!((m.total_area() - 1.0).abs() < 1e-14);
        let boundary = m.boundary_flags().iter().filter(|b| **b).count();
        assert_eq!(boundary, 16);
    }

    #[test]
    fn reference_cells() {
        let y = TriMesh::crossed_square();
        assert!(y.areas().iter().all(|a| (a - 0.25).abs() < 1e-15));
        assert_eq!(y.boundary_flags(), &[true, true, true, true, false]);
        let d = TriMesh::diamond();
        assert!((d.total_area() - 2.0).abs() < 1e-15);
        assert!(!d.boundary_flags()[0]);
    }

    #[test]
    fn rejects_bad_meshes() {
        let degenerate = TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]);
        assert!(matches!(degenerate, Err(Error::DegenerateCell { cell: 0, .. })));
        assert!(TriMesh::new(vec![[0.0, 0.0]], vec![[0, 1, 2]]).is_err());
        assert!(TriMesh::new(vec![], vec![]).is_err());
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let m = TriMesh::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let [a, b, c] = m.cell_points(0);
        assert!(signed_area(a, b, c) > 0.0);
    }

    #[test]
    fn refinement_preserves_area_and_boundary() {
        let m = TriMesh::crossed_square().refine_uniform();
        assert_eq!(m.cell_count(), 16);
        assert!((m.total_area() - 1.0).abs() < 1e-14);
        for (v, &b) in m.vertices().iter().zip(m.boundary_flags()) {
            let on_edge = v[0] == 0.0 || v[0] == 1.0 || v[1] == 0.0 || v[1] == 1.0;
            assert_eq!(b, on_edge, "{v:?}");
        }
    }

    #[test]
    fn json_round_trip_and_locate() {
        let m = TriMesh::unit_square(2).unwrap();
        let back = TriMesh::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let c = m.locate([0.7, 0.2]).unwrap();
        assert!(m.barycentric(c, [0.7, 0.2]).iter().all(|&l| l >= -1e-12));
        assert!(m.locate([2.0, 0.0]).is_none());
    }
}
