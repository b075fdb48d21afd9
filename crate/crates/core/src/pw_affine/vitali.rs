//! Filling a host field with small scaled copies of an `Aff₀` template.
//!
//! Host cells with equal gradient are merged into connected regions on
//! which the host is affine. Each region is covered by a lattice of scaled
//! reference cells; cells inside the region receive a copy
//! `x ↦ α φ((x − a)/α)`, cells crossing the boundary are split into four
//! children (both reference cells are rep-tiles), and what is left after the
//! last level is meshed with the zero perturbation. Every copy vanishes on
//! its own boundary, so the result is continuous even though the output mesh
//! has hanging nodes.

use serde::Serialize;

use super::field::{PwAffineField, ReferenceCell};
use super::mesh::{point_segment_distance, signed_area, Point, TriMesh, MIN_CELL_AREA};
use crate::error::{Error, Result};
use crate::tensor::{Mat32, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VitaliParams {
    /// Copies have scale `α ≤ max_scale / 2`.
    pub max_scale: f64,
    /// Target uncovered fraction per region.
    pub eta: f64,
    /// Number of subdivision levels below the root lattice.
    pub max_depth: usize,
}

impl Default for VitaliParams {
    fn default() -> Self {
        VitaliParams {
            max_scale: 1.0 / 16.0,
            eta: 1e-3,
            max_depth: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PastedField {
    pub field: PwAffineField,
    /// Covered area over host area.
    pub coverage: f64,
    pub covered_area: f64,
    pub copies: usize,
    /// Host gradient under each output cell.
    pub host_gradient: Vec<Mat32>,
    /// Whether each output cell belongs to a template copy.
    pub in_copy: Vec<bool>,
}

impl PastedField {
    /// `ψ = pasted − host`, the perturbation alone.
    pub fn perturbation_sup(&self, host: &PwAffineField) -> f64 {
        let mesh = self.field.mesh();
        let mut worst: f64 = 0.0;
        for (i, x) in mesh.vertices().iter().enumerate() {
            if let Some(h) = host.eval(*x) {
                worst = worst.max((self.field.values()[i] - h).norm());
            }
        }
        worst
    }
}

struct Region {
    triangles: Vec<[Point; 3]>,
    boxes: Vec<[f64; 4]>,
    gradient: Mat32,
    anchor: Point,
    anchor_value: Vec3,
    bbox: [f64; 4],
    area: f64,
}

impl Region {
    fn host_value(&self, x: Point) -> Vec3 {
        let g = &self.gradient;
        self.anchor_value + g.cols[0] * (x[0] - self.anchor[0]) + g.cols[1] * (x[1] - self.anchor[1])
    }
}

#[derive(Clone, Copy)]
struct Leaf {
    a: Point,
    alpha: f64,
}

fn polygon_area(p: &[Point]) -> f64 {
    let n = p.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (p[i], p[(i + 1) % n]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

/// Sutherland–Hodgman clip of a convex polygon against a CCW triangle.
fn clip_to_triangle(poly: &[Point], tri: &[Point; 3]) -> Vec<Point> {
    let mut out: Vec<Point> = poly.to_vec();
    for k in 0..3 {
        if out.is_empty() {
            break;
        }
        let (p, q) = (tri[k], tri[(k + 1) % 3]);
        let side = |x: Point| (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]);
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let (cur, next) = (input[i], input[(i + 1) % n]);
            let (sc, sn) = (side(cur), side(next));
            if sc >= 0.0 {
                out.push(cur);
            }
            if (sc >= 0.0) != (sn >= 0.0) {
                let s = sc / (sc - sn);
                out.push([cur[0] + s * (next[0] - cur[0]), cur[1] + s * (next[1] - cur[1])]);
            }
        }
    }
    out
}

fn boxes_overlap(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

fn poly_box(p: &[Point]) -> [f64; 4] {
    p.iter().fold(
        [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        |b, v| [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])],
    )
}

fn leaf_polygon(reference: ReferenceCell, leaf: &Leaf) -> Vec<Point> {
    reference
        .polygon()
        .iter()
        .map(|y| [leaf.a[0] + leaf.alpha * y[0], leaf.a[1] + leaf.alpha * y[1]])
        .collect()
}

fn children(reference: ReferenceCell, leaf: &Leaf) -> [Leaf; 4] {
    let h = 0.5 * leaf.alpha;
    let [x, y] = leaf.a;
    let offsets = match reference {
        ReferenceCell::UnitSquare => [[0.0, 0.0], [h, 0.0], [0.0, h], [h, h]],
        ReferenceCell::Diamond => [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]],
    };
    offsets.map(|o| Leaf { a: [x + o[0], y + o[1]], alpha: h })
}

fn root_lattice(reference: ReferenceCell, bbox: &[f64; 4], alpha: f64) -> Vec<Leaf> {
    let lo = |v: f64| (v / alpha).floor() as i64 - 1;
    let hi = |v: f64| (v / alpha).ceil() as i64 + 1;
    let mut leaves = Vec::new();
    match reference {
        ReferenceCell::UnitSquare => {
            for j in lo(bbox[1])..=hi(bbox[3]) {
                for i in lo(bbox[0])..=hi(bbox[2]) {
                    leaves.push(Leaf { a: [alpha * i as f64, alpha * j as f64], alpha });
                }
            }
        }
        ReferenceCell::Diamond => {
            // centres α(i + j, i − j)
            for w in lo(bbox[1])..=hi(bbox[3]) {
                for u in lo(bbox[0])..=hi(bbox[2]) {
                    if (u - w).rem_euclid(2) == 0 {
                        leaves.push(Leaf { a: [alpha * u as f64, alpha * w as f64], alpha });
                    }
                }
            }
        }
    }
    leaves
}

fn regions(host: &PwAffineField) -> Vec<Region> {
    let mesh = host.mesh();
    let n = mesh.cell_count();
    let grads: Vec<Mat32> = (0..n).map(|c| host.cell_gradient(c)).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut edge_owner: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
    for (c, t) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if let Some(&other) = edge_owner.get(&(a.min(b), a.max(b))) {
                let tol = 1e-12 * (1.0 + grads[c].norm());
                if grads[c].max_abs_diff(&grads[other]) <= tol {
                    let (ra, rb) = (find(&mut parent, c), find(&mut parent, other));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            } else {
                edge_owner.insert((a.min(b), a.max(b)), c);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for c in 0..n {
        let r = find(&mut parent, c);
        groups.entry(r).or_default().push(c);
    }
    groups
        .into_values()
        .map(|cells| {
            let triangles: Vec<[Point; 3]> = cells.iter().map(|&c| mesh.cell_points(c)).collect();
            let boxes = triangles.iter().map(|t| poly_box(t)).collect();
            let first = mesh.triangles()[cells[0]][0];
            let all: Vec<Point> = triangles.iter().flatten().copied().collect();
            Region {
                boxes,
                gradient: grads[cells[0]],
                anchor: mesh.vertices()[first],
                anchor_value: host.values()[first],
                bbox: poly_box(&all),
                area: cells.iter().map(|&c| mesh.areas()[c]).sum(),
                triangles,
            }
        })
        .collect()
}

/// Pastes scaled copies of `template` into every host region; see the module
/// documentation. The achieved coverage is reported rather than enforced.
pub fn vitali_paste(host: &PwAffineField, template: &PwAffineField, params: &VitaliParams) -> Result<PastedField> {
    let Some(reference) = template.reference().filter(|_| template.is_aff0()) else {
        return Err(Error::NotAff0(template.boundary_max()));
    };
    if !(params.max_scale > 0.0) || !params.max_scale.is_finite() {
        return Err(Error::param("max_scale", format!("must be positive, got {}", params.max_scale)));
    }
    if !(0.0..1.0).contains(&params.eta) {
        return Err(Error::param("eta", format!("must lie in [0, 1), got {}", params.eta)));
    }
    let alpha0 = 0.5 * params.max_scale;
    let full_ref = reference.area();
    let tmesh = template.mesh();

    let mut vertices: Vec<Point> = Vec::new();
    let mut values: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut host_gradient = Vec::new();
    let mut in_copy = Vec::new();
    let mut covered_area = 0.0;
    let mut copies = 0;

    for region in regions(host) {
        let clipped = |poly: &[Point]| -> Vec<(usize, Vec<Point>)> {
            let b = poly_box(poly);
            region
                .triangles
                .iter()
                .enumerate()
                .filter(|(i, _)| boxes_overlap(&region.boxes[*i], &b))
                .map(|(i, t)| (i, clip_to_triangle(poly, t)))
                .filter(|(_, p)| p.len() >= 3)
                .collect()
        };
        let mut current = root_lattice(reference, &region.bbox, alpha0);
        let mut region_covered = 0.0;
        let mut residual: Vec<Vec<Point>> = Vec::new();
        for depth in 0..=params.max_depth {
            let mut partial = Vec::new();
            for leaf in &current {
                let poly = leaf_polygon(reference, leaf);
                let full = full_ref * leaf.alpha * leaf.alpha;
                let pieces = clipped(&poly);
                let inside: f64 = pieces.iter().map(|(_, p)| polygon_area(p)).sum();
                if inside <= 1e-12 * full {
                    continue;
                }
                if inside >= full * (1.0 - 1e-10) {
                    let base = vertices.len();
                    for (y, v) in tmesh.vertices().iter().zip(template.values()) {
                        let x = [leaf.a[0] + leaf.alpha * y[0], leaf.a[1] + leaf.alpha * y[1]];
                        vertices.push(x);
                        values.push(region.host_value(x) + *v * leaf.alpha);
                    }
                    for t in tmesh.triangles() {
                        triangles.push(t.map(|i| base + i));
                        host_gradient.push(region.gradient);
                        in_copy.push(true);
                    }
                    region_covered += full;
                    copies += 1;
                } else {
                    partial.push((*leaf, pieces));
                }
            }
            let done = region_covered >= (1.0 - params.eta) * region.area;
            if done || depth == params.max_depth {
                residual.extend(partial.into_iter().flat_map(|(_, pieces)| pieces.into_iter().map(|(_, p)| p)));
                break;
            }
            current = partial.iter().flat_map(|(leaf, _)| children(reference, leaf)).collect();
        }
        for poly in residual {
            for k in 1..poly.len() - 1 {
                let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
                if signed_area(a, b, c).abs() <= 2.0 * MIN_CELL_AREA {
                    continue;
                }
                let base = vertices.len();
                for x in [a, b, c] {
                    vertices.push(x);
                    values.push(region.host_value(x));
                }
                triangles.push([base, base + 1, base + 2]);
                host_gradient.push(region.gradient);
                in_copy.push(false);
            }
        }
        covered_area += region_covered;
    }

    let hmesh = host.mesh();
    let segments: Vec<(Point, Point)> = hmesh
        .boundary_edges()
        .keys()
        .map(|&(a, b)| (hmesh.vertices()[a], hmesh.vertices()[b]))
        .collect();
    let bb = hmesh.bounding_box();
    let tol = 1e-12 * (1.0 + (bb[2] - bb[0]).max(bb[3] - bb[1]));
    let boundary = vertices
        .iter()
        .map(|x| segments.iter().any(|(a, b)| point_segment_distance(*x, *a, *b) <= tol))
        .collect();
    let mesh = TriMesh::with_boundary(vertices, triangles, boundary)?;
    let field = PwAffineField::new(mesh, values)?;
    Ok(PastedField {
        field,
        coverage: covered_area / hmesh.total_area(),
        covered_area,
        copies,
        host_gradient,
        in_copy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::w0_closed_form;
    use crate::pw_affine::{build_diamond_hat, build_square_hat};
    use crate::EnergyModel;

    fn unit_host(xi: &Mat32) -> PwAffineField {
        PwAffineField::affine(TriMesh::unit_square(1).unwrap(), xi, Vec3::ZERO)
    }

    #[test]
    fn clipping_areas() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!((polygon_area(&clip_to_triangle(&sq, &tri)) - 0.5).abs() < 1e-15);
        let outside = [[2.0, 2.0], [3.0, 2.0], [3.0, 3.0]];
        assert!(clip_to_triangle(&outside, &tri).len() < 3);
    }

    #[test]
    fn square_template_covers_square_exactly() {
        let template = build_square_hat(&Vec3::E3, 1.0).unwrap();
        let host = unit_host(&Mat32::identity_embedding());
        let out = vitali_paste(&host, &template, &VitaliParams::default()).unwrap();
        assert!(out.coverage >= 0.999);
        assert!((out.coverage - 1.0).abs() < 1e-12);
        assert_eq!(out.copies, 32 * 32);
        assert!(out.in_copy.iter().all(|c| *c));
    }

    #[test]
    fn diamond_template_reaches_target_coverage() {
        let template = build_diamond_hat(&Vec3::E3, 1.0).unwrap();
        let host = unit_host(&Mat32::identity_embedding());
        let out = vitali_paste(&host, &template, &VitaliParams::default()).unwrap();
        assert!(out.coverage >= 0.999, "{}", out.coverage);
        assert!((out.field.mesh().total_area() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn field_is_continuous_and_sup_scales() {
        let nu = Vec3::new(0.0, 0.6, 0.8);
        let template = build_diamond_hat(&nu, 1.5).unwrap();
        let xi = Mat32::from_cols(Vec3::new(1.0, 0.2, 0.0), Vec3::new(0.1, 1.0, 0.3));
        let host = unit_host(&xi);
        let params = VitaliParams { max_scale: 0.125, ..VitaliParams::default() };
        let out = vitali_paste(&host, &template, &params).unwrap();
        assert!(out.perturbation_sup(&host) <= params.max_scale * template.sup_norm() + 1e-15);
        // every vertex of every cell agrees with the value any other cell
        // containing that point assigns to it
        let mesh = out.field.mesh();
        for x in mesh.vertices().iter().step_by(7) {
            let vals: Vec<Vec3> = (0..mesh.cell_count())
                .filter(|&c| mesh.barycentric(c, *x).iter().all(|&l| l >= -1e-12))
                .map(|c| out.field.eval_in_cell(c, *x))
                .collect();
            for v in &vals {
                assert!((*v - vals[0]).norm() < 1e-12);
            }
        }
        // boundary values are those of the host
        for (x, (v, b)) in mesh.vertices().iter().zip(out.field.values().iter().zip(mesh.boundary_flags())) {
            if *b {
                assert!((*v - host.eval(*x).unwrap()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn covered_energy_matches_template_mean() {
        let model = EnergyModel::reciprocal(2.0).unwrap();
        let w0 = |xi: &Mat32| w0_closed_form(&model, xi).value.to_f64();
        let xi = Mat32::identity_embedding();
        let template = build_diamond_hat(&Vec3::E3, 1.0).unwrap();
        let mean: f64 = template
            .gradient_cells()
            .iter()
            .map(|g| g.area * w0(&(xi + g.gradient)))
            .sum::<f64>()
            / 2.0;
        let out = vitali_paste(&unit_host(&xi), &template, &VitaliParams::default()).unwrap();
        let covered: f64 = out
            .field
            .gradient_cells()
            .iter()
            .filter(|g| out.in_copy[g.cell])
            .map(|g| g.area * w0(&g.gradient))
            .sum();
        assert!((covered - out.covered_area * mean).abs() < 1e-10, "{covered} vs {}", out.covered_area * mean);
    }

    #[test]
    fn regions_split_by_gradient() {
        // a host with a kink along x₁ = ½
        let mesh = TriMesh::rectangle(0.0, 1.0, 0.0, 1.0, 2, 1).unwrap();
        let values = mesh
            .vertices()
            .iter()
            .map(|x| Vec3::new(x[0], x[1], (x[0] - 0.5).abs()))
            .collect();
        let host = PwAffineField::new(mesh, values).unwrap();
        assert_eq!(regions(&host).len(), 2);
        let template = build_square_hat(&Vec3::E3, 1.0).unwrap();
        let out = vitali_paste(&host, &template, &VitaliParams::default()).unwrap();
        assert!((out.coverage - 1.0).abs() < 1e-12);
        for g in out.field.gradient_cells() {
            let kink = if out.host_gradient[g.cell].cols[0][2] > 0.0 { 1.0 } else { -1.0 };
            assert!((out.host_gradient[g.cell].cols[0][2] - kink).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_templates() {
        let host = unit_host(&Mat32::identity_embedding());
        assert!(vitali_paste(&host, &host, &VitaliParams::default()).is_err());
        let template = build_square_hat(&Vec3::E3, 1.0).unwrap();
        let bad = VitaliParams { max_scale: 0.0, ..VitaliParams::default() };
        assert!(vitali_paste(&host, &template, &bad).is_err());
    }
}
