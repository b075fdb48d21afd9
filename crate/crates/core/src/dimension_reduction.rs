//! Thin films `Σ × (−ε/2, ε/2)` in rescaled coordinates, their membrane
//! counterparts, and sweeps over the thickness.
//!
//! A film is stored as `û(x, x₃) = u(x, εx₃)` on `Σ × (−½, ½)`, sampled on
//! `m` equally spaced layers and interpolated piecewise linearly in `x₃`.
//! Its rescaled gradient is `(∂₁û | ∂₂û | ε⁻¹∂₃û)`, evaluated once per prism
//! at the prism centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::sync::Arc;

use crate::director::{feasible_normal, DirectorAssignment};
use crate::energy::{EnergyModel, ModelSpec, StoredEnergy};
use crate::envelope::{EnvelopeInterpolant, LaminationTables, SearchParams, SharedDensity};
use crate::error::{Error, Result};
use crate::fiber::w0_closed_form;
use crate::fmt::fmt17;
use crate::optim::{lbfgs, LbfgsParams, Objective};
use crate::pw_affine::{triangle_gradient, Point, PwAffineField, TriMesh};
use crate::tensor::{ExtValue, Mat32, Mat33, Vec3};

/// Layered nodal values of a rescaled film.
#[derive(Clone, Debug, PartialEq)]
pub struct PrismField {
    mesh: TriMesh,
    layers: usize,
    eps: f64,
    /// `values[l * n + i]` is vertex `i` on layer `l`.
    values: Vec<Vec3>,
}

#[derive(Serialize)]
struct PrismJson<'a> {
    vertices: &'a [Point],
    triangles: &'a [[usize; 3]],
    layers: usize,
    eps: f64,
    values: &'a [Vec3],
}

fn check_layers(layers: usize) -> Result<()> {
    if layers < 3 || layers % 2 == 0 {
        return Err(Error::param("layers", format!("need an odd layer count ≥ 3, got {layers}")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", format!("thickness must be positive, got {eps}")));
    }
    Ok(())
}

impl PrismField {
    pub fn new(mesh: TriMesh, layers: usize, eps: f64, values: Vec<Vec3>) -> Result<Self> {
        check_layers(layers)?;
        check_eps(eps)?;
        if values.len() != layers * mesh.vertex_count() {
            return Err(Error::Mesh(format!(
                "{} values for {} layers of {} vertices",
                values.len(),
                layers,
                mesh.vertex_count()
            )));
        }
        Ok(PrismField {
            mesh,
            layers,
            eps,
            values,
        })
    }

    /// `û(x, x₃) = v(x)`.
    pub fn layer_constant(v: &PwAffineField, layers: usize, eps: f64) -> Result<Self> {
        let values = (0..layers).flat_map(|_| v.values().iter().copied()).collect();
        PrismField::new(v.mesh().clone(), layers, eps, values)
    }

    /// `û(x, x₃) = v(x) + ε x₃ φ(x)`, i.e. `u(x, y₃) = v(x) + y₃ φ(x)` in
    /// physical coordinates; `phi` holds nodal values on `v`'s mesh.
    pub fn recovery(v: &PwAffineField, phi: &[Vec3], layers: usize, eps: f64) -> Result<Self> {
        if phi.len() != v.mesh().vertex_count() {
            return Err(Error::Mesh("director has the wrong number of nodal values".into()));
        }
        check_layers(layers)?;
        let mut values = Vec::with_capacity(layers * phi.len());
        for l in 0..layers {
            let x3 = layer_x3(l, layers);
            values.extend(v.values().iter().zip(phi).map(|(a, b)| *a + *b * (eps * x3)));
        }
        PrismField::new(v.mesh().clone(), layers, eps, values)
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    /// The same rescaled field read at another thickness.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        PrismField::new(self.mesh.clone(), self.layers, eps, self.values.clone())
    }

    pub fn layer(&self, l: usize) -> &[Vec3] {
        let n = self.mesh.vertex_count();
        &self.values[l * n..(l + 1) * n]
    }

    /// Rescaled gradient on the prism over `cell` between layers `l` and
    /// `l + 1`, at its centroid.
    pub fn rescaled_gradient(&self, cell: usize, l: usize) -> Mat33 {
        let t = self.mesh.triangles()[cell];
        let p = self.mesh.cell_points(cell);
        let (lo, hi) = (self.layer(l), self.layer(l + 1));
        let g = (triangle_gradient(p, t.map(|i| lo[i])) + triangle_gradient(p, t.map(|i| hi[i]))) * 0.5;
        let mean = |vals: &[Vec3]| (vals[t[0]] + vals[t[1]] + vals[t[2]]) * (1.0 / 3.0);
        let d3 = (mean(hi) - mean(lo)) * ((self.layers - 1) as f64 / self.eps);
        g.with_third(d3)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PrismJson {
            vertices: self.mesh.vertices(),
            triangles: self.mesh.triangles(),
            layers: self.layers,
            eps: self.eps,
            values: &self.values,
        })?)
    }
}

/// `x₃` of layer `l` in `[−½, ½]`.
pub fn layer_x3(l: usize, layers: usize) -> f64 {
    -0.5 + l as f64 / (layers - 1) as f64
}

/// `π_ε(u) = ∫_{−½}^{½} û(·, x₃) dx₃` by the trapezoidal rule over layers.
pub fn pi_eps_average(u: &PrismField) -> PwAffineField {
    let n = u.mesh.vertex_count();
    let h = 1.0 / (u.layers - 1) as f64;
    let mut avg = vec![Vec3::ZERO; n];
    for l in 0..u.layers {
        let w = if l == 0 || l == u.layers - 1 { 0.5 * h } else { h };
        for (a, v) in avg.iter_mut().zip(u.layer(l)) {
            *a += *v * w;
        }
    }
    PwAffineField::new(u.mesh.clone(), avg).expect("averages of finite values are finite")
}

/// `∫_{Σ×(−½,½)} W(∂₁û | ∂₂û | ε⁻¹∂₃û)`, one centroid point per prism.
pub fn thin_film_energy(u: &PrismField, energy: &dyn StoredEnergy) -> ExtValue {
    let h = 1.0 / (u.layers - 1) as f64;
    let mut total = ExtValue::ZERO;
    for cell in 0..u.mesh.cell_count() {
        let vol = u.mesh.areas()[cell] * h;
        for l in 0..u.layers - 1 {
            total += energy.energy(&u.rescaled_gradient(cell, l)).scale(vol);
            if !total.is_finite() {
                return total;
            }
        }
    }
    total
}

/// `Ψ((x, x₃), ζ) = ⟨ψ(x, x₃), ζ⟩ + |ζ|^p` with `ψ` affine:
/// `ψ(y) = A y + b` for `y = (x₁, x₂, x₃)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadPotential {
    /// Rows of `A`.
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
    pub p: f64,
}

impl LoadPotential {
    pub fn zero(p: f64) -> Self {
        LoadPotential {
            matrix: [[0.0; 3]; 3],
            offset: [0.0; 3],
            p,
        }
    }

    /// `ψ = −k (x₁ − c₁, x₂ − c₂, 0)`; for `k > 0` the pointwise optimum
    /// `v = −ψ/2` (at `p = 2`) pulls material away from `c`.
    pub fn stretching(strength: f64, center: [f64; 2], p: f64) -> Self {
        LoadPotential {
            matrix: [[-strength, 0.0, 0.0], [0.0, -strength, 0.0], [0.0; 3]],
            offset: [strength * center[0], strength * center[1], 0.0],
            p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("load exponent must exceed 1, got {}", self.p)));
        }
        if self.matrix.iter().flatten().chain(&self.offset).any(|x| !x.is_finite()) {
            return Err(Error::param("load", "coefficients must be finite"));
        }
        Ok(())
    }

    pub fn psi(&self, x: Point, x3: f64) -> Vec3 {
        let y = [x[0], x[1], x3];
        Vec3(std::array::from_fn(|r| {
            self.matrix[r][0] * y[0] + self.matrix[r][1] * y[1] + self.matrix[r][2] * y[2] + self.offset[r]
        }))
    }

    pub fn density(&self, x: Point, x3: f64, zeta: &Vec3) -> f64 {
        self.psi(x, x3).dot(zeta) + norm_pow(zeta.norm_sq(), self.p)
    }

    /// `∂Ψ/∂ζ`.
    pub fn gradient(&self, x: Point, x3: f64, zeta: &Vec3) -> Vec3 {
        let ns = zeta.norm_sq();
        let c = if self.p == 2.0 {
            2.0
        } else if ns > 0.0 {
            self.p * ns.powf(0.5 * self.p - 1.0)
        } else {
            0.0
        };
        self.psi(x, x3) + *zeta * c
    }
}

fn norm_pow(norm_sq: f64, p: f64) -> f64 {
    if p == 2.0 {
        norm_sq
    } else {
        norm_sq.powf(0.5 * p)
    }
}

/// `L_ε(u) = ∫_{Σ×(−½,½)} Ψ((x, x₃), û)`, centroid rule per prism.
pub fn thin_film_load(u: &PrismField, load: &LoadPotential) -> f64 {
    let h = 1.0 / (u.layers - 1) as f64;
    let mut total = 0.0;
    for (cell, t) in u.mesh.triangles().iter().enumerate() {
        let c = u.mesh.centroid(cell);
        for l in 0..u.layers - 1 {
            let x3 = layer_x3(l, u.layers) + 0.5 * h;
            let (lo, hi) = (u.layer(l), u.layer(l + 1));
            let mean = t.iter().map(|&i| lo[i] + hi[i]).fold(Vec3::ZERO, |a, b| a + b) * (1.0 / 6.0);
            total += u.mesh.areas()[cell] * h * load.density(c, x3, &mean);
        }
    }
    total
}

fn cell_mean(v: &PwAffineField, cell: usize) -> Vec3 {
    let t = v.mesh().triangles()[cell];
    (v.values()[t[0]] + v.values()[t[1]] + v.values()[t[2]]) * (1.0 / 3.0)
}

/// `L_mem(v) = ∫_Σ Ψ((x, 0), v)`, centroid rule.
pub fn membrane_load(v: &PwAffineField, load: &LoadPotential) -> f64 {
    (0..v.mesh().cell_count())
        .map(|c| v.mesh().areas()[c] * load.density(v.mesh().centroid(c), 0.0, &cell_mean(v, c)))
        .sum()
}

/// `‖a − b‖_{L^p}` with the centroid rule; both fields on the same mesh.
pub fn lp_distance(a: &PwAffineField, b: &PwAffineField, p: f64) -> Result<f64> {
    if a.mesh() != b.mesh() {
        return Err(Error::Mesh("fields live on different meshes".into()));
    }
    let s: f64 = (0..a.mesh().cell_count())
        .map(|c| a.mesh().areas()[c] * norm_pow((cell_mean(a, c) - cell_mean(b, c)).norm_sq(), p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// `∫_Σ W(∇v | φ)` with `φ` nodal on `v`'s mesh and the centroid rule, the
/// membrane-side counterpart of [`thin_film_energy`] for recovery fields.
pub fn director_energy(energy: &dyn StoredEnergy, v: &PwAffineField, phi: &[Vec3]) -> ExtValue {
    let mesh = v.mesh();
    (0..mesh.cell_count())
        .map(|c| {
            let t = mesh.triangles()[c];
            let z = (phi[t[0]] + phi[t[1]] + phi[t[2]]) * (1.0 / 3.0);
            energy.energy(&v.cell_gradient(c).with_third(z)).scale(mesh.areas()[c])
        })
        .sum()
}

#[derive(Clone, Debug)]
pub struct Recovery {
    pub u: PrismField,
    pub energy: ExtValue,
    /// `min |det(∇v | φ)|` over cell centroids.
    pub min_det: f64,
    pub floor_ok: bool,
}

/// Builds `û = v + ε x₃ φ` and its thin-film energy. A warning is logged
/// when `|det(∇v | φ)|` falls below `det_floor` at some centroid.
pub fn recovery_sequence(
    energy: &dyn StoredEnergy,
    v: &PwAffineField,
    phi: &[Vec3],
    eps: f64,
    layers: usize,
    det_floor: f64,
) -> Result<Recovery> {
    let u = PrismField::recovery(v, phi, layers, eps)?;
    let mesh = v.mesh();
    let min_det = (0..mesh.cell_count())
        .map(|c| {
            let t = mesh.triangles()[c];
            let z = (phi[t[0]] + phi[t[1]] + phi[t[2]]) * (1.0 / 3.0);
            v.cell_gradient(c).with_third(z).det().abs()
        })
        .fold(f64::INFINITY, f64::min);
    let floor_ok = min_det >= det_floor;
    if !floor_ok {
        log::warn!("director violates the determinant floor: min |det| = {min_det:e} < {det_floor:e}");
    }
    Ok(Recovery {
        energy: thin_film_energy(&u, energy),
        u,
        min_det,
        floor_ok,
    })
}

/// Per-cell P1 basis gradients, shared by the solvers.
struct CellGeometry {
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    centroids: Vec<Point>,
    basis: Vec<[[f64; 2]; 3]>,
}

impl CellGeometry {
    fn new(mesh: &TriMesh) -> Self {
        let basis = (0..mesh.cell_count())
            .map(|c| {
                let p = mesh.cell_points(c);
                let g = |k: usize| {
                    let mut vals = [Vec3::ZERO; 3];
                    vals[k] = Vec3::E1;
                    let m = triangle_gradient(p, vals);
                    [m.cols[0][0], m.cols[1][0]]
                };
                [g(0), g(1), g(2)]
            })
            .collect();
        CellGeometry {
            triangles: mesh.triangles().to_vec(),
            areas: mesh.areas().to_vec(),
            centroids: (0..mesh.cell_count()).map(|c| mesh.centroid(c)).collect(),
            basis,
        }
    }

    fn gradient(&self, c: usize, vals: &[Vec3]) -> Mat32 {
        let t = self.triangles[c];
        let b = &self.basis[c];
        let mut cols = [Vec3::ZERO; 2];
        for k in 0..3 {
            for (j, col) in cols.iter_mut().enumerate() {
                *col += vals[t[k]] * b[k][j];
            }
        }
        Mat32 { cols }
    }
}

fn to_vecs(x: &[f64]) -> Vec<Vec3> {
    x.chunks_exact(3).map(|c| Vec3([c[0], c[1], c[2]])).collect()
}

fn from_vecs(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|a| a.0).collect()
}

/// Thin-film objective in the variables `(M, D)` with
/// `U^l = M + ε D^l` and `D` fixed to zero on the middle layer, so that
/// in-plane and transverse unknowns are on the same scale.
struct FilmObjective<'a> {
    geo: CellGeometry,
    model: &'a EnergyModel,
    load: &'a LoadPotential,
    eps: f64,
    layers: usize,
    nv: usize,
}

impl FilmObjective<'_> {
    fn mid(&self) -> usize {
        self.layers / 2
    }

    fn unpack(&self, x: &[f64]) -> Vec<Vec3> {
        let nv = self.nv;
        let m = to_vecs(&x[..3 * nv]);
        let d = to_vecs(&x[3 * nv..]);
        let mut u = Vec::with_capacity(self.layers * nv);
        let mut k = 0;
        for l in 0..self.layers {
            if l == self.mid() {
                u.extend_from_slice(&m);
            } else {
                u.extend((0..nv).map(|i| m[i] + d[k * nv + i] * self.eps));
                k += 1;
            }
        }
        u
    }

    fn pack(&self, u: &[Vec3]) -> Vec<f64> {
        let nv = self.nv;
        let m = &u[self.mid() * nv..(self.mid() + 1) * nv];
        let mut x = from_vecs(m);
        for l in (0..self.layers).filter(|l| *l != self.mid()) {
            let d: Vec<Vec3> = (0..nv).map(|i| (u[l * nv + i] - m[i]) * (1.0 / self.eps)).collect();
            x.extend(from_vecs(&d));
        }
        x
    }

    fn prism_gradient(&self, u: &[Vec3], c: usize, l: usize) -> Mat33 {
        let nv = self.nv;
        let (lo, hi) = (&u[l * nv..(l + 1) * nv], &u[(l + 1) * nv..(l + 2) * nv]);
        let g = (self.geo.gradient(c, lo) + self.geo.gradient(c, hi)) * 0.5;
        let t = self.geo.triangles[c];
        let mean = |v: &[Vec3]| (v[t[0]] + v[t[1]] + v[t[2]]) * (1.0 / 3.0);
        g.with_third((mean(hi) - mean(lo)) * ((self.layers - 1) as f64 / self.eps))
    }

    /// Energy and load totals at nodal values `u`, with `∂/∂u` accumulated
    /// into `grad` when given.
    fn evaluate(&self, u: &[Vec3], mut grad: Option<&mut [Vec3]>) -> Option<(f64, f64)> {
        let nv = self.nv;
        let h = 1.0 / (self.layers - 1) as f64;
        let inv_d3 = (self.layers - 1) as f64 / self.eps;
        let (mut e, mut ld) = (0.0, 0.0);
        for c in 0..self.geo.triangles.len() {
            let t = self.geo.triangles[c];
            let b = self.geo.basis[c];
            let vol = self.geo.areas[c] * h;
            for l in 0..self.layers - 1 {
                let f = self.prism_gradient(u, c, l);
                let w = self.model.eval(&f).finite()?;
                e += vol * w;
                let x3 = layer_x3(l, self.layers) + 0.5 * h;
                let mean = t
                    .iter()
                    .map(|&i| u[l * nv + i] + u[(l + 1) * nv + i])
                    .fold(Vec3::ZERO, |a, b| a + b)
                    * (1.0 / 6.0);
                ld += vol * self.load.density(self.geo.centroids[c], x3, &mean);
                if let Some(g) = grad.as_deref_mut() {
                    let dw = self.model.gradient(&f)?;
                    let dl = self.load.gradient(self.geo.centroids[c], x3, &mean) * (vol / 6.0);
                    for k in 0..3 {
                        let inplane = (dw.cols[0] * b[k][0] + dw.cols[1] * b[k][1]) * (0.5 * vol);
                        let transverse = dw.cols[2] * (vol * inv_d3 / 3.0);
                        g[l * nv + t[k]] += inplane - transverse + dl;
                        g[(l + 1) * nv + t[k]] += inplane + transverse + dl;
                    }
                }
            }
        }
        Some((e, ld))
    }

    fn det_signs(&self, u: &[Vec3]) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.geo.triangles.len() * (self.layers - 1));
        for c in 0..self.geo.triangles.len() {
            for l in 0..self.layers - 1 {
                s.push(self.prism_gradient(u, c, l).det());
            }
        }
        s
    }
}

impl Objective for FilmObjective<'_> {
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        let u = self.unpack(x);
        let mut gu = vec![Vec3::ZERO; u.len()];
        let (e, l) = self.evaluate(&u, Some(&mut gu))?;
        let nv = self.nv;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut k = 0;
        for layer in 0..self.layers {
            for i in 0..nv {
                let g = gu[layer * nv + i];
                for r in 0..3 {
                    grad[3 * i + r] += g[r];
                }
            }
            if layer != self.mid() {
                for i in 0..nv {
                    let g = gu[layer * nv + i] * self.eps;
                    for r in 0..3 {
                        grad[3 * nv + 3 * (k * nv + i) + r] = g[r];
                    }
                }
                k += 1;
            }
        }
        Some(e + l)
    }

    fn admissible(&self, from: &[f64], to: &[f64]) -> bool {
        let a = self.det_signs(&self.unpack(from));
        let b = self.det_signs(&self.unpack(to));
        a.iter().zip(&b).all(|(x, y)| *y != 0.0 && x.signum() == y.signum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub max_iter: usize,
    /// Number of starts; start 0 is the given competitor, later ones are
    /// seeded perturbations of it.
    pub starts: usize,
    pub perturbation: f64,
    pub grad_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            max_iter: 3000,
            starts: 1,
            perturbation: 1e-3,
            grad_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ThinFilmSolution {
    pub u: PrismField,
    pub energy: f64,
    pub load: f64,
    pub total: f64,
    pub iterations: usize,
    /// Total of the starting competitor.
    pub start_total: f64,
    pub history: Vec<f64>,
}

/// Minimizes `E_ε + L_ε` over the nodal values of `start`'s mesh and layers,
/// starting from `start` and seeded perturbations of it.
pub fn minimize_thin_film(
    model: &EnergyModel,
    load: &LoadPotential,
    start: &PrismField,
    params: &SolverParams,
    seed: u64,
) -> Result<ThinFilmSolution> {
    load.validate()?;
    let obj = FilmObjective {
        geo: CellGeometry::new(start.mesh()),
        model,
        load,
        eps: start.eps(),
        layers: start.layers(),
        nv: start.mesh().vertex_count(),
    };
    let x0 = obj.pack(start.values());
    let start_total = obj.evaluate(&obj.unpack(&x0), None).map(|(e, l)| e + l);
    let lb = LbfgsParams {
        max_iter: params.max_iter,
        grad_tol: params.grad_tol,
        ..LbfgsParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(crate::optim::LbfgsOutcome, f64)> = None;
    for s in 0..params.starts.max(1) {
        let mut x = x0.clone();
        if s > 0 {
            for xi in x.iter_mut() {
                *xi += params.perturbation * rng.random_range(-1.0..1.0);
            }
        }
        let Some(out) = lbfgs(&obj, &x, &lb) else { continue };
        if best.as_ref().is_none_or(|(b, _)| out.value < b.value) {
            let v = out.value;
            best = Some((out, v));
        }
    }
    let (out, _) = best.ok_or_else(|| Error::Infeasible("every thin-film start has infinite energy".into()))?;
    let u = obj.unpack(&out.x);
    let (e, l) = obj.evaluate(&u, None).expect("accepted iterates are feasible");
    Ok(ThinFilmSolution {
        u: PrismField::new(start.mesh().clone(), start.layers(), start.eps(), u)?,
        energy: e,
        load: l,
        total: e + l,
        iterations: out.iterations,
        start_total: start_total.unwrap_or(f64::INFINITY),
        history: out.history,
    })
}

/// Membrane objective `Σ |Dᵢ| f(∇v) + L_mem(v)` with central differences for
/// `∂f/∂ξ`.
struct MembraneObjective<'a, F> {
    geo: CellGeometry,
    density: &'a F,
    load: &'a LoadPotential,
}

impl<F: Fn(&Mat32) -> Option<f64>> MembraneObjective<'_, F> {
    fn evaluate(&self, v: &[Vec3], mut grad: Option<&mut [Vec3]>) -> Option<(f64, f64)> {
        let (mut e, mut ld) = (0.0, 0.0);
        for c in 0..self.geo.triangles.len() {
            let t = self.geo.triangles[c];
            let b = self.geo.basis[c];
            let area = self.geo.areas[c];
            let xi = self.geo.gradient(c, v);
            let f = (self.density)(&xi)?;
            if !f.is_finite() {
                return None;
            }
            e += area * f;
            let mean = (v[t[0]] + v[t[1]] + v[t[2]]) * (1.0 / 3.0);
            ld += area * self.load.density(self.geo.centroids[c], 0.0, &mean);
            if let Some(g) = grad.as_deref_mut() {
                let mut d = Mat32::ZERO;
                for j in 0..2 {
                    for r in 0..3 {
                        let h = 1e-6 * (1.0 + xi.cols[j][r].abs());
                        let (mut p, mut m) = (xi, xi);
                        p.cols[j][r] += h;
                        m.cols[j][r] -= h;
                        let (fp, fm) = ((self.density)(&p)?, (self.density)(&m)?);
                        d.cols[j][r] = (fp - fm) / (2.0 * h);
                    }
                }
                let dl = self.load.gradient(self.geo.centroids[c], 0.0, &mean) * (area / 3.0);
                for k in 0..3 {
                    g[t[k]] += (d.cols[0] * b[k][0] + d.cols[1] * b[k][1]) * area + dl;
                }
            }
        }
        Some((e, ld))
    }
}

impl<F: Fn(&Mat32) -> Option<f64>> Objective for MembraneObjective<'_, F> {
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        let v = to_vecs(x);
        let mut g = vec![Vec3::ZERO; v.len()];
        let (e, l) = self.evaluate(&v, Some(&mut g))?;
        grad.copy_from_slice(&from_vecs(&g));
        Some(e + l)
    }
}

#[derive(Clone, Debug)]
pub struct MembraneSolution {
    pub v: PwAffineField,
    pub energy: f64,
    pub load: f64,
    pub total: f64,
    pub iterations: usize,
}

/// Minimizes `Σ |Dᵢ| f(∇v) + L_mem(v)` from `start`. `density` returns
/// `None` where it is unavailable (outside a tabulated range); such points
/// are treated as infeasible by the line search.
pub fn minimize_membrane<F: Fn(&Mat32) -> Option<f64>>(
    density: &F,
    load: &LoadPotential,
    start: &PwAffineField,
    params: &SolverParams,
) -> Result<MembraneSolution> {
    load.validate()?;
    let obj = MembraneObjective {
        geo: CellGeometry::new(start.mesh()),
        density,
        load,
    };
    let lb = LbfgsParams {
        max_iter: params.max_iter,
        grad_tol: params.grad_tol,
        ..LbfgsParams::default()
    };
    let out = lbfgs(&obj, &from_vecs(start.values()), &lb)
        .ok_or_else(|| Error::Infeasible("membrane start leaves the density's domain".into()))?;
    let v = PwAffineField::new(start.mesh().clone(), to_vecs(&out.x))?;
    let (e, l) = obj.evaluate(v.values(), None).expect("accepted iterates are feasible");
    Ok(MembraneSolution {
        v,
        energy: e,
        load: l,
        total: e + l,
        iterations: out.iterations,
    })
}

/// Nodal director for warm starts: area-weighted average of the per-cell
/// constrained minimizers, or `ζ̄` where that average would flip a sign.
pub fn nodal_director(assignment: &DirectorAssignment, mesh: &TriMesh) -> Vec<Vec3> {
    let mut acc = vec![Vec3::ZERO; mesh.vertex_count()];
    let mut w = vec![0.0; mesh.vertex_count()];
    for (c, t) in mesh.triangles().iter().enumerate() {
        for &i in t {
            acc[i] += assignment.zeta[c] * mesh.areas()[c];
            w[i] += mesh.areas()[c];
        }
    }
    let mut phi: Vec<Vec3> = acc.iter().zip(&w).map(|(a, w)| *a * (1.0 / w)).collect();
    for (c, t) in mesh.triangles().iter().enumerate() {
        let xi = assignment.gradients[c];
        let s = assignment.signs[c].factor();
        for &i in t {
            if s * xi.with_third(phi[i]).det() <= 0.0 {
                phi[i] = assignment.zeta_bar;
            }
        }
    }
    phi
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Minimize the film at each thickness.
    #[default]
    Minimize,
    /// Use the recovery field `v̄ + εx₃φ` without minimizing.
    Recovery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub eps: Vec<f64>,
    pub layers: usize,
    #[serde(default)]
    pub mode: SweepMode,
    #[serde(default)]
    pub film: SolverParams,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// `E_ε + L_ε` at the computed film.
    pub e3d: f64,
    /// `E_mem + L_mem` at the membrane minimizer.
    pub emem: f64,
    pub gap: f64,
    /// `‖π_ε(u_ε) − v̄‖_{L^p}`.
    pub lp_distance: f64,
    pub iterations: usize,
    /// `E_ε + L_ε` of the recovery competitor.
    pub competitor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub mode: SweepMode,
    pub rows: Vec<SweepRow>,
    pub membrane_total: f64,
    pub membrane_iterations: usize,
    pub j_v: u64,
    pub zeta_bar: Vec3,
    /// Every film is at or below its recovery competitor.
    pub competitor_dominated: bool,
    pub gap_trend_ok: bool,
    pub lp_trend_ok: bool,
}

/// `g_{k+1} ≤ g_k + tol · max_k |g_k|` for every `k`.
pub fn nonincreasing_within(seq: &[f64], tol: f64) -> bool {
    let scale = seq.iter().map(|x| x.abs()).fold(0.0, f64::max);
    seq.windows(2).all(|w| w[1] <= w[0] + tol * scale)
}

/// Relative slack used by the sweep trend checks.
pub const TREND_TOL: f64 = 0.05;

/// For each thickness: film from the warm start `v̄ + εx₃φ` (minimized or
/// not, per mode), its averaged field, the energy gap to the membrane and
/// the `L^p` distance to `v̄`.
pub fn gamma_sweep(
    model: &EnergyModel,
    load: &LoadPotential,
    membrane: &MembraneSolution,
    settings: &SweepSettings,
) -> Result<SweepReport> {
    if settings.eps.is_empty() {
        return Err(Error::param("eps", "schedule is empty"));
    }
    if !settings.eps.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::param("eps", "schedule must be strictly decreasing"));
    }
    for e in &settings.eps {
        check_eps(*e)?;
    }
    check_layers(settings.layers)?;
    let vbar = &membrane.v;
    let gradients: Vec<Mat32> = (0..vbar.mesh().cell_count()).map(|c| vbar.cell_gradient(c)).collect();
    let normal = feasible_normal(&gradients)
        .map_err(|e| Error::Infeasible(format!("membrane minimizer has no director: {e}")))?;
    let fine = DirectorAssignment::new(model, vbar, 64 * normal.j_v)?;
    let phi = nodal_director(&fine, vbar.mesh());
    let rows = settings
        .eps
        .par_iter()
        .enumerate()
        .map(|(k, &eps)| -> Result<SweepRow> {
            let start = PrismField::recovery(vbar, &phi, settings.layers, eps)?;
            let competitor = thin_film_energy(&start, model).to_f64() + thin_film_load(&start, load);
            let (u, e3d, iterations) = match settings.mode {
                SweepMode::Recovery => (start, competitor, 0),
                SweepMode::Minimize => {
                    let sol = minimize_thin_film(model, load, &start, &settings.film, settings.seed.wrapping_add(k as u64))?;
                    (sol.u, sol.total, sol.iterations)
                }
            };
            let avg = pi_eps_average(&u);
            Ok(SweepRow {
                eps,
                e3d,
                emem: membrane.total,
                gap: e3d - membrane.total,
                lp_distance: lp_distance(&avg, vbar, load.p)?,
                iterations,
                competitor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let dists: Vec<f64> = rows.iter().map(|r| r.lp_distance).collect();
    Ok(SweepReport {
        mode: settings.mode,
        competitor_dominated: rows.iter().all(|r| r.e3d <= r.competitor + 1e-12 * (1.0 + r.competitor.abs())),
        gap_trend_ok: nonincreasing_within(&gaps, TREND_TOL),
        lp_trend_ok: nonincreasing_within(&dists, TREND_TOL),
        rows,
        membrane_total: membrane.total,
        membrane_iterations: membrane.iterations,
        j_v: fine.j_v,
        zeta_bar: fine.zeta_bar,
    })
}

impl SweepReport {
    /// Columns `eps,E3D,Emem,gap,Lp_distance,iterations,competitor`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,E3D,Emem,gap,Lp_distance,iterations,competitor\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt17(r.eps),
                fmt17(r.e3d),
                fmt17(r.emem),
                fmt17(r.gap),
                fmt17(r.lp_distance),
                r.iterations,
                fmt17(r.competitor)
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Membrane density for the sweep: the tabulated envelope, capped by `W₀`
/// (both are upper bounds for the relaxed density, and bilinear
/// interpolation overshoots between nodes).
pub fn capped_envelope<'a>(
    interp: &'a EnvelopeInterpolant,
    model: &'a EnergyModel,
) -> impl Fn(&Mat32) -> Option<f64> + 'a {
    move |xi| {
        let t = interp.eval(xi)?;
        Some(t.min(w0_closed_form(model, xi).value.to_f64()))
    }
}

/// A complete membrane-versus-film experiment on the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub model: ModelSpec,
    /// Subdivisions per side of the unit square.
    pub mesh_n: usize,
    pub load: LoadPotential,
    #[serde(default)]
    pub envelope: SearchParams,
    /// Lamination level of the membrane density.
    pub envelope_level: usize,
    #[serde(default)]
    pub membrane: SolverParams,
    pub sweep: SweepSettings,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub membrane: MembraneSolution,
    pub report: SweepReport,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        EnergyModel::from_spec(self.model)?;
        self.load.validate()?;
        self.envelope.validate()?;
        if self.mesh_n == 0 {
            return Err(Error::param("mesh_n", "need at least one subdivision"));
        }
        if (self.load.p - self.model.p).abs() > 0.0 {
            return Err(Error::param("p", "load and model exponents differ"));
        }
        Ok(())
    }

    /// Builds the lamination tables this experiment needs.
    pub fn tables(&self) -> Result<Arc<LaminationTables>> {
        let model = EnergyModel::from_spec(self.model)?;
        let density: SharedDensity = Arc::new(move |xi: &Mat32| w0_closed_form(&model, xi).value);
        Ok(Arc::new(LaminationTables::build(density, self.envelope_level, self.envelope)?))
    }

    /// Membrane minimizer from the centred identity embedding.
    pub fn membrane(&self, tables: &Arc<LaminationTables>) -> Result<MembraneSolution> {
        let model = EnergyModel::from_spec(self.model)?;
        let interp = tables.interpolant(self.envelope_level.min(tables.levels()));
        let density = capped_envelope(&interp, &model);
        let start = PwAffineField::affine(
            TriMesh::unit_square(self.mesh_n)?,
            &Mat32::identity_embedding(),
            Vec3::new(-0.5, -0.5, 0.0),
        );
        minimize_membrane(&density, &self.load, &start, &self.membrane)
    }

    pub fn run_with(&self, tables: &Arc<LaminationTables>) -> Result<ExperimentOutcome> {
        self.validate()?;
        let model = EnergyModel::from_spec(self.model)?;
        let membrane = self.membrane(tables)?;
        let report = gamma_sweep(&model, &self.load, &membrane, &self.sweep)?;
        Ok(ExperimentOutcome { membrane, report })
    }

    pub fn run(&self) -> Result<ExperimentOutcome> {
        self.validate()?;
        self.run_with(&self.tables()?)
    }
}
