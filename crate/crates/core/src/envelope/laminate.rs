//! Rank-one lamination of isotropic membrane densities.
//!
//! An isotropic density depends on `ξ` only through its stretches
//! `σ₁ ≥ σ₂ ≥ 0`, so level tables over `(σ₁, σ₂)` are enough to steer the
//! split search. The tables only guide: every value returned by
//! [`LaminationTables::laminate`] is the value of an explicit laminate of
//! the base density, obtained by re-evaluating the chosen split's endpoints
//! recursively.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::MembraneDensity;
use crate::error::{Error, Result};
use crate::tensor::{ExtValue, Mat32, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchParams {
    /// Planar directions `n = (cos θ, sin θ)`, `θ = kπ/angles`.
    pub angles: usize,
    /// Log-spaced magnitudes in `[s_min, s_max]`.
    pub magnitudes: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// `λ ∈ {1/(m+1), …, m/(m+1)}`.
    pub lambdas: usize,
    /// Step halvings in the pattern-search polish.
    pub polish_rounds: usize,
    /// Stretch grid: pitch `fine_pitch` on `[0, fine_max]`, then
    /// `coarse_pitch` up to `table_max`.
    pub fine_pitch: f64,
    pub fine_max: f64,
    pub coarse_pitch: f64,
    pub table_max: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            angles: 8,
            magnitudes: 24,
            s_min: 1e-2,
            s_max: 10.0,
            lambdas: 7,
            polish_rounds: 10,
            fine_pitch: 0.05,
            fine_max: 4.0,
            coarse_pitch: 0.25,
            table_max: 14.0,
        }
    }
}

impl SearchParams {
    /// A small grid for quick runs.
    pub fn coarse() -> Self {
        SearchParams {
            angles: 4,
            magnitudes: 12,
            lambdas: 3,
            polish_rounds: 8,
            fine_pitch: 0.1,
            fine_max: 4.0,
            coarse_pitch: 0.5,
            table_max: 12.0,
            ..SearchParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("s_min", self.s_min),
            ("fine_pitch", self.fine_pitch),
            ("coarse_pitch", self.coarse_pitch),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.s_max > self.s_min) {
            return Err(Error::param("s_max", "must exceed s_min"));
        }
        if !(self.fine_max > 0.0) || !(self.table_max >= self.fine_max) {
            return Err(Error::param("table_max", "need 0 < fine_max ≤ table_max"));
        }
        if self.angles == 0 || self.magnitudes < 2 || self.lambdas == 0 {
            return Err(Error::param("angles", "search grid needs angles ≥ 1, magnitudes ≥ 2, lambdas ≥ 1"));
        }
        Ok(())
    }
}

/// Unit representatives of `{−1,0,1}³ ∖ 0` up to sign.
pub fn hemisphere_net() -> Vec<Vec3> {
    let mut out = Vec::with_capacity(13);
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                let v = [i, j, k];
                let first = v.iter().copied().find(|c| *c != 0);
                if first == Some(1) {
                    out.push(Vec3::new(i as f64, j as f64, k as f64).normalized().unwrap());
                }
            }
        }
    }
    out
}

/// A laminate split `ξ = λ ξ⁺ + (1 − λ) ξ⁻` with `ξ⁺ − ξ⁻ = s a ⊗ n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub lambda: f64,
    pub a: Vec3,
    pub n: [f64; 2],
    pub s: f64,
}

impl Split {
    pub fn endpoints(&self, xi: &Mat32) -> (Mat32, Mat32) {
        let r = Mat32::rank_one(&self.a, self.n) * self.s;
        (*xi + r * (1.0 - self.lambda), *xi - r * self.lambda)
    }
}

/// Piecewise-uniform stretch axis.
#[derive(Clone, Debug)]
struct StretchAxis {
    nodes: Vec<f64>,
    fine_pitch: f64,
    fine_count: usize,
    coarse_pitch: f64,
}

impl StretchAxis {
    fn new(p: &SearchParams) -> Self {
        let fine_count = (p.fine_max / p.fine_pitch).round() as usize;
        let fine_max = fine_count as f64 * p.fine_pitch;
        let coarse_count = ((p.table_max - fine_max) / p.coarse_pitch).round() as usize;
        let mut nodes: Vec<f64> = (0..=fine_count).map(|i| i as f64 * p.fine_pitch).collect();
        nodes.extend((1..=coarse_count).map(|i| fine_max + i as f64 * p.coarse_pitch));
        StretchAxis {
            nodes,
            fine_pitch: p.fine_pitch,
            fine_count,
            coarse_pitch: p.coarse_pitch,
        }
    }

    fn max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Cell index and local coordinate in `[0, 1]`.
    fn locate(&self, s: f64) -> Option<(usize, f64)> {
        if !(s >= 0.0) || s > self.max() {
            return None;
        }
        let fine_max = self.nodes[self.fine_count];
        let (i, lo, h) = if s <= fine_max {
            let i = ((s / self.fine_pitch) as usize).min(self.fine_count.saturating_sub(1));
            (i, self.nodes[i], self.fine_pitch)
        } else {
            let k = ((s - fine_max) / self.coarse_pitch) as usize;
            let i = (self.fine_count + k).min(self.nodes.len() - 2);
            (i, self.nodes[i], self.coarse_pitch)
        };
        Some((i, ((s - lo) / h).clamp(0.0, 1.0)))
    }
}

pub type SharedDensity = Arc<dyn MembraneDensity + Send>;

/// Level tables `T₀ = f`, `T_k = min(T_{k−1}, best split of T_{k−1})` on a
/// stretch grid, for a density `f` invariant under rotations on the left and
/// orthogonal maps on the right.
pub struct LaminationTables {
    density: SharedDensity,
    params: SearchParams,
    axis: StretchAxis,
    directions: Vec<Vec3>,
    levels: Vec<Vec<f64>>,
}

impl LaminationTables {
    /// Builds `T₀ … T_{levels−1}`.
    pub fn build(density: SharedDensity, levels: usize, params: SearchParams) -> Result<Self> {
        params.validate()?;
        if levels == 0 {
            return Err(Error::param("levels", "need at least one table level"));
        }
        let axis = StretchAxis::new(&params);
        let n = axis.nodes.len();
        let base: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                if j > i {
                    return f64::NAN;
                }
                density.eval(&Mat32::diagonal(axis.nodes[i], axis.nodes[j])).to_f64()
            })
            .collect();
        let mut tables = LaminationTables {
            density,
            params,
            axis,
            directions: hemisphere_net(),
            levels: vec![symmetrize(base, n)],
        };
        for level in 1..levels {
            let next: Vec<f64> = (0..n * n)
                .into_par_iter()
                .map(|idx| {
                    let (i, j) = (idx / n, idx % n);
                    let prev = tables.levels[level - 1][idx];
                    if j > i {
                        return f64::NAN;
                    }
                    let xi = Mat32::diagonal(tables.axis.nodes[i], tables.axis.nodes[j]);
                    match tables.best_split(level - 1, &xi) {
                        Some((_, v)) => prev.min(v),
                        None => prev,
                    }
                })
                .collect();
            tables.levels.push(symmetrize(next, n));
        }
        Ok(tables)
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn params(&self) -> &SearchParams {
        &self.params
    }

    pub fn density(&self) -> &dyn MembraneDensity {
        self.density.as_ref()
    }

    /// Largest stretch covered by the tables.
    pub fn max_stretch(&self) -> f64 {
        self.axis.max()
    }

    /// Stretch-grid nodes.
    pub fn nodes(&self) -> &[f64] {
        &self.axis.nodes
    }

    /// Bilinear interpolant of `T_level` at stretches `(σ₁, σ₂)`; `None`
    /// outside the grid.
    pub fn interpolate(&self, level: usize, s1: f64, s2: f64) -> Option<f64> {
        let (i, u) = self.axis.locate(s1)?;
        let (j, w) = self.axis.locate(s2)?;
        let n = self.axis.nodes.len();
        let t = &self.levels[level];
        let at = |a: usize, b: usize| t[a * n + b];
        let corners = [at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)];
        let weights = [(1.0 - u) * (1.0 - w), u * (1.0 - w), (1.0 - u) * w, u * w];
        let mut v = 0.0;
        for (c, wt) in corners.iter().zip(weights) {
            if wt > 0.0 {
                if !c.is_finite() {
                    return Some(f64::INFINITY);
                }
                v += wt * c;
            }
        }
        Some(v)
    }

    /// Table value at `ξ`, falling back to the density outside the grid.
    pub fn table_value(&self, level: usize, xi: &Mat32) -> f64 {
        let (s1, s2) = xi.stretches();
        self.interpolate(level, s1, s2)
            .unwrap_or_else(|| self.density.eval(&Mat32::diagonal(s1, s2)).to_f64())
    }

    fn split_value(&self, level: usize, xi: &Mat32, split: &Split) -> f64 {
        let (p, m) = split.endpoints(xi);
        let vp = self.table_value(level, &p);
        if !vp.is_finite() {
            return f64::INFINITY;
        }
        let vm = self.table_value(level, &m);
        split.lambda * vp + (1.0 - split.lambda) * vm
    }

    /// Best split of `ξ` measured with `T_level`, after grid search and a
    /// pattern-search polish.
    pub fn best_split(&self, level: usize, xi: &Mat32) -> Option<(Split, f64)> {
        let p = &self.params;
        let log_lo = p.s_min.ln();
        let log_step = (p.s_max.ln() - log_lo) / (p.magnitudes - 1) as f64;
        let mut best: Option<(Split, f64)> = None;
        for a in &self.directions {
            for k in 0..p.angles {
                let theta = k as f64 * PI / p.angles as f64;
                let n = [theta.cos(), theta.sin()];
                for m in 0..p.magnitudes {
                    let s = (log_lo + m as f64 * log_step).exp();
                    for l in 1..=p.lambdas {
                        let split = Split {
                            lambda: l as f64 / (p.lambdas + 1) as f64,
                            a: *a,
                            n,
                            s,
                        };
                        let v = self.split_value(level, xi, &split);
                        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.1) {
                            best = Some((split, v));
                        }
                    }
                }
            }
        }
        best.map(|(split, v)| self.polish(level, xi, split, v))
    }

    fn polish(&self, level: usize, xi: &Mat32, start: Split, start_value: f64) -> (Split, f64) {
        // coordinates: polar/azimuth of a, angle of n, ln s, λ
        let to_coords = |s: &Split| {
            let a = s.a;
            [a[2].clamp(-1.0, 1.0).acos(), a[1].atan2(a[0]), s.n[1].atan2(s.n[0]), s.s.ln(), s.lambda]
        };
        let from_coords = |c: &[f64; 5]| Split {
            a: Vec3::new(c[0].sin() * c[1].cos(), c[0].sin() * c[1].sin(), c[0].cos()),
            n: [c[2].cos(), c[2].sin()],
            s: c[3].exp(),
            lambda: c[4],
        };
        let mut x = to_coords(&start);
        let mut fx = start_value;
        let mut best = start;
        let mut step = [0.2, 0.2, 0.2, 0.3, 0.05];
        for _ in 0..self.params.polish_rounds {
            let mut improved = true;
            while improved {
                improved = false;
                for k in 0..5 {
                    for dir in [1.0, -1.0] {
                        let mut y = x;
                        y[k] += dir * step[k];
                        if k == 4 && !(1e-3..=1.0 - 1e-3).contains(&y[4]) {
                            continue;
                        }
                        let cand = from_coords(&y);
                        let v = self.split_value(level, xi, &cand);
                        if v < fx - 1e-15 * (1.0 + fx.abs()) {
                            x = y;
                            fx = v;
                            best = cand;
                            improved = true;
                        }
                    }
                }
            }
            for s in step.iter_mut() {
                *s *= 0.5;
            }
        }
        (best, fx)
    }

    /// Depth-`depth` laminate value at `ξ`: `L₀ = f` and
    /// `L_k(ξ) = min(L_{k−1}(ξ), λ L_{k−1}(ξ⁺) + (1−λ) L_{k−1}(ξ⁻))` for the
    /// split chosen with `T_{k−1}`. Requires `depth ≤ levels()`.
    pub fn laminate(&self, xi: &Mat32, depth: usize) -> Result<Laminate> {
        if depth > self.levels() {
            return Err(Error::param(
                "depth",
                format!("depth {depth} needs {depth} table levels, have {}", self.levels()),
            ));
        }
        let (s1, s2) = xi.stretches();
        let lam = self.laminate_canonical(&Mat32::diagonal(s1, s2), depth);
        let direct = self.density.eval(xi);
        // the canonical frame can differ from ξ by rounding in the base density
        Ok(if lam.depth_used == 0 || direct <= lam.value {
            Laminate { value: direct, depth_used: 0, split: None }
        } else {
            lam
        })
    }

    fn laminate_canonical(&self, xi: &Mat32, depth: usize) -> Laminate {
        let base = || Laminate {
            value: self.density.eval(xi),
            depth_used: 0,
            split: None,
        };
        if depth == 0 {
            return base();
        }
        let prev = self.laminate_canonical(xi, depth - 1);
        let Some((split, _)) = self.best_split(depth - 1, xi) else {
            return prev;
        };
        let (p, m) = split.endpoints(xi);
        let lp = self.laminate_general(&p, depth - 1);
        if !lp.is_finite() {
            return prev;
        }
        let lm = self.laminate_general(&m, depth - 1);
        let cand = lp.scale(split.lambda) + lm.scale(1.0 - split.lambda);
        if cand < prev.value {
            Laminate {
                value: cand,
                depth_used: depth,
                split: Some(split),
            }
        } else {
            prev
        }
    }

    fn laminate_general(&self, xi: &Mat32, depth: usize) -> ExtValue {
        let (s1, s2) = xi.stretches();
        self.laminate_canonical(&Mat32::diagonal(s1, s2), depth).value
    }

    /// Interpolated top-level table, for probes and membrane solves.
    pub fn interpolant(self: &Arc<Self>, level: usize) -> EnvelopeInterpolant {
        EnvelopeInterpolant {
            tables: Arc::clone(self),
            level: level.min(self.levels() - 1),
        }
    }
}

fn symmetrize(mut t: Vec<f64>, n: usize) -> Vec<f64> {
    for i in 0..n {
        for j in (i + 1)..n {
            t[i * n + j] = t[j * n + i];
        }
    }
    t
}

/// Result of [`LaminationTables::laminate`]. `split` is the top-level split
/// in the canonical frame `diag(σ₁, σ₂)` when lamination helped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Laminate {
    pub value: ExtValue,
    /// Depth at which the last improvement happened (0: the density itself).
    pub depth_used: usize,
    pub split: Option<Split>,
}

/// `ξ ↦ T_level(σ₁(ξ), σ₂(ξ))`.
#[derive(Clone)]
pub struct EnvelopeInterpolant {
    tables: Arc<LaminationTables>,
    level: usize,
}

impl EnvelopeInterpolant {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn max_stretch(&self) -> f64 {
        self.tables.max_stretch()
    }

    /// `None` when the stretches leave the table.
    pub fn eval(&self, xi: &Mat32) -> Option<f64> {
        let (s1, s2) = xi.stretches();
        self.tables.interpolate(self.level, s1, s2)
    }

    pub fn try_eval(&self, xi: &Mat32) -> Result<f64> {
        let (s1, s2) = xi.stretches();
        self.tables.interpolate(self.level, s1, s2).ok_or(Error::OutsideTable {
            s1,
            s2,
            max: self.max_stretch(),
        })
    }

    /// Minimum over the table nodes.
    pub fn min_value(&self) -> f64 {
        self.tables.levels[self.level].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::bounds::four_corner_bound;
    use crate::fiber::w0_closed_form;
    use crate::EnergyModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn w0_density() -> SharedDensity {
        let m = EnergyModel::reciprocal(2.0).unwrap();
        Arc::new(move |xi: &Mat32| w0_closed_form(&m, xi).value)
    }

    fn small_params() -> SearchParams {
        SearchParams {
            table_max: 6.0,
            ..SearchParams::coarse()
        }
    }

    #[test]
    fn net_has_thirteen_unit_directions() {
        let net = hemisphere_net();
        assert_eq!(net.len(), 13);
        for (i, a) in net.iter().enumerate() {
            assert!((a.norm() - 1.0).abs() < 1e-15);
            for b in &net[..i] {
                assert!((a.dot(b).abs() - 1.0).abs() > 1e-9);
            }
        }
    }

    #[test]
    fn axis_lookup() {
        let axis = StretchAxis::new(&SearchParams::default());
        assert_eq!(axis.nodes.len(), 81 + 40);
        assert_eq!(axis.max(), 14.0);
        let (i, u) = axis.locate(0.125).unwrap();
        assert_eq!(i, 2);
        assert!((u - 0.5).abs() < 1e-12);
        let (i, u) = axis.locate(5.1).unwrap();
        assert!((axis.nodes[i] - 5.0).abs() < 1e-12 && (u - 0.4).abs() < 1e-12);
        assert!(axis.locate(14.0).is_some());
        assert!(axis.locate(14.01).is_none());
    }

    #[test]
    fn split_endpoints_average_back() {
        let xi = Mat32::from_cols(Vec3::new(1.0, 0.2, 0.0), Vec3::new(0.1, 0.8, 0.3));
        let split = Split {
            lambda: 0.3,
            a: Vec3::new(0.0, 0.6, 0.8),
            n: [0.6, 0.8],
            s: 1.7,
        };
        let (p, m) = split.endpoints(&xi);
        assert!((p * 0.3 + m * 0.7).max_abs_diff(&xi) < 1e-15);
        assert!(((p - m) - Mat32::rank_one(&split.a, split.n) * 1.7).max_abs_diff(&Mat32::ZERO) < 1e-15);
    }

    #[test]
    fn convex_density_is_a_fixed_point() {
        let f: SharedDensity = Arc::new(|xi: &Mat32| ExtValue::Finite(xi.norm_sq()));
        let tables = LaminationTables::build(f, 3, small_params()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let xi = Mat32::from_row_major(std::array::from_fn(|_| rng.random_range(-1.5..1.5)));
            for depth in 0..=3 {
                let v = tables.laminate(&xi, depth).unwrap().value.to_f64();
                assert!((v - xi.norm_sq()).abs() < 1e-9, "depth {depth}: {v} vs {}", xi.norm_sq());
            }
        }
    }

    #[test]
    fn laminates_decrease_and_stay_below_density() {
        let tables = LaminationTables::build(w0_density(), 2, small_params()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..8 {
            let xi = Mat32::from_row_major(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            let w0 = tables.density().eval(&xi);
            let mut last = w0;
            for depth in 1..=2 {
                let v = tables.laminate(&xi, depth).unwrap().value;
                assert!(v <= last);
                assert!(v.to_f64() >= xi.norm_sq() - 1e-9);
                last = v;
            }
        }
    }

    #[test]
    fn depth_two_beats_four_corner() {
        let tables = LaminationTables::build(w0_density(), 2, small_params()).unwrap();
        let xi = Mat32::identity_embedding();
        let lam = tables.laminate(&xi, 2).unwrap();
        let corner = four_corner_bound(&xi, tables.density()).unwrap().to_f64();
        assert!(lam.value.to_f64() <= corner + 1e-6, "{lam:?} vs {corner}");
    }

    #[test]
    fn rank_deficient_gradients_become_finite() {
        let tables = LaminationTables::build(w0_density(), 2, small_params()).unwrap();
        let rank_one = Mat32::from_cols(Vec3::E1, Vec3::E1);
        assert_eq!(tables.laminate(&rank_one, 0).unwrap().value, ExtValue::Infinite);
        assert!(tables.laminate(&rank_one, 1).unwrap().value.is_finite());
        // every rank-one split of 0 has rank-one endpoints, so one level is not enough
        assert_eq!(tables.laminate(&Mat32::ZERO, 1).unwrap().value, ExtValue::Infinite);
        assert!(tables.laminate(&Mat32::ZERO, 2).unwrap().value.is_finite());
        assert!(tables.laminate(&Mat32::ZERO, 3).is_err());
    }

    #[test]
    fn interpolant_matches_nodes() {
        let tables = Arc::new(LaminationTables::build(w0_density(), 1, small_params()).unwrap());
        let f = tables.interpolant(0);
        let xi = Mat32::diagonal(1.0, 0.5);
        let exact = tables.density().eval(&xi).to_f64();
        assert!((f.eval(&xi).unwrap() - exact).abs() < 1e-12);
        assert!(f.try_eval(&Mat32::diagonal(100.0, 1.0)).is_err());
    }
}
