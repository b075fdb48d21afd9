use std::path::Path;

use memrelax_core::dimension_reduction::{Experiment, LoadPotential, SolverParams, SweepMode, SweepSettings};
use memrelax_core::envelope::SearchParams;
use memrelax_core::{EnergyModel, Mat32, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub seed: u64,
    pub out: String,
    pub w0: W0Section,
    pub envelope: EnvelopeSection,
    pub growth: GrowthSection,
    pub director: DirectorSection,
    pub recovery: RecoverySection,
    pub mesh: MeshSection,
    pub load: LoadSection,
    pub membrane: SolverParams,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSpec::default(),
            seed: 0,
            out: "out".into(),
            w0: W0Section::default(),
            envelope: EnvelopeSection::default(),
            growth: GrowthSection::default(),
            director: DirectorSection::default(),
            recovery: RecoverySection::default(),
            mesh: MeshSection::default(),
            load: LoadSection::default(),
            membrane: SolverParams::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Rows of `ξ` given as `[ξ₁₁, ξ₁₂, ξ₂₁, ξ₂₂, ξ₃₁, ξ₃₂]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct W0Section {
    pub points: Vec<[f64; 6]>,
    /// Grid size of the brute-force cross-check; 0 skips it.
    pub brute_grid: usize,
}

impl Default for W0Section {
    fn default() -> Self {
        W0Section {
            points: vec![[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], [2.0, 0.0, 0.0, 2.0, 0.0, 0.0]],
            brute_grid: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeSection {
    /// Lamination depth (number of table levels).
    pub depth: usize,
    pub slice_radius: f64,
    pub slice_pitch: f64,
    pub search: SearchParams,
}

impl Default for EnvelopeSection {
    fn default() -> Self {
        EnvelopeSection {
            depth: 2,
            slice_radius: 3.0,
            slice_pitch: 0.25,
            search: SearchParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthSection {
    pub depth: usize,
    pub radius: f64,
    pub pitch: f64,
}

impl Default for GrowthSection {
    fn default() -> Self {
        GrowthSection {
            depth: 2,
            radius: 3.0,
            pitch: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectorSection {
    /// Constant membrane gradient, rows as in `[w0] points`.
    pub gradient: [f64; 6],
    /// Subdivisions of the unit square; 1 gives two triangles.
    pub mesh_n: usize,
    pub j: Vec<u64>,
    pub nirf_j: u64,
    pub nirf_n: u64,
}

impl Default for DirectorSection {
    fn default() -> Self {
        DirectorSection {
            gradient: [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            mesh_n: 1,
            j: vec![1, 2, 4, 8, 16, 64],
            nirf_j: 4,
            nirf_n: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverySection {
    pub gradient: [f64; 6],
    pub eps: Vec<f64>,
    pub layers: usize,
    pub j: u64,
    pub n: u64,
    pub refinements: usize,
    pub det_floor: f64,
}

impl Default for RecoverySection {
    fn default() -> Self {
        RecoverySection {
            gradient: [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            eps: vec![0.1, 0.01, 0.001],
            layers: 5,
            j: 4,
            n: 8,
            refinements: 3,
            det_floor: 0.125,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    /// Subdivisions per side of the unit square.
    pub n: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { n: 8 }
    }
}

/// Either `stretching = k` (with `center`) or an explicit affine `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSection {
    pub stretching: Option<f64>,
    pub center: [f64; 2],
    pub matrix: Option<[[f64; 3]; 3]>,
    pub offset: Option<[f64; 3]>,
}

impl Default for LoadSection {
    fn default() -> Self {
        LoadSection {
            stretching: Some(4.0),
            center: [0.5, 0.5],
            matrix: None,
            offset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub layers: usize,
    pub mode: SweepMode,
    pub film: SolverParams,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            eps: vec![0.2, 0.1, 0.05, 0.025],
            layers: 5,
            mode: SweepMode::Minimize,
            film: SolverParams::default(),
        }
    }
}

pub fn gradient(rows: [f64; 6]) -> Mat32 {
    Mat32::from_row_major(rows)
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{key}` must be positive, got {v}")))
    }
}

fn solver(key: &str, s: &SolverParams) -> Result<(), CliError> {
    positive(&format!("{key}.grad_tol"), s.grad_tol)?;
    positive(&format!("{key}.perturbation"), s.perturbation)?;
    if s.starts == 0 {
        return Err(CliError::Config(format!("`{key}.starts` must be at least 1")));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: RunConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    /// Checks ranges the type system cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        EnergyModel::from_spec(self.model).map_err(|e| CliError::Config(format!("`model`: {e}")))?;
        self.envelope
            .search
            .validate()
            .map_err(|e| CliError::Config(format!("`envelope.search`: {e}")))?;
        positive("envelope.slice_pitch", self.envelope.slice_pitch)?;
        positive("growth.pitch", self.growth.pitch)?;
        positive("recovery.det_floor", self.recovery.det_floor)?;
        for (i, e) in self.recovery.eps.iter().enumerate() {
            positive(&format!("recovery.eps[{i}]"), *e)?;
        }
        for (i, e) in self.sweep.eps.iter().enumerate() {
            positive(&format!("sweep.eps[{i}]"), *e)?;
        }
        if self.sweep.eps.is_empty() || !self.sweep.eps.windows(2).all(|w| w[1] < w[0]) {
            return Err(CliError::Config("`sweep.eps` must be a nonempty strictly decreasing list".into()));
        }
        for (key, layers) in [("sweep.layers", self.sweep.layers), ("recovery.layers", self.recovery.layers)] {
            if layers < 3 || layers % 2 == 0 {
                return Err(CliError::Config(format!("`{key}` must be odd and at least 3, got {layers}")));
            }
        }
        solver("membrane", &self.membrane)?;
        solver("sweep.film", &self.sweep.film)?;
        if self.mesh.n == 0 || self.director.mesh_n == 0 {
            return Err(CliError::Config("mesh subdivisions must be at least 1".into()));
        }
        if self.director.j.contains(&0) || self.director.nirf_j == 0 || self.recovery.j == 0 {
            return Err(CliError::Config("director refinement `j` must be at least 1".into()));
        }
        if self.growth.depth == 0 || self.envelope.depth == 0 {
            return Err(CliError::Config("lamination depth must be at least 1".into()));
        }
        self.load_potential()?
            .validate()
            .map_err(|e| CliError::Config(format!("`load`: {e}")))?;
        Ok(())
    }

    pub fn load_potential(&self) -> Result<LoadPotential, CliError> {
        let l = &self.load;
        match (l.stretching, l.matrix) {
            (Some(k), None) if l.offset.is_none() => Ok(LoadPotential::stretching(k, l.center, self.model.p)),
            (None, Some(matrix)) => Ok(LoadPotential {
                matrix,
                offset: l.offset.unwrap_or([0.0; 3]),
                p: self.model.p,
            }),
            (None, None) => Ok(LoadPotential::zero(self.model.p)),
            _ => Err(CliError::Config("`load`: give either `stretching` or `matrix`/`offset`, not both".into())),
        }
    }

    pub fn experiment(&self) -> Result<Experiment, CliError> {
        Ok(Experiment {
            model: self.model,
            mesh_n: self.mesh.n,
            load: self.load_potential()?,
            envelope: self.envelope.search,
            envelope_level: self.envelope.depth,
            membrane: self.membrane,
            sweep: SweepSettings {
                eps: self.sweep.eps.clone(),
                layers: self.sweep.layers,
                mode: self.sweep.mode,
                film: self.sweep.film,
                seed: self.seed,
            },
        })
    }

    /// SHA-256 of the canonical JSON form of the effective configuration,
    /// leaving out the output directory.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            out: String::new(),
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("configs serialize");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
