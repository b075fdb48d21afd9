use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{composed_bound, four_corner_bound};
use super::laminate::{LaminationTables, Split};
use crate::error::{Error, Result};
use crate::fmt::fmt17;
use crate::tensor::{ExtValue, Mat32};

/// Which construction produced a table value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Provenance {
    /// The density itself (zero test function).
    TestFunction,
    FourCorner,
    /// Square refinement around four-corner bounds.
    SquareRefine,
    Laminate { depth: usize },
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::TestFunction => "test-function".into(),
            Provenance::FourCorner => "four-corner".into(),
            Provenance::SquareRefine => "square-refine".into(),
            Provenance::Laminate { depth } => format!("laminate-{depth}"),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Provenance::Laminate { depth } => *depth,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeEntry {
    pub xi: Mat32,
    pub w0: ExtValue,
    /// `None` where the four-corner construction is undefined.
    pub four_corner: Option<ExtValue>,
    pub square_refine: ExtValue,
    /// Laminate values at depths `1..=depth`.
    pub laminate: Vec<ExtValue>,
    pub value: ExtValue,
    pub provenance: Provenance,
    /// Top-level split in the frame `diag(σ₁, σ₂)`.
    pub split: Option<Split>,
}

impl EnvelopeEntry {
    /// Best value using laminates up to `depth` only.
    pub fn value_at_depth(&self, depth: usize) -> ExtValue {
        let mut v = self.w0.min(self.square_refine);
        if let Some(fc) = self.four_corner {
            v = v.min(fc);
        }
        for l in self.laminate.iter().take(depth) {
            v = v.min(*l);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub depth: usize,
    pub entries: Vec<EnvelopeEntry>,
}

/// `(s₁ e₁ | s₂ e₂)` with `s_i` on a grid of the given pitch and `|ξ| ≤ radius`.
pub fn diagonal_slice(radius: f64, pitch: f64) -> Result<Vec<Mat32>> {
    if !(pitch > 0.0) || !(radius >= 0.0) {
        return Err(Error::param("pitch", "need pitch > 0 and radius ≥ 0"));
    }
    let k = (radius / pitch + 1e-9).floor() as i64;
    let mut out = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            let (a, b) = (i as f64 * pitch, j as f64 * pitch);
            if a * a + b * b <= radius * radius * (1.0 + 1e-12) {
                out.push(Mat32::diagonal(a, b));
            }
        }
    }
    Ok(out)
}

impl EnvelopeTable {
    /// Evaluates every construction at each point, in parallel.
    pub fn build(tables: &LaminationTables, points: &[Mat32], depth: usize) -> Result<Self> {
        if depth > tables.levels() {
            return Err(Error::param(
                "depth",
                format!("depth {depth} needs {depth} table levels, have {}", tables.levels()),
            ));
        }
        let entries = points
            .par_iter()
            .map(|xi| {
                let density = tables.density();
                let w0 = density.eval(xi);
                let four_corner = four_corner_bound(xi, density).ok();
                let square_refine = composed_bound(xi, density);
                let mut laminate = Vec::with_capacity(depth);
                let mut split = None;
                for d in 1..=depth {
                    let l = tables.laminate(xi, d)?;
                    if l.split.is_some() {
                        split = l.split;
                    }
                    laminate.push(l.value);
                }
                let mut value = w0;
                let mut provenance = Provenance::TestFunction;
                let mut consider = |v: ExtValue, p: Provenance| {
                    if v < value {
                        value = v;
                        provenance = p;
                    }
                };
                if let Some(fc) = four_corner {
                    consider(fc, Provenance::FourCorner);
                }
                consider(square_refine, Provenance::SquareRefine);
                for (d, l) in laminate.iter().enumerate() {
                    consider(*l, Provenance::Laminate { depth: d + 1 });
                }
                Ok(EnvelopeEntry {
                    xi: *xi,
                    w0,
                    four_corner,
                    square_refine,
                    laminate,
                    value,
                    provenance,
                    split: if provenance.depth() > 0 { split } else { None },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnvelopeTable { depth, entries })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Rows `xi11,xi12,xi21,xi22,xi31,xi32,w0,value,method,depth`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("xi11,xi12,xi21,xi22,xi31,xi32,w0,value,method,depth\n");
        for e in &self.entries {
            for x in e.xi.to_row_major() {
                out.push_str(&fmt17(x));
                out.push(',');
            }
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(e.w0.to_f64()),
                fmt17(e.value.to_f64()),
                e.provenance.label(),
                e.provenance.depth()
            ));
        }
        out
    }
}
