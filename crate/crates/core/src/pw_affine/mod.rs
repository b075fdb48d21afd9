//! Continuous piecewise-affine fields on triangulated planar domains.

mod field;
mod hats;
mod mesh;
mod vitali;

pub use field::{triangle_gradient, CellGradient, PwAffineField, ReferenceCell, AFF0_TOL};
pub use hats::{build_diamond_hat, build_square_hat};
pub use mesh::{point_segment_distance, signed_area, Point, TriMesh, MIN_CELL_AREA};
pub use vitali::{vitali_paste, PastedField, VitaliParams};
