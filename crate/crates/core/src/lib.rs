//! Relaxation of membrane energies obtained from 3D elasticity with a
//! determinant barrier: reduced densities, upper bounds on their
//! quasiconvex envelopes, director fields and thin-film experiments.

pub mod energy;
pub mod envelope;
pub mod dimension_reduction;
pub mod director;
pub mod error;
pub mod fiber;
pub mod fmt;
pub mod optim;
pub mod pw_affine;
pub mod tensor;

pub use energy::{BarrierKind, Coercivity, EnergyModel, ModelSpec, StoredEnergy};
pub use error::{Error, Result};
pub use fiber::{w0_bruteforce, w0_closed_form, w0_growth_constant, FiberMinimum, ReducedDensity};
pub use tensor::{ExtValue, Mat32, Mat33, Vec3};
