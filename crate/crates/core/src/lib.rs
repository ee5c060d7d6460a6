//! Forward solver and size-estimate toolkit for impedance tomography on
//! structured square and cube meshes with high-continuity quadratic elements.

pub mod assembly;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod hc_basis;
pub mod linsolve;
pub mod mesh;

pub use error::{EitError, Result};
pub use forward::{ElectrodeLayout, Excitation, ForwardModel, NeumannSpec, SolveRecord};
pub use mesh::{build_mesh, InclusionMask, StructuredMesh};
