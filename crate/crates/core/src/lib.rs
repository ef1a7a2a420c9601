//! Plane-strain finite-element solver for large deformations of nearly
//! incompressible Mooney-Rivlin solids by successive linear approximation,
//! with a certification engine for the coercivity of each linearized step.
//!
//! The solver advances a triangulated body through a ramped loading
//! program. Each step linearizes the constitutive law about the current
//! configuration, assembles and solves the resulting (non-symmetric)
//! sparse problem over the constrained space, updates the per-element
//! state and moves the mesh. The certification engine evaluates the
//! pointwise 4x4 coercivity matrix, checks the sufficient well-posedness
//! hypotheses and reports the smallest admissible incompressibility
//! modulus beta0.

pub mod assembly;
pub mod coercivity;
pub mod config;
pub mod constitutive;
pub mod driver;
pub mod mesh;
pub mod oracles;
pub mod solver;
pub mod tensor;
pub mod verify;

pub use constitutive::{MaterialParams, QuadPointState};
pub use mesh::Mesh;
pub use tensor::{Tensor2, Vec2};
