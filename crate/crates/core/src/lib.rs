pub mod affine;
pub mod body;
pub mod error;
pub mod flow;
pub mod gauge;
pub mod harmonics;
pub mod invariants;
pub mod seeds;
pub mod sphere;
pub mod tensor;

pub use body::{Body, CurvatureSummary};
pub use error::{Error, Result};
pub use sphere::{build_grid, GridDescriptor, Interpolant, LocalJet, ScalarField, SphereGrid};
pub use tensor::TangentTensor;
