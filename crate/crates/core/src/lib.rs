//! Hanzawa-transformation machinery for two-phase MHD free interfaces.

pub mod config;
pub mod error;
pub mod evolution;
pub mod fields;
pub mod norms;
pub mod operators;
pub mod jet;
pub mod hanzawa;
pub mod interface_geometry;
pub mod surface;
pub mod verify;

pub use error::{Error, Result};
pub use config::{RunConfig, SurfaceSpec, VerifyConfig};
pub use evolution::{BoxGrid, EvolutionConfig, FixedPointTrace};
pub use norms::{NormSpec, SampledFunction};
pub use operators::FluidParams;
pub use surface::{ReferenceSurface, SurfaceKind, SurfaceScalar, V3, M3};
pub use verify::{CheckRecord, Suite};
