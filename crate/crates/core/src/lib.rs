//! Kinetic radiative transfer with scattering coupled to a material energy
//! balance, in slab geometry, together with the boundary-layer, initial-layer
//! and diffusion-limit models obtained from its scaling regimes.
//!
//! Every solver is generic over [`Real`]; the `f64` aliases at the crate root
//! are the instantiations used by the harness.

pub mod boundary_layers;
pub mod diffusion;
pub mod error;
pub mod grids;
pub mod initial_layers;
pub mod kinetic;
pub mod linalg;
pub mod planck;
pub mod scalar;
pub mod scattering;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Real;

pub type AngularQuadrature = grids::AngularQuadrature<f64>;
pub type FrequencyGrid = grids::FrequencyGrid<f64>;
pub type SlabMesh = grids::SlabMesh<f64>;
pub type PhaseFunction = scattering::PhaseFunction<f64>;
pub type ScatteringOperator = scattering::ScatteringOperator<f64>;
pub type MaterialModel = planck::MaterialModel<f64>;
pub type Opacity = planck::Opacity<f64>;
pub type KineticProblem = kinetic::KineticProblem<f64>;
pub type KineticState = kinetic::KineticState<f64>;
pub type ScalingRegime = kinetic::ScalingRegime<f64>;
pub type LayerMaterial = boundary_layers::LayerMaterial<f64>;
pub type LayerSolution = boundary_layers::LayerSolution<f64>;
pub type LayerTrajectory = initial_layers::LayerTrajectory<f64>;
pub type CornerTrajectory = initial_layers::CornerTrajectory<f64>;
pub type DiffusionProblem = diffusion::DiffusionProblem<f64>;
pub type DiffusionState = diffusion::DiffusionState<f64>;
