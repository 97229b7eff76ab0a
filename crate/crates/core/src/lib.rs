pub mod complex;
pub mod crit;
pub mod error;
pub mod heatflow;
pub mod linalg;
pub mod linearized;
pub mod loopspace;
pub mod manifold;
pub mod moduli;
pub mod perturbation;
pub mod pipeline;

pub use complex::{ChainComplex, HomologyResult};
pub use crit::{CriticalPoint, Enumeration, SeedStrategy, Tolerances};
pub use error::{Error, Result};
pub use heatflow::{CylinderTrajectory, DecayFit, FlowControls, FlowStatus, Monitor};
pub use linearized::{OperatorFamily, SpectralFlowResult};
pub use loopspace::{DiscreteLoop, LoopField, LoopNorm, LoopNorms};
pub use manifold::{EMaps, ManifoldKind, ManifoldSpec};
pub use moduli::{ConnectingOrbit, OrbitControls, UnstableChart};
pub use perturbation::{Bump, Combo, CutoffPair, GeometricPotential, Perturbation};
