//! Simulation of bipartite self-configuring Mach-Zehnder meshes that learn
//! the Schmidt decomposition of a pure bipartite state by sequential
//! variational optimization of output powers or coincidence counts.

pub mod error;
pub mod imperfections;
pub mod linalg;
pub mod mesh;
pub mod protocols;
pub mod sources;
pub mod state;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, SeededRng, SvdResult};
pub use mesh::{MeshNetwork, MziNode, SelfConfiguringLayer, Topology};
pub use state::{EnsembleState, LogBase, Side, StateMatrix};
pub use trainer::{SchmidtReport, TrainedPair, TrainingMethod, TrainingSchedule, TrainingTrace};
