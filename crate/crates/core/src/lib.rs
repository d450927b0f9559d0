pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod math;
pub mod params;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Axis, Graph, NodeId};
pub use params::{ParamId, ParamStore};
pub use tensor::{Real, Tensor};
pub mod baseline;
pub mod checkpoint;
pub mod cli;
pub mod coattention;
pub mod data;
pub mod encoders;
pub mod eval;
pub mod heads;
pub mod init;
pub mod losses;
pub mod model;
pub mod trainer;
