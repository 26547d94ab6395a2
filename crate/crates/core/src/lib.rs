//! Degree-of-responsibility attribution for safety violations in multi-agent
//! Markov decision processes.

pub mod attribution;
pub mod error;
pub mod identification;
pub mod localq;
pub mod model;
pub mod pipeline;
pub mod reachability;
pub mod scenario;
pub mod space;
pub mod synth;

pub use error::{Error, Result};
pub use space::{AgentSet, JointSpace};
