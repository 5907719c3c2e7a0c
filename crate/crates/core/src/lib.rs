//! Discrete-time multi-agent simulation of algorithmic recourse under competition for
//! a fixed number of positive outcomes per step, with effort-to-recourse and
//! time-to-recourse fairness metrics and the mitigation strategies they motivate.

pub mod agent;
pub mod config;
pub mod decision;
pub mod engine;
pub mod harness;
pub mod error;
pub mod log;
pub mod metrics;
pub mod population;
pub mod recourse;
pub mod rng;

pub use agent::{Agent, AgentId};
pub use config::{Adaptation, GeneratorCase, Group, PopulationSpec, Retraining, Selection, SimulationConfig};
pub use engine::{run, simulate, WorldState};
pub use error::{Error, Result};
pub use log::{EventLog, EventRecord, Outcome};
pub use metrics::RunMetrics;
