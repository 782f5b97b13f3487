//! Tabular occupancy measures, inverse-dynamics disagreement identities and
//! imitation learners (GAIL, GAIfO, GAIfO-s, BCO, IDDM) on a gridworld with
//! equivalent action variants.

pub mod error;
pub mod experiment;
pub mod gridworld;
pub mod instances;
pub mod learners;
pub mod mdp;
pub mod measures;
pub mod occupancy;
pub mod theory;
pub mod verify;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, SummaryRow};
pub use gridworld::{train_expert, Demonstration, GridSpec, GridWorld};
pub use learners::{Algorithm, RunRecord, TrainConfig};
pub use mdp::{TabularMdp, TabularPolicy};
pub use measures::Divergence;
pub use occupancy::{derive_occupancies, inverse_dynamics, InverseDynamicsTable, OccupancySet};
pub use theory::{PolicyPair, TheoremReport};
