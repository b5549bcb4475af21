//! Demand-response scheduling of an EV fleet with a from-scratch deep Q-learning agent.
//!
//! A grid operator hands the fleet a per-timeslot energy target; the agent learns to
//! assign vehicles to charging stations and timeslots so the aggregate charged (or
//! discharged) energy curve tracks that target. The crate provides the scheduling
//! environment, a small dense Q-network with analytic backprop, the training loop,
//! evaluation metrics with an exhaustive oracle for small instances, and the CLI
//! plumbing for configs, fleets and checkpoints.

pub mod agent;
pub mod cli;
pub mod domain;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod nn;

pub use domain::{
    action_from_index, action_index, action_space_size, Action, ChargingStation, DrProgram,
    ElectricVehicle, Hyperparams, OperationKind, ScheduleState,
};
pub use env::{baseline_schedule, EnergyLedger, Env, EnvParams, StepOutcome, Violation};
pub use error::{Error, Result};
pub use nn::{mse_loss, NetworkConfig, NetworkParams};
