//! Run configuration, fleet and target-profile serialization, and the
//! command implementations behind the `evsched` binary.

pub mod commands;
pub mod config;
pub mod fleet;

pub use commands::{cmd_baseline, cmd_evaluate, cmd_gen_fleet, cmd_schedule, cmd_train};
pub use config::{FleetSpec, ResolvedRun, RunConfig, TargetSpec};
pub use fleet::{gen_fleet, load_fleet, load_target_profile, synth_target};
