pub mod autodiff;
pub mod binio;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod policy_net;
pub mod ppo;
pub mod scenarios;
pub mod sim;
pub mod solvers;
pub mod state;
pub mod state_space;

pub use config::{ArrivalLaw, ExtraConstraint, HoldingMode, NetworkConfig, Problem, Violation};
pub use error::{Result, SpnError};
pub use state::{AtomicAction, Schedule, SystemState};
