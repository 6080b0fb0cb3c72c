//! Multi-cell downlink simulator with A2C power and RBG allocation xApps and
//! a context-aware scheduler that decides which xApps are active.

pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod rl;
pub mod scheduler;
pub mod seeding;
pub mod xapps;

pub use config::LabConfig;
pub use error::{Error, Result};
