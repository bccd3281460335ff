//! Profiles, file formats and command-line experiments on top of
//! [`edgetune_core`].

pub mod cli;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod profiles;

pub use error::{AppError, AppResult};
