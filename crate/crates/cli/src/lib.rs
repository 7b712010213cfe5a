//! Library surface of the `rfnoise` command-line tool, exposed so
//! integration tests can drive the same code paths as the binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod logging;
pub mod svg;

pub use commands::{band_test_mse, cmd_eval, cmd_generate, cmd_gradcheck, cmd_train, EvalWhich};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use logging::Logger;
