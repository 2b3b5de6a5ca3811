//! Experiment runner: JSON configs, seeded sweeps, Student-t summaries and
//! CSV output for the `seqtransfer` library.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod output;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }
}

impl From<seqtransfer::Error> for HarnessError {
    fn from(e: seqtransfer::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
