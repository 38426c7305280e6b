//! Experiment harness for hgf-core: configuration, replica orchestration,
//! persisted outputs with digests, and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod output;
pub mod tasks;

use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Statistical(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Statistical(_) => 4,
            Failure::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Numeric(_) => "numeric",
            Failure::Statistical(_) => "statistical",
            Failure::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numeric(m) | Failure::Statistical(m) | Failure::Io(m) => m,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.message() })
    }

    pub fn io(e: anyhow::Error) -> Self {
        Failure::Io(format!("{e:#}"))
    }

    /// Library errors keep their class; anything else is an I/O failure.
    pub fn classify(e: anyhow::Error) -> Self {
        let msg = format!("{e:#}");
        match e.chain().find_map(|c| c.downcast_ref::<hgf_core::Error>()) {
            Some(hgf_core::Error::InvalidArgument(_)) => Failure::Config(msg),
            Some(_) => Failure::Numeric(msg),
            None => Failure::Io(msg),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for Failure {}
