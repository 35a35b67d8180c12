//! Exit-code classification and the machine-readable error report.

use serde::Serialize;

/// Exit code for invalid input or configuration.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical failures (conditioning, improper posteriors, ...).
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure { code: EXIT_VALIDATION, kind: "validation", message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure { code: EXIT_NUMERICAL, kind: "numerical", message: message.into() }
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        Self::validation(format!("i/o error: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<gfref_core::Error> for Failure {
    fn from(e: gfref_core::Error) -> Self {
        if e.is_numerical() {
            Failure::numerical(e.to_string())
        } else {
            Failure::validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::io(e)
    }
}
