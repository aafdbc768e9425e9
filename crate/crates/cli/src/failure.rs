//! Error classes and their exit codes.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Usage,
    Validation,
    Io,
    Deadlock,
}

impl Class {
    pub fn exit_code(self) -> i32 {
        match self {
            Class::Usage => 2,
            Class::Validation => 3,
            Class::Io => 4,
            Class::Deadlock => 5,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub message: String,
    pub details: Vec<String>,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            class: Class::Usage,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            class: Class::Validation,
            message: message.into(),
            details: Vec::new(),
        }
    }

    /// Prefixes the message, e.g. with the file being read.
    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "class": self.class,
                "exit_code": self.class.exit_code(),
                "message": self.message,
                "details": self.details,
            }
        })
        .to_string()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)?;
        for d in &self.details {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

impl From<nsim_core::Error> for Failure {
    fn from(e: nsim_core::Error) -> Self {
        use nsim_core::Error as E;
        let class = match &e {
            E::InvalidArgument(_) => Class::Usage,
            E::Trace { .. } | E::Syntax { .. } | E::Validation(_) | E::Json(_) => Class::Validation,
            E::Io(_) => Class::Io,
            E::Deadlock(_) => Class::Deadlock,
        };
        let (message, details) = match e {
            E::Validation(v) => ("schedule validation failed".to_string(), v),
            E::Deadlock(v) => ("simulation deadlocked".to_string(), v),
            other => (other.to_string(), Vec::new()),
        };
        Failure {
            class,
            message,
            details,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            class: Class::Io,
            message: e.to_string(),
            details: Vec::new(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::validation(format!("malformed JSON: {e}"))
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
