use std::fmt;

/// Exit status 2: bad usage, configuration or input files.
pub const EXIT_USAGE: u8 = 2;
/// Exit status 3: the run itself failed (divergence, non-finite values,
/// data that does not fit the network).
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        Self {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<voxnet::Error> for CliError {
    fn from(e: voxnet::Error) -> Self {
        let runtime = e.is_numeric()
            || matches!(
                e,
                voxnet::Error::ShapeMismatch { .. } | voxnet::Error::InvalidShape { .. }
            );
        if runtime {
            Self::runtime(e.to_string())
        } else {
            Self::usage(e.to_string())
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a description of the failing step to library errors.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| e.into().context(what))
    }
}
