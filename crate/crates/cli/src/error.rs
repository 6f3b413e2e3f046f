use atp_core::AtpError;

/// Exit 1 for validation and argument errors, 2 for I/O failures.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<AtpError> for CliError {
    fn from(e: AtpError) -> Self {
        match e {
            AtpError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}
