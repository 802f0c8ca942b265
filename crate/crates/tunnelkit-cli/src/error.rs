use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Malformed or invalid configuration; `key` is the dotted path.
    Config { key: String, message: String },
    Module(tunnelkit::Error),
    Io { path: String, message: String },
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), message: message.into() }
    }

    pub fn io(path: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_string(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Module(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config { key, message } => json!({ "error": "config", "key": key, "message": message }),
            CliError::Module(e) => json!({ "error": "module", "message": e.to_string() }),
            CliError::Io { path, message } => json!({ "error": "io", "path": path, "message": message }),
        }
    }
}

impl From<tunnelkit::Error> for CliError {
    fn from(e: tunnelkit::Error) -> Self {
        CliError::Module(e)
    }
}
