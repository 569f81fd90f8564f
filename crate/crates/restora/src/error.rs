use std::fmt;
use std::path::{Path, PathBuf};

/// Problems with user-supplied files or flags. All map to exit code 2.
#[derive(Debug)]
pub enum InputError {
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed document; the message names the field and position.
    Parse(String),
    /// Missing or invalid base, units or solver settings.
    Config(String),
    /// Well-formed input describing an invalid network or scenario.
    Invalid(String),
}

impl InputError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> InputError {
        InputError::Io { path: path.to_path_buf(), source }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputError::Io { path, source } => write!(f, "cannot access {}: {source}", path.display()),
            InputError::Parse(m) => write!(f, "parse error: {m}"),
            InputError::Config(m) => write!(f, "config error: {m}"),
            InputError::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for InputError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            InputError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Deserializes `text`, reporting the JSON path of the offending field
/// together with serde's line and column.
pub(crate) fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, InputError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            InputError::Parse(e.into_inner().to_string())
        } else {
            InputError::Parse(format!("field `{path}`: {}", e.into_inner()))
        }
    })?;
    de.end().map_err(|e| InputError::Parse(e.to_string()))?;
    Ok(value)
}

pub(crate) fn read_text(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError::io(path, e))
}
