use std::path::{Path, PathBuf};

use confkern_core::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Data(_) => 2,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::InvalidParameter(_) => 1,
        CoreError::NotConverged { .. } | CoreError::Unstable(_) => 3,
        CoreError::Pass { source, .. } | CoreError::GramEntry { source, .. } => {
            core_exit_code(source)
        }
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::usage("x").exit_code(), 1);
        assert_eq!(CliError::data("x").exit_code(), 2);
        assert_eq!(CliError::from(CoreError::ZeroVector).exit_code(), 2);
        let nc = CoreError::NotConverged {
            iterations: 1,
            violation: 1.0,
            negative_curvature: 0,
        };
        let wrapped = CoreError::Pass {
            pass: "transformed",
            source: Box::new(nc),
        };
        assert_eq!(CliError::from(wrapped).exit_code(), 3);
        assert_eq!(
            CliError::from(CoreError::InvalidParameter("c".into())).exit_code(),
            1
        );
    }
}
