use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: missing artifact {}; run `{needs}` first", path.display())]
    MissingArtifact { stage: &'static str, needs: &'static str, path: PathBuf },

    #[error("{stage} failed for {subject}: {source}")]
    Stage {
        stage: &'static str,
        subject: String,
        #[source]
        source: freqshield::Error,
    },
}

impl CliError {
    /// Process exit code: 1 for configuration problems, 2 for stage failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::MissingArtifact { .. } | Self::Stage { .. } => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach stage and subject to a library error.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str, subject: impl std::fmt::Display) -> CliResult<T>;
}

impl<T> StageContext<T> for freqshield::Result<T> {
    fn stage(self, stage: &'static str, subject: impl std::fmt::Display) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, subject: subject.to_string(), source })
    }
}

impl<T> StageContext<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str, subject: impl std::fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::Stage { stage, subject: subject.to_string(), source: e.into() })
    }
}
