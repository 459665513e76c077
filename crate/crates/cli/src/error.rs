use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: ic_core::Error,
    },

    #[error(transparent)]
    Core(#[from] ic_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("degenerate light fit (condition number {condition_number:.3e}); pass --allow-degenerate to accept it")]
    Degenerate { condition_number: f64 },

    #[error("all {count} corpus entries failed")]
    AllFailed { count: usize, numerical: bool },
}

impl CliError {
    /// 1 for I/O or parse failures, 2 for numerical or degenerate ones.
    pub fn exit_code(&self) -> u8 {
        let numerical = match self {
            CliError::Stage { source, .. } | CliError::Core(source) => source.is_numerical(),
            CliError::Usage(_) => false,
            CliError::Degenerate { .. } => true,
            CliError::AllFailed { numerical, .. } => *numerical,
        };
        if numerical {
            2
        } else {
            1
        }
    }
}

pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageContext<T> for ic_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
