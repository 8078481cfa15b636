use std::fmt;

/// Pipeline stage in which a run failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Solve,
    Particles,
    Measure,
    Assemble,
    Estimate,
    Spectra,
    Picard,
    Sweep,
    Io,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Config => "config",
            Self::Solve => "solve",
            Self::Particles => "particles",
            Self::Measure => "measure",
            Self::Assemble => "assemble",
            Self::Estimate => "estimate",
            Self::Spectra => "spectra",
            Self::Picard => "picard",
            Self::Sweep => "sweep",
            Self::Io => "io",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("[{stage}] {message}")]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl StageError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            message: message.into(),
        }
    }
}

/// Tags any displayable error with a stage.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: fmt::Display> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e.to_string()))
    }
}
