use std::fmt;

/// Process exit codes.
pub mod code {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const IMPROPER: i32 = 5;
}

#[derive(Debug)]
pub enum CliError {
    Core(sprvm::Error),
    /// Bad flag combination that clap cannot express.
    Usage(String),
    /// Unreadable or malformed input / unwritable output.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use sprvm::Error as E;
        match self {
            CliError::Usage(_) => code::USAGE,
            CliError::Data(_) => code::DATA,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) => code::USAGE,
                E::Io { .. }
                | E::Csv(_)
                | E::MissingColumn(_)
                | E::ParseCell { .. }
                | E::RaggedRow { .. }
                | E::ZeroVariance
                | E::DimensionMismatch { .. } => code::DATA,
                E::ImproperPosterior(_) => code::IMPROPER,
                E::NonFiniteKernel { .. }
                | E::Factorization { .. }
                | E::InvalidGamma { .. }
                | E::Quadrature(_)
                | E::AllDivergent
                | E::ZeroWithinVariance(_)
                | E::NegativeQuadraticForm(_)
                | E::TooManyFailures { .. } => code::NUMERIC,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sprvm::Error> for CliError {
    fn from(e: sprvm::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
