use thiserror::Error;

/// Problems with the configuration; the CLI exits with status 2 on these.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("no mode selected")]
    MissingMode,
    #[error("{0} must not be empty for this mode")]
    EmptyGrid(&'static str),
    #[error("privacy.epsilons: epsilon must be > 0, got {0}")]
    Epsilon(f64),
    #[error("{section}.delta must lie strictly between 0 and 1, got {value}")]
    Delta { section: &'static str, value: f64 },
    #[error(
        "online.lambda = {lambda} exceeds Gamma_T^2 / 2 = {limit} at T = {horizon}, epsilon = {epsilon}"
    )]
    LambdaTooLarge {
        lambda: f64,
        limit: f64,
        horizon: usize,
        epsilon: f64,
    },
    #[error("seed range {0:?} must look like a..b with a < b")]
    SeedRange(String),
    #[error("seed {0} appears more than once")]
    DuplicateSeed(u64),
    #[error("instance: {0}")]
    Instance(#[source] ldprlhf::Error),
    #[error("parameters: {0}")]
    Params(#[source] ldprlhf::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ldprlhf::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
