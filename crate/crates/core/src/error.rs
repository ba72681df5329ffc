use thiserror::Error;

/// Broad failure class, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Domain,
    Mesh,
    Solver,
    Resource,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Domain => 3,
            Category::Mesh => 4,
            Category::Solver => 5,
            Category::Resource => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Domain => "domain",
            Category::Mesh => "mesh",
            Category::Solver => "solver",
            Category::Resource => "resource",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: radius {radius:e} at theta = {theta:.6} is not positive")]
    NonPositiveRadius { theta: f64, radius: f64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("domain file: field `{field}`: {reason}")]
    DomainFile { field: String, reason: String },

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("mesh level {level} exceeds the cap {cap}")]
    LevelCap { level: usize, cap: usize },

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgDiverged { iterations: usize, residual: f64 },

    #[error(
        "Gram matrix of the harmonic basis is ill-conditioned at degree {degree}; increase the boundary sample count"
    )]
    IllConditionedGram { degree: usize },

    #[error("flow stagnated at t = {t}: step size {dt:e} underflowed ({reason})")]
    Stagnation { t: f64, dt: f64, reason: String },

    #[error("fit: {0}")]
    Fit(String),

    #[error("sweep member epsilon = {epsilon}: {source}")]
    SweepMember {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::NonPositiveRadius { .. } | Error::InvalidDomain(_) | Error::DomainFile { .. } => Category::Domain,
            Error::Mesh(_) => Category::Mesh,
            Error::LevelCap { .. } => Category::Resource,
            Error::CgDiverged { .. } | Error::IllConditionedGram { .. } | Error::Stagnation { .. } | Error::Fit(_) => {
                Category::Solver
            }
            Error::SweepMember { source, .. } => source.category(),
            Error::Config(_) | Error::Json(_) => Category::Config,
            Error::Io { .. } | Error::Csv(_) => Category::Resource,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
