use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid geometry `{0}`: expected torus:<d>, box:<d>:dirichlet or box:<d>:neumann")]
    Geometry(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("conditioning on a null event: P(N = {0}) = 0")]
    NullEvent(usize),
    #[error("ill-conditioned fit: condition number {0:.3e}")]
    IllConditioned(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("tolerance not met: {0}")]
    Tolerance(String),
    #[error("cache corruption in entry {0}")]
    CacheCorrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
