use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),

    #[error("stencil violates admissibility bound: |g|/|rho| = {ratio:.6} > kappa = {kappa} for direction {direction:?}{}", site.map(|s| format!(" at site {s}")).unwrap_or_default())]
    Inadmissible {
        direction: Vec<i64>,
        ratio: f64,
        kappa: f64,
        site: Option<usize>,
    },

    #[error("unsupported norm index p = {0}; expected 1, 2 or infinity")]
    UnsupportedNorm(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("solver failed to converge after {iterations} iterations (residual history: {history:?})")]
    Divergence { iterations: usize, history: Vec<f64> },

    #[error("stability violated: {0}")]
    Instability(String),

    #[error("admissibility lost at time {time}: {source}")]
    TrajectoryAborted {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot fit a rate: {0}")]
    RateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_site(self, site: usize) -> Self {
        match self {
            Error::Inadmissible {
                direction,
                ratio,
                kappa,
                ..
            } => Error::Inadmissible {
                direction,
                ratio,
                kappa,
                site: Some(site),
            },
            other => other,
        }
    }
}
