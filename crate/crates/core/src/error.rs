use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),

    #[error("element {0} is not active")]
    InactiveElement(usize),

    #[error("mesh is not 1-irregular (facet {facet} joins sides of length ratio > 2)")]
    NotClosed { facet: usize },

    #[error("unsupported basis space {0:?} for element tabulation")]
    UnsupportedSpace(crate::spaces::SpaceTag),

    #[error("Gram matrix of element {element} is not positive definite")]
    SingularGram { element: usize },

    #[error("field block of element {element} is singular")]
    SingularFieldBlock { element: usize },

    #[error("global system is singular (pivot {pivot} of {size})")]
    SingularSystem { pivot: usize, size: usize },

    #[error("boundary facet {facet} has no boundary tag")]
    MissingBoundaryTag { facet: usize },

    #[error("problem has {dofs} degrees of freedom, dense estimate is limited to {limit}")]
    TooLarge { dofs: usize, limit: usize },

    #[error("position z = {0} lies outside the domain")]
    OutsideDomain(f64),

    #[error("input power flux is zero")]
    ZeroInputFlux,

    #[error("residual list is empty")]
    EmptyResiduals,

    #[error("{ranks} ranks requested but only {columns} element columns available")]
    TooManyRanks { ranks: usize, columns: usize },

    #[error("rank count mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
