use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain spec: {0}")]
    InvalidSpec(String),

    #[error("resolution {got} too small: {why}")]
    ResolutionTooSmall { got: u32, why: String },

    #[error("no Whitney cube accepted: domain is thinner than the coarsest admissible cube at this resolution")]
    NoCubeAccepted,

    #[error("whitney cubes {0} and {1} do not share a face")]
    NotFaceNeighbors(usize, usize),

    #[error("cube graph is disconnected ({components} components); cannot build a spanning tree")]
    DisconnectedCubeGraph { components: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("region has {got} cells, below the minimum {min} for this operation")]
    RegionTooSmall { got: usize, min: usize },

    #[error("full pair sum over {cells} cells exceeds the cell budget {max_cells}; raise --max-cells to allow O(n^2) work of this size")]
    CellBudgetExceeded { cells: usize, max_cells: usize },

    #[error("degenerate Gram system for rigid projection: {0}")]
    DegenerateGram(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in, so multi-stage
    /// drivers report which stage failed.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
