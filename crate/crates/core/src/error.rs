use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mesh must be positive, got {0}")]
    NonPositiveMesh(f64),

    #[error("probability {value} for class `{class}` is outside [0, 1]")]
    ProbabilityOutOfRange { class: String, value: f64 },

    #[error("model has no probability for class `{0}`")]
    MissingClass(String),

    #[error("unknown probability class `{0}`")]
    UnknownClass(String),

    #[error("singular plane map (det = {0})")]
    SingularMap(f64),

    #[error("no stored critical probability for {0}")]
    NoStoredThreshold(String),

    #[error("invalid periodic graph: {0}")]
    InvalidGraph(String),

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("invalid boundary arcs: {0}")]
    InvalidArcs(String),

    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),

    #[error("domain is disconnected at this mesh ({components} components)")]
    DisconnectedDomain { components: usize },

    #[error("argument {value} outside the domain of {function}")]
    OutOfDomain { function: &'static str, value: f64 },

    #[error("aspect ratio {0} is too extreme")]
    ExtremeAspect(f64),

    #[error("point outside the closed domain: {0}")]
    OutsideDomain(String),

    #[error("start corner is not on the boundary")]
    StartNotOnBoundary,

    #[error("curve leaves the upper half-plane at point {index} (Im = {imag})")]
    CurveExitsHalfPlane { index: usize, imag: f64 },

    #[error("curve does not start on the real axis (Im = {0})")]
    CurveNotRooted(f64),

    #[error("invalid driving function: {0}")]
    InvalidDriving(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("enumeration over {size} free variables exceeds the cap of {cap}")]
    EnumerationTooLarge { size: usize, cap: usize },

    #[error("invalid tile domain: {0}")]
    InvalidTileDomain(String),

    #[error("trajectory did not terminate at the expected boundary point")]
    BrokenTrajectory,

    #[error("branch discontinuity in square root field: {0}")]
    BranchDiscontinuity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
