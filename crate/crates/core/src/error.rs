use std::path::PathBuf;

use crate::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("projection of ({}, {}) onto the stop set is ambiguous", .0.x, .0.y)]
    AmbiguousProjection(Point),
    #[error("point ({}, {}) is farther than {radius} from every stop-set arc", point.x, point.y)]
    OutsideTube { point: Point, radius: f64 },
    #[error("point ({}, {}) lies inside the stop-set tube", .0.x, .0.y)]
    InsideTube(Point),
    #[error("value {0} is outside the admissible time range [0, 1]")]
    OutOfDomain(f64),
    #[error("point ({}, {}) lies outside the domain", .0.x, .0.y)]
    OutsideDomain(Point),
    #[error("evaluation at ({}, {}) is too close to the stop set", .0.x, .0.y)]
    NearStopSet(Point),
    #[error("time field is degenerate: |grad T0| = {value} at ({}, {})", at.x, at.y)]
    DegenerateField { at: Point, value: f64 },
    #[error("transport field is not causal: <c, N> = {beta_est} at ({}, {})", at.x, at.y)]
    NotCausal { beta_est: f64, at: Point },
    #[error("declared beta {declared} exceeds the sampled minimum {estimated}")]
    BetaViolation { declared: f64, estimated: f64 },
    #[error("mask has no inside cells")]
    EmptyMask,
    #[error("mask inside region has {0} connected components")]
    DisconnectedMask(usize),
    #[error("characteristic exceeded {0} steps")]
    StepLimit(usize),
    #[error("characteristic left the bounding box at ({}, {})", .0.x, .0.y)]
    LeftDomain(Point),
    #[error("level line {0} could not be traced")]
    LevelNotFound(f64),
    #[error("stop-set sample at arc parameter {0} is within the node exclusion radius")]
    NodeProximity(f64),
    #[error("stop set has no arc {0}")]
    NoSuchArc(usize),
    #[error("auxiliary quadrature failed: {0}")]
    MissingAux(&'static str),
    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("cannot read image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },
    #[error("mask does not match image: {0}")]
    MaskMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
