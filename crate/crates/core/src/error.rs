use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter grid: {0}")]
    InvalidGrid(String),

    #[error("grid too small: axis {axis} has {nodes} nodes, need at least {required}")]
    GridTooSmall { axis: usize, nodes: usize, required: usize },

    #[error("degenerate metric at node {node:?} (det g = {det:e})")]
    DegenerateMetric { node: Vec<usize>, det: f64 },

    #[error("deformation at s = {step:e} degenerates the metric at node {node:?} (det g = {det:e})")]
    DegenerateDeformation { step: f64, node: Vec<usize>, det: f64 },

    #[error("chart has no analytic jets; use the finite-difference backend")]
    MissingJets,

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("patch claims to be Lagrangian but ω|Σ = {defect:e}")]
    NotLagrangian { defect: f64 },

    #[error("invalid soliton specification: {0}")]
    InvalidSpec(String),

    #[error("not a translating soliton for this T: sup|H - T^perp| = {residual:e} exceeds {tolerance:e}")]
    NotSoliton { residual: f64, tolerance: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("cutoff margin {margin} leaves no support on axis {axis}")]
    EmptySupport { axis: usize, margin: usize },

    #[error("fd step s = {step:e} outside the stable range (|s| sup|V| = {scaled:e})")]
    StepOutOfRange { step: f64, scaled: f64 },

    #[error("resolution ladder {0:?} is not a ratio-2 sequence of at least 3 resolutions")]
    BadLadder(Vec<usize>),

    #[error("field does not match the patch: {0}")]
    FieldMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
