use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    Domain { point: Vec<f64> },
    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue:e})")]
    DegenerateMetric { point: Vec<f64>, min_eigenvalue: f64 },
    #[error("metric is singular at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("Finsler function is not C^2 at vector {vector:?} (extrapolants differ by {spread:e})")]
    NonSmoothAtVector { vector: Vec<f64>, spread: f64 },
    #[error("geodesic left the chart domain at {exit:?}")]
    DomainEscape { exit: Vec<f64> },
    #[error("speed drift {drift:e} exceeds the bound {bound:e}; reduce the step")]
    StepTooLarge { drift: f64, bound: f64 },
    #[error("unit normal field flipped orientation at {point:?}")]
    NormalFieldFlip { point: Vec<f64> },
    #[error("curve has {got} nodes, at least {need} are required")]
    TooFewNodes { got: usize, need: usize },
    #[error("frame vectors are not orthonormal (defect {defect:e})")]
    NotOrthonormal { defect: f64 },
    #[error("bound violated: {0}")]
    BoundViolation(String),
    #[error("tubular chart inverse diverged at {worst:?}")]
    InverseDiverged { worst: Vec<f64> },
    #[error("displacement flow left the disc at {point:?}")]
    FlowEscape { point: Vec<f64> },
    #[error("Jacobian is ill-conditioned (condition number {condition:e})")]
    JacobianIllConditioned { condition: f64 },
    #[error("metric is not in geodesic parallel form at {point:?} (defect {defect:e})")]
    NotParallelForm { point: Vec<f64>, defect: f64 },
    #[error("near-contact at parameters ({param_a}, {param_b}) is not transversal (angle {angle:e})")]
    NonTransversalContact { param_a: f64, param_b: f64, angle: f64 },
    #[error("curves have the same trace (Hausdorff distance {hausdorff:e})")]
    GeometricallyEquivalent { hausdorff: f64 },
    #[error("no admissible plane seeds found after {attempts} attempts")]
    SeedSearchFailed { attempts: usize },
    #[error("dimension {dim} is too low, at least {need} is required")]
    DimensionTooLow { dim: usize, need: usize },
    #[error("local surfaces do not meet in an intersection curve")]
    NoIntersectionCurve,
    #[error("intersection curve coordinates are not strictly monotone ({0})")]
    MonotonicityLost(String),
    #[error("epsilon halved {halvings} times without separating the perturbation sets")]
    EpsilonExhausted { halvings: usize },
    #[error("every candidate offset is forbidden")]
    OffsetSelectionFailed,
    #[error("closed geodesic search did not converge: {0}")]
    NoConvergence(String),
    #[error("normal frame propagation failed (orthonormality defect {defect:e})")]
    FramePropagationFailed { defect: f64 },
    #[error("geodesic balls around intersection points overlap after {halvings} halvings")]
    BallOverlapUnresolvable { halvings: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
