use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (symmetric part {0:.3e})")]
    NotSkew(f64),
    #[error("rotation is too close to a half turn for the Cayley inverse (‖(R+I)⁻¹‖ = {0:.3e})")]
    NearSingular(f64),
    #[error("matrix is not a rotation (orthogonality defect {orthogonality:.3e}, det {det})")]
    NotRotation { orthogonality: f64, det: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("elements are not composable (base-point gap {0:.3e})")]
    NotComposable(f64),
    #[error("backend mismatch: {0}")]
    BackendMismatch(String),
    #[error("singular Jacobian (rank {rank} of {size})")]
    SingularJacobian { rank: usize, size: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { residual: f64, iterations: usize, trace: Vec<f64>, constraint_max: Option<f64> },
    #[error("trajectory is not on shell (residual {0:.3e})")]
    NotOnShell(f64),
    #[error("invalid actuation split: {0}")]
    InvalidSplit(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
