//! Numerical tolerances shared by the solvers and the test suites.

/// Orthogonality and determinant tolerance for [`crate::liealg::RotationMatrix`].
pub const ROTATION: f64 = 1e-9;
/// Largest symmetric part accepted by `vee`.
pub const SKEW: f64 = 1e-9;
/// Largest ‖(R+I)⁻¹‖_F accepted by `cay_inv`.
pub const CAYLEY_INV_BOUND: f64 = 1e8;
/// Base-point distance below which two arrows count as composable.
pub const COMPOSABLE: f64 = 1e-9;
/// Relative step for central differences of scalar functions on the groupoid.
pub const FD_STEP: f64 = 1e-5;
/// Relative step of the five-point stencil for window gradients.
pub const STENCIL_STEP: f64 = 1e-3;
/// Central-difference step for solver Jacobians in chart coordinates.
pub const JACOBIAN_STEP: f64 = 1e-5;
/// Default Newton residual tolerance (max norm).
pub const NEWTON: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 100;
pub const ARMIJO: f64 = 1e-4;
pub const BACKTRACK: f64 = 0.5;
/// Smallest line-search step before the solver gives up.
pub const MIN_STEP: f64 = 1e-12;
/// Relative singular-value cutoff used for Jacobian rank.
pub const RANK_RTOL: f64 = 1e-12;
/// Residual level above which a trajectory is not considered a solution.
pub const ON_SHELL: f64 = 1e-8;
