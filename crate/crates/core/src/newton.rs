//! Damped Newton iteration in re-centered retraction charts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    FiniteDifference,
    /// Use the problem's analytic Jacobian when it provides one.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Max-norm residual tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub contraction: f64,
    pub armijo: f64,
    /// Forward-difference step for the Jacobian.
    pub fd_step: f64,
    pub jacobian: JacobianMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: tolerances::NEWTON,
            max_iterations: tolerances::NEWTON_MAX_ITER,
            contraction: tolerances::BACKTRACK,
            armijo: tolerances::ARMIJO,
            fd_step: tolerances::JACOBIAN_STEP,
            jacobian: JacobianMode::FiniteDifference,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations < 1 || !(self.fd_step > 0.0) {
            return Err(Error::Invalid("solver tolerance and step must be positive, iterations ≥ 1".into()));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) || !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(Error::Invalid("line-search constants out of range".into()));
        }
        Ok(())
    }
}

/// A square nonlinear system posed on a manifold through a retraction.
pub(crate) trait ChartProblem {
    type Point: Clone;
    fn dim(&self) -> usize;
    fn residual(&self, p: &Self::Point) -> Result<DVector<f64>>;
    fn retract(&self, p: &Self::Point, z: &DVector<f64>) -> Result<Self::Point>;
    fn jacobian(&self, _p: &Self::Point) -> Option<Result<DMatrix<f64>>> {
        None
    }
    /// Leading unknowns that must be locally unique at a solution. Trailing
    /// ones (multipliers of redundant constraints) may stay undetermined.
    fn primary_dim(&self) -> usize {
        self.dim()
    }
    /// Largest entry of the constraint rows, reported on failure.
    fn constraint_max(&self, _r: &DVector<f64>) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NewtonOptions {
    /// Take minimum-norm steps instead of failing on rank-deficient Jacobians.
    pub allow_rank_deficient: bool,
    /// Require a full-rank Jacobian at the converged point.
    pub check_regular: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport<P> {
    pub point: P,
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

fn jacobian<P: ChartProblem>(problem: &P, p: &P::Point, rows: usize, config: &SolverConfig) -> Result<DMatrix<f64>> {
    if config.jacobian == JacobianMode::Analytic {
        if let Some(j) = problem.jacobian(p) {
            return j;
        }
    }
    let n = problem.dim();
    let mut j = DMatrix::zeros(rows, n);
    let mut z = DVector::zeros(n);
    // Central differences: residuals are often difference quotients
    // themselves, and a one-sided quotient of those is too noisy.
    for c in 0..n {
        z[c] = config.fd_step;
        let plus = problem.residual(&problem.retract(p, &z)?)?;
        z[c] = -config.fd_step;
        let minus = problem.residual(&problem.retract(p, &z)?)?;
        j.set_column(c, &((plus - minus) / (2.0 * config.fd_step)));
        z[c] = 0.0;
    }
    Ok(j)
}

fn rank(sv: &DVector<f64>) -> (usize, f64) {
    let smax = sv.max();
    let cut = smax * tolerances::RANK_RTOL;
    (if smax > 0.0 { sv.iter().filter(|&&s| s > cut).count() } else { 0 }, cut)
}

pub(crate) fn solve<P: ChartProblem>(
    problem: &P,
    start: P::Point,
    config: &SolverConfig,
    options: NewtonOptions,
) -> Result<SolveReport<P::Point>> {
    config.validate()?;
    let n = problem.dim();
    let mut p = start;
    let mut r = problem.residual(&p)?;
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial residual".into()));
    }
    let mut trace = vec![r.amax()];
    let mut iterations = 0;
    loop {
        let norm = r.amax();
        if norm <= config.tolerance {
            if options.check_regular && n > 0 {
                let m = problem.primary_dim();
                let j = jacobian(problem, &p, r.len(), config)?;
                let (rk, _) = rank(&j.columns(0, m).singular_values());
                if rk < m {
                    return Err(Error::SingularJacobian { rank: rk, size: m });
                }
            }
            return Ok(SolveReport { point: p, residual: norm, iterations, trace });
        }
        let fail = |trace: Vec<f64>, iterations| Error::NoConvergence {
            residual: norm,
            iterations,
            constraint_max: problem.constraint_max(&r),
            trace,
        };
        if iterations >= config.max_iterations {
            return Err(fail(trace, iterations));
        }
        iterations += 1;

        let j = jacobian(problem, &p, r.len(), config)?;
        let svd = j.clone().svd(true, true);
        let (rk, cut) = rank(&svd.singular_values);
        let dz = if rk == n {
            j.lu().solve(&(-&r)).ok_or(Error::SingularJacobian { rank: rk, size: n })?
        } else if options.allow_rank_deficient {
            svd.solve(&(-&r), cut.max(f64::MIN_POSITIVE)).map_err(|e| Error::Invalid(e.to_string()))?
        } else {
            return Err(Error::SingularJacobian { rank: rk, size: n });
        };

        let merit = 0.5 * r.norm_squared();
        let mut alpha = 1.0;
        let accepted = loop {
            if alpha < tolerances::MIN_STEP {
                break None;
            }
            if let Ok(q) = problem.retract(&p, &(&dz * alpha)) {
                if let Ok(rq) = problem.residual(&q) {
                    let m = 0.5 * rq.norm_squared();
                    if m.is_finite() && m <= merit * (1.0 - 2.0 * config.armijo * alpha) {
                        break Some((q, rq));
                    }
                }
            }
            alpha *= config.contraction;
        };
        match accepted {
            Some((q, rq)) => {
                p = q;
                r = rq;
                trace.push(r.amax());
            }
            None => return Err(fail(trace, iterations)),
        }
    }
}
