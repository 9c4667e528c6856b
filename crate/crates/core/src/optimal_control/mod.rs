//! Discrete optimal control posed as second-order variational problems.

mod heavy_top;
mod rigid_body;

use std::sync::Arc;

use nalgebra::DVector;

use crate::discrete1::{del_residual, DiscreteLagrangian1, Momentum};
use crate::error::{Error, Result};
use crate::groupoid::{Backend, GroupoidElement};
use crate::second_order::{ConstraintSet, DiscreteLagrangian2, PairFn};

pub use heavy_top::*;
pub use rigid_body::*;

/// Applied force `u_k` at β(g_k).
pub type ControlForce = Momentum;
pub type CostFunction = Arc<dyn Fn(&GroupoidElement, &ControlForce) -> f64 + Send + Sync>;

/// The force that makes `(g_k, g_{k+1})` satisfy the controlled DEL equations.
pub fn control_from_step(ld: &DiscreteLagrangian1, g: &GroupoidElement, h: &GroupoidElement) -> Result<ControlForce> {
    Ok(Momentum { base: g.target(), components: del_residual(ld, g, h)? })
}

/// `L_d(g_k, g_{k+1}) = C_d(g_k, u_k)` with `u_k` from [`control_from_step`].
pub fn oc_lagrangian(ld: DiscreteLagrangian1, cost: CostFunction) -> DiscreteLagrangian2 {
    DiscreteLagrangian2::new(ld.backend, move |g, h| match (ld.left_derivative(g), ld.right_derivative(h)) {
        (Ok(l), Ok(r)) => cost(g, &Momentum { base: g.target(), components: l - r }),
        _ => f64::NAN,
    })
}

pub type DefectFn = Arc<dyn Fn(&GroupoidElement, &GroupoidElement) -> DVector<f64> + Send + Sync>;

/// Discrete controlled equations written as a defect vector whose actuated
/// components are the controls and whose unactuated components must vanish.
#[derive(Clone)]
pub struct ControlledSystem {
    pub backend: Backend,
    pub components: usize,
    pub defect: DefectFn,
    pub actuated: Vec<usize>,
    pub unactuated: Vec<usize>,
    /// Cost of the actuated components, in the order of `actuated`.
    pub cost: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
}

/// Cost of the actuated defects as a second-order Lagrangian and the
/// unactuated defects as constraints (none when fully actuated).
pub fn underactuated_to_constrained(sys: &ControlledSystem) -> Result<(DiscreteLagrangian2, Option<ConstraintSet>)> {
    let mut seen = vec![0usize; sys.components];
    for &i in sys.actuated.iter().chain(&sys.unactuated) {
        if i >= sys.components {
            return Err(Error::InvalidSplit(format!("index {i} out of range")));
        }
        seen[i] += 1;
    }
    if let Some(i) = seen.iter().position(|&c| c != 1) {
        let what = if seen[i] == 0 { "missing" } else { "repeated" };
        return Err(Error::InvalidSplit(format!("component {i} is {what}")));
    }
    let defect = sys.defect.clone();
    let cost = sys.cost.clone();
    let actuated = sys.actuated.clone();
    let lagrangian = DiscreteLagrangian2::new(sys.backend, move |g, h| {
        let d = defect(g, h);
        cost(&DVector::from_iterator(actuated.len(), actuated.iter().map(|&i| d[i])))
    });
    if sys.unactuated.is_empty() {
        return Ok((lagrangian, None));
    }
    let functions = sys
        .unactuated
        .iter()
        .map(|&i| {
            let defect = sys.defect.clone();
            Arc::new(move |g: &GroupoidElement, h: &GroupoidElement| defect(g, h)[i]) as PairFn
        })
        .collect();
    Ok((lagrangian, Some(ConstraintSet::new(functions)?)))
}
