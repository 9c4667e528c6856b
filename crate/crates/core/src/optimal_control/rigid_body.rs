use nalgebra::Rotation3;

use crate::discrete1::DiscreteLagrangian1;
use crate::error::{Error, Result};
use crate::groupoid::{Backend, GroupoidElement};
use crate::liealg::{cay, cay_inv, RotationMatrix, Vec3};
use crate::newton::SolverConfig;
use crate::second_order::{solve_bvp, BvpProblem, BvpSolution, DiscreteLagrangian2, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyParams {
    pub inertia: Vec3,
    pub step: f64,
}

impl RigidBodyParams {
    pub fn new(inertia: Vec3, step: f64) -> Result<Self> {
        let [a, b, c] = [inertia.x, inertia.y, inertia.z];
        if !(a > 0.0 && b > 0.0 && c > 0.0) || a == b || b == c || a == c {
            return Err(Error::Invalid("inertias must be positive and pairwise distinct".into()));
        }
        if !(step > 0.0) {
            return Err(Error::Invalid("step must be positive".into()));
        }
        Ok(Self { inertia, step })
    }

    /// `(I₁/(I₂−I₃), I₂/(I₃−I₁), I₃/(I₁−I₂))`.
    pub fn p(&self) -> Vec3 {
        let i = &self.inertia;
        Vec3::new(i.x / (i.y - i.z), i.y / (i.z - i.x), i.z / (i.x - i.y))
    }
}

impl Default for RigidBodyParams {
    fn default() -> Self {
        Self { inertia: Vec3::new(1.0, 2.0, 3.0), step: 0.1 }
    }
}

/// `½Σ(Ω̇_i − P_iΩ_jΩ_k)²`.
pub fn rigidbody_ltilde(omega: &Vec3, omega_dot: &Vec3, p: &RigidBodyParams) -> f64 {
    let pp = p.p();
    let cross = Vec3::new(omega.y * omega.z, omega.x * omega.z, omega.x * omega.y);
    0.5 * (omega_dot - pp.component_mul(&cross)).norm_squared()
}

/// Second-order Lagrangian from consecutive increments `ξ_k = cay⁻¹(w_k)/h̄`.
pub fn rigidbody_ld2_xi(xi_k: &Vec3, xi_k1: &Vec3, p: &RigidBodyParams) -> f64 {
    let h = p.step;
    h * rigidbody_ltilde(&((xi_k + xi_k1) * 0.5), &((xi_k1 - xi_k) / h), p)
}

pub fn rigidbody_ld2(w_k: &RotationMatrix, w_k1: &RotationMatrix, p: &RigidBodyParams) -> Result<f64> {
    Ok(rigidbody_ld2_xi(&(cay_inv(w_k)? / p.step), &(cay_inv(w_k1)? / p.step), p))
}

pub fn rigidbody_lagrangian(p: RigidBodyParams) -> DiscreteLagrangian2 {
    DiscreteLagrangian2::new(Backend::Group, move |g, h| match (g.rotation(), h.rotation()) {
        (Some(a), Some(b)) => rigidbody_ld2(a, b, &p).unwrap_or(f64::NAN),
        _ => f64::NAN,
    })
}

/// Free rigid body `𝕃_d(w) = h̄·½ξᵀIξ`, `ξ = cay⁻¹(w)/h̄`; its DEL defects are the applied controls.
pub fn free_body_lagrangian(p: RigidBodyParams) -> DiscreteLagrangian1 {
    DiscreteLagrangian1::new(Backend::Group, move |g| {
        let xi = g.rotation().and_then(|r| cay_inv(r).ok()).map_or(Vec3::repeat(f64::NAN), |v| v / p.step);
        p.step * 0.5 * xi.dot(&p.inertia.component_mul(&xi))
    })
}

/// Attitudes and body angular velocities at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyBoundary {
    pub r0: RotationMatrix,
    pub omega0: Vec3,
    pub rt: RotationMatrix,
    pub omegat: Vec3,
}

/// Geodesic interpolation of `n` increments whose product is `total`.
pub(crate) fn split_rotation(total: &RotationMatrix, n: usize) -> RotationMatrix {
    let r = Rotation3::from_matrix_unchecked(*total.matrix()).powf(1.0 / n as f64);
    RotationMatrix::new_unchecked(*r.matrix())
}

/// Attitude nodes of the initial guess: boundary pairs from the velocities,
/// interior nodes equally spaced along the geodesic.
pub fn rigidbody_guess_nodes(b: &RigidBodyBoundary, n: usize, h: f64) -> Result<Vec<RotationMatrix>> {
    if n < 5 {
        return Err(Error::Invalid(format!("need at least 5 nodes, got {n}")));
    }
    let r2 = b.r0 * cay(&(b.omega0 * h));
    let rn1 = b.rt * cay(&(b.omegat * h)).transpose();
    let inc = split_rotation(&(r2.transpose() * rn1), n - 3);
    let mut nodes = vec![b.r0, r2];
    for _ in 0..n - 4 {
        let next = *nodes.last().expect("non-empty") * inc;
        nodes.push(next);
    }
    nodes.push(rn1);
    nodes.push(b.rt);
    Ok(nodes)
}

/// Solves the rigid-body optimal control problem from explicit guess nodes.
pub fn rigidbody_bvp(nodes: &[RotationMatrix], p: RigidBodyParams, config: SolverConfig) -> Result<BvpSolution> {
    let guess = Trajectory::from_rotations(nodes)?;
    for g in &guess.elements {
        cay_inv(g.rotation().expect("group element"))?;
    }
    solve_bvp(&BvpProblem { lagrangian: rigidbody_lagrangian(p), constraints: None, guess, config })
}

pub fn rigidbody_oc_solve(
    b: &RigidBodyBoundary,
    n: usize,
    p: RigidBodyParams,
    config: SolverConfig,
) -> Result<BvpSolution> {
    rigidbody_bvp(&rigidbody_guess_nodes(b, n, p.step)?, p, config)
}

/// Body increments `ξ_k = cay⁻¹(w_k)/h̄` along a group trajectory.
pub fn increments(traj: &Trajectory, h: f64) -> Result<Vec<Vec3>> {
    traj.elements
        .iter()
        .map(|g| match g {
            GroupoidElement::Group(r) => Ok(cay_inv(r)? / h),
            _ => Err(Error::BackendMismatch("expected group elements".into())),
        })
        .collect()
}
