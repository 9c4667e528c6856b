use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};

use super::rigid_body::split_rotation;
use super::{underactuated_to_constrained, ControlledSystem};
use crate::error::{Error, Result};
use crate::groupoid::{vec3, Backend, GroupoidElement};
use crate::liealg::{cay, cay_inv, RotationMatrix, Vec3};
use crate::newton::SolverConfig;
use crate::second_order::{solve_bvp, BvpProblem, BvpSolution, ConstraintSet, DiscreteLagrangian2, Trajectory};

pub type Vec2 = Vector2<f64>;

/// Heavy top with two rotors on an action groupoid over ℝ³ (the body-frame
/// vertical Γ) × ℝ² (rotor angles).
pub const HEAVY_TOP: Backend = Backend::Action { rotation: true, torus: 2 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyTopParams {
    pub ibar: Vec3,
    pub j: Vec2,
    pub mgh: f64,
    pub step: f64,
}

impl Default for HeavyTopParams {
    fn default() -> Self {
        Self { ibar: Vec3::new(1.0, 1.2, 0.8), j: Vec2::new(0.1, 0.1), mgh: 1.0, step: 0.1 }
    }
}

impl HeavyTopParams {
    pub fn validate(&self) -> Result<()> {
        if self.ibar.iter().chain(self.j.iter()).any(|&x| !(x > 0.0)) || !(self.step > 0.0) || !self.mgh.is_finite() {
            return Err(Error::Invalid("heavy-top inertias and step must be positive".into()));
        }
        Ok(())
    }

    pub fn gamma1(&self) -> f64 {
        self.ibar.x + self.j.x
    }

    pub fn gamma2(&self) -> f64 {
        self.ibar.y + self.j.y
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let (g1, g2, i3, j1, j2) = (self.gamma1(), self.gamma2(), self.ibar.z, self.j.x, self.j.y);
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(5, 5, &[
            g1,  0.0, 0.0, j1,  0.0,
            0.0, g2,  0.0, 0.0, j2,
            0.0, 0.0, i3,  0.0, 0.0,
            j1,  0.0, 0.0, j1,  0.0,
            0.0, j2,  0.0, 0.0, j2,
        ]);
        m
    }
}

/// `½zᵀMz − Mgh·Γ₃` with `z = (Ω, θ̇)`.
pub fn heavytop_reduced_l(gamma: &Vec3, omega: &Vec3, thetadot: &Vec2, p: &HeavyTopParams) -> f64 {
    let z = DVector::from_column_slice(&[omega.x, omega.y, omega.z, thetadot.x, thetadot.y]);
    0.5 * z.dot(&(p.mass_matrix() * &z)) - p.mgh * gamma.z
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyTopDiscrete {
    pub ld: f64,
    pub phi: Vec3,
}

/// Constraint values `Φ¹…Φ³` followed by the rotor controls `u₁, u₂`.
pub fn heavytop_defect(xi_k: &Vec3, xi_k1: &Vec3, theta: &[Vec2; 3], gamma_k: &Vec3, p: &HeavyTopParams) -> [f64; 5] {
    let h = p.step;
    let (g1, g2, i3, j1, j2, mgh) = (p.gamma1(), p.gamma2(), p.ibar.z, p.j.x, p.j.y, p.mgh);
    let acc = (xi_k1 - xi_k) / h;
    let sum = xi_k + xi_k1;
    let diff3 = xi_k1.z - xi_k.z;
    let th_acc = (theta[2] - theta[1] * 2.0 + theta[0]) / (h * h);
    let th_span = theta[2] - theta[0];

    let phi1 = g1 * acc.x + j1 * th_acc.x - mgh * gamma_k.y - g2 * sum.y * sum.z / 4.0 + i3 * diff3 * sum.y / (2.0 * h);
    let phi2 =
        g2 * acc.y + j2 * th_acc.y + g1 * sum.x * sum.z / 4.0 - j1 * th_span.x * sum.z / (4.0 * h) + mgh * gamma_k.x;
    let phi3 = i3 * acc.z - g1 * sum.x * sum.y / 4.0 + g2 * sum.y * sum.x / 4.0 + j2 * th_span.y * sum.x / (4.0 * h)
        - j1 * th_span.x * sum.y / (4.0 * h);
    [phi1, phi2, phi3, j1 * (acc.x + th_acc.x), j2 * (acc.y + th_acc.y)]
}

pub fn heavytop_discrete(
    xi_k: &Vec3,
    xi_k1: &Vec3,
    theta: &[Vec2; 3],
    gamma_k: &Vec3,
    p: &HeavyTopParams,
) -> HeavyTopDiscrete {
    let d = heavytop_defect(xi_k, xi_k1, theta, gamma_k, p);
    HeavyTopDiscrete { ld: 0.5 * (d[3] * d[3] + d[4] * d[4]), phi: Vec3::new(d[0], d[1], d[2]) }
}

/// Reads `(ξ_k, ξ_{k+1}, θ_k..θ_{k+2}, Γ_k)` from a pair of arrows. Only the
/// base of the first arrow is used, so the value is defined off G₂ too.
fn decode(g: &GroupoidElement, h: &GroupoidElement, step: f64) -> Option<(Vec3, Vec3, [Vec2; 3], Vec3)> {
    let (
        GroupoidElement::Action { base, rotation: Some(w0), shift: s0 },
        GroupoidElement::Action { rotation: Some(w1), shift: s1, .. },
    ) = (g, h)
    else {
        return None;
    };
    let xi0 = cay_inv(w0).ok()? / step;
    let xi1 = cay_inv(w1).ok()? / step;
    let th0 = Vec2::new(base[3], base[4]);
    let th1 = th0 + Vec2::new(s0[0], s0[1]);
    let th2 = th1 + Vec2::new(s1[0], s1[1]);
    Some((xi0, xi1, [th0, th1, th2], vec3(base, 0)))
}

/// Controlled heavy-top equations with the rotors actuated and the body not.
pub fn heavytop_system(p: HeavyTopParams) -> ControlledSystem {
    ControlledSystem {
        backend: HEAVY_TOP,
        components: 5,
        defect: Arc::new(move |g, h| match decode(g, h, p.step) {
            Some((x0, x1, th, gamma)) => DVector::from_row_slice(&heavytop_defect(&x0, &x1, &th, &gamma, &p)),
            None => DVector::repeat(5, f64::NAN),
        }),
        actuated: vec![3, 4],
        unactuated: vec![0, 1, 2],
        cost: Arc::new(|u| 0.5 * u.norm_squared()),
    }
}

pub fn heavytop_problem(p: HeavyTopParams) -> Result<(DiscreteLagrangian2, ConstraintSet)> {
    let (l, c) = underactuated_to_constrained(&heavytop_system(p))?;
    Ok((l, c.expect("heavy top has unactuated components")))
}

/// Attitudes (body to world), body velocities and rotor states at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyTopBoundary {
    pub r0: RotationMatrix,
    pub omega0: Vec3,
    pub theta0: Vec2,
    pub thetadot0: Vec2,
    pub rt: RotationMatrix,
    pub omegat: Vec3,
    pub thetat: Vec2,
    pub thetadott: Vec2,
}

impl HeavyTopBoundary {
    pub fn upright_rest() -> Self {
        let id = RotationMatrix::identity();
        Self {
            r0: id,
            omega0: Vec3::zeros(),
            theta0: Vec2::zeros(),
            thetadot0: Vec2::zeros(),
            rt: id,
            omegat: Vec3::zeros(),
            thetat: Vec2::zeros(),
            thetadott: Vec2::zeros(),
        }
    }
}

fn arrow(r: &RotationMatrix, r_next: &RotationMatrix, th: &Vec2, th_next: &Vec2) -> GroupoidElement {
    let gamma = r.matrix().transpose() * Vec3::z();
    GroupoidElement::Action {
        base: DVector::from_column_slice(&[gamma.x, gamma.y, gamma.z, th.x, th.y]),
        rotation: Some(r.transpose() * *r_next),
        shift: DVector::from_column_slice((th_next - th).as_slice()),
    }
}

/// Initial guess: boundary node pairs from the velocities, interior attitudes
/// on the geodesic and rotor angles linear.
pub fn heavytop_guess(b: &HeavyTopBoundary, n: usize, h: f64) -> Result<Trajectory> {
    if n < 6 {
        return Err(Error::Invalid(format!("need at least 6 nodes, got {n}")));
    }
    let r2 = b.r0 * cay(&(b.omega0 * h));
    let rn1 = b.rt * cay(&(b.omegat * h)).transpose();
    let th2 = b.theta0 + b.thetadot0 * h;
    let thn1 = b.thetat - b.thetadott * h;
    let inc = split_rotation(&(r2.transpose() * rn1), n - 3);
    let mut rs = vec![b.r0, r2];
    let mut ths = vec![b.theta0, th2];
    for k in 1..n - 3 {
        let next = *rs.last().expect("non-empty") * inc;
        rs.push(next);
        ths.push(th2 + (thn1 - th2) * (k as f64 / (n - 3) as f64));
    }
    rs.extend([rn1, b.rt]);
    ths.extend([thn1, b.thetat]);
    let elements = (0..n - 1).map(|k| arrow(&rs[k], &rs[k + 1], &ths[k], &ths[k + 1])).collect();
    let mut t = Trajectory::new(elements)?;
    t.multipliers = Some(vec![DVector::zeros(3); n - 2]);
    Ok(t)
}

pub fn heavytop_oc_solve(
    b: &HeavyTopBoundary,
    n: usize,
    p: HeavyTopParams,
    config: SolverConfig,
) -> Result<BvpSolution> {
    p.validate()?;
    let guess = heavytop_guess(b, n, p.step)?;
    let (lagrangian, constraints) = heavytop_problem(p)?;
    solve_bvp(&BvpProblem { lagrangian, constraints: Some(constraints), guess, config })
}

/// Largest gap between the advected vertical `w_kᵀΓ_k` and the next arrow's `Γ_{k+1}`.
pub fn gamma_propagation_defect(traj: &Trajectory) -> f64 {
    traj.elements.windows(2).map(|w| (vec3(&w[0].target(), 0) - vec3(&w[1].source(), 0)).amax()).fold(0.0, f64::max)
}
