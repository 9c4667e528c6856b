//! Numerical checks of the structural properties of the discrete flows:
//! implicit dynamics through momentum matching, symplecticity, Noether
//! conservation, stationarity and convergence order.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discrete1::{ep_step, legendre_minus_inverse, legendre_plus, DiscreteLagrangian1, Momentum};
use crate::error::{Error, Result};
use crate::groupoid::{basis, fd_step, AlgebraVector, BasePoint, GroupoidElement};
use crate::liealg::{cay, cay_inv, dcay, dcay_inv, Mat3, Vec3};
use crate::models;
use crate::newton::SolverConfig;
use crate::second_order::{
    augmented_action, solve_step, trajectory_residuals, ConstraintSet, DiscreteLagrangian2, Trajectory, Window4,
};
use crate::tolerances;

/// Momenta at the junction of a window after eliminating the free part:
/// `mu` and `mu_tilde` split `D₁L(g₂,g₃)` paired with left-invariant fields,
/// `mu_bar` is `D₂L(g₂,g₃)` paired with right-invariant fields.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumTriple {
    pub mu: DVector<f64>,
    pub mu_tilde: DVector<f64>,
    pub mu_bar: DVector<f64>,
}

/// One-slot derivatives of `L` at `(g, h)` along a basis vector. `left_*`
/// moves an argument by right translation (left-invariant field), `right_*`
/// by left translation (right-invariant field, with its sign).
struct SlotDerivatives<'a> {
    l: &'a DiscreteLagrangian2,
    d: f64,
}

impl SlotDerivatives<'_> {
    fn central(&self, f: impl Fn(f64) -> f64) -> f64 {
        (f(self.d) - f(-self.d)) / (2.0 * self.d)
    }
    fn first_left(&self, g: &GroupoidElement, h: &GroupoidElement, e: &AlgebraVector) -> f64 {
        self.central(|t| self.l.value(&g.translate_right(e, t), h))
    }
    fn first_right(&self, g: &GroupoidElement, h: &GroupoidElement, e: &AlgebraVector) -> f64 {
        -self.central(|t| self.l.value(&g.translate_left_inv(e, t), h))
    }
    fn second_left(&self, g: &GroupoidElement, h: &GroupoidElement, e: &AlgebraVector) -> f64 {
        self.central(|t| self.l.value(g, &h.translate_right(e, t)))
    }
    fn second_right(&self, g: &GroupoidElement, h: &GroupoidElement, e: &AlgebraVector) -> f64 {
        -self.central(|t| self.l.value(g, &h.translate_left_inv(e, t)))
    }
}

pub fn momentum_triple(l: &DiscreteLagrangian2, w: &Window4) -> Result<MomentumTriple> {
    let w = Window4::new(w.0.clone())?;
    let [g1, g2, g3, _] = &w.0;
    let backend = l.backend;
    let s = SlotDerivatives { l, d: fd_step(w.0.iter().map(GroupoidElement::scale).fold(0.0, f64::max)) };
    let r = backend.rank();
    let mut t = MomentumTriple { mu: DVector::zeros(r), mu_tilde: DVector::zeros(r), mu_bar: DVector::zeros(r) };
    for i in 0..r {
        let e = basis(backend, i);
        // Pairing with Z₂ = (0, ←X) fixes μ; μ + μ̃ = D₁L along ←X.
        t.mu[i] = -s.second_left(g1, g2, &e);
        t.mu_tilde[i] = s.first_left(g2, g3, &e) - t.mu[i];
        t.mu_bar[i] = s.second_right(g2, g3, &e);
    }
    Ok(t)
}

/// Matching defect against `Z₁ = (−X, →X)` after eliminating μ̃; equals the
/// second-order DEL residual of the window.
pub fn implicit_dynamics_residual(l: &DiscreteLagrangian2, w: &Window4) -> Result<DVector<f64>> {
    let t = momentum_triple(l, w)?;
    let [_, _, g3, g4] = &w.0;
    let s = SlotDerivatives { l, d: fd_step(w.0.iter().map(GroupoidElement::scale).fold(0.0, f64::max)) };
    let next = DVector::from_iterator(
        l.backend.rank(),
        (0..l.backend.rank()).map(|i| s.first_right(g3, g4, &basis(l.backend, i))),
    );
    Ok(t.mu_tilde - t.mu_bar - next)
}

fn pair_point(q: &DVector<f64>, p: &DVector<f64>) -> Momentum {
    Momentum { base: q.clone(), components: p.clone() }
}

/// `‖JᵀΩJ − Ω‖_F` for the central-difference Jacobian `J` of the Hamiltonian
/// evolution map at `(q, p)` on the pair groupoid over ℝᵐ.
pub fn symplecticity_defect(
    ld: &DiscreteLagrangian1,
    q: &DVector<f64>,
    p: &DVector<f64>,
    step: f64,
    config: &SolverConfig,
) -> Result<f64> {
    let m = q.len();
    if p.len() != m || ld.backend.rank() != m {
        return Err(Error::DimensionMismatch("phase point and Lagrangian dimensions differ".into()));
    }
    let mu0 = pair_point(q, p);
    let h0 = legendre_minus_inverse(ld, &mu0, &GroupoidElement::pair(q.clone(), q.clone())?, config)?;
    let map = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let (qx, px) = (x.rows(0, m).into_owned(), x.rows(m, m).into_owned());
        let guess = GroupoidElement::pair(qx.clone(), h0.target() + (&qx - q))?;
        let h = legendre_minus_inverse(ld, &pair_point(&qx, &px), &guess, config)?;
        let out = legendre_plus(ld, &h)?;
        let mut y = DVector::zeros(2 * m);
        y.rows_mut(0, m).copy_from(&out.base);
        y.rows_mut(m, m).copy_from(&out.components);
        Ok(y)
    };
    let mut x = DVector::zeros(2 * m);
    x.rows_mut(0, m).copy_from(q);
    x.rows_mut(m, m).copy_from(p);
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for c in 0..2 * m {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += step;
        xm[c] -= step;
        j.set_column(c, &((map(&xp)? - map(&xm)?) / (2.0 * step)));
    }
    let mut omega = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        omega[(i, m + i)] = 1.0;
        omega[(m + i, i)] = -1.0;
    }
    Ok((j.transpose() * &omega * &j - omega).norm())
}

pub type GeneratorFn = Arc<dyn Fn(&BasePoint) -> AlgebraVector + Send + Sync>;

/// Infinitesimal symmetry `X` on the base, lifted to arrows by
/// `g ↦ fiber_curve(α(g), X, t)⁻¹ · g · fiber_curve(β(g), X, t)`, and a gauge term.
#[derive(Clone)]
pub struct NoetherData {
    pub generator: GeneratorFn,
    pub gauge: Option<Arc<dyn Fn(&GroupoidElement) -> f64 + Send + Sync>>,
}

impl NoetherData {
    pub fn new(generator: impl Fn(&BasePoint) -> AlgebraVector + Send + Sync + 'static) -> Self {
        Self { generator: Arc::new(generator), gauge: None }
    }

    fn lift(&self, g: &GroupoidElement, t: f64) -> GroupoidElement {
        let x = (self.generator)(&g.source());
        let y = (self.generator)(&g.target());
        g.translate_left_inv(&x, t).translate_right(&y, t)
    }
}

/// Noether quantities `F_Z(k)` at every interior arrow of an on-shell trajectory.
pub fn noether_values(l: &DiscreteLagrangian2, nd: &NoetherData, traj: &Trajectory) -> Result<Vec<f64>> {
    let (stat, _) = trajectory_residuals(l, None, traj)?;
    let worst = stat.iter().map(|r| r.amax()).fold(0.0, f64::max);
    if !(worst <= tolerances::ON_SHELL) {
        return Err(Error::NotOnShell(worst));
    }
    let g = &traj.elements;
    let mut out = Vec::with_capacity(g.len() - 2);
    for k in 1..g.len() - 1 {
        let x = (nd.generator)(&g[k].target());
        let d = fd_step(g[k - 1].scale().max(g[k].scale()).max(g[k + 1].scale()));
        let central = |f: &dyn Fn(f64) -> f64| (f(d) - f(-d)) / (2.0 * d);
        let before = central(&|t| l.value(&g[k - 1], &g[k].translate_right(&x, t)));
        let after = central(&|t| l.value(&g[k].translate_right(&x, t), &nd.lift(&g[k + 1], t)));
        out.push(before + after + nd.gauge.as_ref().map_or(0.0, |f| f(&g[k])));
    }
    Ok(out)
}

/// Largest step-to-step change of the Noether quantity.
pub fn noether_defect(l: &DiscreteLagrangian2, nd: &NoetherData, traj: &Trajectory) -> Result<f64> {
    let f = noether_values(l, nd, traj)?;
    Ok(f.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max))
}

/// Extends a trajectory by `steps` arrows with [`solve_step`] and a
/// constant-velocity guess.
pub fn integrate_second_order(
    l: &DiscreteLagrangian2,
    head: [GroupoidElement; 3],
    steps: usize,
    config: &SolverConfig,
) -> Result<Trajectory> {
    let mut g: Vec<GroupoidElement> = head.to_vec();
    for _ in 0..steps {
        let n = g.len();
        let guess = crate::discrete1::constant_velocity_guess(&g[n - 1]);
        let next = solve_step(l, &g[n - 3], &g[n - 2], &g[n - 1], &guess, config)?;
        g.push(next);
    }
    Trajectory::new(g)
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityCheck {
    /// `ΔS(1e-3)/ΔS(1e-4)` for every junction and direction with a visible change.
    pub ratios: Vec<f64>,
    /// Directions whose action change at ε = 1e-3 is below 1e-12.
    pub flat: usize,
}

impl StationarityCheck {
    pub fn worst(&self) -> Option<f64> {
        self.ratios.iter().copied().max_by(|a, b| (a - 100.0).abs().total_cmp(&(b - 100.0).abs()))
    }

    pub fn passes(&self) -> bool {
        !self.ratios.is_empty() && self.ratios.iter().all(|r| (80.0..=120.0).contains(r))
    }
}

/// Second-order check of stationarity: single-junction perturbations change
/// the augmented action quadratically.
pub fn stationarity_check(
    l: &DiscreteLagrangian2,
    c: Option<&ConstraintSet>,
    traj: &Trajectory,
) -> Result<StationarityCheck> {
    let base = augmented_action(l, c, traj)?;
    let mut out = StationarityCheck { ratios: Vec::new(), flat: 0 };
    for j in 1..traj.elements.len() - 2 {
        for i in 0..l.backend.rank() {
            let e = basis(l.backend, i);
            let ds = |eps: f64| augmented_action(l, c, &traj.vary_junction(j, &e, eps)).map(|s| s - base);
            let (big, small) = (ds(1e-3)?, ds(1e-4)?);
            if big.abs() < 1e-12 {
                out.flat += 1;
            } else {
                out.ratios.push(big / small);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub step: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Error ratios between successive levels (absent when errors vanish).
    pub ratios: Vec<Option<f64>>,
    pub orders: Vec<Option<f64>>,
}

fn euler_rhs(inertia: &Vec3, omega: &Vec3) -> Vec3 {
    inertia.component_mul(omega).cross(omega).component_div(inertia)
}

/// Classical RK4 on `IΩ̇ = IΩ × Ω`, sampled at multiples of `h`.
pub fn euler_reference(inertia: &Vec3, omega0: &Vec3, h: f64, samples: usize, substeps: usize) -> Vec<Vec3> {
    let dt = h / substeps as f64;
    let mut w = *omega0;
    let mut out = vec![w];
    for _ in 1..samples {
        for _ in 0..substeps {
            let k1 = euler_rhs(inertia, &w);
            let k2 = euler_rhs(inertia, &(w + k1 * (dt / 2.0)));
            let k3 = euler_rhs(inertia, &(w + k2 * (dt / 2.0)));
            let k4 = euler_rhs(inertia, &(w + k3 * dt));
            w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        out.push(w);
    }
    out
}

/// Steps the discrete Euler–Poincaré equations for the free rigid body up to
/// `t_final` and reports the max error against the continuous solution.
pub fn ep_order_check(
    inertia: &Vec3,
    eta0: &Vec3,
    steps: &[f64],
    t_final: f64,
    config: &SolverConfig,
) -> Result<ConvergenceTable> {
    if steps.windows(2).any(|w| !(w[1] < w[0])) || steps.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Invalid("step list must be positive and decreasing".into()));
    }
    let i = *inertia;
    let l = move |x: &Vec3| 0.5 * x.dot(&i.component_mul(x));
    let grad = move |x: &Vec3| i.component_mul(x);
    let mut rows = Vec::new();
    for &h in steps {
        let n = (t_final / h).round() as usize;
        let reference = euler_reference(inertia, eta0, h, n + 1, ((h / 1e-4).ceil() as usize).max(1));
        let mut eta = *eta0;
        let mut err: f64 = 0.0;
        for r in reference.iter().skip(1) {
            eta = ep_step(&l, Some(&grad), &eta, h, config)?;
            err = err.max((eta - r).amax());
        }
        rows.push(ConvergenceRow { step: h, error: err });
    }
    let ratios: Vec<Option<f64>> =
        rows.windows(2).map(|w| (w[1].error > 1e-13).then(|| w[0].error / w[1].error)).collect();
    let orders = rows.windows(2).zip(&ratios).map(|(w, r)| r.map(|r| r.ln() / (w[0].step / w[1].step).ln())).collect();
    Ok(ConvergenceTable { rows, ratios, orders })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"max"` when the value must not exceed the threshold, `"min"` otherwise.
    pub kind: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, kind: "max", pass: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, kind: "min", pass: value >= threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Cayley,
    Symplectic,
    Noether,
    Order,
}

pub fn cayley_checks(rng: &mut ChaCha8Rng, samples: usize) -> Vec<Check> {
    let (mut orth, mut inv, mut round, mut dprod) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let w = random_ball(rng, 3.0);
        let r = cay(&w);
        let (o, det) = r.defect();
        orth = orth.max(o).max((det - 1.0).abs());
        inv = inv.max(((r * cay(&-w)).matrix() - Mat3::identity()).amax());
        round = round.max(cay_inv(&r).map_or(f64::INFINITY, |v| (v - w).amax()));
        dprod = dprod.max((dcay(&w) * dcay_inv(&w) - Mat3::identity()).amax());
    }
    vec![
        Check::at_most("cayley.orthogonality", orth, 1e-12),
        Check::at_most("cayley.inverse_pair", inv, 1e-12),
        Check::at_most("cayley.round_trip", round, 1e-9),
        Check::at_most("cayley.dcay_product", dprod, 1e-12),
    ]
}

/// Uniform sample from the ball of radius `radius` in ℝ³.
pub fn random_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            return v * radius;
        }
    }
}

pub fn symplectic_checks(rng: &mut ChaCha8Rng, config: &SolverConfig) -> Result<Vec<Check>> {
    let osc = models::harmonic_oscillator(1, 0.1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q = DVector::from_element(1, rng.gen_range(-2.0..2.0));
        let p = DVector::from_element(1, rng.gen_range(-2.0..2.0));
        worst = worst.max(symplecticity_defect(&osc, &q, &p, 1e-4, config)?);
    }
    let free = models::free_particle(2, 1.0);
    let q = DVector::from_column_slice(&[0.3, -0.8]);
    let p = DVector::from_column_slice(&[1.1, 0.4]);
    let free_defect = symplecticity_defect(&free, &q, &p, 1e-4, config)?;
    Ok(vec![
        Check::at_most("symplectic.harmonic", worst, 1e-5),
        Check::at_most("symplectic.free_particle", free_defect, 1e-9),
    ])
}

/// On-shell spline trajectory on ℝ², started from samples of a cubic that
/// passes near the origin halfway through a 100-step run.
pub fn spline_trajectory(steps: usize, config: &SolverConfig) -> Result<Trajectory> {
    let node = |k: f64| {
        let s = k - 50.0;
        DVector::from_column_slice(&[0.1 * s + 0.06 * s * s + 2e-5 * s * s * s, 1.0 + 0.2 * s - 0.04 * s * s])
    };
    let e = |k: f64| GroupoidElement::pair(node(k), node(k + 1.0));
    integrate_second_order(&models::spline(2), [e(0.0)?, e(1.0)?, e(2.0)?], steps, config)
}

pub fn noether_checks(config: &SolverConfig) -> Result<Vec<Check>> {
    let l = models::spline(2);
    // Conservation is checked below solver error, so solve the steps tightly.
    let traj = spline_trajectory(100, &SolverConfig { tolerance: 1e-12, ..*config })?;
    let rotation = NoetherData::new(|q: &BasePoint| DVector::from_column_slice(&[-q[1], q[0]]));
    let translation = NoetherData::new(|_: &BasePoint| DVector::from_column_slice(&[1.0, -0.5]));
    let scaling = NoetherData::new(|q: &BasePoint| q.clone());
    Ok(vec![
        Check::at_most("noether.rotation", noether_defect(&l, &rotation, &traj)?, 1e-9),
        Check::at_most("noether.translation", noether_defect(&l, &translation, &traj)?, 1e-9),
        Check::at_least("noether.scaling_control", noether_defect(&l, &scaling, &traj)?, 1e-2),
    ])
}

pub fn order_checks(config: &SolverConfig) -> Result<(Vec<Check>, ConvergenceTable)> {
    let table =
        ep_order_check(&Vec3::new(1.0, 2.0, 3.0), &Vec3::new(1.0, 0.5, 0.2), &[0.1, 0.05, 0.025, 0.0125], 1.0, config)?;
    let worst = table.ratios.iter().map(|r| r.unwrap_or(0.0)).fold(f64::INFINITY, f64::min);
    Ok((vec![Check::at_least("order.richardson_ratio", worst, 1.8)], table))
}

pub fn run_suite(suite: Suite, seed: u64, config: &SolverConfig) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if matches!(suite, Suite::All | Suite::Cayley) {
        out.extend(cayley_checks(&mut rng, 1000));
    }
    if matches!(suite, Suite::All | Suite::Symplectic) {
        out.extend(symplectic_checks(&mut rng, config)?);
    }
    if matches!(suite, Suite::All | Suite::Noether) {
        out.extend(noether_checks(config)?);
    }
    if matches!(suite, Suite::All | Suite::Order) {
        out.extend(order_checks(config)?.0);
    }
    Ok(out)
}
