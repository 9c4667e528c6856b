//! First-order discrete mechanics: DEL residual, discrete Legendre transforms,
//! the Lagrangian and Hamiltonian evolution operators, and the discrete
//! Euler–Poincaré equations with the Cayley retraction.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::groupoid::{basis, dirderiv_left, dirderiv_right, fd_step, Backend, BasePoint, GroupoidElement};
use crate::liealg::{dcay_inv, Vec3};
use crate::newton::{self, ChartProblem, NewtonOptions};

pub use crate::newton::{JacobianMode, SolveReport, SolverConfig};

pub type ScalarFn = Arc<dyn Fn(&GroupoidElement) -> f64 + Send + Sync>;
/// All directional derivatives along the canonical basis at once.
pub type DerivativeFn = Arc<dyn Fn(&GroupoidElement) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub struct DiscreteLagrangian1 {
    pub backend: Backend,
    f: ScalarFn,
    left: Option<DerivativeFn>,
    right: Option<DerivativeFn>,
}

impl fmt::Debug for DiscreteLagrangian1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteLagrangian1")
            .field("backend", &self.backend)
            .field("analytic", &self.left.is_some())
            .finish()
    }
}

impl DiscreteLagrangian1 {
    pub fn new(backend: Backend, f: impl Fn(&GroupoidElement) -> f64 + Send + Sync + 'static) -> Self {
        Self { backend, f: Arc::new(f), left: None, right: None }
    }

    /// Supplies exact left- and right-invariant derivatives in place of finite differences.
    pub fn with_derivatives(
        mut self,
        left: impl Fn(&GroupoidElement) -> DVector<f64> + Send + Sync + 'static,
        right: impl Fn(&GroupoidElement) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.left = Some(Arc::new(left));
        self.right = Some(Arc::new(right));
        self
    }

    pub fn value(&self, g: &GroupoidElement) -> f64 {
        (self.f)(g)
    }

    /// Components `dirderiv_left(𝕃_d, g, e_γ)`.
    pub fn left_derivative(&self, g: &GroupoidElement) -> Result<DVector<f64>> {
        self.check(g)?;
        if let Some(d) = &self.left {
            return Ok(d(g));
        }
        let f = |x: &GroupoidElement| (self.f)(x);
        let r = self.backend.rank();
        let mut out = DVector::zeros(r);
        for i in 0..r {
            out[i] = dirderiv_left(&f, g, &basis(self.backend, i))?;
        }
        Ok(out)
    }

    /// Components `dirderiv_right(𝕃_d, g, e_γ)`.
    pub fn right_derivative(&self, g: &GroupoidElement) -> Result<DVector<f64>> {
        self.check(g)?;
        if let Some(d) = &self.right {
            return Ok(d(g));
        }
        let f = |x: &GroupoidElement| (self.f)(x);
        let r = self.backend.rank();
        let mut out = DVector::zeros(r);
        for i in 0..r {
            out[i] = dirderiv_right(&f, g, &basis(self.backend, i))?;
        }
        Ok(out)
    }

    fn check(&self, g: &GroupoidElement) -> Result<()> {
        if g.backend() != self.backend {
            return Err(Error::BackendMismatch(format!("{:?} vs {:?}", g.backend(), self.backend)));
        }
        Ok(())
    }
}

/// Covector on an algebroid fiber, in dual-basis components.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub base: BasePoint,
    pub components: DVector<f64>,
}

/// DEL defect of the composable pair `(g, h)`.
pub fn del_residual(ld: &DiscreteLagrangian1, g: &GroupoidElement, h: &GroupoidElement) -> Result<DVector<f64>> {
    g.compose(h)?;
    Ok(ld.left_derivative(g)? - ld.right_derivative(h)?)
}

/// 𝔽⁻𝕃_d(h), based at α(h).
pub fn legendre_minus(ld: &DiscreteLagrangian1, h: &GroupoidElement) -> Result<Momentum> {
    Ok(Momentum { base: h.source(), components: ld.right_derivative(h)? })
}

/// 𝔽⁺𝕃_d(g), based at β(g).
pub fn legendre_plus(ld: &DiscreteLagrangian1, g: &GroupoidElement) -> Result<Momentum> {
    Ok(Momentum { base: g.target(), components: ld.left_derivative(g)? })
}

/// Constant-velocity predictor: an arrow leaving β(g) with the same increment as `g`.
pub fn constant_velocity_guess(g: &GroupoidElement) -> GroupoidElement {
    match g {
        GroupoidElement::Pair { source, target } => {
            GroupoidElement::Pair { source: target.clone(), target: target * 2.0 - source }
        }
        GroupoidElement::Group(_) => g.clone(),
        GroupoidElement::Action { rotation, shift, .. } => {
            GroupoidElement::Action { base: g.target(), rotation: *rotation, shift: shift.clone() }
        }
    }
}

struct DelStep<'a> {
    ld: &'a DiscreteLagrangian1,
    g: &'a GroupoidElement,
}

impl ChartProblem for DelStep<'_> {
    type Point = GroupoidElement;
    fn dim(&self) -> usize {
        self.ld.backend.rank()
    }
    fn residual(&self, h: &GroupoidElement) -> Result<DVector<f64>> {
        del_residual(self.ld, self.g, h)
    }
    fn retract(&self, h: &GroupoidElement, z: &DVector<f64>) -> Result<GroupoidElement> {
        Ok(h.translate_right(z, 1.0))
    }
}

const REGULAR: NewtonOptions = NewtonOptions { allow_rank_deficient: false, check_regular: true };

/// Discrete Lagrangian evolution: the arrow `h` after `g` with vanishing DEL defect.
pub fn step(
    ld: &DiscreteLagrangian1,
    g: &GroupoidElement,
    guess: &GroupoidElement,
    config: &SolverConfig,
) -> Result<GroupoidElement> {
    g.compose(guess)?;
    Ok(newton::solve(&DelStep { ld, g }, guess.clone(), config, REGULAR)?.point)
}

struct LegendreInverse<'a> {
    ld: &'a DiscreteLagrangian1,
    mu: &'a Momentum,
}

impl ChartProblem for LegendreInverse<'_> {
    type Point = GroupoidElement;
    fn dim(&self) -> usize {
        self.ld.backend.rank()
    }
    fn residual(&self, h: &GroupoidElement) -> Result<DVector<f64>> {
        Ok(legendre_minus(self.ld, h)?.components - &self.mu.components)
    }
    fn retract(&self, h: &GroupoidElement, z: &DVector<f64>) -> Result<GroupoidElement> {
        Ok(h.translate_right(z, 1.0))
    }
}

/// Arrow `h` leaving the base of `mu` with 𝔽⁻𝕃_d(h) = μ.
pub fn legendre_minus_inverse(
    ld: &DiscreteLagrangian1,
    mu: &Momentum,
    guess: &GroupoidElement,
    config: &SolverConfig,
) -> Result<GroupoidElement> {
    let gap = (guess.source() - &mu.base).amax();
    if !(gap <= crate::tolerances::COMPOSABLE) {
        return Err(Error::NotComposable(gap));
    }
    Ok(newton::solve(&LegendreInverse { ld, mu }, guess.clone(), config, REGULAR)?.point)
}

/// Hamiltonian evolution 𝔽⁺𝕃_d ∘ (𝔽⁻𝕃_d)⁻¹.
pub fn hamiltonian_step(
    ld: &DiscreteLagrangian1,
    mu: &Momentum,
    guess: &GroupoidElement,
    config: &SolverConfig,
) -> Result<Momentum> {
    let h = legendre_minus_inverse(ld, mu, guess, config)?;
    legendre_plus(ld, &h)
}

fn gradient(l: &dyn Fn(&Vec3) -> f64, x: &Vec3) -> Vec3 {
    let d = fd_step(x.amax());
    Vec3::from_fn(|i, _| {
        let e = Vec3::ith(i, d);
        (l(&(x + e)) - l(&(x - e))) / (2.0 * d)
    })
}

/// Discrete Euler–Poincaré defect for a reduced Lagrangian `l` on so(3):
/// `(dcay⁻¹_{−h̄η_k})ᵀ∇l(η_k) − (dcay⁻¹_{h̄η_{k+1}})ᵀ∇l(η_{k+1})`.
pub fn ep_residual(
    l: &dyn Fn(&Vec3) -> f64,
    grad_l: Option<&dyn Fn(&Vec3) -> Vec3>,
    eta_k: &Vec3,
    eta_k1: &Vec3,
    h: f64,
) -> Vec3 {
    let grad = |x: &Vec3| grad_l.map_or_else(|| gradient(l, x), |g| g(x));
    dcay_inv(&(-eta_k * h)).transpose() * grad(eta_k) - dcay_inv(&(eta_k1 * h)).transpose() * grad(eta_k1)
}

struct EpStep<'a> {
    l: &'a dyn Fn(&Vec3) -> f64,
    grad_l: Option<&'a dyn Fn(&Vec3) -> Vec3>,
    eta: Vec3,
    h: f64,
}

impl ChartProblem for EpStep<'_> {
    type Point = Vec3;
    fn dim(&self) -> usize {
        3
    }
    fn residual(&self, x: &Vec3) -> Result<DVector<f64>> {
        let r = ep_residual(self.l, self.grad_l, &self.eta, x, self.h);
        Ok(DVector::from_column_slice(r.as_slice()))
    }
    fn retract(&self, x: &Vec3, z: &DVector<f64>) -> Result<Vec3> {
        Ok(x + Vec3::new(z[0], z[1], z[2]))
    }
}

/// Solves the discrete Euler–Poincaré equation for η_{k+1}, starting from η_k.
pub fn ep_step(
    l: &dyn Fn(&Vec3) -> f64,
    grad_l: Option<&dyn Fn(&Vec3) -> Vec3>,
    eta_k: &Vec3,
    h: f64,
    config: &SolverConfig,
) -> Result<Vec3> {
    if !(h > 0.0) {
        return Err(Error::Invalid("step must be positive".into()));
    }
    let problem = EpStep { l, grad_l, eta: *eta_k, h };
    Ok(newton::solve(&problem, *eta_k, config, NewtonOptions::default())?.point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::{cay, cay_inv};
    use proptest::prelude::*;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn pair(a: f64, b: f64) -> GroupoidElement {
        GroupoidElement::pair(dv(&[a]), dv(&[b])).unwrap()
    }

    fn free(hbar: f64) -> DiscreteLagrangian1 {
        DiscreteLagrangian1::new(Backend::Pair { dim: 1 }, move |g| {
            (g.target()[0] - g.source()[0]).powi(2) / (2.0 * hbar)
        })
    }

    fn harmonic(hbar: f64) -> DiscreteLagrangian1 {
        DiscreteLagrangian1::new(Backend::Pair { dim: 1 }, move |g| {
            let (a, b) = (g.source()[0], g.target()[0]);
            hbar * (((b - a) / hbar).powi(2) / 2.0 - ((a + b) / 2.0).powi(2) / 2.0)
        })
    }

    #[test]
    fn del_residual_examples() {
        let ld = free(1.0);
        assert!(del_residual(&ld, &pair(0.0, 1.0), &pair(1.0, 2.0)).unwrap()[0].abs() < 1e-9);
        // D₂𝕃(0,1) + D₁𝕃(1,3) = 1 − 2
        let r = del_residual(&ld, &pair(0.0, 1.0), &pair(1.0, 3.0)).unwrap()[0];
        assert!((r + 1.0).abs() < 1e-9);
        let c = DiscreteLagrangian1::new(Backend::Pair { dim: 1 }, |_| 2.5);
        assert_eq!(del_residual(&c, &pair(0.0, 1.0), &pair(1.0, 7.0)).unwrap()[0], 0.0);
        assert!(matches!(del_residual(&ld, &pair(0.0, 1.0), &pair(2.0, 3.0)), Err(Error::NotComposable(_))));
    }

    #[test]
    fn legendre_examples() {
        let m = legendre_minus(&free(0.5), &pair(0.0, 1.0)).unwrap();
        assert!((m.components[0] - 2.0).abs() < 1e-9);
        assert_eq!(m.base, dv(&[0.0]));
        let c = DiscreteLagrangian1::new(Backend::Pair { dim: 1 }, |_| 1.0);
        assert_eq!(legendre_plus(&c, &pair(0.0, 1.0)).unwrap().components[0], 0.0);
    }

    #[test]
    fn step_examples() {
        let cfg = SolverConfig::default();
        let h = step(&free(1.0), &pair(0.0, 1.0), &pair(1.0, 1.5), &cfg).unwrap();
        assert!((h.target()[0] - 2.0).abs() < 1e-10);

        // Harmonic recurrence: a(q₂ − 2q₁ + q₀)/h̄ + b h̄ (q₀ + 2q₁ + q₂)/4 = 0 with a=1, b=1.
        let hb = 0.1;
        let h = step(&harmonic(hb), &pair(0.0, 0.1), &pair(0.1, 0.2), &cfg).unwrap();
        let (q0, q1) = (0.0, 0.1);
        let c = hb / 4.0;
        let q2 = ((2.0 / hb - 2.0 * c) * q1 - (1.0 / hb + c) * q0) / (1.0 / hb + c);
        assert!((h.target()[0] - q2).abs() < 1e-9, "{} vs {q2}", h.target()[0]);

        let zero = DiscreteLagrangian1::new(Backend::Pair { dim: 1 }, |_| 0.0);
        assert!(matches!(step(&zero, &pair(0.0, 1.0), &pair(1.0, 2.0), &cfg), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn hamiltonian_step_examples() {
        let cfg = SolverConfig::default();
        let mu = Momentum { base: dv(&[0.0]), components: dv(&[1.0]) };
        let out = hamiltonian_step(&free(1.0), &mu, &pair(0.0, 0.5), &cfg).unwrap();
        assert!((out.base[0] - 1.0).abs() < 1e-10 && (out.components[0] - 1.0).abs() < 1e-9);
        let rest = Momentum { base: dv(&[3.0]), components: dv(&[0.0]) };
        let out = hamiltonian_step(&free(1.0), &rest, &pair(3.0, 3.2), &cfg).unwrap();
        assert!((out.base[0] - 3.0).abs() < 1e-10 && out.components[0].abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_composition_is_matrix_power() {
        // One step is linear: p₀ = (q₁−q₀)/h̄ + h̄(q₀+q₁)/4, p₁ = (q₁−q₀)/h̄ − h̄(q₀+q₁)/4.
        let hb = 0.1;
        let a = 1.0 / hb + hb / 4.0;
        let b = 1.0 / hb - hb / 4.0;
        let map = |q: f64, p: f64| {
            let q1 = (p + b * q) / a;
            (q1, b * q1 - a * q)
        };
        let ld = harmonic(hb);
        let cfg = SolverConfig::default();
        let mut mu = Momentum { base: dv(&[0.3]), components: dv(&[-0.4]) };
        let (mut q, mut p) = (0.3, -0.4);
        for _ in 0..10 {
            let guess = GroupoidElement::pair(mu.base.clone(), &mu.base + &mu.components * hb).unwrap();
            mu = hamiltonian_step(&ld, &mu, &guess, &cfg).unwrap();
            (q, p) = map(q, p);
        }
        assert!((mu.base[0] - q).abs() < 1e-8 && (mu.components[0] - p).abs() < 1e-8);
    }

    #[test]
    fn ep_residual_examples() {
        let l = |x: &Vec3| 0.5 * x.norm_squared();
        assert_eq!(ep_residual(&l, None, &Vec3::zeros(), &Vec3::zeros(), 0.1), Vec3::zeros());
        let eta = Vec3::new(0.4, -1.2, 0.7);
        assert!(ep_residual(&l, None, &eta, &eta, 0.1).amax() < 1e-9);
        let g = |x: &Vec3| *x;
        assert!(ep_residual(&l, Some(&g), &eta, &eta, 0.3).amax() < 1e-15);
    }

    #[test]
    fn ep_matches_group_del_residual() {
        let inertia = Vec3::new(1.0, 2.0, 3.0);
        let hb = 0.1;
        let l = move |x: &Vec3| 0.5 * x.dot(&inertia.component_mul(x));
        let grad = move |x: &Vec3| inertia.component_mul(x);
        let ld =
            DiscreteLagrangian1::new(Backend::Group, move |g| hb * l(&(cay_inv(g.rotation().unwrap()).unwrap() / hb)));
        let e0 = Vec3::new(1.0, 0.5, 0.2);
        let e1 = Vec3::new(0.9, 0.6, 0.1);
        let g = GroupoidElement::Group(cay(&(e0 * hb)));
        let h = GroupoidElement::Group(cay(&(e1 * hb)));
        let del = del_residual(&ld, &g, &h).unwrap();
        let ep = ep_residual(&l, Some(&grad), &e0, &e1, hb);
        assert!((del - DVector::from_column_slice(ep.as_slice())).amax() < 1e-8);
    }

    #[test]
    fn constant_velocity_guess_is_composable() {
        let g = pair(1.0, 3.0);
        assert_eq!(constant_velocity_guess(&g), pair(3.0, 5.0));
    }

    proptest! {
        #[test]
        fn pair_del_is_classical(q in prop::collection::vec(-2.0..2.0f64, 6)) {
            let f = |a: &DVector<f64>, b: &DVector<f64>| (b - a).norm_squared() + a[0] * b[1].sin() + a.dot(b).cos();
            let ld = DiscreteLagrangian1::new(Backend::Pair { dim: 2 }, move |g| f(&g.source(), &g.target()));
            let (q0, q1, q2) = (dv(&q[0..2]), dv(&q[2..4]), dv(&q[4..6]));
            let partial = |a: &DVector<f64>, b: &DVector<f64>, slot: usize, i: usize| {
                let d = 1e-6;
                let mut p = [a.clone(), b.clone()];
                let mut m = [a.clone(), b.clone()];
                p[slot][i] += d;
                m[slot][i] -= d;
                (f(&p[0], &p[1]) - f(&m[0], &m[1])) / (2.0 * d)
            };
            let r = del_residual(&ld, &GroupoidElement::pair(q0.clone(), q1.clone()).unwrap(), &GroupoidElement::pair(q1.clone(), q2.clone()).unwrap()).unwrap();
            for i in 0..2 {
                let classical = partial(&q0, &q1, 1, i) + partial(&q1, &q2, 0, i);
                prop_assert!((r[i] - classical).abs() < 1e-6);
            }
        }

        #[test]
        fn momentum_matches_along_steps(q0 in -1.0..1.0f64, v in -1.0..1.0f64) {
            let ld = harmonic(0.1);
            let cfg = SolverConfig::default();
            let mut g = pair(q0, q0 + 0.1 * v);
            for _ in 0..10 {
                let h = step(&ld, &g, &constant_velocity_guess(&g), &cfg).unwrap();
                let plus = legendre_plus(&ld, &g).unwrap();
                let minus = legendre_minus(&ld, &h).unwrap();
                prop_assert!((plus.components - minus.components).amax() < 1e-9);
                g = h;
            }
        }
    }
}
