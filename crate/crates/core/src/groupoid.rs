//! Lie groupoid backends: the pair groupoid Q×Q, the group SO(3), and the
//! action groupoid of SO(3) (acting on ℝ³ by `Γ ↦ RᵀΓ`) and a torus (acting
//! on unwrapped angles by translation).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::liealg::{cay, RotationMatrix, Vec3};
use crate::tolerances;

/// Base point coordinates (empty for the group backend).
pub type BasePoint = DVector<f64>;
/// Algebroid fiber coordinates against the canonical basis.
pub type AlgebraVector = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Pair groupoid over ℝᵐ.
    Pair { dim: usize },
    /// SO(3) as a groupoid over a point.
    Group,
    /// Action groupoid over ℝ³ (if `rotation`) × ℝᵏ angles (k = `torus`).
    Action { rotation: bool, torus: usize },
}

impl Backend {
    pub fn rank(&self) -> usize {
        match *self {
            Backend::Pair { dim } => dim,
            Backend::Group => 3,
            Backend::Action { rotation, torus } => 3 * rotation as usize + torus,
        }
    }

    pub fn base_dim(&self) -> usize {
        match *self {
            Backend::Pair { dim } => dim,
            Backend::Group => 0,
            Backend::Action { .. } => self.rank(),
        }
    }

    pub fn identity(&self, x: &BasePoint) -> GroupoidElement {
        match *self {
            Backend::Pair { .. } => GroupoidElement::Pair { source: x.clone(), target: x.clone() },
            Backend::Group => GroupoidElement::Group(RotationMatrix::identity()),
            Backend::Action { rotation, torus } => GroupoidElement::Action {
                base: x.clone(),
                rotation: rotation.then(RotationMatrix::identity),
                shift: DVector::zeros(torus),
            },
        }
    }

    /// Retraction of the algebroid fiber at `x` into the source fiber α⁻¹(x).
    pub fn fiber_curve(&self, x: &BasePoint, v: &AlgebraVector, t: f64) -> GroupoidElement {
        match *self {
            Backend::Pair { .. } => GroupoidElement::Pair { source: x.clone(), target: x + v * t },
            Backend::Group => GroupoidElement::Group(cay(&(vec3(v, 0) * t))),
            Backend::Action { rotation, torus } => {
                let off = 3 * rotation as usize;
                GroupoidElement::Action {
                    base: x.clone(),
                    rotation: rotation.then(|| cay(&(vec3(v, 0) * t))),
                    shift: v.rows(off, torus) * t,
                }
            }
        }
    }
}

pub(crate) fn vec3(v: &DVector<f64>, offset: usize) -> Vec3 {
    Vec3::new(v[offset], v[offset + 1], v[offset + 2])
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupoidElement {
    Pair { source: DVector<f64>, target: DVector<f64> },
    Group(RotationMatrix),
    Action { base: DVector<f64>, rotation: Option<RotationMatrix>, shift: DVector<f64> },
}

impl GroupoidElement {
    pub fn pair(source: DVector<f64>, target: DVector<f64>) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::DimensionMismatch("pair endpoints differ in dimension".into()));
        }
        Ok(Self::Pair { source, target })
    }

    pub fn action(base: DVector<f64>, rotation: Option<RotationMatrix>, shift: DVector<f64>) -> Result<Self> {
        let expected = 3 * rotation.is_some() as usize + shift.len();
        if base.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "action base has {} coordinates, expected {expected}",
                base.len()
            )));
        }
        Ok(Self::Action { base, rotation, shift })
    }

    pub fn backend(&self) -> Backend {
        match self {
            Self::Pair { source, .. } => Backend::Pair { dim: source.len() },
            Self::Group(_) => Backend::Group,
            Self::Action { rotation, shift, .. } => {
                Backend::Action { rotation: rotation.is_some(), torus: shift.len() }
            }
        }
    }

    pub fn source(&self) -> BasePoint {
        match self {
            Self::Pair { source, .. } => source.clone(),
            Self::Group(_) => DVector::zeros(0),
            Self::Action { base, .. } => base.clone(),
        }
    }

    pub fn target(&self) -> BasePoint {
        match self {
            Self::Pair { target, .. } => target.clone(),
            Self::Group(_) => DVector::zeros(0),
            Self::Action { base, rotation, shift } => {
                let mut out = base.clone();
                let off = match rotation {
                    Some(r) => {
                        let g = r.matrix().transpose() * vec3(base, 0);
                        out.rows_mut(0, 3).copy_from(&g);
                        3
                    }
                    None => 0,
                };
                let mut angles = out.rows_mut(off, shift.len());
                angles += shift;
                out
            }
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            Self::Pair { source, target } => Self::Pair { source: target.clone(), target: source.clone() },
            Self::Group(r) => Self::Group(r.transpose()),
            Self::Action { rotation, shift, .. } => {
                Self::Action { base: self.target(), rotation: rotation.map(|r| r.transpose()), shift: -shift }
            }
        }
    }

    /// `self · other`, checking that the target of `self` is the source of `other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.backend() != other.backend() {
            return Err(Error::BackendMismatch(format!("{:?} vs {:?}", self.backend(), other.backend())));
        }
        let gap = (self.target() - other.source()).amax();
        if !(gap <= tolerances::COMPOSABLE) {
            return Err(Error::NotComposable(gap));
        }
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        match (self, other) {
            (Self::Pair { source, .. }, Self::Pair { target, .. }) => {
                Self::Pair { source: source.clone(), target: target.clone() }
            }
            (Self::Group(a), Self::Group(b)) => Self::Group(*a * *b),
            (Self::Action { base, rotation: ra, shift: sa }, Self::Action { rotation: rb, shift: sb, .. }) => {
                Self::Action { base: base.clone(), rotation: ra.zip(*rb).map(|(a, b)| a * b), shift: sa + sb }
            }
            _ => unreachable!("backend checked by caller"),
        }
    }

    /// Characteristic coordinate size, used to scale finite-difference steps.
    pub fn scale(&self) -> f64 {
        match self {
            Self::Pair { source, target } => source.amax().max(target.amax()),
            Self::Group(_) => 1.0,
            Self::Action { base, .. } => base.amax(),
        }
    }

    pub fn rotation(&self) -> Option<&RotationMatrix> {
        match self {
            Self::Group(r) => Some(r),
            Self::Action { rotation, .. } => rotation.as_ref(),
            Self::Pair { .. } => None,
        }
    }

    /// `self · fiber_curve(β(self), v, t)`.
    pub fn translate_right(&self, v: &AlgebraVector, t: f64) -> Self {
        self.mul_unchecked(&self.backend().fiber_curve(&self.target(), v, t))
    }

    /// `fiber_curve(α(self), v, t)⁻¹ · self`.
    pub fn translate_left_inv(&self, v: &AlgebraVector, t: f64) -> Self {
        self.backend().fiber_curve(&self.source(), v, t).inverse().mul_unchecked(self)
    }
}

pub(crate) fn fd_step(scale: f64) -> f64 {
    tolerances::FD_STEP * scale.max(1.0)
}

fn check_rank(g: &GroupoidElement, v: &AlgebraVector) -> Result<()> {
    let r = g.backend().rank();
    if v.len() != r {
        return Err(Error::DimensionMismatch(format!("algebra vector has {} components, rank is {r}", v.len())));
    }
    Ok(())
}

/// Derivative of `f` along the left-invariant field generated by `v` at `g`.
pub fn dirderiv_left(f: &dyn Fn(&GroupoidElement) -> f64, g: &GroupoidElement, v: &AlgebraVector) -> Result<f64> {
    check_rank(g, v)?;
    let d = fd_step(g.scale());
    Ok((f(&g.translate_right(v, d)) - f(&g.translate_right(v, -d))) / (2.0 * d))
}

/// Derivative of `f` along the right-invariant field generated by `v` at `g`.
pub fn dirderiv_right(f: &dyn Fn(&GroupoidElement) -> f64, g: &GroupoidElement, v: &AlgebraVector) -> Result<f64> {
    check_rank(g, v)?;
    let d = fd_step(g.scale());
    Ok(-(f(&g.translate_left_inv(v, d)) - f(&g.translate_left_inv(v, -d))) / (2.0 * d))
}

/// Canonical basis vector `e_i` of a backend's algebroid fiber.
pub fn basis(backend: Backend, i: usize) -> AlgebraVector {
    let mut e = DVector::zeros(backend.rank());
    e[i] = 1.0;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::Mat3;
    use proptest::prelude::*;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn close(a: &GroupoidElement, b: &GroupoidElement, tol: f64) -> bool {
        match (a, b) {
            (GroupoidElement::Pair { source: s1, target: t1 }, GroupoidElement::Pair { source: s2, target: t2 }) => {
                (s1 - s2).amax() <= tol && (t1 - t2).amax() <= tol
            }
            (GroupoidElement::Group(r), GroupoidElement::Group(s)) => (r.matrix() - s.matrix()).amax() <= tol,
            (
                GroupoidElement::Action { base: b1, rotation: r1, shift: s1 },
                GroupoidElement::Action { base: b2, rotation: r2, shift: s2 },
            ) => {
                (b1 - b2).amax() <= tol
                    && (s1 - s2).amax() <= tol
                    && r1.zip(*r2).is_none_or(|(x, y)| (x.matrix() - y.matrix()).amax() <= tol)
            }
            _ => false,
        }
    }

    #[test]
    fn pair_structural_maps() {
        let g = GroupoidElement::pair(dv(&[1.0]), dv(&[2.0])).unwrap();
        let h = GroupoidElement::pair(dv(&[2.0]), dv(&[5.0])).unwrap();
        assert_eq!(g.inverse(), GroupoidElement::pair(dv(&[2.0]), dv(&[1.0])).unwrap());
        assert_eq!(g.compose(&h).unwrap(), GroupoidElement::pair(dv(&[1.0]), dv(&[5.0])).unwrap());
        let gap = GroupoidElement::pair(dv(&[2.5]), dv(&[3.0])).unwrap();
        assert!(matches!(g.compose(&gap), Err(Error::NotComposable(d)) if (d - 0.5).abs() < 1e-15));
    }

    #[test]
    fn group_structural_maps() {
        let r = cay(&Vec3::new(0.3, 0.1, -0.2));
        let s = cay(&Vec3::new(-0.5, 0.4, 0.9));
        let g = GroupoidElement::Group(r);
        assert_eq!(g.inverse(), GroupoidElement::Group(r.transpose()));
        assert_eq!(g.compose(&GroupoidElement::Group(s)).unwrap(), GroupoidElement::Group(r * s));
    }

    #[test]
    fn action_target_is_the_action() {
        let r = cay(&Vec3::new(0.3, 0.1, -0.2));
        let g = GroupoidElement::action(dv(&[0.0, 0.0, 1.0, 0.5, -1.0]), Some(r), dv(&[0.2, 0.3])).unwrap();
        let gamma = r.matrix().transpose() * Vec3::z();
        assert!((g.target() - dv(&[gamma.x, gamma.y, gamma.z, 0.7, -0.7])).amax() < 1e-15);
        let gi = g.inverse();
        assert!(close(
            &g.compose(&gi).unwrap(),
            &Backend::Action { rotation: true, torus: 2 }.identity(&g.source()),
            1e-12
        ));
    }

    #[test]
    fn fiber_curve_examples() {
        let b = Backend::Pair { dim: 1 };
        assert_eq!(
            b.fiber_curve(&dv(&[2.0]), &dv(&[3.0]), 0.1),
            GroupoidElement::pair(dv(&[2.0]), dv(&[2.3])).unwrap()
        );
        assert_eq!(b.fiber_curve(&dv(&[2.0]), &dv(&[3.0]), 0.0), b.identity(&dv(&[2.0])));
        let c = Backend::Group.fiber_curve(&dv(&[]), &dv(&[2.0, 0.0, 0.0]), 1.0);
        assert_eq!(c, GroupoidElement::Group(cay(&Vec3::new(2.0, 0.0, 0.0))));
        let a = Backend::Action { rotation: true, torus: 1 };
        let x = dv(&[0.0, 1.0, 0.0, 0.3]);
        assert_eq!(a.fiber_curve(&x, &dv(&[0.1, 0.2, 0.3, 0.4]), 0.0), a.identity(&x));
    }

    #[test]
    fn directional_derivative_examples() {
        let q1sq = |g: &GroupoidElement| g.target()[0].powi(2);
        let q0sq = |g: &GroupoidElement| g.source()[0].powi(2);
        let g = GroupoidElement::pair(dv(&[0.0]), dv(&[2.0])).unwrap();
        assert!((dirderiv_left(&q1sq, &g, &dv(&[1.0])).unwrap() - 4.0).abs() < 1e-9);
        let g = GroupoidElement::pair(dv(&[2.0]), dv(&[5.0])).unwrap();
        assert!((dirderiv_right(&q0sq, &g, &dv(&[1.0])).unwrap() + 4.0).abs() < 1e-9);
        assert_eq!(dirderiv_left(&|_: &GroupoidElement| 3.0, &g, &dv(&[1.0])).unwrap(), 0.0);

        let id = GroupoidElement::Group(RotationMatrix::identity());
        let trace = |g: &GroupoidElement| g.rotation().unwrap().matrix().trace();
        let r11 = |g: &GroupoidElement| g.rotation().unwrap().matrix()[(0, 0)];
        assert!(dirderiv_left(&trace, &id, &dv(&[1.0, 0.0, 0.0])).unwrap().abs() < 1e-10);
        assert!(dirderiv_right(&r11, &id, &dv(&[0.0, 0.0, 1.0])).unwrap().abs() < 1e-10);
    }

    #[test]
    fn right_field_on_group_is_right_translation() {
        // →X(g) = T r_g(X): d/dt f(cay(tX)·g).
        let g = GroupoidElement::Group(cay(&Vec3::new(0.4, -0.3, 0.8)));
        let f = |g: &GroupoidElement| {
            let m = g.rotation().unwrap().matrix();
            m[(0, 1)] + 2.0 * m[(2, 0)] - m[(1, 1)] * m[(1, 2)]
        };
        let x = dv(&[0.3, -1.0, 0.5]);
        let d = 1e-6;
        let at = |t: f64| {
            let r = cay(&(vec3(&x, 0) * t)) * *g.rotation().unwrap();
            f(&GroupoidElement::Group(r))
        };
        let expected = (at(d) - at(-d)) / (2.0 * d);
        assert!((dirderiv_right(&f, &g, &x).unwrap() - expected).abs() < 1e-8);
    }

    #[test]
    fn rank_checked() {
        let g = GroupoidElement::Group(RotationMatrix::identity());
        assert!(dirderiv_left(&|_: &GroupoidElement| 0.0, &g, &dv(&[1.0])).is_err());
        assert_eq!(Backend::Action { rotation: true, torus: 2 }.rank(), 5);
        let m = Mat3::identity();
        assert!(RotationMatrix::new(m).is_ok());
    }

    fn v3() -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn pair_associativity_and_units(a in prop::collection::vec(-5.0..5.0f64, 8)) {
            let p = |i: usize| dv(&a[2 * i..2 * i + 2]);
            let g = GroupoidElement::pair(p(0), p(1)).unwrap();
            let h = GroupoidElement::pair(p(1), p(2)).unwrap();
            let k = GroupoidElement::pair(p(2), p(3)).unwrap();
            let l = g.compose(&h).unwrap().compose(&k).unwrap();
            let r = g.compose(&h.compose(&k).unwrap()).unwrap();
            prop_assert!(close(&l, &r, 1e-12));
            let b = g.backend();
            prop_assert!(close(&b.identity(&g.source()).compose(&g).unwrap(), &g, 1e-12));
            prop_assert!(close(&g.compose(&b.identity(&g.target())).unwrap(), &g, 1e-12));
        }

        #[test]
        fn action_associativity(x in v3(), a in v3(), b in v3(), c in v3(), th in prop::collection::vec(-3.0..3.0f64, 8)) {
            let base = dv(&[x.x, x.y, x.z, th[0], th[1]]);
            let g = GroupoidElement::action(base, Some(cay(&a)), dv(&th[2..4])).unwrap();
            let h = GroupoidElement::action(g.target(), Some(cay(&b)), dv(&th[4..6])).unwrap();
            let k = GroupoidElement::action(h.target(), Some(cay(&c)), dv(&th[6..8])).unwrap();
            let l = g.compose(&h).unwrap().compose(&k).unwrap();
            let r = g.compose(&h.compose(&k).unwrap()).unwrap();
            prop_assert!(close(&l, &r, 1e-12));
            prop_assert!(close(&g.compose(&g.inverse()).unwrap(), &g.backend().identity(&g.source()), 1e-12));
            prop_assert!(close(&g.backend().identity(&g.source()).compose(&g).unwrap(), &g, 1e-12));
        }

        #[test]
        fn group_associativity(a in v3(), b in v3(), c in v3()) {
            let (g, h, k) = (GroupoidElement::Group(cay(&a)), GroupoidElement::Group(cay(&b)), GroupoidElement::Group(cay(&c)));
            let l = g.compose(&h).unwrap().compose(&k).unwrap();
            let r = g.compose(&h.compose(&k).unwrap()).unwrap();
            prop_assert!(close(&l, &r, 1e-12));
        }

        #[test]
        fn pair_derivatives_are_partials(q0 in -3.0..3.0f64, q1 in -3.0..3.0f64, x in -2.0..2.0f64) {
            let f = |g: &GroupoidElement| {
                let (a, b) = (g.source()[0], g.target()[0]);
                a * a * b + (b - a).sin()
            };
            let g = GroupoidElement::pair(dv(&[q0]), dv(&[q1])).unwrap();
            let d1 = 2.0 * q0 * q1 - (q1 - q0).cos();
            let d2 = q0 * q0 + (q1 - q0).cos();
            prop_assert!((dirderiv_left(&f, &g, &dv(&[x])).unwrap() - d2 * x).abs() < 1e-6);
            prop_assert!((dirderiv_right(&f, &g, &dv(&[x])).unwrap() + d1 * x).abs() < 1e-6);
        }

        #[test]
        fn fiber_curve_stays_in_source_fiber(x in v3(), v in prop::collection::vec(-2.0..2.0f64, 5), t in -1.0..1.0f64) {
            let b = Backend::Action { rotation: true, torus: 2 };
            let base = dv(&[x.x, x.y, x.z, 0.1, 0.2]);
            prop_assert_eq!(b.fiber_curve(&base, &dv(&v), t).source(), base);
        }
    }
}
