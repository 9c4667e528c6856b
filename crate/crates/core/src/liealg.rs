//! Rotation algebra: hat/vee, the Cayley map on SO(3) with its trivialized
//! derivatives, and a numerical check of Lie algebroid structure equations.

use std::fmt;
use std::ops::Mul;
use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::tolerances;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// A 3×3 matrix checked to be a proper rotation at construction.
#[derive(Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn new(m: Mat3) -> Result<Self> {
        let (orthogonality, det) = rotation_defect(&m);
        if !m.iter().all(|x| x.is_finite())
            || orthogonality > tolerances::ROTATION
            || (det - 1.0).abs() > tolerances::ROTATION
        {
            return Err(Error::NotRotation { orthogonality, det });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    pub(crate) fn new_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Row-major entries.
    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    /// Frobenius orthogonality defect and determinant.
    pub fn defect(&self) -> (f64, f64) {
        rotation_defect(&self.0)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl fmt::Debug for RotationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RotationMatrix({:?})", self.row_major())
    }
}

fn rotation_defect(m: &Mat3) -> (f64, f64) {
    ((m.transpose() * m - Mat3::identity()).norm(), m.determinant())
}

/// Nearest rotation in the Frobenius norm (polar projection).
pub fn project_to_so3(m: &Mat3) -> RotationMatrix {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    RotationMatrix(u * d * v_t)
}

pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Mat3) -> Result<Vec3> {
    let sym = (m + m.transpose()) * 0.5;
    let asym = sym.amax();
    if asym > tolerances::SKEW {
        return Err(Error::NotSkew(asym));
    }
    Ok(skew_vee(m))
}

fn skew_vee(m: &Mat3) -> Vec3 {
    let s = (m - m.transpose()) * 0.5;
    Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)])
}

/// Cayley map `I + 4/(4+‖ω‖²)(ω̂ + ω̂²/2)`.
pub fn cay(omega: &Vec3) -> RotationMatrix {
    let w = hat(omega);
    let c = 4.0 / (4.0 + omega.norm_squared());
    RotationMatrix(Mat3::identity() + (w + w * w * 0.5) * c)
}

/// Inverse Cayley map via `ω̂ = 2(R−I)(R+I)⁻¹`.
pub fn cay_inv(r: &RotationMatrix) -> Result<Vec3> {
    let id = Mat3::identity();
    let inv = (r.0 + id).try_inverse().ok_or(Error::NearSingular(f64::INFINITY))?;
    let size = inv.norm();
    if !size.is_finite() || size > tolerances::CAYLEY_INV_BOUND {
        return Err(Error::NearSingular(size));
    }
    Ok(skew_vee(&((r.0 - id) * inv * 2.0)))
}

/// Right-trivialized derivative of `cay`.
pub fn dcay(omega: &Vec3) -> Mat3 {
    (Mat3::identity() * 2.0 + hat(omega)) * (2.0 / (4.0 + omega.norm_squared()))
}

/// Inverse of [`dcay`]: `I − ω̂/2 + ωωᵀ/4`.
pub fn dcay_inv(omega: &Vec3) -> Mat3 {
    Mat3::identity() - hat(omega) * 0.5 + omega * omega.transpose() * 0.25
}

/// Coefficient data that is either fixed or a function of the base point.
#[derive(Clone)]
pub enum Coefficients {
    Constant(Vec<f64>),
    Varying(Arc<dyn Fn(&DVector<f64>) -> Vec<f64> + Send + Sync>),
}

impl Coefficients {
    fn eval(&self, x: &DVector<f64>) -> Vec<f64> {
        match self {
            Coefficients::Constant(v) => v.clone(),
            Coefficients::Varying(f) => f(x),
        }
    }

    /// Partial derivative along base coordinate `j` (zero when constant).
    fn partial(&self, x: &DVector<f64>, j: usize, len: usize) -> Vec<f64> {
        match self {
            Coefficients::Constant(_) => vec![0.0; len],
            Coefficients::Varying(f) => {
                let d = tolerances::FD_STEP * x.amax().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += d;
                xm[j] -= d;
                f(&xp).iter().zip(f(&xm)).map(|(a, b)| (a - b) / (2.0 * d)).collect()
            }
        }
    }
}

/// Structure functions of a Lie algebroid in a local basis.
///
/// `structure[γ·r² + α·r + β] = C^γ_{αβ}` and `anchor[i·r + α] = ρ^i_α`.
#[derive(Clone)]
pub struct StructureData {
    pub rank: usize,
    pub base_dim: usize,
    pub structure: Coefficients,
    pub anchor: Coefficients,
    /// Base points at which the equations are evaluated.
    pub points: Vec<DVector<f64>>,
}

impl StructureData {
    pub fn constant(rank: usize, base_dim: usize, structure: Vec<f64>, anchor: Vec<f64>) -> Self {
        Self {
            rank,
            base_dim,
            structure: Coefficients::Constant(structure),
            anchor: Coefficients::Constant(anchor),
            points: vec![DVector::zeros(base_dim)],
        }
    }

    /// so(3) with Levi-Civita structure constants and no base.
    pub fn so3() -> Self {
        Self::constant(3, 0, levi_civita(), Vec::new())
    }
}

pub fn levi_civita() -> Vec<f64> {
    let mut c = vec![0.0; 27];
    for (a, b, g) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        c[g * 9 + a * 3 + b] = 1.0;
        c[g * 9 + b * 3 + a] = -1.0;
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureDefect {
    pub anchor: f64,
    pub jacobi: f64,
}

/// Largest violations of the anchor compatibility and Jacobi structure equations.
pub fn check_structure(data: &StructureData) -> Result<StructureDefect> {
    let r = data.rank;
    let n = data.base_dim;
    if r == 0 {
        return Err(Error::DimensionMismatch("rank must be positive".into()));
    }
    let mut out = StructureDefect { anchor: 0.0, jacobi: 0.0 };
    for x in &data.points {
        if x.len() != n {
            return Err(Error::DimensionMismatch(format!("point has {} coordinates, base dimension is {n}", x.len())));
        }
        let c = data.structure.eval(x);
        let rho = data.anchor.eval(x);
        if c.len() != r * r * r || rho.len() != n * r {
            return Err(Error::DimensionMismatch(format!(
                "expected {} structure and {} anchor entries, got {} and {}",
                r * r * r,
                n * r,
                c.len(),
                rho.len()
            )));
        }
        let drho: Vec<Vec<f64>> = (0..n).map(|j| data.anchor.partial(x, j, n * r)).collect();
        let dc: Vec<Vec<f64>> = (0..n).map(|j| data.structure.partial(x, j, r * r * r)).collect();
        let cc = |g: usize, a: usize, b: usize| c[g * r * r + a * r + b];

        for i in 0..n {
            for a in 0..r {
                for b in 0..r {
                    let mut v = 0.0;
                    for j in 0..n {
                        v += rho[j * r + a] * drho[j][i * r + b] - rho[j * r + b] * drho[j][i * r + a];
                    }
                    for g in 0..r {
                        v -= rho[i * r + g] * cc(g, a, b);
                    }
                    out.anchor = out.anchor.max(v.abs());
                }
            }
        }

        for nu in 0..r {
            for a in 0..r {
                for b in 0..r {
                    for g in 0..r {
                        let mut v = 0.0;
                        for (p, q, s) in [(a, b, g), (b, g, a), (g, a, b)] {
                            for i in 0..n {
                                v += rho[i * r + p] * dc[i][nu * r * r + q * r + s];
                            }
                            for mu in 0..r {
                                v += cc(nu, p, mu) * cc(mu, q, s);
                            }
                        }
                        out.jacobi = out.jacobi.max(v.abs());
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    #[test]
    fn hat_examples() {
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(hat(&Vec3::new(0.0, 0.0, 1.0)), expected);
    }

    #[test]
    fn vee_round_trip_and_rejects_symmetric() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        assert!(matches!(vee(&Mat3::identity()), Err(Error::NotSkew(_))));
    }

    #[test]
    fn cay_quarter_turn() {
        let r = cay(&Vec3::new(2.0, 0.0, 0.0));
        let expected = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((r.matrix() - expected).amax() < 1e-15);
        // e2 → e3 and e3 → −e2
        assert!((r * Vec3::y() - Vec3::z()).norm() < 1e-15);
        assert!((r * Vec3::z() + Vec3::y()).norm() < 1e-15);
        assert_eq!(cay(&Vec3::zeros()), RotationMatrix::identity());
    }

    #[test]
    fn cay_inv_examples() {
        assert_eq!(cay_inv(&RotationMatrix::identity()).unwrap(), Vec3::zeros());
        let w = Vec3::new(0.3, -0.2, 0.5);
        assert!((cay_inv(&cay(&w)).unwrap() - w).norm() < 1e-12);
        let half_turn = RotationMatrix::new(Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)).unwrap();
        assert!(matches!(cay_inv(&half_turn), Err(Error::NearSingular(_))));
    }

    #[test]
    fn dcay_examples() {
        assert_eq!(dcay(&Vec3::zeros()), Mat3::identity());
        let d = dcay_inv(&Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(d, Mat3::new(2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, -1.0, 1.0));
        assert_eq!(d * Vec3::y(), Vec3::new(0.0, 1.0, -1.0));
    }

    #[test]
    fn rotation_validation() {
        assert!(RotationMatrix::new(Mat3::identity() * 1.1).is_err());
        assert!(RotationMatrix::new(-Mat3::identity()).is_err());
        let noisy = cay(&Vec3::new(0.4, 0.1, -0.7)).matrix() + Mat3::from_element(1e-4);
        assert!(RotationMatrix::new(noisy).is_err());
        let p = project_to_so3(&noisy);
        assert!(RotationMatrix::new(*p.matrix()).is_ok());
        assert!((p.matrix() - noisy).amax() < 1e-3);
    }

    #[test]
    fn structure_so3_and_abelian() {
        let d = check_structure(&StructureData::so3()).unwrap();
        assert_eq!((d.anchor, d.jacobi), (0.0, 0.0));

        let n = 4;
        let mut rho = vec![0.0; n * n];
        for i in 0..n {
            rho[i * n + i] = 1.0;
        }
        let d = check_structure(&StructureData::constant(n, n, vec![0.0; n * n * n], rho)).unwrap();
        assert_eq!((d.anchor, d.jacobi), (0.0, 0.0));
    }

    #[test]
    fn structure_perturbations() {
        // Only C³₁₂ perturbed; the direct cyclic sum at (1,1,2) gives C²₁₃·0.1.
        let mut c = levi_civita();
        c[2 * 9 + 1] += 0.1;
        let d = check_structure(&StructureData::constant(3, 0, c, Vec::new())).unwrap();
        assert!((d.jacobi - 0.1).abs() < 1e-15);

        // Antisymmetric perturbation [e1,e2] = e3 + 0.1 e1 breaks Jacobi by 0.1 e2.
        let mut c = levi_civita();
        c[1] += 0.1;
        c[3] -= 0.1;
        let d = check_structure(&StructureData::constant(3, 0, c, Vec::new())).unwrap();
        assert!((d.jacobi - 0.1).abs() < 1e-15);
    }

    #[test]
    fn structure_dimension_mismatch() {
        let bad = StructureData::constant(3, 0, vec![0.0; 8], Vec::new());
        assert!(matches!(check_structure(&bad), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rotation_action_anchor_is_compatible() {
        // Right action Γ·R = RᵀΓ generates ρ(e_α)(Γ) = Γ × e_α.
        let anchor = Coefficients::Varying(Arc::new(|g: &DVector<f64>| {
            let gamma = Vec3::new(g[0], g[1], g[2]);
            let mut rho = vec![0.0; 9];
            for a in 0..3 {
                let col = gamma.cross(&Vec3::ith(a, 1.0));
                for i in 0..3 {
                    rho[i * 3 + a] = col[i];
                }
            }
            rho
        }));
        let data = StructureData {
            rank: 3,
            base_dim: 3,
            structure: Coefficients::Constant(levi_civita()),
            anchor,
            points: vec![DVector::from_vec(vec![0.2, -0.5, 0.9]), DVector::from_vec(vec![1.5, 0.3, -2.0])],
        };
        let d = check_structure(&data).unwrap();
        assert!(d.anchor < 1e-9, "{d:?}");
        assert_eq!(d.jacobi, 0.0);
    }

    proptest! {
        #[test]
        fn hat_is_cross_product(v in vec3(), w in vec3()) {
            prop_assert!((hat(&v) * w - v.cross(&w)).amax() < 1e-14);
            prop_assert_eq!(hat(&v).transpose(), -hat(&v));
        }

        #[test]
        fn dcay_matches_finite_difference(w in vec3()) {
            let d = 1e-6;
            let r0 = cay(&w).transpose();
            for i in 0..3 {
                let e = Vec3::ith(i, d);
                let diff = ((cay(&(w + e)) * r0).matrix() - (cay(&(w - e)) * r0).matrix()) / (2.0 * d);
                let col = skew_vee(&diff);
                prop_assert!((col - dcay(&w).column(i)).amax() < 1e-5);
            }
        }

        #[test]
        fn cay_inverse_pairs(w in vec3()) {
            let r = cay(&w);
            prop_assert!((r * cay(&-w)).matrix().relative_eq(&Mat3::identity(), 1e-12, 1e-12));
            prop_assert!((cay_inv(&r).unwrap() - w).amax() < 1e-9);
            prop_assert!((dcay(&w) * dcay_inv(&w) - Mat3::identity()).amax() < 1e-12);
        }
    }
}
