//! Second-order discrete Euler–Lagrange equations on composable pairs, with
//! optional second-order constraints, and the stepping and boundary-value
//! solvers built on them.
//!
//! A trajectory is a composable sequence of arrows g₁…g_M. On the pair
//! groupoid these are consecutive node pairs, so M arrows carry N = M + 1
//! nodes. Variations act at the junction between two consecutive arrows,
//! `g_j ↦ g_j·h`, `g_{j+1} ↦ h⁻¹·g_{j+1}`, which keeps the sequence composable
//! and leaves the total product fixed.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::groupoid::{basis, fd_step, Backend, GroupoidElement};
use crate::liealg::{cay, RotationMatrix, Vec3};
use crate::newton::{self, ChartProblem, NewtonOptions, SolverConfig};
use crate::tolerances;

pub type PairFn = Arc<dyn Fn(&GroupoidElement, &GroupoidElement) -> f64 + Send + Sync>;
pub type TripleFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;

/// A scalar function on composable pairs.
///
/// The function is also evaluated on nearly composable pairs by the
/// implicit-dynamics check, so it should extend smoothly off G₂.
#[derive(Clone)]
pub struct DiscreteLagrangian2 {
    pub backend: Backend,
    f: PairFn,
    triple: Option<TripleFn>,
}

impl fmt::Debug for DiscreteLagrangian2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteLagrangian2").field("backend", &self.backend).finish()
    }
}

impl DiscreteLagrangian2 {
    pub fn new(
        backend: Backend,
        f: impl Fn(&GroupoidElement, &GroupoidElement) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { backend, f: Arc::new(f), triple: None }
    }

    /// Pair-groupoid Lagrangian given on node triples `L(q₀, q₁, q₂)`.
    /// Off G₂ the middle node is the midpoint of the two inner endpoints.
    pub fn pair_triple(
        dim: usize,
        l: impl Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let l: TripleFn = Arc::new(l);
        let inner = l.clone();
        Self {
            backend: Backend::Pair { dim },
            f: Arc::new(move |g, h| inner(&g.source(), &((g.target() + h.source()) * 0.5), &h.target())),
            triple: Some(l),
        }
    }

    pub fn value(&self, g: &GroupoidElement, h: &GroupoidElement) -> f64 {
        (self.f)(g, h)
    }

    pub fn triple(&self) -> Option<&TripleFn> {
        self.triple.as_ref()
    }
}

/// Second-order constraint functions Φ^A on composable pairs.
#[derive(Clone)]
pub struct ConstraintSet {
    functions: Vec<PairFn>,
}

impl fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConstraintSet(s = {})", self.functions.len())
    }
}

impl ConstraintSet {
    pub fn new(functions: Vec<PairFn>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::Invalid("constraint set needs at least one function".into()));
        }
        Ok(Self { functions })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn eval(&self, g: &GroupoidElement, h: &GroupoidElement) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.functions.iter().map(|f| f(g, h)))
    }

    fn weighted(&self, lambda: &DVector<f64>, g: &GroupoidElement, h: &GroupoidElement) -> f64 {
        self.functions.iter().zip(lambda.iter()).map(|(f, l)| l * f(g, h)).sum()
    }
}

/// Four consecutive arrows.
#[derive(Debug, Clone, PartialEq)]
pub struct Window4(pub [GroupoidElement; 4]);

impl Window4 {
    pub fn new(g: [GroupoidElement; 4]) -> Result<Self> {
        for k in 0..3 {
            g[k].compose(&g[k + 1])?;
        }
        Ok(Self(g))
    }

    /// Pair window from five nodes.
    pub fn from_nodes(q: &[DVector<f64>; 5]) -> Result<Self> {
        let e = |k: usize| GroupoidElement::pair(q[k].clone(), q[k + 1].clone());
        Self::new([e(0)?, e(1)?, e(2)?, e(3)?])
    }

    fn scale(&self) -> f64 {
        self.0.iter().map(GroupoidElement::scale).fold(0.0, f64::max)
    }
}

/// Five-point derivative of the three-term window sum under the junction
/// variation between `w[1]` and `w[2]`; `f(k, a, b)` is the k-th pair term.
/// Solver Jacobians difference this again, so it has to be accurate well
/// beyond a plain central quotient.
fn junction_gradient(w: &Window4, f: &dyn Fn(usize, &GroupoidElement, &GroupoidElement) -> f64) -> DVector<f64> {
    let [g1, g2, g3, g4] = &w.0;
    let backend = g2.backend();
    let x = g2.target();
    let d = tolerances::STENCIL_STEP * w.scale().max(1.0);
    let sum = |v: &DVector<f64>, t: f64| {
        let h = backend.fiber_curve(&x, v, t);
        let a = g2.mul_unchecked(&h);
        let b = h.inverse().mul_unchecked(g3);
        f(0, g1, &a) + f(1, &a, &b) + f(2, &b, g4)
    };
    DVector::from_iterator(
        backend.rank(),
        (0..backend.rank()).map(|i| {
            let e = basis(backend, i);
            (8.0 * (sum(&e, d) - sum(&e, -d)) - (sum(&e, 2.0 * d) - sum(&e, -2.0 * d))) / (12.0 * d)
        }),
    )
}

fn check_backend(l: &DiscreteLagrangian2, g: &GroupoidElement) -> Result<()> {
    if g.backend() != l.backend {
        return Err(Error::BackendMismatch(format!("{:?} vs {:?}", g.backend(), l.backend)));
    }
    Ok(())
}

/// Second-order DEL defect at the middle junction of the window.
pub fn so_residual(l: &DiscreteLagrangian2, w: &Window4) -> Result<DVector<f64>> {
    let w = Window4::new(w.0.clone())?;
    check_backend(l, &w.0[0])?;
    Ok(junction_gradient(&w, &|_, a, b| l.value(a, b)))
}

/// Classical form `D₃L(q₁,q₂,q₃) + D₂L(q₂,q₃,q₄) + D₁L(q₃,q₄,q₅)` with
/// coordinate partials by central differences or from `partials`.
pub fn so_residual_pair(
    l: &dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> f64,
    partials: Option<&dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> [DVector<f64>; 3]>,
    q: &[DVector<f64>; 5],
) -> Result<DVector<f64>> {
    let m = q[0].len();
    if q.iter().any(|x| x.len() != m) {
        return Err(Error::DimensionMismatch("window nodes differ in dimension".into()));
    }
    let partial = |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>, slot: usize| -> DVector<f64> {
        if let Some(p) = partials {
            return p(a, b, c)[slot].clone();
        }
        let d = fd_step(a.amax().max(b.amax()).max(c.amax()));
        DVector::from_iterator(
            m,
            (0..m).map(|i| {
                let mut plus = [a.clone(), b.clone(), c.clone()];
                let mut minus = plus.clone();
                plus[slot][i] += d;
                minus[slot][i] -= d;
                (l(&plus[0], &plus[1], &plus[2]) - l(&minus[0], &minus[1], &minus[2])) / (2.0 * d)
            }),
        )
    };
    Ok(partial(&q[0], &q[1], &q[2], 2) + partial(&q[1], &q[2], &q[3], 1) + partial(&q[2], &q[3], &q[4], 0))
}

/// Lie group form built from one-slot derivatives:
/// `ℓ*_{g_k}(D₁L(g_k,g_{k+1}) + D₂L(g_{k−1},g_k)) − r*_{g_{k+1}}(D₂L(g_k,g_{k+1}) + D₁L(g_{k+1},g_{k+2}))`.
pub fn so_residual_group(l: &DiscreteLagrangian2, g: &[RotationMatrix; 4]) -> Result<Vec3> {
    if l.backend != Backend::Group {
        return Err(Error::BackendMismatch("so_residual_group needs the group backend".into()));
    }
    let el = |r: RotationMatrix| GroupoidElement::Group(r);
    let d = fd_step(1.0);
    let mut out = Vec3::zeros();
    for i in 0..3 {
        let term = |t: f64| {
            let c = cay(&Vec3::ith(i, t));
            let left = g[1] * c;
            let right = c * g[2];
            l.value(&el(left), &el(g[2])) + l.value(&el(g[0]), &el(left))
                - l.value(&el(g[1]), &el(right))
                - l.value(&el(right), &el(g[3]))
        };
        out[i] = (term(d) - term(-d)) / (2.0 * d);
    }
    Ok(out)
}

/// Stationarity and constraint blocks of the constrained problem at one window,
/// with multipliers `lambda[k]` attached to the pair `(w[k], w[k+1])`.
pub fn constrained_residual(
    l: &DiscreteLagrangian2,
    c: &ConstraintSet,
    w: &Window4,
    lambda: [&DVector<f64>; 3],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let w = Window4::new(w.0.clone())?;
    check_backend(l, &w.0[0])?;
    if lambda.iter().any(|x| x.len() != c.len()) {
        return Err(Error::DimensionMismatch("multiplier length differs from constraint count".into()));
    }
    let grad = junction_gradient(&w, &|k, a, b| l.value(a, b) + c.weighted(lambda[k], a, b));
    let mut block = DVector::zeros(3 * c.len());
    for k in 0..3 {
        block.rows_mut(k * c.len(), c.len()).copy_from(&c.eval(&w.0[k], &w.0[k + 1]));
    }
    Ok((grad, block))
}

/// A composable sequence of arrows with optional per-pair multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub elements: Vec<GroupoidElement>,
    /// One vector per consecutive pair `(g_k, g_{k+1})`.
    pub multipliers: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn new(elements: Vec<GroupoidElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Invalid("empty trajectory".into()));
        }
        for w in elements.windows(2) {
            w[0].compose(&w[1])?;
        }
        Ok(Self { elements, multipliers: None })
    }

    pub fn from_pair_nodes(nodes: &[DVector<f64>]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Invalid("need at least two nodes".into()));
        }
        Self::new(nodes.windows(2).map(|w| GroupoidElement::pair(w[0].clone(), w[1].clone())).collect::<Result<_>>()?)
    }

    /// Group trajectory with arrows `R_kᵀ R_{k+1}` between attitude nodes.
    pub fn from_rotations(nodes: &[RotationMatrix]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Invalid("need at least two nodes".into()));
        }
        Self::new(nodes.windows(2).map(|w| GroupoidElement::Group(w[0].transpose() * w[1])).collect())
    }

    /// Number of nodes, one more than the number of arrows.
    pub fn nodes(&self) -> usize {
        self.elements.len() + 1
    }

    pub fn pair_nodes(&self) -> Vec<DVector<f64>> {
        let mut out: Vec<_> = self.elements.iter().map(GroupoidElement::source).collect();
        out.push(self.elements.last().expect("non-empty").target());
        out
    }

    /// Attitudes `R_{k+1} = R_k·g_k` starting from `start`.
    pub fn attitudes(&self, start: RotationMatrix) -> Vec<RotationMatrix> {
        let mut out = vec![start];
        for g in &self.elements {
            let r = *out.last().expect("non-empty") * *g.rotation().expect("rotation factor");
            out.push(r);
        }
        out
    }

    pub fn window(&self, j: usize) -> Window4 {
        Window4(std::array::from_fn(|k| self.elements[j - 1 + k].clone()))
    }

    /// Applies the junction variation `g_j ↦ g_j·h`, `g_{j+1} ↦ h⁻¹·g_{j+1}`
    /// with `h = fiber_curve(β(g_j), v, t)`.
    pub fn vary_junction(&self, j: usize, v: &DVector<f64>, t: f64) -> Self {
        let mut out = self.clone();
        let h = self.elements[j].backend().fiber_curve(&self.elements[j].target(), v, t);
        out.elements[j] = self.elements[j].mul_unchecked(&h);
        out.elements[j + 1] = h.inverse().mul_unchecked(&self.elements[j + 1]);
        out
    }
}

/// `Σ_k L(g_k, g_{k+1})`.
pub fn action_sum(l: &DiscreteLagrangian2, traj: &Trajectory) -> Result<f64> {
    let mut s = 0.0;
    for w in traj.elements.windows(2) {
        w[0].compose(&w[1])?;
        check_backend(l, &w[0])?;
        s += l.value(&w[0], &w[1]);
    }
    Ok(s)
}

/// Action plus `Σ_k λ_k·Φ(g_k, g_{k+1})`.
pub fn augmented_action(l: &DiscreteLagrangian2, c: Option<&ConstraintSet>, traj: &Trajectory) -> Result<f64> {
    let mut s = action_sum(l, traj)?;
    if let (Some(c), Some(lambda)) = (c, &traj.multipliers) {
        for (k, w) in traj.elements.windows(2).enumerate() {
            s += c.weighted(&lambda[k], &w[0], &w[1]);
        }
    }
    Ok(s)
}

struct StepProblem<'a> {
    l: &'a DiscreteLagrangian2,
    head: [&'a GroupoidElement; 3],
}

impl ChartProblem for StepProblem<'_> {
    type Point = GroupoidElement;
    fn dim(&self) -> usize {
        self.l.backend.rank()
    }
    fn residual(&self, g4: &GroupoidElement) -> Result<DVector<f64>> {
        let [a, b, c] = self.head;
        so_residual(self.l, &Window4([a.clone(), b.clone(), c.clone(), g4.clone()]))
    }
    fn retract(&self, g: &GroupoidElement, z: &DVector<f64>) -> Result<GroupoidElement> {
        Ok(g.translate_right(z, 1.0))
    }
}

/// The arrow g₄ completing a solution window after g₁, g₂, g₃.
pub fn solve_step(
    l: &DiscreteLagrangian2,
    g1: &GroupoidElement,
    g2: &GroupoidElement,
    g3: &GroupoidElement,
    guess: &GroupoidElement,
    config: &SolverConfig,
) -> Result<GroupoidElement> {
    Window4::new([g1.clone(), g2.clone(), g3.clone(), guess.clone()])?;
    check_backend(l, g1)?;
    let problem = StepProblem { l, head: [g1, g2, g3] };
    let opts = NewtonOptions { allow_rank_deficient: false, check_regular: true };
    Ok(newton::solve(&problem, guess.clone(), config, opts)?.point)
}

/// Boundary-value problem with the first and last arrows (two nodes at each
/// end) fixed by the guess.
#[derive(Debug, Clone)]
pub struct BvpProblem {
    pub lagrangian: DiscreteLagrangian2,
    pub constraints: Option<ConstraintSet>,
    pub guess: Trajectory,
    pub config: SolverConfig,
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub trajectory: Trajectory,
    pub iterations: usize,
    /// Max-norm of the stacked residual.
    pub residual: f64,
    pub action: f64,
    pub constraint_max: Option<f64>,
    pub trace: Vec<f64>,
}

type BvpPoint = (Vec<GroupoidElement>, Vec<DVector<f64>>);

struct Assembly<'a> {
    l: &'a DiscreteLagrangian2,
    c: Option<&'a ConstraintSet>,
    arrows: usize,
}

impl Assembly<'_> {
    fn rank(&self) -> usize {
        self.l.backend.rank()
    }
    fn s(&self) -> usize {
        self.c.map_or(0, ConstraintSet::len)
    }
    fn junctions(&self) -> usize {
        self.arrows - 3
    }
}

/// Stationarity rows for junctions 1..M−3 followed by constraint rows per pair.
fn assemble(a: &Assembly<'_>, elements: &[GroupoidElement], lambda: &[DVector<f64>]) -> DVector<f64> {
    let r = a.rank();
    let s = a.s();
    let mut out = DVector::zeros(r * a.junctions() + s * (a.arrows - 1));
    for j in 1..=a.junctions() {
        let w = Window4(std::array::from_fn(|k| elements[j - 1 + k].clone()));
        let grad = match a.c {
            Some(c) => junction_gradient(&w, &|k, x, y| a.l.value(x, y) + c.weighted(&lambda[j - 1 + k], x, y)),
            None => junction_gradient(&w, &|_, x, y| a.l.value(x, y)),
        };
        out.rows_mut((j - 1) * r, r).copy_from(&grad);
    }
    if let Some(c) = a.c {
        let off = r * a.junctions();
        for k in 0..a.arrows - 1 {
            out.rows_mut(off + k * s, s).copy_from(&c.eval(&elements[k], &elements[k + 1]));
        }
    }
    out
}

impl ChartProblem for Assembly<'_> {
    type Point = BvpPoint;
    fn dim(&self) -> usize {
        self.rank() * self.junctions() + self.s() * (self.arrows - 1)
    }
    fn residual(&self, p: &BvpPoint) -> Result<DVector<f64>> {
        let r = assemble(self, &p.0, &p.1);
        if r.iter().all(|x| x.is_finite()) {
            Ok(r)
        } else {
            Err(Error::NonFinite("boundary-value residual".into()))
        }
    }
    fn retract(&self, p: &BvpPoint, z: &DVector<f64>) -> Result<BvpPoint> {
        let r = self.rank();
        let mut elements = p.0.clone();
        for j in 1..=self.junctions() {
            let v = z.rows((j - 1) * r, r).into_owned();
            let h = p.0[j].backend().fiber_curve(&p.0[j].target(), &v, 1.0);
            elements[j] = elements[j].mul_unchecked(&h);
            elements[j + 1] = h.inverse().mul_unchecked(&elements[j + 1]);
        }
        let off = r * self.junctions();
        let s = self.s();
        let lambda = p.1.iter().enumerate().map(|(k, l)| l + z.rows(off + k * s, s)).collect();
        Ok((elements, lambda))
    }
    fn primary_dim(&self) -> usize {
        self.rank() * self.junctions()
    }
    fn constraint_max(&self, res: &DVector<f64>) -> Option<f64> {
        self.c.map(|_| res.rows(self.rank() * self.junctions(), res.len() - self.rank() * self.junctions()).amax())
    }
}

/// Residuals of a trajectory: one stationarity vector per free junction and,
/// when constrained, the constraint values per pair.
pub fn trajectory_residuals(
    l: &DiscreteLagrangian2,
    c: Option<&ConstraintSet>,
    traj: &Trajectory,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let arrows = traj.elements.len();
    if arrows < 4 {
        return Err(Error::Invalid("need at least four arrows".into()));
    }
    Trajectory::new(traj.elements.clone())?;
    let lambda = multipliers_or_zero(c, traj);
    let a = Assembly { l, c, arrows };
    let res = assemble(&a, &traj.elements, &lambda);
    let r = a.rank();
    let stat = (0..a.junctions()).map(|j| res.rows(j * r, r).into_owned()).collect();
    let s = a.s();
    let off = r * a.junctions();
    let cons =
        if s > 0 { (0..arrows - 1).map(|k| res.rows(off + k * s, s).into_owned()).collect() } else { Vec::new() };
    Ok((stat, cons))
}

fn multipliers_or_zero(c: Option<&ConstraintSet>, traj: &Trajectory) -> Vec<DVector<f64>> {
    let s = c.map_or(0, ConstraintSet::len);
    match &traj.multipliers {
        Some(m) if s > 0 && m.len() == traj.elements.len() - 1 && m.iter().all(|x| x.len() == s) => m.clone(),
        _ => vec![DVector::zeros(s); traj.elements.len() - 1],
    }
}

/// Solves the (constrained) boundary-value problem by global damped Newton
/// over junction charts and multipliers.
pub fn solve_bvp(p: &BvpProblem) -> Result<BvpSolution> {
    let arrows = p.guess.elements.len();
    if arrows + 1 < 5 {
        return Err(Error::Invalid(format!("need at least 5 nodes, got {}", arrows + 1)));
    }
    Trajectory::new(p.guess.elements.clone())?;
    check_backend(&p.lagrangian, &p.guess.elements[0])?;
    let c = p.constraints.as_ref();
    let a = Assembly { l: &p.lagrangian, c, arrows };
    let start = (p.guess.elements.clone(), multipliers_or_zero(c, &p.guess));
    let opts = NewtonOptions { allow_rank_deficient: true, check_regular: true };
    let report = newton::solve(&a, start, &p.config, opts)?;
    let res = assemble(&a, &report.point.0, &report.point.1);
    let (elements, lambda) = report.point;
    let trajectory = Trajectory { elements, multipliers: c.map(|_| lambda) };
    Ok(BvpSolution {
        action: action_sum(&p.lagrangian, &trajectory)?,
        constraint_max: a.constraint_max(&res),
        residual: report.residual,
        iterations: report.iterations,
        trace: report.trace,
        trajectory,
    })
}
