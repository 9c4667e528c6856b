//! Run configuration files. Unknown keys are rejected everywhere.

use serde::Deserialize;

use crate::liealg::{cay, RotationMatrix, Vec3};
use crate::newton::SolverConfig;
use crate::optimal_control::{HeavyTopBoundary, HeavyTopParams, RigidBodyBoundary, RigidBodyParams, Vec2};
use crate::verify::Suite;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Stem of the output files.
    pub name: String,
    pub problem: Problem,
    #[serde(default)]
    pub solver: SolverOverrides,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Seed for randomized guesses; the `--seed` flag takes precedence.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Problem {
    PairSpline(PairSplineConfig),
    RigidBody(RigidBodyConfig),
    HeavyTop(HeavyTopConfig),
    EpFreeBody(EpFreeBodyConfig),
    Verify(VerifyConfig),
}

/// Spline BVP on ℝᵐ: the first two and last two nodes are fixed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSplineConfig {
    pub nodes: usize,
    pub start: [Vec<f64>; 2],
    pub end: [Vec<f64>; 2],
    /// Amplitude of seeded uniform noise added to the interior of the linear guess.
    #[serde(default)]
    pub guess_noise: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Attitude {
    /// Cayley coordinates ω with R = cay(ω).
    Cayley([f64; 3]),
    /// Row-major rotation matrix.
    Matrix([f64; 9]),
}

impl Attitude {
    pub fn rotation(&self) -> crate::Result<RotationMatrix> {
        match self {
            Attitude::Cayley(w) => Ok(cay(&Vec3::from(*w))),
            Attitude::Matrix(m) => RotationMatrix::new(nalgebra::Matrix3::from_row_slice(m)),
        }
    }
}

fn identity() -> Attitude {
    Attitude::Cayley([0.0; 3])
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidBodyConfig {
    pub nodes: usize,
    #[serde(default = "default_inertia")]
    pub inertia: [f64; 3],
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "identity")]
    pub attitude_start: Attitude,
    #[serde(default)]
    pub omega_start: [f64; 3],
    pub attitude_end: Attitude,
    #[serde(default)]
    pub omega_end: [f64; 3],
}

fn default_inertia() -> [f64; 3] {
    [1.0, 2.0, 3.0]
}

fn default_step() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeavyTopConfig {
    pub nodes: usize,
    #[serde(default)]
    pub params: Option<HeavyTopParamsConfig>,
    #[serde(default = "identity")]
    pub attitude_start: Attitude,
    #[serde(default)]
    pub omega_start: [f64; 3],
    #[serde(default)]
    pub rotors_start: [f64; 2],
    #[serde(default)]
    pub rotor_rates_start: [f64; 2],
    #[serde(default = "identity")]
    pub attitude_end: Attitude,
    #[serde(default)]
    pub omega_end: [f64; 3],
    #[serde(default)]
    pub rotors_end: [f64; 2],
    #[serde(default)]
    pub rotor_rates_end: [f64; 2],
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeavyTopParamsConfig {
    pub ibar: [f64; 3],
    pub j: [f64; 2],
    pub mgh: f64,
    pub step: f64,
}

/// Forward simulation of the discrete Euler–Poincaré equations.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpFreeBodyConfig {
    #[serde(default = "default_inertia")]
    pub inertia: [f64; 3],
    pub eta_start: [f64; 3],
    #[serde(default = "default_step")]
    pub step: f64,
    pub steps: usize,
    #[serde(default = "identity")]
    pub attitude_start: Attitude,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    #[default]
    All,
    Cayley,
    Symplectic,
    Noether,
    Order,
}

impl From<SuiteName> for Suite {
    fn from(s: SuiteName) -> Self {
        match s {
            SuiteName::All => Suite::All,
            SuiteName::Cayley => Suite::Cayley,
            SuiteName::Symplectic => Suite::Symplectic,
            SuiteName::Noether => Suite::Noether,
            SuiteName::Order => Suite::Order,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub suite: SuiteName,
}

fn finite(xs: &[f64], what: &str) -> Result<(), String> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(format!("{what} must be finite"))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(format!("invalid run name {:?}", self.name));
        }
        self.solver.apply(SolverConfig::default()).validate().map_err(|e| e.to_string())?;
        match &self.problem {
            Problem::PairSpline(p) => {
                if p.nodes < 5 {
                    return Err(format!("pair-spline needs at least 5 nodes, got {}", p.nodes));
                }
                let m = p.start[0].len();
                if m == 0 || p.start.iter().chain(&p.end).any(|q| q.len() != m) {
                    return Err("pair-spline boundary nodes must share a positive dimension".into());
                }
                for q in p.start.iter().chain(&p.end) {
                    finite(q, "boundary nodes")?;
                }
                if !(p.guess_noise >= 0.0 && p.guess_noise.is_finite()) {
                    return Err("guess_noise must be non-negative".into());
                }
            }
            Problem::RigidBody(p) => {
                if p.nodes < 5 {
                    return Err(format!("rigid-body needs at least 5 nodes, got {}", p.nodes));
                }
                RigidBodyParams::new(Vec3::from(p.inertia), p.step).map_err(|e| e.to_string())?;
                finite(&[p.omega_start, p.omega_end].concat(), "angular velocities")?;
                p.attitude_start.rotation().map_err(|e| e.to_string())?;
                p.attitude_end.rotation().map_err(|e| e.to_string())?;
            }
            Problem::HeavyTop(p) => {
                if p.nodes < 6 {
                    return Err(format!("heavy-top needs at least 6 nodes, got {}", p.nodes));
                }
                p.params().validate().map_err(|e| e.to_string())?;
                finite(&[p.omega_start, p.omega_end].concat(), "angular velocities")?;
                finite(&[p.rotors_start, p.rotors_end, p.rotor_rates_start, p.rotor_rates_end].concat(), "rotor data")?;
                p.attitude_start.rotation().map_err(|e| e.to_string())?;
                p.attitude_end.rotation().map_err(|e| e.to_string())?;
            }
            Problem::EpFreeBody(p) => {
                if p.steps == 0 {
                    return Err("ep-free-body needs at least one step".into());
                }
                if p.inertia.iter().any(|&i| !(i > 0.0)) || !(p.step > 0.0) {
                    return Err("inertia and step must be positive".into());
                }
                finite(&p.eta_start, "eta_start")?;
                p.attitude_start.rotation().map_err(|e| e.to_string())?;
            }
            Problem::Verify(_) => {}
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self.problem {
            Problem::PairSpline(_) => "pair-spline",
            Problem::RigidBody(_) => "rigid-body",
            Problem::HeavyTop(_) => "heavy-top",
            Problem::EpFreeBody(_) => "ep-free-body",
            Problem::Verify(_) => "verify",
        }
    }
}

impl SolverOverrides {
    pub fn apply(&self, mut base: SolverConfig) -> SolverConfig {
        if let Some(t) = self.tolerance {
            base.tolerance = t;
        }
        if let Some(m) = self.max_iterations {
            base.max_iterations = m;
        }
        base
    }
}

impl RigidBodyConfig {
    pub fn params(&self) -> crate::Result<RigidBodyParams> {
        RigidBodyParams::new(Vec3::from(self.inertia), self.step)
    }

    pub fn boundary(&self) -> crate::Result<RigidBodyBoundary> {
        Ok(RigidBodyBoundary {
            r0: self.attitude_start.rotation()?,
            omega0: Vec3::from(self.omega_start),
            rt: self.attitude_end.rotation()?,
            omegat: Vec3::from(self.omega_end),
        })
    }
}

impl HeavyTopConfig {
    pub fn params(&self) -> HeavyTopParams {
        self.params.map_or_else(HeavyTopParams::default, |p| HeavyTopParams {
            ibar: Vec3::from(p.ibar),
            j: Vec2::from(p.j),
            mgh: p.mgh,
            step: p.step,
        })
    }

    pub fn boundary(&self) -> crate::Result<HeavyTopBoundary> {
        Ok(HeavyTopBoundary {
            r0: self.attitude_start.rotation()?,
            omega0: Vec3::from(self.omega_start),
            theta0: Vec2::from(self.rotors_start),
            thetadot0: Vec2::from(self.rotor_rates_start),
            rt: self.attitude_end.rotation()?,
            omegat: Vec3::from(self.omega_end),
            thetat: Vec2::from(self.rotors_end),
            thetadott: Vec2::from(self.rotor_rates_end),
        })
    }
}
