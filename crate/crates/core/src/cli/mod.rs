//! Command-line front end: `run` solves problems described by JSON configs and
//! writes a trajectory table and a report per config; `verify` runs the
//! built-in numerical checks.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discrete1::{ep_residual, ep_step};
use crate::error::Error;
use crate::liealg::{cay, dcay_inv, Vec3};
use crate::models;
use crate::newton::SolverConfig;
use crate::optimal_control::{
    control_from_step, free_body_lagrangian, gamma_propagation_defect, heavytop_oc_solve, heavytop_problem,
    heavytop_system, increments, rigidbody_lagrangian, rigidbody_oc_solve,
};
use crate::second_order::{solve_bvp, BvpProblem, BvpSolution, Trajectory};
use crate::verify::{noether_defect, run_suite, stationarity_check, NoetherData, StationarityCheck};

use config::{EpFreeBodyConfig, HeavyTopConfig, PairSplineConfig, Problem, RigidBodyConfig, RunConfig, SuiteName};
use output::{cells, columns, optional_cells, rotation_cells, rotation_columns, Report, Table};

#[derive(Debug, Parser)]
#[command(name = "groupoid-mech", version, about = "Discrete mechanics and optimal control on Lie groupoids")]
pub struct Cli {
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Newton residual tolerance (max-norm).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Newton iteration cap.
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    /// Seed for randomized guesses and checks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the problems described by one or more config files.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Run the configs concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Run the numerical verification suite.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SuiteArg {
    All,
    Cayley,
    Symplectic,
    Noether,
    Order,
}

impl From<SuiteArg> for SuiteName {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::All => SuiteName::All,
            SuiteArg::Cayley => SuiteName::Cayley,
            SuiteArg::Symplectic => SuiteName::Symplectic,
            SuiteArg::Noether => SuiteName::Noether,
            SuiteArg::Order => SuiteName::Order,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_SINGULAR: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} verification checks failed")]
    Checks(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(Error::NoConvergence { .. }) => EXIT_NO_CONVERGENCE,
            CliError::Solver(Error::SingularJacobian { .. }) => EXIT_SINGULAR,
            _ => EXIT_FAILURE,
        }
    }
}

/// Command-line settings that override every config.
#[derive(Debug, Clone, Default)]
struct Overrides {
    out: Option<PathBuf>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    seed: Option<u64>,
}

impl Overrides {
    fn solver(&self, cfg: &RunConfig) -> SolverConfig {
        let mut s = cfg.solver.apply(SolverConfig::default());
        if let Some(t) = self.tol {
            s.tolerance = t;
        }
        if let Some(m) = self.max_iter {
            s.max_iterations = m;
        }
        s
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let ov = Overrides { out: cli.out, tol: cli.tol, max_iter: cli.max_iter, seed: cli.seed };
    match cli.command {
        Command::Run { configs, parallel } => run_many(&configs, parallel, &ov),
        Command::Verify { suite } => {
            let cfg = RunConfig {
                name: "verify".into(),
                problem: Problem::Verify(config::VerifyConfig { suite: suite.into() }),
                solver: Default::default(),
                output_dir: None,
                seed: 0,
            };
            let write = ov.out.is_some();
            finish(&cfg.name, execute(&cfg, &ov, write))
        }
    }
}

fn run_many(paths: &[PathBuf], parallel: bool, ov: &Overrides) -> i32 {
    let codes: Vec<i32> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = paths.iter().map(|p| s.spawn(move || run_path(p, ov))).collect();
            handles.into_iter().map(|h| h.join().unwrap_or(EXIT_FAILURE)).collect()
        })
    } else {
        paths.iter().map(|p| run_path(p, ov)).collect()
    };
    codes.into_iter().find(|&c| c != EXIT_OK).unwrap_or(EXIT_OK)
}

fn run_path(path: &Path, ov: &Overrides) -> i32 {
    let label = path.display().to_string();
    let cfg = match fs::read_to_string(path) {
        Ok(text) => RunConfig::parse(&text).map_err(CliError::Config),
        Err(e) => Err(CliError::Config(format!("cannot read {label}: {e}"))),
    };
    match cfg {
        Ok(cfg) => finish(&cfg.name, execute(&cfg, ov, true)),
        Err(e) => finish(&label, Err(e)),
    }
}

fn finish(label: &str, result: Result<String, CliError>) -> i32 {
    match result {
        Ok(summary) => {
            println!("{label}: {summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{label}: {e}");
            e.exit_code()
        }
    }
}

/// Runs one config, writes `<name>.report.json` (and `<name>.trajectory.csv`
/// for trajectory problems) when `write` is set, and returns a summary line.
fn execute(cfg: &RunConfig, ov: &Overrides, write: bool) -> Result<String, CliError> {
    let solver = ov.solver(cfg);
    solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let seed = ov.seed.unwrap_or(cfg.seed);
    let mut report = Report::new(&cfg.name, cfg.kind());
    let outcome = match &cfg.problem {
        Problem::PairSpline(p) => pair_spline(p, seed, solver, &mut report),
        Problem::RigidBody(p) => rigid_body(p, solver, &mut report),
        Problem::HeavyTop(p) => heavy_top(p, solver, &mut report),
        Problem::EpFreeBody(p) => ep_free_body(p, solver, &mut report),
        Problem::Verify(v) => verify(v.suite, seed, solver, &mut report),
    };
    let dir =
        ov.out.clone().or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    let table = match outcome {
        Ok(table) => table,
        Err(e) => {
            report.status = "failed";
            report.error = Some(e.to_string());
            if let CliError::Solver(Error::NoConvergence { residual, iterations, trace, constraint_max }) = &e {
                report.residual = Some(*residual);
                report.iterations = Some(*iterations);
                report.constraint_max = *constraint_max;
                report.residual_trace = trace.clone();
            }
            if write {
                write_outputs(&dir, &cfg.name, &report, None)?;
            }
            return Err(e);
        }
    };
    if write {
        write_outputs(&dir, &cfg.name, &report, table.as_ref())?;
    }
    if !report.checks.is_empty() {
        for c in &report.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            let op = if c.kind == "max" { "<=" } else { ">=" };
            println!("{verdict} {} = {:.3e} ({op} {:e})", c.name, c.value, c.threshold);
        }
        let failed = report.checks.iter().filter(|c| !c.pass).count();
        if failed > 0 {
            return Err(CliError::Checks(failed));
        }
        return Ok(format!("{} checks passed", report.checks.len()));
    }
    Ok(match (report.iterations, report.residual) {
        (Some(it), Some(r)) => format!("converged in {it} iterations, residual {r:.3e}"),
        _ => format!("{} nodes written", report.nodes.unwrap_or(0)),
    })
}

fn write_outputs(dir: &Path, name: &str, report: &Report, table: Option<&Table>) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{name}.trajectory.csv"));
    match table {
        Some(t) => fs::write(&csv, t.to_csv())?,
        // A stale table from an earlier successful run would be misleading.
        None if csv.exists() => fs::remove_file(&csv)?,
        None => {}
    }
    fs::write(dir.join(format!("{name}.report.json")), report.to_json())?;
    Ok(())
}

fn fill_solution(report: &mut Report, sol: &BvpSolution) {
    report.nodes = Some(sol.trajectory.nodes());
    report.iterations = Some(sol.iterations);
    report.residual = Some(sol.residual);
    report.action = Some(sol.action);
    report.constraint_max = sol.constraint_max;
    report.residual_trace = sol.trace.clone();
}

fn fill_stationarity(report: &mut Report, st: &StationarityCheck) {
    if let Some(w) = st.worst() {
        report.metric("stationarity_worst_ratio", w);
    }
    report.metric("stationarity_flat_directions", st.flat as f64);
}

fn pair_spline(
    p: &PairSplineConfig,
    seed: u64,
    solver: SolverConfig,
    report: &mut Report,
) -> Result<Option<Table>, CliError> {
    let m = p.start[0].len();
    let n = p.nodes;
    let q1 = DVector::from_column_slice(&p.start[1]);
    let qn2 = DVector::from_column_slice(&p.end[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![DVector::from_column_slice(&p.start[0]), q1.clone()];
    for k in 2..n - 2 {
        let t = (k - 1) as f64 / (n - 3) as f64;
        let mut q = &q1 + (&qn2 - &q1) * t;
        if p.guess_noise > 0.0 {
            q.iter_mut().for_each(|x| *x += rng.gen_range(-p.guess_noise..=p.guess_noise));
        }
        nodes.push(q);
    }
    nodes.push(qn2);
    nodes.push(DVector::from_column_slice(&p.end[1]));
    let l = models::spline(m);
    let guess = Trajectory::from_pair_nodes(&nodes)?;
    let sol = solve_bvp(&BvpProblem { lagrangian: l.clone(), constraints: None, guess, config: solver })?;
    fill_solution(report, &sol);
    fill_stationarity(report, &stationarity_check(&l, None, &sol.trajectory)?);
    for i in 0..m {
        let nd = NoetherData::new(move |_| DVector::from_fn(m, |r, _| if r == i { 1.0 } else { 0.0 }));
        report.metric(&format!("noether_translation_defect_{i}"), noether_defect(&l, &nd, &sol.trajectory)?);
    }
    let q = sol.trajectory.pair_nodes();
    let mut table = Table::new([columns("q", m), columns("v", m)].concat());
    for k in 0..q.len() {
        let v = q.get(k + 1).map(|next| (next - &q[k]).as_slice().to_vec());
        table.rows.push(cells(q[k].as_slice()).chain(optional_cells(v.as_deref(), m)).collect());
    }
    Ok(Some(table))
}

fn rigid_body(p: &RigidBodyConfig, solver: SolverConfig, report: &mut Report) -> Result<Option<Table>, CliError> {
    let params = p.params()?;
    let b = p.boundary()?;
    let sol = rigidbody_oc_solve(&b, p.nodes, params, solver)?;
    fill_solution(report, &sol);
    let traj = &sol.trajectory;
    fill_stationarity(report, &stationarity_check(&rigidbody_lagrangian(params), None, traj)?);
    let xi = increments(traj, params.step)?;
    let ld = free_body_lagrangian(params);
    let inertia = params.inertia;
    let l = move |x: &Vec3| 0.5 * x.dot(&inertia.component_mul(x));
    let mut controls = Vec::new();
    let mut gap: f64 = 0.0;
    for k in 0..traj.elements.len() - 1 {
        let u = control_from_step(&ld, &traj.elements[k], &traj.elements[k + 1])?.components;
        let defect = ep_residual(&l, None, &xi[k], &xi[k + 1], params.step);
        gap = gap.max((Vec3::new(u[0], u[1], u[2]) - defect).amax());
        controls.push(u);
    }
    report.metric("control_defect_gap", gap);
    report.metric("control_max", controls.iter().map(|u| u.amax()).fold(0.0, f64::max));
    let attitudes = traj.attitudes(b.r0);
    report.metric("endpoint_error", (attitudes.last().expect("non-empty").matrix() - b.rt.matrix()).amax());
    let mut table = Table::new([rotation_columns(), columns("xi", 3), columns("u", 3)].concat());
    for (k, r) in attitudes.iter().enumerate() {
        let mut row = rotation_cells(r);
        row.extend(optional_cells(xi.get(k).map(|x| x.as_slice()), 3));
        row.extend(optional_cells(controls.get(k).map(|u| u.as_slice()), 3));
        table.rows.push(row);
    }
    Ok(Some(table))
}

fn heavy_top(p: &HeavyTopConfig, solver: SolverConfig, report: &mut Report) -> Result<Option<Table>, CliError> {
    let params = p.params();
    let b = p.boundary()?;
    let sol = heavytop_oc_solve(&b, p.nodes, params, solver)?;
    fill_solution(report, &sol);
    let traj = &sol.trajectory;
    let (l, c) = heavytop_problem(params)?;
    fill_stationarity(report, &stationarity_check(&l, Some(&c), traj)?);
    report.metric("gamma_propagation_defect", gamma_propagation_defect(traj));
    let sys = heavytop_system(params);
    let controls: Vec<DVector<f64>> =
        traj.elements.windows(2).map(|w| (sys.defect)(&w[0], &w[1]).rows(3, 2).into_owned()).collect();
    let xi = increments_action(traj, params.step)?;
    let attitudes = traj.attitudes(b.r0);
    let bases: Vec<DVector<f64>> = traj.pair_nodes();
    let multipliers = traj.multipliers.clone().unwrap_or_default();
    let header = [
        rotation_columns(),
        columns("gamma", 3),
        columns("theta", 2),
        columns("xi", 3),
        columns("dtheta", 2),
        columns("u", 2),
        columns("lambda", 3),
    ]
    .concat();
    let mut table = Table::new(header);
    for (k, r) in attitudes.iter().enumerate() {
        let mut row = rotation_cells(r);
        row.extend(cells(bases[k].as_slice()));
        let arrow = traj.elements.get(k);
        row.extend(optional_cells(xi.get(k).map(|x| x.as_slice()), 3));
        let shift = arrow.map(|g| match g {
            crate::groupoid::GroupoidElement::Action { shift, .. } => shift.as_slice().to_vec(),
            _ => vec![f64::NAN; 2],
        });
        row.extend(optional_cells(shift.as_deref(), 2));
        row.extend(optional_cells(controls.get(k).map(|u| u.as_slice()), 2));
        row.extend(optional_cells(multipliers.get(k).map(|x| x.as_slice()), 3));
        table.rows.push(row);
    }
    Ok(Some(table))
}

fn increments_action(traj: &Trajectory, h: f64) -> Result<Vec<Vec3>, CliError> {
    traj.elements
        .iter()
        .map(|g| {
            let r = g.rotation().ok_or_else(|| Error::BackendMismatch("expected a rotation factor".into()))?;
            Ok(crate::liealg::cay_inv(r)? / h)
        })
        .collect()
}

fn ep_free_body(p: &EpFreeBodyConfig, solver: SolverConfig, report: &mut Report) -> Result<Option<Table>, CliError> {
    let inertia = Vec3::from(p.inertia);
    let l = move |x: &Vec3| 0.5 * x.dot(&inertia.component_mul(x));
    let grad = move |x: &Vec3| inertia.component_mul(x);
    let mut eta = vec![Vec3::from(p.eta_start)];
    for _ in 0..p.steps {
        let next = ep_step(&l, Some(&grad), eta.last().expect("non-empty"), p.step, &solver)?;
        eta.push(next);
    }
    let mut attitudes = vec![p.attitude_start.rotation()?];
    for e in &eta[..p.steps] {
        let r = *attitudes.last().expect("non-empty") * cay(&(e * p.step));
        attitudes.push(r);
    }
    let e0 = l(&eta[0]);
    report.nodes = Some(attitudes.len());
    report.metric("energy_drift", eta.iter().map(|e| (l(e) - e0).abs()).fold(0.0, f64::max));
    // The discrete momentum moves on a coadjoint orbit, so its norm only drifts by the solver tolerance.
    let momentum = |e: &Vec3| (dcay_inv(&(-e * p.step)).transpose() * inertia.component_mul(e)).norm();
    let m0 = momentum(&eta[0]);
    report.metric("momentum_norm_drift", eta.iter().map(|e| (momentum(e) - m0).abs()).fold(0.0, f64::max));
    let worst_orth = attitudes.iter().map(|r| r.defect().0).fold(0.0, f64::max);
    report.metric("orthogonality_defect", worst_orth);
    let mut table = Table::new([rotation_columns(), columns("eta", 3)].concat());
    for (k, r) in attitudes.iter().enumerate() {
        let mut row = rotation_cells(r);
        row.extend(optional_cells((k < p.steps).then(|| eta[k].as_slice()), 3));
        table.rows.push(row);
    }
    Ok(Some(table))
}

fn verify(suite: SuiteName, seed: u64, solver: SolverConfig, report: &mut Report) -> Result<Option<Table>, CliError> {
    report.checks = run_suite(suite.into(), seed, &solver)?;
    if matches!(suite, SuiteName::All | SuiteName::Order) {
        report.convergence = Some(crate::verify::order_checks(&solver)?.1);
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_CONFIG);
        let nc = Error::NoConvergence { residual: 1.0, iterations: 3, trace: vec![], constraint_max: None };
        assert_eq!(CliError::Solver(nc).exit_code(), EXIT_NO_CONVERGENCE);
        assert_eq!(CliError::Solver(Error::SingularJacobian { rank: 1, size: 2 }).exit_code(), EXIT_SINGULAR);
        assert_eq!(CliError::Solver(Error::NearSingular(1e9)).exit_code(), EXIT_FAILURE);
        assert_eq!(CliError::Checks(1).exit_code(), EXIT_FAILURE);
    }

    #[test]
    fn flags_override_config() {
        let cfg = RunConfig::parse(r#"{"name":"a","problem":{"kind":"verify"},"solver":{"tolerance":1e-6}}"#).unwrap();
        assert_eq!(Overrides::default().solver(&cfg).tolerance, 1e-6);
        let ov = Overrides { tol: Some(1e-9), max_iter: Some(7), ..Default::default() };
        let s = ov.solver(&cfg);
        assert_eq!((s.tolerance, s.max_iterations), (1e-9, 7));
    }

    #[test]
    fn bad_flags_are_config_errors() {
        assert_eq!(main_with_args(["groupoid-mech", "verify", "--suite", "bogus"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["groupoid-mech", "run"]), EXIT_CONFIG);
    }

    #[test]
    fn spline_table_has_one_row_per_node() {
        let cfg = RunConfig::parse(
            r#"{"name":"s","problem":{"kind":"pair-spline","nodes":9,"start":[[0,0],[1,0]],"end":[[6,1],[7,2]]}}"#,
        )
        .unwrap();
        let Problem::PairSpline(p) = &cfg.problem else { unreachable!() };
        let mut report = Report::new("s", "pair-spline");
        let table = pair_spline(p, 0, SolverConfig::default(), &mut report).unwrap().unwrap();
        assert_eq!(table.rows.len(), 9);
        assert_eq!(table.header.len(), 4);
        assert!(table.rows[8][2].is_none() && table.rows[7][2].is_some());
        assert!(report.residual.unwrap() <= 1e-8);
        assert!(report.metrics["noether_translation_defect_0"] <= 1e-8);
    }

    #[test]
    fn ep_free_body_conserves_momentum_norm() {
        let cfg =
            RunConfig::parse(r#"{"name":"e","problem":{"kind":"ep-free-body","eta_start":[1,0.5,0.2],"steps":50}}"#)
                .unwrap();
        let Problem::EpFreeBody(p) = &cfg.problem else { unreachable!() };
        let mut report = Report::new("e", "ep-free-body");
        let table = ep_free_body(p, SolverConfig::default(), &mut report).unwrap().unwrap();
        assert_eq!(table.rows.len(), 51);
        assert!(report.metrics["momentum_norm_drift"] < 1e-9, "{:?}", report.metrics);
        assert!(report.metrics["energy_drift"] < 1e-2);
    }
}
