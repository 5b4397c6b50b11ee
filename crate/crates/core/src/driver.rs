//! Problem set-up, initial discretization, the transport/momentum time loop
//! and the refinement study.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Config, FieldFormat, parse_vector};
use crate::diagnostics::{
    BoundConstants, EstimateLedger, LedgerMeta, LedgerRow, Level, SolenoidalTest, Trajectory,
    l2_time_space_difference, weak_momentum_residual, weak_transport_residual,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{Extension, ScalarField, VectorField, cap_index, vector_norm_p};
use crate::grid::{GridTopology, Point, Shape, build_topology};
use crate::helmholtz;
use crate::linalg::SolverKind;
use crate::momentum::{self, StepInputs, ViscosityLaw, dissipation, kinetic, pressure_pairing};
use crate::output::write_fields;
use crate::quadrature::CellRule;
use crate::transport::{BOUNDS_TOL, DensityBounds, density_step};

/// Sub-cells per axis used to average over cells that cross `∂Ω`.
const STRADDLE_SPLIT: usize = 4;

/// Initial density, initial velocity, forcing and viscosity on `Ω`.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub shape: Shape,
    pub rho0: Expr,
    pub rho_lower: f64,
    /// `ρ⁰_**`; when absent the largest initial cell average is used.
    pub rho_upper: Option<f64>,
    pub v0: [Expr; 3],
    pub force: [Expr; 3],
    pub viscosity: ViscosityLaw,
}

impl ProblemData {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let p = &cfg.problem;
        if !(p.rho_lower > 0.0 && p.rho_lower.is_finite()) {
            return Err(Error::InvalidParams(format!("rho_lower must be positive, got {}", p.rho_lower)));
        }
        Ok(Self {
            shape: cfg.domain.shape.clone(),
            rho0: Expr::parse(&p.rho0)?,
            rho_lower: p.rho_lower,
            rho_upper: p.rho_upper,
            v0: parse_vector(&p.v0)?,
            force: parse_vector(&p.force)?,
            viscosity: p.viscosity.clone(),
        })
    }

    /// `ρ⁰` extended by `ρ⁰_*` outside `Ω`.
    pub fn rho0_at(&self, x: [f64; 3]) -> f64 {
        if self.shape.contains(x) { self.rho0.eval(x, 0.0) } else { self.rho_lower }
    }

    /// `v⁰`, zero outside `Ω`.
    pub fn v0_at(&self, x: [f64; 3]) -> [f64; 3] {
        if self.shape.contains(x) {
            self.v0.each_ref().map(|e| e.eval(x, 0.0))
        } else {
            [0.0; 3]
        }
    }

    /// `f(t, x)`, zero outside `Ω`.
    pub fn force_at(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        if self.shape.contains(x) {
            self.force.each_ref().map(|e| e.eval(x, t))
        } else {
            [0.0; 3]
        }
    }
}

/// `h`, `α`, `τ = h^{2−α}`, `T` and the step count `T_τ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchemeParams {
    pub h: f64,
    pub alpha: f64,
    pub tau: f64,
    pub t_final: f64,
    /// Smallest integer with `T < τ T_τ`.
    pub steps: usize,
}

impl SchemeParams {
    pub fn new(h: f64, alpha: f64, t_final: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParams(format!("h must be positive, got {h}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParams(format!("t_final must be positive, got {t_final}")));
        }
        let tau = h.powf(2.0 - alpha);
        if tau > 0.5 {
            return Err(Error::InvalidParams(format!("tau = h^(2-alpha) = {tau} exceeds 1/2")));
        }
        let mut steps = (t_final / tau).floor() as usize + 1;
        while steps > 1 && t_final < (steps - 1) as f64 * tau {
            steps -= 1;
        }
        while t_final >= steps as f64 * tau {
            steps += 1;
        }
        Ok(Self {
            h,
            alpha,
            tau,
            t_final,
            steps,
        })
    }
}

/// Discrete state at `n = 0`.
#[derive(Clone, Debug)]
pub struct InitialState {
    /// `η⁰` on `Ω̃_h`, extended by `ρ⁰_*`.
    pub eta: ScalarField,
    /// `u⁰` on `Ω_h`, zero extension.
    pub u: VectorField,
    pub k0: usize,
    /// `ũ⁰ = A^{k₀}(P_h u⁰)`
    pub u_tilde: VectorField,
    pub bounds: DensityBounds,
}

/// Mean over the cell `lo + [0,h)³` of a function that equals `outside`
/// off `shape`. `mean(lo, s)` is the mean of the inner function over
/// `lo + [0,s)³`. Cells crossing the boundary are split into sub-cells
/// classified by their centres.
fn cell_mean(shape: &Shape, lo: [f64; 3], h: f64, outside: f64, mean: &dyn Fn([f64; 3], f64) -> f64) -> f64 {
    let hi = [lo[0] + h, lo[1] + h, lo[2] + h];
    let (slo, shi) = shape.bounds();
    if (0..3).any(|a| hi[a] <= slo[a] || lo[a] >= shi[a]) {
        return outside;
    }
    if shape.contains_cell(lo, hi) {
        return mean(lo, h);
    }
    let s = h / STRADDLE_SPLIT as f64;
    let mut acc = 0.0;
    for i in 0..STRADDLE_SPLIT {
        for j in 0..STRADDLE_SPLIT {
            for k in 0..STRADDLE_SPLIT {
                let sub = [lo[0] + i as f64 * s, lo[1] + j as f64 * s, lo[2] + k as f64 * s];
                let c = [sub[0] + 0.5 * s, sub[1] + 0.5 * s, sub[2] + 0.5 * s];
                acc += if shape.contains(c) { mean(sub, s) } else { outside };
            }
        }
    }
    acc / (STRADDLE_SPLIT * STRADDLE_SPLIT * STRADDLE_SPLIT) as f64
}

fn cell_lo(p: Point, h: f64) -> [f64; 3] {
    [p[0] as f64 * h, p[1] as f64 * h, p[2] as f64 * h]
}

/// `η⁰`, `u⁰`, `P_h u⁰` and its cap.
pub fn discretize_initial(
    problem: &ProblemData,
    topo: &GridTopology,
    params: &SchemeParams,
    solver: Option<SolverKind>,
) -> Result<InitialState> {
    let h = topo.h;
    let lower = problem.rho_lower;
    let rule = CellRule::for_expr(&problem.rho0);
    let mean = |lo: [f64; 3], s: f64| rule.cell_average(&problem.rho0, lo, s, 0.0);
    let eta = ScalarField::new(
        topo.tilde.clone(),
        topo.tilde
            .points()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if topo.tilde_boundary[i] {
                    lower
                } else {
                    cell_mean(&problem.shape, cell_lo(p, h), h, lower, &mean)
                }
            })
            .collect(),
        Extension::Constant(lower),
    );
    let upper = problem.rho_upper.unwrap_or_else(|| eta.max());
    if !(eta.min() >= lower - BOUNDS_TOL && eta.max() <= upper + BOUNDS_TOL) {
        return Err(Error::InvalidParams(format!(
            "initial density averages span [{}, {}], outside [{lower}, {upper}]",
            eta.min(),
            eta.max()
        )));
    }
    let bounds = DensityBounds::new(lower, upper)?;
    if !problem.viscosity.covers(lower, upper) {
        return Err(Error::InvalidParams(format!(
            "viscosity table does not cover the density range [{lower}, {upper}]"
        )));
    }

    let rules = problem.v0.each_ref().map(CellRule::for_expr);
    let u = VectorField::from_fn(topo.omega.clone(), Extension::Zero, |p| {
        let lo = cell_lo(p, h);
        std::array::from_fn(|c| rules[c].cell_average(&problem.v0[c], lo, h, 0.0))
    });
    let projected = helmholtz::project_with(&u, topo, solver)?;
    let (k0, u_tilde) = cap_index(&projected.w, params.alpha, h)?;
    Ok(InitialState {
        eta,
        u,
        k0,
        u_tilde,
        bounds,
    })
}

/// `f^{n+1}`: space-time averages over `C_h⁺(x) × [nτ, nτ+τ]` on `Ω_h`.
pub fn force_average(problem: &ProblemData, rules: &[CellRule; 3], topo: &GridTopology, t0: f64, tau: f64) -> VectorField {
    let h = topo.h;
    VectorField::from_fn(topo.omega.clone(), Extension::Zero, |p| {
        let lo = cell_lo(p, h);
        std::array::from_fn(|c| rules[c].space_time_average(&problem.force[c], lo, h, t0, tau))
    })
}

/// `∫_{t0}^{t1} ∫_Ω e²` over the cells of `Ω̃_h`. The time interval is split
/// into pieces of length at most `dt` unless the rule is exact.
fn squared_integral(e: &Expr, shape: &Shape, topo: &GridTopology, t0: f64, t1: f64, dt: f64) -> f64 {
    let sq = e.clone() * e.clone();
    let rule = CellRule::for_expr(&sq);
    let pieces = if rule.is_exact() { 1 } else { ((t1 - t0) / dt).ceil().max(1.0) as usize };
    let len = (t1 - t0) / pieces as f64;
    let h = topo.h;
    let time_dep = sq.depends_on(crate::expr::Var::T);
    let mut total = 0.0;
    for &p in topo.tilde.points() {
        let lo = cell_lo(p, h);
        let m = if time_dep {
            let mean = |lo: [f64; 3], s: f64| {
                (0..pieces)
                    .map(|k| rule.space_time_average(&sq, lo, s, t0 + k as f64 * len, len))
                    .sum::<f64>()
                    / pieces as f64
            };
            cell_mean(shape, lo, h, 0.0, &mean)
        } else {
            let mean = |lo: [f64; 3], s: f64| rule.cell_average(&sq, lo, s, t0);
            cell_mean(shape, lo, h, 0.0, &mean)
        };
        total += m;
    }
    total * h * h * h * (t1 - t0)
}

/// The data entering the cumulative bounds: `‖v⁰‖²_{L²(Ω)}` and
/// `‖f‖²_{L²([0,T+1]; L²(Ω))}`, by quadrature on the cells of `Ω̃_h`.
pub fn data_norms(problem: &ProblemData, topo: &GridTopology, params: &SchemeParams) -> (f64, f64) {
    let v0_sq = problem
        .v0
        .iter()
        .map(|e| squared_integral(e, &problem.shape, topo, 0.0, 1.0, 1.0))
        .sum();
    let f_sq = problem
        .force
        .iter()
        .map(|e| squared_integral(e, &problem.shape, topo, 0.0, params.t_final + 1.0, params.tau))
        .sum();
    (v0_sq, f_sq)
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub solver: Option<SolverKind>,
    /// Ledger and field snapshots go here; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    pub format: FieldFormat,
    /// `N_out`: snapshots every `⌈T_τ/N_out⌉` steps plus the last; 0 for none.
    pub snapshots: usize,
    /// Keep every level in memory.
    pub retain: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solver: None,
            out_dir: None,
            format: FieldFormat::Csv,
            snapshots: 0,
            retain: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ledger: EstimateLedger,
    pub trajectory: Option<Trajectory>,
    pub initial: InitialState,
    pub last: Level,
    pub snapshot_paths: Vec<PathBuf>,
}

/// A run that stopped early, with the ledger up to and including the
/// failing step.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    /// Time level whose computation failed, when the loop had started.
    pub step: Option<usize>,
    pub ledger: Option<EstimateLedger>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.step {
            Some(n) => write!(f, "step {n}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            step: None,
            ledger: None,
        }
    }
}

fn snapshot_path(dir: &Path, n: usize, format: FieldFormat) -> PathBuf {
    let ext = match format {
        FieldFormat::Csv => "csv",
        FieldFormat::Vtk => "vtk",
    };
    dir.join(format!("fields_{n:06}.{ext}"))
}

fn with_step(e: Error, n: usize) -> Error {
    match e {
        Error::Contract { what, .. } => Error::Contract { step: n, what },
        other => other,
    }
}

/// The full time loop: cap, density step, momentum step, ledger row.
pub fn run(
    problem: &ProblemData,
    topo: &GridTopology,
    params: &SchemeParams,
    opts: &RunOptions,
) -> std::result::Result<RunOutput, RunFailure> {
    if (topo.h - params.h).abs() > 1e-15 * params.h {
        return Err(Error::InvalidParams("topology and scheme use different h".into()).into());
    }
    let h = params.h;
    let tau = params.tau;
    let initial = discretize_initial(problem, topo, params, opts.solver)?;
    let (v0_sq, f_sq) = data_norms(problem, topo, params);
    let constants = BoundConstants {
        rho_lower: initial.bounds.lower,
        rho_upper: initial.bounds.upper,
        mu_min: problem.viscosity.min(),
        t_final: params.t_final,
        v0_sq,
        f_sq,
    };
    let h3 = h * h * h;
    let mass = |eta: &ScalarField| eta.values().iter().sum::<f64>() * h3;
    let meta = LedgerMeta {
        h,
        alpha: params.alpha,
        tau,
        t_final: params.t_final,
        steps: params.steps,
        constants,
        kinetic_bound: constants.kinetic_bound(),
        dissipation_bound: constants.dissipation_bound(),
        initial_kinetic: kinetic(&initial.eta, &initial.u, topo),
        initial_mass: mass(&initial.eta),
    };
    let mut ledger = EstimateLedger::new(meta);
    let mut snapshot_paths = Vec::new();
    let cadence = if opts.snapshots == 0 { 0 } else { params.steps.div_ceil(opts.snapshots) };

    let fail = |error: Error, step: Option<usize>, ledger: &EstimateLedger| {
        if let Some(dir) = &opts.out_dir {
            // best effort: the step error is the one worth reporting
            let _ = ledger.write(dir);
        }
        RunFailure {
            error,
            step,
            ledger: Some(ledger.clone()),
        }
    };

    if let (Some(dir), true) = (&opts.out_dir, cadence > 0) {
        let state = Level {
            eta: initial.eta.clone(),
            u: initial.u.clone(),
            q: ScalarField::zeros(topo.omega.clone(), Extension::Zero),
        };
        let path = snapshot_path(dir, 0, opts.format);
        write_fields(&state, topo, opts.format, &path).map_err(|e| fail(e, None, &ledger))?;
        snapshot_paths.push(path);
    }

    let force_rules = problem.force.each_ref().map(CellRule::for_expr);
    let mut eta = initial.eta.clone();
    let mut u = initial.u.clone();
    let mut q = ScalarField::zeros(topo.omega.clone(), Extension::Zero);
    let mut dissipation_sum = 0.0;
    let mut levels = Vec::new();
    for n in 0..params.steps {
        let level_no = n + 1;
        let step = || -> Result<(usize, ScalarField, VectorField, ScalarField, LedgerRow)> {
            let (k, u_tilde) = if n == 0 {
                (initial.k0, initial.u_tilde.clone())
            } else {
                cap_index(&u, params.alpha, h)?
            };
            let (eta_next, trep) = density_step(&eta, &u_tilde, tau, h, initial.bounds, topo)?;
            let force = force_average(problem, &force_rules, topo, n as f64 * tau, tau);
            let inp = StepInputs {
                eta: &eta,
                eta_next: &eta_next,
                u: &u,
                u_tilde: &u_tilde,
                force: &force,
                viscosity: &problem.viscosity,
                tau,
                h,
            };
            let (u_next, q_next, mrep) = momentum::step(&inp, topo, opts.solver)?;
            let row = LedgerRow {
                n: level_no,
                t: level_no as f64 * tau,
                kinetic: kinetic(&eta_next, &u_next, topo),
                dissipation_sum: dissipation_sum + dissipation(&u_next, topo) * tau,
                mass: mass(&eta_next),
                eta_min: trep.eta_min,
                eta_max: trep.eta_max,
                k_n: k,
                cfl_min: trep.min_coeff,
                energy_res: mrep.energy_residual,
                max_div: mrep.max_div,
                grad_q: mrep.grad_q_norm,
            };
            Ok((k, eta_next, u_next, q_next, row))
        };
        let (_, eta_next, u_next, q_next, row) = step().map_err(|e| fail(with_step(e, level_no), Some(level_no), &ledger))?;
        let u_sq = vector_norm_p(&u_next, 2.0, h).powi(2);
        dissipation_sum = row.dissipation_sum;
        if let Err(e) = ledger.push(row, u_sq) {
            return Err(fail(e, Some(level_no), &ledger));
        }
        eta = eta_next;
        u = u_next;
        q = q_next;

        let due = cadence > 0 && (level_no % cadence == 0 || level_no == params.steps);
        if let (Some(dir), true) = (&opts.out_dir, due) {
            let state = Level {
                eta: eta.clone(),
                u: u.clone(),
                q: q.clone(),
            };
            let path = snapshot_path(dir, level_no, opts.format);
            write_fields(&state, topo, opts.format, &path).map_err(|e| fail(e, Some(level_no), &ledger))?;
            snapshot_paths.push(path);
        }
        if opts.retain {
            levels.push(Level {
                eta: eta.clone(),
                u: u.clone(),
                q: q.clone(),
            });
        }
    }
    if let Some(dir) = &opts.out_dir {
        ledger.write(dir).map_err(|e| fail(e, None, &ledger))?;
    }
    let trajectory = opts.retain.then(|| Trajectory {
        h,
        tau,
        t_final: params.t_final,
        rho_lower: problem.rho_lower,
        levels,
    });
    Ok(RunOutput {
        ledger,
        trajectory,
        initial,
        last: Level { eta, u, q },
        snapshot_paths,
    })
}

/// Problem, grid and parameters assembled from a config.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub problem: ProblemData,
    pub topo: GridTopology,
    pub params: SchemeParams,
    pub options: RunOptions,
}

impl Simulation {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let problem = ProblemData::from_config(cfg)?;
        let params = SchemeParams::new(cfg.scheme.h, cfg.scheme.alpha, cfg.scheme.t_final)?;
        let topo = build_topology(&cfg.domain_spec(), params.h)?;
        Ok(Self {
            problem,
            topo,
            params,
            options: RunOptions {
                solver: cfg.scheme.solver.kind(),
                out_dir: Some(cfg.output.dir.clone()),
                format: cfg.output.format,
                snapshots: cfg.output.snapshots,
                retain: false,
            },
        })
    }

    pub fn run(&self) -> std::result::Result<RunOutput, RunFailure> {
        run(&self.problem, &self.topo, &self.params, &self.options)
    }
}

/// Diagnostics for one resolution of a refinement study.
#[derive(Clone, Debug, Serialize)]
pub struct StudyLevel {
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    pub omega_points: usize,
    /// `‖v_δ − v_δ^{finest}‖_{L²(0,T;L²)}`
    pub cauchy_to_finest: f64,
    pub transport_residual: Option<f64>,
    pub momentum_residual: Option<f64>,
    /// `max_n |(Dq^n, φ)|`
    pub pressure_pairing: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyReport {
    pub alpha: f64,
    pub t_final: f64,
    /// Coarsest first.
    pub levels: Vec<StudyLevel>,
}

impl StudyReport {
    pub fn table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
        let mut s = String::from("h,tau,steps,omega_points,cauchy_to_finest,transport_residual,momentum_residual,pressure_pairing\n");
        for l in &self.levels {
            s.push_str(&format!(
                "{},{},{},{},{:.6e},{},{},{}\n",
                l.h,
                l.tau,
                l.steps,
                l.omega_points,
                l.cauchy_to_finest,
                opt(l.transport_residual),
                opt(l.momentum_residual),
                opt(l.pressure_pairing),
            ));
        }
        s
    }
}

struct StudyRun {
    topo: GridTopology,
    params: SchemeParams,
    trajectory: Trajectory,
}

/// Runs the configured problem at each `h` (in parallel) and compares the
/// step functions against the finest run.
pub fn refinement_study(cfg: &Config, resolutions: &[f64]) -> Result<StudyReport> {
    if resolutions.len() < 3 {
        return Err(Error::InvalidParams(format!(
            "a refinement study needs at least 3 resolutions, got {}",
            resolutions.len()
        )));
    }
    let mut hs = resolutions.to_vec();
    hs.sort_by(|a, b| b.total_cmp(a));
    let problem = ProblemData::from_config(cfg)?;
    let spec = cfg.domain_spec();
    let d = &cfg.diagnostics;
    let transport_test = d.transport_test.as_deref().map(Expr::parse).transpose()?;
    let momentum_test = d
        .momentum_potential
        .as_ref()
        .map(parse_vector)
        .transpose()?
        .map(|psi| SolenoidalTest::from_potential(&psi));
    let pressure_test = d
        .pressure_potential
        .as_ref()
        .map(parse_vector)
        .transpose()?
        .map(|psi| SolenoidalTest::from_potential(&psi));

    let setups = hs
        .iter()
        .map(|&h| {
            let params = SchemeParams::new(h, cfg.scheme.alpha, cfg.scheme.t_final)?;
            let topo = build_topology(&spec, h)?;
            if topo.tilde.len() > d.retain_limit {
                return Err(Error::InvalidParams(format!(
                    "h = {h} gives {} padded points, above retain_limit {}",
                    topo.tilde.len(),
                    d.retain_limit
                )));
            }
            Ok((topo, params))
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = RunOptions {
        solver: cfg.scheme.solver.kind(),
        retain: true,
        ..RunOptions::default()
    };
    let results: Vec<Result<StudyRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = setups
            .into_iter()
            .map(|(topo, params)| {
                let (problem, opts) = (&problem, &opts);
                s.spawn(move || {
                    let out = run(problem, &topo, &params, opts).map_err(|f| f.error)?;
                    let trajectory = out.trajectory.expect("retained");
                    Ok(StudyRun {
                        topo,
                        params,
                        trajectory,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("study worker panicked")).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let finest = runs.last().expect("at least three runs");

    let rho0 = |x: [f64; 3]| problem.rho0_at(x);
    let v0 = |x: [f64; 3]| problem.v0_at(x);
    let force = |x: [f64; 3], t: f64| problem.force_at(x, t);
    let mut levels = Vec::with_capacity(runs.len());
    for r in &runs {
        let tr = &r.trajectory;
        let transport_residual = transport_test
            .as_ref()
            .map(|phi| weak_transport_residual(tr, &r.topo, &rho0, phi));
        let momentum_residual = momentum_test
            .as_ref()
            .map(|test| weak_momentum_residual(tr, &r.topo, &rho0, &v0, &force, &problem.viscosity, test))
            .transpose()?;
        let pressure = match &pressure_test {
            Some(test) => {
                let phi = test.sample(&r.topo.omega, r.topo.h, 0.0);
                let mut m: f64 = 0.0;
                for level in &tr.levels {
                    m = m.max(pressure_pairing(&level.q, &phi, &r.topo)?.abs());
                }
                Some(m)
            }
            None => None,
        };
        levels.push(StudyLevel {
            h: r.params.h,
            tau: r.params.tau,
            steps: r.params.steps,
            omega_points: r.topo.omega.len(),
            cauchy_to_finest: l2_time_space_difference(tr, &finest.trajectory, &finest.topo),
            transport_residual,
            momentum_residual,
            pressure_pairing: pressure,
        });
    }
    Ok(StudyReport {
        alpha: cfg.scheme.alpha,
        t_final: cfg.scheme.t_final,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_brackets_final_time() {
        for (h, alpha, t) in [(1.0 / 12.0, 0.5, 0.05), (0.1, 0.3, 1.0), (1.0 / 16.0, 0.5, 0.25)] {
            let p = SchemeParams::new(h, alpha, t).unwrap();
            assert_eq!(p.tau, h.powf(2.0 - alpha));
            assert!(t < p.tau * p.steps as f64);
            assert!(t >= p.tau * (p.steps - 1) as f64);
        }
        // T an exact multiple of τ still needs one more level
        let p = SchemeParams::new(0.25, 0.5, 0.25f64.powf(1.5) * 2.0).unwrap();
        assert_eq!(p.steps, 3);
    }

    #[test]
    fn large_tau_is_rejected() {
        assert!(SchemeParams::new(0.9, 0.5, 1.0).is_err());
        assert!(SchemeParams::new(0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn straddling_cells_mix_inside_and_outside_values() {
        let shape = Shape::unit_cube();
        let one = |_: [f64; 3], _: f64| 1.0;
        assert_eq!(cell_mean(&shape, [0.25, 0.25, 0.25], 0.5, 0.0, &one), 1.0);
        assert_eq!(cell_mean(&shape, [2.0, 2.0, 2.0], 0.5, 7.0, &one), 7.0);
        // half the cell lies below x = 0
        assert_eq!(cell_mean(&shape, [-0.25, 0.25, 0.25], 0.5, 0.0, &one), 0.5);
    }
}
