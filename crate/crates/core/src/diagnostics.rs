//! Cross-step verification: the discrete-calculus lemma suite, the estimate
//! ledger, step-function sampling of a trajectory, weak-form residuals and
//! refinement differences.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::field::{
    DiffKind, Extension, ScalarField, VectorField, diff, divergence, local_average, norm_p,
};
use crate::grid::{GridTopology, Point, PointSet, parity_class};
use crate::momentum::ViscosityLaw;
use crate::sampling::{random_scalar, random_vector_zero_boundary};

/// Relative tolerance of the identity-type lemmas.
pub const LEMMA_TOL: f64 = 1e-12;

fn relative(defect: f64, scale: f64) -> f64 {
    if scale > 0.0 { defect.abs() / scale } else { defect.abs() }
}

/// `Σ_G w D_i⁺φ + Σ_G D_i⁻w φ` (forward form) or `Σ_G w D_iφ + Σ_G D_i w φ`
/// (central form), relative to the summed magnitudes. Both fields are read
/// with zero extension outside `G`.
pub fn summation_by_parts_defect(w: &ScalarField, phi: &ScalarField, axis: usize, central: bool, h: f64) -> f64 {
    let (kw, kp) = if central {
        (DiffKind::Central, DiffKind::Central)
    } else {
        (DiffKind::Backward, DiffKind::Forward)
    };
    let mut sum = 0.0;
    let mut scale = 0.0;
    for &x in w.support().points() {
        let a = w.get(x) * diff(phi, axis, kp, x, h);
        let b = diff(w, axis, kw, x, h) * phi.get(x);
        sum += a + b;
        scale += a.abs() + b.abs();
    }
    relative(sum, scale)
}

/// Relative defect of the Korn identity
/// `Σ (D_j⁺w_i + D_i⁺w_j)² = 2 Σ (D_j⁺w_i)² + 2 Σ (D⁻·w)²` over `Ω_h`.
pub fn korn_defect(w: &VectorField, topo: &GridTopology) -> f64 {
    let h = topo.h;
    let (mut lhs, mut grad, mut div) = (0.0, 0.0, 0.0);
    for &x in topo.omega.points() {
        let mut d = [[0.0; 3]; 3];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = diff(w.component(i), j, DiffKind::Forward, x, h);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                lhs += (d[i][j] + d[j][i]).powi(2);
                grad += d[i][j] * d[i][j];
            }
        }
        div += divergence(w, DiffKind::Backward, x, h).powi(2);
    }
    let rhs = 2.0 * grad + 2.0 * div;
    relative(lhs - rhs, lhs.abs().max(rhs.abs()))
}

/// `(‖A_h^k φ‖_{p,hZ³} − ‖φ‖_{p,Ω_h}) / ‖φ‖_{p,Ω_h}`, nonpositive up to
/// rounding.
pub fn contraction_excess(phi: &ScalarField, k: usize, p: f64, h: f64) -> f64 {
    let before = norm_p(phi, p, h);
    let after = norm_p(&local_average(phi, k), p, h);
    if before > 0.0 { (after - before) / before } else { after }
}

/// Empirical Poincaré ratio
/// `(Σ_j Σ_{Ω_h°∩G^j} |φ − [φ]^j|²)^{1/2} / ‖Dφ‖_{Ω_h\∂Ω_h}`, with `[φ]^j` the
/// mean over `Ω_h ∩ G^j`.
pub fn poincare_ratio(phi: &ScalarField, topo: &GridTopology) -> f64 {
    let h = topo.h;
    let mut sums = [0.0; 8];
    let mut counts = [0usize; 8];
    for (i, &x) in topo.omega.points().iter().enumerate() {
        let c = parity_class(x) as usize - 1;
        sums[c] += phi.values()[i];
        counts[c] += 1;
    }
    let mut num = 0.0;
    for &i in &topo.core {
        let x = topo.omega.point(i);
        let c = parity_class(x) as usize - 1;
        num += (phi.values()[i] - sums[c] / counts[c] as f64).powi(2);
    }
    let mut den = 0.0;
    for &i in &topo.interior {
        let x = topo.omega.point(i);
        for j in 0..3 {
            den += diff(phi, j, DiffKind::Symmetric, x, h).powi(2);
        }
    }
    if den == 0.0 { 0.0 } else { (num / den).sqrt() }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LemmaReport {
    pub trials: usize,
    pub summation_by_parts: f64,
    pub korn: f64,
    pub contraction: f64,
    pub poincare_ratio_min: f64,
    pub poincare_ratio_max: f64,
}

#[derive(Serialize)]
struct Reproduction<'a> {
    lemma: &'a str,
    seed: u64,
    trial: usize,
    h: f64,
    detail: String,
    points: &'a [Point],
    values: Vec<Vec<f64>>,
}

fn violation(lemma: &str, error: f64, seed: u64, trial: usize, h: f64, detail: String, fields: &[&ScalarField]) -> Error {
    let points = fields[0].support().points();
    let rep = Reproduction {
        lemma,
        seed,
        trial,
        h,
        detail,
        points,
        values: fields.iter().map(|f| f.values().to_vec()).collect(),
    };
    Error::LemmaViolation {
        lemma: lemma.into(),
        error,
        reproduction: serde_json::to_string(&rep).unwrap_or_default(),
    }
}

/// Runs the identity lemmas on `trials` random fields drawn from `seed`:
/// both summation-by-parts forms, the Korn identity and the averaging
/// contraction for `p ∈ {1, 2, ∞}`. The Poincaré ratio is only recorded.
pub fn verify_lemmas(topo: &GridTopology, trials: usize, seed: u64) -> Result<LemmaReport> {
    let h = topo.h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = LemmaReport {
        trials,
        poincare_ratio_min: f64::INFINITY,
        ..Default::default()
    };
    for trial in 0..trials {
        let w = random_scalar(&topo.omega, Extension::Zero, &mut rng, -1.0, 1.0);
        let phi = random_scalar(&topo.omega, Extension::Zero, &mut rng, -1.0, 1.0);
        for axis in 0..3 {
            for central in [false, true] {
                let e = summation_by_parts_defect(&w, &phi, axis, central, h);
                rep.summation_by_parts = rep.summation_by_parts.max(e);
                if e > LEMMA_TOL {
                    let form = if central { "central" } else { "forward/backward" };
                    return Err(violation(
                        "summation by parts",
                        e,
                        seed,
                        trial,
                        h,
                        format!("axis {axis}, {form} form"),
                        &[&w, &phi],
                    ));
                }
            }
        }

        let v = random_vector_zero_boundary(topo, &mut rng, 1.0);
        let e = korn_defect(&v, topo);
        rep.korn = rep.korn.max(e);
        if e > LEMMA_TOL {
            return Err(violation(
                "Korn identity",
                e,
                seed,
                trial,
                h,
                String::new(),
                &[v.component(0), v.component(1), v.component(2)],
            ));
        }

        let k = rng.random_range(0..=3usize);
        for p in [1.0, 2.0, f64::INFINITY] {
            let e = contraction_excess(&phi, k, p, h);
            rep.contraction = rep.contraction.max(e);
            if e > LEMMA_TOL {
                return Err(violation(
                    "averaging contraction",
                    e,
                    seed,
                    trial,
                    h,
                    format!("k = {k}, p = {p}"),
                    &[&phi],
                ));
            }
        }

        let r = poincare_ratio(&phi, topo);
        rep.poincare_ratio_min = rep.poincare_ratio_min.min(r);
        rep.poincare_ratio_max = rep.poincare_ratio_max.max(r);
    }
    if trials == 0 {
        rep.poincare_ratio_min = 0.0;
    }
    Ok(rep)
}

/// One accepted step. `n` is the new time level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub n: usize,
    pub t: f64,
    /// `‖√η^n u^n‖²`
    pub kinetic: f64,
    /// `Σ_{m≤n} Σ_j ‖D_j⁺u^m‖² τ`
    pub dissipation_sum: f64,
    /// `Σ_{Ω̃_h} η^n h³`
    pub mass: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Cap index used to produce this level.
    pub k_n: usize,
    pub cfl_min: f64,
    pub energy_res: f64,
    pub max_div: f64,
    pub grad_q: f64,
}

pub const LEDGER_HEADER: &str = "n,t,kinetic,dissipation_sum,mass,eta_min,eta_max,k_n,cfl_min,energy_res,max_div,grad_q";

/// Shortest decimal that reads back to the same binary64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl LedgerRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            fmt_f64(self.t),
            fmt_f64(self.kinetic),
            fmt_f64(self.dissipation_sum),
            fmt_f64(self.mass),
            fmt_f64(self.eta_min),
            fmt_f64(self.eta_max),
            self.k_n,
            fmt_f64(self.cfl_min),
            fmt_f64(self.energy_res),
            fmt_f64(self.max_div),
            fmt_f64(self.grad_q),
        )
    }
}

/// Data entering the cumulative bounds on kinetic energy and dissipation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundConstants {
    pub rho_lower: f64,
    pub rho_upper: f64,
    pub mu_min: f64,
    pub t_final: f64,
    /// `‖v⁰‖²_{L²(Ω)}`
    pub v0_sq: f64,
    /// `‖f‖²_{L²([0,T+1]; L²(Ω))}`
    pub f_sq: f64,
}

impl BoundConstants {
    fn data(&self) -> f64 {
        self.rho_upper * (self.v0_sq + self.f_sq)
    }

    fn growth(&self) -> f64 {
        1.0 + 2.0 * (2.0 * self.t_final + 2.0).exp()
    }

    /// Upper bound on `‖√η u‖²` at every level.
    pub fn kinetic_bound(&self) -> f64 {
        self.growth() * self.data()
    }

    /// Upper bound on `2μ_* Σ_m Σ_j ‖D_j⁺u^m‖² τ`.
    pub fn dissipation_bound(&self) -> f64 {
        (1.0 + self.growth() * (self.t_final + 1.0)) * self.data()
    }
}

/// Per-step tolerances of the ledger checks.
pub const ENERGY_TOL: f64 = 1e-9;
pub const DIV_TOL: f64 = 1e-8;
pub const BOUNDS_TOL: f64 = 1e-13;

#[derive(Clone, Debug, Serialize)]
pub struct LedgerMeta {
    pub h: f64,
    pub alpha: f64,
    pub tau: f64,
    pub t_final: f64,
    pub steps: usize,
    pub constants: BoundConstants,
    pub kinetic_bound: f64,
    pub dissipation_bound: f64,
    pub initial_kinetic: f64,
    pub initial_mass: f64,
}

#[derive(Clone, Debug)]
pub struct EstimateLedger {
    pub meta: LedgerMeta,
    pub rows: Vec<LedgerRow>,
}

impl EstimateLedger {
    pub fn new(meta: LedgerMeta) -> Self {
        Self { meta, rows: Vec::new() }
    }

    fn previous_kinetic(&self) -> f64 {
        self.rows.last().map_or(self.meta.initial_kinetic, |r| r.kinetic)
    }

    /// Every estimate the row violates; `u_sq` is `‖u^n‖²_{Ω_h}`.
    pub fn violations(&self, row: &LedgerRow, u_sq: f64) -> Vec<String> {
        let c = &self.meta.constants;
        let mut out = Vec::new();
        if row.eta_min < c.rho_lower - BOUNDS_TOL || row.eta_max > c.rho_upper + BOUNDS_TOL {
            out.push(format!(
                "density range [{}, {}] leaves [{}, {}]",
                row.eta_min, row.eta_max, c.rho_lower, c.rho_upper
            ));
        }
        if row.cfl_min < 0.0 {
            out.push(format!("negative Lax-Friedrichs coefficient {:e}", row.cfl_min));
        }
        let energy_scale = 1.0 + self.previous_kinetic();
        if row.energy_res > ENERGY_TOL * energy_scale {
            out.push(format!("energy residual {:e} above {:e}", row.energy_res, ENERGY_TOL * energy_scale));
        }
        let div_scale = 1.0 + (u_sq).sqrt();
        if row.max_div > DIV_TOL * div_scale {
            out.push(format!("divergence {:e} above {:e}", row.max_div, DIV_TOL * div_scale));
        }
        let slack = 1e-12 * (1.0 + row.kinetic);
        if c.rho_lower * u_sq > row.kinetic + slack {
            out.push(format!("rho_* |u|^2 = {:e} exceeds kinetic {:e}", c.rho_lower * u_sq, row.kinetic));
        }
        if row.kinetic > self.meta.kinetic_bound {
            out.push(format!("kinetic {:e} above cumulative bound {:e}", row.kinetic, self.meta.kinetic_bound));
        }
        let diss = 2.0 * c.mu_min * row.dissipation_sum;
        if diss > self.meta.dissipation_bound {
            out.push(format!("dissipation {:e} above cumulative bound {:e}", diss, self.meta.dissipation_bound));
        }
        out
    }

    /// Appends the row after checking it.
    pub fn push(&mut self, row: LedgerRow, u_sq: f64) -> Result<()> {
        let v = self.violations(&row, u_sq);
        self.rows.push(row);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Contract {
                step: row.n,
                what: v.join("; "),
            })
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(LEDGER_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.csv());
        }
        s
    }

    pub fn meta_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("ledger metadata serializes")
    }

    /// Writes `ledger.csv` and the `ledger.meta.json` sidecar into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("ledger.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let meta = dir.join("ledger.meta.json");
        std::fs::write(&meta, self.meta_json()).map_err(|e| Error::io(&meta, e))?;
        Ok(())
    }
}

/// One stored time level `n ≥ 1`.
#[derive(Clone, Debug)]
pub struct Level {
    pub eta: ScalarField,
    pub u: VectorField,
    pub q: ScalarField,
}

/// Levels `1..=T_τ` of a run, with what the step functions need.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub h: f64,
    pub tau: f64,
    pub t_final: f64,
    pub rho_lower: f64,
    pub levels: Vec<Level>,
}

/// Piecewise-constant reconstruction of a trajectory: the value at `(t, x)`
/// is that of level `n+1` at `y` for `t ∈ (nτ, nτ+τ]` and `x ∈ C_h⁺(y)`;
/// `t = 0` reads level 1.
#[derive(Clone, Copy, Debug)]
pub struct StepFunctionSampler<'a> {
    traj: &'a Trajectory,
}

impl<'a> StepFunctionSampler<'a> {
    pub fn new(traj: &'a Trajectory) -> Self {
        Self { traj }
    }

    /// Index into `levels` for time `t`.
    pub fn level_index(&self, t: f64) -> usize {
        let n = self.traj.levels.len();
        if t <= 0.0 || n == 0 {
            return 0;
        }
        let k = (t / self.traj.tau).ceil() as usize;
        k.saturating_sub(1).min(n - 1)
    }

    /// Grid point `y` with `x ∈ C_h⁺(y)`.
    pub fn cell(&self, x: [f64; 3]) -> Point {
        let h = self.traj.h;
        [
            (x[0] / h).floor() as i64,
            (x[1] / h).floor() as i64,
            (x[2] / h).floor() as i64,
        ]
    }

    pub fn level(&self, t: f64) -> &'a Level {
        &self.traj.levels[self.level_index(t)]
    }

    /// `v_δ(t, x)`
    pub fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        self.level(t).u.get(self.cell(x))
    }

    /// `ρ_δ(t, x)`
    pub fn density(&self, t: f64, x: [f64; 3]) -> f64 {
        let y = self.cell(x);
        let eta = &self.level(t).eta;
        if eta.support().contains(y) { eta.get(y) } else { self.traj.rho_lower }
    }

    /// `w^i_δ(t, x) = D_i⁺u(y)`
    pub fn strain(&self, i: usize, t: f64, x: [f64; 3]) -> [f64; 3] {
        let y = self.cell(x);
        let u = &self.level(t).u;
        let h = self.traj.h;
        [
            diff(u.component(0), i, DiffKind::Forward, y, h),
            diff(u.component(1), i, DiffKind::Forward, y, h),
            diff(u.component(2), i, DiffKind::Forward, y, h),
        ]
    }
}

/// Subintervals `(a, b]` of `[0, T]` on which the step functions are
/// constant, truncated at `T`.
fn time_cells(tau: f64, t_final: f64, steps: usize) -> Vec<(f64, f64)> {
    (0..steps)
        .map(|n| (n as f64 * tau, ((n + 1) as f64 * tau).min(t_final)))
        .filter(|(a, b)| b > a)
        .collect()
}

/// `∫ρ⁰φ(0) + ∫₀ᵀ∫ (ρ_δ ∂_tφ + ρ_δ v_δ·∇φ)`, midpoint rule on every cell
/// `C_h⁺(y)`, `y ∈ Ω̃_h`, and every time step. `φ` must vanish outside the
/// padded box. `rho0` is the initial density with its constant extension.
pub fn weak_transport_residual(
    traj: &Trajectory,
    topo: &GridTopology,
    rho0: &dyn Fn([f64; 3]) -> f64,
    phi: &Expr,
) -> f64 {
    let h = topo.h;
    let h3 = h * h * h;
    let s = StepFunctionSampler::new(traj);
    let dt = phi.derivative(Var::T);
    let grad = [phi.derivative(Var::X), phi.derivative(Var::Y), phi.derivative(Var::Z)];
    let mut total = 0.0;
    for &y in topo.tilde.points() {
        let c = topo.cell_center(y);
        total += rho0(c) * phi.eval(c, 0.0) * h3;
    }
    for (a, b) in time_cells(traj.tau, traj.t_final, traj.levels.len()) {
        let t = 0.5 * (a + b);
        let w = (b - a) * h3;
        let level = s.level(t);
        for (i, &y) in topo.tilde.points().iter().enumerate() {
            let c = topo.cell_center(y);
            let rho = level.eta.values()[i];
            let v = level.u.get(y);
            let mut integrand = dt.eval(c, t);
            for j in 0..3 {
                if v[j] != 0.0 {
                    integrand += v[j] * grad[j].eval(c, t);
                }
            }
            total += rho * integrand * w;
        }
    }
    total
}

/// A divergence-free test field `ϕ = ∇×ψ` with its derivatives, all symbolic.
#[derive(Clone, Debug)]
pub struct SolenoidalTest {
    pub phi: [Expr; 3],
    /// `grad[j][i] = ∂_j ϕ_i`
    pub grad: [[Expr; 3]; 3],
    pub dt: [Expr; 3],
}

impl SolenoidalTest {
    pub fn from_potential(psi: &[Expr; 3]) -> Self {
        let d = |e: &Expr, v: Var| e.derivative(v);
        let phi = [
            d(&psi[2], Var::Y) - d(&psi[1], Var::Z),
            d(&psi[0], Var::Z) - d(&psi[2], Var::X),
            d(&psi[1], Var::X) - d(&psi[0], Var::Y),
        ];
        let vars = [Var::X, Var::Y, Var::Z];
        let grad = vars.map(|v| [d(&phi[0], v), d(&phi[1], v), d(&phi[2], v)]);
        let dt = [d(&phi[0], Var::T), d(&phi[1], Var::T), d(&phi[2], Var::T)];
        Self { phi, grad, dt }
    }

    pub fn eval(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        [self.phi[0].eval(x, t), self.phi[1].eval(x, t), self.phi[2].eval(x, t)]
    }

    pub fn divergence(&self, x: [f64; 3], t: f64) -> f64 {
        (0..3).map(|i| self.grad[i][i].eval(x, t)).sum()
    }

    /// Grid sample at time `t` on `set`.
    pub fn sample(&self, set: &Arc<PointSet>, h: f64, t: f64) -> VectorField {
        VectorField::from_fn(set.clone(), Extension::Zero, |p| {
            self.eval([p[0] as f64 * h, p[1] as f64 * h, p[2] as f64 * h], t)
        })
    }
}

/// Divergence tolerance of a test field at the quadrature points.
pub const TEST_DIV_TOL: f64 = 1e-12;

/// Left side of the weak momentum equation on the step functions:
/// `∫ρ⁰v⁰·ϕ(0) + ∫∫ ρv·∂_tϕ + Σ_j ρ v_j v·∂_jϕ − μ(ρ)(w^j + ∇v_j)·∂_jϕ + ρf·ϕ`,
/// midpoint rule on the cells of `Ω̃_h` per time step.
pub fn weak_momentum_residual(
    traj: &Trajectory,
    topo: &GridTopology,
    rho0: &dyn Fn([f64; 3]) -> f64,
    v0: &dyn Fn([f64; 3]) -> [f64; 3],
    force: &dyn Fn([f64; 3], f64) -> [f64; 3],
    viscosity: &ViscosityLaw,
    test: &SolenoidalTest,
) -> Result<f64> {
    let h = topo.h;
    let h3 = h * h * h;
    let s = StepFunctionSampler::new(traj);
    let mut total = 0.0;
    let mut max_div: f64 = 0.0;
    for &y in topo.tilde.points() {
        let c = topo.cell_center(y);
        let p0 = test.eval(c, 0.0);
        max_div = max_div.max(test.divergence(c, 0.0).abs());
        if p0 == [0.0; 3] {
            continue;
        }
        let v = v0(c);
        total += rho0(c) * (v[0] * p0[0] + v[1] * p0[1] + v[2] * p0[2]) * h3;
    }
    for (a, b) in time_cells(traj.tau, traj.t_final, traj.levels.len()) {
        let t = 0.5 * (a + b);
        let w = (b - a) * h3;
        let level = s.level(t);
        for (i, &y) in topo.tilde.points().iter().enumerate() {
            let c = topo.cell_center(y);
            let ph = test.eval(c, t);
            let g: [[f64; 3]; 3] = std::array::from_fn(|j| std::array::from_fn(|k| test.grad[j][k].eval(c, t)));
            if ph == [0.0; 3] && g.iter().all(|r| *r == [0.0; 3]) {
                continue;
            }
            max_div = max_div.max((g[0][0] + g[1][1] + g[2][2]).abs());
            let rho = level.eta.values()[i];
            let v = level.u.get(y);
            let f = force(c, t);
            let dtp = [test.dt[0].eval(c, t), test.dt[1].eval(c, t), test.dt[2].eval(c, t)];
            let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let mut integrand = rho * dot(v, dtp) + rho * dot(f, ph);
            if v != [0.0; 3] || topo.omega.contains(y) {
                let mu = viscosity.eval(rho);
                // D_j⁺u at y, for all j
                let wj: [[f64; 3]; 3] = std::array::from_fn(|j| s.strain(j, t, c));
                for j in 0..3 {
                    integrand += rho * v[j] * dot(v, g[j]);
                    // (∇v_j)_i = D_i⁺u_j
                    let grad_vj = [wj[0][j], wj[1][j], wj[2][j]];
                    let sym = [wj[j][0] + grad_vj[0], wj[j][1] + grad_vj[1], wj[j][2] + grad_vj[2]];
                    integrand -= mu * dot(sym, g[j]);
                }
            }
            total += integrand * w;
        }
    }
    if max_div > TEST_DIV_TOL {
        return Err(Error::NotDivergenceFree { max_div });
    }
    Ok(total)
}

/// `‖v_δ^{coarse} − v_δ^{fine}‖_{L²([0,T]; L²)}`: the coarse step function is
/// sampled at the cell centres of the fine grid on the union of both time
/// partitions.
pub fn l2_time_space_difference(coarse: &Trajectory, fine: &Trajectory, fine_topo: &GridTopology) -> f64 {
    let t_final = fine.t_final.min(coarse.t_final);
    let mut breaks: Vec<f64> = (0..=coarse.levels.len())
        .map(|n| n as f64 * coarse.tau)
        .chain((0..=fine.levels.len()).map(|n| n as f64 * fine.tau))
        .filter(|&t| t < t_final)
        .collect();
    breaks.push(t_final);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let (sc, sf) = (StepFunctionSampler::new(coarse), StepFunctionSampler::new(fine));
    let h3 = fine_topo.h.powi(3);
    let mut total = 0.0;
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let t = 0.5 * (a + b);
        let mut s = 0.0;
        for &y in fine_topo.tilde.points() {
            let c = fine_topo.cell_center(y);
            let (vc, vf) = (sc.velocity(t, c), sf.velocity(t, c));
            s += (vc[0] - vf[0]).powi(2) + (vc[1] - vf[1]).powi(2) + (vc[2] - vf[2]).powi(2);
        }
        total += s * h3 * (b - a);
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_vector;
    use crate::grid::{DomainSpec, Shape, build_topology};

    fn topo8() -> GridTopology {
        // 8 points per axis
        build_topology(&DomainSpec::new(Shape::unit_cube(), 0.9), 1.0 / 12.0).unwrap()
    }

    #[test]
    fn lemma_suite_passes() {
        let t = topo8();
        let rep = verify_lemmas(&t, 5, 7).unwrap();
        assert!(rep.summation_by_parts <= LEMMA_TOL);
        assert!(rep.korn <= LEMMA_TOL);
        assert!(rep.poincare_ratio_max.is_finite());
    }

    #[test]
    fn constant_field_gives_zero_korn_sides() {
        let t = topo8();
        let w = VectorField::zeros(t.omega.clone(), Extension::Zero);
        assert_eq!(korn_defect(&w, &t), 0.0);
    }

    #[test]
    fn sampler_hits_grid_values() {
        let t = topo8();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let levels: Vec<Level> = (0..3)
            .map(|_| Level {
                eta: random_scalar(&t.tilde, Extension::Constant(1.0), &mut rng, 1.0, 2.0),
                u: random_vector(&t.omega, Extension::Zero, &mut rng, 1.0),
                q: ScalarField::zeros(t.omega.clone(), Extension::Zero),
            })
            .collect();
        let traj = Trajectory {
            h: t.h,
            tau: 0.1,
            t_final: 0.3,
            rho_lower: 1.0,
            levels,
        };
        let s = StepFunctionSampler::new(&traj);
        assert_eq!(s.level_index(0.0), 0);
        assert_eq!(s.level_index(0.1), 0);
        assert_eq!(s.level_index(0.1000001), 1);
        for (n, level) in traj.levels.iter().enumerate() {
            let tm = (n as f64 + 0.5) * 0.1;
            for &y in t.omega.points() {
                assert_eq!(s.velocity(tm, t.cell_center(y)), level.u.get(y));
            }
        }
    }

    #[test]
    fn ledger_csv_round_trips() {
        let row = LedgerRow {
            n: 3,
            t: 0.1 + 0.2,
            kinetic: 1.0 / 3.0,
            dissipation_sum: 1e-300,
            mass: 2.5,
            eta_min: 1.0,
            eta_max: 2.0,
            k_n: 0,
            cfl_min: 1.0 / 7.0,
            energy_res: -1.25e-17,
            max_div: 0.0,
            grad_q: 12.0,
        };
        let line = row.csv();
        let vals: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(vals[1], 0.1 + 0.2);
        assert_eq!(vals[2], 1.0 / 3.0);
        assert_eq!(vals[3], 1e-300);
        assert_eq!(vals[9], -1.25e-17);
    }
}
