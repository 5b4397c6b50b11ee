//! Implicit velocity–pressure step.
//!
//! At interior points of `Ω_h`, for each component `i`:
//!
//! ```text
//! (η' u'_i − (1/7) Σ_{ω∈B} η u_i(x+hω)) / τ + D·(η ũ) u'_i
//!     + Σ_j ½ (η ũ_j D_j u'_i)(x−he^j) + ½ (η ũ_j D_j u'_i)(x+he^j)
//!     = D⁻·{μ(η') (D⁺u'_i + D_i⁺u')} + η' f_i − D_i q'
//! ```
//!
//! with `u' = 0` on `∂Ω_h` and `D·u' = 0` on `Ω_h`. Central differences here
//! are the `1/(2h)` form. Primes mark the new level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DiffKind, ScalarField, VectorField, diff, divergence, norm3, vector_norm_p};
use crate::grid::{GridTopology, Point, STENCIL, parity_class, shift};
use crate::linalg::{SolveOptions, SolverKind, SparseMatrix, TripletBuilder, solve};
use crate::saddle::SaddleLayout;

pub const SOLVE_TOL: f64 = 1e-10;
pub const DIV_TOL: f64 = 1e-8;
pub const MEAN_TOL: f64 = 1e-10;

/// Piecewise-linear viscosity as a function of density, clamped outside the
/// knot range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct ViscosityLaw {
    knots: Vec<(f64, f64)>,
}

impl ViscosityLaw {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParams("viscosity table needs at least two knots".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidParams(format!(
                    "viscosity knots must have distinct densities, got {} twice",
                    w[0].0
                )));
            }
        }
        if let Some(&(r, m)) = knots.iter().find(|(r, m)| !(r.is_finite() && m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "viscosity must be finite and positive, got mu({r}) = {m}"
            )));
        }
        Ok(Self { knots })
    }

    pub fn constant(mu: f64) -> Result<Self> {
        Self::new(vec![(0.0, mu), (1.0, mu)])
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let k = &self.knots;
        if rho <= k[0].0 {
            return k[0].1;
        }
        if rho >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let j = k.partition_point(|&(r, _)| r <= rho);
        let (r0, m0) = k[j - 1];
        let (r1, m1) = k[j];
        m0 + (m1 - m0) * (rho - r0) / (r1 - r0)
    }

    /// Smallest tabulated value.
    pub fn min(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min)
    }

    /// Largest tabulated value.
    pub fn max(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(0.0, f64::max)
    }

    /// Whether the knots span `[lo, hi]`.
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.knots[0].0 <= lo && self.knots[self.knots.len() - 1].0 >= hi
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }
}

impl TryFrom<Vec<(f64, f64)>> for ViscosityLaw {
    type Error = Error;

    fn try_from(k: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(k)
    }
}

impl From<ViscosityLaw> for Vec<(f64, f64)> {
    fn from(v: ViscosityLaw) -> Self {
        v.knots
    }
}

/// Everything one step consumes.
#[derive(Clone, Copy, Debug)]
pub struct StepInputs<'a> {
    /// `η^n` on `Ω̃_h`.
    pub eta: &'a ScalarField,
    /// `η^{n+1}` on `Ω̃_h`.
    pub eta_next: &'a ScalarField,
    /// `u^n` on `Ω_h`, read with zero extension.
    pub u: &'a VectorField,
    /// Capped velocity `ũ^n`.
    pub u_tilde: &'a VectorField,
    /// `f^{n+1}` on `Ω_h`.
    pub force: &'a VectorField,
    pub viscosity: &'a ViscosityLaw,
    pub tau: f64,
    pub h: f64,
}

#[derive(Clone, Debug)]
pub struct MomentumSystem {
    pub layout: SaddleLayout,
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

/// Linear-algebra side of a solved step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub solver_residual: f64,
    pub max_div: f64,
    pub max_class_mean: f64,
    pub kind: SolverKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentumStepReport {
    pub solver_residual: f64,
    pub energy_residual: f64,
    pub max_div: f64,
    pub grad_q_norm: f64,
}

/// `η ũ_j` at `y`.
#[inline]
fn flux(inp: &StepInputs, j: usize, y: Point) -> f64 {
    inp.eta.get(y) * inp.u_tilde.component(j).get(y)
}

/// `D·(η ũ)(x)` with the `1/(2h)` difference.
pub fn mass_flux_divergence(inp: &StepInputs, x: Point) -> f64 {
    (0..3)
        .map(|j| flux(inp, j, shift(x, j, 1)) - flux(inp, j, shift(x, j, -1)))
        .sum::<f64>()
        / (2.0 * inp.h)
}

pub fn assemble(inp: &StepInputs, topo: &GridTopology) -> Result<MomentumSystem> {
    let layout = SaddleLayout::new(topo);
    let n = layout.dim();
    let a = layout.n_interior();
    let omega = &topo.omega;
    let (h, tau) = (inp.h, inp.tau);
    let mut trip = TripletBuilder::with_capacity(n, n, 40 * 3 * a + 8 * n);

    let push_u = |trip: &mut TripletBuilder, row: usize, comp: usize, p: Point, v: f64| {
        if let Some(i) = omega.index_of(p)
            && let Some(col) = layout.u_col(comp, i)
        {
            trip.push(row, col, v);
        }
    };

    let mu_at = |p: Point| inp.viscosity.eval(inp.eta_next.get(p));
    for (k, &xi) in topo.interior.iter().enumerate() {
        let x = omega.point(xi);
        let eta_next = inp.eta_next.get(x);
        let div_flux = mass_flux_divergence(inp, x);
        let mu_x = mu_at(x);
        for i in 0..3 {
            let row = i * a + k;
            push_u(&mut trip, row, i, x, eta_next / tau + div_flux);
            for j in 0..3 {
                let (xm, xp) = (shift(x, j, -1), shift(x, j, 1));
                let am = flux(inp, j, xm) / (4.0 * h);
                let ap = flux(inp, j, xp) / (4.0 * h);
                push_u(&mut trip, row, i, x, am - ap);
                push_u(&mut trip, row, i, shift(x, j, -2), -am);
                push_u(&mut trip, row, i, shift(x, j, 2), ap);

                // −(1/h) [μ(x) S_ij(x) − μ(x−he^j) S_ij(x−he^j)],
                // S_ij(y) = (u_i(y+he^j) − u_i(y) + u_j(y+he^i) − u_j(y)) / h
                let h2 = h * h;
                for (y, sign) in [(x, -1.0), (xm, 1.0)] {
                    let c = sign * if y == x { mu_x } else { mu_at(y) } / h2;
                    push_u(&mut trip, row, i, shift(y, j, 1), c);
                    push_u(&mut trip, row, i, y, -c);
                    push_u(&mut trip, row, j, shift(y, i, 1), c);
                    push_u(&mut trip, row, j, y, -c);
                }
            }
        }
    }
    layout.push_gradient(topo, 1.0 / (2.0 * h), &mut trip);
    layout.push_constraints(topo, 1.0 / (2.0 * h), &mut trip);
    let matrix = trip.build();
    if matrix.n_rows() != n || matrix.n_cols() != n {
        return Err(Error::AssemblyShape(format!(
            "{}x{} matrix for {n} unknowns",
            matrix.n_rows(),
            matrix.n_cols()
        )));
    }

    let rhs = layout.rhs(|comp, k| {
        let x = omega.point(topo.interior[k]);
        let carried: f64 = STENCIL
            .iter()
            .map(|w| {
                let y = [x[0] + w[0], x[1] + w[1], x[2] + w[2]];
                inp.eta.get(y) * inp.u.component(comp).get(y)
            })
            .sum();
        carried / (7.0 * tau) + inp.eta_next.get(x) * inp.force.component(comp).get(x)
    });
    if rhs.len() != n {
        return Err(Error::AssemblyShape(format!("rhs of length {} for {n} unknowns", rhs.len())));
    }
    Ok(MomentumSystem { layout, matrix, rhs })
}

/// Solves an assembled step and checks the linear contracts.
pub fn solve_step(
    system: &MomentumSystem,
    topo: &GridTopology,
    kind: Option<SolverKind>,
) -> Result<(VectorField, ScalarField, SolveReport)> {
    let mut opts = SolveOptions::new(SOLVE_TOL, 20);
    opts.kind = kind;
    let out = solve(
        &system.matrix,
        &system.rhs,
        topo.omega.len(),
        &system.matrix.diagonal(),
        &opts,
    )?;
    let (u, q) = system.layout.split(topo, &out.x);
    let max_div = max_divergence(&u, topo);
    let max_class_mean = class_means(&q, topo).iter().fold(0.0, |m: f64, s| m.max(s.abs()));
    let scale = 1.0 + vector_norm_p(&u, 2.0, topo.h);
    if max_div > DIV_TOL * scale {
        return Err(Error::Contract {
            step: 0,
            what: format!("max |div u| = {max_div:e} exceeds {:e}", DIV_TOL * scale),
        });
    }
    let q_scale = 1.0 + q.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if max_class_mean > MEAN_TOL * q_scale {
        return Err(Error::Contract {
            step: 0,
            what: format!("pressure class mean {max_class_mean:e} does not vanish"),
        });
    }
    Ok((
        u,
        q,
        SolveReport {
            solver_residual: out.relative_residual,
            max_div,
            max_class_mean,
            kind: out.kind,
        },
    ))
}

/// Assemble, solve and evaluate the step diagnostics.
pub fn step(
    inp: &StepInputs,
    topo: &GridTopology,
    kind: Option<SolverKind>,
) -> Result<(VectorField, ScalarField, MomentumStepReport)> {
    let system = assemble(inp, topo)?;
    let (u, q, rep) = solve_step(&system, topo, kind)?;
    let energy = energy_residual(inp, &u, inp.viscosity.min(), topo);
    Ok((
        u,
        q.clone(),
        MomentumStepReport {
            solver_residual: rep.solver_residual,
            energy_residual: energy,
            max_div: rep.max_div,
            grad_q_norm: grad_q_norm(&q, topo),
        },
    ))
}

/// `max_{x∈Ω_h} |D·u(x)|` with the `1/(2h)` difference.
pub fn max_divergence(u: &VectorField, topo: &GridTopology) -> f64 {
    topo.omega
        .points()
        .iter()
        .map(|&p| divergence(u, DiffKind::Symmetric, p, topo.h).abs())
        .fold(0.0, f64::max)
}

/// `Σ_{Ω_h° ∩ G^i} q` for `i = 1..8`.
pub fn class_means(q: &ScalarField, topo: &GridTopology) -> [f64; 8] {
    let mut s = [0.0; 8];
    for &i in &topo.core {
        s[parity_class(topo.omega.point(i)) as usize - 1] += q.values()[i];
    }
    s
}

/// `‖√η u‖²_{Ω_h}` with `η` read on `Ω̃_h`.
pub fn kinetic(eta: &ScalarField, u: &VectorField, topo: &GridTopology) -> f64 {
    let h3 = topo.h.powi(3);
    topo.omega
        .points()
        .iter()
        .map(|&p| {
            let v = norm3(u.get(p));
            eta.get(p) * v * v
        })
        .sum::<f64>()
        * h3
}

/// `Σ_j ‖D_j⁺ u‖²_{Ω_h}` summed over components.
pub fn dissipation(u: &VectorField, topo: &GridTopology) -> f64 {
    let h = topo.h;
    let mut s = 0.0;
    for &p in topo.omega.points() {
        for i in 0..3 {
            for j in 0..3 {
                let d = diff(u.component(i), j, DiffKind::Forward, p, h);
                s += d * d;
            }
        }
    }
    s * h.powi(3)
}

/// `(η f, u)_{Ω_h}`.
pub fn forcing_work(eta: &ScalarField, f: &VectorField, u: &VectorField, topo: &GridTopology) -> f64 {
    let h3 = topo.h.powi(3);
    topo.omega
        .points()
        .iter()
        .map(|&p| {
            let (fv, uv) = (f.get(p), u.get(p));
            eta.get(p) * (fv[0] * uv[0] + fv[1] * uv[1] + fv[2] * uv[2])
        })
        .sum::<f64>()
        * h3
}

/// One-step energy slack
/// `‖√η' u'‖² − ‖√η u‖² + 2μ_* Σ_j ‖D_j⁺u'‖² τ − 2(η' f, u') τ`, which the
/// scheme keeps nonpositive.
pub fn energy_residual(inp: &StepInputs, u_next: &VectorField, mu_min: f64, topo: &GridTopology) -> f64 {
    kinetic(inp.eta_next, u_next, topo) - kinetic(inp.eta, inp.u, topo)
        + 2.0 * mu_min * dissipation(u_next, topo) * inp.tau
        - 2.0 * forcing_work(inp.eta_next, inp.force, u_next, topo) * inp.tau
}

/// `‖Dq‖_{2, Ω_h\∂Ω_h}` with the `1/(2h)` difference.
pub fn grad_q_norm(q: &ScalarField, topo: &GridTopology) -> f64 {
    let h = topo.h;
    let s: f64 = topo
        .interior
        .iter()
        .map(|&i| {
            let p = topo.omega.point(i);
            (0..3)
                .map(|j| diff(q, j, DiffKind::Symmetric, p, h).powi(2))
                .sum::<f64>()
        })
        .sum();
    (s * h.powi(3)).sqrt()
}

/// `(Dq, φ)_{Ω_h}` for a test field whose nonzero values lie in `Ω_h°`.
pub fn pressure_pairing(q: &ScalarField, phi: &VectorField, topo: &GridTopology) -> Result<f64> {
    let h = topo.h;
    let mut outside = 0;
    let mut s = 0.0;
    for (i, &p) in topo.omega.points().iter().enumerate() {
        let v = phi.get(p);
        if v == [0.0; 3] {
            continue;
        }
        if !topo.omega_core[i] {
            outside += 1;
            continue;
        }
        for (j, vj) in v.iter().enumerate() {
            s += diff(q, j, DiffKind::Symmetric, p, h) * vj;
        }
    }
    if outside > 0 {
        return Err(Error::TestFunctionSupport { count: outside });
    }
    Ok(s * h.powi(3))
}

/// `(‖Dq‖₂, |(Dq, φ)|)` for one level.
pub fn pressure_diagnostics(q: &ScalarField, phi: &VectorField, topo: &GridTopology) -> Result<(f64, f64)> {
    Ok((grad_q_norm(q, topo), pressure_pairing(q, phi, topo)?.abs()))
}

/// The advection pairing `Σ_x N(u)(x)·u(x) h³` evaluated from the stencil,
/// and the value `½ Σ_x D·(ηũ)(x)|u(x)|² h³` it must equal.
pub fn advection_pairing(inp: &StepInputs, u: &VectorField, topo: &GridTopology) -> (f64, f64) {
    let h = inp.h;
    let mut direct = 0.0;
    let mut identity = 0.0;
    for &xi in &topo.interior {
        let x = topo.omega.point(xi);
        let uv = u.get(x);
        let div = mass_flux_divergence(inp, x);
        identity += 0.5 * div * (uv[0] * uv[0] + uv[1] * uv[1] + uv[2] * uv[2]);
        for i in 0..3 {
            let ui = u.component(i);
            let mut n = div * uv[i];
            for j in 0..3 {
                let (xm, xp) = (shift(x, j, -1), shift(x, j, 1));
                n += 0.5 * flux(inp, j, xm) * diff(ui, j, DiffKind::Symmetric, xm, h);
                n += 0.5 * flux(inp, j, xp) * diff(ui, j, DiffKind::Symmetric, xp, h);
            }
            direct += n * uv[i];
        }
    }
    let h3 = h.powi(3);
    (direct * h3, identity * h3)
}
