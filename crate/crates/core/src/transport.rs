//! Explicit Lax–Friedrichs density step on `Ω̃_h`.
//!
//! ```text
//! η'(x) = η(x)/7 + Σ_j (1/7 + τ/(2h) ũ_j(x−he^j)) η(x−he^j)
//!               + Σ_j (1/7 − τ/(2h) ũ_j(x+he^j)) η(x+he^j)
//! ```
//! on `Ω̃_h \ ∂Ω̃_h`, with `∂Ω̃_h` held at the lower density bound.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{GridTopology, Point, shift};

/// Tolerance on the maximum principle.
pub const BOUNDS_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityBounds {
    pub lower: f64,
    pub upper: f64,
}

impl DensityBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && upper >= lower && upper.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "density bounds need 0 < lower <= upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }
}

/// Outcome of the CFL check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CflReport {
    /// Smallest of the seven weights over every stencil.
    pub min_coeff: f64,
    /// `max_x |1 − Σ weights(x)| = τ · max_x |D·ũ(x)|` with the `1/(2h)` divergence.
    pub weight_sum_defect: f64,
}

impl CflReport {
    pub fn passes(&self) -> bool {
        self.min_coeff >= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportStepReport {
    pub min_coeff: f64,
    pub weight_sum_defect: f64,
    /// `Σ_{x ∈ Ω̃_h\∂Ω̃_h} D·(η ũ)(x) τ h³`.
    pub mass_flux: f64,
    pub eta_min: f64,
    pub eta_max: f64,
}

/// Minimum Lax–Friedrichs weight and weight-sum defect for a capped velocity.
pub fn check_cfl(u_tilde: &VectorField, tau: f64, h: f64) -> CflReport {
    let c = tau / (2.0 * h);
    let mut max_abs: f64 = 0.0;
    for i in 0..u_tilde.support().len() {
        let v = u_tilde.value_at(i);
        for comp in v {
            max_abs = max_abs.max(comp.abs());
        }
    }
    let min_coeff = (1.0 / 7.0f64).min(1.0 / 7.0 - c * max_abs);

    let mut defect: f64 = 0.0;
    if let Some((lo, hi)) = u_tilde.support().bounds() {
        for x0 in lo[0] - 1..=hi[0] + 1 {
            for x1 in lo[1] - 1..=hi[1] + 1 {
                for x2 in lo[2] - 1..=hi[2] + 1 {
                    let x = [x0, x1, x2];
                    let mut s = 0.0;
                    for j in 0..3 {
                        let comp = u_tilde.component(j);
                        s += comp.get(shift(x, j, -1)) - comp.get(shift(x, j, 1));
                    }
                    defect = defect.max((c * s).abs());
                }
            }
        }
    }
    CflReport {
        min_coeff,
        weight_sum_defect: defect,
    }
}

/// The six off-centre weights at `x` as `(point, weight)`.
#[inline]
fn weights(u_tilde: &VectorField, c: f64, x: Point) -> [(Point, f64); 6] {
    let mut out = [([0i64; 3], 0.0); 6];
    for j in 0..3 {
        let lo = shift(x, j, -1);
        let hi = shift(x, j, 1);
        let comp = u_tilde.component(j);
        out[2 * j] = (lo, 1.0 / 7.0 + c * comp.get(lo));
        out[2 * j + 1] = (hi, 1.0 / 7.0 - c * comp.get(hi));
    }
    out
}

/// One density step. `eta` lives on `Ω̃_h` and is read with constant
/// extension; `u_tilde` is read with zero extension.
pub fn density_step(
    eta: &ScalarField,
    u_tilde: &VectorField,
    tau: f64,
    h: f64,
    bounds: DensityBounds,
    topo: &GridTopology,
) -> Result<(ScalarField, TransportStepReport)> {
    let cfl = check_cfl(u_tilde, tau, h);
    if !cfl.passes() {
        return Err(Error::CflViolation {
            min_coeff: cfl.min_coeff,
        });
    }
    let set = topo.tilde.clone();
    if eta.support().points() != set.points() {
        return Err(Error::InvalidParams("density must live on the padded grid".into()));
    }
    let c = tau / (2.0 * h);
    let mut next = Vec::with_capacity(set.len());
    let mut flux_sum = 0.0;
    for (i, &x) in set.points().iter().enumerate() {
        if topo.tilde_boundary[i] {
            next.push(bounds.lower);
            continue;
        }
        let mut v = eta.values()[i] / 7.0;
        for (y, w) in weights(u_tilde, c, x) {
            v += w * eta.get(y);
        }
        let mut div = 0.0;
        for j in 0..3 {
            let comp = u_tilde.component(j);
            let (lo, hi) = (shift(x, j, -1), shift(x, j, 1));
            div += eta.get(hi) * comp.get(hi) - eta.get(lo) * comp.get(lo);
        }
        flux_sum += div / (2.0 * h);
        next.push(v);
    }
    let out = ScalarField::new(set, next, eta.extension());
    let (eta_min, eta_max) = (out.min(), out.max());
    if !(eta_min >= bounds.lower - BOUNDS_TOL && eta_max <= bounds.upper + BOUNDS_TOL) {
        return Err(Error::BoundsViolation {
            lower: bounds.lower,
            upper: bounds.upper,
            min: eta_min,
            max: eta_max,
        });
    }
    Ok((
        out,
        TransportStepReport {
            min_coeff: cfl.min_coeff,
            weight_sum_defect: cfl.weight_sum_defect,
            mass_flux: flux_sum * tau * h * h * h,
            eta_min,
            eta_max,
        },
    ))
}

/// One-step flux-corrected `L^p` budget
/// `‖η'‖_p^p − ‖η‖_p^p + Σ_{x interior} D·(|η|^p ũ)(x) τ h³` over `Ω̃_h`.
/// Nonpositive for accepted steps.
pub fn lp_ledger(
    eta: &ScalarField,
    eta_next: &ScalarField,
    u_tilde: &VectorField,
    p: u32,
    tau: f64,
    h: f64,
    topo: &GridTopology,
) -> f64 {
    let h3 = h * h * h;
    let pow = |v: f64| v.abs().powi(p as i32);
    let before: f64 = eta.values().iter().map(|&v| pow(v)).sum();
    let after: f64 = eta_next.values().iter().map(|&v| pow(v)).sum();
    let mut flux = 0.0;
    for (i, &x) in topo.tilde.points().iter().enumerate() {
        if topo.tilde_boundary[i] {
            continue;
        }
        for j in 0..3 {
            let comp = u_tilde.component(j);
            let (lo, hi) = (shift(x, j, -1), shift(x, j, 1));
            flux += (pow(eta.get(hi)) * comp.get(hi) - pow(eta.get(lo)) * comp.get(lo)) / (2.0 * h);
        }
    }
    (after - before) * h3 + flux * tau * h3
}
