//! Discrete Helmholtz–Hodge decomposition `u = w + Dφ` with the central
//! difference `D`.
//!
//! `w` vanishes on `∂Ω_h` and is divergence free on `Ω_h`; the identity holds
//! on `Ω_h \ ∂Ω_h`; `φ` has zero sum over each `Ω_h° ∩ G^i`. `w` is the
//! discrete projection `P_h u`.

use crate::error::{Error, Result};
use crate::field::{DiffKind, ScalarField, VectorField, divergence, vector_norm_p};
use crate::grid::{GridTopology, parity_class, shift};
use crate::linalg::{SolveOptions, SolverKind, SparseMatrix, TripletBuilder, solve};
use crate::saddle::SaddleLayout;

const SOLVE_TOL: f64 = 1e-12;
const CONTRACT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct HodgeDecomposition {
    /// Divergence-free part, zero on `∂Ω_h`.
    pub w: VectorField,
    /// Potential on `Ω_h`.
    pub phi: ScalarField,
}

/// Maximum absolute violation of each defining condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HodgeResiduals {
    pub divergence: f64,
    pub reconstruction: f64,
    pub boundary: f64,
    pub class_means: f64,
}

impl HodgeResiduals {
    pub fn max(&self) -> f64 {
        self.divergence
            .max(self.reconstruction)
            .max(self.boundary)
            .max(self.class_means)
    }
}

/// The decomposition system on `topo`.
pub fn assemble(topo: &GridTopology) -> (SaddleLayout, SparseMatrix) {
    let layout = SaddleLayout::new(topo);
    let n = layout.dim();
    let mut trip = TripletBuilder::with_capacity(n, n, 16 * n);
    let inv_h = 1.0 / topo.h;
    for &i in &topo.interior {
        for comp in 0..3 {
            let c = layout.u_col(comp, i).unwrap();
            trip.push(c, c, 1.0);
        }
    }
    layout.push_gradient(topo, inv_h, &mut trip);
    layout.push_constraints(topo, inv_h, &mut trip);
    (layout, trip.build())
}

/// `P_h u` and its potential, picking the solver by grid size.
pub fn project(u: &VectorField, topo: &GridTopology) -> Result<HodgeDecomposition> {
    project_with(u, topo, None)
}

pub fn project_with(
    u: &VectorField,
    topo: &GridTopology,
    kind: Option<SolverKind>,
) -> Result<HodgeDecomposition> {
    if !u.is_finite() {
        return Err(Error::InvalidParams("field to decompose has non-finite values".into()));
    }
    let (layout, a) = assemble(topo);
    let rhs = layout.rhs(|comp, k| u.component(comp).get(topo.omega.point(topo.interior[k])));
    let mut opts = SolveOptions::new(SOLVE_TOL, 10);
    opts.kind = kind;
    let out = solve(&a, &rhs, topo.omega.len(), &a.diagonal(), &opts)?;
    let (w, phi) = layout.split(topo, &out.x);
    let dec = HodgeDecomposition { w, phi };
    let res = dec.residuals(u, topo);
    let scale = 1.0 + vector_norm_p(u, 2.0, topo.h);
    if res.max() > CONTRACT_TOL * scale {
        return Err(Error::SolveFailure(format!(
            "decomposition residuals {res:?} exceed {:e}",
            CONTRACT_TOL * scale
        )));
    }
    Ok(dec)
}

impl HodgeDecomposition {
    pub fn residuals(&self, u: &VectorField, topo: &GridTopology) -> HodgeResiduals {
        let h = topo.h;
        let omega = &topo.omega;
        let mut r = HodgeResiduals {
            divergence: 0.0,
            reconstruction: 0.0,
            boundary: 0.0,
            class_means: 0.0,
        };
        for (i, &p) in omega.points().iter().enumerate() {
            r.divergence = r.divergence.max(divergence(&self.w, DiffKind::Central, p, h).abs());
            let w = self.w.get(p);
            if topo.omega_boundary[i] {
                for v in w {
                    r.boundary = r.boundary.max(v.abs());
                }
            } else {
                let uv = u.get(p);
                for j in 0..3 {
                    let d = (self.phi.get(shift(p, j, 1)) - self.phi.get(shift(p, j, -1))) / h;
                    r.reconstruction = r.reconstruction.max((w[j] + d - uv[j]).abs());
                }
            }
        }
        let mut sums = [0.0; 8];
        for &i in &topo.core {
            let p = omega.point(i);
            sums[parity_class(p) as usize - 1] += self.phi.values()[i];
        }
        r.class_means = sums.iter().fold(0.0, |m, s| m.max(s.abs()));
        r
    }
}
