//! Unknown and row layout shared by the velocity–pressure step and the
//! Helmholtz decomposition.
//!
//! Unknowns: `(v₁ on Ω_h\∂Ω_h, v₂, v₃, p on Ω_h\∂Ω_h, p on ∂Ω_h)`, `4a + b` in
//! total, interior and boundary points in lexicographic order. Rows `0..3a` are
//! the three vector equations at interior points. The remaining `a + b` rows
//! sit in the slot of the scalar unknown at the same point and hold:
//!
//! * the divergence equation at that point;
//! * `p(x) = 0` when `x` has no interior neighbour, so that neither its
//!   divergence row nor its `p` column carries anything;
//! * the zero-mean condition of parity class `i` over `Ω_h° ∩ G^i`, in place of
//!   the divergence row of the lexicographically first point of `Ω_h ∩ G^i`
//!   with a nontrivial one. Summed over a class the divergence rows cancel, so
//!   that row is implied by the others.

use std::sync::Arc;

use crate::field::{Extension, ScalarField, VectorField};
use crate::grid::{GridTopology, parity_class, shift};
use crate::linalg::TripletBuilder;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct SaddleLayout {
    a: usize,
    b: usize,
    /// omega index → position among interior points
    slot: Vec<usize>,
    /// omega index → offset of its scalar unknown within the last `a + b`
    scalar: Vec<usize>,
    pinned: Vec<bool>,
    dropped: [Option<usize>; 8],
}

impl SaddleLayout {
    pub fn new(topo: &GridTopology) -> Self {
        let n = topo.omega.len();
        let a = topo.n_interior();
        let b = topo.n_boundary();
        let mut slot = vec![NONE; n];
        let mut scalar = vec![NONE; n];
        for (k, &i) in topo.interior.iter().enumerate() {
            slot[i] = k;
            scalar[i] = k;
        }
        for (k, &i) in topo.boundary.iter().enumerate() {
            scalar[i] = a + k;
        }
        let pinned: Vec<bool> = (0..n)
            .map(|i| {
                let p = topo.omega.point(i);
                !(0..3).any(|j| topo.is_interior(shift(p, j, 1)) || topo.is_interior(shift(p, j, -1)))
            })
            .collect();
        let mut dropped = [None; 8];
        for i in 0..n {
            if pinned[i] {
                continue;
            }
            let c = parity_class(topo.omega.point(i)) as usize - 1;
            if dropped[c].is_none() {
                dropped[c] = Some(i);
            }
        }
        Self {
            a,
            b,
            slot,
            scalar,
            pinned,
            dropped,
        }
    }

    pub fn n_interior(&self) -> usize {
        self.a
    }

    pub fn n_boundary(&self) -> usize {
        self.b
    }

    pub fn dim(&self) -> usize {
        4 * self.a + self.b
    }

    /// Column of velocity component `comp` at omega index `i`, if interior.
    #[inline]
    pub fn u_col(&self, comp: usize, i: usize) -> Option<usize> {
        match self.slot[i] {
            NONE => None,
            k => Some(comp * self.a + k),
        }
    }

    /// Column of the scalar unknown at omega index `i`.
    #[inline]
    pub fn p_col(&self, i: usize) -> usize {
        3 * self.a + self.scalar[i]
    }

    /// Omega index whose divergence row was replaced by the class-`c` mean
    /// condition (`c` in `1..=8`).
    pub fn dropped(&self, class: u8) -> Option<usize> {
        self.dropped[class as usize - 1]
    }

    /// Whether the scalar unknown at omega index `i` is pinned to zero.
    pub fn is_pinned(&self, i: usize) -> bool {
        self.pinned[i]
    }

    /// Divergence rows (`scale · Σ_j (v_j(x+he^j) − v_j(x−he^j))`), pins and
    /// class means.
    pub fn push_constraints(&self, topo: &GridTopology, scale: f64, trip: &mut TripletBuilder) {
        let omega = &topo.omega;
        for i in 0..omega.len() {
            let row = self.p_col(i);
            if self.pinned[i] {
                trip.push(row, row, 1.0);
                continue;
            }
            let class = parity_class(omega.point(i));
            if self.dropped(class) == Some(i) {
                for m in topo.core_class_members(class) {
                    trip.push(row, self.p_col(m), 1.0);
                }
                continue;
            }
            let x = omega.point(i);
            for j in 0..3 {
                for (s, sign) in [(1, 1.0), (-1, -1.0)] {
                    if let Some(n) = omega.index_of(shift(x, j, s))
                        && let Some(col) = self.u_col(j, n)
                    {
                        trip.push(row, col, sign * scale);
                    }
                }
            }
        }
    }

    /// `scale · (p(x+he^i) − p(x−he^i))` into the vector rows.
    pub fn push_gradient(&self, topo: &GridTopology, scale: f64, trip: &mut TripletBuilder) {
        let omega = &topo.omega;
        for (k, &i) in topo.interior.iter().enumerate() {
            let x = omega.point(i);
            for comp in 0..3 {
                let row = comp * self.a + k;
                let hi = omega.index_of(shift(x, comp, 1)).expect("interior neighbour");
                let lo = omega.index_of(shift(x, comp, -1)).expect("interior neighbour");
                trip.push(row, self.p_col(hi), scale);
                trip.push(row, self.p_col(lo), -scale);
            }
        }
    }

    /// Right-hand side with `rhs(comp, interior slot)` in the vector rows and
    /// zeros elsewhere.
    pub fn rhs(&self, mut f: impl FnMut(usize, usize) -> f64) -> Vec<f64> {
        let mut b = vec![0.0; self.dim()];
        for comp in 0..3 {
            for k in 0..self.a {
                b[comp * self.a + k] = f(comp, k);
            }
        }
        b
    }

    /// Unpacks a solution into a velocity on `Ω_h` (zero on `∂Ω_h`, zero
    /// extension) and a scalar on `Ω_h`.
    pub fn split(&self, topo: &GridTopology, y: &[f64]) -> (VectorField, ScalarField) {
        let set: Arc<_> = topo.omega.clone();
        let v = VectorField::from_fn(set.clone(), Extension::Zero, |p| {
            let i = set.index_of(p).unwrap();
            let mut out = [0.0; 3];
            for (comp, o) in out.iter_mut().enumerate() {
                if let Some(c) = self.u_col(comp, i) {
                    *o = y[c];
                }
            }
            out
        });
        let q = ScalarField::from_fn(set.clone(), Extension::Zero, |p| y[self.p_col(set.index_of(p).unwrap())]);
        (v, q)
    }

    /// Packs interior velocity values and all scalar values into one vector.
    pub fn pack(&self, topo: &GridTopology, v: &VectorField, q: &ScalarField) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for &i in &topo.interior {
            let p = topo.omega.point(i);
            let val = v.get(p);
            for (comp, vc) in val.iter().enumerate() {
                y[self.u_col(comp, i).unwrap()] = *vc;
            }
        }
        for i in 0..topo.omega.len() {
            y[self.p_col(i)] = q.get(topo.omega.point(i));
        }
        y
    }
}
