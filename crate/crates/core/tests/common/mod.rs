//! Reference computations shared by the integration tests.

use densflow::field::VectorField;
use densflow::grid::{GridTopology, parity_class, shift};
use nalgebra::{DMatrix, DVector};

/// Minimum-norm least-squares solution of the defining conditions, written
/// row by row straight from the definition:
/// `w = 0` on `∂Ω_h`, `w + Dφ = u` inside, `D·w = 0` on `Ω_h`, zero class sums
/// over the core. Unknowns are `(w₁, w₂, w₃, φ)` per point of `Ω_h`.
pub fn dense_hodge_oracle(u: &VectorField, topo: &GridTopology) -> (Vec<[f64; 3]>, Vec<f64>) {
    let n = topo.omega.len();
    let h = topo.h;
    let col = |c: usize, i: usize| c * n + i;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs = Vec::new();
    for (i, &p) in topo.omega.points().iter().enumerate() {
        if topo.omega_boundary[i] {
            for c in 0..3 {
                rows.push(vec![(col(c, i), 1.0)]);
                rhs.push(0.0);
            }
        } else {
            let uv = u.get(p);
            for c in 0..3 {
                let mut r = vec![(col(c, i), 1.0)];
                if let Some(j) = topo.omega.index_of(shift(p, c, 1)) {
                    r.push((col(3, j), 1.0 / h));
                }
                if let Some(j) = topo.omega.index_of(shift(p, c, -1)) {
                    r.push((col(3, j), -1.0 / h));
                }
                rows.push(r);
                rhs.push(uv[c]);
            }
        }
        let mut r = Vec::new();
        for c in 0..3 {
            if let Some(j) = topo.omega.index_of(shift(p, c, 1)) {
                r.push((col(c, j), 1.0 / h));
            }
            if let Some(j) = topo.omega.index_of(shift(p, c, -1)) {
                r.push((col(c, j), -1.0 / h));
            }
        }
        rows.push(r);
        rhs.push(0.0);
    }
    for class in 1..=8u8 {
        let r = topo
            .core
            .iter()
            .filter(|&&i| parity_class(topo.omega.point(i)) == class)
            .map(|&i| (col(3, i), 1.0))
            .collect();
        rows.push(r);
        rhs.push(0.0);
    }
    let mut a = DMatrix::zeros(rows.len(), 4 * n);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            a[(r, c)] += v;
        }
    }
    let x = a.svd(true, true).solve(&DVector::from_vec(rhs), 1e-10).unwrap();
    let w = (0..n).map(|i| [x[col(0, i)], x[col(1, i)], x[col(2, i)]]).collect();
    let phi = (0..n).map(|i| x[col(3, i)]).collect();
    (w, phi)
}

/// Whether `φ` at index `i` of `Ω_h` enters any interior equation; elsewhere
/// the decomposition leaves it free.
pub fn phi_is_determined(topo: &GridTopology, i: usize) -> bool {
    topo.interior.iter().any(|&k| {
        let p = topo.omega.point(k);
        (0..3).any(|c| topo.omega.index_of(shift(p, c, 1)) == Some(i) || topo.omega.index_of(shift(p, c, -1)) == Some(i))
    })
}
