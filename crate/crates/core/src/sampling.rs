//! Random admissible inputs for the lemma checks, the CLI `verify` command and
//! the tests.

use std::sync::Arc;

use rand::Rng;

use crate::field::{Extension, ScalarField, VectorField};
use crate::grid::{GridTopology, PointSet, STENCIL, shift};
use crate::transport::DensityBounds;

pub fn random_scalar<R: Rng>(set: &Arc<PointSet>, ext: Extension, rng: &mut R, lo: f64, hi: f64) -> ScalarField {
    ScalarField::from_fn(set.clone(), ext, |_| rng.random_range(lo..hi))
}

pub fn random_vector<R: Rng>(set: &Arc<PointSet>, ext: Extension, rng: &mut R, amp: f64) -> VectorField {
    VectorField::from_fn(set.clone(), ext, |_| {
        [
            rng.random_range(-amp..amp),
            rng.random_range(-amp..amp),
            rng.random_range(-amp..amp),
        ]
    })
}

/// Random field on `Ω_h` that vanishes on `∂Ω_h`.
pub fn random_vector_zero_boundary<R: Rng>(topo: &GridTopology, rng: &mut R, amp: f64) -> VectorField {
    let mut w = random_vector(&topo.omega, Extension::Zero, rng, amp);
    for &i in &topo.boundary {
        for a in 0..3 {
            w.component_mut(a).values_mut()[i] = 0.0;
        }
    }
    w
}

/// Discrete curl `D×ψ` with the `1/(2h)` difference, on the support of `ψ`
/// dilated by one. Its divergence (either central form) vanishes identically.
pub fn discrete_curl(psi: &VectorField, h: f64) -> VectorField {
    let Some((lo, hi)) = psi.support().bounds() else {
        return psi.clone();
    };
    let set = Arc::new(PointSet::boxed(
        [lo[0] - 1, lo[1] - 1, lo[2] - 1],
        [hi[0] + 1, hi[1] + 1, hi[2] + 1],
    ));
    let d = |c: usize, axis: usize, x| {
        (psi.component(c).get(shift(x, axis, 1)) - psi.component(c).get(shift(x, axis, -1))) / (2.0 * h)
    };
    VectorField::from_fn(set, Extension::Zero, |x| {
        [
            d(2, 1, x) - d(1, 2, x),
            d(0, 2, x) - d(2, 0, x),
            d(1, 0, x) - d(0, 1, x),
        ]
    })
}

/// Divergence-free field on `Ω_h`, zero on `∂Ω_h`, with sup norm `amp`. Built
/// as the curl of a random potential supported where the whole seven-point
/// stencil is interior.
pub fn random_solenoidal<R: Rng>(topo: &GridTopology, rng: &mut R, amp: f64) -> VectorField {
    let inner: Vec<_> = topo
        .interior
        .iter()
        .map(|&i| topo.omega.point(i))
        .filter(|&p| {
            STENCIL
                .iter()
                .all(|w| topo.is_interior([p[0] + w[0], p[1] + w[1], p[2] + w[2]]))
        })
        .collect();
    let psi_set = Arc::new(PointSet::from_points(inner));
    let psi = random_vector(&psi_set, Extension::Zero, rng, 1.0);
    let curl = discrete_curl(&psi, topo.h);
    let sup = curl.sup_norm();
    let scale = if sup > 0.0 { amp / sup } else { 0.0 };
    VectorField::from_fn(topo.omega.clone(), Extension::Zero, |p| {
        if topo.is_interior(p) {
            let v = curl.get(p);
            [v[0] * scale, v[1] * scale, v[2] * scale]
        } else {
            [0.0; 3]
        }
    })
}

/// Density on `Ω̃_h`: random in `[lower, upper]` on the points whose
/// neighbours all lie in `Ω_h`, the lower bound elsewhere.
pub fn random_density<R: Rng>(topo: &GridTopology, rng: &mut R, bounds: DensityBounds) -> ScalarField {
    ScalarField::from_fn(topo.tilde.clone(), Extension::Constant(bounds.lower), |p| {
        if topo.is_interior(p) {
            rng.random_range(bounds.lower..=bounds.upper)
        } else {
            bounds.lower
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{DiffKind, divergence};
    use crate::grid::{DomainSpec, Shape, build_topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solenoidal_field_is_admissible() {
        let topo = build_topology(&DomainSpec::new(Shape::unit_cube(), 0.8), 1.0 / 12.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_solenoidal(&topo, &mut rng, 2.0);
        assert!((w.sup_norm() - 2.0).abs() < 1e-12);
        for &i in &topo.boundary {
            assert_eq!(w.value_at(i), [0.0; 3]);
        }
        let (lo, hi) = topo.omega.bounds().unwrap();
        for x in lo[0] - 1..=hi[0] + 1 {
            for y in lo[1] - 1..=hi[1] + 1 {
                for z in lo[2] - 1..=hi[2] + 1 {
                    let d = divergence(&w, DiffKind::Symmetric, [x, y, z], topo.h);
                    assert!(d.abs() < 1e-12, "{d}");
                }
            }
        }
    }
}
