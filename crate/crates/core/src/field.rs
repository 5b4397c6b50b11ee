//! Grid functions, difference calculus, discrete norms and local averaging.
//!
//! A field stores values only on its support; reads elsewhere go through the
//! field's [`Extension`]. This is the single place where the
//! "extended outside G" convention is resolved.

use std::sync::Arc;

use num::rational::Ratio;

use crate::error::{Error, Result};
use crate::grid::{Point, PointSet, shift};

/// How a field is read outside its support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extension {
    Zero,
    Constant(f64),
}

impl Extension {
    #[inline]
    fn value(self) -> f64 {
        match self {
            Extension::Zero => 0.0,
            Extension::Constant(c) => c,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    set: Arc<PointSet>,
    values: Vec<f64>,
    ext: Extension,
}

impl ScalarField {
    pub fn new(set: Arc<PointSet>, values: Vec<f64>, ext: Extension) -> Self {
        assert_eq!(set.len(), values.len(), "one value per support point");
        Self { set, values, ext }
    }

    pub fn zeros(set: Arc<PointSet>, ext: Extension) -> Self {
        let n = set.len();
        Self::new(set, vec![0.0; n], ext)
    }

    pub fn constant(set: Arc<PointSet>, c: f64, ext: Extension) -> Self {
        let n = set.len();
        Self::new(set, vec![c; n], ext)
    }

    pub fn from_fn(set: Arc<PointSet>, ext: Extension, mut f: impl FnMut(Point) -> f64) -> Self {
        let values = set.points().iter().map(|&p| f(p)).collect();
        Self { set, values, ext }
    }

    #[inline]
    pub fn get(&self, p: Point) -> f64 {
        match self.set.index_of(p) {
            Some(i) => self.values[i],
            None => self.ext.value(),
        }
    }

    pub fn support(&self) -> &Arc<PointSet> {
        &self.set
    }

    pub fn extension(&self) -> Extension {
        self.ext
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Three scalar components sharing one support and extension.
#[derive(Clone, Debug)]
pub struct VectorField {
    comps: [ScalarField; 3],
}

impl VectorField {
    pub fn new(comps: [ScalarField; 3]) -> Self {
        assert!(
            Arc::ptr_eq(comps[0].support(), comps[1].support())
                && Arc::ptr_eq(comps[0].support(), comps[2].support()),
            "vector components must share a support"
        );
        Self { comps }
    }

    pub fn zeros(set: Arc<PointSet>, ext: Extension) -> Self {
        Self {
            comps: [
                ScalarField::zeros(set.clone(), ext),
                ScalarField::zeros(set.clone(), ext),
                ScalarField::zeros(set, ext),
            ],
        }
    }

    pub fn from_fn(set: Arc<PointSet>, ext: Extension, mut f: impl FnMut(Point) -> [f64; 3]) -> Self {
        let vals: Vec<[f64; 3]> = set.points().iter().map(|&p| f(p)).collect();
        let comp = |a: usize| ScalarField::new(set.clone(), vals.iter().map(|v| v[a]).collect(), ext);
        Self {
            comps: [comp(0), comp(1), comp(2)],
        }
    }

    #[inline]
    pub fn get(&self, p: Point) -> [f64; 3] {
        match self.comps[0].set.index_of(p) {
            Some(i) => [
                self.comps[0].values[i],
                self.comps[1].values[i],
                self.comps[2].values[i],
            ],
            None => {
                let e = self.comps[0].ext.value();
                [e, e, e]
            }
        }
    }

    #[inline]
    pub fn component(&self, a: usize) -> &ScalarField {
        &self.comps[a]
    }

    pub fn component_mut(&mut self, a: usize) -> &mut ScalarField {
        &mut self.comps[a]
    }

    pub fn support(&self) -> &Arc<PointSet> {
        self.comps[0].support()
    }

    pub fn extension(&self) -> Extension {
        self.comps[0].ext
    }

    #[inline]
    pub fn value_at(&self, i: usize) -> [f64; 3] {
        [
            self.comps[0].values[i],
            self.comps[1].values[i],
            self.comps[2].values[i],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(ScalarField::is_finite)
    }

    /// Pointwise Euclidean magnitude maximum over the support.
    pub fn sup_norm(&self) -> f64 {
        (0..self.support().len())
            .map(|i| norm3(self.value_at(i)))
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffKind {
    /// `(φ(x+he) − φ(x))/h`
    Forward,
    /// `(φ(x) − φ(x−he))/h`
    Backward,
    /// `(φ(x+he) − φ(x−he))/h`
    Central,
    /// `(φ(x+he) − φ(x−he))/(2h)`, the mean of forward and backward. The time
    /// step uses this form for fluxes, advection, divergence and pressure.
    Symmetric,
}

/// One-directional difference quotient along `axis` (0-based).
#[inline]
pub fn diff(field: &ScalarField, axis: usize, kind: DiffKind, x: Point, h: f64) -> f64 {
    match kind {
        DiffKind::Forward => (field.get(shift(x, axis, 1)) - field.get(x)) / h,
        DiffKind::Backward => (field.get(x) - field.get(shift(x, axis, -1))) / h,
        DiffKind::Central => (field.get(shift(x, axis, 1)) - field.get(shift(x, axis, -1))) / h,
        DiffKind::Symmetric => {
            (field.get(shift(x, axis, 1)) - field.get(shift(x, axis, -1))) / (2.0 * h)
        }
    }
}

pub fn gradient(field: &ScalarField, kind: DiffKind, x: Point, h: f64) -> [f64; 3] {
    [
        diff(field, 0, kind, x, h),
        diff(field, 1, kind, x, h),
        diff(field, 2, kind, x, h),
    ]
}

pub fn divergence(w: &VectorField, kind: DiffKind, x: Point, h: f64) -> f64 {
    (0..3).map(|a| diff(w.component(a), a, kind, x, h)).sum()
}

/// `‖φ‖_{p,G}` over the support `G`; `p = ∞` gives the max norm.
pub fn norm_p(field: &ScalarField, p: f64, h: f64) -> f64 {
    norm_p_iter(field.values().iter().map(|v| v.abs()), p, h)
}

/// `‖w‖_{p,G}` with the pointwise Euclidean magnitude.
pub fn vector_norm_p(w: &VectorField, p: f64, h: f64) -> f64 {
    norm_p_iter((0..w.support().len()).map(|i| norm3(w.value_at(i))), p, h)
}

/// `‖φ‖_p` restricted to the support indices in `subset`.
pub fn norm_p_on(field: &ScalarField, subset: &[usize], p: f64, h: f64) -> f64 {
    norm_p_iter(subset.iter().map(|&i| field.values()[i].abs()), p, h)
}

fn norm_p_iter(abs_values: impl Iterator<Item = f64>, p: f64, h: f64) -> f64 {
    let h3 = h * h * h;
    if p.is_infinite() {
        abs_values.fold(0.0, f64::max)
    } else if p == 1.0 {
        abs_values.sum::<f64>() * h3
    } else if p == 2.0 {
        (abs_values.map(|v| v * v).sum::<f64>() * h3).sqrt()
    } else {
        (abs_values.map(|v| v.powf(p)).sum::<f64>() * h3).powf(1.0 / p)
    }
}

/// `(φ, ψ)_G = Σ φψ h³` over the common support.
pub fn inner(phi: &ScalarField, psi: &ScalarField, h: f64) -> f64 {
    assert!(
        Arc::ptr_eq(phi.support(), psi.support()) || phi.support().points() == psi.support().points(),
        "inner product needs a common support"
    );
    let s: f64 = phi.values().iter().zip(psi.values()).map(|(a, b)| a * b).sum();
    s * h * h * h
}

/// `(w, v)_G` for vector fields on a common support.
pub fn vector_inner(w: &VectorField, v: &VectorField, h: f64) -> f64 {
    (0..3).map(|a| inner(w.component(a), v.component(a), h)).sum()
}

/// The box kernel of the local averaging operator `A_h^k`: `(2k+1)³` equal
/// weights `1/(2k+1)³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AveragingKernel {
    pub k: usize,
    pub h: f64,
}

impl AveragingKernel {
    pub fn new(k: usize, h: f64) -> Self {
        let n = (2 * k + 1) as u64;
        let w = Ratio::new(1u64, n * n * n);
        assert_eq!(w * Ratio::from_integer(n * n * n), Ratio::from_integer(1));
        Self { k, h }
    }

    /// Weight per lattice point, `h³ / vol(A_h^k)`.
    pub fn weight(&self) -> f64 {
        let n = (2 * self.k + 1) as f64;
        1.0 / (n * n * n)
    }

    pub fn points_per_axis(&self) -> usize {
        2 * self.k + 1
    }
}

fn dilated_box(set: &PointSet, k: usize) -> Option<PointSet> {
    let (lo, hi) = set.bounds()?;
    let k = k as i64;
    Some(PointSet::boxed(
        [lo[0] - k, lo[1] - k, lo[2] - k],
        [hi[0] + k, hi[1] + k, hi[2] + k],
    ))
}

/// `A_h^k φ` on all of `h·Z³`, represented on the support's bounding box
/// dilated by `k` with zero extension (it vanishes beyond). The input is
/// treated as zero outside its support whatever its extension says.
///
/// Separable three-pass box filter.
pub fn local_average(phi: &ScalarField, k: usize) -> ScalarField {
    let src = phi.support();
    let Some(out_set) = dilated_box(src, k) else {
        return phi.clone();
    };
    let (lo, hi) = out_set.bounds().unwrap();
    let dims = [
        (hi[0] - lo[0] + 1) as usize,
        (hi[1] - lo[1] + 1) as usize,
        (hi[2] - lo[2] + 1) as usize,
    ];
    // out_set is a full box, so its point index is the dense offset.
    let mut buf = vec![0.0; dims[0] * dims[1] * dims[2]];
    for (i, &p) in src.points().iter().enumerate() {
        let off = out_set.index_of(p).unwrap();
        buf[off] = phi.values()[i];
    }
    let strides = [dims[1] * dims[2], dims[2], 1];
    let w = 2 * k + 1;
    let mut line = Vec::new();
    for axis in 0..3 {
        let n = dims[axis];
        let (oa, ob) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for i in 0..dims[oa] {
            for j in 0..dims[ob] {
                let base = i * strides[oa] + j * strides[ob];
                line.clear();
                line.extend((0..n).map(|t| buf[base + t * strides[axis]]));
                for t in 0..n {
                    let a = t.saturating_sub(k);
                    let b = (t + k).min(n - 1);
                    let s: f64 = line[a..=b].iter().sum();
                    buf[base + t * strides[axis]] = s;
                }
            }
        }
    }
    let scale = 1.0 / (w * w * w) as f64;
    for v in &mut buf {
        *v *= scale;
    }
    ScalarField::new(Arc::new(out_set), buf, Extension::Zero)
}

/// Direct `(2k+1)³` summation of `A_h^k φ`, on the same output set as
/// [`local_average`].
pub fn local_average_direct(phi: &ScalarField, k: usize) -> ScalarField {
    let src = phi.support();
    let Some(out_set) = dilated_box(src, k) else {
        return phi.clone();
    };
    let kernel = AveragingKernel::new(k, 1.0);
    let ki = k as i64;
    let zero = ScalarField::new(src.clone(), phi.values().to_vec(), Extension::Zero);
    let out_set = Arc::new(out_set);
    ScalarField::from_fn(out_set, Extension::Zero, |x| {
        let mut s = 0.0;
        for a in -ki..=ki {
            for b in -ki..=ki {
                for c in -ki..=ki {
                    s += zero.get([x[0] + a, x[1] + b, x[2] + c]);
                }
            }
        }
        s * kernel.weight()
    })
}

pub fn local_average_vector(u: &VectorField, k: usize) -> VectorField {
    let c0 = local_average(u.component(0), k);
    let set = c0.support().clone();
    let c1 = local_average(u.component(1), k);
    let c2 = local_average(u.component(2), k);
    VectorField::new([
        c0,
        ScalarField::new(set.clone(), c1.into_values(), Extension::Zero),
        ScalarField::new(set, c2.into_values(), Extension::Zero),
    ])
}

/// The velocity cap `(2/7) h^{−1+α}`.
pub fn cap_threshold(alpha: f64, h: f64) -> f64 {
    2.0 / 7.0 * h.powf(-1.0 + alpha)
}

/// Smallest averaging radius `k` with `‖A_h^k u‖_∞ ≤ (2/7)h^{−1+α}` and the
/// capped field `ũ = A_h^k u` (input read with zero extension).
pub fn cap_index(u: &VectorField, alpha: f64, h: f64) -> Result<(usize, VectorField)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParams(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let threshold = cap_threshold(alpha, h);
    let zero_ext = {
        let set = u.support().clone();
        VectorField::new([
            ScalarField::new(set.clone(), u.component(0).values().to_vec(), Extension::Zero),
            ScalarField::new(set.clone(), u.component(1).values().to_vec(), Extension::Zero),
            ScalarField::new(set, u.component(2).values().to_vec(), Extension::Zero),
        ])
    };
    if zero_ext.sup_norm() <= threshold {
        return Ok((0, zero_ext));
    }
    // |A^k u| ≤ N·sup|u| / (2k+1)³ with N support points, so this k always
    // suffices; running past it means the averaging itself is broken.
    let n = u.support().len() as f64;
    let limit = (((n * zero_ext.sup_norm() / threshold).cbrt() - 1.0) / 2.0).ceil().max(1.0) as usize + 1;
    for k in 1..=limit {
        let avg = local_average_vector(&zero_ext, k);
        if avg.sup_norm() <= threshold {
            return Ok((k, avg));
        }
    }
    Err(Error::CapSearchOverflow { limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(n: i64) -> Arc<PointSet> {
        Arc::new(PointSet::boxed([0, 0, 0], [n - 1, n - 1, n - 1]))
    }

    fn random_field(set: &Arc<PointSet>, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_fn(set.clone(), Extension::Zero, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn constant_field_has_zero_differences() {
        let set = cube(4);
        let f = ScalarField::constant(set, 3.5, Extension::Constant(3.5));
        for kind in [DiffKind::Forward, DiffKind::Backward, DiffKind::Central] {
            for x in [[0, 0, 0], [1, 2, 3], [-4, 9, 0]] {
                for a in 0..3 {
                    assert_eq!(diff(&f, a, kind, x, 0.1), 0.0);
                }
            }
        }
    }

    #[test]
    fn three_point_line() {
        let set = Arc::new(PointSet::from_points(vec![[-1, 0, 0], [0, 0, 0], [1, 0, 0]]));
        let f = ScalarField::new(set, vec![0.0, 1.0, 0.0], Extension::Zero);
        assert_eq!(diff(&f, 0, DiffKind::Forward, [0, 0, 0], 1.0), -1.0);
        assert_eq!(diff(&f, 0, DiffKind::Backward, [0, 0, 0], 1.0), 1.0);
    }

    #[test]
    fn central_gradient_of_linear_field_is_two() {
        let h = 0.25;
        let set = cube(6);
        let f = ScalarField::from_fn(set, Extension::Zero, |p| p[0] as f64 * h);
        let g = gradient(&f, DiffKind::Central, [2, 2, 2], h);
        assert!((g[0] - 2.0).abs() < 1e-14);
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn constant_vector_is_divergence_free_inside() {
        let set = cube(8);
        let w = VectorField::from_fn(set, Extension::Zero, |_| [1.0, -2.0, 0.5]);
        for kind in [DiffKind::Forward, DiffKind::Backward, DiffKind::Central] {
            assert_eq!(divergence(&w, kind, [3, 4, 3], 0.1), 0.0);
        }
    }

    #[test]
    fn summation_by_parts_random_5_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = cube(5);
        let h = 0.3;
        // sum over a box large enough to hold every nonzero term
        let big: Vec<Point> = PointSet::boxed([-2, -2, -2], [6, 6, 6]).points().to_vec();
        for _ in 0..20 {
            let w = random_field(&set, &mut rng);
            let phi = random_field(&set, &mut rng);
            for a in 0..3 {
                let (mut l, mut r, mut s) = (0.0, 0.0, 0.0);
                let (mut lc, mut rc) = (0.0, 0.0);
                for &x in &big {
                    let t1 = w.get(x) * diff(&phi, a, DiffKind::Forward, x, h);
                    let t2 = diff(&w, a, DiffKind::Backward, x, h) * phi.get(x);
                    l += t1;
                    r += t2;
                    s += t1.abs() + t2.abs();
                    lc += w.get(x) * diff(&phi, a, DiffKind::Central, x, h);
                    rc += diff(&w, a, DiffKind::Central, x, h) * phi.get(x);
                }
                assert!((l + r).abs() <= 1e-12 * s);
                assert!((lc + rc).abs() <= 1e-12 * s);
            }
        }
    }

    #[test]
    fn k_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = cube(4);
        let f = random_field(&set, &mut rng);
        let a = local_average(&f, 0);
        for &p in set.points() {
            assert_eq!(a.get(p), f.get(p));
        }
    }

    #[test]
    fn constant_block_average_deep_inside() {
        let set = cube(11);
        let f = ScalarField::constant(set, 2.0, Extension::Zero);
        let a = local_average(&f, 2);
        assert!((a.get([5, 5, 5]) - 2.0).abs() < 1e-15);
        assert!((a.get([2, 2, 2]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn spike_k1_spreads_over_27_points() {
        let set = Arc::new(PointSet::from_points(vec![[0, 0, 0]]));
        let f = ScalarField::new(set, vec![1.0], Extension::Zero);
        let a = local_average(&f, 1);
        for i in -2..=2i64 {
            for j in -2..=2i64 {
                for k in -2..=2i64 {
                    let expect = if i.abs() <= 1 && j.abs() <= 1 && k.abs() <= 1 {
                        1.0 / 27.0
                    } else {
                        0.0
                    };
                    assert!((a.get([i, j, k]) - expect).abs() < 1e-16);
                }
            }
        }
    }

    #[test]
    fn separable_and_direct_averages_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = Arc::new(PointSet::from_points(
            PointSet::boxed([0, 0, 0], [6, 5, 7])
                .points()
                .iter()
                .copied()
                .filter(|p| (p[0] + p[1] * p[2]) % 3 != 0)
                .collect(),
        ));
        let f = random_field(&set, &mut rng);
        for k in 0..4 {
            let a = local_average(&f, k);
            let b = local_average_direct(&f, k);
            assert_eq!(a.support().points(), b.support().points());
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn averaging_contracts_lp_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let set = cube(6);
        let h = 0.2;
        for _ in 0..20 {
            let f = random_field(&set, &mut rng);
            let a = local_average(&f, 2);
            for p in [1.0, 2.0, f64::INFINITY] {
                assert!(norm_p(&a, p, h) <= norm_p(&f, p, h) + 1e-12);
            }
        }
    }

    #[test]
    fn norms_and_inner() {
        let set = cube(3);
        let h = 0.5;
        let one = ScalarField::constant(set.clone(), 1.0, Extension::Zero);
        assert!((norm_p(&one, 1.0, h) - 27.0 * h * h * h).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(&set, &mut rng);
        assert!((norm_p(&f, 2.0, h).powi(2) - inner(&f, &f, h)).abs() < 1e-14);
    }

    #[test]
    fn cap_zero_and_threshold() {
        let set = cube(4);
        let h = 0.1;
        let alpha = 0.5;
        let u = VectorField::zeros(set.clone(), Extension::Zero);
        let (k, ut) = cap_index(&u, alpha, h).unwrap();
        assert_eq!(k, 0);
        assert_eq!(ut.sup_norm(), 0.0);

        let thr = cap_threshold(alpha, h);
        let mut u = VectorField::zeros(set, Extension::Zero);
        u.component_mut(1).values_mut()[5] = thr;
        let (k, _) = cap_index(&u, alpha, h).unwrap();
        assert_eq!(k, 0);
    }

    #[test]
    fn cap_index_matches_linear_scan() {
        for (h, alpha, mag) in [(0.05, 0.5, 1.0), (0.02, 0.3, 1.0), (0.05, 0.9, 40.0), (0.1, 0.5, 300.0)] {
            let set = Arc::new(PointSet::from_points(vec![[0, 0, 0]]));
            let m = mag * f64::powf(h, -1.0 + alpha);
            let u = VectorField::from_fn(set, Extension::Zero, |_| [m, 0.0, 0.0]);
            let (k, ut) = cap_index(&u, alpha, h).unwrap();
            // oracle: spike of magnitude m averages to m/(2k+1)³
            let thr = 2.0 / 7.0 * f64::powf(h, -1.0 + alpha);
            let mut kk = 0usize;
            while m / ((2 * kk + 1) as f64).powi(3) > thr {
                kk += 1;
            }
            assert_eq!(k, kk);
            assert!(ut.sup_norm() <= thr);
            if k >= 1 {
                let prev = local_average_vector(&u, k - 1);
                assert!(prev.sup_norm() > thr);
            }
        }
    }

    #[test]
    fn kernel_weights_sum_to_one() {
        for k in 0..5 {
            let ker = AveragingKernel::new(k, 0.1);
            let n = ker.points_per_axis().pow(3) as f64;
            assert!((ker.weight() * n - 1.0).abs() < 1e-15);
        }
    }
}
