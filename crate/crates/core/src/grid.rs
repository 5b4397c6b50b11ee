//! Grid topology on `h·Z³`.
//!
//! Grid points are integer triples `z`; the physical point is `h·z`. All set
//! membership is exact integer arithmetic. The momentum step lives on
//! `Ω_h = {x : C_{4h}(x) ⊂ Ω}`, the density step on the same construction
//! applied to the padded box `Ω̃`.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [i64; 3];

/// The seven-point stencil `{0, ±e¹, ±e², ±e³}`.
pub const STENCIL: [Point; 7] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

#[inline]
pub fn shift(p: Point, axis: usize, by: i64) -> Point {
    let mut q = p;
    q[axis] += by;
    q
}

/// Parity class `1..=8` of a grid point, enumerated as
/// (e,e,e), (e,e,o), (e,o,e), (o,e,e), (e,o,o), (o,o,e), (o,e,o), (o,o,o).
pub fn parity_class(p: Point) -> u8 {
    let bits = [
        p[0].rem_euclid(2) as u8,
        p[1].rem_euclid(2) as u8,
        p[2].rem_euclid(2) as u8,
    ];
    match bits {
        [0, 0, 0] => 1,
        [0, 0, 1] => 2,
        [0, 1, 0] => 3,
        [1, 0, 0] => 4,
        [0, 1, 1] => 5,
        [1, 1, 0] => 6,
        [1, 0, 1] => 7,
        _ => 8,
    }
}

/// A finite set of grid points, sorted lexicographically, with O(1) lookup
/// through a dense index table over its bounding box.
#[derive(Clone, Debug)]
pub struct PointSet {
    points: Vec<Point>,
    lo: Point,
    dims: [usize; 3],
    lookup: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl PointSet {
    pub fn from_points(mut points: Vec<Point>) -> Self {
        points.sort_unstable();
        points.dedup();
        if points.is_empty() {
            return Self {
                points,
                lo: [0; 3],
                dims: [0; 3],
                lookup: Vec::new(),
            };
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in &points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let dims = [
            (hi[0] - lo[0] + 1) as usize,
            (hi[1] - lo[1] + 1) as usize,
            (hi[2] - lo[2] + 1) as usize,
        ];
        let mut lookup = vec![ABSENT; dims[0] * dims[1] * dims[2]];
        for (i, p) in points.iter().enumerate() {
            let off = Self::offset_in(lo, dims, *p).expect("point inside its own bounds");
            lookup[off] = i as u32;
        }
        Self {
            points,
            lo,
            dims,
            lookup,
        }
    }

    /// All points with `lo ≤ z ≤ hi` componentwise.
    pub fn boxed(lo: Point, hi: Point) -> Self {
        let mut pts = Vec::new();
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    pts.push([i, j, k]);
                }
            }
        }
        Self::from_points(pts)
    }

    #[inline]
    fn offset_in(lo: Point, dims: [usize; 3], p: Point) -> Option<usize> {
        let i = p[0] - lo[0];
        let j = p[1] - lo[1];
        let k = p[2] - lo[2];
        if i < 0 || j < 0 || k < 0 {
            return None;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= dims[0] || j >= dims[1] || k >= dims[2] {
            return None;
        }
        Some((i * dims[1] + j) * dims[2] + k)
    }

    #[inline]
    pub fn index_of(&self, p: Point) -> Option<usize> {
        let off = Self::offset_in(self.lo, self.dims, p)?;
        match self.lookup[off] {
            ABSENT => None,
            i => Some(i as usize),
        }
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        self.index_of(p).is_some()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    /// Inclusive integer bounding box `(lo, hi)`; `None` for the empty set.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        if self.points.is_empty() {
            return None;
        }
        let hi = [
            self.lo[0] + self.dims[0] as i64 - 1,
            self.lo[1] + self.dims[1] as i64 - 1,
            self.lo[2] + self.dims[2] as i64 - 1,
        ];
        Some((self.lo, hi))
    }

    /// `∂G = {x ∈ G | {x ± he^i} ⊄ G}` as a membership mask.
    pub fn boundary_mask(&self) -> Vec<bool> {
        self.points
            .iter()
            .map(|&p| (0..3).any(|a| !self.contains(shift(p, a, 1)) || !self.contains(shift(p, a, -1))))
            .collect()
    }
}

/// Analytic domain primitives. Boxes and balls are open sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Box { lo: [f64; 3], hi: [f64; 3] },
    Ball { center: [f64; 3], radius: f64 },
    Union { parts: Vec<Shape> },
    Intersection { parts: Vec<Shape> },
}

impl Shape {
    pub fn unit_cube() -> Self {
        Shape::Box {
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Shape::Box { lo, hi } => (0..3).all(|a| lo[a] < p[a] && p[a] < hi[a]),
            Shape::Ball { center, radius } => {
                let d2: f64 = (0..3).map(|a| (p[a] - center[a]).powi(2)).sum();
                d2 < radius * radius
            }
            Shape::Union { parts } => parts.iter().any(|s| s.contains(p)),
            Shape::Intersection { parts } => !parts.is_empty() && parts.iter().all(|s| s.contains(p)),
        }
    }

    /// Whether the half-open cell `[lo, hi)` lies inside the shape.
    pub fn contains_cell(&self, lo: [f64; 3], hi: [f64; 3]) -> bool {
        self.contains_cell_depth(lo, hi, 2)
    }

    fn contains_cell_depth(&self, lo: [f64; 3], hi: [f64; 3], depth: u32) -> bool {
        match self {
            Shape::Box { lo: blo, hi: bhi } => (0..3).all(|a| lo[a] > blo[a] && hi[a] <= bhi[a]),
            Shape::Ball { center, radius } => {
                // sup of |p - c|² over [lo, hi); the sup is attained only if
                // every far coordinate sits on the closed (lo) side.
                let mut sup = 0.0;
                let mut attained = true;
                for a in 0..3 {
                    let dl = (lo[a] - center[a]).abs();
                    let dh = (hi[a] - center[a]).abs();
                    if dh > dl {
                        attained = false;
                        sup += dh * dh;
                    } else {
                        sup += dl * dl;
                    }
                }
                let r2 = radius * radius;
                sup < r2 || (sup == r2 && !attained)
            }
            Shape::Intersection { parts } => {
                !parts.is_empty() && parts.iter().all(|s| s.contains_cell_depth(lo, hi, depth))
            }
            Shape::Union { parts } => {
                if parts.iter().any(|s| s.contains_cell_depth(lo, hi, depth)) {
                    return true;
                }
                if depth == 0 {
                    return false;
                }
                // cells straddling two parts: bisect once per axis and retry
                let mid = [
                    0.5 * (lo[0] + hi[0]),
                    0.5 * (lo[1] + hi[1]),
                    0.5 * (lo[2] + hi[2]),
                ];
                (0..8).all(|c| {
                    let mut sl = lo;
                    let mut sh = hi;
                    for a in 0..3 {
                        if c >> a & 1 == 0 {
                            sh[a] = mid[a];
                        } else {
                            sl[a] = mid[a];
                        }
                    }
                    self.contains_cell_depth(sl, sh, depth - 1)
                })
            }
        }
    }

    /// Axis-aligned bounds of the closure.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Shape::Box { lo, hi } => (*lo, *hi),
            Shape::Ball { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
            Shape::Union { parts } => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for s in parts {
                    let (l, h) = s.bounds();
                    for a in 0..3 {
                        lo[a] = lo[a].min(l[a]);
                        hi[a] = hi[a].max(h[a]);
                    }
                }
                (lo, hi)
            }
            Shape::Intersection { parts } => {
                let mut lo = [f64::NEG_INFINITY; 3];
                let mut hi = [f64::INFINITY; 3];
                for s in parts {
                    let (l, h) = s.bounds();
                    for a in 0..3 {
                        lo[a] = lo[a].max(l[a]);
                        hi[a] = hi[a].min(h[a]);
                    }
                }
                (lo, hi)
            }
        }
    }
}

/// Physical domain `Ω`, the padded transport box `Ω̃` and the padding `ε₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub epsilon0: f64,
    /// Open box `Ω̃ = (lo, hi)`.
    pub bounding_box: ([f64; 3], [f64; 3]),
}

/// Default padding of `Ω̃` beyond `ε₀`, as a fraction of `ε₀`.
const DEFAULT_PAD_SLACK: f64 = 1.0 / 16.0;

impl DomainSpec {
    /// `Ω̃` defaults to the shape bounds widened by `ε₀ (1 + 1/16)` per side.
    pub fn new(shape: Shape, epsilon0: f64) -> Self {
        let (lo, hi) = shape.bounds();
        let pad = epsilon0 * (1.0 + DEFAULT_PAD_SLACK);
        let bounding_box = (
            [lo[0] - pad, lo[1] - pad, lo[2] - pad],
            [hi[0] + pad, hi[1] + pad, hi[2] + pad],
        );
        Self {
            shape,
            epsilon0,
            bounding_box,
        }
    }

    pub fn with_bounding_box(mut self, lo: [f64; 3], hi: [f64; 3]) -> Self {
        self.bounding_box = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0) || !self.epsilon0.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "epsilon0 must be positive, got {}",
                self.epsilon0
            )));
        }
        let (lo, hi) = self.shape.bounds();
        if (0..3).any(|a| !(lo[a] < hi[a]) || !lo[a].is_finite() || !hi[a].is_finite()) {
            return Err(Error::InvalidDomain("shape has empty or unbounded extent".into()));
        }
        let (blo, bhi) = self.bounding_box;
        for a in 0..3 {
            if !(blo[a] < lo[a] - self.epsilon0) || !(bhi[a] > hi[a] + self.epsilon0) {
                return Err(Error::InvalidDomain(format!(
                    "bounding box does not strictly contain the epsilon0-dilation along axis {}",
                    a + 1
                )));
            }
        }
        Ok(())
    }

    pub fn tilde_shape(&self) -> Shape {
        Shape::Box {
            lo: self.bounding_box.0,
            hi: self.bounding_box.1,
        }
    }
}

/// All discrete index sets for one mesh size.
#[derive(Clone, Debug)]
pub struct GridTopology {
    pub h: f64,
    /// `Ω_h`
    pub omega: Arc<PointSet>,
    /// `∂Ω_h` as a mask over `omega`.
    pub omega_boundary: Vec<bool>,
    /// `Ω_h°` as a mask over `omega`.
    pub omega_core: Vec<bool>,
    /// `Ω̃_h`
    pub tilde: Arc<PointSet>,
    /// `∂Ω̃_h` as a mask over `tilde`.
    pub tilde_boundary: Vec<bool>,
    /// Indices (into `omega`) of `Ω_h \ ∂Ω_h`, lexicographic.
    pub interior: Vec<usize>,
    /// Indices (into `omega`) of `∂Ω_h`, lexicographic.
    pub boundary: Vec<usize>,
    /// Indices (into `omega`) of `Ω_h°`, lexicographic.
    pub core: Vec<usize>,
}

fn cell_inside(shape: &Shape, z: Point, h: f64) -> bool {
    let lo = [
        (z[0] - 2) as f64 * h,
        (z[1] - 2) as f64 * h,
        (z[2] - 2) as f64 * h,
    ];
    let hi = [
        (z[0] + 2) as f64 * h,
        (z[1] + 2) as f64 * h,
        (z[2] + 2) as f64 * h,
    ];
    shape.contains_cell(lo, hi)
}

/// Grid points `x` whose cell `C_{4h}(x)` lies in `shape`.
pub fn voxelize(shape: &Shape, h: f64) -> PointSet {
    let (lo, hi) = shape.bounds();
    let zlo = [
        (lo[0] / h).floor() as i64,
        (lo[1] / h).floor() as i64,
        (lo[2] / h).floor() as i64,
    ];
    let zhi = [
        (hi[0] / h).ceil() as i64,
        (hi[1] / h).ceil() as i64,
        (hi[2] / h).ceil() as i64,
    ];
    let mut pts = Vec::new();
    for i in zlo[0]..=zhi[0] {
        for j in zlo[1]..=zhi[1] {
            for k in zlo[2]..=zhi[2] {
                let z = [i, j, k];
                if cell_inside(shape, z, h) {
                    pts.push(z);
                }
            }
        }
    }
    PointSet::from_points(pts)
}

/// Builds the topology and checks the standing smallness assumptions
/// (`h ≤ ε₀/8`, each `Ω_h° ∩ G^i` nonempty and 2h-connected).
pub fn build_topology(spec: &DomainSpec, h: f64) -> Result<GridTopology> {
    spec.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParams(format!("mesh size must be positive, got {h}")));
    }
    let limit = spec.epsilon0 / 8.0;
    if h > limit {
        return Err(Error::PaddingTooSmall { h, limit });
    }
    let topo = build_topology_unchecked(spec, h)?;
    for class in 1..=8u8 {
        let components = topo.core_class_components(class);
        if components != 1 {
            return Err(Error::DisconnectedParityClass { class, components });
        }
    }
    Ok(topo)
}

/// Same as [`build_topology`] but without the `h ≤ ε₀/8` and parity-class
/// checks. Only `Ω_h ≠ ∅` and `Ω_h ⊂ Ω̃_h \ ∂Ω̃_h` are enforced.
pub fn build_topology_unchecked(spec: &DomainSpec, h: f64) -> Result<GridTopology> {
    let omega = voxelize(&spec.shape, h);
    if omega.is_empty() {
        return Err(Error::EmptyDomain { h });
    }
    let tilde = voxelize(&spec.tilde_shape(), h);
    let omega_boundary = omega.boundary_mask();
    let tilde_boundary = tilde.boundary_mask();

    for &p in omega.points() {
        match tilde.index_of(p) {
            Some(i) if !tilde_boundary[i] => {}
            _ => {
                return Err(Error::InvalidDomain(format!(
                    "grid point {p:?} of Omega_h is not interior to the padded box"
                )));
            }
        }
    }

    let is_inner = |p: Point| omega.index_of(p).is_some_and(|i| !omega_boundary[i]);
    let mut omega_core = vec![false; omega.len()];
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut core = Vec::new();
    for (i, &p) in omega.points().iter().enumerate() {
        if omega_boundary[i] {
            boundary.push(i);
            continue;
        }
        interior.push(i);
        let mut all = true;
        'block: for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    if !is_inner([p[0] + a, p[1] + b, p[2] + c]) {
                        all = false;
                        break 'block;
                    }
                }
            }
        }
        if all {
            omega_core[i] = true;
            core.push(i);
        }
    }
    if interior.is_empty() {
        return Err(Error::EmptyDomain { h });
    }

    Ok(GridTopology {
        h,
        omega: Arc::new(omega),
        omega_boundary,
        omega_core,
        tilde: Arc::new(tilde),
        tilde_boundary,
        interior,
        boundary,
        core,
    })
}

impl GridTopology {
    /// Number of interior points `a = |Ω_h \ ∂Ω_h|`.
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Number of boundary points `b = |∂Ω_h|`.
    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    #[inline]
    pub fn is_interior(&self, p: Point) -> bool {
        self.omega.index_of(p).is_some_and(|i| !self.omega_boundary[i])
    }

    /// Physical coordinates of a grid point.
    #[inline]
    pub fn coords(&self, p: Point) -> [f64; 3] {
        [p[0] as f64 * self.h, p[1] as f64 * self.h, p[2] as f64 * self.h]
    }

    /// Centre of the cell `C_h⁺(p) = [p, p + h)³`.
    #[inline]
    pub fn cell_center(&self, p: Point) -> [f64; 3] {
        [
            (p[0] as f64 + 0.5) * self.h,
            (p[1] as f64 + 0.5) * self.h,
            (p[2] as f64 + 0.5) * self.h,
        ]
    }

    /// Number of 2h-connected components of `Ω_h° ∩ G^class` (0 when empty).
    pub fn core_class_components(&self, class: u8) -> usize {
        let members: Vec<usize> = self
            .core
            .iter()
            .copied()
            .filter(|&i| parity_class(self.omega.point(i)) == class)
            .collect();
        let mut seen = vec![false; self.omega.len()];
        let mut components = 0;
        for &start in &members {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let p = self.omega.point(i);
                for a in 0..3 {
                    for s in [-2, 2] {
                        if let Some(j) = self.omega.index_of(shift(p, a, s))
                            && self.omega_core[j]
                            && !seen[j]
                        {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        components
    }

    /// Lexicographically sorted members of `Ω_h ∩ G^class` (indices into `omega`).
    pub fn class_members(&self, class: u8) -> Vec<usize> {
        (0..self.omega.len())
            .filter(|&i| parity_class(self.omega.point(i)) == class)
            .collect()
    }

    /// Members of `Ω_h° ∩ G^class`.
    pub fn core_class_members(&self, class: u8) -> Vec<usize> {
        self.core
            .iter()
            .copied()
            .filter(|&i| parity_class(self.omega.point(i)) == class)
            .collect()
    }
}
