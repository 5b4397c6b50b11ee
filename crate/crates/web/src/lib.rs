//! Browser demo for `densflow`.
//!
//! Each demo is a plain function returning a serializable result, so it can
//! be exercised natively; the `#[wasm_bindgen]` wrappers hand JSON to the page.

use densflow::config::Config;
use densflow::driver::Simulation;
use densflow::field::{DiffKind, Extension, cap_index, cap_threshold, divergence, norm3};
use densflow::grid::{DomainSpec, GridTopology, Point, PointSet, Shape, build_topology};
use densflow::helmholtz::project;
use densflow::sampling::{random_solenoidal, random_vector};
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Starting point for the run demo: small enough to finish in a blink.
pub const DEFAULT_CONFIG: &str = r#"[domain]
shape = { kind = "box", lo = [0, 0, 0], hi = [1, 1, 1] }
epsilon0 = 0.8

[problem]
rho0 = "1.5 + 0.5*sin(pi*x)*sin(pi*y)*sin(pi*z)"
rho_lower = 1.0
rho_upper = 2.0
v0 = ["40*x^2*(1-x)^2*y*(1-y)*(1-2*y)", "-40*x*(1-x)*(1-2*x)*y^2*(1-y)^2", "0"]
force = ["cos(t)*(z - 0.5)", "0", "-(x - 0.5)"]
viscosity = [[1.0, 0.05], [2.0, 0.1]]

[scheme]
h = 0.1
alpha = 0.5
t_final = 0.1
"#;

/// Values on the `x₁x₂` plane through the middle of a point set, row-major
/// with `x₁` fastest.
#[derive(Clone, Debug, Serialize)]
pub struct Slice {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl Slice {
    fn mid_plane(set: &PointSet, f: impl Fn(Point) -> f64) -> Self {
        let (lo, hi) = set.bounds().expect("demo sets are nonempty");
        let z = (lo[2] + hi[2]) / 2;
        let (nx, ny) = ((hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize);
        let mut values = Vec::with_capacity(nx * ny);
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                values.push(f([x, y, z]));
            }
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { nx, ny, values, min, max }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    pub omega_points: usize,
    pub kinetic_bound: f64,
    /// `(t, kinetic, mass, k_n, max |D·u|)` per step.
    pub history: Vec<(f64, f64, f64, usize, f64)>,
    pub density: Slice,
    pub speed: Slice,
}

/// Runs a config to its final time without touching the file system and
/// slices the last level.
pub fn run_summary(config: &str) -> Result<RunSummary, String> {
    let cfg = Config::parse(config).map_err(|e| e.to_string())?;
    let mut sim = Simulation::from_config(&cfg).map_err(|e| e.to_string())?;
    sim.options.out_dir = None;
    sim.options.snapshots = 0;
    let out = sim.run().map_err(|e| e.to_string())?;
    let tilde = &sim.topo.tilde;
    Ok(RunSummary {
        h: sim.params.h,
        tau: sim.params.tau,
        steps: sim.params.steps,
        omega_points: sim.topo.omega.len(),
        kinetic_bound: out.ledger.meta.kinetic_bound,
        history: out
            .ledger
            .rows
            .iter()
            .map(|r| (r.t, r.kinetic, r.mass, r.k_n, r.max_div))
            .collect(),
        density: Slice::mid_plane(tilde, |p| out.last.eta.get(p)),
        speed: Slice::mid_plane(tilde, |p| norm3(out.last.u.get(p))),
    })
}

fn unit_cube(h: f64) -> Result<GridTopology, String> {
    build_topology(&DomainSpec::new(Shape::unit_cube(), 0.8), h).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct CapSummary {
    pub threshold: f64,
    pub k: usize,
    pub sup_before: f64,
    pub sup_after: f64,
    pub before: Slice,
    pub after: Slice,
}

/// Draws a divergence-free field of the given amplitude and caps it.
pub fn cap_summary(h: f64, alpha: f64, amplitude: f64, seed: u64) -> Result<CapSummary, String> {
    let topo = unit_cube(h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_solenoidal(&topo, &mut rng, amplitude);
    let (k, capped) = cap_index(&u, alpha, topo.h).map_err(|e| e.to_string())?;
    Ok(CapSummary {
        threshold: cap_threshold(alpha, topo.h),
        k,
        sup_before: u.sup_norm(),
        sup_after: capped.sup_norm(),
        before: Slice::mid_plane(&topo.omega, |p| norm3(u.get(p))),
        after: Slice::mid_plane(&topo.omega, |p| norm3(capped.get(p))),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionSummary {
    pub max_div_before: f64,
    pub max_div_after: f64,
    pub residual: f64,
    pub divergence_before: Slice,
    pub divergence_after: Slice,
    pub potential: Slice,
}

/// Projects a random field onto its discretely divergence-free part.
pub fn projection_summary(h: f64, seed: u64) -> Result<ProjectionSummary, String> {
    let topo = unit_cube(h)?;
    let h = topo.h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_vector(&topo.omega, Extension::Zero, &mut rng, 1.0);
    let dec = project(&u, &topo).map_err(|e| e.to_string())?;
    let omega = &topo.omega;
    let div_u = Slice::mid_plane(omega, |p| divergence(&u, DiffKind::Central, p, h));
    let div_w = Slice::mid_plane(omega, |p| divergence(&dec.w, DiffKind::Central, p, h));
    let sup = |f: &dyn Fn(Point) -> f64| omega.points().iter().map(|&p| f(p).abs()).fold(0.0, f64::max);
    Ok(ProjectionSummary {
        max_div_before: sup(&|p| divergence(&u, DiffKind::Central, p, h)),
        max_div_after: sup(&|p| divergence(&dec.w, DiffKind::Central, p, h)),
        residual: dec.residuals(&u, &topo).max(),
        divergence_before: div_u,
        divergence_after: div_w,
        potential: Slice::mid_plane(omega, |p| dec.phi.get(p)),
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn default_config() -> String {
    DEFAULT_CONFIG.to_string()
}

#[wasm_bindgen]
pub fn run_demo(config: &str) -> Result<String, JsError> {
    to_json(run_summary(config))
}

#[wasm_bindgen]
pub fn cap_demo(h: f64, alpha: f64, amplitude: f64, seed: u32) -> Result<String, JsError> {
    to_json(cap_summary(h, alpha, amplitude, seed.into()))
}

#[wasm_bindgen]
pub fn projection_demo(h: f64, seed: u32) -> Result<String, JsError> {
    to_json(projection_summary(h, seed.into()))
}
