use densflow::field::{DiffKind, Extension, ScalarField, VectorField, cap_index, diff, divergence};
use densflow::grid::{DomainSpec, GridTopology, Point, Shape, build_topology, parity_class, shift};
use densflow::linalg::SolverKind;
use densflow::momentum::{
    StepInputs, ViscosityLaw, advection_pairing, assemble, energy_residual, kinetic, solve_step,
};
use densflow::sampling::{random_density, random_solenoidal, random_vector, random_vector_zero_boundary};
use densflow::transport::{DensityBounds, density_step};
use nalgebra::{DMatrix, DVector};
use num::BigInt;
use num::rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cube(h: f64, eps: f64) -> GridTopology {
    build_topology(&DomainSpec::new(Shape::unit_cube(), eps), h).unwrap()
}

struct Case {
    eta: ScalarField,
    eta_next: ScalarField,
    u: VectorField,
    u_tilde: VectorField,
    force: VectorField,
    mu: ViscosityLaw,
    tau: f64,
}

impl Case {
    fn inputs(&self, h: f64) -> StepInputs<'_> {
        StepInputs {
            eta: &self.eta,
            eta_next: &self.eta_next,
            u: &self.u,
            u_tilde: &self.u_tilde,
            force: &self.force,
            viscosity: &self.mu,
            tau: self.tau,
            h,
        }
    }
}

fn random_case(topo: &GridTopology, seed: u64, mu: ViscosityLaw) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = 0.5;
    let h = topo.h;
    let tau = h.powf(2.0 - alpha);
    let bounds = DensityBounds::new(1.0, 2.0).unwrap();
    let eta = random_density(topo, &mut rng, bounds);
    let u = random_solenoidal(topo, &mut rng, 3.0);
    let (_, u_tilde) = cap_index(&u, alpha, h).unwrap();
    let (eta_next, _) = density_step(&eta, &u_tilde, tau, h, bounds, topo).unwrap();
    let force = random_vector(&topo.omega, Extension::Zero, &mut rng, 2.0);
    Case {
        eta,
        eta_next,
        u,
        u_tilde,
        force,
        mu,
        tau,
    }
}

fn variable_mu() -> ViscosityLaw {
    ViscosityLaw::new(vec![(1.0, 0.05), (1.5, 0.2), (2.0, 0.1)]).unwrap()
}

#[test]
fn sparse_solution_matches_dense_factorization() {
    let topo = cube(0.1, 0.8);
    for seed in 0..3 {
        let case = random_case(&topo, seed, variable_mu());
        let sys = assemble(&case.inputs(topo.h), &topo).unwrap();
        let n = sys.layout.dim();
        assert_eq!(n, 4 * topo.n_interior() + topo.n_boundary());
        let dense = sys.matrix.to_dense();
        let m = DMatrix::from_fn(n, n, |r, c| dense[r][c]);
        let y = m.lu().solve(&DVector::from_vec(sys.rhs.clone())).unwrap();
        let (u, q, rep) = solve_step(&sys, &topo, Some(SolverKind::Direct)).unwrap();
        assert!(rep.solver_residual < 1e-10);
        let packed = sys.layout.pack(&topo, &u, &q);
        let scale = 1.0 + y.amax();
        for (a, b) in packed.iter().zip(y.iter()) {
            assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn direct_and_iterative_paths_agree() {
    let topo = cube(0.1, 0.8);
    let case = random_case(&topo, 9, variable_mu());
    let sys = assemble(&case.inputs(topo.h), &topo).unwrap();
    let (u1, _, _) = solve_step(&sys, &topo, Some(SolverKind::Direct)).unwrap();
    let (u2, _, r2) = solve_step(&sys, &topo, Some(SolverKind::Iterative)).unwrap();
    assert!(r2.solver_residual <= 1e-10);
    for i in 0..topo.omega.len() {
        let (a, b) = (u1.value_at(i), u2.value_at(i));
        for j in 0..3 {
            assert!((a[j] - b[j]).abs() < 1e-7, "{} vs {}", a[j], b[j]);
        }
    }
}

#[test]
fn velocity_block_is_spd_without_advection() {
    let topo = cube(0.1, 0.8);
    let mut case = random_case(&topo, 4, ViscosityLaw::constant(0.3).unwrap());
    case.u_tilde = VectorField::zeros(topo.omega.clone(), Extension::Zero);
    let sys = assemble(&case.inputs(topo.h), &topo).unwrap();
    let m = 3 * topo.n_interior();
    let dense = sys.matrix.to_dense();
    let block = DMatrix::from_fn(m, m, |r, c| dense[r][c]);
    let asym = (&block - block.transpose()).amax();
    assert!(asym <= 1e-12 * block.amax(), "asymmetry {asym}");
    let eig = block.symmetric_eigen();
    assert!(eig.eigenvalues.min() > 0.0);
}

#[test]
fn step_keeps_divergence_free_and_energy_bound() {
    let topo = cube(0.1, 0.8);
    for seed in 10..14 {
        let case = random_case(&topo, seed, variable_mu());
        let inp = case.inputs(topo.h);
        let sys = assemble(&inp, &topo).unwrap();
        let (u, _, rep) = solve_step(&sys, &topo, None).unwrap();
        assert!(rep.max_div <= 1e-8);
        let res = energy_residual(&inp, &u, case.mu.min(), &topo);
        let scale = 1.0 + kinetic(&case.eta, &case.u, &topo);
        assert!(res <= 1e-9 * scale, "energy residual {res}");

        let exact = exact_energy_residual(&inp, &u, case.mu.min(), &topo);
        assert!((res - exact).abs() <= 1e-12 * scale, "{res} vs {exact}");

        let (direct, identity) = advection_pairing(&inp, &u, &topo);
        assert!(
            (direct - identity).abs() <= 1e-11 * (1.0 + direct.abs()),
            "{direct} vs {identity}"
        );
    }
}

type Q = Ratio<BigInt>;

fn q(v: f64) -> Q {
    Q::from_float(v).unwrap()
}

/// The energy slack summed in exact rational arithmetic from the same inputs.
fn exact_energy_residual(inp: &StepInputs, u: &VectorField, mu_min: f64, topo: &GridTopology) -> f64 {
    let h = q(topo.h);
    let h3 = &h * &h * &h;
    let tau = q(inp.tau);
    let two = Q::from_integer(2.into());
    let mut kin_new = Q::from_integer(0.into());
    let mut kin_old = Q::from_integer(0.into());
    let mut work = Q::from_integer(0.into());
    let mut diss = Q::from_integer(0.into());
    for &p in topo.omega.points() {
        let (un, uo, f) = (u.get(p), inp.u.get(p), inp.force.get(p));
        let (en, eo) = (q(inp.eta_next.get(p)), q(inp.eta.get(p)));
        for c in 0..3 {
            kin_new += &en * q(un[c]) * q(un[c]);
            kin_old += &eo * q(uo[c]) * q(uo[c]);
            work += &en * q(f[c]) * q(un[c]);
            for j in 0..3 {
                let mut r = p;
                r[j] += 1;
                let d = (q(u.component(c).get(r)) - q(un[c])) / &h;
                diss += &d * &d;
            }
        }
    }
    let total = (kin_new - kin_old) * &h3 + &two * q(mu_min) * diss * &h3 * &tau - &two * work * &h3 * &tau;
    let (n, d) = (total.numer().clone(), total.denom().clone());
    // n/d to binary64 via scaled integer division
    let shift = 200u32;
    let scaled: BigInt = (n << shift) / d;
    scaled.to_string().parse::<f64>().unwrap() / 2f64.powi(shift as i32)
}

#[test]
fn dropped_rows_are_implied() {
    let topo = cube(0.1, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let w = random_vector_zero_boundary(&topo, &mut rng, 1.0);
        let mut sums = [0.0f64; 8];
        let mut scale = [0.0f64; 8];
        for &p in topo.omega.points() {
            let d = divergence(&w, DiffKind::Symmetric, p, topo.h);
            sums[parity_class(p) as usize - 1] += d;
            scale[parity_class(p) as usize - 1] += d.abs();
        }
        for c in 0..8 {
            assert!(sums[c].abs() <= 1e-13 * (1.0 + scale[c]), "class {} sum {}", c + 1, sums[c]);
        }
    }
}

fn mirror(p: Point, m: i64) -> Point {
    [m - p[0], p[1], p[2]]
}

/// `D⁺_i (D⁻·v)`, the one-sided part of the viscous operator.
fn cross_term(v: &VectorField, p: Point, i: usize, h: f64) -> f64 {
    let bdiv = |x| (0..3).map(|j| diff(v.component(j), j, DiffKind::Backward, x, h)).sum::<f64>();
    (bdiv(shift(p, i, 1)) - bdiv(p)) / h
}

/// Reflection across the `x₁` mid-plane commutes with the viscous operator
/// except for its one-sided term `D⁺(D⁻·u)`, which turns into `D⁻(D⁺·u)`.
#[test]
fn viscous_operator_mirror_defect_is_the_one_sided_term() {
    let topo = cube(0.1, 0.8);
    let h = topo.h;
    let (lo, hi) = topo.omega.bounds().unwrap();
    let m = lo[0] + hi[0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_vector_zero_boundary(&topo, &mut rng, 1.0);
    let ru = VectorField::from_fn(topo.omega.clone(), Extension::Zero, |p| {
        let v = u.get(mirror(p, m));
        [-v[0], v[1], v[2]]
    });
    let eta = ScalarField::from_fn(topo.tilde.clone(), Extension::Constant(1.0), |_| 1.0);
    let zero = VectorField::zeros(topo.omega.clone(), Extension::Zero);
    let mu = ViscosityLaw::constant(1.0).unwrap();
    let inp = StepInputs {
        eta: &eta,
        eta_next: &eta,
        u: &zero,
        u_tilde: &zero,
        force: &zero,
        viscosity: &mu,
        tau: 1.0,
        h,
    };
    let sys = assemble(&inp, &topo).unwrap();
    let q0 = ScalarField::zeros(topo.omega.clone(), Extension::Zero);
    let apply = |v: &VectorField| sys.matrix.matvec(&sys.layout.pack(&topo, v, &q0));
    let (au, aru) = (apply(&u), apply(&ru));
    let a = topo.n_interior();
    let slot = |p: Point| topo.interior.iter().position(|&j| topo.omega.point(j) == p).unwrap();
    let (mut raw, mut rest): (f64, f64) = (0.0, 0.0);
    for (k, &i) in topo.interior.iter().enumerate() {
        let p = topo.omega.point(i);
        let (rp, rk) = (mirror(p, m), slot(mirror(p, m)));
        for c in 0..3 {
            let s = if c == 0 { -1.0 } else { 1.0 };
            let d = aru[c * a + k] - s * au[c * a + rk];
            let one_sided = -(cross_term(&ru, p, c, h) - s * cross_term(&u, rp, c, h));
            raw = raw.max(d.abs());
            rest = rest.max((d - one_sided).abs());
        }
    }
    assert!(raw > 1.0, "defect {raw}");
    assert!(rest < 1e-10, "defect left after the one-sided term {rest}");
}
