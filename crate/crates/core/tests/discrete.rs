use phs_core::discrete::{
    cross_validate_vardiff, discrete_stokes_check, discretize_hamiltonian, no_input, DiscreteDensity, DiscreteSystem,
    Grid1D, State,
};
use phs_core::dsl::{builtin, BuiltinOptions};
use phs_core::expr::{Expr, FunctionSymbol};
use phs_core::phs::{BoundaryCondition, Face, PHSystem, RateCondition};
use proptest::prelude::*;
use std::f64::consts::PI;

fn model(name: &str) -> PHSystem {
    builtin(name, BuiltinOptions::default()).unwrap()
}

fn grid(n: usize) -> Grid1D {
    Grid1D::new(n, 0.0, 1.0).unwrap()
}

fn max_h(pts: &[f64]) -> f64 {
    pts.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn string_energy_matches_the_integral() {
    let sys = model("string");
    let g = grid(201);
    let ds = DiscreteSystem::new(&sys, g.clone()).unwrap();
    let h0 = ds.hamiltonian().value(&ds.initial_state().unwrap().x).unwrap();
    // ∫₀¹ ½π²cos²(πX) dX
    assert!((h0 - PI * PI / 4.0).abs() < 1e-3, "{h0}");

    let h = discretize_hamiltonian(&sys, &g).unwrap();
    assert_eq!(h.value(&vec![0.0; 402]).unwrap(), 0.0);
    let mut p_only = State::zeros(2, 201);
    for (i, v) in p_only.field_mut(1).iter_mut().enumerate() {
        *v = (i as f64 * 0.1).cos();
    }
    let want = 0.5 * g.inner(p_only.field(1), p_only.field(1));
    assert!((h.value(&p_only.x).unwrap() - want).abs() < 1e-14);
}

#[test]
fn energy_error_is_second_order() {
    let sys = model("string");
    let err = |n| {
        let ds = DiscreteSystem::new(&sys, grid(n)).unwrap();
        (ds.hamiltonian().value(&ds.initial_state().unwrap().x).unwrap() - PI * PI / 4.0).abs()
    };
    let ratio = err(51) / err(101);
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

#[test]
fn undamped_string_conserves_energy() {
    let sys = model("string");
    let ds = DiscreteSystem::new(&sys, grid(201)).unwrap();
    let x0 = ds.initial_state().unwrap();
    let h0 = ds.hamiltonian().value(&x0.x).unwrap();
    let run = ds.run(&x0, 1e-3, 1.0, &no_input, 100).unwrap();
    assert_eq!(run.ledger.len(), 1000);
    assert_eq!(run.trajectory.len(), 11);
    let drift = run.ledger.iter().map(|r| (r.h - h0).abs()).fold(0.0, f64::max) / h0;
    assert!(drift <= 1e-9, "{drift}");
    for r in &run.ledger {
        assert!(r.residual.abs() <= 1e-9 * h0.max(1.0), "{r:?}");
        assert_eq!(r.dissipation, 0.0);
        assert_eq!(r.constraint_power, 0.0);
    }
    // Clamped ends stay clamped.
    let last = run.trajectory.last().unwrap();
    assert!(last.field(0)[0].abs() < 1e-14 && last.field(0)[200].abs() < 1e-14);
}

#[test]
fn damped_string_accounts_for_every_joule() {
    let sys = model("string_damped");
    let g = grid(201);
    let ds = DiscreteSystem::new(&sys, g.clone()).unwrap();
    let x0 = ds.initial_state().unwrap();
    let h0 = ds.hamiltonian().value(&x0.x).unwrap();
    let dt = 1e-3;
    let run = ds.run(&x0, dt, 1.0, &no_input, 1).unwrap();
    let mut prev = h0;
    let mut dissipated = 0.0;
    for (r, pair) in run.ledger.iter().zip(run.trajectory.windows(2)) {
        assert!(r.h <= prev + 1e-12);
        assert!(r.dissipation >= 0.0);
        assert!(r.residual.abs() <= 1e-9 * h0.max(1.0), "{r:?}");
        // Recompute the dissipation integral r·(Dẇ)² at the midpoint from the trajectory.
        let mid: Vec<f64> = pair[0].x.iter().zip(&pair[1].x).map(|(a, b)| 0.5 * (a + b)).collect();
        let wdot: Vec<f64> = mid[201..].to_vec();
        let dw = g.diff(&wdot);
        let q = 0.1 * g.inner(&dw, &dw);
        assert!((q - r.dissipation).abs() <= 1e-12 * q.max(1.0));
        dissipated += q * dt;
        prev = r.h;
    }
    let drop = h0 - run.ledger.last().unwrap().h;
    assert!(drop > 0.1);
    assert!(((dissipated - drop) / drop).abs() <= 1e-8, "{dissipated} vs {drop}");
}

fn actuated_string(r: f64) -> PHSystem {
    let mut sys = model("string_damped");
    sys.params[2].value = Some(r);
    let t = Expr::func_sym(FunctionSymbol::constant("t"));
    let g = Expr::frac(1, 5) * (Expr::int(7) * t).sin();
    sys.boundary[1] = BoundaryCondition {
        face: Face { axis: 0, upper: true },
        field: 0,
        rate: RateCondition::Prescribed(g),
    };
    sys
}

#[test]
fn actuated_end_feeds_the_boundary_port() {
    let sys = actuated_string(0.1);
    let n = 101;
    let g = grid(n);
    let ds = DiscreteSystem::new(&sys, g.clone()).unwrap();
    let mut st = ds.initial_state().unwrap();
    let dt = 2e-3;
    for _ in 0..200 {
        let (next, row) = ds.step(&st, dt, &no_input).unwrap();
        let mid: Vec<f64> = st.x.iter().zip(&next.x).map(|(a, b)| 0.5 * (a + b)).collect();
        let wdot: Vec<f64> = mid[n..].to_vec();
        let dw = g.diff(&mid[..n]);
        let dwdot = g.diff(&wdot);
        let k = n - 1;
        assert!((wdot[k] - 0.2 * (7.0 * (st.t + dt / 2.0)).sin()).abs() < 1e-10);
        let want = wdot[k] * (dw[k] + 0.1 * dwdot[k]);
        assert!((row.boundary_port - want).abs() <= 1e-10, "{} vs {want}", row.boundary_port);
        // The only unbalanced power is the end half-cell slaved to the rate condition.
        assert!((row.residual - row.constraint_power).abs() <= 1e-9, "{row:?}");
        st = next;
    }
}

#[test]
fn casimir_functional_is_conserved() {
    let sys = model("casimir3");
    let g = grid(101);
    let ds = DiscreteSystem::new(&sys, g.clone()).unwrap();
    let c = DiscreteDensity::new(&sys, &g, &Expr::field("c")).unwrap();
    let x0 = ds.initial_state().unwrap();
    let c0 = c.value(&x0.x).unwrap();
    let run = ds.run(&x0, 1e-3, 1.0, &no_input, 1).unwrap();
    let drift = run
        .trajectory
        .iter()
        .map(|s| (c.value(&s.x).unwrap() - c0).abs())
        .fold(0.0, f64::max)
        / c0.abs();
    assert!(drift <= 1e-9, "{drift}");
    assert!(run.trajectory[1000].field(0) != x0.field(0));
    let h0 = ds.hamiltonian().value(&x0.x).unwrap();
    assert!(run.ledger.iter().all(|r| r.residual.abs() <= 1e-9 * h0.max(1.0)));
}

#[test]
fn zero_data_stays_at_rest() {
    for name in ["string", "string_damped", "casimir3"] {
        let sys = model(name);
        let ds = DiscreteSystem::new(&sys, grid(21)).unwrap();
        let zero = State::zeros(sys.field_count(), 21);
        let run = ds.run(&zero, 1e-2, 0.1, &no_input, 1).unwrap();
        assert!(run.trajectory.iter().all(|s| s.x.iter().all(|v| *v == 0.0)));
        for r in &run.ledger {
            assert_eq!([r.h, r.dhdt, r.dissipation, r.domain_port, r.boundary_port, r.residual], [0.0; 6]);
        }
    }
}

#[test]
fn vardiff_converges_at_second_order() {
    let sys = model("string");
    let x = Expr::independent(0);
    let profile = [(Expr::pi() * &x).sin(), (Expr::int(2) * &x).cos()];
    let coarse = cross_validate_vardiff(&sys, &grid(51), &profile).unwrap();
    let fine = cross_validate_vardiff(&sys, &grid(101), &profile).unwrap();
    let ratio = coarse.max_deviation / fine.max_deviation;
    assert!((3.6..=4.4).contains(&ratio), "{ratio}");

    let quad = [&x * &x - &x, Expr::int(3) * &x];
    assert!(cross_validate_vardiff(&sys, &grid(31), &quad).unwrap().max_deviation <= 1e-12);
    let zero = [Expr::zero(), Expr::zero()];
    assert_eq!(cross_validate_vardiff(&sys, &grid(31), &zero).unwrap().max_deviation, 0.0);
}

#[test]
fn multidimensional_models_are_refused() {
    let err = DiscreteSystem::new(&model("mhd"), grid(11)).unwrap_err();
    assert!(err.to_string().contains("not numerically supported"));
}

#[test]
fn stokes_defect_for_special_vectors() {
    let g = grid(64);
    assert_eq!(discrete_stokes_check(&g, &[2.5; 64]).defect, 0.0);
    assert!(discrete_stokes_check(&g, &g.nodes()).defect.abs() <= 1e-14);
}

proptest! {
    #[test]
    fn stokes_defect_is_rounding_only(n in prop::sample::select(vec![16usize, 64, 256]), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let s = discrete_stokes_check(&grid(n), &w);
        prop_assert!(s.within_bound(), "{:?}", s);
    }

    #[test]
    fn summation_by_parts_is_exact(a in prop::collection::vec(-5.0f64..5.0, 12), b in prop::collection::vec(-5.0f64..5.0, 12)) {
        let g = Grid1D::new(12, 0.0, 3.0).unwrap();
        prop_assert!(g.sbp_defect(&a, &b).abs() <= 1e-12);
    }

    #[test]
    fn one_step_conserves_energy(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let sys = model("string");
        let ds = DiscreteSystem::new(&sys, grid(41)).unwrap();
        let mut st = State::zeros(2, 41);
        for v in st.x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        st.field_mut(0)[0] = 0.0;
        st.field_mut(0)[40] = 0.0;
        let h0 = ds.hamiltonian().value(&st.x).unwrap();
        let (_, row) = ds.step(&st, 1e-3, &no_input).unwrap();
        prop_assert!((row.h - h0).abs() <= 1e-10 * h0);
        prop_assert!(row.residual.abs() <= 1e-9 * h0.max(1.0));
    }
}

#[test]
fn stokes_over_a_thousand_vectors() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    for k in 0..1000 {
        let n = [16, 64, 256][k % 3];
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-3..4))).collect();
        let s = discrete_stokes_check(&grid(n), &w);
        assert!(s.within_bound(), "{s:?} max {}", max_h(&w));
    }
}
