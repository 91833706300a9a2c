use phs_core::dsl::{builtin, expression_context, BuiltinOptions};
use phs_core::expr::{parse, Expr, JetSpace, MultiIndex, Name, Point};
use phs_core::phs::{PHSystem, ParamRange, ParamSpec};
use phs_core::variational::{contract, horizontal_derivative, LinDiffOp};
use proptest::prelude::*;

/// Quadratic first-order Hamiltonians with positive-definite diagonal part plus couplings.
fn hamiltonian(n: usize) -> impl Strategy<Value = Expr> {
    prop::collection::vec(-3i64..=3, 3 * n).prop_map(move |c| {
        let mut terms = Vec::new();
        for a in 0..n {
            let f = Expr::field(&format!("x{a}"));
            let fx = Expr::jet(&format!("x{a}"), MultiIndex::single(0));
            terms.push(Expr::frac(c[a].abs() + 1, 2) * &f * &f);
            terms.push(Expr::frac(c[n + a].abs() + 1, 2) * &fx * &fx);
            let g = Expr::field(&format!("x{}", (a + 1) % n));
            terms.push(Expr::frac(c[2 * n + a], 4) * &f * g);
        }
        Expr::sum(terms)
    })
}

fn space(n: usize) -> JetSpace {
    let names: Vec<String> = (0..n).map(|a| format!("x{a}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    JetSpace::new(1, &refs).with_max_order(5)
}

fn skew(n: usize) -> impl Strategy<Value = LinDiffOp> {
    prop::collection::vec(-4i64..=4, n * n).prop_map(move |c| {
        let rows: Vec<Vec<Expr>> = (0..n)
            .map(|i| (0..n).map(|j| Expr::int(if i < j { c[i * n + j] } else if i > j { -c[j * n + i] } else { 0 })).collect())
            .collect();
        LinDiffOp::from_matrix(1, &rows)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lossless_systems_only_exchange_power_at_the_boundary(h in hamiltonian(3), j in skew(3)) {
        let mut sys = PHSystem::new("lossless", space(3), h);
        sys.j = j;
        let pb = sys.power_balance().unwrap();
        prop_assert!(pb.dissipation.is_zero());
        prop_assert!(pb.domain_port.is_zero());
        prop_assert!(pb.operator_boundary_extras.is_zero());
        prop_assert!(pb.closure_residual.is_zero());
    }

    #[test]
    fn damping_dissipates_a_weighted_square(h in hamiltonian(2), slot in 0usize..2) {
        let mut sys = PHSystem::new("damped", space(2), h);
        sys.params = vec![ParamSpec { name: Name::from("r"), value: Some(0.5), range: ParamRange::nonnegative() }];
        sys.r = phs_core::dsl::string_damping(2, slot);
        let pb = sys.power_balance().unwrap();
        let delta = sys.variational_derivative().unwrap().0[slot].clone();
        let d = sys.space.total_derivative(&delta, 0).unwrap();
        prop_assert_eq!(&pb.dissipation, &(Expr::param("r", 1) * &d * &d));
        prop_assert!(pb.closure_residual.is_zero());
        // Non-negative wherever r is.
        let mut pt = Point::new();
        for (k, s) in pb.dissipation.symbols().into_iter().enumerate() {
            let v = if s == *Expr::param("r", 1).as_symbol().unwrap() { 0.7 } else { (k as f64 * 1.3).sin() };
            pt.set(s, v);
        }
        prop_assert!(pb.dissipation.eval(&pt).unwrap() >= 0.0);
    }

    #[test]
    fn input_maps_pair_with_their_adjoints(h in hamiltonian(2), g0 in prop::collection::vec(-3i64..=3, 2), g1 in prop::collection::vec(-3i64..=3, 2)) {
        let x = Expr::independent(0);
        let mut sys = PHSystem::new("ported", space(2), h);
        sys.inputs = vec![Name::from("u")];
        let mut g = LinDiffOp::new(1, 2, 1);
        for (a, &c) in g0.iter().enumerate() {
            g.add_term(0, a, MultiIndex::empty(), Expr::int(c));
        }
        sys.g = g.clone();
        let u = Expr::field("u");
        let dh = sys.variational_derivative().unwrap().0;
        let y = sys.output().unwrap();
        // Order zero: exact transpose pairing.
        prop_assert_eq!(contract(&g.apply(&sys.space, std::slice::from_ref(&u)).unwrap().0, &dh), &u * &y[0]);

        for (a, &c) in g1.iter().enumerate() {
            g.add_term(0, a, MultiIndex::single(0), Expr::int(c) * (Expr::one() + &x));
        }
        sys.g = g.clone();
        let pb = sys.power_balance().unwrap();
        let lhs = contract(&g.apply(&sys.space, std::slice::from_ref(&u)).unwrap().0, &dh);
        let dg = horizontal_derivative(&sys.space, &pb.extras_g).unwrap();
        prop_assert_eq!(lhs, pb.domain_port.clone() + dg);
        prop_assert!(pb.closure_residual.is_zero());
    }

    #[test]
    fn casimir_verdict_ignores_constants(c in 0usize..4, k in -5i64..=5) {
        for name in ["string", "casimir3"] {
            let sys = builtin(name, BuiltinOptions::default()).unwrap();
            let cands = ["w", "p", "w_X", "c"];
            let text = cands[c];
            if text == "c" && name == "string" {
                continue;
            }
            let e = parse(text, &expression_context(&sys)).unwrap();
            let a = sys.casimir_check(&e).unwrap();
            let b = sys.casimir_check(&(e + Expr::int(k))).unwrap();
            prop_assert_eq!((a.verdict, a.is_casimir, a.is_conserved), (b.verdict, b.is_casimir, b.is_conserved));
            prop_assert_eq!(a.domain_condition_residual, b.domain_condition_residual);
        }
    }
}

#[test]
fn string_rhs_is_the_wave_equation() {
    let sys = builtin("string", BuiltinOptions::default()).unwrap();
    let ctx = expression_context(&sys);
    let rhs = sys.rhs().unwrap();
    assert_eq!(rhs.0[0], parse("p/rho", &ctx).unwrap());
    let pwx = parse("P*w_X", &ctx).unwrap();
    assert_eq!(rhs.0[1], sys.space.total_derivative(&pwx, 0).unwrap());

    let damped = builtin("string_damped", BuiltinOptions::default()).unwrap();
    let ctx = expression_context(&damped);
    let wdot = parse("p/rho", &ctx).unwrap();
    let r = parse("r", &ctx).unwrap();
    let d = |e: &Expr| damped.space.total_derivative(e, 0).unwrap();
    assert_eq!(damped.rhs().unwrap().0[1], d(&pwx) + d(&(r * d(&wdot))));
}

#[test]
fn unit_input_column_outputs_the_effort() {
    let sys0 = builtin("string", BuiltinOptions::default()).unwrap();
    let mut sys = sys0.clone();
    sys.inputs = vec![Name::from("F")];
    sys.g = LinDiffOp::new(1, 2, 1).with_term(0, 1, MultiIndex::empty(), Expr::one());
    assert_eq!(sys.output().unwrap(), vec![sys.variational_derivative().unwrap().0[1].clone()]);
    assert_eq!(sys0.output().unwrap(), Vec::<Expr>::new());
}
