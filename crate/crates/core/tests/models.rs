use phs_core::dsl::{builtin, emit, expression_context, mhd_convective_current, mhd_inverse_gradient, parse_model, BuiltinOptions, BUILTIN_NAMES};
use phs_core::expr::{parse, Expr};
use phs_core::phs::{PHSystem, Verdict};

fn model(name: &str) -> PHSystem {
    builtin(name, BuiltinOptions::default()).unwrap()
}

#[test]
fn every_builtin_is_structurally_sound() {
    for name in BUILTIN_NAMES {
        let report = model(name).verify().unwrap();
        assert_eq!(report.verdict(), Verdict::Pass, "{name}");
    }
    let mhd2 = builtin("mhd", BuiltinOptions { mhd_dim: 2 }).unwrap();
    assert_eq!(mhd2.verify().unwrap().verdict(), Verdict::Pass);
}

#[test]
fn undamped_string_power_balance() {
    let sys = model("string");
    let pb = sys.power_balance().unwrap();
    let c = expression_context(&sys);
    assert!(pb.dissipation.is_zero());
    assert!(pb.operator_boundary_extras.is_zero());
    assert_eq!(pb.boundary_port.0, vec![parse("(p/rho)*P*w_X", &c).unwrap()]);
    assert!(pb.closure_residual.is_zero());
}

#[test]
fn damped_string_power_balance() {
    let sys = model("string_damped");
    let pb = sys.power_balance().unwrap();
    let c = expression_context(&sys);
    let wdot = parse("p/rho", &c).unwrap();
    assert_eq!(pb.rhs.0[0], wdot);
    let dwdot = sys.space.total_derivative(&wdot, 0).unwrap();
    let r = parse("r", &c).unwrap();
    let pp = parse("P*w_X", &c).unwrap();
    assert!(pb.dissipation_in_divergence_form);
    assert_eq!(pb.dissipation, &r * &dwdot * &dwdot);
    assert_eq!(pb.total_boundary().0, vec![&wdot * (&r * &dwdot + pp)]);
    assert!(pb.closure_residual.is_zero());
}

#[test]
fn mhd_port_and_boundary_term() {
    for d in [2, 3] {
        let sys = builtin("mhd", BuiltinOptions { mhd_dim: d }).unwrap();
        let pb = sys.power_balance().unwrap();
        let s = mhd_convective_current(d);
        let fhat = mhd_inverse_gradient(d);
        let a0 = Expr::field("A0");
        let flux: Vec<Expr> = (0..d).map(|b| Expr::sum((0..d).map(|al| &fhat[b][al] * &s[al]))).collect();
        let y = -Expr::sum((0..d).map(|b| sys.space.total_derivative(&flux[b], b as u8).unwrap()));
        assert_eq!(pb.output, vec![y.clone()]);
        assert_eq!(pb.domain_port, &a0 * &y);
        let bm: Vec<Expr> = flux.iter().map(|f| f * &a0).collect();
        assert_eq!(pb.extras_g.0, bm);
        assert!(pb.dissipation.is_zero());
        assert!(pb.closure_residual.is_zero(), "d={d}");
    }
}

#[test]
fn casimir_suite() {
    let sys = model("string");
    let c = expression_context(&sys);
    let v = sys.casimir_check(&Expr::int(3)).unwrap();
    assert!(v.is_casimir && v.is_conserved);
    let v = sys.casimir_check(&parse("w", &c).unwrap()).unwrap();
    assert!(!v.is_casimir);
    assert_eq!(v.domain_condition_residual, vec![Expr::zero(), Expr::one()]);

    let c3 = model("casimir3");
    let cc = expression_context(&c3);
    let v = c3.casimir_check(&parse("c", &cc).unwrap()).unwrap();
    assert!(v.is_casimir && v.is_conserved && v.verdict == Verdict::Pass);
    let v = c3.casimir_check(&parse("p", &cc).unwrap()).unwrap();
    assert!(!v.is_casimir);

    let damped = model("string_damped");
    let v = damped.casimir_check(&Expr::one()).unwrap();
    assert_eq!(v.verdict, Verdict::Indeterminate);
}

#[test]
fn emitted_builtins_round_trip() {
    for name in BUILTIN_NAMES {
        let sys = model(name);
        let back = parse_model(&emit(&sys)).unwrap();
        assert_eq!(back.rhs().unwrap(), sys.rhs().unwrap(), "{name}");
        assert_eq!(back.hamiltonian, sys.hamiltonian);
        assert_eq!((&back.j, &back.r, &back.g), (&sys.j, &sys.r, &sys.g));
        assert_eq!(back.boundary, sys.boundary);
        assert_eq!(back.initial, sys.initial);
        assert_eq!(back.params, sys.params);
        assert_eq!(emit(&back), emit(&sys));
    }
}
