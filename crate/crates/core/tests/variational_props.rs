use phs_core::expr::{Expr, JetSpace, MultiIndex};
use phs_core::variational::{horizontal_derivative, Density, LinDiffOp, VerticalField};
use proptest::prelude::*;

fn space() -> JetSpace {
    JetSpace::new(1, &["w", "p"]).with_max_order(5)
}

fn first_order() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3i64..=3).prop_map(Expr::int),
        Just(Expr::field("w")),
        Just(Expr::field("p")),
        Just(Expr::jet("w", MultiIndex::single(0))),
        Just(Expr::jet("p", MultiIndex::single(0))),
        Just(Expr::independent(0)),
        Just(Expr::param("P", 1)),
    ];
    leaf.prop_recursive(4, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner).prop_map(|(a, b)| a * b),
        ]
    })
}

/// Coefficients free of derivative coordinates.
fn coefficient() -> impl Strategy<Value = Expr> {
    let x = Expr::independent(0);
    prop_oneof![
        (-3i64..=3).prop_map(Expr::int),
        (-2i64..=2, -2i64..=2).prop_map(move |(a, b)| Expr::int(a) + Expr::int(b) * &x),
        Just(Expr::param("r", 1)),
        Just(Expr::field("w")),
    ]
}

fn operator() -> impl Strategy<Value = LinDiffOp> {
    prop::collection::vec((0usize..2, 0usize..2, 0u8..=2, coefficient()), 1..5).prop_map(|terms| {
        let mut op = LinDiffOp::new(2, 2, 1);
        for (a, b, k, c) in terms {
            op.add_term(a, b, MultiIndex::new(vec![0; k as usize]), c);
        }
        op
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn total_derivatives_are_null_lagrangians(e in first_order()) {
        let s = space();
        let d = Density::new(s.clone(), s.total_derivative(&e, 0).unwrap()).unwrap();
        prop_assert!(d.variational_derivative().unwrap().0.iter().all(Expr::is_zero));
    }

    #[test]
    fn adjoint_is_an_involution(op in operator()) {
        let s = space();
        let once = op.adjoint(&s).unwrap().adjoint;
        prop_assert_eq!(once.adjoint(&s).unwrap().adjoint, op.clone());
        prop_assert!(op.adjoint_identity_check(&s).unwrap().pass);
    }

    #[test]
    fn lie_derivative_splits_into_domain_and_boundary(h in first_order(), v1 in first_order(), v2 in first_order()) {
        let s = space();
        let d = Density::new(s.clone(), h).unwrap();
        let v = VerticalField(vec![v1, v2]);
        let (domain, boundary) = d.lie_decompose(&v).unwrap();
        let direct = d.lie_derivative(&v).unwrap();
        prop_assert_eq!(direct, domain + horizontal_derivative(&s, &boundary).unwrap());
    }

    #[test]
    fn adjoint_sign_rule(k in 0usize..=2, c in -6i64..=6) {
        prop_assume!(c != 0);
        let s = space();
        let multi = MultiIndex::new(vec![0; k]);
        let op = LinDiffOp::new(1, 1, 1).with_term(0, 0, multi.clone(), Expr::int(c));
        let adj = op.adjoint(&s).unwrap().adjoint;
        let sign = if k % 2 == 0 { 1 } else { -1 };
        prop_assert_eq!(adj, LinDiffOp::new(1, 1, 1).with_term(0, 0, multi, Expr::int(sign * c)));
    }
}
