use chaoscalc::operators::{
    apply_annihilate, apply_create, hop_apply, hop_compose, l2_annihilate, l2_create,
    l2_wn_apply, Materializer,
};
use chaoscalc::weights::random_weight_1d;
use chaoscalc::{
    pair, riesz_embed, Functional, GrowthBound, OperatorExpr, Subset, Tolerance, TruncationLevel,
    Weight2D,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

fn level(n: usize) -> TruncationLevel {
    TruncationLevel::new(n).unwrap()
}

fn functional(n: usize, seed: u64) -> Functional {
    Functional::random(level(n), &mut ChaCha8Rng::seed_from_u64(seed))
}

fn weight(n: usize, seed: u64) -> Weight2D {
    Weight2D::random(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * 1f64.max(a.abs().max(b.abs()))
}

fn le(a: f64, b: f64) -> bool {
    a <= b + TOL * 1f64.max(b.abs())
}

/// Expressions over indices `< n` built from every leaf kind.
fn expr(n: usize, seed: u64) -> impl Strategy<Value = OperatorExpr> {
    let w = weight(n, seed);
    let u = random_weight_1d(n, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
    let leaf = prop_oneof![
        (0..n).prop_map(OperatorExpr::a),
        (0..n).prop_map(OperatorExpr::ad),
        ((0..n), (0..n)).prop_map(|(j, k)| OperatorExpr::hop(j, k)),
        Just(OperatorExpr::number()),
        Just(OperatorExpr::Identity),
        Just(OperatorExpr::gwn(&w)),
        Just(OperatorExpr::wn1d(&u)),
        (0.0..2.0f64).prop_map(OperatorExpr::lambda_power),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(OperatorExpr::compose),
            prop::collection::vec(inner.clone(), 1..4).prop_map(OperatorExpr::sum),
            ((-2.0..2.0f64), inner).prop_map(|(c, e)| OperatorExpr::scale(c, e)),
        ]
    })
}

fn expr_case() -> impl Strategy<Value = (usize, u64, OperatorExpr)> {
    (1usize..=4, any::<u64>()).prop_flat_map(|(n, seed)| (Just(n), Just(seed), expr(n, seed)))
}

proptest! {
    #[test]
    fn primal_norms_increase_and_dual_norms_decrease(n in 1usize..=6, seed in any::<u64>(), p in 0.0..3.0f64, dp in 0.0..3.0f64) {
        let phi = functional(n, seed);
        prop_assert!(le(phi.norm_p(p), phi.norm_p(p + dp)));
        prop_assert!(le(phi.dual_norm_p(p + dp), phi.dual_norm_p(p)));
    }

    #[test]
    fn riesz_embedding_is_a_contraction(n in 1usize..=6, seed in any::<u64>(), p in 0.0..3.0f64) {
        let xi = functional(n, seed);
        prop_assert!(le(riesz_embed(&xi).dual_norm_p(p), xi.norm_p(0.0)));
        prop_assert!(close(riesz_embed(&xi).dual_norm_p(0.0), xi.norm_p(0.0)));
    }

    #[test]
    fn pairing_is_bilinear(n in 1usize..=5, seed in any::<u64>(), re in -2.0..2.0f64, im in -2.0..2.0f64) {
        let (phi, psi, xi) = (functional(n, seed), functional(n, seed ^ 7), functional(n, seed ^ 11));
        let c = Complex64::new(re, im);
        let lhs = pair(&phi.scale(c).add(&psi).unwrap(), &xi);
        let rhs = c * pair(&phi, &xi) + pair(&psi, &xi);
        prop_assert!((lhs - rhs).norm() <= TOL * 1f64.max(rhs.norm()));
        let lhs = pair(&phi, &xi.scale(c).add(&psi).unwrap());
        let rhs = c * pair(&phi, &xi) + pair(&phi, &psi);
        prop_assert!((lhs - rhs).norm() <= TOL * 1f64.max(rhs.norm()));
    }

    #[test]
    fn pairing_with_basis_reads_fock_transform(n in 1usize..=6, seed in any::<u64>(), bits in any::<u64>()) {
        let phi = functional(n, seed);
        let s = Subset::from_bits(bits & ((1 << n) - 1));
        prop_assert_eq!(pair(&phi, &Functional::basis(level(n), s).unwrap()), phi.fock(s));
    }

    #[test]
    fn max_coefficient_is_a_growth_constant(n in 1usize..=6, seed in any::<u64>()) {
        let phi = functional(n, seed);
        let check = phi.check_growth(GrowthBound::new(phi.max_abs(), 0.0).unwrap(), Tolerance::default());
        prop_assert!(check.holds);
        prop_assert!(check.norm_consequence.unwrap().holds);
    }

    #[test]
    fn hop_closed_form_matches_composition(n in 1usize..=6, seed in any::<u64>(), j in 0usize..6, k in 0usize..6) {
        let phi = functional(n, seed);
        let (j, k) = (j % n, k % n);
        prop_assert_eq!(hop_apply(j, k, &phi).unwrap(), hop_compose(j, k, &phi).unwrap());
    }

    #[test]
    fn anticommutator_is_identity_on_functionals(n in 1usize..=6, seed in any::<u64>(), k in 0usize..6) {
        let phi = functional(n, seed);
        let k = k % n;
        let lhs = apply_create(k, &apply_annihilate(k, &phi).unwrap()).unwrap()
            .add(&apply_annihilate(k, &apply_create(k, &phi).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(lhs.max_abs_diff(&phi), 0.0);
    }

    #[test]
    fn materialized_matrix_agrees_with_direct_action((n, seed, e) in expr_case()) {
        let phi = functional(n, seed ^ 3);
        let matrix = Materializer::new().materialize(&e, level(n)).unwrap();
        let via_matrix = Functional::from_dense(level(n), &matrix.apply(&phi.to_dense()).unwrap()).unwrap();
        prop_assert!(via_matrix.residual(&e.apply(&phi).unwrap()) <= TOL);
    }

    #[test]
    fn expression_json_round_trips_through_build(n in 1usize..=4, j in 0usize..4, k in 0usize..4, c in -2.0..2.0f64) {
        let (j, k) = (j % n, k % n);
        let text = format!(
            r#"{{"op":"sum","args":[{{"op":"hop","j":{j},"k":{k}}},{{"op":"scale","re":{c},"arg":{{"op":"compose","args":[{{"op":"create","k":{k}}},{{"op":"annihilate","k":{j}}}]}}}}]}}"#
        );
        let built = chaoscalc::ExprSpec::from_json(&text).unwrap().build(None).unwrap();
        let direct = OperatorExpr::hop(j, k).plus(OperatorExpr::scale(c, OperatorExpr::ad(k).then(OperatorExpr::a(j))));
        let m = Materializer::new();
        let r = m.materialize(&built, level(n)).unwrap().residual(&m.materialize(&direct, level(n)).unwrap()).unwrap();
        prop_assert_eq!(r, 0.0);
    }

    #[test]
    fn spectral_function_is_bounded(n in 1usize..=6, seed in any::<u64>(), bits in any::<u64>()) {
        let w = weight(n, seed);
        let s = Subset::from_bits(bits & ((1 << n) - 1));
        let theta = w.spectral_theta(s);
        prop_assert!(theta >= 0.0);
        prop_assert!(le(theta, 2.0 * w.alpha() * s.cardinality() as f64));
        prop_assert!(close(theta, w.spectral_theta_literal(s).unwrap()));
    }

    #[test]
    fn spectral_function_shifts(n in 1usize..=6, seed in any::<u64>(), bits in any::<u64>(), k in 0usize..6) {
        let w = weight(n, seed);
        let s = Subset::from_bits(bits & ((1 << n) - 1));
        let k = k % n;
        let theta = |s: Subset| w.spectral_theta_literal(s).unwrap();
        let row = w.row_slice(k).count(s);
        let col = w.col_slice(k).count(s);
        if s.contains(k) {
            let rhs = theta(s) + row + col - 2.0 * w.value(k, k) - w.column_sum(k);
            prop_assert!(close(theta(s.without(k)), rhs));
        } else {
            prop_assert!(close(theta(s.with(k)), theta(s) - row - col + w.column_sum(k)));
        }
    }

    #[test]
    fn riesz_map_intertwines(n in 1usize..=6, seed in any::<u64>(), k in 0usize..6) {
        let xi = functional(n, seed);
        let k = k % n;
        let r = riesz_embed(&xi);
        prop_assert_eq!(riesz_embed(&l2_annihilate(k, &xi).unwrap()), apply_annihilate(k, &r).unwrap());
        prop_assert_eq!(riesz_embed(&l2_create(k, &xi).unwrap()), apply_create(k, &r).unwrap());
        let w = weight(n, seed ^ 5);
        let lhs = riesz_embed(&l2_wn_apply(&w, &xi));
        prop_assert!(lhs.residual(&OperatorExpr::gwn(&w).apply(&r).unwrap()) <= TOL);
    }

    #[test]
    fn lambda_is_product_of_successors(bits in 0u64..(1 << 12)) {
        let s = Subset::from_bits(bits);
        let product: f64 = s.iter().map(|k| (k + 1) as f64).product();
        prop_assert_eq!(s.lambda(), product);
        for k in 0..12 {
            prop_assert_eq!(s.with(k).without(k), s.without(k));
            prop_assert!(s.with(k).contains(k) && !s.without(k).contains(k));
        }
    }
}
