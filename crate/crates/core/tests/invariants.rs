use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use switchlemma::cdt::build_cdt;
use switchlemma::formula::Expr;
use switchlemma::gen::random_restriction_tree;
use switchlemma::satcount::count_sat_default;
use switchlemma::{Formula, Restriction, RestrictionTree};

const N: usize = 8;

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        8 => (1..=N, any::<bool>()).prop_map(|(v, pos)| if pos { Expr::var(v) } else { Expr::not_var(v) }),
        1 => any::<bool>().prop_map(Expr::Const),
    ];
    leaf.prop_recursive(3, 40, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..=4).prop_map(Expr::And),
            prop::collection::vec(inner, 1..=4).prop_map(Expr::Or),
        ]
    })
}

fn formula() -> impl Strategy<Value = Formula> {
    expr().prop_map(|e| Formula::from_expr(&e, N).unwrap())
}

fn restriction() -> impl Strategy<Value = Restriction> {
    (0u64..1 << N, 0u64..1 << N).prop_map(|(set, vals)| Restriction::from_masks(N, set, vals & set))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn restrict_agrees_with_merge(f in formula(), rho in restriction()) {
        let g = f.restrict(&rho);
        for x in 0..1u64 << N {
            prop_assert_eq!(g.eval(x), f.eval(rho.merge_into(x)));
        }
    }

    #[test]
    fn compose_refines_both(rho in restriction(), sigma in restriction()) {
        prop_assert!(rho.preceq(&rho, None));
        prop_assert!(rho.extended(&sigma).preceq(&rho, None));
        match rho.compose(&sigma) {
            Ok(c) => {
                prop_assert!(rho.consistent(&sigma));
                prop_assert!(c.preceq(&rho, None) && c.preceq(&sigma, None));
                prop_assert_eq!(c, rho.extended(&sigma));
            }
            Err(_) => prop_assert!(!rho.consistent(&sigma)),
        }
    }

    #[test]
    fn contraction_keeps_function(f in formula(), seed in any::<u64>()) {
        let rt = random_restriction_tree(&f, 0.9, &mut ChaCha8Rng::seed_from_u64(seed));
        let rho = rt.get(f.root());
        let t = build_cdt(&f, &rt).unwrap().tree;
        let c = t.contract();
        prop_assert!(c.computes_under(&f, rho));
        prop_assert_eq!(c.depth(), t.depth());
        prop_assert_eq!(c.depth(), c.max_path_len());
        prop_assert!(c.leaf_count() <= t.leaf_count());
    }

    #[test]
    fn negation_flips_labels(f in formula(), seed in any::<u64>()) {
        let rt = random_restriction_tree(&f, 0.9, &mut ChaCha8Rng::seed_from_u64(seed));
        let t = build_cdt(&f, &rt).unwrap().tree;
        let neg = build_cdt(&f.negated(), &rt).unwrap().tree;
        prop_assert!(neg.same_shape(&t.flip_labels()));
    }

    #[test]
    fn empty_restriction_tree_computes_formula(f in formula()) {
        let rt = RestrictionTree::constant(&f, Restriction::empty(N));
        let t = build_cdt(&f, &rt).unwrap().tree;
        for x in 0..1u64 << N {
            prop_assert_eq!(t.eval(x), Some(f.eval(x)));
        }
    }

    #[test]
    fn runs_are_deterministic(f in formula(), seed in any::<u64>()) {
        let rt = random_restriction_tree(&f, 0.9, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = build_cdt(&f, &rt).unwrap().tree;
        let b = build_cdt(&f, &rt).unwrap().tree;
        prop_assert!(a.same_shape(&b));
        let x = count_sat_default(&f, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let y = count_sat_default(&f, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!((x.count, x.tree_leaves, x.d_tilde_sizes), (y.count, y.tree_leaves, y.d_tilde_sizes));
    }
}
