use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rht::analytic::{
    limit_law, limit_transform, mixture_law, nested_sum_identity, pgf_coc, pgf_cos, Caps, Discipline, LimitContext,
};
use rht::criticality::{critical_rate_and_subsets_bruteforce, criticality_via_construction, lambda_star_via_flow};
use rht::fixtures::{random_dag_model, random_model};
use rht::moments::{moment_total, moment_total_alt};
use rht::scalar::{q, qi};
use rht::simulator::{batch_interval, ctmc_oracle, erlang_cdf, ks_two_sample};
use rht::{SystemModel, Q};

fn model(seed: u64, servers: usize, types: usize, load: i64) -> SystemModel {
    random_model(&mut ChaCha8Rng::seed_from_u64(seed), servers, types, q(load, 20))
}

fn dag(seed: u64, k: usize, forest: bool) -> LimitContext {
    let m = random_dag_model(&mut ChaCha8Rng::seed_from_u64(seed), k, forest, qi(1));
    LimitContext::new(&m).unwrap()
}

fn uncovered_server(m: &SystemModel) -> bool {
    (0..m.n_servers()).any(|n| m.types_touching(1 << n) == 0)
}

fn args(v: &[u8]) -> Vec<Q> {
    v.iter().map(|&x| q(x as i64, 4)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn construction_matches_brute_force(seed in any::<u64>(), load in 1i64..20) {
        let m = model(seed, 5, 5, load);
        let brute = critical_rate_and_subsets_bruteforce(&m, 20).unwrap();
        let (cons, _) = criticality_via_construction(&m).unwrap();
        prop_assert_eq!(&brute.lambda_star, &cons.lambda_star);
        prop_assert_eq!(&brute.critical_subsets, &cons.critical_subsets);
        prop_assert_eq!(lambda_star_via_flow(&m), cons.lambda_star);
    }

    #[test]
    fn server_capacity_is_monotone_and_submodular(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let m = model(seed, 6, 6, 10);
        let full = m.all_types();
        let (a, b) = (a & full, b & full);
        let cap = |t: u64| m.mu_of_servers(m.servers_of(t));
        prop_assert!(cap(a & b) <= cap(a));
        prop_assert!(cap(a) <= cap(a | b));
        prop_assert!(cap(a | b) + cap(a & b) <= cap(a) + cap(b));
    }

    #[test]
    fn pgf_is_one_at_one(seed in any::<u64>(), load in 1i64..20) {
        let m = model(seed, 4, 4, load);
        let ones = vec![qi(1); m.n_types()];
        prop_assert_eq!(pgf_coc::<Q>(&m, &ones, &Caps::default()).unwrap(), qi(1));
        match pgf_cos::<Q>(&m, &ones, &Caps::default()) {
            Ok(v) => prop_assert_eq!(v, qi(1)),
            Err(e) => prop_assert!(uncovered_server(&m), "{e}"),
        }
    }

    #[test]
    fn moment_routes_agree(seed in any::<u64>(), load in 1i64..20, n in 1u32..4) {
        let m = model(seed, 4, 4, load);
        let caps = Caps::default();
        prop_assert_eq!(moment_total(&m, n, Discipline::Coc, &caps).unwrap(), moment_total_alt(&m, n, &caps).unwrap());
    }

    #[test]
    fn limit_rows_are_probability_splits(seed in any::<u64>(), k in 1usize..6, forest in any::<bool>()) {
        let ctx = dag(seed, k, forest);
        for row in limit_law(&ctx).coeffs {
            prop_assert_eq!(row.iter().sum::<Q>(), qi(1));
        }
        for atom in mixture_law(&ctx).unwrap().atoms {
            prop_assert_eq!(atom.coeffs.len(), ctx.k());
            for row in &atom.coeffs {
                prop_assert_eq!(row.iter().sum::<Q>(), qi(1));
            }
        }
    }

    #[test]
    fn total_is_erlang(seed in any::<u64>(), k in 1usize..6, forest in any::<bool>(), c in 0u8..12) {
        let ctx = dag(seed, k, forest);
        let c = q(c as i64, 3);
        let t = vec![c.clone(); ctx.model.n_types()];
        let expected = (qi(1) + c).pow(-(ctx.k() as i32));
        prop_assert_eq!(limit_transform(&ctx, &t).unwrap(), expected);
    }

    #[test]
    fn forest_transforms_agree(seed in any::<u64>(), k in 1usize..5, t in proptest::collection::vec(0u8..12, 6)) {
        let ctx = dag(seed, k, true);
        prop_assume!(limit_law(&ctx).forest);
        let t = args(&t[..ctx.model.n_types().min(6)]);
        prop_assume!(t.len() == ctx.model.n_types());
        prop_assert_eq!(mixture_law(&ctx).unwrap().laplace(&t), limit_law(&ctx).laplace(&t));
    }

    #[test]
    fn nested_sum_holds_on_forests(seed in any::<u64>(), k in 1usize..6, c in proptest::collection::vec(1u8..20, 6)) {
        let ctx = dag(seed, k, true);
        let c = args(&c[..ctx.k()]);
        let (lhs, rhs) = nested_sum_identity(&ctx, &c).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn erlang_cdf_is_monotone(k in 1usize..8, x in 0.0f64..20.0, dx in 0.0f64..5.0) {
        let (a, b) = (erlang_cdf(k, x), erlang_cdf(k, x + dx));
        prop_assert!((0.0..=1.0).contains(&a) && a <= b + 1e-15);
        prop_assert!(erlang_cdf(k + 1, x) <= a + 1e-15);
    }

    #[test]
    fn ks_statistic_is_a_distance(a in proptest::collection::vec(0.0f64..5.0, 1..60), b in proptest::collection::vec(0.0f64..5.0, 1..60)) {
        let d = ks_two_sample(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_two_sample(&b, &a));
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn constant_batches_have_no_spread(x in -5.0f64..5.0, n in 20usize..40) {
        let (mean, half) = batch_interval(&vec![x; n]);
        prop_assert!((mean - x).abs() < 1e-12);
        prop_assert!(half.abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn truncated_chain_has_product_form(seed in any::<u64>(), load in 2i64..16, cos in any::<bool>()) {
        let m = model(seed, 3, 3, load);
        let d = if cos { Discipline::Cos } else { Discipline::Coc };
        prop_assume!(!(cos && uncovered_server(&m)));
        let r = ctmc_oracle(&m, d, 5).unwrap();
        prop_assert!(r.tv_distance < 1e-6, "TV {}", r.tv_distance);
    }
}
