use lpo_core::driver::{run_lpo, EvalMode, LpoConfig};
use lpo_core::function_class::{FunctionClass, FunctionHandle};
use lpo_core::mdp::{
    bellman_optimality_residual, greedy_policy, occupancy_exact, policy_evaluation_exact, random_mdp, value_iteration,
    AugmentedMdp, PolicyTable,
};
use proptest::prelude::*;

fn mdp_params() -> impl Strategy<Value = (u64, usize, usize, usize, f64)> {
    (any::<u64>(), 1usize..=50, 1usize..=4, 1usize..=4, 0.1f64..0.97)
        .prop_map(|(seed, ns, na, b, g)| (seed, ns, na, b.min(ns), g))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn value_iteration_meets_residual((seed, ns, na, b, g) in mdp_params()) {
        let mdp = random_mdp::<f64>(seed, ns, na, b, g).unwrap();
        let sol = value_iteration(&mdp, 1e-10);
        prop_assert!(bellman_optimality_residual(&mdp, &sol.q) <= 1e-10);
    }

    #[test]
    fn greedy_policy_evaluates_to_optimum((seed, ns, na, b, g) in mdp_params()) {
        let mdp = random_mdp::<f64>(seed, ns, na, b, g).unwrap();
        let tol = 1e-10;
        let opt = value_iteration(&mdp, tol);
        let eval = policy_evaluation_exact(&mdp, &greedy_policy(&opt.q), tol).unwrap();
        // both are within tol/(1-γ) of the true fixed point
        let slack = 10.0 * tol / (1.0 - g);
        for s in 0..ns {
            prop_assert!((eval.v[s] - opt.v[s]).abs() <= slack, "{} vs {}", eval.v[s], opt.v[s]);
        }
    }

    #[test]
    fn occupancy_is_a_distribution((seed, ns, na, b, g) in mdp_params(), start in any::<prop::sample::Index>()) {
        let mdp = random_mdp::<f64>(seed, ns, na, b, g).unwrap();
        let mut nu = vec![0.0; ns * na];
        nu[start.index(ns * na)] = 1.0;
        let d = occupancy_exact(&mdp, &PolicyTable::uniform(ns, na), &nu).unwrap();
        prop_assert!(d.iter().all(|p| *p >= -1e-12));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn absorbing_everywhere_is_worth_the_cap((seed, ns, na, b, g) in mdp_params()) {
        let base = random_mdp::<f64>(seed, ns, na, b, g).unwrap();
        let aug = AugmentedMdp::new(base, vec![0.0; ns * na], Some(vec![true; ns])).unwrap();
        let pol = PolicyTable::deterministic(na + 1, &vec![na; ns]);
        let sol = policy_evaluation_exact(&aug, &pol, 1e-12).unwrap();
        let cap = 3.0 / (1.0 - g);
        prop_assert!(sol.v.iter().all(|v| (v - cap).abs() <= 1e-8 * cap));
    }

    #[test]
    fn tabular_fit_reproduces_exact_targets(
        ns in 1usize..6,
        na in 1usize..4,
        targets in prop::collection::vec(-5.0f64..5.0, 24),
        observed in prop::collection::vec(any::<bool>(), 24),
    ) {
        let class = FunctionClass::<f64>::tabular(ns, na, 5.0).unwrap();
        let data: Vec<((usize, usize), f64)> = (0..ns * na)
            .filter(|&z| observed[z])
            .flat_map(|z| std::iter::repeat_n(((z / na, z % na), targets[z]), 1 + z % 3))
            .collect();
        prop_assume!(!data.is_empty());
        let FunctionHandle::Table(t) = class.fit_least_squares(&data).unwrap() else { unreachable!() };
        for ((s, a), y) in data {
            prop_assert!((t[s * na + a] - y).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Runs the whole driver: bookkeeping, determinism and monotone knowledge.
    #[test]
    fn driver_runs_keep_their_books(
        seed in any::<u64>(),
        mdp_seed in any::<u64>(),
        ns in 2usize..6,
        na in 1usize..3,
        exact in any::<bool>(),
        n_outer in 5usize..25,
    ) {
        let mdp = random_mdp::<f64>(mdp_seed, ns, na, 2.min(ns), 0.8).unwrap();
        let config = LpoConfig {
            n_outer,
            k_inner: 4,
            m_rollouts: 20,
            eta: Some(1.0),
            kappa: Some(2),
            w_bound: 40.0,
            c_mult: 0.01,
            mode: if exact { EvalMode::Exact } else { EvalMode::MonteCarlo },
            seed,
            ..LpoConfig::default()
        };
        let class = FunctionClass::tabular(ns, na, config.w_bound).unwrap();
        let a = run_lpo(&config, &mdp, &class).unwrap();
        let b = run_lpo(&config, &mdp, &class).unwrap();
        prop_assert_eq!(&a.metrics, &b.metrics);
        prop_assert_eq!(a.metrics.len(), n_outer);
        prop_assert_eq!(a.summary.inner_invocations, a.oracles.len());
        prop_assert_eq!(a.metrics.iter().filter(|r| r.switched).count(), a.summary.switches);
        prop_assert_eq!(a.metrics.last().unwrap().transitions_used, a.summary.total_transitions);
        // admissions only ever add weight
        for w in a.metrics.windows(2) {
            prop_assert!(w[1].dataset_weight >= w[0].dataset_weight);
            prop_assert!(w[1].transitions_used >= w[0].transitions_used);
        }
        // fixed ε: widths never rise, so the known set only grows
        for pair in a.oracles.windows(2) {
            let (old, new) = (&pair[0].1, &pair[1].1);
            for s in 0..ns {
                for act in 0..na {
                    prop_assert!(new.width(s, act) <= old.width(s, act) + 1e-12);
                    prop_assert!(!old.known_pair(s, act) || new.known_pair(s, act));
                }
            }
        }
        for w in a.metrics.windows(2) {
            prop_assert!(w[1].known_pair_fraction >= w[0].known_pair_fraction);
        }
    }
}
