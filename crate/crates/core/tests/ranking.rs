mod common;

use proptest::prelude::*;

use hopsched_core::rank::{analyse, verify_ranking, Ranking, DEFAULT_PATH_LIMIT};

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, max_global_rejects: 20_000, ..ProptestConfig::default() })]

    /// A flow-loop exists exactly when no strictly increasing ranking does.
    #[test]
    fn loop_iff_no_ranking(seed in any::<u64>(), n in 2usize..=6, flows in 0usize..=4, ring in 0usize..=6) {
        let mut rng = common::rng(seed);
        let inst = common::random_flow_instance(&mut rng, n, flows, 4, false, ring);
        prop_assume!(inst.as_ref().is_some_and(|(_, fs)| !fs.is_empty()));
        let (_, fs) = inst.unwrap();
        prop_assert_eq!(common::has_flow_loop(&fs), !common::brute_ranking_exists(&fs));
    }

    #[test]
    fn rank_assignment_on_flow_trees_is_monotone_and_bounded(
        seed in any::<u64>(),
        n in 2usize..=15,
        flows in 1usize..=8,
    ) {
        let mut rng = common::rng(seed);
        let inst = common::random_flow_instance(&mut rng, n, flows, 5, true, 0);
        prop_assume!(inst.is_some());
        if let Some((_, fs)) = inst {
            prop_assert!(!common::has_flow_loop(&fs));
            let reports = analyse(&fs, DEFAULT_PATH_LIMIT).unwrap();
            let mut all = Ranking::default();
            for r in &reports {
                prop_assert!(r.loops.is_empty());
                let a = r.assignment.as_ref().unwrap();
                let bound = (r.component.links.len() * r.paths.len()) as u32;
                for (&l, &v) in &a.ranking.ranks {
                    prop_assert!(v >= 1 && v <= bound, "rank {} of link {} exceeds {}", v, l, bound);
                }
                all.ranks.extend(a.ranking.ranks.iter());
            }
            prop_assert_eq!(verify_ranking(&fs, &all), None);
        }
    }
}
