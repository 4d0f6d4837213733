mod common;

use proptest::prelude::*;
use vrmec::agents::{log_policy, HeadLayout};
use vrmec::env::{enumerate_actions, random_valid_action, validate_action};
use vrmec::rng;

#[test]
fn library_matches_reference_formulas() {
    for (name, err) in common::oracle_suite(200) {
        assert!(err <= 1e-9, "{name}: relative error {err:e}");
    }
}

#[test]
fn mrt_of_single_user_is_matched_filter() {
    let h = vec![(3.0, 4.0), (0.0, 0.0)];
    let v = common::precoder(std::slice::from_ref(&h), 4.0);
    assert!((common::gain(&h, &v) - 4.0 * 25.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn log_policy_matches_reference(
        seed in 0u64..1000,
        users in 1usize..4,
        extra in 0usize..3,
        n_fov in 1usize..4,
        migration in any::<bool>(),
    ) {
        use rand::Rng;
        let mecs = users + extra;
        let layout = HeadLayout { users, mecs, n_fov, migration };
        let mut r = rng::stream(seed, "log-policy");
        let logits: Vec<f64> = (0..layout.outputs()).map(|_| r.random_range(-3.0..3.0)).collect();
        let fovs: Vec<usize> = (0..users).map(|_| r.random_range(0..n_fov)).collect();
        let a = random_valid_action(&fovs, mecs, n_fov, migration, &mut r);
        let (got, _) = log_policy(&layout, &logits, &a, &fovs).unwrap();
        let want = common::reference_log_policy(&layout, &logits, &a, &fovs);
        prop_assert!(common::rel_err(got, want) < 1e-12);
    }

    #[test]
    fn policy_probabilities_sum_to_one_over_valid_actions(seed in 0u64..200, migration in any::<bool>()) {
        use rand::Rng;
        let (users, mecs, n_fov) = (2, 3, 2);
        let layout = HeadLayout { users, mecs, n_fov, migration };
        let mut r = rng::stream(seed, "policy-mass");
        let logits: Vec<f64> = (0..layout.outputs()).map(|_| r.random_range(-2.0..2.0)).collect();
        let fovs: Vec<usize> = (0..users).map(|_| r.random_range(0..n_fov)).collect();
        let mass: f64 = enumerate_actions(&fovs, mecs, n_fov, migration)
            .iter()
            .map(|a| log_policy(&layout, &logits, a, &fovs).unwrap().0.exp())
            .sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_is_valid_and_no_worse_than_any_single_move(seed in 0u64..500, migration in any::<bool>()) {
        use rand::Rng;
        let (users, mecs, n_fov) = (3, 3, 2);
        let layout = HeadLayout { users, mecs, n_fov, migration };
        let mut r = rng::stream(seed, "greedy");
        let q: Vec<f64> = (0..layout.outputs()).map(|_| r.random_range(-1.0..1.0)).collect();
        let fovs: Vec<usize> = (0..users).map(|_| r.random_range(0..n_fov)).collect();
        let g = layout.greedy(&q, &fovs);
        prop_assert!(validate_action(&g, &fovs, mecs, n_fov, migration).is_ok());
        let value = HeadLayout::joint_value(&q, &layout.selected(&g));
        // no valid action differing in one user's serving MEC (with its best
        // rendering) is strictly better
        for a in enumerate_actions(&fovs, mecs, n_fov, migration) {
            let moved = (0..users).filter(|&k| a.serving[k] != g.serving[k]).count();
            if moved == 0 {
                let v = HeadLayout::joint_value(&q, &layout.selected(&a));
                prop_assert!(v <= value + 1e-12);
            }
            if moved == 1 && !migration {
                let v = HeadLayout::joint_value(&q, &layout.selected(&a));
                prop_assert!(v <= value + 1e-12);
            }
        }
    }
}
