mod common;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in [1, 2, 3] {
        for (name, err) in common::gradient_suite(seed) {
            assert!(err <= 1e-4, "seed {seed}, {name}: max relative error {err:e}");
        }
    }
}
