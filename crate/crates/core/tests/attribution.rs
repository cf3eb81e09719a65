mod common;

use proptest::prelude::*;
use toxtrace_core::attribution::{align, rollout, source_contribution, LayerStack};
use toxtrace_core::seed::rng_for;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rollout_matches_block_matrix_product(
        s in 1usize..6, t in 1usize..6, enc in 0usize..4, dec in 1usize..4, key in any::<u64>(),
    ) {
        let mut rng = rng_for(key, "attr-prop", "stack");
        let stack = common::random_stack(&mut rng, s, t, enc, dec);
        let got = rollout(&stack).unwrap();
        let want = common::brute_rollout(&stack);
        prop_assert_eq!(got.len(), t);
        for (step, (g, w)) in got.iter().zip(&want).enumerate() {
            prop_assert_eq!(g.len(), s + step + 1);
            let sum: f64 = g.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(g.iter().all(|v| *v >= 0.0));
            for (a, b) in g.iter().zip(w) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            let c = source_contribution(g, s);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
            prop_assert!(align(g, s) < s);
        }
    }
}

#[test]
fn identity_layers_keep_prefix_mass_on_self() {
    // every decoder row puts all mass on the current target position
    let s = 3;
    let t = 4;
    let row = |step: usize| {
        let mut r = vec![0.0; s + step];
        r[s + step - 1] = 1.0;
        r
    };
    let stack = LayerStack {
        encoder_layers: vec![],
        decoder_layers: vec![(1..=t).map(row).collect(), (1..=t).map(row).collect()],
    };
    for (step, v) in rollout(&stack).unwrap().iter().enumerate() {
        assert_eq!(source_contribution(v, s), 0.0);
        assert_eq!(v[s + step], 1.0);
    }
}

#[test]
fn malformed_stacks_are_rejected() {
    let bad = LayerStack { encoder_layers: vec![], decoder_layers: vec![vec![vec![0.5, 0.5], vec![1.0]]] };
    assert!(rollout(&bad).is_err());
    let empty = LayerStack { encoder_layers: vec![], decoder_layers: vec![] };
    assert!(rollout(&empty).is_err());
}
