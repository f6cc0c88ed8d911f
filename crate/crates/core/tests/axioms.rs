use biasprobe_core::oracle::MockModel;
use biasprobe_core::shapley::{
    exact_shapley, permutation_oracle, sampled_shapley, shapley_weight, shapley_weight_f64, Attribution,
    Method, MIN_PERMUTATIONS,
};
use biasprobe_core::{CoalitionMask, Error, FnGame, Game};
use num_rational::Ratio;
use proptest::prelude::*;

fn majority(m: CoalitionMask) -> f64 {
    if m.size() >= 2 {
        1.0
    } else {
        0.0
    }
}

fn max_diff(a: &Attribution, b: &Attribution) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn logistic_game() -> impl Strategy<Value = MockModel> {
    (1usize..=8).prop_flat_map(|n| {
        (-2.0f64..2.0, prop::collection::vec(-2.0f64..2.0, n)).prop_map(|(b, w)| MockModel::logistic(b, w))
    })
}

#[test]
fn logistic_reference_game_matches_enumeration() {
    let game = MockModel::logistic(-1.0, vec![0.5, 1.0, -0.3]);
    let exact = exact_shapley(&game).unwrap();
    let oracle = permutation_oracle(&game).unwrap();
    assert!(max_diff(&exact, &oracle) <= 1e-12);
    assert_eq!(oracle.method, Method::Enumerated);
    // Signs follow the weights for a monotone link.
    assert!(exact.values[1] > exact.values[0] && exact.values[0] > 0.0 && exact.values[2] < 0.0);
}

#[test]
fn majority_game_is_one_third_each() {
    let game = FnGame::new(3, majority);
    for a in [exact_shapley(&game).unwrap(), permutation_oracle(&game).unwrap()] {
        for v in &a.values {
            assert!((v - 1.0 / 3.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn sampled_majority_converges_and_is_reproducible() {
    let game = FnGame::new(3, majority);
    let a = sampled_shapley(&game, 30_000, 7).unwrap();
    for v in &a.values {
        assert!((v - 1.0 / 3.0).abs() <= 0.02, "{v}");
    }
    let b = sampled_shapley(&game, 30_000, 7).unwrap();
    assert_eq!(
        a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.method, Method::Sampled { permutations: 30_000, seed: 7 });
    assert!(a.standard_errors.as_ref().unwrap().iter().all(|se| *se > 0.0 && *se < 0.01));
}

#[test]
fn sampled_additive_game_is_exact_per_ordering() {
    let w = [0.25, -0.5, 0.125, 0.0625];
    let game = FnGame::new(4, move |m: CoalitionMask| m.players().map(|i| w[i]).sum());
    let a = sampled_shapley(&game, 100, 1).unwrap();
    for (v, w) in a.values.iter().zip(w) {
        assert!((v - w).abs() <= 1e-12);
    }
}

#[test]
fn sampled_rejects_too_few_orderings() {
    let game = FnGame::new(3, majority);
    assert!(matches!(
        sampled_shapley(&game, 50, 0),
        Err(Error::TooFewPermutations { got: 50, min: MIN_PERMUTATIONS })
    ));
}

#[test]
fn player_bounds() {
    assert!(matches!(exact_shapley(&FnGame::new(0, |_| 0.0)), Err(Error::NoPlayers)));
    assert!(matches!(
        exact_shapley(&FnGame::new(25, |_| 0.0)),
        Err(Error::PlayerCapExceeded { found: 25, cap: 24 })
    ));
    assert!(permutation_oracle(&FnGame::new(9, |_| 0.0)).is_err());
}

#[test]
fn game_errors_propagate() {
    struct Failing;
    impl Game for Failing {
        fn player_count(&self) -> usize {
            3
        }
        fn value(&self, m: CoalitionMask) -> biasprobe_core::Result<f64> {
            if m.size() == 2 {
                Err(Error::Network("down".into()))
            } else {
                Ok(0.0)
            }
        }
    }
    assert!(matches!(exact_shapley(&Failing), Err(Error::Network(_))));
    assert!(matches!(sampled_shapley(&Failing, 100, 0), Err(Error::Network(_))));
}

#[test]
fn weight_identity_for_every_width() {
    for n in 1..=20usize {
        let mut exact = Ratio::new(0u128, 1);
        let mut float = 0.0;
        let mut binom = 1u128;
        for s in 0..n {
            exact += shapley_weight(n, s).unwrap() * binom;
            float += shapley_weight_f64(n, s).unwrap() * binom as f64;
            binom = binom * (n - 1 - s) as u128 / (s + 1) as u128;
        }
        assert_eq!(exact, Ratio::new(1, 1), "n={n}");
        assert!((float - 1.0).abs() <= 1e-12, "n={n}: {float}");
    }
    assert!(shapley_weight(3, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matches_enumeration(game in logistic_game()) {
        let exact = exact_shapley(&game).unwrap();
        let oracle = permutation_oracle(&game).unwrap();
        prop_assert!(max_diff(&exact, &oracle) <= 1e-12);
    }

    #[test]
    fn efficiency(game in logistic_game()) {
        let a = exact_shapley(&game).unwrap();
        let sum: f64 = a.values.iter().sum();
        prop_assert!((sum - (a.v_full - a.v_empty)).abs() <= 1e-9);
        prop_assert!(a.efficiency_residual <= 1e-9);
    }

    #[test]
    fn dummy_player_gets_zero(b in -2.0f64..2.0, mut w in prop::collection::vec(-2.0f64..2.0, 1..8), at in 0usize..8) {
        let at = at % (w.len() + 1);
        w.insert(at, 0.0);
        let a = exact_shapley(&MockModel::logistic(b, w)).unwrap();
        prop_assert!(a.values[at].abs() <= 1e-12);
    }

    #[test]
    fn symmetric_players_share_equally(b in -2.0f64..2.0, mut w in prop::collection::vec(-2.0f64..2.0, 2..8), twin in -2.0f64..2.0) {
        w[0] = twin;
        w[1] = twin;
        let a = exact_shapley(&MockModel::logistic(b, w)).unwrap();
        prop_assert!((a.values[0] - a.values[1]).abs() <= 1e-12);
    }

    #[test]
    fn linearity(
        b1 in -2.0f64..2.0, b2 in -2.0f64..2.0,
        w1 in prop::collection::vec(-2.0f64..2.0, 5),
        w2 in prop::collection::vec(-2.0f64..2.0, 5),
        alpha in -3.0f64..3.0,
    ) {
        let g1 = MockModel::logistic(b1, w1);
        let g2 = MockModel::logistic(b2, w2);
        let (c1, c2) = (g1.clone(), g2.clone());
        let combo = FnGame::new(5, move |m| alpha * c1.evaluate(m) + c2.evaluate(m));
        let a1 = exact_shapley(&g1).unwrap();
        let a2 = exact_shapley(&g2).unwrap();
        let ac = exact_shapley(&combo).unwrap();
        for i in 0..5 {
            prop_assert!((ac.values[i] - (alpha * a1.values[i] + a2.values[i])).abs() <= 1e-12);
        }
    }
}
