use proptest::prelude::*;
use qfslab::relunet::*;

fn sorted_desc(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn tie_vector() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=8, 1i32..6).prop_flat_map(|(n, levels)| {
        prop::collection::vec((-levels..=levels).prop_map(|k| k as f64 * 0.25), n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sort_matches_oracle_with_ties(x in tie_vector()) {
        let net = sort_network(x.len()).unwrap();
        prop_assert_eq!(net.evaluate(&x).unwrap(), sorted_desc(&x));
    }

    // uniform draws on the 2⁻⁵³ grid, as produced by `rand`
    #[test]
    fn sort_exact_on_uniform_draws(x in prop::collection::vec(any::<u64>().prop_map(|k| (k >> 11) as f64 / 9007199254740992.0), 1..=7)) {
        let net = sort_network(x.len()).unwrap();
        prop_assert_eq!(net.evaluate(&x).unwrap(), sorted_desc(&x));
    }

    #[test]
    fn kth_largest(x in tie_vector(), k in any::<prop::sample::Index>()) {
        let k = k.index(x.len()) + 1;
        let net = max_k_network(x.len(), k).unwrap();
        prop_assert_eq!(net.evaluate(&x).unwrap(), vec![sorted_desc(&x)[k - 1]]);
        prop_assert_eq!(net.depth(), predicted_depth(x.len(), k));
    }
}

#[test]
fn depth_formula_for_every_n() {
    for n in 1..=9 {
        assert_eq!(sort_network(n).unwrap().depth(), predicted_sort_depth(n));
    }
}

#[test]
fn json_round_trip_preserves_outputs() {
    let net = sort_network(4).unwrap();
    let text = serde_json::to_string(&net).unwrap();
    let back: ReluNetwork = serde_json::from_str(&text).unwrap();
    let x = [0.5, -1.0, 3.0, 0.5];
    assert_eq!(back.evaluate(&x).unwrap(), net.evaluate(&x).unwrap());
    assert_eq!(back.depth(), net.depth());
}
