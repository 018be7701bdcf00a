mod common;

use common::dihedral;
use proptest::prelude::*;
use qfslab::covering::*;
use qfslab::logspace::GroupOrder;
use qfslab::permgroup::PermGroup;

fn ratio(domain: &CubeDomain, n: usize, q: u32) -> f64 {
    cube_count(domain, n, q, DEFAULT_CELL_BUDGET).unwrap().value / (q as f64).powi(n as i32)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[test]
fn refinement_never_increases_covered_volume() {
    for n in 1..=3 {
        let mut prev = f64::INFINITY;
        for q in [1, 2, 4, 8, 16, 32] {
            let r = ratio(&CubeDomain::Sorted, n, q);
            assert!(r <= prev, "n={n} q={q}");
            assert!(r >= 1.0 / factorial(n));
            prev = r;
        }
    }
}

#[test]
fn closed_cube_count_for_two_points() {
    // cell (i, j) meets {x₁ ≥ x₂} iff j ≤ i + 1
    for q in [1u32, 2, 4, 8, 16, 64, 256] {
        let count = cube_count(&CubeDomain::Sorted, 2, q, DEFAULT_CELL_BUDGET).unwrap().value;
        let q = q as f64;
        assert_eq!(count, q * (q + 1.0) / 2.0 + q - 1.0);
    }
}

#[test]
fn deviation_is_order_one_over_q() {
    // q·|ratio − 1/n!| stays bounded: 3/2 − 1/q for n = 2, decreasing for n = 3
    for q in [8u32, 16, 32, 64] {
        let d2 = (ratio(&CubeDomain::Sorted, 2, q) - 0.5) * q as f64;
        assert!((d2 - (1.5 - 1.0 / q as f64)).abs() < 1e-12);
    }
    let k3 = 8.0 * (ratio(&CubeDomain::Sorted, 3, 8) - 1.0 / 6.0).abs();
    for q in [16u32, 32, 64] {
        assert!((ratio(&CubeDomain::Sorted, 3, q) - 1.0 / 6.0).abs() <= k3 / q as f64);
    }
}

#[test]
fn tilde_domain_for_s_n_matches_sorted() {
    let d = CubeDomain::tilde_for(&PermGroup::symmetric(3).unwrap()).unwrap();
    for q in [4, 8] {
        assert_eq!(ratio(&d, 3, q), ratio(&CubeDomain::Sorted, 3, q));
    }
}

#[test]
fn trivial_group_covers_everything() {
    let d = CubeDomain::tilde_for(&PermGroup::trivial(3).unwrap()).unwrap();
    assert_eq!(ratio(&d, 3, 8), 1.0);
}

#[test]
fn lattice_agrees_with_monte_carlo() {
    for g in [PermGroup::symmetric(3).unwrap(), PermGroup::cyclic(3).unwrap(), dihedral(4)] {
        let n = g.degree();
        let d = if g.is_symmetric() { CubeDomain::Sorted } else { CubeDomain::tilde_for(&g).unwrap() };
        let mc = mc_fundamental_volume(&g, 200_000, 5).unwrap();
        let exact = 1.0 / g.order() as f64;
        assert!((mc.value - exact).abs() <= 4.0 * mc.std_error, "{} vs {exact}", mc.value);
        let k = 8.0 * (ratio(&d, n, 8) - exact).abs();
        let lat = ratio(&d, n, 16);
        assert!((lat - mc.value).abs() <= k / 16.0 + 4.0 * mc.std_error);
    }
}

#[test]
fn budget_is_enforced() {
    assert!(matches!(
        cube_count(&CubeDomain::Sorted, 6, 64, 1000),
        Err(qfslab::Error::BudgetExceeded { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_covering_monotone(n in 1usize..40, log_g in 0.0f64..50.0, eps in 1e-3f64..0.5, c in 0.1f64..10.0) {
        let g = GroupOrder::from_log10(log_g);
        let base = analytic_covering_ln(n, g, eps, c).unwrap();
        prop_assert!(analytic_covering_ln(n, GroupOrder::from_log10(log_g + 1.0), eps, c).unwrap() < base);
        prop_assert!(analytic_covering_ln(n, g, eps * 0.5, c).unwrap() > base);
        prop_assert!(analytic_covering_ln(n, g, eps, c * 2.0).unwrap() > base);
    }

    #[test]
    fn mc_is_seed_deterministic(seed in any::<u64>()) {
        let g = PermGroup::symmetric(3).unwrap();
        let a = mc_fundamental_volume(&g, 5000, seed).unwrap();
        let b = mc_fundamental_volume(&g, 5000, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
