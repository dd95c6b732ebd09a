use hvsinglet_core::models::{cerf_prob, family1_c, family2_c, recipe_bound, ProbabilityTable};
use hvsinglet_core::simulator::sample_outcome;
use hvsinglet_core::validator::decompose_delta;
use hvsinglet_core::{dot, rotate_towards, Outcome, RandomStream, UnitVector};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = UnitVector> {
    (0.0f64..std::f64::consts::PI, 0.0f64..std::f64::consts::TAU)
        .prop_map(|(t, p)| UnitVector::from_angles(t, p))
}

fn in_unit_interval(t: &ProbabilityTable) -> bool {
    t.entries()
        .iter()
        .all(|&p| (-1e-12..=0.5 + 1e-12).contains(&p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn normalize_gives_unit_norm(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0) {
        prop_assume!(x * x + y * y + z * z > 1e-6);
        let [a, b, c] = UnitVector::normalize(x, y, z).unwrap().components();
        prop_assert!((a * a + b * b + c * c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dot_is_symmetric_and_bounded(a in unit(), b in unit()) {
        prop_assert_eq!(dot(&a, &b), dot(&b, &a));
        prop_assert!(dot(&a, &b).abs() <= 1.0);
        prop_assert_eq!(dot(&a, &a), 1.0);
        prop_assert_eq!(dot(&a, &-a), -1.0);
    }

    #[test]
    fn at_inner_product_hits_target(a in unit(), x in -1.0f64..=1.0) {
        let b = a.at_inner_product(&a.any_orthogonal(), x);
        prop_assert!((dot(&a, &b) - x).abs() < 1e-12);
    }

    #[test]
    fn rotate_towards_inner_product(a in unit(), d in unit(), eps in 1e-6f64..=0.1) {
        prop_assume!(dot(&a, &d).abs() < 0.99);
        let b = rotate_towards(&a, &d, eps).unwrap();
        prop_assert!((dot(&a, &b) - 1.0 / (1.0 + eps * eps).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn canonical_tables_have_trivial_marginals(x in -1.0f64..=1.0, c in -2.0f64..2.0) {
        let t = ProbabilityTable::canonical(x, c);
        prop_assert!((t.sum() - 1.0).abs() < 1e-12);
        for o in Outcome::ALL {
            prop_assert!((t.marginal_first(o) - 0.5).abs() < 1e-12);
            prop_assert!((t.marginal_second(o) - 0.5).abs() < 1e-12);
        }
        prop_assert!((t.correlator() - (c - x)).abs() < 1e-12);
    }

    #[test]
    fn canonical_decomposition_is_pure_correlation(a in unit(), b in unit(), g in -0.49f64..0.49) {
        let c = family1_c(g, &a, &b);
        let d = decompose_delta(&ProbabilityTable::canonical(dot(&a, &b), c), &a, &b).unwrap();
        prop_assert!(d.a_term.abs() < 1e-12 && d.b_term.abs() < 1e-12);
        prop_assert!((d.c_term - c).abs() < 1e-12);
    }

    #[test]
    fn family1_is_positive(a in unit(), b in unit(), g in -0.4999f64..0.4999) {
        prop_assert!(in_unit_interval(&ProbabilityTable::canonical(dot(&a, &b), family1_c(g, &a, &b))));
    }

    #[test]
    fn family2_is_positive(a in unit(), b in unit(), u in unit(), g in -0.5f64..=0.5) {
        prop_assert!(in_unit_interval(&ProbabilityTable::canonical(dot(&a, &b), family2_c(g, &u, &a, &b))));
    }

    #[test]
    fn excess_vanishes_at_coincidence(a in unit(), u in unit(), g in -0.5f64..=0.5) {
        for b in [a, -a] {
            prop_assert_eq!(family1_c(g, &a, &b), 0.0);
            prop_assert!(family2_c(g, &u, &a, &b).abs() < 1e-15);
        }
    }

    #[test]
    fn cerf_tables_are_half_or_zero(u in unit(), v in unit(), a in unit(), b in unit()) {
        if let Ok(t) = cerf_prob(&u, &v, &a, &b) {
            prop_assert!(t.entries().iter().all(|&p| p == 0.0 || p == 0.5));
            for o in Outcome::ALL {
                prop_assert_eq!(t.marginal_first(o), 0.5);
                prop_assert_eq!(t.marginal_second(o), 0.5);
            }
        }
    }

    #[test]
    fn recipe_bound_is_envelope_minimum(s in 1.0f64..4.0, x in -0.999f64..0.999) {
        let b = recipe_bound(s).unwrap();
        prop_assert!(b <= 1.0 / ((1.0 - x).powf(s - 1.0) * (1.0 + x).powf(s)) + 1e-12);
    }

    #[test]
    fn sampled_cell_has_positive_probability(p in proptest::array::uniform4(0.0f64..1.0), seed in any::<u64>()) {
        let s: f64 = p.iter().sum();
        prop_assume!(s > 1e-3);
        let t = ProbabilityTable::from_entries(p.map(|v| v / s));
        let mut rng = RandomStream::new(seed, 0);
        for _ in 0..16 {
            let (a, b) = sample_outcome(&t, &mut rng);
            prop_assert!(t.get(a, b) > 0.0);
        }
    }

    #[test]
    fn derived_streams_are_reproducible(seed in any::<u64>(), id in any::<u64>(), child in any::<u64>()) {
        let mut x = RandomStream::new(seed, id).derive(child);
        let mut y = RandomStream::new(seed, id).derive(child);
        for _ in 0..8 {
            prop_assert_eq!(x.uniform().to_bits(), y.uniform().to_bits());
        }
    }
}
