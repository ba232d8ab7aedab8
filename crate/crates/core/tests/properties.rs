use proptest::prelude::*;

use cramer_core::bellman::{apply_discount_scale, field_distance};
use cramer_core::distributions::{
    cramer_distance, cramer_distance_energy_form, AtomicDistribution,
};
use cramer_core::io::bundled;
use cramer_core::random::{random_law, stream_rng};
use cramer_core::spectral::{h_eps_inner, reg_distance, spectral_embed};
use cramer_core::verify::random_field_pair;
use cramer_core::EpsGeometry;

fn law() -> impl Strategy<Value = AtomicDistribution> {
    prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..8).prop_map(|pairs| {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        AtomicDistribution::new(pairs.into_iter().map(|(x, w)| (x, w / total))).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cramer_is_a_metric(a in law(), b in law(), c in law()) {
        let ab = cramer_distance(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert!(cramer_distance(&a, &a) == 0.0);
        prop_assert!((ab - cramer_distance(&b, &a)).abs() <= 1e-14 * (1.0 + ab));
        let ac = cramer_distance(&a, &c);
        let cb = cramer_distance(&c, &b);
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn cramer_is_translation_invariant(a in law(), b in law(), shift in -10.0f64..10.0) {
        let t = AtomicDistribution::point_mass(shift);
        let d = cramer_distance(&a, &b);
        let moved = cramer_distance(&a.convolve(&t), &b.convolve(&t));
        prop_assert!((d - moved).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn cramer_scales_with_root_factor(a in law(), b in law(), c in 0.01f64..4.0) {
        let d = cramer_distance(&a, &b);
        let scaled = cramer_distance(&a.scale(c), &b.scale(c));
        prop_assert!((scaled - c.sqrt() * d).abs() <= 1e-10 * (1.0 + d));
    }

    #[test]
    fn energy_form_agrees(a in law(), b in law()) {
        let d = cramer_distance(&a, &b);
        let e = cramer_distance_energy_form(&a, &b);
        prop_assert!((d - e).abs() <= 1e-10 * d.max(1e-12));
    }

    #[test]
    fn regularised_distance_is_below_cramer_and_rises(a in law(), b in law()) {
        let d = cramer_distance(&a, &b);
        let mut prev = 0.0;
        for eps in [1.0, 1e-2, 1e-4, 1e-6] {
            let r = reg_distance(&a, &b, EpsGeometry::new(eps).unwrap());
            prop_assert!(r <= d + 1e-9);
            prop_assert!(r + 1e-12 >= prev);
            prev = r;
        }
    }

    #[test]
    fn h_eps_gram_is_positive(a in law(), b in law(), eps in 1e-4f64..10.0) {
        let geom = EpsGeometry::new(eps).unwrap();
        let u = spectral_embed(&a);
        let v = spectral_embed(&b);
        let uu = h_eps_inner(&u, &u, geom);
        let vv = h_eps_inner(&v, &v, geom);
        let uv = h_eps_inner(&u, &v, geom);
        prop_assert!(uu >= -1e-12 && vv >= -1e-12);
        prop_assert!(uv * uv <= uu * vv * (1.0 + 1e-9) + 1e-12);
    }
}

#[test]
fn discount_scaling_on_fields() {
    let (mdp, _) = bundled("two_state").unwrap();
    let b = mdp.return_support();
    for gamma in [0.1, 0.6, 0.99] {
        for k in 0..200 {
            let (f1, f2, d) = random_field_pair(&mut stream_rng(9, k), &mdp, b.lo, b.hi).unwrap();
            let t1 = apply_discount_scale(&f1, gamma).unwrap();
            let t2 = apply_discount_scale(&f2, gamma).unwrap();
            let scaled = field_distance(&t1, &t2).unwrap();
            assert!((scaled - gamma.sqrt() * d).abs() <= 1e-12, "{gamma} {k}");
        }
    }
}

#[test]
fn random_laws_have_unit_mass() {
    let mut rng = stream_rng(3, 0);
    for _ in 0..1000 {
        let l = random_law(&mut rng, -1.0, 1.0, 1, 10);
        assert!((l.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fixed_point_does_not_depend_on_the_start() {
    use cramer_core::bellman::evaluate_policy;
    use cramer_core::random::random_field_for;
    use cramer_core::verify::default_fixed_point_config;

    let (mdp, policy) = bundled("three_state").unwrap();
    let config = default_fixed_point_config(&mdp);
    let from_zero = evaluate_policy(&mdp, &policy, &config, None).unwrap();
    let start = random_field_for(&mut stream_rng(21, 0), &mdp).unwrap();
    let from_random = evaluate_policy(&mdp, &policy, &config, Some(&start)).unwrap();
    assert!(from_zero.converged && from_random.converged);
    let d = field_distance(&from_zero.field, &from_random.field).unwrap();
    assert!(d <= from_zero.banach_bound + from_random.banach_bound + 1e-13, "{d}");
}
