use nlmg::curvature::{curvature_at, curvature_field, weak_pairing};
use nlmg::field::{Aabb, ExteriorModel, GraphField, QuadratureSpec};
use nlmg::kernel::FracParams;
use proptest::prelude::*;

fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (1.0 - x * x).powi(3)
    } else {
        0.0
    }
}

fn zero_ext(n: usize) -> ExteriorModel {
    ExteriorModel::Affine { gradient: vec![0.0; n], offset: 0.0 }
}

/// `slope·x + amp·bump((x - c)/w)` on `[-2, 2]` with 65 nodes.
fn profile(alpha: f64, slope: f64, amp: f64, c: f64, w: f64) -> GraphField {
    let p = FracParams::new(1, alpha).unwrap();
    let ext = ExteriorModel::Affine { gradient: vec![slope], offset: 0.0 };
    GraphField::from_fn(p, Aabb::cube(1, 2.0).unwrap(), 1.0 / 16.0, ext, |x| {
        slope * x[0] + amp * bump((x[0] - c) / w)
    })
    .unwrap()
}

fn alpha() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.3, 0.5, 0.7])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn affine_curves_are_null_within_err(g in -5.0f64..5.0, c in -3.0f64..3.0, a in alpha()) {
        let p = FracParams::new(1, a).unwrap();
        let ext = ExteriorModel::Affine { gradient: vec![g], offset: c };
        let u = GraphField::from_fn(p, Aabb::cube(1, 1.0).unwrap(), 1.0 / 16.0, ext, |x| g * x[0] + c).unwrap();
        let f = curvature_field(&u, &QuadratureSpec::default()).unwrap();
        for (v, e) in f.values.iter().zip(&f.error_bounds) {
            prop_assert!(v.abs() <= *e, "{v} vs {e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn affine_surfaces_are_null_within_err(g0 in -5.0f64..5.0, g1 in -5.0f64..5.0, a in alpha()) {
        let p = FracParams::new(2, a).unwrap();
        let ext = ExteriorModel::Affine { gradient: vec![g0, g1], offset: 0.0 };
        let u = GraphField::from_fn(p, Aabb::cube(2, 1.0).unwrap(), 0.25, ext, |x| g0 * x[0] + g1 * x[1]).unwrap();
        let f = curvature_field(&u, &QuadratureSpec::default()).unwrap();
        for (v, e) in f.values.iter().zip(&f.error_bounds) {
            prop_assert!(v.abs() <= *e, "{v} vs {e}");
        }
    }

    #[test]
    fn negation_negates(slope in -1.0f64..1.0, amp in -2.0f64..2.0, c in -0.5f64..0.5, x in -1.5f64..1.5, a in alpha()) {
        let u = profile(a, slope, amp, c, 0.8);
        let q = QuadratureSpec::default();
        let plus = curvature_at(&u, &[x], &q).unwrap();
        let minus = curvature_at(&u.negated(), &[x], &q).unwrap();
        prop_assert_eq!(plus.value, -minus.value);
        prop_assert_eq!(plus.err, minus.err);
    }

    #[test]
    fn reflection_preserves_value(slope in -1.0f64..1.0, amp in -2.0f64..2.0, c in -0.5f64..0.5, k in 3usize..62, a in alpha()) {
        let u = profile(a, slope, amp, c, 0.8);
        let r = profile(a, -slope, amp, -c, 0.8);
        let q = QuadratureSpec::default();
        let x = u.node_position(k)[0];
        let v = curvature_at(&u, &[x], &q).unwrap();
        let w = curvature_at(&r, &[-x], &q).unwrap();
        prop_assert!((v.value - w.value).abs() <= 1e-10 * (1.0 + v.value.abs()), "{v:?} vs {w:?}");
    }

    #[test]
    fn translation_preserves_value(shift in -3.0f64..3.0, lift in -3.0f64..3.0, k in 3usize..62, a in alpha()) {
        let u = profile(a, 0.3, 1.0, 0.0, 0.8);
        let p = FracParams::new(1, a).unwrap();
        // u(· - shift) + lift on the shifted window
        let ext = ExteriorModel::Affine { gradient: vec![0.3], offset: lift - 0.3 * shift };
        let window = Aabb::new(vec![-2.0 + shift], vec![2.0 + shift]).unwrap();
        let t = GraphField::from_fn(p, window, 1.0 / 16.0, ext, |x| lift + 0.3 * (x[0] - shift) + bump((x[0] - shift) / 0.8)).unwrap();
        let q = QuadratureSpec::default();
        let x = u.node_position(k)[0];
        let v = curvature_at(&u, &[x], &q).unwrap();
        let w = curvature_at(&t, &[x + shift], &q).unwrap();
        prop_assert!((v.value - w.value).abs() <= 1e-9 * (1.0 + v.value.abs()) + v.err * 1e-6, "{v:?} vs {w:?}");
    }

    #[test]
    fn strict_maximum_is_positive(amp in 0.05f64..5.0, w in 0.3f64..1.5, a in alpha()) {
        let u = profile(a, 0.0, amp, 0.0, w);
        let q = QuadratureSpec::default();
        prop_assert!(curvature_at(&u, &[0.0], &q).unwrap().value > 0.0);
        prop_assert!(curvature_at(&u.negated(), &[0.0], &q).unwrap().value < 0.0);
    }

    #[test]
    fn pairing_is_linear_and_matches_pointwise(
        slope in -1.0f64..1.0, amp in -2.0f64..2.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, a in alpha()
    ) {
        let u = profile(a, slope, amp, 0.0, 0.8);
        let p = u.params();
        let test_fn = |c: f64| GraphField::from_fn(p, u.window().clone(), u.spacing(), zero_ext(1), |x| bump((x[0] - c) / 0.5)).unwrap();
        let (v1, v2) = (test_fn(c1), test_fn(c2));
        let sum = v1.with_values(v1.values().iter().zip(v2.values()).map(|(a, b)| a + b).collect()).unwrap();
        let q = QuadratureSpec::default();
        let (p1, p2, p12) = (weak_pairing(&u, &v1, &q).unwrap(), weak_pairing(&u, &v2, &q).unwrap(), weak_pairing(&u, &sum, &q).unwrap());
        let scale = p1.value.abs() + p2.value.abs() + 1.0;
        prop_assert!((p12.value - p1.value - p2.value).abs() <= 1e-12 * scale, "{p1:?} {p2:?} {p12:?}");

        let h = u.spacing();
        let pointwise: f64 = (0..u.len())
            .filter(|&k| v1.values()[k] != 0.0)
            .map(|k| curvature_at(&u, &u.node_position(k), &q).unwrap().value * v1.values()[k] * h)
            .sum();
        prop_assert!((pointwise - p1.value).abs() <= p1.err + 1e-12 * scale, "{pointwise} vs {p1:?}");
    }
}

#[test]
fn scaling_law_on_the_bump() {
    let q = QuadratureSpec::default();
    for a in [0.3, 0.5, 0.7] {
        let p = FracParams::new(1, a).unwrap();
        let u = GraphField::from_fn(p, Aabb::cube(1, 2.0).unwrap(), 1.0 / 32.0, zero_ext(1), |x| bump(x[0])).unwrap();
        for r in [0.5, 2.0, 4.0] {
            let ur = u.similarity(&[0.0], 0.0, r).unwrap();
            for x in [0.0, 0.1, -0.23] {
                let lhs = curvature_at(&ur, &[x], &q).unwrap();
                let rhs = curvature_at(&u, &[r * x], &q).unwrap();
                let s = r.powf(a);
                let gap = (lhs.value - s * rhs.value).abs();
                assert!(gap <= 2.0 * (lhs.err + s * rhs.err), "a={a} r={r} x={x}: {lhs:?} {rhs:?}");
            }
        }
    }
}

#[test]
fn bounded_pairing_against_balls() {
    // |⟨𝒰u, χ_{B_ρ}⟩| ≤ 2Λ ∬_{B_ρ × B_ρ^c} |x - y|^{-n-α}; the taper is an average of
    // indicators of balls with ρ ≤ 1.25R, and in one dimension the double
    // integral is 2(2ρ)^{1-α}/(α(1-α)).
    let q = QuadratureSpec::default();
    let a = 0.5;
    let p = FracParams::new(1, a).unwrap();
    let u = GraphField::from_fn(p, Aabb::cube(1, 12.0).unwrap(), 1.0 / 8.0, zero_ext(1), |x| bump(x[0])).unwrap();
    for r in [2.0, 4.0, 8.0] {
        let v = nlmg::dynamics::mollified_ball(&u, r).unwrap();
        let pair = weak_pairing(&u, &v, &q).unwrap();
        let shell = 2.0 * (2.0 * 1.25 * r).powf(1.0 - a) / (a * (1.0 - a));
        let bound = 2.0 * p.lambda() * shell;
        assert!(pair.value.abs() <= bound + pair.err, "R={r}: {pair:?} vs {bound}");
    }
}
