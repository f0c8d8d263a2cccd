use proptest::prelude::*;

use qrelax::corpus::{corpus, IntegrandSpec};
use qrelax::envelopes::{
    convex_envelope, eval_hull, lamination_envelope, lower_hull, EnvelopeTable, TableKind, XiGrid,
};
use qrelax::integrand::{AxisBox, DomainSpec, Formula, Integrand, MatrixShape};
use qrelax::mesh::CubeSpec;
use qrelax::setfun::{set_derivative, SetFunction};
use qrelax::Ext;

fn ext() -> impl Strategy<Value = Ext> {
    prop_oneof![4 => (-1e6f64..1e6).prop_map(Ext::Fin), 1 => Just(Ext::Inf)]
}

fn scalar_table(values: &[f64], lo: f64, hi: f64) -> EnvelopeTable {
    let shape = MatrixShape::new(1, 1).unwrap();
    let f = Integrand::new("q", shape, AxisBox::unit(1), DomainSpec::FullSpace, Formula::Quadratic).unwrap();
    let raw = EnvelopeTable::raw(&f, &[0.5], XiGrid::full(shape, lo, hi, values.len()).unwrap()).unwrap();
    let diagnostics = raw.diagnostics.clone();
    raw.with_values(TableKind::Raw, values.iter().map(|&v| Ext::Fin(v)).collect(), diagnostics).unwrap()
}

/// Lower convex hull value at node `k` of equispaced data, by brute force
/// over all chords.
fn chord_min(ys: &[f64], k: usize) -> f64 {
    let mut best = ys[k];
    for i in 0..=k {
        for j in k..ys.len() {
            if i < j {
                let lam = (j - k) as f64 / (j - i) as f64;
                best = best.min(lam * ys[i] + (1.0 - lam) * ys[j]);
            }
        }
    }
    best
}

proptest! {
    #[test]
    fn ext_addition_absorbs_infinity(a in ext(), b in ext()) {
        let s = a + b;
        prop_assert_eq!(s.is_inf(), a.is_inf() || b.is_inf());
        prop_assert_eq!(s, b + a);
        if let (Ext::Fin(x), Ext::Fin(y)) = (a, b) {
            prop_assert_eq!(s, Ext::Fin(x + y));
        }
    }

    #[test]
    fn ext_order_matches_min_max(a in ext(), b in ext()) {
        prop_assert!(a.min(b) <= a.max(b));
        prop_assert_eq!(a.max(b), if a >= b { a } else { b });
        prop_assert!(Ext::Fin(f64::MAX) < Ext::Inf);
    }

    #[test]
    fn ext_positive_scaling_is_monotone(a in ext(), b in ext(), s in 1e-3f64..1e3) {
        if a <= b {
            prop_assert!(a.scale(s) <= b.scale(s));
        }
    }

    #[test]
    fn ext_json_round_trip(a in ext()) {
        let text = serde_json::to_string(&a).unwrap();
        let back: Ext = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn lower_hull_is_convex_and_below(ys in proptest::collection::vec(-10.0f64..10.0, 2..30)) {
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
        let hull = lower_hull(&pts);
        for w in hull.windows(3) {
            let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            prop_assert!(s1 <= s2 + 1e-9);
        }
        for (k, &(x, y)) in pts.iter().enumerate() {
            let h = eval_hull(&hull, x).unwrap();
            prop_assert!(h <= y + 1e-9);
            prop_assert!((h - chord_min(&ys, k)).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn tabulated_convex_envelope_matches_chords(ys in proptest::collection::vec(-5.0f64..5.0, 3..25)) {
        let t = scalar_table(&ys, -1.0, 1.0);
        let c = convex_envelope(&t).unwrap();
        for k in 0..ys.len() {
            let v = c.values[k].to_f64();
            prop_assert!((v - chord_min(&ys, k)).abs() <= 1e-7 * (1.0 + ys[k].abs()), "{} vs {}", v, chord_min(&ys, k));
        }
        let again = convex_envelope(&c).unwrap();
        for (a, b) in again.values.iter().zip(&c.values) {
            prop_assert!((a.to_f64() - b.to_f64()).abs() <= 1e-7 * (1.0 + b.to_f64().abs()));
        }
    }

    #[test]
    fn planar_convex_envelope_is_discretely_convex(ys in proptest::collection::vec(0.0f64..5.0, 25)) {
        let shape = MatrixShape::new(1, 2).unwrap();
        let f = Integrand::new("q", shape, AxisBox::unit(2), DomainSpec::FullSpace, Formula::Quadratic).unwrap();
        let raw = EnvelopeTable::raw(&f, &[0.5, 0.5], XiGrid::full(shape, -1.0, 1.0, 5).unwrap()).unwrap();
        let diagnostics = raw.diagnostics.clone();
        let t = raw.with_values(TableKind::Raw, ys.iter().map(|&v| Ext::Fin(v)).collect(), diagnostics).unwrap();
        let c = convex_envelope(&t).unwrap();
        let at = |i: usize, j: usize| c.values[5 * i + j].to_f64();
        for k in 0..25 {
            prop_assert!(c.values[k].to_f64() <= ys[k] + 1e-9);
        }
        for i in 0..5 {
            for j in 1..4 {
                prop_assert!(2.0 * at(i, j) <= at(i, j - 1) + at(i, j + 1) + 1e-6);
                prop_assert!(2.0 * at(j, i) <= at(j - 1, i) + at(j + 1, i) + 1e-6);
            }
        }
        for i in 1..4 {
            for j in 1..4 {
                prop_assert!(2.0 * at(i, j) <= at(i - 1, j - 1) + at(i + 1, j + 1) + 1e-6);
            }
        }
    }

    #[test]
    fn lamination_lies_between_convex_and_raw(ys in proptest::collection::vec(-5.0f64..5.0, 3..20)) {
        let t = scalar_table(&ys, -1.0, 1.0);
        let lam = lamination_envelope(&t, 4).unwrap();
        let conv = convex_envelope(&t).unwrap();
        for k in 0..ys.len() {
            prop_assert!(lam.values[k].to_f64() <= ys[k] + 1e-9);
            prop_assert!(conv.values[k].to_f64() <= lam.values[k].to_f64() + 1e-7);
        }
    }

    #[test]
    fn subsampling_a_refined_table_recovers_the_coarse_one(count in 2usize..7, factor in 1usize..5, lo in -3.0f64..0.0, hi in 0.1f64..3.0) {
        let f = &corpus()[0].integrand;
        let coarse = XiGrid::full(f.shape, lo, hi, count).unwrap();
        let fine = EnvelopeTable::raw(f, &[0.5], coarse.refined(factor).unwrap()).unwrap();
        let direct = EnvelopeTable::raw(f, &[0.5], coarse.clone()).unwrap();
        let sub = fine.subsample(&coarse, factor).unwrap();
        for (a, b) in sub.values.iter().zip(&direct.values) {
            prop_assert!((a.to_f64() - b.to_f64()).abs() <= 1e-9 * (1.0 + b.to_f64().abs()));
        }
    }

    #[test]
    fn dyadic_children_tile_the_parent(cx in 0.0f64..1.0, cy in 0.0f64..1.0, h in 0.01f64..1.0, depth in 0u32..4) {
        let q = CubeSpec::new(vec![cx, cy], h).unwrap();
        let kids = q.dyadic_children(depth);
        prop_assert_eq!(kids.len(), 4usize.pow(depth));
        let total: f64 = kids.iter().map(CubeSpec::volume).sum();
        prop_assert!((total - q.volume()).abs() <= 1e-12 * q.volume());
        for (i, a) in kids.iter().enumerate() {
            prop_assert!(q.contains_cube(a));
            for b in &kids[i + 1..] {
                prop_assert!(a.interior_disjoint(b));
            }
        }
    }

    #[test]
    fn volume_has_unit_density(x in proptest::collection::vec(-2.0f64..2.0, 1..4)) {
        let r = set_derivative(&SetFunction::volume(), &x, &[0.1, 0.05, 0.025], 1e-9).unwrap();
        prop_assert!(r.converged);
        prop_assert!((r.limit.to_f64() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corpus_specs_survive_toml(i in 0usize..8, xi in proptest::collection::vec(-1.5f64..1.5, 4), x in 0.05f64..0.95) {
        let entries = corpus();
        let f = &entries[i % entries.len()].integrand;
        let text = IntegrandSpec::from_integrand(f).unwrap().to_toml().unwrap();
        let g = IntegrandSpec::from_toml(&text).unwrap().build().unwrap();
        let p = vec![x; f.shape.d];
        let v = &xi[..f.shape.len()];
        prop_assert_eq!(f.value(&p, v), g.value(&p, v));
    }
}
