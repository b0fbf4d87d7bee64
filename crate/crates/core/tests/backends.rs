//! Property tests over the multiplication backends.

use ksmm_core::{
    approx_equal, default_tolerances, multiply, with_threads, Backend, BatchMatrix, KsFactor,
    KsPattern, Layout, PreparedFactor, TilePlan,
};
use proptest::prelude::*;

fn pattern() -> impl Strategy<Value = KsPattern> {
    (1usize..=4, 1usize..=24, 1usize..=24, 1usize..=6)
        .prop_map(|(a, b, c, d)| KsPattern::new(a, b, c, d).unwrap())
}

fn layout() -> impl Strategy<Value = Layout> {
    prop_oneof![Just(Layout::BatchSizeFirst), Just(Layout::BatchSizeLast)]
}

fn batch() -> impl Strategy<Value = usize> {
    prop_oneof![Just(1usize), Just(7), Just(64), 0usize..40]
}

fn plan() -> impl Strategy<Value = TilePlan> {
    (1usize..=9, 1usize..=9, 1usize..=20).prop_map(|(b, c, n)| TilePlan::new(b, c, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backends_agree_with_reference(p in pattern(), layout in layout(), batch in batch(), seed in any::<u64>()) {
        let k = KsFactor::<f32>::random(p, seed);
        let x = BatchMatrix::<f32>::random_normal(batch, p.in_dim(), layout, seed ^ 1);
        let reference = multiply(&x, &k, Backend::Reference).unwrap();
        let (rel, abs) = default_tolerances(p.c());
        for backend in Backend::ALL {
            let y = multiply(&x, &k, backend).unwrap();
            prop_assert_eq!(y.layout(), layout);
            let report = approx_equal(&y, &reference, rel, abs).unwrap();
            prop_assert!(report.equal, "{} on {:?}: {:?}", backend.name(), p, report);
        }
    }

    #[test]
    fn fused_is_linear(p in pattern(), layout in layout(), batch in 1usize..20, seed in any::<u64>(),
                       alpha in -2.0f32..2.0, beta in -2.0f32..2.0) {
        let k = KsFactor::<f32>::random(p, seed);
        let x1 = BatchMatrix::<f32>::random_normal(batch, p.in_dim(), layout, seed ^ 2);
        let x2 = BatchMatrix::<f32>::random_normal(batch, p.in_dim(), layout, seed ^ 3);
        let mix = |u: &BatchMatrix<f32>, v: &BatchMatrix<f32>| {
            let data = u.data().iter().zip(v.data()).map(|(a, b)| alpha * a + beta * b).collect();
            BatchMatrix::from_vec(u.batch(), u.features(), u.layout(), data).unwrap()
        };
        let lhs = multiply(&mix(&x1, &x2), &k, Backend::Fused).unwrap();
        let rhs = mix(&multiply(&x1, &k, Backend::Fused).unwrap(), &multiply(&x2, &k, Backend::Fused).unwrap());
        let (rel, abs) = default_tolerances(p.c());
        let report = approx_equal(&lhs, &rhs, 4.0 * rel, 4.0 * abs).unwrap();
        prop_assert!(report.equal, "{:?}", report);
    }

    #[test]
    fn layout_invariance(p in pattern(), batch in batch(), seed in any::<u64>()) {
        let k = KsFactor::<f32>::random(p, seed);
        let x = BatchMatrix::<f32>::random_normal(batch, p.in_dim(), Layout::BatchSizeFirst, seed);
        let xl = x.convert_layout(Layout::BatchSizeLast);
        let (rel, abs) = default_tolerances(p.c());
        for backend in Backend::ALL {
            let y = multiply(&x, &k, backend).unwrap();
            let yl = multiply(&xl, &k, backend).unwrap().convert_layout(Layout::BatchSizeFirst);
            if backend == Backend::Fused {
                prop_assert_eq!(y.data(), yl.data());
            } else {
                prop_assert!(approx_equal(&y, &yl, rel, abs).unwrap().equal, "{}", backend.name());
            }
        }
    }

    #[test]
    fn fused_plan_and_threads_do_not_change_bits(p in pattern(), layout in layout(), batch in batch(),
                                                 tile in plan(), threads in 1usize..=4, seed in any::<u64>()) {
        let k = KsFactor::<f32>::random(p, seed);
        let x = BatchMatrix::<f32>::random_normal(batch, p.in_dim(), layout, seed);
        let base = with_threads(1, || multiply(&x, &k, Backend::Fused)).unwrap().unwrap();
        let prepared = PreparedFactor::with_plan(&k, Backend::Fused, tile).unwrap();
        let y = with_threads(threads, || prepared.apply(&x)).unwrap().unwrap();
        prop_assert_eq!(base.data(), y.data());
    }

    #[test]
    fn fp64_backends_match_reference_tightly(p in pattern(), layout in layout(), batch in 1usize..16, seed in any::<u64>()) {
        let k = KsFactor::<f64>::random(p, seed);
        let x = BatchMatrix::<f64>::random_normal(batch, p.in_dim(), layout, seed);
        let reference = multiply(&x, &k, Backend::Reference).unwrap();
        for backend in Backend::ALL {
            let y = multiply(&x, &k, backend).unwrap();
            prop_assert!(approx_equal(&y, &reference, 1e-12, 1e-12).unwrap().equal, "{}", backend.name());
        }
    }
}

#[test]
fn larger_patterns_agree() {
    for (n, &(a, b, c, d)) in [
        (1, 64, 64, 16),
        (4, 32, 128, 4),
        (2, 128, 32, 8),
        (1, 48, 48, 64),
        (16, 16, 16, 16),
    ]
    .iter()
    .enumerate()
    {
        let p = KsPattern::new(a, b, c, d).unwrap();
        let k = KsFactor::<f32>::random(p, n as u64);
        for layout in [Layout::BatchSizeFirst, Layout::BatchSizeLast] {
            let x = BatchMatrix::<f32>::random_normal(257, p.in_dim(), layout, n as u64);
            let reference = multiply(&x, &k, Backend::Reference).unwrap();
            let (rel, abs) = default_tolerances(c);
            for backend in Backend::ALL {
                let y = multiply(&x, &k, backend).unwrap();
                let report = approx_equal(&y, &reference, rel, abs).unwrap();
                assert!(
                    report.equal,
                    "{} {p:?} {layout:?}: {report:?}",
                    backend.name()
                );
            }
        }
    }
}
