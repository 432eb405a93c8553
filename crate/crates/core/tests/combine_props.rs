use avsvm::combine::{average_kernel, combine_abs_form, combine_multi, combine_pairwise_maxmin, combine_test_rows};
use avsvm::kernel::{GramMatrix, Provenance};
use avsvm::{CombinerConfig, GFunction, Labels, Matrix, TestEvalMode};
use proptest::prelude::*;

fn sym(n: usize) -> impl Strategy<Value = GramMatrix> {
    prop::collection::vec(
        prop_oneof![-5.0f64..5.0, (-3i32..3).prop_map(f64::from), -1e6f64..1e6],
        n * n,
    )
    .prop_map(move |v| GramMatrix::from_upper_fn(n, Provenance::SingleKernel, |i, j| v[i * n + j]))
}

fn labels(n: usize) -> impl Strategy<Value = Labels> {
    prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n).prop_map(|v| Labels::new(v).unwrap())
}

fn pair_case() -> impl Strategy<Value = (GramMatrix, GramMatrix, Labels)> {
    (1usize..9).prop_flat_map(|n| (sym(n), sym(n), labels(n)))
}

fn multi_case() -> impl Strategy<Value = (Vec<GramMatrix>, Labels)> {
    (1usize..7, 1usize..5).prop_flat_map(|(n, m)| (prop::collection::vec(sym(n), m), labels(n)))
}

fn cfg(g: GFunction) -> CombinerConfig {
    CombinerConfig {
        g_function: g,
        test_eval: TestEvalMode::AverageFallback,
    }
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn maxmin_equals_abs_form((k1, k2, y) in pair_case()) {
        let a = combine_pairwise_maxmin(&k1, &k2, &y).unwrap();
        let b = combine_abs_form(&k1, &k2, &y).unwrap();
        for i in 0..y.len() {
            for j in 0..y.len() {
                // relative to the magnitude of the inputs, since max(a, b) can
                // be far smaller than either
                let scale = k1.get(i, j).abs().max(k2.get(i, j).abs());
                prop_assert!(close(a.get(i, j), b.get(i, j), scale),
                    "({i},{j}): {} vs {}", a.get(i, j), b.get(i, j));
                prop_assert_eq!(a.get(i, j), a.get(j, i));
                prop_assert_eq!(b.get(i, j), b.get(j, i));
            }
        }
    }

    #[test]
    fn two_kernel_rules_agree((k1, k2, y) in pair_case()) {
        let abs = combine_multi(&[k1.clone(), k2.clone()], &y, &cfg(GFunction::Abs)).unwrap();
        let half = combine_multi(&[k1.clone(), k2.clone()], &y, &cfg(GFunction::HalfAbs)).unwrap();
        let form = combine_abs_form(&k1, &k2, &y).unwrap();
        for i in 0..y.len() {
            for j in 0..y.len() {
                let (a, b) = (k1.get(i, j), k2.get(i, j));
                let scale = a.abs().max(b.abs());
                let yy = y.sign(i) * y.sign(j);
                prop_assert!(close(half.get(i, j), form.get(i, j), scale));
                prop_assert!(close(abs.get(i, j), 0.5 * (a + b) + yy * (a - b).abs(), scale));
                let bound = if yy > 0.0 {
                    a.max(b) + 0.5 * (a - b).abs()
                } else {
                    a.min(b) - 0.5 * (a - b).abs()
                };
                prop_assert!(close(abs.get(i, j), bound, 2.0 * scale));
            }
        }
    }

    #[test]
    fn multi_rule_matches_direct_sum((ks, y) in multi_case()) {
        let out = combine_multi(&ks, &y, &cfg(GFunction::Abs)).unwrap();
        let mean = average_kernel(&ks).unwrap();
        let m = ks.len() as f64;
        for i in 0..y.len() {
            for j in 0..y.len() {
                let vals: Vec<f64> = ks.iter().map(|k| k.get(i, j)).collect();
                let scale = vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                let kbar = vals.iter().sum::<f64>() / m;
                let dev: f64 = vals.iter().map(|v| (v - kbar).abs()).sum();
                prop_assert!(close(mean.get(i, j), kbar, scale * m));
                prop_assert!(close(out.get(i, j), kbar + y.sign(i) * y.sign(j) * dev, 4.0 * scale * m));
                prop_assert_eq!(out.get(i, j).to_bits(), out.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn flipping_every_label_changes_nothing((ks, y) in multi_case(), t in 0.0f64..3.0) {
        for g in [GFunction::Abs, GFunction::HalfAbs, GFunction::Threshold(t)] {
            let a = combine_multi(&ks, &y, &cfg(g)).unwrap();
            let b = combine_multi(&ks, &y.negated(), &cfg(g)).unwrap();
            prop_assert_eq!(a.entries(), b.entries());
        }
    }

    #[test]
    fn identical_kernels_give_back_the_kernel(k in (1usize..7).prop_flat_map(sym), m in 1usize..5, t in 0.0f64..3.0) {
        let y = Labels::new((0..k.n()).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect()).unwrap();
        let ks = vec![k.clone(); m];
        for g in [GFunction::Abs, GFunction::HalfAbs, GFunction::Threshold(t)] {
            let out = combine_multi(&ks, &y, &cfg(g)).unwrap();
            prop_assert_eq!(out.entries(), k.entries());
        }
    }
}

#[test]
fn maxmin_example() {
    let k1 = GramMatrix::from_upper_fn(2, Provenance::SingleKernel, |i, j| [[1.0, 0.2], [0.2, 1.0]][i][j]);
    let k2 = GramMatrix::from_upper_fn(2, Provenance::SingleKernel, |i, j| [[0.5, 0.8], [0.8, 2.0]][i][j]);
    let same = Labels::new(vec![1, 1]).unwrap();
    let diff = Labels::new(vec![1, -1]).unwrap();
    assert_eq!(
        combine_pairwise_maxmin(&k1, &k2, &same).unwrap().entries(),
        &[1.0, 0.8, 0.8, 2.0]
    );
    assert_eq!(
        combine_pairwise_maxmin(&k1, &k2, &diff).unwrap().entries(),
        &[1.0, 0.2, 0.2, 2.0]
    );
}

#[test]
fn threshold_ignores_small_differences() {
    let k1 = GramMatrix::from_upper_fn(2, Provenance::SingleKernel, |_, _| 1.0);
    let k2 = GramMatrix::from_upper_fn(2, Provenance::SingleKernel, |i, j| if i == j { 1.05 } else { 0.0 });
    let y = Labels::new(vec![1, 1]).unwrap();
    let out = combine_multi(&[k1, k2], &y, &cfg(GFunction::Threshold(0.1))).unwrap();
    assert!((out.get(0, 0) - 1.025).abs() < 1e-15);
    assert!((out.get(0, 1) - 1.0).abs() < 1e-15);
}

#[test]
fn test_rows_follow_the_mode() {
    let c1 = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
    let c2 = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
    let y = Labels::new(vec![1, -1]).unwrap();
    let avg = combine_test_rows(&[c1.clone(), c2.clone()], &y, &cfg(GFunction::Abs), None).unwrap();
    assert_eq!(avg.as_slice(), &[0.5, 0.0]);

    let pred = CombinerConfig {
        g_function: GFunction::Abs,
        test_eval: TestEvalMode::PredictedLabel,
    };
    let yhat = Labels::new(vec![1]).unwrap();
    let out = combine_test_rows(&[c1.clone(), c2.clone()], &y, &pred, Some(&yhat)).unwrap();
    assert_eq!(out.as_slice(), &[1.5, 0.0]);
    assert!(combine_test_rows(&[c1, c2], &y, &pred, None).is_err());
}

#[test]
fn mismatched_inputs_are_rejected() {
    let k2 = GramMatrix::from_upper_fn(2, Provenance::SingleKernel, |_, _| 1.0);
    let k3 = GramMatrix::from_upper_fn(3, Provenance::SingleKernel, |_, _| 1.0);
    let y = Labels::new(vec![1, -1]).unwrap();
    assert!(combine_pairwise_maxmin(&k2, &k3, &y).is_err());
    assert!(combine_multi(&[k2.clone(), k3], &y, &cfg(GFunction::Abs)).is_err());
    assert!(combine_multi(&[], &y, &cfg(GFunction::Abs)).is_err());
    let y3 = Labels::new(vec![1, -1, 1]).unwrap();
    assert!(combine_abs_form(&k2, &k2, &y3).is_err());
}
