use osr_core::metrics::{accuracy, build_confusion, precision_recall, ConfusionMatrix, EvalMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Expands a matrix back into per-sample (truth, predicted) pairs.
fn samples(m: &ConfusionMatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (t, row) in m.counts().iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            out.extend(std::iter::repeat_n((t, p), c as usize));
        }
    }
    out
}

fn random_matrix(rng: &mut ChaCha8Rng) -> ConfusionMatrix {
    let n = rng.random_range(2..9);
    let counts = (0..=n)
        .map(|_| (0..=n).map(|_| rng.random_range(0..20u64)).collect())
        .collect();
    ConfusionMatrix::from_counts(counts).unwrap()
}

#[test]
fn accuracy_equals_per_sample_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let m = random_matrix(&mut rng);
        let s = samples(&m);
        let correct = s.iter().filter(|(t, p)| t == p).count();
        assert_eq!(
            accuracy(&m, EvalMode::OpenmaxThreshold).unwrap(),
            correct as f64 / s.len() as f64
        );
        let known: Vec<_> = s.iter().filter(|(t, _)| *t != 0).collect();
        let known_correct = known.iter().filter(|(t, p)| t == p).count();
        assert_eq!(
            accuracy(&m, EvalMode::Closed).unwrap(),
            known_correct as f64 / known.len() as f64
        );
    }
}

#[test]
fn precision_recall_match_direct_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let m = random_matrix(&mut rng);
        let s = samples(&m);
        for (k, pr) in precision_recall(&m).into_iter().enumerate() {
            let tp = s.iter().filter(|&&(t, p)| t == k && p == k).count();
            let predicted = s.iter().filter(|&&(_, p)| p == k).count();
            let actual = s.iter().filter(|&&(t, _)| t == k).count();
            assert_eq!(
                pr.precision,
                (predicted > 0).then(|| tp as f64 / predicted as f64)
            );
            assert_eq!(pr.recall, (actual > 0).then(|| tp as f64 / actual as f64));
        }
    }
}

#[test]
fn marginals_match_independent_tallies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 6;
    let truths: Vec<usize> = (0..1000).map(|_| rng.random_range(0..=n)).collect();
    let preds: Vec<usize> = (0..1000).map(|_| rng.random_range(0..=n)).collect();
    let m = build_confusion(n, &truths, &preds).unwrap();
    for k in 0..=n {
        assert_eq!(
            m.row_sum(k) as usize,
            truths.iter().filter(|&&t| t == k).count()
        );
        assert_eq!(
            m.col_sum(k) as usize,
            preds.iter().filter(|&&p| p == k).count()
        );
    }
    assert_eq!(m.total(), 1000);
    assert_eq!(build_confusion(n, &truths, &preds).unwrap(), m);
}

proptest! {
    #[test]
    fn weighted_recall_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng);
        let total = m.total() as f64;
        let acc = accuracy(&m, EvalMode::SoftmaxThreshold).unwrap();
        let weighted: f64 = precision_recall(&m)
            .iter()
            .enumerate()
            .map(|(k, pr)| pr.recall.unwrap_or(0.0) * m.row_sum(k) as f64 / total)
            .sum();
        prop_assert!((acc - weighted).abs() < 1e-12);
        let rows: u64 = (0..=m.num_classes()).map(|k| m.row_sum(k)).sum();
        let cols: u64 = (0..=m.num_classes()).map(|k| m.col_sum(k)).sum();
        prop_assert_eq!(rows, m.total());
        prop_assert_eq!(cols, m.total());
    }

    #[test]
    fn closed_accuracy_invariant_under_relabeling(
        pairs in proptest::collection::vec((1usize..=5, 1usize..=5), 1..200),
        shift in 1usize..5,
    ) {
        let relabel = |k: usize| (k - 1 + shift) % 5 + 1;
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let (t2, p2): (Vec<usize>, Vec<usize>) = pairs.iter().map(|&(a, b)| (relabel(a), relabel(b))).unzip();
        let a = accuracy(&build_confusion(5, &t, &p).unwrap(), EvalMode::Closed).unwrap();
        let b = accuracy(&build_confusion(5, &t2, &p2).unwrap(), EvalMode::Closed).unwrap();
        prop_assert_eq!(a, b);
    }
}
