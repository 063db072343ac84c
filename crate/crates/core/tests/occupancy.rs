use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urnbridge::seed::SeedStream;
use urnbridge::urn::poissonized_counts;
use urnbridge::{
    backward_counts, exact_mean_occupancy, exact_poisson_cov, forward_counts, sample_stream,
    zipf_law, ProbabilityLaw, Stream,
};

fn brute_force_distinct(labels: &[u64]) -> Vec<u32> {
    let mut seen = HashSet::new();
    let mut out = vec![0];
    for l in labels {
        seen.insert(*l);
        out.push(seen.len() as u32);
    }
    out
}

fn check_path_invariants(counts: &[u32]) {
    assert_eq!(counts[0], 0);
    assert_eq!(counts[1], 1);
    for (k, w) in counts.windows(2).enumerate() {
        assert!(w[1] - w[0] <= 1);
        assert!(w[1] as usize <= k + 1);
    }
}

#[test]
fn paths_match_set_insertion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..1000 {
        let n = rng.random_range(1..=200);
        let alphabet = rng.random_range(1..=60u64);
        let labels: Vec<u64> = (0..n).map(|_| rng.random_range(1..=alphabet)).collect();
        let s = Stream::new(labels.clone()).unwrap();
        let fwd = forward_counts(&s);
        let bwd = backward_counts(&s);
        let mut rev = labels.clone();
        rev.reverse();
        assert_eq!(fwd.counts(), brute_force_distinct(&labels).as_slice());
        assert_eq!(bwd.counts(), brute_force_distinct(&rev).as_slice());
        assert_eq!(bwd.counts(), forward_counts(&s.reversed()).counts());
        check_path_invariants(fwd.counts());
        check_path_invariants(bwd.counts());
        assert_eq!(fwd.total(), bwd.total());
    }
}

#[test]
fn constant_stream_paths() {
    let s = Stream::new(vec![5, 5, 5]).unwrap();
    assert_eq!(forward_counts(&s).counts(), &[0, 1, 1, 1]);
    assert_eq!(backward_counts(&s).counts(), &[0, 1, 1, 1]);
}

#[test]
fn empirical_mean_occupancy_matches_exact_mean() {
    let law = zipf_law(0.5, 10_000).unwrap();
    let n = 5_000;
    let reps = 1_000;
    let seeds = SeedStream::new(77);
    let totals: Vec<f64> = (0..reps)
        .map(|r| forward_counts(&sample_stream(&law, n, seeds.child(r).master()).unwrap()).total() as f64)
        .collect();
    let mean = totals.iter().sum::<f64>() / reps as f64;
    let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let exact = exact_mean_occupancy(&law, n as u64);
    assert!((mean - exact).abs() <= 4.0 * (var / reps as f64).sqrt(), "{mean} vs {exact}");
}

#[test]
fn exact_mean_is_monotone_and_bounded() {
    let law = zipf_law(0.6, 500).unwrap();
    let mut prev = 0.0;
    for m in 0..5_000u64 {
        let v = exact_mean_occupancy(&law, m);
        assert!(v >= prev - 1e-12);
        assert!(v <= 500.0 + 1e-9);
        prev = v;
    }
}

#[test]
fn poissonized_cross_covariance_at_three_quarters() {
    let law = zipf_law(0.5, 10_000).unwrap();
    let n = 10_000u64;
    let (t, tau) = (0.75, 0.75);
    let sampler = law.sampler();
    let seeds = SeedStream::new(2024);
    let reps = 10_000;
    let pairs: Vec<(f64, f64)> = (0..reps)
        .map(|r| {
            let mut rng = seeds.rng(r);
            let (f, b) = poissonized_counts(&sampler, n as f64, &[t], &[tau], &mut rng);
            (f[0] as f64, b[0] as f64)
        })
        .collect();
    let mf = pairs.iter().map(|p| p.0).sum::<f64>() / reps as f64;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / reps as f64;
    let prods: Vec<f64> = pairs.iter().map(|(f, b)| (f - mf) * (b - mb)).collect();
    let cov = prods.iter().sum::<f64>() / (reps - 1) as f64;
    let pm = prods.iter().sum::<f64>() / reps as f64;
    let se = (prods.iter().map(|p| (p - pm).powi(2)).sum::<f64>() / (reps - 1) as f64 / reps as f64).sqrt();
    let exact = exact_poisson_cov(&law, n, t, tau);
    assert!((cov - exact).abs() <= 3.0 * se, "{cov} vs {exact} (se {se})");
}

proptest! {
    #[test]
    fn poisson_cov_is_symmetric(t in 0.0f64..=1.0, tau in 0.0f64..=1.0, n in 1u64..100_000) {
        let law = zipf_law(0.4, 1_000).unwrap();
        prop_assert_eq!(exact_poisson_cov(&law, n, t, tau), exact_poisson_cov(&law, n, tau, t));
    }

    #[test]
    fn path_invariants_hold(labels in prop::collection::vec(1u64..20, 1..300)) {
        let s = Stream::new(labels).unwrap();
        let f = forward_counts(&s);
        let b = backward_counts(&s);
        check_path_invariants(f.counts());
        check_path_invariants(b.counts());
        prop_assert_eq!(f.total(), b.total());
    }

    #[test]
    fn explicit_law_samples_stay_in_support(seed in any::<u64>(), k in 1usize..40) {
        let probs: Vec<f64> = (1..=k).map(|i| 1.0 / i as f64).collect();
        let total: f64 = probs.iter().sum();
        let law = ProbabilityLaw::from_probs(probs.iter().map(|p| p / total).collect()).unwrap();
        let s = sample_stream(&law, 200, seed).unwrap();
        prop_assert!(s.labels().iter().all(|&l| l >= 1 && l <= k as u64));
    }
}
