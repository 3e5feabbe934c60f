use cmml_evalkit::wilcoxon_signed_rank;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rank of each nonzero |d| by counting: smaller values plus half the
/// other equal values.
fn counted_t_plus(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    nz.iter()
        .enumerate()
        .filter(|(_, x)| **x > 0.0)
        .map(|(i, x)| {
            let below = nz.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = nz.iter().enumerate().filter(|(j, y)| *j != i && y.abs() == x.abs()).count() as f64;
            1.0 + below + equal / 2.0
        })
        .sum()
}

/// Mean and variance of T+ over all 2^n sign assignments of the ranks.
fn sign_flip_moments(d: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).map(f64::abs).collect();
    let n = nz.len();
    let ranks: Vec<f64> = (0..n)
        .map(|i| {
            let below = nz.iter().filter(|y| **y < nz[i]).count() as f64;
            let equal = nz.iter().filter(|y| **y == nz[i]).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let totals: Vec<f64> = (0..1u32 << n)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum())
        .collect();
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / totals.len() as f64;
    (mean, var)
}

fn random_pairs(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let n = rng.random_range(1..=10);
    // small integers force ties and zero differences
    (0..n).map(|_| (rng.random_range(0..6) as f64, rng.random_range(0..6) as f64)).collect()
}

#[test]
fn t_plus_matches_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let pairs = random_pairs(&mut rng);
        let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
        let r = wilcoxon_signed_rank(&pairs);
        assert_eq!(r.t_plus, counted_t_plus(&d), "{pairs:?}");
        let n = r.n_nonzero as f64;
        assert_eq!(r.t_plus + r.t_minus, n * (n + 1.0) / 2.0);
    }
}

#[test]
fn sigma_matches_sign_flip_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let pairs = random_pairs(&mut rng);
        let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
        let r = wilcoxon_signed_rank(&pairs);
        if r.degenerate {
            assert_eq!(r.p_two_tailed, 1.0);
            continue;
        }
        let (mean, var) = sign_flip_moments(&d);
        let n = r.n_nonzero as f64;
        assert!((mean - n * (n + 1.0) / 4.0).abs() < 1e-9);
        assert!((var.sqrt() - r.sigma_t).abs() < 1e-9, "{pairs:?}: {} vs {}", var.sqrt(), r.sigma_t);
        assert!((0.0..=1.0).contains(&r.p_two_tailed));
    }
}

#[test]
fn six_positive_differences() {
    let pairs: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64 * 1.5, 0.0)).collect();
    let r = wilcoxon_signed_rank(&pairs);
    assert_eq!(r.t_plus, 21.0);
    assert!((r.z - (21.0 - 10.5) / 22.75f64.sqrt()).abs() < 1e-12);
}
