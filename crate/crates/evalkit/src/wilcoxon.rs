//! Wilcoxon signed-rank test with the normal approximation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub n_nonzero: usize,
    pub t_plus: f64,
    pub t_minus: f64,
    /// Standard deviation of `t_plus` under the null, tie-corrected.
    pub sigma_t: f64,
    pub z: f64,
    pub p_two_tailed: f64,
    /// All differences were zero.
    pub degenerate: bool,
}

/// Mid-ranks (1-based) of `values`, with the sizes of tied groups.
pub fn mid_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Tests whether the differences `a - b` are centred on zero.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> WilcoxonResult {
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return WilcoxonResult {
            n_nonzero: 0,
            t_plus: 0.0,
            t_minus: 0.0,
            sigma_t: 0.0,
            z: 0.0,
            p_two_tailed: 1.0,
            degenerate: true,
        };
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let (ranks, ties) = mid_ranks(&abs);
    let t_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    let total = nf * (nf + 1.0) / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t.pow(3) - t) as f64).sum::<f64>() / 48.0;
    let sigma_t = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term).sqrt();
    let z = if sigma_t > 0.0 { (t_plus - total / 2.0) / sigma_t } else { 0.0 };
    let normal = Normal::standard();
    let p = (2.0 * normal.cdf(-z.abs())).clamp(0.0, 1.0);
    WilcoxonResult {
        n_nonzero: n,
        t_plus,
        t_minus: total - t_plus,
        sigma_t,
        z,
        p_two_tailed: p,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_without_ties() {
        let pairs: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, 0.0)).collect();
        let w = wilcoxon_signed_rank(&pairs);
        assert_eq!(w.t_plus, 21.0);
        assert!((w.sigma_t - 22.75f64.sqrt()).abs() < 1e-12);
        assert!((w.z - 10.5 / 22.75f64.sqrt()).abs() < 1e-12);
        assert!((w.z - 2.201).abs() < 1e-3);
    }

    #[test]
    fn identical_series_are_degenerate() {
        let w = wilcoxon_signed_rank(&[(1.0, 1.0), (2.0, 2.0)]);
        assert!(w.degenerate);
        assert_eq!(w.p_two_tailed, 1.0);
    }

    #[test]
    fn ties_get_mid_ranks() {
        let (r, t) = mid_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, [3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, [2]);
    }

    #[test]
    fn rank_sums_add_up() {
        let w = wilcoxon_signed_rank(&[(1.0, 3.0), (5.0, 1.0), (2.0, 2.5), (7.0, 1.0), (0.0, 2.0)]);
        let n = w.n_nonzero as f64;
        assert_eq!(w.t_plus + w.t_minus, n * (n + 1.0) / 2.0);
    }
}
