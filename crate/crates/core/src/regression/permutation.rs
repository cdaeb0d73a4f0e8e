//! Sign-flip and label-permutation tests.

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;

use crate::scalar::Scalar;
use crate::seed::{rng_for, STREAM_PERMUTATION, STREAM_TRADEOFF};

/// Samples up to this size are tested by enumerating all sign assignments.
pub const EXHAUSTIVE_MAX_ITEMS: usize = 20;

const BLOCK: usize = 256;

fn tie_tolerance(values: &[f64]) -> f64 {
    1e-12 * values.iter().map(|v| v.abs()).sum::<f64>()
}

fn flipped_sum(values: &[f64], mask: u64) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| if mask >> i & 1 == 1 { -v } else { v })
        .sum()
}

/// One-sided sign-flip test of `mean(values) > 0`.
///
/// Exhaustive for up to [`EXHAUSTIVE_MAX_ITEMS`] values, where
/// `p = #{assignments with mean >= observed} / 2^n`. Otherwise Monte Carlo
/// with `p = (1 + #{flips with mean >= observed}) / (n_perm + 1)`.
/// Each block of flips draws from its own derived stream, so the result is
/// independent of the thread count.
pub fn sign_flip_pvalue(values: &[f64], n_perm: usize, seed: u64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 1.0;
    }
    let tol = tie_tolerance(values);
    let observed: f64 = values.iter().sum();

    if n <= EXHAUSTIVE_MAX_ITEMS {
        let total = 1u64 << n;
        let chunk = 1u64 << n.saturating_sub(6).min(14);
        let hits: u64 = (0..total.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                (c * chunk..((c + 1) * chunk).min(total))
                    .filter(|&mask| flipped_sum(values, mask) >= observed - tol)
                    .count() as u64
            })
            .sum();
        return hits as f64 / total as f64;
    }

    let hits: usize = (0..n_perm.div_ceil(BLOCK))
        .into_par_iter()
        .map(|block| {
            let mut rng = rng_for(seed, &[STREAM_PERMUTATION, block as u64]);
            let count = BLOCK.min(n_perm - block * BLOCK);
            let mut hits = 0;
            let mut bits = vec![0u64; n.div_ceil(64)];
            for _ in 0..count {
                bits.iter_mut().for_each(|w| *w = rng.next_u64());
                let sum: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| if bits[i / 64] >> (i % 64) & 1 == 1 { -v } else { v })
                    .sum();
                if sum >= observed - tol {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    (1 + hits) as f64 / (n_perm + 1) as f64
}

/// Paired test that the full model's per-item errors are lower than the
/// base model's: a one-sided sign-flip test on `base_i - full_i`.
pub fn permutation_test_errors<T: Scalar>(
    base_errors: &[T],
    full_errors: &[T],
    n_perm: usize,
    seed: u64,
) -> f64 {
    assert_eq!(
        base_errors.len(),
        full_errors.len(),
        "error vectors must be index-aligned"
    );
    let diffs: Vec<f64> = base_errors
        .iter()
        .zip(full_errors)
        .map(|(&b, &f)| (b - f).to_f64_lossy())
        .collect();
    sign_flip_pvalue(&diffs, n_perm, seed)
}

/// Result of a two-group label-permutation test on the difference of means.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroupDifference {
    /// mean(first) - mean(second)
    pub difference: f64,
    pub p_two_sided: f64,
    /// p for the alternative difference < 0
    pub p_less: f64,
    /// p for the alternative difference > 0
    pub p_greater: f64,
}

/// Permute group labels over the pooled values `n_perm` times.
pub fn label_permutation_test(
    first: &[f64],
    second: &[f64],
    n_perm: usize,
    seed: u64,
) -> GroupDifference {
    let pooled: Vec<f64> = first.iter().chain(second).copied().collect();
    let k = first.len();
    let diff = |vals: &[f64]| {
        let a = vals[..k].iter().sum::<f64>() / k as f64;
        let b = vals[k..].iter().sum::<f64>() / (vals.len() - k) as f64;
        a - b
    };
    let observed = diff(&pooled);
    let tol = 1e-9 * pooled.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);

    let (mut le, mut ge, mut abs_ge) = (0usize, 0usize, 0usize);
    let counts: Vec<(usize, usize, usize)> = (0..n_perm.div_ceil(BLOCK))
        .into_par_iter()
        .map(|block| {
            let mut rng = rng_for(seed, &[STREAM_TRADEOFF, block as u64]);
            let count = BLOCK.min(n_perm - block * BLOCK);
            let mut shuffled = pooled.clone();
            let (mut le, mut ge, mut abs_ge) = (0, 0, 0);
            for _ in 0..count {
                shuffled.shuffle(&mut rng);
                let d = diff(&shuffled);
                if d <= observed + tol {
                    le += 1;
                }
                if d >= observed - tol {
                    ge += 1;
                }
                if d.abs() >= observed.abs() - tol {
                    abs_ge += 1;
                }
            }
            (le, ge, abs_ge)
        })
        .collect();
    for (a, b, c) in counts {
        le += a;
        ge += b;
        abs_ge += c;
    }
    let p = |hits: usize| (1 + hits) as f64 / (n_perm + 1) as f64;
    GroupDifference {
        difference: observed,
        p_two_sided: p(abs_ge),
        p_less: p(le),
        p_greater: p(ge),
    }
}
