//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use memcost_core::corpus::{Sentence, Token};
use memcost_core::metrics::ArcPolicy;
use memcost_core::seed::rng_for;
use memcost_core::synth::random_tree;
use rand::Rng;

pub const DEPRELS: [&str; 14] = [
    "nsubj", "obj", "iobj", "obl", "advmod", "amod", "acl", "acl:relcl", "advcl", "punct",
    "nmod", "case", "det", "conj",
];

/// A random valid tree of 1..=max_len tokens with random relation labels.
pub fn random_sentence(seed: u64, max_len: usize) -> Sentence {
    let mut rng = rng_for(seed, &[0xace]);
    let n = rng.random_range(1..=max_len);
    let heads = random_tree(n, &mut rng);
    let tokens = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let deprel = if h == 0 {
                "root"
            } else {
                DEPRELS[rng.random_range(0..DEPRELS.len())]
            };
            Token::new(i + 1, "w", "w", "X", "NN", h, deprel)
        })
        .collect();
    Sentence::new(tokens)
}

pub fn policies() -> Vec<(&'static str, ArcPolicy)> {
    let all = |mut p: ArcPolicy| {
        p.count_root_arc = true;
        p.count_punct = true;
        p
    };
    vec![
        ("head-final", ArcPolicy::head_final()),
        ("head-medial", ArcPolicy::head_medial()),
        ("head-final+root+punct", all(ArcPolicy::head_final())),
        ("head-medial+root+punct", all(ArcPolicy::head_medial())),
    ]
}

/// Arcs as (head, dependent) pairs, filtered directly from the token
/// table. The root arc has head 0.
pub fn oracle_arcs(s: &Sentence, p: &ArcPolicy) -> Vec<(usize, usize)> {
    let adjuncts: BTreeSet<&str> = p.adjunct_deprels.iter().map(String::as_str).collect();
    let mut arcs = Vec::new();
    for t in &s.tokens {
        let is_root = t.head == 0;
        if is_root && !p.count_root_arc {
            continue;
        }
        if !is_root && !p.count_punct && t.deprel.split(':').next() == Some("punct") {
            continue;
        }
        if !is_root && p.exclude_right_adjuncts && t.index > t.head && adjuncts.contains(t.deprel.as_str()) {
            continue;
        }
        arcs.push((t.head, t.index));
    }
    arcs
}

/// Brute-force boundary crossing count after reading `t` tokens:
/// (predicted heads, incomplete dependencies, completions at t).
pub fn oracle_prefix(s: &Sentence, p: &ArcPolicy, t: usize) -> (usize, usize, usize) {
    let arcs = oracle_arcs(s, p);
    let mut deps = 0;
    let mut unseen = BTreeSet::new();
    let mut completions = 0;
    for &(h, d) in &arcs {
        let (lo, hi) = (h.min(d), h.max(d));
        let seen = [lo <= t, hi <= t];
        if seen[0] != seen[1] {
            deps += 1;
            unseen.insert(hi);
        }
        if t > 0 && hi == t {
            completions += 1;
        }
    }
    (unseen.len(), deps, completions)
}

/// Least squares by Gauss-Jordan elimination on the normal equations.
/// `x` is row-major without an intercept column; one is added.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        let full: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..p {
            for j in 0..p {
                a[i][j] += full[i] * full[j];
            }
            a[i][p] += full[i] * yi;
        }
    }
    for c in 0..p {
        let pivot = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, pivot);
        let d = a[c][c];
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != c {
                let f = a[r][c];
                let pivot_row = a[c].clone();
                for (v, pv) in a[r].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    a.iter().map(|r| r[p]).collect()
}

/// Residual sum of squares of regressing column `j` of `x` on the others
/// (with intercept): the variance denominator of coefficient `j`.
pub fn partial_ss(x: &[Vec<f64>], j: usize) -> f64 {
    let others: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &v)| v).collect())
        .collect();
    let target: Vec<f64> = x.iter().map(|r| r[j]).collect();
    let b = normal_equations(&others, &target);
    others
        .iter()
        .zip(&target)
        .map(|(r, &t)| {
            let fit = b[0] + r.iter().zip(&b[1..]).map(|(v, c)| v * c).sum::<f64>();
            (t - fit).powi(2)
        })
        .sum()
}
