//! Incremental memory-maintenance metrics over dependency trees.
//!
//! After reading the prefix `1..=t` of a sentence, an arc is *incomplete* if
//! exactly one of its endpoints lies in the prefix. The unseen endpoints of
//! incomplete arcs are the *predicted heads*, and an arc is *completed* at
//! `t` when its later endpoint is `t`. Region values take the minimum of the
//! per-token counts (so only dependencies spanning the whole region count)
//! and the maximum of completions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Region, Sentence, Token};
use crate::error::{Error, Result};

/// Relations treated as adjunction when right adjuncts are excluded.
pub const DEFAULT_ADJUNCT_DEPRELS: [&str; 20] = [
    "appos",
    "acl",
    "acl:relcl",
    "advcl",
    "advmod",
    "amod",
    "cc",
    "compound",
    "compound:prt",
    "conj",
    "dep",
    "det:predet",
    "discourse",
    "nmod",
    "nmod:npmod",
    "nmod:poss",
    "nmod:tmod",
    "nummod",
    "parataxis",
    "punct",
];

/// Which dependency arcs contribute to the counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArcPolicy {
    pub exclude_right_adjuncts: bool,
    pub adjunct_deprels: BTreeSet<String>,
    pub count_root_arc: bool,
    pub count_punct: bool,
}

impl Default for ArcPolicy {
    fn default() -> Self {
        ArcPolicy::head_final()
    }
}

impl ArcPolicy {
    /// Japanese-style policy: every non-punctuation arc counts.
    pub fn head_final() -> Self {
        ArcPolicy {
            exclude_right_adjuncts: false,
            adjunct_deprels: DEFAULT_ADJUNCT_DEPRELS.iter().map(|s| s.to_string()).collect(),
            count_root_arc: false,
            count_punct: false,
        }
    }

    /// English-style policy: rightward adjuncts are never predicted.
    pub fn head_medial() -> Self {
        ArcPolicy {
            exclude_right_adjuncts: true,
            ..ArcPolicy::head_final()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exclude_right_adjuncts && self.adjunct_deprels.is_empty() {
            return Err(Error::Config(
                "adjunct_deprels must be nonempty when exclude_right_adjuncts is set".to_owned(),
            ));
        }
        Ok(())
    }

    fn admits(&self, token: &Token) -> bool {
        if token.head == 0 {
            return self.count_root_arc;
        }
        if !self.count_punct && is_punct(&token.deprel) {
            return false;
        }
        let rightward = token.index > token.head;
        !(self.exclude_right_adjuncts && rightward && self.adjunct_deprels.contains(&token.deprel))
    }
}

fn is_punct(deprel: &str) -> bool {
    deprel == "punct" || deprel.starts_with("punct:")
}

/// A counted dependency. Position 0 is the artificial root, which is
/// considered seen before the first token.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Arc {
    pub head: usize,
    pub dependent: usize,
}

impl Arc {
    pub fn left(&self) -> usize {
        self.head.min(self.dependent)
    }

    pub fn right(&self) -> usize {
        self.head.max(self.dependent)
    }

    /// Whether the dependent follows its head.
    pub fn is_rightward(&self) -> bool {
        self.dependent > self.head
    }
}

/// The arcs of `sentence` that count under `policy`, ordered by dependent.
pub fn countable_arcs(sentence: &Sentence, policy: &ArcPolicy) -> Vec<Arc> {
    sentence
        .tokens
        .iter()
        .filter(|t| policy.admits(t))
        .map(|t| Arc {
            head: t.head,
            dependent: t.index,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PrefixCounts {
    pub predicted_heads: usize,
    pub incomplete_deps: usize,
    pub completions: usize,
}

/// Counts for every prefix length `0..=n` of one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceProfile {
    counts: Vec<PrefixCounts>,
}

impl SentenceProfile {
    pub fn compute(sentence: &Sentence, policy: &ArcPolicy) -> Self {
        Self::from_arcs(sentence.len(), &countable_arcs(sentence, policy))
    }

    /// Sweep with difference arrays: an arc `(a, b)` is incomplete for
    /// `a <= t < b`; token `b` is predicted from the earliest `a` that
    /// links to it until `t = b - 1`.
    pub fn from_arcs(n: usize, arcs: &[Arc]) -> Self {
        let mut open_delta = vec![0i64; n + 2];
        let mut earliest_partner = vec![usize::MAX; n + 1];
        let mut completions = vec![0usize; n + 1];
        for arc in arcs {
            let (a, b) = (arc.left(), arc.right());
            open_delta[a] += 1;
            open_delta[b] -= 1;
            earliest_partner[b] = earliest_partner[b].min(a);
            completions[b] += 1;
        }
        let mut head_delta = vec![0i64; n + 2];
        for (b, &a) in earliest_partner.iter().enumerate() {
            if a != usize::MAX {
                head_delta[a] += 1;
                head_delta[b] -= 1;
            }
        }

        let mut counts = Vec::with_capacity(n + 1);
        let (mut open, mut heads) = (0i64, 0i64);
        for t in 0..=n {
            open += open_delta[t];
            heads += head_delta[t];
            counts.push(PrefixCounts {
                predicted_heads: heads as usize,
                incomplete_deps: open as usize,
                completions: if t == 0 { 0 } else { completions[t] },
            });
        }
        SentenceProfile { counts }
    }

    pub fn len(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Counts after consuming tokens `1..=t`.
    pub fn at(&self, t: usize) -> PrefixCounts {
        self.counts[t]
    }

    pub fn prefixes(&self) -> &[PrefixCounts] {
        &self.counts
    }
}

pub fn prefix_counts(sentence: &Sentence, policy: &ArcPolicy, t: usize) -> Result<PrefixCounts> {
    if t > sentence.len() {
        return Err(Error::Contract(format!(
            "prefix length {t} exceeds sentence length {}",
            sentence.len()
        )));
    }
    Ok(SentenceProfile::compute(sentence, policy).at(t))
}

/// Region-level maintenance metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MetricProfile {
    pub predicted_heads: usize,
    pub incomplete_deps: usize,
    pub additional_deps: usize,
    pub completions: usize,
}

impl MetricProfile {
    fn from_span(values: &[PrefixCounts]) -> Self {
        let predicted_heads = values.iter().map(|c| c.predicted_heads).min().unwrap_or(0);
        let incomplete_deps = values.iter().map(|c| c.incomplete_deps).min().unwrap_or(0);
        MetricProfile {
            predicted_heads,
            incomplete_deps,
            additional_deps: incomplete_deps - predicted_heads,
            completions: values.iter().map(|c| c.completions).max().unwrap_or(0),
        }
    }
}

pub fn region_profile(
    sentence: &Sentence,
    regions: &[Region],
    policy: &ArcPolicy,
) -> Vec<MetricProfile> {
    let profile = SentenceProfile::compute(sentence, policy);
    regions
        .iter()
        .map(|r| MetricProfile::from_span(&profile.prefixes()[r.start..=r.end]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(heads: &[usize], deprels: &[&str]) -> Sentence {
        let mut s = Sentence::from_heads(heads);
        for (t, rel) in s.tokens.iter_mut().zip(deprels) {
            t.deprel = rel.to_string();
        }
        s
    }

    fn region(i: usize, start: usize, end: usize) -> Region {
        Region {
            doc_id: "d".into(),
            sent_index: 1,
            region_index: i,
            start,
            end,
        }
    }

    #[test]
    fn ditransitive_arcs() {
        let s = sentence(&[4, 4, 4, 0], &["nsubj", "iobj", "obj", "root"]);
        let arcs = countable_arcs(&s, &ArcPolicy::head_final());
        let pairs: Vec<_> = arcs.iter().map(|a| (a.left(), a.right())).collect();
        assert_eq!(pairs, vec![(1, 4), (2, 4), (3, 4)]);
    }

    #[test]
    fn right_adjunct_excluded_left_adjunct_kept() {
        // 2 <- 5 advmod (rightward), 1 -> 3 amod (leftward)
        let s = sentence(&[3, 0, 2, 2, 2], &["amod", "root", "obj", "obj", "advmod"]);
        let arcs = countable_arcs(&s, &ArcPolicy::head_medial());
        assert!(!arcs.contains(&Arc {
            head: 2,
            dependent: 5
        }));
        assert!(arcs.contains(&Arc {
            head: 3,
            dependent: 1
        }));
        let all = countable_arcs(&s, &ArcPolicy::head_final());
        assert!(all.contains(&Arc {
            head: 2,
            dependent: 5
        }));
    }

    #[test]
    fn punct_and_root_switches() {
        let s = sentence(&[2, 0, 2], &["nsubj", "root", "punct"]);
        assert_eq!(countable_arcs(&s, &ArcPolicy::head_final()).len(), 1);
        let policy = ArcPolicy {
            count_punct: true,
            count_root_arc: true,
            ..ArcPolicy::head_final()
        };
        assert_eq!(countable_arcs(&s, &policy).len(), 3);
        // the root arc is open from the start until the root token is read
        let p = SentenceProfile::compute(&s, &policy);
        assert_eq!(p.at(0).incomplete_deps, 1);
        assert_eq!(p.at(0).predicted_heads, 1);
        assert_eq!(p.at(3).incomplete_deps, 0);
    }

    #[test]
    fn per_token_regions_of_ditransitive() {
        let s = sentence(&[4, 4, 4, 0], &["nsubj", "iobj", "obj", "root"]);
        let regions: Vec<_> = (1..=4).map(|i| region(i, i, i)).collect();
        let p = region_profile(&s, &regions, &ArcPolicy::head_final());
        let deps: Vec<_> = p.iter().map(|m| m.incomplete_deps).collect();
        let heads: Vec<_> = p.iter().map(|m| m.predicted_heads).collect();
        let comps: Vec<_> = p.iter().map(|m| m.completions).collect();
        assert_eq!(deps, vec![1, 2, 3, 0]);
        assert_eq!(heads, vec![1, 1, 1, 0]);
        assert_eq!(comps, vec![0, 0, 0, 3]);
    }

    #[test]
    fn two_token_regions_take_minimum() {
        let s = Sentence::from_heads(&[2, 4, 4, 0]);
        let p = region_profile(
            &s,
            &[region(1, 1, 2), region(2, 3, 4)],
            &ArcPolicy::head_final(),
        );
        assert_eq!(p[0].incomplete_deps, 1);
        assert_eq!(p[0].predicted_heads, 1);
        assert_eq!(p[1].incomplete_deps, 0);
    }

    #[test]
    fn whole_sentence_region_is_zero() {
        let s = Sentence::from_heads(&[3, 3, 0, 3]);
        let p = region_profile(&s, &[region(1, 1, 4)], &ArcPolicy::head_final());
        assert_eq!(p[0].predicted_heads, 0);
        assert_eq!(p[0].incomplete_deps, 0);
    }

    #[test]
    fn out_of_range_prefix() {
        let s = Sentence::from_heads(&[0]);
        assert!(prefix_counts(&s, &ArcPolicy::default(), 2).is_err());
        assert_eq!(
            prefix_counts(&s, &ArcPolicy::default(), 0).unwrap(),
            PrefixCounts::default()
        );
    }

    #[test]
    fn empty_adjunct_set_rejected() {
        let policy = ArcPolicy {
            adjunct_deprels: BTreeSet::new(),
            ..ArcPolicy::head_medial()
        };
        assert!(policy.validate().is_err());
    }
}
