//! Regression-ready feature rows: exclusions, control predictors, spillover.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedRt, RegionKey, SegmentedSentence, SentenceKey, Token};
use crate::error::{Error, Result};
use crate::metrics::{region_profile, ArcPolicy, MetricProfile};
use crate::tsv;

pub const FREQ_HEADER: [&str; 2] = ["lemma", "count"];
pub const LM_HEADER: [&str; 4] = ["doc_id", "sent_index", "token_index", "surprisal_bits"];

/// Column order of the feature matrix file.
pub const FEATURE_COLUMNS: [&str; 20] = [
    "doc_id",
    "sent_position",
    "region_position",
    "participant_id",
    "rt",
    "n_chars",
    "n_chars_lag1",
    "n_chars_lag2",
    "unigram_surprisal",
    "unigram_lag1",
    "unigram_lag2",
    "lm_surprisal",
    "lm_lag1",
    "lm_lag2",
    "n_heads",
    "n_deps",
    "n_additional",
    "n_completions",
    "n_tokens",
    "xpos",
];

/// The baseline predictors, in model order.
pub const CONTROL_PREDICTORS: [&str; 11] = [
    "sent_position",
    "region_position",
    "n_chars",
    "n_chars_lag1",
    "n_chars_lag2",
    "unigram_surprisal",
    "unigram_lag1",
    "unigram_lag2",
    "lm_surprisal",
    "lm_lag1",
    "lm_lag2",
];

pub const METRIC_PREDICTORS: [&str; 4] = ["n_heads", "n_deps", "n_additional", "n_completions"];

/// One analyzable region (or region × participant). Surprisals are in bits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureRow {
    pub doc_id: String,
    pub sent_position: usize,
    pub region_position: usize,
    pub participant_id: Option<String>,
    pub rt: f64,
    pub n_chars: usize,
    pub n_chars_lag1: usize,
    pub n_chars_lag2: usize,
    pub unigram_surprisal: f64,
    pub unigram_lag1: f64,
    pub unigram_lag2: f64,
    pub lm_surprisal: f64,
    pub lm_lag1: f64,
    pub lm_lag2: f64,
    pub n_heads: usize,
    pub n_deps: usize,
    pub n_additional: usize,
    pub n_completions: usize,
    /// Tokens in the region; bookkeeping for the content-word filter.
    pub n_tokens: usize,
    /// xpos of the region's first token.
    pub xpos: String,
}

impl FeatureRow {
    pub fn region_key(&self) -> RegionKey {
        RegionKey {
            doc_id: self.doc_id.clone(),
            sent_index: self.sent_position,
            region_index: self.region_position,
        }
    }

    pub fn sentence_key(&self) -> SentenceKey {
        SentenceKey {
            doc_id: self.doc_id.clone(),
            sent_index: self.sent_position,
        }
    }

    /// Numeric value of a named column, for model building. `rt` is
    /// included so it can serve as the response.
    pub fn value(&self, name: &str) -> Option<f64> {
        Some(match name {
            "rt" => self.rt,
            "sent_position" => self.sent_position as f64,
            "region_position" => self.region_position as f64,
            "n_chars" => self.n_chars as f64,
            "n_chars_lag1" => self.n_chars_lag1 as f64,
            "n_chars_lag2" => self.n_chars_lag2 as f64,
            "unigram_surprisal" => self.unigram_surprisal,
            "unigram_lag1" => self.unigram_lag1,
            "unigram_lag2" => self.unigram_lag2,
            "lm_surprisal" => self.lm_surprisal,
            "lm_lag1" => self.lm_lag1,
            "lm_lag2" => self.lm_lag2,
            "n_heads" => self.n_heads as f64,
            "n_deps" => self.n_deps as f64,
            "n_additional" => self.n_additional as f64,
            "n_completions" => self.n_completions as f64,
            _ => return None,
        })
    }
}

/// Whether a column name is a numeric feature usable as a predictor.
pub fn is_predictor(name: &str) -> bool {
    CONTROL_PREDICTORS.contains(&name) || METRIC_PREDICTORS.contains(&name)
}

/// Sentence-initial two regions and the sentence-final region are excluded.
pub fn analyzable_regions(n_regions: usize) -> Vec<bool> {
    (1..=n_regions)
        .map(|i| i > 2 && i < n_regions)
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqKey {
    #[default]
    Lemma,
    Form,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreqTable {
    counts: HashMap<String, u64>,
    total: u64,
}

impl FreqTable {
    pub fn from_counts<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut counts = HashMap::new();
        for (key, count) in entries {
            let key = key.into();
            if count == 0 {
                return Err(Error::Config(format!("frequency count for '{key}' must be > 0")));
            }
            *counts.entry(key).or_insert(0) += count;
        }
        if counts.is_empty() {
            return Err(Error::Config("frequency table is empty".to_owned()));
        }
        let total = counts.values().sum();
        Ok(FreqTable { counts, total })
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let table = tsv::parse(text, source, &FREQ_HEADER)?;
        let mut entries = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            let count: u64 = table.field(row, 1, "count")?;
            if count == 0 {
                return Err(table.parse_err(row.line, "count must be > 0"));
            }
            entries.push((row.fields[0].clone(), count));
        }
        Self::from_counts(entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = tsv::read_file(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn count(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }
}

/// Add-α smoothing for the unigram model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Smoothing {
    pub alpha: f64,
    /// Vocabulary size; the table's observed vocabulary when unset.
    pub vocab_size: Option<usize>,
    /// Whether tokens are looked up by lemma or surface form.
    pub key: FreqKey,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing {
            alpha: 1.0,
            vocab_size: None,
            key: FreqKey::Lemma,
        }
    }
}

/// Summed unigram surprisal (bits) of `tokens`.
pub fn unigram_surprisal<'a>(
    tokens: impl IntoIterator<Item = &'a Token>,
    table: &FreqTable,
    smoothing: &Smoothing,
) -> f64 {
    let vocab = smoothing.vocab_size.unwrap_or(table.vocabulary_size()) as f64;
    let denom = table.total() as f64 + smoothing.alpha * vocab;
    tokens
        .into_iter()
        .map(|t| {
            let key = match smoothing.key {
                FreqKey::Lemma => &t.lemma,
                FreqKey::Form => &t.form,
            };
            let p = (table.count(key) as f64 + smoothing.alpha) / denom;
            -p.log2()
        })
        .sum()
}

/// Per-token language-model surprisal in bits, keyed by
/// (document, sentence, token).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LmSurprisal {
    values: HashMap<(String, usize, usize), f64>,
}

impl LmSurprisal {
    pub fn insert(&mut self, doc_id: &str, sent_index: usize, token_index: usize, bits: f64) {
        self.values
            .insert((doc_id.to_owned(), sent_index, token_index), bits);
    }

    pub fn get(&self, doc_id: &str, sent_index: usize, token_index: usize) -> Option<f64> {
        self.values
            .get(&(doc_id.to_owned(), sent_index, token_index))
            .copied()
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let table = tsv::parse(text, source, &LM_HEADER)?;
        let mut out = LmSurprisal::default();
        for row in &table.rows {
            let bits: f64 = table.field(row, 3, "surprisal_bits")?;
            if !(bits >= 0.0 && bits.is_finite()) {
                return Err(table.parse_err(row.line, "surprisal must be finite and >= 0"));
            }
            out.insert(
                &row.fields[0],
                table.field(row, 1, "sent_index")?,
                table.field(row, 2, "token_index")?,
                bits,
            );
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = tsv::read_file(path)?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Sentence-level removal of negation and question particles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Filters {
    pub exclude_particles: bool,
    pub particle_lemmas: BTreeSet<String>,
    pub content_words: bool,
    pub content_pos: Vec<String>,
}

pub fn default_particle_lemmas() -> BTreeSet<String> {
    ["ない", "ぬ", "ず", "か"].iter().map(|s| s.to_string()).collect()
}

pub fn default_content_pos() -> Vec<String> {
    ["CD", "JJ", "NN", "NP", "RB", "VB"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl Default for Filters {
    fn default() -> Self {
        Filters {
            exclude_particles: false,
            particle_lemmas: default_particle_lemmas(),
            content_words: false,
            content_pos: default_content_pos(),
        }
    }
}

fn has_particle(sentence: &SegmentedSentence, lemmas: &BTreeSet<String>) -> bool {
    sentence
        .sentence
        .tokens
        .iter()
        .any(|t| lemmas.contains(&t.lemma))
}

fn check_lemmas(lemmas: &BTreeSet<String>) -> Result<()> {
    if lemmas.is_empty() {
        return Err(Error::Config(
            "particle filter enabled with an empty lemma set".to_owned(),
        ));
    }
    Ok(())
}

/// Remove every sentence containing a token whose lemma is in `lemmas`.
pub fn filter_particles(
    sentences: Vec<SegmentedSentence>,
    lemmas: &BTreeSet<String>,
) -> Result<Vec<SegmentedSentence>> {
    check_lemmas(lemmas)?;
    Ok(sentences
        .into_iter()
        .filter(|s| !has_particle(s, lemmas))
        .collect())
}

/// Row-level form of [`filter_particles`]: drop rows whose sentence
/// contains an excluded lemma.
pub fn filter_particle_rows(
    rows: Vec<FeatureRow>,
    sentences: &[SegmentedSentence],
    lemmas: &BTreeSet<String>,
) -> Result<Vec<FeatureRow>> {
    check_lemmas(lemmas)?;
    let flagged: BTreeSet<&SentenceKey> = sentences
        .iter()
        .filter(|s| has_particle(s, lemmas))
        .map(|s| &s.key)
        .collect();
    Ok(rows
        .into_iter()
        .filter(|r| !flagged.contains(&r.sentence_key()))
        .collect())
}

/// Keep rows whose (single) token has an xpos starting with one of
/// `pos_prefixes`.
pub fn filter_content_words(rows: Vec<FeatureRow>, pos_prefixes: &[String]) -> Result<Vec<FeatureRow>> {
    if let Some(r) = rows.iter().find(|r| r.n_tokens != 1) {
        return Err(Error::Config(format!(
            "content-word filter requires single-token regions; region {} has {} tokens",
            r.region_key(),
            r.n_tokens
        )));
    }
    Ok(rows
        .into_iter()
        .filter(|r| pos_prefixes.iter().any(|p| r.xpos.starts_with(p.as_str())))
        .collect())
}

/// Per-region quantities before lagging.
#[derive(Clone, Debug, PartialEq)]
struct RegionFeatures {
    n_chars: usize,
    unigram: f64,
    lm: Option<f64>,
    metrics: MetricProfile,
    n_tokens: usize,
    xpos: String,
}

fn sentence_features(
    s: &SegmentedSentence,
    policy: &ArcPolicy,
    freq: &FreqTable,
    lm: &LmSurprisal,
    smoothing: &Smoothing,
) -> Vec<RegionFeatures> {
    let profiles = region_profile(&s.sentence, &s.regions, policy);
    s.regions
        .iter()
        .zip(profiles)
        .map(|(r, metrics)| {
            let tokens = &s.sentence.tokens[r.start - 1..r.end];
            let lm_sum = tokens
                .iter()
                .map(|t| lm.get(&s.key.doc_id, s.key.sent_index, t.index))
                .sum::<Option<f64>>();
            RegionFeatures {
                n_chars: tokens.iter().map(|t| t.char_count).sum(),
                unigram: unigram_surprisal(tokens, freq, smoothing),
                lm: lm_sum,
                metrics,
                n_tokens: tokens.len(),
                xpos: tokens[0].xpos.clone(),
            }
        })
        .collect()
}

/// Assemble one row per analyzable region with an aligned reading time.
///
/// `aligned` may carry rows for sentences that are not in `sentences`
/// (filtered out upstream); those are skipped. Spillover lags come from
/// the two preceding regions of the same sentence.
pub fn build_feature_matrix(
    sentences: &[SegmentedSentence],
    aligned: &[AlignedRt],
    policy: &ArcPolicy,
    freq: &FreqTable,
    lm: &LmSurprisal,
    smoothing: &Smoothing,
) -> Result<Vec<FeatureRow>> {
    let per_sentence: Vec<Vec<RegionFeatures>> = sentences
        .par_iter()
        .map(|s| sentence_features(s, policy, freq, lm, smoothing))
        .collect();
    let lookup: BTreeMap<&SentenceKey, &Vec<RegionFeatures>> = sentences
        .iter()
        .map(|s| &s.key)
        .zip(&per_sentence)
        .collect();

    let mut rows = Vec::new();
    let mut missing_lm = BTreeSet::new();
    for obs in aligned {
        let skey = SentenceKey {
            doc_id: obs.key.doc_id.clone(),
            sent_index: obs.key.sent_index,
        };
        let Some(feats) = lookup.get(&skey) else {
            continue;
        };
        let i = obs.key.region_index;
        if i == 0 || i > feats.len() || !analyzable_regions(feats.len())[i - 1] {
            continue;
        }
        let (cur, lag1, lag2) = (&feats[i - 1], &feats[i - 2], &feats[i - 3]);
        let lm_of = |f: &RegionFeatures, idx: usize, missing: &mut BTreeSet<RegionKey>| {
            f.lm.unwrap_or_else(|| {
                missing.insert(RegionKey {
                    region_index: idx,
                    ..obs.key.clone()
                });
                f64::NAN
            })
        };
        let lm_surprisal = lm_of(cur, i, &mut missing_lm);
        let lm_lag1 = lm_of(lag1, i - 1, &mut missing_lm);
        let lm_lag2 = lm_of(lag2, i - 2, &mut missing_lm);
        rows.push(FeatureRow {
            doc_id: obs.key.doc_id.clone(),
            sent_position: obs.key.sent_index,
            region_position: i,
            participant_id: obs.participant_id.clone(),
            rt: obs.rt,
            n_chars: cur.n_chars,
            n_chars_lag1: lag1.n_chars,
            n_chars_lag2: lag2.n_chars,
            unigram_surprisal: cur.unigram,
            unigram_lag1: lag1.unigram,
            unigram_lag2: lag2.unigram,
            lm_surprisal,
            lm_lag1,
            lm_lag2,
            n_heads: cur.metrics.predicted_heads,
            n_deps: cur.metrics.incomplete_deps,
            n_additional: cur.metrics.additional_deps,
            n_completions: cur.metrics.completions,
            n_tokens: cur.n_tokens,
            xpos: cur.xpos.clone(),
        });
    }

    if !missing_lm.is_empty() {
        let keys: Vec<String> = missing_lm.iter().map(ToString::to_string).collect();
        return Err(Error::Build {
            message: format!("missing LM surprisal for {} region(s)", keys.len()),
            keys: keys.join(", "),
        });
    }
    Ok(rows)
}

/// Region-level metrics for every region of every sentence, in corpus
/// order, for the `metrics` output.
pub fn metric_table(
    sentences: &[SegmentedSentence],
    policy: &ArcPolicy,
) -> Vec<(RegionKey, MetricProfile)> {
    let per_sentence: Vec<Vec<MetricProfile>> = sentences
        .par_iter()
        .map(|s| region_profile(&s.sentence, &s.regions, policy))
        .collect();
    sentences
        .iter()
        .zip(per_sentence)
        .flat_map(|(s, profiles)| {
            s.regions
                .iter()
                .map(|r| r.key())
                .zip(profiles)
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn write_feature_tsv(rows: &[FeatureRow]) -> String {
    let mut out = String::from("# surprisal unit: bits (log base 2)\n");
    out.push_str(&FEATURE_COLUMNS.join("\t"));
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.doc_id,
            r.sent_position,
            r.region_position,
            r.participant_id.as_deref().unwrap_or("_"),
            r.rt,
            r.n_chars,
            r.n_chars_lag1,
            r.n_chars_lag2,
            r.unigram_surprisal,
            r.unigram_lag1,
            r.unigram_lag2,
            r.lm_surprisal,
            r.lm_lag1,
            r.lm_lag2,
            r.n_heads,
            r.n_deps,
            r.n_additional,
            r.n_completions,
            r.n_tokens,
            r.xpos,
        );
    }
    out
}

pub fn parse_feature_tsv(text: &str, source: &str) -> Result<Vec<FeatureRow>> {
    let table = tsv::parse(text, source, &FEATURE_COLUMNS)?;
    table
        .rows
        .iter()
        .map(|row| {
            let f = |c: usize, name: &str| table.field::<f64>(row, c, name);
            let u = |c: usize, name: &str| table.field::<usize>(row, c, name);
            Ok(FeatureRow {
                doc_id: row.fields[0].clone(),
                sent_position: u(1, "sent_position")?,
                region_position: u(2, "region_position")?,
                participant_id: match row.fields[3].as_str() {
                    "_" => None,
                    p => Some(p.to_owned()),
                },
                rt: f(4, "rt")?,
                n_chars: u(5, "n_chars")?,
                n_chars_lag1: u(6, "n_chars_lag1")?,
                n_chars_lag2: u(7, "n_chars_lag2")?,
                unigram_surprisal: f(8, "unigram_surprisal")?,
                unigram_lag1: f(9, "unigram_lag1")?,
                unigram_lag2: f(10, "unigram_lag2")?,
                lm_surprisal: f(11, "lm_surprisal")?,
                lm_lag1: f(12, "lm_lag1")?,
                lm_lag2: f(13, "lm_lag2")?,
                n_heads: u(14, "n_heads")?,
                n_deps: u(15, "n_deps")?,
                n_additional: u(16, "n_additional")?,
                n_completions: u(17, "n_completions")?,
                n_tokens: u(18, "n_tokens")?,
                xpos: row.fields[19].clone(),
            })
        })
        .collect()
}

pub fn read_feature_tsv(path: &Path) -> Result<Vec<FeatureRow>> {
    let text = tsv::read_file(path)?;
    parse_feature_tsv(&text, &path.display().to_string())
}
