//! Synthetic corpora with planted effects, for tests, calibration runs and
//! the bundled demo fixture.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_conllu, Document, Region, RegionKey, RtObservation, SegmentedSentence, Sentence,
    SentenceKey, Token,
};
use crate::error::{Error, Result};
use crate::features::FreqTable;
use crate::metrics::{region_profile, ArcPolicy};
use crate::seed::rng_for;

/// Uniformly random attachment order: the first node in a random order is
/// the root and every later node attaches to a random earlier one.
/// Produces arbitrary (possibly non-projective) trees.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let mut heads = vec![0; n];
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        heads[order[i] - 1] = parent;
    }
    heads
}

/// Strictly head-final tree: each token attaches to a later one, the last
/// token is the root. Attachment is biased towards nearby heads.
pub fn random_head_final_tree(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (1..=n)
        .map(|i| {
            if i == n {
                0
            } else if rng.random_bool(0.6) {
                i + 1
            } else {
                rng.random_range(i + 1..=n)
            }
        })
        .collect()
}

const DEPRELS: [&str; 10] = [
    "nsubj", "obj", "iobj", "obl", "advcl", "acl", "nmod", "case", "aux", "mark",
];
const KANA: [char; 20] = [
    'か', 'き', 'く', 'け', 'こ', 'さ', 'し', 'す', 'せ', 'そ', 'た', 'ち', 'つ', 'て', 'と', 'な',
    'に', 'の', 'は', 'を',
];
const XPOS: [&str; 6] = ["NN", "VB", "JJ", "RB", "DT", "IN"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_docs: usize,
    pub sentences_per_doc: usize,
    /// Syntactic words per sentence (inclusive range), before punctuation.
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub n_participants: usize,
    pub vocab_size: usize,
    /// Fraction of sentences containing a negation particle.
    pub particle_rate: f64,
    pub effects: PlantedEffects,
    /// Per-participant overrides of the n_heads and n_completions effects,
    /// assigned cyclically; empty means everyone uses `effects`.
    pub participant_effects: Vec<ParticipantEffect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantEffect {
    pub n_heads: f64,
    pub n_completions: f64,
}

/// Linear effects used to generate reading times (ms per unit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffects {
    pub intercept: f64,
    pub n_chars: f64,
    pub unigram: f64,
    pub lm: f64,
    pub n_heads: f64,
    pub n_additional: f64,
    pub n_completions: f64,
    pub noise_sd: f64,
    /// Between-participant spread of the intercept.
    pub participant_sd: f64,
}

impl Default for PlantedEffects {
    fn default() -> Self {
        PlantedEffects {
            intercept: 300.0,
            n_chars: 8.0,
            unigram: 3.0,
            lm: 4.0,
            n_heads: 6.0,
            n_additional: 3.0,
            n_completions: -5.0,
            noise_sd: 40.0,
            participant_sd: 30.0,
        }
    }
}

impl SynthSpec {
    /// A small corpus suitable for end-to-end CLI runs.
    pub fn fixture(seed: u64) -> Self {
        SynthSpec {
            seed,
            n_docs: 3,
            sentences_per_doc: 60,
            min_tokens: 8,
            max_tokens: 16,
            n_participants: 9,
            vocab_size: 150,
            particle_rate: 0.1,
            effects: PlantedEffects::default(),
            participant_effects: vec![
                ParticipantEffect {
                    n_heads: 8.0,
                    n_completions: -10.0,
                },
                ParticipantEffect {
                    n_heads: 0.0,
                    n_completions: -5.0,
                },
                ParticipantEffect {
                    n_heads: -8.0,
                    n_completions: 0.0,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    pub sentences: Vec<SegmentedSentence>,
    pub observations: Vec<RtObservation>,
    pub freq_counts: Vec<(String, u64)>,
    /// (doc, sentence, token, bits)
    pub lm_surprisal: Vec<(String, usize, usize, f64)>,
}

fn word_form(id: usize) -> String {
    let len = 1 + id % 4;
    (0..len).map(|k| KANA[(id * 7 + k * 3) % KANA.len()]).collect()
}

fn region_spans(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 1;
    while start <= n {
        let len = rng.random_range(1..=3).min(n + 1 - start);
        spans.push((start, start + len - 1));
        start += len;
    }
    spans
}

impl SynthCorpus {
    pub fn generate(spec: &SynthSpec) -> Result<Self> {
        if spec.min_tokens < 2 || spec.max_tokens < spec.min_tokens {
            return Err(Error::Config("invalid synthetic token range".to_owned()));
        }
        let mut rng = rng_for(spec.seed, &[0x5e7]);
        let zipf_total: Vec<u64> = (1..=spec.vocab_size)
            .map(|r| (100_000.0 / r as f64).ceil() as u64)
            .collect();
        let lemmas: Vec<String> = (0..spec.vocab_size).map(|i| format!("w{i}")).collect();

        let mut documents = Vec::new();
        let mut sentences = Vec::new();
        let mut lm_surprisal = Vec::new();
        for d in 0..spec.n_docs {
            let doc_id = format!("doc{:02}", d + 1);
            let mut doc = Document {
                id: doc_id.clone(),
                sentences: Vec::new(),
            };
            for s in 0..spec.sentences_per_doc {
                let n = rng.random_range(spec.min_tokens..=spec.max_tokens);
                let heads = random_head_final_tree(n, &mut rng);
                let mut tokens = Vec::with_capacity(n + 1);
                for (i, &h) in heads.iter().enumerate() {
                    // rank-biased word choice
                    let u: f64 = rng.random();
                    let w = ((spec.vocab_size as f64).powf(u) as usize).min(spec.vocab_size) - 1;
                    let deprel = if h == 0 {
                        "root"
                    } else {
                        *DEPRELS.choose(&mut rng).unwrap()
                    };
                    let xpos = XPOS[w % XPOS.len()];
                    tokens.push(Token::new(i + 1, &word_form(w), &lemmas[w], "X", xpos, h, deprel));
                }
                if rng.random_bool(spec.particle_rate) {
                    let t = tokens.last_mut().unwrap();
                    t.lemma = "ない".to_owned();
                }
                let root = n;
                tokens.push(Token::new(n + 1, "。", "。", "PUNCT", "SYM", root, "punct"));
                let sentence = Sentence {
                    sent_id: Some(format!("{doc_id}-{}", s + 1)),
                    tokens,
                };

                let key = SentenceKey {
                    doc_id: doc_id.clone(),
                    sent_index: s + 1,
                };
                let regions = region_spans(n + 1, &mut rng)
                    .into_iter()
                    .enumerate()
                    .map(|(r, (start, end))| Region {
                        doc_id: doc_id.clone(),
                        sent_index: s + 1,
                        region_index: r + 1,
                        start,
                        end,
                    })
                    .collect();
                for t in &sentence.tokens {
                    let bits = 1.0 + 11.0 * rng.random::<f64>();
                    lm_surprisal.push((doc_id.clone(), s + 1, t.index, bits));
                }
                doc.sentences.push(sentence.clone());
                sentences.push(SegmentedSentence {
                    key,
                    sentence,
                    regions,
                });
            }
            documents.push(doc);
        }

        let mut freq_counts: Vec<(String, u64)> =
            lemmas.iter().cloned().zip(zipf_total).collect();
        freq_counts.push(("ない".to_owned(), 5000));
        freq_counts.push(("。".to_owned(), 80_000));

        let mut corpus = SynthCorpus {
            documents,
            sentences,
            observations: Vec::new(),
            freq_counts,
            lm_surprisal,
        };
        corpus.observations = corpus.simulate_reading_times(spec, &mut rng)?;
        Ok(corpus)
    }

    fn simulate_reading_times(
        &self,
        spec: &SynthSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<RtObservation>> {
        let e = &spec.effects;
        let freq = FreqTable::from_counts(self.freq_counts.iter().cloned())?;
        let lm: std::collections::HashMap<(&str, usize, usize), f64> = self
            .lm_surprisal
            .iter()
            .map(|(d, s, t, b)| ((d.as_str(), *s, *t), *b))
            .collect();
        let participant_shift = Normal::new(0.0, e.participant_sd.max(1e-9)).unwrap();
        let shifts: Vec<f64> = (0..spec.n_participants)
            .map(|_| participant_shift.sample(rng))
            .collect();

        let mut out = Vec::new();
        for s in &self.sentences {
            let profiles = region_profile(&s.sentence, &s.regions, &ArcPolicy::head_final());
            for (r, m) in s.regions.iter().zip(profiles) {
                let tokens = &s.sentence.tokens[r.start - 1..r.end];
                let chars: usize = tokens.iter().map(|t| t.char_count).sum();
                let uni = crate::features::unigram_surprisal(
                    tokens,
                    &freq,
                    &crate::features::Smoothing::default(),
                );
                let lm_sum: f64 = tokens
                    .iter()
                    .map(|t| lm[&(s.key.doc_id.as_str(), s.key.sent_index, t.index)])
                    .sum();
                let mean = e.intercept
                    + e.n_chars * chars as f64
                    + e.unigram * uni
                    + e.lm * lm_sum
                    + e.n_additional * m.additional_deps as f64;
                for (p, shift) in shifts.iter().enumerate() {
                    let pe = Self::participant_effect(spec, p);
                    let planted = pe.n_heads * m.predicted_heads as f64
                        + pe.n_completions * m.completions as f64;
                    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * e.noise_sd;
                    out.push(RtObservation {
                        key: RegionKey {
                            doc_id: r.doc_id.clone(),
                            sent_index: r.sent_index,
                            region_index: r.region_index,
                        },
                        participant_id: format!("p{:03}", p + 1),
                        rt: (mean + planted + shift + noise).max(50.0),
                    });
                }
            }
        }
        Ok(out)
    }

    /// Effects used for participant `p` (0-based).
    pub fn participant_effect(spec: &SynthSpec, p: usize) -> ParticipantEffect {
        if spec.participant_effects.is_empty() {
            ParticipantEffect {
                n_heads: spec.effects.n_heads,
                n_completions: spec.effects.n_completions,
            }
        } else {
            spec.participant_effects[p % spec.participant_effects.len()]
        }
    }

    pub fn freq_table(&self) -> Result<FreqTable> {
        FreqTable::from_counts(self.freq_counts.iter().cloned())
    }

    pub fn lm_table(&self) -> crate::features::LmSurprisal {
        let mut lm = crate::features::LmSurprisal::default();
        for (d, s, t, b) in &self.lm_surprisal {
            lm.insert(d, *s, *t, *b);
        }
        lm
    }

    pub fn regions(&self) -> Vec<Region> {
        self.sentences
            .iter()
            .flat_map(|s| s.regions.iter().cloned())
            .collect()
    }

    /// Write the corpus as the toolkit's input files plus a matching config.
    pub fn write_to(&self, dir: &Path, seed: u64) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path, e))
        };

        write("treebank.conllu", write_conllu(&self.documents))?;

        let mut regions = String::from("doc_id\tsent_index\tregion_index\ttoken_start\ttoken_end\n");
        for r in self.regions() {
            let _ = writeln!(
                regions,
                "{}\t{}\t{}\t{}\t{}",
                r.doc_id, r.sent_index, r.region_index, r.start, r.end
            );
        }
        write("regions.tsv", regions)?;

        let mut rts = String::from("doc_id\tsent_index\tregion_index\tparticipant_id\trt_ms\n");
        for o in &self.observations {
            let _ = writeln!(
                rts,
                "{}\t{}\t{}\t{}\t{:.3}",
                o.key.doc_id, o.key.sent_index, o.key.region_index, o.participant_id, o.rt
            );
        }
        write("reading_times.tsv", rts)?;

        let mut freq = String::from("lemma\tcount\n");
        for (l, c) in &self.freq_counts {
            let _ = writeln!(freq, "{l}\t{c}");
        }
        write("freq.tsv", freq)?;

        let mut lm = String::from("doc_id\tsent_index\ttoken_index\tsurprisal_bits\n");
        for (d, s, t, b) in &self.lm_surprisal {
            let _ = writeln!(lm, "{d}\t{s}\t{t}\t{b:.6}");
        }
        write("lm_surprisal.tsv", lm)?;

        write("config.toml", fixture_config(seed))?;
        Ok(())
    }
}

/// Config matching the file names written by [`SynthCorpus::write_to`].
pub fn fixture_config(seed: u64) -> String {
    format!(
        r#"[paths]
treebank = "treebank.conllu"
regions = "regions.tsv"
reading_times = "reading_times.tsv"
freq_table = "freq.tsv"
lm_surprisal = "lm_surprisal.tsv"

[language]
mode = "head-final"

[filters]
exclude_particles = false
particle_lemmas = ["ない", "ぬ", "ず", "か"]

[smoothing]
alpha = 1.0

[aggregation]
mode = "mean"

[stats]
k = 10
repeats = 5
n_perm = 999
seed = {seed}
alpha = 0.05
min_rows = 100
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_tree;

    #[test]
    fn random_trees_are_valid() {
        let mut rng = rng_for(1, &[]);
        for n in 1..30 {
            let s = Sentence::from_heads(&random_tree(n, &mut rng));
            assert!(validate_tree(&s.tokens).is_valid());
            let s = Sentence::from_heads(&random_head_final_tree(n, &mut rng));
            assert!(validate_tree(&s.tokens).is_valid());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            n_docs: 1,
            sentences_per_doc: 5,
            n_participants: 2,
            ..SynthSpec::fixture(4)
        };
        let a = SynthCorpus::generate(&spec).unwrap();
        let b = SynthCorpus::generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sentences.len(), 5);
        for s in &a.sentences {
            assert!(validate_tree(&s.sentence.tokens).is_valid());
            let covered: usize = s.regions.iter().map(Region::len).sum();
            assert_eq!(covered, s.sentence.len());
        }
    }
}
