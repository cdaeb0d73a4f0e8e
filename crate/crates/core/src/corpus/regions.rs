//! Presentation regions (bunsetsu, or words in English mode).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::conllu::{Sentence, ValidatedDocument};
use crate::error::{Error, Result};
use crate::tsv;

pub const REGION_HEADER: [&str; 5] = [
    "doc_id",
    "sent_index",
    "region_index",
    "token_start",
    "token_end",
];

/// Identifies a sentence within the corpus.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceKey {
    pub doc_id: String,
    pub sent_index: usize,
}

/// Identifies a region within the corpus.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionKey {
    pub doc_id: String,
    pub sent_index: usize,
    pub region_index: usize,
}

impl std::fmt::Display for RegionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.doc_id, self.sent_index, self.region_index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Region {
    pub doc_id: String,
    pub sent_index: usize,
    pub region_index: usize,
    /// Inclusive 1-based token span.
    pub start: usize,
    pub end: usize,
}

impl Region {
    pub fn key(&self) -> RegionKey {
        RegionKey {
            doc_id: self.doc_id.clone(),
            sent_index: self.sent_index,
            region_index: self.region_index,
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// One row of a region file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionEntry {
    pub region_index: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionFallback {
    /// Sentences without region entries are an error.
    #[default]
    None,
    /// Sentences without region entries get one region per token.
    Token,
}

/// Region entries grouped by sentence.
pub type RegionIndex = BTreeMap<SentenceKey, Vec<RegionEntry>>;

pub fn parse_region_file(text: &str, source: &str) -> Result<RegionIndex> {
    let table = tsv::parse(text, source, &REGION_HEADER)?;
    let mut index = RegionIndex::new();
    for row in &table.rows {
        let key = SentenceKey {
            doc_id: row.fields[0].clone(),
            sent_index: table.field(row, 1, "sent_index")?,
        };
        let entry = RegionEntry {
            region_index: table.field(row, 2, "region_index")?,
            start: table.field(row, 3, "token_start")?,
            end: table.field(row, 4, "token_end")?,
        };
        index.entry(key).or_default().push(entry);
    }
    Ok(index)
}

pub fn read_region_file(path: &Path) -> Result<RegionIndex> {
    let text = tsv::read_file(path)?;
    parse_region_file(&text, &path.display().to_string())
}

/// Build the regions of one sentence from its region-file entries.
pub fn segment_regions(
    key: &SentenceKey,
    sentence_len: usize,
    entries: Option<&[RegionEntry]>,
    fallback: RegionFallback,
) -> Result<Vec<Region>> {
    let seg_err = |message: String| Error::Segmentation {
        doc_id: key.doc_id.clone(),
        sent_index: key.sent_index,
        message,
    };
    let make = |region_index, start, end| Region {
        doc_id: key.doc_id.clone(),
        sent_index: key.sent_index,
        region_index,
        start,
        end,
    };

    let entries = match entries {
        Some(e) if !e.is_empty() => e,
        _ => {
            return match fallback {
                RegionFallback::Token => Ok((1..=sentence_len).map(|i| make(i, i, i)).collect()),
                RegionFallback::None => Err(seg_err("no region entries".to_owned())),
            }
        }
    };

    let mut sorted = entries.to_vec();
    sorted.sort_by_key(|e| e.region_index);

    let mut regions = Vec::with_capacity(sorted.len());
    let mut next_token = 1;
    for (i, entry) in sorted.iter().enumerate() {
        if entry.region_index != i + 1 {
            return Err(seg_err(format!(
                "region indices must run 1..{}; found {}",
                sorted.len(),
                entry.region_index
            )));
        }
        if entry.start > entry.end {
            return Err(seg_err(format!(
                "region {} has start {} > end {}",
                entry.region_index, entry.start, entry.end
            )));
        }
        if entry.start > next_token {
            return Err(seg_err(format!(
                "tokens {}..{} are not covered by any region",
                next_token,
                entry.start - 1
            )));
        }
        if entry.start < next_token {
            return Err(seg_err(format!(
                "region {} overlaps the previous region at token {}",
                entry.region_index, entry.start
            )));
        }
        regions.push(make(entry.region_index, entry.start, entry.end));
        next_token = entry.end + 1;
    }
    if next_token != sentence_len + 1 {
        return Err(seg_err(format!(
            "regions cover tokens 1..{} but the sentence has {} tokens",
            next_token - 1,
            sentence_len
        )));
    }
    Ok(regions)
}

/// A validated sentence together with its regions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentedSentence {
    pub key: SentenceKey,
    pub sentence: Sentence,
    pub regions: Vec<Region>,
}

/// Attach regions to every surviving sentence of the corpus.
///
/// Entries that reference a dropped sentence are ignored; entries that
/// reference a sentence absent from the treebank are an error.
pub fn segment_corpus(
    docs: &[ValidatedDocument],
    index: &RegionIndex,
    fallback: RegionFallback,
) -> Result<Vec<SegmentedSentence>> {
    let mut known = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for doc in docs {
        for (i, sentence) in doc.sentences.iter().enumerate() {
            let key = SentenceKey {
                doc_id: doc.id.clone(),
                sent_index: i + 1,
            };
            known.insert(key.clone());
            let Some(sentence) = sentence else { continue };
            let regions = segment_regions(
                &key,
                sentence.len(),
                index.get(&key).map(Vec::as_slice),
                fallback,
            )?;
            out.push(SegmentedSentence {
                key,
                sentence: sentence.clone(),
                regions,
            });
        }
    }
    if let Some(missing) = index.keys().find(|k| !known.contains(k)) {
        return Err(Error::Segmentation {
            doc_id: missing.doc_id.clone(),
            sent_index: missing.sent_index,
            message: "region file references a sentence absent from the treebank".to_owned(),
        });
    }
    Ok(out)
}

/// In strict mode, a `# sent_id` comment whose trailing integer disagrees
/// with the sentence's position in its document is an error.
pub fn check_sent_ids(docs: &[ValidatedDocument]) -> Result<()> {
    for doc in docs {
        for (i, sentence) in doc.sentences.iter().enumerate() {
            let Some(id) = sentence.as_ref().and_then(|s| s.sent_id.as_deref()) else {
                continue;
            };
            let digits: String = id
                .chars()
                .rev()
                .take_while(char::is_ascii_digit)
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            if let Ok(n) = digits.parse::<usize>() {
                if n != i + 1 {
                    return Err(Error::Segmentation {
                        doc_id: doc.id.clone(),
                        sent_index: i + 1,
                        message: format!("sent_id '{id}' disagrees with sentence position"),
                    });
                }
            }
        }
    }
    Ok(())
}
