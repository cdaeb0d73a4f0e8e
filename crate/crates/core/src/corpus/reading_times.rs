//! Reading-time observations and their alignment to regions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::regions::{Region, RegionKey};
use crate::error::{Error, Result};
use crate::tsv;

pub const RT_HEADER: [&str; 5] = [
    "doc_id",
    "sent_index",
    "region_index",
    "participant_id",
    "rt_ms",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RtObservation {
    pub key: RegionKey,
    pub participant_id: String,
    pub rt: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// One row per region: the mean over participants.
    #[default]
    Mean,
    /// One row per (region, participant).
    Raw,
}

/// Optional bounds on individual reading times, applied before aggregation.
/// Off unless configured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RtTrim {
    pub min_ms: Option<f64>,
    pub max_ms: Option<f64>,
}

impl RtTrim {
    fn keeps(&self, rt: f64) -> bool {
        self.min_ms.is_none_or(|m| rt >= m) && self.max_ms.is_none_or(|m| rt <= m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignedRt {
    pub key: RegionKey,
    /// `None` in mean mode.
    pub participant_id: Option<String>,
    pub rt: f64,
    /// Number of observations behind `rt`.
    pub n_obs: usize,
}

pub fn parse_rt_file(text: &str, source: &str) -> Result<Vec<RtObservation>> {
    let table = tsv::parse(text, source, &RT_HEADER)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let rt: f64 = table.field(row, 4, "rt_ms")?;
        if !(rt > 0.0 && rt.is_finite()) {
            return Err(table.parse_err(row.line, format!("rt_ms must be positive, got {rt}")));
        }
        out.push(RtObservation {
            key: RegionKey {
                doc_id: row.fields[0].clone(),
                sent_index: table.field(row, 1, "sent_index")?,
                region_index: table.field(row, 2, "region_index")?,
            },
            participant_id: row.fields[3].clone(),
            rt,
        });
    }
    Ok(out)
}

pub fn read_rt_file(path: &Path) -> Result<Vec<RtObservation>> {
    let text = tsv::read_file(path)?;
    parse_rt_file(&text, &path.display().to_string())
}

/// Join observations to regions and aggregate.
///
/// Output is ordered by region key, then participant.
pub fn align_reading_times(
    regions: &[Region],
    observations: &[RtObservation],
    aggregation: Aggregation,
    trim: RtTrim,
) -> Result<Vec<AlignedRt>> {
    let known: BTreeSet<RegionKey> = regions.iter().map(Region::key).collect();
    let unresolved: BTreeSet<&RegionKey> = observations
        .iter()
        .map(|o| &o.key)
        .filter(|k| !known.contains(*k))
        .collect();
    if !unresolved.is_empty() {
        let keys: Vec<String> = unresolved.iter().map(ToString::to_string).collect();
        return Err(Error::Alignment {
            count: keys.len(),
            keys: keys.join(", "),
        });
    }

    let kept = observations.iter().filter(|o| trim.keeps(o.rt));
    match aggregation {
        Aggregation::Mean => {
            let mut acc: BTreeMap<&RegionKey, (f64, usize)> = BTreeMap::new();
            for o in kept {
                let e = acc.entry(&o.key).or_insert((0.0, 0));
                e.0 += o.rt;
                e.1 += 1;
            }
            Ok(acc
                .into_iter()
                .map(|(key, (sum, n))| AlignedRt {
                    key: key.clone(),
                    participant_id: None,
                    rt: sum / n as f64,
                    n_obs: n,
                })
                .collect())
        }
        Aggregation::Raw => {
            let mut acc: BTreeMap<(&RegionKey, &str), (f64, usize)> = BTreeMap::new();
            for o in kept {
                let e = acc.entry((&o.key, &o.participant_id)).or_insert((0.0, 0));
                e.0 += o.rt;
                e.1 += 1;
            }
            Ok(acc
                .into_iter()
                .map(|((key, pid), (sum, n))| AlignedRt {
                    key: key.clone(),
                    participant_id: Some(pid.to_owned()),
                    rt: sum / n as f64,
                    n_obs: n,
                })
                .collect())
        }
    }
}
