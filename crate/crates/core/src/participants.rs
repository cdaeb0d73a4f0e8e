//! Per-participant maintenance strategy and the maintenance/prediction
//! tradeoff.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, CONTROL_PREDICTORS};
use crate::regression::{
    fold_coefficient_test, label_permutation_test, Dataset, GroupDifference, LinearModel,
    ModelSpec,
};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, stable_hash, STREAM_PARTICIPANT, STREAM_TRADEOFF};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Heads,
    Deps,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Heads, Metric::Deps];

    pub fn column(self) -> &'static str {
        match self {
            Metric::Heads => "n_heads",
            Metric::Deps => "n_deps",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Heads => "heads",
            Metric::Deps => "deps",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Metric::Heads => 0,
            Metric::Deps => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantConfig {
    pub k: usize,
    pub alpha: f64,
    pub min_rows: usize,
    pub n_perm: usize,
    pub seed: u64,
}

impl ParticipantConfig {
    pub fn new(seed: u64) -> Self {
        ParticipantConfig {
            k: 10,
            alpha: 0.05,
            min_rows: 1000,
            n_perm: 10_000,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypologyLabel {
    pub participant_id: String,
    pub metric: Metric,
    /// +1 slowdown, -1 speedup, 0 neither.
    pub label: i8,
    pub p_value: f64,
    pub n_rows: usize,
    pub mean_coefficient: f64,
}

/// Either a label or the reason the participant was not classified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Classification {
    Labeled(TypologyLabel),
    Skipped { participant_id: String, n_rows: usize },
}

fn participant_seed(seed: u64, participant_id: &str, salt: u64) -> u64 {
    derive_seed(seed, &[STREAM_PARTICIPANT, stable_hash(participant_id), salt])
}

/// Label one participant's response to `metric` from fold-wise
/// coefficients of a model with the controls plus that metric only.
pub fn classify_participant<T: Scalar>(
    participant_id: &str,
    rows: &[FeatureRow],
    metric: Metric,
    cfg: &ParticipantConfig,
) -> Result<Classification> {
    if rows.len() < cfg.min_rows {
        return Ok(Classification::Skipped {
            participant_id: participant_id.to_owned(),
            n_rows: rows.len(),
        });
    }
    let mut predictors: Vec<&str> = CONTROL_PREDICTORS.to_vec();
    predictors.push(metric.column());
    let data = Dataset::<T>::from_feature_rows(rows, &predictors)?;
    let seed = participant_seed(cfg.seed, participant_id, metric.stream());
    let test = fold_coefficient_test(
        &data,
        &ModelSpec::new(&predictors),
        metric.column(),
        cfg.k,
        cfg.alpha,
        seed,
    )?;
    Ok(Classification::Labeled(TypologyLabel {
        participant_id: participant_id.to_owned(),
        metric,
        label: test.side.label(),
        p_value: test.p_value,
        n_rows: rows.len(),
        mean_coefficient: test.mean,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntiLocalityEstimate {
    pub participant_id: String,
    /// RT units per completed dependency.
    pub coefficient: f64,
    pub n_rows: usize,
}

/// Completion coefficient from one OLS fit on all of a participant's rows,
/// with the controls and both maintenance metrics in the model.
pub fn antilocality_effect<T: Scalar>(
    participant_id: &str,
    rows: &[FeatureRow],
) -> Result<AntiLocalityEstimate> {
    let mut predictors: Vec<&str> = CONTROL_PREDICTORS.to_vec();
    predictors.extend(["n_heads", "n_deps", "n_completions"]);
    let data = Dataset::<T>::from_feature_rows(rows, &predictors)?;
    let model = LinearModel::fit(&data, &ModelSpec::new(&predictors), None)?;
    let coefficient = model.raw_coefficient("n_completions").unwrap().to_f64_lossy();
    if !coefficient.is_finite() {
        return Err(Error::Contract(format!(
            "non-finite anti-locality estimate for {participant_id}"
        )));
    }
    Ok(AntiLocalityEstimate {
        participant_id: participant_id.to_owned(),
        coefficient,
        n_rows: rows.len(),
    })
}

pub fn group_by_participant(rows: Vec<FeatureRow>) -> Result<BTreeMap<String, Vec<FeatureRow>>> {
    let mut out: BTreeMap<String, Vec<FeatureRow>> = BTreeMap::new();
    for row in rows {
        let pid = row.participant_id.clone().ok_or_else(|| {
            Error::Config("participant analysis needs raw (per-participant) rows".to_owned())
        })?;
        out.entry(pid).or_default().push(row);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypologyReport {
    pub labels: Vec<TypologyLabel>,
    pub skipped: Vec<(String, usize)>,
    pub n_participants: usize,
    pub n_eligible: usize,
    /// Per metric: counts for labels +1, 0, -1.
    pub counts: BTreeMap<Metric, LabelCounts>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub slowdown: usize,
    pub neither: usize,
    pub speedup: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.slowdown + self.neither + self.speedup
    }
}

/// Classify every participant on both metrics. Participants are processed
/// in parallel; the output is ordered by participant then metric.
pub fn classify_population<T: Scalar>(
    by_participant: &BTreeMap<String, Vec<FeatureRow>>,
    cfg: &ParticipantConfig,
) -> Result<TypologyReport> {
    let results: Vec<Vec<Classification>> = by_participant
        .par_iter()
        .map(|(pid, rows)| {
            Metric::ALL
                .iter()
                .map(|&m| classify_participant::<T>(pid, rows, m, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut labels = Vec::new();
    let mut skipped = Vec::new();
    for per_metric in results {
        for c in per_metric {
            match c {
                Classification::Labeled(l) => labels.push(l),
                Classification::Skipped {
                    participant_id,
                    n_rows,
                } => {
                    if skipped.last().map(|(p, _): &(String, usize)| p) != Some(&participant_id) {
                        skipped.push((participant_id, n_rows));
                    }
                }
            }
        }
    }
    for (pid, n) in &skipped {
        log::info!("participant {pid} skipped: {n} rows < {}", cfg.min_rows);
    }

    let mut counts: BTreeMap<Metric, LabelCounts> = BTreeMap::new();
    for l in &labels {
        let c = counts.entry(l.metric).or_default();
        match l.label {
            1 => c.slowdown += 1,
            -1 => c.speedup += 1,
            _ => c.neither += 1,
        }
    }
    Ok(TypologyReport {
        n_participants: by_participant.len(),
        n_eligible: by_participant.len() - skipped.len(),
        labels,
        skipped,
        counts,
    })
}

/// Anti-locality estimates for every participant with at least `min_rows`.
pub fn estimate_population<T: Scalar>(
    by_participant: &BTreeMap<String, Vec<FeatureRow>>,
    min_rows: usize,
) -> Result<Vec<AntiLocalityEstimate>> {
    by_participant
        .par_iter()
        .filter(|(_, rows)| rows.len() >= min_rows)
        .map(|(pid, rows)| antilocality_effect::<T>(pid, rows))
        .collect()
}

/// A comparison of mean anti-locality coefficients between two label groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Contrast {
    Tested {
        first: String,
        second: String,
        n_first: usize,
        n_second: usize,
        mean_first: f64,
        mean_second: f64,
        #[serde(flatten)]
        test: GroupDifference,
    },
    Untestable {
        first: String,
        second: String,
        n_first: usize,
        n_second: usize,
        reason: String,
    },
}

impl Contrast {
    pub fn p_two_sided(&self) -> Option<f64> {
        match self {
            Contrast::Tested { test, .. } => Some(test.p_two_sided),
            Contrast::Untestable { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectPoint {
    pub participant_id: String,
    pub label: i8,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTradeoff {
    pub metric: Metric,
    /// Slowdown (+1) vs speedup (-1) readers.
    pub primary: Contrast,
    /// Slowdown (+1) vs everyone else.
    pub secondary: Contrast,
    pub distribution: Vec<EffectPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub metrics: Vec<MetricTradeoff>,
}

fn contrast(
    first_name: &str,
    first: &[f64],
    second_name: &str,
    second: &[f64],
    n_perm: usize,
    seed: u64,
) -> Contrast {
    if first.len() < 2 || second.len() < 2 {
        return Contrast::Untestable {
            first: first_name.to_owned(),
            second: second_name.to_owned(),
            n_first: first.len(),
            n_second: second.len(),
            reason: "each group needs at least 2 participants".to_owned(),
        };
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Contrast::Tested {
        first: first_name.to_owned(),
        second: second_name.to_owned(),
        n_first: first.len(),
        n_second: second.len(),
        mean_first: mean(first),
        mean_second: mean(second),
        test: label_permutation_test(first, second, n_perm, seed),
    }
}

/// Compare anti-locality coefficients between typology groups, per metric.
pub fn tradeoff_test(
    labels: &[TypologyLabel],
    effects: &[AntiLocalityEstimate],
    n_perm: usize,
    seed: u64,
) -> Result<TradeoffReport> {
    let effect_of: BTreeMap<&str, f64> = effects
        .iter()
        .map(|e| (e.participant_id.as_str(), e.coefficient))
        .collect();

    let mut metrics = Vec::new();
    for metric in Metric::ALL {
        let mut distribution = Vec::new();
        for l in labels.iter().filter(|l| l.metric == metric) {
            let coefficient = *effect_of.get(l.participant_id.as_str()).ok_or_else(|| {
                Error::Config(format!(
                    "no anti-locality estimate for participant {}",
                    l.participant_id
                ))
            })?;
            distribution.push(EffectPoint {
                participant_id: l.participant_id.clone(),
                label: l.label,
                coefficient,
            });
        }
        let select = |pred: &dyn Fn(i8) -> bool| -> Vec<f64> {
            distribution
                .iter()
                .filter(|p| pred(p.label))
                .map(|p| p.coefficient)
                .collect()
        };
        let slow = select(&|l| l == 1);
        let fast = select(&|l| l == -1);
        let rest = select(&|l| l != 1);
        let base = derive_seed(seed, &[STREAM_TRADEOFF, metric.stream()]);
        metrics.push(MetricTradeoff {
            metric,
            primary: contrast("slowdown", &slow, "speedup", &fast, n_perm, base),
            secondary: contrast("slowdown", &slow, "other", &rest, n_perm, base ^ 1),
            distribution,
        });
    }
    Ok(TradeoffReport { metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(pid: &str, l: i8) -> TypologyLabel {
        TypologyLabel {
            participant_id: pid.into(),
            metric: Metric::Heads,
            label: l,
            p_value: 0.5,
            n_rows: 1000,
            mean_coefficient: 0.0,
        }
    }

    fn effect(pid: &str, c: f64) -> AntiLocalityEstimate {
        AntiLocalityEstimate {
            participant_id: pid.into(),
            coefficient: c,
            n_rows: 1000,
        }
    }

    #[test]
    fn single_label_population_is_untestable() {
        let labels: Vec<_> = (0..5).map(|i| label(&i.to_string(), 1)).collect();
        let effects: Vec<_> = (0..5).map(|i| effect(&i.to_string(), -3.0)).collect();
        let r = tradeoff_test(&labels, &effects, 100, 1).unwrap();
        assert!(matches!(r.metrics[0].primary, Contrast::Untestable { .. }));
        assert!(matches!(r.metrics[0].secondary, Contrast::Untestable { .. }));
    }

    #[test]
    fn missing_effect_is_an_error() {
        assert!(tradeoff_test(&[label("a", 1)], &[], 100, 1).is_err());
    }

    #[test]
    fn below_threshold_is_skipped() {
        let cfg = ParticipantConfig::new(1);
        let c = classify_participant::<f64>("p", &[], Metric::Heads, &cfg).unwrap();
        assert_eq!(
            c,
            Classification::Skipped {
                participant_id: "p".into(),
                n_rows: 0
            }
        );
    }
}
