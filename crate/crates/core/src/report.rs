//! Persisted result documents and the report tables built from them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, CONTROL_PREDICTORS, METRIC_PREDICTORS};
use crate::participants::{Contrast, Metric, TradeoffReport, TypologyReport};
use crate::regression::Side;
use crate::tsv::{format_sig, write_atomic};

/// Significance marker: `***` p < 0.001, `**` < 0.01, `*` < 0.05, `†` < 0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "†"
    } else {
        ""
    }
}

/// Six significant digits; `NA` for non-finite values.
pub fn fmt(value: f64) -> String {
    if value.is_finite() {
        format_sig(value, 6)
    } else {
        "NA".to_owned()
    }
}

/// ΔMSE of a full model over the baseline (or of the baseline over a
/// reduced baseline, for ablations).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub predictors: Vec<String>,
    pub delta_mse: f64,
    /// Standard error of the mean per-item error difference.
    pub se: f64,
    pub p_value: f64,
}

/// Paired comparison between two full models: `delta_mse` is
/// MSE(second) - MSE(first), tested one-sided for first being better.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pairwise {
    pub first: String,
    pub second: String,
    pub delta_mse: f64,
    pub se: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSummary {
    pub predictor: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub p_above: f64,
    pub p_below: f64,
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldCoefficients {
    /// Model whose fold fits these are.
    pub model: String,
    pub names: Vec<String>,
    /// One vector per fold, aligned with `names`.
    pub folds: Vec<Vec<f64>>,
}

/// Everything `eval` computes, as written to `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub k: usize,
    pub repeats: usize,
    pub n_perm: usize,
    pub alpha: f64,
    pub n_rows: usize,
    pub base: Vec<String>,
    /// Name of the model the top-level `delta_mse` and `p_value` refer to.
    pub headline: String,
    pub delta_mse: f64,
    pub p_value: f64,
    pub fold_coefficients: FoldCoefficients,
    pub predictors: Vec<PredictorSummary>,
    pub models: Vec<Comparison>,
    pub pairwise: Vec<Pairwise>,
    pub ablation: Vec<Comparison>,
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&Comparison> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = crate::tsv::read_file(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

/// `dmse.tsv`: one bar per model comparison with a 95% normal interval.
pub fn dmse_table(eval: &EvalReport) -> String {
    let mut out = String::from("comparison\tgroup\tdelta_mse\tse\tci_low\tci_high\tp_value\tsignificance\n");
    let mut row = |name: &str, group: &str, d: f64, se: f64, p: f64| {
        let _ = writeln!(
            out,
            "{name}\t{group}\t{}\t{}\t{}\t{}\t{}\t{}",
            fmt(d),
            fmt(se),
            fmt(d - 1.96 * se),
            fmt(d + 1.96 * se),
            fmt(p),
            stars(p)
        );
    };
    for m in &eval.models {
        row(&m.name, "model", m.delta_mse, m.se, m.p_value);
    }
    for p in &eval.pairwise {
        row(
            &format!("{}-vs-{}", p.first, p.second),
            "pairwise",
            p.delta_mse,
            p.se,
            p.p_value,
        );
    }
    for a in &eval.ablation {
        row(&a.name, "baseline", a.delta_mse, a.se, a.p_value);
    }
    out
}

/// `coefficients.tsv`: fold coefficients in long format.
pub fn coefficient_table(eval: &EvalReport) -> String {
    let mut out = String::from("model\tpredictor\tfold\tcoefficient\n");
    let fc = &eval.fold_coefficients;
    for (j, name) in fc.names.iter().enumerate() {
        for (f, coefs) in fc.folds.iter().enumerate() {
            let _ = writeln!(out, "{}\t{name}\t{}\t{}", fc.model, f + 1, fmt(coefs[j]));
        }
    }
    out
}

/// Baseline ablations followed by the metric models.
pub fn table1(eval: &EvalReport) -> String {
    let mut out = String::from("predictor\tdelta_mse\tsignificance\n");
    for c in eval.ablation.iter().chain(&eval.models) {
        let _ = writeln!(out, "{}\t{}\t{}", c.name, fmt(c.delta_mse), stars(c.p_value));
    }
    out
}

/// Extra derived column shown in the correlation matrix.
pub const DIFFERENCE_COLUMN: &str = "n_deps_minus_n_heads";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl Correlations {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.matrix[i][j])
    }
}

/// Pearson correlations among all numeric predictors, plus
/// `n_deps - n_heads`. Constant columns give NaN.
pub fn correlations(rows: &[FeatureRow]) -> Correlations {
    let mut names: Vec<String> = CONTROL_PREDICTORS
        .iter()
        .chain(&METRIC_PREDICTORS)
        .map(|s| s.to_string())
        .collect();
    let mut columns: Vec<Vec<f64>> = names
        .iter()
        .map(|n| rows.iter().map(|r| r.value(n).unwrap()).collect())
        .collect();
    names.push(DIFFERENCE_COLUMN.to_owned());
    columns.push(
        rows.iter()
            .map(|r| r.n_deps as f64 - r.n_heads as f64)
            .collect(),
    );

    let centred: Vec<(Vec<f64>, f64)> = columns
        .into_iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len().max(1) as f64;
            let d: Vec<f64> = c.iter().map(|v| v - m).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            (d, norm)
        })
        .collect();
    let matrix = centred
        .iter()
        .map(|(a, na)| {
            centred
                .iter()
                .map(|(b, nb)| {
                    if *na == 0.0 || *nb == 0.0 {
                        f64::NAN
                    } else {
                        let r = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
                        r.clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    Correlations { names, matrix }
}

pub fn correlation_table(c: &Correlations) -> String {
    let mut out = String::from("variable");
    for n in &c.names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for (n, row) in c.names.iter().zip(&c.matrix) {
        out.push_str(n);
        for v in row {
            out.push('\t');
            out.push_str(&fmt(*v));
        }
        out.push('\n');
    }
    out
}

pub fn typology_counts_table(t: &TypologyReport) -> String {
    let mut out = String::from("metric\tslowdown\tneither\tspeedup\tlabeled\teligible\tparticipants\n");
    for m in Metric::ALL {
        let c = t.counts.get(&m).copied().unwrap_or_default();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.name(),
            c.slowdown,
            c.neither,
            c.speedup,
            c.total(),
            t.n_eligible,
            t.n_participants
        );
    }
    out
}

pub fn tradeoff_table(t: &TradeoffReport) -> String {
    let mut out = String::from(
        "metric\tcontrast\tn_first\tn_second\tmean_first\tmean_second\tdifference\tp_two_sided\tp_less\tp_greater\tsignificance\n",
    );
    for m in &t.metrics {
        for c in [&m.primary, &m.secondary] {
            match c {
                Contrast::Tested {
                    first,
                    second,
                    n_first,
                    n_second,
                    mean_first,
                    mean_second,
                    test,
                } => {
                    let _ = writeln!(
                        out,
                        "{}\t{first}-vs-{second}\t{n_first}\t{n_second}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        m.metric.name(),
                        fmt(*mean_first),
                        fmt(*mean_second),
                        fmt(test.difference),
                        fmt(test.p_two_sided),
                        fmt(test.p_less),
                        fmt(test.p_greater),
                        stars(test.p_two_sided)
                    );
                }
                Contrast::Untestable {
                    first,
                    second,
                    n_first,
                    n_second,
                    ..
                } => {
                    let _ = writeln!(
                        out,
                        "{}\t{first}-vs-{second}\t{n_first}\t{n_second}\tNA\tNA\tNA\tNA\tNA\tNA\tuntestable",
                        m.metric.name()
                    );
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    #[default]
    Tsv,
}

/// Round every float in a JSON tree to six significant digits.
fn round_json(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            let r: f64 = format_sig(x, 6).parse().unwrap_or(x);
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    table1: Vec<Table1Entry<'a>>,
    pairwise: &'a [Pairwise],
    predictors: &'a [PredictorSummary],
    correlations: Option<&'a Correlations>,
    typology: Option<&'a TypologyReport>,
    tradeoff: Option<&'a TradeoffReport>,
}

#[derive(Serialize)]
struct Table1Entry<'a> {
    predictor: &'a str,
    delta_mse: f64,
    p_value: f64,
    significance: &'static str,
}

/// Write the report tables into `out_dir`; returns the files written.
pub fn emit_report(
    eval: &EvalReport,
    correlations: Option<&Correlations>,
    typology: Option<(&TypologyReport, &TradeoffReport)>,
    format: Format,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(&str, String)> = Vec::new();
    match format {
        Format::Tsv => {
            files.push(("table1.tsv", table1(eval)));
            if let Some(c) = correlations {
                files.push(("correlations.tsv", correlation_table(c)));
            }
            if let Some((t, tr)) = typology {
                files.push(("typology_counts.tsv", typology_counts_table(t)));
                files.push(("tradeoff.tsv", tradeoff_table(tr)));
            }
        }
        Format::Json => {
            let table1 = eval
                .ablation
                .iter()
                .chain(&eval.models)
                .map(|c| Table1Entry {
                    predictor: &c.name,
                    delta_mse: c.delta_mse,
                    p_value: c.p_value,
                    significance: stars(c.p_value),
                })
                .collect();
            let doc = JsonReport {
                table1,
                pairwise: &eval.pairwise,
                predictors: &eval.predictors,
                correlations,
                typology: typology.map(|t| t.0),
                tradeoff: typology.map(|t| t.1),
            };
            let value = round_json(serde_json::to_value(&doc).expect("report serializes"));
            files.push(("report.json", to_json(&value)));
        }
    }
    let mut written = Vec::new();
    for (name, text) in files {
        let path = out_dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.001), "**");
        assert_eq!(stars(0.009), "**");
        assert_eq!(stars(0.023), "*");
        assert_eq!(stars(0.058), "†");
        assert_eq!(stars(0.1), "");
        assert_eq!(stars(0.5), "");
    }

    fn comparison(name: &str, d: f64, p: f64) -> Comparison {
        Comparison {
            name: name.into(),
            predictors: vec![],
            delta_mse: d,
            se: 0.0,
            p_value: p,
        }
    }

    #[test]
    fn table1_rows() {
        let eval = EvalReport {
            seed: 1,
            k: 10,
            repeats: 50,
            n_perm: 10_000,
            alpha: 0.05,
            n_rows: 0,
            base: vec![],
            headline: "both".into(),
            delta_mse: 7.4,
            p_value: 0.0001,
            fold_coefficients: FoldCoefficients {
                model: "both".into(),
                names: vec![],
                folds: vec![],
            },
            predictors: vec![],
            models: vec![
                comparison("heads", 6.9, 0.0001),
                comparison("deps", 5.9, 0.0001),
                comparison("both", 7.4, 0.0001),
            ],
            pairwise: vec![],
            ablation: vec![comparison("lm_surprisal", 2.4, 0.5)],
        };
        let t = table1(&eval);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "predictor\tdelta_mse\tsignificance");
        assert_eq!(lines[1], "lm_surprisal\t2.4\t");
        assert_eq!(lines[4], "both\t7.4\t***");
    }

    #[test]
    fn json_floats_are_rounded() {
        let v = round_json(serde_json::json!({"a": [1.0 / 3.0], "b": 2}));
        assert_eq!(v.to_string(), r#"{"a":[0.333333],"b":2}"#);
    }
}
