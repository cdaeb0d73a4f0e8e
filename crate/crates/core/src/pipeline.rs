//! The six pipeline commands, each writing its outputs and a manifest.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::corpus::{
    align_reading_times, check_sent_ids, parse_conllu, read_region_file, read_rt_file,
    segment_corpus, validate_documents, validate_tree, Aggregation, InvalidTreePolicy,
    SegmentedSentence, SentenceKey, ValidatedDocument,
};
use crate::error::{Error, Result};
use crate::features::{
    build_feature_matrix, filter_content_words, filter_particles, metric_table, read_feature_tsv,
    write_feature_tsv, FeatureRow, FreqTable, LmSurprisal,
};
use crate::participants::{
    classify_population, estimate_population, group_by_participant, tradeoff_test,
    TradeoffReport, TypologyReport,
};
use crate::regression::{
    cross_validated_errors, fold_fits, permutation_test_errors, CoefficientTest, CvConfig,
    Dataset, ModelSpec,
};
use crate::report::{
    coefficient_table, correlations, dmse_table, emit_report, read_json, to_json, Comparison,
    EvalReport, FoldCoefficients, Format, Pairwise, PredictorSummary,
};
use crate::seed::{derive_seed, STREAM_PERMUTATION, STREAM_TRADEOFF};
use crate::tsv::{self, write_atomic};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Parse,
    Metrics,
    Features,
    Eval,
    Participants,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Parse => "parse",
            Command::Metrics => "metrics",
            Command::Features => "features",
            Command::Eval => "eval",
            Command::Participants => "participants",
            Command::Report => "report",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "parse" => Command::Parse,
            "metrics" => Command::Metrics,
            "features" => Command::Features,
            "eval" => Command::Eval,
            "participants" => Command::Participants,
            "report" => Command::Report,
            other => return Err(Error::Config(format!("unknown command '{other}'"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Output format of `report`.
    pub format: Format,
}

/// Files written by one command, manifest last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct FileDigest {
    role: String,
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    toolkit: &'static str,
    version: &'static str,
    command: Command,
    seed: u64,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    config: &'a PipelineConfig,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Accumulates written files so the manifest can list their digests.
struct Outputs {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: String) -> Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.written
            .push((name.to_owned(), hex::encode(Sha256::digest(contents.as_bytes()))));
        Ok(())
    }
}

/// Run one command. The config is validated first; every input the
/// command reads must exist.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    command: Command,
    opts: &RunOptions,
) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;

    let inputs = input_files(cfg, command, &opts.out_dir)?;
    let mut out = Outputs {
        dir: opts.out_dir.clone(),
        written: Vec::new(),
    };
    let mut extra = Vec::new();
    match command {
        Command::Parse => run_parse(cfg, &mut out)?,
        Command::Metrics => run_metrics(cfg, &mut out)?,
        Command::Features => run_features(cfg, &mut out)?,
        Command::Eval => run_eval(cfg, &mut out)?,
        Command::Participants => run_participants(cfg, &mut out)?,
        Command::Report => extra = run_report(opts, &mut out)?,
    }
    for path in &extra {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        out.written.push((name, sha256_file(path)?));
    }

    let manifest = Manifest {
        toolkit: "memcost",
        version: TOOLKIT_VERSION,
        command,
        seed,
        inputs: inputs
            .into_iter()
            .map(|(role, shown, path)| {
                Ok(FileDigest {
                    role,
                    path: shown,
                    sha256: sha256_file(&path)?,
                })
            })
            .collect::<Result<_>>()?,
        outputs: out
            .written
            .iter()
            .map(|(name, digest)| FileDigest {
                role: "output".to_owned(),
                path: name.clone(),
                sha256: digest.clone(),
            })
            .collect(),
        config: cfg,
    };
    let manifest_name = format!("manifest.{}.json", command.name());
    write_atomic(&opts.out_dir.join(&manifest_name), to_json(&manifest).as_bytes())?;

    let mut files: Vec<PathBuf> = out.written.iter().map(|(n, _)| opts.out_dir.join(n)).collect();
    files.push(opts.out_dir.join(manifest_name));
    Ok(RunOutput { files })
}

/// (role, path as configured, resolved path) of each input the command reads.
fn input_files(
    cfg: &PipelineConfig,
    command: Command,
    out_dir: &Path,
) -> Result<Vec<(String, String, PathBuf)>> {
    let p = &cfg.paths;
    let mut wanted: Vec<(&str, &Path)> = vec![("treebank", &p.treebank)];
    if command != Command::Parse {
        wanted.push(("regions", &p.regions));
    }
    if matches!(command, Command::Features | Command::Eval | Command::Participants) {
        wanted.push(("reading_times", &p.reading_times));
        wanted.push(("freq_table", &p.freq_table));
        wanted.push(("lm_surprisal", &p.lm_surprisal));
    }
    if command == Command::Report {
        let mut found = Vec::new();
        for name in ["eval.json", "features.tsv", "typology.json", "tradeoff.json"] {
            let path = out_dir.join(name);
            if path.is_file() {
                found.push((name.to_owned(), name.to_owned(), path));
            } else if name == "eval.json" {
                return Err(Error::MissingPath(path));
            }
        }
        return Ok(found);
    }
    wanted
        .into_iter()
        .map(|(role, path)| {
            Ok((
                role.to_owned(),
                path.display().to_string(),
                cfg.existing(path)?,
            ))
        })
        .collect()
}

fn load_documents(cfg: &PipelineConfig) -> Result<Vec<crate::corpus::Document>> {
    let path = cfg.existing(&cfg.paths.treebank)?;
    let text = tsv::read_file(&path)?;
    parse_conllu(&text, &path.display().to_string())
}

fn load_validated(cfg: &PipelineConfig) -> Result<Vec<ValidatedDocument>> {
    let docs = validate_documents(load_documents(cfg)?, cfg.corpus.invalid_trees)?;
    if cfg.corpus.strict_sent_ids {
        check_sent_ids(&docs)?;
    }
    Ok(docs)
}

/// Valid sentences with their regions, plus the keys of dropped sentences.
fn load_segmented(cfg: &PipelineConfig) -> Result<(Vec<SegmentedSentence>, BTreeSet<SentenceKey>)> {
    let docs = load_validated(cfg)?;
    let dropped = docs
        .iter()
        .flat_map(|d| {
            d.sentences
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_none())
                .map(|(i, _)| SentenceKey {
                    doc_id: d.id.clone(),
                    sent_index: i + 1,
                })
        })
        .collect();
    let index = read_region_file(&cfg.existing(&cfg.paths.regions)?)?;
    let sentences = segment_corpus(&docs, &index, cfg.corpus.region_fallback)?;
    Ok((sentences, dropped))
}

fn build_rows(cfg: &PipelineConfig, aggregation: Aggregation) -> Result<Vec<FeatureRow>> {
    let (sentences, dropped) = load_segmented(cfg)?;
    let regions: Vec<_> = sentences
        .iter()
        .flat_map(|s| s.regions.iter().cloned())
        .collect();
    let mut observations = read_rt_file(&cfg.existing(&cfg.paths.reading_times)?)?;
    let before = observations.len();
    observations.retain(|o| {
        !dropped.contains(&SentenceKey {
            doc_id: o.key.doc_id.clone(),
            sent_index: o.key.sent_index,
        })
    });
    if observations.len() < before {
        log::warn!(
            "ignored {} reading time(s) on dropped sentences",
            before - observations.len()
        );
    }
    let aligned = align_reading_times(&regions, &observations, aggregation, cfg.aggregation.trim())?;

    let sentences = if cfg.filters.exclude_particles {
        let n = sentences.len();
        let kept = filter_particles(sentences, &cfg.filters.particle_lemmas)?;
        log::info!("particle filter removed {} of {n} sentences", n - kept.len());
        kept
    } else {
        sentences
    };
    let freq = FreqTable::read(&cfg.existing(&cfg.paths.freq_table)?)?;
    let lm = LmSurprisal::read(&cfg.existing(&cfg.paths.lm_surprisal)?)?;
    let rows = build_feature_matrix(
        &sentences,
        &aligned,
        &cfg.arc_policy(),
        &freq,
        &lm,
        &cfg.smoothing,
    )?;
    if cfg.filters.content_words {
        filter_content_words(rows, &cfg.filters.content_pos)
    } else {
        Ok(rows)
    }
}

#[derive(Serialize)]
struct InvalidSentence {
    doc_id: String,
    sent_index: usize,
    sent_id: Option<String>,
    violations: String,
}

#[derive(Serialize)]
struct ValidationReport {
    n_documents: usize,
    n_sentences: usize,
    n_valid: usize,
    n_invalid: usize,
    policy: InvalidTreePolicy,
    invalid: Vec<InvalidSentence>,
}

fn run_parse(cfg: &PipelineConfig, out: &mut Outputs) -> Result<()> {
    let docs = load_documents(cfg)?;
    let mut invalid = Vec::new();
    let mut n_sentences = 0;
    for d in &docs {
        for (i, s) in d.sentences.iter().enumerate() {
            n_sentences += 1;
            let r = validate_tree(&s.tokens);
            if !r.is_valid() {
                invalid.push(InvalidSentence {
                    doc_id: d.id.clone(),
                    sent_index: i + 1,
                    sent_id: s.sent_id.clone(),
                    violations: r.describe(),
                });
            }
        }
    }
    let n_documents = docs.len();
    // applies the abort policy and strict sent_id checks
    let validated = validate_documents(docs, cfg.corpus.invalid_trees)?;
    if cfg.corpus.strict_sent_ids {
        check_sent_ids(&validated)?;
    }
    let report = ValidationReport {
        n_documents,
        n_sentences,
        n_valid: n_sentences - invalid.len(),
        n_invalid: invalid.len(),
        policy: cfg.corpus.invalid_trees,
        invalid,
    };
    out.write("validation.json", to_json(&report))
}

fn run_metrics(cfg: &PipelineConfig, out: &mut Outputs) -> Result<()> {
    let (sentences, _) = load_segmented(cfg)?;
    let mut text =
        String::from("doc_id\tsent_index\tregion_index\tn_heads\tn_deps\tn_additional\tn_completions\n");
    for (key, m) in metric_table(&sentences, &cfg.arc_policy()) {
        let _ = writeln!(
            text,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            key.doc_id,
            key.sent_index,
            key.region_index,
            m.predicted_heads,
            m.incomplete_deps,
            m.additional_deps,
            m.completions
        );
    }
    out.write("metrics.tsv", text)
}

fn run_features(cfg: &PipelineConfig, out: &mut Outputs) -> Result<()> {
    let rows = build_rows(cfg, cfg.aggregation.mode)?;
    out.write("features.tsv", write_feature_tsv(&rows))
}

/// Baseline predictors grouped for leave-one-out ablation: each surprisal
/// or length predictor goes with its spillover lags.
fn ablation_groups(base: &[String]) -> Vec<(String, Vec<String>)> {
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for name in base {
        let stem = name
            .strip_suffix("_lag1")
            .or_else(|| name.strip_suffix("_lag2"))
            .map(|s| match s {
                "unigram" => "unigram_surprisal",
                "lm" => "lm_surprisal",
                other => other,
            })
            .unwrap_or(name);
        match groups.iter_mut().find(|(g, _)| g == stem) {
            Some((_, members)) => members.push(name.clone()),
            None => groups.push((stem.to_owned(), vec![name.clone()])),
        }
    }
    groups
}

fn paired_stats(worse: &[f64], better: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = worse.iter().zip(better).map(|(w, b)| w - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

fn summarize(test: &CoefficientTest) -> PredictorSummary {
    let c = &test.coefficients;
    let n = c.len() as f64;
    let var = c.iter().map(|v| (v - test.mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    PredictorSummary {
        predictor: test.predictor.clone(),
        mean: test.mean,
        sd: var.sqrt(),
        min: c.iter().copied().fold(f64::INFINITY, f64::min),
        max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        p_above: test.p_above,
        p_below: test.p_below,
        side: test.side,
    }
}

/// Cross-validated model comparisons, baseline ablation and fold-wise
/// coefficient tests on the given rows.
pub fn evaluate(rows: &[FeatureRow], cfg: &PipelineConfig) -> Result<EvalReport> {
    let cv: CvConfig = cfg.cv()?;
    let base = cfg.base_spec();
    let mut models: Vec<(String, ModelSpec)> = vec![
        ("heads".into(), base.extended(&["n_heads"])),
        ("deps".into(), base.extended(&["n_deps"])),
        ("both".into(), base.extended(&["n_heads", "n_additional"])),
    ];
    if !cfg.eval.add.is_empty() {
        models.push(("custom".into(), base.extended(&cfg.eval.add)));
    }
    let groups = ablation_groups(&cfg.eval.base);
    let ablations: Vec<(String, ModelSpec)> = groups
        .iter()
        .filter(|_| cfg.eval.base.len() > 1)
        .map(|(g, members)| (g.clone(), base.without(members)))
        .collect();
    for (_, spec) in models.iter().chain(&ablations) {
        spec.validate()?;
    }

    let mut names: Vec<&str> = Vec::new();
    for (_, spec) in &models {
        for p in &spec.predictors {
            if !names.contains(&p.as_str()) {
                names.push(p);
            }
        }
    }
    let data = Dataset::<f64>::from_feature_rows(rows, &names)?;
    let width = models.iter().map(|(_, s)| s.width()).max().unwrap();
    if data.len() < 10 * width || data.len() < cv.k {
        return Err(Error::InsufficientData(format!(
            "cross-validation with {width} columns needs at least {} rows, got {}",
            (10 * width).max(cv.k),
            data.len()
        )));
    }

    let mut specs: Vec<&ModelSpec> = vec![&base];
    specs.extend(models.iter().map(|(_, s)| s));
    specs.extend(ablations.iter().map(|(_, s)| s));
    let errors = cross_validated_errors(&data, &specs, &cv)?;
    let base_err = &errors[0];
    let model_err = &errors[1..1 + models.len()];
    let ablation_err = &errors[1 + models.len()..];

    let mut stream = 0u64;
    let mut test = |worse: &[f64], better: &[f64]| {
        stream += 1;
        let s = derive_seed(cv.seed, &[STREAM_PERMUTATION, stream]);
        let (d, se) = paired_stats(worse, better);
        (d, se, permutation_test_errors(worse, better, cv.n_perm, s))
    };

    let mut comparisons = Vec::new();
    for ((name, spec), err) in models.iter().zip(model_err) {
        let (delta_mse, se, p_value) = test(base_err, err);
        comparisons.push(Comparison {
            name: name.clone(),
            predictors: spec.predictors[base.predictors.len()..].to_vec(),
            delta_mse,
            se,
            p_value,
        });
    }
    let err_of = |name: &str| &model_err[models.iter().position(|(n, _)| n == name).unwrap()];
    let mut pairwise = Vec::new();
    for (first, second) in [("both", "heads"), ("both", "deps"), ("heads", "deps")] {
        let (delta_mse, se, p_value) = test(err_of(second), err_of(first));
        pairwise.push(Pairwise {
            first: first.into(),
            second: second.into(),
            delta_mse,
            se,
            p_value,
        });
    }
    let mut ablation = Vec::new();
    for (((name, _), err), (_, members)) in ablations.iter().zip(ablation_err).zip(&groups) {
        let (delta_mse, se, p_value) = test(err, base_err);
        ablation.push(Comparison {
            name: name.clone(),
            predictors: members.clone(),
            delta_mse,
            se,
            p_value,
        });
    }

    let headline = if cfg.eval.add.is_empty() { "both" } else { "custom" };
    let headline_spec = &models.iter().find(|(n, _)| n == headline).unwrap().1;
    let fits = fold_fits(&data, headline_spec, cv.k, cv.seed)?;
    let mut predictors = Vec::new();
    for (j, name) in fits.names.iter().enumerate() {
        let coefs = fits.coefficients.iter().map(|c| c[j]).collect();
        let s = derive_seed(cv.seed, &[STREAM_PERMUTATION, 1000 + j as u64]);
        predictors.push(summarize(&CoefficientTest::from_coefficients(
            name,
            coefs,
            cfg.stats.alpha,
            cv.n_perm,
            s,
        )));
    }
    if let (Some(h), Some(a)) = (fits.of("n_heads"), fits.of("n_additional")) {
        let diff = h.iter().zip(&a).map(|(h, a)| h - a).collect();
        let s = derive_seed(cv.seed, &[STREAM_PERMUTATION, 999]);
        predictors.push(summarize(&CoefficientTest::from_coefficients(
            "n_heads-n_additional",
            diff,
            cfg.stats.alpha,
            cv.n_perm,
            s,
        )));
    }

    let top = comparisons.iter().find(|c| c.name == headline).unwrap();
    Ok(EvalReport {
        seed: cv.seed,
        k: cv.k,
        repeats: cv.repeats,
        n_perm: cv.n_perm,
        alpha: cfg.stats.alpha,
        n_rows: data.len(),
        base: cfg.eval.base.clone(),
        headline: headline.to_owned(),
        delta_mse: top.delta_mse,
        p_value: top.p_value,
        fold_coefficients: FoldCoefficients {
            model: headline.to_owned(),
            names: fits.names,
            folds: fits.coefficients,
        },
        predictors,
        models: comparisons,
        pairwise,
        ablation,
    })
}

fn run_eval(cfg: &PipelineConfig, out: &mut Outputs) -> Result<()> {
    let rows = build_rows(cfg, cfg.aggregation.mode)?;
    let report = evaluate(&rows, cfg)?;
    out.write("eval.json", to_json(&report))?;
    out.write("dmse.tsv", dmse_table(&report))?;
    out.write("coefficients.tsv", coefficient_table(&report))
}

/// Typology and tradeoff analysis on raw per-participant rows.
pub fn analyze_participants(
    rows: Vec<FeatureRow>,
    cfg: &PipelineConfig,
) -> Result<(TypologyReport, Vec<crate::participants::AntiLocalityEstimate>, TradeoffReport)> {
    let pcfg = cfg.participants()?;
    let by_pid = group_by_participant(rows)?;
    let typology = classify_population::<f64>(&by_pid, &pcfg)?;
    let effects = estimate_population::<f64>(&by_pid, pcfg.min_rows)?;
    let tradeoff = tradeoff_test(
        &typology.labels,
        &effects,
        pcfg.n_perm,
        derive_seed(pcfg.seed, &[STREAM_TRADEOFF]),
    )?;
    Ok((typology, effects, tradeoff))
}

fn run_participants(cfg: &PipelineConfig, out: &mut Outputs) -> Result<()> {
    if cfg.aggregation.mode != Aggregation::Raw {
        log::info!("participant analysis uses raw (per-participant) reading times");
    }
    let rows = build_rows(cfg, Aggregation::Raw)?;
    let (typology, effects, tradeoff) = analyze_participants(rows, cfg)?;

    let mut t = String::from("participant_id\tmetric\tlabel\tp_value\tn_rows\n");
    for l in &typology.labels {
        let _ = writeln!(
            t,
            "{}\t{}\t{}\t{}\t{}",
            l.participant_id,
            l.metric.name(),
            l.label,
            crate::report::fmt(l.p_value),
            l.n_rows
        );
    }
    let mut e = String::from("participant_id\tcompletions_coefficient\tn_rows\n");
    for x in &effects {
        let _ = writeln!(
            e,
            "{}\t{}\t{}",
            x.participant_id,
            crate::report::fmt(x.coefficient),
            x.n_rows
        );
    }
    let mut d = String::from("metric\tparticipant_id\tlabel\tgroup\tcoefficient\n");
    for m in &tradeoff.metrics {
        for p in &m.distribution {
            let group = match p.label {
                1 => "slowdown",
                -1 => "speedup",
                _ => "neither",
            };
            let _ = writeln!(
                d,
                "{}\t{}\t{}\t{group}\t{}",
                m.metric.name(),
                p.participant_id,
                p.label,
                crate::report::fmt(p.coefficient)
            );
        }
    }
    out.write("typology.tsv", t)?;
    out.write("typology.json", to_json(&typology))?;
    out.write("effects.tsv", e)?;
    out.write("tradeoff.json", to_json(&tradeoff))?;
    out.write("effect_distribution.tsv", d)
}

/// Rebuild the report tables from persisted artifacts only.
fn run_report(opts: &RunOptions, _out: &mut Outputs) -> Result<Vec<PathBuf>> {
    let dir = &opts.out_dir;
    let eval = EvalReport::read(&dir.join("eval.json"))?;
    let features = dir.join("features.tsv");
    let corr = if features.is_file() {
        Some(correlations(&read_feature_tsv(&features)?))
    } else {
        log::warn!("no features.tsv in {}; skipping correlations", dir.display());
        None
    };
    let typology_path = dir.join("typology.json");
    let tradeoff_path = dir.join("tradeoff.json");
    let typology = if typology_path.is_file() && tradeoff_path.is_file() {
        Some((
            read_json::<TypologyReport>(&typology_path)?,
            read_json::<TradeoffReport>(&tradeoff_path)?,
        ))
    } else {
        None
    };
    emit_report(
        &eval,
        corr.as_ref(),
        typology.as_ref().map(|(a, b)| (a, b)),
        opts.format,
        dir,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lags_group_with_their_predictor() {
        let base: Vec<String> = crate::features::CONTROL_PREDICTORS
            .iter()
            .map(|s| s.to_string())
            .collect();
        let groups = ablation_groups(&base);
        let names: Vec<&str> = groups.iter().map(|(g, _)| g.as_str()).collect();
        assert_eq!(
            names,
            [
                "sent_position",
                "region_position",
                "n_chars",
                "unigram_surprisal",
                "lm_surprisal"
            ]
        );
        assert_eq!(groups[4].1, ["lm_surprisal", "lm_lag1", "lm_lag2"]);
    }

    #[test]
    fn command_names_round_trip() {
        for c in [
            Command::Parse,
            Command::Metrics,
            Command::Features,
            Command::Eval,
            Command::Participants,
            Command::Report,
        ] {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
    }
}
