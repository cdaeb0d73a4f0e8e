use memcost_core::corpus::{align_reading_times, Aggregation, RtTrim};
use memcost_core::features::{build_feature_matrix, FeatureRow, Smoothing};
use memcost_core::metrics::ArcPolicy;
use memcost_core::participants::{
    classify_population, group_by_participant, tradeoff_test, AntiLocalityEstimate, Contrast,
    Metric, ParticipantConfig, TypologyLabel,
};
use memcost_core::regression::label_permutation_test;
use memcost_core::seed::rng_for;
use memcost_core::synth::{SynthCorpus, SynthSpec};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn single_reader_rows(seed: u64) -> Vec<FeatureRow> {
    let c = SynthCorpus::generate(&SynthSpec {
        n_docs: 1,
        sentences_per_doc: 320,
        n_participants: 1,
        participant_effects: vec![],
        ..SynthSpec::fixture(seed)
    })
    .unwrap();
    let aligned = align_reading_times(&c.regions(), &c.observations, Aggregation::Raw, RtTrim::default()).unwrap();
    build_feature_matrix(
        &c.sentences,
        &aligned,
        &ArcPolicy::head_final(),
        &c.freq_table().unwrap(),
        &c.lm_table(),
        &Smoothing::default(),
    )
    .unwrap()
}

#[test]
fn eligibility_threshold_is_inclusive() {
    let rows = single_reader_rows(5);
    assert!(rows.len() >= 1000, "{} rows", rows.len());
    let mut all = Vec::new();
    for (pid, n) in [("short", 999), ("exact", 1000)] {
        all.extend(rows[..n].iter().cloned().map(|mut r| {
            r.participant_id = Some(pid.to_owned());
            r
        }));
    }
    let by_pid = group_by_participant(all).unwrap();
    let cfg = ParticipantConfig {
        n_perm: 99,
        ..ParticipantConfig::new(1)
    };
    let report = classify_population::<f64>(&by_pid, &cfg).unwrap();
    assert_eq!(report.n_participants, 2);
    assert_eq!(report.n_eligible, 1);
    assert_eq!(report.skipped, vec![("short".to_owned(), 999)]);
    assert!(report.labels.iter().all(|l| l.participant_id == "exact" && l.n_rows == 1000));
    assert_eq!(report.labels.len(), Metric::ALL.len());
}

fn population(labels: &[i8], coefficients: &[f64]) -> (Vec<TypologyLabel>, Vec<AntiLocalityEstimate>) {
    let mut ls = Vec::new();
    let mut es = Vec::new();
    for (i, (&label, &c)) in labels.iter().zip(coefficients).enumerate() {
        let pid = format!("p{i}");
        for metric in Metric::ALL {
            ls.push(TypologyLabel {
                participant_id: pid.clone(),
                metric,
                label,
                p_value: 0.5,
                n_rows: 1000,
                mean_coefficient: 0.0,
            });
        }
        es.push(AntiLocalityEstimate {
            participant_id: pid,
            coefficient: c,
            n_rows: 1000,
        });
    }
    (ls, es)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tradeoff_is_invariant_to_affine_rt_units(
        labels in proptest::collection::vec(-1i8..=1, 6..40),
        seed in any::<u64>(),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let mut rng = rng_for(seed, &[]);
        let coefficients: Vec<f64> = labels.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        // Converting RT units rescales every coefficient; a uniform shift
        // moves all of them equally.
        let rescaled: Vec<f64> = coefficients.iter().map(|c| c * scale + shift).collect();
        let (l, e) = population(&labels, &coefficients);
        let (l2, e2) = population(&labels, &rescaled);
        let a = tradeoff_test(&l, &e, 499, seed).unwrap();
        let b = tradeoff_test(&l2, &e2, 499, seed).unwrap();
        for (x, y) in a.metrics.iter().zip(&b.metrics) {
            for (cx, cy) in [(&x.primary, &y.primary), (&x.secondary, &y.secondary)] {
                match (cx, cy) {
                    (Contrast::Tested { test: tx, .. }, Contrast::Tested { test: ty, .. }) => {
                        prop_assert_eq!(tx.p_two_sided, ty.p_two_sided);
                        prop_assert!((ty.difference - scale * tx.difference).abs() <= 1e-9 * (1.0 + ty.difference.abs()));
                    }
                    (Contrast::Untestable { .. }, Contrast::Untestable { .. }) => {}
                    _ => prop_assert!(false, "testability changed"),
                }
            }
        }
    }
}

#[test]
fn shuffled_labels_reject_at_nominal_rate() {
    let runs = 400;
    let mut rejections = 0;
    for run in 0..runs {
        let mut rng = rng_for(77, &[run]);
        let values: Vec<f64> = (0..60).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let test = label_permutation_test(&values[..20], &values[20..], 999, run);
        if test.p_two_sided < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / runs as f64;
    assert!((0.02..=0.085).contains(&rate), "rejection rate {rate}");
}
