//! Cross-module integration: synthetic signals through both diagnosis
//! stages, exercised over the public API exactly as an application would.

use gearvib::diagnose::{
    evaluate, stage1_detect_batch, stage1_train, stage2_diagnose_batch, stage2_train,
    Detection, ExtractorSource, Stage1Config, Stage1Scope,
};
use gearvib::iforest::ForestConfig;
use gearvib::nnet::{CnnArchitecture, CnnModel, TrainConfig};
use gearvib::seeding::derive_seed;
use gearvib::siggen::{generate_signal, Health, RigProfile};
use gearvib::spectro::{
    assemble_dataset, assemble_stage1_dataset, sample_segments, stft, ComponentSources,
    DatasetSpec, LabeledDataset, MixPolicy, Stage1Dataset, Stage1Spec, StftConfig,
};

/// The default rig resampled to 4 kHz: every tone and sideband sits below
/// the 2 kHz Nyquist, so the same spectra exist at a fraction of the cost.
fn rig_4khz() -> RigProfile {
    let mut rig = RigProfile::default();
    rig.sample_rate_hz = 4000.0;
    rig.validate().expect("4 kHz rig profile must be valid");
    rig
}

/// Healthy and damaged source spectrograms for every component.
fn sources(rig: &RigProfile, duration_s: f64, seed: u64) -> Vec<ComponentSources> {
    let config = StftConfig::default();
    rig.components
        .iter()
        .map(|component| {
            let healthy = generate_signal(
                component,
                rig,
                Health::Healthy,
                duration_s,
                derive_seed(seed, &format!("{}/healthy", component.name)),
            )
            .unwrap();
            let damaged = generate_signal(
                component,
                rig,
                Health::Damaged,
                duration_s,
                derive_seed(seed, &format!("{}/damaged", component.name)),
            )
            .unwrap();
            ComponentSources {
                name: component.name.clone(),
                healthy: stft(&healthy, &config).unwrap(),
                damaged: stft(&damaged, &config).unwrap(),
            }
        })
        .collect()
}

fn stage1_data(sources: &[ComponentSources], seed: u64) -> Stage1Dataset {
    let spec = Stage1Spec {
        train_healthy: 200,
        test_healthy: 25,
        test_damaged: 25,
        segment_duration_s: 1.0,
        seed,
    };
    assemble_stage1_dataset(sources, &spec).unwrap().0
}

fn stage2_data(sources: &[ComponentSources], total: usize, seed: u64) -> LabeledDataset {
    let spec = DatasetSpec {
        total,
        ratios: (8, 1, 1),
        segment_duration_s: 1.0,
        seed,
        mixing: MixPolicy::PerChannel,
    };
    assemble_dataset(sources, &spec).unwrap().0
}

fn separation(healthy: &[Detection], damaged: &[Detection]) -> (f64, f64) {
    let healthy_max = healthy
        .iter()
        .map(|d| d.scores[0].s)
        .fold(f64::NEG_INFINITY, f64::max);
    let damaged_min = damaged.iter().map(|d| d.scores[0].s).fold(f64::INFINITY, f64::min);
    (healthy_max, damaged_min)
}

#[test]
fn full_pipeline_reaches_perfect_accuracy_at_desk_scale() {
    let seed = 2026;
    let rig = rig_4khz();
    let sources = sources(&rig, 30.0, seed);

    // Stage 1: healthy-only training must flag nothing it was trained on,
    // pass held-out healthy segments, and flag every damaged segment.
    let s1 = stage1_data(&sources, seed);
    let stage1 = stage1_train(&s1.train, &Stage1Config::seeded(seed)).unwrap();
    for detection in stage1_detect_batch(&stage1, &s1.train).unwrap() {
        assert!(detection.signed > 0.0, "training segment flagged: {}", detection.signed);
    }
    let healthy = stage1_detect_batch(&stage1, &s1.test_healthy).unwrap();
    let damaged = stage1_detect_batch(&stage1, &s1.test_damaged).unwrap();
    assert!(healthy.iter().all(|d| !d.is_anomalous), "healthy test segment flagged");
    assert!(damaged.iter().all(|d| d.is_anomalous), "damaged test segment passed");

    // Stage 2: supervised training converges to perfect validation and
    // test accuracy on the separable synthetic corpus.
    let dataset = stage2_data(&sources, 640, seed);
    let first = &dataset.train[0];
    let arch = CnnArchitecture::classifier(first.frames, first.bins, first.channels);
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    let (model, history) = stage2_train(&dataset, &cfg, &arch).unwrap();
    assert_eq!(history.final_validation_accuracy(), Some(1.0));

    let diagnoses = stage2_diagnose_batch(&model, &dataset.test).unwrap();
    let truth: Vec<[u8; 3]> = dataset.test.iter().map(|s| s.labels.unwrap()).collect();
    let metrics = evaluate(&diagnoses, &truth).unwrap();
    assert_eq!(metrics.subset_accuracy, 1.0);
    for label in &metrics.per_label {
        assert_eq!((label.precision, label.recall, label.accuracy), (1.0, 1.0, 1.0));
    }
}

#[test]
fn one_master_seed_reproduces_identical_metrics() {
    let seed = 7;
    let rig = rig_4khz();
    let sources = sources(&rig, 12.0, seed);
    let run = || {
        let dataset = stage2_data(&sources, 160, seed);
        let first = &dataset.train[0];
        let arch = CnnArchitecture::classifier(first.frames, first.bins, first.channels);
        let cfg = TrainConfig { epochs: 4, seed, ..TrainConfig::default() };
        let (model, history) = stage2_train(&dataset, &cfg, &arch).unwrap();
        let diagnoses = stage2_diagnose_batch(&model, &dataset.test).unwrap();
        let truth: Vec<[u8; 3]> = dataset.test.iter().map(|s| s.labels.unwrap()).collect();
        let metrics = evaluate(&diagnoses, &truth).unwrap();
        (history, diagnoses, metrics)
    };
    let (history_a, diagnoses_a, metrics_a) = run();
    let (history_b, diagnoses_b, metrics_b) = run();
    assert_eq!(history_a, history_b);
    assert_eq!(diagnoses_a, diagnoses_b);
    assert_eq!(metrics_a, metrics_b);
}

#[test]
fn four_filter_extractor_preserves_the_health_separation() {
    let seed = 11;
    let rig = rig_4khz();
    let sources = sources(&rig, 30.0, seed);
    let s1 = stage1_data(&sources, seed);

    let wide = stage1_train(&s1.train, &Stage1Config::seeded(seed)).unwrap();
    let narrow_config = Stage1Config {
        extractor: ExtractorSource::SeededRandom { conv_filters: 4 },
        ..Stage1Config::seeded(seed)
    };
    let narrow = stage1_train(&s1.train, &narrow_config).unwrap();
    assert_eq!(wide.extractor.architecture.conv_filters, 16);
    assert_eq!(narrow.extractor.architecture.conv_filters, 4);

    for model in [&wide, &narrow] {
        let healthy = stage1_detect_batch(model, &s1.test_healthy).unwrap();
        let damaged = stage1_detect_batch(model, &s1.test_damaged).unwrap();
        let (healthy_max, damaged_min) = separation(&healthy, &damaged);
        assert!(
            damaged_min > healthy_max,
            "{} filters: weakest damaged score {damaged_min} not above strongest \
             healthy score {healthy_max}",
            model.extractor.architecture.conv_filters
        );
    }
}

#[test]
fn reused_stage2_front_end_preserves_the_health_separation() {
    let seed = 13;
    let rig = rig_4khz();
    let sources = sources(&rig, 30.0, seed);

    let dataset = stage2_data(&sources, 320, seed);
    let first = &dataset.train[0];
    let arch = CnnArchitecture::classifier(first.frames, first.bins, first.channels);
    let cfg = TrainConfig { epochs: 8, seed, ..TrainConfig::default() };
    let (classifier, _) = stage2_train(&dataset, &cfg, &arch).unwrap();

    let s1 = stage1_data(&sources, seed);
    let config = Stage1Config {
        extractor: ExtractorSource::Stage2(&classifier),
        scope: Stage1Scope::Joint,
        forest: ForestConfig::default(),
        seed,
    };
    let model = stage1_train(&s1.train, &config).unwrap();
    let healthy = stage1_detect_batch(&model, &s1.test_healthy).unwrap();
    let damaged = stage1_detect_batch(&model, &s1.test_damaged).unwrap();
    let (healthy_max, damaged_min) = separation(&healthy, &damaged);
    assert!(
        damaged_min > healthy_max,
        "reused front end: weakest damaged score {damaged_min} not above strongest \
         healthy score {healthy_max}"
    );
    assert!(healthy.iter().all(|d| !d.is_anomalous));
    assert!(damaged.iter().all(|d| d.is_anomalous));
}

#[test]
fn default_preprocessing_yields_the_documented_network_shapes() {
    let rig = RigProfile::default();
    assert_eq!(rig.sample_rate_hz, 40_000.0);
    let component = &rig.components[0];
    let ts = generate_signal(component, &rig, Health::Healthy, 3.0, 42).unwrap();
    let spectrogram = stft(&ts, &StftConfig::default()).unwrap();
    assert_eq!(spectrogram.bins(), 251);

    let segments = sample_segments(&spectrogram, 1.0, 4, 99).unwrap();
    let segment = &segments[0];
    assert_eq!((segment.frames, segment.bins), (16, 251));

    let classifier = CnnArchitecture::classifier(segment.frames, segment.bins, 3);
    assert_eq!(classifier.feature_len(), 3472);
    let extractor = CnnArchitecture::extractor(segment.frames, segment.bins, 3);
    assert_eq!(extractor.feature_len(), 13888);

    let model = CnnModel::new(classifier, 1).unwrap();
    assert_eq!(model.dense.weights.len(), 3472 * 4);
    assert_eq!(model.output.weights.len(), 4 * 3);
}
