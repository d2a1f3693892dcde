//! The shuffle protocol: every shuffle draws a stratified split, trains each
//! enabled regime on the training part and scores it on the test part.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Regime};
use super::ranking::{rank_agreement, Ranking};
use super::split::{stratified_split, Split};
use crate::metrics::{fid, inception_score, mmd2_unbiased, Bandwidth, FeatureSet, ProbMatrix};
use crate::nn::classifier::train_classifier;
use crate::nn::{
    predict_synthetic_neuroscore, shuffle_eeg_within_category, train_baseline, train_two_stage, ModelParams,
    TrainConfig, TrainingSet,
};
use crate::numkit::{one_way_anova, AnovaResult};
use crate::rng::derive_seed;
use crate::signal::{extract_window, single_trial_amplitude_with, AmplitudeMode};
use crate::synthgen::{gen_dataset, gen_reference_images, Dataset, StimulusImage};
use crate::{Error, Result};

const SPLIT_STREAM: u64 = 0x5B;
const RANDOM_EEG_STREAM: u64 = 0xE6;
const INIT_STREAM: u64 = 0x1D;
const CLASSIFIER_STREAM: u64 = 0xC1;
const REFERENCE_STREAM: u64 = 0x4E;

/// One trained model scored on one test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub shuffle: usize,
    pub regime: Regime,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub shuffle: usize,
    pub regime: Regime,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: Regime,
    /// Errors of the successful shuffles, in shuffle order.
    pub errors: Vec<f64>,
    #[serde(with = "super::serde_f64")]
    pub mean_error: f64,
    /// Sample standard deviation (`n − 1`); zero for a single run.
    #[serde(with = "super::serde_f64")]
    pub std_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAnova {
    pub a: Regime,
    pub b: Regime,
    pub result: AnovaResult,
}

/// IS/MMD/FID per category, each reported so that lower is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionalScores {
    pub inv_inception_score: Vec<f64>,
    pub mmd2: Vec<f64>,
    pub fid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRanking {
    pub metric: String,
    pub outcome: Ranking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    /// Regime whose model supplies the synthetic Neuroscore.
    pub regime: Regime,
    pub shuffle: usize,
    pub synthetic_neuroscore: Vec<f64>,
    pub inv_synthetic_neuroscore: Vec<f64>,
    pub conventional: Option<ConventionalScores>,
    pub rankings: Vec<MetricRanking>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub categories: Vec<String>,
    pub category_quality_means: Vec<f64>,
    pub master_seed: u64,
    pub n_shuffles: usize,
    pub test_fraction: f64,
    pub amplitude_mode: AmplitudeMode,
    pub split_note: String,
    pub metric_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub meta: ReportMeta,
    pub config: ExperimentConfig,
    pub regimes: Vec<RegimeSummary>,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    /// One-way ANOVA over the error samples of all enabled regimes.
    pub anova_all: Option<AnovaResult>,
    pub anova_pairs: Vec<PairAnova>,
    /// Mean measured amplitude per category over the whole dataset.
    pub ground_truth_neuroscore: Vec<f64>,
    /// Mean noiseless generator amplitude per category.
    pub generator_neuroscore: Vec<f64>,
    pub metric_table: Option<MetricTable>,
}

impl MetricReport {
    pub fn regime(&self, r: Regime) -> Option<&RegimeSummary> {
        self.regimes.iter().find(|s| s.regime == r)
    }

    pub fn pair(&self, a: Regime, b: Regime) -> Option<&AnovaResult> {
        self.anova_pairs
            .iter()
            .find(|p| (p.a, p.b) == (a, b) || (p.a, p.b) == (b, a))
            .map(|p| &p.result)
    }
}

/// Per-shuffle split of the dataset.
pub fn shuffle_split(ds: &Dataset, cfg: &ExperimentConfig, shuffle: usize) -> Result<Split> {
    stratified_split(
        &ds.category_indices(),
        cfg.test_fraction,
        derive_seed(&[cfg.gen.master_seed, SPLIT_STREAM, shuffle as u64]),
    )
}

/// Training settings for a shuffle; all regimes share the init seed.
pub fn shuffle_train_config(cfg: &ExperimentConfig, shuffle: usize) -> TrainConfig {
    TrainConfig {
        weight_init_seed: derive_seed(&[cfg.train.weight_init_seed, INIT_STREAM, shuffle as u64]),
        ..cfg.train.clone()
    }
}

/// Seed of the window permutation used by the random-EEG regime.
pub fn random_eeg_seed(master_seed: u64, shuffle: usize) -> u64 {
    derive_seed(&[master_seed, RANDOM_EEG_STREAM, shuffle as u64])
}

/// Trains one regime. Only loss₁ sees the EEG pairing.
pub fn train_regime(
    regime: Regime,
    train: &TrainingSet,
    tcfg: &TrainConfig,
    master_seed: u64,
    shuffle: usize,
) -> Result<ModelParams> {
    match regime {
        Regime::WithEeg => Ok(train_two_stage(train, tcfg)?.params),
        Regime::RandomEeg => {
            let shuffled = shuffle_eeg_within_category(train, random_eeg_seed(master_seed, shuffle));
            Ok(train_two_stage(&shuffled, tcfg)?.params)
        }
        Regime::NoEeg => Ok(train_baseline(train, tcfg)?.0),
    }
}

pub fn test_groups(set: &TrainingSet, n_categories: usize) -> Vec<Vec<&StimulusImage>> {
    (0..n_categories)
        .map(|c| set.examples.iter().filter(|e| e.category == c).map(|e| &e.image).collect())
        .collect()
}

/// Test-split Neuroscore per category from measured amplitudes.
pub fn test_truth(set: &TrainingSet, n_categories: usize) -> Result<Vec<f64>> {
    (0..n_categories)
        .map(|c| {
            let a: Vec<f64> = set.examples.iter().filter(|e| e.category == c).map(|e| e.amplitude).collect();
            crate::signal::mean_amplitude(&a)
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn category_means(ds: &Dataset, f: impl Fn(usize) -> Result<f64>) -> Result<Vec<f64>> {
    ds.category_indices()
        .iter()
        .map(|idx| {
            let v = idx.iter().map(|&i| f(i)).collect::<Result<Vec<_>>>()?;
            crate::signal::mean_amplitude(&v)
        })
        .collect()
}

/// Trains the feature classifier on the training split plus reference
/// images and scores every category's test images against held-out
/// reference images.
fn conventional_scores(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    split: &Split,
    shuffle: usize,
) -> Result<ConventionalScores> {
    let k = ds.n_categories();
    let reference = gen_reference_images(&ds.config, ds.config.n_per_category);
    let ref_split = stratified_split(
        &[(0..reference.len()).collect()],
        cfg.test_fraction,
        derive_seed(&[cfg.gen.master_seed, REFERENCE_STREAM, shuffle as u64]),
    )?;
    let mut images: Vec<&StimulusImage> = split.train.iter().map(|&i| &ds.samples[i].image).collect();
    let mut labels: Vec<usize> = split.train.iter().map(|&i| ds.samples[i].category).collect();
    images.extend(ref_split.train.iter().map(|&i| &reference[i]));
    labels.extend(std::iter::repeat_n(k, ref_split.train.len()));
    let ccfg = TrainConfig {
        weight_init_seed: derive_seed(&[cfg.train.weight_init_seed, CLASSIFIER_STREAM, shuffle as u64]),
        ..cfg.train.clone()
    };
    let clf = train_classifier(&images, &labels, k + 1, &ccfg)?;
    let ref_test: Vec<&StimulusImage> = ref_split.test.iter().map(|&i| &reference[i]).collect();
    let ref_features = FeatureSet::new(clf.features(&ref_test)?)?;
    let mut out = ConventionalScores {
        inv_inception_score: Vec::with_capacity(k),
        mmd2: Vec::with_capacity(k),
        fid: Vec::with_capacity(k),
    };
    for c in 0..k {
        let imgs: Vec<&StimulusImage> = split
            .test
            .iter()
            .map(|&i| &ds.samples[i].image)
            .filter(|im| im.category == c)
            .collect();
        let probs = ProbMatrix::new(clf.probabilities(&imgs)?)?;
        out.inv_inception_score.push(1.0 / inception_score(&probs));
        let feats = FeatureSet::new(clf.features(&imgs)?)?;
        out.mmd2.push(mmd2_unbiased(&feats, &ref_features, Bandwidth::Median)?);
        out.fid.push(fid(&feats, &ref_features)?);
    }
    Ok(out)
}

fn rankings(quality: &[f64], columns: &[(&str, &[f64])]) -> Result<Vec<MetricRanking>> {
    columns
        .iter()
        .map(|(name, scores)| {
            Ok(MetricRanking {
                metric: (*name).to_owned(),
                outcome: rank_agreement(scores, quality)?,
            })
        })
        .collect()
}

/// Runs the full protocol on an already generated dataset.
pub fn run_experiment_on(ds: &Dataset, cfg: &ExperimentConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let k = ds.n_categories();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut table_model: Option<(Regime, Vec<f64>)> = None;
    let table_regime = if cfg.regimes.contains(&Regime::WithEeg) {
        Regime::WithEeg
    } else {
        cfg.regimes[0]
    };
    let mut split0 = None;
    for shuffle in 0..cfg.n_shuffles {
        let split = shuffle_split(ds, cfg, shuffle)?;
        let train = TrainingSet::from_dataset(ds, &split.train, cfg.amplitude_mode)?;
        let test = TrainingSet::from_dataset(ds, &split.test, cfg.amplitude_mode)?;
        let groups = test_groups(&test, k);
        let truth = test_truth(&test, k)?;
        let tcfg = shuffle_train_config(cfg, shuffle);
        for &regime in &cfg.regimes {
            match train_regime(regime, &train, &tcfg, cfg.gen.master_seed, shuffle) {
                Ok(params) => {
                    let predicted = predict_synthetic_neuroscore(&params, &groups)?;
                    let error = crate::signal::neuroscore_error(&predicted, &truth)?;
                    if shuffle == 0 && regime == table_regime {
                        table_model = Some((regime, predicted.clone()));
                    }
                    runs.push(RunRecord {
                        shuffle,
                        regime,
                        predicted,
                        truth: truth.clone(),
                        error,
                    });
                }
                Err(e @ Error::Diverged { .. }) => failures.push(RunFailure {
                    shuffle,
                    regime,
                    message: e.to_string(),
                }),
                Err(e) => return Err(e),
            }
        }
        if shuffle == 0 {
            split0 = Some(split);
        }
    }

    let regimes: Vec<RegimeSummary> = cfg
        .regimes
        .iter()
        .map(|&regime| {
            let errors: Vec<f64> = runs.iter().filter(|r| r.regime == regime).map(|r| r.error).collect();
            let (mean_error, std_error) = mean_std(&errors);
            RegimeSummary {
                regime,
                errors,
                mean_error,
                std_error,
                failures: failures.iter().filter(|f| f.regime == regime).count(),
            }
        })
        .collect();
    let all_groups: Vec<Vec<f64>> = regimes.iter().map(|r| r.errors.clone()).collect();
    let anova_all = if all_groups.len() >= 2 { one_way_anova(&all_groups).ok() } else { None };
    let mut anova_pairs = Vec::new();
    for i in 0..regimes.len() {
        for j in i + 1..regimes.len() {
            if let Ok(result) = one_way_anova(&[regimes[i].errors.clone(), regimes[j].errors.clone()]) {
                anova_pairs.push(PairAnova {
                    a: regimes[i].regime,
                    b: regimes[j].regime,
                    result,
                });
            }
        }
    }

    let quality = &ds.config.category_quality_means;
    let metric_table = match (table_model, split0) {
        (Some((regime, synthetic)), Some(split)) => {
            let inv: Vec<f64> = synthetic.iter().map(|v| 1.0 / v).collect();
            let conventional = if cfg.metric_table {
                Some(conventional_scores(ds, cfg, &split, 0)?)
            } else {
                None
            };
            let mut cols: Vec<(&str, &[f64])> = vec![("inv_synthetic_neuroscore", &inv)];
            if let Some(c) = &conventional {
                cols.push(("inv_inception_score", &c.inv_inception_score));
                cols.push(("mmd2", &c.mmd2));
                cols.push(("fid", &c.fid));
            }
            let rankings = rankings(quality, &cols)?;
            Some(MetricTable {
                regime,
                shuffle: 0,
                synthetic_neuroscore: synthetic,
                inv_synthetic_neuroscore: inv,
                conventional,
                rankings,
            })
        }
        _ => None,
    };

    let mode = cfg.amplitude_mode;
    Ok(MetricReport {
        meta: ReportMeta {
            categories: ds.config.category_names.clone(),
            category_quality_means: quality.clone(),
            master_seed: ds.config.master_seed,
            n_shuffles: cfg.n_shuffles,
            test_fraction: cfg.test_fraction,
            amplitude_mode: mode,
            split_note: "stratified split over images, one seeded split per shuffle; \
                         all regimes share the split and weight-init seed"
                .into(),
            metric_note: "metric table computed on the test split of shuffle 0; \
                          lower is better for every column"
                .into(),
        },
        config: cfg.clone(),
        regimes,
        runs,
        failures,
        anova_all,
        anova_pairs,
        ground_truth_neuroscore: category_means(ds, |i| {
            Ok(single_trial_amplitude_with(&extract_window(&ds.samples[i].trial)?, mode))
        })?,
        generator_neuroscore: category_means(ds, |i| {
            ds.samples[i]
                .trial
                .true_amplitude
                .ok_or_else(|| Error::Input(format!("sample {i} has no generator amplitude")))
        })?,
        metric_table,
    })
}

/// Generates the dataset described by `cfg` and runs the protocol on it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Dataset, MetricReport)> {
    cfg.validate()?;
    let ds = gen_dataset(&cfg.gen)?;
    let report = run_experiment_on(&ds, cfg)?;
    Ok((ds, report))
}

/// Per-metric ranking agreement recomputed from the report's score columns.
pub fn ranking_consistency(report: &MetricReport) -> Result<Vec<MetricRanking>> {
    let table = report
        .metric_table
        .as_ref()
        .ok_or_else(|| Error::Input("report has no metric table".into()))?;
    let mut cols: Vec<(&str, &[f64])> = vec![("inv_synthetic_neuroscore", &table.inv_synthetic_neuroscore)];
    if let Some(c) = &table.conventional {
        cols.push(("inv_inception_score", &c.inv_inception_score));
        cols.push(("mmd2", &c.mmd2));
        cols.push(("fid", &c.fid));
    }
    rankings(&report.meta.category_quality_means, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::GenConfig;

    fn tiny(regimes: Vec<Regime>, n_shuffles: usize) -> ExperimentConfig {
        ExperimentConfig {
            gen: GenConfig {
                n_per_category: 15,
                image_size: 10,
                ..GenConfig::default()
            },
            train: TrainConfig {
                stage1_epochs: 2,
                stage2_epochs: 2,
                baseline_epochs: 2,
                batch_size: 8,
                ..TrainConfig::default()
            },
            n_shuffles,
            regimes,
            metric_table: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_no_eeg_run_has_one_error_and_no_anova() {
        let (_, r) = run_experiment(&tiny(vec![Regime::NoEeg], 1)).unwrap();
        assert_eq!(r.regimes.len(), 1);
        assert_eq!(r.regimes[0].errors.len(), 1);
        assert_eq!(r.regimes[0].std_error, 0.0);
        assert!(r.anova_all.is_none());
        assert!(r.anova_pairs.is_empty());
        assert!(r.metric_table.is_some());
    }

    #[test]
    fn every_regime_reports_every_shuffle() {
        let (_, r) = run_experiment(&tiny(Regime::ALL.to_vec(), 2)).unwrap();
        for s in &r.regimes {
            assert_eq!(s.errors.len() + s.failures, 2);
            assert!(s.errors.iter().all(|e| *e >= 0.0));
        }
        assert_eq!(r.anova_pairs.len(), 3);
        assert!(r.anova_all.is_some());
        assert_eq!(r.runs.len(), 6);
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let cfg = tiny(vec![Regime::WithEeg, Regime::NoEeg], 2);
        assert_eq!(run_experiment(&cfg).unwrap().1, run_experiment(&cfg).unwrap().1);
    }

    #[test]
    fn divergence_is_recorded_not_fatal() {
        let mut cfg = tiny(vec![Regime::NoEeg, Regime::WithEeg], 1);
        cfg.train.learning_rate = 1e6;
        let (_, r) = run_experiment(&cfg).unwrap();
        assert_eq!(r.failures.len(), 2);
        assert!(r.regimes.iter().all(|s| s.errors.is_empty() && s.failures == 1));
        assert!(r.metric_table.is_none());
    }

    #[test]
    fn metric_table_with_conventional_scores() {
        let mut cfg = tiny(vec![Regime::WithEeg], 1);
        cfg.metric_table = true;
        let (_, r) = run_experiment(&cfg).unwrap();
        let t = r.metric_table.as_ref().unwrap();
        let c = t.conventional.as_ref().unwrap();
        assert_eq!(c.fid.len(), 3);
        assert!(c.inv_inception_score.iter().all(|v| *v > 0.0 && *v <= 1.0 + 1e-12));
        assert!(c.fid.iter().all(|v| *v >= -1e-8));
        assert_eq!(t.rankings.len(), 4);
        assert_eq!(ranking_consistency(&r).unwrap(), t.rankings);
    }

    #[test]
    fn splits_keep_regimes_comparable() {
        let cfg = tiny(Regime::ALL.to_vec(), 3);
        let ds = gen_dataset(&cfg.gen).unwrap();
        for s in 0..3 {
            let a = shuffle_split(&ds, &cfg, s).unwrap();
            assert!(a.train.iter().all(|i| !a.test.contains(i)));
            assert_eq!(a, shuffle_split(&ds, &cfg, s).unwrap());
            assert_eq!(shuffle_train_config(&cfg, s), shuffle_train_config(&cfg, s));
        }
        assert_ne!(shuffle_split(&ds, &cfg, 0).unwrap(), shuffle_split(&ds, &cfg, 1).unwrap());
    }

    #[test]
    fn mean_std_uses_sample_normalization() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
