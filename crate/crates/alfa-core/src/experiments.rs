//! Reproducible experiment drivers behind the CLI: learning curves with
//! reliable-prediction counts, EU-vs-AU correlation, EU monotonicity in the
//! training-set size, and batched acquisition-loop episodes.
//!
//! Every driver is a pure function of (dataset, method, seeds, config):
//! work fans out over seeds, and results are sorted by key before they are
//! returned so aggregation does not depend on completion order.
//!
//! Split protocol: each seed shuffles the dataset once and carves, in
//! order, a labeled pool, a calibration validation set and a test set.
//! Thresholds are always calibrated on the validation set; the test set is
//! only touched by final scoring.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::alfa::{
    calibrate_threshold, run_alfa, AcquisitionPools, AlfaTrace, Budgets, QueryStrategy, Thresholds,
};
use crate::backend::{gather, Method, Scorer, UncertaintyScore};
use crate::data::{split, DataError, MultiModalDataset, SplitPlan, SplitRatios};
use crate::seeding;
use crate::stats;
use crate::{Error, Result};

/// Version of the result CSV schemas emitted by the writers below.
pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// How each seed's shuffle is carved into pool / validation / test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SplitProtocol {
    /// Fraction of all rows held out for testing.
    pub test_fraction: f64,
    /// Fraction of the non-test rows set aside for threshold calibration.
    pub validation_fraction: f64,
}

impl Default for SplitProtocol {
    fn default() -> Self {
        SplitProtocol {
            test_fraction: 0.3,
            validation_fraction: 0.2,
        }
    }
}

impl SplitProtocol {
    pub fn split(&self, n: usize, seed: u64) -> std::result::Result<SplitPlan, DataError> {
        let train_side = 1.0 - self.test_fraction;
        split(
            n,
            SplitRatios {
                train: train_side * (1.0 - self.validation_fraction),
                validation: train_side * self.validation_fraction,
                test: self.test_fraction,
            },
            seed,
        )
    }
}

/// Clamps requested training sizes to the pool and deduplicates, keeping
/// order. The pool size itself is appended when the request overshoots.
pub fn effective_sizes(requested: &[usize], pool: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &size in requested {
        let clamped = size.min(pool).max(1);
        if !out.contains(&clamped) {
            out.push(clamped);
        }
    }
    out
}

fn scores_and_correct(
    scorer: &dyn Scorer,
    table: ndarray::ArrayView2<'_, f64>,
    rows: &[usize],
    view: &[usize],
    labels: &[usize],
) -> Result<(Vec<UncertaintyScore>, Vec<bool>)> {
    let features = gather(table, rows, view);
    let scores: Result<Vec<UncertaintyScore>> = features
        .rows()
        .into_iter()
        .map(|row| scorer.score(row))
        .collect();
    let scores = scores?;
    let correct = scores
        .iter()
        .zip(rows)
        .map(|(s, &r)| s.predicted == labels[r])
        .collect();
    Ok((scores, correct))
}

/// One learning-curve measurement.
#[derive(Debug, Clone, Serialize)]
pub struct CurveCell {
    pub method: String,
    pub modality: String,
    pub prefix: usize,
    pub size: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub robust_count: usize,
    pub robust_accuracy: Option<f64>,
    pub mean_eu: f64,
    pub mean_au: f64,
    pub t_e: f64,
    pub t_a: f64,
}

/// Seed-aggregated learning-curve row.
#[derive(Debug, Clone, Serialize)]
pub struct CurveSummaryRow {
    pub method: String,
    pub modality: String,
    pub prefix: usize,
    pub size: usize,
    pub seeds: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_robust_count: f64,
    pub std_robust_count: f64,
    /// Mean over seeds that produced at least one robust prediction.
    pub mean_robust_accuracy: Option<f64>,
    pub mean_eu: f64,
    pub mean_au: f64,
}

/// Learning curves: for each (seed, modality prefix, training size), fit on
/// the first `size` pool rows, calibrate both thresholds on the validation
/// split at risk `alpha`, then score the test set.
pub fn run_learning_curve(
    ds: &MultiModalDataset,
    method: &dyn Method,
    prefixes: &[usize],
    sizes: &[usize],
    seeds: &[u64],
    alpha: f64,
    protocol: &SplitProtocol,
) -> Result<Vec<CurveCell>> {
    if prefixes.is_empty() || sizes.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "learning curve needs at least one prefix, size and seed".into(),
        ));
    }
    let mut records: Vec<CurveCell> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<CurveCell>> {
            let plan = protocol.split(ds.n(), seed).map_err(Error::Data)?;
            let sizes = effective_sizes(sizes, plan.train.len());
            let mut cells = Vec::new();
            for &prefix in prefixes {
                let view = ds.view_columns(prefix);
                let modality = ds.modalities[prefix - 1].name.clone();
                for &size in &sizes {
                    let labeled = &plan.train[..size];
                    let features = gather(ds.features.view(), labeled, &view);
                    let labels: Vec<usize> =
                        labeled.iter().map(|&r| ds.labels[r]).collect();
                    let fit_seed =
                        seeding::derive(seeding::derive(seed, prefix as u64), size as u64);
                    let scorer = method.fit(features.view(), &labels, &ds.frame, fit_seed)?;

                    let (val_scores, val_correct) = scores_and_correct(
                        scorer.as_ref(),
                        ds.features.view(),
                        &plan.validation,
                        &view,
                        &ds.labels,
                    )?;
                    let val_eu: Vec<f64> = val_scores.iter().map(|s| s.eu).collect();
                    let val_au: Vec<f64> = val_scores.iter().map(|s| s.au).collect();
                    let t_e =
                        calibrate_threshold(&val_eu, &val_correct, alpha).map_err(Error::Alfa)?;
                    let t_a =
                        calibrate_threshold(&val_au, &val_correct, alpha).map_err(Error::Alfa)?;

                    let (test_scores, test_correct) = scores_and_correct(
                        scorer.as_ref(),
                        ds.features.view(),
                        &plan.test,
                        &view,
                        &ds.labels,
                    )?;
                    let n_test = test_scores.len();
                    let accuracy =
                        test_correct.iter().filter(|c| **c).count() as f64 / n_test as f64;
                    let robust: Vec<usize> = (0..n_test)
                        .filter(|&i| test_scores[i].eu < t_e && test_scores[i].au < t_a)
                        .collect();
                    let robust_accuracy = if robust.is_empty() {
                        None
                    } else {
                        Some(
                            robust.iter().filter(|&&i| test_correct[i]).count() as f64
                                / robust.len() as f64,
                        )
                    };
                    cells.push(CurveCell {
                        method: method.name().to_string(),
                        modality: modality.clone(),
                        prefix,
                        size,
                        seed,
                        accuracy,
                        robust_count: robust.len(),
                        robust_accuracy,
                        mean_eu: test_scores.iter().map(|s| s.eu).sum::<f64>() / n_test as f64,
                        mean_au: test_scores.iter().map(|s| s.au).sum::<f64>() / n_test as f64,
                        t_e,
                        t_a,
                    });
                }
            }
            Ok(cells)
        })
        .collect::<Result<Vec<Vec<CurveCell>>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by(|a, b| {
        (a.prefix, a.size, a.seed).cmp(&(b.prefix, b.size, b.seed))
    });
    Ok(records)
}

/// Groups curve records by (method, prefix, size) and averages over seeds.
pub fn summarize_curve(records: &[CurveCell]) -> Vec<CurveSummaryRow> {
    let mut keys: Vec<(String, usize, usize)> = records
        .iter()
        .map(|r| (r.method.clone(), r.prefix, r.size))
        .collect();
    keys.sort();
    keys.dedup();

    keys.into_iter()
        .map(|(method, prefix, size)| {
            let group: Vec<&CurveCell> = records
                .iter()
                .filter(|r| r.method == method && r.prefix == prefix && r.size == size)
                .collect();
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&CurveCell) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_accuracy = mean(&|r| r.accuracy);
            let mean_robust_count = mean(&|r| r.robust_count as f64);
            let std = |f: &dyn Fn(&CurveCell) -> f64, m: f64| {
                (group.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / n).sqrt()
            };
            let with_robust: Vec<f64> =
                group.iter().filter_map(|r| r.robust_accuracy).collect();
            let mean_robust_accuracy = if with_robust.is_empty() {
                None
            } else {
                Some(with_robust.iter().sum::<f64>() / with_robust.len() as f64)
            };
            CurveSummaryRow {
                method,
                modality: group[0].modality.clone(),
                prefix,
                size,
                seeds: group.len(),
                mean_accuracy,
                std_accuracy: std(&|r| r.accuracy, mean_accuracy),
                mean_robust_count,
                std_robust_count: std(&|r| r.robust_count as f64, mean_robust_count),
                mean_robust_accuracy,
                mean_eu: mean(&|r| r.mean_eu),
                mean_au: mean(&|r| r.mean_au),
            }
        })
        .collect()
}

/// EU-vs-AU correlation verdict for one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationResult {
    pub dataset: String,
    /// Mean Pearson r over the seeds that produced one.
    pub r: f64,
    /// Two-sided p for the mean r at the median per-seed test size.
    pub p: f64,
    pub significant: bool,
    pub seeds_used: usize,
    pub seeds_skipped: usize,
    /// Diagnostic when seeds were skipped or the dataset failed entirely.
    pub note: Option<String>,
}

/// Fits the method on each seed's training side (all modalities), scores
/// the test side, and correlates per-instance EU with AU.
pub fn run_disentanglement(
    datasets: &[(String, MultiModalDataset)],
    method: &dyn Method,
    seeds: &[u64],
    significance: f64,
    test_fraction: f64,
) -> Result<Vec<CorrelationResult>> {
    datasets
        .iter()
        .map(|(name, ds)| {
            let view = ds.view_columns(ds.modalities.len());
            let per_seed: Vec<std::result::Result<(f64, usize), String>> = seeds
                .par_iter()
                .map(|&seed| -> std::result::Result<(f64, usize), String> {
                    let plan = split(
                        ds.n(),
                        SplitRatios {
                            train: 1.0 - test_fraction,
                            validation: 0.0,
                            test: test_fraction,
                        },
                        seed,
                    )
                    .map_err(|e| e.to_string())?;
                    let features = gather(ds.features.view(), &plan.train, &view);
                    let labels: Vec<usize> =
                        plan.train.iter().map(|&r| ds.labels[r]).collect();
                    let scorer = method
                        .fit(features.view(), &labels, &ds.frame, seeding::derive(seed, 1))
                        .map_err(|e| e.to_string())?;
                    let test = gather(ds.features.view(), &plan.test, &view);
                    let mut eu = Vec::with_capacity(plan.test.len());
                    let mut au = Vec::with_capacity(plan.test.len());
                    for row in test.rows() {
                        let s = scorer.score(row).map_err(|e| e.to_string())?;
                        eu.push(s.eu);
                        au.push(s.au);
                    }
                    let (r, _) = stats::pearson(&eu, &au).map_err(|e| e.to_string())?;
                    Ok((r, plan.test.len()))
                })
                .collect();

            let used: Vec<(f64, usize)> =
                per_seed.iter().filter_map(|r| r.as_ref().ok()).copied().collect();
            let skipped = per_seed.len() - used.len();
            let note = per_seed.iter().find_map(|r| r.as_ref().err()).map(|e| {
                format!("{skipped} seed(s) skipped; first error: {e}")
            });
            if used.is_empty() {
                return Ok(CorrelationResult {
                    dataset: name.clone(),
                    r: f64::NAN,
                    p: f64::NAN,
                    significant: false,
                    seeds_used: 0,
                    seeds_skipped: skipped,
                    note,
                });
            }
            let r = used.iter().map(|(r, _)| r).sum::<f64>() / used.len() as f64;
            let mut test_sizes: Vec<usize> = used.iter().map(|(_, n)| *n).collect();
            test_sizes.sort_unstable();
            let df = (test_sizes[test_sizes.len() / 2].max(3) - 2) as f64;
            let denom = 1.0 - r * r;
            let p = if denom <= f64::EPSILON {
                0.0
            } else {
                stats::student_t_two_sided_p(r * (df / denom).sqrt(), df)
            };
            Ok(CorrelationResult {
                dataset: name.clone(),
                r,
                p,
                significant: p < significance,
                seeds_used: used.len(),
                seeds_skipped: skipped,
                note,
            })
        })
        .collect()
}

/// Mean test-set epistemic uncertainty per nested training size.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityResult {
    pub sizes: Vec<usize>,
    pub mean_eu: Vec<f64>,
    /// Spearman rank correlation between size and mean EU.
    pub spearman: f64,
}

pub fn run_monotonicity(
    ds: &MultiModalDataset,
    method: &dyn Method,
    prefix: usize,
    sizes: &[usize],
    seeds: &[u64],
    test_fraction: f64,
) -> Result<MonotonicityResult> {
    if sizes.is_empty() || seeds.is_empty() {
        return Err(Error::Config("monotonicity needs sizes and seeds".into()));
    }
    let view = ds.view_columns(prefix);
    let per_seed: Vec<Vec<(usize, f64)>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<(usize, f64)>> {
            let plan = split(
                ds.n(),
                SplitRatios {
                    train: 1.0 - test_fraction,
                    validation: 0.0,
                    test: test_fraction,
                },
                seed,
            )
            .map_err(Error::Data)?;
            let sizes = effective_sizes(sizes, plan.train.len());
            let test = gather(ds.features.view(), &plan.test, &view);
            let mut out = Vec::with_capacity(sizes.len());
            for &size in &sizes {
                let labeled = &plan.train[..size];
                let features = gather(ds.features.view(), labeled, &view);
                let labels: Vec<usize> = labeled.iter().map(|&r| ds.labels[r]).collect();
                let scorer = method.fit(
                    features.view(),
                    &labels,
                    &ds.frame,
                    seeding::derive(seed, size as u64),
                )?;
                let mut eu_sum = 0.0;
                for row in test.rows() {
                    eu_sum += scorer.score(row)?.eu;
                }
                out.push((size, eu_sum / test.nrows() as f64));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    // sizes coincide across seeds after clamping against equal pool sizes
    let sizes: Vec<usize> = per_seed[0].iter().map(|(s, _)| *s).collect();
    let mean_eu: Vec<f64> = (0..sizes.len())
        .map(|i| per_seed.iter().map(|s| s[i].1).sum::<f64>() / per_seed.len() as f64)
        .collect();
    let size_axis: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let spearman = if sizes.len() >= 3 {
        stats::spearman(&size_axis, &mean_eu).map_err(Error::Stats)?
    } else {
        f64::NAN
    };
    Ok(MonotonicityResult {
        sizes,
        mean_eu,
        spearman,
    })
}

/// Calibrated thresholds for one modality prefix.
#[derive(Debug, Clone, Serialize)]
pub struct ModalityThresholds {
    pub prefix: usize,
    pub modality: String,
    pub t_e: f64,
    pub t_a: f64,
    /// Accuracy of the calibration model on the validation split.
    pub validation_accuracy: f64,
}

/// Fits the method on the first `size` pool rows for every modality prefix
/// and calibrates both thresholds on the validation split at risk `alpha`.
pub fn calibrate_per_modality(
    ds: &MultiModalDataset,
    method: &dyn Method,
    alpha: f64,
    protocol: &SplitProtocol,
    size: Option<usize>,
    seed: u64,
) -> Result<Vec<ModalityThresholds>> {
    let plan = protocol.split(ds.n(), seed).map_err(Error::Data)?;
    if plan.train.is_empty() || plan.validation.is_empty() {
        return Err(Error::Config(
            "calibration needs a non-empty pool and validation split".into(),
        ));
    }
    let size = size.unwrap_or(plan.train.len()).clamp(1, plan.train.len());
    let rows: Vec<usize> = plan.train[..size].to_vec();
    let labels: Vec<usize> = rows.iter().map(|&r| ds.labels[r]).collect();
    (1..=ds.modalities.len())
        .map(|prefix| {
            let view = ds.view_columns(prefix);
            let features = gather(ds.features.view(), &rows, &view);
            let scorer = method.fit(
                features.view(),
                &labels,
                &ds.frame,
                seeding::derive(seed, prefix as u64),
            )?;
            let (scores, correct) = scores_and_correct(
                scorer.as_ref(),
                ds.features.view(),
                &plan.validation,
                &view,
                &ds.labels,
            )?;
            let eu: Vec<f64> = scores.iter().map(|s| s.eu).collect();
            let au: Vec<f64> = scores.iter().map(|s| s.au).collect();
            Ok(ModalityThresholds {
                prefix,
                modality: ds.modalities[prefix - 1].name.clone(),
                t_e: calibrate_threshold(&eu, &correct, alpha).map_err(Error::Alfa)?,
                t_a: calibrate_threshold(&au, &correct, alpha).map_err(Error::Alfa)?,
                validation_accuracy: correct.iter().filter(|c| **c).count() as f64
                    / correct.len() as f64,
            })
        })
        .collect()
}

/// Whether acquisition episodes share the grown labeled pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeMode {
    /// Every episode starts from a snapshot of the initial pools.
    #[default]
    Independent,
    /// Episodes run in test order and keep each other's queried labels.
    Shared,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub test_row: usize,
    pub reliable: bool,
    pub predicted: usize,
    pub actual: usize,
    pub final_modality: usize,
    pub labels_queried: usize,
    pub label_cost: f64,
    pub modality_cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlfaBatchSummary {
    pub episodes: usize,
    pub fraction_reliable: f64,
    /// Accuracy over episodes that ended reliable; absent when none did.
    pub reliable_accuracy: Option<f64>,
    pub overall_accuracy: f64,
    /// Episodes terminating at each modality prefix (index j-1).
    pub termination_histogram: Vec<usize>,
    pub mean_label_cost: f64,
    pub mean_modality_cost: f64,
    /// Calibrated per-modality thresholds (t_e, t_a).
    pub thresholds: Vec<(f64, f64)>,
}

/// Runs one acquisition episode per test instance.
///
/// Thresholds are calibrated once per modality prefix on the validation
/// split, with the method fitted on the initial labeled pool.
#[allow(clippy::too_many_arguments)]
pub fn run_alfa_episode_batch(
    ds: &MultiModalDataset,
    method: &dyn Method,
    alpha: f64,
    budgets: &Budgets,
    strategy: QueryStrategy,
    mode: EpisodeMode,
    protocol: &SplitProtocol,
    initial_labeled: usize,
    seed: u64,
) -> Result<(Vec<EpisodeRecord>, Vec<AlfaTrace>, AlfaBatchSummary)> {
    if initial_labeled == 0 {
        return Err(Error::Config("need at least one initially labeled row".into()));
    }
    let plan = protocol.split(ds.n(), seed).map_err(Error::Data)?;
    if plan.train.is_empty() || plan.test.is_empty() {
        return Err(Error::Config("split produced an empty pool or test set".into()));
    }
    let initial = initial_labeled.min(plan.train.len());
    let mu = ds.modalities.len();

    // pool table: the train side only, full feature width
    let all_columns: Vec<usize> = (0..ds.dim()).collect();
    let pool_features = gather(ds.features.view(), &plan.train, &all_columns);
    let pool_labels: Vec<usize> = plan.train.iter().map(|&r| ds.labels[r]).collect();
    let base_pools = AcquisitionPools::new(
        pool_features,
        pool_labels,
        ds.frame.clone(),
        (0..initial).collect(),
    )
    .map_err(Error::Alfa)?;

    // per-modality calibration on the validation split, with the method
    // fitted on the initial labeled rows
    let mut thresholds = Thresholds::global(f64::INFINITY, f64::INFINITY, alpha);
    for c in calibrate_per_modality(ds, method, alpha, protocol, Some(initial), seed)? {
        thresholds.set_modality(c.prefix, c.t_e, c.t_a);
    }

    let run_episode = |episode: usize,
                       pools: &mut AcquisitionPools|
     -> Result<(EpisodeRecord, AlfaTrace)> {
        let test_row = plan.test[episode];
        let trace = run_alfa(
            ds.features.row(test_row),
            pools,
            &ds.modalities,
            &thresholds,
            method,
            budgets,
            strategy,
            seeding::derive(seed, 0x1000 + episode as u64),
        )?;
        let record = EpisodeRecord {
            episode,
            test_row,
            reliable: trace.outcome.is_reliable(),
            predicted: trace.outcome.predicted(),
            actual: ds.labels[test_row],
            final_modality: trace.final_modality(),
            labels_queried: trace.labels_queried(),
            label_cost: trace.label_cost,
            modality_cost: trace.modality_cost,
        };
        Ok((record, trace))
    };

    let outcomes: Vec<(EpisodeRecord, AlfaTrace)> = match mode {
        EpisodeMode::Independent => (0..plan.test.len())
            .into_par_iter()
            .map(|episode| {
                let mut pools = base_pools.clone();
                run_episode(episode, &mut pools)
            })
            .collect::<Result<Vec<_>>>()?,
        EpisodeMode::Shared => {
            let mut pools = base_pools;
            (0..plan.test.len())
                .map(|episode| run_episode(episode, &mut pools))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let (records, traces): (Vec<EpisodeRecord>, Vec<AlfaTrace>) = outcomes.into_iter().unzip();
    let episodes = records.len();
    let reliable: Vec<&EpisodeRecord> = records.iter().filter(|r| r.reliable).collect();
    let mut histogram = vec![0usize; mu];
    for record in &records {
        histogram[record.final_modality - 1] += 1;
    }
    let summary = AlfaBatchSummary {
        episodes,
        fraction_reliable: reliable.len() as f64 / episodes as f64,
        reliable_accuracy: if reliable.is_empty() {
            None
        } else {
            Some(
                reliable.iter().filter(|r| r.predicted == r.actual).count() as f64
                    / reliable.len() as f64,
            )
        },
        overall_accuracy: records.iter().filter(|r| r.predicted == r.actual).count() as f64
            / episodes as f64,
        termination_histogram: histogram,
        mean_label_cost: records.iter().map(|r| r.label_cost).sum::<f64>() / episodes as f64,
        mean_modality_cost: records.iter().map(|r| r.modality_cost).sum::<f64>()
            / episodes as f64,
        thresholds: (1..=mu).map(|j| thresholds.for_modality(j)).collect(),
    };
    Ok((records, traces, summary))
}

// ---------------------------------------------------------------------------
// result writers

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn write_curve_csv<W: Write>(records: &[CurveCell], w: &mut W) -> Result<()> {
    writeln!(
        w,
        "method,modality,prefix,size,seed,accuracy,robust_count,robust_accuracy,mean_eu,mean_au,t_e,t_a"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.modality,
            r.prefix,
            r.size,
            r.seed,
            r.accuracy,
            r.robust_count,
            fmt_opt(r.robust_accuracy),
            r.mean_eu,
            r.mean_au,
            r.t_e,
            r.t_a
        )?;
    }
    Ok(())
}

pub fn write_curve_summary_csv<W: Write>(rows: &[CurveSummaryRow], w: &mut W) -> Result<()> {
    writeln!(
        w,
        "method,modality,prefix,size,seeds,mean_accuracy,std_accuracy,mean_robust_count,std_robust_count,mean_robust_accuracy,mean_eu,mean_au"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.modality,
            r.prefix,
            r.size,
            r.seeds,
            r.mean_accuracy,
            r.std_accuracy,
            r.mean_robust_count,
            r.std_robust_count,
            fmt_opt(r.mean_robust_accuracy),
            r.mean_eu,
            r.mean_au
        )?;
    }
    Ok(())
}

pub fn write_correlation_csv<W: Write>(rows: &[CorrelationResult], w: &mut W) -> Result<()> {
    writeln!(w, "dataset,r,p,significant,seeds_used,seeds_skipped")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.dataset, r.r, r.p, r.significant, r.seeds_used, r.seeds_skipped
        )?;
    }
    Ok(())
}

pub fn write_monotonicity_csv<W: Write>(result: &MonotonicityResult, w: &mut W) -> Result<()> {
    writeln!(w, "size,mean_eu")?;
    for (size, eu) in result.sizes.iter().zip(&result.mean_eu) {
        writeln!(w, "{size},{eu}")?;
    }
    Ok(())
}

pub fn write_episode_csv<W: Write>(records: &[EpisodeRecord], w: &mut W) -> Result<()> {
    writeln!(
        w,
        "episode,test_row,reliable,predicted,actual,final_modality,labels_queried,label_cost,modality_cost"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.episode,
            r.test_row,
            r.reliable,
            r.predicted,
            r.actual,
            r.final_modality,
            r.labels_queried,
            r.label_cost,
            r.modality_cost
        )?;
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(traces: &[AlfaTrace], w: &mut W) -> Result<()> {
    writeln!(w, "{}", AlfaTrace::RECORD_HEADER)?;
    for (episode, trace) in traces.iter().enumerate() {
        trace.write_records(episode, w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alfa::{ModalityMode, ModalitySpec};
    use crate::backend::{MethodConfig, MethodRegistry};
    use crate::belief::Frame;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two well-separated Gaussian blobs over two single-column modalities;
    /// both columns carry the class signal.
    fn blob_dataset(n_per_class: usize, seed: u64) -> MultiModalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * n_per_class;
        let mut values = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let center = if class == 0 { -2.0 } else { 2.0 };
            values.push(center + rng.random_range(-0.5..0.5));
            values.push(center + rng.random_range(-0.5..0.5));
            labels.push(class);
        }
        MultiModalDataset {
            features: Array2::from_shape_vec((n, 2), values).unwrap(),
            labels,
            frame: Frame::new(["a", "b"]).unwrap(),
            modalities: vec![
                ModalitySpec {
                    name: "first".into(),
                    columns: vec![0],
                    cost: 1.0,
                    mode: ModalityMode::Cumulative,
                },
                ModalitySpec {
                    name: "second".into(),
                    columns: vec![1],
                    cost: 2.0,
                    mode: ModalityMode::Cumulative,
                },
            ],
            columns: Vec::new(),
        }
    }

    fn eknn() -> Box<dyn Method> {
        let mut cfg = MethodConfig::named("eknn");
        cfg.k = 5;
        MethodRegistry::with_defaults().build(&cfg).unwrap()
    }

    #[test]
    fn effective_sizes_clamp_and_dedupe() {
        assert_eq!(effective_sizes(&[8, 16, 24], 20), vec![8, 16, 20]);
        assert_eq!(effective_sizes(&[8, 8, 30, 40], 25), vec![8, 25]);
    }

    #[test]
    fn full_pool_accuracy_matches_direct_fit() {
        let ds = blob_dataset(40, 3);
        let method = eknn();
        let protocol = SplitProtocol::default();
        let seeds = [11u64];
        let records = run_learning_curve(
            &ds,
            method.as_ref(),
            &[2],
            &[usize::MAX],
            &seeds,
            0.05,
            &protocol,
        )
        .unwrap();
        assert_eq!(records.len(), 1);
        let record = &records[0];

        // the same computation without the harness
        let plan = protocol.split(ds.n(), 11).unwrap();
        let view = ds.view_columns(2);
        let features = gather(ds.features.view(), &plan.train, &view);
        let labels: Vec<usize> = plan.train.iter().map(|&r| ds.labels[r]).collect();
        let fit_seed = seeding::derive(seeding::derive(11, 2), plan.train.len() as u64);
        let scorer = method
            .fit(features.view(), &labels, &ds.frame, fit_seed)
            .unwrap();
        let (_, correct) = scores_and_correct(
            scorer.as_ref(),
            ds.features.view(),
            &plan.test,
            &view,
            &ds.labels,
        )
        .unwrap();
        let direct = correct.iter().filter(|c| **c).count() as f64 / correct.len() as f64;
        assert_eq!(record.accuracy, direct);
        assert_eq!(record.size, plan.train.len());
    }

    #[test]
    fn curve_records_are_reproducible_and_sorted() {
        let ds = blob_dataset(30, 5);
        let method = eknn();
        let seeds = [1u64, 2, 3];
        let args = (&ds, &[1usize, 2], &[8usize, 16], &seeds);
        let a = run_learning_curve(
            args.0,
            method.as_ref(),
            args.1,
            args.2,
            args.3,
            0.05,
            &SplitProtocol::default(),
        )
        .unwrap();
        let b = run_learning_curve(
            args.0,
            method.as_ref(),
            args.1,
            args.2,
            args.3,
            0.05,
            &SplitProtocol::default(),
        )
        .unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.accuracy, y.accuracy);
            assert_eq!(x.robust_count, y.robust_count);
            assert_eq!((x.t_e, x.t_a), (y.t_e, y.t_a));
        }
        let keys: Vec<(usize, usize, u64)> = a.iter().map(|r| (r.prefix, r.size, r.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);

        let summary = summarize_curve(&a);
        assert_eq!(summary.len(), 4); // 2 prefixes x 2 sizes
        assert!(summary.iter().all(|row| row.seeds == 3));
    }

    #[test]
    fn disentanglement_reports_finite_r_on_separable_data() {
        let ds = blob_dataset(50, 9);
        let method = eknn();
        let results = run_disentanglement(
            &[("blobs".to_string(), ds)],
            method.as_ref(),
            &[1, 2, 3, 4],
            0.05,
            0.3,
        )
        .unwrap();
        assert_eq!(results.len(), 1);
        let r = &results[0];
        assert_eq!(r.seeds_used, 4);
        assert_eq!(r.seeds_skipped, 0);
        assert!(r.r.is_finite());
        assert!((0.0..=1.0).contains(&r.p));
    }

    #[test]
    fn disentanglement_skips_degenerate_seeds_with_diagnostic() {
        // constant features: EU is identical for every test instance
        let n = 30;
        let ds = MultiModalDataset {
            features: Array2::zeros((n, 2)),
            labels: (0..n).map(|i| i % 2).collect(),
            frame: Frame::new(["a", "b"]).unwrap(),
            modalities: vec![ModalitySpec {
                name: "flat".into(),
                columns: vec![0, 1],
                cost: 0.0,
                mode: ModalityMode::Cumulative,
            }],
            columns: Vec::new(),
        };
        let mut cfg = MethodConfig::named("eknn");
        cfg.gamma = Some(1.0); // degenerate data cannot estimate gamma
        cfg.standardize = false;
        let method = MethodRegistry::with_defaults().build(&cfg).unwrap();
        let results =
            run_disentanglement(&[("flat".to_string(), ds)], method.as_ref(), &[1, 2], 0.05, 0.3)
                .unwrap();
        let r = &results[0];
        assert_eq!(r.seeds_used, 0);
        assert_eq!(r.seeds_skipped, 2);
        assert!(r.note.as_ref().unwrap().contains("zero variance"));
        assert!(!r.significant);
    }

    #[test]
    fn monotonicity_on_single_size_is_trivial() {
        let ds = blob_dataset(30, 1);
        let method = eknn();
        let result =
            run_monotonicity(&ds, method.as_ref(), 2, &[16], &[1, 2], 0.3).unwrap();
        assert_eq!(result.sizes, vec![16]);
        assert_eq!(result.mean_eu.len(), 1);
        assert!(result.spearman.is_nan());
    }

    #[test]
    fn monotonicity_decreases_on_duplicated_training_data() {
        // the same four points repeated: more copies still mean more
        // evidence, so EU keeps falling
        let base = [
            (-2.0, -2.0, 0),
            (2.0, 2.0, 1),
            (-2.2, -1.8, 0),
            (2.2, 1.8, 1),
        ];
        let n = 120;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let (a, b, label) = base[i % base.len()];
            values.push(a);
            values.push(b);
            labels.push(label);
        }
        let ds = MultiModalDataset {
            features: Array2::from_shape_vec((n, 2), values).unwrap(),
            labels,
            frame: Frame::new(["a", "b"]).unwrap(),
            modalities: vec![ModalitySpec {
                name: "all".into(),
                columns: vec![0, 1],
                cost: 0.0,
                mode: ModalityMode::Cumulative,
            }],
            columns: Vec::new(),
        };
        let mut cfg = MethodConfig::named("eknn");
        cfg.k = 5;
        cfg.gamma = Some(1.0);
        cfg.standardize = false;
        let method = MethodRegistry::with_defaults().build(&cfg).unwrap();
        let result = run_monotonicity(
            &ds,
            method.as_ref(),
            1,
            &[8, 16, 32, 64],
            &[1, 2, 3],
            0.3,
        )
        .unwrap();
        for pair in result.mean_eu.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "mean EU rose: {:?}", result.mean_eu);
        }
    }

    #[test]
    fn episode_batch_with_disabled_thresholds_costs_nothing() {
        let ds = blob_dataset(40, 2);
        let method = eknn();
        // alpha = 1 accepts everything during calibration: thresholds +inf
        let (records, traces, summary) = run_alfa_episode_batch(
            &ds,
            method.as_ref(),
            1.0,
            &Budgets::default(),
            QueryStrategy::Nearest,
            EpisodeMode::Independent,
            &SplitProtocol::default(),
            20,
            7,
        )
        .unwrap();
        assert_eq!(records.len(), traces.len());
        assert!((summary.fraction_reliable - 1.0).abs() <= 1e-12);
        assert_eq!(summary.termination_histogram[0], summary.episodes);
        assert_eq!(summary.mean_label_cost, 0.0);
        assert_eq!(summary.mean_modality_cost, 0.0);
        assert!(records.iter().all(|r| r.final_modality == 1));
    }

    #[test]
    fn shared_mode_carries_the_grown_pool_forward() {
        let ds = blob_dataset(40, 4);
        let method = eknn();
        let budgets = Budgets {
            max_labels_per_modality: Some(2),
            max_total_labels: Some(4),
            label_cost: 1.0,
        };
        // calibrate at a modest risk so some episodes query labels
        let run = |mode| {
            run_alfa_episode_batch(
                &ds,
                method.as_ref(),
                0.05,
                &budgets,
                QueryStrategy::Nearest,
                mode,
                &SplitProtocol::default(),
                8,
                3,
            )
            .unwrap()
        };
        let (ind_records, _, _) = run(EpisodeMode::Independent);
        let (shared_records, _, _) = run(EpisodeMode::Shared);
        let ind_total: usize = ind_records.iter().map(|r| r.labels_queried).sum();
        let shared_total: usize = shared_records.iter().map(|r| r.labels_queried).sum();
        // shared episodes benefit from earlier queries, so they never need
        // more labels in total than the independent runs
        assert!(shared_total <= ind_total);
    }

    #[test]
    fn csv_writers_emit_headers_and_rows() {
        let ds = blob_dataset(30, 8);
        let method = eknn();
        let records = run_learning_curve(
            &ds,
            method.as_ref(),
            &[1],
            &[8],
            &[1, 2],
            0.05,
            &SplitProtocol::default(),
        )
        .unwrap();
        let mut curve = Vec::new();
        write_curve_csv(&records, &mut curve).unwrap();
        let text = String::from_utf8(curve).unwrap();
        assert!(text.starts_with("method,modality,prefix,size,seed,accuracy"));
        assert_eq!(text.lines().count(), records.len() + 1);

        let mut summary = Vec::new();
        write_curve_summary_csv(&summarize_curve(&records), &mut summary).unwrap();
        assert_eq!(String::from_utf8(summary).unwrap().lines().count(), 2);
    }
}
