//! The two-threshold acquisition loop over an ordered modality sequence,
//! with threshold calibration and label query strategies.
//!
//! For one test instance the loop alternates two reduction directions:
//! while epistemic uncertainty is at or above `t_e` it queries labels for
//! unlabeled pool instances (knowledge is lacking); once epistemic
//! uncertainty is low it checks aleatoric uncertainty, and while that is at
//! or above `t_a` it acquires the next, costlier feature modality and
//! retrains (the feature space is too ambiguous). When both are below
//! their thresholds the prediction is emitted as reliable.
//!
//! Budgets make the loop total: exhausting the per-modality label budget or
//! the unlabeled pool ends the query phase for the current modality, while
//! exhausting the total label budget or needing a modality beyond the last
//! one ends the episode with a best-effort, non-reliable prediction.

use std::io::{self, Write};

use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{gather, Method};
use crate::belief::Frame;
use crate::seeding;
use crate::{Error, Result};

#[derive(Debug, Error)]
pub enum AlfaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unlabeled pool is empty")]
    EmptyPool,
    #[error("calibration input is empty")]
    EmptyCalibration,
    #[error("calibration lists differ in length: {uncertainties} vs {correct}")]
    CalibrationLengthMismatch { uncertainties: usize, correct: usize },
    #[error("pool index {index} out of range ({len} rows)")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Whether a modality's columns extend the previous view or replace it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModalityMode {
    #[default]
    Cumulative,
    Replace,
}

/// A cost-annotated group of feature columns acquired as a unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalitySpec {
    pub name: String,
    /// Encoded feature-table column indices owned by this modality.
    pub columns: Vec<usize>,
    /// Cost charged when the loop acquires this modality for an instance.
    pub cost: f64,
    pub mode: ModalityMode,
}

/// Feature columns visible at modality prefix `j` (1-based): the union of
/// the first `j` modalities' columns, restarted at each `replace` modality.
pub fn modality_view(modalities: &[ModalitySpec], prefix: usize) -> Vec<usize> {
    assert!(
        prefix >= 1 && prefix <= modalities.len(),
        "modality prefix {prefix} out of range 1..={}",
        modalities.len()
    );
    let mut view: Vec<usize> = Vec::new();
    for spec in &modalities[..prefix] {
        match spec.mode {
            ModalityMode::Cumulative => view.extend(spec.columns.iter().copied()),
            ModalityMode::Replace => view = spec.columns.clone(),
        }
    }
    view
}

/// Labeled/unlabeled index pools over a feature table, with ground-truth
/// labels standing in for the annotator.
#[derive(Debug, Clone)]
pub struct AcquisitionPools {
    features: ndarray::Array2<f64>,
    oracle_labels: Vec<usize>,
    frame: Frame,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    acquired: Vec<u32>,
}

impl AcquisitionPools {
    /// `labeled` lists the initially labeled row indices; the remaining
    /// rows form the unlabeled pool. Labeled rows start with modality 1
    /// acquired.
    pub fn new(
        features: ndarray::Array2<f64>,
        oracle_labels: Vec<usize>,
        frame: Frame,
        labeled: Vec<usize>,
    ) -> std::result::Result<Self, AlfaError> {
        let n = features.nrows();
        if oracle_labels.len() != n {
            return Err(AlfaError::InvalidConfig(format!(
                "{} labels for {} rows",
                oracle_labels.len(),
                n
            )));
        }
        for &label in &oracle_labels {
            if label >= frame.len() {
                return Err(AlfaError::InvalidConfig(format!(
                    "label index {label} outside frame of {} classes",
                    frame.len()
                )));
            }
        }
        let mut is_labeled = vec![false; n];
        for &index in &labeled {
            if index >= n {
                return Err(AlfaError::IndexOutOfRange { index, len: n });
            }
            if is_labeled[index] {
                return Err(AlfaError::InvalidConfig(format!(
                    "row {index} listed as labeled twice"
                )));
            }
            is_labeled[index] = true;
        }
        let unlabeled = (0..n).filter(|&i| !is_labeled[i]).collect();
        let acquired = is_labeled.iter().map(|&l| if l { 1 } else { 0 }).collect();
        Ok(AcquisitionPools {
            features,
            oracle_labels,
            frame,
            labeled,
            unlabeled,
            acquired,
        })
    }

    pub fn features(&self) -> ndarray::ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn label_of(&self, row: usize) -> usize {
        self.oracle_labels[row]
    }

    /// Bitmask of modalities acquired for a row (bit j-1 = modality j).
    pub fn acquired_mask(&self, row: usize) -> u32 {
        self.acquired[row]
    }

    fn labeled_training(&self) -> Vec<usize> {
        let mut labels = self.labeled.clone();
        labels.sort_unstable();
        labels
    }

    /// Moves the unlabeled row at pool position `pos` into the labeled set
    /// and reveals its label.
    fn query(&mut self, pos: usize, active_modalities: u32) -> (usize, usize) {
        let row = self.unlabeled.remove(pos);
        self.labeled.push(row);
        self.acquired[row] |= active_modalities;
        (row, self.oracle_labels[row])
    }

    fn mark_acquired(&mut self, modality_bit: u32) {
        for &row in &self.labeled {
            self.acquired[row] |= modality_bit;
        }
    }
}

/// Decision thresholds with the calibration risk that produced them.
/// `+inf` disables a check (everything accepted), `-inf` makes it
/// unsatisfiable (nothing accepted).
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub t_e: f64,
    pub t_a: f64,
    pub alpha: f64,
    /// Optional per-modality overrides of `(t_e, t_a)`, index j-1.
    pub per_modality: Vec<Option<(f64, f64)>>,
}

impl Thresholds {
    pub fn global(t_e: f64, t_a: f64, alpha: f64) -> Self {
        Thresholds {
            t_e,
            t_a,
            alpha,
            per_modality: Vec::new(),
        }
    }

    /// Both checks disabled: every prediction is accepted immediately.
    pub fn disabled() -> Self {
        Self::global(f64::INFINITY, f64::INFINITY, 0.05)
    }

    pub fn set_modality(&mut self, prefix: usize, t_e: f64, t_a: f64) {
        if self.per_modality.len() < prefix {
            self.per_modality.resize(prefix, None);
        }
        self.per_modality[prefix - 1] = Some((t_e, t_a));
    }

    pub fn for_modality(&self, prefix: usize) -> (f64, f64) {
        self.per_modality
            .get(prefix - 1)
            .copied()
            .flatten()
            .unwrap_or((self.t_e, self.t_a))
    }
}

/// Threshold from the reject-until-accurate calibration: items are sorted
/// by descending uncertainty and rejected (ties together) until the
/// remaining accuracy reaches `1 - alpha`; the returned threshold is the
/// uncertainty of the last rejected item, so `u < t` accepts. Returns
/// `+inf` when the full set already meets the bar and `-inf` when no
/// suffix does.
pub fn calibrate_threshold(
    uncertainties: &[f64],
    correct: &[bool],
    alpha: f64,
) -> std::result::Result<f64, AlfaError> {
    if uncertainties.len() != correct.len() {
        return Err(AlfaError::CalibrationLengthMismatch {
            uncertainties: uncertainties.len(),
            correct: correct.len(),
        });
    }
    if uncertainties.is_empty() {
        return Err(AlfaError::EmptyCalibration);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AlfaError::InvalidConfig(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let mut order: Vec<usize> = (0..uncertainties.len()).collect();
    order.sort_by(|&a, &b| uncertainties[b].total_cmp(&uncertainties[a]));

    let target = 1.0 - alpha;
    let meets = |correct_count: usize, remaining: usize| {
        correct_count as f64 + 1e-9 >= target * remaining as f64
    };

    let mut remaining = uncertainties.len();
    let mut correct_count = correct.iter().filter(|c| **c).count();
    if meets(correct_count, remaining) {
        return Ok(f64::INFINITY);
    }
    let mut i = 0;
    while i < order.len() {
        // reject the whole tie group
        let value = uncertainties[order[i]];
        let mut j = i;
        while j < order.len() && uncertainties[order[j]] == value {
            if correct[order[j]] {
                correct_count -= 1;
            }
            remaining -= 1;
            j += 1;
        }
        i = j;
        if remaining > 0 && meets(correct_count, remaining) {
            return Ok(value);
        }
    }
    Ok(f64::NEG_INFINITY)
}

/// How the loop picks which unlabeled instance to have labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    /// The unlabeled instance nearest to the test instance in the current
    /// modality view (ties to the lowest row index).
    #[default]
    Nearest,
    /// A uniform seeded draw.
    Random,
}

/// Position (into `pools.unlabeled()`) of the instance the strategy picks.
pub fn select_query(
    x: ArrayView1<'_, f64>,
    pools: &AcquisitionPools,
    view: &[usize],
    strategy: QueryStrategy,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<usize, AlfaError> {
    select_query_excluding(x, pools, view, strategy, rng, &[])
}

fn select_query_excluding(
    x: ArrayView1<'_, f64>,
    pools: &AcquisitionPools,
    view: &[usize],
    strategy: QueryStrategy,
    rng: &mut ChaCha8Rng,
    excluded: &[usize],
) -> std::result::Result<usize, AlfaError> {
    let candidates: Vec<usize> = (0..pools.unlabeled().len())
        .filter(|p| !excluded.contains(p))
        .collect();
    if candidates.is_empty() {
        return Err(AlfaError::EmptyPool);
    }
    match strategy {
        QueryStrategy::Random => Ok(candidates[rng.random_range(0..candidates.len())]),
        QueryStrategy::Nearest => {
            let features = pools.features();
            let mut best: Option<(f64, usize, usize)> = None; // (distance², row, pos)
            for &pos in &candidates {
                let row = pools.unlabeled()[pos];
                let d2: f64 = view
                    .iter()
                    .map(|&c| {
                        let d = features[(row, c)] - x[c];
                        d * d
                    })
                    .sum();
                let better = match &best {
                    None => true,
                    Some((bd, brow, _)) => d2 < *bd || (d2 == *bd && row < *brow),
                };
                if better {
                    best = Some((d2, row, pos));
                }
            }
            Ok(best.expect("candidates nonempty").2)
        }
    }
}

/// Batch variant: `b` distinct pool positions by repeated selection.
pub fn select_query_batch(
    x: ArrayView1<'_, f64>,
    pools: &AcquisitionPools,
    view: &[usize],
    strategy: QueryStrategy,
    rng: &mut ChaCha8Rng,
    b: usize,
) -> std::result::Result<Vec<usize>, AlfaError> {
    let b = b.min(pools.unlabeled().len());
    if b == 0 {
        return Err(AlfaError::EmptyPool);
    }
    let mut picked = Vec::with_capacity(b);
    for _ in 0..b {
        let pos = select_query_excluding(x, pools, view, strategy, rng, &picked)?;
        picked.push(pos);
    }
    Ok(picked)
}

/// Episode limits. `None` means unlimited. Exceeding the total label
/// budget aborts the episode; exceeding the per-modality budget only ends
/// the query phase for that modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub max_labels_per_modality: Option<usize>,
    pub max_total_labels: Option<usize>,
    /// Cost charged per queried label.
    pub label_cost: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_labels_per_modality: None,
            max_total_labels: None,
            label_cost: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlfaAction {
    QueryLabel,
    AcquireModality,
    Predict,
    Abort,
}

impl AlfaAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AlfaAction::QueryLabel => "query_label",
            AlfaAction::AcquireModality => "acquire_modality",
            AlfaAction::Predict => "predict",
            AlfaAction::Abort => "abort",
        }
    }
}

/// One recorded step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AlfaStep {
    /// 1-based modality prefix in effect after the step.
    pub modality: usize,
    /// Labeled-pool size after the step.
    pub n_labeled: usize,
    pub eu: f64,
    /// Aleatoric uncertainty, when the step computed it.
    pub au: Option<f64>,
    pub action: AlfaAction,
    pub cumulative_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlfaOutcome {
    /// Both uncertainties fell below their thresholds.
    Reliable(usize),
    /// A budget or the modality sequence ran out; the class is the current
    /// best effort and is not flagged reliable.
    BudgetExhausted(usize),
}

impl AlfaOutcome {
    pub fn predicted(&self) -> usize {
        match self {
            AlfaOutcome::Reliable(c) | AlfaOutcome::BudgetExhausted(c) => *c,
        }
    }

    pub fn is_reliable(&self) -> bool {
        matches!(self, AlfaOutcome::Reliable(_))
    }
}

/// Full decision log of one episode.
#[derive(Debug, Clone)]
pub struct AlfaTrace {
    pub steps: Vec<AlfaStep>,
    pub outcome: AlfaOutcome,
    pub label_cost: f64,
    pub modality_cost: f64,
}

impl AlfaTrace {
    pub const RECORD_HEADER: &'static str =
        "episode,step,modality,n_labeled,eu,au,action,cumulative_cost";

    pub fn total_cost(&self) -> f64 {
        self.label_cost + self.modality_cost
    }

    pub fn labels_queried(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.action == AlfaAction::QueryLabel)
            .count()
    }

    /// Modality prefix in effect when the episode ended.
    pub fn final_modality(&self) -> usize {
        self.steps.last().map_or(1, |s| s.modality)
    }

    /// Writes one structured text record per step.
    pub fn write_records<W: Write>(&self, episode: usize, w: &mut W) -> io::Result<()> {
        for (i, step) in self.steps.iter().enumerate() {
            let au = step.au.map_or(String::new(), |a| format!("{a}"));
            writeln!(
                w,
                "{episode},{i},{},{},{},{au},{},{}",
                step.modality,
                step.n_labeled,
                step.eu,
                step.action.as_str(),
                step.cumulative_cost
            )?;
        }
        Ok(())
    }
}

/// Runs one episode of the acquisition loop for test instance `x` (a full
/// feature row; modality views select its visible columns).
///
/// The backend is rebuilt from scratch after every pool or modality change,
/// with a seed derived from `seed` and the retrain ordinal.
#[allow(clippy::too_many_arguments)]
pub fn run_alfa(
    x: ArrayView1<'_, f64>,
    pools: &mut AcquisitionPools,
    modalities: &[ModalitySpec],
    thresholds: &Thresholds,
    factory: &dyn Method,
    budgets: &Budgets,
    strategy: QueryStrategy,
    seed: u64,
) -> Result<AlfaTrace> {
    if modalities.is_empty() {
        return Err(Error::Alfa(AlfaError::InvalidConfig(
            "modality list is empty".into(),
        )));
    }
    if x.len() != pools.features().ncols() {
        return Err(Error::Alfa(AlfaError::InvalidConfig(format!(
            "test instance has {} columns, pool table has {}",
            x.len(),
            pools.features().ncols()
        ))));
    }

    let mu = modalities.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, 0x51));
    let mut steps: Vec<AlfaStep> = Vec::new();
    let mut label_cost = 0.0;
    let mut modality_cost = 0.0;
    let mut total_labels = 0usize;
    let mut retrains = 0u64;

    let mut j = 1usize;
    let mut view = modality_view(modalities, j);
    let fit = |pools: &AcquisitionPools, view: &[usize], retrains: &mut u64| {
        let rows = pools.labeled_training();
        let features = gather(pools.features(), &rows, view);
        let labels: Vec<usize> = rows.iter().map(|&r| pools.label_of(r)).collect();
        let scorer = factory.fit(
            features.view(),
            &labels,
            pools.frame(),
            seeding::derive(seed, *retrains),
        )?;
        *retrains += 1;
        Ok::<_, Error>(scorer)
    };
    let mut scorer = fit(pools, &view, &mut retrains)?;
    let score_x = |scorer: &Box<dyn crate::backend::Scorer>, view: &[usize]| {
        let projected: Vec<f64> = view.iter().map(|&c| x[c]).collect();
        scorer.score(ndarray::ArrayView1::from(&projected))
    };

    loop {
        let (t_e, t_a) = thresholds.for_modality(j);
        let mut labels_this_modality = 0usize;

        // label-query phase: reduce epistemic uncertainty
        let mut score = score_x(&scorer, &view)?;
        while score.eu >= t_e {
            if budgets.max_total_labels.is_some_and(|cap| total_labels >= cap) {
                steps.push(AlfaStep {
                    modality: j,
                    n_labeled: pools.labeled().len(),
                    eu: score.eu,
                    au: Some(score.au),
                    action: AlfaAction::Abort,
                    cumulative_cost: label_cost + modality_cost,
                });
                return Ok(AlfaTrace {
                    steps,
                    outcome: AlfaOutcome::BudgetExhausted(score.predicted),
                    label_cost,
                    modality_cost,
                });
            }
            let modality_capped = budgets
                .max_labels_per_modality
                .is_some_and(|cap| labels_this_modality >= cap);
            if modality_capped || pools.unlabeled().is_empty() {
                break; // nothing more to learn here; let the AU check decide
            }
            let pos = select_query(x, pools, &view, strategy, &mut rng)
                .map_err(Error::Alfa)?;
            let active: u32 = (1 << j) - 1;
            pools.query(pos, active);
            total_labels += 1;
            labels_this_modality += 1;
            label_cost += budgets.label_cost;
            scorer = fit(pools, &view, &mut retrains)?;
            steps.push(AlfaStep {
                modality: j,
                n_labeled: pools.labeled().len(),
                eu: score.eu,
                au: None,
                action: AlfaAction::QueryLabel,
                cumulative_cost: label_cost + modality_cost,
            });
            score = score_x(&scorer, &view)?;
        }

        // acquisition decision: is the feature space rich enough?
        if score.au < t_a {
            let reliable = score.eu < t_e && score.au < t_a;
            steps.push(AlfaStep {
                modality: j,
                n_labeled: pools.labeled().len(),
                eu: score.eu,
                au: Some(score.au),
                action: AlfaAction::Predict,
                cumulative_cost: label_cost + modality_cost,
            });
            let outcome = if reliable {
                AlfaOutcome::Reliable(score.predicted)
            } else {
                AlfaOutcome::BudgetExhausted(score.predicted)
            };
            return Ok(AlfaTrace {
                steps,
                outcome,
                label_cost,
                modality_cost,
            });
        }
        if j == mu {
            steps.push(AlfaStep {
                modality: j,
                n_labeled: pools.labeled().len(),
                eu: score.eu,
                au: Some(score.au),
                action: AlfaAction::Abort,
                cumulative_cost: label_cost + modality_cost,
            });
            return Ok(AlfaTrace {
                steps,
                outcome: AlfaOutcome::BudgetExhausted(score.predicted),
                label_cost,
                modality_cost,
            });
        }
        j += 1;
        view = modality_view(modalities, j);
        modality_cost += modalities[j - 1].cost;
        pools.mark_acquired(1 << (j - 1));
        scorer = fit(pools, &view, &mut retrains)?;
        steps.push(AlfaStep {
            modality: j,
            n_labeled: pools.labeled().len(),
            eu: score.eu,
            au: Some(score.au),
            action: AlfaAction::AcquireModality,
            cumulative_cost: label_cost + modality_cost,
        });
    }
}
