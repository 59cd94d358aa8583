//! Data-quality screening, survey scoring and per-trial descriptives.
//!
//! Every flag is a pure function of a session log, so it gives the same
//! answer on a live [`Session`] and on one read back from CSV.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{GameError, StatsError};
use crate::game::{Condition, Session, TrialRecord, ATTENTION_AFTER, TRIALS};
use crate::plant::{Experiment, NUM_PLANTS};
use crate::survey::{LikertAnswer, PlantSelection, SurveyResponse, VALENCE_ITEMS};

pub const SPEEDER_THRESHOLD_MS: u64 = 2000;
pub const SPEEDER_MIN_TRIALS: usize = 4;
pub const STAGNANT_BLOCKS_MIN: usize = 3;

/// Read-only view of one participant's record.
pub trait SessionLog {
    fn session_id(&self) -> &str;
    fn condition(&self) -> Condition;
    fn experiment(&self) -> Experiment;
    fn trials(&self) -> &[TrialRecord];
    /// `(passed, answered)` attention checks.
    fn attention_outcomes(&self) -> (usize, usize);
    fn survey(&self) -> Option<&SurveyResponse>;
}

impl SessionLog for Session {
    fn session_id(&self) -> &str {
        &self.id
    }
    fn condition(&self) -> Condition {
        self.condition
    }
    fn experiment(&self) -> Experiment {
        self.experiment
    }
    fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }
    fn attention_outcomes(&self) -> (usize, usize) {
        (
            self.attention.iter().filter(|a| a.correct).count(),
            self.attention.len(),
        )
    }
    fn survey(&self) -> Option<&SurveyResponse> {
        self.survey.as_ref()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityFlags {
    pub speeder: bool,
    pub inattentive: bool,
    pub straightliner_game: bool,
    pub straightliner_survey: bool,
}

impl QualityFlags {
    pub fn any(&self) -> bool {
        self.speeder || self.inattentive || self.straightliner_game || self.straightliner_survey
    }
}

fn require_all_trials(s: &impl SessionLog) -> Result<&[TrialRecord], GameError> {
    let trials = s.trials();
    if trials.len() != TRIALS as usize {
        return Err(GameError::Incomplete("fewer than 12 trials"));
    }
    Ok(trials)
}

fn require_survey(s: &impl SessionLog) -> Result<&SurveyResponse, GameError> {
    s.survey().ok_or(GameError::Incomplete("no survey"))
}

pub fn flag_speeder(s: &impl SessionLog) -> Result<bool, GameError> {
    let fast = require_all_trials(s)?
        .iter()
        .filter(|t| t.decision_time_ms < SPEEDER_THRESHOLD_MS)
        .count();
    Ok(fast >= SPEEDER_MIN_TRIALS)
}

/// Both attention checks wrong, or the catch item not answered as instructed.
pub fn flag_inattentive(s: &impl SessionLog) -> Result<bool, GameError> {
    require_all_trials(s)?;
    let survey = require_survey(s)?;
    let (passed, answered) = s.attention_outcomes();
    if answered < ATTENTION_AFTER.len() {
        return Err(GameError::Incomplete("attention checks unanswered"));
    }
    Ok(passed == 0 || !survey.catch_item_passed())
}

/// Number of blocks 2..=6 that repeat both choices of the previous block
/// without ending on a larger pack.
pub fn stagnant_blocks(trials: &[TrialRecord]) -> usize {
    let blocks = trials.len() / 2;
    (1..blocks)
        .filter(|&b| {
            let (prev, cur) = (&trials[2 * b - 2..2 * b], &trials[2 * b..2 * b + 2]);
            prev[0].choice == cur[0].choice
                && prev[1].choice == cur[1].choice
                && cur[1].pack_after <= prev[1].pack_after
        })
        .count()
}

pub fn flag_straightliner_game(s: &impl SessionLog) -> Result<bool, GameError> {
    Ok(stagnant_blocks(require_all_trials(s)?) >= STAGNANT_BLOCKS_MIN)
}

/// All answered valence items on one side of the scale. "Prefer not to
/// answer" is left out; a survey with nothing left counts as flagged.
pub fn flag_straightliner_survey(s: &impl SessionLog) -> Result<bool, GameError> {
    let survey = require_survey(s)?;
    let scores: Vec<u8> = VALENCE_ITEMS
        .iter()
        .filter_map(|i| match survey.likert.get(i) {
            Some(LikertAnswer::Score(v)) => Some(*v),
            _ => None,
        })
        .collect();
    Ok(scores.iter().all(|v| (4..=5).contains(v)) || scores.iter().all(|v| (1..=2).contains(v)))
}

pub fn compute_flags(s: &impl SessionLog) -> Result<QualityFlags, GameError> {
    Ok(QualityFlags {
        speeder: flag_speeder(s)?,
        inattentive: flag_inattentive(s)?,
        straightliner_game: flag_straightliner_game(s)?,
        straightliner_survey: flag_straightliner_survey(s)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Relevant,
    Irrelevant,
}

/// Plants (out of 5) whose membership in `selection` matches the truth for
/// the item. "Don't know" scores as an empty selection.
pub fn match_score(selection: &PlantSelection, kind: ItemKind, experiment: Experiment) -> u8 {
    let relevant: BTreeSet<u8> = experiment.relevant_plants().iter().copied().collect();
    let chosen = selection.selected();
    (1..=NUM_PLANTS as u8)
        .filter(|p| {
            let truth = match kind {
                ItemKind::Relevant => relevant.contains(p),
                ItemKind::Irrelevant => !relevant.contains(p),
            };
            truth == chosen.contains(p)
        })
        .count() as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummaryRow {
    pub condition: Condition,
    pub trial: u8,
    pub n: usize,
    pub mean_pack: f64,
    /// `None` when fewer than two sessions contribute.
    pub sem_pack: Option<f64>,
    pub mean_decision_ms: f64,
    pub sem_decision_ms: Option<f64>,
}

fn mean_sem(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Sessions that are complete and carry no flag.
pub fn clean_sessions<S: SessionLog>(sessions: &[S]) -> Vec<&S> {
    sessions
        .iter()
        .filter(|s| compute_flags(*s).is_ok_and(|f| !f.any()))
        .collect()
}

/// Mean and standard error of pack size and decision time per condition
/// and trial, over clean sessions only.
pub fn per_trial_summary<S: SessionLog>(
    sessions: &[S],
) -> Result<Vec<TrialSummaryRow>, StatsError> {
    let clean = clean_sessions(sessions);
    if clean.is_empty() {
        return Err(StatsError::NoSessions);
    }
    let mut by_key: BTreeMap<(Condition, u8), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in clean {
        for t in s.trials() {
            let e = by_key.entry((s.condition(), t.trial)).or_default();
            e.0.push(f64::from(t.pack_after));
            e.1.push(t.decision_time_ms as f64);
        }
    }
    Ok(by_key
        .into_iter()
        .map(|((condition, trial), (pack, time))| {
            let (mean_pack, sem_pack) = mean_sem(&pack);
            let (mean_decision_ms, sem_decision_ms) = mean_sem(&time);
            TrialSummaryRow {
                condition,
                trial,
                n: pack.len(),
                mean_pack,
                sem_pack,
                mean_decision_ms,
                sem_decision_ms,
            }
        })
        .collect())
}
