//! The per-participant game protocol as a deterministic state machine.
//!
//! A session walks through
//! `Instructions -> (Choice -> Progress -> [Attention | Feedback])* -> Survey -> Done`.
//! Feedback follows every even trial, attention checks follow trials 3
//! and 7. Every operation either succeeds and mutates the session, or
//! fails and leaves it untouched. Timestamps are supplied by the caller;
//! mandated delays are checked and recorded as [`TimingFlag`]s, never
//! enforced by rejection.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cfe::{compute_cfe, CfeConfig, Counterfactual};
use crate::data::{MAX_GROWTH, MIN_GROWTH};
use crate::error::GameError;
use crate::plant::{Experiment, PlantVector, NUM_PLANTS};
use crate::survey::{items_for, SurveyItem, SurveyResponse};
use crate::tree::GrowthModel;

pub const TRIALS: u8 = 12;
pub const INITIAL_PACK: u32 = 20;
pub const MIN_PACK: u32 = 2;
pub const ATTENTION_AFTER: [u8; 2] = [3, 7];
pub const MAX_DELTA: i32 = 10;
pub const NEAR_OPTIMAL_MESSAGE: &str =
    "Your choice was already close to the best possible choice in this round.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Control,
    Cfe,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Condition::Control => "control",
            Condition::Cfe => "cfe",
        })
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "control" => Ok(Condition::Control),
            "cfe" => Ok(Condition::Cfe),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Instructions,
    Choice,
    Progress,
    Feedback,
    Attention,
    Survey,
    Done,
}

/// Scene delays in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timings {
    pub start_delay_s: u32,
    pub continue_delay_s: u32,
    pub progress_s: u32,
}

impl Default for Timings {
    fn default() -> Self {
        Timings {
            start_delay_s: 20,
            continue_delay_s: 10,
            progress_s: 3,
        }
    }
}

/// What the CFE condition shows for one trial of a feedback block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CfeOutcome {
    Suggestion(Counterfactual),
    NearOptimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u8,
    /// Canonical plant order, independent of the display permutation.
    pub choice: PlantVector,
    pub growth: f64,
    pub delta: i32,
    pub pack_before: u32,
    pub pack_after: u32,
    pub decision_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfe_shown: Option<CfeOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub after_trial: u8,
    pub answer: i64,
    pub correct: bool,
}

/// A scene was left before its mandated delay elapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingFlag {
    pub phase: Phase,
    pub elapsed_ms: u64,
    pub required_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub condition: Condition,
    pub experiment: Experiment,
    /// `plant_display_order[slot]` is the canonical plant (1-based) shown in `slot`.
    pub plant_display_order: [u8; NUM_PLANTS],
    pub pack_size: u32,
    /// The trial to be played next (stays at 12 once the last trial is done).
    pub trial_index: u8,
    pub phase: Phase,
    pub trials: Vec<TrialRecord>,
    pub attention: Vec<AttentionRecord>,
    pub survey: Option<SurveyResponse>,
    pub seed: u64,
    pub phase_entered_ms: u64,
    pub timing_flags: Vec<TimingFlag>,
}

impl Session {
    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Done
    }

    fn enter(&mut self, phase: Phase, now_ms: u64) {
        self.phase = phase;
        self.phase_entered_ms = now_ms;
    }

    fn check_delay(&mut self, required_s: u32, now_ms: u64) {
        let elapsed_ms = now_ms.saturating_sub(self.phase_entered_ms);
        let required_ms = u64::from(required_s) * 1000;
        if elapsed_ms < required_ms {
            self.timing_flags.push(TimingFlag {
                phase: self.phase,
                elapsed_ms,
                required_ms,
            });
        }
    }
}

/// Convert a growth rate in [0.1, 1.9] to a pack-size change in [-10, 10].
pub fn growth_to_delta(growth: f64) -> Result<i32, GameError> {
    if !(MIN_GROWTH - 1e-9..=MAX_GROWTH + 1e-9).contains(&growth) {
        return Err(GameError::GrowthOutOfRange(growth));
    }
    // Half away from zero; the slack keeps decimal half-way inputs such as
    // 1.045 from landing just below .5 after subtraction.
    let x = (growth - 1.0) / 0.09;
    let delta = (x.signum() * (x.abs() + 0.5 + 1e-9).floor()) as i32;
    Ok(delta.clamp(-MAX_DELTA, MAX_DELTA))
}

pub fn apply_delta(pack: u32, delta: i32) -> u32 {
    (pack as i64 + delta as i64).max(MIN_PACK as i64) as u32
}

/// Recompute the final pack size from a trial log.
pub fn replay_pack(trials: &[TrialRecord]) -> Result<u32, GameError> {
    let mut pack = INITIAL_PACK;
    for t in trials {
        pack = apply_delta(pack, growth_to_delta(t.growth)?);
    }
    Ok(pack)
}

/// Where a session goes once the progress scene after `trial` ends.
fn phase_after_trial(trial: u8) -> Phase {
    if trial.is_multiple_of(2) {
        Phase::Feedback
    } else if ATTENTION_AFTER.contains(&trial) {
        Phase::Attention
    } else {
        Phase::Choice
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CfeFeedback {
    Suggestion {
        suggestion: PlantVector,
        predicted_growth: f64,
        distance: u32,
    },
    NearOptimal {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub trial: u8,
    pub choice: PlantVector,
    pub delta: i32,
    pub pack_before: u32,
    pub pack_after: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfe: Option<CfeFeedback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackBlock {
    pub entries: Vec<FeedbackEntry>,
    pub continue_delay_s: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreviousTrial {
    pub trial: u8,
    pub choice: PlantVector,
    pub pack_before: u32,
    pub pack_after: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scene {
    Instructions {
        start_delay_s: u32,
    },
    Choice {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        previous: Option<PreviousTrial>,
    },
    Progress {
        duration_s: u32,
        previous: PreviousTrial,
    },
    Feedback {
        continue_delay_s: u32,
    },
    Attention {
        after_trial: u8,
    },
    Survey {
        items: Vec<SurveyItem>,
    },
    Payout,
}

/// Client-facing description of the scene a session is in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescriptor {
    #[serde(flatten)]
    pub scene: Scene,
    pub trial: u8,
    pub pack_size: u32,
    pub plant_display_order: [u8; NUM_PLANTS],
}

/// Everything a session needs besides its own state: the frozen model,
/// CFE settings and scene timings. Shared read-only between sessions.
#[derive(Debug, Clone)]
pub struct GameEngine {
    model: Arc<GrowthModel>,
    cfe: CfeConfig,
    timings: Timings,
}

impl GameEngine {
    pub fn new(
        model: Arc<GrowthModel>,
        cfe: CfeConfig,
        timings: Timings,
    ) -> Result<Self, GameError> {
        cfe.validate().map_err(GameError::Config)?;
        if timings.start_delay_s == 0 || timings.continue_delay_s == 0 || timings.progress_s == 0 {
            return Err(GameError::Config("timings must be positive".into()));
        }
        Ok(GameEngine {
            model,
            cfe,
            timings,
        })
    }

    pub fn model(&self) -> &GrowthModel {
        &self.model
    }

    pub fn experiment(&self) -> Experiment {
        self.model.experiment()
    }

    pub fn cfe_config(&self) -> &CfeConfig {
        &self.cfe
    }

    pub fn timings(&self) -> &Timings {
        &self.timings
    }

    pub fn create_session(
        &self,
        id: impl Into<String>,
        condition: Condition,
        seed: u64,
        now_ms: u64,
    ) -> Session {
        let mut order = [1u8, 2, 3, 4, 5];
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Session {
            id: id.into(),
            condition,
            experiment: self.experiment(),
            plant_display_order: order,
            pack_size: INITIAL_PACK,
            trial_index: 1,
            phase: Phase::Instructions,
            trials: Vec::new(),
            attention: Vec::new(),
            survey: None,
            seed,
            phase_entered_ms: now_ms,
            timing_flags: Vec::new(),
        }
    }

    /// Start / continue button: leaves instructions, progress or feedback.
    pub fn advance(&self, s: &mut Session, now_ms: u64) -> Result<SceneDescriptor, GameError> {
        let next = match s.phase {
            Phase::Instructions => {
                s.check_delay(self.timings.start_delay_s, now_ms);
                Phase::Choice
            }
            Phase::Progress => {
                s.check_delay(self.timings.progress_s, now_ms);
                phase_after_trial(s.trials.last().map_or(0, |t| t.trial))
            }
            Phase::Feedback => {
                s.check_delay(self.timings.continue_delay_s, now_ms);
                if s.trials.len() == TRIALS as usize {
                    Phase::Survey
                } else {
                    Phase::Choice
                }
            }
            phase => {
                return Err(GameError::WrongPhase {
                    operation: "advance",
                    phase,
                })
            }
        };
        s.enter(next, now_ms);
        Ok(self.scene_descriptor(s))
    }

    /// "Feeding time!": score the choice and move to the progress scene.
    pub fn submit_feeding(
        &self,
        s: &mut Session,
        choice: PlantVector,
        decision_time_ms: u64,
        now_ms: u64,
    ) -> Result<TrialRecord, GameError> {
        if s.phase != Phase::Choice || s.trials.len() >= TRIALS as usize {
            return Err(GameError::WrongPhase {
                operation: "feed",
                phase: s.phase,
            });
        }
        let trial = s.trials.len() as u8 + 1;
        let growth = self.model.predict_plants(&choice);
        let delta = growth_to_delta(growth)?;
        let pack_before = s.pack_size;
        let pack_after = apply_delta(pack_before, delta);
        s.trials.push(TrialRecord {
            trial,
            choice,
            growth,
            delta,
            pack_before,
            pack_after,
            decision_time_ms,
            cfe_shown: None,
        });
        if trial.is_multiple_of(2) && s.condition == Condition::Cfe {
            let n = s.trials.len();
            for t in &mut s.trials[n - 2..] {
                t.cfe_shown = Some(match compute_cfe(&self.model, &t.choice, &self.cfe) {
                    Some(c) => CfeOutcome::Suggestion(c),
                    None => CfeOutcome::NearOptimal,
                });
            }
        }
        s.pack_size = pack_after;
        s.trial_index = (trial + 1).min(TRIALS);
        s.enter(Phase::Progress, now_ms);
        Ok(s.trials.last().cloned().expect("just pushed"))
    }

    pub fn feedback_payload(&self, s: &Session) -> Result<FeedbackBlock, GameError> {
        if s.phase != Phase::Feedback {
            return Err(GameError::WrongPhase {
                operation: "feedback",
                phase: s.phase,
            });
        }
        let n = s.trials.len();
        let entries = s.trials[n.saturating_sub(2)..]
            .iter()
            .map(|t| FeedbackEntry {
                trial: t.trial,
                choice: t.choice,
                delta: t.delta,
                pack_before: t.pack_before,
                pack_after: t.pack_after,
                cfe: match (s.condition, t.cfe_shown) {
                    (Condition::Control, _) | (_, None) => None,
                    (Condition::Cfe, Some(CfeOutcome::Suggestion(c))) => {
                        Some(CfeFeedback::Suggestion {
                            suggestion: c.suggestion,
                            predicted_growth: c.predicted_growth,
                            distance: c.distance,
                        })
                    }
                    (Condition::Cfe, Some(CfeOutcome::NearOptimal)) => {
                        Some(CfeFeedback::NearOptimal {
                            message: NEAR_OPTIMAL_MESSAGE.to_string(),
                        })
                    }
                },
            })
            .collect();
        Ok(FeedbackBlock {
            entries,
            continue_delay_s: self.timings.continue_delay_s,
        })
    }

    pub fn submit_attention(
        &self,
        s: &mut Session,
        answer: i64,
        now_ms: u64,
    ) -> Result<AttentionRecord, GameError> {
        if s.phase != Phase::Attention {
            return Err(GameError::WrongPhase {
                operation: "attention",
                phase: s.phase,
            });
        }
        let record = AttentionRecord {
            after_trial: s.trials.last().map_or(0, |t| t.trial),
            answer,
            correct: answer == s.pack_size as i64,
        };
        s.attention.push(record);
        s.enter(Phase::Choice, now_ms);
        Ok(record)
    }

    pub fn submit_survey(
        &self,
        s: &mut Session,
        response: SurveyResponse,
        now_ms: u64,
    ) -> Result<(), GameError> {
        if s.phase != Phase::Survey {
            return Err(GameError::WrongPhase {
                operation: "survey",
                phase: s.phase,
            });
        }
        response.validate()?;
        s.survey = Some(response);
        s.enter(Phase::Done, now_ms);
        Ok(())
    }

    pub fn scene_descriptor(&self, s: &Session) -> SceneDescriptor {
        let previous = s.trials.last().map(|t| PreviousTrial {
            trial: t.trial,
            choice: t.choice,
            pack_before: t.pack_before,
            pack_after: t.pack_after,
        });
        let scene = match s.phase {
            Phase::Instructions => Scene::Instructions {
                start_delay_s: self.timings.start_delay_s,
            },
            Phase::Choice => Scene::Choice { previous },
            Phase::Progress => Scene::Progress {
                duration_s: self.timings.progress_s,
                previous: previous.expect("progress follows a trial"),
            },
            Phase::Feedback => Scene::Feedback {
                continue_delay_s: self.timings.continue_delay_s,
            },
            Phase::Attention => Scene::Attention {
                after_trial: s.trials.last().map_or(0, |t| t.trial),
            },
            Phase::Survey => Scene::Survey {
                items: items_for(s.condition),
            },
            Phase::Done => Scene::Payout,
        };
        SceneDescriptor {
            scene,
            trial: s.trial_index,
            pack_size: s.pack_size,
            plant_display_order: s.plant_display_order,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_grid;
    use crate::survey::{AgeBand, Gender, LikertAnswer, PlantSelection, LIKERT_ITEMS};
    use crate::tree::fit_tree;

    fn engine() -> GameEngine {
        let model = fit_tree(&generate_grid(Experiment::Exp2, 1).unwrap(), 12, 5).unwrap();
        GameEngine::new(Arc::new(model), CfeConfig::default(), Timings::default()).unwrap()
    }

    fn pv(v: [u8; 5]) -> PlantVector {
        PlantVector::new(v).unwrap()
    }

    fn survey() -> SurveyResponse {
        SurveyResponse {
            relevant_plants: Some(PlantSelection::plants([2, 4])),
            irrelevant_plants: Some(PlantSelection::plants([1, 3, 5])),
            likert: LIKERT_ITEMS
                .map(|i| {
                    (
                        i,
                        if i == 7 {
                            LikertAnswer::PreferNotToAnswer
                        } else {
                            LikertAnswer::Score(3)
                        },
                    )
                })
                .collect(),
            age_band: Some(AgeBand::From35To44),
            gender: Some(Gender::NotListed),
        }
    }

    #[test]
    fn delta_map() {
        assert_eq!(growth_to_delta(0.1).unwrap(), -10);
        assert_eq!(growth_to_delta(1.0).unwrap(), 0);
        assert_eq!(growth_to_delta(1.9).unwrap(), 10);
        assert_eq!(growth_to_delta(1.18).unwrap(), 2);
        assert_eq!(growth_to_delta(1.045).unwrap(), 1);
        assert_eq!(growth_to_delta(0.955).unwrap(), -1);
        assert!(growth_to_delta(0.05).is_err());
        assert!(growth_to_delta(2.0).is_err());
    }

    #[test]
    fn fresh_session() {
        let e = engine();
        let a = e.create_session("a", Condition::Cfe, 17, 0);
        let b = e.create_session("b", Condition::Cfe, 17, 0);
        assert_eq!(a.plant_display_order, b.plant_display_order);
        let mut sorted = a.plant_display_order;
        sorted.sort();
        assert_eq!(sorted, [1, 2, 3, 4, 5]);
        assert_eq!(a.pack_size, 20);
        assert_eq!(a.condition, Condition::Cfe);
        assert_eq!(a.phase, Phase::Instructions);
        let scene = e.scene_descriptor(&a);
        assert_eq!(scene.scene, Scene::Instructions { start_delay_s: 20 });
    }

    #[test]
    fn floor_and_pack_update() {
        let e = engine();
        let mut s = e.create_session("s", Condition::Control, 1, 0);
        e.advance(&mut s, 20_000).unwrap();
        let r = e.submit_feeding(&mut s, pv([0; 5]), 3000, 23_000).unwrap();
        assert_eq!((r.pack_before, r.pack_after, r.delta), (20, 10, -10));
        assert_eq!(
            e.scene_descriptor(&s).scene,
            Scene::Progress {
                duration_s: 3,
                previous: PreviousTrial {
                    trial: 1,
                    choice: pv([0; 5]),
                    pack_before: 20,
                    pack_after: 10
                },
            }
        );
        assert_eq!(apply_delta(2, -10), 2);
    }

    #[test]
    fn wrong_phase_leaves_session_untouched() {
        let e = engine();
        let mut s = e.create_session("s", Condition::Cfe, 1, 0);
        let before = s.clone();
        assert!(matches!(
            e.submit_feeding(&mut s, pv([0; 5]), 1, 1),
            Err(GameError::WrongPhase { .. })
        ));
        assert!(e.submit_attention(&mut s, 20, 1).is_err());
        assert!(e.feedback_payload(&s).is_err());
        assert!(e.submit_survey(&mut s, survey(), 1).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn full_session_walks_the_protocol() {
        let e = engine();
        for condition in [Condition::Control, Condition::Cfe] {
            let mut s = e.create_session("s", condition, 5, 0);
            let mut now = 0;
            now += 20_000;
            e.advance(&mut s, now).unwrap();
            let mut feedback_after = Vec::new();
            let mut attention_after = Vec::new();
            for t in 1..=12u8 {
                assert_eq!(s.phase, Phase::Choice);
                let choice = if t <= 2 {
                    pv([0; 5])
                } else {
                    pv([0, 5, 0, 1, 0])
                };
                now += 4000;
                e.submit_feeding(&mut s, choice, 4000, now).unwrap();
                now += 3000;
                e.advance(&mut s, now).unwrap();
                match s.phase {
                    Phase::Feedback => {
                        feedback_after.push(t);
                        let block = e.feedback_payload(&s).unwrap();
                        assert_eq!(block.entries.len(), 2);
                        assert_eq!(block.entries[1].trial, t);
                        let json = serde_json::to_string(&block).unwrap();
                        match condition {
                            Condition::Control => assert!(!json.contains("cfe")),
                            Condition::Cfe => {
                                assert!(block.entries.iter().all(|x| x.cfe.is_some()))
                            }
                        }
                        now += 10_000;
                        e.advance(&mut s, now).unwrap();
                    }
                    Phase::Attention => {
                        attention_after.push(t);
                        let pack = s.pack_size as i64;
                        let rec = e.submit_attention(&mut s, pack, now).unwrap();
                        assert!(rec.correct);
                    }
                    Phase::Choice => {}
                    other => panic!("unexpected phase {other:?}"),
                }
            }
            assert_eq!(feedback_after, vec![2, 4, 6, 8, 10, 12]);
            assert_eq!(attention_after, vec![3, 7]);
            assert_eq!(s.phase, Phase::Survey);
            assert!(s.timing_flags.is_empty());
            assert_eq!(replay_pack(&s.trials).unwrap(), s.pack_size);
            e.submit_survey(&mut s, survey(), now).unwrap();
            assert_eq!(s.phase, Phase::Done);
            assert_eq!(e.scene_descriptor(&s).scene, Scene::Payout);
            if condition == Condition::Control {
                assert!(!serde_json::to_string(&s).unwrap().contains("cfe_shown"));
            } else {
                // Trials 3..=12 played the optimum: no suggestions there.
                assert!(s.trials[2..]
                    .iter()
                    .all(|t| t.cfe_shown == Some(CfeOutcome::NearOptimal)));
                assert!(matches!(
                    s.trials[0].cfe_shown,
                    Some(CfeOutcome::Suggestion(_))
                ));
            }
        }
    }

    #[test]
    fn attention_feedback_and_early_clicks() {
        let e = engine();
        let mut s = e.create_session("s", Condition::Control, 2, 0);
        e.advance(&mut s, 5_000).unwrap();
        assert_eq!(s.timing_flags.len(), 1);
        assert_eq!(s.timing_flags[0].phase, Phase::Instructions);
        for _ in 0..3 {
            e.submit_feeding(&mut s, pv([0; 5]), 2500, 0).unwrap();
            e.advance(&mut s, 0).unwrap();
            if s.phase == Phase::Feedback {
                e.advance(&mut s, 0).unwrap();
            }
        }
        assert_eq!(s.phase, Phase::Attention);
        assert_eq!(s.pack_size, 2);
        let rec = e.submit_attention(&mut s, 20, 0).unwrap();
        assert!(!rec.correct);
        assert_eq!(rec.after_trial, 3);
        assert_eq!(s.phase, Phase::Choice);
    }

    #[test]
    fn survey_validation_blocks_completion() {
        let e = engine();
        let mut s = e.create_session("s", Condition::Cfe, 3, 0);
        s.phase = Phase::Survey;
        let mut r = survey();
        r.likert.remove(&9);
        let err = e.submit_survey(&mut s, r, 0).unwrap_err();
        assert!(err.to_string().contains('9'));
        assert_eq!(s.phase, Phase::Survey);
        let mut r = survey();
        r.likert.insert(7, LikertAnswer::PreferNotToAnswer);
        e.submit_survey(&mut s, r, 0).unwrap();
        assert!(s.survey.as_ref().unwrap().catch_item_passed());
    }
}
