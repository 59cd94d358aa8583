//! Simulated participants.
//!
//! A bot sees what the web client would show at each scene (pack size, the
//! previous trial, the last feedback block) and nothing else. Sessions run
//! on a simulated clock that honours every mandated delay, so a clean bot
//! session carries no timing flags.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GameError;
use crate::game::{
    CfeFeedback, Condition, FeedbackBlock, GameEngine, Phase, Scene, SceneDescriptor, Session,
    TRIALS,
};
use crate::plant::{PlantVector, MAX_LEAVES, NUM_PLANTS};
use crate::survey::{
    AgeBand, Gender, LikertAnswer, PlantSelection, SurveyResponse, CATCH_ITEM, LIKERT_ITEMS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BotKind {
    Random,
    CfeFollower,
    Greedy,
    StraightLiner,
    Speeder,
}

impl std::str::FromStr for BotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "random" => Ok(BotKind::Random),
            "cfe-follower" => Ok(BotKind::CfeFollower),
            "greedy" => Ok(BotKind::Greedy),
            "straight-liner" | "straightliner" => Ok(BotKind::StraightLiner),
            "speeder" => Ok(BotKind::Speeder),
            other => Err(format!("unknown bot policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionStyle {
    Correct,
    Wrong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyStyle {
    /// Mixed valence, catch item answered as instructed.
    Varied,
    /// Every valence item at the top of the scale.
    AllPositive,
    /// Like `Varied` but the catch item is answered with "agree".
    CatchFail,
}

/// Uniform decision time range in milliseconds, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTimes {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl DecisionTimes {
    pub const FAST: DecisionTimes = DecisionTimes {
        min_ms: 500,
        max_ms: 1900,
    };
    pub const NORMAL: DecisionTimes = DecisionTimes {
        min_ms: 2500,
        max_ms: 8000,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotPolicy {
    pub kind: BotKind,
    pub decision_times: DecisionTimes,
    pub attention: AttentionStyle,
    pub survey: SurveyStyle,
    /// Vector played by a straight-liner.
    pub fixed_choice: PlantVector,
}

impl BotPolicy {
    pub fn new(kind: BotKind) -> Self {
        BotPolicy {
            kind,
            decision_times: if kind == BotKind::Speeder {
                DecisionTimes::FAST
            } else {
                DecisionTimes::NORMAL
            },
            attention: AttentionStyle::Correct,
            survey: SurveyStyle::Varied,
            fixed_choice: PlantVector::zeros(),
        }
    }

    /// The condition a cohort of this policy runs in unless told otherwise.
    pub fn default_condition(&self) -> Condition {
        match self.kind {
            BotKind::CfeFollower => Condition::Cfe,
            _ => Condition::Control,
        }
    }
}

/// What the client shows when a choice is due.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub scene: &'a SceneDescriptor,
    pub last_feedback: Option<&'a FeedbackBlock>,
}

/// Per-session bot state.
#[derive(Debug, Clone)]
pub struct Bot {
    policy: BotPolicy,
    rng: ChaCha8Rng,
    target: Option<PlantVector>,
    seen_block: u8,
    best: Option<PlantVector>,
    pending: Option<PlantVector>,
}

fn random_vector(rng: &mut impl Rng) -> PlantVector {
    let mut v = [0u8; NUM_PLANTS];
    for x in &mut v {
        *x = rng.random_range(0..=MAX_LEAVES);
    }
    PlantVector::new(v).expect("in range")
}

fn perturb(rng: &mut impl Rng, p: &PlantVector) -> PlantVector {
    let mut v = p.leaves();
    let i = rng.random_range(0..NUM_PLANTS);
    v[i] = match v[i] {
        0 => 1,
        MAX_LEAVES => MAX_LEAVES - 1,
        x if rng.random_bool(0.5) => x + 1,
        x => x - 1,
    };
    PlantVector::new(v).expect("stays in range")
}

impl Bot {
    pub fn new(policy: BotPolicy, condition: Condition, seed: u64) -> Result<Self, GameError> {
        if policy.kind == BotKind::CfeFollower && condition == Condition::Control {
            return Err(GameError::Config(
                "a CFE follower needs the CFE condition".into(),
            ));
        }
        let t = policy.decision_times;
        if t.min_ms > t.max_ms {
            return Err(GameError::Config(format!(
                "decision time range {}..={} is empty",
                t.min_ms, t.max_ms
            )));
        }
        Ok(Bot {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            target: None,
            seen_block: 0,
            best: None,
            pending: None,
        })
    }

    pub fn policy(&self) -> &BotPolicy {
        &self.policy
    }

    fn decision_time(&mut self) -> u64 {
        let t = self.policy.decision_times;
        self.rng.random_range(t.min_ms..=t.max_ms)
    }

    /// Next plant vector and how long the bot "thought" about it.
    pub fn next_choice(&mut self, obs: Observation<'_>) -> (PlantVector, u64) {
        let choice = match self.policy.kind {
            BotKind::Random | BotKind::Speeder => random_vector(&mut self.rng),
            BotKind::StraightLiner => self.policy.fixed_choice,
            BotKind::CfeFollower => self.follow(obs),
            BotKind::Greedy => self.climb(obs),
        };
        (choice, self.decision_time())
    }

    fn follow(&mut self, obs: Observation<'_>) -> PlantVector {
        if let Some(block) = obs.last_feedback {
            let block_trial = block.entries.last().map_or(0, |e| e.trial);
            if block_trial > self.seen_block {
                self.seen_block = block_trial;
                let latest = block.entries.iter().rev().find_map(|e| match &e.cfe {
                    Some(CfeFeedback::Suggestion { suggestion, .. }) => Some(*suggestion),
                    _ => None,
                });
                // Near-optimal everywhere: keep playing what was played.
                self.target = latest
                    .or(self.target)
                    .or(block.entries.last().map(|e| e.choice));
            }
        }
        match self.target {
            Some(t) => t,
            None => random_vector(&mut self.rng),
        }
    }

    /// Coordinate hill-climb: the first choice becomes the incumbent, and a
    /// one-leaf perturbation replaces it only if playing it grew the pack.
    fn climb(&mut self, obs: Observation<'_>) -> PlantVector {
        if let (
            Scene::Choice {
                previous: Some(prev),
            },
            Some(pending),
        ) = (&obs.scene.scene, self.pending)
        {
            if prev.choice == pending && (self.best.is_none() || prev.pack_after > prev.pack_before)
            {
                self.best = Some(pending);
            }
        }
        let next = match self.best {
            None => random_vector(&mut self.rng),
            Some(p) => perturb(&mut self.rng, &p),
        };
        self.pending = Some(next);
        next
    }

    pub fn attention_answer(&self, pack_size: u32) -> i64 {
        match self.policy.attention {
            AttentionStyle::Correct => i64::from(pack_size),
            AttentionStyle::Wrong => i64::from(pack_size) + 7,
        }
    }

    pub fn survey_answers(&mut self) -> SurveyResponse {
        let style = self.policy.survey;
        let mut likert = std::collections::BTreeMap::new();
        for i in LIKERT_ITEMS {
            let answer = match (i, style) {
                (CATCH_ITEM, SurveyStyle::CatchFail) => LikertAnswer::Score(4),
                (CATCH_ITEM, _) => LikertAnswer::PreferNotToAnswer,
                (_, SurveyStyle::AllPositive) => LikertAnswer::Score(5),
                // Items 3 and 4 pin down mixed valence.
                (3, _) => LikertAnswer::Score(2),
                (4, _) => LikertAnswer::Score(4),
                _ => LikertAnswer::Score(self.rng.random_range(1..=5)),
            };
            likert.insert(i, answer);
        }
        const AGES: [AgeBand; 6] = [
            AgeBand::From18To24,
            AgeBand::From25To34,
            AgeBand::From35To44,
            AgeBand::From45To54,
            AgeBand::From55To64,
            AgeBand::Over65,
        ];
        const GENDERS: [Gender; 4] = [
            Gender::Female,
            Gender::Male,
            Gender::NonBinary,
            Gender::PreferNotToAnswer,
        ];
        let relevant = match self.target {
            Some(t) => {
                PlantSelection::plants((1..=NUM_PLANTS as u8).filter(|&p| t.plant(p as usize) > 0))
            }
            None => PlantSelection::DontKnow,
        };
        SurveyResponse {
            relevant_plants: Some(relevant),
            irrelevant_plants: Some(PlantSelection::DontKnow),
            likert,
            age_band: Some(AGES[self.rng.random_range(0..AGES.len())]),
            gender: Some(GENDERS[self.rng.random_range(0..GENDERS.len())]),
        }
    }
}

/// Play one full session (12 trials and the survey) on a simulated clock
/// starting at 0 ms.
pub fn run_session(
    engine: &GameEngine,
    policy: BotPolicy,
    condition: Condition,
    id: impl Into<String>,
    seed: u64,
) -> Result<Session, GameError> {
    let mut bot = Bot::new(policy, condition, seed)?;
    let timings = *engine.timings();
    let mut now = 0u64;
    let mut s = engine.create_session(id, condition, seed, now);
    now += u64::from(timings.start_delay_s) * 1000 + bot.rng.random_range(0..3000);
    engine.advance(&mut s, now)?;
    let mut last_feedback: Option<FeedbackBlock> = None;
    loop {
        match s.phase {
            Phase::Choice => {
                let scene = engine.scene_descriptor(&s);
                let (choice, ms) = bot.next_choice(Observation {
                    scene: &scene,
                    last_feedback: last_feedback.as_ref(),
                });
                now += ms;
                engine.submit_feeding(&mut s, choice, ms, now)?;
                now += u64::from(timings.progress_s) * 1000;
                engine.advance(&mut s, now)?;
            }
            Phase::Attention => {
                now += bot.rng.random_range(1500..4000);
                let answer = bot.attention_answer(s.pack_size);
                engine.submit_attention(&mut s, answer, now)?;
            }
            Phase::Feedback => {
                last_feedback = Some(engine.feedback_payload(&s)?);
                now += u64::from(timings.continue_delay_s) * 1000 + bot.rng.random_range(0..5000);
                engine.advance(&mut s, now)?;
            }
            Phase::Survey => {
                now += bot.rng.random_range(60_000..180_000);
                let answers = bot.survey_answers();
                engine.submit_survey(&mut s, answers, now)?;
            }
            Phase::Done => break,
            phase @ (Phase::Instructions | Phase::Progress) => {
                return Err(GameError::WrongPhase {
                    operation: "bot",
                    phase,
                })
            }
        }
    }
    debug_assert_eq!(s.trials.len(), TRIALS as usize);
    Ok(s)
}

/// `n` sessions of one policy, each with its own seed drawn from `seed`.
pub fn run_cohort(
    engine: &GameEngine,
    policy: BotPolicy,
    condition: Condition,
    n: usize,
    seed: u64,
) -> Result<Vec<Session>, GameError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = serde_json::to_value(policy.kind)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    (0..n)
        .map(|i| {
            let session_seed: u64 = rng.random();
            run_session(
                engine,
                policy,
                condition,
                format!("{name}-{i:03}"),
                session_seed,
            )
        })
        .collect()
}
