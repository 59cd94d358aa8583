//! Post-game questionnaire: response types, validation and the item table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::GameError;
use crate::game::Condition;

/// The attention-check item; the only accepted answer is "prefer not to answer".
pub const CATCH_ITEM: u8 = 7;
pub const LIKERT_ITEMS: std::ops::RangeInclusive<u8> = 3..=10;
/// Likert items that carry a valence (everything but the catch item).
pub const VALENCE_ITEMS: [u8; 7] = [3, 4, 5, 6, 8, 9, 10];

const DONT_KNOW: &str = "dont_know";
const PREFER_NOT: &str = "prefer_not_to_answer";

/// Answer to the "which plants were (not) relevant" items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlantSelection {
    DontKnow,
    /// Canonical plant numbers 1..=5.
    Plants(BTreeSet<u8>),
}

impl PlantSelection {
    pub fn plants(items: impl IntoIterator<Item = u8>) -> Self {
        PlantSelection::Plants(items.into_iter().collect())
    }

    /// Selected plants, with "don't know" read as nothing selected.
    pub fn selected(&self) -> BTreeSet<u8> {
        match self {
            PlantSelection::DontKnow => BTreeSet::new(),
            PlantSelection::Plants(p) => p.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawSelection {
    Plants(Vec<u8>),
    Label(String),
}

impl Serialize for PlantSelection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PlantSelection::DontKnow => RawSelection::Label(DONT_KNOW.into()),
            PlantSelection::Plants(p) => RawSelection::Plants(p.iter().copied().collect()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PlantSelection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RawSelection::deserialize(d)? {
            RawSelection::Plants(p) => Ok(PlantSelection::plants(p)),
            RawSelection::Label(l) if l == DONT_KNOW => Ok(PlantSelection::DontKnow),
            RawSelection::Label(l) => Err(serde::de::Error::custom(format!(
                "expected a list of plants or `{DONT_KNOW}`, got `{l}`"
            ))),
        }
    }
}

/// 1 = strongly disagree ... 5 = strongly agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikertAnswer {
    Score(u8),
    PreferNotToAnswer,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawLikert {
    Score(u8),
    Label(String),
}

impl Serialize for LikertAnswer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LikertAnswer::Score(v) => RawLikert::Score(*v),
            LikertAnswer::PreferNotToAnswer => RawLikert::Label(PREFER_NOT.into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LikertAnswer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RawLikert::deserialize(d)? {
            RawLikert::Score(v) => Ok(LikertAnswer::Score(v)),
            RawLikert::Label(l) if l == PREFER_NOT => Ok(LikertAnswer::PreferNotToAnswer),
            RawLikert::Label(l) => Err(serde::de::Error::custom(format!(
                "expected 1..=5 or `{PREFER_NOT}`, got `{l}`"
            ))),
        }
    }
}

impl LikertAnswer {
    /// CSV cell: the score, or `PNA`.
    pub fn code(&self) -> String {
        match self {
            LikertAnswer::Score(v) => v.to_string(),
            LikertAnswer::PreferNotToAnswer => "PNA".into(),
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "PNA" => Some(LikertAnswer::PreferNotToAnswer),
            other => other
                .parse::<u8>()
                .ok()
                .filter(|v| (1..=5).contains(v))
                .map(LikertAnswer::Score),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "18-24")]
    From18To24,
    #[serde(rename = "25-34")]
    From25To34,
    #[serde(rename = "35-44")]
    From35To44,
    #[serde(rename = "45-54")]
    From45To54,
    #[serde(rename = "55-64")]
    From55To64,
    #[serde(rename = "65+")]
    Over65,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    TransgenderFemale,
    TransgenderMale,
    NonBinary,
    NotListed,
    PreferNotToAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SurveyResponse {
    /// Item 1.
    #[serde(default)]
    pub relevant_plants: Option<PlantSelection>,
    /// Item 2.
    #[serde(default)]
    pub irrelevant_plants: Option<PlantSelection>,
    /// Items 3..=10, keyed by item number. Item 7 is the catch item.
    #[serde(default, deserialize_with = "likert_keys")]
    pub likert: BTreeMap<u8, LikertAnswer>,
    #[serde(default)]
    pub age_band: Option<AgeBand>,
    #[serde(default)]
    pub gender: Option<Gender>,
}

/// Map keys arrive as strings in JSON, including through flattened or
/// buffered content.
fn likert_keys<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> Result<BTreeMap<u8, LikertAnswer>, D::Error> {
    BTreeMap::<String, LikertAnswer>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<u8>()
                .map(|k| (k, v))
                .map_err(|_| serde::de::Error::custom(format!("unknown item `{k}`")))
        })
        .collect()
}

impl SurveyResponse {
    pub fn validate(&self) -> Result<(), GameError> {
        let mut missing = Vec::new();
        for (id, sel) in [("1", &self.relevant_plants), ("2", &self.irrelevant_plants)] {
            match sel {
                None => missing.push(id.to_string()),
                Some(PlantSelection::Plants(p)) if p.is_empty() => missing.push(id.to_string()),
                Some(PlantSelection::Plants(p)) => {
                    if let Some(bad) = p.iter().find(|&&v| !(1..=5).contains(&v)) {
                        return Err(GameError::InvalidSurvey(format!(
                            "item {id}: plant {bad} does not exist"
                        )));
                    }
                }
                Some(PlantSelection::DontKnow) => {}
            }
        }
        if let Some(extra) = self.likert.keys().find(|k| !LIKERT_ITEMS.contains(k)) {
            return Err(GameError::InvalidSurvey(format!("unknown item {extra}")));
        }
        for item in LIKERT_ITEMS {
            match self.likert.get(&item) {
                None => missing.push(item.to_string()),
                Some(LikertAnswer::Score(v)) if !(1..=5).contains(v) => {
                    return Err(GameError::InvalidSurvey(format!(
                        "item {item}: score {v} outside 1..=5"
                    )));
                }
                Some(_) => {}
            }
        }
        if self.age_band.is_none() {
            missing.push("age".into());
        }
        if self.gender.is_none() {
            missing.push("gender".into());
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(GameError::MissingSurveyItems(missing))
        }
    }

    pub fn catch_item_passed(&self) -> bool {
        self.likert.get(&CATCH_ITEM) == Some(&LikertAnswer::PreferNotToAnswer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    /// Five plant checkboxes plus "I do not know".
    PlantCheckboxes,
    /// Five-point agreement scale plus "I prefer not to answer".
    Likert,
    AgeBand,
    Gender,
}

/// One questionnaire item as a client should render it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub id: String,
    pub prompt: String,
    pub response: ResponseKind,
}

/// `{}` in a template is replaced by the feedback the participant saw.
struct ItemText {
    id: &'static str,
    template: &'static str,
    response: ResponseKind,
}

const OVERVIEW: &str = "the summary of my previous choices";
const SUGGESTION: &str = "the suggestions for better choices";

fn item_table() -> Vec<ItemText> {
    use ResponseKind::*;
    vec![
        ItemText {
            id: "1",
            template: "Which plants do you think helped your pack grow? Tick every plant you think mattered.",
            response: PlantCheckboxes,
        },
        ItemText {
            id: "2",
            template: "Which plants do you think made no difference to your pack? Tick every plant you think did not matter.",
            response: PlantCheckboxes,
        },
        ItemText { id: "3", template: "It was clear to me what {} meant.", response: Likert },
        ItemText { id: "4", template: "I needed help to make sense of {}.", response: Likert },
        ItemText { id: "5", template: "{} helped me grow my pack.", response: Likert },
        ItemText { id: "6", template: "I managed to use {} to grow my pack.", response: Likert },
        ItemText {
            id: "7",
            template: "Attention check: please answer this question with \"I prefer not to answer\".",
            response: Likert,
        },
        ItemText { id: "8", template: "Some of {} seemed contradictory.", response: Likert },
        ItemText { id: "9", template: "Most people would quickly get used to working with {}.", response: Likert },
        ItemText { id: "10", template: "{} arrived promptly and was efficient to use.", response: Likert },
        ItemText { id: "age", template: "What is your age?", response: AgeBand },
        ItemText { id: "gender", template: "Which term best describes your gender?", response: Gender },
    ]
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Item wording for one condition. Feedback-related items mention the kind
/// of feedback the participant actually received.
pub fn items_for(condition: Condition) -> Vec<SurveyItem> {
    let subject = match condition {
        Condition::Control => OVERVIEW,
        Condition::Cfe => SUGGESTION,
    };
    item_table()
        .into_iter()
        .map(|t| {
            let template = t.template;
            let prompt = if template.starts_with("{}") {
                template.replacen("{}", &capitalise(subject), 1)
            } else {
                template.replacen("{}", subject, 1)
            };
            SurveyItem {
                id: t.id.to_string(),
                prompt,
                response: t.response,
            }
        })
        .collect()
}
