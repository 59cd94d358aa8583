//! Long-format trial CSV and per-session survey CSV, plus readers that turn
//! them back into [`ExportedSession`]s for analysis.
//!
//! Sessions are written in `session_id` order and numbers use Rust's
//! shortest round-trip formatting, so the same store always exports the
//! same bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::DataError;
use crate::game::{Condition, TrialRecord, ATTENTION_AFTER, INITIAL_PACK, TRIALS};
use crate::plant::{Experiment, PlantVector, NUM_PLANTS};
use crate::quality::{compute_flags, match_score, ItemKind, SessionLog};
use crate::survey::{LikertAnswer, PlantSelection, SurveyResponse, LIKERT_ITEMS};

pub const LONG_HEADER: [&str; 19] = [
    "session_id",
    "condition",
    "experiment",
    "trial",
    "p1",
    "p2",
    "p3",
    "p4",
    "p5",
    "growth",
    "delta",
    "pack_size",
    "decision_time_ms",
    "attention_pass_count",
    "speeder",
    "inattentive",
    "straightliner_game",
    "straightliner_survey",
    "flagged",
];

fn survey_header() -> Vec<String> {
    let mut h: Vec<String> = ["session_id", "condition", "experiment"]
        .map(String::from)
        .to_vec();
    for prefix in ["relevant", "irrelevant"] {
        h.push(format!("{prefix}_dont_know"));
        h.extend((1..=NUM_PLANTS).map(|p| format!("{prefix}_p{p}")));
    }
    h.extend(LIKERT_ITEMS.map(|i| format!("item{i}")));
    h.extend(["age_band", "gender", "match_relevant", "match_irrelevant"].map(String::from));
    h
}

/// A session as recovered from the CSV exports.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedSession {
    pub session_id: String,
    pub condition: Condition,
    pub experiment: Experiment,
    pub trials: Vec<TrialRecord>,
    pub attention_pass_count: usize,
    pub survey: Option<SurveyResponse>,
}

impl SessionLog for ExportedSession {
    fn session_id(&self) -> &str {
        &self.session_id
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
    /// A check counts as answered once the trial after it was played.
    fn attention_outcomes(&self) -> (usize, usize) {
        let answered = ATTENTION_AFTER
            .iter()
            .filter(|&&t| (t as usize) < self.trials.len())
            .count();
        (self.attention_pass_count, answered)
    }
    fn survey(&self) -> Option<&SurveyResponse> {
        self.survey.as_ref()
    }
}

fn bool_cell(b: bool) -> String {
    u8::from(b).to_string()
}

fn sorted<S: SessionLog>(sessions: &[S]) -> Vec<&S> {
    let mut v: Vec<&S> = sessions.iter().collect();
    v.sort_by(|a, b| a.session_id().cmp(b.session_id()));
    v
}

/// One row per (session, trial). Flag columns are blank for sessions that
/// are not complete yet.
pub fn write_long_csv<S: SessionLog, W: Write>(sessions: &[S], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LONG_HEADER)?;
    for s in sorted(sessions) {
        let flags = compute_flags(s).ok();
        let flag_cells: [String; 5] = match flags {
            Some(f) => [
                bool_cell(f.speeder),
                bool_cell(f.inattentive),
                bool_cell(f.straightliner_game),
                bool_cell(f.straightliner_survey),
                bool_cell(f.any()),
            ],
            None => Default::default(),
        };
        let passed = s.attention_outcomes().0;
        for t in s.trials() {
            let mut row = vec![
                s.session_id().to_string(),
                s.condition().to_string(),
                s.experiment().number().to_string(),
                t.trial.to_string(),
            ];
            row.extend(t.choice.leaves().iter().map(|l| l.to_string()));
            row.extend([
                t.growth.to_string(),
                t.delta.to_string(),
                t.pack_after.to_string(),
                t.decision_time_ms.to_string(),
                passed.to_string(),
            ]);
            row.extend(flag_cells.iter().cloned());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per session that has a survey.
pub fn write_survey_csv<S: SessionLog, W: Write>(
    sessions: &[S],
    writer: W,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(survey_header())?;
    for s in sorted(sessions) {
        let Some(survey) = s.survey() else { continue };
        let mut row = vec![
            s.session_id().to_string(),
            s.condition().to_string(),
            s.experiment().number().to_string(),
        ];
        for sel in [&survey.relevant_plants, &survey.irrelevant_plants] {
            match sel {
                None => row.extend(std::iter::repeat_n(String::new(), NUM_PLANTS + 1)),
                Some(sel) => {
                    row.push(bool_cell(*sel == PlantSelection::DontKnow));
                    let chosen = sel.selected();
                    row.extend((1..=NUM_PLANTS as u8).map(|p| bool_cell(chosen.contains(&p))));
                }
            }
        }
        row.extend(LIKERT_ITEMS.map(|i| {
            survey
                .likert
                .get(&i)
                .map(LikertAnswer::code)
                .unwrap_or_default()
        }));
        row.push(survey.age_band.map(|a| enum_label(&a)).unwrap_or_default());
        row.push(survey.gender.map(|g| enum_label(&g)).unwrap_or_default());
        for (sel, kind) in [
            (&survey.relevant_plants, ItemKind::Relevant),
            (&survey.irrelevant_plants, ItemKind::Irrelevant),
        ] {
            row.push(
                sel.as_ref()
                    .map(|sel| match_score(sel, kind, s.experiment()).to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn enum_label<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum serialises to a string"),
    }
}

fn parse_label<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, DataError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| DataError::InvalidParameter(format!("unknown label `{s}`")))
}

fn bad(line: u64, what: impl std::fmt::Display) -> DataError {
    DataError::InvalidParameter(format!("line {line}: {what}"))
}

fn field<'a>(
    rec: &'a csv::StringRecord,
    idx: &BTreeMap<&str, usize>,
    name: &str,
    line: u64,
) -> Result<&'a str, DataError> {
    idx.get(name)
        .and_then(|&i| rec.get(i))
        .ok_or_else(|| bad(line, format!("missing column `{name}`")))
}

fn parse<T: std::str::FromStr>(s: &str, name: &str, line: u64) -> Result<T, DataError> {
    s.trim()
        .parse()
        .map_err(|_| bad(line, format!("cannot parse {name} `{s}`")))
}

fn header_index(headers: &csv::StringRecord) -> BTreeMap<&str, usize> {
    headers.iter().enumerate().map(|(i, h)| (h, i)).collect()
}

/// Rebuild sessions (without surveys) from a long-format export.
pub fn read_long_csv<R: Read>(reader: R) -> Result<Vec<ExportedSession>, DataError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let idx = header_index(&headers);
    let mut sessions: BTreeMap<String, ExportedSession> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |name: &str| field(&rec, &idx, name, line);
        let id = f("session_id")?.to_string();
        let condition: Condition = parse(f("condition")?, "condition", line)?;
        let experiment: Experiment = parse(f("experiment")?, "experiment", line)?;
        let mut leaves = [0i64; NUM_PLANTS];
        for (p, slot) in leaves.iter_mut().enumerate() {
            *slot = parse(f(&format!("p{}", p + 1))?, "leaves", line)?;
        }
        let session = sessions
            .entry(id.clone())
            .or_insert_with(|| ExportedSession {
                session_id: id,
                condition,
                experiment,
                trials: Vec::new(),
                attention_pass_count: 0,
                survey: None,
            });
        if session.condition != condition || session.experiment != experiment {
            return Err(bad(
                line,
                "condition or experiment changes within a session",
            ));
        }
        let trial: u8 = parse(f("trial")?, "trial", line)?;
        if usize::from(trial) != session.trials.len() + 1 || trial > TRIALS {
            return Err(bad(line, format!("trial {trial} out of sequence")));
        }
        session.attention_pass_count =
            parse(f("attention_pass_count")?, "attention_pass_count", line)?;
        let pack_before = session.trials.last().map_or(INITIAL_PACK, |t| t.pack_after);
        session.trials.push(TrialRecord {
            trial,
            choice: PlantVector::from_slice(&leaves)?,
            growth: parse(f("growth")?, "growth", line)?,
            delta: parse(f("delta")?, "delta", line)?,
            pack_before,
            pack_after: parse(f("pack_size")?, "pack_size", line)?,
            decision_time_ms: parse(f("decision_time_ms")?, "decision_time_ms", line)?,
            cfe_shown: None,
        });
    }
    Ok(sessions.into_values().collect())
}

fn parse_bool(s: &str, line: u64) -> Result<bool, DataError> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(bad(line, format!("expected 0 or 1, got `{other}`"))),
    }
}

/// Survey responses keyed by session id.
pub fn read_survey_csv<R: Read>(reader: R) -> Result<BTreeMap<String, SurveyResponse>, DataError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let idx = header_index(&headers);
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |name: &str| field(&rec, &idx, name, line);
        let mut selections = Vec::new();
        for prefix in ["relevant", "irrelevant"] {
            let dk = f(&format!("{prefix}_dont_know"))?;
            selections.push(if dk.trim().is_empty() {
                None
            } else if parse_bool(dk, line)? {
                Some(PlantSelection::DontKnow)
            } else {
                let mut chosen = Vec::new();
                for p in 1..=NUM_PLANTS as u8 {
                    if parse_bool(f(&format!("{prefix}_p{p}"))?, line)? {
                        chosen.push(p);
                    }
                }
                Some(PlantSelection::plants(chosen))
            });
        }
        let mut likert = BTreeMap::new();
        for i in LIKERT_ITEMS {
            let cell = f(&format!("item{i}"))?;
            if cell.trim().is_empty() {
                continue;
            }
            let answer = LikertAnswer::from_code(cell)
                .ok_or_else(|| bad(line, format!("bad answer `{cell}` for item {i}")))?;
            likert.insert(i, answer);
        }
        let optional = |name: &str| -> Result<Option<&str>, DataError> {
            let v = f(name)?.trim();
            Ok((!v.is_empty()).then_some(v))
        };
        let irrelevant_plants = selections.pop().flatten();
        let relevant_plants = selections.pop().flatten();
        let response = SurveyResponse {
            relevant_plants,
            irrelevant_plants,
            likert,
            age_band: optional("age_band")?.map(parse_label).transpose()?,
            gender: optional("gender")?.map(parse_label).transpose()?,
        };
        out.insert(f("session_id")?.to_string(), response);
    }
    Ok(out)
}

/// Long export joined with the survey export.
pub fn read_exports<R1: Read, R2: Read>(
    long: R1,
    survey: Option<R2>,
) -> Result<Vec<ExportedSession>, DataError> {
    let mut sessions = read_long_csv(long)?;
    if let Some(survey) = survey {
        let mut responses = read_survey_csv(survey)?;
        for s in &mut sessions {
            s.survey = responses.remove(&s.session_id);
        }
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::compute_flags;
    use crate::survey::{AgeBand, Gender};

    fn session(id: &str, fast: bool, catch_ok: bool) -> ExportedSession {
        let mut pack = INITIAL_PACK;
        let trials = (1..=TRIALS)
            .map(|trial| {
                let delta = if trial % 3 == 0 { -4 } else { 7 };
                let after = crate::game::apply_delta(pack, delta);
                let t = TrialRecord {
                    trial,
                    choice: PlantVector::new([trial % 7, 1, 2, 3, 4]).unwrap(),
                    growth: 1.0 + 0.09 * f64::from(delta) + 0.001,
                    delta,
                    pack_before: pack,
                    pack_after: after,
                    decision_time_ms: if fast { 700 } else { 3000 + u64::from(trial) },
                    cfe_shown: None,
                };
                pack = after;
                t
            })
            .collect();
        ExportedSession {
            session_id: id.into(),
            condition: if id.ends_with('a') {
                Condition::Control
            } else {
                Condition::Cfe
            },
            experiment: Experiment::Exp1,
            trials,
            attention_pass_count: 1,
            survey: Some(SurveyResponse {
                relevant_plants: Some(PlantSelection::plants([2, 4])),
                irrelevant_plants: Some(PlantSelection::DontKnow),
                likert: LIKERT_ITEMS
                    .map(|i| {
                        let a = match i {
                            7 if catch_ok => LikertAnswer::PreferNotToAnswer,
                            7 => LikertAnswer::Score(4),
                            4 => LikertAnswer::PreferNotToAnswer,
                            _ => LikertAnswer::Score(i % 5 + 1),
                        };
                        (i, a)
                    })
                    .collect(),
                age_band: Some(AgeBand::Over65),
                gender: Some(Gender::NonBinary),
            }),
        }
    }

    fn export(sessions: &[ExportedSession]) -> (String, String) {
        let mut long = Vec::new();
        let mut survey = Vec::new();
        write_long_csv(sessions, &mut long).unwrap();
        write_survey_csv(sessions, &mut survey).unwrap();
        (
            String::from_utf8(long).unwrap(),
            String::from_utf8(survey).unwrap(),
        )
    }

    #[test]
    fn round_trip_and_row_count() {
        let sessions = vec![session("s2b", false, true), session("s1a", true, false)];
        let (long, survey) = export(&sessions);
        assert_eq!(long.lines().count(), 1 + 24);
        assert_eq!(survey.lines().count(), 1 + 2);
        assert!(long.lines().nth(1).unwrap().starts_with("s1a,control,1,1,"));

        let back = read_exports(long.as_bytes(), Some(survey.as_bytes())).unwrap();
        let mut expected = sessions.clone();
        expected.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        assert_eq!(back, expected);
        assert_eq!(export(&back), (long, survey));
    }

    #[test]
    fn flag_columns() {
        let sessions = vec![session("s1a", true, false), session("s2b", false, true)];
        let (long, _) = export(&sessions);
        let rows: Vec<Vec<&str>> = long
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        assert_eq!(&rows[0][14..], ["1", "1", "0", "0", "1"]);
        assert_eq!(&rows[12][14..], ["0", "0", "0", "0", "0"]);
        let flags = compute_flags(&sessions[0]).unwrap();
        assert!(flags.speeder && flags.inattentive);
    }

    #[test]
    fn incomplete_session_has_blank_flags() {
        let mut s = session("s1a", false, true);
        s.trials.truncate(5);
        let (long, _) = export(&[s]);
        assert_eq!(long.lines().count(), 6);
        assert!(long.lines().nth(1).unwrap().ends_with(",1,,,,,"));
    }

    #[test]
    fn survey_columns() {
        let (_, survey) = export(&[session("s1a", false, true)]);
        let mut lines = survey.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
        assert_eq!(col("relevant_dont_know"), "0");
        assert_eq!(col("relevant_p2"), "1");
        assert_eq!(col("relevant_p5"), "0");
        assert_eq!(col("irrelevant_dont_know"), "1");
        assert_eq!(col("item4"), "PNA");
        assert_eq!(col("age_band"), "65+");
        assert_eq!(col("match_relevant"), "4");
        assert_eq!(col("match_irrelevant"), "3");
    }

    #[test]
    fn reader_rejects_gaps() {
        let (long, _) = export(&[session("s1a", false, true)]);
        let gapped: String = long
            .lines()
            .enumerate()
            .filter(|(i, _)| *i != 3)
            .map(|(_, l)| format!("{l}\n"))
            .collect();
        assert!(read_long_csv(gapped.as_bytes()).is_err());
    }
}
