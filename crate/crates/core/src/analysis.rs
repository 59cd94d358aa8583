//! The analysis run behind `alienzoo analyze`: quality report, per-trial
//! descriptives, group comparisons and the mixed model, over clean
//! sessions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, StatsError};
use crate::export::enum_label;
use crate::game::Condition;
use crate::lmm::{fit_lmm_random_intercept, LmmFit, LmmRow};
use crate::quality::{
    clean_sessions, compute_flags, match_score, per_trial_summary, ItemKind, QualityFlags,
    SessionLog, TrialSummaryRow,
};
use crate::stats::{mann_whitney_u, welch_t, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionQuality {
    pub session_id: String,
    pub condition: Condition,
    /// `None` for incomplete sessions.
    pub flags: Option<QualityFlags>,
    pub excluded: bool,
}

/// One group comparison, CFE sample first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub outcome: String,
    pub n_cfe: usize,
    pub n_control: usize,
    pub result: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub quality: Vec<SessionQuality>,
    pub summary: Vec<TrialSummaryRow>,
    pub comparisons: Vec<Comparison>,
    pub lmm: Option<LmmFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lmm_error: Option<String>,
}

fn compare(
    outcome: &str,
    cfe: &[f64],
    control: &[f64],
    test: fn(&[f64], &[f64]) -> Result<TestResult, StatsError>,
) -> Comparison {
    let (result, error) = match test(cfe, control) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Comparison {
        outcome: outcome.to_string(),
        n_cfe: cfe.len(),
        n_control: control.len(),
        result,
        error,
    }
}

pub fn analyze<S: SessionLog>(sessions: &[S]) -> Result<AnalysisReport, StatsError> {
    let mut quality: Vec<SessionQuality> = sessions
        .iter()
        .map(|s| {
            let flags = compute_flags(s).ok();
            SessionQuality {
                session_id: s.session_id().to_string(),
                condition: s.condition(),
                flags,
                excluded: flags.is_none_or(|f| f.any()),
            }
        })
        .collect();
    quality.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let summary = per_trial_summary(sessions)?;
    let clean = clean_sessions(sessions);

    let split = |f: &dyn Fn(&S) -> Option<f64>| -> (Vec<f64>, Vec<f64>) {
        let pick = |c| {
            clean
                .iter()
                .filter(|s| s.condition() == c)
                .filter_map(|s| f(s))
                .collect()
        };
        (pick(Condition::Cfe), pick(Condition::Control))
    };
    let final_pack = split(&|s| s.trials().last().map(|t| f64::from(t.pack_after)));
    let decision = split(&|s| {
        let t = s.trials();
        Some(t.iter().map(|t| t.decision_time_ms as f64).sum::<f64>() / t.len() as f64)
    });
    let matched = |kind: ItemKind| {
        split(&move |s: &S| {
            let survey = s.survey()?;
            let sel = match kind {
                ItemKind::Relevant => survey.relevant_plants.as_ref(),
                ItemKind::Irrelevant => survey.irrelevant_plants.as_ref(),
            }?;
            Some(f64::from(match_score(sel, kind, s.experiment())))
        })
    };
    let relevant = matched(ItemKind::Relevant);
    let irrelevant = matched(ItemKind::Irrelevant);
    let comparisons = vec![
        compare(
            "final_pack_size",
            &final_pack.0,
            &final_pack.1,
            mann_whitney_u,
        ),
        compare("mean_decision_time_ms", &decision.0, &decision.1, welch_t),
        compare("match_relevant", &relevant.0, &relevant.1, mann_whitney_u),
        compare(
            "match_irrelevant",
            &irrelevant.0,
            &irrelevant.1,
            mann_whitney_u,
        ),
    ];

    let rows: Vec<LmmRow> = clean
        .iter()
        .flat_map(|s| {
            s.trials().iter().map(|t| LmmRow {
                subject: s.session_id().to_string(),
                group: s.condition().to_string(),
                trial: u32::from(t.trial),
                y: f64::from(t.pack_after),
            })
        })
        .collect();
    let (lmm, lmm_error) = match fit_lmm_random_intercept(&rows) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(AnalysisReport {
        quality,
        summary,
        comparisons,
        lmm,
        lmm_error,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Plot-ready descriptives; an undefined standard error is a blank cell.
pub fn write_summary_csv<W: Write>(rows: &[TrialSummaryRow], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "condition",
        "trial",
        "n",
        "mean_pack",
        "sem_pack",
        "mean_decision_ms",
        "sem_decision_ms",
    ])?;
    for r in rows {
        w.write_record([
            r.condition.to_string(),
            r.trial.to_string(),
            r.n.to_string(),
            r.mean_pack.to_string(),
            opt(r.sem_pack),
            r.mean_decision_ms.to_string(),
            opt(r.sem_decision_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_quality_csv<W: Write>(rows: &[SessionQuality], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "session_id",
        "condition",
        "speeder",
        "inattentive",
        "straightliner_game",
        "straightliner_survey",
        "excluded",
    ])?;
    for q in rows {
        let cell = |f: fn(&QualityFlags) -> bool| {
            q.flags
                .as_ref()
                .map(|x| u8::from(f(x)).to_string())
                .unwrap_or_default()
        };
        w.write_record([
            q.session_id.clone(),
            q.condition.to_string(),
            cell(|f| f.speeder),
            cell(|f| f.inattentive),
            cell(|f| f.straightliner_game),
            cell(|f| f.straightliner_survey),
            u8::from(q.excluded).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tests_csv<W: Write>(rows: &[Comparison], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "outcome",
        "n_cfe",
        "n_control",
        "method",
        "statistic",
        "df",
        "p_value",
        "effect_kind",
        "effect_size",
        "error",
    ])?;
    for c in rows {
        let r = c.result.as_ref();
        w.write_record([
            c.outcome.clone(),
            c.n_cfe.to_string(),
            c.n_control.to_string(),
            r.map(|r| enum_label(&r.method)).unwrap_or_default(),
            opt(r.map(|r| r.statistic)),
            opt(r.and_then(|r| r.df)),
            opt(r.map(|r| r.p_value)),
            r.map(|r| enum_label(&r.effect_kind)).unwrap_or_default(),
            opt(r.map(|r| r.effect_size)),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
