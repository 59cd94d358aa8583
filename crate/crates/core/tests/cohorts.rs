use std::sync::Arc;

use alienzoo_core::bots::{run_cohort, AttentionStyle, BotKind, BotPolicy, SurveyStyle};
use alienzoo_core::export::{read_exports, write_long_csv, write_survey_csv};
use alienzoo_core::game::{replay_pack, GameEngine, Timings};
use alienzoo_core::pipeline::TrainingRecipe;
use alienzoo_core::quality::{compute_flags, per_trial_summary};
use alienzoo_core::{CfeConfig, Condition, Experiment, Session};

fn engine() -> GameEngine {
    let model = TrainingRecipe::for_experiment(Experiment::Exp1, 7)
        .train()
        .unwrap();
    GameEngine::new(Arc::new(model), CfeConfig::default(), Timings::default()).unwrap()
}

fn mean_final(sessions: &[Session]) -> f64 {
    sessions.iter().map(|s| f64::from(s.pack_size)).sum::<f64>() / sessions.len() as f64
}

#[test]
fn followers_beat_random_players() {
    let e = engine();
    let followers = run_cohort(
        &e,
        BotPolicy::new(BotKind::CfeFollower),
        Condition::Cfe,
        20,
        1,
    )
    .unwrap();
    let random = run_cohort(
        &e,
        BotPolicy::new(BotKind::Random),
        Condition::Control,
        20,
        1,
    )
    .unwrap();
    assert_eq!(followers.len(), 20);
    assert!(followers
        .iter()
        .all(|s| s.trials.len() == 12 && s.is_complete()));
    assert!(mean_final(&followers) > mean_final(&random));
    for s in followers.iter().chain(&random) {
        assert_eq!(replay_pack(&s.trials).unwrap(), s.pack_size);
        assert!(s.pack_size >= 2);
    }
}

#[test]
fn filter_cohorts() {
    let e = engine();
    let cohort = |policy: BotPolicy, condition| run_cohort(&e, policy, condition, 10, 3).unwrap();

    let speeders = cohort(BotPolicy::new(BotKind::Speeder), Condition::Control);
    assert!(speeders.iter().all(|s| compute_flags(s).unwrap().speeder));

    let mut p = BotPolicy::new(BotKind::Random);
    p.attention = AttentionStyle::Wrong;
    let careless = cohort(p, Condition::Cfe);
    assert!(careless
        .iter()
        .all(|s| compute_flags(s).unwrap().inattentive));

    let mut p = BotPolicy::new(BotKind::Greedy);
    p.survey = SurveyStyle::CatchFail;
    assert!(cohort(p, Condition::Control)
        .iter()
        .all(|s| compute_flags(s).unwrap().inattentive));

    let liners = cohort(BotPolicy::new(BotKind::StraightLiner), Condition::Control);
    assert!(liners
        .iter()
        .all(|s| s.pack_size == 2 && compute_flags(s).unwrap().straightliner_game));

    let mut p = BotPolicy::new(BotKind::Random);
    p.survey = SurveyStyle::AllPositive;
    assert!(cohort(p, Condition::Control)
        .iter()
        .all(|s| compute_flags(s).unwrap().straightliner_survey));

    let clean = cohort(BotPolicy::new(BotKind::CfeFollower), Condition::Cfe);
    assert!(clean.iter().all(|s| !compute_flags(s).unwrap().any()));
}

#[test]
fn exports_survive_a_round_trip() {
    let e = engine();
    let mut sessions = run_cohort(
        &e,
        BotPolicy::new(BotKind::CfeFollower),
        Condition::Cfe,
        4,
        2,
    )
    .unwrap();
    sessions.extend(
        run_cohort(
            &e,
            BotPolicy::new(BotKind::Speeder),
            Condition::Control,
            3,
            2,
        )
        .unwrap(),
    );
    sessions.extend(
        run_cohort(
            &e,
            BotPolicy::new(BotKind::Greedy),
            Condition::Control,
            4,
            2,
        )
        .unwrap(),
    );
    let (mut long, mut survey) = (Vec::new(), Vec::new());
    write_long_csv(&sessions, &mut long).unwrap();
    write_survey_csv(&sessions, &mut survey).unwrap();
    assert_eq!(
        String::from_utf8_lossy(&long).lines().count(),
        1 + 12 * sessions.len()
    );

    let back = read_exports(&long[..], Some(&survey[..])).unwrap();
    assert_eq!(back.len(), sessions.len());
    for b in &back {
        let s = sessions.iter().find(|s| s.id == b.session_id).unwrap();
        assert_eq!(compute_flags(b).unwrap(), compute_flags(s).unwrap());
        assert_eq!(b.survey.as_ref(), s.survey.as_ref());
    }
    let summary = per_trial_summary(&back).unwrap();
    assert_eq!(summary, per_trial_summary(&sessions).unwrap());
    assert_eq!(summary.len(), 24);

    let (mut long2, mut survey2) = (Vec::new(), Vec::new());
    write_long_csv(&back, &mut long2).unwrap();
    write_survey_csv(&back, &mut survey2).unwrap();
    assert_eq!((long, survey), (long2, survey2));
}
