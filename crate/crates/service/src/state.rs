//! Session store. Every state change is an [`Event`]: it is applied to a
//! copy of the session, appended to the log, and only then committed, so
//! a rejected request leaves no trace and the log alone rebuilds the store.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use alienzoo_core::analysis::SessionQuality;
use alienzoo_core::export::{write_long_csv, write_survey_csv};
use alienzoo_core::game::{FeedbackBlock, SceneDescriptor, TrialRecord};
use alienzoo_core::quality::compute_flags;
use alienzoo_core::survey::SurveyResponse;
use alienzoo_core::{GameEngine, Phase, PlantVector, Session};
use serde::{Deserialize, Serialize};

use crate::assign::ConditionAssigner;
use crate::config::Assignment;
use crate::error::ServiceError;
use crate::events::{
    read_log, read_snapshot, write_snapshot, Event, EventRecord, EventSink, Snapshot,
};
use crate::payment::{hash_code, new_code};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// Test clock: every reading moves time forward by `step_ms`.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicU64,
    step_ms: u64,
}

impl ManualClock {
    pub fn new(start_ms: u64, step_ms: u64) -> Self {
        ManualClock {
            now: AtomicU64::new(start_ms),
            step_ms,
        }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.now.fetch_add(self.step_ms, Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRecord {
    /// `None` once deleted.
    pub code_hash: Option<String>,
    pub issued_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub session: Session,
    pub next_seq: u64,
    pub payment: Option<PaymentRecord>,
}

/// Apply one event to a session. Used for live requests and for replay.
pub fn apply_event(
    engine: &GameEngine,
    entry: &mut SessionEntry,
    event: &Event,
    timestamp_ms: u64,
) -> Result<(), ServiceError> {
    let s = &mut entry.session;
    match event {
        Event::Created { .. } => {
            return Err(ServiceError::Storage(format!(
                "session `{}` created twice",
                s.id
            )))
        }
        Event::Advanced {} => {
            engine.advance(s, timestamp_ms)?;
        }
        Event::Fed {
            leaves,
            decision_time_ms,
        } => {
            engine.submit_feeding(s, *leaves, *decision_time_ms, timestamp_ms)?;
        }
        Event::Attention { answer } => {
            engine.submit_attention(s, *answer, timestamp_ms)?;
        }
        Event::Survey { response } => {
            engine.submit_survey(s, response.clone(), timestamp_ms)?;
        }
        Event::PaymentIssued { code_hash } => {
            if s.phase != Phase::Done {
                return Err(ServiceError::Conflict("session is not finished".into()));
            }
            if entry.payment.is_some() {
                return Err(ServiceError::Conflict("payment code already issued".into()));
            }
            entry.payment = Some(PaymentRecord {
                code_hash: Some(code_hash.clone()),
                issued_at_ms: timestamp_ms,
            });
        }
        Event::PaymentDeleted {} => match &mut entry.payment {
            Some(p) if p.code_hash.is_some() => p.code_hash = None,
            _ => return Err(ServiceError::Conflict("no payment code to delete".into())),
        },
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub scene: SceneDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u8,
    pub delta: i32,
    pub pack_before: u32,
    pub pack_after: u32,
    pub scene: SceneDescriptor,
}

impl TrialOutcome {
    fn new(t: &TrialRecord, scene: SceneDescriptor) -> Self {
        TrialOutcome {
            trial: t.trial,
            delta: t.delta,
            pack_before: t.pack_before,
            pack_after: t.pack_after,
            scene,
        }
    }
}

struct SnapshotPolicy {
    path: PathBuf,
    every: u64,
}

type Entries = RwLock<HashMap<String, Arc<Mutex<SessionEntry>>>>;

pub struct StudyService {
    engine: Arc<GameEngine>,
    sessions: Entries,
    log: Mutex<Box<dyn EventSink>>,
    assigner: Mutex<ConditionAssigner>,
    clock: Arc<dyn Clock>,
    admin_token: Option<String>,
    snapshots: Option<SnapshotPolicy>,
    events_written: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl StudyService {
    pub fn new(
        engine: Arc<GameEngine>,
        log: Box<dyn EventSink>,
        assignment: Assignment,
        seed: u64,
        clock: Arc<dyn Clock>,
        admin_token: Option<String>,
    ) -> Self {
        StudyService {
            engine,
            sessions: RwLock::new(HashMap::new()),
            log: Mutex::new(log),
            assigner: Mutex::new(ConditionAssigner::new(assignment, seed)),
            clock,
            admin_token,
            snapshots: None,
            events_written: AtomicU64::new(0),
        }
    }

    /// Write a snapshot to `path` after every `every` events.
    pub fn with_snapshots(mut self, path: PathBuf, every: u64) -> Self {
        self.snapshots = Some(SnapshotPolicy {
            path,
            every: every.max(1),
        });
        self
    }

    /// Rebuild sessions from an optional snapshot plus the event log.
    pub fn restore(
        &mut self,
        snapshot: Option<Snapshot>,
        records: &[EventRecord],
        assignment: Assignment,
        seed: u64,
    ) -> Result<(), ServiceError> {
        let mut map: HashMap<String, SessionEntry> = snapshot
            .into_iter()
            .flat_map(|s| s.sessions)
            .map(|e| (e.session.id.clone(), e))
            .collect();
        for r in records {
            if let Event::Created { condition, seed } = &r.event {
                if r.seq != 0 {
                    return Err(ServiceError::Storage(format!(
                        "creation of `{}` at seq {}",
                        r.session_id, r.seq
                    )));
                }
                if !map.contains_key(&r.session_id) {
                    let session = self.engine.create_session(
                        r.session_id.clone(),
                        *condition,
                        *seed,
                        r.timestamp_ms,
                    );
                    map.insert(
                        r.session_id.clone(),
                        SessionEntry {
                            session,
                            next_seq: 1,
                            payment: None,
                        },
                    );
                }
                continue;
            }
            let entry = map.get_mut(&r.session_id).ok_or_else(|| {
                ServiceError::Storage(format!("event for unknown session `{}`", r.session_id))
            })?;
            if r.seq < entry.next_seq {
                continue;
            }
            if r.seq != entry.next_seq {
                return Err(ServiceError::Storage(format!(
                    "session `{}` expects seq {}, log has {}",
                    r.session_id, entry.next_seq, r.seq
                )));
            }
            apply_event(&self.engine, entry, &r.event, r.timestamp_ms).map_err(|e| {
                ServiceError::Storage(format!("replaying `{}` seq {}: {e}", r.session_id, r.seq))
            })?;
            entry.next_seq += 1;
        }
        *self.assigner.get_mut().unwrap_or_else(|e| e.into_inner()) =
            ConditionAssigner::resume(assignment, seed, map.len());
        *self.sessions.get_mut().unwrap_or_else(|e| e.into_inner()) = map
            .into_iter()
            .map(|(k, v)| (k, Arc::new(Mutex::new(v))))
            .collect();
        Ok(())
    }

    /// Restore from the files in `data_dir` (if any) and keep logging there.
    pub fn open(
        engine: Arc<GameEngine>,
        data_dir: &std::path::Path,
        assignment: Assignment,
        seed: u64,
        snapshot_every: u64,
        clock: Arc<dyn Clock>,
        admin_token: Option<String>,
    ) -> Result<Self, ServiceError> {
        let log_path = data_dir.join("events.jsonl");
        let snap_path = data_dir.join("snapshot.json");
        let records = read_log(&log_path)?;
        let snapshot = read_snapshot(&snap_path)?;
        let log = crate::events::FileLog::open(&log_path)?;
        let mut service =
            StudyService::new(engine, Box::new(log), assignment, seed, clock, admin_token)
                .with_snapshots(snap_path, snapshot_every);
        service.restore(snapshot, &records, assignment, seed)?;
        Ok(service)
    }

    pub fn engine(&self) -> &GameEngine {
        &self.engine
    }

    pub fn check_admin(&self, bearer: Option<&str>) -> Result<(), ServiceError> {
        match (&self.admin_token, bearer) {
            (Some(token), Some(given)) if token == given => Ok(()),
            _ => Err(ServiceError::Unauthorized),
        }
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<SessionEntry>>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn append(&self, record: &EventRecord) -> Result<(), ServiceError> {
        lock(&self.log).append(record)?;
        self.events_written.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    fn maybe_snapshot(&self) {
        if let Some(policy) = &self.snapshots {
            if self
                .events_written
                .load(Ordering::SeqCst)
                .is_multiple_of(policy.every)
            {
                if let Err(e) = write_snapshot(&policy.path, &self.snapshot()) {
                    tracing::warn!("snapshot failed: {e}");
                }
            }
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let mut sessions = self.entries();
        sessions.sort_by(|a, b| a.session.id.cmp(&b.session.id));
        Snapshot { sessions }
    }

    /// Copies of every session entry, in no particular order.
    pub fn entries(&self) -> Vec<SessionEntry> {
        let arcs: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect();
        arcs.iter().map(|a| lock(a).clone()).collect()
    }

    pub fn sessions(&self) -> Vec<Session> {
        let mut v: Vec<Session> = self.entries().into_iter().map(|e| e.session).collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    /// Apply, log, commit; `view` builds the response from the new state.
    fn mutate<T>(
        &self,
        id: &str,
        event: Event,
        view: impl FnOnce(&SessionEntry) -> T,
    ) -> Result<T, ServiceError> {
        let arc = self.entry(id)?;
        let out = {
            let mut guard = lock(&arc);
            let mut next = guard.clone();
            let now = self.clock.now_ms();
            apply_event(&self.engine, &mut next, &event, now)?;
            self.append(&EventRecord {
                session_id: id.to_string(),
                seq: next.next_seq,
                timestamp_ms: now,
                event,
            })?;
            next.next_seq += 1;
            *guard = next;
            view(&guard)
        };
        self.maybe_snapshot();
        Ok(out)
    }

    fn read<T>(
        &self,
        id: &str,
        view: impl FnOnce(&SessionEntry) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let arc = self.entry(id)?;
        let guard = lock(&arc);
        view(&guard)
    }

    pub fn create_session(&self) -> Result<CreatedSession, ServiceError> {
        let id = format!("{:032x}", rand::random::<u128>());
        let seed: u64 = rand::random();
        let created = {
            let mut assigner = lock(&self.assigner);
            let before = assigner.clone();
            let condition = assigner.next_condition();
            let now = self.clock.now_ms();
            let record = EventRecord {
                session_id: id.clone(),
                seq: 0,
                timestamp_ms: now,
                event: Event::Created { condition, seed },
            };
            if let Err(e) = self.append(&record) {
                *assigner = before;
                return Err(e);
            }
            let session = self.engine.create_session(id.clone(), condition, seed, now);
            let scene = self.engine.scene_descriptor(&session);
            self.sessions
                .write()
                .unwrap_or_else(|e| e.into_inner())
                .insert(
                    id.clone(),
                    Arc::new(Mutex::new(SessionEntry {
                        session,
                        next_seq: 1,
                        payment: None,
                    })),
                );
            CreatedSession {
                session_id: id,
                scene,
            }
        };
        self.maybe_snapshot();
        Ok(created)
    }

    pub fn scene(&self, id: &str) -> Result<SceneDescriptor, ServiceError> {
        self.read(id, |e| Ok(self.engine.scene_descriptor(&e.session)))
    }

    pub fn advance(&self, id: &str) -> Result<SceneDescriptor, ServiceError> {
        self.mutate(id, Event::Advanced {}, |e| {
            self.engine.scene_descriptor(&e.session)
        })
    }

    pub fn feed(
        &self,
        id: &str,
        leaves: PlantVector,
        decision_time_ms: u64,
    ) -> Result<TrialOutcome, ServiceError> {
        self.mutate(
            id,
            Event::Fed {
                leaves,
                decision_time_ms,
            },
            |e| {
                let t = e.session.trials.last().expect("a trial was just recorded");
                TrialOutcome::new(t, self.engine.scene_descriptor(&e.session))
            },
        )
    }

    pub fn feedback(&self, id: &str) -> Result<FeedbackBlock, ServiceError> {
        self.read(id, |e| Ok(self.engine.feedback_payload(&e.session)?))
    }

    pub fn attention(&self, id: &str, answer: i64) -> Result<bool, ServiceError> {
        self.mutate(id, Event::Attention { answer }, |e| {
            e.session.attention.last().expect("just answered").correct
        })
    }

    pub fn survey(&self, id: &str, response: SurveyResponse) -> Result<(), ServiceError> {
        self.mutate(id, Event::Survey { response }, |_| ())
    }

    /// Plaintext code, returned exactly once per finished session.
    pub fn issue_payment_code(&self, id: &str) -> Result<String, ServiceError> {
        let code = new_code(&mut rand::rng());
        self.mutate(
            id,
            Event::PaymentIssued {
                code_hash: hash_code(&code),
            },
            |_| (),
        )?;
        Ok(code)
    }

    /// Session the code belongs to, if it is still on record.
    pub fn verify_payment_code(&self, code: &str) -> Option<String> {
        let hash = hash_code(code);
        self.entries()
            .into_iter()
            .find(|e| e.payment.as_ref().and_then(|p| p.code_hash.as_ref()) == Some(&hash))
            .map(|e| e.session.id)
    }

    pub fn delete_payment_code(&self, id: &str) -> Result<(), ServiceError> {
        self.mutate(id, Event::PaymentDeleted {}, |_| ())
    }

    pub fn export_long_csv(&self) -> Result<Vec<u8>, ServiceError> {
        let mut out = Vec::new();
        write_long_csv(&self.sessions(), &mut out)
            .map_err(|e| ServiceError::Storage(e.to_string()))?;
        Ok(out)
    }

    pub fn export_survey_csv(&self) -> Result<Vec<u8>, ServiceError> {
        let mut out = Vec::new();
        write_survey_csv(&self.sessions(), &mut out)
            .map_err(|e| ServiceError::Storage(e.to_string()))?;
        Ok(out)
    }

    pub fn quality(&self) -> Vec<SessionQuality> {
        self.sessions()
            .into_iter()
            .map(|s| {
                let flags = compute_flags(&s).ok();
                SessionQuality {
                    session_id: s.id,
                    condition: s.condition,
                    flags,
                    excluded: flags.is_none_or(|f| f.any()),
                }
            })
            .collect()
    }
}
