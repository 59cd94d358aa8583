//! In-process HTTP client that plays participants through the API, used
//! by load tests and the acceptance suite.

use std::sync::Arc;

use alienzoo_core::bots::{Bot, BotKind, BotPolicy, Observation};
use alienzoo_core::game::{FeedbackBlock, SceneDescriptor};
use alienzoo_core::Condition;
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use crate::events::EventRecord;
use crate::state::StudyService;

pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

pub async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
    bearer: Option<&str>,
) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(token) = bearer {
        req = req.header("authorization", format!("Bearer {token}"));
    }
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .expect("request parts are valid");
    let res = app
        .clone()
        .oneshot(req)
        .await
        .expect("router is infallible");
    let status = res.status();
    let body = axum::body::to_bytes(res.into_body(), usize::MAX)
        .await
        .map(|b| b.to_vec())
        .unwrap_or_default();
    Reply { status, body }
}

/// What one simulated participant sent and saw.
#[derive(Debug, Default)]
pub struct Transcript {
    pub session_id: String,
    /// State-changing requests that succeeded.
    pub accepted_writes: usize,
    /// State-changing requests that were refused.
    pub rejected_writes: usize,
    /// Responses whose status was not the expected one.
    pub unexpected: Vec<String>,
    /// Every response body, in order.
    pub payloads: Vec<String>,
    pub code: Option<String>,
}

impl Transcript {
    fn write(&mut self, what: &str, r: &Reply, expected: StatusCode) {
        if r.status.is_success() {
            self.accepted_writes += 1;
        } else {
            self.rejected_writes += 1;
        }
        self.check(what, r, expected);
    }

    fn check(&mut self, what: &str, r: &Reply, expected: StatusCode) {
        if r.status != expected {
            self.unexpected.push(format!(
                "{what}: expected {expected}, got {} {}",
                r.status,
                r.text()
            ));
        }
        self.payloads.push(r.text());
    }

    /// Response text with the random identifiers removed.
    pub fn visible_text(&self) -> String {
        let mut text = self.payloads.join("\n").replace(&self.session_id, "");
        if let Some(code) = &self.code {
            text = text.replace(code, "");
        }
        text.to_lowercase()
    }
}

/// Play one participant with a random-choice bot. With `noisy`, invalid
/// requests are interleaved; each must be refused.
pub async fn play(app: &Router, seed: u64, noisy: bool) -> Transcript {
    let mut t = Transcript::default();
    let r = call(
        app,
        Method::POST,
        "/api/session",
        Some(json!({"consent": true})),
        None,
    )
    .await;
    t.write("create", &r, StatusCode::OK);
    let Some(id) = r.json()["session_id"].as_str().map(str::to_string) else {
        return t;
    };
    t.session_id = id.clone();
    let base = format!("/api/session/{id}");
    // The client never learns its arm; a random player needs no feedback.
    let mut bot =
        Bot::new(BotPolicy::new(BotKind::Random), Condition::Control, seed).expect("random bot");
    let mut last_feedback: Option<FeedbackBlock> = None;
    for _ in 0..200 {
        let r = call(app, Method::GET, &format!("{base}/scene"), None, None).await;
        t.check("scene", &r, StatusCode::OK);
        let Ok(scene) = serde_json::from_slice::<SceneDescriptor>(&r.body) else {
            t.unexpected.push(format!("unparseable scene {}", r.text()));
            return t;
        };
        let kind = r.json()["kind"].as_str().unwrap_or_default().to_string();
        if noisy {
            let bad = json!({"leaves": [0, 9, 0, 0, 0], "decision_time_ms": 10});
            let r = call(app, Method::POST, &format!("{base}/feed"), Some(bad), None).await;
            t.write("out-of-range feed", &r, StatusCode::UNPROCESSABLE_ENTITY);
            let r = call(
                app,
                Method::POST,
                &format!("{base}/attention"),
                Some(json!({"answer": "twelve"})),
                None,
            )
            .await;
            t.write("malformed attention", &r, StatusCode::UNPROCESSABLE_ENTITY);
            if kind != "choice" {
                let early = json!({"leaves": [1, 1, 1, 1, 1], "decision_time_ms": 10});
                let r = call(
                    app,
                    Method::POST,
                    &format!("{base}/feed"),
                    Some(early),
                    None,
                )
                .await;
                t.write("feed out of phase", &r, StatusCode::CONFLICT);
            }
            if kind != "payout" {
                let r = call(
                    app,
                    Method::GET,
                    &format!("{base}/payment-code"),
                    None,
                    None,
                )
                .await;
                t.write("early payment code", &r, StatusCode::CONFLICT);
            }
            let r = call(
                app,
                Method::POST,
                "/api/session/no-such-session/advance",
                None,
                None,
            )
            .await;
            t.write("unknown session", &r, StatusCode::NOT_FOUND);
        }
        let r = match kind.as_str() {
            "instructions" | "progress" => {
                call(app, Method::POST, &format!("{base}/advance"), None, None).await
            }
            "choice" => {
                let (choice, ms) = bot.next_choice(Observation {
                    scene: &scene,
                    last_feedback: last_feedback.as_ref(),
                });
                let body = json!({"leaves": choice, "decision_time_ms": ms});
                call(app, Method::POST, &format!("{base}/feed"), Some(body), None).await
            }
            "feedback" => {
                let r = call(app, Method::GET, &format!("{base}/feedback"), None, None).await;
                t.check("feedback", &r, StatusCode::OK);
                last_feedback = serde_json::from_slice(&r.body).ok();
                call(app, Method::POST, &format!("{base}/advance"), None, None).await
            }
            "attention" => {
                let answer = bot.attention_answer(scene.pack_size);
                call(
                    app,
                    Method::POST,
                    &format!("{base}/attention"),
                    Some(json!({"answer": answer})),
                    None,
                )
                .await
            }
            "survey" => {
                let answers =
                    serde_json::to_value(bot.survey_answers()).expect("survey serialises");
                call(
                    app,
                    Method::POST,
                    &format!("{base}/survey"),
                    Some(answers),
                    None,
                )
                .await
            }
            "payout" => {
                let r = call(
                    app,
                    Method::GET,
                    &format!("{base}/payment-code"),
                    None,
                    None,
                )
                .await;
                t.write("payment code", &r, StatusCode::OK);
                t.code = r.json()["code"].as_str().map(str::to_string);
                let again = call(
                    app,
                    Method::GET,
                    &format!("{base}/payment-code"),
                    None,
                    None,
                )
                .await;
                t.write("second payment code", &again, StatusCode::CONFLICT);
                return t;
            }
            other => {
                t.unexpected.push(format!("unknown scene `{other}`"));
                return t;
            }
        };
        t.write(&kind, &r, StatusCode::OK);
    }
    t.unexpected.push("session did not finish".into());
    t
}

/// Outcome of [`hammer`].
pub struct HammerReport {
    pub transcripts: Vec<Transcript>,
    pub records: Vec<EventRecord>,
}

impl HammerReport {
    pub fn accepted_writes(&self) -> usize {
        self.transcripts.iter().map(|t| t.accepted_writes).sum()
    }

    pub fn unexpected(&self) -> Vec<&str> {
        self.transcripts
            .iter()
            .flat_map(|t| t.unexpected.iter().map(String::as_str))
            .collect()
    }

    /// Every session's sequence numbers run 0, 1, 2, ... without gaps.
    pub fn sequences_are_gapless(&self) -> bool {
        let mut next = std::collections::HashMap::new();
        self.records.iter().all(|r| {
            let n = next.entry(r.session_id.as_str()).or_insert(0u64);
            let ok = r.seq == *n;
            *n += 1;
            ok
        })
    }
}

/// Run `n` participants in parallel, every other one noisy, and collect
/// their transcripts; `records` reads the log afterwards.
pub async fn hammer(
    service: Arc<StudyService>,
    n: u64,
    seed: u64,
    records: impl FnOnce() -> Vec<EventRecord>,
) -> HammerReport {
    let app = crate::api::router(service);
    let handles: Vec<_> = (0..n)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move { play(&app, seed.wrapping_add(i), i % 2 == 0).await })
        })
        .collect();
    let mut transcripts = Vec::with_capacity(handles.len());
    for h in handles {
        match h.await {
            Ok(t) => transcripts.push(t),
            Err(e) => transcripts.push(Transcript {
                unexpected: vec![format!("client task failed: {e}")],
                ..Transcript::default()
            }),
        }
    }
    HammerReport {
        transcripts,
        records: records(),
    }
}

/// Substrings that would reveal the treatment arm to a participant.
pub fn treatment_markers() -> Vec<String> {
    let mut words: Vec<String> = [
        "cfe",
        "counterfactual",
        "suggestion",
        "condition",
        "near_optimal",
        "predicted",
    ]
    .map(String::from)
    .into();
    words.push(alienzoo_core::game::NEAR_OPTIMAL_MESSAGE.to_lowercase());
    words
}

/// Treatment markers present in what a participant saw.
pub fn leaked_markers(t: &Transcript) -> Vec<String> {
    let text = t.visible_text();
    treatment_markers()
        .into_iter()
        .filter(|w| text.contains(w.as_str()))
        .collect()
}
