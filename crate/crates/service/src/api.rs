//! HTTP/JSON routes.

use std::sync::Arc;

use alienzoo_core::survey::SurveyResponse;
use alienzoo_core::{GameError, PlantVector};
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::state::StudyService;

type Shared = Arc<StudyService>;

/// `axum::Json` with rejections reported as JSON errors.
pub struct Json<T>(pub T);

impl<T, S> FromRequest<S> for Json<T>
where
    axum::Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match axum::Json::<T>::from_request(req, state).await {
            Ok(axum::Json(v)) => Ok(Json(v)),
            Err(e) => Err(ServiceError::Validation(e.body_text())),
        }
    }
}

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::Game(g) => match g {
                GameError::WrongPhase { .. } | GameError::Incomplete(_) => StatusCode::CONFLICT,
                GameError::InvalidChoice(_)
                | GameError::MissingSurveyItems(_)
                | GameError::InvalidSurvey(_) => StatusCode::UNPROCESSABLE_ENTITY,
                GameError::GrowthOutOfRange(_) | GameError::Config(_) => {
                    StatusCode::INTERNAL_SERVER_ERROR
                }
            },
            ServiceError::Config(_) | ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        let mut res = (
            status,
            axum::Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response();
        if status == StatusCode::UNAUTHORIZED {
            res.headers_mut().insert(
                header::WWW_AUTHENTICATE,
                header::HeaderValue::from_static("Bearer"),
            );
        }
        res
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub consent: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedRequest {
    pub leaves: PlantVector,
    pub decision_time_ms: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionRequest {
    pub answer: i64,
}

#[derive(Serialize, Deserialize)]
pub struct AttentionResponse {
    pub correct: bool,
}

#[derive(Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
}

#[derive(Serialize, Deserialize)]
pub struct PaymentCode {
    pub code: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    pub code: String,
}

#[derive(Serialize, Deserialize)]
pub struct VerifyResponse {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Deserialize)]
pub struct ExportQuery {
    pub format: String,
}

async fn create(
    State(s): State<Shared>,
    Json(req): Json<CreateRequest>,
) -> ApiResult<crate::state::CreatedSession> {
    if !req.consent {
        return Err(ServiceError::Validation("consent is required".into()));
    }
    Ok(Json(s.create_session()?))
}

async fn scene(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<alienzoo_core::game::SceneDescriptor> {
    Ok(Json(s.scene(&id)?))
}

async fn advance(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<alienzoo_core::game::SceneDescriptor> {
    Ok(Json(s.advance(&id)?))
}

async fn feed(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<FeedRequest>,
) -> ApiResult<crate::state::TrialOutcome> {
    Ok(Json(s.feed(&id, req.leaves, req.decision_time_ms)?))
}

async fn feedback(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<alienzoo_core::game::FeedbackBlock> {
    Ok(Json(s.feedback(&id)?))
}

async fn attention(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<AttentionRequest>,
) -> ApiResult<AttentionResponse> {
    Ok(Json(AttentionResponse {
        correct: s.attention(&id, req.answer)?,
    }))
}

async fn survey(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<SurveyResponse>,
) -> ApiResult<Ack> {
    s.survey(&id, req)?;
    Ok(Json(Ack { ok: true }))
}

async fn payment_code(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<PaymentCode> {
    Ok(Json(PaymentCode {
        code: s.issue_payment_code(&id)?,
    }))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

async fn export(
    State(s): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ServiceError> {
    s.check_admin(bearer(&headers))?;
    let body = match q.format.as_str() {
        "long-csv" => s.export_long_csv()?,
        "survey-csv" => s.export_survey_csv()?,
        other => {
            return Err(ServiceError::Validation(format!(
                "unknown export format `{other}`"
            )))
        }
    };
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

async fn quality(
    State(s): State<Shared>,
    headers: HeaderMap,
) -> ApiResult<Vec<alienzoo_core::analysis::SessionQuality>> {
    s.check_admin(bearer(&headers))?;
    Ok(Json(s.quality()))
}

async fn verify(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(req): Json<VerifyRequest>,
) -> ApiResult<VerifyResponse> {
    s.check_admin(bearer(&headers))?;
    let session_id = s.verify_payment_code(&req.code);
    Ok(Json(VerifyResponse {
        valid: session_id.is_some(),
        session_id,
    }))
}

async fn delete_payment(
    State(s): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Ack> {
    s.check_admin(bearer(&headers))?;
    s.delete_payment_code(&id)?;
    Ok(Json(Ack { ok: true }))
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/session", post(create))
        .route("/api/session/{id}/scene", get(scene))
        .route("/api/session/{id}/advance", post(advance))
        .route("/api/session/{id}/feed", post(feed))
        .route("/api/session/{id}/feedback", get(feedback))
        .route("/api/session/{id}/attention", post(attention))
        .route("/api/session/{id}/survey", post(survey))
        .route("/api/session/{id}/payment-code", get(payment_code))
        .route("/admin/export", get(export))
        .route("/admin/quality", get(quality))
        .route("/admin/payment/verify", post(verify))
        .route("/admin/payment/{id}", delete(delete_payment))
        .fallback(|| async {
            (
                StatusCode::NOT_FOUND,
                axum::Json(ErrorBody {
                    error: "no such route".into(),
                }),
            )
        })
        .with_state(service)
}
