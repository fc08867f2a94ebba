//! HTTP labelling session.
//!
//! A session walks through the frames of a set of sequences. For each frame
//! a client fetches the detections (without ground truth), posts one class
//! per detection slot and advances. Slots left unlabelled count as class 0.
//! Once every frame has been answered the report scores the choices with
//! the same success-rate metric the benchmark uses.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use idtrack::eval::success_counts;
use idtrack::{AssignmentLabel, FrameInput, SequenceRecord};
use serde::{Deserialize, Serialize};

use crate::config::ServeConfig;
use crate::CliError;

pub struct Session {
    sequences: Vec<SequenceRecord>,
    // (sequence, frame) in presentation order
    order: Vec<(usize, usize)>,
    cursor: usize,
    pending: Vec<usize>,
    shown_at: Option<Instant>,
    answers: Vec<AssignmentLabel>,
    latencies: Vec<Duration>,
}

impl Session {
    pub fn new(sequences: Vec<SequenceRecord>) -> Result<Self, CliError> {
        for s in &sequences {
            s.validate()?;
        }
        let order: Vec<_> =
            sequences.iter().enumerate().flat_map(|(i, s)| (0..s.len()).map(move |f| (i, f))).collect();
        if order.is_empty() {
            return Err(CliError::Invalid("serve needs at least one frame".into()));
        }
        let mut session =
            Session { sequences, order, cursor: 0, pending: Vec::new(), shown_at: None, answers: Vec::new(), latencies: Vec::new() };
        session.pending = vec![0; session.current().map_or(0, |f| f.n_slots())];
        Ok(session)
    }

    pub fn total_frames(&self) -> usize {
        self.order.len()
    }

    pub fn done(&self) -> bool {
        self.cursor >= self.order.len()
    }

    fn current(&self) -> Option<&FrameInput> {
        let &(s, f) = self.order.get(self.cursor)?;
        Some(&self.sequences[s].frames[f].input)
    }

    fn n_robots(&self) -> usize {
        let (s, _) = self.order[0];
        self.sequences[s].n_robots()
    }
}

pub type SharedSession = Arc<Mutex<Session>>;

#[derive(Debug, Serialize)]
pub struct SlotView {
    pub slot: usize,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub gamma: f64,
}

#[derive(Debug, Serialize)]
pub struct FrameView {
    pub done: bool,
    pub index: usize,
    pub total: usize,
    pub sequence: Option<usize>,
    pub t: Option<u64>,
    pub n_robots: usize,
    pub max_detections: usize,
    pub field_width: f64,
    pub field_height: f64,
    pub broadcasts: Vec<f64>,
    /// Occupied slots only, positions normalised to the field.
    pub detections: Vec<SlotView>,
    pub choices: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Choice {
    pub slot: usize,
    pub class: usize,
}

#[derive(Debug, Serialize)]
pub struct AnswerRow {
    pub sequence: usize,
    pub t: u64,
    pub classes: Vec<usize>,
    pub latency_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct SessionReport {
    pub frames: usize,
    pub correct: u64,
    pub detections: u64,
    pub success_rate: f64,
    pub mean_latency_ms: f64,
    pub answers: Vec<AnswerRow>,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": msg.into() }))).into_response()
}

fn lock(state: &SharedSession) -> std::sync::MutexGuard<'_, Session> {
    state.lock().unwrap_or_else(|p| p.into_inner())
}

async fn next_frame(State(state): State<SharedSession>) -> Response {
    let mut s = lock(&state);
    let total = s.total_frames();
    let (s0, _) = s.order[0];
    let cfg = s.sequences[s0].config.clone();
    let Some(frame) = s.current().cloned() else {
        return Json(FrameView {
            done: true,
            index: total,
            total,
            sequence: None,
            t: None,
            n_robots: cfg.n_robots,
            max_detections: cfg.max_detections,
            field_width: cfg.field_width,
            field_height: cfg.field_height,
            broadcasts: Vec::new(),
            detections: Vec::new(),
            choices: Vec::new(),
        })
        .into_response();
    };
    if s.shown_at.is_none() {
        s.shown_at = Some(Instant::now());
    }
    let detections = frame
        .occupied()
        .map(|i| {
            let d = &frame.slots[i];
            SlotView { slot: i, x: d.x, y: d.y, phi: d.phi, gamma: d.gamma }
        })
        .collect();
    Json(FrameView {
        done: false,
        index: s.cursor,
        total,
        sequence: Some(s.order[s.cursor].0),
        t: Some(frame.t),
        n_robots: frame.n_robots(),
        max_detections: frame.n_slots(),
        field_width: cfg.field_width,
        field_height: cfg.field_height,
        broadcasts: frame.broadcasts.clone(),
        detections,
        choices: s.pending.clone(),
    })
    .into_response()
}

async fn choice(State(state): State<SharedSession>, body: Result<Json<Choice>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(c) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let mut s = lock(&state);
    let n = s.n_robots();
    let Some(frame) = s.current() else {
        return error(StatusCode::CONFLICT, "session is finished");
    };
    if c.slot >= frame.n_slots() {
        return error(StatusCode::BAD_REQUEST, format!("slot {} out of range 0..{}", c.slot, frame.n_slots()));
    }
    if frame.slots[c.slot].is_empty() {
        return error(StatusCode::BAD_REQUEST, format!("slot {} holds no detection", c.slot));
    }
    if c.class > n {
        return error(StatusCode::BAD_REQUEST, format!("class {} out of range 0..={n}", c.class));
    }
    s.pending[c.slot] = c.class;
    Json(serde_json::json!({ "slot": c.slot, "class": c.class, "choices": s.pending })).into_response()
}

async fn advance(State(state): State<SharedSession>) -> Response {
    let mut s = lock(&state);
    if s.done() {
        return error(StatusCode::CONFLICT, "session is finished");
    }
    let latency = s.shown_at.take().map(|t| t.elapsed()).unwrap_or_default();
    let label = AssignmentLabel { classes: std::mem::take(&mut s.pending) };
    s.answers.push(label);
    s.latencies.push(latency);
    s.cursor += 1;
    s.pending = vec![0; s.current().map_or(0, |f| f.n_slots())];
    Json(serde_json::json!({ "index": s.cursor, "total": s.total_frames(), "done": s.done() })).into_response()
}

/// Scores the session. Conflict until every frame has been answered.
pub fn report(s: &Session) -> Result<SessionReport, Response> {
    if !s.done() {
        return Err(error(
            StatusCode::CONFLICT,
            format!("{} of {} frames answered", s.answers.len(), s.total_frames()),
        ));
    }
    let mut inputs = Vec::with_capacity(s.order.len());
    let mut truth = Vec::with_capacity(s.order.len());
    for &(q, f) in &s.order {
        let rec = &s.sequences[q].frames[f];
        inputs.push(rec.input.clone());
        truth.push(rec.label.clone());
    }
    let counts = success_counts(&inputs, &truth, &s.answers)
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let ms: Vec<f64> = s.latencies.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    let answers = s
        .order
        .iter()
        .zip(&s.answers)
        .zip(&ms)
        .map(|((&(q, f), a), &latency_ms)| AnswerRow {
            sequence: q,
            t: s.sequences[q].frames[f].input.t,
            classes: a.classes.clone(),
            latency_ms,
        })
        .collect();
    Ok(SessionReport {
        frames: s.order.len(),
        correct: counts.correct,
        detections: counts.detections,
        success_rate: counts.rate(),
        mean_latency_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        answers,
    })
}

async fn report_handler(State(state): State<SharedSession>) -> Response {
    let s = lock(&state);
    match report(&s) {
        Ok(r) => Json(r).into_response(),
        Err(resp) => resp,
    }
}

pub fn router(state: SharedSession, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/session/next-frame", get(next_frame))
        .route("/session/choice", post(choice))
        .route("/session/advance", post(advance))
        .route("/session/report", get(report_handler))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Runs the server until interrupted.
pub fn serve_blocking(session: Session, cfg: &ServeConfig) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|e| CliError::Invalid(format!("serve address {}:{}: {e}", cfg.host, cfg.port)))?;
    if let Some(dir) = &cfg.static_dir {
        if !dir.is_dir() {
            return Err(CliError::Invalid(format!("static_dir {} is not a directory", dir.display())));
        }
    }
    let app = router(Arc::new(Mutex::new(session)), cfg.static_dir.as_deref());
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
        log::info!("serving on http://{}", listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })
}
