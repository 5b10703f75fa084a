//! Read-only HTTP front end over one report.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use clap::Args;
use designbound_core::bounds::BoundFamily;
use designbound_core::float_serde;
use designbound_core::inference::{m_grid, TrapezoidPoint};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::commands::perturb::{parse_request, perturb, Rejection};
use crate::error::CliError;
use crate::report::Report;

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

struct AppState {
    report: Report,
    /// Serialized once; the report never changes while serving.
    report_json: String,
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
}

fn reject(status: StatusCode, r: &Rejection) -> Response {
    json_response(status, serde_json::to_string(r).expect("rejection serializes"))
}

async fn get_report(State(st): State<Arc<AppState>>) -> Response {
    json_response(StatusCode::OK, st.report_json.clone())
}

async fn post_perturb(State(st): State<Arc<AppState>>, body: Bytes) -> Response {
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(r) => return reject(StatusCode::BAD_REQUEST, &r),
    };
    match perturb(&st.report, &req) {
        Ok(resp) => json_response(StatusCode::OK, serde_json::to_string(&resp).expect("response serializes")),
        Err(r) if r.kind == "numerical" => reject(StatusCode::UNPROCESSABLE_ENTITY, &r),
        Err(r) => reject(StatusCode::BAD_REQUEST, &r),
    }
}

#[derive(Debug, Deserialize)]
pub struct TrapezoidQuery {
    pub family: Option<String>,
    pub alpha: Option<f64>,
    pub m_max: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidResponse {
    pub family: BoundFamily,
    pub alpha: f64,
    pub c: f64,
    pub beta_hat: f64,
    pub se: f64,
    #[serde(with = "float_serde")]
    pub m_value: f64,
    pub points: Vec<TrapezoidPoint>,
}

fn trapezoid(report: &Report, q: &TrapezoidQuery) -> Result<TrapezoidResponse, Rejection> {
    let bad = |msg: String| Rejection { kind: "validation".into(), error: msg };
    let inf = report.inference.as_ref().ok_or_else(|| bad("report has no inference (design-only data)".into()))?;
    let family = BoundFamily::parse(q.family.as_deref().unwrap_or("ks")).map_err(|e| bad(crate::error::reason(&e)))?;
    let fam = inf.family(family).ok_or_else(|| bad(format!("no scalar imbalance for family {}", family.name())))?;
    let alpha = q.alpha.unwrap_or(inf.alpha);
    let ci = inf.interval(fam.c, alpha).map_err(|e| bad(crate::error::reason(&e)))?;
    let m_value = ci.m_value(inf.null_tau);
    let m_max = q.m_max.unwrap_or_else(|| fam.trapezoid.last().map_or(1.0, |p| p.m));
    if !(m_max > 0.0 && m_max.is_finite()) {
        return Err(bad(format!("m_max must be positive, got {m_max}")));
    }
    let points = q.points.unwrap_or(41);
    if !(2..=10_000).contains(&points) {
        return Err(bad(format!("points must lie in [2, 10000], got {points}")));
    }
    Ok(TrapezoidResponse {
        family,
        alpha,
        c: fam.c,
        beta_hat: inf.beta_hat,
        se: inf.se,
        m_value,
        points: ci.trapezoid(&m_grid(m_max, points)),
    })
}

async fn get_trapezoid(State(st): State<Arc<AppState>>, Query(q): Query<TrapezoidQuery>) -> Response {
    match trapezoid(&st.report, &q) {
        Ok(t) => json_response(StatusCode::OK, serde_json::to_string(&t).expect("trapezoid serializes")),
        Err(r) => reject(StatusCode::BAD_REQUEST, &r),
    }
}

fn local_origin(origin: &HeaderValue) -> bool {
    let Ok(s) = origin.to_str() else { return false };
    let rest = s.strip_prefix("http://").or_else(|| s.strip_prefix("https://")).unwrap_or("");
    let host = rest.split(':').next().unwrap_or("");
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

/// Validates the report, then builds the routes.
pub fn router(report: Report) -> Result<Router, CliError> {
    report.validate()?;
    let report_json = serde_json::to_string(&report).map_err(|e| CliError::Report(e.to_string()))?;
    let state = Arc::new(AppState { report, report_json });
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|o, _| local_origin(o)))
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Ok(Router::new()
        .route("/api/report", get(get_report))
        .route("/api/perturb", post(post_perturb))
        .route("/api/trapezoid", get(get_trapezoid))
        .layer(cors)
        .with_state(state))
}

pub fn run(args: &ServeArgs) -> Result<(), CliError> {
    let report = Report::read(&args.report)?;
    let app = router(report)?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|_| CliError::Input(format!("invalid address {}:{}", args.host, args.port)))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("runtime", e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::io(addr.to_string(), e))?;
        eprintln!("serving {} on http://{addr}", args.report.display());
        axum::serve(listener, app).await.map_err(|e| CliError::io(addr.to_string(), e))
    })
}
