//! Admission-decision HTTP service.
//!
//! The orchestrator owns the deployment state and sends it with every
//! call; the service rebuilds the MDP state, asks the loaded policy and
//! answers with the action and its immediate reward.
//!
//! `POST /decision`
//!
//! ```json
//! {
//!   "service_type": 1,
//!   "local_instances": [0, 0, 0],
//!   "provider_instances": [0, 0, 0],
//!   "local_available": [15, 12, 15],
//!   "provider_available": [10, 14, 24]
//! }
//! ```
//!
//! answers
//!
//! ```json
//! {"action": "accept", "expected_reward": "95", "policy_label": "PI", "fallback_used": false}
//! ```
//!
//! Service types are numbered from 1. `expected_reward` is an exact
//! rational rendered as `"p"` or `"p/q"`. `GET /health` reports the policy
//! label, config hash, uptime and the number of decision calls received.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::State as AxumState;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nfvac_core::config::{contract_hash, format_money, RunConfig};
use nfvac_core::mdp::{Action, Event, State};
use nfvac_core::policy_file::PolicyFile;
use nfvac_core::{AdmissionPolicy, DelegationMdp, PolicyKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    /// 1-based service type of the arriving request.
    pub service_type: usize,
    /// Running instances per type in the consumer domain.
    pub local_instances: Vec<u32>,
    /// Running instances per type delegated to the provider domain.
    pub provider_instances: Vec<u32>,
    /// Free consumer-domain resources per resource type.
    pub local_available: Vec<u32>,
    /// Free extended provider quota per resource type.
    pub provider_available: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub action: Action,
    pub expected_reward: String,
    pub policy_label: String,
    pub fallback_used: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub policy_label: String,
    pub config_hash: String,
    pub uptime_seconds: f64,
    pub requests: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("service_type {0} is not in the catalog")]
    UnknownService(usize),
    #[error("{field} has {found} entries, expected {expected}")]
    Shape { field: &'static str, expected: usize, found: usize },
    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] nfvac_core::ConfigError),
    #[error(transparent)]
    Policy(#[from] nfvac_core::PolicyFileError),
}

/// Loaded policy and contract, shared read-only by all handlers.
pub struct AppState {
    mdp: DelegationMdp,
    policy: PolicyKind,
    config_hash: String,
    started: Instant,
    requests: AtomicU64,
}

impl AppState {
    pub fn new(mdp: DelegationMdp, policy: PolicyKind) -> Self {
        let config_hash = contract_hash(mdp.contract());
        AppState { mdp, policy, config_hash, started: Instant::now(), requests: AtomicU64::new(0) }
    }

    /// Loads the config and the policy. `policy` is a policy file path or
    /// one of the built-in names `greedy` and `always-reject`.
    pub fn load(config: &Path, policy: &str, full_scale: bool, force: bool) -> Result<Self, StartupError> {
        let cfg = RunConfig::load(config)?;
        let contract = cfg.contract(full_scale)?;
        let kind = match policy {
            "greedy" => PolicyKind::Greedy,
            "always-reject" => PolicyKind::AlwaysReject,
            path => PolicyKind::from_table(PolicyFile::load(Path::new(path), &contract, force)?.table),
        };
        Ok(AppState::new(DelegationMdp::new(contract), kind))
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            policy_label: self.policy.label().to_string(),
            config_hash: self.config_hash.clone(),
            uptime_seconds: self.started.elapsed().as_secs_f64(),
            requests: self.requests(),
        }
    }

    /// Answers one request. Does not touch the counter.
    pub fn decide(&self, req: &DecisionRequest) -> Result<DecisionResponse, RequestError> {
        let contract = self.mdp.contract();
        let n = contract.num_services();
        let r = contract.num_resources();
        if req.service_type == 0 || req.service_type > n {
            return Err(RequestError::UnknownService(req.service_type));
        }
        for (field, found, expected) in [
            ("local_instances", req.local_instances.len(), n),
            ("provider_instances", req.provider_instances.len(), n),
            ("local_available", req.local_available.len(), r),
            ("provider_available", req.provider_available.len(), r),
        ] {
            if found != expected {
                return Err(RequestError::Shape { field, expected, found });
            }
        }
        let s = State::new(
            req.local_instances.clone(),
            req.provider_instances.clone(),
            Event::Arrival(req.service_type - 1),
        );
        self.mdp.check_state(&s).map_err(|e| RequestError::Inconsistent(e.to_string()))?;
        let local = self.mdp.local_available(&s.occupancy).expect("checked");
        let provider = self.mdp.extended_available(&s.occupancy).expect("checked");
        if local.as_slice() != req.local_available.as_slice() {
            return Err(RequestError::Inconsistent(format!(
                "local_available {:?} disagrees with the instance counts, which leave {local}",
                req.local_available
            )));
        }
        if provider.as_slice() != req.provider_available.as_slice() {
            return Err(RequestError::Inconsistent(format!(
                "provider_available {:?} disagrees with the instance counts, which leave {provider}",
                req.provider_available
            )));
        }
        let decision = self.policy.decide(&self.mdp, &s);
        let reward = self.mdp.reward(&s, decision.action).expect("policies return valid actions");
        Ok(DecisionResponse {
            action: decision.action,
            expected_reward: format_money(reward),
            policy_label: self.policy.label().to_string(),
            fallback_used: decision.fallback_used,
        })
    }
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

async fn decision(
    AxumState(state): AxumState<Arc<AppState>>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Response {
    state.requests.fetch_add(1, Ordering::Relaxed);
    let Json(req) = match body {
        Ok(b) => b,
        Err(rejection) => return error(rejection.status(), rejection.body_text()),
    };
    match state.decide(&req) {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

async fn health(AxumState(state): AxumState<Arc<AppState>>) -> Json<Health> {
    Json(state.health())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new().route("/decision", post(decision)).route("/health", get(health)).with_state(state)
}

/// Serves on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use nfvac_core::presets;

    fn app(policy: PolicyKind) -> AppState {
        AppState::new(DelegationMdp::new(presets::table1_desk_contract()), policy)
    }

    fn request(service_type: usize, l: [u32; 3], f: [u32; 3], la: [u32; 3], pa: [u32; 3]) -> DecisionRequest {
        DecisionRequest {
            service_type,
            local_instances: l.to_vec(),
            provider_instances: f.to_vec(),
            local_available: la.to_vec(),
            provider_available: pa.to_vec(),
        }
    }

    #[test]
    fn greedy_delegates_when_local_is_full() {
        let app = app(PolicyKind::Greedy);
        // desk contract: CD [15,12,15], hard PD limit [10,14,24]; type 1 demands [4,2,1]
        let resp = app.decide(&request(1, [3, 0, 0], [0, 0, 0], [3, 6, 12], [10, 14, 24])).unwrap();
        assert_eq!(resp.action, Action::Delegate);
        assert_eq!(resp.expected_reward, "15");
        let resp = app.decide(&request(1, [0, 0, 0], [0, 0, 0], [15, 12, 15], [10, 14, 24])).unwrap();
        assert_eq!((resp.action, resp.expected_reward.as_str()), (Action::Accept, "95"));
    }

    #[test]
    fn inconsistent_requests_are_rejected() {
        let app = app(PolicyKind::Greedy);
        assert_eq!(
            app.decide(&request(4, [0, 0, 0], [0, 0, 0], [15, 12, 15], [10, 14, 24])),
            Err(RequestError::UnknownService(4))
        );
        assert!(matches!(
            app.decide(&request(1, [9, 0, 0], [0, 0, 0], [0, 0, 0], [10, 14, 24])),
            Err(RequestError::Inconsistent(_))
        ));
        assert!(matches!(
            app.decide(&request(1, [0, 0, 0], [0, 0, 0], [15, 12, 14], [10, 14, 24])),
            Err(RequestError::Inconsistent(_))
        ));
        let mut short = request(1, [0, 0, 0], [0, 0, 0], [15, 12, 15], [10, 14, 24]);
        short.local_instances.pop();
        assert!(matches!(app.decide(&short), Err(RequestError::Shape { .. })));
    }
}
