//! Admission control for network-service requests in a two-domain
//! federation: a consumer domain either deploys a request on its own
//! resources, delegates it to a provider domain under a resource quota,
//! or rejects it.
//!
//! The decision problem is modelled as an MDP ([`mdp`]), solved exactly
//! with Policy Iteration ([`dp`]) and approximately with Q-Learning and
//! R-Learning ([`rl`]), and evaluated by discrete-event simulation
//! ([`sim`], [`eval`]).

pub mod config;
pub mod domain;
pub mod dp;
pub mod error;
pub mod eval;
pub mod mdp;
pub mod policy;
pub mod policy_file;
pub mod presets;
pub mod rl;
pub mod sim;

pub use domain::{FederationContract, Money, ResourceVector, ServiceType};
pub use error::{ConfigError, DomainError, EvalError, MdpError, PolicyFileError, SimError};
pub use mdp::{Action, ActionSet, DelegationMdp, Event, State, StateSpace};
pub use policy::{AdmissionPolicy, Decision, PolicyKind, PolicySource, PolicyTable};
