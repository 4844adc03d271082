//! Policy Iteration over an enumerated state space.
//!
//! Successor lists and rewards are precomputed once per (state, action)
//! into a [`SolverModel`]; evaluation and improvement then run as
//! Jacobi sweeps, parallel across states.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::money_to_f64;
use crate::error::MdpError;
use crate::mdp::{Action, DelegationMdp, StateSpace};

#[derive(Clone, Debug, PartialEq)]
pub struct DpConfig {
    /// Discount factor, in `[0, 1)`.
    pub gamma: f64,
    pub eval_tolerance: f64,
    pub max_eval_sweeps: usize,
    pub max_improvement_rounds: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig { gamma: 0.99, eval_tolerance: 1e-6, max_eval_sweeps: 100_000, max_improvement_rounds: 1_000 }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.eval_tolerance.is_nan() || self.eval_tolerance <= 0.0 {
            return Err("eval_tolerance must be positive".into());
        }
        if self.max_eval_sweeps == 0 || self.max_improvement_rounds == 0 {
            return Err("sweep and round caps must be positive".into());
        }
        Ok(())
    }
}

/// State values indexed by state id.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn zeros(n: usize) -> Self {
        ValueTable(vec![0.0; n])
    }

    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// One action's model in one state.
#[derive(Clone, Debug)]
pub struct ActionModel {
    pub action: Action,
    pub reward: f64,
    /// `(state id, probability)`, sorted by id.
    pub successors: Vec<(u32, f64)>,
}

impl ActionModel {
    fn q(&self, gamma: f64, v: &[f64]) -> f64 {
        self.successors.iter().map(|&(j, p)| p * (self.reward + gamma * v[j as usize])).sum()
    }
}

/// Precomputed rewards and sparse successor lists for every valid
/// (state, action) pair, in action tie-breaking order.
#[derive(Clone, Debug)]
pub struct SolverModel {
    actions: Vec<Vec<ActionModel>>,
}

impl SolverModel {
    pub fn build(mdp: &DelegationMdp, space: &StateSpace) -> Result<SolverModel, MdpError> {
        let actions = space
            .states()
            .par_iter()
            .map(|s| {
                mdp.valid_actions(s)
                    .iter()
                    .map(|a| {
                        let successors = mdp
                            .transitions(s, a)?
                            .into_iter()
                            .map(|(next, p)| {
                                let id = space.id(&next).expect("state space is closed under successors");
                                (id as u32, p)
                            })
                            .collect();
                        Ok(ActionModel { action: a, reward: money_to_f64(mdp.reward(s, a)?), successors })
                    })
                    .collect::<Result<Vec<_>, MdpError>>()
            })
            .collect::<Result<Vec<_>, MdpError>>()?;
        Ok(SolverModel { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self, s: usize) -> &[ActionModel] {
        &self.actions[s]
    }

    fn model_for(&self, s: usize, a: Action) -> &ActionModel {
        self.actions[s].iter().find(|m| m.action == a).expect("policy action must be valid")
    }

    /// `Q_v(s, a)` for every valid action of `s`.
    pub fn action_values(&self, s: usize, gamma: f64, v: &ValueTable) -> Vec<(Action, f64)> {
        self.actions[s].iter().map(|m| (m.action, m.q(gamma, &v.0))).collect()
    }
}

/// A deterministic policy over an enumerated space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DensePolicy(pub Vec<Action>);

impl DensePolicy {
    /// Reject on arrivals, none on departures.
    pub fn initial(model: &SolverModel) -> Self {
        DensePolicy(
            (0..model.len())
                .map(|s| {
                    let acts = model.actions(s);
                    if acts.iter().any(|m| m.action == Action::Reject) {
                        Action::Reject
                    } else {
                        acts[0].action
                    }
                })
                .collect(),
        )
    }

    pub fn action(&self, s: usize) -> Action {
        self.0[s]
    }
}

#[derive(Clone, Debug)]
pub struct EvaluationOutcome {
    pub values: ValueTable,
    pub sweeps: usize,
    pub converged: bool,
    /// Max per-state change of every sweep.
    pub deltas: Vec<f64>,
}

/// Iterative policy evaluation, starting from `v`.
pub fn policy_evaluation(
    model: &SolverModel,
    policy: &DensePolicy,
    v: ValueTable,
    cfg: &DpConfig,
) -> EvaluationOutcome {
    let mut v = v;
    let mut deltas = Vec::new();
    for sweep in 1..=cfg.max_eval_sweeps {
        let next: Vec<f64> =
            (0..model.len()).into_par_iter().map(|s| model.model_for(s, policy.action(s)).q(cfg.gamma, &v.0)).collect();
        let next = ValueTable(next);
        let delta = next.max_abs_diff(&v);
        deltas.push(delta);
        v = next;
        if delta < cfg.eval_tolerance {
            return EvaluationOutcome { values: v, sweeps: sweep, converged: true, deltas };
        }
    }
    EvaluationOutcome { values: v, sweeps: cfg.max_eval_sweeps, converged: false, deltas }
}

fn relative_tie_tolerance(x: f64) -> f64 {
    1e-12 * (1.0 + x.abs())
}

/// Greedy action of `s` w.r.t. `v`, first in tie-breaking order among
/// actions within a relative `1e-12` of the best value.
pub fn greedy_action(model: &SolverModel, s: usize, v: &ValueTable, gamma: f64) -> (Action, f64) {
    let qs = model.action_values(s, gamma, v);
    let best = qs.iter().map(|&(_, q)| q).fold(f64::NEG_INFINITY, f64::max);
    let tol = relative_tie_tolerance(best);
    qs.into_iter().find(|&(_, q)| q >= best - tol).expect("every state has a valid action")
}

/// Improves `current` greedily w.r.t. `v`. A state keeps its current
/// action unless another action is strictly better beyond round-off, which
/// guarantees termination in the presence of ties.
pub fn policy_improvement(
    model: &SolverModel,
    v: &ValueTable,
    current: &DensePolicy,
    gamma: f64,
) -> (DensePolicy, bool) {
    let actions: Vec<Action> = (0..model.len())
        .into_par_iter()
        .map(|s| {
            let (candidate, q_best) = greedy_action(model, s, v, gamma);
            let keep = current.action(s);
            let q_keep = model.model_for(s, keep).q(gamma, &v.0);
            if candidate != keep && q_best > q_keep + relative_tie_tolerance(q_best) {
                candidate
            } else {
                keep
            }
        })
        .collect();
    let changed = actions != current.0;
    (DensePolicy(actions), changed)
}

/// `max_s |v(s) − max_a Q_v(s, a)|`.
pub fn bellman_residual(model: &SolverModel, v: &ValueTable, gamma: f64) -> f64 {
    (0..model.len())
        .into_par_iter()
        .map(|s| (v.0[s] - greedy_action(model, s, v, gamma).1).abs())
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct PiDiagnostics {
    pub states: usize,
    pub rounds: usize,
    pub total_sweeps: usize,
    pub bellman_residual: f64,
    /// False if the round cap was hit before the policy stabilized.
    pub converged: bool,
    /// True if any evaluation hit its sweep cap.
    pub evaluation_capped: bool,
}

#[derive(Clone, Debug)]
pub struct PiOutcome {
    pub policy: DensePolicy,
    pub values: ValueTable,
    pub diagnostics: PiDiagnostics,
    /// Policy after each improvement round (the first entry is the initial policy).
    pub history: Vec<DensePolicy>,
}

/// Policy Iteration from the all-reject policy.
pub fn policy_iteration(model: &SolverModel, cfg: &DpConfig) -> PiOutcome {
    let mut policy = DensePolicy::initial(model);
    let mut values = ValueTable::zeros(model.len());
    let mut history = vec![policy.clone()];
    let mut total_sweeps = 0;
    let mut evaluation_capped = false;
    let mut converged = false;
    let mut rounds = 0;
    while rounds < cfg.max_improvement_rounds {
        rounds += 1;
        let eval = policy_evaluation(model, &policy, values, cfg);
        total_sweeps += eval.sweeps;
        evaluation_capped |= !eval.converged;
        values = eval.values;
        let (next, changed) = policy_improvement(model, &values, &policy, cfg.gamma);
        if !changed {
            converged = true;
            break;
        }
        policy = next;
        history.push(policy.clone());
    }
    if !converged {
        // the last improved policy has not been evaluated yet
        let eval = policy_evaluation(model, &policy, values, cfg);
        total_sweeps += eval.sweeps;
        evaluation_capped |= !eval.converged;
        values = eval.values;
    }
    let bellman_residual = bellman_residual(model, &values, cfg.gamma);
    PiOutcome {
        diagnostics: PiDiagnostics {
            states: model.len(),
            rounds,
            total_sweeps,
            bellman_residual,
            converged,
            evaluation_capped,
        },
        policy,
        values,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Event, State};
    use crate::presets;

    fn tiny() -> (DelegationMdp, StateSpace, SolverModel) {
        let mdp = DelegationMdp::new(presets::tiny_contract());
        let space = StateSpace::enumerate(&mdp, 1000).unwrap();
        let model = SolverModel::build(&mdp, &space).unwrap();
        (mdp, space, model)
    }

    #[test]
    fn always_reject_has_zero_value() {
        let (_, _, model) = tiny();
        let policy = DensePolicy::initial(&model);
        let out = policy_evaluation(&model, &policy, ValueTable::zeros(model.len()), &DpConfig::default());
        assert!(out.converged);
        assert!(out.values.0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn self_loop_is_geometric_series() {
        let model = SolverModel {
            actions: vec![vec![ActionModel { action: Action::Accept, reward: 3.0, successors: vec![(0, 1.0)] }]],
        };
        let cfg = DpConfig { gamma: 0.9, eval_tolerance: 1e-12, ..DpConfig::default() };
        let out = policy_evaluation(&model, &DensePolicy(vec![Action::Accept]), ValueTable::zeros(1), &cfg);
        assert!((out.values.0[0] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn evaluation_is_a_gamma_contraction() {
        let (_, _, model) = tiny();
        let cfg = DpConfig { gamma: 0.9, eval_tolerance: 1e-12, ..DpConfig::default() };
        let greedyish = DensePolicy((0..model.len()).map(|s| model.actions(s)[0].action).collect());
        let out = policy_evaluation(&model, &greedyish, ValueTable::zeros(model.len()), &cfg);
        for w in out.deltas.windows(2) {
            if w[0] > 1e-6 {
                assert!(w[1] / w[0] <= cfg.gamma + 1e-6, "ratio {}", w[1] / w[0]);
            }
        }
    }

    #[test]
    fn improvement_keeps_singletons() {
        let (mdp, space, model) = tiny();
        let v = ValueTable(vec![1.0; model.len()]);
        let (p, _) = policy_improvement(&model, &v, &DensePolicy::initial(&model), 0.9);
        for (id, s) in space.states().iter().enumerate() {
            let valid = mdp.valid_actions(s);
            if valid.len() == 1 {
                assert_eq!(p.action(id), valid.iter().next().unwrap());
            }
        }
    }

    #[test]
    fn policy_iteration_on_tiny_terminates_with_small_residual() {
        let (mdp, space, model) = tiny();
        let cfg = DpConfig::default();
        let out = policy_iteration(&model, &cfg);
        assert!(out.diagnostics.converged);
        assert!(out.diagnostics.bellman_residual < 10.0 * cfg.eval_tolerance);
        let start = State::new(vec![0], vec![0], Event::Arrival(0));
        assert_eq!(out.policy.action(space.id(&start).unwrap()), Action::Accept);
        let dep = State::new(vec![1], vec![0], Event::Departure(0));
        assert!(mdp.valid_actions(&dep).contains(out.policy.action(space.id(&dep).unwrap())));
    }

    #[test]
    fn policy_iteration_is_deterministic() {
        let (_, _, model) = tiny();
        let a = policy_iteration(&model, &DpConfig::default());
        let b = policy_iteration(&model, &DpConfig::default());
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn config_validation() {
        assert!(DpConfig { gamma: 1.0, ..DpConfig::default() }.validate().is_err());
        assert!(DpConfig { eval_tolerance: 0.0, ..DpConfig::default() }.validate().is_err());
        assert!(DpConfig::default().validate().is_ok());
    }
}
