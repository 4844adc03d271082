//! Tabular Q-Learning (discounted) and R-Learning (average reward).
//!
//! Both agents interact with the [`Simulator`] over `n` episodes of `m`
//! requests. Learning rate, exploration rate and (for R-Learning) the
//! average-reward step size decay as `x̄ / (1 + φ·i)` at the start of
//! episode `i`. Departures are stepped with `none` and updated like any
//! other transition so values propagate through them.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::money_to_f64;
use crate::mdp::{Action, ActionSet, DelegationMdp, State};
use crate::policy::{PolicySource, PolicyTable};
use crate::sim::{derive_seed, generate_trace, Simulator};

#[derive(Clone, Debug, PartialEq)]
pub struct RlHyper {
    /// `n`.
    pub episodes: usize,
    /// `m`: arrivals per episode.
    pub requests_per_episode: usize,
    pub alpha0: f64,
    pub beta0: f64,
    pub epsilon0: f64,
    /// `φ`.
    pub decay: f64,
}

impl Default for RlHyper {
    fn default() -> Self {
        RlHyper { episodes: 2500, requests_per_episode: 4000, alpha0: 1.0, beta0: 1.0, epsilon0: 1.0, decay: 0.025 }
    }
}

impl RlHyper {
    pub fn validate(&self) -> Result<(), String> {
        if self.episodes == 0 || self.requests_per_episode == 0 {
            return Err("episodes and requests_per_episode must be positive".into());
        }
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0 && self.epsilon0 > 0.0) {
            return Err("alpha0, beta0 and epsilon0 must be positive".into());
        }
        if self.epsilon0 > 1.0 || self.alpha0 > 1.0 {
            return Err("alpha0 and epsilon0 must not exceed 1".into());
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err("decay must be a nonnegative number".into());
        }
        Ok(())
    }
}

/// `x0 / (1 + φ·episode)`, with episodes counted from 0.
pub fn decay(x0: f64, phi: f64, episode: usize) -> f64 {
    x0 / (1.0 + phi * episode as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    QLearning { gamma: f64 },
    RLearning,
}

impl Algorithm {
    /// `QL-20` for Q-Learning with γ = 0.20, `RL` for R-Learning.
    pub fn label(self) -> String {
        match self {
            Algorithm::QLearning { gamma } => format!("QL-{}", (gamma * 100.0).round() as i64),
            Algorithm::RLearning => "RL".to_string(),
        }
    }

    pub fn source(self) -> PolicySource {
        match self {
            Algorithm::QLearning { .. } => PolicySource::QLearning,
            Algorithm::RLearning => PolicySource::RLearning,
        }
    }
}

/// Action values of one state; only valid actions are ever read or written.
#[derive(Clone, Debug, PartialEq)]
pub struct QRow {
    valid: ActionSet,
    values: [f64; 4],
    visits: [u32; 4],
}

impl QRow {
    pub fn valid(&self) -> ActionSet {
        self.valid
    }

    pub fn value(&self, a: Action) -> Option<f64> {
        self.valid.contains(a).then(|| self.values[a.index()])
    }

    /// Number of updates applied to `(s, a)`.
    pub fn visits(&self, a: Action) -> u32 {
        self.visits[a.index()]
    }

    pub fn max(&self) -> f64 {
        self.valid.iter().map(|a| self.values[a.index()]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// First action in tie-breaking order attaining the max.
    pub fn greedy(&self) -> Action {
        let best = self.max();
        self.valid.iter().find(|a| self.values[a.index()] == best).expect("row has a valid action")
    }
}

/// Sparse Q-table keyed by state, zero-initialized on first touch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QTable {
    rows: HashMap<State, QRow>,
}

impl QTable {
    pub fn new() -> Self {
        QTable::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: &State) -> Option<&QRow> {
        self.rows.get(s)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&State, &QRow)> {
        self.rows.iter()
    }

    /// `Q[s, a]`, zero for untouched entries.
    pub fn get(&self, s: &State, a: Action) -> f64 {
        self.rows.get(s).and_then(|r| r.value(a)).unwrap_or(0.0)
    }

    /// `max_a Q[s, a]` over the valid actions of `s`; zero for unseen states.
    pub fn max(&self, s: &State) -> f64 {
        self.rows.get(s).map_or(0.0, QRow::max)
    }

    fn entry(&mut self, mdp: &DelegationMdp, s: &State) -> &mut QRow {
        if !self.rows.contains_key(s) {
            self.rows.insert(s.clone(), QRow { valid: mdp.valid_actions(s), values: [0.0; 4], visits: [0; 4] });
        }
        self.rows.get_mut(s).expect("inserted above")
    }

    /// Sets an entry directly; panics if `a` is not valid in `s`.
    pub fn set(&mut self, mdp: &DelegationMdp, s: &State, a: Action, value: f64) {
        let row = self.entry(mdp, s);
        assert!(row.valid.contains(a), "{a} is not valid in this state");
        row.values[a.index()] = value;
    }

    /// Greedy action, ties broken by the fixed action order.
    pub fn greedy(&self, mdp: &DelegationMdp, s: &State) -> Action {
        match self.rows.get(s) {
            Some(row) => row.greedy(),
            None => mdp.valid_actions(s).iter().next().expect("every state has a valid action"),
        }
    }

    /// The greedy policy over every visited state.
    pub fn greedy_policy(&self, label: impl Into<String>, source: PolicySource) -> PolicyTable {
        let mut table = PolicyTable::new(label, source);
        for (s, row) in &self.rows {
            table.actions.insert(s.clone(), row.greedy());
        }
        table
    }
}

/// With probability `epsilon` a uniformly random valid action, otherwise
/// the greedy one.
pub fn epsilon_greedy(mdp: &DelegationMdp, s: &State, q: &QTable, epsilon: f64, rng: &mut impl Rng) -> Action {
    if rng.random::<f64>() < epsilon {
        let valid = mdp.valid_actions(s).to_vec();
        valid[rng.random_range(0..valid.len())]
    } else {
        q.greedy(mdp, s)
    }
}

/// `Q[s,a] += α(r + γ·max_a' Q[s',a'] − Q[s,a])`. A missing `next` ends the
/// episode and bootstraps from zero.
#[allow(clippy::too_many_arguments)]
pub fn q_learning_update(
    q: &mut QTable,
    mdp: &DelegationMdp,
    s: &State,
    a: Action,
    reward: f64,
    next: Option<&State>,
    alpha: f64,
    gamma: f64,
) {
    let target = reward + gamma * next.map_or(0.0, |n| q.max(n));
    let row = q.entry(mdp, s);
    debug_assert!(row.valid.contains(a));
    let old = row.values[a.index()];
    row.values[a.index()] = old + alpha * (target - old);
    row.visits[a.index()] += 1;
}

/// R-Learning step. The action value moves toward `(r − ρ) + max_a' Q[s',a']`;
/// then, only if `a` is (still) greedy in `s`, `ρ` moves toward
/// `r − max_ā Q[s,ā] + max_a' Q[s',a']`.
#[allow(clippy::too_many_arguments)]
pub fn r_learning_update(
    q: &mut QTable,
    rho: &mut f64,
    mdp: &DelegationMdp,
    s: &State,
    a: Action,
    reward: f64,
    next: Option<&State>,
    alpha: f64,
    beta: f64,
) {
    let next_max = next.map_or(0.0, |n| q.max(n));
    let row = q.entry(mdp, s);
    debug_assert!(row.valid.contains(a));
    let old = row.values[a.index()];
    row.values[a.index()] = old + alpha * ((reward - *rho) + next_max - old);
    row.visits[a.index()] += 1;
    let best = row.max();
    if row.values[a.index()] == best {
        *rho += beta * (reward - best + next_max - *rho);
    }
}

/// State of a run when a checkpoint is reached.
pub struct Checkpoint<'a> {
    /// Episodes completed so far.
    pub episodes: usize,
    pub q: &'a QTable,
    /// Current average-reward estimate (always 0 for Q-Learning).
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub algorithm: Algorithm,
    pub q: QTable,
    pub rho: f64,
    pub steps: usize,
}

impl TrainOutcome {
    pub fn policy(&self) -> PolicyTable {
        self.q.greedy_policy(self.algorithm.label(), self.algorithm.source())
    }
}

/// Trains one agent. `checkpoints` lists episode counts (ascending) after
/// which `on_checkpoint` is called with the current table.
///
/// Every episode replays a freshly sampled trace of `m` requests starting
/// from the empty system; the episode ends with the update of its `m`-th
/// arrival.
pub fn train(
    mdp: &DelegationMdp,
    hyper: &RlHyper,
    algorithm: Algorithm,
    seed: u64,
    checkpoints: &[usize],
    mut on_checkpoint: impl FnMut(Checkpoint<'_>),
) -> TrainOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5eed]));
    let mut q = QTable::new();
    let mut rho = 0.0;
    let mut steps = 0;
    let mut next_checkpoint = checkpoints.iter().copied().peekable();
    for episode in 0..hyper.episodes {
        let alpha = decay(hyper.alpha0, hyper.decay, episode);
        let epsilon = decay(hyper.epsilon0, hyper.decay, episode);
        let beta = decay(hyper.beta0, hyper.decay, episode);
        let trace = generate_trace(
            mdp.contract().catalog(),
            hyper.requests_per_episode,
            derive_seed(seed, &[0x7ace, episode as u64]),
        );
        let mut sim = Simulator::new(mdp, &trace, None);
        let mut arrivals = 0;
        while let Some(s) = sim.state() {
            let arrival = s.event.is_arrival();
            let a = if arrival { epsilon_greedy(mdp, &s, &q, epsilon, &mut rng) } else { Action::None };
            let out = sim.step(a).expect("agent actions are valid");
            let reward = money_to_f64(out.reward);
            match algorithm {
                Algorithm::QLearning { gamma } => {
                    q_learning_update(&mut q, mdp, &s, a, reward, out.next.as_ref(), alpha, gamma)
                }
                Algorithm::RLearning => {
                    r_learning_update(&mut q, &mut rho, mdp, &s, a, reward, out.next.as_ref(), alpha, beta)
                }
            }
            steps += 1;
            if arrival {
                arrivals += 1;
                if arrivals == hyper.requests_per_episode {
                    break;
                }
            }
        }
        while next_checkpoint.peek() == Some(&(episode + 1)) {
            next_checkpoint.next();
            on_checkpoint(Checkpoint { episodes: episode + 1, q: &q, rho });
        }
    }
    TrainOutcome { algorithm, q, rho, steps }
}
