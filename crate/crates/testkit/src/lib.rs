//! Test-only helpers: a brute-force value-iteration oracle that rebuilds
//! the delegation MDP from the raw contract numbers, and a generator of
//! small random contracts.
//!
//! The oracle deliberately shares no code with the core model: states,
//! feasibility, costs and event probabilities are recomputed here from
//! the contract's plain numbers so that agreement between the two is
//! evidence rather than tautology.

use std::collections::{HashMap, VecDeque};

use nfvac_core::mdp::{Action, Event, State, StateSpace};
use nfvac_core::{DelegationMdp, FederationContract, Money, ResourceVector, ServiceType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_f64(m: Money) -> f64 {
    *m.numer() as f64 / *m.denom() as f64
}

/// Plain-number copy of a contract.
#[derive(Clone, Debug)]
struct Raw {
    local: Vec<i64>,
    quota: Vec<i64>,
    hard: Vec<i64>,
    demand: Vec<Vec<i64>>,
    revenue: Vec<f64>,
    fee: Vec<f64>,
    overcharged_fee: Vec<f64>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl Raw {
    fn new(c: &FederationContract) -> Raw {
        let v = |r: &ResourceVector| r.as_slice().iter().map(|&x| i64::from(x)).collect::<Vec<_>>();
        let hard = c
            .quota()
            .as_slice()
            .iter()
            .zip(c.reject_thresholds())
            .map(|(&q, t)| (i128::from(q) * i128::from(*t.numer())).div_euclid(i128::from(*t.denom())) as i64)
            .collect();
        Raw {
            local: v(c.local_capacity()),
            quota: v(c.quota()),
            hard,
            demand: c.catalog().iter().map(|s| v(&s.demand)).collect(),
            revenue: c.catalog().iter().map(|s| to_f64(s.revenue)).collect(),
            fee: c.catalog().iter().map(|s| to_f64(s.delegation_fee)).collect(),
            overcharged_fee: c.catalog().iter().map(|s| to_f64(s.delegation_fee * s.overcharge_scale)).collect(),
            lambda: c.catalog().iter().map(|s| s.arrival_rate).collect(),
            mu: c.catalog().iter().map(|s| s.departure_rate).collect(),
        }
    }

    fn services(&self) -> usize {
        self.demand.len()
    }

    fn left(&self, total: &[i64], counts: &[u32]) -> Vec<i64> {
        (0..total.len())
            .map(|k| total[k] - (0..self.services()).map(|i| i64::from(counts[i]) * self.demand[i][k]).sum::<i64>())
            .collect()
    }

    fn fits(&self, i: usize, room: &[i64]) -> bool {
        self.demand[i].iter().zip(room).all(|(d, r)| d <= r)
    }
}

type Key = (Vec<u32>, Vec<u32>, bool, usize);
type Successors = Vec<(Key, f64)>;
/// Local and delegated counts.
type Counts = (Vec<u32>, Vec<u32>);

fn key_of(s: &State) -> Key {
    let (arr, i) = match s.event {
        Event::Arrival(i) => (true, i),
        Event::Departure(i) => (false, i),
    };
    (s.local().to_vec(), s.delegated().to_vec(), arr, i)
}

/// One (action, reward, successors) triple of the oracle model.
#[derive(Clone, Debug)]
struct Choice {
    action: Action,
    reward: f64,
    next: Vec<(usize, f64)>,
}

/// Value-iteration solution of the discounted delegation MDP.
pub struct Oracle {
    index: HashMap<Key, usize>,
    keys: Vec<Key>,
    choices: Vec<Vec<Choice>>,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub sweeps: usize,
}

impl Oracle {
    /// Builds the model from scratch and iterates the Bellman optimality
    /// operator until successive values differ by at most `tol`.
    pub fn solve(contract: &FederationContract, gamma: f64, tol: f64) -> Oracle {
        let raw = Raw::new(contract);
        let n = raw.services();
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut keys: Vec<Key> = Vec::new();
        let mut queue = VecDeque::new();
        for i in 0..n {
            let k = (vec![0; n], vec![0; n], true, i);
            index.insert(k.clone(), keys.len());
            keys.push(k.clone());
            queue.push_back(k);
        }
        let mut pending: Vec<Vec<(Action, f64, Successors)>> = Vec::new();
        while let Some(k) = queue.pop_front() {
            let opts = expand(&raw, &k);
            for (_, _, next) in &opts {
                for (nk, _) in next {
                    if !index.contains_key(nk) {
                        index.insert(nk.clone(), keys.len());
                        keys.push(nk.clone());
                        queue.push_back(nk.clone());
                    }
                }
            }
            pending.push(opts);
        }
        let choices: Vec<Vec<Choice>> = pending
            .into_iter()
            .map(|opts| {
                opts.into_iter()
                    .map(|(action, reward, next)| Choice {
                        action,
                        reward,
                        next: next.into_iter().map(|(k, p)| (index[&k], p)).collect(),
                    })
                    .collect()
            })
            .collect();

        let mut values = vec![0.0; keys.len()];
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let new: Vec<f64> = choices
                .iter()
                .map(|cs| {
                    cs.iter()
                        .map(|c| c.reward + gamma * c.next.iter().map(|&(j, p)| p * values[j]).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let delta = new.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            values = new;
            if delta <= tol || sweeps > 1_000_000 {
                break;
            }
        }
        Oracle { index, keys, choices, values, gamma, sweeps }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, s: &State) -> bool {
        self.index.contains_key(&key_of(s))
    }

    /// Action values `r + γ Σ p V` of every valid action in `s`.
    pub fn q_values(&self, s: &State) -> Option<Vec<(Action, f64)>> {
        let id = *self.index.get(&key_of(s))?;
        Some(
            self.choices[id]
                .iter()
                .map(|c| {
                    (c.action, c.reward + self.gamma * c.next.iter().map(|&(j, p)| p * self.values[j]).sum::<f64>())
                })
                .collect(),
        )
    }

    /// Successor distribution of `(s, a)` as computed by the oracle.
    pub fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        let id = *self.index.get(&key_of(s))?;
        let c = self.choices[id].iter().find(|c| c.action == a)?;
        Some(
            c.next
                .iter()
                .map(|&(j, p)| {
                    let (l, f, arr, i) = self.keys[j].clone();
                    let ev = if arr { Event::Arrival(i) } else { Event::Departure(i) };
                    (State::new(l, f, ev), p)
                })
                .collect(),
        )
    }

    /// Whether `a` attains the best action value in `s` within `tol`.
    pub fn is_optimal(&self, s: &State, a: Action, tol: f64) -> bool {
        let Some(q) = self.q_values(s) else { return false };
        let best = q.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        q.iter().any(|&(b, v)| b == a && v >= best - tol)
    }
}

/// Valid actions, rewards and successor distributions of one state.
fn expand(raw: &Raw, k: &Key) -> Vec<(Action, f64, Successors)> {
    let (l, f, arrival, i) = k;
    let mut out = Vec::new();
    if !arrival {
        let (a, b) = (f64::from(l[*i]), f64::from(f[*i]));
        let mut branches = Vec::new();
        if l[*i] > 0 {
            let mut l2 = l.clone();
            l2[*i] -= 1;
            branches.push(((l2, f.clone()), a / (a + b)));
        }
        if f[*i] > 0 {
            let mut f2 = f.clone();
            f2[*i] -= 1;
            branches.push(((l.clone(), f2), b / (a + b)));
        }
        out.push((Action::None, 0.0, events(raw, branches)));
        return out;
    }
    let local_room = raw.left(&raw.local, l);
    let hard_room = raw.left(&raw.hard, f);
    let quota_room = raw.left(&raw.quota, f);
    if raw.fits(*i, &local_room) {
        let mut l2 = l.clone();
        l2[*i] += 1;
        out.push((Action::Accept, raw.revenue[*i], events(raw, vec![((l2, f.clone()), 1.0)])));
    }
    if raw.fits(*i, &hard_room) {
        let cost = if raw.fits(*i, &quota_room) { raw.fee[*i] } else { raw.overcharged_fee[*i] };
        let mut f2 = f.clone();
        f2[*i] += 1;
        out.push((Action::Delegate, raw.revenue[*i] - cost, events(raw, vec![((l.clone(), f2), 1.0)])));
    }
    out.push((Action::Reject, 0.0, events(raw, vec![((l.clone(), f.clone()), 1.0)])));
    out
}

fn events(raw: &Raw, branches: Vec<(Counts, f64)>) -> Successors {
    let n = raw.services();
    let mut acc: HashMap<Key, f64> = HashMap::new();
    for ((l, f), pb) in branches {
        let rates: Vec<(bool, usize, f64)> = (0..n)
            .map(|j| (true, j, raw.lambda[j]))
            .chain((0..n).map(|j| (false, j, f64::from(l[j] + f[j]) * raw.mu[j])))
            .filter(|x| x.2 > 0.0)
            .collect();
        let total: f64 = rates.iter().map(|x| x.2).sum();
        for (arr, j, r) in rates {
            *acc.entry((l.clone(), f.clone(), arr, j)).or_insert(0.0) += pb * r / total;
        }
    }
    let mut v: Vec<(Key, f64)> = acc.into_iter().collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

/// A random contract with 1–2 resources and 1–2 service types whose
/// reachable state space has between `min_states` and `max_states`
/// states. Deterministic in `seed`.
pub fn random_contract(seed: u64, min_states: usize, max_states: usize) -> FederationContract {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let r = rng.random_range(1..=2usize);
        let n = rng.random_range(1..=2usize);
        let vec_in = |rng: &mut ChaCha8Rng, lo: u32, hi: u32| {
            ResourceVector::new((0..r).map(|_| rng.random_range(lo..=hi)).collect())
        };
        let local = vec_in(&mut rng, 0, 8);
        let quota = vec_in(&mut rng, 0, 6);
        let thresholds = (0..r).map(|_| Money::new(rng.random_range(2..=6), 2)).collect();
        let catalog = (0..n)
            .map(|_| {
                let revenue = rng.random_range(5..=100);
                let fee = rng.random_range(0..=revenue);
                ServiceType {
                    demand: vec_in(&mut rng, 1, 3),
                    revenue: Money::from_integer(revenue),
                    delegation_fee: Money::from_integer(fee),
                    overcharge_scale: Money::new(rng.random_range(2..=6), 2),
                    arrival_rate: rng.random_range(1..=20) as f64 / 2.0,
                    departure_rate: rng.random_range(1..=20) as f64 / 4.0,
                }
            })
            .collect();
        let Ok(contract) = FederationContract::new(local, quota, thresholds, catalog) else { continue };
        let mdp = DelegationMdp::new(contract.clone());
        if let Ok(space) = StateSpace::enumerate(&mdp, max_states) {
            if space.len() >= min_states {
                return contract;
            }
        }
    }
}
