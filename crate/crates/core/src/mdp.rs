//! The admission-control MDP: states, valid actions, rewards, successor
//! enumeration and transition probabilities of the event-driven chain.
//!
//! A state is identified by its occupancy (running instances per type in
//! each domain) plus the pending event. Available capacities are derived
//! from the occupancy, so an inconsistent (capacity, count) pair cannot be
//! represented.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{delegation_cost, FederationContract, Money, ResourceVector};
use crate::error::MdpError;

/// The pending event of a state: an arrival or a departure of a given
/// service type (0-based index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    Arrival(usize),
    Departure(usize),
}

impl Event {
    pub fn service(self) -> usize {
        match self {
            Event::Arrival(i) | Event::Departure(i) => i,
        }
    }

    pub fn is_arrival(self) -> bool {
        matches!(self, Event::Arrival(_))
    }
}

/// Signed 1-based notation: `+2` is an arrival of type 2, `-1` a departure of type 1.
impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Arrival(i) => write!(f, "+{}", i + 1),
            Event::Departure(i) => write!(f, "-{}", i + 1),
        }
    }
}

impl FromStr for Event {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (sign, rest) = s.split_at(s.chars().next().map_or(0, char::len_utf8));
        let idx: usize = rest.parse().map_err(|_| format!("bad event `{s}`"))?;
        if idx == 0 {
            return Err(format!("service types are 1-based, got `{s}`"));
        }
        match sign {
            "+" => Ok(Event::Arrival(idx - 1)),
            "-" => Ok(Event::Departure(idx - 1)),
            _ => Err(format!("event `{s}` must start with + or -")),
        }
    }
}

/// Admission decisions. The declaration order is the tie-breaking order
/// used everywhere an argmax is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Accept,
    Delegate,
    Reject,
    None,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Accept, Action::Delegate, Action::Reject, Action::None];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::Accept => "accept",
            Action::Delegate => "delegate",
            Action::Reject => "reject",
            Action::None => "none",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accept" => Ok(Action::Accept),
            "delegate" => Ok(Action::Delegate),
            "reject" => Ok(Action::Reject),
            "none" => Ok(Action::None),
            _ => Err(format!("unknown action `{s}`")),
        }
    }
}

/// A small set of actions, iterated in tie-breaking order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ActionSet(u8);

impl ActionSet {
    pub fn single(a: Action) -> Self {
        ActionSet(1 << a.index())
    }

    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    pub fn to_vec(self) -> Vec<Action> {
        self.iter().collect()
    }
}

/// Which domain an instance runs in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    /// Consumer domain (local deployment).
    Consumer,
    /// Provider domain (delegated deployment).
    Provider,
}

/// Running instances per service type in each domain. Also serves as the
/// transient state reached after an action and before the next event.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupancy {
    pub local: Vec<u32>,
    pub delegated: Vec<u32>,
}

pub type TransientState = Occupancy;

impl Occupancy {
    pub fn empty(services: usize) -> Self {
        Occupancy { local: vec![0; services], delegated: vec![0; services] }
    }

    pub fn running(&self, i: usize) -> u32 {
        self.local[i] + self.delegated[i]
    }

    pub fn is_empty(&self) -> bool {
        self.local.iter().chain(&self.delegated).all(|&x| x == 0)
    }
}

/// An MDP state: occupancy plus the pending event.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub occupancy: Occupancy,
    pub event: Event,
}

impl State {
    pub fn new(local: Vec<u32>, delegated: Vec<u32>, event: Event) -> Self {
        State { occupancy: Occupancy { local, delegated }, event }
    }

    pub fn local(&self) -> &[u32] {
        &self.occupancy.local
    }

    pub fn delegated(&self) -> &[u32] {
        &self.occupancy.delegated
    }
}

/// The admission-control MDP defined by a federation contract.
#[derive(Clone, Debug)]
pub struct DelegationMdp {
    contract: FederationContract,
}

impl DelegationMdp {
    pub fn new(contract: FederationContract) -> Self {
        DelegationMdp { contract }
    }

    pub fn contract(&self) -> &FederationContract {
        &self.contract
    }

    pub fn num_services(&self) -> usize {
        self.contract.num_services()
    }

    fn used(&self, counts: &[u32]) -> ResourceVector {
        counts
            .iter()
            .zip(self.contract.catalog())
            .fold(ResourceVector::zeros(self.contract.num_resources()), |acc, (&n, svc)| acc.add_scaled(&svc.demand, n))
    }

    /// `C^l`: free capacity in the consumer domain, `None` if overcommitted.
    pub fn local_available(&self, occ: &Occupancy) -> Option<ResourceVector> {
        self.contract.local_capacity().checked_sub(&self.used(&occ.local))
    }

    /// `C^p_θ`: free extended quota in the provider domain, `None` if overcommitted.
    pub fn extended_available(&self, occ: &Occupancy) -> Option<ResourceVector> {
        self.contract.extended_quota().checked_sub(&self.used(&occ.delegated))
    }

    /// `C^p`: remaining plain quota, clamped at zero once the overcharge region is in use.
    pub fn quota_available(&self, occ: &Occupancy) -> ResourceVector {
        self.contract.quota().saturating_sub(&self.used(&occ.delegated))
    }

    /// Checks the state invariants against the contract.
    pub fn check_state(&self, s: &State) -> Result<(), MdpError> {
        let n = self.num_services();
        let bad = |m: String| Err(MdpError::InconsistentState(m));
        if s.occupancy.local.len() != n || s.occupancy.delegated.len() != n {
            return bad(format!("expected {n} counts per domain"));
        }
        if s.event.service() >= n {
            return bad(format!("event refers to service {} of {n}", s.event.service() + 1));
        }
        if self.local_available(&s.occupancy).is_none() {
            return bad("local counts exceed the consumer-domain capacity".into());
        }
        if self.extended_available(&s.occupancy).is_none() {
            return bad("delegated counts exceed the extended provider quota".into());
        }
        if let Event::Departure(i) = s.event {
            if s.occupancy.running(i) == 0 {
                return bad(format!("departure of type {} with no running instance", i + 1));
            }
        }
        Ok(())
    }

    /// `𝒜(s)`.
    pub fn valid_actions(&self, s: &State) -> ActionSet {
        match s.event {
            Event::Departure(_) => ActionSet::single(Action::None),
            Event::Arrival(i) => {
                let demand = &self.contract.service(i).demand;
                let mut set = ActionSet::single(Action::Reject);
                if self.local_available(&s.occupancy).is_some_and(|c| demand.fits(&c).unwrap_or(false)) {
                    set.insert(Action::Accept);
                }
                if self.extended_available(&s.occupancy).is_some_and(|c| demand.fits(&c).unwrap_or(false)) {
                    set.insert(Action::Delegate);
                }
                set
            }
        }
    }

    /// Immediate profit of taking `a` in `s`.
    pub fn reward(&self, s: &State, a: Action) -> Result<Money, MdpError> {
        if !self.valid_actions(s).contains(a) {
            return Err(MdpError::InvalidAction { action: a });
        }
        let i = s.event.service();
        let svc = self.contract.service(i);
        Ok(match a {
            Action::Reject | Action::None => Money::from_integer(0),
            Action::Accept => svc.revenue,
            Action::Delegate => {
                let quota = self.quota_available(&s.occupancy);
                let extended = self.extended_available(&s.occupancy).ok_or(MdpError::InvalidAction { action: a })?;
                let cost = delegation_cost(svc, &quota, &extended).ok_or(MdpError::InvalidAction { action: a })?;
                svc.revenue - cost
            }
        })
    }

    /// Applies `a` to `s`. `departing_from` selects the domain of the
    /// departing instance and must be given iff `a` is `none`.
    pub fn apply_action(
        &self,
        s: &State,
        a: Action,
        departing_from: Option<Domain>,
    ) -> Result<TransientState, MdpError> {
        if !self.valid_actions(s).contains(a) {
            return Err(MdpError::InvalidAction { action: a });
        }
        if (a == Action::None) != departing_from.is_some() {
            return Err(MdpError::DepartingDomainMismatch);
        }
        let i = s.event.service();
        let mut occ = s.occupancy.clone();
        match (a, departing_from) {
            (Action::Reject, _) => {}
            (Action::Accept, _) => occ.local[i] += 1,
            (Action::Delegate, _) => occ.delegated[i] += 1,
            (Action::None, Some(Domain::Consumer)) => {
                occ.local[i] = occ.local[i].checked_sub(1).ok_or(MdpError::CountUnderflow { service: i })?;
            }
            (Action::None, Some(Domain::Provider)) => {
                occ.delegated[i] = occ.delegated[i].checked_sub(1).ok_or(MdpError::CountUnderflow { service: i })?;
            }
            (Action::None, None) => unreachable!(),
        }
        Ok(occ)
    }

    /// Transient states reachable from `(s, a)` with `Pr(s̃ | s, a)`.
    pub fn transient_branches(&self, s: &State, a: Action) -> Result<Vec<(TransientState, f64)>, MdpError> {
        if a != Action::None {
            return Ok(vec![(self.apply_action(s, a, None)?, 1.0)]);
        }
        if !self.valid_actions(s).contains(a) {
            return Err(MdpError::InvalidAction { action: a });
        }
        let i = s.event.service();
        let l = f64::from(s.occupancy.local[i]);
        let f = f64::from(s.occupancy.delegated[i]);
        let mut out = Vec::with_capacity(2);
        if l > 0.0 {
            out.push((self.apply_action(s, a, Some(Domain::Consumer))?, l / (l + f)));
        }
        if f > 0.0 {
            out.push((self.apply_action(s, a, Some(Domain::Provider))?, f / (l + f)));
        }
        Ok(out)
    }

    /// Total event rate `Λ(s̃) + M(s̃)`.
    pub fn total_event_rate(&self, occ: &TransientState) -> f64 {
        self.contract
            .catalog()
            .iter()
            .enumerate()
            .map(|(j, svc)| svc.arrival_rate + f64::from(occ.running(j)) * svc.departure_rate)
            .sum()
    }

    /// `Pr(d' | s̃)` by competing exponentials; zero for impossible events.
    pub fn event_probability(&self, occ: &TransientState, event: Event) -> f64 {
        let total = self.total_event_rate(occ);
        let svc = self.contract.service(event.service());
        match event {
            Event::Arrival(_) => svc.arrival_rate / total,
            Event::Departure(j) => f64::from(occ.running(j)) * svc.departure_rate / total,
        }
    }

    /// Events that can occur from `s̃`: every arrival, and departures of
    /// types with at least one running instance.
    pub fn possible_events(&self, occ: &TransientState) -> Vec<Event> {
        let n = self.num_services();
        (0..n).map(Event::Arrival).chain((0..n).filter(|&j| occ.running(j) > 0).map(Event::Departure)).collect()
    }

    /// Successors of `(s, a)` with their probabilities, deduplicated
    /// (probabilities of coinciding successors are summed) and sorted.
    pub fn transitions(&self, s: &State, a: Action) -> Result<Vec<(State, f64)>, MdpError> {
        let mut acc: BTreeMap<State, f64> = BTreeMap::new();
        for (occ, p_branch) in self.transient_branches(s, a)? {
            for event in self.possible_events(&occ) {
                let p = p_branch * self.event_probability(&occ, event);
                *acc.entry(State { occupancy: occ.clone(), event }).or_insert(0.0) += p;
            }
        }
        Ok(acc.into_iter().collect())
    }

    /// `𝒩(s, a)`.
    pub fn next_states(&self, s: &State, a: Action) -> Result<Vec<State>, MdpError> {
        Ok(self.transitions(s, a)?.into_iter().map(|(s, _)| s).collect())
    }

    /// `𝔓(s, a, s')`.
    pub fn transition_probability(&self, s: &State, a: Action, next: &State) -> Result<f64, MdpError> {
        let mut total = 0.0;
        let mut matched = false;
        for (occ, p_branch) in self.transient_branches(s, a)? {
            if occ != next.occupancy {
                continue;
            }
            if next.event.service() >= self.num_services() {
                return Err(MdpError::NotASuccessor);
            }
            let p_event = self.event_probability(&occ, next.event);
            if p_event > 0.0 {
                matched = true;
                total += p_branch * p_event;
            }
        }
        if matched {
            Ok(total)
        } else {
            Err(MdpError::NotASuccessor)
        }
    }

    /// States the system starts in: empty occupancy with each arrival.
    pub fn initial_states(&self) -> Vec<State> {
        (0..self.num_services())
            .map(|i| State { occupancy: Occupancy::empty(self.num_services()), event: Event::Arrival(i) })
            .collect()
    }
}

/// Dense indexing of every state reachable from the empty system.
#[derive(Clone, Debug)]
pub struct StateSpace {
    states: Vec<State>,
    index: HashMap<State, usize>,
    transitions: usize,
}

/// Diagnostics record describing an enumerated state space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StateSpaceStats {
    pub states: usize,
    pub arrival_states: usize,
    pub departure_states: usize,
    pub transitions: usize,
    pub approx_bytes: usize,
}

impl StateSpace {
    /// Breadth-first closure under `next_states` over all valid actions,
    /// starting from [`DelegationMdp::initial_states`].
    pub fn enumerate(mdp: &DelegationMdp, cap: usize) -> Result<StateSpace, MdpError> {
        let mut states = Vec::new();
        let mut index = HashMap::new();
        let mut queue = VecDeque::new();
        let mut transitions = 0usize;
        for s in mdp.initial_states() {
            if index.len() >= cap {
                return Err(MdpError::StateCapExceeded { cap });
            }
            index.insert(s.clone(), states.len());
            states.push(s.clone());
            queue.push_back(s);
        }
        while let Some(s) = queue.pop_front() {
            for a in mdp.valid_actions(&s).iter() {
                for next in mdp.next_states(&s, a)? {
                    transitions += 1;
                    if index.contains_key(&next) {
                        continue;
                    }
                    if states.len() >= cap {
                        return Err(MdpError::StateCapExceeded { cap });
                    }
                    index.insert(next.clone(), states.len());
                    states.push(next.clone());
                    queue.push_back(next);
                }
            }
        }
        Ok(StateSpace { states, index, transitions })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, id: usize) -> &State {
        &self.states[id]
    }

    pub fn id(&self, s: &State) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn stats(&self) -> StateSpaceStats {
        let arrival_states = self.states.iter().filter(|s| s.event.is_arrival()).count();
        let per_state =
            self.states.first().map_or(0, |s| std::mem::size_of::<State>() + 2 * 4 * s.occupancy.local.len());
        StateSpaceStats {
            states: self.states.len(),
            arrival_states,
            departure_states: self.states.len() - arrival_states,
            transitions: self.transitions,
            // states twice (vector + index) plus one (id, probability) pair per edge
            approx_bytes: self.states.len() * (2 * per_state + 16) + self.transitions * 16,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn table1() -> DelegationMdp {
        DelegationMdp::new(presets::table1_contract())
    }

    fn arrival(l: &[u32], f: &[u32], i: usize) -> State {
        State::new(l.to_vec(), f.to_vec(), Event::Arrival(i))
    }

    #[test]
    fn valid_actions_both_domains_fit() {
        let mdp = table1();
        let s = arrival(&[0, 0, 0], &[0, 0, 0], 0);
        assert_eq!(mdp.local_available(&s.occupancy).unwrap(), ResourceVector::new(vec![30, 25, 30]));
        assert_eq!(mdp.extended_available(&s.occupancy).unwrap(), ResourceVector::new(vec![20, 30, 50]));
        assert_eq!(mdp.valid_actions(&s).to_vec(), vec![Action::Accept, Action::Delegate, Action::Reject]);
    }

    #[test]
    fn valid_actions_reject_only_when_nothing_fits() {
        let mdp = table1();
        // l1 = 7 leaves C^l = [2, 11, 23]; f1 = 5 leaves C^p_θ = [0, 20, 45]
        let s = arrival(&[7, 0, 0], &[5, 0, 0], 0);
        assert_eq!(mdp.valid_actions(&s).to_vec(), vec![Action::Reject]);
    }

    #[test]
    fn departure_has_only_none() {
        let mdp = table1();
        let s = State::new(vec![0, 1, 0], vec![0, 0, 0], Event::Departure(1));
        assert_eq!(mdp.valid_actions(&s).to_vec(), vec![Action::None]);
    }

    #[test]
    fn rewards() {
        let mdp = table1();
        let s = arrival(&[0, 0, 0], &[0, 0, 0], 0);
        assert_eq!(mdp.reward(&s, Action::Accept).unwrap(), Money::from_integer(95));
        assert_eq!(mdp.reward(&s, Action::Delegate).unwrap(), Money::from_integer(15));
        assert_eq!(mdp.reward(&s, Action::Reject).unwrap(), Money::from_integer(0));
        assert!(mdp.reward(&s, Action::None).is_err());
    }

    #[test]
    fn delegate_reward_overcharged_past_plain_quota() {
        let mdp = table1();
        // f1 = 2 uses [8,4,2] of quota [10,15,25]: remaining [2,11,23] < c1
        let s = arrival(&[0, 0, 0], &[2, 0, 0], 0);
        assert_eq!(mdp.reward(&s, Action::Delegate).unwrap(), Money::from_integer(95 - 160));
    }

    #[test]
    fn apply_action_cases() {
        let mdp = table1();
        let s = arrival(&[0, 0, 0], &[0, 0, 0], 0);
        let t = mdp.apply_action(&s, Action::Accept, None).unwrap();
        assert_eq!(t.local, vec![1, 0, 0]);
        assert_eq!(mdp.local_available(&t).unwrap(), ResourceVector::new(vec![26, 23, 29]));
        assert_eq!(mdp.apply_action(&s, Action::Reject, None).unwrap(), s.occupancy);

        let d = State::new(vec![0, 0, 0], vec![1, 0, 0], Event::Departure(0));
        let t = mdp.apply_action(&d, Action::None, Some(Domain::Provider)).unwrap();
        assert_eq!(t.delegated, vec![0, 0, 0]);
        assert_eq!(mdp.extended_available(&t).unwrap(), ResourceVector::new(vec![20, 30, 50]));
        assert_eq!(
            mdp.apply_action(&d, Action::None, Some(Domain::Consumer)),
            Err(MdpError::CountUnderflow { service: 0 })
        );
        assert_eq!(mdp.apply_action(&d, Action::None, None), Err(MdpError::DepartingDomainMismatch));
    }

    #[test]
    fn next_states_counts() {
        let mdp = table1();
        let s = arrival(&[0, 0, 0], &[0, 0, 0], 0);
        let reject = mdp.next_states(&s, Action::Reject).unwrap();
        assert_eq!(reject.len(), 3);
        assert!(reject.iter().all(|n| n.event.is_arrival()));
        assert_eq!(mdp.next_states(&s, Action::Accept).unwrap().len(), 4);

        let d = State::new(vec![1, 0, 0], vec![1, 0, 0], Event::Departure(0));
        let next = mdp.next_states(&d, Action::None).unwrap();
        // two transient states, each with 3 arrivals + departure of type 1
        assert_eq!(next.len(), 8);
        assert!(next.iter().any(|n| n.occupancy.local == vec![0, 0, 0]));
        assert!(next.iter().any(|n| n.occupancy.delegated == vec![0, 0, 0]));
    }

    #[test]
    fn transition_probabilities_match_competing_exponentials() {
        let mdp = table1();
        let s = arrival(&[0, 0, 0], &[0, 0, 0], 0);
        let next = arrival(&[0, 0, 0], &[0, 0, 0], 0);
        let p = mdp.transition_probability(&s, Action::Reject, &next).unwrap();
        assert!((p - 10.0 / 33.0).abs() < 1e-15);

        // from l=[1,0,0], f=[0,0,0] delegating type 1 gives s̃ with l'=f'=[1,0,0]
        let s = arrival(&[1, 0, 0], &[0, 0, 0], 0);
        let next = State::new(vec![1, 0, 0], vec![1, 0, 0], Event::Departure(0));
        let p = mdp.transition_probability(&s, Action::Delegate, &next).unwrap();
        assert!((p - 8.0 / 41.0).abs() < 1e-15);

        let s = State::new(vec![2, 0, 0], vec![1, 0, 0], Event::Departure(0));
        let next = arrival(&[1, 0, 0], &[1, 0, 0], 2);
        let p = mdp.transition_probability(&s, Action::None, &next).unwrap();
        assert!((p - 2.0 / 3.0 * 12.0 / 41.0).abs() < 1e-15);

        let far = arrival(&[5, 0, 0], &[0, 0, 0], 0);
        assert_eq!(mdp.transition_probability(&s, Action::None, &far), Err(MdpError::NotASuccessor));
    }

    #[test]
    fn tiny_space_has_eleven_states() {
        let mdp = DelegationMdp::new(presets::tiny_contract());
        let space = StateSpace::enumerate(&mdp, 1000).unwrap();
        let stats = space.stats();
        assert_eq!(stats.states, 11);
        assert_eq!(stats.arrival_states, 6);
        assert_eq!(stats.departure_states, 5);
    }

    #[test]
    fn state_cap_is_enforced() {
        let mdp = DelegationMdp::new(presets::tiny_contract());
        assert_eq!(StateSpace::enumerate(&mdp, 5).unwrap_err(), MdpError::StateCapExceeded { cap: 5 });
    }

    #[test]
    fn event_notation_round_trips() {
        for e in [Event::Arrival(0), Event::Departure(2)] {
            assert_eq!(e.to_string().parse::<Event>().unwrap(), e);
        }
        assert!("+0".parse::<Event>().is_err());
        assert!("3".parse::<Event>().is_err());
    }
}
