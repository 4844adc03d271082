//! Admission policies behind one interface: the greedy baseline,
//! always-reject, and table-backed learned or solved policies with a
//! greedy fallback for states the table does not cover.

use std::collections::BTreeMap;

use crate::mdp::{Action, DelegationMdp, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    pub action: Action,
    /// True when a table-backed policy had no usable entry for the state.
    pub fallback_used: bool,
}

pub trait AdmissionPolicy: Send + Sync {
    fn decide(&self, mdp: &DelegationMdp, s: &State) -> Decision;
    fn label(&self) -> &str;
}

/// Deploy locally if possible, else delegate if possible, else reject.
pub fn greedy_decide(mdp: &DelegationMdp, s: &State) -> Action {
    let valid = mdp.valid_actions(s);
    [Action::Accept, Action::Delegate, Action::Reject, Action::None]
        .into_iter()
        .find(|a| valid.contains(*a))
        .expect("every state has a valid action")
}

/// Where a stored policy came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicySource {
    PolicyIteration,
    QLearning,
    RLearning,
}

/// Explicit state → action map.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    pub label: String,
    pub source: PolicySource,
    pub actions: BTreeMap<State, Action>,
}

impl PolicyTable {
    pub fn new(label: impl Into<String>, source: PolicySource) -> Self {
        PolicyTable { label: label.into(), source, actions: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, s: &State) -> Option<Action> {
        self.actions.get(s).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyKind {
    Greedy,
    AlwaysReject,
    Pi(PolicyTable),
    Ql(PolicyTable),
    Rl(PolicyTable),
}

impl PolicyKind {
    pub fn from_table(table: PolicyTable) -> Self {
        match table.source {
            PolicySource::PolicyIteration => PolicyKind::Pi(table),
            PolicySource::QLearning => PolicyKind::Ql(table),
            PolicySource::RLearning => PolicyKind::Rl(table),
        }
    }

    pub fn table(&self) -> Option<&PolicyTable> {
        match self {
            PolicyKind::Pi(t) | PolicyKind::Ql(t) | PolicyKind::Rl(t) => Some(t),
            PolicyKind::Greedy | PolicyKind::AlwaysReject => None,
        }
    }
}

impl AdmissionPolicy for PolicyKind {
    fn decide(&self, mdp: &DelegationMdp, s: &State) -> Decision {
        let valid = mdp.valid_actions(s);
        if !s.event.is_arrival() {
            return Decision { action: Action::None, fallback_used: false };
        }
        match self {
            PolicyKind::Greedy => Decision { action: greedy_decide(mdp, s), fallback_used: false },
            PolicyKind::AlwaysReject => Decision { action: Action::Reject, fallback_used: false },
            PolicyKind::Pi(t) | PolicyKind::Ql(t) | PolicyKind::Rl(t) => match t.get(s) {
                Some(a) if valid.contains(a) => Decision { action: a, fallback_used: false },
                _ => Decision { action: greedy_decide(mdp, s), fallback_used: true },
            },
        }
    }

    fn label(&self) -> &str {
        match self {
            PolicyKind::Greedy => "Greedy",
            PolicyKind::AlwaysReject => "AlwaysReject",
            PolicyKind::Pi(t) | PolicyKind::Ql(t) | PolicyKind::Rl(t) => &t.label,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Event;
    use crate::presets;

    fn mdp() -> DelegationMdp {
        DelegationMdp::new(presets::table1_contract())
    }

    #[test]
    fn greedy_prefers_local_then_provider_then_reject() {
        let mdp = mdp();
        let both = State::new(vec![0, 0, 0], vec![0, 0, 0], Event::Arrival(0));
        assert_eq!(greedy_decide(&mdp, &both), Action::Accept);
        // l1 = 7 exhausts CPU for type 1 locally
        let cd_full = State::new(vec![7, 0, 0], vec![0, 0, 0], Event::Arrival(0));
        assert_eq!(greedy_decide(&mdp, &cd_full), Action::Delegate);
        let neither = State::new(vec![7, 0, 0], vec![5, 0, 0], Event::Arrival(0));
        assert_eq!(greedy_decide(&mdp, &neither), Action::Reject);
    }

    #[test]
    fn table_policies_fall_back_to_greedy() {
        let mdp = mdp();
        let known = State::new(vec![0, 0, 0], vec![0, 0, 0], Event::Arrival(0));
        let unknown = State::new(vec![1, 0, 0], vec![0, 0, 0], Event::Arrival(0));
        let stale = State::new(vec![7, 0, 0], vec![0, 0, 0], Event::Arrival(0));
        let mut t = PolicyTable::new("RL", PolicySource::RLearning);
        t.actions.insert(known.clone(), Action::Delegate);
        t.actions.insert(stale.clone(), Action::Accept);
        let rl = PolicyKind::from_table(t.clone());
        assert_eq!(rl.decide(&mdp, &known), Decision { action: Action::Delegate, fallback_used: false });
        assert_eq!(rl.decide(&mdp, &unknown), Decision { action: Action::Accept, fallback_used: true });
        // stored action no longer valid
        assert_eq!(rl.decide(&mdp, &stale), Decision { action: Action::Delegate, fallback_used: true });

        t.source = PolicySource::QLearning;
        let ql = PolicyKind::from_table(t);
        assert!(matches!(ql, PolicyKind::Ql(_)));
        assert_eq!(ql.decide(&mdp, &unknown).action, Action::Accept);
    }

    #[test]
    fn always_reject_and_departures() {
        let mdp = mdp();
        let s = State::new(vec![0, 0, 0], vec![0, 0, 0], Event::Arrival(2));
        assert_eq!(PolicyKind::AlwaysReject.decide(&mdp, &s).action, Action::Reject);
        let d = State::new(vec![0, 1, 0], vec![0, 0, 0], Event::Departure(1));
        for p in [PolicyKind::Greedy, PolicyKind::AlwaysReject] {
            assert_eq!(p.decide(&mdp, &d).action, Action::None);
        }
    }
}
