use nfvac_core::domain::delegation_cost;
use nfvac_core::mdp::{Action, Event};
use nfvac_core::policy::{AdmissionPolicy, PolicySource, PolicyTable};
use nfvac_core::rl::{decay, train, Algorithm, RlHyper};
use nfvac_core::sim::{generate_trace, run_policy, Simulator};
use nfvac_core::{DelegationMdp, PolicyKind, ResourceVector, StateSpace};
use nfvac_testkit::random_contract;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rv() -> impl Strategy<Value = ResourceVector> {
    proptest::collection::vec(0u32..6, 3).prop_map(ResourceVector::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fits_is_a_partial_order(a in rv(), b in rv(), c in rv()) {
        prop_assert!(a.fits(&a).unwrap());
        if a.fits(&b).unwrap() && b.fits(&a).unwrap() {
            prop_assert_eq!(&a, &b);
        }
        if a.fits(&b).unwrap() && b.fits(&c).unwrap() {
            prop_assert!(a.fits(&c).unwrap());
        }
    }

    #[test]
    fn mdp_structure_holds_on_random_contracts(seed in any::<u64>()) {
        let mdp = DelegationMdp::new(random_contract(seed, 1, 300));
        let space = StateSpace::enumerate(&mdp, 300).unwrap();
        for s in space.states() {
            prop_assert!(mdp.check_state(s).is_ok());
            let valid = mdp.valid_actions(s);
            match s.event {
                Event::Departure(_) => prop_assert_eq!(valid.to_vec(), vec![Action::None]),
                Event::Arrival(i) => {
                    prop_assert!(valid.contains(Action::Reject) && !valid.contains(Action::None));
                    let demand = &mdp.contract().service(i).demand;
                    let local = mdp.local_available(&s.occupancy).unwrap();
                    prop_assert_eq!(valid.contains(Action::Accept), demand.fits(&local).unwrap());
                }
            }
            for a in valid.iter() {
                let succ = mdp.transitions(s, a).unwrap();
                let total: f64 = succ.iter().map(|x| x.1).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                for (n, p) in &succ {
                    prop_assert!(*p > 0.0);
                    prop_assert!(space.id(n).is_some());
                }
            }
        }
    }

    #[test]
    fn delegation_cost_is_fee_or_overcharged_fee(seed in any::<u64>()) {
        let contract = random_contract(seed, 1, 300);
        let mdp = DelegationMdp::new(contract.clone());
        let space = StateSpace::enumerate(&mdp, 300).unwrap();
        for s in space.states().iter().filter(|s| s.event.is_arrival()) {
            let svc = contract.service(s.event.service());
            let cost = delegation_cost(svc, &mdp.quota_available(&s.occupancy), &mdp.extended_available(&s.occupancy).unwrap());
            prop_assert_eq!(cost.is_some(), mdp.valid_actions(s).contains(Action::Delegate));
            if let Some(c) = cost {
                prop_assert!(c == svc.delegation_fee || c == svc.delegation_fee * svc.overcharge_scale);
                prop_assert_eq!(mdp.reward(s, Action::Delegate).unwrap(), svc.revenue - c);
            }
        }
    }

    #[test]
    fn policies_only_return_valid_actions(seed in any::<u64>()) {
        let contract = random_contract(seed, 1, 300);
        let mdp = DelegationMdp::new(contract);
        let space = StateSpace::enumerate(&mdp, 300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a table with arbitrary, frequently invalid, actions
        let mut table = PolicyTable::new("junk", PolicySource::QLearning);
        for s in space.states() {
            if rng.random_bool(0.7) {
                table.actions.insert(s.clone(), Action::ALL[rng.random_range(0..4)]);
            }
        }
        let junk = PolicyKind::from_table(table);
        for s in space.states() {
            for p in [&PolicyKind::Greedy, &PolicyKind::AlwaysReject, &junk] {
                prop_assert!(mdp.valid_actions(s).contains(p.decide(&mdp, s).action));
            }
        }
    }

    #[test]
    fn simulator_respects_capacities_and_drains(seed in any::<u64>()) {
        let contract = random_contract(seed, 1, 300);
        let mdp = DelegationMdp::new(contract.clone());
        let trace = generate_trace(contract.catalog(), 300, seed);
        let mut sim = Simulator::new(&mdp, &trace, None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut arrivals = 0;
        while let Some(s) = sim.state() {
            let valid = mdp.valid_actions(&s).to_vec();
            let a = valid[rng.random_range(0..valid.len())];
            if s.event.is_arrival() {
                arrivals += 1;
            }
            sim.step(a).unwrap();
            prop_assert!(mdp.local_available(sim.held()).is_some());
            prop_assert!(mdp.extended_available(sim.held()).is_some());
        }
        prop_assert_eq!(arrivals, 300);
        prop_assert!(sim.held().is_empty());
        let out = run_policy(&mdp, &PolicyKind::Greedy, &trace, None);
        prop_assert_eq!(out.requests(), out.local_count() + out.delegated_count() + out.rejected_count());
    }

    #[test]
    fn q_tables_only_hold_valid_pairs(seed in any::<u64>(), rl in any::<bool>()) {
        let mdp = DelegationMdp::new(random_contract(seed, 1, 300));
        let hyper = RlHyper { episodes: 5, requests_per_episode: 100, ..RlHyper::default() };
        let algo = if rl { Algorithm::RLearning } else { Algorithm::QLearning { gamma: 0.5 } };
        let out = train(&mdp, &hyper, algo, seed, &[], |_| {});
        for (s, row) in out.q.rows() {
            for a in Action::ALL {
                prop_assert_eq!(row.value(a).is_some(), mdp.valid_actions(s).contains(a));
            }
        }
        prop_assert!(out.rho.is_finite());
    }

    #[test]
    fn decay_is_non_increasing(x0 in 0.0f64..10.0, phi in 0.0f64..1.0, k in 0usize..10_000) {
        prop_assert!(decay(x0, phi, k + 1) <= decay(x0, phi, k));
        prop_assert!(decay(x0, phi, k) <= x0);
    }
}
