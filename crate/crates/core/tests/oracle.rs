use nfvac_core::dp::{policy_iteration, DpConfig, SolverModel};
use nfvac_core::mdp::Action;
use nfvac_core::{presets, DelegationMdp, FederationContract, StateSpace};
use nfvac_testkit::{random_contract, Oracle};

fn pi_matches_oracle(contract: &FederationContract) {
    let mdp = DelegationMdp::new(contract.clone());
    let space = StateSpace::enumerate(&mdp, 10_000).unwrap();
    let model = SolverModel::build(&mdp, &space).unwrap();
    let cfg = DpConfig { eval_tolerance: 1e-11, ..DpConfig::default() };
    let out = policy_iteration(&model, &cfg);
    let oracle = Oracle::solve(contract, cfg.gamma, 1e-10);
    assert_eq!(oracle.len(), space.len());
    for (id, s) in space.states().iter().enumerate() {
        let a = out.policy.action(id);
        assert!(oracle.is_optimal(s, a, 1e-8), "state {s:?}: PI chose {a}, oracle values {:?}", oracle.q_values(s));
    }
}

#[test]
fn policy_iteration_agrees_with_value_iteration_on_tiny() {
    pi_matches_oracle(&presets::tiny_contract());
}

#[test]
fn policy_iteration_agrees_with_value_iteration_on_random_contracts() {
    for seed in [11, 12, 13] {
        pi_matches_oracle(&random_contract(seed, 30, 500));
    }
}

#[test]
fn transitions_agree_with_independent_construction() {
    for seed in 20..26 {
        let contract = random_contract(seed, 5, 400);
        let mdp = DelegationMdp::new(contract.clone());
        let space = StateSpace::enumerate(&mdp, 400).unwrap();
        let oracle = Oracle::solve(&contract, 0.5, 1e-6);
        for s in space.states() {
            let valid = mdp.valid_actions(s);
            for a in Action::ALL {
                let ours = mdp.transitions(s, a);
                match oracle.successors(s, a) {
                    None => assert!(!valid.contains(a) && ours.is_err(), "{s:?} {a}"),
                    Some(mut theirs) => {
                        let ours = ours.unwrap();
                        theirs.sort_by(|x, y| x.0.cmp(&y.0));
                        assert_eq!(ours.len(), theirs.len(), "{s:?} {a}");
                        for ((s1, p1), (s2, p2)) in ours.iter().zip(&theirs) {
                            assert_eq!(s1, s2);
                            assert!((p1 - p2).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}
