//! Shipped configuration presets, embedded at compile time.

use crate::config::RunConfig;
use crate::domain::FederationContract;

pub const TABLE1: &str = include_str!("../../../presets/table1.cfg");
pub const TABLE2_TESTBED: &str = include_str!("../../../presets/table2_testbed.cfg");
pub const TINY: &str = include_str!("../../../presets/tiny.cfg");
pub const THEOREM1: &str = include_str!("../../../presets/theorem1.cfg");
pub const FIG1_EPISODES: &str = include_str!("../../../presets/fig1_episodes.cfg");
pub const FIG2_LOCAL_CAPACITY: &str = include_str!("../../../presets/fig2_local_capacity.cfg");
pub const FIG3_THRESHOLD: &str = include_str!("../../../presets/fig3_threshold.cfg");
pub const FIG4_OVERCHARGE: &str = include_str!("../../../presets/fig4_overcharge.cfg");

pub const ALL: [&str; 8] =
    [TABLE1, TABLE2_TESTBED, TINY, THEOREM1, FIG1_EPISODES, FIG2_LOCAL_CAPACITY, FIG3_THRESHOLD, FIG4_OVERCHARGE];

pub fn config(text: &str) -> RunConfig {
    text.parse().expect("shipped presets are valid")
}

/// The default simulation contract at full scale.
pub fn table1_contract() -> FederationContract {
    config(TABLE1).contract(true).expect("valid preset")
}

/// The default simulation contract with capacities and quota halved.
pub fn table1_desk_contract() -> FederationContract {
    config(TABLE1).contract(false).expect("valid preset")
}

pub fn table2_contract() -> FederationContract {
    config(TABLE2_TESTBED).contract(false).expect("valid preset")
}

pub fn tiny_contract() -> FederationContract {
    config(TINY).contract(false).expect("valid preset")
}

pub fn theorem1_contract() -> FederationContract {
    config(THEOREM1).contract(false).expect("valid preset")
}
