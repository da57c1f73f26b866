//! The shipped demo campus and its default firewall policy.

use super::{PolicySet, World, WorldConfig, WorldError};
use crate::topology::{load_topology, NetTopology};

pub const DEMO_TOPOLOGY: &str = include_str!("../../data/demo.topo");

const POLICY: [(&str, &str); 7] = [
    ("internal.profile", include_str!("../../data/policy/internal.profile")),
    ("external.profile", include_str!("../../data/policy/external.profile")),
    ("quarantine", include_str!("../../data/policy/quarantine")),
    ("patch-sites", include_str!("../../data/policy/patch-sites")),
    ("chokes", include_str!("../../data/policy/chokes")),
    ("outside-chokes", include_str!("../../data/policy/outside-chokes")),
    ("resolver", include_str!("../../data/policy/resolver")),
];

pub fn demo_policy_text(name: &str) -> Option<&'static str> {
    POLICY.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn demo_topology() -> NetTopology {
    load_topology(DEMO_TOPOLOGY).expect("shipped demo topology is valid")
}

pub fn default_policy() -> PolicySet {
    PolicySet::from_sources("builtin", |name| Ok(demo_policy_text(name).unwrap_or_default().to_string()))
        .expect("shipped policy is valid")
}

pub fn demo_world(cfg: WorldConfig) -> Result<World, WorldError> {
    World::new(demo_topology(), default_policy(), cfg)
}
