//! Ghosting sessions: batches of access ports moved into a per-analyst
//! ghost VLAN for image distribution, then put back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::VlanId;
use crate::l2switch::{L2Error, L2Fabric};
use crate::topology::{HostId, HostRole, JackId, NetTopology, PortRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GhostError {
    #[error("VLAN {vlan} already has ghost server {server}")]
    TwoServersOneVlan { vlan: VlanId, server: HostId },
    #[error("port {port} is already in session {session}")]
    PortAlreadyGhosting { port: PortRef, session: u32 },
    #[error("session has no members")]
    EmptySession,
    #[error("VLAN {0} is not registered")]
    UnknownVlan(VlanId),
    #[error("session {0} is not active")]
    SessionNotActive(u32),
    #[error("unknown session {0}")]
    UnknownSession(u32),
    #[error("cannot resolve member `{0}`")]
    Unresolved(String),
    #[error("ghost server {0} is not plugged in")]
    ServerUnplugged(HostId),
    #[error("VLAN {vlan} is missing a {role} host")]
    MissingRole { vlan: VlanId, role: String },
    #[error("{0}")]
    Port(#[from] L2Error),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostConfig {
    pub chunk_bytes: u64,
    /// Upper bound on simulated frames per distribution; chunks grow to fit.
    pub max_chunks: u64,
    /// Pacing between chunks.
    pub chunk_interval_ns: u64,
    /// Ghost router and DHCP copies must sit in the VLAN before a session.
    pub require_role_hosts: bool,
}

impl Default for GhostConfig {
    fn default() -> Self {
        GhostConfig { chunk_bytes: 8 * 1024, max_chunks: 64, chunk_interval_ns: 1_000_000, require_role_hosts: false }
    }
}

/// Chunk sizes for an image: `ceil(bytes / chunk_bytes)` chunks capped at
/// `max_chunks`, summing to exactly `bytes`.
pub fn chunk_plan(bytes: u64, cfg: &GhostConfig) -> Vec<u64> {
    if bytes == 0 {
        return Vec::new();
    }
    let n = bytes.div_ceil(cfg.chunk_bytes.max(1)).clamp(1, cfg.max_chunks.max(1));
    let (q, r) = (bytes / n, bytes % n);
    (0..n).map(|i| q + u64::from(i < r)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    TornDown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostSession {
    pub id: u32,
    pub analyst: String,
    pub ghost_vlan: VlanId,
    pub server: HostId,
    pub server_port: PortRef,
    pub server_original: VlanId,
    pub members: Vec<(PortRef, VlanId)>,
    pub status: SessionStatus,
    pub bytes_total: u64,
    /// Ghost bytes seen leaving each member port during this session.
    pub delivered: BTreeMap<PortRef, u64>,
}

impl GhostSession {
    pub fn is_active(&self) -> bool {
        self.status == SessionStatus::Active
    }

    /// Ports whose VLAN this session changed, server first.
    pub fn moved_ports(&self) -> impl Iterator<Item = (&PortRef, VlanId)> {
        std::iter::once((&self.server_port, self.server_original)).chain(self.members.iter().map(|(p, v)| (p, *v)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub session: u32,
    pub image_bytes: u64,
    pub per_member: BTreeMap<PortRef, u64>,
}

impl DeliveryReport {
    pub fn complete(&self) -> bool {
        self.per_member.values().all(|b| *b == self.image_bytes)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("session {} image {} bytes\n", self.session, self.image_bytes);
        for (p, b) in &self.per_member {
            out.push_str(&format!("{p:<20} {b}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostRegistry {
    pub cfg: GhostConfig,
    sessions: BTreeMap<u32, GhostSession>,
    next_id: u32,
}

impl GhostRegistry {
    pub fn new(cfg: GhostConfig) -> Self {
        GhostRegistry { cfg, sessions: BTreeMap::new(), next_id: 1 }
    }

    pub fn get(&self, id: u32) -> Option<&GhostSession> {
        self.sessions.get(&id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &GhostSession> {
        self.sessions.values()
    }

    pub fn active(&self) -> impl Iterator<Item = &GhostSession> {
        self.sessions.values().filter(|s| s.is_active())
    }

    pub fn active_vlans(&self) -> BTreeMap<VlanId, (String, HostId)> {
        self.active().map(|s| (s.ghost_vlan, (s.analyst.clone(), s.server.clone()))).collect()
    }

    /// Active session holding `port`, as a member or as its server.
    pub fn session_of(&self, port: &PortRef) -> Option<&GhostSession> {
        self.active().find(|s| s.moved_ports().any(|(p, _)| p == port))
    }

    /// Validates, snapshots the original VLANs and moves every port.
    pub fn start_session(
        &mut self,
        fabric: &mut L2Fabric,
        topo: &NetTopology,
        analyst: &str,
        ghost_vlan: VlanId,
        server: &HostId,
        members: &[PortRef],
    ) -> Result<u32, GhostError> {
        if !fabric.vlans.contains_key(&ghost_vlan) {
            return Err(GhostError::UnknownVlan(ghost_vlan));
        }
        if members.is_empty() {
            return Err(GhostError::EmptySession);
        }
        if let Some(s) = self.active().find(|s| s.ghost_vlan == ghost_vlan) {
            if &s.server != server {
                return Err(GhostError::TwoServersOneVlan { vlan: ghost_vlan, server: s.server.clone() });
            }
        }
        let server_port =
            topo.host_port(server).cloned().ok_or_else(|| GhostError::ServerUnplugged(server.clone()))?;
        let mut seen = BTreeSet::new();
        for p in std::iter::once(&server_port).chain(members) {
            if let Some(s) = self.active().find(|s| s.members.iter().any(|(m, _)| m == p)) {
                return Err(GhostError::PortAlreadyGhosting { port: p.clone(), session: s.id });
            }
            let sp = fabric.port(p).ok_or_else(|| L2Error::UnknownPort(p.clone()))?;
            if sp.mode.access_vlan().is_none() {
                return Err(L2Error::TrunkPort(p.clone()).into());
            }
            if p != &server_port && !seen.insert(p.clone()) {
                return Err(GhostError::PortAlreadyGhosting { port: p.clone(), session: self.next_id });
            }
        }
        if self.cfg.require_role_hosts {
            for role in [HostRole::GhostRouter, HostRole::GhostDhcp] {
                let present = topo.hosts.values().any(|h| {
                    h.has_role(role)
                        && topo.host_port(&h.id).is_some_and(|p| {
                            members.contains(p) || fabric.port(p).and_then(|sp| sp.mode.access_vlan()) == Some(ghost_vlan)
                        })
                });
                if !present {
                    return Err(GhostError::MissingRole { vlan: ghost_vlan, role: format!("{role:?}") });
                }
            }
        }

        let mut moved = Vec::with_capacity(members.len());
        let server_shared = self.active().any(|s| s.server_port == server_port);
        let server_original = if server_shared {
            self.active().find(|s| s.server_port == server_port).expect("checked").server_original
        } else {
            fabric.set_port_vlan(&server_port, ghost_vlan)?
        };
        for p in members.iter().filter(|p| **p != server_port) {
            let old = fabric.set_port_vlan(p, ghost_vlan)?;
            moved.push((p.clone(), old));
        }
        let id = self.next_id.max(1);
        self.next_id = id + 1;
        self.sessions.insert(
            id,
            GhostSession {
                id,
                analyst: analyst.to_string(),
                ghost_vlan,
                server: server.clone(),
                server_port,
                server_original,
                members: moved,
                status: SessionStatus::Active,
                bytes_total: 0,
                delivered: BTreeMap::new(),
            },
        );
        Ok(id)
    }

    /// Marks the start of a distribution and returns its chunk plan.
    pub fn begin_distribution(&mut self, id: u32, image_bytes: u64) -> Result<Vec<u64>, GhostError> {
        let cfg = self.cfg.clone();
        let s = self.sessions.get_mut(&id).ok_or(GhostError::UnknownSession(id))?;
        if !s.is_active() {
            return Err(GhostError::SessionNotActive(id));
        }
        s.bytes_total = image_bytes;
        s.delivered = s.members.iter().map(|(p, _)| (p.clone(), 0)).collect();
        Ok(chunk_plan(image_bytes, &cfg))
    }

    /// Credits ghost bytes that left a member port.
    pub fn record_delivery(&mut self, id: u32, port: &PortRef, bytes: u64) {
        if let Some(s) = self.sessions.get_mut(&id) {
            if let Some(d) = s.delivered.get_mut(port) {
                *d += bytes;
            }
        }
    }

    pub fn report(&self, id: u32) -> Result<DeliveryReport, GhostError> {
        let s = self.sessions.get(&id).ok_or(GhostError::UnknownSession(id))?;
        Ok(DeliveryReport { session: id, image_bytes: s.bytes_total, per_member: s.delivered.clone() })
    }

    /// Puts every port back. Returns the restored ports; empty when the
    /// session was already torn down.
    pub fn teardown(&mut self, fabric: &mut L2Fabric, id: u32) -> Result<Vec<(PortRef, VlanId)>, GhostError> {
        let s = self.sessions.get(&id).ok_or(GhostError::UnknownSession(id))?;
        if !s.is_active() {
            return Ok(Vec::new());
        }
        let server_shared = self.active().any(|o| o.id != id && o.server_port == s.server_port);
        let mut restored = Vec::new();
        for (p, v) in s.moved_ports() {
            if p == &s.server_port && server_shared {
                continue;
            }
            fabric.set_port_vlan(p, v)?;
            restored.push((p.clone(), v));
        }
        self.sessions.get_mut(&id).expect("present").status = SessionStatus::TornDown;
        Ok(restored)
    }
}

/// A session request as written by the analyst.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub analyst: String,
    pub ghost_vlan: VlanId,
    pub server: HostId,
    pub members: Vec<MemberSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberSpec {
    Port(PortRef),
    Jack(JackId),
    Host(HostId),
}

impl fmt::Display for MemberSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemberSpec::Port(p) => write!(f, "port {p}"),
            MemberSpec::Jack(j) => write!(f, "jack {j}"),
            MemberSpec::Host(h) => write!(f, "host {h}"),
        }
    }
}

impl Manifest {
    /// ```text
    /// analyst jdoe
    /// vlan 901
    /// server ghost1
    /// port A11:1/0/5
    /// jack J-101
    /// host pc-12
    /// ```
    pub fn parse(text: &str) -> Result<Manifest, GhostError> {
        let (mut analyst, mut vlan, mut server) = (None, None, None);
        let mut members = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GhostError::Manifest { line: i + 1, msg };
            let (key, rest) = line.split_once(char::is_whitespace).ok_or_else(|| err(format!("`{line}` needs a value")))?;
            let rest = rest.trim();
            match key {
                "analyst" => analyst = Some(rest.to_string()),
                "vlan" => vlan = Some(rest.parse::<VlanId>().map_err(|e| err(e.to_string()))?),
                "server" => server = Some(HostId::new(rest)),
                "port" => members.push(MemberSpec::Port(rest.parse().map_err(err)?)),
                "jack" => members.push(MemberSpec::Jack(JackId::new(rest))),
                "host" => members.push(MemberSpec::Host(HostId::new(rest))),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let missing = |what: &str| GhostError::Manifest { line: 0, msg: format!("missing `{what}`") };
        Ok(Manifest {
            analyst: analyst.ok_or_else(|| missing("analyst"))?,
            ghost_vlan: vlan.ok_or_else(|| missing("vlan"))?,
            server: server.ok_or_else(|| missing("server"))?,
            members,
        })
    }

    /// Turns every member into a switch port. Hosts resolve through the
    /// jack they are plugged into now, falling back to their registered
    /// jack. Returns the ports and one note per resolution.
    pub fn resolve(&self, topo: &NetTopology) -> Result<(Vec<PortRef>, Vec<String>), GhostError> {
        let mut ports = Vec::new();
        let mut notes = Vec::new();
        for m in &self.members {
            let p = match m {
                MemberSpec::Port(p) => p.clone(),
                MemberSpec::Jack(j) => topo.jack_port(j).cloned().ok_or_else(|| GhostError::Unresolved(m.to_string()))?,
                MemberSpec::Host(h) => {
                    let host = topo.hosts.get(h).ok_or_else(|| GhostError::Unresolved(m.to_string()))?;
                    let jack = host.attached.as_ref().or(host.jack.as_ref());
                    jack.and_then(|j| topo.jack_port(j)).cloned().ok_or_else(|| GhostError::Unresolved(m.to_string()))?
                }
            };
            if !matches!(m, MemberSpec::Port(_)) {
                notes.push(format!("{m} -> {p}"));
            }
            ports.push(p);
        }
        Ok((ports, notes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::MacAddr;
    use crate::l2switch::L2Config;
    use crate::topology::{CapacityClass, Host, TopologyBuilder, VlanPurpose};
    use proptest::prelude::*;

    fn vlan(n: u16) -> VlanId {
        VlanId::new(n).unwrap()
    }

    fn setup() -> (NetTopology, L2Fabric) {
        let mut b = TopologyBuilder::new();
        b.ups("u")
            .access_switch("S1", 4096, MacAddr::from_index(1, 1), "u", 24)
            .access_switch("S2", 8192, MacAddr::from_index(1, 2), "u", 24)
            .link(PortRef::new("S1", 1, 24), PortRef::new("S2", 1, 24), CapacityClass::Gigabit)
            .vlan(20, "staff", VlanPurpose::Production, None)
            .vlan(901, "ghost-a", VlanPurpose::Ghost, Some("jdoe"))
            .vlan(902, "ghost-b", VlanPurpose::Ghost, Some("asmith"))
            .room("r1", "B1");
        for s in ["S1", "S2"] {
            for n in 1..=10u16 {
                b.port(PortRef::new(s, 1, n), crate::topology::PortConfig {
                    mode: crate::l2switch::PortMode::Access(vlan(20)),
                    ..Default::default()
                });
            }
        }
        b.jack("js1", "r1", Some(PortRef::new("S1", 1, 1)))
            .jack("js2", "r1", Some(PortRef::new("S2", 1, 1)))
            .host(Host::new("ghost1", MacAddr::from_index(2, 1), "10.20.0.5".parse().unwrap(), Some("js1")))
            .host(Host::new("ghost2", MacAddr::from_index(2, 2), "10.20.0.6".parse().unwrap(), Some("js2")));
        let topo = b.build().unwrap();
        let fabric = L2Fabric::new(&topo, L2Config::default());
        (topo, fabric)
    }

    fn members(range: std::ops::RangeInclusive<u16>) -> Vec<PortRef> {
        range.flat_map(|n| [PortRef::new("S1", 1, n), PortRef::new("S2", 1, n)]).collect()
    }

    #[test]
    fn start_moves_everything_and_teardown_restores() {
        let (topo, mut fab) = setup();
        let before = fab.vlan_map();
        let mut reg = GhostRegistry::new(GhostConfig::default());
        let id = reg.start_session(&mut fab, &topo, "jdoe", vlan(901), &"ghost1".into(), &members(2..=5)).unwrap();
        for p in members(2..=5).iter().chain([&PortRef::new("S1", 1, 1)]) {
            assert_eq!(fab.port(p).unwrap().mode.access_vlan(), Some(vlan(901)));
        }
        assert_eq!(reg.get(id).unwrap().members.len(), 8);
        assert_eq!(reg.teardown(&mut fab, id).unwrap().len(), 9);
        assert_eq!(fab.vlan_map(), before);
        assert!(reg.teardown(&mut fab, id).unwrap().is_empty());
        assert_eq!(fab.vlan_map(), before);
    }

    #[test]
    fn guards() {
        let (topo, mut fab) = setup();
        let mut reg = GhostRegistry::new(GhostConfig::default());
        let ghost1 = HostId::new("ghost1");
        assert_eq!(reg.start_session(&mut fab, &topo, "x", vlan(901), &ghost1, &[]), Err(GhostError::EmptySession));
        assert_eq!(
            reg.start_session(&mut fab, &topo, "x", vlan(999), &ghost1, &members(2..=2)),
            Err(GhostError::UnknownVlan(vlan(999)))
        );
        let id = reg.start_session(&mut fab, &topo, "jdoe", vlan(901), &ghost1, &members(2..=3)).unwrap();
        assert_eq!(
            reg.start_session(&mut fab, &topo, "asmith", vlan(901), &"ghost2".into(), &members(4..=4)),
            Err(GhostError::TwoServersOneVlan { vlan: vlan(901), server: ghost1.clone() })
        );
        assert_eq!(
            reg.start_session(&mut fab, &topo, "asmith", vlan(902), &"ghost2".into(), &members(3..=4)),
            Err(GhostError::PortAlreadyGhosting { port: PortRef::new("S1", 1, 3), session: id })
        );
        reg.teardown(&mut fab, id).unwrap();
        assert_eq!(reg.begin_distribution(id, 10), Err(GhostError::SessionNotActive(id)));
    }

    #[test]
    fn manifest_parses_and_resolves() {
        let (topo, _) = setup();
        let m = Manifest::parse("analyst jdoe\nvlan 901\nserver ghost1\nport S1:1/0/4\njack js2\nhost ghost1\n").unwrap();
        let (ports, notes) = m.resolve(&topo).unwrap();
        assert_eq!(ports, vec![PortRef::new("S1", 1, 4), PortRef::new("S2", 1, 1), PortRef::new("S1", 1, 1)]);
        assert_eq!(notes.len(), 2);
        assert!(matches!(Manifest::parse("analyst a\nbogus 1\n"), Err(GhostError::Manifest { line: 2, .. })));
    }

    #[test]
    fn chunk_plan_is_capped_and_exact() {
        let cfg = GhostConfig::default();
        let ten_gb = 10 * 1024 * 1024 * 1024u64;
        let plan = chunk_plan(ten_gb, &cfg);
        assert_eq!(plan.len() as u64, cfg.max_chunks);
        assert_eq!(plan.iter().sum::<u64>(), ten_gb);
        assert_eq!(chunk_plan(100, &cfg), vec![100]);
        assert!(chunk_plan(0, &cfg).is_empty());
    }

    proptest! {
        #[test]
        fn chunk_plan_sums_exactly(bytes in 0u64..1 << 40, chunk in 1u64..1 << 20, max in 1u64..500) {
            let cfg = GhostConfig { chunk_bytes: chunk, max_chunks: max, ..GhostConfig::default() };
            let plan = chunk_plan(bytes, &cfg);
            prop_assert_eq!(plan.iter().sum::<u64>(), bytes);
            prop_assert!(plan.len() as u64 <= max);
            if let (Some(a), Some(b)) = (plan.iter().max(), plan.iter().min()) {
                prop_assert!(a - b <= 1);
            }
        }

        /// Teardown is the exact inverse of start on VLAN assignments.
        #[test]
        fn teardown_inverts_start(picks in prop::collection::btree_set(2u16..=10, 1..9), shuffle in any::<u64>()) {
            let (topo, mut fab) = setup();
            let mut rng = shuffle;
            for n in 2..=10u16 {
                rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1);
                if rng >> 63 == 1 {
                    fab.set_port_vlan(&PortRef::new("S2", 1, n), vlan(902)).unwrap();
                }
            }
            let before = fab.vlan_map();
            let mut reg = GhostRegistry::new(GhostConfig::default());
            let ports: Vec<PortRef> = picks.iter().map(|n| PortRef::new("S2", 1, *n)).collect();
            let id = reg.start_session(&mut fab, &topo, "jdoe", vlan(901), &"ghost1".into(), &ports).unwrap();
            reg.teardown(&mut fab, id).unwrap();
            prop_assert_eq!(fab.vlan_map(), before);
        }
    }
}
