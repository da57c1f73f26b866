//! Redundant router pairs: inter-VLAN forwarding through the firewall,
//! connection tracking, table replication and heartbeat failover.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{is_private, VlanId};
use crate::fwengine::{ConnState, Evaluation, Firewall, Packet, Proto, Verdict};
use crate::simcore::SimTime;
use crate::topology::{PairKind, RouterId, RouterPairDecl};

pub const HEARTBEAT: SimTime = SimTime::from_secs(1);
pub const MISSED_LIMIT: u32 = 3;
pub const ESTABLISHED_TIMEOUT: SimTime = SimTime::from_secs(600);
pub const CLOSED_TIMEOUT: SimTime = SimTime::from_secs(10);
const NAT_PORT_BASE: u16 = 20000;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum HaError {
    #[error("no route to {0}")]
    NoRoute(Ipv4Addr),
    #[error("no SNAT rule for private source {0}")]
    NoNatRule(Ipv4Addr),
    #[error("pair {0} has no live gateway")]
    GatewayDown(String),
    #[error("peer {0} is down")]
    PeerDown(RouterId),
    #[error("both routers of pair {0} are down")]
    BothDown(String),
}

/// Connection key in the originating direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tuple {
    pub src: Ipv4Addr,
    pub sport: u16,
    pub dst: Ipv4Addr,
    pub dport: u16,
    pub proto: Proto,
}

impl Tuple {
    pub fn of(p: &Packet) -> Tuple {
        Tuple { src: p.src, sport: p.sport, dst: p.dst, dport: p.dport, proto: p.proto }
    }

    pub fn reversed(&self) -> Tuple {
        Tuple { src: self.dst, sport: self.dport, dst: self.src, dport: self.sport, proto: self.proto }
    }
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}:{} -> {}:{}", self.proto, self.src, self.sport, self.dst, self.dport)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrackState {
    New,
    Established,
    Closed,
}

impl fmt::Display for TrackState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackState::New => "NEW",
            TrackState::Established => "ESTABLISHED",
            TrackState::Closed => "CLOSED",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NatMap {
    pub public: Ipv4Addr,
    pub port: u16,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnTrackEntry {
    pub tuple: Tuple,
    pub state: TrackState,
    pub last_seen: SimTime,
    pub nat_map: Option<NatMap>,
}

impl ConnTrackEntry {
    pub fn timeout(&self) -> SimTime {
        match self.state {
            TrackState::Closed => CLOSED_TIMEOUT,
            _ => ESTABLISHED_TIMEOUT,
        }
    }

    pub fn expired(&self, now: SimTime) -> bool {
        now.saturating_sub(self.last_seen) >= self.timeout()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnTrack {
    entries: BTreeMap<Tuple, ConnTrackEntry>,
}

impl ConnTrack {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ConnTrackEntry> {
        self.entries.values()
    }

    pub fn get(&self, t: &Tuple) -> Option<&ConnTrackEntry> {
        self.entries.get(t)
    }

    /// Live entry for either direction of `t`, keyed by its originating tuple.
    fn lookup(&mut self, t: &Tuple, now: SimTime) -> Option<Tuple> {
        for k in [*t, t.reversed()] {
            match self.entries.get(&k) {
                Some(e) if e.expired(now) => {
                    self.entries.remove(&k);
                }
                Some(_) => return Some(k),
                None => {}
            }
        }
        None
    }

    fn by_nat(&self, public: Ipv4Addr, port: u16, now: SimTime) -> Option<Tuple> {
        self.entries
            .values()
            .find(|e| !e.expired(now) && e.nat_map == Some(NatMap { public, port }))
            .map(|e| e.tuple)
    }

    pub fn purge(&mut self, now: SimTime) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, e| !e.expired(now));
        before - self.entries.len()
    }

    /// Established, unexpired entries as of `now`.
    pub fn established(&self, now: SimTime) -> Vec<ConnTrackEntry> {
        self.entries
            .values()
            .filter(|e| e.state == TrackState::Established && !e.expired(now))
            .cloned()
            .collect()
    }

    pub fn close(&mut self, t: &Tuple, now: SimTime) -> bool {
        for k in [*t, t.reversed()] {
            if let Some(e) = self.entries.get_mut(&k) {
                e.state = TrackState::Closed;
                e.last_seen = now;
                return true;
            }
        }
        false
    }

    /// `tuple  state  age` lines.
    pub fn dump(&self, now: SimTime) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            let nat = e.nat_map.map(|n| format!(" nat={}:{}", n.public, n.port)).unwrap_or_default();
            out.push_str(&format!("{}  {}  age={}{}\n", e.tuple, e.state, now.saturating_sub(e.last_seen), nat));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncBatch {
    pub from: RouterId,
    pub to: RouterId,
    pub entries: Vec<ConnTrackEntry>,
    pub as_of: SimTime,
}

/// Where a routed packet goes next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Vlan(VlanId),
    Upstream,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Vlan(v) => write!(f, "vlan{v}"),
            Side::Upstream => f.write_str("upstream"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routed {
    pub router: RouterId,
    pub egress: Side,
    /// The packet after NAT, as it leaves the router.
    pub packet: Packet,
    pub evaluation: Evaluation,
    /// Matched an existing connection.
    pub tracked: bool,
}

impl Routed {
    pub fn verdict(&self) -> Verdict {
        self.evaluation.verdict
    }
}

/// Things worth logging that happen to a pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HaEvent {
    Failover { pair: String, from: RouterId, to: RouterId },
    Failback { pair: String, to: RouterId },
    Recovered { pair: String, active: RouterId },
    BothDown { pair: String },
    Synced { pair: String, from: RouterId, to: RouterId, entries: usize },
    PeerDown { pair: String, router: RouterId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterPair {
    pub decl: RouterPairDecl,
    pub firewall: Firewall,
    active: Option<RouterId>,
    up: BTreeMap<RouterId, bool>,
    missed: BTreeMap<RouterId, u32>,
    tables: BTreeMap<RouterId, ConnTrack>,
    next_nat_port: u16,
}

impl RouterPair {
    pub fn new(decl: RouterPairDecl, firewall: Firewall) -> Self {
        let ids = [decl.primary.clone(), decl.secondary.clone()];
        RouterPair {
            active: Some(decl.primary.clone()),
            up: ids.iter().map(|r| (r.clone(), true)).collect(),
            missed: ids.iter().map(|r| (r.clone(), 0)).collect(),
            tables: ids.iter().map(|r| (r.clone(), ConnTrack::default())).collect(),
            next_nat_port: NAT_PORT_BASE,
            decl,
            firewall,
        }
    }

    pub fn name(&self) -> &str {
        &self.decl.name
    }

    pub fn active(&self) -> Option<&RouterId> {
        self.active.as_ref()
    }

    pub fn standby(&self) -> Option<&RouterId> {
        let a = self.active.as_ref()?;
        Some(if a == &self.decl.primary { &self.decl.secondary } else { &self.decl.primary })
    }

    pub fn table(&self, r: &RouterId) -> Option<&ConnTrack> {
        self.tables.get(r)
    }

    pub fn is_up(&self, r: &RouterId) -> bool {
        self.up.get(r).copied().unwrap_or(false)
    }

    /// Physical liveness as seen by the simulator. Detection by the peer
    /// happens only through missed heartbeats.
    pub fn set_up(&mut self, r: &RouterId, up: bool) {
        if let Some(u) = self.up.get_mut(r) {
            *u = up;
        }
    }

    /// VLAN whose interface subnet holds `addr`.
    pub fn vlan_for(&self, addr: Ipv4Addr) -> Option<VlanId> {
        self.decl.interfaces.iter().find(|(_, i)| i.subnet.contains(addr)).map(|(v, _)| *v)
    }

    /// One heartbeat period: count misses and fail over once the active
    /// router has been silent for `MISSED_LIMIT` periods.
    pub fn heartbeat(&mut self) -> Vec<HaEvent> {
        for (r, m) in self.missed.iter_mut() {
            if self.up[r] {
                *m = 0;
            } else {
                *m += 1;
            }
        }
        let mut out = Vec::new();
        match self.active.clone() {
            Some(a) if self.missed[&a] >= MISSED_LIMIT => {
                let s = self.standby().expect("active set").clone();
                if self.up[&s] {
                    self.active = Some(s.clone());
                    out.push(HaEvent::Failover { pair: self.decl.name.clone(), from: a, to: s });
                } else {
                    self.active = None;
                    out.push(HaEvent::BothDown { pair: self.decl.name.clone() });
                }
            }
            None => {
                let pick = [&self.decl.primary, &self.decl.secondary].into_iter().find(|r| self.up[*r]).cloned();
                if let Some(r) = pick {
                    self.active = Some(r.clone());
                    out.push(HaEvent::Recovered { pair: self.decl.name.clone(), active: r });
                }
            }
            _ => {}
        }
        out
    }

    /// Copies the active router's established entries to the standby.
    pub fn sync(&mut self, now: SimTime) -> Result<SyncBatch, HaError> {
        let from = self.active.clone().ok_or_else(|| HaError::BothDown(self.decl.name.clone()))?;
        let to = self.standby().expect("active set").clone();
        if !self.up[&to] {
            return Err(HaError::PeerDown(to));
        }
        let src = self.tables.get_mut(&from).expect("known router");
        src.purge(now);
        let batch = SyncBatch { from, to, entries: src.established(now), as_of: now };
        self.apply(&batch);
        Ok(batch)
    }

    pub fn apply(&mut self, batch: &SyncBatch) {
        let dst = self.tables.get_mut(&batch.to).expect("known router");
        for e in &batch.entries {
            dst.entries.insert(e.tuple, e.clone());
        }
    }

    /// Hands the gateway back to the primary after a state sync.
    pub fn failback(&mut self, now: SimTime) -> Result<Option<HaEvent>, HaError> {
        let primary = self.decl.primary.clone();
        if self.active.as_ref() == Some(&primary) {
            return Ok(None);
        }
        if !self.up[&primary] {
            return Err(HaError::PeerDown(primary));
        }
        if self.active.is_some() {
            self.sync(now)?;
        }
        self.missed.insert(primary.clone(), 0);
        self.active = Some(primary.clone());
        Ok(Some(HaEvent::Failback { pair: self.decl.name.clone(), to: primary }))
    }

    /// Routes one packet arriving from `from`: conntrack lookup, firewall
    /// walk, then NAT on the way upstream.
    pub fn route(&mut self, packet: Packet, from: Side, now: SimTime) -> Result<Routed, HaError> {
        let router = match &self.active {
            Some(r) if self.up[r] => r.clone(),
            _ => return Err(HaError::GatewayDown(self.decl.name.clone())),
        };
        let external = self.decl.kind == PairKind::External;
        let mut pkt = packet;
        let table = self.tables.get_mut(&router).expect("known router");

        let mut key = None;
        if from == Side::Upstream && external {
            if let Some(t) = table.by_nat(pkt.dst, pkt.dport, now) {
                pkt.dst = t.src;
                pkt.dport = t.sport;
                key = Some(t);
            }
        }
        let egress = match self.decl.interfaces.iter().find(|(_, i)| i.subnet.contains(pkt.dst)) {
            Some((v, _)) => Side::Vlan(*v),
            None if external => Side::Upstream,
            None => return Err(HaError::NoRoute(pkt.dst)),
        };
        let table = self.tables.get_mut(&router).expect("known router");
        let key = key.or_else(|| table.lookup(&Tuple::of(&pkt), now));
        pkt.state = if key.is_some() { ConnState::Established } else { ConnState::New };

        let evaluation = self.firewall.evaluate(pkt, now);
        let mut out = pkt;
        if evaluation.verdict == Verdict::Accept {
            let table = self.tables.get_mut(&router).expect("known router");
            match key {
                Some(k) => {
                    let e = table.entries.get_mut(&k).expect("looked up");
                    e.last_seen = now;
                    if e.state == TrackState::New {
                        e.state = TrackState::Established;
                    }
                    // Outbound packets of a translated connection keep their mapping.
                    if let (Some(n), true) = (e.nat_map, egress == Side::Upstream) {
                        out.src = n.public;
                        out.sport = n.port;
                    }
                }
                None => {
                    let mut nat_map = None;
                    if egress == Side::Upstream && is_private(pkt.src) {
                        let public = evaluation.snat.ok_or(HaError::NoNatRule(pkt.src))?;
                        let port = self.next_nat_port;
                        self.next_nat_port = self.next_nat_port.checked_add(1).unwrap_or(NAT_PORT_BASE);
                        nat_map = Some(NatMap { public, port });
                        out.src = public;
                        out.sport = port;
                    }
                    let t = Tuple::of(&pkt);
                    let table = self.tables.get_mut(&router).expect("known router");
                    table.entries.insert(
                        t,
                        ConnTrackEntry { tuple: t, state: TrackState::Established, last_seen: now, nat_map },
                    );
                }
            }
        }
        Ok(Routed { router, egress, packet: out, evaluation, tracked: key.is_some() })
    }

    /// Marks the connection of `packet` closed on the active router.
    pub fn close(&mut self, packet: &Packet, now: SimTime) -> bool {
        match self.active.clone() {
            Some(r) => self.tables.get_mut(&r).expect("known router").close(&Tuple::of(packet), now),
            None => false,
        }
    }
}
