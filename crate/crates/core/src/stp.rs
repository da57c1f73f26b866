//! Classic 802.1D spanning tree as a set of per-bridge state machines.
//!
//! Each bridge reacts to three inputs (BPDU received, port up/down, timer)
//! and answers with [`StpAction`]s that the caller turns into scheduled
//! events. Nothing here touches the clock or the queue directly.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::MacAddr;
use crate::simcore::SimTime;
use crate::topology::{Attachment, NetTopology, PortRef, SwitchId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StpError {
    #[error("{0} has an inter-switch link; portfast refused")]
    NotEdgePort(PortRef),
    #[error("port {0} does not take part in spanning tree")]
    UnknownPort(PortRef),
    #[error("spanning tree did not converge by {0}")]
    NoConvergence(SimTime),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StpTimers {
    pub hello: SimTime,
    pub forward_delay: SimTime,
    pub max_age: SimTime,
    pub fast_mode: bool,
}

impl Default for StpTimers {
    fn default() -> Self {
        StpTimers {
            hello: SimTime::from_secs(2),
            forward_delay: SimTime::from_secs(15),
            max_age: SimTime::from_secs(20),
            fast_mode: false,
        }
    }
}

impl StpTimers {
    pub fn fast() -> Self {
        StpTimers { fast_mode: true, ..Self::default() }
    }

    /// Forward delay actually applied; zero in fast mode.
    pub fn forward_delay(&self) -> SimTime {
        if self.fast_mode {
            SimTime::ZERO
        } else {
            self.forward_delay
        }
    }

    /// Worst case from a single fault to a new steady state: stale root
    /// information ages out, the replacement port walks listening and
    /// learning, and one more hello confirms it.
    pub fn reconvergence_bound(&self) -> SimTime {
        self.max_age + self.forward_delay().mul(2) + self.hello
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BridgeId {
    pub priority: u16,
    pub mac: MacAddr,
}

impl fmt::Display for BridgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.priority, self.mac.cisco())
    }
}

impl fmt::Debug for BridgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bpdu {
    pub root: BridgeId,
    pub cost: u32,
    pub sender: BridgeId,
    pub sender_port: u16,
    /// Hops since the root originated this information.
    pub message_age: u16,
}

impl Bpdu {
    fn vector(&self) -> (BridgeId, u32, BridgeId, u16) {
        (self.root, self.cost, self.sender, self.sender_port)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortRole {
    Root,
    Designated,
    Alternate,
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortState {
    Blocking,
    Listening,
    Learning,
    Forwarding,
}

impl fmt::Display for PortRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PortRole::Root => "root",
            PortRole::Designated => "designated",
            PortRole::Alternate => "alternate",
            PortRole::Disabled => "disabled",
        })
    }
}

impl fmt::Display for PortState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PortState::Blocking => "blocking",
            PortState::Listening => "listening",
            PortState::Learning => "learning",
            PortState::Forwarding => "forwarding",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StpPort {
    pub port: PortRef,
    pub port_id: u16,
    pub path_cost: u32,
    /// Host- or router-facing; never receives BPDUs.
    pub edge: bool,
    pub portfast: bool,
    pub up: bool,
    pub role: PortRole,
    pub state: PortState,
    pub info: Option<(Bpdu, SimTime)>,
    /// Bumped whenever a pending state timer must be ignored.
    pub generation: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bridge {
    pub switch: SwitchId,
    pub id: BridgeId,
    pub root: BridgeId,
    pub root_cost: u32,
    pub root_port: Option<PortRef>,
    pub ports: BTreeMap<PortRef, StpPort>,
}

impl Bridge {
    pub fn is_root(&self) -> bool {
        self.root == self.id
    }

    fn root_age(&self) -> u16 {
        self.root_port
            .as_ref()
            .and_then(|p| self.ports.get(p))
            .and_then(|p| p.info.as_ref())
            .map_or(0, |(b, _)| b.message_age.saturating_add(1))
    }

    fn bpdu_for(&self, p: &StpPort) -> Bpdu {
        Bpdu {
            root: self.root,
            cost: self.root_cost,
            sender: self.id,
            sender_port: p.port_id,
            message_age: self.root_age(),
        }
    }

    fn designated_vector(&self, p: &StpPort) -> (BridgeId, u32, BridgeId, u16) {
        (self.root, self.root_cost, self.id, p.port_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StpAction {
    Send { from: PortRef, bpdu: Bpdu },
    Transition { port: PortRef, generation: u64, after: SimTime },
    StateChange { port: PortRef, role: PortRole, state: PortState },
    /// A non-edge port entered or left forwarding; learned addresses are stale.
    TopologyChange { switch: SwitchId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortView {
    pub port: PortRef,
    pub role: PortRole,
    pub state: PortState,
    pub edge: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StpView {
    pub roots: BTreeMap<SwitchId, BridgeId>,
    pub ports: Vec<PortView>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stp {
    pub timers: StpTimers,
    bridges: BTreeMap<SwitchId, Bridge>,
}

impl Stp {
    /// One bridge per switch, one port per attached switch port. Ports start
    /// disabled; call [`Stp::start`] to bring the up ones online.
    pub fn new(topo: &NetTopology, timers: StpTimers) -> Self {
        let mut bridges = BTreeMap::new();
        for sw in topo.switches.values() {
            let id = BridgeId { priority: sw.priority, mac: sw.mac };
            bridges.insert(
                sw.id.clone(),
                Bridge { switch: sw.id.clone(), id, root: id, root_cost: 0, root_port: None, ports: BTreeMap::new() },
            );
        }
        let mut stp = Stp { timers, bridges };
        for (port, att) in topo.attachments() {
            stp.add_port(topo, port, att);
        }
        stp
    }

    fn add_port(&mut self, topo: &NetTopology, port: &PortRef, att: &Attachment) {
        let (edge, cost) = match att {
            Attachment::Link(id) => (false, topo.links[id].class.path_cost()),
            _ => (true, 4),
        };
        let portfast = topo.port_configs.get(port).map_or(
            match att {
                Attachment::Jack(_) => topo.profile.portfast,
                Attachment::Router(_) => true,
                Attachment::Link(_) => false,
            },
            |c| c.portfast && edge,
        );
        if let Some(b) = self.bridges.get_mut(&port.switch) {
            b.ports.insert(
                port.clone(),
                StpPort {
                    port: port.clone(),
                    port_id: port.port_id(),
                    path_cost: cost,
                    edge,
                    portfast,
                    up: false,
                    role: PortRole::Disabled,
                    state: PortState::Blocking,
                    info: None,
                    generation: 0,
                },
            );
        }
    }

    /// Rebuilds the port set after attachments moved (spare takeover),
    /// keeping state for ports that still exist.
    pub fn resync_ports(&mut self, topo: &NetTopology) {
        let mut fresh = Stp::new(topo, self.timers.clone());
        for (sw, b) in fresh.bridges.iter_mut() {
            if let Some(old) = self.bridges.get(sw) {
                for (p, sp) in b.ports.iter_mut() {
                    if let Some(o) = old.ports.get(p) {
                        if o.edge == sp.edge {
                            *sp = o.clone();
                        }
                    }
                }
                b.root = old.root;
                b.root_cost = old.root_cost;
                b.root_port = old.root_port.clone().filter(|p| b.ports.contains_key(p));
            }
        }
        self.bridges = fresh.bridges;
    }

    pub fn bridge(&self, sw: &SwitchId) -> Option<&Bridge> {
        self.bridges.get(sw)
    }

    pub fn bridges(&self) -> impl Iterator<Item = &Bridge> {
        self.bridges.values()
    }

    pub fn port(&self, p: &PortRef) -> Option<&StpPort> {
        self.bridges.get(&p.switch)?.ports.get(p)
    }

    pub fn is_forwarding(&self, p: &PortRef) -> bool {
        self.port(p).is_some_and(|sp| sp.up && sp.state == PortState::Forwarding)
    }

    /// Brings up the given ports at `now`.
    pub fn start(&mut self, up: &[PortRef], now: SimTime) -> Vec<StpAction> {
        let mut out = Vec::new();
        let mut touched: Vec<SwitchId> = Vec::new();
        for p in up {
            if let Some(sp) = self.bridges.get_mut(&p.switch).and_then(|b| b.ports.get_mut(p)) {
                sp.up = true;
                if !touched.contains(&p.switch) {
                    touched.push(p.switch.clone());
                }
            }
        }
        let all: Vec<SwitchId> = self.bridges.keys().cloned().collect();
        for sw in all {
            self.recompute(&sw, now, true, &mut out);
        }
        out
    }

    pub fn port_up(&mut self, p: &PortRef, now: SimTime) -> Vec<StpAction> {
        let mut out = Vec::new();
        let Some(sp) = self.bridges.get_mut(&p.switch).and_then(|b| b.ports.get_mut(p)) else {
            return out;
        };
        if sp.up {
            return out;
        }
        sp.up = true;
        sp.info = None;
        self.recompute(&p.switch, now, true, &mut out);
        out
    }

    pub fn port_down(&mut self, p: &PortRef, now: SimTime) -> Vec<StpAction> {
        let mut out = Vec::new();
        let Some(sp) = self.bridges.get_mut(&p.switch).and_then(|b| b.ports.get_mut(p)) else {
            return out;
        };
        if !sp.up {
            return out;
        }
        sp.up = false;
        sp.info = None;
        self.recompute(&p.switch, now, true, &mut out);
        out
    }

    pub fn receive(&mut self, p: &PortRef, bpdu: &Bpdu, now: SimTime) -> Vec<StpAction> {
        let mut out = Vec::new();
        let max_hops = (self.timers.max_age.ticks() / SimTime::from_secs(1).ticks()) as u16;
        let Some(b) = self.bridges.get_mut(&p.switch) else { return out };
        let Some(sp) = b.ports.get(p) else { return out };
        if !sp.up || sp.edge || bpdu.message_age >= max_hops {
            return out;
        }
        let same_sender = sp
            .info
            .as_ref()
            .is_some_and(|(i, _)| i.sender == bpdu.sender && i.sender_port == bpdu.sender_port);
        let superior = bpdu.vector() < b.designated_vector(sp);
        if same_sender || superior {
            b.ports.get_mut(p).expect("present").info = Some((bpdu.clone(), now));
            let relay = self.recompute(&p.switch, now, false, &mut out);
            let b = &self.bridges[&p.switch];
            // Root information arriving on the root port is passed downstream
            // unless the recompute already sent a triggered update.
            if !relay && b.root_port.as_ref() == Some(p) {
                send_designated(b, &mut out);
            }
        } else if sp.role == PortRole::Designated {
            out.push(StpAction::Send { from: p.clone(), bpdu: b.bpdu_for(sp) });
        }
        out
    }

    /// Periodic work: root bridges originate hellos and stale information
    /// is aged out.
    pub fn hello_tick(&mut self, now: SimTime) -> Vec<StpAction> {
        let mut out = Vec::new();
        let one_hop = SimTime::from_secs(1);
        let max_age = self.timers.max_age;
        let ids: Vec<SwitchId> = self.bridges.keys().cloned().collect();
        for sw in ids {
            let b = self.bridges.get_mut(&sw).expect("listed");
            let mut expired = false;
            for sp in b.ports.values_mut() {
                if let Some((bpdu, at)) = &sp.info {
                    let life = max_age.saturating_sub(one_hop.mul(bpdu.message_age as u64));
                    if *at + life <= now {
                        sp.info = None;
                        expired = true;
                    }
                }
            }
            let sent = if expired { self.recompute(&sw, now, false, &mut out) } else { false };
            let b = &self.bridges[&sw];
            if b.is_root() && !sent {
                send_designated(b, &mut out);
            }
        }
        out
    }

    pub fn transition(&mut self, p: &PortRef, generation: u64, now: SimTime) -> Vec<StpAction> {
        let _ = now;
        let mut out = Vec::new();
        let fd = self.timers.forward_delay();
        let Some(sp) = self.bridges.get_mut(&p.switch).and_then(|b| b.ports.get_mut(p)) else {
            return out;
        };
        if sp.generation != generation || !matches!(sp.role, PortRole::Root | PortRole::Designated) {
            return out;
        }
        match sp.state {
            PortState::Listening => {
                sp.state = PortState::Learning;
                sp.generation += 1;
                out.push(StpAction::Transition { port: p.clone(), generation: sp.generation, after: fd });
            }
            PortState::Learning => {
                sp.state = PortState::Forwarding;
                if !sp.edge {
                    out.push(StpAction::TopologyChange { switch: p.switch.clone() });
                }
            }
            _ => return out,
        }
        out.insert(0, StpAction::StateChange { port: p.clone(), role: sp.role, state: sp.state });
        out
    }

    pub fn set_portfast(&mut self, p: &PortRef, enabled: bool) -> Result<Vec<StpAction>, StpError> {
        let sp = self
            .bridges
            .get_mut(&p.switch)
            .and_then(|b| b.ports.get_mut(p))
            .ok_or_else(|| StpError::UnknownPort(p.clone()))?;
        if !sp.edge {
            return Err(StpError::NotEdgePort(p.clone()));
        }
        sp.portfast = enabled;
        let mut out = Vec::new();
        if enabled && sp.up && sp.role == PortRole::Designated && sp.state != PortState::Forwarding {
            sp.state = PortState::Forwarding;
            sp.generation += 1;
            out.push(StpAction::StateChange { port: p.clone(), role: sp.role, state: sp.state });
        }
        Ok(out)
    }

    /// Recomputes root and port roles for one bridge. Returns whether a
    /// triggered BPDU burst went out.
    fn recompute(&mut self, sw: &SwitchId, now: SimTime, force_send: bool, out: &mut Vec<StpAction>) -> bool {
        let _ = now;
        let fd = self.timers.forward_delay();
        let b = self.bridges.get_mut(sw).expect("known bridge");

        let mut best: Option<((BridgeId, u32, BridgeId, u16, u16), PortRef)> = None;
        for sp in b.ports.values().filter(|sp| sp.up && !sp.edge) {
            if let Some((i, _)) = &sp.info {
                let cand = (i.root, i.cost + sp.path_cost, i.sender, i.sender_port, sp.port_id);
                if i.root < b.id && best.as_ref().is_none_or(|(v, _)| cand < *v) {
                    best = Some((cand, sp.port.clone()));
                }
            }
        }
        let before = (b.root, b.root_cost, b.root_port.clone());
        match &best {
            Some((v, p)) => {
                b.root = v.0;
                b.root_cost = v.1;
                b.root_port = Some(p.clone());
            }
            None => {
                b.root = b.id;
                b.root_cost = 0;
                b.root_port = None;
            }
        }
        let root_changed = before != (b.root, b.root_cost, b.root_port.clone());

        let mut role_changed = false;
        let ports: Vec<PortRef> = b.ports.keys().cloned().collect();
        for p in ports {
            let role = {
                let sp = &b.ports[&p];
                if !sp.up {
                    PortRole::Disabled
                } else if b.root_port.as_ref() == Some(&p) {
                    PortRole::Root
                } else if sp.edge {
                    PortRole::Designated
                } else {
                    match &sp.info {
                        Some((i, _)) if i.vector().cmp(&b.designated_vector(sp)) == Ordering::Less => {
                            PortRole::Alternate
                        }
                        _ => PortRole::Designated,
                    }
                }
            };
            let sp = b.ports.get_mut(&p).expect("listed");
            if sp.role == role {
                continue;
            }
            role_changed = true;
            let old_state = sp.state;
            sp.role = role;
            match role {
                PortRole::Root | PortRole::Designated => {
                    if sp.state == PortState::Blocking {
                        sp.generation += 1;
                        if sp.edge && sp.portfast {
                            sp.state = PortState::Forwarding;
                        } else {
                            sp.state = PortState::Listening;
                            out.push(StpAction::Transition { port: p.clone(), generation: sp.generation, after: fd });
                        }
                    }
                }
                PortRole::Alternate | PortRole::Disabled => {
                    if sp.state != PortState::Blocking {
                        sp.generation += 1;
                        sp.state = PortState::Blocking;
                        if old_state == PortState::Forwarding && !sp.edge {
                            out.push(StpAction::TopologyChange { switch: sw.clone() });
                        }
                    }
                }
            }
            out.push(StpAction::StateChange { port: p.clone(), role: sp.role, state: sp.state });
        }

        if root_changed || role_changed || force_send {
            send_designated(b, out);
            true
        } else {
            false
        }
    }

    /// Role and state of every participating port.
    pub fn view(&self) -> StpView {
        let roots = self.bridges.iter().map(|(k, b)| (k.clone(), b.root)).collect();
        let ports = self
            .bridges
            .values()
            .flat_map(|b| b.ports.values())
            .map(|sp| PortView { port: sp.port.clone(), role: sp.role, state: sp.state, edge: sp.edge })
            .collect();
        StpView { roots, ports }
    }

    /// Any port still walking towards forwarding.
    pub fn transitional(&self) -> bool {
        self.bridges
            .values()
            .flat_map(|b| b.ports.values())
            .any(|sp| matches!(sp.state, PortState::Listening | PortState::Learning))
    }

    /// Every stored BPDU was refreshed within `window`.
    pub fn infos_fresh(&self, now: SimTime, window: SimTime) -> bool {
        self.bridges
            .values()
            .flat_map(|b| b.ports.values())
            .filter_map(|sp| sp.info.as_ref())
            .all(|(_, at)| now.saturating_sub(*at) <= window)
    }
}

fn send_designated(b: &Bridge, out: &mut Vec<StpAction>) {
    for sp in b.ports.values() {
        if sp.up && !sp.edge && sp.role == PortRole::Designated {
            out.push(StpAction::Send { from: sp.port.clone(), bpdu: b.bpdu_for(sp) });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{CapacityClass, TopologyBuilder};

    #[test]
    fn bridge_id_orders_by_priority_then_mac() {
        let lo = BridgeId { priority: 4096, mac: MacAddr([0xff; 6]) };
        let hi = BridgeId { priority: 8192, mac: MacAddr([0; 6]) };
        assert!(lo < hi);
        let a = BridgeId { priority: 4096, mac: MacAddr([0, 0, 0, 0, 0, 1]) };
        assert!(a < lo);
    }

    #[test]
    fn bound_uses_collapsed_delay_in_fast_mode() {
        assert_eq!(StpTimers::default().reconvergence_bound(), SimTime::from_secs(52));
        assert_eq!(StpTimers::fast().reconvergence_bound(), SimTime::from_secs(22));
    }

    /// Delivers actions synchronously until quiet; enough for role checks.
    fn settle(stp: &mut Stp, topo: &NetTopology, mut pending: Vec<StpAction>) {
        let now = SimTime::ZERO;
        let mut guard = 0;
        while !pending.is_empty() {
            guard += 1;
            assert!(guard < 10_000, "no quiescence");
            let mut next = Vec::new();
            for a in pending {
                match a {
                    StpAction::Send { from, bpdu } => {
                        if let Some(l) = topo.link_at(&from) {
                            let to = l.other_end(&from).unwrap().clone();
                            next.extend(stp.receive(&to, &bpdu, now));
                        }
                    }
                    StpAction::Transition { port, generation, .. } => {
                        next.extend(stp.transition(&port, generation, now));
                    }
                    _ => {}
                }
            }
            pending = next;
        }
    }

    fn mac(n: u8) -> MacAddr {
        MacAddr([0, 0, 0, 0, 0, n])
    }

    #[test]
    fn triangle_blocks_the_access_to_access_link() {
        let mut b = TopologyBuilder::new();
        b.ups("u")
            .access_switch("core", 4096, mac(1), "u", 8)
            .access_switch("A11", 32768, mac(2), "u", 8)
            .access_switch("A12", 32768, mac(3), "u", 8)
            .link(PortRef::new("A11", 1, 1), PortRef::new("core", 1, 1), CapacityClass::Gigabit)
            .link(PortRef::new("A12", 1, 1), PortRef::new("core", 1, 2), CapacityClass::Gigabit)
            .link(PortRef::new("A11", 1, 2), PortRef::new("A12", 1, 2), CapacityClass::Fast);
        let topo = b.build().unwrap();
        let mut stp = Stp::new(&topo, StpTimers::fast());
        let up: Vec<PortRef> = topo.attachments().keys().cloned().collect();
        let acts = stp.start(&up, SimTime::ZERO);
        settle(&mut stp, &topo, acts);
        let core = stp.bridge(&"core".into()).unwrap();
        assert!(core.is_root());
        // A12 has the larger MAC, so its end of the A11-A12 link blocks.
        assert_eq!(stp.port(&PortRef::new("A12", 1, 2)).unwrap().role, PortRole::Alternate);
        assert_eq!(stp.port(&PortRef::new("A11", 1, 2)).unwrap().role, PortRole::Designated);
        assert!(stp.is_forwarding(&PortRef::new("A11", 1, 1)));
        assert!(!stp.is_forwarding(&PortRef::new("A12", 1, 2)));

        let acts = stp.port_down(&PortRef::new("A12", 1, 1), SimTime::ZERO);
        let mut acts2 = stp.port_down(&PortRef::new("core", 1, 2), SimTime::ZERO);
        acts2.extend(acts);
        settle(&mut stp, &topo, acts2);
        assert_eq!(stp.port(&PortRef::new("A12", 1, 2)).unwrap().role, PortRole::Root);
        assert!(stp.is_forwarding(&PortRef::new("A12", 1, 2)));
    }

    #[test]
    fn lone_switch_is_root_with_designated_edges() {
        let mut b = TopologyBuilder::new();
        b.ups("u").access_switch("S", 32768, mac(9), "u", 4).room("r", "b").jack("j", "r", Some(PortRef::new("S", 1, 1)));
        let topo = b.build().unwrap();
        let mut stp = Stp::new(&topo, StpTimers::default());
        stp.start(&[PortRef::new("S", 1, 1)], SimTime::ZERO);
        assert!(stp.bridge(&"S".into()).unwrap().is_root());
        let p = stp.port(&PortRef::new("S", 1, 1)).unwrap();
        assert_eq!((p.role, p.state), (PortRole::Designated, PortState::Listening));
        assert!(stp.set_portfast(&PortRef::new("S", 1, 1), true).is_ok());
        assert!(stp.is_forwarding(&PortRef::new("S", 1, 1)));
    }
}
