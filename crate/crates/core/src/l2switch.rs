//! Frame forwarding for every switch in the plant: per-VLAN MAC learning,
//! access/trunk semantics, flooding, and sticky-MAC port security.
//!
//! The fabric does not know about links or spanning tree; callers pass a
//! predicate telling it which ports are currently up and forwarding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{MacAddr, VlanId};
use crate::simcore::SimTime;
use crate::stp::Bpdu;
use crate::topology::{Attachment, NetTopology, PortConfig, PortRef, SwitchId, VlanDecl, VlanPurpose};

pub const AUTO_TOKEN: &str = "[Auto]";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum L2Error {
    #[error("unknown port {0}")]
    UnknownPort(PortRef),
    #[error("unknown vlan {0}")]
    UnknownVlan(VlanId),
    #[error("port {0} is a trunk")]
    TrunkPort(PortRef),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrunkAllowed {
    All,
    List(BTreeSet<VlanId>),
}

impl TrunkAllowed {
    pub fn allows(&self, vlan: VlanId) -> bool {
        match self {
            TrunkAllowed::All => true,
            TrunkAllowed::List(l) => l.contains(&vlan),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortMode {
    Access(VlanId),
    Trunk(TrunkAllowed),
}

impl PortMode {
    pub fn carries(&self, vlan: VlanId) -> bool {
        match self {
            PortMode::Access(v) => *v == vlan,
            PortMode::Trunk(t) => t.allows(vlan),
        }
    }

    pub fn access_vlan(&self) -> Option<VlanId> {
        match self {
            PortMode::Access(v) => Some(*v),
            PortMode::Trunk(_) => None,
        }
    }
}

impl fmt::Display for PortMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortMode::Access(v) => write!(f, "access {v}"),
            PortMode::Trunk(TrunkAllowed::All) => f.write_str("trunk all"),
            PortMode::Trunk(TrunkAllowed::List(l)) => {
                let ids: Vec<String> = l.iter().map(|v| v.to_string()).collect();
                write!(f, "trunk {}", ids.join(","))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationMode {
    Shutdown,
    Restrict,
    Protect,
}

impl fmt::Display for ViolationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationMode::Shutdown => "shutdown",
            ViolationMode::Restrict => "restrict",
            ViolationMode::Protect => "protect",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortSecurity {
    pub enabled: bool,
    pub max_macs: u32,
    pub mode: ViolationMode,
    pub sticky: Vec<MacAddr>,
    pub violation_count: u64,
    pub err_disabled: bool,
    /// Last time a restrict-mode alert went out, for rate limiting.
    pub last_alert: Option<SimTime>,
}

impl PortSecurity {
    fn from_config(cfg: &PortConfig) -> Self {
        PortSecurity {
            enabled: cfg.security,
            max_macs: cfg.max_macs.max(1),
            mode: cfg.violation,
            sticky: cfg.sticky.clone(),
            violation_count: 0,
            err_disabled: false,
            last_alert: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchPort {
    pub port: PortRef,
    pub mode: PortMode,
    pub description: String,
    pub security: PortSecurity,
    pub portfast: bool,
    pub rx_frames: u64,
    pub rx_bytes: u64,
    /// Bytes of ghost-image traffic delivered out of this port.
    pub ghost_bytes: u64,
    pub dropped: u64,
}

impl SwitchPort {
    pub fn from_config(port: PortRef, cfg: &PortConfig) -> Self {
        SwitchPort {
            port,
            mode: cfg.mode.clone(),
            description: cfg.description.clone(),
            security: PortSecurity::from_config(cfg),
            portfast: cfg.portfast,
            rx_frames: 0,
            rx_bytes: 0,
            ghost_bytes: 0,
            dropped: 0,
        }
    }

    pub fn is_auto(&self) -> bool {
        self.description.is_empty() || self.description.starts_with(AUTO_TOKEN)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    Unicast,
    Broadcast,
    /// One chunk of a ghost image, modeled as VLAN-scoped broadcast.
    Ghost { session: u32 },
    Bpdu(Bpdu),
    Handshake,
}

impl FrameKind {
    pub fn name(&self) -> &'static str {
        match self {
            FrameKind::Unicast => "unicast",
            FrameKind::Broadcast => "broadcast",
            FrameKind::Ghost { .. } => "ghost",
            FrameKind::Bpdu(_) => "bpdu",
            FrameKind::Handshake => "handshake",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub id: u64,
    pub src: MacAddr,
    pub dst: MacAddr,
    /// 802.1Q tag; `None` means untagged.
    pub vlan: Option<VlanId>,
    pub kind: FrameKind,
    pub size_bytes: u64,
}

impl Frame {
    pub fn is_flooded(&self) -> bool {
        self.dst.is_broadcast() || self.dst.is_multicast()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdbEntry {
    pub port: PortRef,
    pub last_seen: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub port: PortRef,
    pub mac: MacAddr,
    pub mode: ViolationMode,
    pub alerted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    VlanNotAllowed(VlanId),
    ErrDisabled,
    Security,
    NotForwarding,
    Filtered,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::VlanNotAllowed(v) => write!(f, "vlan-not-allowed:{v}"),
            DropReason::ErrDisabled => f.write_str("err-disabled"),
            DropReason::Security => f.write_str("security"),
            DropReason::NotForwarding => f.write_str("not-forwarding"),
            DropReason::Filtered => f.write_str("filtered"),
        }
    }
}

/// Result of pushing one frame into one switch port.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ingress {
    pub vlan: Option<VlanId>,
    /// Egress ports with the tag the frame leaves with.
    pub egress: Vec<(PortRef, Option<VlanId>)>,
    pub violation: Option<Violation>,
    pub dropped: Option<DropReason>,
    pub flooded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct L2Config {
    pub fdb_ttl: SimTime,
    pub alert_window: SimTime,
}

impl Default for L2Config {
    fn default() -> Self {
        L2Config { fdb_ttl: SimTime::from_secs(300), alert_window: SimTime::from_secs(60) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct L2Fabric {
    pub cfg: L2Config,
    pub vlans: BTreeMap<VlanId, VlanDecl>,
    ports: BTreeMap<PortRef, SwitchPort>,
    fdb: BTreeMap<SwitchId, BTreeMap<(VlanId, MacAddr), FdbEntry>>,
}

impl L2Fabric {
    /// Builds one `SwitchPort` per physical port. Inter-switch ports are
    /// trunks carrying everything; router attachments carry only VLANs the
    /// pair has an interface on; everything else takes its explicit config
    /// or the common profile.
    pub fn new(topo: &NetTopology, cfg: L2Config) -> Self {
        let mut ports = BTreeMap::new();
        for sw in topo.switches.keys() {
            for p in topo.switch_ports(sw) {
                let sp = match topo.attachment(&p) {
                    Some(Attachment::Link(_)) if !topo.port_configs.contains_key(&p) => SwitchPort::from_config(
                        p.clone(),
                        &PortConfig { mode: PortMode::Trunk(TrunkAllowed::All), ..PortConfig::default() },
                    ),
                    Some(Attachment::Router(r)) if !topo.port_configs.contains_key(&p) => {
                        let allowed: BTreeSet<VlanId> = topo
                            .pairs
                            .values()
                            .filter(|pair| &pair.primary == r || &pair.secondary == r)
                            .flat_map(|pair| pair.interfaces.keys().copied())
                            .collect();
                        SwitchPort::from_config(
                            p.clone(),
                            &PortConfig {
                                mode: PortMode::Trunk(TrunkAllowed::List(allowed)),
                                portfast: true,
                                ..PortConfig::default()
                            },
                        )
                    }
                    _ => SwitchPort::from_config(
                        p.clone(),
                        topo.port_configs.get(&p).unwrap_or(&topo.profile),
                    ),
                };
                ports.insert(p, sp);
            }
        }
        let fdb = topo.switches.keys().map(|s| (s.clone(), BTreeMap::new())).collect();
        L2Fabric { cfg, vlans: topo.vlans.clone(), ports, fdb }
    }

    pub fn port(&self, p: &PortRef) -> Option<&SwitchPort> {
        self.ports.get(p)
    }

    pub fn port_mut(&mut self, p: &PortRef) -> Option<&mut SwitchPort> {
        self.ports.get_mut(p)
    }

    pub fn ports(&self) -> impl Iterator<Item = &SwitchPort> {
        self.ports.values()
    }

    pub fn switch_ports<'a>(&'a self, sw: &'a SwitchId) -> impl Iterator<Item = &'a SwitchPort> + 'a {
        self.ports.range(PortRef { switch: sw.clone(), unit: 0, port: 0 }..).take_while(move |(p, _)| &p.switch == sw).map(|(_, sp)| sp)
    }

    pub fn is_ghost_vlan(&self, v: VlanId) -> bool {
        self.vlans.get(&v).is_some_and(|d| d.purpose == VlanPurpose::Ghost)
    }

    pub fn fdb(&self, sw: &SwitchId) -> Option<&BTreeMap<(VlanId, MacAddr), FdbEntry>> {
        self.fdb.get(sw)
    }

    pub fn flush_all(&mut self) {
        for t in self.fdb.values_mut() {
            t.clear();
        }
    }

    pub fn flush_port(&mut self, p: &PortRef) {
        if let Some(t) = self.fdb.get_mut(&p.switch) {
            t.retain(|_, e| &e.port != p);
        }
    }

    /// Re-keys per-port state after a spare element took over a unit.
    pub fn rehome_unit(&mut self, sw: &SwitchId, from: u8, to: u8) {
        let moved: Vec<PortRef> =
            self.ports.keys().filter(|p| &p.switch == sw && p.unit == from).cloned().collect();
        for p in moved {
            let mut sp = self.ports.remove(&p).expect("listed");
            let np = PortRef { unit: to, ..p.clone() };
            sp.port = np.clone();
            self.ports.insert(np, sp);
        }
        if let Some(t) = self.fdb.get_mut(sw) {
            t.clear();
        }
    }

    /// Which VLAN an arriving frame belongs to, or why it is refused.
    pub fn classify(&self, port: &PortRef, frame: &Frame) -> Result<VlanId, DropReason> {
        let sp = self.ports.get(port).ok_or(DropReason::Filtered)?;
        match (&sp.mode, frame.vlan) {
            (PortMode::Access(v), None) => Ok(*v),
            (PortMode::Access(v), Some(t)) if *v == t => Ok(t),
            (PortMode::Access(_), Some(t)) => Err(DropReason::VlanNotAllowed(t)),
            (PortMode::Trunk(_), None) => Ok(VlanId::DEFAULT),
            (PortMode::Trunk(a), Some(t)) if a.allows(t) => Ok(t),
            (PortMode::Trunk(_), Some(t)) => Err(DropReason::VlanNotAllowed(t)),
        }
    }

    /// Processes one data frame arriving on `port`. `forwarding` tells
    /// whether a port is up and in the STP forwarding state.
    pub fn ingress(
        &mut self,
        port: &PortRef,
        frame: &Frame,
        at: SimTime,
        forwarding: &dyn Fn(&PortRef) -> bool,
    ) -> Ingress {
        let mut out = Ingress::default();
        let Some(sp) = self.ports.get(port) else {
            out.dropped = Some(DropReason::Filtered);
            return out;
        };
        if sp.security.err_disabled {
            out.dropped = Some(DropReason::ErrDisabled);
            return out;
        }
        let vlan = match self.classify(port, frame) {
            Ok(v) => v,
            Err(r) => {
                self.ports.get_mut(port).expect("present").dropped += 1;
                out.dropped = Some(r);
                return out;
            }
        };
        out.vlan = Some(vlan);
        if !forwarding(port) {
            out.dropped = Some(DropReason::NotForwarding);
            return out;
        }
        let window = self.cfg.alert_window;
        let sp = self.ports.get_mut(port).expect("present");
        sp.rx_frames += 1;
        sp.rx_bytes += frame.size_bytes;
        if let Some(v) = check_security(sp, frame.src, at, window) {
            sp.dropped += 1;
            out.violation = Some(v);
            out.dropped = Some(DropReason::Security);
            return out;
        }

        let table = self.fdb.entry(port.switch.clone()).or_default();
        if !frame.src.is_multicast() {
            table.insert((vlan, frame.src), FdbEntry { port: port.clone(), last_seen: at });
        }
        let ttl = self.cfg.fdb_ttl;
        let known = if frame.is_flooded() {
            None
        } else {
            match table.get(&(vlan, frame.dst)) {
                Some(e) if at.saturating_sub(e.last_seen) <= ttl => Some(e.port.clone()),
                Some(_) => {
                    table.remove(&(vlan, frame.dst));
                    None
                }
                None => None,
            }
        };
        match known {
            Some(p) if &p == port => out.dropped = Some(DropReason::Filtered),
            Some(p) if forwarding(&p) && self.ports.get(&p).is_some_and(|e| e.mode.carries(vlan)) => {
                let tag = self.egress_tag(&p, vlan);
                out.egress.push((p, tag));
            }
            _ => {
                out.flooded = true;
                out.egress = self.flood_set(&port.switch, vlan, Some(port), forwarding);
            }
        }
        out
    }

    /// Ports on `sw` that would receive a flood in `vlan`.
    pub fn flood_set(
        &self,
        sw: &SwitchId,
        vlan: VlanId,
        except: Option<&PortRef>,
        forwarding: &dyn Fn(&PortRef) -> bool,
    ) -> Vec<(PortRef, Option<VlanId>)> {
        self.switch_ports(sw)
            .filter(|sp| Some(&sp.port) != except)
            .filter(|sp| sp.mode.carries(vlan) && !sp.security.err_disabled && forwarding(&sp.port))
            .map(|sp| (sp.port.clone(), self.egress_tag(&sp.port, vlan)))
            .collect()
    }

    fn egress_tag(&self, p: &PortRef, vlan: VlanId) -> Option<VlanId> {
        match self.ports.get(p).map(|sp| &sp.mode) {
            Some(PortMode::Trunk(_)) => Some(vlan),
            _ => None,
        }
    }

    /// Moves an access port to another VLAN and forgets what it learned.
    pub fn set_port_vlan(&mut self, port: &PortRef, vlan: VlanId) -> Result<VlanId, L2Error> {
        if !self.vlans.contains_key(&vlan) {
            return Err(L2Error::UnknownVlan(vlan));
        }
        let sp = self.ports.get_mut(port).ok_or_else(|| L2Error::UnknownPort(port.clone()))?;
        let old = match sp.mode {
            PortMode::Access(v) => v,
            PortMode::Trunk(_) => return Err(L2Error::TrunkPort(port.clone())),
        };
        sp.mode = PortMode::Access(vlan);
        self.flush_port(port);
        Ok(old)
    }

    /// Empties the sticky set and lifts err-disable. Returns whether the port
    /// had been err-disabled (the caller brings the link back up).
    pub fn clear_sticky(&mut self, port: &PortRef) -> Result<bool, L2Error> {
        let sp = self.ports.get_mut(port).ok_or_else(|| L2Error::UnknownPort(port.clone()))?;
        let was = sp.security.err_disabled;
        sp.security.sticky.clear();
        sp.security.err_disabled = false;
        sp.security.last_alert = None;
        self.flush_port(port);
        Ok(was)
    }

    pub fn set_description(&mut self, port: &PortRef, text: &str) -> Result<(), L2Error> {
        let sp = self.ports.get_mut(port).ok_or_else(|| L2Error::UnknownPort(port.clone()))?;
        sp.description = text.to_string();
        Ok(())
    }

    /// Records bytes leaving an edge port.
    pub fn account_egress(&mut self, port: &PortRef, frame: &Frame) {
        if let Some(sp) = self.ports.get_mut(port) {
            if matches!(frame.kind, FrameKind::Ghost { .. }) {
                sp.ghost_bytes += frame.size_bytes;
            }
        }
    }

    pub fn register_vlan(&mut self, decl: VlanDecl) {
        self.vlans.insert(decl.id, decl);
    }

    /// Access VLAN of every access port; used for snapshot comparisons.
    pub fn vlan_map(&self) -> BTreeMap<PortRef, VlanId> {
        self.ports.iter().filter_map(|(p, sp)| sp.mode.access_vlan().map(|v| (p.clone(), v))).collect()
    }
}

/// Sticky learning plus violation handling for one frame.
fn check_security(sp: &mut SwitchPort, src: MacAddr, at: SimTime, window: SimTime) -> Option<Violation> {
    let sec = &mut sp.security;
    if !sec.enabled || sec.sticky.contains(&src) {
        return None;
    }
    if (sec.sticky.len() as u32) < sec.max_macs {
        sec.sticky.push(src);
        return None;
    }
    Some(apply_violation(sp, src, at, window))
}

/// Applies the configured violation mode for a frame from `mac`.
pub fn apply_violation(sp: &mut SwitchPort, mac: MacAddr, at: SimTime, window: SimTime) -> Violation {
    let sec = &mut sp.security;
    sec.violation_count += 1;
    let alerted = match sec.mode {
        ViolationMode::Shutdown => {
            sec.err_disabled = true;
            true
        }
        ViolationMode::Restrict => {
            let due = sec.last_alert.is_none_or(|t| at.saturating_sub(t) >= window);
            if due {
                sec.last_alert = Some(at);
            }
            due
        }
        ViolationMode::Protect => false,
    };
    Violation { port: sp.port.clone(), mac, mode: sec.mode, alerted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{CapacityClass, TopologyBuilder};

    fn mac(n: u64) -> MacAddr {
        MacAddr::from_index(0, n)
    }

    fn two_switches() -> NetTopology {
        let mut b = TopologyBuilder::new();
        b.ups("u")
            .access_switch("S1", 4096, mac(0xa1), "u", 8)
            .access_switch("S2", 8192, mac(0xa2), "u", 8)
            .link(PortRef::new("S1", 1, 8), PortRef::new("S2", 1, 8), CapacityClass::Gigabit)
            .vlan(20, "staff", VlanPurpose::Production, None)
            .vlan(901, "ghost1", VlanPurpose::Ghost, None);
        for sw in ["S1", "S2"] {
            for p in 1..=3 {
                b.port(
                    PortRef::new(sw, 1, p),
                    PortConfig { mode: PortMode::Access(VlanId::new(20).unwrap()), ..PortConfig::default() },
                );
            }
        }
        b.build().unwrap()
    }

    fn frame(src: u64, dst: MacAddr) -> Frame {
        Frame { id: 1, src: mac(src), dst, vlan: None, kind: FrameKind::Unicast, size_bytes: 100 }
    }

    fn all(_: &PortRef) -> bool {
        true
    }

    #[test]
    fn unknown_unicast_floods_then_learns() {
        let topo = two_switches();
        let mut l2 = L2Fabric::new(&topo, L2Config::default());
        let p1 = PortRef::new("S1", 1, 1);
        let out = l2.ingress(&p1, &frame(1, mac(2)), SimTime::ZERO, &all);
        assert!(out.flooded);
        let ports: Vec<String> = out.egress.iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(ports, ["S1:1/0/2", "S1:1/0/3", "S1:1/0/8"]);
        // trunk egress is tagged, access egress is not
        assert_eq!(out.egress[2].1, VlanId::new(20).ok());
        assert_eq!(out.egress[0].1, None);

        let p2 = PortRef::new("S1", 1, 2);
        let back = l2.ingress(&p2, &frame(2, mac(1)), SimTime::from_secs(1), &all);
        assert_eq!(back.egress, vec![(p1.clone(), None)]);
    }

    #[test]
    fn fdb_entries_age_out() {
        let topo = two_switches();
        let mut l2 = L2Fabric::new(&topo, L2Config::default());
        let p1 = PortRef::new("S1", 1, 1);
        let p2 = PortRef::new("S1", 1, 2);
        l2.ingress(&p1, &frame(1, MacAddr::BROADCAST), SimTime::ZERO, &all);
        let late = l2.ingress(&p2, &frame(2, mac(1)), SimTime::from_secs(301), &all);
        assert!(late.flooded);
    }

    #[test]
    fn tagged_frame_on_wrong_access_vlan_is_refused() {
        let topo = two_switches();
        let mut l2 = L2Fabric::new(&topo, L2Config::default());
        let mut f = frame(1, MacAddr::BROADCAST);
        f.vlan = VlanId::new(901).ok();
        let out = l2.ingress(&PortRef::new("S1", 1, 1), &f, SimTime::ZERO, &all);
        assert_eq!(out.dropped, Some(DropReason::VlanNotAllowed(VlanId::new(901).unwrap())));
        assert!(out.egress.is_empty());
    }

    #[test]
    fn set_port_vlan_guards() {
        let topo = two_switches();
        let mut l2 = L2Fabric::new(&topo, L2Config::default());
        let p = PortRef::new("S1", 1, 1);
        assert_eq!(l2.set_port_vlan(&p, VlanId::new(4000).unwrap()), Err(L2Error::UnknownVlan(VlanId::new(4000).unwrap())));
        assert!(matches!(l2.set_port_vlan(&PortRef::new("S1", 1, 8), VlanId::new(20).unwrap()), Err(L2Error::TrunkPort(_))));
        assert_eq!(l2.set_port_vlan(&p, VlanId::new(901).unwrap()), Ok(VlanId::new(20).unwrap()));
        assert_eq!(l2.port(&p).unwrap().mode, PortMode::Access(VlanId::new(901).unwrap()));
    }

    fn secured(mode: ViolationMode) -> (L2Fabric, PortRef) {
        let topo = two_switches();
        let mut l2 = L2Fabric::new(&topo, L2Config::default());
        let p = PortRef::new("S1", 1, 1);
        let sp = l2.port_mut(&p).unwrap();
        sp.security.enabled = true;
        sp.security.mode = mode;
        (l2, p)
    }

    #[test]
    fn restrict_alerts_once_per_window() {
        let (mut l2, p) = secured(ViolationMode::Restrict);
        l2.ingress(&p, &frame(1, MacAddr::BROADCAST), SimTime::ZERO, &all);
        let mut alerts = 0;
        for i in 0..10u64 {
            let out = l2.ingress(&p, &frame(99, MacAddr::BROADCAST), SimTime::from_secs(i), &all);
            let v = out.violation.unwrap();
            alerts += v.alerted as u32;
            assert!(out.egress.is_empty());
        }
        assert_eq!(alerts, 1);
        assert_eq!(l2.port(&p).unwrap().security.violation_count, 10);
        assert!(!l2.port(&p).unwrap().security.err_disabled);
        let out = l2.ingress(&p, &frame(99, MacAddr::BROADCAST), SimTime::from_secs(60), &all);
        assert!(out.violation.unwrap().alerted);
    }

    #[test]
    fn shutdown_err_disables_until_cleared() {
        let (mut l2, p) = secured(ViolationMode::Shutdown);
        l2.ingress(&p, &frame(1, MacAddr::BROADCAST), SimTime::ZERO, &all);
        let out = l2.ingress(&p, &frame(2, MacAddr::BROADCAST), SimTime::ZERO, &all);
        assert!(out.violation.unwrap().alerted);
        let again = l2.ingress(&p, &frame(1, MacAddr::BROADCAST), SimTime::ZERO, &all);
        assert_eq!(again.dropped, Some(DropReason::ErrDisabled));
        assert_eq!(l2.clear_sticky(&p), Ok(true));
        let ok = l2.ingress(&p, &frame(2, MacAddr::BROADCAST), SimTime::ZERO, &all);
        assert!(ok.violation.is_none());
        assert_eq!(l2.port(&p).unwrap().security.sticky, vec![mac(2)]);
    }

    #[test]
    fn protect_is_silent() {
        let (mut l2, p) = secured(ViolationMode::Protect);
        l2.ingress(&p, &frame(1, MacAddr::BROADCAST), SimTime::ZERO, &all);
        for _ in 0..100 {
            let out = l2.ingress(&p, &frame(5, MacAddr::BROADCAST), SimTime::ZERO, &all);
            assert!(!out.violation.unwrap().alerted);
        }
        assert_eq!(l2.port(&p).unwrap().security.violation_count, 100);
    }

    #[test]
    fn clear_on_unsecured_port_is_noop() {
        let topo = two_switches();
        let mut l2 = L2Fabric::new(&topo, L2Config::default());
        assert_eq!(l2.clear_sticky(&PortRef::new("S2", 1, 3)), Ok(false));
        assert!(l2.clear_sticky(&PortRef::new("S9", 1, 3)).is_err());
    }
}
