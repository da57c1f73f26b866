//! The simulated plant: switches and their stack rings, inter-switch links,
//! UPS feeds, rooms/jacks/patches, hosts and router boxes.
//!
//! Everything here is static configuration plus the small amount of physical
//! state that fault injection toggles (element failure, link admin state,
//! router power). Forwarding state lives in `l2switch` and `stp`.

mod config;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{Cidr, MacAddr, VlanId};
use crate::l2switch::{PortMode, ViolationMode};
use crate::simcore::SimTime;

pub use config::{load_topology, TopologyBuilder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("duplicate MAC address {0}")]
    DuplicateMac(MacAddr),
    #[error("duplicate {0}")]
    Duplicate(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("stack ring of {switch} is not redundant: {detail}")]
    RingNotRedundant { switch: SwitchId, detail: String },
    #[error("unknown fault target: {0}")]
    UnknownTarget(String),
    #[error("switch {0} has no spare element")]
    NoSpare(SwitchId),
    #[error("element {element} of {switch} has not failed")]
    ElementNotFailed { switch: SwitchId, element: u8 },
}

macro_rules! name_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl AsRef<str>) -> Self {
                $name(s.as_ref().to_string())
            }
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

name_type!(
    /// Short switch name such as `A11` or `BigSwitch1`.
    SwitchId
);
name_type!(UpsId);
name_type!(RoomId);
name_type!(JackId);
name_type!(HostId);
name_type!(RouterId);

/// `(switch, stack unit, port)`; printed as `A11:1/0/15`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PortRef {
    pub switch: SwitchId,
    pub unit: u8,
    pub port: u16,
}

impl PortRef {
    pub fn new(switch: impl Into<String>, unit: u8, port: u16) -> PortRef {
        PortRef { switch: SwitchId(switch.into()), unit, port }
    }

    /// Port identifier carried in BPDUs.
    pub fn port_id(&self) -> u16 {
        (self.unit as u16) << 10 | (self.port & 0x3ff)
    }

    /// Parses the `unit/0/port`, `unit/port` or `0/port` part.
    pub fn parse_local(switch: &str, local: &str) -> Result<PortRef, String> {
        let parts: Vec<&str> = local.split(['/', ':', '.']).collect();
        let nums: Result<Vec<u16>, _> = parts.iter().map(|p| p.parse::<u16>()).collect();
        let nums = nums.map_err(|_| format!("bad port `{local}`"))?;
        let (unit, port) = match nums.as_slice() {
            [u, 0, p] => (*u, *p),
            [0, p] => (1, *p),
            [u, p] => (*u, *p),
            _ => return Err(format!("bad port `{local}`")),
        };
        if unit == 0 || unit > 255 || port == 0 {
            return Err(format!("bad port `{local}`"));
        }
        Ok(PortRef::new(switch, unit as u8, port))
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}/0/{}", self.switch, self.unit, self.port)
    }
}

impl fmt::Debug for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Accepts `A11:1/0/15`, `A11:1:15`, `A11 1/0/15` and `A11 0/15`.
impl FromStr for PortRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (sw, local) = s
            .split_once(':')
            .or_else(|| s.split_once(char::is_whitespace))
            .ok_or_else(|| format!("bad port reference `{s}`"))?;
        let sw = sw.trim();
        if sw.is_empty() {
            return Err(format!("bad port reference `{s}`"));
        }
        PortRef::parse_local(sw, local.trim())
    }
}

impl From<PortRef> for String {
    fn from(p: PortRef) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PortRef {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchKind {
    Access,
    CoreStack,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackElement {
    pub index: u8,
    pub ups: UpsId,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switch {
    pub id: SwitchId,
    pub kind: SwitchKind,
    pub building: String,
    pub priority: u16,
    pub mac: MacAddr,
    pub elements: Vec<StackElement>,
    pub ring: Vec<(u8, u8)>,
    pub ports_per_element: u16,
    /// Index of the element held in reserve; cleared once it takes over.
    pub spare: Option<u8>,
}

impl Switch {
    pub fn element(&self, index: u8) -> Option<&StackElement> {
        self.elements.iter().find(|e| e.index == index)
    }

    fn element_mut(&mut self, index: u8) -> Option<&mut StackElement> {
        self.elements.iter_mut().find(|e| e.index == index)
    }

    pub fn has_port(&self, port: &PortRef) -> bool {
        port.switch == self.id
            && self.element(port.unit).is_some()
            && (1..=self.ports_per_element).contains(&port.port)
    }

    /// Elements that are powered and still ring-connected to the stack
    /// master (the lowest-numbered live element).
    pub fn live_elements(&self) -> BTreeSet<u8> {
        let alive: BTreeSet<u8> =
            self.elements.iter().filter(|e| !e.failed).map(|e| e.index).collect();
        let Some(&master) = alive.iter().next() else {
            return BTreeSet::new();
        };
        if self.elements.len() == 1 {
            return alive;
        }
        ring_component(&self.ring, &alive, master)
    }

    pub fn is_alive(&self) -> bool {
        !self.live_elements().is_empty()
    }
}

fn ring_component(ring: &[(u8, u8)], nodes: &BTreeSet<u8>, start: u8) -> BTreeSet<u8> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &(a, b) in ring {
            let next = if a == n {
                b
            } else if b == n {
                a
            } else {
                continue;
            };
            if nodes.contains(&next) && seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkState {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityClass {
    Fast,
    Gigabit,
}

impl CapacityClass {
    /// Conventional 802.1D path cost.
    pub fn path_cost(self) -> u32 {
        match self {
            CapacityClass::Fast => 19,
            CapacityClass::Gigabit => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: PortRef,
    pub b: PortRef,
    /// Effective state, derived from `admin_up` and element liveness.
    pub state: LinkState,
    pub class: CapacityClass,
    pub admin_up: bool,
}

impl Link {
    pub fn other_end(&self, p: &PortRef) -> Option<&PortRef> {
        if &self.a == p {
            Some(&self.b)
        } else if &self.b == p {
            Some(&self.a)
        } else {
            None
        }
    }

    pub fn is_up(&self) -> bool {
        self.state == LinkState::Up
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: RoomId,
    pub building: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jack {
    pub id: JackId,
    pub room: RoomId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Managed {
    Analyst,
    User,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HostRole {
    Workstation,
    Server,
    Printer,
    Dns,
    Antivirus,
    GhostServer,
    GhostRouter,
    GhostDhcp,
}

impl FromStr for HostRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "workstation" => HostRole::Workstation,
            "server" => HostRole::Server,
            "printer" => HostRole::Printer,
            "dns" => HostRole::Dns,
            "antivirus" => HostRole::Antivirus,
            "ghost-server" => HostRole::GhostServer,
            "ghost-router" => HostRole::GhostRouter,
            "ghost-dhcp" => HostRole::GhostDhcp,
            _ => return Err(format!("unknown host role `{s}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub id: HostId,
    pub fqdn: String,
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
    /// Registered jack.
    pub jack: Option<JackId>,
    /// Jack the machine is physically plugged into right now.
    pub attached: Option<JackId>,
    pub managed: Managed,
    pub rp: Option<String>,
    pub roles: Vec<HostRole>,
    /// Analyst-managed machines announce themselves after link-up.
    pub handshake: bool,
    /// Deliberately reuses another host's MAC.
    pub spoofer: bool,
}

impl Host {
    /// User-managed workstation plugged into (and registered at) `jack`.
    pub fn new(id: &str, mac: MacAddr, ip: Ipv4Addr, jack: Option<&str>) -> Host {
        let jack = jack.map(JackId::new);
        Host {
            id: HostId::new(id),
            fqdn: format!("{id}.domain"),
            mac,
            ip,
            attached: jack.clone(),
            jack,
            managed: Managed::User,
            rp: None,
            roles: vec![HostRole::Workstation],
            handshake: false,
            spoofer: false,
        }
    }

    pub fn has_role(&self, role: HostRole) -> bool {
        self.roles.contains(&role)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Router {
    pub id: RouterId,
    pub ups: UpsId,
    pub attach: PortRef,
    pub failed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Internal,
    External,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlanInterface {
    pub gateway: Ipv4Addr,
    pub subnet: Cidr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterPairDecl {
    pub name: String,
    pub kind: PairKind,
    pub primary: RouterId,
    pub secondary: RouterId,
    pub interfaces: BTreeMap<VlanId, VlanInterface>,
    pub sync_interval: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VlanPurpose {
    Production,
    Ghost,
    Faculty,
    Management,
}

impl FromStr for VlanPurpose {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "production" => VlanPurpose::Production,
            "ghost" => VlanPurpose::Ghost,
            "faculty" => VlanPurpose::Faculty,
            "management" => VlanPurpose::Management,
            _ => return Err(format!("unknown vlan purpose `{s}`")),
        })
    }
}

impl fmt::Display for VlanPurpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VlanPurpose::Production => "production",
            VlanPurpose::Ghost => "ghost",
            VlanPurpose::Faculty => "faculty",
            VlanPurpose::Management => "management",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlanDecl {
    pub id: VlanId,
    pub name: String,
    pub purpose: VlanPurpose,
    pub owner: Option<String>,
}

/// Per-port configuration as loaded; the common profile fills in every
/// host-facing port that has no explicit section.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortConfig {
    pub mode: PortMode,
    pub description: String,
    pub security: bool,
    pub max_macs: u32,
    pub violation: ViolationMode,
    pub sticky: Vec<MacAddr>,
    pub portfast: bool,
}

impl Default for PortConfig {
    fn default() -> Self {
        PortConfig {
            mode: PortMode::Access(VlanId::DEFAULT),
            description: String::new(),
            security: false,
            max_macs: 1,
            violation: ViolationMode::Restrict,
            sticky: Vec::new(),
            portfast: false,
        }
    }
}

/// What a switch port is wired to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attachment {
    Link(LinkId),
    Jack(JackId),
    Router(RouterId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    LinkDown(LinkId),
    LinkUp(LinkId),
    StackElementFail(SwitchId, u8),
    StackElementRecover(SwitchId, u8),
    UpsFail(UpsId),
    UpsRestore(UpsId),
    RouterFail(RouterId),
    RouterRecover(RouterId),
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::LinkDown(l) => write!(f, "link-down {l}"),
            Fault::LinkUp(l) => write!(f, "link-up {l}"),
            Fault::StackElementFail(s, e) => write!(f, "element-fail {s} {e}"),
            Fault::StackElementRecover(s, e) => write!(f, "element-recover {s} {e}"),
            Fault::UpsFail(u) => write!(f, "ups-fail {u}"),
            Fault::UpsRestore(u) => write!(f, "ups-restore {u}"),
            Fault::RouterFail(r) => write!(f, "router-fail {r}"),
            Fault::RouterRecover(r) => write!(f, "router-recover {r}"),
        }
    }
}

/// A change in physical liveness produced by a fault or a plug event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkTransition {
    Link { link: LinkId, up: bool },
    Edge { port: PortRef, up: bool },
    Router { router: RouterId, up: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetTopology {
    pub switches: BTreeMap<SwitchId, Switch>,
    pub links: BTreeMap<LinkId, Link>,
    pub ups: BTreeSet<UpsId>,
    pub rooms: BTreeMap<RoomId, Room>,
    pub jacks: BTreeMap<JackId, Jack>,
    pub patches: BTreeMap<JackId, PortRef>,
    pub hosts: BTreeMap<HostId, Host>,
    pub routers: BTreeMap<RouterId, Router>,
    pub pairs: BTreeMap<String, RouterPairDecl>,
    pub vlans: BTreeMap<VlanId, VlanDecl>,
    pub port_configs: BTreeMap<PortRef, PortConfig>,
    pub profile: PortConfig,
    pub link_delay: SimTime,
    pub domain: String,
    /// Reverse index: port → what is plugged into it.
    #[serde(skip)]
    attachments: BTreeMap<PortRef, Attachment>,
}

impl NetTopology {
    pub(crate) fn reindex(&mut self) {
        let mut idx = BTreeMap::new();
        for l in self.links.values() {
            idx.insert(l.a.clone(), Attachment::Link(l.id));
            idx.insert(l.b.clone(), Attachment::Link(l.id));
        }
        for (j, p) in &self.patches {
            idx.insert(p.clone(), Attachment::Jack(j.clone()));
        }
        for r in self.routers.values() {
            idx.insert(r.attach.clone(), Attachment::Router(r.id.clone()));
        }
        self.attachments = idx;
    }

    pub fn attachment(&self, port: &PortRef) -> Option<&Attachment> {
        self.attachments.get(port)
    }

    pub fn attachments(&self) -> &BTreeMap<PortRef, Attachment> {
        &self.attachments
    }

    pub fn is_inter_switch(&self, port: &PortRef) -> bool {
        matches!(self.attachments.get(port), Some(Attachment::Link(_)))
    }

    pub fn link_at(&self, port: &PortRef) -> Option<&Link> {
        match self.attachments.get(port) {
            Some(Attachment::Link(id)) => self.links.get(id),
            _ => None,
        }
    }

    pub fn port_exists(&self, port: &PortRef) -> bool {
        self.switches.get(&port.switch).is_some_and(|s| s.has_port(port))
    }

    /// All ports of a switch, in unit/port order.
    pub fn switch_ports(&self, id: &SwitchId) -> Vec<PortRef> {
        let Some(sw) = self.switches.get(id) else { return Vec::new() };
        let mut out = Vec::new();
        for e in &sw.elements {
            for p in 1..=sw.ports_per_element {
                out.push(PortRef { switch: id.clone(), unit: e.index, port: p });
            }
        }
        out
    }

    /// The element hosting `port` is powered and part of the live stack.
    pub fn port_powered(&self, port: &PortRef) -> bool {
        self.switches
            .get(&port.switch)
            .is_some_and(|s| s.live_elements().contains(&port.unit))
    }

    pub fn jack_port(&self, jack: &JackId) -> Option<&PortRef> {
        self.patches.get(jack)
    }

    pub fn port_jack(&self, port: &PortRef) -> Option<&JackId> {
        match self.attachments.get(port) {
            Some(Attachment::Jack(j)) => Some(j),
            _ => None,
        }
    }

    pub fn host_port(&self, host: &HostId) -> Option<&PortRef> {
        let h = self.hosts.get(host)?;
        self.patches.get(h.attached.as_ref()?)
    }

    /// Host currently plugged into the jack patched to `port`.
    pub fn hosts_on_port(&self, port: &PortRef) -> Vec<&Host> {
        match self.port_jack(port) {
            Some(j) => self.hosts.values().filter(|h| h.attached.as_ref() == Some(j)).collect(),
            None => Vec::new(),
        }
    }

    pub fn host_by_mac(&self, mac: MacAddr) -> Option<&Host> {
        self.hosts.values().find(|h| h.mac == mac && !h.spoofer)
    }

    pub fn host_by_name(&self, name: &str) -> Option<&Host> {
        self.hosts
            .get(&HostId::new(name))
            .or_else(|| self.hosts.values().find(|h| h.fqdn == name))
    }

    pub fn host_by_ip(&self, ip: Ipv4Addr) -> Option<&Host> {
        self.hosts.values().find(|h| h.ip == ip)
    }

    pub fn find_link(&self, a: &SwitchId, b: &SwitchId) -> Vec<&Link> {
        self.links
            .values()
            .filter(|l| {
                (&l.a.switch == a && &l.b.switch == b) || (&l.a.switch == b && &l.b.switch == a)
            })
            .collect()
    }

    /// Liveness of every attachment, keyed for diffing.
    fn liveness(&self) -> BTreeMap<Attachment, (PortRef, bool)> {
        let live: BTreeMap<&SwitchId, BTreeSet<u8>> =
            self.switches.iter().map(|(id, s)| (id, s.live_elements())).collect();
        let powered = |p: &PortRef| live.get(&p.switch).is_some_and(|l| l.contains(&p.unit));
        let plugged: BTreeSet<&JackId> =
            self.hosts.values().filter_map(|h| h.attached.as_ref()).collect();
        let mut out = BTreeMap::new();
        for l in self.links.values() {
            let up = l.admin_up && powered(&l.a) && powered(&l.b);
            out.insert(Attachment::Link(l.id), (l.a.clone(), up));
        }
        for (j, p) in &self.patches {
            out.insert(Attachment::Jack(j.clone()), (p.clone(), plugged.contains(j) && powered(p)));
        }
        for r in self.routers.values() {
            let up = !r.failed && powered(&r.attach);
            out.insert(Attachment::Router(r.id.clone()), (r.attach.clone(), up));
        }
        out
    }

    fn apply_liveness(&mut self) {
        let live = self.liveness();
        for l in self.links.values_mut() {
            let up = live.get(&Attachment::Link(l.id)).is_some_and(|(_, u)| *u);
            l.state = if up { LinkState::Up } else { LinkState::Down };
        }
    }

    fn diff(
        before: &BTreeMap<Attachment, (PortRef, bool)>,
        after: &BTreeMap<Attachment, (PortRef, bool)>,
    ) -> Vec<LinkTransition> {
        let mut out = Vec::new();
        for (k, (port, up)) in after {
            let was = before.get(k).map(|(p, u)| (p, *u));
            let changed = match was {
                Some((p, u)) => u != *up || p != port,
                None => *up,
            };
            if !changed {
                continue;
            }
            // A rehomed attachment reports the old port going down first.
            if let Some((old_port, true)) = was {
                if old_port != port {
                    if let Attachment::Jack(_) = k {
                        out.push(LinkTransition::Edge { port: old_port.clone(), up: false });
                    }
                }
            }
            out.push(match k {
                Attachment::Link(id) => LinkTransition::Link { link: *id, up: *up },
                Attachment::Jack(_) => LinkTransition::Edge { port: port.clone(), up: *up },
                Attachment::Router(r) => LinkTransition::Router { router: r.clone(), up: *up },
            });
        }
        out
    }

    /// Applies a physical fault. Only liveness flags change; VLAN and
    /// security configuration are never touched.
    pub fn inject_fault(&mut self, fault: &Fault) -> Result<Vec<LinkTransition>, TopologyError> {
        let before = self.liveness();
        match fault {
            Fault::LinkDown(id) | Fault::LinkUp(id) => {
                let l = self
                    .links
                    .get_mut(id)
                    .ok_or_else(|| TopologyError::UnknownTarget(id.to_string()))?;
                l.admin_up = matches!(fault, Fault::LinkUp(_));
            }
            Fault::StackElementFail(sw, e) | Fault::StackElementRecover(sw, e) => {
                let el = self
                    .switches
                    .get_mut(sw)
                    .and_then(|s| s.element_mut(*e))
                    .ok_or_else(|| TopologyError::UnknownTarget(format!("{sw} element {e}")))?;
                el.failed = matches!(fault, Fault::StackElementFail(..));
            }
            Fault::UpsFail(u) | Fault::UpsRestore(u) => {
                if !self.ups.contains(u) {
                    return Err(TopologyError::UnknownTarget(u.to_string()));
                }
                let failed = matches!(fault, Fault::UpsFail(_));
                for sw in self.switches.values_mut() {
                    for el in sw.elements.iter_mut().filter(|el| &el.ups == u) {
                        el.failed = failed;
                    }
                }
                for r in self.routers.values_mut().filter(|r| &r.ups == u) {
                    r.failed = failed;
                }
            }
            Fault::RouterFail(r) | Fault::RouterRecover(r) => {
                let router = self
                    .routers
                    .get_mut(r)
                    .ok_or_else(|| TopologyError::UnknownTarget(r.to_string()))?;
                router.failed = matches!(fault, Fault::RouterFail(_));
            }
        }
        self.apply_liveness();
        Ok(Self::diff(&before, &self.liveness()))
    }

    /// Moves a host's cable to `jack` (or unplugs it with `None`).
    pub fn plug_host(
        &mut self,
        host: &HostId,
        jack: Option<JackId>,
    ) -> Result<Vec<LinkTransition>, TopologyError> {
        if let Some(j) = &jack {
            if !self.jacks.contains_key(j) {
                return Err(TopologyError::DanglingReference(format!("jack {j}")));
            }
        }
        let before = self.liveness();
        let h = self
            .hosts
            .get_mut(host)
            .ok_or_else(|| TopologyError::UnknownTarget(format!("host {host}")))?;
        h.attached = jack;
        Ok(Self::diff(&before, &self.liveness()))
    }

    /// Spare element takes over every port assignment of `failed_element`.
    pub fn activate_spare(
        &mut self,
        switch: &SwitchId,
        failed_element: u8,
    ) -> Result<Vec<LinkTransition>, TopologyError> {
        let sw = self
            .switches
            .get(switch)
            .ok_or_else(|| TopologyError::UnknownTarget(switch.to_string()))?;
        let spare = sw.spare.ok_or_else(|| TopologyError::NoSpare(switch.clone()))?;
        let el = sw
            .element(failed_element)
            .ok_or_else(|| TopologyError::UnknownTarget(format!("{switch} element {failed_element}")))?;
        if !el.failed {
            return Err(TopologyError::ElementNotFailed { switch: switch.clone(), element: failed_element });
        }
        let before = self.liveness();
        let rehome = |p: &mut PortRef| {
            if &p.switch == switch && p.unit == failed_element {
                p.unit = spare;
            }
        };
        for l in self.links.values_mut() {
            rehome(&mut l.a);
            rehome(&mut l.b);
        }
        for p in self.patches.values_mut() {
            rehome(p);
        }
        for r in self.routers.values_mut() {
            rehome(&mut r.attach);
        }
        let moved: Vec<(PortRef, PortConfig)> = self
            .port_configs
            .iter()
            .filter(|(p, _)| &p.switch == switch && p.unit == failed_element)
            .map(|(p, c)| (p.clone(), c.clone()))
            .collect();
        for (mut p, c) in moved {
            self.port_configs.remove(&p);
            p.unit = spare;
            self.port_configs.insert(p, c);
        }
        self.switches.get_mut(switch).expect("checked").spare = None;
        self.reindex();
        self.apply_liveness();
        Ok(Self::diff(&before, &self.liveness()))
    }

    /// The UPS redundancy property: removing the elements of any single
    /// feed leaves the rest of the ring connected.
    pub fn check_ring_redundancy(sw: &Switch) -> Result<(), TopologyError> {
        if sw.elements.len() <= 1 {
            return Ok(());
        }
        let all: BTreeSet<u8> = sw.elements.iter().map(|e| e.index).collect();
        let first = *all.iter().next().expect("non-empty");
        if ring_component(&sw.ring, &all, first) != all {
            return Err(TopologyError::RingNotRedundant {
                switch: sw.id.clone(),
                detail: "ring is not connected".into(),
            });
        }
        let feeds: BTreeSet<&UpsId> = sw.elements.iter().map(|e| &e.ups).collect();
        for feed in feeds {
            let rest: BTreeSet<u8> =
                sw.elements.iter().filter(|e| &e.ups != feed).map(|e| e.index).collect();
            if let Some(&start) = rest.iter().next() {
                if ring_component(&sw.ring, &rest, start) != rest {
                    return Err(TopologyError::RingNotRedundant {
                        switch: sw.id.clone(),
                        detail: format!("losing {feed} partitions the ring"),
                    });
                }
            }
        }
        Ok(())
    }
}
