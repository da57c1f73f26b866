//! The running campus: topology, switching fabric, spanning tree, router
//! pairs and ghost sessions, all driven from one event queue.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv4Addr;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{drop_reason, CampusEvent};
use crate::addr::{MacAddr, VlanId};
use crate::fwengine::{
    compile, ConnState, parse_chokes, parse_outside_chokes, parse_patch_sites, parse_quarantine, parse_resolver, ChokeEntry,
    CompileInput, Firewall, FwError, OutsideChoke, Packet, PatchSite, PolicyProfile, Proto, QuarantineEntry,
    StaticResolver, Verdict,
};
use crate::ghosting::{GhostConfig, GhostError, GhostRegistry, GhostSession};
use crate::inventory::{port_row, ElementRow, GhostVlanRow, NetState, PatchRow, QuarantineRow, SwitchRow, VlanRow};
use crate::l2switch::{DropReason, Frame, FrameKind, L2Config, L2Error, L2Fabric, PortMode, SwitchPort, ViolationMode};
use crate::monitoring::{detect_spoof, SpoofDetector, HANDSHAKE_WINDOW};
use crate::routerha::{HaError, HaEvent, RouterPair, Routed, Side, HEARTBEAT};
use crate::simcore::{Event, Scheduler, SimTime};
use crate::stp::{PortState, Stp, StpAction, StpError, StpTimers, StpView};
use crate::topology::{
    Attachment, Fault, HostId, JackId, LinkId, LinkTransition, Managed, NetTopology, PairKind, PortRef, RouterId,
    SwitchId, SwitchKind, TopologyError,
};

pub const ANNOUNCE_DELAY: SimTime = SimTime::from_secs(1);
pub const HANDSHAKE_DELAY: SimTime = SimTime::from_secs(5);
pub const STP_MULTICAST: MacAddr = MacAddr([0x01, 0x80, 0xc2, 0x00, 0x00, 0x00]);
const CONTROL_FRAME_BYTES: u64 = 64;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Firewall(#[from] FwError),
    #[error(transparent)]
    L2(#[from] L2Error),
    #[error(transparent)]
    Ghost(#[from] GhostError),
    #[error(transparent)]
    Ha(#[from] HaError),
    #[error(transparent)]
    Stp(#[from] StpError),
    #[error("unknown host {0}")]
    UnknownHost(String),
    #[error("host {0} is not plugged in")]
    NotAttached(HostId),
    #[error("unknown port {0}")]
    UnknownPort(PortRef),
    #[error("unknown router pair {0}")]
    UnknownPair(String),
    #[error("{0} is not quarantined")]
    NotQuarantined(String),
    #[error("{path}: {source}")]
    PolicyFile { path: String, source: FwError },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldConfig {
    pub seed: u64,
    pub timers: StpTimers,
    pub l2: L2Config,
    pub ghost: GhostConfig,
    /// Calendar date of simulated time zero, used for quarantine stamps.
    pub epoch: NaiveDate,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            timers: StpTimers::default(),
            l2: L2Config::default(),
            ghost: GhostConfig::default(),
            epoch: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
        }
    }
}

impl WorldConfig {
    pub fn fast() -> Self {
        WorldConfig { timers: StpTimers::fast(), ..Self::default() }
    }
}

/// Firewall sources shared by both router pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySet {
    pub quarantine: Vec<QuarantineEntry>,
    pub patch_sites: Vec<PatchSite>,
    pub chokes: Vec<ChokeEntry>,
    pub outside_chokes: Vec<OutsideChoke>,
    pub internal: PolicyProfile,
    pub external: PolicyProfile,
    pub resolver: StaticResolver,
}

impl Default for PolicySet {
    fn default() -> Self {
        PolicySet {
            quarantine: Vec::new(),
            patch_sites: Vec::new(),
            chokes: Vec::new(),
            outside_chokes: Vec::new(),
            internal: PolicyProfile::default(),
            external: PolicyProfile::default(),
            resolver: StaticResolver::default(),
        }
    }
}

pub const POLICY_FILES: [&str; 7] = [
    "internal.profile",
    "external.profile",
    "quarantine",
    "patch-sites",
    "chokes",
    "outside-chokes",
    "resolver",
];

impl PolicySet {
    /// Reads a policy directory. Missing files count as empty.
    pub fn load_dir(dir: &Path) -> Result<PolicySet, WorldError> {
        PolicySet::from_sources(&dir.display().to_string(), |name| {
            let p = dir.join(name);
            match std::fs::read_to_string(&p) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
                Err(e) => Err(WorldError::Io { path: p.display().to_string(), msg: e.to_string() }),
            }
        })
    }

    /// Builds a set from named file contents; `read` gets each name in
    /// [`POLICY_FILES`].
    pub fn from_sources(
        origin: &str,
        read: impl Fn(&str) -> Result<String, WorldError>,
    ) -> Result<PolicySet, WorldError> {
        let ctx = |name: &str| {
            let path = format!("{origin}/{name}");
            move |source: FwError| WorldError::PolicyFile { path, source }
        };
        Ok(PolicySet {
            internal: PolicyProfile::parse(&read("internal.profile")?).map_err(ctx("internal.profile"))?,
            external: PolicyProfile::parse(&read("external.profile")?).map_err(ctx("external.profile"))?,
            quarantine: parse_quarantine(&read("quarantine")?).map_err(ctx("quarantine"))?,
            patch_sites: parse_patch_sites(&read("patch-sites")?).map_err(ctx("patch-sites"))?,
            chokes: parse_chokes(&read("chokes")?).map_err(ctx("chokes"))?,
            outside_chokes: parse_outside_chokes(&read("outside-chokes")?).map_err(ctx("outside-chokes"))?,
            resolver: parse_resolver(&read("resolver")?).map_err(ctx("resolver"))?,
        })
    }

    /// Adds every host name in `topo` the resolver does not already know.
    pub fn learn_hosts(&mut self, topo: &NetTopology) {
        for h in topo.hosts.values().filter(|h| !h.spoofer) {
            if self.resolver.resolve(&h.fqdn).is_err() {
                self.resolver.insert(&h.fqdn, vec![h.ip]);
            }
        }
    }

    /// Compiler input for one side. Quarantine applies wherever the profile
    /// enables it; choke lists only make sense at the external edge.
    pub fn input_for(&self, kind: PairKind) -> CompileInput {
        let external = kind == PairKind::External;
        CompileInput {
            quarantine: self.quarantine.clone(),
            patch_sites: self.patch_sites.clone(),
            chokes: if external { self.chokes.clone() } else { Vec::new() },
            outside_chokes: if external { self.outside_chokes.clone() } else { Vec::new() },
            profile: if external { self.external.clone() } else { self.internal.clone() },
            resolver: self.resolver.clone(),
        }
    }

    /// The quarantine list in its source format.
    pub fn quarantine_text(&self) -> String {
        let mut out = String::new();
        for e in &self.quarantine {
            out.push_str(&e.header());
            out.push('\n');
            out.push_str(&e.hostname);
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostRx {
    pub frames: u64,
    pub bytes: u64,
    pub ghost_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSummary {
    pub name: String,
    pub kind: PairKind,
    pub active: Option<RouterId>,
    pub primary_up: bool,
    pub secondary_up: bool,
    pub ruleset_version: u64,
    pub conntrack: usize,
}

/// Everything a reader outside the event loop may look at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub at: SimTime,
    pub log_len: usize,
    pub topology: NetTopology,
    pub ports: Vec<SwitchPort>,
    pub forced_down: Vec<PortRef>,
    pub stp: StpView,
    pub pairs: Vec<PairSummary>,
    pub ghost_sessions: Vec<GhostSession>,
    pub quarantine: Vec<QuarantineEntry>,
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Snapshot, serde_json::Error> {
        let mut snap: Snapshot = serde_json::from_str(s)?;
        snap.topology.reindex();
        Ok(snap)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeExport {
    pub id: SwitchId,
    pub kind: String,
    pub building: String,
    pub root: bool,
    pub alive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeExport {
    pub id: LinkId,
    pub a: PortRef,
    pub b: PortRef,
    /// `forwarding`, `blocking` or `down`.
    pub state: String,
    pub blocked_end: Option<PortRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyExport {
    pub at: SimTime,
    pub nodes: Vec<NodeExport>,
    pub edges: Vec<EdgeExport>,
    pub stp: StpView,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortExport {
    pub port: PortRef,
    pub mode: String,
    pub vlan: Option<VlanId>,
    pub description: String,
    pub security: String,
    pub sticky: Vec<MacAddr>,
    pub violations: u64,
    pub err_disabled: bool,
    pub link_up: bool,
    pub stp_state: Option<PortState>,
    pub attached: Option<String>,
}

#[derive(Clone)]
pub struct World {
    pub cfg: WorldConfig,
    pub topo: NetTopology,
    pub fabric: L2Fabric,
    pub stp: Stp,
    pub pairs: BTreeMap<String, RouterPair>,
    pub ghosts: GhostRegistry,
    pub policy: PolicySet,
    pub host_rx: BTreeMap<HostId, HostRx>,
    sched: Scheduler<CampusEvent>,
    spoof: SpoofDetector,
    spoof_fed: usize,
    rng: ChaCha8Rng,
    next_frame: u64,
    bpdus_in_flight: usize,
    forced_down: BTreeSet<PortRef>,
    router_macs: BTreeMap<RouterId, MacAddr>,
    trace: Option<VecDeque<(u64, PortRef)>>,
}

fn mode_name(m: &PortMode) -> &'static str {
    match m {
        PortMode::Access(_) => "access",
        PortMode::Trunk(_) => "trunk",
    }
}

impl World {
    pub fn new(topo: NetTopology, mut policy: PolicySet, cfg: WorldConfig) -> Result<World, WorldError> {
        policy.learn_hosts(&topo);
        let mut pairs = BTreeMap::new();
        for decl in topo.pairs.values() {
            let fw = Firewall::new(compile(&policy.input_for(decl.kind))?)?;
            let mut pair = RouterPair::new(decl.clone(), fw);
            for r in [&decl.primary, &decl.secondary] {
                let up = topo.routers.get(r).is_some_and(|x| !x.failed && topo.port_powered(&x.attach));
                pair.set_up(r, up);
            }
            pairs.insert(decl.name.clone(), pair);
        }
        let router_macs =
            topo.routers.keys().enumerate().map(|(i, r)| (r.clone(), MacAddr::from_index(0x02, i as u64 + 1))).collect();
        let mut w = World {
            fabric: L2Fabric::new(&topo, cfg.l2.clone()),
            stp: Stp::new(&topo, cfg.timers.clone()),
            ghosts: GhostRegistry::new(cfg.ghost.clone()),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            topo,
            pairs,
            policy,
            host_rx: BTreeMap::new(),
            sched: Scheduler::new(),
            spoof: SpoofDetector::default(),
            spoof_fed: 0,
            next_frame: 1,
            bpdus_in_flight: 0,
            forced_down: BTreeSet::new(),
            router_macs,
            trace: None,
        };
        w.boot();
        Ok(w)
    }

    fn boot(&mut self) {
        let up: Vec<PortRef> =
            self.topo.attachments().keys().filter(|p| self.port_live(p)).cloned().collect();
        let actions = self.stp.start(&up, SimTime::ZERO);
        self.apply_stp(actions);
        self.sched.schedule_in(self.stp.timers.hello, CampusEvent::StpHello);
        self.sched.schedule_in(HEARTBEAT, CampusEvent::Heartbeat);
        let syncs: Vec<(String, SimTime)> =
            self.pairs.values().map(|p| (p.name().to_string(), p.decl.sync_interval)).collect();
        for (pair, every) in syncs {
            self.sched.schedule_in(every, CampusEvent::Sync { pair });
        }
        let hosts: Vec<HostId> = self
            .topo
            .hosts
            .values()
            .filter(|h| self.topo.host_port(&h.id).is_some_and(|p| self.port_live(p)))
            .map(|h| h.id.clone())
            .collect();
        for host in hosts {
            self.sched.schedule_in(ANNOUNCE_DELAY, CampusEvent::HostAnnounce { host });
        }
    }

    pub fn now(&self) -> SimTime {
        self.sched.clock()
    }

    pub fn log(&self) -> &[Event<CampusEvent>] {
        self.sched.log().entries()
    }

    pub fn events_since(&self, cursor: usize) -> &[Event<CampusEvent>] {
        self.sched.log().since(cursor.min(self.sched.log().len()))
    }

    pub fn export_log(&self) -> String {
        self.sched.log().export()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Processes every event due up to and including `t`.
    pub fn run_until(&mut self, t: SimTime) -> usize {
        let mut n = 0;
        while let Some(ev) = self.sched.pop_due(t) {
            self.handle(ev);
            n += 1;
        }
        self.sched.advance_to(t.max(self.now()));
        n
    }

    pub fn run_for(&mut self, d: SimTime) -> usize {
        self.run_until(self.now() + d)
    }

    /// Processes whatever is already due at the current instant.
    pub fn settle(&mut self) -> usize {
        self.run_until(self.now())
    }

    fn record(&mut self, ev: CampusEvent) {
        self.sched.schedule_in(SimTime::ZERO, ev);
    }

    pub fn record_command(&mut self, actor: &str, op: &str, args: &str, outcome: &str) {
        self.record(CampusEvent::Command {
            actor: actor.into(),
            op: op.into(),
            args: args.into(),
            outcome: outcome.into(),
        });
    }

    fn frame_id(&mut self) -> u64 {
        let id = self.next_frame;
        self.next_frame += 1;
        id
    }

    /// Physically up: the link is up, a host is plugged in, or the router
    /// is alive, and the hosting element has power.
    pub fn port_powered_up(&self, p: &PortRef) -> bool {
        match self.topo.attachment(p) {
            Some(Attachment::Link(id)) => self.topo.links.get(id).is_some_and(|l| l.is_up()),
            Some(Attachment::Jack(j)) => {
                self.topo.port_powered(p) && self.topo.hosts.values().any(|h| h.attached.as_ref() == Some(j))
            }
            Some(Attachment::Router(r)) => {
                self.topo.routers.get(r).is_some_and(|x| !x.failed) && self.topo.port_powered(p)
            }
            None => false,
        }
    }

    /// Up and not shut by port security.
    pub fn port_live(&self, p: &PortRef) -> bool {
        self.port_powered_up(p) && !self.forced_down.contains(p)
    }

    fn apply_stp(&mut self, actions: Vec<StpAction>) {
        for a in actions {
            match a {
                StpAction::Send { from, bpdu } => {
                    let Some(link) = self.topo.link_at(&from) else { continue };
                    if !link.is_up() {
                        continue;
                    }
                    let to = link.other_end(&from).expect("endpoint of its own link").clone();
                    let src = self.stp.bridge(&from.switch).map_or(MacAddr([0; 6]), |b| b.id.mac);
                    let frame = Frame {
                        id: self.frame_id(),
                        src,
                        dst: STP_MULTICAST,
                        vlan: None,
                        kind: FrameKind::Bpdu(bpdu),
                        size_bytes: CONTROL_FRAME_BYTES,
                    };
                    self.bpdus_in_flight += 1;
                    self.sched.schedule_in(self.topo.link_delay, CampusEvent::Frame { port: to, frame });
                }
                StpAction::Transition { port, generation, after } => {
                    self.sched.schedule_in(after, CampusEvent::StpTransition { port, generation });
                }
                StpAction::StateChange { port, role, state } => self.record(CampusEvent::PortRole { port, role, state }),
                StpAction::TopologyChange { switch } => {
                    self.fabric.flush_all();
                    self.record(CampusEvent::TopologyChange { switch });
                }
            }
        }
    }

    fn handle(&mut self, ev: Event<CampusEvent>) {
        let now = ev.at;
        match ev.payload {
            CampusEvent::Frame { port, frame } => self.on_frame(port, frame, now),
            CampusEvent::Link { link, up } => {
                let Some(l) = self.topo.links.get(&link) else { return };
                let ends = [l.a.clone(), l.b.clone()];
                for e in ends {
                    self.port_changed(&e, up, now);
                }
            }
            CampusEvent::Edge { port, up } => {
                self.port_changed(&port, up, now);
                if up && self.port_live(&port) {
                    self.schedule_host_chatter(&port, now);
                }
            }
            CampusEvent::Router { router, up } => {
                for p in self.pairs.values_mut() {
                    p.set_up(&router, up);
                }
                if let Some(attach) = self.topo.routers.get(&router).map(|r| r.attach.clone()) {
                    self.port_changed(&attach, up, now);
                }
            }
            CampusEvent::StpHello => {
                let actions = self.stp.hello_tick(now);
                self.apply_stp(actions);
                self.sched.schedule_in(self.stp.timers.hello, CampusEvent::StpHello);
            }
            CampusEvent::StpTransition { port, generation } => {
                let actions = self.stp.transition(&port, generation, now);
                self.apply_stp(actions);
            }
            CampusEvent::Heartbeat => {
                let mut out = Vec::new();
                for p in self.pairs.values_mut() {
                    out.extend(p.heartbeat());
                }
                for e in out {
                    self.record(CampusEvent::Ha(e));
                }
                self.sched.schedule_in(HEARTBEAT, CampusEvent::Heartbeat);
            }
            CampusEvent::Sync { pair } => {
                let Some(p) = self.pairs.get_mut(&pair) else { return };
                let every = p.decl.sync_interval;
                match p.sync(now) {
                    Ok(b) => {
                        let ev = HaEvent::Synced { pair: pair.clone(), from: b.from, to: b.to, entries: b.entries.len() };
                        self.record(CampusEvent::Ha(ev));
                    }
                    Err(HaError::PeerDown(router)) => {
                        self.record(CampusEvent::Ha(HaEvent::PeerDown { pair: pair.clone(), router }))
                    }
                    Err(_) => {}
                }
                self.sched.schedule_in(every, CampusEvent::Sync { pair });
            }
            CampusEvent::GhostChunk { session, bytes, .. } => self.emit_ghost_chunk(session, bytes),
            CampusEvent::HostAnnounce { host } => {
                let _ = self.host_frame(&host, MacAddr::BROADCAST, FrameKind::Broadcast, CONTROL_FRAME_BYTES);
            }
            CampusEvent::HostHandshake { host } => {
                let _ = self.host_frame(&host, MacAddr::BROADCAST, FrameKind::Handshake, CONTROL_FRAME_BYTES);
            }
            CampusEvent::SpoofCheck { port, up_at } => self.spoof_check(&port, SimTime::from_nanos(up_at), now),
            CampusEvent::Dropped { .. }
            | CampusEvent::Routed { .. }
            | CampusEvent::PortRole { .. }
            | CampusEvent::Command { .. }
            | CampusEvent::Violation { .. }
            | CampusEvent::Spoof { .. }
            | CampusEvent::Ha(_)
            | CampusEvent::TopologyChange { .. } => {}
        }
    }

    fn port_changed(&mut self, p: &PortRef, up: bool, now: SimTime) {
        let actions = if up && self.port_live(p) {
            self.stp.port_up(p, now)
        } else if !up {
            self.fabric.flush_port(p);
            self.stp.port_down(p, now)
        } else {
            Vec::new()
        };
        self.apply_stp(actions);
    }

    /// Whoever is plugged in announces itself; managed machines also send
    /// their handshake, and analyst-managed jacks get a spoof check.
    fn schedule_host_chatter(&mut self, port: &PortRef, now: SimTime) {
        let hosts: Vec<(HostId, bool)> =
            self.topo.hosts_on_port(port).into_iter().map(|h| (h.id.clone(), h.handshake)).collect();
        for (host, handshake) in hosts {
            self.sched.schedule_in(ANNOUNCE_DELAY, CampusEvent::HostAnnounce { host: host.clone() });
            if handshake {
                self.sched.schedule_in(HANDSHAKE_DELAY, CampusEvent::HostHandshake { host });
            }
        }
        if self.expected_analyst_mac(port).is_some() {
            self.sched
                .schedule_in(HANDSHAKE_WINDOW, CampusEvent::SpoofCheck { port: port.clone(), up_at: now.ticks() });
        }
    }

    /// MAC of the analyst-managed host registered to the jack on `port`.
    fn expected_analyst_mac(&self, port: &PortRef) -> Option<MacAddr> {
        let jack = self.topo.port_jack(port)?;
        self.topo
            .hosts
            .values()
            .find(|h| !h.spoofer && h.managed == Managed::Analyst && h.jack.as_ref() == Some(jack))
            .map(|h| h.mac)
    }

    fn spoof_check(&mut self, port: &PortRef, up_at: SimTime, now: SimTime) {
        let log = self.sched.log().entries();
        self.spoof.feed_all(&log[self.spoof_fed..]);
        self.spoof_fed = log.len();
        let Some(sig) = self.spoof.take(port, up_at) else { return };
        let Some(expected) = self.expected_analyst_mac(port) else { return };
        let ghosting = self.ghosts.session_of(port).is_some()
            || self.fabric.port(port).and_then(|sp| sp.mode.access_vlan()).is_some_and(|v| self.fabric.is_ghost_vlan(v));
        if let Some(alert) = detect_spoof(&sig, expected, ghosting, now) {
            self.record(CampusEvent::Spoof {
                port: alert.port,
                mac: alert.mac,
                confidence: alert.confidence,
                reason: alert.reason,
            });
        }
    }

    fn on_frame(&mut self, port: PortRef, frame: Frame, now: SimTime) {
        if let FrameKind::Bpdu(b) = &frame.kind {
            self.bpdus_in_flight = self.bpdus_in_flight.saturating_sub(1);
            if self.port_live(&port) {
                let actions = self.stp.receive(&port, b, now);
                self.apply_stp(actions);
            }
            return;
        }
        if !self.port_powered_up(&port) {
            return;
        }
        let stp = &self.stp;
        let ing = self.fabric.ingress(&port, &frame, now, &|p| stp.is_forwarding(p));
        if let Some(v) = ing.violation {
            let shut = v.mode == ViolationMode::Shutdown
                && self.fabric.port(&port).is_some_and(|sp| sp.security.err_disabled);
            self.record(CampusEvent::Violation { port: v.port, mac: v.mac, mode: v.mode, alerted: v.alerted });
            if shut && self.forced_down.insert(port.clone()) {
                self.record(CampusEvent::Edge { port: port.clone(), up: false });
            }
        }
        if let Some(r @ (DropReason::VlanNotAllowed(_) | DropReason::Security | DropReason::ErrDisabled)) = &ing.dropped
        {
            self.record(CampusEvent::Dropped { port: port.clone(), frame_id: frame.id, reason: drop_reason(r) });
        }
        for (out, tag) in ing.egress {
            self.egress(out, tag, &frame);
        }
    }

    fn egress(&mut self, out: PortRef, tag: Option<VlanId>, frame: &Frame) {
        let mut f = frame.clone();
        f.vlan = tag;
        match self.topo.attachment(&out).cloned() {
            Some(Attachment::Link(id)) => {
                let Some(l) = self.topo.links.get(&id) else { return };
                if !l.is_up() {
                    return;
                }
                let to = l.other_end(&out).expect("endpoint of its own link").clone();
                self.sched.schedule_in(self.topo.link_delay, CampusEvent::Frame { port: to, frame: f });
            }
            Some(Attachment::Jack(_)) => {
                self.fabric.account_egress(&out, &f);
                let ghost = match f.kind {
                    FrameKind::Ghost { session } => {
                        self.ghosts.record_delivery(session, &out, f.size_bytes);
                        true
                    }
                    _ => false,
                };
                let hosts: Vec<HostId> = self
                    .topo
                    .hosts_on_port(&out)
                    .into_iter()
                    .filter(|h| f.is_flooded() || f.dst == h.mac)
                    .map(|h| h.id.clone())
                    .collect();
                for h in hosts {
                    let rx = self.host_rx.entry(h).or_default();
                    rx.frames += 1;
                    rx.bytes += f.size_bytes;
                    if ghost {
                        rx.ghost_bytes += f.size_bytes;
                    }
                }
                if let Some(t) = self.trace.as_mut() {
                    t.push_back((f.id, out));
                }
            }
            Some(Attachment::Router(_)) | None => {}
        }
    }

    /// Starts recording which edge ports each frame reaches.
    pub fn trace_deliveries(&mut self, on: bool) {
        self.trace = on.then(VecDeque::new);
    }

    pub fn take_deliveries(&mut self) -> Vec<(u64, PortRef)> {
        self.trace.as_mut().map(|t| t.drain(..).collect()).unwrap_or_default()
    }

    /// Queues a frame from `host` at its current port. Returns the frame id.
    pub fn host_frame(&mut self, host: &HostId, dst: MacAddr, kind: FrameKind, size: u64) -> Result<u64, WorldError> {
        let h = self.topo.hosts.get(host).ok_or_else(|| WorldError::UnknownHost(host.to_string()))?;
        let src = h.mac;
        let port = self.topo.host_port(host).cloned().ok_or_else(|| WorldError::NotAttached(host.clone()))?;
        let id = self.frame_id();
        let frame = Frame { id, src, dst, vlan: None, kind, size_bytes: size };
        self.sched.schedule_in(SimTime::ZERO, CampusEvent::Frame { port, frame });
        Ok(id)
    }

    /// Unicast from one host to another's MAC.
    pub fn send_frame(&mut self, from: &HostId, to: &HostId, size: u64) -> Result<u64, WorldError> {
        let dst = self.topo.hosts.get(to).ok_or_else(|| WorldError::UnknownHost(to.to_string()))?.mac;
        self.host_frame(from, dst, FrameKind::Unicast, size)
    }

    pub fn broadcast(&mut self, from: &HostId, size: u64) -> Result<u64, WorldError> {
        self.host_frame(from, MacAddr::BROADCAST, FrameKind::Broadcast, size)
    }

    /// `n` unicast frames between random pairs of plugged-in hosts sharing
    /// a VLAN, drawn from the seeded generator.
    pub fn random_traffic(&mut self, n: usize, size: u64) -> usize {
        let mut by_vlan: BTreeMap<VlanId, Vec<HostId>> = BTreeMap::new();
        for h in self.topo.hosts.values() {
            let Some(p) = self.topo.host_port(&h.id) else { continue };
            if let Some(v) = self.fabric.port(p).and_then(|sp| sp.mode.access_vlan()) {
                by_vlan.entry(v).or_default().push(h.id.clone());
            }
        }
        let groups: Vec<Vec<HostId>> = by_vlan.into_values().filter(|g| g.len() >= 2).collect();
        let mut sent = 0;
        for _ in 0..n {
            let Some(g) = groups.choose(&mut self.rng) else { break };
            let picks: Vec<&HostId> = g.choose_multiple(&mut self.rng, 2).collect();
            let (a, b) = (picks[0].clone(), picks[1].clone());
            if self.send_frame(&a, &b, size).is_ok() {
                sent += 1;
            }
        }
        sent
    }

    // ---- configuration commands ----

    pub fn set_port_vlan(&mut self, port: &PortRef, vlan: VlanId) -> Result<VlanId, WorldError> {
        Ok(self.fabric.set_port_vlan(port, vlan)?)
    }

    /// Clears port security. An err-disabled port comes back up.
    pub fn clear_sticky(&mut self, port: &PortRef) -> Result<bool, WorldError> {
        let was = self.fabric.clear_sticky(port)?;
        if self.forced_down.remove(port) && self.port_powered_up(port) {
            self.record(CampusEvent::Edge { port: port.clone(), up: true });
        }
        Ok(was)
    }

    pub fn set_description(&mut self, port: &PortRef, text: &str) -> Result<(), WorldError> {
        Ok(self.fabric.set_description(port, text)?)
    }

    pub fn inject_fault(&mut self, fault: &Fault) -> Result<Vec<LinkTransition>, WorldError> {
        let tr = self.topo.inject_fault(fault)?;
        self.schedule_transitions(&tr);
        Ok(tr)
    }

    pub fn plug_host(&mut self, host: &HostId, jack: Option<JackId>) -> Result<Vec<LinkTransition>, WorldError> {
        let tr = self.topo.plug_host(host, jack)?;
        self.schedule_transitions(&tr);
        Ok(tr)
    }

    pub fn activate_spare(&mut self, switch: &SwitchId, failed: u8) -> Result<Vec<LinkTransition>, WorldError> {
        let spare = self.topo.switches.get(switch).and_then(|s| s.spare);
        let tr = self.topo.activate_spare(switch, failed)?;
        if let Some(to) = spare {
            self.fabric.rehome_unit(switch, failed, to);
        }
        self.stp.resync_ports(&self.topo);
        self.schedule_transitions(&tr);
        Ok(tr)
    }

    fn schedule_transitions(&mut self, tr: &[LinkTransition]) {
        for t in tr {
            let ev = match t.clone() {
                LinkTransition::Link { link, up } => CampusEvent::Link { link, up },
                LinkTransition::Edge { port, up } => CampusEvent::Edge { port, up },
                LinkTransition::Router { router, up } => CampusEvent::Router { router, up },
            };
            self.record(ev);
        }
    }

    pub fn failback(&mut self, pair: &str) -> Result<Option<HaEvent>, WorldError> {
        let now = self.now();
        let p = self.pairs.get_mut(pair).ok_or_else(|| WorldError::UnknownPair(pair.into()))?;
        let ev = p.failback(now)?;
        if let Some(e) = &ev {
            self.record(CampusEvent::Ha(e.clone()));
        }
        Ok(ev)
    }

    // ---- firewall ----

    fn date(&self) -> String {
        let days = self.now().ticks() / SimTime::from_secs(86_400).ticks();
        self.cfg.epoch.checked_add_days(Days::new(days)).unwrap_or(self.cfg.epoch).format("%Y-%m-%d").to_string()
    }

    /// Compiles both sides first and swaps only when both succeed.
    fn recompile(&mut self) -> Result<u64, WorldError> {
        let mut built = Vec::new();
        for (name, p) in &self.pairs {
            let mut rs = compile(&self.policy.input_for(p.decl.kind))?;
            rs.validate()?;
            built.push((name.clone(), rs));
        }
        let mut version = 0;
        for (name, rs) in built {
            version = version.max(self.pairs.get_mut(&name).expect("listed").firewall.swap(rs)?);
        }
        Ok(version)
    }

    pub fn is_quarantined(&self, host: &str) -> bool {
        let fqdn = self.topo.host_by_name(host).map(|h| h.fqdn.as_str()).unwrap_or(host);
        self.policy.quarantine.iter().any(|e| e.hostname == fqdn)
    }

    /// Adds `host` to the quarantine list and reloads both firewalls.
    /// Returns the new ruleset version.
    pub fn quarantine(&mut self, host: &str, reason: &str, analyst: &str) -> Result<u64, WorldError> {
        let h = self.topo.host_by_name(host).ok_or_else(|| WorldError::UnknownHost(host.into()))?;
        if self.is_quarantined(host) {
            return Ok(self.ruleset_version());
        }
        let vuln = reason.split_whitespace().collect::<Vec<_>>().join("-");
        let entry = QuarantineEntry {
            analyst: if analyst.is_empty() { "-".into() } else { analyst.into() },
            date: self.date(),
            ip: h.ip.to_string(),
            score: 0,
            os_tag: "unknown".into(),
            vuln_tag: if vuln.is_empty() { "unspecified".into() } else { vuln },
            hostname: h.fqdn.clone(),
        };
        self.policy.quarantine.push(entry);
        match self.recompile() {
            Ok(v) => Ok(v),
            Err(e) => {
                self.policy.quarantine.pop();
                Err(e)
            }
        }
    }

    pub fn unquarantine(&mut self, host: &str) -> Result<u64, WorldError> {
        let fqdn = self.topo.host_by_name(host).map(|h| h.fqdn.clone()).unwrap_or_else(|| host.to_string());
        let before = self.policy.quarantine.clone();
        self.policy.quarantine.retain(|e| e.hostname != fqdn);
        if self.policy.quarantine.len() == before.len() {
            return Err(WorldError::NotQuarantined(host.into()));
        }
        self.recompile().inspect_err(|_| self.policy.quarantine = before)
    }

    /// Replaces the choke list and reloads.
    pub fn set_chokes(&mut self, chokes: Vec<ChokeEntry>) -> Result<u64, WorldError> {
        let before = std::mem::replace(&mut self.policy.chokes, chokes);
        self.recompile().inspect_err(|_| self.policy.chokes = before)
    }

    pub fn ruleset_version(&self) -> u64 {
        self.pairs.values().map(|p| p.firewall.version()).max().unwrap_or(0)
    }

    /// The blocked-hosts list as handed to the service desk.
    pub fn blocked_report(&self) -> String {
        let mut out = format!("{:<28} {:<15} {:<10} {:<12} {}\n", "host", "ip", "since", "analyst", "reason");
        for e in &self.policy.quarantine {
            out.push_str(&format!("{:<28} {:<15} {:<10} {:<12} {}\n", e.hostname, e.ip, e.date, e.analyst, e.vuln_tag));
        }
        out
    }

    // ---- routing ----

    /// The internal pair when `dst` sits on one of its interfaces, the
    /// external pair otherwise.
    pub fn pair_for(&self, dst: Ipv4Addr) -> Option<&str> {
        self.pairs
            .values()
            .find(|p| p.decl.kind == PairKind::Internal && p.vlan_for(dst).is_some())
            .or_else(|| self.pairs.values().find(|p| p.decl.kind == PairKind::External))
            .map(|p| p.name())
    }

    /// A packet from a campus host through whichever pair serves `dst`.
    pub fn send_packet(
        &mut self,
        src: &HostId,
        dst: Ipv4Addr,
        proto: Proto,
        sport: u16,
        dport: u16,
        bytes: u64,
    ) -> Result<Routed, WorldError> {
        let h = self.topo.hosts.get(src).ok_or_else(|| WorldError::UnknownHost(src.to_string()))?;
        let ip = h.ip;
        let port = self.topo.host_port(src).cloned().ok_or_else(|| WorldError::NotAttached(src.clone()))?;
        if !self.port_live(&port) {
            return Err(WorldError::NotAttached(src.clone()));
        }
        let vlan = self.fabric.port(&port).and_then(|sp| sp.mode.access_vlan()).unwrap_or(VlanId::DEFAULT);
        let pair = self.pair_for(dst).ok_or(WorldError::Ha(HaError::NoRoute(dst)))?.to_string();
        let packet = Packet { src: ip, dst, proto, sport, dport, state: ConnState::New, mark: 0 };
        self.route_on(&pair, packet, Side::Vlan(vlan), bytes, Some(port))
    }

    /// Traffic arriving from outside at the external pair.
    pub fn send_inbound(&mut self, packet: Packet, bytes: u64) -> Result<Routed, WorldError> {
        let pair = self
            .pairs
            .values()
            .find(|p| p.decl.kind == PairKind::External)
            .map(|p| p.name().to_string())
            .ok_or(WorldError::Ha(HaError::NoRoute(packet.dst)))?;
        self.route_on(&pair, packet, Side::Upstream, bytes, None)
    }

    pub fn route_on(
        &mut self,
        pair: &str,
        packet: Packet,
        from: Side,
        bytes: u64,
        origin: Option<PortRef>,
    ) -> Result<Routed, WorldError> {
        let now = self.now();
        let p = self.pairs.get_mut(pair).ok_or_else(|| WorldError::UnknownPair(pair.into()))?;
        let attach_of = |r: &RouterId, topo: &NetTopology| topo.routers.get(r).map(|x| x.attach.clone());
        let fallback_port = attach_of(&p.decl.primary, &self.topo);
        let r = match p.route(packet, from, now) {
            Ok(r) => r,
            Err(e) => {
                if let Some(port) = origin.or(fallback_port) {
                    self.record(CampusEvent::Dropped { port, frame_id: 0, reason: e.to_string() });
                }
                return Err(e.into());
            }
        };
        let inbound = from == Side::Upstream;
        let mut logged = r.packet;
        if !inbound {
            logged.src = packet.src;
            logged.sport = packet.sport;
        }
        self.record(CampusEvent::Routed {
            pair: pair.to_string(),
            router: r.router.clone(),
            packet: logged,
            bytes,
            verdict: r.verdict(),
            egress: r.egress,
            inbound,
        });
        if let (Verdict::Accept, Side::Vlan(v)) = (r.verdict(), r.egress) {
            self.deliver_routed(&r.router, v, r.packet.dst, bytes);
        }
        Ok(r)
    }

    /// Puts an accepted packet on the wire from the router's port.
    fn deliver_routed(&mut self, router: &RouterId, vlan: VlanId, dst: Ipv4Addr, bytes: u64) {
        let Some(attach) = self.topo.routers.get(router).map(|r| r.attach.clone()) else { return };
        let Some(dst_mac) = self.topo.host_by_ip(dst).map(|h| h.mac) else { return };
        let src = self.router_macs.get(router).copied().unwrap_or(MacAddr([0x02, 0, 0, 0, 0, 0]));
        let id = self.frame_id();
        let frame = Frame { id, src, dst: dst_mac, vlan: Some(vlan), kind: FrameKind::Unicast, size_bytes: bytes };
        self.sched.schedule_in(SimTime::ZERO, CampusEvent::Frame { port: attach, frame });
    }

    // ---- ghosting ----

    pub fn start_ghost(
        &mut self,
        analyst: &str,
        vlan: VlanId,
        server: &HostId,
        members: &[PortRef],
    ) -> Result<u32, WorldError> {
        Ok(self.ghosts.start_session(&mut self.fabric, &self.topo, analyst, vlan, server, members)?)
    }

    /// Schedules the image as paced broadcast chunks from the server.
    pub fn run_distribution(&mut self, id: u32, image_bytes: u64) -> Result<usize, WorldError> {
        let plan = self.ghosts.begin_distribution(id, image_bytes)?;
        let every = SimTime::from_nanos(self.ghosts.cfg.chunk_interval_ns);
        for (i, bytes) in plan.iter().enumerate() {
            self.sched.schedule_in(every.mul(i as u64), CampusEvent::GhostChunk { session: id, index: i as u32, bytes: *bytes });
        }
        Ok(plan.len())
    }

    pub fn teardown_ghost(&mut self, id: u32) -> Result<Vec<(PortRef, VlanId)>, WorldError> {
        Ok(self.ghosts.teardown(&mut self.fabric, id)?)
    }

    fn emit_ghost_chunk(&mut self, session: u32, bytes: u64) {
        let Some(s) = self.ghosts.get(session) else { return };
        let Some(server) = self.topo.hosts.get(&s.server) else { return };
        let frame = Frame {
            id: 0,
            src: server.mac,
            dst: MacAddr::BROADCAST,
            vlan: Some(s.ghost_vlan),
            kind: FrameKind::Ghost { session },
            size_bytes: bytes,
        };
        let port = s.server_port.clone();
        let frame = Frame { id: self.frame_id(), ..frame };
        self.sched.schedule_in(SimTime::ZERO, CampusEvent::Frame { port, frame });
    }

    /// Access VLAN of every port, for before/after comparisons.
    pub fn vlan_snapshot(&self) -> BTreeMap<PortRef, Option<VlanId>> {
        self.fabric.ports().map(|p| (p.port.clone(), p.mode.access_vlan())).collect()
    }

    /// Problems with ghost delivery: members short of the image, or ghost
    /// bytes leaving ports outside every session.
    pub fn ghost_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut members = BTreeSet::new();
        for s in self.ghosts.sessions() {
            members.insert(s.server_port.clone());
            for (p, _) in &s.members {
                members.insert(p.clone());
                let got = s.delivered.get(p).copied().unwrap_or(0);
                if s.bytes_total > 0 && got != s.bytes_total {
                    out.push(format!("session {} member {p} got {got} of {} bytes", s.id, s.bytes_total));
                }
            }
        }
        for sp in self.fabric.ports() {
            if sp.ghost_bytes > 0 && !members.contains(&sp.port) {
                out.push(format!("{} is outside every session but sent {} ghost bytes", sp.port, sp.ghost_bytes));
            }
        }
        out
    }

    // ---- spanning tree ----

    /// Runs until the tree is steady: nothing in flight, no port walking
    /// towards forwarding, every stored BPDU fresh, and the port view
    /// unchanged across two checks half a hello apart from the ticks.
    pub fn converge(&mut self) -> Result<StpView, WorldError> {
        let t = self.stp.timers.clone();
        let n = self.topo.switches.len() as u64;
        let deadline = self.now() + t.max_age + t.forward_delay().mul(2) + t.hello.mul(n + 4);
        // Hello ticks fire on multiples of the hello time; check midway
        // between them so nothing just sent is still on the wire.
        let (h, now) = (t.hello.ticks().max(1), self.now().ticks());
        let mut check = SimTime::from_nanos(now - now % h + h / 2);
        if check <= self.now() {
            check = check + t.hello;
        }
        let mut prev: Option<StpView> = None;
        loop {
            self.run_until(check);
            let view = self.stp.view();
            let steady = self.bpdus_in_flight == 0
                && !self.stp.transitional()
                && self.stp.infos_fresh(self.now(), t.hello.mul(2))
                && prev.as_ref() == Some(&view);
            if steady {
                return Ok(view);
            }
            if check >= deadline {
                return Err(StpError::NoConvergence(deadline).into());
            }
            prev = Some(view);
            check = check + t.hello;
        }
    }

    /// Links that are up with both ends forwarding.
    pub fn forwarding_links(&self) -> Vec<LinkId> {
        self.topo
            .links
            .values()
            .filter(|l| l.is_up() && self.stp.is_forwarding(&l.a) && self.stp.is_forwarding(&l.b))
            .map(|l| l.id)
            .collect()
    }

    /// Links that are up but held out of the tree.
    pub fn blocked_links(&self) -> Vec<LinkId> {
        self.topo
            .links
            .values()
            .filter(|l| l.is_up() && !(self.stp.is_forwarding(&l.a) && self.stp.is_forwarding(&l.b)))
            .map(|l| l.id)
            .collect()
    }

    /// Switches reachable from `from` over forwarding links.
    pub fn reachable_from(&self, from: &SwitchId) -> BTreeSet<SwitchId> {
        let mut adj: BTreeMap<&SwitchId, Vec<&SwitchId>> = BTreeMap::new();
        for id in self.forwarding_links() {
            let l = &self.topo.links[&id];
            adj.entry(&l.a.switch).or_default().push(&l.b.switch);
            adj.entry(&l.b.switch).or_default().push(&l.a.switch);
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(s) = stack.pop() {
            if seen.insert(s.clone()) {
                stack.extend(adj.get(s).into_iter().flatten().copied());
            }
        }
        seen
    }

    pub fn switch_alive(&self, s: &SwitchId) -> bool {
        self.topo.switches.get(s).is_some_and(|sw| sw.is_alive())
    }

    // ---- exports ----

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            at: self.now(),
            log_len: self.sched.log().len(),
            topology: self.topo.clone(),
            ports: self.fabric.ports().cloned().collect(),
            forced_down: self.forced_down.iter().cloned().collect(),
            stp: self.stp.view(),
            pairs: self.pair_summaries(),
            ghost_sessions: self.ghosts.sessions().cloned().collect(),
            quarantine: self.policy.quarantine.clone(),
        }
    }

    pub fn pair_summaries(&self) -> Vec<PairSummary> {
        self.pairs
            .values()
            .map(|p| PairSummary {
                name: p.name().to_string(),
                kind: p.decl.kind,
                active: p.active().cloned(),
                primary_up: p.is_up(&p.decl.primary),
                secondary_up: p.is_up(&p.decl.secondary),
                ruleset_version: p.firewall.version(),
                conntrack: p.active().and_then(|r| p.table(r)).map_or(0, |t| t.len()),
            })
            .collect()
    }

    pub fn export_topology(&self) -> TopologyExport {
        let view = self.stp.view();
        let nodes = self
            .topo
            .switches
            .values()
            .map(|s| NodeExport {
                id: s.id.clone(),
                kind: match s.kind {
                    SwitchKind::Access => "access".into(),
                    SwitchKind::CoreStack => "core-stack".into(),
                },
                building: s.building.clone(),
                root: self.stp.bridge(&s.id).is_some_and(|b| b.is_root()) && s.is_alive(),
                alive: s.is_alive(),
            })
            .collect();
        let edges = self
            .topo
            .links
            .values()
            .map(|l| {
                let (fa, fb) = (self.stp.is_forwarding(&l.a), self.stp.is_forwarding(&l.b));
                let state = if !l.is_up() {
                    "down"
                } else if fa && fb {
                    "forwarding"
                } else {
                    "blocking"
                };
                let blocked_end = match (l.is_up(), fa, fb) {
                    (true, true, false) => Some(l.b.clone()),
                    (true, false, true) => Some(l.a.clone()),
                    _ => None,
                };
                EdgeExport { id: l.id, a: l.a.clone(), b: l.b.clone(), state: state.into(), blocked_end }
            })
            .collect();
        TopologyExport { at: self.now(), nodes, edges, stp: view }
    }

    pub fn port_table(&self, switch: Option<&SwitchId>) -> Vec<PortExport> {
        self.fabric
            .ports()
            .filter(|sp| switch.is_none_or(|s| &sp.port.switch == s))
            .map(|sp| PortExport {
                port: sp.port.clone(),
                mode: mode_name(&sp.mode).into(),
                vlan: sp.mode.access_vlan(),
                description: sp.description.clone(),
                security: if sp.security.enabled {
                    format!("{} max {}", sp.security.mode, sp.security.max_macs)
                } else {
                    "off".into()
                },
                sticky: sp.security.sticky.clone(),
                violations: sp.security.violation_count,
                err_disabled: sp.security.err_disabled,
                link_up: self.port_live(&sp.port),
                stp_state: self.stp.port(&sp.port).map(|p| p.state),
                attached: self.topo.attachment(&sp.port).map(|a| match a {
                    Attachment::Link(l) => format!("link {l}"),
                    Attachment::Jack(j) => format!("jack {j}"),
                    Attachment::Router(r) => format!("router {r}"),
                }),
            })
            .collect()
    }

    /// Live state in the shape the inventory reconciles against.
    pub fn net_state(&self) -> NetState {
        let switches = self
            .topo
            .switches
            .values()
            .map(|s| SwitchRow {
                id: s.id.to_string(),
                kind: match s.kind {
                    SwitchKind::Access => "access".into(),
                    SwitchKind::CoreStack => "core-stack".into(),
                },
                building: s.building.clone(),
            })
            .collect();
        let elements = self
            .topo
            .switches
            .values()
            .flat_map(|s| {
                s.elements.iter().map(move |e| ElementRow {
                    switch: s.id.to_string(),
                    idx: e.index,
                    ups: e.ups.to_string(),
                    failed: e.failed,
                })
            })
            .collect();
        let ports = self
            .fabric
            .ports()
            .map(|sp| {
                let mut row = port_row(
                    &sp.port,
                    mode_name(&sp.mode),
                    sp.mode.access_vlan(),
                    &sp.description,
                    self.port_live(&sp.port),
                    sp.security.err_disabled,
                );
                row.auto_flag = sp.is_auto();
                row
            })
            .collect();
        let patches = self.topo.patches.iter().map(|(j, p)| PatchRow { jack: j.clone(), port: p.clone() }).collect();
        let vlans = self
            .fabric
            .vlans
            .values()
            .map(|d| VlanRow { id: d.id.get(), name: d.name.clone(), purpose: d.purpose.to_string(), owner: d.owner.clone() })
            .collect();
        let ghost_vlans = self
            .ghosts
            .active()
            .map(|s| GhostVlanRow { vlan: s.ghost_vlan.get(), analyst: s.analyst.clone(), session: s.id })
            .collect();
        let quarantine = self
            .policy
            .quarantine
            .iter()
            .map(|e| QuarantineRow {
                host: e.hostname.clone(),
                since: e.date.clone(),
                reason: e.vuln_tag.clone(),
                analyst: e.analyst.clone(),
            })
            .collect();
        NetState { switches, elements, ports, patches, vlans, ghost_vlans, quarantine }
    }
}
