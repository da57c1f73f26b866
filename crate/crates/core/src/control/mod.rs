//! Operator surface: role-scoped, audited commands over a running world,
//! plus the shell, scenario runner and HTTP API built on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::addr::VlanId;
use crate::campus::{CampusEvent, World, WorldError};
use crate::ghosting::{GhostError, Manifest};
use crate::inventory::{AuditRow, InvError, InventoryDb, Row, VIEWS};
use crate::l2switch::L2Error;
use crate::simcore::SimTime;
use crate::topology::{Attachment, Fault, HostId, JackId, PortRef, RouterId, SwitchId, UpsId};

pub mod api;
pub mod scenario;
pub mod shell;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    NetAdmin,
    ServiceDesk,
    Desktop,
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "netadmin" => Ok(Role::NetAdmin),
            "servicedesk" => Ok(Role::ServiceDesk),
            "desktop" => Ok(Role::Desktop),
            _ => Err(format!("unknown role `{s}`")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::NetAdmin => "netadmin",
            Role::ServiceDesk => "servicedesk",
            Role::Desktop => "desktop",
        })
    }
}

pub const MUTATING_OPS: [&str; 9] = [
    "move_port_vlan",
    "clear_sticky",
    "set_description",
    "quarantine",
    "unquarantine",
    "start_ghost",
    "run_ghost",
    "teardown_ghost",
    "inject_fault",
];

pub const READ_OPS: [&str; 6] = ["get_topology", "get_ports", "get_events", "query", "locate", "report_blocked"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleDef {
    pub ops: BTreeSet<String>,
    pub views: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub roles: BTreeMap<Role, RoleDef>,
}

impl Default for RoleMap {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let all_ops: Vec<&str> = MUTATING_OPS.iter().chain(READ_OPS.iter()).copied().collect();
        let desk_ops = ["clear_sticky", "locate", "query", "get_topology", "get_ports", "get_events", "report_blocked"];
        let desk_views = ["ports", "patches", "jacks", "rooms", "hosts", "sightings", "vlans", "quarantine_view"];
        let mut desktop = RoleDef { ops: set(&desk_ops), views: set(&desk_views) };
        desktop.ops.extend(set(&["start_ghost", "run_ghost", "teardown_ghost"]));
        desktop.views.insert("ghost_vlans".into());
        let mut roles = BTreeMap::new();
        roles.insert(Role::NetAdmin, RoleDef { ops: set(&all_ops), views: set(&VIEWS) });
        roles.insert(Role::ServiceDesk, RoleDef { ops: set(&desk_ops), views: set(&desk_views) });
        roles.insert(Role::Desktop, desktop);
        RoleMap { roles }
    }
}

impl RoleMap {
    pub fn allows_op(&self, role: Role, op: &str) -> bool {
        self.roles.get(&role).is_some_and(|r| r.ops.contains(op))
    }

    pub fn allows_view(&self, role: Role, view: &str) -> bool {
        self.roles.get(&role).is_some_and(|r| r.views.contains(view))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub name: String,
    pub role: Role,
}

impl Actor {
    pub fn new(name: &str, role: Role) -> Actor {
        Actor { name: name.into(), role }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("role {role} may not {op}")]
    Forbidden { role: Role, op: String },
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("unknown target: {0}")]
    TargetUnknown(String),
}

impl From<WorldError> for ControlError {
    fn from(e: WorldError) -> Self {
        match &e {
            WorldError::UnknownHost(_)
            | WorldError::UnknownPort(_)
            | WorldError::UnknownPair(_)
            | WorldError::NotAttached(_)
            | WorldError::NotQuarantined(_)
            | WorldError::L2(L2Error::UnknownPort(_))
            | WorldError::Ghost(GhostError::UnknownSession(_) | GhostError::Unresolved(_)) => {
                ControlError::TargetUnknown(e.to_string())
            }
            _ => ControlError::ValidationFailed(e.to_string()),
        }
    }
}

impl From<InvError> for ControlError {
    fn from(e: InvError) -> Self {
        match e {
            InvError::UnknownHost(_) | InvError::UnknownView(_) | InvError::UnknownPort(_) => {
                ControlError::TargetUnknown(e.to_string())
            }
            _ => ControlError::ValidationFailed(e.to_string()),
        }
    }
}

/// A fault or plant change as typed by an operator, e.g.
/// `link-down A11 BigSwitch1`, `ups-fail upsA`, `plug rogue E102-1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FaultSpec {
    LinkDown(LinkSel),
    LinkUp(LinkSel),
    ElementFail(SwitchId, u8),
    ElementRecover(SwitchId, u8),
    UpsFail(UpsId),
    UpsRestore(UpsId),
    RouterFail(RouterId),
    RouterRecover(RouterId),
    Unplug(HostId),
    Plug(HostId, JackId),
    ActivateSpare(SwitchId, u8),
}

/// A link named by one of its ports or by the two switches it joins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinkSel {
    Port(PortRef),
    Between(SwitchId, SwitchId),
}

impl fmt::Display for LinkSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkSel::Port(p) => write!(f, "{p}"),
            LinkSel::Between(a, b) => write!(f, "{a} {b}"),
        }
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultSpec::LinkDown(l) => write!(f, "link-down {l}"),
            FaultSpec::LinkUp(l) => write!(f, "link-up {l}"),
            FaultSpec::ElementFail(s, e) => write!(f, "element-fail {s} {e}"),
            FaultSpec::ElementRecover(s, e) => write!(f, "element-recover {s} {e}"),
            FaultSpec::UpsFail(u) => write!(f, "ups-fail {u}"),
            FaultSpec::UpsRestore(u) => write!(f, "ups-restore {u}"),
            FaultSpec::RouterFail(r) => write!(f, "router-fail {r}"),
            FaultSpec::RouterRecover(r) => write!(f, "router-recover {r}"),
            FaultSpec::Unplug(h) => write!(f, "unplug {h}"),
            FaultSpec::Plug(h, j) => write!(f, "plug {h} {j}"),
            FaultSpec::ActivateSpare(s, e) => write!(f, "activate-spare {s} {e}"),
        }
    }
}

impl FromStr for FaultSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let w: Vec<&str> = s.split_whitespace().collect();
        let num = |x: &str| x.parse::<u8>().map_err(|_| format!("bad element number `{x}`"));
        let link = |rest: &[&str]| match rest {
            [p] => p.parse().map(LinkSel::Port),
            [a, b] => Ok(LinkSel::Between(SwitchId::new(a), SwitchId::new(b))),
            _ => Err("a link is a port or two switch names".to_string()),
        };
        Ok(match w.as_slice() {
            ["link-down", rest @ ..] => FaultSpec::LinkDown(link(rest)?),
            ["link-up", rest @ ..] => FaultSpec::LinkUp(link(rest)?),
            ["element-fail", s, e] => FaultSpec::ElementFail(SwitchId::new(s), num(e)?),
            ["element-recover", s, e] => FaultSpec::ElementRecover(SwitchId::new(s), num(e)?),
            ["ups-fail", u] => FaultSpec::UpsFail(UpsId::new(u)),
            ["ups-restore", u] => FaultSpec::UpsRestore(UpsId::new(u)),
            ["router-fail", r] => FaultSpec::RouterFail(RouterId::new(r)),
            ["router-recover", r] => FaultSpec::RouterRecover(RouterId::new(r)),
            ["unplug", h] => FaultSpec::Unplug(HostId::new(h)),
            ["plug", h, j] => FaultSpec::Plug(HostId::new(h), JackId::new(j)),
            ["activate-spare", s, e] => FaultSpec::ActivateSpare(SwitchId::new(s), num(e)?),
            _ => return Err(format!("unrecognised fault `{s}`")),
        })
    }
}

impl TryFrom<String> for FaultSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<FaultSpec> for String {
    fn from(f: FaultSpec) -> String {
        f.to_string()
    }
}

/// State-changing operations. Reads go through the query methods on
/// [`Plane`] instead.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    MovePortVlan { port: PortRef, vlan: u16 },
    ClearSticky { port: PortRef },
    SetDescription { port: PortRef, text: String },
    Quarantine { host: String, reason: String },
    Unquarantine { host: String },
    /// Manifest in its text form.
    StartGhost { manifest: String },
    RunGhost { id: u32, image_bytes: u64 },
    TeardownGhost { id: u32 },
    InjectFault { fault: FaultSpec },
}

impl Command {
    pub fn op(&self) -> &'static str {
        match self {
            Command::MovePortVlan { .. } => "move_port_vlan",
            Command::ClearSticky { .. } => "clear_sticky",
            Command::SetDescription { .. } => "set_description",
            Command::Quarantine { .. } => "quarantine",
            Command::Unquarantine { .. } => "unquarantine",
            Command::StartGhost { .. } => "start_ghost",
            Command::RunGhost { .. } => "run_ghost",
            Command::TeardownGhost { .. } => "teardown_ghost",
            Command::InjectFault { .. } => "inject_fault",
        }
    }

    pub fn arguments(&self) -> String {
        match self {
            Command::MovePortVlan { port, vlan } => format!("{port} vlan {vlan}"),
            Command::ClearSticky { port } => port.to_string(),
            Command::SetDescription { port, text } => format!("{port} {text:?}"),
            Command::Quarantine { host, reason } => format!("{host} {reason}"),
            Command::Unquarantine { host } => host.clone(),
            Command::StartGhost { manifest } => manifest.lines().map(str::trim).collect::<Vec<_>>().join("; "),
            Command::RunGhost { id, image_bytes } => format!("{id} {image_bytes}"),
            Command::TeardownGhost { id } => id.to_string(),
            Command::InjectFault { fault } => fault.to_string(),
        }
    }
}

/// The world, its inventory, and the bookkeeping that ties commands to
/// both.
#[derive(Clone)]
pub struct Plane {
    pub world: World,
    pub inventory: InventoryDb,
    pub roles: RoleMap,
    replies: BTreeMap<String, (Command, Value)>,
    cursor: usize,
}

impl Plane {
    pub fn new(world: World) -> Plane {
        let inventory = InventoryDb::from_topology(&world.topo);
        let mut p = Plane { world, inventory, roles: RoleMap::default(), replies: BTreeMap::new(), cursor: 0 };
        p.observe();
        p
    }

    pub fn now(&self) -> SimTime {
        self.world.now()
    }

    /// Runs the world forward and folds what happened into the inventory.
    pub fn advance(&mut self, d: SimTime) {
        self.world.run_for(d);
        self.observe();
    }

    pub fn advance_to(&mut self, t: SimTime) {
        self.world.run_until(t.max(self.now()));
        self.observe();
    }

    pub fn converge(&mut self) -> Result<(), ControlError> {
        let r = self.world.converge().map(|_| ()).map_err(ControlError::from);
        self.observe();
        r
    }

    /// Records sightings for frames entering jack ports since the last
    /// call, refreshes `[Auto]` descriptions, then reconciles.
    pub fn observe(&mut self) {
        let events = self.world.events_since(self.cursor);
        let mut seen = Vec::new();
        for e in events {
            if let CampusEvent::Frame { port, frame } = &e.payload {
                if matches!(self.world.topo.attachment(port), Some(Attachment::Jack(_))) {
                    seen.push((frame.src, port.clone(), e.at));
                }
            }
        }
        self.cursor += events.len();
        if self.inventory.ports.is_empty() {
            self.inventory.sync_from_network(&self.world.net_state());
        }
        for (mac, port, at) in seen {
            if !self.world.port_live(&port) {
                continue;
            }
            if let Ok(Some(desc)) = self.inventory.record_sighting(mac, &port, at) {
                let current = self.world.fabric.port(&port).map(|p| p.description.as_str());
                if current != Some(desc.as_str()) {
                    let _ = self.world.set_description(&port, &desc);
                }
            }
        }
        self.inventory.sync_from_network(&self.world.net_state());
    }

    fn audit(&mut self, actor: &Actor, cmd: &Command, outcome: &str) {
        let row = AuditRow {
            seq: 0,
            actor: actor.name.clone(),
            role: actor.role.to_string(),
            at: self.now().ticks(),
            command: cmd.op().to_string(),
            arguments: cmd.arguments(),
            outcome: outcome.to_string(),
        };
        self.inventory.append_audit(row);
        self.world.record_command(&actor.name, cmd.op(), &cmd.arguments(), outcome);
    }

    /// Checks the role, applies the command, and writes exactly one audit
    /// row whatever happens. A repeated idempotency key returns the first
    /// reply without applying again.
    pub fn execute(&mut self, actor: &Actor, cmd: Command, key: Option<&str>) -> Result<Value, ControlError> {
        if !self.roles.allows_op(actor.role, cmd.op()) {
            self.audit(actor, &cmd, "forbidden");
            self.settle();
            return Err(ControlError::Forbidden { role: actor.role, op: cmd.op().into() });
        }
        if let Some(k) = key {
            if let Some((prev, reply)) = self.replies.get(k).cloned() {
                let res = if prev == cmd {
                    self.audit(actor, &cmd, "replayed");
                    Ok(reply)
                } else {
                    self.audit(actor, &cmd, "error: idempotency key reused");
                    Err(ControlError::ValidationFailed(format!("idempotency key `{k}` was used for another command")))
                };
                self.settle();
                return res;
            }
        }
        let res = self.apply(&cmd);
        let outcome = match &res {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("error: {e}"),
        };
        self.audit(actor, &cmd, &outcome);
        if let (Some(k), Ok(v)) = (key, &res) {
            self.replies.insert(k.to_string(), (cmd, v.clone()));
        }
        self.settle();
        res
    }

    fn settle(&mut self) {
        self.world.settle();
        self.observe();
    }

    fn port_known(&self, p: &PortRef) -> Result<(), ControlError> {
        if self.world.fabric.port(p).is_none() {
            return Err(ControlError::TargetUnknown(format!("port {p}")));
        }
        Ok(())
    }

    fn apply(&mut self, cmd: &Command) -> Result<Value, ControlError> {
        let w = &mut self.world;
        match cmd {
            Command::MovePortVlan { port, vlan } => {
                self.port_known(port)?;
                let v = VlanId::new(*vlan).map_err(|e| ControlError::ValidationFailed(e.to_string()))?;
                let old = self.world.set_port_vlan(port, v)?;
                Ok(json!({ "port": port, "old_vlan": old.get(), "vlan": v.get() }))
            }
            Command::ClearSticky { port } => {
                self.port_known(port)?;
                let was = self.world.clear_sticky(port)?;
                Ok(json!({ "port": port, "was_err_disabled": was }))
            }
            Command::SetDescription { port, text } => {
                self.port_known(port)?;
                self.world.set_description(port, text)?;
                Ok(json!({ "port": port, "description": text }))
            }
            Command::Quarantine { host, reason } => {
                if reason.trim().is_empty() {
                    return Err(ControlError::ValidationFailed("quarantine needs a reason".into()));
                }
                let version = w.quarantine(host, reason, "operator")?;
                Ok(json!({ "host": host, "ruleset_version": version }))
            }
            Command::Unquarantine { host } => {
                let version = w.unquarantine(host)?;
                Ok(json!({ "host": host, "ruleset_version": version }))
            }
            Command::StartGhost { manifest } => {
                let m = Manifest::parse(manifest).map_err(WorldError::from)?;
                let (ports, notes) = m.resolve(&w.topo).map_err(WorldError::from)?;
                let id = w.start_ghost(&m.analyst, m.ghost_vlan, &m.server, &ports)?;
                Ok(json!({ "session": id, "members": ports, "notes": notes }))
            }
            Command::RunGhost { id, image_bytes } => {
                let chunks = w.run_distribution(*id, *image_bytes)?;
                Ok(json!({ "session": id, "chunks": chunks }))
            }
            Command::TeardownGhost { id } => {
                let restored = w.teardown_ghost(*id)?;
                Ok(json!({ "session": id, "restored": restored.len() }))
            }
            Command::InjectFault { fault } => {
                let tr = self.apply_fault(fault)?;
                Ok(json!({ "fault": fault.to_string(), "transitions": tr }))
            }
        }
    }

    fn apply_fault(&mut self, f: &FaultSpec) -> Result<usize, ControlError> {
        let w = &mut self.world;
        let link = |w: &World, sel: &LinkSel| match sel {
            LinkSel::Port(p) => {
                w.topo.link_at(p).map(|l| l.id).ok_or_else(|| ControlError::TargetUnknown(format!("no link at {p}")))
            }
            LinkSel::Between(a, b) => match w.topo.find_link(a, b).as_slice() {
                [l] => Ok(l.id),
                [] => Err(ControlError::TargetUnknown(format!("no link between {a} and {b}"))),
                _ => Err(ControlError::ValidationFailed(format!("{a} and {b} share several links; name a port"))),
            },
        };
        let tr = match f {
            FaultSpec::LinkDown(s) => w.inject_fault(&Fault::LinkDown(link(w, s)?))?,
            FaultSpec::LinkUp(s) => w.inject_fault(&Fault::LinkUp(link(w, s)?))?,
            FaultSpec::ElementFail(s, e) => w.inject_fault(&Fault::StackElementFail(s.clone(), *e))?,
            FaultSpec::ElementRecover(s, e) => w.inject_fault(&Fault::StackElementRecover(s.clone(), *e))?,
            FaultSpec::UpsFail(u) => w.inject_fault(&Fault::UpsFail(u.clone()))?,
            FaultSpec::UpsRestore(u) => w.inject_fault(&Fault::UpsRestore(u.clone()))?,
            FaultSpec::RouterFail(r) => w.inject_fault(&Fault::RouterFail(r.clone()))?,
            FaultSpec::RouterRecover(r) => w.inject_fault(&Fault::RouterRecover(r.clone()))?,
            FaultSpec::Unplug(h) => w.plug_host(h, None)?,
            FaultSpec::Plug(h, j) => w.plug_host(h, Some(j.clone()))?,
            FaultSpec::ActivateSpare(s, e) => w.activate_spare(s, *e)?,
        };
        Ok(tr.len())
    }

    /// Port rows where the inventory disagrees with the live fabric.
    pub fn inventory_diffs(&self) -> Vec<String> {
        let live = self.world.net_state().ports;
        let mut out: Vec<String> = live
            .iter()
            .filter(|p| self.inventory.ports.get(&p.port) != Some(*p))
            .map(|p| format!("{}: inventory {:?} live {:?}", p.port, self.inventory.ports.get(&p.port), p))
            .collect();
        if self.inventory.ports.len() != live.len() {
            out.push(format!("{} inventory ports, {} live", self.inventory.ports.len(), live.len()));
        }
        out
    }

    // ---- reads ----

    fn check_read(&self, actor: &Actor, op: &str) -> Result<(), ControlError> {
        if self.roles.allows_op(actor.role, op) {
            Ok(())
        } else {
            Err(ControlError::Forbidden { role: actor.role, op: op.into() })
        }
    }

    pub fn query(&self, actor: &Actor, view: &str, filter: &str) -> Result<Vec<Row>, ControlError> {
        self.check_read(actor, "query")?;
        if !VIEWS.contains(&view) {
            return Err(ControlError::TargetUnknown(format!("view {view}")));
        }
        if !self.roles.allows_view(actor.role, view) {
            return Err(ControlError::Forbidden { role: actor.role, op: format!("view {view}") });
        }
        Ok(self.inventory.query_view(view, filter)?)
    }

    pub fn locate(&self, actor: &Actor, host: &str) -> Result<String, ControlError> {
        self.check_read(actor, "locate")?;
        Ok(self.inventory.locate(host)?.line())
    }

    pub fn topology(&self, actor: &Actor) -> Result<Value, ControlError> {
        self.check_read(actor, "get_topology")?;
        Ok(serde_json::to_value(self.world.export_topology()).expect("export serializes"))
    }

    pub fn ports(&self, actor: &Actor, switch: Option<&str>) -> Result<Value, ControlError> {
        self.check_read(actor, "get_ports")?;
        let sw = switch.map(SwitchId::new);
        if let Some(s) = &sw {
            if !self.world.topo.switches.contains_key(s) {
                return Err(ControlError::TargetUnknown(format!("switch {s}")));
            }
        }
        Ok(serde_json::to_value(self.world.port_table(sw.as_ref())).expect("ports serialize"))
    }

    pub fn blocked_report(&self, actor: &Actor) -> Result<String, ControlError> {
        self.check_read(actor, "report_blocked")?;
        Ok(self.world.blocked_report())
    }

    /// Log entries from `since` on, one JSON object per line.
    pub fn events_ndjson(&self, actor: &Actor, since: usize) -> Result<(String, usize), ControlError> {
        self.check_read(actor, "get_events")?;
        let since = since.min(self.world.log().len());
        let events = self.world.events_since(since);
        let mut out = String::new();
        for (i, e) in events.iter().enumerate() {
            let line = json!({ "cursor": since + i, "at": e.at.ticks(), "seq": e.seq, "kind": e.payload.name(), "event": e.payload });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        Ok((out, since + events.len()))
    }
}
