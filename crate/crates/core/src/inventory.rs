//! Relational inventory: the switch plant, wiring, hosts and who owns
//! them, kept in step with the running network.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{MacAddr, VlanId};
use crate::l2switch::AUTO_TOKEN;
use crate::simcore::SimTime;
use crate::topology::{HostId, JackId, Managed, NetTopology, PortRef, RoomId};

pub const SCHEMA_SQL: &str = include_str!("../sql/schema.sql");
pub const SIGHTING_RETENTION: SimTime = SimTime::from_secs(90 * 24 * 3600);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvError {
    #[error("unknown port {0}")]
    UnknownPort(PortRef),
    #[error("unknown host {0}")]
    UnknownHost(String),
    #[error("host {0} has no patched jack")]
    Unpatched(String),
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("no row {key} in {relation}")]
    UnknownRow { relation: String, key: String },
    #[error("{relation}.{column} is {owner:?}-owned")]
    Partition { relation: String, column: String, owner: Owner },
    #[error("sighting of {mac} on {port} at {at} is older than {last}")]
    StaleSighting { mac: MacAddr, port: PortRef, at: SimTime, last: SimTime },
    #[error("bad value for {column}: {value}")]
    BadValue { column: String, value: String },
    #[error("csv: {0}")]
    Csv(String),
}

/// Who may write a column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Auto,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchRow {
    pub id: String,
    pub kind: String,
    pub building: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRow {
    pub switch: String,
    pub idx: u8,
    pub ups: String,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortRow {
    pub port: PortRef,
    pub mode: String,
    pub vlan: Option<u16>,
    pub description: String,
    pub auto_flag: bool,
    pub link_up: bool,
    pub err_disabled: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRow {
    pub jack: JackId,
    pub port: PortRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JackRow {
    pub id: JackId,
    pub room: RoomId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomRow {
    pub id: RoomId,
    pub building: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupantRow {
    pub room: RoomId,
    pub person: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpRow {
    pub host: HostId,
    pub person: String,
    pub contact: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostRow {
    pub id: HostId,
    pub fqdn: String,
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
    pub jack: Option<JackId>,
    pub managed: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SightingRow {
    pub mac: MacAddr,
    pub port: PortRef,
    pub last_seen: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlanRow {
    pub id: u16,
    pub name: String,
    pub purpose: String,
    pub owner: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostVlanRow {
    pub vlan: u16,
    pub analyst: String,
    pub session: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineRow {
    pub host: String,
    pub since: String,
    pub reason: String,
    pub analyst: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub seq: u64,
    pub actor: String,
    pub role: String,
    pub at: u64,
    pub command: String,
    pub arguments: String,
    pub outcome: String,
}

/// What the running network looks like, handed over for reconciliation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetState {
    pub switches: Vec<SwitchRow>,
    pub elements: Vec<ElementRow>,
    pub ports: Vec<PortRow>,
    pub patches: Vec<PatchRow>,
    pub vlans: Vec<VlanRow>,
    pub ghost_vlans: Vec<GhostVlanRow>,
    pub quarantine: Vec<QuarantineRow>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationAnswer {
    pub host: HostId,
    pub jack: JackId,
    pub room: RoomId,
    pub building: String,
    pub port: Option<PortRef>,
    pub vlan: Option<u16>,
}

impl LocationAnswer {
    pub fn line(&self) -> String {
        format!(
            "{} room={} building={} jack={} port={} vlan={}",
            self.host,
            self.room,
            self.building,
            self.jack,
            self.port.as_ref().map_or("none".into(), |p| p.to_string()),
            self.vlan.map_or("none".into(), |v| v.to_string())
        )
    }
}

pub type Row = BTreeMap<String, String>;

pub const VIEWS: [&str; 12] = [
    "switches",
    "ports",
    "patches",
    "jacks",
    "rooms",
    "hosts",
    "rp_records",
    "sightings",
    "vlans",
    "ghost_vlans",
    "quarantine_view",
    "audit",
];

/// Columns writable through [`InventoryDb::write`], with their owner.
/// `port.description` is decided per row by `auto_flag`.
const COLUMNS: [(&str, &str, Option<Owner>); 12] = [
    ("port", "mode", Some(Owner::Auto)),
    ("port", "vlan", Some(Owner::Auto)),
    ("port", "auto_flag", Some(Owner::Auto)),
    ("port", "description", None),
    ("room", "building", Some(Owner::Manual)),
    ("jack", "room", Some(Owner::Manual)),
    ("occupant", "person", Some(Owner::Manual)),
    ("rp_record", "person", Some(Owner::Manual)),
    ("rp_record", "contact", Some(Owner::Manual)),
    ("host", "managed", Some(Owner::Manual)),
    ("vlan", "name", Some(Owner::Auto)),
    ("vlan", "owner", Some(Owner::Manual)),
];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryDb {
    pub switches: BTreeMap<String, SwitchRow>,
    pub elements: BTreeMap<(String, u8), ElementRow>,
    pub ports: BTreeMap<PortRef, PortRow>,
    pub patches: BTreeMap<JackId, PatchRow>,
    pub jacks: BTreeMap<JackId, JackRow>,
    pub rooms: BTreeMap<RoomId, RoomRow>,
    pub occupants: BTreeSet<OccupantRow>,
    pub rp_records: BTreeMap<HostId, RpRow>,
    pub hosts: BTreeMap<HostId, HostRow>,
    pub sightings: BTreeMap<(MacAddr, PortRef), SimTime>,
    pub vlans: BTreeMap<u16, VlanRow>,
    pub ghost_vlans: BTreeMap<u16, GhostVlanRow>,
    pub quarantine: BTreeMap<String, QuarantineRow>,
    pub audit: Vec<AuditRow>,
}

fn parse_bool(column: &str, v: &str) -> Result<bool, InvError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(InvError::BadValue { column: column.into(), value: v.into() }),
    }
}

impl InventoryDb {
    /// Seeds the manually-kept relations from a topology file. Network-owned
    /// relations are filled by the first [`sync_from_network`](Self::sync_from_network).
    pub fn from_topology(topo: &NetTopology) -> Self {
        let mut db = InventoryDb::default();
        for r in topo.rooms.values() {
            db.rooms.insert(r.id.clone(), RoomRow { id: r.id.clone(), building: r.building.clone() });
        }
        for j in topo.jacks.values() {
            db.jacks.insert(j.id.clone(), JackRow { id: j.id.clone(), room: j.room.clone() });
        }
        for h in topo.hosts.values().filter(|h| !h.spoofer) {
            db.hosts.insert(
                h.id.clone(),
                HostRow {
                    id: h.id.clone(),
                    fqdn: h.fqdn.clone(),
                    mac: h.mac,
                    ip: h.ip,
                    jack: h.jack.clone(),
                    managed: match h.managed {
                        Managed::Analyst => "analyst".into(),
                        Managed::User => "user".into(),
                    },
                },
            );
            if let Some(rp) = &h.rp {
                db.rp_records.insert(h.id.clone(), RpRow { host: h.id.clone(), person: rp.clone(), contact: String::new() });
            }
        }
        for d in topo.vlans.values() {
            db.vlans.insert(
                d.id.get(),
                VlanRow { id: d.id.get(), name: d.name.clone(), purpose: d.purpose.to_string(), owner: d.owner.clone() },
            );
        }
        db
    }

    pub fn owner_of(&self, relation: &str, column: &str, key: &str) -> Result<Owner, InvError> {
        let (_, _, owner) = COLUMNS
            .iter()
            .find(|(r, c, _)| *r == relation && *c == column)
            .ok_or_else(|| InvError::UnknownRelation(format!("{relation}.{column}")))?;
        match owner {
            Some(o) => Ok(*o),
            None => {
                let p: PortRef = key.parse().map_err(|_| InvError::BadValue { column: "ref".into(), value: key.into() })?;
                let row = self.ports.get(&p).ok_or(InvError::UnknownPort(p))?;
                Ok(if row.auto_flag { Owner::Auto } else { Owner::Manual })
            }
        }
    }

    /// Single-column update on behalf of `origin`. Fails without writing
    /// when the column belongs to the other side.
    pub fn write(&mut self, origin: Owner, relation: &str, key: &str, column: &str, value: &str) -> Result<(), InvError> {
        let owner = self.owner_of(relation, column, key)?;
        if owner != origin {
            return Err(InvError::Partition { relation: relation.into(), column: column.into(), owner });
        }
        let missing = || InvError::UnknownRow { relation: relation.into(), key: key.into() };
        match (relation, column) {
            ("port", _) => {
                let p: PortRef = key.parse().map_err(|_| missing())?;
                let row = self.ports.get_mut(&p).ok_or_else(missing)?;
                match column {
                    "mode" => row.mode = value.into(),
                    "vlan" => {
                        row.vlan = match value {
                            "" | "none" => None,
                            v => Some(v.parse().map_err(|_| InvError::BadValue { column: "vlan".into(), value: v.into() })?),
                        }
                    }
                    "auto_flag" => row.auto_flag = parse_bool(column, value)?,
                    _ => {
                        if origin == Owner::Manual && value.starts_with(AUTO_TOKEN) {
                            return Err(InvError::Partition { relation: relation.into(), column: column.into(), owner: Owner::Auto });
                        }
                        row.description = value.into();
                    }
                }
                if row.auto_flag && !row.description.is_empty() && !row.description.starts_with(AUTO_TOKEN) {
                    row.description = format!("{AUTO_TOKEN} {}", row.description).trim_end().to_string();
                }
            }
            ("room", _) => self.rooms.get_mut(&RoomId::new(key)).ok_or_else(missing)?.building = value.into(),
            ("jack", _) => {
                if !self.rooms.contains_key(&RoomId::new(value)) {
                    return Err(InvError::BadValue { column: column.into(), value: value.into() });
                }
                self.jacks.get_mut(&JackId::new(key)).ok_or_else(missing)?.room = RoomId::new(value);
            }
            ("occupant", _) => {
                if !self.rooms.contains_key(&RoomId::new(key)) {
                    return Err(missing());
                }
                self.occupants.insert(OccupantRow { room: RoomId::new(key), person: value.into() });
            }
            ("rp_record", _) => {
                let h = HostId::new(key);
                if !self.hosts.contains_key(&h) {
                    return Err(missing());
                }
                let row = self
                    .rp_records
                    .entry(h.clone())
                    .or_insert_with(|| RpRow { host: h, person: String::new(), contact: String::new() });
                if column == "person" {
                    row.person = value.into();
                } else {
                    row.contact = value.into();
                }
            }
            ("host", _) => {
                if value != "analyst" && value != "user" {
                    return Err(InvError::BadValue { column: column.into(), value: value.into() });
                }
                self.hosts.get_mut(&HostId::new(key)).ok_or_else(missing)?.managed = value.into();
            }
            ("vlan", _) => {
                let id: u16 = key.parse().map_err(|_| missing())?;
                let row = self.vlans.get_mut(&id).ok_or_else(missing)?;
                if column == "name" {
                    row.name = value.into();
                } else {
                    row.owner = if value.is_empty() { None } else { Some(value.into()) };
                }
            }
            _ => return Err(InvError::UnknownRelation(relation.into())),
        }
        Ok(())
    }

    /// Reconciles every network-owned column with `net`. Manual columns are
    /// left alone; a manual port description survives unless the port has
    /// gone over to `[Auto]` upstream.
    pub fn sync_from_network(&mut self, net: &NetState) -> usize {
        let mut changes = 0;
        let switches: BTreeMap<String, SwitchRow> = net.switches.iter().map(|s| (s.id.clone(), s.clone())).collect();
        changes += usize::from(switches != self.switches);
        self.switches = switches;
        let elements: BTreeMap<(String, u8), ElementRow> =
            net.elements.iter().map(|e| ((e.switch.clone(), e.idx), e.clone())).collect();
        changes += usize::from(elements != self.elements);
        self.elements = elements;

        let live: BTreeSet<&PortRef> = net.ports.iter().map(|p| &p.port).collect();
        let before = self.ports.len();
        self.ports.retain(|p, _| live.contains(p));
        changes += before - self.ports.len();
        for p in &net.ports {
            match self.ports.get_mut(&p.port) {
                Some(row) => {
                    let manual_desc = (!row.auto_flag && !p.auto_flag).then(|| row.description.clone());
                    let mut next = p.clone();
                    if let Some(d) = manual_desc {
                        next.description = d;
                    }
                    if *row != next {
                        *row = next;
                        changes += 1;
                    }
                }
                None => {
                    self.ports.insert(p.port.clone(), p.clone());
                    changes += 1;
                }
            }
        }

        let patches: BTreeMap<JackId, PatchRow> = net.patches.iter().map(|p| (p.jack.clone(), p.clone())).collect();
        changes += usize::from(patches != self.patches);
        self.patches = patches;

        let live_vlans: BTreeSet<u16> = net.vlans.iter().map(|v| v.id).collect();
        self.vlans.retain(|id, _| live_vlans.contains(id));
        for v in &net.vlans {
            let row = self.vlans.entry(v.id).or_insert_with(|| {
                changes += 1;
                v.clone()
            });
            if row.name != v.name || row.purpose != v.purpose {
                row.name = v.name.clone();
                row.purpose = v.purpose.clone();
                changes += 1;
            }
        }

        let ghosts: BTreeMap<u16, GhostVlanRow> = net.ghost_vlans.iter().map(|g| (g.vlan, g.clone())).collect();
        changes += usize::from(ghosts != self.ghost_vlans);
        self.ghost_vlans = ghosts;
        let q: BTreeMap<String, QuarantineRow> = net.quarantine.iter().map(|q| (q.host.clone(), q.clone())).collect();
        changes += usize::from(q != self.quarantine);
        self.quarantine = q;
        changes
    }

    /// Upserts a sighting. When the port's description is auto-maintained
    /// and the MAC belongs to a registered host, returns the new description.
    pub fn record_sighting(&mut self, mac: MacAddr, port: &PortRef, at: SimTime) -> Result<Option<String>, InvError> {
        let row = self.ports.get(port).ok_or_else(|| InvError::UnknownPort(port.clone()))?;
        let key = (mac, port.clone());
        if let Some(last) = self.sightings.get(&key) {
            if *last > at {
                return Err(InvError::StaleSighting { mac, port: port.clone(), at, last: *last });
            }
        }
        self.sightings.insert(key, at);
        if !row.auto_flag {
            return Ok(None);
        }
        let Some(h) = self.hosts.values().find(|h| h.mac == mac) else {
            return Ok(None);
        };
        let desc = format!("{AUTO_TOKEN} {}", h.fqdn);
        let row = self.ports.get_mut(port).expect("checked");
        if row.description == desc {
            return Ok(None);
        }
        row.description = desc.clone();
        Ok(Some(desc))
    }

    pub fn prune_sightings(&mut self, now: SimTime) -> usize {
        let before = self.sightings.len();
        self.sightings.retain(|_, t| now.saturating_sub(*t) <= SIGHTING_RETENTION);
        before - self.sightings.len()
    }

    fn host_row(&self, name: &str) -> Option<&HostRow> {
        self.hosts.get(&HostId::new(name)).or_else(|| self.hosts.values().find(|h| h.fqdn == name))
    }

    pub fn locate(&self, host: &str) -> Result<LocationAnswer, InvError> {
        let h = self.host_row(host).ok_or_else(|| InvError::UnknownHost(host.into()))?;
        let jack = h.jack.clone().ok_or_else(|| InvError::Unpatched(host.into()))?;
        if !self.patches.contains_key(&jack) {
            return Err(InvError::Unpatched(host.into()));
        }
        let j = self.jacks.get(&jack).ok_or_else(|| InvError::Unpatched(host.into()))?;
        let building = self.rooms.get(&j.room).map(|r| r.building.clone()).unwrap_or_default();
        let port = self
            .sightings
            .iter()
            .filter(|((m, _), _)| *m == h.mac)
            .max_by_key(|(k, t)| (**t, std::cmp::Reverse(k.1.clone())))
            .map(|((_, p), _)| p.clone());
        let vlan = port.as_ref().and_then(|p| self.ports.get(p)).and_then(|r| r.vlan);
        Ok(LocationAnswer { host: h.id.clone(), jack, room: j.room.clone(), building, port, vlan })
    }

    /// Location of a switch port through its patch, for alert enrichment.
    pub fn port_location(&self, port: &PortRef) -> Option<(JackId, RoomId, String)> {
        let p = self.patches.values().find(|p| &p.port == port)?;
        let j = self.jacks.get(&p.jack)?;
        let b = self.rooms.get(&j.room).map(|r| r.building.clone()).unwrap_or_default();
        Some((j.id.clone(), j.room.clone(), b))
    }

    pub fn append_audit(&mut self, mut row: AuditRow) -> u64 {
        row.seq = self.audit.len() as u64 + 1;
        let seq = row.seq;
        self.audit.push(row);
        seq
    }

    fn rows<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<Row> {
        items
            .into_iter()
            .map(|item| {
                let v = serde_json::to_value(item).expect("plain rows serialize");
                v.as_object()
                    .map(|o| {
                        o.iter()
                            .map(|(k, v)| {
                                let s = match v {
                                    serde_json::Value::String(s) => s.clone(),
                                    serde_json::Value::Null => String::new(),
                                    other => other.to_string(),
                                };
                                (k.clone(), s)
                            })
                            .collect()
                    })
                    .unwrap_or_default()
            })
            .collect()
    }

    fn view_rows(&self, view: &str) -> Result<Vec<Row>, InvError> {
        Ok(match view {
            "switches" => Self::rows(self.switches.values()),
            "ports" => Self::rows(self.ports.values()),
            "patches" => Self::rows(self.patches.values()),
            "jacks" => Self::rows(self.jacks.values()),
            "rooms" => Self::rows(self.rooms.values()),
            "occupants" => Self::rows(self.occupants.iter()),
            "hosts" => Self::rows(self.hosts.values()),
            "rp_records" => Self::rows(self.rp_records.values()),
            "sightings" => Self::rows(self.sightings.iter().map(|((m, p), t)| SightingRow {
                mac: *m,
                port: p.clone(),
                last_seen: t.ticks(),
            })),
            "vlans" | "vlan" => Self::rows(self.vlans.values()),
            "ghost_vlans" => Self::rows(self.ghost_vlans.values()),
            "quarantine_view" | "quarantine" => Self::rows(self.quarantine.values()),
            "audit" => Self::rows(self.audit.iter()),
            "elements" => Self::rows(self.elements.values()),
            _ => return Err(InvError::UnknownView(view.into())),
        })
    }

    /// Rows of `view` matching every `column:value` (or `column=value`)
    /// term in `filter`, separated by commas. Values may be double-quoted.
    pub fn query_view(&self, view: &str, filter: &str) -> Result<Vec<Row>, InvError> {
        let terms = parse_filter(filter);
        Ok(self
            .view_rows(view)?
            .into_iter()
            .filter(|r| terms.iter().all(|(k, v)| r.get(k).is_some_and(|x| x == v)))
            .collect())
    }

    /// Header-row CSV of one relation or view.
    pub fn export_csv(&self, relation: &str) -> Result<String, InvError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        macro_rules! dump {
            ($it:expr) => {
                for r in $it {
                    w.serialize(r).map_err(|e| InvError::Csv(e.to_string()))?;
                }
            };
        }
        match relation {
            "switches" => dump!(self.switches.values()),
            "elements" => dump!(self.elements.values()),
            "ports" => dump!(self.ports.values()),
            "patches" => dump!(self.patches.values()),
            "jacks" => dump!(self.jacks.values()),
            "rooms" => dump!(self.rooms.values()),
            "occupants" => dump!(self.occupants.iter()),
            "hosts" => dump!(self.hosts.values()),
            "rp_records" => dump!(self.rp_records.values()),
            "sightings" => dump!(self.sightings.iter().map(|((m, p), t)| SightingRow {
                mac: *m,
                port: p.clone(),
                last_seen: t.ticks()
            })),
            "vlans" => dump!(self.vlans.values()),
            "ghost_vlans" => dump!(self.ghost_vlans.values()),
            "quarantine_view" => dump!(self.quarantine.values()),
            "audit" => dump!(self.audit.iter()),
            _ => return Err(InvError::UnknownRelation(relation.into())),
        }
        let bytes = w.into_inner().map_err(|e| InvError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Loads rows of a manually-kept relation from CSV, replacing rows with
    /// the same key. Returns the number of rows read.
    pub fn import_csv(&mut self, relation: &str, text: &str) -> Result<usize, InvError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut n = 0;
        macro_rules! load {
            ($ty:ty, $row:ident => $body:expr) => {
                for rec in r.deserialize::<$ty>() {
                    let $row = rec.map_err(|e| InvError::Csv(e.to_string()))?;
                    $body;
                    n += 1;
                }
            };
        }
        match relation {
            "rooms" => load!(RoomRow, row => self.rooms.insert(row.id.clone(), row)),
            "jacks" => load!(JackRow, row => self.jacks.insert(row.id.clone(), row)),
            "occupants" => load!(OccupantRow, row => self.occupants.insert(row)),
            "rp_records" => load!(RpRow, row => self.rp_records.insert(row.host.clone(), row)),
            "hosts" => load!(HostRow, row => self.hosts.insert(row.id.clone(), row)),
            "switches" | "elements" | "ports" | "patches" | "sightings" | "vlans" | "ghost_vlans" | "quarantine_view" => {
                return Err(InvError::Partition { relation: relation.into(), column: "*".into(), owner: Owner::Auto })
            }
            _ => return Err(InvError::UnknownRelation(relation.into())),
        }
        Ok(n)
    }

    /// Rows of `view` as a space-aligned table.
    pub fn render(rows: &[Row]) -> String {
        let Some(first) = rows.first() else {
            return "(no rows)\n".into();
        };
        let cols: Vec<&String> = first.keys().collect();
        let widths: Vec<usize> = cols
            .iter()
            .map(|c| rows.iter().map(|r| r.get(*c).map_or(0, |v| v.len())).max().unwrap_or(0).max(c.len()))
            .collect();
        let line = |vals: Vec<&str>| {
            let cells: Vec<String> = vals.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
            cells.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(cols.iter().map(|c| c.as_str()).collect());
        for r in rows {
            out.push_str(&line(cols.iter().map(|c| r.get(*c).map_or("", |v| v.as_str())).collect()));
        }
        out
    }
}

/// `owner:"profX",purpose=faculty` → [(owner, profX), (purpose, faculty)]
pub fn parse_filter(filter: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut rest = filter.trim();
    while !rest.is_empty() {
        let Some(sep) = rest.find([':', '=']) else { break };
        let key = rest[..sep].trim().to_string();
        rest = rest[sep + 1..].trim_start();
        let value;
        if let Some(stripped) = rest.strip_prefix('"') {
            let end = stripped.find('"').unwrap_or(stripped.len());
            value = stripped[..end].to_string();
            rest = stripped.get(end + 1..).unwrap_or("");
        } else {
            let end = rest.find(',').unwrap_or(rest.len());
            value = rest[..end].trim().to_string();
            rest = &rest[end..];
        }
        rest = rest.trim_start().trim_start_matches(',').trim_start();
        out.push((key, value));
    }
    out
}

/// Helper for building a port row from live values.
pub fn port_row(port: &PortRef, mode: &str, vlan: Option<VlanId>, description: &str, link_up: bool, err_disabled: bool) -> PortRow {
    PortRow {
        port: port.clone(),
        mode: mode.into(),
        vlan: vlan.map(|v| v.get()),
        description: description.into(),
        auto_flag: description.is_empty() || description.starts_with(AUTO_TOKEN),
        link_up,
        err_disabled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Host, TopologyBuilder, VlanPurpose};
    use proptest::prelude::*;

    fn mac(n: u64) -> MacAddr {
        MacAddr::from_index(3, n)
    }

    fn db() -> InventoryDb {
        let mut b = TopologyBuilder::new();
        b.ups("u")
            .access_switch("A11", 4096, mac(100), "u", 8)
            .room("R101", "Main")
            .room("R102", "Main")
            .jack("J1", "R101", Some(PortRef::new("A11", 1, 1)))
            .jack("J2", "R102", None)
            .vlan(20, "staff", VlanPurpose::Production, None)
            .vlan(310, "lab-x", VlanPurpose::Faculty, Some("profX"))
            .host(Host::new("machine42", mac(1), "10.20.1.42".parse().unwrap(), Some("J1")))
            .host(Host::new("loose", mac(2), "10.20.1.43".parse().unwrap(), Some("J2")))
            .host(Host::new("nowhere", mac(3), "10.20.1.44".parse().unwrap(), None));
        let topo = b.build().unwrap();
        let mut db = InventoryDb::from_topology(&topo);
        db.sync_from_network(&net(&["[Auto] old", "", "wiring closet"]));
        db
    }

    fn net(descs: &[&str]) -> NetState {
        NetState {
            switches: vec![SwitchRow { id: "A11".into(), kind: "access".into(), building: "Main".into() }],
            ports: descs
                .iter()
                .enumerate()
                .map(|(i, d)| port_row(&PortRef::new("A11", 1, i as u16 + 1), "access", VlanId::new(20).ok(), d, true, false))
                .collect(),
            patches: vec![PatchRow { jack: "J1".into(), port: PortRef::new("A11", 1, 1) }],
            vlans: vec![
                VlanRow { id: 20, name: "staff".into(), purpose: "production".into(), owner: None },
                VlanRow { id: 310, name: "lab-x".into(), purpose: "faculty".into(), owner: None },
            ],
            ..NetState::default()
        }
    }

    #[test]
    fn sighting_sets_auto_description() {
        let mut db = db();
        let p = PortRef::new("A11", 1, 1);
        assert_eq!(db.record_sighting(mac(1), &p, SimTime::from_secs(5)).unwrap(), Some("[Auto] machine42.domain".into()));
        assert_eq!(db.ports[&p].description, "[Auto] machine42.domain");
        // Unknown MAC: sighting stored, description untouched.
        assert_eq!(db.record_sighting(mac(77), &p, SimTime::from_secs(6)).unwrap(), None);
        assert_eq!(db.ports[&p].description, "[Auto] machine42.domain");
        // Manual port: no change.
        assert_eq!(db.record_sighting(mac(1), &PortRef::new("A11", 1, 3), SimTime::from_secs(7)).unwrap(), None);
        assert!(matches!(
            db.record_sighting(mac(1), &PortRef::new("A11", 9, 9), SimTime::ZERO),
            Err(InvError::UnknownPort(_))
        ));
    }

    #[test]
    fn stale_sightings_rejected() {
        let mut db = db();
        let p = PortRef::new("A11", 1, 2);
        db.record_sighting(mac(9), &p, SimTime::from_secs(10)).unwrap();
        assert!(matches!(db.record_sighting(mac(9), &p, SimTime::from_secs(9)), Err(InvError::StaleSighting { .. })));
        assert_eq!(db.sightings[&(mac(9), p)], SimTime::from_secs(10));
    }

    #[test]
    fn locate_joins_and_guards() {
        let mut db = db();
        let a = db.locate("machine42").unwrap();
        assert_eq!((a.jack.as_str(), a.room.as_str(), a.building.as_str(), a.port.clone()), ("J1", "R101", "Main", None));
        db.record_sighting(mac(1), &PortRef::new("A11", 1, 1), SimTime::from_secs(1)).unwrap();
        let a = db.locate("machine42.domain").unwrap();
        assert_eq!(a.port, Some(PortRef::new("A11", 1, 1)));
        assert_eq!(a.vlan, Some(20));
        assert!(a.line().starts_with("machine42 room=R101"));
        assert_eq!(db.locate("loose"), Err(InvError::Unpatched("loose".into())));
        assert_eq!(db.locate("nowhere"), Err(InvError::Unpatched("nowhere".into())));
        assert_eq!(db.locate("ghost"), Err(InvError::UnknownHost("ghost".into())));
    }

    #[test]
    fn views_and_filters() {
        let db = db();
        let rows = db.query_view("vlans", r#"owner:"profX""#).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0]["id"], "310");
        assert_eq!(db.query_view("nope", ""), Err(InvError::UnknownView("nope".into())));
        assert_eq!(parse_filter(r#"a:"x, y",b=2"#), vec![("a".into(), "x, y".into()), ("b".into(), "2".into())]);
        assert!(InventoryDb::render(&rows).contains("lab-x"));
    }

    #[test]
    fn manual_fields_survive_sync() {
        let mut db = db();
        db.write(Owner::Manual, "rp_record", "machine42", "person", "Dr. Who").unwrap();
        db.write(Owner::Manual, "port", "A11:1/0/3", "description", "printer closet").unwrap();
        let rp = db.rp_records.clone();
        db.sync_from_network(&net(&["[Auto] old", "", "wiring closet"]));
        assert_eq!(db.rp_records, rp);
        assert_eq!(db.ports[&PortRef::new("A11", 1, 3)].description, "printer closet");
        // Owner set manually; the network's `None` does not clobber it.
        assert_eq!(db.vlans[&310].owner.as_deref(), Some("profX"));
    }

    #[test]
    fn csv_round_trip_and_schema() {
        let mut db = db();
        let text = db.export_csv("rooms").unwrap();
        assert!(text.starts_with("id,building\n"));
        let mut other = InventoryDb::default();
        assert_eq!(other.import_csv("rooms", &text).unwrap(), 2);
        assert_eq!(other.rooms, db.rooms);
        assert!(matches!(db.import_csv("ports", "x\n"), Err(InvError::Partition { .. })));
        for rel in ["room", "jack", "port", "patch", "host", "sighting", "vlan", "ghost_vlan", "audit", "rp_record"] {
            assert!(SCHEMA_SQL.contains(&format!("CREATE TABLE {rel} (")), "{rel}");
        }
    }

    #[derive(Clone, Debug)]
    enum Op {
        Write(Owner, usize, usize, u8),
        Sync(bool),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (prop_oneof![Just(Owner::Auto), Just(Owner::Manual)], 0..COLUMNS.len(), 0usize..3, any::<u8>())
                .prop_map(|(o, c, k, v)| Op::Write(o, c, k, v)),
            1 => any::<bool>().prop_map(Op::Sync),
        ]
    }

    proptest! {
        /// Mixed writes and syncs never cross the ownership line: a write
        /// from the wrong side is refused, and every manual column always
        /// holds the last manual write.
        #[test]
        fn auto_manual_partition(ops in prop::collection::vec(op(), 500)) {
            let mut db = db();
            let keys = |rel: &str, k: usize| -> String {
                match rel {
                    "port" => format!("A11:1/0/{}", k + 1),
                    "room" | "occupant" => ["R101", "R102", "R101"][k].into(),
                    "jack" => ["J1", "J2", "J1"][k].into(),
                    "rp_record" | "host" => ["machine42", "loose", "nowhere"][k].into(),
                    _ => ["20", "310", "20"][k].into(),
                }
            };
            let manual_snapshot = |db: &InventoryDb| {
                let descs: Vec<(PortRef, String)> =
                    db.ports.values().filter(|p| !p.auto_flag).map(|p| (p.port.clone(), p.description.clone())).collect();
                (db.rooms.clone(), db.jacks.clone(), db.occupants.clone(), db.rp_records.clone(), db.hosts.clone(),
                 db.vlans.values().map(|v| v.owner.clone()).collect::<Vec<_>>(), descs)
            };
            for o in ops {
                match o {
                    Op::Write(origin, c, k, v) => {
                        let (rel, col, _) = COLUMNS[c];
                        let key = keys(rel, k);
                        let value = match col {
                            "vlan" => "20".to_string(),
                            "auto_flag" => (v % 2 == 0).to_string(),
                            "managed" => if v % 2 == 0 { "analyst".into() } else { "user".into() },
                            "room" => "R102".into(),
                            _ => format!("v{v}"),
                        };
                        let owner = db.owner_of(rel, col, &key).unwrap();
                        let before = db.clone();
                        let res = db.write(origin, rel, &key, col, &value);
                        if owner != origin {
                            prop_assert!(matches!(res, Err(InvError::Partition { .. })), "expected partition error");
                            prop_assert_eq!(&db, &before);
                        }
                        if origin == Owner::Auto {
                            // Flipping auto_flag hands the description over; compare the rest.
                            let (mut a, mut b) = (manual_snapshot(&db), manual_snapshot(&before));
                            b.6.retain(|(p, _)| a.6.iter().any(|(q, _)| q == p));
                            a.6.retain(|(p, _)| b.6.iter().any(|(q, _)| q == p));
                            prop_assert_eq!(a, b);
                        }
                        for p in db.ports.values().filter(|p| p.auto_flag) {
                            prop_assert!(p.description.is_empty() || p.description.starts_with(AUTO_TOKEN));
                        }
                    }
                    Op::Sync(flip) => {
                        let before = manual_snapshot(&db);
                        let descs: Vec<String> = db.ports.values().map(|p| if p.auto_flag || flip { format!("[Auto] s{}", p.port.port) } else { p.description.clone() }).collect();
                        let refs: Vec<&str> = descs.iter().map(|s| s.as_str()).collect();
                        db.sync_from_network(&net(&refs));
                        let after = manual_snapshot(&db);
                        prop_assert_eq!(&before.0, &after.0);
                        prop_assert_eq!(&before.3, &after.3);
                        prop_assert_eq!(&before.4, &after.4);
                        prop_assert_eq!(&before.5, &after.5);
                    }
                }
            }
        }
    }
}
