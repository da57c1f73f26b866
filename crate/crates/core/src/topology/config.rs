//! Line-oriented topology config: `[section args]` headers followed by
//! `key = value` lines. `#` starts a comment. The grammar is documented in
//! `docs/topology-format.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use crate::addr::{Cidr, MacAddr, VlanId};
use crate::l2switch::{PortMode, TrunkAllowed, ViolationMode};
use crate::simcore::SimTime;

use super::*;

/// Programmatic construction with the same validation the text loader uses.
#[derive(Debug, Default, Clone)]
pub struct TopologyBuilder {
    switches: Vec<Switch>,
    links: Vec<(PortRef, PortRef, CapacityClass, bool)>,
    ups: Vec<UpsId>,
    rooms: Vec<Room>,
    jacks: Vec<(Jack, Option<PortRef>)>,
    hosts: Vec<Host>,
    routers: Vec<Router>,
    pairs: Vec<RouterPairDecl>,
    vlans: Vec<VlanDecl>,
    ports: Vec<(PortRef, PortConfig)>,
    profile: Option<PortConfig>,
    link_delay: Option<SimTime>,
    domain: Option<String>,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ups(&mut self, id: &str) -> &mut Self {
        self.ups.push(UpsId::new(id));
        self
    }

    pub fn switch(&mut self, sw: Switch) -> &mut Self {
        self.switches.push(sw);
        self
    }

    /// Single-element access switch fed by `ups`.
    pub fn access_switch(&mut self, id: &str, priority: u16, mac: MacAddr, ups: &str, ports: u16) -> &mut Self {
        self.switch(Switch {
            id: SwitchId::new(id),
            kind: SwitchKind::Access,
            building: String::new(),
            priority,
            mac,
            elements: vec![StackElement { index: 1, ups: UpsId::new(ups), failed: false }],
            ring: Vec::new(),
            ports_per_element: ports,
            spare: None,
        })
    }

    pub fn link(&mut self, a: PortRef, b: PortRef, class: CapacityClass) -> &mut Self {
        self.links.push((a, b, class, true));
        self
    }

    pub fn link_with_state(&mut self, a: PortRef, b: PortRef, class: CapacityClass, up: bool) -> &mut Self {
        self.links.push((a, b, class, up));
        self
    }

    pub fn room(&mut self, id: &str, building: &str) -> &mut Self {
        self.rooms.push(Room { id: RoomId::new(id), building: building.to_string() });
        self
    }

    pub fn jack(&mut self, id: &str, room: &str, patch: Option<PortRef>) -> &mut Self {
        self.jacks.push((Jack { id: JackId::new(id), room: RoomId::new(room) }, patch));
        self
    }

    pub fn host(&mut self, host: Host) -> &mut Self {
        self.hosts.push(host);
        self
    }

    pub fn router(&mut self, id: &str, ups: &str, attach: PortRef) -> &mut Self {
        self.routers.push(Router { id: RouterId::new(id), ups: UpsId::new(ups), attach, failed: false });
        self
    }

    pub fn pair(&mut self, pair: RouterPairDecl) -> &mut Self {
        self.pairs.push(pair);
        self
    }

    pub fn vlan(&mut self, id: u16, name: &str, purpose: VlanPurpose, owner: Option<&str>) -> &mut Self {
        self.vlans.push(VlanDecl {
            id: VlanId::new(id).expect("valid vlan id"),
            name: name.to_string(),
            purpose,
            owner: owner.map(str::to_string),
        });
        self
    }

    pub fn vlan_decl(&mut self, decl: VlanDecl) -> &mut Self {
        self.vlans.push(decl);
        self
    }

    pub fn port(&mut self, port: PortRef, cfg: PortConfig) -> &mut Self {
        self.ports.push((port, cfg));
        self
    }

    pub fn profile(&mut self, cfg: PortConfig) -> &mut Self {
        self.profile = Some(cfg);
        self
    }

    pub fn link_delay(&mut self, d: SimTime) -> &mut Self {
        self.link_delay = Some(d);
        self
    }

    pub fn domain(&mut self, d: &str) -> &mut Self {
        self.domain = Some(d.to_string());
        self
    }

    /// Validates every referential and structural invariant.
    pub fn build(&self) -> Result<NetTopology, TopologyError> {
        let ups: BTreeSet<UpsId> = self.ups.iter().cloned().collect();
        let mut switches = BTreeMap::new();
        for sw in &self.switches {
            if sw.elements.is_empty() {
                return Err(TopologyError::Constraint(format!("switch {} has no stack elements", sw.id)));
            }
            for e in &sw.elements {
                if !ups.contains(&e.ups) {
                    return Err(TopologyError::DanglingReference(format!("ups {} (switch {})", e.ups, sw.id)));
                }
            }
            for &(a, b) in &sw.ring {
                if sw.element(a).is_none() || sw.element(b).is_none() {
                    return Err(TopologyError::DanglingReference(format!("ring edge {a}-{b} of {}", sw.id)));
                }
            }
            if let Some(sp) = sw.spare {
                if sw.element(sp).is_none() {
                    return Err(TopologyError::DanglingReference(format!("spare element {sp} of {}", sw.id)));
                }
            }
            NetTopology::check_ring_redundancy(sw)?;
            if switches.insert(sw.id.clone(), sw.clone()).is_some() {
                return Err(TopologyError::Duplicate(format!("switch {}", sw.id)));
            }
        }
        let port_ok = |p: &PortRef| switches.get(&p.switch).is_some_and(|s: &Switch| s.has_port(p));
        let on_spare = |p: &PortRef| switches.get(&p.switch).is_some_and(|s: &Switch| s.spare == Some(p.unit));

        let mut used_ports: BTreeMap<PortRef, String> = BTreeMap::new();
        let mut claim = |p: &PortRef, what: String| -> Result<(), TopologyError> {
            if let Some(prev) = used_ports.insert(p.clone(), what.clone()) {
                return Err(TopologyError::Constraint(format!("port {p} used by both {prev} and {what}")));
            }
            Ok(())
        };

        let mut links = BTreeMap::new();
        for (i, (a, b, class, up)) in self.links.iter().enumerate() {
            if a == b {
                return Err(TopologyError::Constraint(format!("link {a} connects a port to itself")));
            }
            for p in [a, b] {
                if !port_ok(p) {
                    return Err(TopologyError::DanglingReference(format!("port {p}")));
                }
                if on_spare(p) {
                    return Err(TopologyError::Constraint(format!("spare element carries link at {p}")));
                }
            }
            let id = LinkId(i as u32 + 1);
            claim(a, format!("link {id}"))?;
            claim(b, format!("link {id}"))?;
            links.insert(
                id,
                Link { id, a: a.clone(), b: b.clone(), state: LinkState::Up, class: *class, admin_up: *up },
            );
        }

        let mut rooms = BTreeMap::new();
        for r in &self.rooms {
            if rooms.insert(r.id.clone(), r.clone()).is_some() {
                return Err(TopologyError::Duplicate(format!("room {}", r.id)));
            }
        }
        let mut jacks = BTreeMap::new();
        let mut patches = BTreeMap::new();
        for (j, patch) in &self.jacks {
            if !rooms.contains_key(&j.room) {
                return Err(TopologyError::DanglingReference(format!("room {} (jack {})", j.room, j.id)));
            }
            if jacks.insert(j.id.clone(), j.clone()).is_some() {
                return Err(TopologyError::Duplicate(format!("jack {}", j.id)));
            }
            if let Some(p) = patch {
                if !port_ok(p) {
                    return Err(TopologyError::DanglingReference(format!("port {p} (jack {})", j.id)));
                }
                if on_spare(p) {
                    return Err(TopologyError::Constraint(format!("spare element carries patch at {p}")));
                }
                claim(p, format!("jack {}", j.id))?;
                patches.insert(j.id.clone(), p.clone());
            }
        }

        let mut hosts = BTreeMap::new();
        let mut macs = BTreeSet::new();
        let mut ips = BTreeSet::new();
        for h in &self.hosts {
            for j in h.jack.iter().chain(h.attached.iter()) {
                if !jacks.contains_key(j) {
                    return Err(TopologyError::DanglingReference(format!("jack {j} (host {})", h.id)));
                }
            }
            if !h.spoofer && !macs.insert(h.mac) {
                return Err(TopologyError::DuplicateMac(h.mac));
            }
            if !h.spoofer && !ips.insert(h.ip) {
                return Err(TopologyError::Duplicate(format!("ip {} (host {})", h.ip, h.id)));
            }
            if hosts.insert(h.id.clone(), h.clone()).is_some() {
                return Err(TopologyError::Duplicate(format!("host {}", h.id)));
            }
        }

        let mut routers = BTreeMap::new();
        for r in &self.routers {
            if !ups.contains(&r.ups) {
                return Err(TopologyError::DanglingReference(format!("ups {} (router {})", r.ups, r.id)));
            }
            if !port_ok(&r.attach) {
                return Err(TopologyError::DanglingReference(format!("port {} (router {})", r.attach, r.id)));
            }
            claim(&r.attach, format!("router {}", r.id))?;
            if routers.insert(r.id.clone(), r.clone()).is_some() {
                return Err(TopologyError::Duplicate(format!("router {}", r.id)));
            }
        }

        let mut vlans = BTreeMap::new();
        vlans.insert(
            VlanId::DEFAULT,
            VlanDecl { id: VlanId::DEFAULT, name: "default".into(), purpose: VlanPurpose::Production, owner: None },
        );
        for v in &self.vlans {
            vlans.insert(v.id, v.clone());
        }

        let mut pairs = BTreeMap::new();
        for p in &self.pairs {
            for r in [&p.primary, &p.secondary] {
                if !routers.contains_key(r) {
                    return Err(TopologyError::DanglingReference(format!("router {r} (pair {})", p.name)));
                }
            }
            if p.primary == p.secondary {
                return Err(TopologyError::Constraint(format!("pair {} uses one router twice", p.name)));
            }
            for v in p.interfaces.keys() {
                if !vlans.contains_key(v) {
                    return Err(TopologyError::DanglingReference(format!("vlan {v} (pair {})", p.name)));
                }
            }
            pairs.insert(p.name.clone(), p.clone());
        }

        let mut port_configs = BTreeMap::new();
        for (p, cfg) in &self.ports {
            if !port_ok(p) {
                return Err(TopologyError::DanglingReference(format!("port {p}")));
            }
            match &cfg.mode {
                PortMode::Access(v) if !vlans.contains_key(v) => {
                    return Err(TopologyError::DanglingReference(format!("vlan {v} (port {p})")));
                }
                PortMode::Trunk(TrunkAllowed::List(list)) => {
                    if let Some(v) = list.iter().find(|v| !vlans.contains_key(v)) {
                        return Err(TopologyError::DanglingReference(format!("vlan {v} (port {p})")));
                    }
                }
                _ => {}
            }
            if cfg.sticky.len() > cfg.max_macs as usize || cfg.max_macs == 0 {
                return Err(TopologyError::Constraint(format!("port {p}: sticky set exceeds max_macs")));
            }
            port_configs.insert(p.clone(), cfg.clone());
        }
        let profile = self.profile.clone().unwrap_or_default();
        if let PortMode::Access(v) = &profile.mode {
            if !vlans.contains_key(v) {
                return Err(TopologyError::DanglingReference(format!("vlan {v} (profile)")));
            }
        }

        let mut topo = NetTopology {
            switches,
            links,
            ups,
            rooms,
            jacks,
            patches,
            hosts,
            routers,
            pairs,
            vlans,
            port_configs,
            profile,
            link_delay: self.link_delay.unwrap_or(SimTime::from_micros(1)),
            domain: self.domain.clone().unwrap_or_else(|| "domain".to_string()),
            attachments: BTreeMap::new(),
        };
        topo.reindex();
        topo.apply_liveness();
        Ok(topo)
    }
}

struct Section {
    line: usize,
    kind: String,
    args: Vec<String>,
    entries: Vec<(usize, String, String)>,
}

impl Section {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()))
    }

    fn arg(&self, n: usize) -> Result<&str, TopologyError> {
        self.args.get(n).map(String::as_str).ok_or_else(|| perr(self.line, format!("[{}] needs a name", self.kind)))
    }

    fn require(&self, key: &str) -> Result<(usize, &str), TopologyError> {
        self.get(key).ok_or_else(|| perr(self.line, format!("[{}] is missing `{key}`", self.kind)))
    }
}

fn perr(line: usize, msg: impl Into<String>) -> TopologyError {
    TopologyError::ParseError { line, msg: msg.into() }
}

fn parse_at<T: std::str::FromStr>(line: usize, v: &str, what: &str) -> Result<T, TopologyError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| perr(line, format!("bad {what} `{v}`: {e}")))
}

fn parse_bool(line: usize, v: &str) -> Result<bool, TopologyError> {
    match v {
        "on" | "yes" | "true" | "1" => Ok(true),
        "off" | "no" | "false" | "0" => Ok(false),
        _ => Err(perr(line, format!("expected on/off, got `{v}`"))),
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>, TopologyError> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = match raw.find('#') {
            // `#` inside a description value is allowed when quoted-free; only
            // treat it as a comment when it starts the line or follows space.
            Some(pos) if pos == 0 || raw[..pos].ends_with(char::is_whitespace) => &raw[..pos],
            _ => raw,
        }
        .trim();
        if l.is_empty() {
            continue;
        }
        if let Some(h) = l.strip_prefix('[') {
            let h = h.strip_suffix(']').ok_or_else(|| perr(line, "unterminated section header"))?;
            let mut words = h.split_whitespace().map(str::to_string);
            let kind = words.next().ok_or_else(|| perr(line, "empty section header"))?;
            out.push(Section { line, kind, args: words.collect(), entries: Vec::new() });
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| perr(line, format!("expected key = value, got `{l}`")))?;
        let sec = out.last_mut().ok_or_else(|| perr(line, "key outside of any section"))?;
        let key = k.trim().to_string();
        if sec.entries.iter().any(|(_, k2, _)| *k2 == key) && key != "interface" {
            return Err(perr(line, format!("duplicate key `{key}` in [{}]", sec.kind)));
        }
        sec.entries.push((line, key, v.trim().to_string()));
    }
    Ok(out)
}

fn parse_port(line: usize, v: &str) -> Result<PortRef, TopologyError> {
    v.parse::<PortRef>().map_err(|e| perr(line, e))
}

fn parse_vlan_list(line: usize, v: &str) -> Result<TrunkAllowed, TopologyError> {
    if v.eq_ignore_ascii_case("all") {
        return Ok(TrunkAllowed::All);
    }
    let mut set = BTreeSet::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: u16 = parse_at(line, lo, "vlan")?;
            let hi: u16 = parse_at(line, hi, "vlan")?;
            for id in lo..=hi {
                set.insert(VlanId::new(id).map_err(|e| perr(line, e.to_string()))?);
            }
        } else {
            set.insert(parse_at::<VlanId>(line, part, "vlan")?);
        }
    }
    Ok(TrunkAllowed::List(set))
}

fn parse_port_config(sec: &Section, base: &PortConfig) -> Result<PortConfig, TopologyError> {
    let mut cfg = base.clone();
    let mode = sec.get("mode").map(|(_, v)| v).unwrap_or(match cfg.mode {
        PortMode::Access(_) => "access",
        PortMode::Trunk(_) => "trunk",
    });
    match mode {
        "access" => {
            let vlan = match sec.get("vlan") {
                Some((l, v)) => parse_at::<VlanId>(l, v, "vlan")?,
                None => match cfg.mode {
                    PortMode::Access(v) => v,
                    PortMode::Trunk(_) => VlanId::DEFAULT,
                },
            };
            cfg.mode = PortMode::Access(vlan);
        }
        "trunk" => {
            let allowed = match sec.get("allowed") {
                Some((l, v)) => parse_vlan_list(l, v)?,
                None => TrunkAllowed::All,
            };
            cfg.mode = PortMode::Trunk(allowed);
        }
        other => {
            let l = sec.get("mode").map(|(l, _)| l).unwrap_or(sec.line);
            return Err(perr(l, format!("unknown port mode `{other}`")));
        }
    }
    if let Some((_, v)) = sec.get("description") {
        cfg.description = v.to_string();
    }
    if let Some((l, v)) = sec.get("security") {
        cfg.security = parse_bool(l, v)?;
    }
    if let Some((l, v)) = sec.get("max_macs") {
        cfg.max_macs = parse_at(l, v, "max_macs")?;
    }
    if let Some((l, v)) = sec.get("violation") {
        cfg.violation = parse_at(l, v, "violation mode")?;
    }
    if let Some((l, v)) = sec.get("portfast") {
        cfg.portfast = parse_bool(l, v)?;
    }
    if let Some((l, v)) = sec.get("sticky") {
        cfg.sticky = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|m| parse_at::<MacAddr>(l, m, "mac"))
            .collect::<Result<_, _>>()?;
    }
    Ok(cfg)
}

/// Parses and validates a topology config document.
pub fn load_topology(text: &str) -> Result<NetTopology, TopologyError> {
    let sections = split_sections(text)?;
    let mut b = TopologyBuilder::new();

    // The profile must be known before any [port] section is merged into it.
    let mut profile = PortConfig::default();
    for sec in sections.iter().filter(|s| s.kind == "profile") {
        profile = parse_port_config(sec, &profile)?;
    }
    b.profile(profile.clone());

    for sec in &sections {
        match sec.kind.as_str() {
            "profile" => {}
            "settings" => {
                if let Some((l, v)) = sec.get("link_delay") {
                    b.link_delay(parse_at(l, v, "duration")?);
                }
                if let Some((_, v)) = sec.get("domain") {
                    b.domain(v);
                }
            }
            "ups" => {
                b.ups(sec.arg(0)?);
            }
            "switch" => {
                let id = sec.arg(0)?;
                let kind = match sec.get("kind").map(|(_, v)| v).unwrap_or("access") {
                    "access" => SwitchKind::Access,
                    "core-stack" | "core" => SwitchKind::CoreStack,
                    other => return Err(perr(sec.require("kind")?.0, format!("unknown switch kind `{other}`"))),
                };
                let (l, n) = sec.get("elements").unwrap_or((sec.line, "1"));
                let n: u8 = parse_at(l, n, "element count")?;
                let default_ups = sec.get("ups").map(|(_, v)| v.to_string());
                let mut elements = Vec::new();
                for idx in 1..=n {
                    let key = format!("element.{idx}.ups");
                    let ups = match sec.get(&key) {
                        Some((_, v)) => v.to_string(),
                        None => default_ups
                            .clone()
                            .ok_or_else(|| perr(sec.line, format!("[switch {id}] element {idx} has no ups")))?,
                    };
                    elements.push(StackElement { index: idx, ups: UpsId(ups), failed: false });
                }
                let mut ring = Vec::new();
                if let Some((l, v)) = sec.get("ring") {
                    for edge in v.split_whitespace() {
                        let (a, bb) = edge.split_once('-').ok_or_else(|| perr(l, format!("bad ring edge `{edge}`")))?;
                        ring.push((parse_at(l, a, "element")?, parse_at(l, bb, "element")?));
                    }
                }
                let (l, mac) = sec.require("mac")?;
                let (lp, prio) = sec.get("priority").unwrap_or((sec.line, "32768"));
                let (lports, ports) = sec.get("ports").unwrap_or((sec.line, "48"));
                let spare = match sec.get("spare") {
                    Some((ls, v)) => Some(parse_at(ls, v, "element")?),
                    None => None,
                };
                b.switch(Switch {
                    id: SwitchId::new(id),
                    kind,
                    building: sec.get("building").map(|(_, v)| v.to_string()).unwrap_or_default(),
                    priority: parse_at(lp, prio, "priority")?,
                    mac: parse_at(l, mac, "mac")?,
                    elements,
                    ring,
                    ports_per_element: parse_at(lports, ports, "port count")?,
                    spare,
                });
            }
            "link" => {
                let (la, a) = sec.require("a")?;
                let (lb, bb) = sec.require("b")?;
                let class = match sec.get("class").map(|(_, v)| v).unwrap_or("gigabit") {
                    "fast" => CapacityClass::Fast,
                    "gigabit" => CapacityClass::Gigabit,
                    other => return Err(perr(sec.line, format!("unknown link class `{other}`"))),
                };
                let up = match sec.get("state") {
                    Some((_, "up")) | None => true,
                    Some((_, "down")) => false,
                    Some((l, v)) => return Err(perr(l, format!("bad link state `{v}`"))),
                };
                b.link_with_state(parse_port(la, a)?, parse_port(lb, bb)?, class, up);
            }
            "port" => {
                let spec = sec.args.join(" ");
                let port = parse_port(sec.line, &spec)?;
                let cfg = parse_port_config(sec, &profile)?;
                b.port(port, cfg);
            }
            "vlan" => {
                let id: VlanId = parse_at(sec.line, sec.arg(0)?, "vlan")?;
                let purpose = match sec.get("purpose") {
                    Some((l, v)) => parse_at(l, v, "purpose")?,
                    None => VlanPurpose::Production,
                };
                b.vlan_decl(VlanDecl {
                    id,
                    name: sec.get("name").map(|(_, v)| v.to_string()).unwrap_or_else(|| format!("vlan{id}")),
                    purpose,
                    owner: sec.get("owner").map(|(_, v)| v.trim_matches('"').to_string()),
                });
            }
            "room" => {
                let building = sec.get("building").map(|(_, v)| v).unwrap_or("");
                b.room(sec.arg(0)?, building);
            }
            "jack" => {
                let (_, room) = sec.require("room")?;
                let patch = match sec.get("patch") {
                    Some((l, v)) => Some(parse_port(l, v)?),
                    None => None,
                };
                b.jack(sec.arg(0)?, room, patch);
            }
            "host" => {
                let id = sec.arg(0)?;
                let (lm, mac) = sec.require("mac")?;
                let (li, ip) = sec.require("ip")?;
                let jack = sec.get("jack").map(|(_, v)| JackId::new(v));
                let attached = match sec.get("attached") {
                    Some((l, v)) => match v {
                        "yes" | "on" | "true" => jack.clone(),
                        "no" | "off" | "false" => None,
                        other => {
                            if other.is_empty() {
                                return Err(perr(l, "empty attached value"));
                            }
                            Some(JackId::new(other))
                        }
                    },
                    None => jack.clone(),
                };
                let managed = match sec.get("managed").map(|(_, v)| v).unwrap_or("user") {
                    "analyst" => Managed::Analyst,
                    "user" => Managed::User,
                    other => return Err(perr(sec.line, format!("unknown managed value `{other}`"))),
                };
                let roles = match sec.get("roles") {
                    Some((l, v)) => v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|r| parse_at::<HostRole>(l, r, "role"))
                        .collect::<Result<Vec<_>, _>>()?,
                    None => vec![HostRole::Workstation],
                };
                let handshake = match sec.get("handshake") {
                    Some((l, v)) => parse_bool(l, v)?,
                    None => managed == Managed::Analyst,
                };
                let spoofer = match sec.get("spoofer") {
                    Some((l, v)) => parse_bool(l, v)?,
                    None => false,
                };
                let domain = sections
                    .iter()
                    .find(|s| s.kind == "settings")
                    .and_then(|s| s.get("domain"))
                    .map(|(_, v)| v.to_string())
                    .unwrap_or_else(|| "domain".to_string());
                b.host(Host {
                    id: HostId::new(id),
                    fqdn: sec.get("fqdn").map(|(_, v)| v.to_string()).unwrap_or_else(|| format!("{id}.{domain}")),
                    mac: parse_at(lm, mac, "mac")?,
                    ip: parse_at::<Ipv4Addr>(li, ip, "ip")?,
                    jack,
                    attached,
                    managed,
                    rp: sec.get("rp").map(|(_, v)| v.to_string()),
                    roles,
                    handshake,
                    spoofer,
                });
            }
            "router" => {
                let (_, ups) = sec.require("ups")?;
                let (la, attach) = sec.require("attach")?;
                b.router(sec.arg(0)?, ups, parse_port(la, attach)?);
            }
            "pair" => {
                let name = sec.arg(0)?;
                let kind = match sec.get("kind").map(|(_, v)| v).unwrap_or(name) {
                    "internal" => PairKind::Internal,
                    "external" => PairKind::External,
                    other => return Err(perr(sec.line, format!("unknown pair kind `{other}`"))),
                };
                let mut interfaces = BTreeMap::new();
                for (l, k, v) in &sec.entries {
                    let Some(vid) = k.strip_prefix("interface.") else { continue };
                    let vlan: VlanId = parse_at(*l, vid, "vlan")?;
                    let (gw, prefix) = v.split_once('/').ok_or_else(|| perr(*l, "interface needs gateway/prefix"))?;
                    let gateway: Ipv4Addr = parse_at(*l, gw, "gateway")?;
                    let prefix: u8 = parse_at(*l, prefix, "prefix")?;
                    let subnet = Cidr::new(gateway, prefix).map_err(|e| perr(*l, e.to_string()))?;
                    interfaces.insert(vlan, VlanInterface { gateway, subnet });
                }
                let sync_interval = match sec.get("sync_interval") {
                    Some((l, v)) => parse_at(l, v, "duration")?,
                    None => SimTime::from_secs(10),
                };
                let (_, p) = sec.require("primary")?;
                let (_, s) = sec.require("secondary")?;
                b.pair(RouterPairDecl {
                    name: name.to_string(),
                    kind,
                    primary: RouterId::new(p),
                    secondary: RouterId::new(s),
                    interfaces,
                    sync_interval,
                });
            }
            other => return Err(perr(sec.line, format!("unknown section `[{other}]`"))),
        }
    }
    b.build()
}

impl std::str::FromStr for ViolationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shutdown" => Ok(ViolationMode::Shutdown),
            "restrict" => Ok(ViolationMode::Restrict),
            "protect" => Ok(ViolationMode::Protect),
            _ => Err(format!("unknown violation mode `{s}`")),
        }
    }
}
