//! Synthetic campuses at configurable scale, emitted as topology config
//! text so they go through the same loader as hand-written files.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const UPS_A: [u8; 4] = [1, 2, 4, 6];
const UPS_B: [u8; 4] = [3, 5, 7, 8];
pub const HOST_PORTS: u16 = 44;
pub const SERVER_VLAN: u16 = 30;
pub const FIRST_GHOST_VLAN: u16 = 3001;
const FIRST_EXTRA_VLAN: u16 = 400;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampusParams {
    /// Managed desktops spread over access switches, 44 per switch.
    pub hosts: usize,
    pub ghost_servers: u16,
    /// Total VLANs declared, padded with unused production VLANs.
    pub vlans: u16,
    /// Put each desktop port in a random declared production VLAN
    /// instead of its building VLAN.
    pub scatter_vlans: bool,
    pub seed: u64,
}

impl Default for CampusParams {
    fn default() -> Self {
        CampusParams { hosts: 1100, ghost_servers: 10, vlans: 200, scatter_vlans: false, seed: 1 }
    }
}

impl CampusParams {
    /// `key=value` words, e.g. `hosts=1100 ghost-servers=10 vlans=200`.
    pub fn parse(words: &[&str]) -> Result<CampusParams, String> {
        let mut p = CampusParams::default();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| format!("expected key=value, got `{w}`"))?;
            let bad = |_: std::num::ParseIntError| format!("bad value for {k}: `{v}`");
            match k {
                "hosts" => p.hosts = v.parse().map_err(bad)?,
                "ghost-servers" => p.ghost_servers = v.parse().map_err(bad)?,
                "vlans" => p.vlans = v.parse().map_err(bad)?,
                "scatter" => p.scatter_vlans = v.parse().map_err(|_| format!("bad value for {k}: `{v}`"))?,
                "seed" => p.seed = v.parse().map_err(bad)?,
                _ => return Err(format!("unknown campus parameter `{k}`")),
            }
        }
        Ok(p)
    }

    pub fn access_pairs(&self) -> usize {
        self.hosts.div_ceil(2 * HOST_PORTS as usize).max(1)
    }
}

pub fn desktop_name(pair: usize, side: char, port: u16) -> String {
    format!("pc{pair:02}{side}{port:02}")
}

pub fn ghost_server_name(i: u16) -> String {
    format!("ghost{i:02}")
}

pub fn access_switch(pair: usize, side: char) -> String {
    format!("B{pair:02}{side}")
}

/// Production VLAN of a building.
pub fn building_vlan(pair: usize) -> u16 {
    100 + pair as u16
}

pub fn campus_text(p: &CampusParams) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let pairs = p.access_pairs();
    let mut s = String::new();
    let w = &mut s;
    writeln!(w, "[settings]\nlink_delay = 5us\ndomain = campus\n\n[ups upsA]\n[ups upsB]\n").unwrap();

    let mut production: Vec<u16> = (0..pairs).map(building_vlan).collect();
    production.push(SERVER_VLAN);
    let ghosts: Vec<u16> = (0..p.ghost_servers).map(|i| FIRST_GHOST_VLAN + i).collect();
    let declared = production.len() + ghosts.len() + 1;
    let mut extra = FIRST_EXTRA_VLAN;
    while production.len() + ghosts.len() + 1 < (p.vlans as usize).max(declared) {
        production.push(extra);
        extra += 1;
    }
    writeln!(w, "[vlan 1]\nname = parking").unwrap();
    for v in &production {
        writeln!(w, "[vlan {v}]\nname = prod{v}").unwrap();
    }
    for v in &ghosts {
        writeln!(w, "[vlan {v}]\nname = ghost{v}\npurpose = ghost\nowner = desktop").unwrap();
    }
    writeln!(w, "\n[profile]\nmode = access\nvlan = 1\nsecurity = on\nmax_macs = 1\nviolation = restrict\n").unwrap();

    writeln!(w, "[switch Core]\nkind = core-stack\nbuilding = core\npriority = 4096\nmac = 00:00:0c:00:00:01").unwrap();
    writeln!(w, "elements = 9\nports = 48\nring = 1-2 2-4 4-6 6-8 8-9 9-7 1-3 3-5 5-7\nspare = 9").unwrap();
    for e in UPS_A {
        writeln!(w, "element.{e}.ups = upsA").unwrap();
    }
    for e in UPS_B.iter().chain(&[9]) {
        writeln!(w, "element.{e}.ups = upsB").unwrap();
    }
    writeln!(w).unwrap();

    let mut mac_n = 0x100u32;
    let mut switch = |w: &mut String, name: &str, ups: &str, building: &str| {
        mac_n += 1;
        writeln!(w, "[switch {name}]\nbuilding = {building}\nups = {ups}\nmac = 00:00:0c:00:{:02x}:{:02x}", mac_n >> 8, mac_n & 0xff)
            .unwrap();
    };
    // Building pairs plus one server pair, each a triangle onto the core.
    let buildings: Vec<String> = (0..pairs).map(|i| format!("bldg{i:02}")).chain(["servers".to_string()]).collect();
    for (i, b) in buildings.iter().enumerate() {
        let (sa, sb) = if i < pairs { (access_switch(i, 'a'), access_switch(i, 'b')) } else { ("Sa".into(), "Sb".into()) };
        switch(w, &sa, "upsA", b);
        switch(w, &sb, "upsB", b);
        let core_port = 10 + (i / UPS_A.len()) as u16;
        let (ea, eb) = (UPS_A[i % UPS_A.len()], UPS_B[i % UPS_B.len()]);
        writeln!(w, "[link]\na = {sa}:1/0/48\nb = Core:{ea}/0/{core_port}").unwrap();
        writeln!(w, "[link]\na = {sb}:1/0/48\nb = Core:{eb}/0/{core_port}").unwrap();
        writeln!(w, "[link]\na = {sa}:1/0/47\nb = {sb}:1/0/47\nclass = fast\n").unwrap();
    }

    let mut host_n = 0u64;
    let mut host = |w: &mut String, name: &str, sw: &str, port: u16, vlan: u16, ip: String, extra: &str, port_extra: &str| {
        host_n += 1;
        let jack = format!("J-{sw}-{port}");
        let room = format!("R-{sw}");
        let mac = format!(
            "02:00:{:02x}:{:02x}:{:02x}:{:02x}",
            (host_n >> 24) & 0xff,
            (host_n >> 16) & 0xff,
            (host_n >> 8) & 0xff,
            host_n & 0xff
        );
        writeln!(w, "[jack {jack}]\nroom = {room}\npatch = {sw}:1/0/{port}").unwrap();
        writeln!(w, "[port {sw}:1/0/{port}]\nvlan = {vlan}\n{port_extra}").unwrap();
        writeln!(w, "[host {name}]\nmac = {mac}\nip = {ip}\njack = {jack}\n{extra}").unwrap();
    };
    let mut rooms = Vec::new();
    let mut placed = 0;
    'outer: for i in 0..pairs {
        for side in ['a', 'b'] {
            let sw = access_switch(i, side);
            rooms.push((format!("R-{sw}"), buildings[i].clone()));
            for port in 1..=HOST_PORTS {
                if placed == p.hosts {
                    break 'outer;
                }
                let vlan = if p.scatter_vlans {
                    production[rng.random_range(0..production.len())]
                } else {
                    building_vlan(i)
                };
                let ip = format!("10.{}.{}.{}", 100 + i, if side == 'a' { 1 } else { 2 }, port + 10);
                host(w, &desktop_name(i, side, port), &sw, port, vlan, ip, "managed = analyst", "");
                placed += 1;
            }
        }
    }
    rooms.push(("R-Sa".into(), "servers".into()));
    for g in 0..p.ghost_servers {
        let ip = format!("10.30.0.{}", 20 + g);
        host(w, &ghost_server_name(g), "Sa", g + 1, SERVER_VLAN, ip, "roles = server, ghost-server", "security = off");
    }
    for (r, b) in rooms {
        writeln!(w, "[room {r}]\nbuilding = {b}").unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::load_topology;

    #[test]
    fn default_campus_loads_at_scale() {
        let t = load_topology(&campus_text(&CampusParams::default())).unwrap();
        assert_eq!(t.hosts.values().filter(|h| h.managed == crate::topology::Managed::Analyst).count(), 1100);
        assert_eq!(t.vlans.len(), 200);
        assert_eq!(t.hosts.values().filter(|h| h.roles.len() > 1).count(), 10);
        let srv = t.port_configs.get(&"Sa:1/0/1".parse().unwrap()).unwrap();
        assert!(!srv.security);
        assert_eq!(srv.mode.access_vlan(), crate::addr::VlanId::new(SERVER_VLAN).ok());
    }

    #[test]
    fn params_parse_from_words() {
        let p = CampusParams::parse(&["hosts=40", "ghost-servers=2", "scatter=true"]).unwrap();
        assert_eq!((p.hosts, p.ghost_servers, p.scatter_vlans), (40, 2, true));
        assert!(CampusParams::parse(&["size=3"]).is_err());
    }
}
