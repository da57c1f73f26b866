//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::net::Ipv4Addr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use campusnet::addr::VlanId;
use campusnet::campus::generate::{campus_text, CampusParams};
use campusnet::campus::{default_policy, demo_topology, demo_world, CampusEvent, Confidence, PolicySet, World, WorldConfig};
use campusnet::control::scenario::{run_file, RunOptions};
use campusnet::control::shell::Shell;
use campusnet::control::{Actor, Plane, Role};
use campusnet::fwengine::{compile, ConnState, Firewall, Packet, Proto, RejectWith, Verdict};
use campusnet::inventory::{InvError, Owner};
use campusnet::l2switch::ViolationMode;
use campusnet::routerha::HaEvent;
use campusnet::simcore::SimTime;
use campusnet::topology::{load_topology, Attachment, Fault, HostId, JackId, LinkId, PairKind, PortRef, SwitchId, SwitchKind, UpsId};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn sw(s: &str) -> SwitchId {
    SwitchId::new(s)
}

fn host(s: &str) -> HostId {
    HostId::new(s)
}

fn port(s: &str) -> PortRef {
    s.parse().unwrap()
}

fn demo() -> World {
    let mut w = demo_world(WorldConfig::fast()).unwrap();
    w.converge().unwrap();
    w.run_for(SimTime::from_secs(2));
    w
}

fn generated(p: &CampusParams) -> World {
    let topo = load_topology(&campus_text(p)).unwrap();
    let mut w = World::new(topo, default_policy(), WorldConfig::fast()).unwrap();
    w.converge().unwrap();
    w.run_for(SimTime::from_secs(2));
    w
}

/// Union-find over switch names.
struct Dsu(BTreeMap<SwitchId, SwitchId>);

impl Dsu {
    fn find(&mut self, s: &SwitchId) -> SwitchId {
        let p = self.0.get(s).cloned().unwrap_or_else(|| s.clone());
        if &p == s {
            return p;
        }
        let r = self.find(&p);
        self.0.insert(s.clone(), r.clone());
        r
    }

    fn union(&mut self, a: &SwitchId, b: &SwitchId) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0.insert(ra, rb);
        true
    }
}

/// Breadth-first reachability over the links both of whose ends forward.
fn components(w: &World, links: &[LinkId]) -> BTreeMap<SwitchId, usize> {
    let mut adj: BTreeMap<SwitchId, Vec<SwitchId>> = BTreeMap::new();
    for id in links {
        let l = &w.topo.links[id];
        adj.entry(l.a.switch.clone()).or_default().push(l.b.switch.clone());
        adj.entry(l.b.switch.clone()).or_default().push(l.a.switch.clone());
    }
    let mut comp = BTreeMap::new();
    for (i, s) in w.topo.switches.keys().enumerate() {
        if comp.contains_key(s) {
            continue;
        }
        let mut q = VecDeque::from([s.clone()]);
        while let Some(x) = q.pop_front() {
            if comp.insert(x.clone(), i).is_none() {
                q.extend(adj.get(&x).into_iter().flatten().cloned());
            }
        }
    }
    comp
}

fn live_switches(w: &World) -> Vec<SwitchId> {
    w.topo.switches.keys().filter(|s| w.switch_alive(s)).cloned().collect()
}

fn all_alive_connected(w: &World) -> bool {
    let comp = components(w, &w.forwarding_links());
    let alive = live_switches(w);
    alive.windows(2).all(|p| comp[&p[0]] == comp[&p[1]])
}

// ---- 1 ----

fn random_multigraph(rng: &mut ChaCha8Rng) -> (String, usize, usize) {
    let n = rng.random_range(2..=12usize);
    let max_extra = 24 - (n - 1);
    let m = n - 1 + rng.random_range(0..=max_extra);
    let mut s = String::from("[settings]\nlink_delay = 5us\n\n[ups U]\n");
    for i in 0..n {
        let prio = [4096, 8192, 32768][rng.random_range(0..3)];
        writeln!(s, "[switch S{i}]\nups = U\nmac = 00:00:0c:00:00:{:02x}\npriority = {prio}", i + 1).unwrap();
    }
    let mut next_port = vec![1u16; n];
    let mut link = |s: &mut String, a: usize, b: usize| {
        writeln!(s, "[link]\na = S{a}:1/0/{}\nb = S{b}:1/0/{}", next_port[a], next_port[b]).unwrap();
        next_port[a] += 1;
        next_port[b] += 1;
    };
    // Random spanning tree, then extra edges (parallels allowed).
    for i in 1..n {
        let j = rng.random_range(0..i);
        link(&mut s, i, j);
    }
    for _ in 0..(m - (n - 1)) {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        link(&mut s, a, b);
    }
    (s, n, m)
}

fn c1_stp_random_graphs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5770);
    let started = Instant::now();
    let (mut max_n, mut max_m) = (0, 0);
    for g in 0..200 {
        let (text, n, m) = random_multigraph(&mut rng);
        max_n = max_n.max(n);
        max_m = max_m.max(m);
        let topo = load_topology(&text).map_err(|e| format!("graph {g}: {e}"))?;
        let mut w = World::new(topo, PolicySet::default(), WorldConfig::fast()).map_err(|e| e.to_string())?;
        w.converge().map_err(|e| format!("graph {g}: {e}"))?;
        let fwd = w.forwarding_links();
        check!(fwd.len() == n - 1, "graph {g}: {} forwarding edges for {n} switches", fwd.len());
        let mut dsu = Dsu(BTreeMap::new());
        for id in &fwd {
            let l = &w.topo.links[id];
            check!(dsu.union(&l.a.switch, &l.b.switch), "graph {g}: forwarding cycle through link {id:?}");
        }
        let roots: BTreeSet<SwitchId> = w.topo.switches.keys().map(|s| dsu.find(s)).collect();
        check!(roots.len() == 1, "graph {g}: forwarding edges leave {} components", roots.len());
    }
    let secs = started.elapsed().as_secs_f64();
    check!(secs < 10.0, "took {secs:.2}s");
    Ok(format!("200 graphs up to {max_n} switches / {max_m} links, {secs:.2}s"))
}

// ---- 2 ----

fn time_to_reach(w: &mut World, fault: Fault) -> Result<SimTime, String> {
    let bound = w.stp.timers.reconvergence_bound();
    let t0 = w.now();
    w.inject_fault(&fault).map_err(|e| e.to_string())?;
    let step = SimTime::from_millis(100);
    loop {
        w.run_for(step);
        if all_alive_connected(w) && w.now() > t0 {
            break;
        }
        if w.now() - t0 > bound.mul(2) {
            return Err(format!("{fault:?}: not reachable within {}", bound.mul(2)));
        }
    }
    let took = w.now() - t0;
    w.converge().map_err(|e| e.to_string())?;
    if !all_alive_connected(w) {
        return Err(format!("{fault:?}: reachability lost again after settling"));
    }
    Ok(took)
}

fn c2_triangle() -> Outcome {
    let w = demo();
    let direct = w.topo.find_link(&sw("A11"), &sw("A12"))[0].id;
    let mut blocked = w.blocked_links();
    blocked.retain(|id| {
        let l = &w.topo.links[id];
        [&l.a.switch, &l.b.switch].iter().all(|s| ["A11", "A12", "BigSwitch1"].contains(&s.as_str()))
    });
    check!(blocked == vec![direct], "east triangle blocks {blocked:?}, expected only {direct:?}");
    let up = |a: &str| w.topo.find_link(&sw(a), &sw("BigSwitch1"))[0].id;
    let faults = [
        Fault::LinkDown(up("A11")),
        Fault::LinkDown(up("A12")),
        Fault::StackElementFail(sw("BigSwitch1"), 1),
        Fault::StackElementFail(sw("BigSwitch1"), 3),
    ];
    let bound = w.stp.timers.reconvergence_bound();
    let mut times = Vec::new();
    for f in faults {
        let mut w = w.clone();
        let t = time_to_reach(&mut w, f.clone())?;
        check!(w.forwarding_links().contains(&direct), "{f:?}: direct link still blocked");
        times.push(t.to_string());
    }
    Ok(format!("only A11-A12 blocked; recovered in {} (bound {})", times.join(", "), bound.mul(2)))
}

// ---- 3 ----

fn access_pairs_reachable(w: &World) -> Result<usize, String> {
    let comp = components(w, &w.forwarding_links());
    let access: Vec<&SwitchId> = w
        .topo
        .switches
        .values()
        .filter(|s| s.kind == SwitchKind::Access && w.switch_alive(&s.id))
        .map(|s| &s.id)
        .collect();
    for a in &access {
        for b in &access {
            check!(comp[*a] == comp[*b], "{a} cannot reach {b}");
        }
    }
    Ok(access.len())
}

fn c3_ups() -> Outcome {
    let mut out = Vec::new();
    let small = CampusParams { hosts: 176, ghost_servers: 1, vlans: 8, ..CampusParams::default() };
    for (label, base) in [("demo", demo()), ("generated", generated(&small))] {
        for ups in ["upsA", "upsB"] {
            let mut w = base.clone();
            w.inject_fault(&Fault::UpsFail(UpsId::new(ups))).map_err(|e| e.to_string())?;
            w.converge().map_err(|e| e.to_string())?;
            check!(w.switch_alive(&sw(if label == "demo" { "BigSwitch1" } else { "Core" })), "{label}/{ups}: core died");
            let n = access_pairs_reachable(&w).map_err(|e| format!("{label}/{ups}: {e}"))?;
            out.push(format!("{label}/{ups}: {n} survivors"));
        }
    }
    Ok(out.join(", "))
}

// ---- 4 ----

fn c4_vlan_fuzz() -> Outcome {
    let p = CampusParams { scatter_vlans: true, seed: 4, ..CampusParams::default() };
    let mut w = generated(&p);
    check!(w.topo.vlans.len() == 200, "{} VLANs declared", w.topo.vlans.len());
    let jacks: Vec<PortRef> =
        w.topo.attachments().iter().filter(|(_, a)| matches!(a, Attachment::Jack(_))).map(|(p, _)| p.clone()).collect();
    let senders: Vec<HostId> = w.topo.hosts.keys().filter(|h| w.topo.host_port(h).is_some()).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    w.trace_deliveries(true);
    let (mut delivered, mut vlans_hit) = (0usize, BTreeSet::new());
    for i in 0..1000 {
        let h = &senders[rng.random_range(0..senders.len())];
        let ingress = w.topo.host_port(h).unwrap().clone();
        let vlan = w.fabric.port(&ingress).and_then(|sp| sp.mode.access_vlan()).unwrap();
        vlans_hit.insert(vlan);
        let expected: BTreeSet<PortRef> = jacks
            .iter()
            .filter(|p| **p != ingress && w.port_live(p))
            .filter(|p| w.fabric.port(p).and_then(|sp| sp.mode.access_vlan()) == Some(vlan))
            .cloned()
            .collect();
        let id = w.broadcast(h, 64).map_err(|e| e.to_string())?;
        w.run_for(SimTime::from_millis(5));
        let got: Vec<PortRef> = w.take_deliveries().into_iter().filter(|(f, _)| *f == id).map(|(_, p)| p).collect();
        let got_set: BTreeSet<PortRef> = got.iter().cloned().collect();
        check!(got.len() == got_set.len(), "broadcast {i}: duplicate delivery");
        let cross: Vec<&PortRef> =
            got.iter().filter(|p| w.fabric.port(p).and_then(|sp| sp.mode.access_vlan()) != Some(vlan)).collect();
        check!(cross.is_empty(), "broadcast {i} in vlan {vlan}: cross-VLAN delivery to {cross:?}");
        check!(got_set == expected, "broadcast {i} from {h}: got {} ports, expected {}", got_set.len(), expected.len());
        delivered += got.len();
    }
    Ok(format!("1000 broadcasts over {} VLANs, {delivered} deliveries, 0 cross-VLAN", vlans_hit.len()))
}

// ---- 5 ----

fn port_range(sw: &str, a: u16, b: u16) -> Vec<PortRef> {
    (a..=b).map(|n| PortRef::new(sw, 1, n)).collect()
}

fn c5_ghost() -> Outcome {
    let started = Instant::now();
    let mut plane = Plane::new(generated(&CampusParams::default()));
    let managed = plane.world.topo.hosts.values().filter(|h| h.handshake).count();
    check!(managed >= 1100, "{managed} managed hosts");
    let before: BTreeMap<PortRef, Option<VlanId>> =
        plane.world.fabric.ports().map(|sp| (sp.port.clone(), sp.mode.access_vlan())).collect();

    let mut members: Vec<Vec<PortRef>> = Vec::new();
    let mut big = Vec::new();
    for pair in 0..3 {
        for side in ['a', 'b'] {
            big.extend(port_range(&format!("B{pair:02}{side}"), 1, 44));
        }
    }
    big.extend(port_range("B03a", 1, 36));
    members.push(big);
    for k in 2..=10u16 {
        members.push(port_range(&format!("B{:02}a", k + 2), 1, 30));
    }
    check!(members[0].len() == 300, "big session has {}", members[0].len());

    let image: u64 = 10_000_000_000;
    let actor = Actor::new("imaging", Role::Desktop);
    {
        let mut sh = Shell::new(&mut plane, actor.clone());
        for (i, ms) in members.iter().enumerate() {
            let words: Vec<String> = ms.iter().map(|p| p.to_string()).collect();
            let line = format!("ghost start imaging {} ghost{:02} {}", 3001 + i, i, words.join(" "));
            sh.exec_line(&line).map_err(|e| format!("session {}: {e}", i + 1))?;
        }
        for id in 1..=10 {
            sh.exec_line(&format!("ghost run {id} 10G")).map_err(|e| e.to_string())?;
        }
        sh.exec_line("run 5s").map_err(|e| e.to_string())?;
    }
    let w = &plane.world;
    let all_members: BTreeSet<&PortRef> = members.iter().flatten().collect();
    for sp in w.fabric.ports() {
        if all_members.contains(&sp.port) {
            check!(sp.ghost_bytes == image, "member {} got {} bytes", sp.port, sp.ghost_bytes);
        } else {
            check!(sp.ghost_bytes == 0, "non-member {} got {} ghost bytes", sp.port, sp.ghost_bytes);
        }
    }
    for (h, rx) in &w.host_rx {
        let on_member = w.topo.host_port(h).is_some_and(|p| all_members.contains(p));
        check!(rx.ghost_bytes == if on_member { image } else { 0 }, "host {h} got {} ghost bytes", rx.ghost_bytes);
    }
    let mut sh = Shell::new(&mut plane, actor);
    for id in 1..=10 {
        sh.exec_line(&format!("ghost stop {id}")).map_err(|e| e.to_string())?;
    }
    let after: BTreeMap<PortRef, Option<VlanId>> =
        plane.world.fabric.ports().map(|sp| (sp.port.clone(), sp.mode.access_vlan())).collect();
    check!(after == before, "VLAN map differs after teardown");
    let secs = started.elapsed().as_secs_f64();
    check!(secs < 60.0, "took {secs:.1}s");
    let cfg = &plane.world.ghosts.cfg;
    Ok(format!("10 sessions, {} members, 10 GB each in <= {} chunks, {secs:.1}s", all_members.len(), cfg.max_chunks))
}

// ---- 6 ----

/// Generic cell rate algorithm: an independent formulation of a full
/// token bucket of `burst` tokens refilled at `avg` per second.
struct Gcra {
    t: u64,
    tau: u64,
    tat: Option<u64>,
}

impl Gcra {
    fn new(avg: u64, burst: u64) -> Self {
        let t = 1_000_000_000 / avg;
        Gcra { t, tau: (burst - 1) * t, tat: None }
    }

    fn conforms(&mut self, now: u64) -> bool {
        let tat = self.tat.unwrap_or(now);
        if now + self.tau >= tat {
            self.tat = Some(tat.max(now) + self.t);
            true
        } else {
            false
        }
    }
}

fn limiter_matches(fw: &mut Firewall, pkt: Packet, avg: u64, burst: u64, seed: u64) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle = Gcra::new(avg, burst);
    let period = 1_000_000_000 / avg;
    let mut now = 5_000_000_000u64;
    let (mut acc, mut n) = (0, 0);
    for i in 0..2000 {
        now += match rng.random_range(0..4) {
            0 => 0,
            1 => rng.random_range(0..period / 2),
            2 => rng.random_range(0..period * 2),
            _ => period,
        };
        let got = fw.evaluate_fast(pkt, SimTime::from_nanos(now)) == Verdict::Accept;
        let want = oracle.conforms(now);
        check!(got == want, "packet {i} at {now}ns: firewall {got}, oracle {want}");
        acc += usize::from(got);
        n += 1;
    }
    Ok((acc, n))
}

fn c6_firewall() -> Outcome {
    let topo = demo_topology();
    let mut policy = default_policy();
    policy.learn_hosts(&topo);
    let ip = |h: &str| topo.hosts[&host(h)].ip;
    let web: Ipv4Addr = "198.51.100.7".parse().unwrap();
    let mut internal = Firewall::new(compile(&policy.input_for(PairKind::Internal)).map_err(|e| e.to_string())?).unwrap();
    let mut external = Firewall::new(compile(&policy.input_for(PairKind::External)).map_err(|e| e.to_string())?).unwrap();
    let at = SimTime::from_secs(1);
    let sick = ip("sickhost");
    let golden: [(&str, bool, Packet, Verdict, &str); 5] = [
        ("web", true, Packet::tcp(sick, web, 80), Verdict::Reject(RejectWith::TcpReset), "qrntine"),
        ("antivirus:1234", false, Packet::tcp(sick, "10.30.0.5".parse().unwrap(), 1234), Verdict::Accept, "qrntine"),
        ("local /24", false, Packet::tcp(sick, "10.20.1.77".parse().unwrap(), 445), Verdict::Accept, "qrntine"),
        ("apple patch site", true, Packet::tcp(sick, "17.253.1.1".parse().unwrap(), 80), Verdict::Accept, "patchSites"),
        ("dns", false, Packet { proto: Proto::Udp, ..Packet::tcp(sick, ip("dns1"), 53) }, Verdict::Accept, "qrntine"),
    ];
    for (label, ext, pkt, want, chain) in golden {
        let fw = if ext { &mut external } else { &mut internal };
        let ev = fw.evaluate(pkt, at);
        check!(ev.verdict == want, "sickhost -> {label}: {} (trace {:?})", ev.verdict, ev.trace);
        let hit = ev.trace.iter().any(|s| s.rule.is_some() && s.chain == chain);
        check!(hit, "sickhost -> {label}: no rule matched in {chain}: {:?}", ev.trace);
    }
    // Healthy hosts are not marked.
    let ok = external.evaluate(Packet::tcp(ip("machine42"), web, 80), at);
    check!(ok.verdict == Verdict::Accept && ok.packet.mark == 0, "machine42 -> web: {}", ok.verdict);

    let outsider: Ipv4Addr = "93.184.216.34".parse().unwrap();
    let inbound = Packet { state: ConnState::Established, ..Packet::tcp(outsider, ip("internal.host1"), 443) };
    let (a1, n1) = limiter_matches(&mut external.clone(), inbound, 20, 20, 61)?;
    let video: Ipv4Addr = "203.0.113.9".parse().unwrap();
    let outside = Packet { state: ConnState::Established, ..Packet::tcp(video, ip("machine42"), 50000) };
    let (a2, n2) = limiter_matches(&mut external.clone(), outside, 100, 100, 62)?;
    Ok(format!("5 golden traces; choke 20/20 {a1}/{n1} and outside 100/100 {a2}/{n2} accepted, oracle exact"))
}

// ---- 7 ----

fn big_policy() -> PolicySet {
    let mut p = default_policy();
    let mut q = String::new();
    for i in 0..420u32 {
        let addr = Ipv4Addr::from(0x0A50_0000 + i * 3 + 1);
        writeln!(q, "# admnusr 2024-01-01 {addr} 7 OS[Windows 5.1] MS08-067 VULNERABLE\n{addr}").unwrap();
    }
    p.quarantine = campusnet::fwengine::parse_quarantine(&q).unwrap();
    let mut sites = String::new();
    for i in 0..300u32 {
        writeln!(sites, "{}/24 vendor{i}", Ipv4Addr::from(0x2C00_0000 + (i << 8))).unwrap();
    }
    p.patch_sites.extend(campusnet::fwengine::parse_patch_sites(&sites).unwrap());
    let mut chokes = String::new();
    for i in 0..20u32 {
        writeln!(chokes, "{} 20 20", Ipv4Addr::from(0x0A14_0200 + i)).unwrap();
    }
    p.chokes.extend(campusnet::fwengine::parse_chokes(&chokes).unwrap());
    p
}

fn c7_compile_speed() -> Outcome {
    let topo = demo_topology();
    let mut policy = big_policy();
    policy.learn_hosts(&topo);
    let mut int_fw = Firewall::default();
    let mut ext_fw = Firewall::default();
    let started = Instant::now();
    let int_rs = compile(&policy.input_for(PairKind::Internal)).map_err(|e| e.to_string())?;
    let ext_rs = compile(&policy.input_for(PairKind::External)).map_err(|e| e.to_string())?;
    let (ni, ne) = (int_rs.rule_count(), ext_rs.rule_count());
    int_fw.swap(int_rs).map_err(|e| e.to_string())?;
    ext_fw.swap(ext_rs).map_err(|e| e.to_string())?;
    let took = started.elapsed();
    check!(ni >= 730 && ne >= 450, "only {ni} internal / {ne} external rules");
    check!(took.as_secs_f64() < 1.0, "compile and swap took {took:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let packets: Vec<Packet> = (0..200_000)
        .map(|_| {
            let src = Ipv4Addr::from(0x0A50_0000 + rng.random_range(0..2048u32));
            let dst = Ipv4Addr::from(rng.random::<u32>());
            Packet { sport: rng.random(), ..Packet::tcp(src, dst, [80, 443, 25, 1234][rng.random_range(0..4)]) }
        })
        .collect();
    let t = Instant::now();
    let mut accepted = 0usize;
    for (i, p) in packets.iter().enumerate() {
        accepted += usize::from(ext_fw.evaluate_fast(*p, SimTime::from_micros(i as u64)) == Verdict::Accept);
    }
    let pps = packets.len() as f64 / t.elapsed().as_secs_f64();
    let soft = if pps >= 1e5 { "met" } else { "missed" };
    Ok(format!(
        "{ni} internal + {ne} external rules compiled and swapped in {:.1} ms; {:.0} packets/s ({soft} 1e5 target, {accepted} accepted)",
        took.as_secs_f64() * 1e3,
        pps
    ))
}

// ---- 8 ----

fn synced_count(w: &World, pair: &str) -> usize {
    w.log().iter().filter(|e| matches!(&e.payload, CampusEvent::Ha(HaEvent::Synced { pair: p, .. }) if p == pair)).count()
}

fn c8_conntrack_failover() -> Outcome {
    let mut w = demo();
    let (pair, decl) = w.topo.pairs.iter().find(|(_, d)| d.kind == PairKind::External).map(|(n, d)| (n.clone(), d.clone())).unwrap();
    let interval = decl.sync_interval;
    let web: Ipv4Addr = "198.51.100.7".parse().unwrap();
    let open = |w: &mut World, sport: u16| w.send_packet(&host("machine42"), web, Proto::Tcp, sport, 80, 100);

    let mut old = Vec::new();
    for s in 0..20 {
        let r = open(&mut w, 41000 + s).map_err(|e| e.to_string())?;
        check!(r.verdict() == Verdict::Accept, "old session {s} refused");
        old.push((41000 + s, r.packet));
    }
    let opened_old = w.now();
    // Wait until a sync has run at least one full interval after opening.
    while synced_count(&w, &pair) == 0 || last_sync(&w, &pair) < opened_old + interval {
        w.run_for(SimTime::from_millis(100));
    }
    let synced_at = last_sync(&w, &pair);
    w.run_for(SimTime::from_secs(1));
    let mut young = Vec::new();
    for s in 0..20 {
        let r = open(&mut w, 42000 + s).map_err(|e| e.to_string())?;
        young.push((42000 + s, r.packet));
    }
    w.run_for(SimTime::from_secs(1));
    let fail_at = w.now();
    check!(fail_at - synced_at < interval, "young sessions are not younger than the sync interval");
    w.inject_fault(&Fault::RouterFail(decl.primary.clone())).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(5));
    let failed_over = w
        .log()
        .iter()
        .any(|e| matches!(&e.payload, CampusEvent::Ha(HaEvent::Failover { pair: p, .. }) if *p == pair));
    check!(failed_over, "no failover recorded");

    let mut resets = 0;
    for (sport, out) in &old {
        let cont = open(&mut w, *sport).map_err(|e| e.to_string())?;
        check!(cont.tracked && cont.verdict() == Verdict::Accept, "old session {sport}: tracked={} {}", cont.tracked, cont.verdict());
        let reply = Packet { src: out.dst, dst: out.src, sport: out.dport, dport: out.sport, ..*out };
        let back = w.send_inbound(reply, 100).map_err(|e| e.to_string())?;
        resets += usize::from(matches!(back.verdict(), Verdict::Reject(_)));
        check!(back.verdict() == Verdict::Accept && back.tracked, "reply to old session {sport}: {}", back.verdict());
    }
    check!(resets == 0, "{resets} resets");
    let mut new_again = 0;
    for (sport, _) in &young {
        let cont = open(&mut w, *sport).map_err(|e| e.to_string())?;
        new_again += usize::from(!cont.tracked);
    }
    check!(new_again == young.len(), "only {new_again} of {} young sessions came back as NEW", young.len());
    Ok(format!("20 synced sessions survived with 0 resets; 20 unsynced sessions are NEW on the standby (sync every {interval})"))
}

fn last_sync(w: &World, pair: &str) -> SimTime {
    w.log()
        .iter()
        .rev()
        .find(|e| matches!(&e.payload, CampusEvent::Ha(HaEvent::Synced { pair: p, .. }) if p == pair))
        .map_or(SimTime::ZERO, |e| e.at)
}

// ---- 9 ----

fn violations(w: &World, p: &PortRef) -> (usize, usize) {
    let mut all = 0;
    let mut alerted = 0;
    for e in w.log() {
        if let CampusEvent::Violation { port, alerted: a, .. } = &e.payload {
            if port == p {
                all += 1;
                alerted += usize::from(*a);
            }
        }
    }
    (all, alerted)
}

fn rx_total(w: &World, except: &HostId) -> u64 {
    w.host_rx.iter().filter(|(h, _)| *h != except).map(|(_, r)| r.frames).sum()
}

fn offend(w: &mut World, h: &HostId, frames: usize) -> Result<(), String> {
    for _ in 0..frames {
        w.broadcast(h, 64).map_err(|e| e.to_string())?;
        w.run_for(SimTime::from_millis(1));
    }
    w.settle();
    Ok(())
}

fn c9_port_security() -> Outcome {
    let base = demo();
    let visitor = host("visitor");
    check!(base.fabric.port(&port("A11:1/0/40")).unwrap().security.mode == ViolationMode::Protect, "A11 0/40 is not protect");

    // protect
    let mut w = base.clone();
    let p = port("A11:1/0/40");
    w.plug_host(&host("labpc1"), None).map_err(|e| e.to_string())?;
    w.plug_host(&visitor, Some(JackId::new("E210-1"))).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(10));
    let (v0, _) = violations(&w, &p);
    let rx0 = rx_total(&w, &visitor);
    offend(&mut w, &visitor, 100)?;
    let (v1, alerts) = violations(&w, &p);
    check!(v1 - v0 == 100, "protect saw {} offending frames", v1 - v0);
    check!(alerts == 0, "protect raised {alerts} alerts");
    check!(rx_total(&w, &visitor) == rx0, "protect forwarded offending frames");
    check!(w.port_live(&p), "protect port went down");

    // restrict
    let mut w = base.clone();
    let p = port("A11:1/0/10");
    w.plug_host(&host("sickhost"), None).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(1));
    let rx0 = rx_total(&w, &visitor);
    let (v0, a0) = violations(&w, &p);
    w.plug_host(&visitor, Some(JackId::new("E101-1"))).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(10));
    offend(&mut w, &visitor, 10)?;
    let (v1, a1) = violations(&w, &p);
    check!(v1 - v0 >= 10, "restrict saw {} offending frames", v1 - v0);
    check!(a1 - a0 == 1, "restrict raised {} alerts inside one window", a1 - a0);
    w.run_for(SimTime::from_secs(61));
    offend(&mut w, &visitor, 1)?;
    let (_, a2) = violations(&w, &p);
    check!(a2 - a1 == 1, "restrict did not alert again after the window");
    check!(rx_total(&w, &visitor) == rx0, "restrict forwarded offending frames");
    check!(w.port_live(&p), "restrict port went down");

    // shutdown
    let mut w = base.clone();
    let p = port("A12:1/0/12");
    let m43 = host("machine43");
    w.plug_host(&m43, None).map_err(|e| e.to_string())?;
    w.plug_host(&visitor, Some(JackId::new("E103-2"))).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(10));
    check!(!w.port_live(&p) && w.fabric.port(&p).unwrap().security.err_disabled, "shutdown port still up");
    w.plug_host(&visitor, None).map_err(|e| e.to_string())?;
    w.plug_host(&m43, Some(JackId::new("E103-2"))).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(60));
    check!(!w.port_live(&p), "err-disabled port recovered on its own");
    let rx0 = rx_total(&w, &m43);
    offend(&mut w, &m43, 5)?;
    check!(rx_total(&w, &m43) == rx0, "err-disabled port forwarded");
    w.clear_sticky(&p).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(10));
    check!(w.port_live(&p), "port still down after clear");
    let rx1 = rx_total(&w, &m43);
    offend(&mut w, &m43, 5)?;
    check!(rx_total(&w, &m43) > rx1, "cleared port does not forward");
    Ok("shutdown err-disables until cleared; restrict drops with one alert per window; protect 100 drops/0 alerts".into())
}

// ---- 10 ----

fn spoof_alerts(w: &World) -> Vec<Confidence> {
    w.log()
        .iter()
        .filter_map(|e| match &e.payload {
            CampusEvent::Spoof { confidence, .. } => Some(*confidence),
            _ => None,
        })
        .collect()
}

fn replug_clone(w: &mut World) -> Result<(), String> {
    w.plug_host(&host("machine42"), None).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(3));
    w.plug_host(&host("rogue"), Some(JackId::new("E102-1"))).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(200));
    Ok(())
}

fn c10_spoof() -> Outcome {
    let base = demo();
    let mut w = base.clone();
    replug_clone(&mut w)?;
    let plain = spoof_alerts(&w);
    check!(plain == vec![Confidence::High], "plain replug gave {plain:?}");

    let mut w = base.clone();
    let members = [port("A11:1/0/11")];
    w.start_ghost("desktop", VlanId::new(3001).unwrap(), &host("ghostsrv"), &members).map_err(|e| e.to_string())?;
    replug_clone(&mut w)?;
    let ghosted = spoof_alerts(&w);
    check!(ghosted == vec![Confidence::Low], "replug during ghosting gave {ghosted:?}");

    let mut w = base;
    w.plug_host(&host("machine42"), None).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(3));
    w.plug_host(&host("machine42"), Some(JackId::new("E102-1"))).map_err(|e| e.to_string())?;
    w.run_for(SimTime::from_secs(200));
    check!(spoof_alerts(&w).is_empty(), "the genuine machine raised an alert");
    Ok("clone after replug: 1 high; during ghost session: 1 low; genuine replug: 0".into())
}

// ---- 11 ----

fn c11_inventory() -> Outcome {
    let run = run_file(&scenarios_dir().join("port-security.scn"), &RunOptions { seed: 11, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let mut plane = run.plane;
    plane.inventory.sync_from_network(&plane.world.net_state());
    let w = &plane.world;
    let mut n = 0;
    for sp in w.fabric.ports() {
        let row = plane.inventory.ports.get(&sp.port).ok_or(format!("{} missing from inventory", sp.port))?;
        check!(row.vlan == sp.mode.access_vlan().map(|v| v.get()), "{}: vlan {:?}", sp.port, row.vlan);
        check!(row.description == sp.description, "{}: description {:?} vs {:?}", sp.port, row.description, sp.description);
        check!(row.link_up == w.port_live(&sp.port), "{}: link_up {}", sp.port, row.link_up);
        check!(row.err_disabled == sp.security.err_disabled, "{}: err_disabled {}", sp.port, row.err_disabled);
        n += 1;
    }
    check!(plane.inventory.ports.len() == n, "inventory has {} ports, fabric {n}", plane.inventory.ports.len());

    let fqdns: BTreeSet<String> = w.topo.hosts.values().map(|h| h.fqdn.clone()).collect();
    let mut autos = 0;
    for row in plane.inventory.ports.values() {
        if let Some(rest) = row.description.strip_prefix("[Auto] ") {
            check!(fqdns.contains(rest) && rest.contains('.'), "{}: description `{}`", row.port, row.description);
            autos += 1;
        } else {
            check!(!row.description.starts_with("[Auto]"), "{}: malformed `{}`", row.port, row.description);
        }
    }
    check!(autos > 0, "no auto descriptions written");

    let ops = partition_fuzz(&mut plane, 500)?;
    Ok(format!("{n} port rows match live state; {autos} `[Auto] machine.domain` descriptions; {ops}"))
}

type Snapshot = (
    BTreeMap<campusnet::topology::RoomId, campusnet::inventory::RoomRow>,
    BTreeMap<JackId, campusnet::inventory::JackRow>,
    BTreeMap<HostId, campusnet::inventory::RpRow>,
    Vec<String>,
    Vec<Option<String>>,
    BTreeMap<PortRef, (bool, String)>,
);

const COLUMNS: [(&str, &str); 11] = [
    ("port", "mode"),
    ("port", "vlan"),
    ("port", "auto_flag"),
    ("port", "description"),
    ("room", "building"),
    ("jack", "room"),
    ("rp_record", "person"),
    ("rp_record", "contact"),
    ("host", "managed"),
    ("vlan", "name"),
    ("vlan", "owner"),
];

fn partition_fuzz(plane: &mut Plane, n: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let keys = |rel: &str| -> Vec<&'static str> {
        match rel {
            "port" => vec!["A11:1/0/10", "A11:1/0/11", "A12:1/0/40", "A13:1/0/20"],
            "room" => vec!["E101", "E102", "W101"],
            "jack" => vec!["E101-1", "E102-1", "E103-1"],
            "rp_record" | "host" => vec!["machine42", "sickhost", "labpc1"],
            _ => vec!["10", "20", "901"],
        }
    };
    let manual = |plane: &Plane| {
        let inv = &plane.inventory;
        let descs: BTreeMap<PortRef, (bool, String)> =
            inv.ports.values().map(|p| (p.port.clone(), (p.auto_flag, p.description.clone()))).collect();
        let owners: Vec<Option<String>> = inv.vlans.values().map(|v| v.owner.clone()).collect();
        let managed: Vec<String> = inv.hosts.values().map(|h| h.managed.clone()).collect();
        (inv.rooms.clone(), inv.jacks.clone(), inv.rp_records.clone(), managed, owners, descs)
    };
    // Manual descriptions may only change hands through the auto_flag column.
    let same = |a: &Snapshot, b: &Snapshot| {
        a.0 == b.0
            && a.1 == b.1
            && a.2 == b.2
            && a.3 == b.3
            && a.4 == b.4
            && a.5.iter().all(|(p, (fa, da))| *fa || b.5.get(p).is_none_or(|(fb, db)| *fb || da == db))
    };
    let (mut refused, mut applied, mut syncs) = (0, 0, 0);
    for i in 0..n {
        if rng.random_range(0..5) == 0 {
            let before = manual(plane);
            plane.inventory.sync_from_network(&plane.world.net_state());
            check!(same(&before, &manual(plane)), "op {i}: sync changed a manual column");
            syncs += 1;
            continue;
        }
        let (rel, col) = COLUMNS[rng.random_range(0..COLUMNS.len())];
        let ks = keys(rel);
        let key = ks[rng.random_range(0..ks.len())];
        let origin = if rng.random() { Owner::Auto } else { Owner::Manual };
        let v: u32 = rng.random_range(0..100);
        let value = match col {
            "vlan" => ["10", "20", "901"][v as usize % 3].to_string(),
            "auto_flag" => (v % 2 == 0).to_string(),
            "managed" => ["analyst", "user"][v as usize % 2].to_string(),
            "room" => ["E101", "E102", "W101"][v as usize % 3].to_string(),
            "description" if v % 4 == 0 => format!("[Auto] spoofed{v}.domain"),
            _ => format!("value{v}"),
        };
        let owner = plane.inventory.owner_of(rel, col, key).map_err(|e| format!("op {i}: owner_of {rel}.{col}: {e}"))?;
        let before_db = plane.inventory.clone();
        let before = manual(plane);
        let res = plane.inventory.write(origin, rel, key, col, &value);
        if owner != origin {
            check!(matches!(res, Err(InvError::Partition { .. })), "op {i}: {origin:?} wrote {owner:?} column {rel}.{col}: {res:?}");
            check!(plane.inventory == before_db, "op {i}: refused write changed state");
            refused += 1;
        } else {
            check!(!matches!(res, Err(InvError::Partition { .. })), "op {i}: owner write refused: {res:?}");
            applied += usize::from(res.is_ok());
            if origin == Owner::Auto && col != "auto_flag" {
                check!(same(&before, &manual(plane)), "op {i}: auto write to {rel}.{col} changed a manual column");
            }
        }
        for p in plane.inventory.ports.values().filter(|p| p.auto_flag) {
            check!(p.description.is_empty() || p.description.starts_with("[Auto]"), "op {i}: auto port {} has `{}`", p.port, p.description);
        }
        for p in plane.inventory.ports.values().filter(|p| !p.auto_flag) {
            let was_manual = before_db.ports.get(&p.port).is_some_and(|b| !b.auto_flag);
            if was_manual {
                check!(!p.description.starts_with("[Auto]") || before_db.ports[&p.port].description == p.description,
                    "op {i}: manual port {} took an auto description", p.port);
            }
        }
    }
    Ok(format!("500-op partition fuzz: {applied} applied, {refused} refused, {syncs} syncs, 0 violations"))
}

// ---- 12 ----

fn c12_determinism() -> Outcome {
    let mut names = Vec::new();
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    files.sort();
    check!(!files.is_empty(), "no scenarios shipped");
    for f in &files {
        let opts = RunOptions { seed: 1234, ..Default::default() };
        let a = run_file(f, &opts).map_err(|e| format!("{}: {e}", f.display()))?;
        let b = run_file(f, &opts).map_err(|e| format!("{}: {e}", f.display()))?;
        let name = f.file_stem().unwrap().to_string_lossy().to_string();
        check!(a.report.passed(), "{name} failed:\n{}", a.report.render());
        let (la, lb) = (a.event_log(), b.event_log());
        check!(la == lb, "{name}: event logs differ ({} vs {} bytes)", la.len(), lb.len());
        names.push(format!("{name} ({} events)", la.lines().count()));
    }
    Ok(format!("byte-identical replays: {}", names.join(", ")))
}

fn main() {
    let criteria: [(u8, &str, fn() -> Outcome); 12] = [
        (1, "spanning tree on random multigraphs", c1_stp_random_graphs),
        (2, "access triangle", c2_triangle),
        (3, "UPS failure", c3_ups),
        (4, "VLAN broadcast fuzz", c4_vlan_fuzz),
        (5, "ghosting at scale", c5_ghost),
        (6, "firewall golden traces and limiters", c6_firewall),
        (7, "compile and swap speed", c7_compile_speed),
        (8, "conntrack failover", c8_conntrack_failover),
        (9, "port security", c9_port_security),
        (10, "MAC spoof detection", c10_spoof),
        (11, "inventory reconciliation", c11_inventory),
        (12, "replay determinism", c12_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == &n.to_string()) {
            continue;
        }
        let started = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(e) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {e} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

