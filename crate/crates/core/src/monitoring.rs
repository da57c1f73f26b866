//! Observers over the event log: port-violation alerts, MAC spoofing
//! from link-flap signatures, flow aggregation and top-talker reports.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::addr::{Cidr, MacAddr};
use crate::campus::{CampusEvent, Confidence};
use crate::fwengine::{ChokeEntry, PatchSite, Verdict};
use crate::l2switch::{FrameKind, ViolationMode};
use crate::routerha::Side;
use crate::simcore::{Event, SimTime};
use crate::topology::PortRef;

pub const HANDSHAKE_WINDOW: SimTime = SimTime::from_secs(120);
pub const REPORT_WINDOW: SimTime = SimTime::from_secs(24 * 3600);

/// Where a port ends up physically, if anywhere.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub jack: String,
    pub room: String,
    pub building: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwpvioEvent {
    pub at: SimTime,
    pub port: PortRef,
    pub offending_mac: MacAddr,
    pub mode: ViolationMode,
    pub alerted: bool,
    pub location: Option<Location>,
}

impl SwpvioEvent {
    pub fn line(&self) -> String {
        let loc = match &self.location {
            Some(l) => format!("jack={} room={} building={}", l.jack, l.room, l.building),
            None => "location=unknown".into(),
        };
        format!(
            "at={} port={} mac={} mode={} alerted={} {loc}",
            self.at.ticks(),
            self.port,
            self.offending_mac,
            self.mode,
            self.alerted
        )
    }
}

/// Every restrict/shutdown violation in the log, one per counter increment,
/// located through `locate`. Protect-mode drops never appear.
pub fn swpvio_events(
    events: &[Event<CampusEvent>],
    locate: &dyn Fn(&PortRef) -> Option<Location>,
) -> Vec<SwpvioEvent> {
    events
        .iter()
        .filter_map(|e| match &e.payload {
            CampusEvent::Violation { port, mac, mode, alerted } if *mode != ViolationMode::Protect => {
                Some(SwpvioEvent {
                    at: e.at,
                    port: port.clone(),
                    offending_mac: *mac,
                    mode: *mode,
                    alerted: *alerted,
                    location: locate(port),
                })
            }
            _ => None,
        })
        .collect()
}

/// The alert feed proper: violations that raised an alert.
pub fn swpvio_feed(events: &[Event<CampusEvent>], locate: &dyn Fn(&PortRef) -> Option<Location>) -> Vec<SwpvioEvent> {
    swpvio_events(events, locate).into_iter().filter(|v| v.alerted).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkFlapSignature {
    pub port: PortRef,
    pub down_at: SimTime,
    pub up_at: SimTime,
    pub post_up_macs: BTreeSet<MacAddr>,
    pub handshake_seen: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpoofAlert {
    pub at: SimTime,
    pub port: PortRef,
    pub mac: MacAddr,
    pub confidence: Confidence,
    pub reason: String,
}

/// The managed host's MAC came back after a flap without the handshake
/// that host always sends.
pub fn detect_spoof(sig: &LinkFlapSignature, expected: MacAddr, ghosting: bool, at: SimTime) -> Option<SpoofAlert> {
    if sig.handshake_seen || !sig.post_up_macs.contains(&expected) {
        return None;
    }
    let (confidence, reason) = if ghosting {
        (Confidence::Low, "no handshake after link flap; port is in a ghost VLAN".to_string())
    } else {
        (Confidence::High, "no handshake after link flap".to_string())
    };
    Some(SpoofAlert { at, port: sig.port.clone(), mac: expected, confidence, reason })
}

/// Builds link-flap signatures incrementally from the event stream.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpoofDetector {
    last_down: BTreeMap<PortRef, SimTime>,
    open: BTreeMap<(PortRef, SimTime), LinkFlapSignature>,
}

impl SpoofDetector {
    pub fn feed(&mut self, ev: &Event<CampusEvent>) {
        match &ev.payload {
            CampusEvent::Edge { port, up: false } => {
                self.last_down.insert(port.clone(), ev.at);
            }
            CampusEvent::Edge { port, up: true } => {
                if let Some(down_at) = self.last_down.get(port) {
                    let sig = LinkFlapSignature {
                        port: port.clone(),
                        down_at: *down_at,
                        up_at: ev.at,
                        post_up_macs: BTreeSet::new(),
                        handshake_seen: false,
                    };
                    self.open.insert((port.clone(), ev.at), sig);
                }
            }
            CampusEvent::Frame { port, frame } => {
                for ((p, up_at), sig) in self.open.range_mut((port.clone(), SimTime::ZERO)..) {
                    if p != port {
                        break;
                    }
                    sig.post_up_macs.insert(frame.src);
                    if frame.kind == FrameKind::Handshake && ev.at.saturating_sub(*up_at) <= HANDSHAKE_WINDOW {
                        sig.handshake_seen = true;
                    }
                }
            }
            _ => {}
        }
    }

    pub fn feed_all(&mut self, events: &[Event<CampusEvent>]) {
        for e in events {
            self.feed(e);
        }
    }

    /// Closes and returns the signature that began at `up_at`.
    pub fn take(&mut self, port: &PortRef, up_at: SimTime) -> Option<LinkFlapSignature> {
        self.open.remove(&(port.clone(), up_at))
    }

    pub fn pending(&self) -> usize {
        self.open.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub src_host: String,
    pub dst_addr: Ipv4Addr,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub window: (SimTime, SimTime),
}

/// Aggregates accepted external traffic per (host, remote address, window).
/// `name` maps an inside address to the host it belongs to.
pub fn flows_from_log(
    events: &[Event<CampusEvent>],
    window: SimTime,
    name: &dyn Fn(Ipv4Addr) -> Option<String>,
) -> Vec<FlowRecord> {
    let w = window.ticks().max(1);
    let mut acc: BTreeMap<(u64, String, Ipv4Addr), (u64, u64)> = BTreeMap::new();
    for e in events {
        let CampusEvent::Routed { packet, bytes, verdict: Verdict::Accept, egress, inbound, .. } = &e.payload else {
            continue;
        };
        let slot = e.at.ticks() / w;
        if *inbound {
            let Some(h) = name(packet.dst) else { continue };
            acc.entry((slot, h, packet.src)).or_default().0 += bytes;
        } else if *egress == Side::Upstream {
            let Some(h) = name(packet.src) else { continue };
            acc.entry((slot, h, packet.dst)).or_default().1 += bytes;
        }
    }
    acc.into_iter()
        .map(|((slot, h, dst), (bin, bout))| FlowRecord {
            src_host: h,
            dst_addr: dst,
            bytes_in: bin,
            bytes_out: bout,
            window: (SimTime::from_nanos(slot * w), SimTime::from_nanos((slot + 1) * w)),
        })
        .collect()
}

fn in_list(list: &[PatchSite], a: Ipv4Addr) -> bool {
    list.iter().any(|s| s.cidr.contains(a))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TalkerRow {
    pub host: String,
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// Traffic to patch sites, left out of the two counters above.
    pub exempt_bytes: u64,
    pub exempt: bool,
    /// Non-exempt (in, out) per remote address.
    pub by_dst: BTreeMap<Ipv4Addr, (u64, u64)>,
}

impl TalkerRow {
    pub fn rank_key(&self) -> u64 {
        self.bytes_in.max(self.bytes_out)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TalkerReport {
    pub window: (SimTime, SimTime),
    /// Top hosts by non-exempt volume.
    pub ranked: Vec<TalkerRow>,
    /// Hosts whose traffic all went to patch sites.
    pub exempt: Vec<TalkerRow>,
}

impl TalkerReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<28} {:>16} {:>16} {:>16}\n", "host", "bytes_in", "bytes_out", "exempt_bytes");
        for r in &self.ranked {
            out.push_str(&format!("{:<28} {:>16} {:>16} {:>16}\n", r.host, r.bytes_in, r.bytes_out, r.exempt_bytes));
        }
        for r in &self.exempt {
            out.push_str(&format!("{:<28} {:>16} {:>16} {:>16} exempt\n", r.host, 0, 0, r.exempt_bytes));
        }
        out
    }
}

/// Per-host totals over flows inside `window`, patch-site traffic split out,
/// top `n` by the larger direction.
pub fn top_talkers(flows: &[FlowRecord], window: (SimTime, SimTime), n: usize, patch_sites: &[PatchSite]) -> TalkerReport {
    let mut rows: BTreeMap<&str, TalkerRow> = BTreeMap::new();
    for f in flows.iter().filter(|f| f.window.0 >= window.0 && f.window.1 <= window.1) {
        let row = rows.entry(&f.src_host).or_insert_with(|| TalkerRow {
            host: f.src_host.clone(),
            bytes_in: 0,
            bytes_out: 0,
            exempt_bytes: 0,
            exempt: false,
            by_dst: BTreeMap::new(),
        });
        if in_list(patch_sites, f.dst_addr) {
            row.exempt_bytes += f.bytes_in + f.bytes_out;
        } else {
            row.bytes_in += f.bytes_in;
            row.bytes_out += f.bytes_out;
            let d = row.by_dst.entry(f.dst_addr).or_default();
            d.0 += f.bytes_in;
            d.1 += f.bytes_out;
        }
    }
    let mut ranked = Vec::new();
    let mut exempt = Vec::new();
    for (_, mut r) in rows {
        if r.bytes_in == 0 && r.bytes_out == 0 {
            r.exempt = true;
            exempt.push(r);
        } else {
            ranked.push(r);
        }
    }
    ranked.sort_by(|a, b| b.rank_key().cmp(&a.rank_key()).then_with(|| a.host.cmp(&b.host)));
    ranked.truncate(n);
    TalkerReport { window, ranked, exempt }
}

/// Hosts whose traffic outside `whitelist` exceeds `threshold` bytes in
/// either direction, as choke-list entries with the given limits.
pub fn recommend_choke(report: &TalkerReport, threshold: u64, whitelist: &[PatchSite], avg: u32, burst: u32) -> Vec<ChokeEntry> {
    report
        .ranked
        .iter()
        .filter(|r| {
            let (i, o) = r
                .by_dst
                .iter()
                .filter(|(d, _)| !in_list(whitelist, **d))
                .fold((0u64, 0u64), |(i, o), (_, (bi, bo))| (i + bi, o + bo));
            i.max(o) > threshold
        })
        .map(|r| ChokeEntry { host: r.host.clone(), avg, burst })
        .collect()
}

/// Choke entries in the choke-list grammar.
pub fn choke_list_text(entries: &[ChokeEntry]) -> String {
    entries.iter().map(|c| format!("{} {}/{}\n", c.host, c.avg, c.burst)).collect()
}

/// Example flow-predicate detectors. Thresholds are configuration, not
/// measured behavior.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowDetector {
    /// DNS queries leaving for servers not in `allowed`.
    OutsideDns { allowed: Vec<Cidr> },
    /// One source touching at least `distinct_ports` ports on one target.
    PortScan { distinct_ports: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub detector: String,
    pub src: Ipv4Addr,
    pub detail: String,
}

impl FlowDetector {
    /// `outside-dns 10.30.0.53/32 ...` or `port-scan 20`.
    pub fn parse(line: &str) -> Option<FlowDetector> {
        let mut it = line.split_whitespace();
        match it.next()? {
            "outside-dns" => Some(FlowDetector::OutsideDns { allowed: it.map(|s| s.parse().ok()).collect::<Option<_>>()? }),
            "port-scan" => Some(FlowDetector::PortScan { distinct_ports: it.next()?.parse().ok()? }),
            _ => None,
        }
    }

    pub fn run(&self, events: &[Event<CampusEvent>]) -> Vec<Finding> {
        let routed = events.iter().filter_map(|e| match &e.payload {
            CampusEvent::Routed { packet, inbound: false, .. } => Some(packet),
            _ => None,
        });
        match self {
            FlowDetector::OutsideDns { allowed } => {
                let seen: BTreeSet<(Ipv4Addr, Ipv4Addr)> = routed
                    .filter(|p| p.dport == 53 && !allowed.iter().any(|c| c.contains(p.dst)))
                    .map(|p| (p.src, p.dst))
                    .collect();
                seen.into_iter()
                    .map(|(src, dst)| Finding { detector: "outside-dns".into(), src, detail: format!("query to {dst}") })
                    .collect()
            }
            FlowDetector::PortScan { distinct_ports } => {
                let mut ports: BTreeMap<(Ipv4Addr, Ipv4Addr), BTreeSet<u16>> = BTreeMap::new();
                for p in routed {
                    ports.entry((p.src, p.dst)).or_default().insert(p.dport);
                }
                ports
                    .into_iter()
                    .filter(|(_, s)| s.len() >= *distinct_ports)
                    .map(|((src, dst), s)| Finding {
                        detector: "port-scan".into(),
                        src,
                        detail: format!("{} ports on {dst}", s.len()),
                    })
                    .collect()
            }
        }
    }
}
