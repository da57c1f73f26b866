use serde::{Deserialize, Serialize};

use crate::addr::MacAddr;
use crate::fwengine::{Packet, Verdict};
use crate::l2switch::{DropReason, Frame, FrameKind, ViolationMode};
use crate::routerha::{HaEvent, Side};
use crate::simcore::{EventKind, Payload};
use crate::stp::{PortRole, PortState};
use crate::topology::{HostId, LinkId, PortRef, RouterId, SwitchId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Low,
}

/// Everything that can sit in the campus event queue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CampusEvent {
    // FrameArrival
    Frame { port: PortRef, frame: Frame },
    Dropped { port: PortRef, frame_id: u64, reason: String },
    Routed {
        pair: String,
        router: RouterId,
        packet: Packet,
        bytes: u64,
        verdict: Verdict,
        egress: Side,
        inbound: bool,
    },

    // LinkStateChange
    Link { link: LinkId, up: bool },
    Edge { port: PortRef, up: bool },
    Router { router: RouterId, up: bool },
    PortRole { port: PortRef, role: PortRole, state: PortState },

    // TimerExpiry
    StpHello,
    StpTransition { port: PortRef, generation: u64 },
    Heartbeat,
    Sync { pair: String },
    GhostChunk { session: u32, index: u32, bytes: u64 },
    HostAnnounce { host: HostId },
    HostHandshake { host: HostId },
    SpoofCheck { port: PortRef, up_at: u64 },

    // CommandApplied
    Command { actor: String, op: String, args: String, outcome: String },

    // AlertRaised
    Violation { port: PortRef, mac: MacAddr, mode: ViolationMode, alerted: bool },
    Spoof { port: PortRef, mac: MacAddr, confidence: Confidence, reason: String },
    Ha(HaEvent),
    TopologyChange { switch: SwitchId },
}

impl CampusEvent {
    /// Short name used in the log and by stream filters.
    pub fn name(&self) -> &'static str {
        match self {
            CampusEvent::Frame { .. } => "frame",
            CampusEvent::Dropped { .. } => "dropped",
            CampusEvent::Routed { .. } => "routed",
            CampusEvent::Link { .. } => "link",
            CampusEvent::Edge { .. } => "edge",
            CampusEvent::Router { .. } => "router",
            CampusEvent::PortRole { .. } => "port_role",
            CampusEvent::StpHello => "stp_hello",
            CampusEvent::StpTransition { .. } => "stp_transition",
            CampusEvent::Heartbeat => "heartbeat",
            CampusEvent::Sync { .. } => "sync",
            CampusEvent::GhostChunk { .. } => "ghost_chunk",
            CampusEvent::HostAnnounce { .. } => "host_announce",
            CampusEvent::HostHandshake { .. } => "host_handshake",
            CampusEvent::SpoofCheck { .. } => "spoof_check",
            CampusEvent::Command { .. } => "command",
            CampusEvent::Violation { .. } => "swpvio",
            CampusEvent::Spoof { .. } => "spoof",
            CampusEvent::Ha(_) => "ha",
            CampusEvent::TopologyChange { .. } => "topology_change",
        }
    }
}

fn frame_fields(frame: &Frame, out: &mut Vec<(&'static str, String)>) {
    out.push(("id", frame.id.to_string()));
    out.push(("src", frame.src.to_string()));
    out.push(("dst", frame.dst.to_string()));
    out.push(("vlan", frame.vlan.map_or("-".into(), |v| v.to_string())));
    out.push(("kind", frame.kind.name().into()));
    out.push(("size", frame.size_bytes.to_string()));
    match &frame.kind {
        FrameKind::Bpdu(b) => {
            out.push(("root", b.root.to_string()));
            out.push(("cost", b.cost.to_string()));
            out.push(("sender", b.sender.to_string()));
            out.push(("age", b.message_age.to_string()));
        }
        FrameKind::Ghost { session } => out.push(("session", session.to_string())),
        _ => {}
    }
}

impl Payload for CampusEvent {
    fn kind(&self) -> EventKind {
        use CampusEvent::*;
        match self {
            Frame { .. } | Dropped { .. } | Routed { .. } => EventKind::FrameArrival,
            Link { .. } | Edge { .. } | Router { .. } | PortRole { .. } => EventKind::LinkStateChange,
            StpHello
            | StpTransition { .. }
            | Heartbeat
            | Sync { .. }
            | GhostChunk { .. }
            | HostAnnounce { .. }
            | HostHandshake { .. }
            | SpoofCheck { .. } => EventKind::TimerExpiry,
            Command { .. } => EventKind::CommandApplied,
            Violation { .. } | Spoof { .. } | Ha(_) | TopologyChange { .. } => EventKind::AlertRaised,
        }
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let mut f: Vec<(&'static str, String)> = vec![("event", self.name().into())];
        match self {
            CampusEvent::Frame { port, frame } => {
                f.push(("port", port.to_string()));
                frame_fields(frame, &mut f);
            }
            CampusEvent::Dropped { port, frame_id, reason } => {
                f.push(("port", port.to_string()));
                f.push(("id", frame_id.to_string()));
                f.push(("reason", reason.clone()));
            }
            CampusEvent::Routed { pair, router, packet, bytes, verdict, egress, inbound } => {
                f.push(("pair", pair.clone()));
                f.push(("router", router.to_string()));
                f.push(("proto", packet.proto.to_string()));
                f.push(("src", format!("{}:{}", packet.src, packet.sport)));
                f.push(("dst", format!("{}:{}", packet.dst, packet.dport)));
                f.push(("state", packet.state.to_string()));
                f.push(("bytes", bytes.to_string()));
                f.push(("verdict", verdict.to_string()));
                f.push(("egress", egress.to_string()));
                f.push(("inbound", inbound.to_string()));
            }
            CampusEvent::Link { link, up } => {
                f.push(("link", link.to_string()));
                f.push(("up", up.to_string()));
            }
            CampusEvent::Edge { port, up } => {
                f.push(("port", port.to_string()));
                f.push(("up", up.to_string()));
            }
            CampusEvent::Router { router, up } => {
                f.push(("router", router.to_string()));
                f.push(("up", up.to_string()));
            }
            CampusEvent::PortRole { port, role, state } => {
                f.push(("port", port.to_string()));
                f.push(("role", role.to_string()));
                f.push(("state", state.to_string()));
            }
            CampusEvent::StpHello | CampusEvent::Heartbeat => {}
            CampusEvent::StpTransition { port, generation } => {
                f.push(("port", port.to_string()));
                f.push(("generation", generation.to_string()));
            }
            CampusEvent::Sync { pair } => f.push(("pair", pair.clone())),
            CampusEvent::GhostChunk { session, index, bytes } => {
                f.push(("session", session.to_string()));
                f.push(("index", index.to_string()));
                f.push(("bytes", bytes.to_string()));
            }
            CampusEvent::HostAnnounce { host } | CampusEvent::HostHandshake { host } => {
                f.push(("host", host.to_string()))
            }
            CampusEvent::SpoofCheck { port, up_at } => {
                f.push(("port", port.to_string()));
                f.push(("up_at", up_at.to_string()));
            }
            CampusEvent::Command { actor, op, args, outcome } => {
                f.push(("actor", actor.clone()));
                f.push(("op", op.clone()));
                f.push(("args", args.clone()));
                f.push(("outcome", outcome.clone()));
            }
            CampusEvent::Violation { port, mac, mode, alerted } => {
                f.push(("port", port.to_string()));
                f.push(("mac", mac.to_string()));
                f.push(("mode", mode.to_string()));
                f.push(("alerted", alerted.to_string()));
            }
            CampusEvent::Spoof { port, mac, confidence, reason } => {
                f.push(("port", port.to_string()));
                f.push(("mac", mac.to_string()));
                f.push(("confidence", format!("{confidence:?}").to_lowercase()));
                f.push(("reason", reason.clone()));
            }
            CampusEvent::Ha(ev) => match ev {
                HaEvent::Failover { pair, from, to } => {
                    f.push(("what", "failover".into()));
                    f.push(("pair", pair.clone()));
                    f.push(("from", from.to_string()));
                    f.push(("to", to.to_string()));
                }
                HaEvent::Failback { pair, to } => {
                    f.push(("what", "failback".into()));
                    f.push(("pair", pair.clone()));
                    f.push(("to", to.to_string()));
                }
                HaEvent::Recovered { pair, active } => {
                    f.push(("what", "recovered".into()));
                    f.push(("pair", pair.clone()));
                    f.push(("active", active.to_string()));
                }
                HaEvent::BothDown { pair } => {
                    f.push(("what", "both_down".into()));
                    f.push(("pair", pair.clone()));
                }
                HaEvent::Synced { pair, from, to, entries } => {
                    f.push(("what", "synced".into()));
                    f.push(("pair", pair.clone()));
                    f.push(("from", from.to_string()));
                    f.push(("to", to.to_string()));
                    f.push(("entries", entries.to_string()));
                }
                HaEvent::PeerDown { pair, router } => {
                    f.push(("what", "peer_down".into()));
                    f.push(("pair", pair.clone()));
                    f.push(("router", router.to_string()));
                }
            },
            CampusEvent::TopologyChange { switch } => f.push(("switch", switch.to_string())),
        }
        f
    }
}

/// Reason text for a dropped frame.
pub fn drop_reason(r: &DropReason) -> String {
    r.to_string()
}
