use super::*;
use crate::addr::{MacAddr, VlanId};
use crate::fwengine::{Proto, RejectWith, Verdict};
use crate::l2switch::FrameKind;
use crate::simcore::SimTime;
use crate::topology::{Fault, HostId, LinkId, PortRef, SwitchId};

fn sw(s: &str) -> SwitchId {
    SwitchId::new(s)
}

fn port(s: &str) -> PortRef {
    s.parse().unwrap()
}

fn world() -> World {
    let mut w = demo_world(WorldConfig::fast()).unwrap();
    w.converge().unwrap();
    w.run_for(SimTime::from_secs(2));
    w
}

fn link_between(w: &World, a: &str, b: &str) -> LinkId {
    let l = w.topo.find_link(&sw(a), &sw(b));
    assert_eq!(l.len(), 1);
    l[0].id
}

#[test]
fn demo_converges_with_core_as_root() {
    let w = world();
    let core = w.stp.bridge(&sw("BigSwitch1")).unwrap();
    assert!(core.is_root());
    assert!(w.stp.bridges().all(|b| b.root == core.id));
}

#[test]
fn triangles_block_their_direct_links() {
    let w = world();
    let mut expected = vec![link_between(&w, "A11", "A12"), link_between(&w, "A13", "A14")];
    expected.sort();
    let mut blocked = w.blocked_links();
    blocked.sort();
    assert_eq!(blocked, expected);
}

#[test]
fn uplink_failure_unblocks_direct_link() {
    let mut w = world();
    let up = link_between(&w, "A11", "BigSwitch1");
    w.inject_fault(&Fault::LinkDown(up)).unwrap();
    w.converge().unwrap();
    let direct = link_between(&w, "A11", "A12");
    assert!(w.forwarding_links().contains(&direct));
    let all: std::collections::BTreeSet<SwitchId> = w.topo.switches.keys().cloned().collect();
    assert_eq!(w.reachable_from(&sw("A11")), all);
}

#[test]
fn broadcast_stays_in_its_vlan() {
    let mut w = world();
    w.host_rx.clear();
    w.broadcast(&HostId::new("machine42"), 100).unwrap();
    w.run_for(SimTime::from_millis(10));
    let got: Vec<&str> = w.host_rx.keys().map(|h| h.as_str()).collect();
    assert_eq!(got, ["labpc1", "machine43", "sickhost"]);
}

#[test]
fn unicast_reaches_only_the_destination_once_learned() {
    let mut w = world();
    w.host_rx.clear();
    w.send_frame(&HostId::new("sickhost"), &HostId::new("machine43"), 500).unwrap();
    w.run_for(SimTime::from_millis(10));
    assert_eq!(w.host_rx[&HostId::new("machine43")].bytes, 500);
    assert_eq!(w.host_rx.len(), 1, "destination MAC was learned from the boot announce");
}

#[test]
fn quarantined_host_is_reset_on_the_web() {
    let mut w = world();
    let web = "198.51.100.7".parse().unwrap();
    let r = w.send_packet(&HostId::new("sickhost"), web, Proto::Tcp, 40000, 80, 60).unwrap();
    assert_eq!(r.verdict(), Verdict::Reject(RejectWith::TcpReset));
    let av = "10.30.0.5".parse().unwrap();
    let r = w.send_packet(&HostId::new("sickhost"), av, Proto::Tcp, 40001, 1234, 60).unwrap();
    assert_eq!(r.verdict(), Verdict::Accept);
    let ok = w.send_packet(&HostId::new("machine42"), web, Proto::Tcp, 40000, 80, 60).unwrap();
    assert_eq!(ok.verdict(), Verdict::Accept);
}

#[test]
fn quarantine_and_release_bump_versions() {
    let mut w = world();
    let v0 = w.ruleset_version();
    let v1 = w.quarantine("machine43", "MS08-067", "admnusr").unwrap();
    assert!(v1 > v0);
    assert!(w.is_quarantined("machine43.domain"));
    assert_eq!(w.policy.quarantine.last().unwrap().date, "2024-01-01");
    let web = "198.51.100.7".parse().unwrap();
    let r = w.send_packet(&HostId::new("machine43"), web, Proto::Tcp, 40000, 80, 60).unwrap();
    assert_eq!(r.verdict(), Verdict::Reject(RejectWith::TcpReset));
    let v2 = w.unquarantine("machine43").unwrap();
    assert!(v2 > v1);
    assert!(matches!(w.unquarantine("machine43"), Err(WorldError::NotQuarantined(_))));
    assert!(matches!(w.quarantine("nosuch", "x", "a"), Err(WorldError::UnknownHost(_))));
}

#[test]
fn shutdown_violation_err_disables_until_cleared() {
    let mut w = world();
    let p = port("A12:1/0/12");
    let m43 = HostId::new("machine43");
    let mac = w.topo.hosts[&m43].mac;
    assert_eq!(w.fabric.port(&p).unwrap().security.sticky, vec![mac]);
    let stranger = MacAddr([0x00, 0x16, 0x3e, 0xee, 0, 1]);
    let frame_src = w.topo.hosts.get_mut(&m43).unwrap();
    frame_src.mac = stranger;
    w.broadcast(&m43, 64).unwrap();
    w.run_for(SimTime::from_millis(5));
    assert!(!w.port_live(&p));
    assert!(w.fabric.port(&p).unwrap().security.err_disabled);
    w.topo.hosts.get_mut(&m43).unwrap().mac = mac;
    assert!(w.clear_sticky(&p).unwrap());
    w.settle();
    assert!(w.port_live(&p));
    assert!(w.fabric.port(&p).unwrap().security.sticky.is_empty());
}

#[test]
fn ghost_session_delivers_to_members_only() {
    let mut w = world();
    let members = [port("A11:1/0/40"), port("A12:1/0/40")];
    let id = w.start_ghost("desktop", VlanId::new(3001).unwrap(), &HostId::new("ghostsrv"), &members).unwrap();
    w.host_rx.clear();
    let chunks = w.run_distribution(id, 1_000_000).unwrap();
    assert!(chunks > 0);
    w.run_for(SimTime::from_secs(1));
    for h in ["labpc1", "labpc2"] {
        assert_eq!(w.host_rx[&HostId::new(h)].ghost_bytes, 1_000_000, "{h}");
    }
    assert!(w.host_rx.iter().filter(|(h, _)| !["labpc1", "labpc2"].contains(&h.as_str())).all(|(_, r)| r.ghost_bytes == 0));
    let restored = w.teardown_ghost(id).unwrap();
    assert_eq!(restored.len(), 3, "two members plus the server");
    assert_eq!(w.fabric.port(&members[1]).unwrap().mode.access_vlan(), VlanId::new(901).ok());
}

#[test]
fn spoof_after_replug_raises_alert() {
    let mut w = world();
    w.plug_host(&HostId::new("machine42"), None).unwrap();
    w.run_for(SimTime::from_secs(3));
    w.plug_host(&HostId::new("rogue"), Some(crate::topology::JackId::new("E102-1"))).unwrap();
    w.run_for(SimTime::from_secs(200));
    let alerts: Vec<_> = w.log().iter().filter(|e| matches!(e.payload, CampusEvent::Spoof { .. })).collect();
    assert_eq!(alerts.len(), 1, "{}", w.export_log());
}

#[test]
fn replays_are_byte_identical() {
    let run = || {
        let mut w = world();
        w.random_traffic(50, 200);
        w.inject_fault(&Fault::UpsFail(crate::topology::UpsId::new("upsA"))).unwrap();
        w.converge().unwrap();
        w.run_for(SimTime::from_secs(5));
        w.export_log()
    };
    assert_eq!(run(), run());
}

#[test]
fn snapshot_round_trips_through_json() {
    let w = world();
    let snap = w.snapshot();
    let back = Snapshot::from_json(&snap.to_json()).unwrap();
    assert_eq!(back, snap);
}

#[test]
fn unknown_pair_and_host_are_reported() {
    let mut w = world();
    assert!(matches!(w.failback("nope"), Err(WorldError::UnknownPair(_))));
    assert!(matches!(w.broadcast(&HostId::new("nobody"), 1), Err(WorldError::UnknownHost(_))));
    assert!(matches!(w.broadcast(&HostId::new("visitor"), 1), Err(WorldError::NotAttached(_))));
    let _ = FrameKind::Unicast;
}

