//! Timed command scripts with assertions, used for demos and tests.
//!
//! ```text
//! topology demo
//! converge
//! expect blocked A11 A12
//! at 30s fault ups-fail upsA
//! converge
//! expect reachable-all
//! ```

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::shell::{parse_port_words, Shell};
use super::{Actor, Plane, Role};
use crate::addr::VlanId;
use crate::campus::generate::{campus_text, CampusParams};
use crate::campus::{default_policy, demo_topology, CampusEvent, Confidence, PolicySet, World, WorldConfig};
use crate::fwengine::{Proto, Verdict};
use crate::simcore::SimTime;
use crate::topology::{load_topology, HostId, NetTopology, PortRef, SwitchId};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ScriptError {
    pub line: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub line: usize,
    pub text: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub results: Vec<AssertionResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn render(&self) -> String {
        self.results
            .iter()
            .map(|r| {
                let mark = if r.passed { "PASS" } else { "FAIL" };
                if r.detail.is_empty() {
                    format!("{mark} line {}: {}\n", r.line, r.text)
                } else {
                    format!("{mark} line {}: {} ({})\n", r.line, r.text, r.detail)
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TopologySource {
    Demo,
    Generated(CampusParams),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Step {
    At(SimTime, Box<Step>),
    Shell(String),
    ExpectError(String),
    As(Actor),
    Traffic(usize, u64),
    Broadcast(HostId, u64),
    Send { host: HostId, dst: Ipv4Addr, proto: Proto, dport: u16 },
    SaveVlans(String),
    Expect(String),
}

/// A parsed script. Syntax problems surface here, before anything runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Script {
    pub topology: Option<TopologySource>,
    pub fast_timers: Option<bool>,
    steps: Vec<(usize, Step)>,
}

fn serr(line: usize, msg: impl Into<String>) -> ScriptError {
    ScriptError { line, msg: msg.into() }
}

fn parse_proto(line: usize, s: &str) -> Result<Proto, ScriptError> {
    match s {
        "tcp" => Ok(Proto::Tcp),
        "udp" => Ok(Proto::Udp),
        "icmp" => Ok(Proto::Icmp),
        _ => Err(serr(line, format!("unknown protocol `{s}`"))),
    }
}

fn parse_step(n: usize, text: &str) -> Result<Step, ScriptError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let rest = |k: usize| words[k..].join(" ");
    Ok(match words.as_slice() {
        ["at", t, more @ ..] if !more.is_empty() => {
            let t: SimTime = t.parse().map_err(|e: String| serr(n, e))?;
            Step::At(t, Box::new(parse_step(n, &rest(2))?))
        }
        ["expect-error", more @ ..] if !more.is_empty() => Step::ExpectError(rest(1)),
        ["expect", more @ ..] if !more.is_empty() => Step::Expect(rest(1)),
        ["as", role] | ["as", role, _] => {
            let r: Role = role.parse().map_err(|e: String| serr(n, e))?;
            Step::As(Actor::new(words.get(2).copied().unwrap_or(role), r))
        }
        ["traffic", count, bytes] => Step::Traffic(
            count.parse().map_err(|_| serr(n, "traffic count must be a number"))?,
            bytes.parse().map_err(|_| serr(n, "traffic size must be a number"))?,
        ),
        ["broadcast", host] | ["broadcast", host, _] => {
            let size = match words.get(2) {
                Some(b) => b.parse().map_err(|_| serr(n, "broadcast size must be a number"))?,
                None => 64,
            };
            Step::Broadcast(HostId::new(host), size)
        }
        ["send", host, dst, proto, dport] => Step::Send {
            host: HostId::new(host),
            dst: dst.parse().map_err(|_| serr(n, format!("bad address `{dst}`")))?,
            proto: parse_proto(n, proto)?,
            dport: dport.parse().map_err(|_| serr(n, "bad port number"))?,
        },
        ["save-vlans", name] => Step::SaveVlans(name.to_string()),
        _ => Step::Shell(text.to_string()),
    })
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, ScriptError> {
        let mut script = Script { topology: None, fast_timers: None, steps: Vec::new() };
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split(" #").next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["topology", src @ ..] => {
                    if !script.steps.is_empty() || script.topology.is_some() {
                        return Err(serr(n, "`topology` must come once, before any step"));
                    }
                    script.topology = Some(match src {
                        ["demo"] => TopologySource::Demo,
                        ["generated", params @ ..] => {
                            TopologySource::Generated(CampusParams::parse(params).map_err(|e| serr(n, e))?)
                        }
                        ["file", path] => TopologySource::File(PathBuf::from(path)),
                        _ => return Err(serr(n, "topology is `demo`, `generated k=v...` or `file <path>`")),
                    });
                }
                ["timers", "fast"] => script.fast_timers = Some(true),
                ["timers", "standard"] => script.fast_timers = Some(false),
                _ => script.steps.push((n, parse_step(n, line)?)),
            }
        }
        Ok(script)
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Overrides the script's own `timers` line when set.
    pub fast_timers: Option<bool>,
    /// Overrides the script's `topology` line when set.
    pub topology: Option<NetTopology>,
    pub policy: Option<PolicySet>,
    /// Where `topology file` paths are resolved from.
    pub base_dir: Option<PathBuf>,
}

pub struct ScenarioRun {
    pub report: Report,
    pub plane: Plane,
}

impl ScenarioRun {
    pub fn event_log(&self) -> String {
        self.plane.world.export_log()
    }
}

fn build_topology(script: &Script, opts: &RunOptions) -> Result<NetTopology, ScriptError> {
    if let Some(t) = &opts.topology {
        return Ok(t.clone());
    }
    match script.topology.clone().unwrap_or(TopologySource::Demo) {
        TopologySource::Demo => Ok(demo_topology()),
        TopologySource::Generated(p) => load_topology(&campus_text(&p)).map_err(|e| serr(0, e.to_string())),
        TopologySource::File(p) => {
            let path = match &opts.base_dir {
                Some(b) if p.is_relative() => b.join(&p),
                _ => p,
            };
            let text = std::fs::read_to_string(&path).map_err(|e| serr(0, format!("{}: {e}", path.display())))?;
            load_topology(&text).map_err(|e| serr(0, format!("{}: {e}", path.display())))
        }
    }
}

pub fn run_script(script: &Script, opts: &RunOptions) -> Result<ScenarioRun, ScriptError> {
    let topo = build_topology(script, opts)?;
    let fast = opts.fast_timers.or(script.fast_timers).unwrap_or(false);
    let mut cfg = if fast { WorldConfig::fast() } else { WorldConfig::default() };
    cfg.seed = opts.seed;
    let policy = opts.policy.clone().unwrap_or_else(default_policy);
    let world = World::new(topo, policy, cfg).map_err(|e| serr(0, e.to_string()))?;
    let mut runner = Runner {
        plane: Plane::new(world),
        actor: Actor::new("scenario", Role::NetAdmin),
        saved: BTreeMap::new(),
        report: Report::default(),
    };
    for (n, step) in &script.steps {
        runner.step(*n, step)?;
    }
    Ok(ScenarioRun { report: runner.report, plane: runner.plane })
}

pub fn run_text(text: &str, opts: &RunOptions) -> Result<ScenarioRun, ScriptError> {
    run_script(&Script::parse(text)?, opts)
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<ScenarioRun, ScriptError> {
    let text = std::fs::read_to_string(path).map_err(|e| serr(0, format!("{}: {e}", path.display())))?;
    let mut opts = opts.clone();
    if opts.base_dir.is_none() {
        opts.base_dir = path.parent().map(Path::to_path_buf);
    }
    run_text(&text, &opts)
}

struct Runner {
    plane: Plane,
    actor: Actor,
    saved: BTreeMap<String, BTreeMap<PortRef, Option<VlanId>>>,
    report: Report,
}

impl Runner {
    fn step(&mut self, n: usize, step: &Step) -> Result<(), ScriptError> {
        match step {
            Step::At(t, inner) => {
                if *t < self.plane.now() {
                    return Err(serr(n, format!("time {t} is already past (now {})", self.plane.now())));
                }
                self.plane.advance_to(*t);
                self.step(n, inner)?;
            }
            Step::Shell(cmd) => {
                let mut sh = Shell::new(&mut self.plane, self.actor.clone());
                sh.exec_line(cmd).map_err(|e| serr(n, e.to_string()))?;
            }
            Step::ExpectError(cmd) => {
                let mut sh = Shell::new(&mut self.plane, self.actor.clone());
                let res = sh.exec_line(cmd);
                self.push(n, &format!("error from `{cmd}`"), res.is_err(), res.err().map(|e| e.to_string()).unwrap_or_default());
            }
            Step::As(a) => self.actor = a.clone(),
            Step::Traffic(count, size) => {
                self.plane.world.random_traffic(*count, *size);
                self.plane.world.settle();
            }
            Step::Broadcast(h, size) => {
                self.plane.world.broadcast(h, *size).map_err(|e| serr(n, e.to_string()))?;
                self.plane.world.settle();
            }
            Step::Send { host, dst, proto, dport } => {
                self.plane
                    .world
                    .send_packet(host, *dst, *proto, 40000, *dport, 64)
                    .map_err(|e| serr(n, e.to_string()))?;
                self.plane.world.settle();
            }
            Step::SaveVlans(name) => {
                self.saved.insert(name.clone(), self.plane.world.vlan_snapshot());
            }
            Step::Expect(text) => {
                let (ok, detail) = self.check(n, text)?;
                self.push(n, text, ok, detail);
            }
        }
        Ok(())
    }

    fn push(&mut self, line: usize, text: &str, passed: bool, detail: String) {
        self.report.results.push(AssertionResult { line, text: text.to_string(), passed, detail });
    }

    fn check(&mut self, n: usize, text: &str) -> Result<(bool, String), ScriptError> {
        self.plane.observe();
        let w = &self.plane.world;
        let words: Vec<&str> = text.split_whitespace().collect();
        let link_state = |a: &str, b: &str| -> Result<(bool, bool), ScriptError> {
            let links = w.topo.find_link(&SwitchId::new(a), &SwitchId::new(b));
            let l = links.first().ok_or_else(|| serr(n, format!("no link between {a} and {b}")))?;
            Ok((w.blocked_links().contains(&l.id), w.forwarding_links().contains(&l.id)))
        };
        Ok(match words.as_slice() {
            ["reachable-all"] => {
                let alive: Vec<SwitchId> = w.topo.switches.keys().filter(|s| w.switch_alive(s)).cloned().collect();
                let bad: Vec<String> = alive
                    .iter()
                    .filter(|s| w.reachable_from(s).len() != alive.len())
                    .map(|s| s.to_string())
                    .collect();
                (bad.is_empty(), if bad.is_empty() { format!("{} live switches", alive.len()) } else { format!("partitioned from {}", bad.join(",")) })
            }
            ["blocked", a, b] => {
                let (blocked, _) = link_state(a, b)?;
                (blocked, String::new())
            }
            ["forwarding", a, b] => {
                let (_, fwd) = link_state(a, b)?;
                (fwd, String::new())
            }
            ["blocked-count", k] => {
                let k: usize = k.parse().map_err(|_| serr(n, "count must be a number"))?;
                let got = w.blocked_links().len();
                (got == k, format!("{got} blocked"))
            }
            ["switch", s, state @ ("alive" | "dead")] => {
                let alive = w.switch_alive(&SwitchId::new(s));
                (alive == (*state == "alive"), String::new())
            }
            ["port", sw, local, state @ ("up" | "down" | "err-disabled")] => {
                let p = parse_port_words(sw, local).map_err(|e| serr(n, e.to_string()))?;
                let sp = w.fabric.port(&p).ok_or_else(|| serr(n, format!("unknown port {p}")))?;
                let ok = match *state {
                    "up" => w.port_live(&p),
                    "down" => !w.port_live(&p),
                    _ => sp.security.err_disabled,
                };
                (ok, String::new())
            }
            ["port", sw, local, "vlan", v] => {
                let p = parse_port_words(sw, local).map_err(|e| serr(n, e.to_string()))?;
                let got = w.fabric.port(&p).and_then(|sp| sp.mode.access_vlan()).map(|v| v.get());
                (got.map(|g| g.to_string()).as_deref() == Some(*v), format!("vlan {got:?}"))
            }
            ["description", sw, local, rest @ ..] => {
                let p = parse_port_words(sw, local).map_err(|e| serr(n, e.to_string()))?;
                let want = rest.join(" ");
                let got = w.fabric.port(&p).map(|sp| sp.description.clone()).unwrap_or_default();
                (got == want, format!("description {got:?}"))
            }
            ["ghost-isolation"] => {
                let v = w.ghost_violations();
                let sessions = w.ghosts.sessions().count();
                (v.is_empty() && sessions > 0, if v.is_empty() { format!("{sessions} sessions clean") } else { v.join("; ") })
            }
            ["ghost-sessions", k] => {
                let got = w.ghosts.active().count();
                (got.to_string() == *k, format!("{got} active"))
            }
            ["host-ghost-bytes", h, k] => {
                let got = w.host_rx.get(&HostId::new(h)).map_or(0, |r| r.ghost_bytes);
                (got.to_string() == *k, format!("{got} bytes"))
            }
            ["vlans-equal", name] => {
                let saved = self.saved.get(*name).ok_or_else(|| serr(n, format!("no saved vlans `{name}`")))?;
                let now = w.vlan_snapshot();
                let diff: Vec<String> = now
                    .iter()
                    .filter(|(p, v)| saved.get(*p) != Some(*v))
                    .map(|(p, v)| format!("{p}={v:?}"))
                    .collect();
                (diff.is_empty(), diff.join(","))
            }
            ["alerts", kind, rest @ ..] => {
                let want: usize = rest.last().and_then(|k| k.parse().ok()).ok_or_else(|| serr(n, "alerts needs a count"))?;
                let conf = match rest.first() {
                    Some(&"high") => Some(Confidence::High),
                    Some(&"low") => Some(Confidence::Low),
                    _ => None,
                };
                let got = w
                    .log()
                    .iter()
                    .filter(|e| match (&e.payload, *kind) {
                        (CampusEvent::Spoof { confidence, .. }, "spoof") => conf.is_none_or(|c| c == *confidence),
                        (CampusEvent::Violation { alerted, .. }, "violation") => *alerted,
                        (CampusEvent::Ha(_), "ha") => true,
                        _ => false,
                    })
                    .count();
                (got == want, format!("{got} {kind} alerts"))
            }
            ["route", host, dst, proto, dport, verdict] => {
                let dst: Ipv4Addr = dst.parse().map_err(|_| serr(n, "bad address"))?;
                let proto = parse_proto(n, proto)?;
                let dport: u16 = dport.parse().map_err(|_| serr(n, "bad port"))?;
                let r = self.plane.world.send_packet(&HostId::new(host), dst, proto, 40000, dport, 64);
                self.plane.world.settle();
                let got = match r {
                    Ok(r) => match r.verdict() {
                        Verdict::Accept => "accept".to_string(),
                        Verdict::Drop => "drop".to_string(),
                        Verdict::Reject(w) => format!("reject-{w}"),
                    },
                    Err(e) => format!("error: {e}"),
                };
                (got == *verdict || got.starts_with(&format!("{verdict}-")), got)
            }
            ["quarantined", host] => (w.is_quarantined(host), String::new()),
            ["not-quarantined", host] => (!w.is_quarantined(host), String::new()),
            ["locate", host, rest @ ..] => {
                let got = self.plane.inventory.locate(host).map(|a| a.line()).unwrap_or_else(|e| e.to_string());
                let want = rest.join(" ");
                (got.contains(&want), got)
            }
            ["inventory-consistent"] => {
                let diffs = self.plane.inventory_diffs();
                (diffs.is_empty(), diffs.join("; "))
            }
            ["audit-rows", k] => {
                let got = self.plane.inventory.audit.len();
                (got.to_string() == *k, format!("{got} rows"))
            }
            ["converged"] => {
                let r = self.plane.converge();
                (r.is_ok(), r.err().map(|e| e.to_string()).unwrap_or_default())
            }
            _ => return Err(serr(n, format!("unknown assertion `{text}`"))),
        })
    }
}
