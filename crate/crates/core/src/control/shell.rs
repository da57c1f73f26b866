//! Line-oriented shell over the command set.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Actor, Command, ControlError, FaultSpec, Plane};
use crate::inventory::InventoryDb;
use crate::simcore::SimTime;
use crate::topology::{HostId, PortRef};

pub const USAGE: &str = "\
commands:
  locate <host>
  port <switch> <port> [vlan <n> | clear | desc <text>]
  ports <switch>
  quarantine <host> <reason>
  unquarantine <host>
  ghost start <analyst> <vlan> <server> <member>...   (host, jack, port or sw:1/0/a-b)
  ghost run <id> <bytes>
  ghost stop <id>
  fault <spec>
  view <name> [filter]
  blocked
  topology
  run <duration>
  converge
  time
  help";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShellError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// One operator session.
pub struct Shell<'a> {
    pub plane: &'a mut Plane,
    pub actor: Actor,
}

/// `A11 0/40` and `A11 1/0/40` both mean `A11:1/0/40`.
pub fn parse_port_words(sw: &str, local: &str) -> Result<PortRef, ShellError> {
    PortRef::parse_local(sw, local).map_err(ShellError::Usage)
}

fn usage(msg: &str) -> ShellError {
    ShellError::Usage(msg.to_string())
}

impl<'a> Shell<'a> {
    pub fn new(plane: &'a mut Plane, actor: Actor) -> Self {
        Shell { plane, actor }
    }

    fn run(&mut self, cmd: Command) -> Result<String, ShellError> {
        let v = self.plane.execute(&self.actor, cmd, None)?;
        Ok(v.to_string())
    }

    /// Executes one line. Blank lines and comments give an empty reply.
    pub fn exec_line(&mut self, line: &str) -> Result<String, ShellError> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(String::new());
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["help"] => Ok(USAGE.to_string()),
            ["locate", host] => Ok(self.plane.locate(&self.actor, host)?),
            ["port", sw, local, "vlan", v] => {
                let port = parse_port_words(sw, local)?;
                let vlan = v.parse().map_err(|_| usage("vlan must be a number"))?;
                self.run(Command::MovePortVlan { port, vlan })
            }
            ["port", sw, local, "clear"] => {
                let port = parse_port_words(sw, local)?;
                self.run(Command::ClearSticky { port })
            }
            ["port", sw, local, "desc", ..] => {
                let port = parse_port_words(sw, local)?;
                let text = line.split_once(" desc ").map(|(_, t)| t.trim()).unwrap_or("").to_string();
                self.run(Command::SetDescription { port, text })
            }
            ["port", sw, local] => {
                let port = parse_port_words(sw, local)?;
                let all = self.plane.ports(&self.actor, Some(sw))?;
                let row = all
                    .as_array()
                    .and_then(|a| a.iter().find(|r| r["port"] == port.to_string()))
                    .cloned()
                    .ok_or_else(|| ControlError::TargetUnknown(format!("port {port}")))?;
                Ok(row.to_string())
            }
            ["ports", sw] => {
                let v = self.plane.ports(&self.actor, Some(sw))?;
                let mut out = String::new();
                for r in v.as_array().into_iter().flatten() {
                    out.push_str(&format!(
                        "{:<18} {:<7} {:>5} {:<5} {}\n",
                        r["port"].as_str().unwrap_or(""),
                        r["mode"].as_str().unwrap_or(""),
                        r["vlan"].as_u64().map_or("-".into(), |v| v.to_string()),
                        if r["link_up"].as_bool() == Some(true) { "up" } else { "down" },
                        r["description"].as_str().unwrap_or("")
                    ));
                }
                Ok(out)
            }
            ["quarantine", host, reason @ ..] if !reason.is_empty() => {
                self.run(Command::Quarantine { host: host.to_string(), reason: reason.join(" ") })
            }
            ["unquarantine", host] => self.run(Command::Unquarantine { host: host.to_string() }),
            ["ghost", "start", analyst, vlan, server, members @ ..] if !members.is_empty() => {
                let mut manifest = format!("analyst {analyst}\nvlan {vlan}\nserver {server}\n");
                for m in members {
                    if m.contains(':') {
                        for p in expand_port_range(m).ok_or_else(|| usage(&format!("bad port or range `{m}`")))? {
                            manifest.push_str(&format!("port {p}\n"));
                        }
                    } else {
                        let kind = if self.plane.world.topo.hosts.contains_key(&HostId::new(m)) { "host" } else { "jack" };
                        manifest.push_str(&format!("{kind} {m}\n"));
                    }
                }
                self.run(Command::StartGhost { manifest })
            }
            ["ghost", "run", id, bytes] => {
                let id = id.parse().map_err(|_| usage("session id must be a number"))?;
                let image_bytes = parse_bytes(bytes).ok_or_else(|| usage("bytes like 10G, 700M or 4096"))?;
                self.run(Command::RunGhost { id, image_bytes })
            }
            ["ghost", "stop", id] => {
                let id = id.parse().map_err(|_| usage("session id must be a number"))?;
                self.run(Command::TeardownGhost { id })
            }
            ["fault", ..] if words.len() > 1 => {
                let fault: FaultSpec = line["fault".len()..].trim().parse().map_err(ShellError::Usage)?;
                self.run(Command::InjectFault { fault })
            }
            ["view", name, filter @ ..] => {
                let rows = self.plane.query(&self.actor, name, &filter.join(" "))?;
                Ok(InventoryDb::render(&rows))
            }
            ["blocked"] => Ok(self.plane.blocked_report(&self.actor)?),
            ["topology"] => Ok(serde_json::to_string_pretty(&self.plane.topology(&self.actor)?).expect("json")),
            ["run", d] => {
                let d: SimTime = d.parse().map_err(ShellError::Usage)?;
                self.plane.advance(d);
                Ok(format!("t={}", self.plane.now()))
            }
            ["converge"] => {
                self.plane.converge()?;
                Ok(format!("converged t={}", self.plane.now()))
            }
            ["time"] => Ok(format!("t={}", self.plane.now())),
            _ => Err(ShellError::Usage(format!("unknown command `{line}`; try `help`"))),
        }
    }

    /// Candidates for the word being typed: commands first, then hosts
    /// and switches.
    pub fn complete(&self, partial: &str) -> Vec<String> {
        let words: Vec<&str> = partial.split_whitespace().collect();
        let last = if partial.ends_with(' ') { "" } else { words.last().copied().unwrap_or("") };
        let first_word = words.len() <= 1 && !partial.ends_with(' ');
        let mut out: Vec<String> = if first_word {
            ["locate", "port", "ports", "quarantine", "unquarantine", "ghost", "fault", "view", "blocked", "topology", "run", "converge", "time", "help"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        } else {
            let topo = &self.plane.world.topo;
            let mut v: Vec<String> = topo.hosts.keys().map(|h| h.to_string()).collect();
            v.extend(topo.switches.keys().map(|s| s.to_string()));
            if words.first() == Some(&"port") && words.len() >= 2 {
                let sw = words[1];
                v.extend(self.plane.world.fabric.ports().filter(|p| p.port.switch.as_str() == sw).map(|p| format!("{}/0/{}", p.port.unit, p.port.port)));
            }
            v
        };
        out.retain(|c| c.starts_with(last));
        out.sort();
        out.dedup();
        out
    }

    /// Reads commands until end of input, writing replies and errors.
    pub fn repl(&mut self, input: impl BufRead, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "{}> ", self.actor.role)?;
        out.flush()?;
        for line in input.lines() {
            let line = line?;
            if matches!(line.trim(), "quit" | "exit") {
                break;
            }
            match self.exec_line(&line) {
                Ok(s) if s.is_empty() => {}
                Ok(s) => writeln!(out, "{}", s.trim_end())?,
                Err(e) => writeln!(out, "error: {e}")?,
            }
            write!(out, "{}> ", self.actor.role)?;
            out.flush()?;
        }
        writeln!(out)
    }
}

/// `10G`, `700M`, `64K` or plain bytes; powers of 1000.
pub fn parse_bytes(s: &str) -> Option<u64> {
    let (num, mult) = match s.chars().last()? {
        'G' | 'g' => (&s[..s.len() - 1], 1_000_000_000),
        'M' | 'm' => (&s[..s.len() - 1], 1_000_000),
        'K' | 'k' => (&s[..s.len() - 1], 1_000),
        _ => (s, 1),
    };
    num.parse::<u64>().ok()?.checked_mul(mult)
}

/// `B00a:1/0/1-44` expands to 44 ports; a plain port passes through.
pub fn expand_port_range(s: &str) -> Option<Vec<String>> {
    let (head, last) = s.rsplit_once('/')?;
    match last.split_once('-') {
        None => Some(vec![s.parse::<PortRef>().ok()?.to_string()]),
        Some((a, b)) => {
            let (a, b): (u16, u16) = (a.parse().ok()?, b.parse().ok()?);
            (a <= b).then(|| (a..=b).map(|n| format!("{head}/{n}")).collect())
        }
    }
}
