//! Listing in the familiar `iptables -L` layout and the blocked-hosts
//! report handed to the service desk.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::*;

fn addr(m: &Option<AddrMatch>) -> String {
    match m {
        None => "anywhere".into(),
        Some(AddrMatch { label: Some(l), .. }) => l.clone(),
        Some(AddrMatch { cidr, .. }) if cidr.prefix_len() == 32 => cidr.network().to_string(),
        Some(AddrMatch { cidr, .. }) => cidr.to_string(),
    }
}

fn extras(r: &Rule) -> String {
    let mut parts: Vec<String> = Vec::new();
    if let (Some(p), Some(d)) = (r.matcher.proto, r.matcher.dport) {
        parts.push(format!("{p} dpt:{d}"));
    }
    if let Some(m) = r.matcher.mark {
        parts.push(format!("MARK match {m:#x}"));
    }
    if let Some(s) = r.matcher.state {
        parts.push(format!("state {s}"));
    }
    if let Some(l) = r.limit {
        parts.push(format!("limit: avg {}/sec burst {}", l.avg, l.burst));
    }
    match &r.target {
        Target::Mark(v) => parts.push(format!("MARK set {v:#x}")),
        Target::Reject(w) => parts.push(format!("reject-with {w}")),
        Target::Snat(to) => parts.push(format!("to:{to}")),
        _ => {}
    }
    if let Some(c) = &r.comment {
        parts.push(format!("/* {c} */"));
    }
    parts.join(" ")
}

fn row(out: &mut String, target: &str, prot: &str, opt: &str, src: &str, dst: &str, extra: &str) {
    let line = format!("{target:<11} {prot:<4} {opt:<3} {src:<15} {dst:<15} {extra}");
    out.push_str(line.trim_end());
    out.push('\n');
}

/// Every chain, builtins first, separated by blank lines.
pub fn dump(rs: &Ruleset) -> String {
    let mut out = String::new();
    for (i, c) in rs.chains.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match c.policy {
            Some(p) => writeln!(out, "Chain {} (policy {p})", c.name).expect("string write"),
            None => writeln!(out, "Chain {} ({} references)", c.name, rs.references(&c.name)).expect("string write"),
        }
        row(&mut out, "target", "prot", "opt", "source", "destination", "");
        for r in &c.rules {
            let prot = r.matcher.proto.map_or("all".to_string(), |p| p.to_string());
            row(&mut out, r.target.name(), &prot, "--", &addr(&r.matcher.src), &addr(&r.matcher.dst), &extras(r));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedRow {
    pub kind: String,
    pub name: String,
    pub address: String,
    pub since: String,
    pub reason: String,
    pub analyst: String,
}

/// Quarantined internal hosts followed by blocked external sites.
pub fn blocked_report(input: &CompileInput) -> Vec<BlockedRow> {
    let mut rows = Vec::new();
    for q in &input.quarantine {
        let address = match input.resolver.resolve(&q.hostname) {
            Ok(a) => a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            Err(_) => q.ip.clone(),
        };
        let reason = if q.os_tag.is_empty() { q.vuln_tag.clone() } else { format!("{} OS[{}]", q.vuln_tag, q.os_tag) };
        rows.push(BlockedRow {
            kind: "quarantine".into(),
            name: q.hostname.clone(),
            address,
            since: q.date.clone(),
            reason,
            analyst: q.analyst.clone(),
        });
    }
    for b in &input.profile.blocks {
        rows.push(BlockedRow {
            kind: "blocked-site".into(),
            name: b.spec.clone(),
            address: b.spec.clone(),
            since: "-".into(),
            reason: b.label.clone(),
            analyst: "-".into(),
        });
    }
    rows
}
