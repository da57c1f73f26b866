//! Policy source files and the compiler that turns them into a [`Ruleset`].
//! The file grammars are documented in `docs/policy-format.md`.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::*;

fn perr(line: usize, msg: impl Into<String>) -> FwError {
    FwError::ParseError { line, msg: msg.into() }
}

/// Lines with comments, blanks and `...` elisions removed.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#') && l != "...").then_some((i + 1, l))
    })
}

/// Name to address table used only while compiling.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticResolver {
    names: BTreeMap<String, Vec<Ipv4Addr>>,
}

impl StaticResolver {
    pub fn insert(&mut self, name: &str, addrs: Vec<Ipv4Addr>) {
        self.names.insert(name.to_string(), addrs);
    }

    pub fn resolve(&self, name: &str) -> Result<&[Ipv4Addr], FwError> {
        match self.names.get(name) {
            Some(a) if !a.is_empty() => Ok(a),
            _ => Err(FwError::UnresolvedName(name.to_string())),
        }
    }

    /// First name mapping to `addr`, for reverse lookups in reports.
    pub fn reverse(&self, addr: Ipv4Addr) -> Option<&str> {
        self.names.iter().find(|(_, v)| v.contains(&addr)).map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Expands an address spec: `any`, a CIDR or bare address, a name, or
    /// `name/prefix`. A name with k addresses yields k matches.
    pub fn expand(&self, spec: &str) -> Result<Vec<Option<AddrMatch>>, FwError> {
        if spec == "any" || spec == "anywhere" {
            return Ok(vec![None]);
        }
        if let Ok(c) = spec.parse::<Cidr>() {
            return Ok(vec![Some(AddrMatch::cidr(c))]);
        }
        let (name, prefix) = match spec.rsplit_once('/') {
            Some((n, p)) => (n, p.parse::<u8>().map_err(|_| FwError::UnresolvedName(spec.to_string()))?),
            None => (spec, 32),
        };
        let addrs = self.resolve(name)?;
        addrs
            .iter()
            .map(|a| {
                Cidr::new(*a, prefix)
                    .map(|c| Some(AddrMatch::named(c, spec)))
                    .map_err(|_| FwError::UnresolvedName(spec.to_string()))
            })
            .collect()
    }
}

/// `name addr [addr ...]` per line.
pub fn parse_resolver(text: &str) -> Result<StaticResolver, FwError> {
    let mut r = StaticResolver::default();
    for (line, l) in content_lines(text) {
        let mut words = l.split_whitespace();
        let name = words.next().expect("non-empty line");
        let addrs: Vec<Ipv4Addr> = words
            .map(|w| w.parse().map_err(|_| perr(line, format!("bad address `{w}`"))))
            .collect::<Result<_, _>>()?;
        if addrs.is_empty() {
            return Err(perr(line, format!("`{name}` has no addresses")));
        }
        r.names.entry(name.to_string()).or_default().extend(addrs);
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub analyst: String,
    pub date: String,
    pub ip: String,
    pub score: i64,
    pub os_tag: String,
    pub vuln_tag: String,
    pub hostname: String,
}

impl QuarantineEntry {
    /// The comment header line this entry is written with.
    pub fn header(&self) -> String {
        format!(
            "# {} {} {} {} OS[{}] {} VULNERABLE",
            self.analyst, self.date, self.ip, self.score, self.os_tag, self.vuln_tag
        )
    }
}

fn valid_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
}

/// Reads `# analyst date ip score OS[...] vuln VULNERABLE` headers.
fn parse_header(l: &str) -> Option<QuarantineEntry> {
    let body = l.strip_prefix('#')?.trim();
    let mut it = body.splitn(5, char::is_whitespace);
    let analyst = it.next()?;
    let date = it.next()?;
    let ip = it.next()?;
    let score: i64 = it.next()?.parse().ok()?;
    let rest = it.next()?.trim_start();
    if !valid_date(date) {
        return None;
    }
    let rest = rest.strip_prefix("OS[")?;
    let (os, rest) = rest.split_once(']')?;
    let mut tail = rest.split_whitespace();
    let vuln = tail.next()?;
    if tail.next()? != "VULNERABLE" || tail.next().is_some() {
        return None;
    }
    Some(QuarantineEntry {
        analyst: analyst.to_string(),
        date: date.to_string(),
        ip: ip.to_string(),
        score,
        os_tag: os.to_string(),
        vuln_tag: vuln.to_string(),
        hostname: String::new(),
    })
}

/// A header comment followed by the hostname line. Other comments and
/// blank lines are ignored; a hostname with no header gets empty tags.
pub fn parse_quarantine(text: &str) -> Result<Vec<QuarantineEntry>, FwError> {
    let mut out = Vec::new();
    let mut pending: Option<QuarantineEntry> = None;
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l == "..." {
            continue;
        }
        if l.starts_with('#') {
            if let Some(h) = parse_header(l) {
                pending = Some(h);
            }
            continue;
        }
        if l.split_whitespace().count() != 1 {
            return Err(perr(i + 1, format!("expected a single hostname, got `{l}`")));
        }
        let mut e = pending.take().unwrap_or(QuarantineEntry {
            analyst: "-".into(),
            date: "-".into(),
            ip: "-".into(),
            score: 0,
            os_tag: String::new(),
            vuln_tag: String::new(),
            hostname: String::new(),
        });
        e.hostname = l.to_string();
        out.push(e);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSite {
    pub cidr: Cidr,
    pub label: String,
}

/// `cidr label...` per line, in file order.
pub fn parse_patch_sites(text: &str) -> Result<Vec<PatchSite>, FwError> {
    content_lines(text)
        .map(|(line, l)| {
            let (c, label) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
            let cidr: Cidr = c.parse().map_err(|_| perr(line, format!("bad netblock `{c}`")))?;
            Ok(PatchSite { cidr, label: label.trim().to_string() })
        })
        .collect()
}

/// Widest netblocks first; equal sizes keep their file order.
pub fn sort_patch_sites(sites: &mut [PatchSite]) {
    sites.sort_by_key(|s| s.cidr.prefix_len());
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChokeEntry {
    pub host: String,
    pub avg: u32,
    pub burst: u32,
}

/// `host [avg burst]` or `host avg/burst` per line; defaults 20/20.
pub fn parse_chokes(text: &str) -> Result<Vec<ChokeEntry>, FwError> {
    content_lines(text)
        .map(|(line, l)| {
            let words: Vec<&str> = l.split_whitespace().collect();
            let num = |s: &str| s.parse::<u32>().map_err(|_| perr(line, format!("bad rate `{s}`")));
            let (avg, burst) = match words.as_slice() {
                [_] => (20, 20),
                [_, r] => {
                    let (a, b) = r.split_once('/').ok_or_else(|| perr(line, "expected avg/burst"))?;
                    (num(a)?, num(b)?)
                }
                [_, a, b] => (num(a)?, num(b)?),
                _ => return Err(perr(line, format!("bad choke line `{l}`"))),
            };
            if avg == 0 || burst == 0 {
                return Err(perr(line, "rates must be positive"));
            }
            Ok(ChokeEntry { host: words[0].to_string(), avg, burst })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutsideChoke {
    pub spec: String,
}

/// One address spec (`cidr` or `name/prefix`) per line.
pub fn parse_outside_chokes(text: &str) -> Result<Vec<OutsideChoke>, FwError> {
    content_lines(text)
        .map(|(line, l)| {
            if l.split_whitespace().count() != 1 {
                return Err(perr(line, format!("expected one netblock, got `{l}`")));
            }
            Ok(OutsideChoke { spec: l.to_string() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllowRule {
    pub proto: Option<Proto>,
    pub from: String,
    pub to: String,
    pub port: Option<u16>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRule {
    pub spec: String,
    pub label: String,
}

/// Per-firewall settings plus the service allow-list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyProfile {
    pub policies: BTreeMap<String, Policy>,
    pub mark: u32,
    pub quarantine: bool,
    pub local: Vec<String>,
    pub dns: Vec<String>,
    pub antivirus: Vec<(String, u16)>,
    pub established: bool,
    pub choke_limit: Limit,
    pub outside_limit: Limit,
    pub allows: Vec<AllowRule>,
    pub blocks: Vec<BlockRule>,
    pub snat: Vec<(Cidr, Ipv4Addr)>,
}

impl Default for PolicyProfile {
    fn default() -> Self {
        PolicyProfile {
            policies: BTreeMap::new(),
            mark: 0x2,
            quarantine: false,
            local: Vec::new(),
            dns: Vec::new(),
            antivirus: Vec::new(),
            established: true,
            choke_limit: Limit { avg: 20, burst: 20 },
            outside_limit: Limit { avg: 100, burst: 100 },
            allows: Vec::new(),
            blocks: Vec::new(),
            snat: Vec::new(),
        }
    }
}

fn parse_on_off(line: usize, v: Option<&str>) -> Result<bool, FwError> {
    match v {
        Some("on") => Ok(true),
        Some("off") => Ok(false),
        other => Err(perr(line, format!("expected on/off, got `{}`", other.unwrap_or("")))),
    }
}

fn parse_num(line: usize, s: Option<&str>) -> Result<u32, FwError> {
    let s = s.ok_or_else(|| perr(line, "missing number"))?;
    let v = match s.strip_prefix("0x") {
        Some(h) => u32::from_str_radix(h, 16),
        None => s.parse(),
    };
    v.map_err(|_| perr(line, format!("bad number `{s}`")))
}

impl PolicyProfile {
    pub fn parse(text: &str) -> Result<PolicyProfile, FwError> {
        let mut p = PolicyProfile::default();
        for (line, l) in content_lines(text) {
            let words: Vec<&str> = l.split_whitespace().collect();
            let arg = |i: usize| words.get(i).copied();
            match words[0] {
                "policy" => {
                    let chain = arg(1).ok_or_else(|| perr(line, "policy needs a chain"))?;
                    if !BUILTIN.contains(&chain) {
                        return Err(perr(line, format!("`{chain}` is not a builtin chain")));
                    }
                    let pol = match arg(2) {
                        Some("ACCEPT") => Policy::Accept,
                        Some("DROP") => Policy::Drop,
                        _ => return Err(perr(line, "policy must be ACCEPT or DROP")),
                    };
                    p.policies.insert(chain.to_string(), pol);
                }
                "mark" => p.mark = parse_num(line, arg(1))?,
                "quarantine" => p.quarantine = parse_on_off(line, arg(1))?,
                "established" => p.established = parse_on_off(line, arg(1))?,
                "local" => p.local.extend(words[1..].iter().map(|s| s.to_string())),
                "dns" => p.dns.extend(words[1..].iter().map(|s| s.to_string())),
                "antivirus" => {
                    let name = arg(1).ok_or_else(|| perr(line, "antivirus needs a name"))?;
                    let port = parse_num(line, arg(2))?;
                    p.antivirus.push((name.to_string(), port as u16));
                }
                "choke-limit" | "outside-limit" => {
                    let lim = Limit { avg: parse_num(line, arg(1))?, burst: parse_num(line, arg(2))? };
                    if lim.avg == 0 || lim.burst == 0 {
                        return Err(perr(line, "rates must be positive"));
                    }
                    if words[0] == "choke-limit" {
                        p.choke_limit = lim;
                    } else {
                        p.outside_limit = lim;
                    }
                }
                "allow" => {
                    // allow <proto> from <spec> to <spec> [port <n>]
                    let proto = arg(1).and_then(Proto::parse).ok_or_else(|| perr(line, "allow needs a protocol"))?;
                    let (from, to) = match (arg(2), arg(3), arg(4), arg(5)) {
                        (Some("from"), Some(f), Some("to"), Some(t)) => (f, t),
                        _ => return Err(perr(line, "expected `allow <proto> from <spec> to <spec>`")),
                    };
                    let port = match (arg(6), arg(7)) {
                        (Some("port"), n) => Some(parse_num(line, n)? as u16),
                        (None, _) => None,
                        _ => return Err(perr(line, "trailing words after allow rule")),
                    };
                    if port.is_some() && !matches!(proto, Some(Proto::Tcp | Proto::Udp)) {
                        return Err(perr(line, "port match needs tcp or udp"));
                    }
                    p.allows.push(AllowRule { proto, from: from.into(), to: to.into(), port });
                }
                "block" => {
                    let spec = arg(1).ok_or_else(|| perr(line, "block needs an address"))?;
                    p.blocks.push(BlockRule { spec: spec.into(), label: words[2..].join(" ") });
                }
                "snat" => {
                    let from: Cidr = arg(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| perr(line, "snat needs a source netblock"))?;
                    let to: Ipv4Addr = arg(2)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| perr(line, "snat needs a public address"))?;
                    p.snat.push((from, to));
                }
                other => return Err(perr(line, format!("unknown directive `{other}`"))),
            }
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileInput {
    pub quarantine: Vec<QuarantineEntry>,
    pub patch_sites: Vec<PatchSite>,
    pub chokes: Vec<ChokeEntry>,
    pub outside_chokes: Vec<OutsideChoke>,
    pub profile: PolicyProfile,
    pub resolver: StaticResolver,
}

fn rule(src: Option<AddrMatch>, dst: Option<AddrMatch>, target: Target) -> Rule {
    Rule::new(Matcher { src, dst, ..Matcher::default() }, target)
}

/// Builds the ruleset. Every name is resolved here; evaluation never looks
/// a name up.
pub fn compile(input: &CompileInput) -> Result<Ruleset, FwError> {
    let res = &input.resolver;
    let prof = &input.profile;
    let mut rs = Ruleset::new(Policy::Accept);
    for (chain, pol) in &prof.policies {
        rs.set_policy(chain, *pol)?;
    }

    if prof.quarantine {
        for q in &input.quarantine {
            for src in res.expand(&q.hostname)? {
                rs.push("PREROUTING", rule(src, None, Target::Mark(prof.mark)))?;
            }
        }
    }

    for (i, c) in input.chokes.iter().enumerate() {
        let name = format!("choke{:05}", i + 1);
        rs.add_chain(&name)?;
        for dst in res.expand(&c.host)? {
            rs.push("PREROUTING", rule(None, dst, Target::Jump(name.clone())))?;
        }
        rs.push(&name, rule(None, None, Target::Accept).limited(c.avg, c.burst))?;
        rs.push(&name, rule(None, None, Target::Drop))?;
    }

    if !input.outside_chokes.is_empty() {
        rs.add_chain("chokeOutsides")?;
        for o in &input.outside_chokes {
            for src in res.expand(&o.spec)? {
                rs.push("POSTROUTING", rule(src, None, Target::Jump("chokeOutsides".into())))?;
            }
        }
        let l = prof.outside_limit;
        rs.push("chokeOutsides", rule(None, None, Target::Accept).limited(l.avg, l.burst))?;
        rs.push("chokeOutsides", rule(None, None, Target::Drop))?;
    }
    for (from, to) in &prof.snat {
        rs.push("POSTROUTING", rule(Some(AddrMatch::cidr(*from)), None, Target::Snat(*to)))?;
    }

    if prof.quarantine {
        rs.add_chain("qrntine")?;
        rs.add_chain("patchSites")?;
        let fwd = Matcher { mark: Some(prof.mark), ..Matcher::default() };
        rs.push("FORWARD", Rule::new(fwd, Target::Jump("qrntine".into())))?;
        for spec in &prof.local {
            for dst in res.expand(spec)? {
                rs.push("qrntine", rule(None, dst, Target::Accept))?;
            }
        }
        for spec in &prof.dns {
            for dst in res.expand(spec)? {
                rs.push("qrntine", rule(None, dst, Target::Accept))?;
            }
        }
        for (name, port) in &prof.antivirus {
            for dst in res.expand(name)? {
                let m = Matcher { dst, proto: Some(Proto::Tcp), dport: Some(*port), ..Matcher::default() };
                rs.push("qrntine", Rule::new(m, Target::Accept))?;
            }
        }
        rs.push("qrntine", rule(None, None, Target::Jump("patchSites".into())))?;
        let tcp = Matcher { proto: Some(Proto::Tcp), ..Matcher::default() };
        rs.push("qrntine", Rule::new(tcp, Target::Reject(RejectWith::TcpReset)))?;
        rs.push("qrntine", rule(None, None, Target::Reject(RejectWith::IcmpPortUnreachable)))?;

        let mut sites = input.patch_sites.clone();
        sort_patch_sites(&mut sites);
        for s in &sites {
            let r = rule(None, Some(AddrMatch::cidr(s.cidr)), Target::Accept);
            rs.push("patchSites", if s.label.is_empty() { r } else { r.with_comment(&s.label) })?;
        }
    }

    for b in &prof.blocks {
        for m in res.expand(&b.spec)? {
            let dst = rule(None, m.clone(), Target::Drop);
            let src = rule(m, None, Target::Drop);
            if b.label.is_empty() {
                rs.push("FORWARD", dst)?;
                rs.push("FORWARD", src)?;
            } else {
                rs.push("FORWARD", dst.with_comment(&b.label))?;
                rs.push("FORWARD", src.with_comment(&b.label))?;
            }
        }
    }
    let forward_open = prof.policies.get("FORWARD").is_none_or(|p| *p == Policy::Accept);
    if prof.established && !forward_open {
        let m = Matcher { state: Some(ConnState::Established), ..Matcher::default() };
        rs.push("FORWARD", Rule::new(m, Target::Accept))?;
    }
    for a in &prof.allows {
        for src in res.expand(&a.from)? {
            for dst in res.expand(&a.to)? {
                let m = Matcher { src: src.clone(), dst, proto: a.proto, dport: a.port, ..Matcher::default() };
                rs.push("FORWARD", Rule::new(m, Target::Accept))?;
            }
        }
    }
    rs.validate()?;
    Ok(rs)
}
