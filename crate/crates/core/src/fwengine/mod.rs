//! Chain-based packet filter in the style of netfilter: builtin hooks,
//! user chains reached by jumps, first-match-wins evaluation, marks, rate
//! limiters and source NAT. Rulesets are immutable once built; limiter
//! state lives beside them so a swap can carry it over.

mod bucket;
mod dump;
mod policy;

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::Cidr;
use crate::simcore::SimTime;

pub use bucket::TokenBucket;
pub use dump::{blocked_report, BlockedRow};
pub use policy::{
    compile, parse_chokes, parse_outside_chokes, parse_patch_sites, parse_quarantine, parse_resolver, ChokeEntry,
    CompileInput, OutsideChoke, PatchSite, PolicyProfile, QuarantineEntry, StaticResolver,
};

pub const BUILTIN: [&str; 5] = ["PREROUTING", "INPUT", "FORWARD", "OUTPUT", "POSTROUTING"];

/// Hooks a forwarded packet passes, in order.
pub const FORWARD_PATH: [&str; 3] = ["PREROUTING", "FORWARD", "POSTROUTING"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FwError {
    #[error("name `{0}` does not resolve")]
    UnresolvedName(String),
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("duplicate chain `{0}`")]
    DuplicateChain(String),
    #[error("ruleset rejected: {0}")]
    ValidationFailed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
}

impl Proto {
    pub fn parse(s: &str) -> Option<Option<Proto>> {
        match s {
            "all" | "any" => Some(None),
            "tcp" => Some(Some(Proto::Tcp)),
            "udp" => Some(Some(Proto::Udp)),
            "icmp" => Some(Some(Proto::Icmp)),
            _ => None,
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Icmp => "icmp",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConnState {
    New,
    Established,
}

impl fmt::Display for ConnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConnState::New => "NEW",
            ConnState::Established => "ESTABLISHED",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    Accept,
    Drop,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Accept => "ACCEPT",
            Policy::Drop => "DROP",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectWith {
    TcpReset,
    IcmpPortUnreachable,
}

impl fmt::Display for RejectWith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectWith::TcpReset => "tcp-reset",
            RejectWith::IcmpPortUnreachable => "icmp-port-unreachable",
        })
    }
}

/// Address match plus the name it was written as, for listings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddrMatch {
    pub cidr: Cidr,
    pub label: Option<String>,
}

impl AddrMatch {
    pub fn cidr(cidr: Cidr) -> Self {
        AddrMatch { cidr, label: None }
    }

    pub fn named(cidr: Cidr, label: &str) -> Self {
        AddrMatch { cidr, label: Some(label.to_string()) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matcher {
    pub src: Option<AddrMatch>,
    pub dst: Option<AddrMatch>,
    pub proto: Option<Proto>,
    pub dport: Option<u16>,
    pub mark: Option<u32>,
    pub state: Option<ConnState>,
}

impl Matcher {
    #[inline]
    pub fn matches(&self, p: &Packet) -> bool {
        if let Some(s) = &self.src {
            if !s.cidr.contains(p.src) {
                return false;
            }
        }
        if let Some(d) = &self.dst {
            if !d.cidr.contains(p.dst) {
                return false;
            }
        }
        if let Some(pr) = self.proto {
            if pr != p.proto {
                return false;
            }
        }
        if let Some(port) = self.dport {
            if port != p.dport || p.proto == Proto::Icmp {
                return false;
            }
        }
        if let Some(m) = self.mark {
            if m != p.mark {
                return false;
            }
        }
        if let Some(st) = self.state {
            if st != p.state {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limit {
    pub avg: u32,
    pub burst: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Accept,
    Drop,
    Reject(RejectWith),
    Mark(u32),
    Jump(String),
    Return,
    Snat(Ipv4Addr),
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::Accept => "ACCEPT",
            Target::Drop => "DROP",
            Target::Reject(_) => "REJECT",
            Target::Mark(_) => "MARK",
            Target::Jump(c) => c,
            Target::Return => "RETURN",
            Target::Snat(_) => "SNAT",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub matcher: Matcher,
    pub limit: Option<Limit>,
    pub target: Target,
    pub comment: Option<String>,
}

impl Rule {
    pub fn new(matcher: Matcher, target: Target) -> Self {
        Rule { matcher, limit: None, target, comment: None }
    }

    pub fn limited(mut self, avg: u32, burst: u32) -> Self {
        self.limit = Some(Limit { avg, burst });
        self
    }

    pub fn with_comment(mut self, c: &str) -> Self {
        self.comment = Some(c.to_string());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub name: String,
    /// Only builtin chains carry a policy.
    pub policy: Option<Policy>,
    pub rules: Vec<Rule>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ruleset {
    pub version: u64,
    pub chains: Vec<Chain>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
    /// Per chain, per rule: resolved jump target.
    #[serde(skip)]
    jumps: Vec<Vec<Option<usize>>>,
}

impl Default for Ruleset {
    fn default() -> Self {
        Ruleset::new(Policy::Accept)
    }
}

impl Ruleset {
    /// Builtin chains only, all with `policy`.
    pub fn new(policy: Policy) -> Self {
        let mut rs = Ruleset { version: 0, chains: Vec::new(), index: BTreeMap::new(), jumps: Vec::new() };
        for name in BUILTIN {
            rs.chains.push(Chain { name: name.to_string(), policy: Some(policy), rules: Vec::new() });
        }
        rs.reindex();
        rs
    }

    fn reindex(&mut self) {
        self.index = self.chains.iter().enumerate().map(|(i, c)| (c.name.clone(), i)).collect();
    }

    pub fn set_policy(&mut self, chain: &str, policy: Policy) -> Result<(), FwError> {
        let c = self.chain_mut(chain).ok_or_else(|| FwError::ValidationFailed(format!("no chain {chain}")))?;
        if c.policy.is_none() {
            return Err(FwError::ValidationFailed(format!("{chain} is not a builtin chain")));
        }
        c.policy = Some(policy);
        Ok(())
    }

    pub fn add_chain(&mut self, name: &str) -> Result<(), FwError> {
        if self.index.contains_key(name) {
            return Err(FwError::DuplicateChain(name.to_string()));
        }
        self.chains.push(Chain { name: name.to_string(), policy: None, rules: Vec::new() });
        self.reindex();
        Ok(())
    }

    pub fn chain(&self, name: &str) -> Option<&Chain> {
        self.index.get(name).map(|&i| &self.chains[i])
    }

    fn chain_mut(&mut self, name: &str) -> Option<&mut Chain> {
        let i = *self.index.get(name)?;
        Some(&mut self.chains[i])
    }

    pub fn push(&mut self, chain: &str, rule: Rule) -> Result<(), FwError> {
        self.chain_mut(chain)
            .ok_or_else(|| FwError::ValidationFailed(format!("no chain {chain}")))?
            .rules
            .push(rule);
        Ok(())
    }

    pub fn rule_count(&self) -> usize {
        self.chains.iter().map(|c| c.rules.len()).sum()
    }

    /// Number of rules jumping to `name`.
    pub fn references(&self, name: &str) -> usize {
        self.chains
            .iter()
            .flat_map(|c| &c.rules)
            .filter(|r| matches!(&r.target, Target::Jump(t) if t == name))
            .count()
    }

    /// Checks jump targets, REJECT flavors and acyclicity, and resolves
    /// jumps for evaluation.
    pub fn validate(&mut self) -> Result<(), FwError> {
        self.reindex();
        for b in BUILTIN {
            if self.chain(b).is_none_or(|c| c.policy.is_none()) {
                return Err(FwError::ValidationFailed(format!("builtin chain {b} missing")));
            }
        }
        let mut jumps = Vec::with_capacity(self.chains.len());
        for c in &self.chains {
            let mut row = Vec::with_capacity(c.rules.len());
            for (i, r) in c.rules.iter().enumerate() {
                match &r.target {
                    Target::Jump(t) => {
                        let ti = *self.index.get(t).ok_or_else(|| {
                            FwError::ValidationFailed(format!("{} rule {}: jump to unknown chain {t}", c.name, i + 1))
                        })?;
                        if self.chains[ti].policy.is_some() {
                            return Err(FwError::ValidationFailed(format!("jump to builtin chain {t}")));
                        }
                        row.push(Some(ti));
                    }
                    Target::Reject(RejectWith::TcpReset) if r.matcher.proto != Some(Proto::Tcp) => {
                        return Err(FwError::ValidationFailed(format!(
                            "{} rule {}: tcp-reset needs a tcp match",
                            c.name,
                            i + 1
                        )));
                    }
                    _ => row.push(None),
                }
                if let Some(l) = r.limit {
                    if l.avg == 0 || l.burst == 0 {
                        return Err(FwError::ValidationFailed(format!("{} rule {}: empty limit", c.name, i + 1)));
                    }
                }
            }
            jumps.push(row);
        }
        // Depth-first search for cycles in the jump graph.
        let n = self.chains.len();
        let mut color = vec![0u8; n];
        fn visit(u: usize, jumps: &[Vec<Option<usize>>], color: &mut [u8], names: &[Chain]) -> Result<(), FwError> {
            color[u] = 1;
            for v in jumps[u].iter().flatten() {
                match color[*v] {
                    1 => {
                        return Err(FwError::ValidationFailed(format!(
                            "jump cycle through {} and {}",
                            names[u].name, names[*v].name
                        )))
                    }
                    0 => visit(*v, jumps, color, names)?,
                    _ => {}
                }
            }
            color[u] = 2;
            Ok(())
        }
        for u in 0..n {
            if color[u] == 0 {
                visit(u, &jumps, &mut color, &self.chains)?;
            }
        }
        self.jumps = jumps;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub proto: Proto,
    pub sport: u16,
    pub dport: u16,
    pub state: ConnState,
    pub mark: u32,
}

impl Packet {
    pub fn tcp(src: Ipv4Addr, dst: Ipv4Addr, dport: u16) -> Self {
        Packet { src, dst, proto: Proto::Tcp, sport: 40000, dport, state: ConnState::New, mark: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Drop,
    Reject(RejectWith),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept => f.write_str("ACCEPT"),
            Verdict::Drop => f.write_str("DROP"),
            Verdict::Reject(w) => write!(f, "REJECT({w})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub chain: String,
    /// 1-based rule position; `None` for the chain policy.
    pub rule: Option<usize>,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub verdict: Verdict,
    pub trace: Vec<TraceStep>,
    pub packet: Packet,
    pub version: u64,
    /// Source rewrite applied by an SNAT rule.
    pub snat: Option<Ipv4Addr>,
}

impl Evaluation {
    /// The verdict came from an explicit rule, not a chain policy.
    pub fn explicit(&self) -> bool {
        self.trace.last().is_some_and(|s| s.rule.is_some())
    }
}

/// Limiter state keyed by (chain name, rule index).
pub type Buckets = BTreeMap<(String, usize), TokenBucket>;

enum Flow {
    Terminal(Verdict),
    Accepted,
    FellOff,
}

/// Evaluates `packet` against `rs`, mutating only `buckets`.
pub fn evaluate(rs: &Ruleset, buckets: &mut Buckets, packet: Packet, at: SimTime, trace: bool) -> Evaluation {
    let mut pkt = packet;
    let mut steps = Vec::new();
    let mut snat = None;
    for hook in FORWARD_PATH {
        let ci = rs.index[hook];
        match walk(rs, ci, buckets, &mut pkt, at, &mut steps, &mut snat, trace) {
            Flow::Terminal(v) => {
                return Evaluation { verdict: v, trace: steps, packet: pkt, version: rs.version, snat };
            }
            Flow::Accepted => {}
            Flow::FellOff => {
                let pol = rs.chains[ci].policy.unwrap_or(Policy::Accept);
                steps.push(TraceStep { chain: hook.to_string(), rule: None, action: format!("policy {pol}") });
                if pol == Policy::Drop {
                    return Evaluation { verdict: Verdict::Drop, trace: steps, packet: pkt, version: rs.version, snat };
                }
            }
        }
    }
    Evaluation { verdict: Verdict::Accept, trace: steps, packet: pkt, version: rs.version, snat }
}

#[allow(clippy::too_many_arguments)]
fn walk(
    rs: &Ruleset,
    ci: usize,
    buckets: &mut Buckets,
    pkt: &mut Packet,
    at: SimTime,
    steps: &mut Vec<TraceStep>,
    snat: &mut Option<Ipv4Addr>,
    trace: bool,
) -> Flow {
    let chain = &rs.chains[ci];
    for (i, r) in chain.rules.iter().enumerate() {
        if !r.matcher.matches(pkt) {
            continue;
        }
        if let Some(l) = r.limit {
            let b = buckets.entry((chain.name.clone(), i)).or_insert_with(|| TokenBucket::new(l.avg, l.burst, at));
            if !b.try_take(at) {
                if trace {
                    steps.push(TraceStep { chain: chain.name.clone(), rule: Some(i + 1), action: "limit-exceeded".into() });
                }
                continue;
            }
        }
        let mut step = |action: String| steps.push(TraceStep { chain: chain.name.clone(), rule: Some(i + 1), action });
        match &r.target {
            Target::Accept => {
                step("ACCEPT".into());
                return Flow::Accepted;
            }
            Target::Drop => {
                step("DROP".into());
                return Flow::Terminal(Verdict::Drop);
            }
            Target::Reject(w) => {
                step(format!("REJECT {w}"));
                return Flow::Terminal(Verdict::Reject(*w));
            }
            Target::Mark(m) => {
                pkt.mark = *m;
                if trace {
                    step(format!("MARK set {m:#x}"));
                }
            }
            Target::Return => {
                step("RETURN".into());
                return Flow::FellOff;
            }
            Target::Snat(to) => {
                *snat = Some(*to);
                pkt.src = *to;
                step(format!("SNAT to:{to}"));
                return Flow::Accepted;
            }
            Target::Jump(name) => {
                if trace {
                    step(format!("JUMP {name}"));
                }
                let ti = rs.jumps[ci][i].expect("validated jump");
                match walk(rs, ti, buckets, pkt, at, steps, snat, trace) {
                    Flow::FellOff => {}
                    other => return other,
                }
            }
        }
    }
    Flow::FellOff
}

/// A ruleset bound to a router pair, with its limiter state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Firewall {
    active: Ruleset,
    buckets: Buckets,
}

impl Default for Firewall {
    fn default() -> Self {
        let mut rs = Ruleset::default();
        rs.validate().expect("builtin-only ruleset is valid");
        Firewall { active: rs, buckets: Buckets::new() }
    }
}

impl Firewall {
    pub fn new(mut rs: Ruleset) -> Result<Self, FwError> {
        rs.validate()?;
        rs.version = rs.version.max(1);
        Ok(Firewall { active: rs, buckets: Buckets::new() })
    }

    pub fn active(&self) -> &Ruleset {
        &self.active
    }

    pub fn version(&self) -> u64 {
        self.active.version
    }

    pub fn buckets(&self) -> &Buckets {
        &self.buckets
    }

    /// Validates and installs `rs` in one step. On failure the old ruleset
    /// stays active. Limiter state carries over for rules whose position
    /// and parameters are unchanged.
    pub fn swap(&mut self, mut rs: Ruleset) -> Result<u64, FwError> {
        rs.validate()?;
        rs.version = self.active.version + 1;
        let old = std::mem::take(&mut self.buckets);
        for ((chain, idx), b) in old {
            let same = |r: &Ruleset| r.chain(&chain).and_then(|c| c.rules.get(idx)).and_then(|r| r.limit);
            if same(&rs).is_some() && same(&rs) == same(&self.active) {
                self.buckets.insert((chain, idx), b);
            }
        }
        self.active = rs;
        Ok(self.active.version)
    }

    pub fn evaluate(&mut self, packet: Packet, at: SimTime) -> Evaluation {
        evaluate(&self.active, &mut self.buckets, packet, at, true)
    }

    /// Same walk without building a trace, for bulk traffic.
    pub fn evaluate_fast(&mut self, packet: Packet, at: SimTime) -> Verdict {
        evaluate(&self.active, &mut self.buckets, packet, at, false).verdict
    }

    pub fn dump(&self) -> String {
        dump::dump(&self.active)
    }
}
