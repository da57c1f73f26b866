//! Deterministic discrete-event engine.
//!
//! The [`Scheduler`] owns the virtual clock, the pending-event queue and the
//! append-only [`EventLog`]. Events scheduled for the same instant are
//! processed in insertion order (their `seq`), which makes every run with
//! identical inputs produce an identical log.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time in integer nanoseconds since simulation start.
#[derive(
    Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(n: u64) -> SimTime {
        SimTime(n)
    }
    pub const fn from_micros(us: u64) -> SimTime {
        SimTime(us * 1_000)
    }
    pub const fn from_millis(ms: u64) -> SimTime {
        SimTime(ms * 1_000_000)
    }
    pub const fn from_secs(s: u64) -> SimTime {
        SimTime(s * 1_000_000_000)
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn checked_sub(self, other: SimTime) -> Option<SimTime> {
        self.0.checked_sub(other.0).map(SimTime)
    }

    pub fn mul(self, k: u64) -> SimTime {
        SimTime(self.0.saturating_mul(k))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = self.0 / 1_000_000_000;
        let frac = self.0 % 1_000_000_000;
        if frac == 0 {
            write!(f, "{secs}s")
        } else {
            write!(f, "{secs}.{frac:09}s")
        }
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Parses durations such as `15s`, `250ms`, `1us`, `30ns`, `2m`, `1h`, `3d`.
impl FromStr for SimTime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let scale: u64 = match unit {
            "ns" => 1,
            "us" => 1_000,
            "ms" => 1_000_000,
            "s" | "" => 1_000_000_000,
            "m" => 60_000_000_000,
            "h" => 3_600_000_000_000,
            "d" => 86_400_000_000_000,
            _ => return Err(format!("bad duration unit in `{s}`")),
        };
        if let Some((whole, frac)) = num.split_once('.') {
            let w: u64 = whole.parse().map_err(|_| format!("bad duration `{s}`"))?;
            let digits = frac.len() as u32;
            let f: u64 = frac.parse().map_err(|_| format!("bad duration `{s}`"))?;
            let frac_ns = (f as u128 * scale as u128 / 10u128.pow(digits)) as u64;
            Ok(SimTime(w * scale + frac_ns))
        } else {
            let n: u64 = num.parse().map_err(|_| format!("bad duration `{s}`"))?;
            Ok(SimTime(n.saturating_mul(scale)))
        }
    }
}

/// Stable identifier handed out by [`Scheduler::schedule`]; equal to the
/// event's `seq`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    FrameArrival,
    LinkStateChange,
    TimerExpiry,
    CommandApplied,
    AlertRaised,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::FrameArrival => "FrameArrival",
            EventKind::LinkStateChange => "LinkStateChange",
            EventKind::TimerExpiry => "TimerExpiry",
            EventKind::CommandApplied => "CommandApplied",
            EventKind::AlertRaised => "AlertRaised",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind-specific event body. Implementors render themselves as ordered
/// key/value pairs for the line-oriented log export.
pub trait Payload: Clone {
    fn kind(&self) -> EventKind;
    fn fields(&self) -> Vec<(&'static str, String)>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event<P> {
    pub at: SimTime,
    pub seq: u64,
    pub payload: P,
}

impl<P: Payload> Event<P> {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn id(&self) -> EventId {
        EventId(self.seq)
    }

    /// `<ticks> <seq> <kind> <key=value ...>`
    pub fn log_line(&self) -> String {
        let mut line = format!("{} {} {}", self.at.ticks(), self.seq, self.kind());
        for (k, v) in self.payload.fields() {
            line.push(' ');
            line.push_str(k);
            line.push('=');
            push_value(&mut line, &v);
        }
        line
    }
}

fn push_value(out: &mut String, v: &str) {
    let needs_quote = v.is_empty() || v.chars().any(|c| c.is_whitespace() || c == '"' || c == '=');
    if needs_quote {
        out.push('"');
        for c in v.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                _ => out.push(c),
            }
        }
        out.push('"');
    } else {
        out.push_str(v);
    }
}

#[derive(Clone)]
struct Queued<P> {
    at: SimTime,
    seq: u64,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Append-only record of processed events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLog<P> {
    entries: Vec<Event<P>>,
}

impl<P> Default for EventLog<P> {
    fn default() -> Self {
        EventLog { entries: Vec::new() }
    }
}

impl<P: Payload> EventLog<P> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Event<P>] {
        &self.entries
    }

    /// Entries with log index `>= from`.
    pub fn since(&self, from: usize) -> &[Event<P>] {
        &self.entries[from.min(self.entries.len())..]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event<P>> {
        self.entries.iter()
    }

    /// Line-delimited export, one event per line.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.log_line());
            out.push('\n');
        }
        out
    }

    fn push(&mut self, e: Event<P>) {
        debug_assert!(self
            .entries
            .last()
            .is_none_or(|last| (last.at, last.seq) < (e.at, e.seq) || last.at < e.at));
        self.entries.push(e);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at {at} before the current clock {clock}")]
    PastTime { at: SimTime, clock: SimTime },
}

/// Virtual clock plus ordered event queue.
#[derive(Clone)]
pub struct Scheduler<P> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    log: EventLog<P>,
}

impl<P: Payload> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Payload> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler { clock: SimTime::ZERO, next_seq: 1, queue: BinaryHeap::new(), log: EventLog::default() }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn log(&self) -> &EventLog<P> {
        &self.log
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.at)
    }

    /// Enqueues `payload` at `at`. Fails with [`SimError::PastTime`] when `at`
    /// lies before the clock.
    pub fn schedule(&mut self, at: SimTime, payload: P) -> Result<EventId, SimError> {
        if at < self.clock {
            return Err(SimError::PastTime { at, clock: self.clock });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued { at, seq, payload }));
        Ok(EventId(seq))
    }

    /// Schedules relative to the current clock; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> EventId {
        let at = self.clock + delay;
        self.schedule(at, payload).expect("relative schedule is never in the past")
    }

    /// Pops the next event due at or before `until`, advances the clock to
    /// it and records it in the log.
    pub fn pop_due(&mut self, until: SimTime) -> Option<Event<P>> {
        match self.queue.peek() {
            Some(Reverse(q)) if q.at <= until => {}
            _ => return None,
        }
        let Reverse(q) = self.queue.pop()?;
        debug_assert!(q.at >= self.clock);
        self.clock = q.at;
        let ev = Event { at: q.at, seq: q.seq, payload: q.payload };
        self.log.push(ev.clone());
        Some(ev)
    }

    /// Moves the clock forward to `t` once no events remain before it.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.clock {
            debug_assert!(self.next_event_time().is_none_or(|n| n > t));
            self.clock = t;
        }
    }

    /// Processes every event with `at <= t` in `(at, seq)` order and leaves
    /// the clock at `t`. Handlers may schedule further events.
    pub fn run_until<F>(&mut self, t: SimTime, mut handler: F) -> Result<usize, SimError>
    where
        F: FnMut(&mut Scheduler<P>, &Event<P>),
    {
        if t < self.clock {
            return Err(SimError::PastTime { at: t, clock: self.clock });
        }
        let mut n = 0;
        while let Some(ev) = self.pop_due(t) {
            handler(self, &ev);
            n += 1;
        }
        self.advance_to(t);
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Note(&'static str);

    impl Payload for Note {
        fn kind(&self) -> EventKind {
            EventKind::TimerExpiry
        }
        fn fields(&self) -> Vec<(&'static str, String)> {
            vec![("note", self.0.to_string())]
        }
    }

    #[test]
    fn first_event_id_is_one_at_clock() {
        let mut s: Scheduler<Note> = Scheduler::new();
        assert_eq!(s.schedule(SimTime::ZERO, Note("down")).unwrap(), EventId(1));
    }

    #[test]
    fn past_time_rejected() {
        let mut s: Scheduler<Note> = Scheduler::new();
        s.run_until(SimTime::from_secs(5), |_, _| {}).unwrap();
        let err = s.schedule(SimTime::from_secs(4), Note("late")).unwrap_err();
        assert!(matches!(err, SimError::PastTime { .. }));
    }

    #[test]
    fn empty_queue_advances_clock() {
        let mut s: Scheduler<Note> = Scheduler::new();
        let n = s.run_until(SimTime::from_secs(10), |_, _| {}).unwrap();
        assert_eq!(n, 0);
        assert_eq!(s.clock(), SimTime::from_secs(10));
    }

    #[test]
    fn inclusive_bound() {
        let mut s: Scheduler<Note> = Scheduler::new();
        s.schedule(SimTime::from_secs(1), Note("a")).unwrap();
        s.schedule(SimTime::from_secs(2), Note("b")).unwrap();
        s.schedule(SimTime::from_secs(2), Note("c")).unwrap();
        assert_eq!(s.run_until(SimTime::from_secs(2), |_, _| {}).unwrap(), 3);
    }

    #[test]
    fn ties_follow_insertion_order_and_replay_identically() {
        fn run() -> String {
            let mut s: Scheduler<Note> = Scheduler::new();
            s.schedule(SimTime::from_secs(3), Note("x")).unwrap();
            s.schedule(SimTime::from_secs(3), Note("y")).unwrap();
            s.schedule(SimTime::from_secs(1), Note("z")).unwrap();
            s.run_until(SimTime::from_secs(4), |sch, ev| {
                if ev.payload.0 == "z" {
                    sch.schedule(SimTime::from_secs(3), Note("w")).unwrap();
                }
            })
            .unwrap();
            s.log().export()
        }
        let a = run();
        assert_eq!(a, run());
        let order: Vec<&str> = a.lines().map(|l| l.rsplit('=').next().unwrap()).collect();
        assert_eq!(order, vec!["z", "x", "y", "w"]);
    }

    #[test]
    fn durations_parse() {
        assert_eq!("15s".parse::<SimTime>().unwrap(), SimTime::from_secs(15));
        assert_eq!("250ms".parse::<SimTime>().unwrap(), SimTime::from_millis(250));
        assert_eq!("1.5s".parse::<SimTime>().unwrap(), SimTime::from_millis(1500));
        assert_eq!("2m".parse::<SimTime>().unwrap(), SimTime::from_secs(120));
        assert!("5parsecs".parse::<SimTime>().is_err());
    }

    #[test]
    fn log_line_quotes_values_with_spaces() {
        #[derive(Clone)]
        struct Desc;
        impl Payload for Desc {
            fn kind(&self) -> EventKind {
                EventKind::CommandApplied
            }
            fn fields(&self) -> Vec<(&'static str, String)> {
                vec![("d", "[Auto] machine.domain".into()), ("n", "3".into())]
            }
        }
        let e = Event { at: SimTime(7), seq: 2, payload: Desc };
        assert_eq!(e.log_line(), "7 2 CommandApplied d=\"[Auto] machine.domain\" n=3");
    }
}
