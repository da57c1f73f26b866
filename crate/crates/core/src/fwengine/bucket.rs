use serde::{Deserialize, Serialize};

use crate::simcore::SimTime;

/// One token expressed in the bucket's internal unit. With rates in tokens
/// per second and time in nanoseconds, `rate * dt_ns` lands exactly on this
/// scale, so refill never rounds.
const UNIT: u128 = 1_000_000_000;

/// Continuous-refill token bucket: capacity `burst`, `avg` tokens per
/// second, refilled lazily on each check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBucket {
    pub avg: u32,
    pub burst: u32,
    /// Tokens scaled by `UNIT`.
    level: u128,
    last: SimTime,
}

impl TokenBucket {
    /// Starts full.
    pub fn new(avg: u32, burst: u32, now: SimTime) -> Self {
        TokenBucket { avg, burst, level: burst as u128 * UNIT, last: now }
    }

    fn refill(&mut self, now: SimTime) {
        if now > self.last {
            let dt = (now - self.last).ticks() as u128;
            let cap = self.burst as u128 * UNIT;
            self.level = (self.level + self.avg as u128 * dt).min(cap);
            self.last = now;
        }
    }

    /// Whole tokens available at `now`.
    pub fn tokens(&mut self, now: SimTime) -> u32 {
        self.refill(now);
        (self.level / UNIT) as u32
    }

    /// Consumes one token if available.
    pub fn try_take(&mut self, now: SimTime) -> bool {
        self.refill(now);
        if self.level >= UNIT {
            self.level -= UNIT;
            true
        } else {
            false
        }
    }
}
