//! Per-backend in-flight request limiting and retry policy.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

/// Counting semaphore bounding concurrent requests to one backend.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().expect("limiter poisoned")
    }

    /// Block until a slot is free; the slot is released when the guard drops.
    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.max {
            n = self.released.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        InFlightGuard { limiter: self }
    }
}

pub struct InFlightGuard<'a> {
    limiter: &'a InFlightLimiter,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().expect("limiter poisoned");
        *n -= 1;
        self.limiter.released.notify_one();
    }
}

/// Bounded exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt; total attempts = retries + 1.
    pub retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_secs(2),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(retries: u32) -> Self {
        Self {
            retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}
