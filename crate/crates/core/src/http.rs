//! Retry policy shared by the HTTP clients.

use std::thread;
use std::time::Duration;

/// Exponential backoff: attempt `n` (0-based) waits `base * 2^n`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(5),
            timeout: Duration::from_secs(120),
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; used by tests against local mocks.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            timeout: Duration::from_secs(10),
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub(crate) enum Attempt<E> {
    /// Worth retrying (transport failure, 5xx).
    Transient(E),
    Fatal(E),
}

/// Runs `op` until it succeeds, fails fatally, or the attempts run out. The
/// last transient error is returned together with the number of attempts made.
pub(crate) fn with_retry<T, E>(
    policy: &RetryPolicy,
    mut op: impl FnMut() -> Result<T, Attempt<E>>,
) -> Result<T, (E, u32)> {
    let attempts = policy.max_attempts.max(1);
    let mut n = 0;
    loop {
        match op() {
            Ok(v) => return Ok(v),
            Err(Attempt::Fatal(e)) => return Err((e, n + 1)),
            Err(Attempt::Transient(e)) => {
                n += 1;
                if n >= attempts {
                    return Err((e, n));
                }
                log::debug!("transient failure, retry {n}/{attempts}");
                thread::sleep(policy.delay(n - 1));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_doubles_and_caps() {
        let p = RetryPolicy {
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
            ..RetryPolicy::default()
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(350));
        assert_eq!(p.delay(40), Duration::from_millis(350));
    }

    #[test]
    fn retries_are_bounded() {
        let mut calls = 0;
        let r: Result<(), _> = with_retry(&RetryPolicy::immediate(3), || {
            calls += 1;
            Err(Attempt::Transient("down"))
        });
        assert_eq!(r, Err(("down", 3)));
        assert_eq!(calls, 3);
    }

    #[test]
    fn fatal_stops_immediately() {
        let mut calls = 0;
        let r: Result<(), _> = with_retry(&RetryPolicy::immediate(5), || {
            calls += 1;
            Err(Attempt::Fatal("bad"))
        });
        assert_eq!(r, Err(("bad", 1)));
        assert_eq!(calls, 1);
    }
}
