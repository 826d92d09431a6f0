//! Retry with exponential backoff, and a shared requests-per-minute limiter.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Exponential backoff: the wait before attempt `n` (n >= 2) is
/// `base_delay * factor^(n - 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

/// How a single attempt failed.
#[derive(Debug)]
pub enum Failure<E> {
    /// Worth another attempt (rate limited, 5xx, timeout, dropped connection).
    Transient(E),
    /// Retrying cannot help (auth, malformed request).
    Permanent(E),
}

/// Final error after the policy gave up.
#[derive(Debug)]
pub struct GaveUp<E> {
    pub error: E,
    pub attempts: u32,
    pub permanent: bool,
}

impl RetryPolicy {
    /// Policy with no sleeping between attempts; for tests and scripted runs.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            factor: 2.0,
        }
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        self.base_delay.mul_f64(self.factor.powi(attempt as i32 - 2))
    }

    /// Delays between consecutive attempts for a run that uses every attempt.
    pub fn schedule(&self) -> Vec<Duration> {
        (2..=self.max_attempts).map(|n| self.delay_before(n)).collect()
    }

    /// Runs `op` until it succeeds, fails permanently, or attempts run out.
    /// On success returns the value and the number of attempts used.
    pub fn run<T, E>(
        &self,
        mut op: impl FnMut(u32) -> Result<T, Failure<E>>,
    ) -> Result<(T, u32), GaveUp<E>> {
        let max = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok((v, attempt)),
                Err(Failure::Permanent(error)) => {
                    return Err(GaveUp {
                        error,
                        attempts: attempt,
                        permanent: true,
                    })
                }
                Err(Failure::Transient(error)) => {
                    if attempt >= max {
                        return Err(GaveUp {
                            error,
                            attempts: attempt,
                            permanent: false,
                        });
                    }
                    attempt += 1;
                    let wait = self.delay_before(attempt);
                    if !wait.is_zero() {
                        log::debug!("attempt {} failed, retrying in {:?}", attempt - 1, wait);
                        thread::sleep(wait);
                    }
                }
            }
        }
    }
}

/// Token bucket shared by every worker talking to one endpoint.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    /// `rpm` requests per minute with a burst of one request.
    pub fn per_minute(rpm: u32) -> Self {
        Self::with_burst(rpm, 1)
    }

    pub fn with_burst(rpm: u32, burst: u32) -> Self {
        let burst = burst.max(1) as f64;
        Self {
            per_second: rpm.max(1) as f64 / 60.0,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("limiter lock");
                let now = Instant::now();
                let (tokens, last) = *state;
                let refilled = (tokens + now.duration_since(last).as_secs_f64() * self.per_second)
                    .min(self.burst);
                if refilled >= 1.0 {
                    *state = (refilled - 1.0, now);
                    return;
                }
                *state = (refilled, now);
                Duration::from_secs_f64((1.0 - refilled) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}
