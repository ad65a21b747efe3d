//! Rolling-window rate limiter with an injectable clock, so tests can assert
//! the request budget with virtual time.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Monotonic time source. The system clock sleeps for real; the test clock
/// advances virtually and records every sleep.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock: `sleep` advances time instantly and is recorded.
#[derive(Default)]
pub struct TestClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl TestClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for TestClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
        self.sleeps.lock().unwrap().push(d);
    }
}

/// Admits at most `budget` acquisitions per rolling `window`, sleeping on the
/// caller's thread until a slot frees up.
pub struct RateLimiter<'c> {
    budget: usize,
    window: Duration,
    clock: &'c dyn Clock,
    admitted: Mutex<VecDeque<Duration>>,
}

impl<'c> RateLimiter<'c> {
    pub fn new(budget: usize, window: Duration, clock: &'c dyn Clock) -> Self {
        Self {
            budget: budget.max(1),
            window,
            clock,
            admitted: Mutex::new(VecDeque::new()),
        }
    }

    /// Block until within budget; returns the admission timestamp.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let now = self.clock.now();
                let mut admitted = self.admitted.lock().unwrap();
                while admitted
                    .front()
                    .is_some_and(|&t| t + self.window <= now)
                {
                    admitted.pop_front();
                }
                if admitted.len() < self.budget {
                    admitted.push_back(now);
                    return now;
                }
                *admitted.front().expect("budget >= 1") + self.window - now
            };
            self.clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_is_respected_in_every_rolling_window() {
        let clock = TestClock::new();
        let limiter = RateLimiter::new(5, Duration::from_secs(3600), &clock);
        let times: Vec<Duration> = (0..23).map(|_| limiter.acquire()).collect();
        for i in 0..times.len() {
            let window_end = times[i] + Duration::from_secs(3600);
            let in_window = times[i..]
                .iter()
                .filter(|&&t| t < window_end)
                .count();
            assert!(in_window <= 5, "window starting at {:?} holds {}", times[i], in_window);
        }
    }

    #[test]
    fn no_sleep_under_budget() {
        let clock = TestClock::new();
        let limiter = RateLimiter::new(10, Duration::from_secs(60), &clock);
        for _ in 0..10 {
            limiter.acquire();
        }
        assert!(clock.sleeps().is_empty());
    }
}
