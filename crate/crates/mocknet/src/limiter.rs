use std::collections::VecDeque;
use std::time::{Duration, Instant};

use tokio::sync::Mutex;

const WINDOW: Duration = Duration::from_secs(1);
// Extra spacing so grants stay inside the bound even with timer jitter.
const MARGIN: Duration = Duration::from_millis(25);

/// Sliding-window limiter: at most `per_second` grants in any one-second
/// window. All callers share one queue, so it is also the crawl's gate.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: usize,
    recent: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(per_second: u32) -> Self {
        assert!(per_second > 0, "rate limit must be positive");
        RateLimiter { per_second: per_second as usize, recent: Mutex::new(VecDeque::new()) }
    }

    /// Waits for a free slot and returns the grant time.
    pub async fn acquire(&self) -> Instant {
        // The lock is held while sleeping so waiters are served in order.
        let mut recent = self.recent.lock().await;
        loop {
            let now = Instant::now();
            while recent.front().is_some_and(|&t| now.duration_since(t) >= WINDOW + MARGIN) {
                recent.pop_front();
            }
            if recent.len() < self.per_second {
                recent.push_back(now);
                return now;
            }
            let oldest = *recent.front().expect("window is full");
            tokio::time::sleep_until((oldest + WINDOW + MARGIN).into()).await;
        }
    }
}

/// Largest number of instants falling in any half-open window of length
/// `window`. `times` must be sorted.
pub fn max_in_window(times: &[Duration], window: Duration) -> usize {
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..times.len() {
        while times[hi] - times[lo] >= window {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}
