use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

/// Millisecond time source. Sessions, ticks and latency measurements all
/// read the same clock so a simulated clock makes runs reproducible.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;

    /// Blocks (or, for a simulated clock, jumps) until `now_ms() >= t_ms`.
    fn sleep_until(&self, t_ms: u64);
}

/// Epoch-millisecond wall clock.
#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }

    fn sleep_until(&self, t_ms: u64) {
        let now = self.now_ms();
        if t_ms > now {
            std::thread::sleep(Duration::from_millis(t_ms - now));
        }
    }
}

/// Manually advanced clock starting at a fixed instant. Time never moves
/// backwards.
#[derive(Debug, Default)]
pub struct SimClock(AtomicU64);

impl SimClock {
    pub fn new(start_ms: u64) -> Self {
        SimClock(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, delta_ms: u64) -> u64 {
        self.0.fetch_add(delta_ms, Ordering::SeqCst) + delta_ms
    }

    pub fn set(&self, t_ms: u64) {
        self.0.fetch_max(t_ms, Ordering::SeqCst);
    }
}

impl Clock for SimClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, t_ms: u64) {
        self.set(t_ms);
    }
}
