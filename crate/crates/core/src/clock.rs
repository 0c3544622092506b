//! Process-wide monotonic clock used for snapshot and event timestamps.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

static EPOCH: OnceLock<Instant> = OnceLock::new();

/// Monotonic time elapsed since the first call in this process.
pub fn monotonic_now() -> Duration {
    let epoch = *EPOCH.get_or_init(Instant::now);
    epoch.elapsed()
}

/// Milliseconds since the process epoch, for event records.
pub fn monotonic_ms() -> u64 {
    monotonic_now().as_millis() as u64
}
