//! Time source used for solver traces.

/// Monotonic microsecond clock.
pub trait Clock {
    fn now_us(&self) -> u64;
}

/// Clock that never advances; used when no platform timer is available.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_us(&self) -> u64 {
        0
    }
}
