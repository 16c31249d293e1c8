//! Pack-buffer allocation with optional per-thread accounting.
//!
//! Every auxiliary buffer the engine allocates goes through [`PackBuf`], so a
//! caller can measure the peak number of live workspace elements of any
//! engine call with [`track_allocations`].

use std::cell::RefCell;
use std::ops::{Deref, DerefMut};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AllocStats {
    /// Largest number of simultaneously live workspace elements.
    pub peak_elements: usize,
    /// Number of workspace buffers allocated.
    pub allocations: usize,
}

#[derive(Default)]
struct Tracker {
    live: usize,
    stats: AllocStats,
}

thread_local! {
    static TRACKER: RefCell<Option<Tracker>> = const { RefCell::new(None) };
}

/// Runs `f` and reports the workspace it allocated on this thread.
pub fn track_allocations<R>(f: impl FnOnce() -> R) -> (R, AllocStats) {
    let prev = TRACKER.with(|t| t.borrow_mut().replace(Tracker::default()));
    let out = f();
    let stats = TRACKER.with(|t| {
        let mut slot = t.borrow_mut();
        let stats = slot.as_ref().map(|t| t.stats).unwrap_or_default();
        *slot = prev;
        stats
    });
    (out, stats)
}

fn record(delta: isize) {
    TRACKER.with(|t| {
        if let Some(t) = t.borrow_mut().as_mut() {
            if delta >= 0 {
                t.live += delta as usize;
                t.stats.allocations += 1;
                t.stats.peak_elements = t.stats.peak_elements.max(t.live);
            } else {
                t.live = t.live.saturating_sub((-delta) as usize);
            }
        }
    });
}

/// Zero-initialised workspace buffer.
pub struct PackBuf<A> {
    data: Vec<A>,
}

impl<A: Copy + Default> PackBuf<A> {
    pub fn new(len: usize) -> Self {
        record(len as isize);
        Self {
            data: vec![A::default(); len],
        }
    }
}

impl<A> Drop for PackBuf<A> {
    fn drop(&mut self) {
        record(-(self.data.len() as isize));
    }
}

impl<A> Deref for PackBuf<A> {
    type Target = [A];

    fn deref(&self) -> &[A] {
        &self.data
    }
}

impl<A> DerefMut for PackBuf<A> {
    fn deref_mut(&mut self) -> &mut [A] {
        &mut self.data
    }
}
