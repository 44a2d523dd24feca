//! Runs the lock-free split deque on loom's atomics.

use std::sync::atomic::Ordering;

use lcws::split_deque::atomic::{AtomicWord, Platform};

pub struct LoomWord(loom::sync::atomic::AtomicU64);

impl AtomicWord for LoomWord {
    fn new(v: u64) -> Self {
        LoomWord(loom::sync::atomic::AtomicU64::new(v))
    }
    fn load(&self, order: Ordering) -> u64 {
        self.0.load(order)
    }
    fn store(&self, v: u64, order: Ordering) {
        self.0.store(v, order)
    }
    fn compare_exchange(&self, c: u64, n: u64, s: Ordering, f: Ordering) -> Result<u64, u64> {
        self.0.compare_exchange(c, n, s, f)
    }
}

pub struct LoomPlatform;

impl Platform for LoomPlatform {
    type Word = LoomWord;
    fn fence(order: Ordering) {
        loom::sync::atomic::fence(order)
    }
}
