//! Lock-free split deque for real threads.
//!
//! The owner half ([`Owner`]) issues `push`, `pop`, `update_bottom` and
//! `pop_bottom`; any number of [`Stealer`]s issue `pop_top` concurrently.
//!
//! Memory-ordering contract:
//! - entry writes happen-before the `official_bottom` publication in
//!   `update_bottom` (release store);
//! - thieves read `age`, then `official_bottom`, then the entry, separated by
//!   acquire loads and a full fence;
//! - the owner's `official_bottom` decrement in `pop_bottom` is a release
//!   store, ordered before its `age` read by a full fence.
//!
//! The deque has a fixed capacity; overflowing it panics. Atomics are
//! abstracted behind [`Platform`] so the deque can be model-checked.

use std::cell::Cell;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{Age, BottomResult, PopResult, SyncEvents, TopResult};
use crate::dag::NodeId;

/// A 64-bit atomic word.
pub trait AtomicWord: Send + Sync {
    fn new(v: u64) -> Self;
    fn load(&self, order: Ordering) -> u64;
    fn store(&self, v: u64, order: Ordering);
    fn compare_exchange(
        &self,
        current: u64,
        new: u64,
        success: Ordering,
        failure: Ordering,
    ) -> Result<u64, u64>;
}

/// Source of atomics and fences.
pub trait Platform: Send + Sync + 'static {
    type Word: AtomicWord;
    fn fence(order: Ordering);
}

/// `std::sync::atomic`.
#[derive(Debug)]
pub struct StdPlatform;

impl AtomicWord for AtomicU64 {
    #[inline]
    fn new(v: u64) -> Self {
        AtomicU64::new(v)
    }
    #[inline]
    fn load(&self, order: Ordering) -> u64 {
        AtomicU64::load(self, order)
    }
    #[inline]
    fn store(&self, v: u64, order: Ordering) {
        AtomicU64::store(self, v, order)
    }
    #[inline]
    fn compare_exchange(&self, c: u64, n: u64, s: Ordering, f: Ordering) -> Result<u64, u64> {
        AtomicU64::compare_exchange(self, c, n, s, f)
    }
}

impl Platform for StdPlatform {
    type Word = AtomicU64;
    #[inline]
    fn fence(order: Ordering) {
        std::sync::atomic::fence(order)
    }
}

/// Values storable in a deque slot.
pub trait DequeItem: Copy + Send {
    fn into_word(self) -> u64;
    fn from_word(w: u64) -> Self;
}

impl DequeItem for u64 {
    fn into_word(self) -> u64 {
        self
    }
    fn from_word(w: u64) -> Self {
        w
    }
}

impl DequeItem for u32 {
    fn into_word(self) -> u64 {
        self as u64
    }
    fn from_word(w: u64) -> Self {
        w as u32
    }
}

impl DequeItem for NodeId {
    fn into_word(self) -> u64 {
        self.0 as u64
    }
    fn from_word(w: u64) -> Self {
        NodeId(w as u32)
    }
}

struct Inner<P: Platform> {
    entries: Box<[P::Word]>,
    private_bottom: P::Word,
    official_bottom: P::Word,
    age: P::Word,
}

impl<P: Platform> Inner<P> {
    #[inline]
    fn slot(&self, i: u64) -> &P::Word {
        match self.entries.get(i as usize) {
            Some(s) => s,
            None => panic!("split deque overflow: capacity {}", self.entries.len()),
        }
    }
}

/// Owner half. `Send` but not `Sync`: exactly one thread drives it.
pub struct Owner<T, P: Platform = StdPlatform> {
    inner: Arc<Inner<P>>,
    _marker: PhantomData<(T, Cell<()>)>,
}

/// Thief half; cheap to clone and share.
pub struct Stealer<T, P: Platform = StdPlatform> {
    inner: Arc<Inner<P>>,
    _marker: PhantomData<fn() -> T>,
}

impl<T, P: Platform> Clone for Stealer<T, P> {
    fn clone(&self) -> Self {
        Stealer {
            inner: self.inner.clone(),
            _marker: PhantomData,
        }
    }
}

/// Creates an empty deque holding at most `capacity` nodes between resets.
pub fn split_deque<T: DequeItem>(capacity: usize) -> (Owner<T>, Stealer<T>) {
    split_deque_on::<T, StdPlatform>(capacity)
}

/// [`split_deque`] over an explicit atomics platform.
pub fn split_deque_on<T: DequeItem, P: Platform>(capacity: usize) -> (Owner<T, P>, Stealer<T, P>) {
    assert!(capacity < u32::MAX as usize, "capacity must fit the 32-bit top index");
    let inner = Arc::new(Inner::<P> {
        entries: (0..capacity).map(|_| P::Word::new(0)).collect(),
        private_bottom: P::Word::new(0),
        official_bottom: P::Word::new(0),
        age: P::Word::new(0),
    });
    (
        Owner {
            inner: inner.clone(),
            _marker: PhantomData,
        },
        Stealer {
            inner,
            _marker: PhantomData,
        },
    )
}

use Ordering::{Acquire, Relaxed, Release, SeqCst};

impl<T: DequeItem, P: Platform> Owner<T, P> {
    pub fn stealer(&self) -> Stealer<T, P> {
        Stealer {
            inner: self.inner.clone(),
            _marker: PhantomData,
        }
    }

    pub fn capacity(&self) -> usize {
        self.inner.entries.len()
    }

    /// Nodes in the private part.
    pub fn private_len(&self) -> usize {
        let d = &self.inner;
        (d.private_bottom.load(Relaxed) - d.official_bottom.load(Relaxed)) as usize
    }

    pub fn push(&self, node: T) -> SyncEvents {
        let d = &self.inner;
        let p = d.private_bottom.load(Relaxed);
        d.slot(p).store(node.into_word(), Relaxed);
        d.private_bottom.store(p + 1, Relaxed);
        SyncEvents::NONE
    }

    pub fn pop(&self) -> (PopResult<T>, SyncEvents) {
        let d = &self.inner;
        let p = d.private_bottom.load(Relaxed);
        // The owner is the only writer of both bottoms.
        if p == d.official_bottom.load(Relaxed) {
            return (PopResult::Race, SyncEvents::NONE);
        }
        let p = p - 1;
        let node = T::from_word(d.slot(p).load(Relaxed));
        d.private_bottom.store(p, Relaxed);
        (PopResult::Node(node), SyncEvents::NONE)
    }

    pub fn update_bottom(&self) -> SyncEvents {
        let d = &self.inner;
        let p = d.private_bottom.load(Relaxed);
        let o = d.official_bottom.load(Relaxed);
        if p > o {
            d.official_bottom.store(o + 1, Release);
        }
        SyncEvents::FENCE
    }

    /// Must only be called with an empty private part.
    pub fn pop_bottom(&self) -> (BottomResult<T>, SyncEvents) {
        let d = &self.inner;
        let mut sync = SyncEvents::FENCE;
        let o = d.official_bottom.load(Relaxed);
        debug_assert_eq!(d.private_bottom.load(Relaxed), o);
        if o == 0 {
            return (BottomResult::Empty, sync);
        }
        let o = o - 1;
        // Release: a thief reading this value must also see the entries
        // below it, and a plain store does not extend the release sequence
        // of the earlier exposure.
        d.official_bottom.store(o, Release);
        P::fence(SeqCst);
        let node = T::from_word(d.slot(o).load(Relaxed));
        let old_word = d.age.load(Acquire);
        let old = Age::unpack(old_word);
        if o > old.top as u64 {
            d.private_bottom.store(o, Relaxed);
            return (BottomResult::Node(node), sync);
        }
        d.official_bottom.store(0, Relaxed);
        d.private_bottom.store(0, Relaxed);
        let new = old.reset().pack();
        if o == old.top as u64 {
            let won = d.age.compare_exchange(old_word, new, SeqCst, Relaxed).is_ok();
            sync += SyncEvents::cas(won);
            if won {
                return (BottomResult::Node(node), sync);
            }
        }
        d.age.store(new, SeqCst);
        (BottomResult::Empty, sync)
    }
}

impl<T: DequeItem, P: Platform> Stealer<T, P> {
    pub fn pop_top(&self) -> (TopResult<T>, SyncEvents) {
        let d = &self.inner;
        let old_word = d.age.load(Acquire);
        P::fence(SeqCst);
        let old = Age::unpack(old_word);
        let bottom = d.official_bottom.load(Acquire);
        if bottom <= old.top as u64 {
            return (TopResult::Empty, SyncEvents::NONE);
        }
        let node = T::from_word(d.slot(old.top as u64).load(Relaxed));
        let new = Age {
            top: old.top + 1,
            tag: old.tag,
        }
        .pack();
        let won = d.age.compare_exchange(old_word, new, SeqCst, Relaxed).is_ok();
        let sync = SyncEvents::FENCE + SyncEvents::cas(won);
        if won {
            (TopResult::Node(node), sync)
        } else {
            (TopResult::Abort, sync)
        }
    }

    /// Racy size of the public part; only a hint.
    pub fn public_len_hint(&self) -> usize {
        let d = &self.inner;
        let top = Age::unpack(d.age.load(Relaxed)).top as u64;
        d.official_bottom.load(Relaxed).saturating_sub(top) as usize
    }
}
