//! A minimal fork-join API over the lock-free split deque.
//!
//! `join(a, b)` pushes `b` onto the calling worker's deque, runs `a`, and
//! then tries to take `b` back with `pop` and, on RACE, `pop_bottom`. If a
//! thief got `b` first, the caller steals other work until `b` completes.
//! Each `join` is a milestone: the caller checks its `targeted` flag there
//! and exposes a node when asked to.
//!
//! Jobs live on the stack of the `join` that created them; the deque holds
//! raw pointers to them. A thief can only find a job while its creating
//! `join` is still waiting for it, which keeps the pointer valid.

use std::cell::{Cell, RefCell, UnsafeCell};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Backoff, Mode, Padded, WorkerReport};
use crate::scheduler::random_victim;
use crate::sim::stream_seed;
use crate::split_deque::atomic::{split_deque, DequeItem, Owner, Stealer};
use crate::split_deque::{BottomResult, PopResult, SyncEvents, TopResult};

/// Address of a job header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct JobPtr(u64);

impl DequeItem for JobPtr {
    fn into_word(self) -> u64 {
        self.0
    }
    fn from_word(w: u64) -> Self {
        JobPtr(w)
    }
}

#[repr(C)]
struct JobHeader {
    run: unsafe fn(*const JobHeader, &Worker),
}

#[repr(C)]
struct StackJob<F, R> {
    header: JobHeader,
    func: UnsafeCell<Option<F>>,
    result: UnsafeCell<Option<std::thread::Result<R>>>,
    done: AtomicBool,
}

impl<F, R> StackJob<F, R>
where
    F: FnOnce(&Worker) -> R + Send,
    R: Send,
{
    fn new(f: F) -> Self {
        StackJob {
            header: JobHeader {
                run: Self::run_stolen,
            },
            func: UnsafeCell::new(Some(f)),
            result: UnsafeCell::new(None),
            done: AtomicBool::new(false),
        }
    }

    fn ptr(&self) -> JobPtr {
        JobPtr(&self.header as *const JobHeader as u64)
    }

    /// Runs the job on a thief.
    ///
    /// # Safety
    /// `this` must point to the header of a live `StackJob<F, R>` that no
    /// other thread runs.
    unsafe fn run_stolen(this: *const JobHeader, w: &Worker) {
        // SAFETY: `header` is the first field of a `repr(C)` struct.
        let job = unsafe { &*(this as *const Self) };
        // SAFETY: exactly one party removed the pointer from the deque, so
        // nobody else touches `func` or `result`.
        let f = unsafe { (*job.func.get()).take() }.expect("job run twice");
        let r = panic::catch_unwind(AssertUnwindSafe(|| f(w)));
        unsafe { *job.result.get() = Some(r) };
        job.done.store(true, Ordering::Release);
    }

    /// Runs the job on the thread that created it.
    fn run_inline(&self, w: &Worker) -> std::thread::Result<R> {
        // SAFETY: the owner took the pointer back, so no thief has it.
        let f = unsafe { (*self.func.get()).take() }.expect("job run twice");
        panic::catch_unwind(AssertUnwindSafe(|| f(w)))
    }

    fn take_result(&self) -> std::thread::Result<R> {
        debug_assert!(self.done.load(Ordering::Acquire));
        // SAFETY: `done` was observed with acquire ordering, so the thief's
        // write of `result` is visible and the thief no longer touches it.
        unsafe { (*self.result.get()).take() }.expect("stolen job finished without a result")
    }
}

struct PoolShared {
    stealers: Vec<Stealer<JobPtr>>,
    targeted: Vec<Padded<AtomicBool>>,
    done: AtomicBool,
}

/// A worker thread's handle, passed to every task it runs.
pub struct Worker {
    index: usize,
    owner: Owner<JobPtr>,
    shared: Arc<PoolShared>,
    rng: RefCell<ChaCha8Rng>,
    report: Cell<WorkerReport>,
    mode: Mode,
}

impl Worker {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn workers(&self) -> usize {
        self.shared.stealers.len()
    }

    fn tally(&self, f: impl FnOnce(&mut WorkerReport)) {
        let mut r = self.report.get();
        f(&mut r);
        self.report.set(r);
    }

    fn charge(&self, s: SyncEvents) {
        self.tally(|r| r.sync += s);
    }

    fn poll_targeted(&self) {
        let flag = &self.shared.targeted[self.index].0;
        if flag.load(Ordering::Relaxed) {
            self.charge(self.owner.update_bottom());
            flag.store(false, Ordering::Relaxed);
            self.tally(|r| r.exposures += 1);
        }
    }

    /// Runs `a` and `b`, potentially in parallel, and returns both results.
    /// A panic in either is re-raised once both have finished.
    pub fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce(&Worker) -> RA + Send,
        B: FnOnce(&Worker) -> RB + Send,
        RA: Send,
        RB: Send,
    {
        self.poll_targeted();
        let job = StackJob::new(b);
        let ptr = job.ptr();
        self.charge(self.owner.push(ptr));
        self.tally(|r| r.busy += 1);
        let ra = panic::catch_unwind(AssertUnwindSafe(|| a(self)));
        let rb = if self.reclaim(ptr) {
            job.run_inline(self)
        } else {
            self.wait_for(&job.done);
            job.take_result()
        };
        match (ra, rb) {
            (Ok(ra), Ok(rb)) => (ra, rb),
            (Err(p), _) | (_, Err(p)) => panic::resume_unwind(p),
        }
    }

    /// Takes the most recently pushed job back, unless a thief has it.
    fn reclaim(&self, ptr: JobPtr) -> bool {
        let (r, s) = self.owner.pop();
        self.charge(s);
        let got = match r {
            PopResult::Node(p) => Some(p),
            PopResult::Race => {
                let (r, s) = self.owner.pop_bottom();
                self.charge(s);
                match r {
                    BottomResult::Node(p) => Some(p),
                    BottomResult::Empty => None,
                }
            }
        };
        match got {
            Some(p) => {
                // Older jobs sit below `ptr`'s slot or were stolen before it.
                assert_eq!(p, ptr, "deque discipline violated");
                true
            }
            None => false,
        }
    }

    fn wait_for(&self, done: &AtomicBool) {
        let mut backoff = Backoff::new(self.mode);
        while !done.load(Ordering::Acquire) {
            self.poll_targeted();
            if self.steal_and_run() {
                backoff.reset();
            } else {
                backoff.snooze();
            }
        }
    }

    /// One steal attempt; runs the stolen job if there is one.
    fn steal_and_run(&self) -> bool {
        let Some(v) = random_victim(&mut self.rng.borrow_mut(), self.index, self.workers()) else {
            return false;
        };
        let (r, s) = self.shared.stealers[v].pop_top();
        self.charge(s);
        self.tally(|r| r.idle += 1);
        match r {
            TopResult::Node(p) => {
                self.tally(|r| r.steals_success += 1);
                let header = p.0 as *const JobHeader;
                // SAFETY: the pointer came out of a deque exactly once and its
                // creator is blocked in `join` until `done` is set.
                unsafe { ((*header).run)(header, self) };
                true
            }
            TopResult::Empty => {
                self.shared.targeted[v].0.store(true, Ordering::Relaxed);
                self.tally(|r| {
                    r.steals_empty += 1;
                    r.notifications += 1;
                });
                false
            }
            TopResult::Abort => {
                self.tally(|r| r.steals_abort += 1);
                false
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForkJoinReport {
    pub wall_time: Duration,
    pub per_worker: Vec<WorkerReport>,
}

impl ForkJoinReport {
    pub fn sync_totals(&self) -> SyncEvents {
        self.per_worker.iter().fold(SyncEvents::NONE, |a, w| a + w.sync)
    }

    pub fn notifications(&self) -> u64 {
        self.per_worker.iter().map(|w| w.notifications).sum()
    }
}

/// Runs fork-join computations on a fixed number of workers. Threads are
/// started per [`ForkJoinPool::run`] call and stopped when it returns.
#[derive(Debug, Clone)]
pub struct ForkJoinPool {
    workers: usize,
    mode: Mode,
    capacity: usize,
    seed: u64,
}

impl ForkJoinPool {
    pub fn new(workers: usize) -> Self {
        assert!(workers >= 1, "at least one worker is required");
        ForkJoinPool {
            workers,
            mode: Mode::Library,
            capacity: 1 << 16,
            seed: 0,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Maximum nesting depth of unresolved joins per worker.
    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Runs `root` on worker 0 and returns its result once every spawned
    /// task has finished. A panic in the computation is re-raised here.
    pub fn run<R, F>(&self, root: F) -> (R, ForkJoinReport)
    where
        F: FnOnce(&Worker) -> R + Send,
        R: Send,
    {
        let (owners, stealers): (Vec<_>, Vec<_>) =
            (0..self.workers).map(|_| split_deque::<JobPtr>(self.capacity)).unzip();
        let shared = Arc::new(PoolShared {
            stealers,
            targeted: (0..self.workers).map(|_| Padded(AtomicBool::new(false))).collect(),
            done: AtomicBool::new(false),
        });
        let make = |index: usize, owner: Owner<JobPtr>| Worker {
            index,
            owner,
            shared: shared.clone(),
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(stream_seed(self.seed, index))),
            report: Cell::new(WorkerReport::default()),
            mode: self.mode,
        };
        let start = Instant::now();
        let mut owners = owners.into_iter();
        let first = owners.next().expect("at least one worker");
        let (result, per_worker) = std::thread::scope(|sc| {
            let helpers: Vec<_> = owners
                .enumerate()
                .map(|(i, owner)| {
                    let w = make(i + 1, owner);
                    sc.spawn(move || {
                        let mut backoff = Backoff::new(w.mode);
                        while !w.shared.done.load(Ordering::Acquire) {
                            w.poll_targeted();
                            if w.steal_and_run() {
                                backoff.reset();
                            } else {
                                backoff.snooze();
                            }
                        }
                        w.report.get()
                    })
                })
                .collect();
            let w0 = make(0, first);
            let result = panic::catch_unwind(AssertUnwindSafe(|| root(&w0)));
            shared.done.store(true, Ordering::Release);
            let mut per_worker = vec![w0.report.get()];
            for h in helpers {
                per_worker.push(h.join().unwrap_or_else(|e| panic::resume_unwind(e)));
            }
            (result, per_worker)
        });
        let report = ForkJoinReport {
            wall_time: start.elapsed(),
            per_worker,
        };
        match result {
            Ok(r) => (r, report),
            Err(p) => panic::resume_unwind(p),
        }
    }
}

/// Runs `task` on a fresh pool of `workers` threads.
pub fn run_forkjoin<R, F>(task: F, workers: usize) -> (R, ForkJoinReport)
where
    F: FnOnce(&Worker) -> R + Send,
    R: Send,
{
    ForkJoinPool::new(workers).run(task)
}

/// Naive doubly recursive Fibonacci, one `join` per call.
pub fn fib(w: &Worker, n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let (a, b) = w.join(|w| fib(w, n - 1), |w| fib(w, n - 2));
    a + b
}

/// Sums `values` by halving, one `join` per internal node.
pub fn tree_sum(w: &Worker, values: &[u64]) -> u64 {
    match values.len() {
        0 => 0,
        1 => values[0],
        n => {
            let (l, r) = values.split_at(n / 2);
            let (a, b) = w.join(|w| tree_sum(w, l), |w| tree_sum(w, r));
            a.wrapping_add(b)
        }
    }
}
