//! Short real-thread episodes on the lock-free split deque, recorded as
//! histories for the relaxed-semantics checker.
//!
//! An episode starts from an empty deque, runs one owner script against a
//! few thieves, and ends with the owner draining its deque, so each history
//! begins and ends at a quiescent point. Timestamps come from one shared
//! SeqCst counter drawn immediately before and after each invocation.

use std::sync::Barrier;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::semantics::history::{History, Method, Outcome, Recorder};
use crate::split_deque::atomic::{split_deque, Owner, Stealer};
use crate::split_deque::{BottomResult, PopResult, TopResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeConfig {
    pub thieves: usize,
    pub max_pushes: usize,
    pub steals_per_thief: usize,
    /// Episodes with more non-aborting invocations are re-run.
    pub max_non_aborting: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            thieves: 2,
            max_pushes: 3,
            steals_per_thief: 2,
            max_non_aborting: crate::semantics::SEARCH_BOUND,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Push(u64),
    Expose,
    Take,
}

fn owner_script(rng: &mut ChaCha8Rng, pushes: usize) -> Vec<Step> {
    let mut s = Vec::new();
    let mut pending = 0;
    for id in 1..=pushes as u64 {
        s.push(Step::Push(id));
        pending += 1;
        while rng.random_bool(0.5) {
            if pending > 0 && rng.random_bool(0.4) {
                s.push(Step::Take);
                pending -= 1;
            } else {
                s.push(Step::Expose);
            }
        }
    }
    s
}

fn take(owner: &Owner<u64>, rec: &Recorder) -> Option<u64> {
    let r = rec.record(0, Method::Pop, None, || {
        let (r, _) = owner.pop();
        let o = match r {
            PopResult::Node(n) => Outcome::Node(n),
            PopResult::Race => Outcome::Race,
        };
        (r, o)
    });
    match r {
        PopResult::Node(n) => Some(n),
        PopResult::Race => rec.record(0, Method::PopBottom, None, || match owner.pop_bottom().0 {
            BottomResult::Node(n) => (Some(n), Outcome::Node(n)),
            BottomResult::Empty => (None, Outcome::Empty),
        }),
    }
}

fn thief(id: u32, s: &Stealer<u64>, rec: &Recorder, attempts: usize, barrier: &Barrier) {
    barrier.wait();
    for _ in 0..attempts {
        rec.record(id, Method::PopTop, None, || {
            let o = match s.pop_top().0 {
                TopResult::Node(n) => Outcome::Node(n),
                TopResult::Empty => Outcome::Empty,
                TopResult::Abort => Outcome::Abort,
            };
            ((), o)
        });
        std::hint::spin_loop();
    }
}

/// Runs one episode on real threads.
pub fn record_episode(cfg: &EpisodeConfig, rng: &mut ChaCha8Rng) -> History {
    loop {
        let pushes = rng.random_range(1..=cfg.max_pushes.max(1));
        let script = owner_script(rng, pushes);
        let (owner, stealer) = split_deque::<u64>(cfg.max_pushes + 1);
        let rec = Recorder::new();
        let barrier = Barrier::new(cfg.thieves + 1);
        std::thread::scope(|sc| {
            for t in 0..cfg.thieves {
                let (s, rec, barrier) = (stealer.clone(), &rec, &barrier);
                sc.spawn(move || thief(t as u32 + 1, &s, rec, cfg.steals_per_thief, barrier));
            }
            barrier.wait();
            for step in &script {
                match *step {
                    Step::Push(n) => rec.record(0, Method::Push, Some(n), || {
                        owner.push(n);
                        ((), Outcome::Unit)
                    }),
                    Step::Expose => rec.record(0, Method::UpdateBottom, None, || {
                        owner.update_bottom();
                        ((), Outcome::Unit)
                    }),
                    Step::Take => {
                        take(&owner, &rec);
                    }
                }
            }
            while take(&owner, &rec).is_some() {}
        });
        let h = rec.into_history();
        let live = h.events.iter().filter(|e| !e.is_abort()).count();
        if live <= cfg.max_non_aborting {
            return h;
        }
    }
}

/// `count` episodes from one seed.
pub fn record_episodes(cfg: &EpisodeConfig, seed: u64, count: usize) -> Vec<History> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| record_episode(cfg, &mut rng)).collect()
}
