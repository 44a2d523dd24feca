//! Replays one single-owner operation sequence on the simulator deque, the
//! lock-free deque (driven from one thread) and the reference deque, and
//! compares results and charged synchronization after every operation.

use lcws::split_deque::atomic::split_deque;
use lcws::split_deque::{BottomResult, PopResult, ReferenceDeque, SplitDeque, SyncEvents, TopResult};
use proptest::prelude::*;

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Push,
    /// `pop`, falling back to `popBottom` on `RACE` as the scheduler does.
    Take,
    Update,
    Steal,
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => Just(Op::Push),
        3 => Just(Op::Take),
        2 => Just(Op::Update),
        2 => Just(Op::Steal),
    ]
}

pub fn ops(max_len: usize) -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(op(), 0..max_len)
}

const FENCE_CAS: SyncEvents = SyncEvents {
    cas_attempts: 1,
    cas_successes: 1,
    fences: 1,
};

pub fn replay(ops: &[Op]) -> Result<(), String> {
    let mut sim = SplitDeque::new();
    let (owner, stealer) = split_deque::<u64>(ops.len() + 1);
    let mut reference = ReferenceDeque::new();
    let mut next = 0u64;
    for (k, op) in ops.iter().enumerate() {
        let here = |what: &str| format!("op {k} ({op:?}): {what}");
        match op {
            Op::Push => {
                next += 1;
                reference.push(next);
                let (a, b) = (sim.push(next), owner.push(next));
                if !a.is_none() || !b.is_none() {
                    return Err(here("push charged synchronization"));
                }
            }
            Op::Update => {
                reference.update_bottom();
                let (a, b) = (sim.update_bottom(), owner.update_bottom());
                if a != SyncEvents::FENCE || b != SyncEvents::FENCE {
                    return Err(here("updateBottom must charge one fence"));
                }
            }
            Op::Steal => {
                let expect = reference.pop_top();
                let expect_sync = match expect {
                    TopResult::Node(_) => FENCE_CAS,
                    _ => SyncEvents::NONE,
                };
                let (a, sa) = sim.pop_top();
                let (b, sb) = stealer.pop_top();
                if a != expect || b != expect {
                    return Err(here(&format!("expected {expect:?}, got {a:?} / {b:?}")));
                }
                if sa != expect_sync || sb != expect_sync {
                    return Err(here(&format!("charged {sa:?} / {sb:?}")));
                }
            }
            Op::Take => {
                let expect = reference.pop();
                let (a, sa) = sim.pop();
                let (b, sb) = owner.pop();
                if a != expect || b != expect {
                    return Err(here(&format!("pop expected {expect:?}, got {a:?} / {b:?}")));
                }
                if !sa.is_none() || !sb.is_none() {
                    return Err(here("pop charged synchronization"));
                }
                if expect == PopResult::Race {
                    let last = reference.public_len() == 1;
                    let expect = reference.pop_bottom().ok_or_else(|| here("contract"))?;
                    let expect_sync = if last && matches!(expect, BottomResult::Node(_)) {
                        FENCE_CAS
                    } else {
                        SyncEvents::FENCE
                    };
                    let (a, sa) = sim.pop_bottom();
                    let (b, sb) = owner.pop_bottom();
                    if a != expect || b != expect {
                        return Err(here(&format!("popBottom expected {expect:?}, got {a:?} / {b:?}")));
                    }
                    if sa != expect_sync || sb != expect_sync {
                        return Err(here(&format!("popBottom charged {sa:?} / {sb:?}")));
                    }
                }
            }
        }
        if sim.public_len() != reference.public_len() || sim.private_len() != reference.private_len() {
            return Err(here("part sizes diverged"));
        }
        let contents: Vec<u64> = sim.public_slice().iter().chain(sim.private_slice()).copied().collect();
        if !contents.iter().eq(reference.iter()) {
            return Err(here("contents diverged"));
        }
        if owner.private_len() != reference.private_len() || stealer.public_len_hint() != reference.public_len() {
            return Err(here("atomic deque part sizes diverged"));
        }
    }
    Ok(())
}
