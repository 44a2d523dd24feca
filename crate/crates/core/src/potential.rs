//! Potential-function analysis of full simulator traces.
//!
//! A ready node `u` of weight `w` carries potential `4^(3w-2)` while
//! assigned, `4^(3w-1)` while stealable (in a public part) and `4^(3w)`
//! while queued privately. All arithmetic is exact: ratios are compared by
//! cross-multiplying big integers.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dag::NodeId;
use crate::sim::{ProcSnapshot, Trace, TraceLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeStatus {
    Assigned,
    Stealable,
    Private,
}

impl NodeStatus {
    fn exponent(self, w: u32) -> u64 {
        let base = 3 * w as u64;
        match self {
            NodeStatus::Assigned => base - 2,
            NodeStatus::Stealable => base - 1,
            NodeStatus::Private => base,
        }
    }
}

/// `4^(3w-2)`, `4^(3w-1)` or `4^(3w)`.
///
/// # Panics
/// If `w < 1`.
pub fn node_potential(w: u32, status: NodeStatus) -> BigUint {
    assert!(w >= 1, "weights are at least 1, got {w}");
    BigUint::from(1u8) << (2 * status.exponent(w))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub node: NodeId,
    pub processor: usize,
    pub status: NodeStatus,
    pub potential: BigUint,
}

/// Potentials of all ready nodes at one step boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PotentialLedger {
    pub step: usize,
    pub entries: Vec<LedgerEntry>,
    /// `Φ(p)` per processor.
    pub per_processor: Vec<BigUint>,
    pub phi_total: BigUint,
    /// Over processors with a non-empty deque.
    pub phi_d: BigUint,
    /// Over processors with an empty deque.
    pub phi_a: BigUint,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("trace was not recorded at full level")]
    NotFull,
    #[error("step {step} out of range (trace has {boundaries} boundaries)")]
    StepOutOfRange { step: usize, boundaries: usize },
}

fn require_full(trace: &Trace) -> Result<(), AnalysisError> {
    if trace.level == TraceLevel::Full && !trace.snapshots.is_empty() {
        Ok(())
    } else {
        Err(AnalysisError::NotFull)
    }
}

fn statuses(p: &ProcSnapshot) -> impl Iterator<Item = (NodeId, NodeStatus)> + '_ {
    let private = p.private().iter().map(|&n| (n, NodeStatus::Private));
    let public = p.public().iter().map(|&n| (n, NodeStatus::Stealable));
    p.assigned
        .map(|n| (n, NodeStatus::Assigned))
        .into_iter()
        .chain(private)
        .chain(public)
}

/// Rebuilds the ledger at boundary `step` from the snapshot alone.
pub fn ledger_at(trace: &Trace, step: usize) -> Result<PotentialLedger, AnalysisError> {
    require_full(trace)?;
    let snap = trace
        .snapshots
        .get(step)
        .ok_or(AnalysisError::StepOutOfRange {
            step,
            boundaries: trace.snapshots.len(),
        })?;
    let mut entries = Vec::new();
    let mut per_processor = Vec::with_capacity(snap.len());
    let (mut phi_d, mut phi_a) = (BigUint::zero(), BigUint::zero());
    for (pi, p) in snap.iter().enumerate() {
        let mut sum = BigUint::zero();
        for (node, status) in statuses(p) {
            let potential = node_potential(trace.weights[node.index()], status);
            sum += &potential;
            entries.push(LedgerEntry {
                node,
                processor: pi,
                status,
                potential,
            });
        }
        if p.deque.is_empty() {
            phi_a += &sum;
        } else {
            phi_d += &sum;
        }
        per_processor.push(sum);
    }
    Ok(PotentialLedger {
        step,
        entries,
        per_processor,
        phi_total: &phi_d + &phi_a,
        phi_d,
        phi_a,
    })
}

/// One failed check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub step: usize,
    pub processor: Option<usize>,
    pub check: &'static str,
    pub details: String,
}

impl fmt::Display for Violation {
    /// `step,processor,check,details`; the processor field is empty when the
    /// violation is not tied to one processor.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.processor.map(|p| p.to_string()).unwrap_or_default();
        write!(f, "{},{},{},{}", self.step, p, self.check, self.details)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    /// Number of individual assertions evaluated.
    pub checked: u64,
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.violations.extend(other.violations);
    }

    /// Machine-readable violation list, one per line, with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,processor,check,details\n");
        for v in &self.violations {
            s.push_str(&v.to_string());
            s.push('\n');
        }
        s
    }

    fn fail(&mut self, step: usize, processor: Option<usize>, check: &'static str, details: String) {
        self.violations.push(Violation {
            step,
            processor,
            check,
            details,
        });
    }
}

type StatusMap = HashMap<NodeId, (usize, NodeStatus)>;

fn status_map(snap: &[ProcSnapshot]) -> StatusMap {
    let mut m = HashMap::new();
    for (pi, p) in snap.iter().enumerate() {
        for (n, s) in statuses(p) {
            m.insert(n, (pi, s));
        }
    }
    m
}

/// Per-event potential drops, plus two global consistency checks: Φ never
/// increases, and Φ maintained incrementally from the drops equals Φ
/// rebuilt from each snapshot.
///
/// Each node's fate across a step is one of: executed (the drop must be
/// exactly `1`, `63/64` or `47/64` of its potential for 0, 1 or 2 enabled
/// children), moved to a lower-potential status (the drop must be at least
/// `3/4`), or unchanged.
pub fn check_drops(trace: &Trace) -> Result<Report, AnalysisError> {
    require_full(trace)?;
    let w = |n: NodeId| trace.weights[n.index()];
    let phi = |n: NodeId, s: NodeStatus| node_potential(w(n), s);
    let mut rep = Report::default();
    let mut running = ledger_at(trace, 0)?.phi_total;
    let mut before = status_map(&trace.snapshots[0]);
    for step in 0..trace.steps() {
        let after = status_map(&trace.snapshots[step + 1]);
        let mut total_drop = BigUint::zero();
        let mut children: HashMap<NodeId, NodeId> = HashMap::new();
        for rec in &trace.iterations[step] {
            let Some(u) = rec.outcome.executed else {
                continue;
            };
            rep.checked += 1;
            let Some(&(_, st)) = before.get(&u) else {
                rep.fail(step, Some(rec.worker), "drops", format!("node {u} executed while not ready"));
                continue;
            };
            if st != NodeStatus::Assigned {
                rep.fail(step, Some(rec.worker), "drops", format!("node {u} executed from status {st:?}"));
            }
            let phi_u = phi(u, st);
            let mut post = BigUint::zero();
            let enabled = rec.outcome.enabled.to_vec();
            for &c in &enabled {
                children.insert(c, u);
                match after.get(&c) {
                    Some(&(_, cs)) => post += phi(c, cs),
                    None => rep.fail(step, Some(rec.worker), "drops", format!("child {c} of {u} vanished")),
                }
            }
            // post / phi_u must equal 0, 1/64 or 17/64.
            let numer: u32 = match enabled.len() {
                0 => 0,
                1 => 1,
                _ => 17,
            };
            if &post * 64u32 != &phi_u * numer {
                rep.fail(
                    step,
                    Some(rec.worker),
                    "drops",
                    format!(
                        "executing {u} with {} children left {post} of {phi_u}",
                        enabled.len()
                    ),
                );
            }
            total_drop += &phi_u - post.min(phi_u.clone());
        }
        for (&n, &(pi, s)) in &before {
            if trace.iterations[step].iter().any(|r| r.outcome.executed == Some(n)) {
                continue;
            }
            rep.checked += 1;
            let Some(&(qi, t)) = after.get(&n) else {
                rep.fail(step, Some(pi), "drops", format!("node {n} left the ready set unexecuted"));
                continue;
            };
            if t == s {
                if qi != pi {
                    rep.fail(step, Some(qi), "drops", format!("node {n} moved processors as {s:?}"));
                }
                continue;
            }
            if t > s {
                rep.fail(step, Some(qi), "drops", format!("node {n} went from {s:?} up to {t:?}"));
                continue;
            }
            let (pb, pa) = (phi(n, s), phi(n, t));
            let drop = &pb - &pa;
            if &drop * 4u32 < &pb * 3u32 {
                rep.fail(step, Some(qi), "drops", format!("node {n} {s:?}->{t:?} dropped {drop} of {pb}"));
            }
            total_drop += drop;
        }
        for (&n, &(qi, _)) in &after {
            if !before.contains_key(&n) && !children.contains_key(&n) {
                rep.fail(step, Some(qi), "drops", format!("node {n} appeared without an enabling execution"));
            }
        }
        let rebuilt = ledger_at(trace, step + 1)?.phi_total;
        let prev = ledger_at(trace, step)?.phi_total;
        rep.checked += 2;
        if rebuilt > prev {
            rep.fail(step, None, "monotone", format!("potential rose from {prev} to {rebuilt}"));
        }
        if total_drop > running {
            rep.fail(step, None, "ledger", "drops exceed the running potential".into());
            running = rebuilt;
        } else {
            running -= total_drop;
            if running != rebuilt {
                rep.fail(step, None, "ledger", format!("incremental {running} != rebuilt {rebuilt}"));
                running = rebuilt;
            }
        }
        before = after;
    }
    Ok(rep)
}

/// For every processor with a non-empty deque, the topmost deque node holds
/// at least 4/5 of the processor's potential.
pub fn check_top_heavy(trace: &Trace) -> Result<Report, AnalysisError> {
    require_full(trace)?;
    let mut rep = Report::default();
    for (step, snap) in trace.snapshots.iter().enumerate() {
        for (pi, p) in snap.iter().enumerate() {
            let Some(&top) = p.deque.last() else {
                continue;
            };
            rep.checked += 1;
            let mut total = BigUint::zero();
            let mut top_phi = BigUint::zero();
            for (n, s) in statuses(p) {
                let v = node_potential(trace.weights[n.index()], s);
                if n == top {
                    top_phi = v.clone();
                }
                total += v;
            }
            if &top_phi * 5u32 < &total * 4u32 {
                rep.fail(step, Some(pi), "top-heavy", format!("top {top} holds {top_phi} of {total}"));
            }
        }
    }
    Ok(rep)
}

/// Checks `w(v0) <= w(v1) < ... < w(vk)` on a single processor state, where
/// `v0` is the assigned node and `v1..vk` the deque from bottom to top.
pub fn structural_ok(assigned: Option<u32>, deque_bottom_first: &[u32]) -> bool {
    if let (Some(a), Some(&b)) = (assigned, deque_bottom_first.first()) {
        if a > b {
            return false;
        }
    }
    deque_bottom_first.windows(2).all(|w| w[0] < w[1])
}

pub fn check_structural(trace: &Trace) -> Result<Report, AnalysisError> {
    require_full(trace)?;
    let w = |n: NodeId| trace.weights[n.index()];
    let mut rep = Report::default();
    for (step, snap) in trace.snapshots.iter().enumerate() {
        for (pi, p) in snap.iter().enumerate() {
            rep.checked += 1;
            let ws: Vec<u32> = p.deque.iter().map(|&n| w(n)).collect();
            if !structural_ok(p.assigned.map(w), &ws) {
                rep.fail(
                    step,
                    Some(pi),
                    "structural",
                    format!("assigned weight {:?}, deque weights {ws:?}", p.assigned.map(w)),
                );
            }
        }
    }
    Ok(rep)
}

/// Runs the three per-step checks.
pub fn check_lemmas(trace: &Trace) -> Result<Report, AnalysisError> {
    let mut r = check_drops(trace)?;
    r.merge(check_top_heavy(trace)?);
    r.merge(check_structural(trace)?);
    Ok(r)
}

/// Grace steps appended to each phase.
pub const PHASE_GRACE: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    /// First step of the phase (a boundary index).
    pub start: usize,
    /// Boundary after the last step of the phase.
    pub end: usize,
    pub idle: u64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseReport {
    pub phases: Vec<Phase>,
    /// Idle iterations after the last complete phase.
    pub trailing_idle: u64,
}

impl PhaseReport {
    pub fn successes(&self) -> usize {
        self.phases.iter().filter(|p| p.success).count()
    }

    pub fn fraction(&self) -> Option<f64> {
        (!self.phases.is_empty()).then(|| self.successes() as f64 / self.phases.len() as f64)
    }
}

/// Splits the run into phases of at least `P` idle iterations and reports,
/// per complete phase, whether `Φ` fell by at least `3/10` of `Φ(D)` at the
/// phase start.
///
/// Phases are built greedily from step 0: a phase closes at the first step
/// by which `P` idle iterations have accumulated, extended by
/// [`PHASE_GRACE`] steps. An unfinished final phase is not evaluated.
pub fn check_phase_decrease(trace: &Trace) -> Result<PhaseReport, AnalysisError> {
    require_full(trace)?;
    let p = trace.processors as u64;
    let steps = trace.steps();
    let mut phases = Vec::new();
    let mut start = 0;
    loop {
        let mut idle = 0u64;
        let mut s = start;
        while s < steps && idle < p {
            idle += trace.counters[s].idle as u64;
            s += 1;
        }
        let end = s + PHASE_GRACE;
        if idle < p || end > steps {
            let trailing = (start..steps).map(|i| trace.counters[i].idle as u64).sum();
            return Ok(PhaseReport {
                phases,
                trailing_idle: trailing,
            });
        }
        idle += (s..end).map(|i| trace.counters[i].idle as u64).sum::<u64>();
        let l0 = ledger_at(trace, start)?;
        let l1 = ledger_at(trace, end)?;
        let drop = &l0.phi_total - &l1.phi_total;
        phases.push(Phase {
            start,
            end,
            idle,
            success: drop * 10u32 >= l0.phi_d * 3u32,
        });
        start = end;
    }
}

/// Lower bound on `P{X >= βW}` for balls and weighted bins.
pub fn balls_bins_bound(beta: f64) -> f64 {
    1.0 - 1.0 / ((1.0 - beta) * std::f64::consts::E)
}

fn hit_weight(weights: &[f64], mask: u64) -> f64 {
    (0..weights.len()).filter(|&i| mask >> i & 1 == 1).map(|i| weights[i]).sum()
}

/// Monte-Carlo estimate of `P{X >= βW}`, where `balls` balls land uniformly
/// in `weights.len()` bins and `X` is the total weight of bins hit.
pub fn balls_bins_trial(weights: &[f64], beta: f64, balls: usize, trials: usize, seed: u64) -> f64 {
    let b = weights.len();
    assert!(b >= 1 && balls >= b, "need at least one bin and at least as many balls as bins");
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
    let total: f64 = weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hit = vec![false; b];
    let mut good = 0usize;
    for _ in 0..trials {
        hit.iter_mut().for_each(|h| *h = false);
        for _ in 0..balls {
            hit[rng.random_range(0..b)] = true;
        }
        let x: f64 = (0..b).filter(|&i| hit[i]).map(|i| weights[i]).sum();
        if x >= beta * total {
            good += 1;
        }
    }
    good as f64 / trials as f64
}

/// Exact `P{X >= βW}` by inclusion-exclusion over hit sets; `B <= 16`.
///
/// The probability that the hit set is exactly `S` depends only on `|S| = k`:
/// `sum_{j=0..k} (-1)^(k-j) C(k, j) (j/B)^n`.
pub fn balls_bins_exact(weights: &[f64], beta: f64, balls: usize) -> f64 {
    let b = weights.len();
    assert!((1..=16).contains(&b), "exact enumeration supports 1..=16 bins");
    let total: f64 = weights.iter().sum();
    let binom = |n: usize, k: usize| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
    let exactly: Vec<f64> = (0..=b)
        .map(|k| {
            (0..=k)
                .map(|j| {
                    let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * binom(k, j) * (j as f64 / b as f64).powi(balls as i32)
                })
                .sum()
        })
        .collect();
    (0u64..1 << b)
        .filter(|&m| hit_weight(weights, m) >= beta * total)
        .map(|m| exactly[m.count_ones() as usize])
        .sum()
}
