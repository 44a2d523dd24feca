//! Computation dags.
//!
//! A [`CompDag`] is an immutable out-degree-two dag with a unique root. Work
//! (`t1`) is the node count and span (`t_inf`) is the number of nodes on a
//! longest directed path, so a single instruction has span 1.
//!
//! Two generator families are provided: full binary fork trees
//! ([`generate_regular`]) and fork trees whose fork spacing along every path
//! is drawn from an exponential distribution ([`generate_irregular`]).
//! Regular trees are stored implicitly in heap order, so even a depth-25
//! tree (67M nodes) costs no adjacency memory.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

/// Dense node index, unique within one dag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Largest node count a dag may hold; ids must fit in `u32`.
pub const MAX_NODES: u64 = u32::MAX as u64;

#[derive(Debug, Error, PartialEq)]
pub enum DagError {
    #[error("dag of depth {depth} would need {nodes} nodes, above the limit of {MAX_NODES}")]
    TooLarge { depth: u32, nodes: u128 },
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("invalid dag: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DagError {
    fn from(e: std::io::Error) -> Self {
        DagError::Io(e.to_string())
    }
}

/// A structural defect reported by [`CompDag::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    ChildOutOfRange { node: NodeId, child: u32 },
    OutDegree { node: NodeId, degree: usize },
    NoRoot,
    MultipleRoots(Vec<NodeId>),
    /// Some node on a cycle (nodes never released by a topological sort).
    Cycle { node: NodeId },
    Unreachable { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty dag"),
            Violation::ChildOutOfRange { node, child } => {
                write!(f, "node {node} has out-of-range child {child}")
            }
            Violation::OutDegree { node, degree } => {
                write!(f, "out-degree: node {node} has {degree} children")
            }
            Violation::NoRoot => write!(f, "no node with in-degree 0"),
            Violation::MultipleRoots(r) => write!(f, "{} nodes with in-degree 0", r.len()),
            Violation::Cycle { node } => write!(f, "cycle through node {node}"),
            Violation::Unreachable { node } => write!(f, "node {node} unreachable from root"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Repr {
    /// Full binary out-tree in heap order: children of `i` are `2i+1`, `2i+2`.
    FullBinary { depth: u32 },
    Csr {
        offsets: Vec<u32>,
        targets: Vec<u32>,
        in_degree: Vec<u32>,
    },
}

/// Work and span of a dag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measure {
    pub t1: u64,
    pub t_inf: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompDag {
    repr: Repr,
    len: u32,
    root: NodeId,
    t1: u64,
    t_inf: u64,
    max_in_degree: u32,
}

/// Children of one node, in construction order.
#[derive(Debug, Clone)]
pub enum Children<'a> {
    Slice(std::slice::Iter<'a, u32>),
    Range { next: u32, end: u32 },
}

impl Iterator for Children<'_> {
    type Item = NodeId;

    #[inline]
    fn next(&mut self) -> Option<NodeId> {
        match self {
            Children::Slice(it) => it.next().map(|&c| NodeId(c)),
            Children::Range { next, end } => {
                if *next < *end {
                    let c = *next;
                    *next += 1;
                    Some(NodeId(c))
                } else {
                    None
                }
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = match self {
            Children::Slice(it) => it.len(),
            Children::Range { next, end } => (end - next) as usize,
        };
        (n, Some(n))
    }
}

impl ExactSizeIterator for Children<'_> {}

impl CompDag {
    /// Builds a dag from explicit child lists without checking any invariant.
    ///
    /// Use [`CompDag::validate`] afterwards, or [`CompDag::new`] to do both.
    /// The root is the first node with in-degree 0 (node 0 if there is none)
    /// and `t_inf` is 0 when the graph is cyclic.
    pub fn from_children(children: &[Vec<u32>]) -> CompDag {
        let len = children.len() as u32;
        let mut offsets = Vec::with_capacity(children.len() + 1);
        let mut targets = Vec::new();
        let mut in_degree = vec![0u32; children.len()];
        offsets.push(0);
        for cs in children {
            for &c in cs {
                targets.push(c);
                if let Some(d) = in_degree.get_mut(c as usize) {
                    *d += 1;
                }
            }
            offsets.push(targets.len() as u32);
        }
        let root = in_degree.iter().position(|&d| d == 0).unwrap_or(0) as u32;
        let max_in_degree = in_degree.iter().copied().max().unwrap_or(0);
        let mut dag = CompDag {
            repr: Repr::Csr {
                offsets,
                targets,
                in_degree,
            },
            len,
            root: NodeId(root),
            t1: len as u64,
            t_inf: 0,
            max_in_degree,
        };
        if dag.children_in_range() {
            let (t_inf, done) = dag.longest_path();
            if done == len as u64 {
                dag.t_inf = t_inf;
            }
        }
        dag
    }

    /// Builds and validates a dag from explicit child lists.
    pub fn new(children: &[Vec<u32>]) -> Result<CompDag, DagError> {
        let dag = CompDag::from_children(children);
        dag.validate().map_err(DagError::Invalid)?;
        Ok(dag)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Work: the node count.
    #[inline]
    pub fn t1(&self) -> u64 {
        self.t1
    }

    /// Span: the number of nodes on a longest path.
    #[inline]
    pub fn t_inf(&self) -> u64 {
        self.t_inf
    }

    /// Largest in-degree of any node; 1 for every tree.
    #[inline]
    pub fn max_in_degree(&self) -> u32 {
        self.max_in_degree
    }

    #[inline]
    pub fn children(&self, u: NodeId) -> Children<'_> {
        match &self.repr {
            Repr::FullBinary { .. } => {
                let first = 2 * u.0 as u64 + 1;
                if first < self.len as u64 {
                    Children::Range {
                        next: first as u32,
                        end: first as u32 + 2,
                    }
                } else {
                    Children::Range { next: 0, end: 0 }
                }
            }
            Repr::Csr {
                offsets, targets, ..
            } => {
                let lo = offsets[u.index()] as usize;
                let hi = offsets[u.index() + 1] as usize;
                Children::Slice(targets[lo..hi].iter())
            }
        }
    }

    #[inline]
    pub fn in_degree(&self, u: NodeId) -> u32 {
        match &self.repr {
            Repr::FullBinary { .. } => u32::from(u.0 != 0),
            Repr::Csr { in_degree, .. } => in_degree[u.index()],
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len).map(NodeId)
    }

    fn children_in_range(&self) -> bool {
        match &self.repr {
            Repr::FullBinary { .. } => true,
            Repr::Csr { targets, .. } => targets.iter().all(|&c| c < self.len),
        }
    }

    /// Kahn's algorithm with longest-path dynamic programming. Returns the
    /// span and the number of nodes released (less than `len` on a cycle).
    fn longest_path(&self) -> (u64, u64) {
        let n = self.len();
        let mut pending: Vec<u32> = self.nodes().map(|u| self.in_degree(u)).collect();
        let mut longest = vec![0u32; n];
        let mut ready: Vec<u32> = Vec::new();
        for (i, &d) in pending.iter().enumerate() {
            if d == 0 {
                ready.push(i as u32);
                longest[i] = 1;
            }
        }
        let mut released = 0u64;
        let mut span = 0u64;
        while let Some(u) = ready.pop() {
            released += 1;
            let lu = longest[u as usize];
            span = span.max(lu as u64);
            for c in self.children(NodeId(u)) {
                let ci = c.index();
                longest[ci] = longest[ci].max(lu + 1);
                pending[ci] -= 1;
                if pending[ci] == 0 {
                    ready.push(c.0);
                }
            }
        }
        (span, released)
    }

    /// Checks out-degree, unique root, acyclicity and reachability.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        if self.len == 0 {
            return Err(vec![Violation::Empty]);
        }
        for u in self.nodes() {
            let deg = self.children(u).len();
            if deg > 2 {
                out.push(Violation::OutDegree { node: u, degree: deg });
            }
            if let Repr::Csr { .. } = self.repr {
                for c in self.children(u) {
                    if c.0 >= self.len {
                        out.push(Violation::ChildOutOfRange { node: u, child: c.0 });
                    }
                }
            }
        }
        if out.iter().any(|v| matches!(v, Violation::ChildOutOfRange { .. })) {
            return Err(out);
        }
        let roots: Vec<NodeId> = self.nodes().filter(|&u| self.in_degree(u) == 0).collect();
        match roots.len() {
            0 => out.push(Violation::NoRoot),
            1 => {}
            _ => out.push(Violation::MultipleRoots(roots.clone())),
        }
        let (_, released) = self.longest_path();
        if released < self.len as u64 {
            // Nodes left with pending parents after the sort sit on or below a cycle.
            let mut pending: Vec<u32> = self.nodes().map(|u| self.in_degree(u)).collect();
            let mut stack: Vec<u32> = (0..self.len).filter(|&i| pending[i as usize] == 0).collect();
            while let Some(u) = stack.pop() {
                for c in self.children(NodeId(u)) {
                    pending[c.index()] -= 1;
                    if pending[c.index()] == 0 {
                        stack.push(c.0);
                    }
                }
            }
            let node = pending.iter().position(|&d| d > 0).unwrap() as u32;
            out.push(Violation::Cycle { node: NodeId(node) });
        }
        if let Some(&root) = roots.first() {
            let mut seen = vec![false; self.len()];
            let mut stack = vec![root];
            seen[root.index()] = true;
            while let Some(u) = stack.pop() {
                for c in self.children(u) {
                    if !seen[c.index()] {
                        seen[c.index()] = true;
                        stack.push(c);
                    }
                }
            }
            if let Some(i) = seen.iter().position(|&s| !s) {
                out.push(Violation::Unreachable { node: NodeId(i as u32) });
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Recomputes work and span by topological-order dynamic programming.
    ///
    /// The dag must be valid; on a cyclic graph the span covers only the
    /// acyclic prefix.
    pub fn measure(&self) -> Measure {
        let (t_inf, _) = self.longest_path();
        Measure {
            t1: self.len as u64,
            t_inf,
        }
    }

    /// Writes the line-oriented text form: `dag <t1> <t_inf>` followed by one
    /// `<id> <child0|-> <child1|->` line per node.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dag {} {}", self.t1, self.t_inf)?;
        for u in self.nodes() {
            let mut cs = self.children(u);
            let a = cs.next();
            let b = cs.next();
            let show = |c: Option<NodeId>| c.map_or_else(|| "-".to_string(), |c| c.0.to_string());
            writeln!(w, "{} {} {}", u.0, show(a), show(b))?;
        }
        Ok(())
    }

    /// Parses the text form written by [`CompDag::write_text`] and validates it.
    pub fn read_text<R: BufRead>(r: R) -> Result<CompDag, DagError> {
        let mut lines = r.lines().enumerate();
        let perr = |line: usize, msg: &str| DagError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| perr(0, "missing header"))?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (t1, t_inf) = match fields.as_slice() {
            ["dag", a, b] => (
                a.parse::<u64>().map_err(|_| perr(hl, "bad t1"))?,
                b.parse::<u64>().map_err(|_| perr(hl, "bad t_inf"))?,
            ),
            _ => return Err(perr(hl, "expected `dag <t1> <t_inf>`")),
        };
        if t1 > MAX_NODES {
            return Err(perr(hl, "t1 above node limit"));
        }
        let mut children: Vec<Vec<u32>> = Vec::with_capacity(t1 as usize);
        for (ln, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(ln, "expected `<id> <child0|-> <child1|->`"));
            }
            let id: u64 = f[0].parse().map_err(|_| perr(ln, "bad node id"))?;
            if id != children.len() as u64 {
                return Err(perr(ln, "node ids must be dense and in order"));
            }
            let mut cs = Vec::with_capacity(2);
            for tok in &f[1..] {
                if *tok != "-" {
                    cs.push(tok.parse::<u32>().map_err(|_| perr(ln, "bad child id"))?);
                }
            }
            children.push(cs);
        }
        if children.len() as u64 != t1 {
            return Err(perr(0, "header t1 does not match node lines"));
        }
        let dag = CompDag::new(&children)?;
        if dag.t_inf != t_inf {
            return Err(perr(0, "header t_inf does not match the dag"));
        }
        Ok(dag)
    }
}

/// Full binary fork tree of fork-depth `depth`: `2^(depth+1) - 1` nodes and
/// span `depth + 1`.
pub fn generate_regular(depth: u32) -> Result<CompDag, DagError> {
    let nodes = (1u128 << (depth as u128 + 1).min(127)) - 1;
    if depth >= 127 || nodes > MAX_NODES as u128 {
        return Err(DagError::TooLarge { depth, nodes });
    }
    let len = nodes as u32;
    Ok(CompDag {
        repr: Repr::FullBinary { depth },
        len,
        root: NodeId(0),
        t1: len as u64,
        t_inf: depth as u64 + 1,
        max_in_degree: u32::from(len > 1),
    })
}

/// Fork tree with exponentially distributed fork spacing.
///
/// Along every path, the distance (in nodes) from one fork to the next is
/// `max(1, ceil(X))` with `X ~ Exp(lambda)` drawn independently per segment;
/// the nodes in between are unary. Every path ends in a leaf at node-depth
/// `depth`, so the span is `depth + 1`. A spacing of 1 everywhere yields
/// [`generate_regular`]'s tree.
pub fn generate_irregular(depth: u32, lambda: f64, seed: u64) -> Result<CompDag, DagError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(DagError::BadLambda(lambda));
    }
    if depth as u64 >= MAX_NODES {
        return Err(DagError::TooLarge {
            depth,
            nodes: depth as u128 + 1,
        });
    }
    let exp = Exp::new(lambda).map_err(|_| DagError::BadLambda(lambda))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = move || -> u64 {
        let x: f64 = exp.sample(&mut rng);
        (x.ceil() as u64).max(1)
    };

    // Nodes are numbered in BFS order, so each node's children are allocated
    // as the next ids and the frontier queue lines up with node ids.
    struct Frontier {
        depth: u64,
        fork_at: u64,
    }
    let limit = depth as u64;
    let mut queue: VecDeque<Frontier> = VecDeque::new();
    queue.push_back(Frontier {
        depth: 0,
        fork_at: gap() - 1,
    });
    let mut offsets: Vec<u32> = vec![0];
    let mut targets: Vec<u32> = Vec::new();
    let mut next_id: u64 = 1;
    while let Some(f) = queue.pop_front() {
        if f.depth < limit {
            let kids: &[u64] = if f.depth >= f.fork_at {
                &[0, 1]
            } else {
                &[0]
            };
            if next_id + kids.len() as u64 > MAX_NODES {
                return Err(DagError::TooLarge {
                    depth,
                    nodes: next_id as u128 + queue.len() as u128 + kids.len() as u128,
                });
            }
            for _ in kids {
                let fork_at = if f.depth >= f.fork_at {
                    f.depth + gap()
                } else {
                    f.fork_at
                };
                targets.push(next_id as u32);
                next_id += 1;
                queue.push_back(Frontier {
                    depth: f.depth + 1,
                    fork_at,
                });
            }
        }
        offsets.push(targets.len() as u32);
    }
    let len = next_id as u32;
    let mut in_degree = vec![1u32; len as usize];
    in_degree[0] = 0;
    Ok(CompDag {
        repr: Repr::Csr {
            offsets,
            targets,
            in_degree,
        },
        len,
        root: NodeId(0),
        t1: len as u64,
        t_inf: limit + 1,
        max_in_degree: u32::from(len > 1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DagKind {
    Regular,
    Irregular,
}

impl DagKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DagKind::Regular => "regular",
            DagKind::Irregular => "irregular",
        }
    }
}

impl fmt::Display for DagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DagKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "regular" => Ok(DagKind::Regular),
            "irregular" => Ok(DagKind::Irregular),
            _ => Err(format!("unknown dag kind `{s}` (expected regular or irregular)")),
        }
    }
}

/// Parameters that pick out one generated dag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DagSpec {
    pub kind: DagKind,
    pub depth: u32,
    /// Only used by irregular dags.
    pub lambda: f64,
    /// Only used by irregular dags.
    pub seed: u64,
}

/// Fork-spacing rate used by the irregular generator unless overridden.
pub const DEFAULT_LAMBDA: f64 = 0.05;

impl DagSpec {
    pub fn regular(depth: u32) -> Self {
        DagSpec {
            kind: DagKind::Regular,
            depth,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
        }
    }

    pub fn irregular(depth: u32, lambda: f64, seed: u64) -> Self {
        DagSpec {
            kind: DagKind::Irregular,
            depth,
            lambda,
            seed,
        }
    }

    pub fn build(&self) -> Result<CompDag, DagError> {
        match self.kind {
            DagKind::Regular => generate_regular(self.depth),
            DagKind::Irregular => generate_irregular(self.depth, self.lambda, self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Materializes an implicit dag into explicit child lists.
    fn explicit(dag: &CompDag) -> Vec<Vec<u32>> {
        dag.nodes().map(|u| dag.children(u).map(|c| c.0).collect()).collect()
    }

    /// Longest path by plain recursion from the root; only for trees.
    fn tree_height(dag: &CompDag, u: NodeId) -> u64 {
        1 + dag.children(u).map(|c| tree_height(dag, c)).max().unwrap_or(0)
    }

    #[test]
    fn regular_small_depths() {
        let d0 = generate_regular(0).unwrap();
        assert_eq!((d0.t1(), d0.t_inf()), (1, 1));
        assert_eq!(d0.children(d0.root()).len(), 0);
        let d2 = generate_regular(2).unwrap();
        assert_eq!((d2.t1(), d2.t_inf()), (7, 3));
    }

    #[test]
    fn regular_depth_twenty_node_count() {
        assert_eq!(generate_regular(20).unwrap().t1(), 2_097_151);
    }

    #[test]
    fn regular_measure_matches_enumeration() {
        for d in 0..=12 {
            let dag = generate_regular(d).unwrap();
            let m = dag.measure();
            assert_eq!(m, Measure { t1: (1 << (d + 1)) - 1, t_inf: d as u64 + 1 });
            assert_eq!(tree_height(&dag, dag.root()), d as u64 + 1);
            let mut count = 0u64;
            let mut stack = vec![dag.root()];
            while let Some(u) = stack.pop() {
                count += 1;
                let k = dag.children(u).len();
                assert!(k == 0 || k == 2);
                stack.extend(dag.children(u));
            }
            assert_eq!(count, m.t1);
            assert!(dag.validate().is_ok());
            let copy = CompDag::new(&explicit(&dag)).unwrap();
            assert_eq!(copy.measure(), m);
        }
    }

    #[test]
    fn regular_depth_25_measure() {
        let dag = generate_regular(25).unwrap();
        assert_eq!(dag.measure(), Measure { t1: 67_108_863, t_inf: 26 });
    }

    #[test]
    fn regular_rejects_overflow() {
        assert!(generate_regular(31).is_ok());
        assert!(matches!(generate_regular(32), Err(DagError::TooLarge { .. })));
        assert!(matches!(generate_regular(200), Err(DagError::TooLarge { .. })));
    }

    #[test]
    fn irregular_depth_zero_is_single_node() {
        for seed in 0..5 {
            let dag = generate_irregular(0, 0.05, seed).unwrap();
            assert_eq!((dag.t1(), dag.t_inf()), (1, 1));
        }
    }

    #[test]
    fn irregular_large_lambda_collapses_to_regular() {
        let dag = generate_irregular(4, 1000.0, 3).unwrap();
        assert_eq!(dag.t1(), generate_regular(4).unwrap().t1());
        assert_eq!(dag.measure().t_inf, 5);
    }

    #[test]
    fn irregular_rejects_bad_lambda() {
        assert_eq!(generate_irregular(3, 0.0, 1), Err(DagError::BadLambda(0.0)));
        assert!(generate_irregular(3, -1.0, 1).is_err());
        assert!(generate_irregular(3, f64::NAN, 1).is_err());
    }

    #[test]
    fn irregular_is_reproducible_and_valid() {
        for seed in 0..100 {
            let a = generate_irregular(40, 0.05, seed).unwrap();
            let b = generate_irregular(40, 0.05, seed).unwrap();
            assert_eq!(a, b);
            assert!(a.validate().is_ok(), "seed {seed}");
            let m = a.measure();
            assert_eq!(m.t1, a.t1());
            assert_eq!(m.t_inf, a.t_inf());
            assert!(m.t_inf <= 41);
        }
    }

    #[test]
    fn irregular_fork_spacing_follows_gaps() {
        // Every non-leaf has one or two children, leaves all sit at full depth.
        let dag = generate_irregular(60, 0.05, 9).unwrap();
        let mut depth = vec![0u32; dag.len()];
        for u in dag.nodes() {
            let k = dag.children(u).len();
            assert!(k <= 2);
            if k == 0 {
                assert_eq!(depth[u.index()], 60);
            }
            for c in dag.children(u) {
                depth[c.index()] = depth[u.index()] + 1;
            }
        }
    }

    #[test]
    fn irregular_default_regression_value() {
        let dag = generate_irregular(300, 0.05, 42).unwrap();
        assert_eq!(dag.t_inf(), 301);
        assert_eq!(dag.t1(), IRREGULAR_300_SEED_42_NODES);
    }

    /// Frozen from the generator's first run; guards against silent changes
    /// to the sampling order.
    const IRREGULAR_300_SEED_42_NODES: u64 = 13_005_911;

    #[test]
    fn validate_flags_cycle() {
        let dag = CompDag::from_children(&[vec![1], vec![0]]);
        let v = dag.validate().unwrap_err();
        assert!(v.iter().any(|v| matches!(v, Violation::Cycle { .. })), "{v:?}");
    }

    #[test]
    fn validate_flags_out_degree() {
        let dag = CompDag::from_children(&[vec![1, 2, 3], vec![], vec![], vec![]]);
        let v = dag.validate().unwrap_err();
        assert_eq!(v, vec![Violation::OutDegree { node: NodeId(0), degree: 3 }]);
    }

    #[test]
    fn validate_flags_roots_and_reachability() {
        let two_roots = CompDag::from_children(&[vec![2], vec![2], vec![]]);
        assert!(matches!(
            two_roots.validate().unwrap_err().as_slice(),
            [Violation::MultipleRoots(_), ..]
        ));
        // 0 -> 1, and 2 <-> 3 form a detached cycle.
        let detached = CompDag::from_children(&[vec![1], vec![], vec![3], vec![2]]);
        let v = detached.validate().unwrap_err();
        assert!(v.iter().any(|v| matches!(v, Violation::Cycle { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::Unreachable { .. })));
        let bad = CompDag::from_children(&[vec![7]]);
        assert!(matches!(
            bad.validate().unwrap_err().as_slice(),
            [Violation::ChildOutOfRange { .. }]
        ));
        assert_eq!(CompDag::from_children(&[]).validate(), Err(vec![Violation::Empty]));
    }

    #[test]
    fn measure_chain_and_join() {
        let chain = CompDag::new(&[vec![1], vec![2], vec![3], vec![4], vec![]]).unwrap();
        assert_eq!(chain.measure(), Measure { t1: 5, t_inf: 5 });
        // Diamond: 0 forks 1, 2 which join at 3.
        let diamond = CompDag::new(&[vec![1, 2], vec![3], vec![3], vec![]]).unwrap();
        assert_eq!(diamond.measure(), Measure { t1: 4, t_inf: 3 });
        assert_eq!(diamond.max_in_degree(), 2);
    }

    #[test]
    fn text_format_round_trip() {
        let dag = generate_irregular(30, 0.2, 5).unwrap();
        let mut buf = Vec::new();
        dag.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("dag {} {}\n", dag.t1(), dag.t_inf())));
        let back = CompDag::read_text(&buf[..]).unwrap();
        assert_eq!(explicit(&back), explicit(&dag));
        assert_eq!(back.t_inf(), dag.t_inf());

        let small = generate_regular(1).unwrap();
        let mut out = Vec::new();
        small.write_text(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "dag 3 2\n0 1 2\n1 - -\n2 - -\n");
    }

    #[test]
    fn text_format_rejects_bad_input() {
        assert!(CompDag::read_text(&b"dig 1 1\n0 - -\n"[..]).is_err());
        assert!(CompDag::read_text(&b"dag 2 2\n0 1 -\n"[..]).is_err());
        assert!(CompDag::read_text(&b"dag 2 1\n0 1 -\n1 - -\n"[..]).is_err());
        assert!(matches!(
            CompDag::read_text(&b"dag 2 2\n0 1 -\n1 0 -\n"[..]),
            Err(DagError::Invalid(_))
        ));
    }
}
