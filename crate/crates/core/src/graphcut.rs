//! Exact s-t minimum cut (Boykov–Kolmogorov augmenting paths with search
//! tree reuse) and the binary Potts MRF minimizer built on it.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Neighbor edge `u -> v` with capacity `cap` and `v -> u` with `rev_cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub cap: f64,
    pub rev_cap: f64,
}

/// Flow network with a source and a sink attached to every node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowGraph {
    to_source: Vec<f64>,
    to_sink: Vec<f64>,
    edges: Vec<Edge>,
}

fn check_capacity(c: f64, what: &str) -> Result<()> {
    if c.is_finite() && c >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} capacity {c} is not a finite non-negative number")))
    }
}

impl FlowGraph {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            to_source: vec![0.0; n_nodes],
            to_sink: vec![0.0; n_nodes],
            edges: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.to_source.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(to_source, to_sink)` capacities of node `u`.
    pub fn terminal(&self, u: usize) -> (f64, f64) {
        (self.to_source[u], self.to_sink[u])
    }

    /// Adds to the terminal capacities of `u`.
    pub fn add_terminal(&mut self, u: usize, to_source: f64, to_sink: f64) -> Result<()> {
        check_capacity(to_source, "terminal")?;
        check_capacity(to_sink, "terminal")?;
        if u >= self.n_nodes() {
            return Err(Error::InvalidInput(format!("node {u} out of range")));
        }
        self.to_source[u] += to_source;
        self.to_sink[u] += to_sink;
        Ok(())
    }

    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64, rev_cap: f64) -> Result<()> {
        check_capacity(cap, "edge")?;
        check_capacity(rev_cap, "edge")?;
        if u == v {
            return Err(Error::InvalidInput(format!("self edge on node {u}")));
        }
        if u.max(v) >= self.n_nodes() {
            return Err(Error::InvalidInput(format!("edge ({u}, {v}) out of range")));
        }
        self.edges.push(Edge { u, v, cap, rev_cap });
        Ok(())
    }

    /// Capacity of the cut that puts label-0 nodes on the source side.
    pub fn cut_capacity(&self, labels: &[u8]) -> f64 {
        let mut c = 0.0;
        for u in 0..self.n_nodes() {
            c += if labels[u] == 0 {
                self.to_sink[u]
            } else {
                self.to_source[u]
            };
        }
        for e in &self.edges {
            match (labels[e.u], labels[e.v]) {
                (0, 1) => c += e.cap,
                (1, 0) => c += e.rev_cap,
                _ => {}
            }
        }
        c
    }

    /// DIMACS max-flow problem text. Nodes are 1-based; the source is
    /// `n + 1` and the sink `n + 2`.
    pub fn to_dimacs(&self) -> String {
        let n = self.n_nodes();
        let (s, t) = (n + 1, n + 2);
        let mut arcs = Vec::new();
        for u in 0..n {
            if self.to_source[u] > 0.0 {
                arcs.push((s, u + 1, self.to_source[u]));
            }
            if self.to_sink[u] > 0.0 {
                arcs.push((u + 1, t, self.to_sink[u]));
            }
        }
        for e in &self.edges {
            if e.cap > 0.0 {
                arcs.push((e.u + 1, e.v + 1, e.cap));
            }
            if e.rev_cap > 0.0 {
                arcs.push((e.v + 1, e.u + 1, e.rev_cap));
            }
        }
        let mut out = format!("p max {} {}\nn {s} s\nn {t} t\n", n + 2, arcs.len());
        for (a, b, c) in arcs {
            let _ = writeln!(out, "a {a} {b} {c}");
        }
        out
    }
}

/// Minimum cut: label 0 for nodes reachable from the source in the final
/// residual graph, 1 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub labels: Vec<u8>,
    pub flow: f64,
}

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Free,
    Source,
    Sink,
}

struct Solver {
    // arcs come in pairs: a and a ^ 1 are sisters
    head: Vec<usize>,
    next: Vec<usize>,
    r_cap: Vec<f64>,
    first: Vec<usize>,
    // > 0: residual from source, < 0: residual to sink
    tr_cap: Vec<f64>,
    // arc from the node toward its parent, or TERMINAL / ORPHAN / NONE
    parent: Vec<usize>,
    side: Vec<Side>,
    ts: Vec<u64>,
    dist: Vec<usize>,
    time: u64,
    active: VecDeque<usize>,
    queued: Vec<bool>,
    orphans: VecDeque<usize>,
    flow: f64,
}

impl Solver {
    fn new(g: &FlowGraph) -> Self {
        let n = g.n_nodes();
        let m = g.edges.len() * 2;
        let mut s = Solver {
            head: Vec::with_capacity(m),
            next: Vec::with_capacity(m),
            r_cap: Vec::with_capacity(m),
            first: vec![NONE; n],
            tr_cap: vec![0.0; n],
            parent: vec![NONE; n],
            side: vec![Side::Free; n],
            ts: vec![0; n],
            dist: vec![0; n],
            time: 0,
            active: VecDeque::new(),
            queued: vec![false; n],
            orphans: VecDeque::new(),
            flow: 0.0,
        };
        for e in &g.edges {
            s.push_arc(e.u, e.v, e.cap);
            s.push_arc(e.v, e.u, e.rev_cap);
        }
        for u in 0..n {
            let (a, b) = (g.to_source[u], g.to_sink[u]);
            s.flow += a.min(b);
            s.tr_cap[u] = a - b;
            if s.tr_cap[u] != 0.0 {
                s.side[u] = if s.tr_cap[u] > 0.0 { Side::Source } else { Side::Sink };
                s.parent[u] = TERMINAL;
                s.dist[u] = 1;
                s.set_active(u);
            }
        }
        s
    }

    fn push_arc(&mut self, from: usize, to: usize, cap: f64) {
        let a = self.head.len();
        self.head.push(to);
        self.r_cap.push(cap);
        self.next.push(self.first[from]);
        self.first[from] = a;
    }

    fn set_active(&mut self, u: usize) {
        if !self.queued[u] {
            self.queued[u] = true;
            self.active.push_back(u);
        }
    }

    fn arcs(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        let mut a = self.first[u];
        std::iter::from_fn(move || {
            (a != NONE).then(|| {
                let cur = a;
                a = self.next[a];
                cur
            })
        })
    }

    fn run(mut self) -> CutResult {
        while let Some(p) = self.active.pop_front() {
            self.queued[p] = false;
            if self.side[p] == Side::Free {
                continue;
            }
            let Some(middle) = self.grow(p) else { continue };
            self.time += 1;
            self.augment(middle);
            self.adopt();
            if self.side[p] != Side::Free && !self.queued[p] {
                self.queued[p] = true;
                self.active.push_front(p);
            }
        }
        let labels = self
            .side
            .iter()
            .map(|&s| u8::from(s != Side::Source))
            .collect();
        CutResult {
            labels,
            flow: self.flow,
        }
    }

    /// Extends the tree of `p` by one layer; returns the arc from the source
    /// tree into the sink tree when the trees touch.
    fn grow(&mut self, p: usize) -> Option<usize> {
        let mut a = self.first[p];
        while a != NONE {
            let q = self.head[a];
            let sister = a ^ 1;
            match self.side[p] {
                Side::Source if self.r_cap[a] > 0.0 => match self.side[q] {
                    Side::Free => self.attach(q, Side::Source, sister, p),
                    Side::Sink => return Some(a),
                    Side::Source => {}
                },
                Side::Sink if self.r_cap[sister] > 0.0 => match self.side[q] {
                    Side::Free => self.attach(q, Side::Sink, sister, p),
                    Side::Source => return Some(sister),
                    Side::Sink => {}
                },
                _ => {}
            }
            a = self.next[a];
        }
        None
    }

    fn attach(&mut self, q: usize, side: Side, arc: usize, p: usize) {
        self.side[q] = side;
        self.parent[q] = arc;
        self.ts[q] = self.ts[p];
        self.dist[q] = self.dist[p] + 1;
        self.set_active(q);
    }

    fn augment(&mut self, middle: usize) {
        let x0 = self.head[middle ^ 1];
        let y0 = self.head[middle];

        let mut b = self.r_cap[middle];
        let mut x = x0;
        loop {
            let a = self.parent[x];
            if a == TERMINAL {
                break;
            }
            b = b.min(self.r_cap[a ^ 1]);
            x = self.head[a];
        }
        b = b.min(self.tr_cap[x]);
        let mut y = y0;
        loop {
            let a = self.parent[y];
            if a == TERMINAL {
                break;
            }
            b = b.min(self.r_cap[a]);
            y = self.head[a];
        }
        b = b.min(-self.tr_cap[y]);

        self.r_cap[middle] -= b;
        self.r_cap[middle ^ 1] += b;

        let mut x = x0;
        loop {
            let a = self.parent[x];
            if a == TERMINAL {
                break;
            }
            self.r_cap[a] += b;
            self.r_cap[a ^ 1] -= b;
            if self.r_cap[a ^ 1] <= 0.0 {
                self.r_cap[a ^ 1] = 0.0;
                self.make_orphan(x);
            }
            x = self.head[a];
        }
        self.tr_cap[x] -= b;
        if self.tr_cap[x] <= 0.0 {
            self.tr_cap[x] = 0.0;
            self.make_orphan(x);
        }

        let mut y = y0;
        loop {
            let a = self.parent[y];
            if a == TERMINAL {
                break;
            }
            self.r_cap[a ^ 1] += b;
            self.r_cap[a] -= b;
            if self.r_cap[a] <= 0.0 {
                self.r_cap[a] = 0.0;
                self.make_orphan(y);
            }
            y = self.head[a];
        }
        self.tr_cap[y] += b;
        if self.tr_cap[y] >= 0.0 {
            self.tr_cap[y] = 0.0;
            self.make_orphan(y);
        }

        self.flow += b;
    }

    fn make_orphan(&mut self, u: usize) {
        self.parent[u] = ORPHAN;
        self.orphans.push_back(u);
    }

    /// Distance from `q` to a terminal through valid parents, or `None` if
    /// its chain ends in an orphan. Caches distances with the current time.
    fn origin_distance(&mut self, q: usize) -> Option<usize> {
        let mut j = q;
        let mut d = 0usize;
        loop {
            if self.ts[j] == self.time {
                d += self.dist[j];
                break;
            }
            let a = self.parent[j];
            d += 1;
            if a == TERMINAL {
                self.ts[j] = self.time;
                self.dist[j] = 1;
                break;
            }
            if a == ORPHAN || a == NONE {
                return None;
            }
            j = self.head[a];
        }
        let mut j = q;
        let mut dd = d;
        while self.ts[j] != self.time {
            self.ts[j] = self.time;
            self.dist[j] = dd;
            dd -= 1;
            j = self.head[self.parent[j]];
        }
        Some(d)
    }

    fn adopt(&mut self) {
        while let Some(p) = self.orphans.pop_front() {
            let side = self.side[p];
            let mut best: Option<(usize, usize)> = None;
            let arcs: Vec<usize> = self.arcs(p).collect();
            for &a in &arcs {
                let q = self.head[a];
                if self.side[q] != side {
                    continue;
                }
                let residual = match side {
                    Side::Source => self.r_cap[a ^ 1],
                    _ => self.r_cap[a],
                };
                if residual <= 0.0 {
                    continue;
                }
                if let Some(d) = self.origin_distance(q) {
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((a, d));
                    }
                }
            }
            if let Some((a, d)) = best {
                self.parent[p] = a;
                self.ts[p] = self.time;
                self.dist[p] = d + 1;
                continue;
            }
            self.side[p] = Side::Free;
            self.parent[p] = NONE;
            for &a in &arcs {
                let q = self.head[a];
                if self.side[q] != side {
                    continue;
                }
                let residual = match side {
                    Side::Source => self.r_cap[a ^ 1],
                    _ => self.r_cap[a],
                };
                if residual > 0.0 {
                    self.set_active(q);
                }
                let pq = self.parent[q];
                if pq != TERMINAL && pq != ORPHAN && pq != NONE && self.head[pq] == p {
                    self.make_orphan(q);
                }
            }
        }
    }
}

/// Exact maximum flow / minimum cut.
pub fn max_flow(graph: &FlowGraph) -> CutResult {
    Solver::new(graph).run()
}

/// Potts pairwise term: cost `weight` when nodes `u` and `v` take different labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pairwise {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Energy `Σ unary[s][L_s] + Σ weight·[L_u ≠ L_v]`.
pub fn mrf_energy(unary: &[[f64; 2]], pairwise: &[Pairwise], labels: &[u8]) -> f64 {
    let mut e: f64 = unary
        .iter()
        .zip(labels)
        .map(|(d, &l)| d[l as usize])
        .sum();
    for p in pairwise {
        if labels[p.u] != labels[p.v] {
            e += p.weight;
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfSolution {
    pub labels: Vec<u8>,
    pub energy: f64,
}

/// Exact global minimizer of a binary Potts MRF. Among optimal labelings the
/// one with the fewest label-1 nodes is returned, so decoupled ties go to 0.
pub fn minimize_binary_mrf(unary: &[[f64; 2]], pairwise: &[Pairwise]) -> Result<MrfSolution> {
    let n = unary.len();
    let mut g = FlowGraph::new(n);
    let mut constant = 0.0;
    for (u, d) in unary.iter().enumerate() {
        if !(d[0].is_finite() && d[1].is_finite()) {
            return Err(Error::InvalidInput(format!("unary cost of node {u} is not finite")));
        }
        // label 1 is the source side: it severs the sink edge
        let m = d[0].min(d[1]);
        constant += m;
        g.add_terminal(u, d[0] - m, d[1] - m)?;
    }
    for p in pairwise {
        if !(p.weight >= 0.0 && p.weight.is_finite()) {
            return Err(Error::NonSubmodular {
                u: p.u,
                v: p.v,
                weight: p.weight,
            });
        }
        g.add_edge(p.u, p.v, p.weight, p.weight)?;
    }
    let cut = max_flow(&g);
    let labels: Vec<u8> = cut.labels.iter().map(|&l| 1 - l).collect();
    let energy = mrf_energy(unary, pairwise, &labels);
    debug_assert!((energy - (cut.flow + constant)).abs() <= 1e-6 * (1.0 + energy.abs()));
    Ok(MrfSolution { labels, energy })
}

/// 8-neighborhood pairs of a `width × height` grid (row-major indices), each
/// unordered pair once, with the Euclidean distance between the pixels.
pub fn grid_pairs_8(width: usize, height: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(width * height * 4);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                out.push((i, i + 1, 1.0));
            }
            if y + 1 < height {
                out.push((i, i + width, 1.0));
                if x + 1 < width {
                    out.push((i, i + width + 1, std::f64::consts::SQRT_2));
                }
                if x > 0 {
                    out.push((i, i + width - 1, std::f64::consts::SQRT_2));
                }
            }
        }
    }
    out
}
