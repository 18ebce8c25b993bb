//! Turning a flow on the graph into a transportation map.
//!
//! Each net point in turn forwards its incoming flow directly to the
//! receivers of its outgoing flow, so no flow passes through it any more.
//! Shortcutting never increases the Euclidean cost, keeps every divergence
//! and never breaks the property at vertices already handled. After all net
//! points are processed, flow only runs between input points.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::instance::{Instance, MapEntry, TransportMap};
use crate::quadtree::Quadtree;
use crate::scalar::{euclidean, Scalar};

/// Antisymmetric flow between arbitrary vertex pairs: `flow(u, v) = -flow(v, u)`.
#[derive(Clone, Debug, Default)]
pub struct SparseFlow<T> {
    adj: Vec<BTreeMap<u32, T>>,
}

impl<T: Scalar> SparseFlow<T> {
    pub fn new(vertices: usize) -> Self {
        Self {
            adj: vec![BTreeMap::new(); vertices],
        }
    }

    /// Copies the edge flows of `g`, dropping those of magnitude at most `tau`.
    pub fn from_edges(g: &Graph<T>, f: &[T], tau: T) -> Self {
        let mut s = Self::new(g.vertex_count());
        for (e, &x) in g.edges().iter().zip(f) {
            if x.abs() > tau {
                s.add(e.tail as usize, e.head as usize, x);
            }
        }
        s
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    /// Flow from `u` to `v`.
    pub fn get(&self, u: usize, v: usize) -> T {
        self.adj[u].get(&(v as u32)).copied().unwrap_or_else(T::zero)
    }

    /// Adds `x` units from `u` to `v`; exact zeros are removed.
    pub fn add(&mut self, u: usize, v: usize, x: T) {
        assert_ne!(u, v, "self loop");
        let next = self.get(u, v) + x;
        if next == T::zero() {
            self.adj[u].remove(&(v as u32));
            self.adj[v].remove(&(u as u32));
        } else {
            self.adj[u].insert(v as u32, next);
            self.adj[v].insert(u as u32, -next);
        }
    }

    /// Nonzero entries at `u` as `(neighbor, flow from u)`, by neighbor id.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.adj[u].iter().map(|(&v, &x)| (v as usize, x))
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    /// Number of unordered pairs carrying flow.
    pub fn support(&self) -> usize {
        self.adj.iter().map(|m| m.len()).sum::<usize>() / 2
    }

    pub fn divergence(&self, u: usize) -> T {
        self.adj[u].values().copied().sum()
    }

    /// `sum |flow(u, v)| * ||pos(u) - pos(v)||` over unordered pairs.
    pub fn cost(&self, pos: &dyn Fn(usize) -> Vec<T>) -> T {
        let mut total = T::zero();
        for (u, m) in self.adj.iter().enumerate() {
            let pu = pos(u);
            for (&v, &x) in m.range(u as u32 + 1..) {
                total = total + x.abs() * euclidean(&pu, &pos(v as usize));
            }
        }
        total
    }
}

/// All flow at `u` moves in one direction.
pub fn check_nfp<T: Scalar>(f: &SparseFlow<T>, u: usize) -> bool {
    let mut pos = false;
    let mut neg = false;
    for (_, x) in f.neighbors(u) {
        pos |= x > T::zero();
        neg |= x < T::zero();
    }
    !(pos && neg)
}

/// Reroutes flow passing through `u` directly from its senders to its
/// receivers. Senders and receivers are each visited in vertex-id order;
/// entries of magnitude at most `tau` are ignored. Returns the number of
/// reroutings.
pub fn cancel_vertex<T: Scalar>(f: &mut SparseFlow<T>, u: usize, tau: T) -> usize {
    let senders: Vec<usize> = f.neighbors(u).filter(|&(_, x)| x < -tau).map(|(v, _)| v).collect();
    let receivers: Vec<usize> = f.neighbors(u).filter(|&(_, x)| x > tau).map(|(v, _)| v).collect();
    let (mut i, mut j) = (0, 0);
    let mut steps = 0;
    while i < senders.len() && j < receivers.len() {
        let v = senders[i];
        let w = receivers[j];
        let x = f.get(v, u).min(f.get(u, w));
        f.add(v, u, -x);
        f.add(u, w, -x);
        f.add(v, w, x);
        steps += 1;
        if f.get(v, u) <= tau {
            i += 1;
        }
        if f.get(u, w) <= tau {
            j += 1;
        }
    }
    steps
}

/// Work done while sweeping each level.
#[derive(Clone, Debug, Default)]
pub struct ExtractStats {
    /// Incident entries seen by the sweep of each level, coarsest first.
    pub level_work: Vec<usize>,
    pub reroutings: usize,
    /// Largest per-point mismatch closed by the repair pass.
    pub repaired: f64,
}

/// Rounds a feasible flow on `g` to a transportation map.
pub fn extract_map<T: Scalar>(
    f: &[T],
    g: &Graph<T>,
    q: &Quadtree<T>,
    inst: &Instance<T>,
    tau: T,
) -> Result<TransportMap<T>> {
    extract_map_with_stats(f, g, q, inst, tau).map(|(m, _)| m)
}

pub fn extract_map_with_stats<T: Scalar>(
    f: &[T],
    g: &Graph<T>,
    q: &Quadtree<T>,
    inst: &Instance<T>,
    tau: T,
) -> Result<(TransportMap<T>, ExtractStats)> {
    let mut sf = SparseFlow::from_edges(g, f, tau);
    let mut stats = ExtractStats {
        level_work: vec![0; q.depth() + 1],
        ..Default::default()
    };
    for l in (0..=q.depth()).rev() {
        for u in q.net_range(l) {
            stats.level_work[l] += sf.degree(u);
            stats.reroutings += cancel_vertex(&mut sf, u, tau);
        }
    }

    let n = inst.len();
    let mut source_index = vec![usize::MAX; n];
    let mut sink_index = vec![usize::MAX; n];
    for (i, &p) in inst.sources().iter().enumerate() {
        source_index[p] = i;
    }
    for (j, &p) in inst.sinks().iter().enumerate() {
        sink_index[p] = j;
    }

    // amounts[i][j] between the i-th source and j-th sink
    let mut amounts: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); inst.sources().len()];
    for &p in inst.sources() {
        for (v, x) in sf.neighbors(p) {
            if v < n && x > tau && sink_index[v] != usize::MAX {
                amounts[source_index[p]].insert(sink_index[v], x);
            }
        }
    }

    let limit = T::of(1e-6) * T::of(inst.total_supply().max(1) as f64);
    let mut sent: Vec<T> = amounts.iter().map(|m| m.values().copied().sum()).collect();
    let mut received = vec![T::zero(); inst.sinks().len()];
    for m in &amounts {
        for (&j, &x) in m {
            received[j] = received[j] + x;
        }
    }
    let want_out: Vec<T> = inst.sources().iter().map(|&p| T::of(inst.supply(p) as f64)).collect();
    let want_in: Vec<T> = inst.sinks().iter().map(|&p| T::of(-inst.supply(p) as f64)).collect();
    let mut worst = T::zero();
    for (i, (&s, &w)) in sent.iter().zip(&want_out).enumerate() {
        let gap = (s - w).abs();
        worst = worst.max(gap);
        if gap > limit {
            return Err(Error::RoundingResidual {
                point: inst.sources()[i],
                amount: gap.to_f64_lossy(),
            });
        }
    }
    for (j, (&r, &w)) in received.iter().zip(&want_in).enumerate() {
        let gap = (r - w).abs();
        worst = worst.max(gap);
        if gap > limit {
            return Err(Error::RoundingResidual {
                point: inst.sinks()[j],
                amount: gap.to_f64_lossy(),
            });
        }
    }
    stats.repaired = worst.to_f64_lossy();

    // trim oversent sources and overfilled sinks, then match what is missing
    for (i, m) in amounts.iter_mut().enumerate() {
        let mut over = sent[i] - want_out[i];
        for (&j, x) in m.iter_mut() {
            if over <= T::zero() {
                break;
            }
            let cut = over.min(*x);
            *x = *x - cut;
            received[j] = received[j] - cut;
            over = over - cut;
        }
        sent[i] = want_out[i] + over.max(T::zero());
    }
    for j in 0..received.len() {
        let mut over = received[j] - want_in[j];
        for (i, m) in amounts.iter_mut().enumerate() {
            if over <= T::zero() {
                break;
            }
            if let Some(x) = m.get_mut(&j) {
                let cut = over.min(*x);
                *x = *x - cut;
                sent[i] = sent[i] - cut;
                over = over - cut;
            }
        }
        received[j] = want_in[j] + over.max(T::zero());
    }
    let (mut i, mut j) = (0, 0);
    while i < sent.len() && j < received.len() {
        let a = want_out[i] - sent[i];
        let b = want_in[j] - received[j];
        if a <= T::zero() {
            i += 1;
            continue;
        }
        if b <= T::zero() {
            j += 1;
            continue;
        }
        let x = a.min(b);
        let slot = amounts[i].entry(j).or_insert_with(T::zero);
        *slot = *slot + x;
        sent[i] = sent[i] + x;
        received[j] = received[j] + x;
    }

    let entries = amounts
        .into_iter()
        .enumerate()
        .flat_map(|(i, m)| {
            m.into_iter()
                .filter(|&(_, x)| x > T::zero())
                .map(move |(j, x)| MapEntry {
                    source: i,
                    sink: j,
                    amount: x,
                })
        })
        .collect();
    Ok((TransportMap::new(entries), stats))
}
