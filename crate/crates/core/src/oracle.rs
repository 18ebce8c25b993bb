//! Exact solvers for small inputs, used as ground truth in tests.
//!
//! Both solvers run successive shortest augmenting paths with node
//! potentials on an uncapacitated network. Costs are real, so comparisons
//! use a fixed relative tolerance with ties broken by vertex id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::instance::{Instance, MapEntry, TransportMap};
use crate::scalar::Scalar;

pub const MAX_EMD_POINTS: usize = 512;
pub const MAX_EMD_SUPPLY: u64 = 1_000_000;
pub const MAX_GRAPH_VERTICES: usize = 5000;

#[derive(Clone, Debug)]
pub struct OracleResult<T> {
    pub cost: T,
    /// Optimal map, for [`exact_emd`].
    pub map: Option<TransportMap<T>>,
    /// Optimal signed edge flow, for [`exact_mincost_on_graph`].
    pub flow: Option<Vec<T>>,
}

#[derive(Clone, Copy)]
struct Arc {
    to: usize,
    cost: f64,
    // flow on a forward arc, or the residual capacity of its reverse twin
    flow: f64,
    forward: bool,
}

/// Uncapacitated network; each added arc gets a reverse residual twin.
struct Network {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    v: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.v.cmp(&self.v))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Network {
    fn new(n: usize) -> Self {
        Self {
            arcs: Vec::new(),
            out: vec![Vec::new(); n],
        }
    }

    fn add_arc(&mut self, u: usize, v: usize, cost: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc {
            to: v,
            cost,
            flow: 0.0,
            forward: true,
        });
        self.arcs.push(Arc {
            to: u,
            cost: -cost,
            flow: 0.0,
            forward: false,
        });
        self.out[u].push(id);
        self.out[v].push(id + 1);
        id
    }

    fn residual(&self, a: usize) -> f64 {
        let arc = &self.arcs[a];
        if arc.forward {
            f64::INFINITY
        } else {
            self.arcs[a ^ 1].flow
        }
    }

    /// Routes `excess` (positive = must send) to zero. Returns the total cost.
    fn solve(&mut self, mut excess: Vec<f64>, tol: f64) -> Result<f64> {
        let n = self.out.len();
        let mut pot = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut done = vec![false; n];
        loop {
            if !excess.iter().any(|&x| x > tol) {
                break;
            }
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            pred.iter_mut().for_each(|p| *p = usize::MAX);
            done.iter_mut().for_each(|d| *d = false);
            let mut heap = BinaryHeap::new();
            for v in 0..n {
                if excess[v] > tol {
                    dist[v] = 0.0;
                    heap.push(Entry { dist: 0.0, v });
                }
            }
            let mut target = None;
            while let Some(Entry { dist: d, v }) = heap.pop() {
                if done[v] || d > dist[v] {
                    continue;
                }
                done[v] = true;
                if excess[v] < -tol {
                    target = Some(v);
                    break;
                }
                for &a in &self.out[v] {
                    if self.residual(a) <= tol {
                        continue;
                    }
                    let w = self.arcs[a].to;
                    let rc = (self.arcs[a].cost + pot[v] - pot[w]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[w] {
                        dist[w] = nd;
                        pred[w] = a;
                        heap.push(Entry { dist: nd, v: w });
                    }
                }
            }
            let t = target.ok_or_else(|| Error::Invalid("supplies cannot be routed (disconnected)".into()))?;
            let dt = dist[t];
            for v in 0..n {
                pot[v] += if done[v] { dist[v] } else { dt };
            }

            let mut amount = -excess[t];
            let mut v = t;
            while pred[v] != usize::MAX {
                let a = pred[v];
                amount = amount.min(self.residual(a));
                v = self.arcs[a ^ 1].to;
            }
            let s = v;
            amount = amount.min(excess[s]);
            let mut v = t;
            while pred[v] != usize::MAX {
                let a = pred[v];
                if self.arcs[a].forward {
                    self.arcs[a].flow += amount;
                } else {
                    self.arcs[a ^ 1].flow -= amount;
                }
                v = self.arcs[a ^ 1].to;
            }
            excess[s] -= amount;
            excess[t] += amount;
        }
        Ok(self.arcs.iter().filter(|a| a.forward).map(|a| a.cost * a.flow).sum())
    }
}

/// Exact transportation cost and an optimal map on the complete bipartite
/// graph between sources and sinks.
pub fn exact_emd<T: Scalar>(inst: &Instance<T>) -> Result<OracleResult<T>> {
    if inst.len() > MAX_EMD_POINTS {
        return Err(Error::OracleLimit {
            what: "point count",
            actual: inst.len(),
            limit: MAX_EMD_POINTS,
        });
    }
    if inst.total_supply() > MAX_EMD_SUPPLY {
        return Err(Error::OracleLimit {
            what: "total supply",
            actual: inst.total_supply() as usize,
            limit: MAX_EMD_SUPPLY as usize,
        });
    }
    let n = inst.len();
    let mut net = Network::new(n);
    let mut pairs = Vec::new();
    for (i, &p) in inst.sources().iter().enumerate() {
        for (j, &q) in inst.sinks().iter().enumerate() {
            let a = net.add_arc(p, q, inst.distance(p, q).to_f64_lossy());
            pairs.push((i, j, a));
        }
    }
    let excess: Vec<f64> = inst.supplies().iter().map(|&s| s as f64).collect();
    let cost = net.solve(excess, 0.5)?;
    let entries = pairs
        .into_iter()
        .filter(|&(_, _, a)| net.arcs[a].flow > 0.5)
        .map(|(source, sink, a)| MapEntry {
            source,
            sink,
            amount: T::of(net.arcs[a].flow),
        })
        .collect();
    Ok(OracleResult {
        cost: T::of(cost),
        map: Some(TransportMap::new(entries)),
        flow: None,
    })
}

/// Exact `min { ||f||_c : A f = b }` on the graph, for supplies anywhere on
/// its vertices.
pub fn exact_mincost_on_graph<T: Scalar>(g: &Graph<T>, b: &[T]) -> Result<OracleResult<T>> {
    if g.vertex_count() > MAX_GRAPH_VERTICES {
        return Err(Error::OracleLimit {
            what: "vertex count",
            actual: g.vertex_count(),
            limit: MAX_GRAPH_VERTICES,
        });
    }
    let excess: Vec<f64> = b.iter().map(|x| x.to_f64_lossy()).collect();
    let scale: f64 = excess.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let total: f64 = excess.iter().sum();
    if total.abs() > 1e-9 * scale.max(1.0) {
        return Err(Error::NonzeroTotal { total });
    }
    let mut net = Network::new(g.vertex_count());
    let mut arcs = Vec::with_capacity(g.edge_count());
    for e in g.edges() {
        let c = e.cost.to_f64_lossy();
        let fwd = net.add_arc(e.tail as usize, e.head as usize, c);
        let bwd = net.add_arc(e.head as usize, e.tail as usize, c);
        arcs.push((fwd, bwd));
    }
    let cost = net.solve(excess, 1e-12 * scale)?;
    let flow = arcs
        .iter()
        .map(|&(f, r)| T::of(net.arcs[f].flow - net.arcs[r].flow))
        .collect();
    Ok(OracleResult {
        cost: T::of(cost),
        map: None,
        flow: Some(flow),
    })
}
