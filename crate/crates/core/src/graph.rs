//! The sparse flow graph on input points and net points.
//!
//! Edges come in three families, stored contiguously in this order:
//! - E1: each input point to its net point on the deepest level;
//! - E2: all pairs of net points inside one retained cell;
//! - E3: each net point on level `l >= 1` to its parent net point.
//!
//! Every edge is oriented from the lower to the higher vertex id and costs
//! the Euclidean distance between its endpoints.

use std::fmt;
use std::ops::Range;

use crate::instance::Instance;
use crate::quadtree::{NetPointId, Quadtree, VertexKind};
use crate::scalar::{euclidean, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge<T> {
    pub tail: u32,
    pub head: u32,
    pub cost: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeFamily {
    PointToNet,
    WithinCell,
    ParentChild,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub neighbor: u32,
    pub edge: u32,
    /// +1 when the edge leaves this vertex, -1 when it enters.
    pub sign: i8,
}

#[derive(Clone, Debug)]
pub struct Graph<T> {
    vertex_count: usize,
    point_count: usize,
    edges: Vec<Edge<T>>,
    e1: Range<usize>,
    e2: Range<usize>,
    e3: Range<usize>,
    // first E2 edge of each (level, cell), indexed by a running cell number
    cell_e2_base: Vec<Vec<usize>>,
    per_cell: usize,
    // E1 edge for input points, E3 edge to the parent for net points
    up_edge: Vec<Option<u32>>,
    adj_start: Vec<usize>,
    adj: Vec<Incidence>,
    depth: usize,
}

impl<T: Scalar> Graph<T> {
    pub fn build(q: &Quadtree<T>, inst: &Instance<T>) -> Self {
        let points: Vec<&[T]> = (0..inst.len()).map(|i| inst.point(i)).collect();
        Self::from_points(q, &points)
    }

    /// Builds the graph given the coordinates of the points `q` was built on.
    pub fn from_points(q: &Quadtree<T>, points: &[&[T]]) -> Self {
        let n = points.len();
        assert_eq!(n, q.point_count());
        let nv = q.vertex_count();
        let depth = q.depth();
        let k = q.subdivisions() as i64;
        let dim = q.dim();
        let per_cell = q.net_points_per_cell();
        let pairs_per_cell = per_cell * (per_cell - 1) / 2;

        let total_cells: usize = (0..=depth).map(|l| q.cells().cell_count(l)).sum();
        let e3_count: usize = (1..=depth).map(|l| q.net_count(l)).sum();
        let mut edges = Vec::with_capacity(n + total_cells * pairs_per_cell + e3_count);
        let mut up_edge = vec![None; nv];

        for p in 0..n {
            let net = q.point_net(p, depth);
            let u = q.net_vertex(net);
            let cost = euclidean(points[p], &q.net_position(net));
            up_edge[p] = Some(edges.len() as u32);
            edges.push(Edge {
                tail: p as u32,
                head: u as u32,
                cost,
            });
        }
        let e1 = 0..edges.len();

        // within-cell offsets depend only on local coordinates
        let local: Vec<Vec<i64>> = (0..per_cell)
            .map(|mut r| {
                (0..dim)
                    .map(|_| {
                        let j = r as i64 % k;
                        r /= k as usize;
                        j
                    })
                    .collect()
            })
            .collect();
        let mut cell_e2_base = Vec::with_capacity(depth + 1);
        for l in 0..=depth {
            let h = q.subcell_side(l);
            let mut offsets: Vec<T> = Vec::with_capacity(pairs_per_cell);
            for i in 0..per_cell {
                for j in i + 1..per_cell {
                    let s: i64 = local[i].iter().zip(&local[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    offsets.push(h * T::of(s as f64).sqrt());
                }
            }
            let mut bases = Vec::with_capacity(q.cells().cell_count(l));
            for c in 0..q.cells().cell_count(l) {
                bases.push(edges.len());
                let base = q.net_vertex(NetPointId {
                    level: l,
                    cell: c,
                    local: 0,
                });
                let mut t = 0;
                for i in 0..per_cell {
                    for j in i + 1..per_cell {
                        edges.push(Edge {
                            tail: (base + i) as u32,
                            head: (base + j) as u32,
                            cost: offsets[t],
                        });
                        t += 1;
                    }
                }
            }
            cell_e2_base.push(bases);
        }
        let e2 = e1.end..edges.len();

        for l in 1..=depth {
            for v in q.net_range(l) {
                let VertexKind::Net(id) = q.vertex_kind(v) else {
                    unreachable!()
                };
                let parent = q.parent_net(id).expect("parent of a retained cell is retained");
                let u = q.net_vertex(parent);
                let cost = euclidean(&q.net_position(parent), &q.net_position(id));
                up_edge[v] = Some(edges.len() as u32);
                edges.push(Edge {
                    tail: u as u32,
                    head: v as u32,
                    cost,
                });
            }
        }
        let e3 = e2.end..edges.len();

        let mut degree = vec![0usize; nv + 1];
        for e in &edges {
            degree[e.tail as usize] += 1;
            degree[e.head as usize] += 1;
        }
        let mut adj_start = vec![0usize; nv + 1];
        for v in 0..nv {
            adj_start[v + 1] = adj_start[v] + degree[v];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![
            Incidence {
                neighbor: 0,
                edge: 0,
                sign: 0
            };
            2 * edges.len()
        ];
        for (id, e) in edges.iter().enumerate() {
            adj[fill[e.tail as usize]] = Incidence {
                neighbor: e.head,
                edge: id as u32,
                sign: 1,
            };
            fill[e.tail as usize] += 1;
            adj[fill[e.head as usize]] = Incidence {
                neighbor: e.tail,
                edge: id as u32,
                sign: -1,
            };
            fill[e.head as usize] += 1;
        }
        for v in 0..nv {
            adj[adj_start[v]..adj_start[v + 1]].sort_unstable_by_key(|i| i.neighbor);
        }

        Self {
            vertex_count: nv,
            point_count: n,
            edges,
            e1,
            e2,
            e3,
            cell_e2_base,
            per_cell,
            up_edge,
            adj_start,
            adj,
            depth,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge<T> {
        &self.edges[e]
    }

    pub fn family(&self, e: usize) -> EdgeFamily {
        if self.e1.contains(&e) {
            EdgeFamily::PointToNet
        } else if self.e2.contains(&e) {
            EdgeFamily::WithinCell
        } else {
            EdgeFamily::ParentChild
        }
    }

    pub fn family_range(&self, f: EdgeFamily) -> Range<usize> {
        match f {
            EdgeFamily::PointToNet => self.e1.clone(),
            EdgeFamily::WithinCell => self.e2.clone(),
            EdgeFamily::ParentChild => self.e3.clone(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Incidences of `v`, sorted by neighbor id.
    pub fn neighbors(&self, v: usize) -> &[Incidence] {
        &self.adj[self.adj_start[v]..self.adj_start[v + 1]]
    }

    /// The E1 edge of an input point or the E3 edge from a net point to its
    /// parent.
    pub fn up_edge(&self, v: usize) -> Option<usize> {
        self.up_edge[v].map(|e| e as usize)
    }

    /// E2 edge joining two distinct net points of the same cell.
    pub fn cell_edge(&self, a: NetPointId, b: NetPointId) -> Option<usize> {
        if a.level != b.level || a.cell != b.cell || a.local == b.local {
            return None;
        }
        let (i, j) = if a.local < b.local {
            (a.local, b.local)
        } else {
            (b.local, a.local)
        };
        let k = self.per_cell;
        let rank = i * k - i * (i + 1) / 2 + (j - i - 1);
        Some(self.cell_e2_base[a.level][a.cell] + rank)
    }

    pub fn find_edge(&self, u: usize, v: usize) -> Option<usize> {
        let nb = self.neighbors(u);
        nb.binary_search_by_key(&(v as u32), |i| i.neighbor)
            .ok()
            .map(|at| nb[at].edge as usize)
    }

    pub fn stats(&self, q: &Quadtree<T>) -> GraphStats {
        let mut levels = Vec::with_capacity(self.depth + 1);
        let pairs = self.per_cell * (self.per_cell - 1) / 2;
        for l in 0..=self.depth {
            levels.push(LevelStats {
                level: l,
                cells: q.cells().cell_count(l),
                net_points: q.net_count(l),
                within_cell_edges: q.cells().cell_count(l) * pairs,
                parent_edges: if l == 0 { 0 } else { q.net_count(l) },
            });
        }
        GraphStats {
            vertices: self.vertex_count,
            points: self.point_count,
            point_edges: self.e1.len(),
            within_cell_edges: self.e2.len(),
            parent_edges: self.e3.len(),
            eps0_inverse: q.subdivisions(),
            levels,
        }
    }
}

/// Largest level on which input points `p` and `r` share a cell.
pub fn sep_level<T: Scalar>(q: &Quadtree<T>, p: usize, r: usize) -> usize {
    let cells = q.cells();
    (0..=q.depth())
        .take_while(|&l| cells.point_cell(p, l) == cells.point_cell(r, l))
        .last()
        .unwrap_or(0)
}

/// Edge ids of the up-across-down path between distinct input points `p`
/// and `r`, in order from `p` to `r`.
pub fn canonical_path<T: Scalar>(g: &Graph<T>, q: &Quadtree<T>, p: usize, r: usize) -> Vec<usize> {
    let top = sep_level(q, p, r);
    let depth = q.depth();
    let mut up = vec![g.up_edge(p).unwrap()];
    let mut down = vec![g.up_edge(r).unwrap()];
    for l in (top + 1..=depth).rev() {
        up.push(g.up_edge(q.net_vertex(q.point_net(p, l))).unwrap());
        down.push(g.up_edge(q.net_vertex(q.point_net(r, l))).unwrap());
    }
    let a = q.point_net(p, top);
    let b = q.point_net(r, top);
    if let Some(e) = g.cell_edge(a, b) {
        up.push(e);
    }
    up.extend(down.into_iter().rev());
    up
}

pub fn path_length<T: Scalar>(g: &Graph<T>, path: &[usize]) -> T {
    path.iter().map(|&e| g.edge(e).cost).sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelStats {
    pub level: usize,
    pub cells: usize,
    pub net_points: usize,
    pub within_cell_edges: usize,
    pub parent_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStats {
    pub vertices: usize,
    pub points: usize,
    pub point_edges: usize,
    pub within_cell_edges: usize,
    pub parent_edges: usize,
    pub eps0_inverse: u32,
    pub levels: Vec<LevelStats>,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# graph: eps0 = 1/{}", self.eps0_inverse)?;
        writeln!(
            f,
            "# vertices {} (points {}), edges {} (E1 {}, E2 {}, E3 {})",
            self.vertices,
            self.points,
            self.point_edges + self.within_cell_edges + self.parent_edges,
            self.point_edges,
            self.within_cell_edges,
            self.parent_edges
        )?;
        writeln!(f, "# level cells net_points E2 E3")?;
        for l in &self.levels {
            writeln!(
                f,
                "# {} {} {} {} {}",
                l.level, l.cells, l.net_points, l.within_cell_edges, l.parent_edges
            )?;
        }
        Ok(())
    }
}
