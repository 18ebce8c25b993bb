//! The l1 sketch `B` that preconditions the incidence system, and the greedy
//! bottom-up router that realizes its upper bound.
//!
//! `B` has one row per vertex. The row of an input point `p` holds
//! `||p - N_L(p)||` in column `p`. The row of a net point `u` on level `l`
//! holds `eps0 * delta_l / (4 (L + 1))` in every column `v` whose level-`l`
//! subcell is `u`'s. For every zero-sum `b`,
//!
//! ```text
//! ||B b||_1  <=  min { ||f||_c : A f = b }  <=  gamma ||B b||_1,
//! gamma = 4 sqrt(d) (L + 1) / eps0,
//! ```
//!
//! and [`Sketch::route_flow`] constructs a flow achieving the right-hand
//! side.

use crate::error::{Error, Result};
use crate::flow::FlowVector;
use crate::graph::Graph;
use crate::quadtree::{NetPointId, Quadtree, VertexKind};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Sketch<T> {
    point_count: usize,
    depth: usize,
    // coefficient shared by all nonzeros of a row
    row_coeff: Vec<T>,
    // column-major membership: rows containing each vertex
    col_start: Vec<usize>,
    col_rows: Vec<u32>,
    // row-major membership
    row_start: Vec<usize>,
    row_members: Vec<u32>,
    gamma: T,
}

impl<T: Scalar> Sketch<T> {
    pub fn build(q: &Quadtree<T>, g: &Graph<T>) -> Self {
        let n = g.point_count();
        let nv = g.vertex_count();
        let depth = q.depth();

        let mut row_coeff = vec![T::zero(); nv];
        for (p, c) in row_coeff.iter_mut().enumerate().take(n) {
            *c = g.edge(g.up_edge(p).expect("every point has an E1 edge")).cost;
        }
        let scale = T::of(4.0 * (depth as f64 + 1.0));
        for l in 0..=depth {
            let c = q.subcell_side(l) / scale;
            for r in q.net_range(l) {
                row_coeff[r] = c;
            }
        }

        let mut col_start = Vec::with_capacity(nv + 1);
        let mut col_rows = Vec::with_capacity(nv * (depth + 2));
        col_start.push(0);
        for v in 0..nv {
            if v < n {
                col_rows.push(v as u32);
            }
            for l in 0..=depth {
                if let Some(u) = q.vertex_net(v, l) {
                    col_rows.push(q.net_vertex(u) as u32);
                }
            }
            col_start.push(col_rows.len());
        }

        let mut count = vec![0usize; nv + 1];
        for &r in &col_rows {
            count[r as usize + 1] += 1;
        }
        for r in 0..nv {
            count[r + 1] += count[r];
        }
        let row_start = count.clone();
        let mut fill = count;
        let mut row_members = vec![0u32; col_rows.len()];
        for v in 0..nv {
            for &r in &col_rows[col_start[v]..col_start[v + 1]] {
                row_members[fill[r as usize]] = v as u32;
                fill[r as usize] += 1;
            }
        }

        let gamma = T::of(4.0 * (q.dim() as f64).sqrt() * (depth as f64 + 1.0)) * T::of(q.subdivisions() as f64);
        Self {
            point_count: n,
            depth,
            row_coeff,
            col_start,
            col_rows,
            row_start,
            row_members,
            gamma,
        }
    }

    /// `4 sqrt(d) (L + 1) / eps0`.
    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn rows(&self) -> usize {
        self.row_coeff.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Leaf weight `||p - N_L(p)||` of input point `p`.
    pub fn leaf_weight(&self, p: usize) -> T {
        self.row_coeff[p]
    }

    pub fn row_coeff(&self, row: usize) -> T {
        self.row_coeff[row]
    }

    /// Vertices with a nonzero in `row`.
    pub fn members(&self, row: usize) -> &[u32] {
        &self.row_members[self.row_start[row]..self.row_start[row + 1]]
    }

    /// Rows with a nonzero in column `v`.
    pub fn column(&self, v: usize) -> &[u32] {
        &self.col_rows[self.col_start[v]..self.col_start[v + 1]]
    }

    pub fn nonzeros(&self) -> usize {
        self.col_rows.len()
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn apply(&self, b: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows()];
        self.apply_into(b, &mut out);
        out
    }

    pub fn apply_into(&self, b: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        for (v, &x) in b.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for &r in self.column(v) {
                out[r as usize] = out[r as usize] + x;
            }
        }
        for (o, &c) in out.iter_mut().zip(&self.row_coeff) {
            *o = *o * c;
        }
    }

    pub fn apply_transpose(&self, z: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.col_start.len() - 1];
        self.apply_transpose_into(z, &mut out);
        out
    }

    pub fn apply_transpose_into(&self, z: &[T], out: &mut [T]) {
        for (v, o) in out.iter_mut().enumerate() {
            *o = self
                .column(v)
                .iter()
                .map(|&r| self.row_coeff[r as usize] * z[r as usize])
                .sum();
        }
    }

    /// `||B b||_1`.
    pub fn norm(&self, b: &[T]) -> T {
        self.apply(b).iter().map(|x| x.abs()).sum()
    }

    /// `||B (e_u - e_v)||_1` without materializing the column difference.
    pub fn edge_norm(&self, u: usize, v: usize) -> T {
        let cu = self.column(u);
        let cv = self.column(v);
        let (mut i, mut j) = (0, 0);
        let mut total = T::zero();
        // columns are short; rows sorted per column except the leaf row first
        let mut a: Vec<u32> = cu.to_vec();
        let mut b: Vec<u32> = cv.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i] < b[j]) {
                total = total + self.row_coeff[a[i] as usize];
                i += 1;
            } else if i == a.len() || b[j] < a[i] {
                total = total + self.row_coeff[b[j] as usize];
                j += 1;
            } else {
                i += 1;
                j += 1;
            }
        }
        total
    }

    /// Builds a flow with `A f = b` and `||f||_c <= gamma ||B b||_1`.
    ///
    /// Points inject their supply through their E1 edge; net points inject
    /// at their own level. Going up from level `L`, opposite surpluses are
    /// cancelled inside each parent subcell over E2 edges, and what is left
    /// moves to the parent net point over E3. The root cell settles the rest.
    pub fn route_flow(&self, q: &Quadtree<T>, g: &Graph<T>, b: &[T]) -> Result<FlowVector<T>> {
        let total: T = b.iter().copied().sum();
        let mass: T = b.iter().map(|x| x.abs()).sum();
        if total.abs() > T::of(1e-9) * mass.max(T::one()) {
            return Err(Error::NonzeroTotal {
                total: total.to_f64_lossy(),
            });
        }
        let mut f = vec![T::zero(); g.edge_count()];
        // surplus: divergence so far minus prescribed supply
        let mut surplus: Vec<T> = b.iter().map(|&x| -x).collect();

        for p in 0..self.point_count {
            let e = g.up_edge(p).unwrap();
            let head = g.edge(e).head as usize;
            f[e] = b[p];
            surplus[p] = T::zero();
            surplus[head] = surplus[head] - b[p];
        }

        let k = q.subdivisions() as usize;
        let dim = q.dim();
        let per_cell = q.net_points_per_cell();
        let half = k / 2;
        let groups = half.pow(dim as u32);
        let mut members: Vec<Vec<usize>> = vec![Vec::with_capacity(1 << dim); groups];
        for l in (1..=self.depth).rev() {
            for c in 0..q.cells().cell_count(l) {
                members.iter_mut().for_each(|m| m.clear());
                for local in 0..per_cell {
                    let mut rest = local;
                    let mut gi = 0;
                    let mut stride = 1;
                    for _ in 0..dim {
                        gi += ((rest % k) / 2) * stride;
                        rest /= k;
                        stride *= half;
                    }
                    members[gi].push(local);
                }
                for m in &members {
                    let ids: Vec<NetPointId> = m
                        .iter()
                        .map(|&local| NetPointId {
                            level: l,
                            cell: c,
                            local,
                        })
                        .collect();
                    cancel_pairs(q, g, &ids, &mut surplus, &mut f);
                    let parent = q.net_vertex(q.parent_net(ids[0]).unwrap());
                    for id in &ids {
                        let v = q.net_vertex(*id);
                        let s = surplus[v];
                        if s != T::zero() {
                            let e = g.up_edge(v).unwrap();
                            debug_assert_eq!(g.edge(e).tail as usize, parent);
                            f[e] = f[e] + s;
                            surplus[parent] = surplus[parent] + s;
                            surplus[v] = T::zero();
                        }
                    }
                }
            }
        }
        let root: Vec<NetPointId> = (0..per_cell)
            .map(|local| NetPointId {
                level: 0,
                cell: 0,
                local,
            })
            .collect();
        cancel_pairs(q, g, &root, &mut surplus, &mut f);
        Ok(f)
    }
}

/// Cancels opposite surpluses among net points of one cell, walking the
/// positive and negative lists in vertex-id order.
fn cancel_pairs<T: Scalar>(q: &Quadtree<T>, g: &Graph<T>, ids: &[NetPointId], surplus: &mut [T], f: &mut [T]) {
    let pos: Vec<NetPointId> = ids
        .iter()
        .copied()
        .filter(|&id| surplus[q.net_vertex(id)] > T::zero())
        .collect();
    let neg: Vec<NetPointId> = ids
        .iter()
        .copied()
        .filter(|&id| surplus[q.net_vertex(id)] < T::zero())
        .collect();
    let (mut i, mut j) = (0, 0);
    while i < pos.len() && j < neg.len() {
        let u = q.net_vertex(pos[i]);
        let v = q.net_vertex(neg[j]);
        let x = surplus[u].min(-surplus[v]);
        // x units from v to u
        let e = g.cell_edge(pos[i], neg[j]).expect("same cell");
        if g.edge(e).tail as usize == v {
            f[e] = f[e] + x;
        } else {
            f[e] = f[e] - x;
        }
        surplus[u] = surplus[u] - x;
        surplus[v] = surplus[v] + x;
        if surplus[u] <= T::zero() {
            surplus[u] = surplus[u].max(T::zero());
            i += 1;
        }
        if surplus[v] >= T::zero() {
            surplus[v] = surplus[v].min(T::zero());
            j += 1;
        }
    }
}

/// Kind-aware helper for diagnostics: the level a sketch row aggregates, or
/// `None` for a leaf row.
pub fn row_level<T: Scalar>(q: &Quadtree<T>, row: usize) -> Option<usize> {
    match q.vertex_kind(row) {
        VertexKind::Point(_) => None,
        VertexKind::Net(id) => Some(id.level),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{apply_incidence, flow_cost, supply_vector};
    use crate::instance::Instance;
    use crate::scalar::{dot, l1_norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, k: u32) -> (Instance<f64>, Quadtree<f64>, Graph<f64>, Sketch<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let sup: Vec<i64> = (0..n)
            .map(|i| if i % 2 == 0 { 1 + i as i64 } else { -(i as i64) })
            .collect();
        let inst = Instance::new(2, pts, sup).unwrap();
        let q = Quadtree::new(crate::quadtree::CellTree::build(&inst, seed).unwrap(), k).unwrap();
        let g = Graph::build(&q, &inst);
        let s = Sketch::build(&q, &g);
        (inst, q, g, s)
    }

    #[test]
    fn points_appear_in_depth_plus_two_rows() {
        let (inst, q, _, s) = setup(1, 4);
        for p in 0..inst.len() {
            assert_eq!(s.column(p).len(), q.depth() + 2);
        }
        for l in 0..=q.depth() {
            for v in q.net_range(l) {
                assert!(s.column(v).contains(&(v as u32)), "net point in its own row");
                assert!(s.column(v).len() <= q.depth() + 2);
            }
        }
        assert!(s.nonzeros() <= s.rows() * (q.depth() + 2));
    }

    #[test]
    fn nonzero_count_matches_enumeration() {
        let (_, q, g, s) = setup(2, 2);
        let mut count = g.point_count();
        for v in 0..g.vertex_count() {
            for l in 0..=q.depth() {
                if let Some(u) = q.vertex_net(v, l) {
                    // brute force: geometric containment in u's subcell
                    let h = q.subcell_side(l);
                    let c = q.net_position(u);
                    if let VertexKind::Net(id) = q.vertex_kind(v) {
                        let p = q.net_position(id);
                        for a in 0..q.dim() {
                            assert!(p[a] >= c[a] - h / 2.0 - 1e-12 && p[a] < c[a] + h / 2.0 + 1e-12);
                        }
                    }
                    count += 1;
                }
            }
        }
        assert_eq!(count, s.nonzeros());
    }

    #[test]
    fn apply_examples() {
        let (_, _, g, s) = setup(3, 4);
        let zero = vec![0.0; g.vertex_count()];
        assert_eq!(s.norm(&zero), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..g.vertex_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = b.iter().map(|x| -2.5 * x).collect();
        assert!((s.norm(&scaled) - 2.5 * s.norm(&b)).abs() < 1e-12 * s.norm(&b));
    }

    #[test]
    fn shared_subcells_cancel() {
        // +1/-1 on the E3 endpoints u (level l) and its parent w share every
        // row from level 0 to l-1 and differ only on rows l and deeper
        let (_, q, g, s) = setup(4, 4);
        let l = q.depth();
        let v = q.net_range(l).start;
        let e = g.up_edge(v).unwrap();
        let w = g.edge(e).tail as usize;
        let mut b = vec![0.0; g.vertex_count()];
        b[v] = 1.0;
        b[w] = -1.0;
        let rows = s.apply(&b);
        for (r, &x) in rows.iter().enumerate() {
            if let Some(rl) = row_level(&q, r) {
                if rl < l {
                    assert_eq!(x, 0.0, "row {r} on level {rl}");
                }
            }
        }
        assert!(s.norm(&b) > 0.0);
    }

    #[test]
    fn transpose_is_adjoint() {
        let (_, _, g, s) = setup(6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let b: Vec<f64> = (0..g.vertex_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..s.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // direct double sum over the explicit membership
            let mut direct = 0.0;
            for (r, &zr) in z.iter().enumerate() {
                for &v in s.members(r) {
                    direct += zr * s.row_coeff(r) * b[v as usize];
                }
            }
            let lhs = dot(&s.apply(&b), &z);
            let rhs = dot(&b, &s.apply_transpose(&z));
            assert!((lhs - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            assert!((rhs - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
        let mut z = vec![0.0; s.rows()];
        z[0] = 1.0;
        let t = s.apply_transpose(&z);
        assert_eq!(t[0], s.leaf_weight(0));
        assert!(t[1..].iter().all(|&x| x == 0.0));
        assert!(s.apply_transpose(&vec![0.0; s.rows()]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn edge_norm_matches_apply() {
        let (_, _, g, s) = setup(8, 4);
        for e in (0..g.edge_count()).step_by(7) {
            let ed = g.edge(e);
            let mut b = vec![0.0; g.vertex_count()];
            b[ed.tail as usize] = 1.0;
            b[ed.head as usize] = -1.0;
            assert!((s.edge_norm(ed.tail as usize, ed.head as usize) - s.norm(&b)).abs() < 1e-12);
        }
    }

    #[test]
    fn router_feasible_and_within_gamma() {
        for seed in 0..5 {
            let (inst, q, g, s) = setup(seed, 4);
            let b = supply_vector(&inst, &g);
            let f = s.route_flow(&q, &g, &b).unwrap();
            let div = apply_incidence(&g, &f);
            let tol = 1e-9 * l1_norm(&b);
            for (x, y) in div.iter().zip(&b) {
                assert!((x - y).abs() <= tol);
            }
            assert!(flow_cost(&g, &f) <= s.gamma() * s.norm(&b));

            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut r: Vec<f64> = (0..g.vertex_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            r.iter_mut().for_each(|x| *x -= mean);
            let f = s.route_flow(&q, &g, &r).unwrap();
            let div = apply_incidence(&g, &f);
            let tol = 1e-9 * l1_norm(&r);
            for (x, y) in div.iter().zip(&r) {
                assert!((x - y).abs() <= tol);
            }
            assert!(flow_cost(&g, &f) <= s.gamma() * s.norm(&r));
        }
    }

    #[test]
    fn router_zero_and_imbalanced() {
        let (_, q, g, s) = setup(9, 2);
        let f = s.route_flow(&q, &g, &vec![0.0; g.vertex_count()]).unwrap();
        assert!(f.iter().all(|&x| x == 0.0));
        let mut b = vec![0.0; g.vertex_count()];
        b[0] = 1.0;
        assert!(matches!(s.route_flow(&q, &g, &b), Err(Error::NonzeroTotal { .. })));
    }

    #[test]
    fn surplus_at_subcell_centers() {
        // after the children of u are processed, u's surplus is minus the
        // supply inside its subcell; the E3 flows to the children record it
        let (inst, q, g, s) = setup(10, 4);
        let b = supply_vector(&inst, &g);
        let f = s.route_flow(&q, &g, &b).unwrap();
        for l in 0..q.depth() {
            for u in q.net_range(l) {
                let mut out = 0.0;
                for inc in g.neighbors(u) {
                    let e = inc.edge as usize;
                    if g.family(e) == crate::graph::EdgeFamily::ParentChild && g.edge(e).tail as usize == u {
                        out += f[e];
                    }
                }
                let inside: f64 = (0..inst.len())
                    .filter(|&p| q.net_vertex(q.point_net(p, l)) == u)
                    .map(|p| b[p])
                    .sum();
                assert!((out - b[u] + inside).abs() < 1e-9, "level {l} vertex {u}");
            }
        }
    }
}
