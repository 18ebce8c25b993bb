//! Min-cost flow on the graph as a linear system: supplies `b`, the
//! vertex-by-edge incidence operator `A` and the weighted norm
//! `sum_e c(e) |f_e|`. `A` is never materialized; both products are one pass
//! over the edge list.

use crate::graph::Graph;
use crate::instance::Instance;
use crate::scalar::Scalar;

/// Signed flow per oriented edge; positive means along `tail -> head`.
pub type FlowVector<T> = Vec<T>;

/// One value per vertex.
pub type SupplyVector<T> = Vec<T>;

/// `b_p = mu(p)` on input points, zero on net points.
pub fn supply_vector<T: Scalar>(inst: &Instance<T>, g: &Graph<T>) -> SupplyVector<T> {
    let mut b = vec![T::zero(); g.vertex_count()];
    for (p, &s) in inst.supplies().iter().enumerate() {
        b[p] = T::of(s as f64);
    }
    b
}

/// Divergence `(A f)_u`: net flow leaving each vertex.
pub fn apply_incidence<T: Scalar>(g: &Graph<T>, f: &[T]) -> SupplyVector<T> {
    let mut out = vec![T::zero(); g.vertex_count()];
    apply_incidence_into(g, f, &mut out);
    out
}

pub fn apply_incidence_into<T: Scalar>(g: &Graph<T>, f: &[T], out: &mut [T]) {
    debug_assert_eq!(f.len(), g.edge_count());
    out.iter_mut().for_each(|x| *x = T::zero());
    for (e, &x) in g.edges().iter().zip(f) {
        out[e.tail as usize] = out[e.tail as usize] + x;
        out[e.head as usize] = out[e.head as usize] - x;
    }
}

/// `(A^T y)_e = y_tail - y_head`.
pub fn apply_incidence_transpose<T: Scalar>(g: &Graph<T>, y: &[T]) -> FlowVector<T> {
    let mut out = vec![T::zero(); g.edge_count()];
    apply_incidence_transpose_into(g, y, &mut out);
    out
}

pub fn apply_incidence_transpose_into<T: Scalar>(g: &Graph<T>, y: &[T], out: &mut [T]) {
    debug_assert_eq!(y.len(), g.vertex_count());
    for (o, e) in out.iter_mut().zip(g.edges()) {
        *o = y[e.tail as usize] - y[e.head as usize];
    }
}

/// `||f||_c = sum_e c(e) |f_e|`.
pub fn flow_cost<T: Scalar>(g: &Graph<T>, f: &[T]) -> T {
    g.edges().iter().zip(f).map(|(e, &x)| e.cost * x.abs()).sum()
}
