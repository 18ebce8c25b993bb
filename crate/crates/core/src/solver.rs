//! Preconditioned min-cost flow: a multiplicative-weights solver for the
//! l1-feasibility problem `{ ||g||_1 <= 1, M g = target / t }` with
//! `M = B A C^-1 / s`, a search over the value `t`, and residual refinement
//! stages closed off by the greedy router.

use std::cell::RefCell;

use log::debug;

use crate::error::{Error, Result};
use crate::flow::{apply_incidence, flow_cost, supply_vector, FlowVector};
use crate::graph::Graph;
use crate::instance::Instance;
use crate::quadtree::Quadtree;
use crate::scalar::{dot, l1_norm, Scalar};
use crate::sketch::Sketch;

/// `M = B A C^-1 / s`, scaled so that its largest column has unit l1 norm.
pub struct PreconditionedSystem<'a, T> {
    graph: &'a Graph<T>,
    sketch: &'a Sketch<T>,
    // edge costs, clamped away from zero
    cost: Vec<T>,
    scale: T,
    // per-vertex buffer for operator applications
    scratch: RefCell<Vec<T>>,
}

impl<'a, T: Scalar> PreconditionedSystem<'a, T> {
    pub fn normalize(graph: &'a Graph<T>, sketch: &'a Sketch<T>) -> Self {
        let max_cost = graph.edges().iter().map(|e| e.cost).fold(T::zero(), T::max);
        let floor = max_cost * T::of(1e-12);
        let cost: Vec<T> = graph
            .edges()
            .iter()
            .map(|e| e.cost.max(floor).max(T::min_positive_value()))
            .collect();
        let mut scale = T::zero();
        for (e, &c) in graph.edges().iter().zip(&cost) {
            scale = scale.max(sketch.edge_norm(e.tail as usize, e.head as usize) / c);
        }
        if scale == T::zero() {
            scale = T::one();
        }
        Self {
            graph,
            sketch,
            cost,
            scale,
            scratch: RefCell::new(vec![T::zero(); graph.vertex_count()]),
        }
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn graph(&self) -> &Graph<T> {
        self.graph
    }

    pub fn sketch(&self) -> &Sketch<T> {
        self.sketch
    }

    /// Cost divisor used for column `e`.
    pub fn cost(&self, e: usize) -> T {
        self.cost[e]
    }

    /// `(1/s) B b`.
    pub fn target(&self, b: &[T]) -> Vec<T> {
        let mut t = self.sketch.apply(b);
        t.iter_mut().for_each(|x| *x = *x / self.scale);
        t
    }

    /// Turns a solution `g` of the normalized system into a flow `C^-1 g`.
    pub fn to_flow(&self, g: &[T]) -> FlowVector<T> {
        g.iter().zip(&self.cost).map(|(&x, &c)| x / c).collect()
    }

    pub fn apply(&self, g: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows()];
        L1System::apply(self, g, &mut out);
        out
    }

    pub fn apply_transpose(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols()];
        L1System::apply_transpose(self, y, &mut out);
        out
    }

    /// l1 norm of column `e` of `M`.
    pub fn column_norm(&self, e: usize) -> T {
        let ed = self.graph.edge(e);
        self.sketch.edge_norm(ed.tail as usize, ed.head as usize) / (self.cost[e] * self.scale)
    }
}

/// A linear map with columns of l1 norm at most 1, as consumed by
/// [`mwu_feasibility`].
pub trait L1System<T: Scalar> {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, g: &[T], out: &mut [T]);
    fn apply_transpose(&self, y: &[T], out: &mut [T]);
}

impl<T: Scalar> L1System<T> for PreconditionedSystem<'_, T> {
    fn rows(&self) -> usize {
        self.sketch.rows()
    }

    fn cols(&self) -> usize {
        self.cost.len()
    }

    fn apply(&self, g: &[T], out: &mut [T]) {
        let mut div = self.scratch.borrow_mut();
        div.iter_mut().for_each(|x| *x = T::zero());
        for ((e, &x), &c) in self.graph.edges().iter().zip(g).zip(&self.cost) {
            let f = x / c;
            div[e.tail as usize] = div[e.tail as usize] + f;
            div[e.head as usize] = div[e.head as usize] - f;
        }
        self.sketch.apply_into(&div, out);
        out.iter_mut().for_each(|x| *x = *x / self.scale);
    }

    fn apply_transpose(&self, y: &[T], out: &mut [T]) {
        let mut pull = self.scratch.borrow_mut();
        self.sketch.apply_transpose_into(y, &mut pull);
        for ((o, e), &c) in out.iter_mut().zip(self.graph.edges()).zip(&self.cost) {
            *o = (pull[e.tail as usize] - pull[e.head as usize]) / (c * self.scale);
        }
    }
}

/// Column-major dense matrix.
#[derive(Clone, Debug)]
pub struct DenseSystem<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> DenseSystem<T> {
    /// From row-major nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = vec![T::zero(); r * c];
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            for (j, &x) in row.iter().enumerate() {
                data[j * r + i] = x;
            }
        }
        Self { rows: r, cols: c, data }
    }
}

impl<T: Scalar> L1System<T> for DenseSystem<T> {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, g: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        for (j, &x) in g.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(&self.data[j * self.rows..(j + 1) * self.rows]) {
                *o = *o + a * x;
            }
        }
    }

    fn apply_transpose(&self, y: &[T], out: &mut [T]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[j * self.rows..(j + 1) * self.rows], y);
        }
    }
}

/// Outcome of one feasibility call.
#[derive(Clone, Debug)]
pub enum Feasibility<T> {
    /// `t g` with `||g||_1 <= 1` and `||M g - target/t||_1 <= eps'`.
    Solution {
        g: Vec<T>,
        rounds: usize,
    },
    /// Average sign vector proving that no such `g` exists.
    Certificate {
        y: Vec<T>,
        rounds: usize,
    },
    Exhausted {
        rounds: usize,
    },
}

impl<T> Feasibility<T> {
    pub fn rounds(&self) -> usize {
        match self {
            Feasibility::Solution { rounds, .. }
            | Feasibility::Certificate { rounds, .. }
            | Feasibility::Exhausted { rounds } => *rounds,
        }
    }
}

/// `ceil(8 ln(2m) / eps'^2)`.
pub fn round_budget(eps: f64, m: usize) -> usize {
    (8.0 * (2.0 * m.max(1) as f64).ln() / (eps * eps)).ceil() as usize
}

/// True when `y` separates `target / t` from the image of the unit l1 ball.
pub fn certifies<T: Scalar, S: L1System<T>>(sys: &S, target: &[T], t: T, y: &[T]) -> bool {
    let lhs = dot(y, target) / t;
    let mut col = vec![T::zero(); sys.cols()];
    sys.apply_transpose(y, &mut col);
    let bound = col.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    lhs < -bound
}

/// Looks for `g` with `||g||_1 <= 1` and `||M g - target/t||_1 <= eps'` by
/// multiplicative weights over the `2m` signed coordinates, stepping
/// against the sign of the residual each round.
pub fn mwu_feasibility<T: Scalar, S: L1System<T>>(
    sys: &S,
    target: &[T],
    t: T,
    eps: T,
    max_rounds: usize,
) -> Feasibility<T> {
    let m = sys.cols();
    let rows = sys.rows();
    let eta = eps / T::of(2.0);
    let goal: Vec<T> = target.iter().map(|&x| x / t).collect();
    let mut acc = vec![T::zero(); m];
    let mut top = T::zero();
    let mut g = vec![T::zero(); m];
    let mut grad = vec![T::zero(); m];
    let mut mg = vec![T::zero(); rows];
    let mut y = vec![T::zero(); rows];
    let mut ybar = vec![T::zero(); rows];

    for round in 0..max_rounds {
        weights_into(&acc, eta, top, T::one(), &mut g);
        sys.apply(&g, &mut mg);
        let mut res = T::zero();
        for ((yi, &a), &b) in y.iter_mut().zip(&mg).zip(&goal) {
            let r = a - b;
            res = res + r.abs();
            *yi = if r >= T::zero() { T::one() } else { -T::one() };
        }
        if res <= eps {
            debug_assert!(l1_norm(&g) <= T::one() + T::of(1e-9));
            g.iter_mut().for_each(|x| *x = *x * t);
            return Feasibility::Solution { g, rounds: round };
        }
        for (b, &a) in ybar.iter_mut().zip(&y) {
            *b = *b + a;
        }
        sys.apply_transpose(&y, &mut grad);
        let mut most = T::zero();
        for (a, &d) in acc.iter_mut().zip(&grad) {
            *a = *a + d;
            most = most.max(a.abs());
        }
        top = most * eta;
    }
    if max_rounds > 0 {
        let inv = T::one() / T::of_usize(max_rounds);
        ybar.iter_mut().for_each(|x| *x = *x * inv);
        if certifies(sys, target, t, &ybar) {
            return Feasibility::Certificate {
                y: ybar,
                rounds: max_rounds,
            };
        }
    }
    Feasibility::Exhausted { rounds: max_rounds }
}

/// `scale (f+ - f-)` for weights `exp(-+ eta acc)`, normalized over all `2m`
/// coordinates. `top` is `eta max |acc|`, so the largest weight is 1;
/// `exp(-x - top) = exp(-2 top) / exp(x - top)` underflows only when it is
/// negligible next to it.
fn weights_into<T: Scalar>(acc: &[T], eta: T, top: T, scale: T, g: &mut [T]) {
    let floor = (-(top + top)).exp();
    let mut z = T::zero();
    for (gi, &a) in g.iter_mut().zip(acc) {
        let big = (eta * a.abs() - top).exp();
        let small = floor / big;
        z = z + big + small;
        *gi = if a > T::zero() { small - big } else { big - small };
    }
    let k = scale / z;
    g.iter_mut().for_each(|x| *x = *x * k);
}

#[derive(Clone, Debug)]
pub struct ValueSearch<T> {
    pub t: T,
    /// `t g`, in normalized variables.
    pub g: Vec<T>,
    pub rounds: usize,
    pub calls: usize,
    /// Last certificate seen below the accepted `t`.
    pub certificate: Option<Vec<T>>,
}

/// Tries `t = s ||target||_1 (1 + eps')^k` for increasing `k` until a
/// feasibility call succeeds.
pub fn value_search<T: Scalar>(sys: &PreconditionedSystem<'_, T>, target: &[T], eps: T) -> Result<ValueSearch<T>> {
    let norm = l1_norm(target);
    if norm == T::zero() {
        return Ok(ValueSearch {
            t: T::zero(),
            g: vec![T::zero(); sys.cols()],
            rounds: 0,
            calls: 0,
            certificate: None,
        });
    }
    let gamma = sys.sketch().gamma().to_f64_lossy();
    let e = eps.to_f64_lossy();
    let steps = (gamma.ln() / (1.0 + e).ln()).ceil() as usize;
    let budget = round_budget(e, sys.cols());
    let base = sys.scale() * norm;
    let mut rounds = 0;
    let mut certificate = None;
    for k in 0..=steps {
        let t = base * T::of((1.0 + e).powi(k as i32));
        match mwu_feasibility(sys, target, t, eps, budget) {
            Feasibility::Solution { g, rounds: r } => {
                rounds += r;
                debug!("value search: accepted t = {} after {} calls", t, k + 1);
                return Ok(ValueSearch {
                    t,
                    g,
                    rounds,
                    calls: k + 1,
                    certificate,
                });
            }
            Feasibility::Certificate { y, rounds: r } => {
                rounds += r;
                assert!(certifies(sys, target, t, &y));
                certificate = Some(y);
            }
            Feasibility::Exhausted { rounds: r } => rounds += r,
        }
    }
    Err(Error::SolverExhausted { stage: 0 })
}

#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    pub flow: FlowVector<T>,
    pub cost: T,
    pub mwu_rounds: usize,
    pub stages: usize,
    /// `||B (b - A f)||_1` before the router closed the gap.
    pub residual_sketch_norm: T,
    pub certificate: Option<Vec<T>>,
    /// Stages whose residual did not shrink by the expected factor.
    pub slow_stages: usize,
}

/// Min-cost flow for the instance's supplies on `g`.
pub fn solve_flow<T: Scalar>(
    inst: &Instance<T>,
    q: &Quadtree<T>,
    g: &Graph<T>,
    s: &Sketch<T>,
    eps: T,
) -> Result<SolveReport<T>> {
    let b = supply_vector(inst, g);
    solve_supplies(q, g, s, &b, eps)
}

/// [`solve_flow`] for arbitrary zero-sum supplies on the vertices.
pub fn solve_supplies<T: Scalar>(
    q: &Quadtree<T>,
    g: &Graph<T>,
    s: &Sketch<T>,
    b: &[T],
    eps: T,
) -> Result<SolveReport<T>> {
    if !(eps > T::zero() && eps <= T::one()) {
        return Err(Error::Parameter(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    let m = g.edge_count();
    if b.iter().all(|&x| x == T::zero()) {
        return Ok(SolveReport {
            flow: vec![T::zero(); m],
            cost: T::zero(),
            mwu_rounds: 0,
            stages: 0,
            residual_sketch_norm: T::zero(),
            certificate: None,
            slow_stages: 0,
        });
    }
    let sys = PreconditionedSystem::normalize(g, s);
    let gamma = s.gamma();
    let sketch_b = s.norm(b);
    let floor = eps / (gamma * gamma) * sketch_b;
    let max_stages = ((gamma * gamma / eps).to_f64_lossy().log2().ceil() as usize) + 4;

    let mut flow = vec![T::zero(); m];
    let mut residual = b.to_vec();
    let mut residual_norm = sketch_b;
    let mut rounds = 0;
    let mut stages = 0;
    let mut slow = 0;
    let mut certificate = None;
    while stages < max_stages {
        if stages > 0 && residual_norm <= floor {
            break;
        }
        let acc = if stages == 0 { eps } else { T::of(0.5) };
        let target = sys.target(&residual);
        let found = value_search(&sys, &target, acc).map_err(|_| Error::SolverExhausted { stage: stages })?;
        rounds += found.rounds;
        if stages == 0 {
            certificate = found.certificate;
        }
        for (f, x) in flow.iter_mut().zip(sys.to_flow(&found.g)) {
            *f = *f + x;
        }
        let div = apply_incidence(g, &flow);
        for ((r, &bb), &d) in residual.iter_mut().zip(b).zip(&div) {
            *r = bb - d;
        }
        let next = s.norm(&residual);
        if stages > 0 && next > (residual_norm * T::of(0.5)).max(floor) / T::of(0.9) {
            slow += 1;
            debug!("stage {stages}: residual sketch norm {residual_norm} -> {next} did not halve");
        }
        debug!(
            "stage {stages}: t = {}, rounds = {}, residual sketch norm {next}",
            found.t, found.rounds
        );
        residual_norm = next;
        stages += 1;
        // an empty step leaves the residual unchanged, so every later stage
        // would repeat it
        if found.g.iter().all(|&x| x == T::zero()) {
            break;
        }
    }

    // the router's residual must sum to zero exactly up to rounding
    let total: T = residual.iter().copied().sum();
    let n = residual.len();
    residual.iter_mut().for_each(|r| *r = *r - total / T::of_usize(n));
    let fix = s.route_flow(q, g, &residual)?;
    for (f, x) in flow.iter_mut().zip(&fix) {
        *f = *f + *x;
    }
    let cost = flow_cost(g, &flow);
    Ok(SolveReport {
        flow,
        cost,
        mwu_rounds: rounds,
        stages,
        residual_sketch_norm: residual_norm,
        certificate,
        slow_stages: slow,
    })
}
