//! Randomly shifted hierarchical grid with per-cell net points.
//!
//! The root cell `C_0 = [origin, origin + 2*delta)^d` is placed by a uniform
//! random shift. Level `l` cells have side `2^(1-l) * delta`; only cells that
//! contain input points are retained, and subdivision stops at the first level
//! where every retained cell holds a single point. Each retained cell is
//! further cut into `k^d` subcells (`k = 1/eps0`, even), whose centers are the
//! net points.
//!
//! Points are quantized once to a fixed-point offset inside the root cell.
//! Every cell and subcell index is then an integer shift of that offset, so
//! the nesting and alignment properties hold exactly.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::scalar::Scalar;

/// Fixed-point resolution of a root-cell offset.
pub const FRACTION_BITS: u32 = 52;

/// Upper bound on `k^d`, the number of net points per cell.
pub const MAX_NET_POINTS_PER_CELL: usize = 1 << 16;

#[derive(Clone, Debug)]
pub struct GridShift<T> {
    /// Uniform sample from `(0, delta]^d`.
    pub x: Vec<T>,
    /// `x - delta`, the minimum corner of the root cell.
    pub origin: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CellId {
    pub level: usize,
    pub coords: Vec<i64>,
}

/// A net point: subcell `local` (flattened, axis 0 fastest) of retained cell
/// `cell` at `level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NetPointId {
    pub level: usize,
    pub cell: usize,
    pub local: usize,
}

#[derive(Clone, Debug)]
struct Level {
    coords: Vec<i64>,
    index: HashMap<Vec<i64>, usize>,
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    points: Vec<Vec<usize>>,
}

impl Level {
    fn len(&self) -> usize {
        self.parent.len()
    }
}

/// The retained-cell hierarchy, independent of the net-point resolution.
#[derive(Clone, Debug)]
pub struct CellTree<T> {
    dim: usize,
    delta: T,
    shift: GridShift<T>,
    levels: Vec<Level>,
    // per point, per axis: offset in units of 2^-FRACTION_BITS of the root side
    fixed: Vec<u64>,
    // [level][point] -> retained cell index
    point_cell: Vec<Vec<usize>>,
}

fn to_fixed(u: f64) -> Option<u64> {
    if !(0.0..1.0).contains(&u) {
        return None;
    }
    let q = (u * (1u64 << FRACTION_BITS) as f64).floor() as u64;
    Some(q.min((1u64 << FRACTION_BITS) - 1))
}

impl<T: Scalar> CellTree<T> {
    /// Samples the shift from `seed` and subdivides until all points are
    /// separated.
    pub fn build(inst: &Instance<T>, seed: u64) -> Result<Self> {
        let dim = inst.dim();
        let delta = inst.delta();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<T> = (0..dim).map(|_| delta * T::of(1.0 - rng.gen::<f64>())).collect();
        let origin: Vec<T> = x.iter().map(|&xi| xi - delta).collect();
        let shift = GridShift { x, origin };
        let points: Vec<&[T]> = (0..inst.len()).map(|i| inst.point(i)).collect();
        Self::with_shift(&points, dim, delta, shift)
    }

    /// Builds the hierarchy for an explicit shift. Every point must lie in
    /// the root cell.
    pub fn with_shift(points: &[&[T]], dim: usize, delta: T, shift: GridShift<T>) -> Result<Self> {
        let n = points.len();
        let side = (delta + delta).to_f64_lossy();
        let mut fixed = Vec::with_capacity(n * dim);
        for p in points {
            for a in 0..dim {
                let u = (p[a] - shift.origin[a]).to_f64_lossy() / side;
                // points of the instance are inside by construction; the clamp
                // only absorbs rounding at the far face
                let u = if (1.0..1.0 + 1e-12).contains(&u) {
                    1.0 - f64::EPSILON
                } else {
                    u
                };
                fixed.push(to_fixed(u).ok_or(Error::OutsideGrid)?);
            }
        }

        let root = Level {
            coords: vec![0; dim],
            index: HashMap::from([(vec![0; dim], 0)]),
            parent: vec![0],
            children: vec![Vec::new()],
            points: vec![(0..n).collect()],
        };
        let mut levels = vec![root];
        let mut point_cell = vec![vec![0usize; n]];
        while levels.last().unwrap().points.iter().any(|ps| ps.len() > 1) {
            let l = levels.len();
            if l as u32 > FRACTION_BITS {
                return Err(Error::CoincidentPoints { levels: l });
            }
            let prev = levels.last_mut().unwrap();
            let mut next = Level {
                coords: Vec::new(),
                index: HashMap::new(),
                parent: Vec::new(),
                children: Vec::new(),
                points: Vec::new(),
            };
            let mut cells = vec![0usize; n];
            for (pc, ps) in prev.points.iter().enumerate() {
                for &i in ps {
                    let key: Vec<i64> = (0..dim)
                        .map(|a| (fixed[i * dim + a] >> (FRACTION_BITS - l as u32)) as i64)
                        .collect();
                    let c = match next.index.get(&key) {
                        Some(&c) => c,
                        None => {
                            let c = next.parent.len();
                            next.coords.extend_from_slice(&key);
                            next.index.insert(key, c);
                            next.parent.push(pc);
                            next.children.push(Vec::new());
                            next.points.push(Vec::new());
                            prev.children[pc].push(c);
                            c
                        }
                    };
                    next.points[c].push(i);
                    cells[i] = c;
                }
            }
            levels.push(next);
            point_cell.push(cells);
        }
        Ok(Self {
            dim,
            delta,
            shift,
            levels,
            fixed,
            point_cell,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn shift(&self) -> &GridShift<T> {
        &self.shift
    }

    /// `L`, the deepest level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn point_count(&self) -> usize {
        self.point_cell[0].len()
    }

    /// `2^(1-l) * delta`.
    pub fn cell_side(&self, level: usize) -> T {
        (self.delta + self.delta) / T::of(2f64.powi(level as i32))
    }

    pub fn cell_count(&self, level: usize) -> usize {
        self.levels[level].len()
    }

    pub fn cell_coords(&self, level: usize, cell: usize) -> &[i64] {
        &self.levels[level].coords[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn cell_parent(&self, level: usize, cell: usize) -> Option<usize> {
        (level > 0).then(|| self.levels[level].parent[cell])
    }

    pub fn cell_children(&self, level: usize, cell: usize) -> &[usize] {
        &self.levels[level].children[cell]
    }

    /// Input points inside a retained cell.
    pub fn cell_points(&self, level: usize, cell: usize) -> &[usize] {
        &self.levels[level].points[cell]
    }

    pub fn find_cell(&self, level: usize, coords: &[i64]) -> Option<usize> {
        self.levels.get(level)?.index.get(coords).copied()
    }

    /// Retained cell of input point `i` at `level`.
    pub fn point_cell(&self, i: usize, level: usize) -> usize {
        self.point_cell[level][i]
    }

    /// Fixed-point root offsets of input point `i`.
    pub fn point_fixed(&self, i: usize) -> &[u64] {
        &self.fixed[i * self.dim..(i + 1) * self.dim]
    }

    /// Fixed-point root offsets of an arbitrary position.
    pub fn fixed_of(&self, p: &[T]) -> Result<Vec<u64>> {
        let side = (self.delta + self.delta).to_f64_lossy();
        (0..self.dim)
            .map(|a| to_fixed((p[a] - self.shift.origin[a]).to_f64_lossy() / side).ok_or(Error::OutsideGrid))
            .collect()
    }

    /// Cell at `level` containing `p` (half-open per axis), retained or not.
    pub fn cell_of(&self, p: &[T], level: usize) -> Result<CellId> {
        if level as u32 > FRACTION_BITS {
            return Err(Error::Parameter(format!("level {level} beyond fixed-point resolution")));
        }
        let q = self.fixed_of(p)?;
        Ok(CellId {
            level,
            coords: q
                .iter()
                .map(|&v| (v >> (FRACTION_BITS - level as u32)) as i64)
                .collect(),
        })
    }
}

/// Largest `eps0 = 1/(2k)` with `eps0 <= eps / (3 d (L+1))`, returned as the
/// subdivision count `1/eps0`.
pub fn choose_subdivisions(eps: f64, depth: usize, dim: usize) -> u32 {
    let ratio = 3.0 * dim as f64 * (depth as f64 + 1.0) / (2.0 * eps);
    // tolerance keeps e.g. 36/0.6 from rounding up past 60
    let k = (ratio - 1e-9).ceil().max(1.0);
    2 * k as u32
}

/// `eps0` for target accuracy `eps` at depth `L` in dimension `d`; with it,
/// `1 + 3 d eps0 L <= 1 + eps`.
pub fn choose_eps0<T: Scalar>(eps: T, depth: usize, dim: usize) -> T {
    T::one() / T::of(choose_subdivisions(eps.to_f64_lossy(), depth, dim) as f64)
}

/// Vertex of the flow graph: an input point or a net point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexKind {
    Point(usize),
    Net(NetPointId),
}

/// Cell hierarchy plus the net-point layout for a fixed `eps0`.
///
/// Vertex ids are dense: input points first, then net points level by level,
/// cell by cell, subcell by subcell.
#[derive(Clone, Debug)]
pub struct Quadtree<T> {
    cells: CellTree<T>,
    k: u32,
    per_cell: usize,
    net_base: Vec<usize>,
}

impl<T: Scalar> Quadtree<T> {
    /// Builds the shifted hierarchy for `inst` with net-point spacing `eps0`;
    /// `1/eps0` must be an even integer.
    pub fn build(inst: &Instance<T>, eps0: T, seed: u64) -> Result<Self> {
        let inv = (T::one() / eps0).to_f64_lossy();
        let k = inv.round();
        if !(k >= 2.0 && (inv - k).abs() < 1e-6 && (k as u64).is_multiple_of(2)) {
            return Err(Error::Parameter(format!("1/eps0 = {inv} is not an even integer")));
        }
        Self::new(CellTree::build(inst, seed)?, k as u32)
    }

    /// Attaches `k^d` net points to every retained cell of `cells`.
    pub fn new(cells: CellTree<T>, k: u32) -> Result<Self> {
        if k < 2 || !k.is_multiple_of(2) {
            return Err(Error::Parameter(format!("subdivision count {k} must be even and >= 2")));
        }
        let per_cell = (k as usize)
            .checked_pow(cells.dim() as u32)
            .filter(|&c| c <= MAX_NET_POINTS_PER_CELL)
            .ok_or_else(|| Error::Parameter(format!("{k}^{} net points per cell is too many", cells.dim())))?;
        let mut net_base = Vec::with_capacity(cells.depth() + 2);
        let mut next = cells.point_count();
        for l in 0..=cells.depth() {
            net_base.push(next);
            next += cells.cell_count(l) * per_cell;
        }
        net_base.push(next);
        Ok(Self {
            cells,
            k,
            per_cell,
            net_base,
        })
    }

    pub fn cells(&self) -> &CellTree<T> {
        &self.cells
    }

    pub fn dim(&self) -> usize {
        self.cells.dim
    }

    pub fn depth(&self) -> usize {
        self.cells.depth()
    }

    /// `k = 1/eps0`.
    pub fn subdivisions(&self) -> u32 {
        self.k
    }

    pub fn eps0(&self) -> T {
        T::one() / T::of(self.k as f64)
    }

    /// `k^d`.
    pub fn net_points_per_cell(&self) -> usize {
        self.per_cell
    }

    pub fn cell_side(&self, level: usize) -> T {
        self.cells.cell_side(level)
    }

    /// `eps0 * delta_l`.
    pub fn subcell_side(&self, level: usize) -> T {
        self.cells.cell_side(level) / T::of(self.k as f64)
    }

    pub fn cell_of(&self, p: &[T], level: usize) -> Result<CellId> {
        self.cells.cell_of(p, level)
    }

    pub fn vertex_count(&self) -> usize {
        *self.net_base.last().unwrap()
    }

    pub fn point_count(&self) -> usize {
        self.cells.point_count()
    }

    /// Number of net points on `level`.
    pub fn net_count(&self, level: usize) -> usize {
        self.net_base[level + 1] - self.net_base[level]
    }

    /// Vertex id range of the net points on `level`.
    pub fn net_range(&self, level: usize) -> std::ops::Range<usize> {
        self.net_base[level]..self.net_base[level + 1]
    }

    pub fn net_vertex(&self, id: NetPointId) -> usize {
        self.net_base[id.level] + id.cell * self.per_cell + id.local
    }

    pub fn vertex_kind(&self, v: usize) -> VertexKind {
        let n = self.point_count();
        if v < n {
            return VertexKind::Point(v);
        }
        let level = self.net_base.partition_point(|&b| b <= v) - 1;
        let off = v - self.net_base[level];
        VertexKind::Net(NetPointId {
            level,
            cell: off / self.per_cell,
            local: off % self.per_cell,
        })
    }

    /// Level of a net-point vertex, `None` for input points.
    pub fn vertex_level(&self, v: usize) -> Option<usize> {
        match self.vertex_kind(v) {
            VertexKind::Point(_) => None,
            VertexKind::Net(id) => Some(id.level),
        }
    }

    fn local_coords(&self, local: usize) -> impl Iterator<Item = i64> + '_ {
        let k = self.k as usize;
        (0..self.dim()).scan(local, move |rest, _| {
            let j = *rest % k;
            *rest /= k;
            Some(j as i64)
        })
    }

    /// Global subcell coordinates (`cell * k + local` per axis).
    pub fn net_subcell(&self, id: NetPointId) -> Vec<i64> {
        let k = self.k as i64;
        self.cells
            .cell_coords(id.level, id.cell)
            .iter()
            .zip(self.local_coords(id.local))
            .map(|(&c, j)| c * k + j)
            .collect()
    }

    /// Center of the net point's subcell.
    pub fn net_position(&self, id: NetPointId) -> Vec<T> {
        let h = self.subcell_side(id.level);
        let half = T::of(0.5);
        self.net_subcell(id)
            .iter()
            .zip(&self.cells.shift.origin)
            .map(|(&s, &o)| o + (T::of(s as f64) + half) * h)
            .collect()
    }

    pub fn vertex_position(&self, inst: &Instance<T>, v: usize) -> Vec<T> {
        match self.vertex_kind(v) {
            VertexKind::Point(i) => inst.point(i).to_vec(),
            VertexKind::Net(id) => self.net_position(id),
        }
    }

    /// Resolves global subcell coordinates at `level` to a net point, if the
    /// enclosing cell is retained.
    pub fn net_at(&self, level: usize, subcell: &[i64]) -> Option<NetPointId> {
        let k = self.k as i64;
        let cell: Vec<i64> = subcell.iter().map(|&s| s.div_euclid(k)).collect();
        let c = self.cells.find_cell(level, &cell)?;
        let mut local = 0usize;
        for &s in subcell.iter().rev() {
            local = local * k as usize + s.rem_euclid(k) as usize;
        }
        Some(NetPointId { level, cell: c, local })
    }

    fn subcell_from_fixed(&self, q: &[u64], level: usize) -> Vec<i64> {
        let shift = FRACTION_BITS - level as u32;
        q.iter()
            .map(|&v| ((v as u128 * self.k as u128) >> shift) as i64)
            .collect()
    }

    /// `N_l(p)` for an arbitrary position: the net point whose subcell at
    /// `level` contains `p`, or `None` when that cell is not retained.
    pub fn net_point_of(&self, p: &[T], level: usize) -> Result<Option<NetPointId>> {
        if level > self.depth() {
            return Ok(None);
        }
        let q = self.cells.fixed_of(p)?;
        Ok(self.net_at(level, &self.subcell_from_fixed(&q, level)))
    }

    /// `N_l(p)` for input point `i`; always present.
    pub fn point_net(&self, i: usize, level: usize) -> NetPointId {
        let sub = self.subcell_from_fixed(self.cells.point_fixed(i), level);
        let k = self.k as i64;
        let mut local = 0usize;
        for &s in sub.iter().rev() {
            local = local * k as usize + s.rem_euclid(k) as usize;
        }
        NetPointId {
            level,
            cell: self.cells.point_cell(i, level),
            local,
        }
    }

    /// Net point on `level` whose subcell contains vertex `v`, restricted to
    /// retained cells. For a net point on a coarser level than `level`, its
    /// center lies on a corner of the finer grid and belongs to the subcell
    /// starting there.
    pub fn vertex_net(&self, v: usize, level: usize) -> Option<NetPointId> {
        match self.vertex_kind(v) {
            VertexKind::Point(i) => Some(self.point_net(i, level)),
            VertexKind::Net(id) => {
                if level == id.level {
                    return Some(id);
                }
                let sub = self.net_subcell(id);
                let target: Vec<i64> = if level < id.level {
                    let s = (id.level - level) as u32;
                    sub.iter().map(|&x| x >> s).collect()
                } else {
                    let s = (level - id.level) as u32;
                    sub.iter().map(|&x| (x << s) + (1i64 << (s - 1))).collect()
                };
                self.net_at(level, &target)
            }
        }
    }

    /// Parent net point `N_{l-1}(u)` of a level-`l` net point.
    pub fn parent_net(&self, id: NetPointId) -> Option<NetPointId> {
        if id.level == 0 {
            return None;
        }
        let sub: Vec<i64> = self.net_subcell(id).iter().map(|&x| x >> 1).collect();
        let parent = self.net_at(id.level - 1, &sub);
        debug_assert!(parent.is_some(), "ancestor cells are always retained");
        parent
    }
}
