//! Weighted point sets, transportation maps and their cost/feasibility.
//!
//! An [`Instance`] holds distinct points with nonzero integer supplies that
//! sum to zero. Coordinates are translated so the bounding box starts at the
//! origin; `delta` is the longest side of that box.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::scalar::{euclidean, Scalar};

#[derive(Clone, Debug)]
pub struct Instance<T> {
    dim: usize,
    coords: Vec<T>,
    supplies: Vec<i64>,
    delta: T,
    total_supply: u64,
    offset: Vec<T>,
    sources: Vec<usize>,
    sinks: Vec<usize>,
}

impl<T: Scalar> Instance<T> {
    /// Validates and normalizes raw points.
    ///
    /// Points with identical coordinates are merged by summing supplies,
    /// points whose merged supply is zero are dropped, and the result keeps
    /// first-appearance order.
    pub fn new(dim: usize, points: Vec<Vec<T>>, supplies: Vec<i64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be at least 1".into()));
        }
        if points.len() != supplies.len() {
            return Err(Error::Invalid(format!(
                "{} points but {} supplies",
                points.len(),
                supplies.len()
            )));
        }
        let sum: i128 = supplies.iter().map(|&s| s as i128).sum();
        if sum != 0 {
            return Err(Error::SupplyImbalance { sum });
        }

        let mut slot: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut merged_pts: Vec<Vec<T>> = Vec::new();
        let mut merged_sup: Vec<i128> = Vec::new();
        for (p, s) in points.into_iter().zip(supplies) {
            if p.len() != dim {
                return Err(Error::Invalid(format!(
                    "point has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid("non-finite coordinate".into()));
            }
            // +0.0 folds -0.0 into 0.0 so both hash alike
            let key: Vec<u64> = p.iter().map(|&x| (x.to_f64_lossy() + 0.0).to_bits()).collect();
            match slot.get(&key) {
                Some(&i) => merged_sup[i] += s as i128,
                None => {
                    slot.insert(key, merged_pts.len());
                    merged_pts.push(p);
                    merged_sup.push(s as i128);
                }
            }
        }

        let mut kept_pts = Vec::new();
        let mut kept_sup = Vec::new();
        for (p, s) in merged_pts.into_iter().zip(merged_sup) {
            if s != 0 {
                let s = i64::try_from(s).map_err(|_| Error::Invalid("merged supply overflows i64".into()))?;
                kept_pts.push(p);
                kept_sup.push(s);
            }
        }

        let mut lo = vec![T::infinity(); dim];
        let mut hi = vec![T::neg_infinity(); dim];
        for p in &kept_pts {
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if kept_pts.is_empty() {
            lo = vec![T::zero(); dim];
            hi = vec![T::zero(); dim];
        }
        let mut delta = T::zero();
        for a in 0..dim {
            delta = delta.max(hi[a] - lo[a]);
        }
        if delta <= T::zero() {
            // zero or one point: any positive box works
            delta = T::one();
        }

        let mut coords = Vec::with_capacity(kept_pts.len() * dim);
        for p in &kept_pts {
            for a in 0..dim {
                coords.push((p[a] - lo[a]).max(T::zero()).min(delta));
            }
        }

        let total_supply = kept_sup.iter().filter(|&&s| s > 0).map(|&s| s as u64).sum();
        let sources = (0..kept_sup.len()).filter(|&i| kept_sup[i] > 0).collect();
        let sinks = (0..kept_sup.len()).filter(|&i| kept_sup[i] < 0).collect();

        Ok(Self {
            dim,
            coords,
            supplies: kept_sup,
            delta,
            total_supply,
            offset: lo,
            sources,
            sinks,
        })
    }

    /// Parses the whitespace-separated text format: optional `#` comments,
    /// the dimension on the first data line, then one point per line with
    /// `dim` coordinates followed by a signed integer supply.
    pub fn parse(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut points = Vec::new();
        let mut supplies = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some(d) = dim else {
                let d: usize = line.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("expected dimension, found {line:?}"),
                })?;
                if d == 0 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "dimension must be at least 1".into(),
                    });
                }
                dim = Some(d);
                continue;
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    line: lineno,
                    expected: d + 1,
                    found: fields.len(),
                });
            }
            let mut p = Vec::with_capacity(d);
            for f in &fields[..d] {
                let x: f64 = f.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad coordinate {f:?}"),
                })?;
                if !x.is_finite() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("non-finite coordinate {f:?}"),
                    });
                }
                p.push(T::of(x));
            }
            let s: i64 = fields[d].parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad supply {:?}", fields[d]),
            })?;
            points.push(p);
            supplies.push(s);
        }
        let dim = dim.ok_or(Error::Parse {
            line: 0,
            message: "missing dimension line".into(),
        })?;
        Self::new(dim, points, supplies)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.supplies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supplies.is_empty()
    }

    /// Normalized coordinates of point `i`, inside `[0, delta]^dim`.
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn supply(&self, i: usize) -> i64 {
        self.supplies[i]
    }

    pub fn supplies(&self) -> &[i64] {
        &self.supplies
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// Sum of positive supplies.
    pub fn total_supply(&self) -> u64 {
        self.total_supply
    }

    /// Translation that was subtracted from the input coordinates.
    pub fn offset(&self) -> &[T] {
        &self.offset
    }

    /// Point indices with positive supply, in order.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Point indices with negative supply, in order.
    pub fn sinks(&self) -> &[usize] {
        &self.sinks
    }

    /// Amounts at or below this floor are dropped from emitted maps.
    pub fn amount_floor(&self) -> T {
        T::of(1e-9) * T::of(self.total_supply.max(1) as f64)
    }

    pub fn distance(&self, i: usize, j: usize) -> T {
        euclidean(self.point(i), self.point(j))
    }
}

/// One `(source, sink, amount)` triple. `source` indexes
/// [`Instance::sources`], `sink` indexes [`Instance::sinks`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapEntry<T> {
    pub source: usize,
    pub sink: usize,
    pub amount: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransportMap<T> {
    pub entries: Vec<MapEntry<T>>,
}

impl<T: Scalar> TransportMap<T> {
    pub fn new(entries: Vec<MapEntry<T>>) -> Self {
        Self { entries }
    }

    /// Renders one `i j amount` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {}", e.source, e.sink, e.amount);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("expected `source sink amount`"));
            }
            let source = f[0].parse().map_err(|_| bad("bad source index"))?;
            let sink = f[1].parse().map_err(|_| bad("bad sink index"))?;
            let amount: f64 = f[2].parse().map_err(|_| bad("bad amount"))?;
            entries.push(MapEntry {
                source,
                sink,
                amount: T::of(amount),
            });
        }
        Ok(Self { entries })
    }
}

fn check_entry<T: Scalar>(inst: &Instance<T>, e: &MapEntry<T>) -> Result<(usize, usize)> {
    let p = *inst.sources().get(e.source).ok_or(Error::IndexOutOfRange {
        what: "source",
        index: e.source,
        len: inst.sources().len(),
    })?;
    let q = *inst.sinks().get(e.sink).ok_or(Error::IndexOutOfRange {
        what: "sink",
        index: e.sink,
        len: inst.sinks().len(),
    })?;
    Ok((p, q))
}

/// Total Euclidean transport cost of `map`.
pub fn map_cost<T: Scalar>(inst: &Instance<T>, map: &TransportMap<T>) -> Result<T> {
    let mut total = T::zero();
    for e in &map.entries {
        let (p, q) = check_entry(inst, e)?;
        total = total + e.amount * inst.distance(p, q);
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// Outflow of a positive-supply point differs from its supply.
    Source,
    /// Inflow of a negative-supply point differs from its demand.
    Sink,
    /// A map entry with negative amount.
    NegativeAmount,
    /// A map entry whose indices are out of range.
    BadIndex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Source/sink rank, or entry position for entry-level violations.
    pub index: usize,
    pub expected: f64,
    pub actual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Checks that every source ships its supply and every sink receives its
/// demand, each within `tol * max(1, U)`, and that no amount is negative.
pub fn map_feasible<T: Scalar>(inst: &Instance<T>, map: &TransportMap<T>, tol: f64) -> FeasibilityReport {
    let mut out_flow = vec![0.0f64; inst.sources().len()];
    let mut in_flow = vec![0.0f64; inst.sinks().len()];
    let mut violations = Vec::new();
    for (k, e) in map.entries.iter().enumerate() {
        let a = e.amount.to_f64_lossy();
        if a < 0.0 {
            violations.push(Violation {
                kind: ViolationKind::NegativeAmount,
                index: k,
                expected: 0.0,
                actual: a,
            });
        }
        if e.source >= out_flow.len() || e.sink >= in_flow.len() {
            violations.push(Violation {
                kind: ViolationKind::BadIndex,
                index: k,
                expected: 0.0,
                actual: a,
            });
            continue;
        }
        out_flow[e.source] += a;
        in_flow[e.sink] += a;
    }
    let bound = tol * (inst.total_supply().max(1) as f64);
    for (r, &p) in inst.sources().iter().enumerate() {
        let want = inst.supply(p) as f64;
        if (out_flow[r] - want).abs() > bound {
            violations.push(Violation {
                kind: ViolationKind::Source,
                index: r,
                expected: want,
                actual: out_flow[r],
            });
        }
    }
    for (r, &q) in inst.sinks().iter().enumerate() {
        let want = -(inst.supply(q) as f64);
        if (in_flow[r] - want).abs() > bound {
            violations.push(Violation {
                kind: ViolationKind::Sink,
                index: r,
                expected: want,
                actual: in_flow[r],
            });
        }
    }
    FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
    }
}
