//! Approximate Euclidean transportation maps in nearly linear time.
//!
//! The pipeline embeds the point set into a sparse graph built on a randomly
//! shifted quadtree ([`quadtree`], [`graph`]), solves min-cost flow on it with
//! a multiplicative-weights solver preconditioned by an l1 sketch
//! ([`sketch`], [`solver`]), and rounds the flow to a transportation map
//! without increasing its cost ([`rounding`]). [`oracle`] holds exact solvers
//! for verification on small inputs.
//!
//! Everything is generic over the [`Scalar`] type; the `*64` aliases below
//! fix it to `f64`, which is what the CLI uses.

pub mod error;
pub mod flow;
pub mod graph;
pub mod instance;
pub mod oracle;
pub mod pipeline;
pub mod quadtree;
pub mod rounding;
pub mod scalar;
pub mod sketch;
pub mod solver;

pub use error::{Error, Result};
pub use graph::Graph;
pub use instance::{map_cost, map_feasible, Instance, MapEntry, TransportMap};
pub use quadtree::{choose_eps0, CellTree, Quadtree};
pub use scalar::Scalar;

pub type Instance64 = Instance<f64>;
pub type TransportMap64 = TransportMap<f64>;
pub type Quadtree64 = Quadtree<f64>;
pub type Graph64 = Graph<f64>;
