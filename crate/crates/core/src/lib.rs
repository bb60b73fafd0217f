//! Sliding-window coresets for (k,z)-clustering.
//!
//! The pipeline is: an irrevocable bicriteria assignment ([`meyerson`]),
//! ring/group importance sampling on top of it ([`ring`]), and a
//! merge-and-reduce tree over the reversed stream ([`window`]) whose blocks
//! answer any window length by timestamp filtering. [`solver`] clusters the
//! resulting weighted sets, [`baselines`] and [`harness`] reproduce the
//! comparison experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod baselines;
pub mod error;
pub mod harness;
pub mod io;
pub mod metric;
pub mod meyerson;
pub mod ring;
pub mod solver;
pub mod window;

pub use error::{Error, Result};
pub use metric::{cost, dist, CenterSet, Metric, Point, StreamParams, WeightedPoint};
pub use meyerson::{MeyersonConfig, MultMeyerson};
pub use ring::{ArrivalOrder, FrozenCoreset, OnlineCoreset, RingConfig};
pub use solver::{weighted_kmeans, Solution, SolveConfig};
pub use window::{SlidingWindowConfig, SlidingWindowCoreset};
