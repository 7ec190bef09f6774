//! Self-supervised registration of planar LiDAR scans.
//!
//! A localization network refines per-frame poses while an occupancy network
//! learns the map; both are trained jointly from the scans alone. The crate
//! also carries the simulator used to produce datasets, an ICP baseline,
//! scene-topology batching and trajectory evaluation.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity,
    clippy::needless_range_loop
)]

pub mod engine;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod nets;
pub mod register;
pub mod rng;
pub mod sim2d;
pub mod spatial;
pub mod topology;

pub use error::{Error, Result};
