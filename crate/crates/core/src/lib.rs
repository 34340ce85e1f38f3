//! Multi-modal pedestrian trajectory forecasting built around a
//! hand-crafted coarse trajectory tree.
//!
//! The tree extrapolates an agent's recent motion into a W-ary set of
//! breakpoint hypotheses; a small learnable stack scores, selects, and
//! refines root-to-leaf paths into fine-grained futures. The raw tree on
//! its own is a training-free multi-hypothesis predictor. Evaluation
//! follows the best-of-K ADE/FDE protocol over ETH-UCY-style text corpora.

pub mod coarse_gt;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod neural;
pub mod presets;
pub mod synthetic;
pub mod tree;

pub use error::{Error, Result};
pub use geometry::Point2;
