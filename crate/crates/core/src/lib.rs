//! Steiner point prediction on Hanan grids with a graph attention network.
//!
//! The crate is organized bottom-up:
//!
//! - [`net`]: nets, Hanan grids, node features and block-diagonal batching.
//! - [`rsmt`]: L1 spanning trees and the exact Steiner oracle used for labels.
//! - [`gat`]: the two-layer attention network with an analytic backward pass.
//! - [`train`]: focal loss, L2 penalty, Adam and the early-stopping loop.
//! - [`predict`]: thresholding, routing and degree-2 refinement.
//! - [`eval`]: confusion accuracy and wirelength suboptimality reporting.
//! - [`data`]: deterministic net generation and oracle labeling.
//! - [`io`]: dataset, checkpoint and report files.

pub mod data;
pub mod error;
pub mod eval;
pub mod gat;
pub mod io;
pub mod net;
pub mod predict;
pub mod rng;
pub mod rsmt;
pub mod train;

pub use error::{Error, Result};
