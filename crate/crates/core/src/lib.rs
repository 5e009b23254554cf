//! Discrete-event simulation of MapReduce applications in a cloud data
//! center whose network is driven by an SDN controller.
//!
//! The layers, bottom up:
//! - [`kernel`]: event queue, clock and entity dispatch;
//! - [`topology`]: the physical graph and the three-tier generator;
//! - [`network`]: routing, fair-share bandwidth and the controller entity;
//! - [`bigdata`]: resource manager, node managers, application masters;
//! - [`energy`] and [`reports`]: accounting and CSV output;
//! - [`scenario`]: wiring everything into one run from a config file.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bigdata;
pub mod energy;
pub mod ids;
pub mod kernel;
pub mod msg;
pub mod network;
pub mod reports;
pub mod scenario;
pub mod topology;
pub mod usecase;
