//! Vision-based relative navigation for a rendezvous chaser: target
//! detection and tracking in monochrome frames, camera measurement
//! geometry, a synthetic scene renderer and a closed-loop simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod image;
pub mod measurement;
pub mod morphology;
pub mod rvsim;
pub mod scenegen;
pub mod segmentation;
pub mod tracking;
