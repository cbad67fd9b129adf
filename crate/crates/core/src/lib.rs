//! Design-space exploration of vertical power delivery.
//!
//! The crate models the path from a board-level supply to a high-current die:
//! vertical interconnect levels ([`interconnect`]), compact DC-DC converters
//! ([`converter`]), VR placement around and under the die ([`placement`]),
//! DC current sharing on the horizontal plane ([`pdn_grid`]), and complete
//! architectures built from them ([`architecture`]). [`calibration`] fits the
//! parameters no datasheet provides; [`cli`] drives batch runs from a config
//! file.

// `!(x > 0.0)` is how inputs are validated: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod architecture;
pub mod calibration;
pub mod cli;
pub mod config;
pub mod converter;
pub mod dataset;
pub mod error;
pub mod interconnect;
pub mod pdn_grid;
pub mod placement;
pub mod report;

pub use error::{Error, Result};
