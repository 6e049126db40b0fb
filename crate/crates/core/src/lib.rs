//! Quantisation-field modelling and single-ion benchmarking toolkit.
// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ac_zeeman;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod hyperfine;
pub mod magnetics;
pub mod units;
