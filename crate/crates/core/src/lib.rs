// `!(a < b)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod effective;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod propagation;
pub mod robustness;
pub mod open_system;
pub mod optimizer;
