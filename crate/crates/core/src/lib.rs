#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod autograd;
pub mod corpus;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod isp;
pub mod mi_estimation;
pub mod networks;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
