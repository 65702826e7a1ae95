// `!(a <= b)` is used on purpose so that NaN fails the comparison
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod good_deal;
pub mod indifference;
mod lp;
pub mod optim;
pub mod oracle;
pub mod report;
pub mod risk;
pub mod space;
pub mod worked;

pub use error::{Error, Result};
