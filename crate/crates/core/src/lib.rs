#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbox;
pub mod calibration;
pub mod detector;
pub mod fcw;
pub mod format;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod planner;
