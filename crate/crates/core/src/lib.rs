#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod blowdown;
pub mod cli;
pub mod curvature;
pub mod dynamics;
pub mod error;
mod far;
pub mod kernel;
pub mod perimeter;
pub mod field;
pub mod quad;
pub mod voxel;
