//! Planning and simulation toolkit for a tethered end droid hanging from a
//! hovering carrier drone.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod cable;
pub mod harness;
pub mod optimizer;
pub mod scenario;
pub mod sim;
pub mod trajectory;
pub mod winch;

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;
