//! Shared test support: random programs, brute-force oracles and a
//! reference query evaluator.
#![allow(dead_code)]

pub mod gen;
pub mod oracle;
pub mod reference;
