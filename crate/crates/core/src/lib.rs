#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod numerics;
pub mod corpus;
pub mod dog;
pub mod retrieval;
pub mod classifier;
pub mod acts;
pub mod generation;
pub mod metrics;
pub mod pipeline;
