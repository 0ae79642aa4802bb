//! Mining recurring dataflow kernels from compiled programs and stitching
//! them into pipelined overlay netlists.

pub mod bench;
pub mod graph;
pub mod hwlib;
pub mod ir;
pub mod miner;
pub mod op;
pub mod sim;
pub mod stitch;
