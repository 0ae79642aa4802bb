//! Kernel mining, pruning, merging and hardware-call injection.

mod inject;
mod kernel;
mod merge;
mod mine;
mod prune;

pub use inject::{inject_hwcalls, inject_hwcalls_traced, Injected, Injection};
pub use kernel::{mine_kernels, mine_kernels_traced, primary_kernel, Kernel};
pub use merge::{merge_kernels, merge_kernels_with_diagnostics, MergedKernel, TermRef};
pub use mine::{mine_patterns, MiningConfig, MiningError, MiningTrace, Pattern};
pub use prune::{prune_graph, prune_graph_mapped};
