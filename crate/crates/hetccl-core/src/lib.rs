//! Deterministic simulator for collective communication on mixed-vendor GPU
//! clusters.
//!
//! The crate models a cluster of nodes, each carrying GPUs from exactly one
//! vendor, and lets callers run point-to-point transfers and collective
//! operations over it with analytic alpha-beta timing and real payload
//! movement. The pieces layer bottom-up:
//!
//! * [`platform`] — vendor identities, per-vendor backend call tables, and
//!   the dispatch point every runtime call routes through.
//! * [`memory`] — device/host buffers, NIC memory-region registration, and
//!   PCIe-timed copies.
//! * [`topology`] — cluster description (nodes, link models, NICs), JSON
//!   config loading, and composed path cost models (rdma / staged /
//!   intranode).
//! * [`transport`] — point-to-point send/recv with RDMA-vs-staged path
//!   selection, virtual clocks, and per-NIC flow serialization.
//! * [`collectives`] — six collective operations executed hierarchically:
//!   vendor-local phases delegate to a per-group backend collective,
//!   cross-vendor phases go through transport.
//! * [`balancer`] — speed-proportional micro-batch assignment and a
//!   training-step simulator with ZeRO-style communication schedules.
//! * [`sweep`] — the bench harness behind the `hetccl-sim` CLI: bandwidth
//!   sweeps and training simulations emitting deterministic CSV.
//!
//! Everything is exactly reproducible: timing comes from closed-form cost
//! models over virtual clocks, reductions use one fixed combine order, and
//! randomized self-checks derive per-cell seeds from a caller-supplied seed.
//! With the default `parallel` feature, embarrassingly parallel work
//! (sweep cells, large elementwise reductions) fans out over rayon without
//! affecting any result bit.

pub mod balancer;
pub mod collectives;
pub mod memory;
pub mod parallel;
pub mod platform;
pub mod sweep;
pub mod topology;
pub mod transport;
