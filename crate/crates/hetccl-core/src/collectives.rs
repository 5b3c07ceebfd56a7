//! Collective operations over a communicator, executed hierarchically:
//! vendor-local phases delegate to a per-group backend collective (the
//! vendor library analog), and cross-vendor phases move shards through
//! transport point-to-point.
//!
//! # Execution model
//!
//! Ranks are grouped by node; every node is single-vendor, so groups are
//! single-platform by construction. A collective whose communicator spans
//! one group is delegated wholesale: exactly one backend invocation, no
//! point-to-point traffic. Multi-group collectives run unoverlapped phases:
//!
//! * `all_reduce` — per-group backend reduce-scatter, then a cross-group
//!   ring that circulates every group's partial for every refined segment
//!   (K−1 steps over K groups), then per-group backend all-gather.
//! * `all_gather` — per-group backend all-gather, a leader ring circulating
//!   group blocks, then a per-group backend broadcast of the remainder.
//! * `reduce_scatter` — per-group backend reduce to the group leader, a
//!   leader ring circulating full partials, then an intranode scatter leg.
//! * `reduce` / `broadcast` — per-group backend phase plus direct
//!   leader↔root transfers.
//! * `all_to_all` — per-group backend all-to-all plus direct pairwise
//!   cross-group block transfers.
//!
//! # Determinism
//!
//! Data results are computed in one fixed combine order — global rank
//! ascending — no matter how the schedule partitions the work, so a
//! hierarchical run, a flat run, and a brute-force oracle agree bitwise
//! even for floating-point sums. Timing comes from ring formulas for local
//! phases and the transport clock model for cross-group transfers, with
//! transfers issued in one canonical order; [`collective_time`] replays the
//! same plan arithmetic without touching payloads.

use std::ops::Range;

use thiserror::Error;

use crate::memory;
use crate::platform::{CallArgs, DType, KernelName, Platform, PlatformRegistry};
use crate::topology::{ClusterTopology, LinkModel, PathKind};
use crate::transport::{Endpoint, Network, TransportError};

// ---------------------------------------------------------------------------
// Communicator
// ---------------------------------------------------------------------------

/// One vendor group: the ranks of a communicator living on a single node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub node: usize,
    pub platform: Platform,
    /// Global ranks in ascending order; the first is the group leader.
    pub ranks: Vec<usize>,
}

impl Group {
    pub fn leader(&self) -> usize {
        self.ranks[0]
    }

    pub fn size(&self) -> usize {
        self.ranks.len()
    }
}

/// An ordered set of ranks with a globally agreed order, partitioned into
/// single-vendor node groups.
#[derive(Debug, Clone)]
pub struct Communicator {
    endpoints: Vec<Endpoint>,
    groups: Vec<Group>,
    group_of: Vec<usize>,
}

impl Communicator {
    /// Build a communicator from `(node, device)` placements; placement
    /// order defines the rank order. Placements must name existing devices
    /// and may not repeat.
    pub fn new(topology: &ClusterTopology, placements: &[(usize, u32)]) -> Communicator {
        assert!(!placements.is_empty(), "a communicator needs at least one rank");
        let mut seen = std::collections::HashSet::new();
        let mut endpoints = Vec::with_capacity(placements.len());
        for (rank, &(node, device)) in placements.iter().enumerate() {
            assert!(node < topology.node_count(), "placement names an existing node");
            assert!(device < topology.node(node).device_count, "placement names an existing device");
            assert!(seen.insert((node, device)), "each device hosts at most one rank");
            endpoints.push(Endpoint::new(rank, node, device, topology.node(node).platform));
        }
        let mut groups: Vec<Group> = Vec::new();
        let mut group_of = vec![0usize; endpoints.len()];
        for ep in &endpoints {
            let gi = match groups.iter().position(|g| g.node == ep.node()) {
                Some(gi) => {
                    groups[gi].ranks.push(ep.rank());
                    gi
                }
                None => {
                    groups.push(Group {
                        node: ep.node(),
                        platform: ep.platform(),
                        ranks: vec![ep.rank()],
                    });
                    groups.len() - 1
                }
            };
            group_of[ep.rank()] = gi;
        }
        for g in &mut groups {
            g.ranks.sort_unstable();
        }
        Communicator { endpoints, groups, group_of }
    }

    /// Convenience: the first `count` devices of each listed node, in node
    /// order.
    pub fn spanning(topology: &ClusterTopology, nodes_devices: &[(usize, u32)]) -> Communicator {
        let mut placements = Vec::new();
        for &(node, count) in nodes_devices {
            for d in 0..count {
                placements.push((node, d));
            }
        }
        Communicator::new(topology, &placements)
    }

    pub fn world_size(&self) -> usize {
        self.endpoints.len()
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Index into [`Communicator::groups`] for a rank.
    pub fn group_of(&self, rank: usize) -> usize {
        self.group_of[rank]
    }

    /// Per-rank device speeds (tokens/second) from the topology.
    pub fn speeds(&self, topology: &ClusterTopology) -> Vec<f64> {
        self.endpoints.iter().map(|ep| topology.node(ep.node()).device_speed).collect()
    }

    fn platform_of(&self, rank: usize) -> Platform {
        self.endpoints[rank].platform()
    }
}

// ---------------------------------------------------------------------------
// Specs and reports
// ---------------------------------------------------------------------------

/// The six supported collective operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollectiveOp {
    AllReduce,
    AllGather,
    ReduceScatter,
    Reduce,
    Broadcast,
    AllToAll,
}

impl CollectiveOp {
    pub const ALL: [CollectiveOp; 6] = [
        CollectiveOp::AllReduce,
        CollectiveOp::AllGather,
        CollectiveOp::ReduceScatter,
        CollectiveOp::Reduce,
        CollectiveOp::Broadcast,
        CollectiveOp::AllToAll,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CollectiveOp::AllReduce => "all_reduce",
            CollectiveOp::AllGather => "all_gather",
            CollectiveOp::ReduceScatter => "reduce_scatter",
            CollectiveOp::Reduce => "reduce",
            CollectiveOp::Broadcast => "broadcast",
            CollectiveOp::AllToAll => "all_to_all",
        }
    }

    pub fn parse(name: &str) -> Option<CollectiveOp> {
        CollectiveOp::ALL.iter().copied().find(|op| op.name() == name)
    }

    /// Whether the op combines elements (and therefore needs a combiner).
    pub fn reduces(&self) -> bool {
        matches!(self, CollectiveOp::AllReduce | CollectiveOp::ReduceScatter | CollectiveOp::Reduce)
    }

    /// Whether the op is rooted (and therefore needs a root rank).
    pub fn rooted(&self) -> bool {
        matches!(self, CollectiveOp::Reduce | CollectiveOp::Broadcast)
    }
}

impl std::fmt::Display for CollectiveOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully specified collective. Constructors make invalid combinations
/// unrepresentable: combiners exist exactly on reducing ops, roots exactly
/// on rooted ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectiveSpec {
    op: CollectiveOp,
    dtype: DType,
    combiner: Option<KernelName>,
    root: Option<usize>,
}

impl CollectiveSpec {
    pub fn all_reduce(dtype: DType, combiner: KernelName) -> CollectiveSpec {
        CollectiveSpec { op: CollectiveOp::AllReduce, dtype, combiner: Some(combiner), root: None }
    }

    pub fn all_gather(dtype: DType) -> CollectiveSpec {
        CollectiveSpec { op: CollectiveOp::AllGather, dtype, combiner: None, root: None }
    }

    pub fn reduce_scatter(dtype: DType, combiner: KernelName) -> CollectiveSpec {
        CollectiveSpec {
            op: CollectiveOp::ReduceScatter,
            dtype,
            combiner: Some(combiner),
            root: None,
        }
    }

    pub fn reduce(dtype: DType, combiner: KernelName, root: usize) -> CollectiveSpec {
        CollectiveSpec { op: CollectiveOp::Reduce, dtype, combiner: Some(combiner), root: Some(root) }
    }

    pub fn broadcast(dtype: DType, root: usize) -> CollectiveSpec {
        CollectiveSpec { op: CollectiveOp::Broadcast, dtype, combiner: None, root: Some(root) }
    }

    pub fn all_to_all(dtype: DType) -> CollectiveSpec {
        CollectiveSpec { op: CollectiveOp::AllToAll, dtype, combiner: None, root: None }
    }

    pub fn op(&self) -> CollectiveOp {
        self.op
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn combiner(&self) -> Option<KernelName> {
        self.combiner
    }

    pub fn root(&self) -> Option<usize> {
        self.root
    }
}

/// One backend (vendor-library) invocation inside a collective.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendInvocation {
    pub node: usize,
    pub platform: Platform,
    pub op: CollectiveOp,
    pub ranks: Vec<usize>,
    pub duration: f64,
}

/// One point-to-point transfer inside a collective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferRecord {
    pub src_rank: usize,
    pub dst_rank: usize,
    pub bytes: usize,
    pub path: PathKind,
}

/// Outcome of one collective: timing plus the execution structure.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveReport {
    pub op: CollectiveOp,
    /// Max over ranks of finish clock minus the synchronized start.
    pub completion_time: f64,
    /// Bus bandwidth per the vendor benchmark convention; `None` when the
    /// run is degenerate (zero duration, e.g. world size 1).
    pub bus_bandwidth: Option<f64>,
    pub backend_invocations: Vec<BackendInvocation>,
    pub transfers: Vec<TransferRecord>,
}

/// Errors from collective validation and execution.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CollectiveError {
    #[error("payload shape mismatch: {detail}")]
    LengthMismatch { detail: String },
    #[error("root rank {root} is outside the communicator (world size {world_size})")]
    InvalidRoot { root: usize, world_size: usize },
    #[error("backend group spans platforms {platforms:?}; vendor groups are single-platform")]
    MixedGroup { platforms: Vec<Platform> },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

fn length_mismatch(detail: impl Into<String>) -> CollectiveError {
    CollectiveError::LengthMismatch { detail: detail.into() }
}

// ---------------------------------------------------------------------------
// Ring timing
// ---------------------------------------------------------------------------

/// Analytic duration of one ring-algorithm collective over `n_ranks` ranks
/// joined by `link`, moving `size_bytes` of payload.
///
/// All formulas pass `n−1` chunks of `size/n` bytes per step: `all_reduce`
/// takes two passes (reduce-scatter then all-gather), the others one.
/// Rooted ops use the same pipelined-chunk pass with chunk size `size/n`.
pub fn ring_time(n_ranks: usize, size_bytes: usize, link: &LinkModel, op: CollectiveOp) -> f64 {
    if n_ranks <= 1 {
        return 0.0;
    }
    let n = n_ranks as f64;
    let chunk = size_bytes as f64 / n;
    let step = link.alpha + chunk / link.beta;
    let passes = if op == CollectiveOp::AllReduce { 2.0 } else { 1.0 };
    passes * (n - 1.0) * step
}

// ---------------------------------------------------------------------------
// Canonical data plane
// ---------------------------------------------------------------------------

fn launch_combine(
    registry: &PlatformRegistry,
    platform: Platform,
    kernel: KernelName,
    dtype: DType,
    acc: &mut [u8],
    operand: &[u8],
) {
    registry
        .dispatch(platform, CallArgs::LaunchKernel { kernel, dtype, acc, operand })
        .expect("combiner platform is registered");
}

/// Left fold of `ranks`' payload slices in ascending rank order, each
/// combine dispatched through the contributing rank's platform kernels.
fn fold_ranks(
    registry: &PlatformRegistry,
    comm: &Communicator,
    kernel: KernelName,
    dtype: DType,
    ranks: &[usize],
    slices: &[&[u8]],
) -> Vec<u8> {
    debug_assert!(ranks.windows(2).all(|w| w[0] < w[1]), "fold order is rank ascending");
    let mut acc = slices[0].to_vec();
    for (idx, slice) in slices.iter().enumerate().skip(1) {
        launch_combine(registry, comm.platform_of(ranks[idx]), kernel, dtype, &mut acc, slice);
    }
    acc
}

// ---------------------------------------------------------------------------
// Phase planning
// ---------------------------------------------------------------------------

/// What a planned transfer carries; every payload is derivable from the
/// original inputs, keeping the data plane canonical.
#[derive(Debug, Clone, PartialEq, Eq)]
enum TransferPayload {
    /// One group's partial for an element segment (hierarchical all_reduce).
    GroupPartialSegment { origin_group: usize, seg: Range<usize> },
    /// One group's full-length partial (reduce_scatter leader ring, reduce).
    GroupPartial { origin_group: usize },
    /// One group's gathered block (all_gather leader ring).
    GroupBlock { origin_group: usize },
    /// The root's payload (broadcast fan-out).
    RootPayload,
    /// One rank's world-partition shard of the combined vector
    /// (reduce_scatter scatter leg).
    WorldShard { shard_rank: usize },
    /// One all_to_all block: `src`'s block addressed to `dst`.
    Block { src: usize, dst: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct PlannedLocal {
    group: usize,
    op: CollectiveOp,
    /// Size handed to the ring formula (see [`ring_time`] conventions).
    ring_bytes: usize,
    /// Local root index within the group, for rooted backend ops.
    local_root: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct PlannedTransfer {
    src_rank: usize,
    dst_rank: usize,
    bytes: usize,
    payload: TransferPayload,
}

#[derive(Debug, Clone, PartialEq)]
enum PlanPhase {
    /// Backend invocations running logically in parallel across groups.
    Local(Vec<PlannedLocal>),
    /// Point-to-point transfers issued in canonical program order.
    Cross(Vec<PlannedTransfer>),
}

#[derive(Debug, Clone, PartialEq)]
struct Plan {
    phases: Vec<PlanPhase>,
}

/// Floor partition of `elements` into `parts` contiguous ranges.
fn chunk_ranges(elements: usize, parts: usize) -> Vec<Range<usize>> {
    (0..parts).map(|j| (j * elements / parts)..((j + 1) * elements / parts)).collect()
}

/// Union of all groups' partition boundaries: the finest segmentation any
/// group's reduce-scatter produced.
fn refined_segments(elements: usize, comm: &Communicator) -> Vec<Range<usize>> {
    let mut bounds: Vec<usize> = vec![0, elements];
    for g in comm.groups() {
        for j in 1..g.size() {
            bounds.push(j * elements / g.size());
        }
    }
    bounds.sort_unstable();
    bounds.dedup();
    bounds.windows(2).map(|w| w[0]..w[1]).filter(|r| !r.is_empty()).collect()
}

/// The rank inside `group` whose phase-1 chunk contains `seg`.
fn segment_owner(group: &Group, chunks: &[Range<usize>], seg: &Range<usize>) -> usize {
    let j = chunks
        .iter()
        .position(|c| c.start <= seg.start && seg.end <= c.end)
        .expect("refined segments never straddle a chunk boundary");
    group.ranks[j]
}

fn plan_collective(
    comm: &Communicator,
    spec: &CollectiveSpec,
    elements: usize,
    width: usize,
) -> Result<Plan, CollectiveError> {
    let world = comm.world_size();
    let groups = comm.groups();
    let k = groups.len();
    if elements == 0 {
        return Err(length_mismatch("payloads must hold at least one element"));
    }
    if let Some(root) = spec.root() {
        if root >= world {
            return Err(CollectiveError::InvalidRoot { root, world_size: world });
        }
    }
    if matches!(spec.op(), CollectiveOp::ReduceScatter | CollectiveOp::AllToAll)
        && !elements.is_multiple_of(world)
    {
        return Err(length_mismatch(format!(
            "{} needs an element count divisible by the world size ({elements} % {world} != 0)",
            spec.op()
        )));
    }

    // A single vendor group is delegated wholesale.
    if k == 1 {
        return Ok(Plan {
            phases: vec![PlanPhase::Local(vec![PlannedLocal {
                group: 0,
                op: spec.op(),
                ring_bytes: ring_bytes_for(spec.op(), elements, width, world, world),
                local_root: spec.root().unwrap_or(0),
            }])],
        });
    }

    let payload_bytes = elements * width;
    let mut phases = Vec::new();
    match spec.op() {
        CollectiveOp::AllReduce => {
            phases.push(PlanPhase::Local(
                (0..k)
                    .map(|g| PlannedLocal {
                        group: g,
                        op: CollectiveOp::ReduceScatter,
                        ring_bytes: payload_bytes,
                        local_root: 0,
                    })
                    .collect(),
            ));
            // Ring over groups: K−1 steps; in step t the partial that
            // originated in group q moves from group (q+t−1) to (q+t),
            // segment by segment between the owning ranks.
            let segments = refined_segments(elements, comm);
            let chunks: Vec<Vec<Range<usize>>> =
                groups.iter().map(|g| chunk_ranges(elements, g.size())).collect();
            let mut transfers = Vec::new();
            for t in 1..k {
                for seg in &segments {
                    for q in 0..k {
                        let from = (q + t - 1) % k;
                        let to = (q + t) % k;
                        transfers.push(PlannedTransfer {
                            src_rank: segment_owner(&groups[from], &chunks[from], seg),
                            dst_rank: segment_owner(&groups[to], &chunks[to], seg),
                            bytes: seg.len() * width,
                            payload: TransferPayload::GroupPartialSegment {
                                origin_group: q,
                                seg: seg.clone(),
                            },
                        });
                    }
                }
            }
            phases.push(PlanPhase::Cross(transfers));
            phases.push(PlanPhase::Local(
                (0..k)
                    .map(|g| PlannedLocal {
                        group: g,
                        op: CollectiveOp::AllGather,
                        ring_bytes: payload_bytes,
                        local_root: 0,
                    })
                    .collect(),
            ));
        }
        CollectiveOp::AllGather => {
            let shard = payload_bytes;
            phases.push(PlanPhase::Local(
                (0..k)
                    .map(|g| PlannedLocal {
                        group: g,
                        op: CollectiveOp::AllGather,
                        ring_bytes: groups[g].size() * shard,
                        local_root: 0,
                    })
                    .collect(),
            ));
            let mut transfers = Vec::new();
            for t in 1..k {
                for q in 0..k {
                    let from = (q + t - 1) % k;
                    let to = (q + t) % k;
                    transfers.push(PlannedTransfer {
                        src_rank: groups[from].leader(),
                        dst_rank: groups[to].leader(),
                        bytes: groups[q].size() * shard,
                        payload: TransferPayload::GroupBlock { origin_group: q },
                    });
                }
            }
            phases.push(PlanPhase::Cross(transfers));
            phases.push(PlanPhase::Local(
                (0..k)
                    .map(|g| PlannedLocal {
                        group: g,
                        op: CollectiveOp::Broadcast,
                        ring_bytes: (world - groups[g].size()) * shard,
                        local_root: 0,
                    })
                    .collect(),
            ));
        }
        CollectiveOp::ReduceScatter => {
            phases.push(PlanPhase::Local(
                (0..k)
                    .map(|g| PlannedLocal {
                        group: g,
                        op: CollectiveOp::Reduce,
                        ring_bytes: payload_bytes,
                        local_root: 0,
                    })
                    .collect(),
            ));
            let mut transfers = Vec::new();
            for t in 1..k {
                for q in 0..k {
                    let from = (q + t - 1) % k;
                    let to = (q + t) % k;
                    transfers.push(PlannedTransfer {
                        src_rank: groups[from].leader(),
                        dst_rank: groups[to].leader(),
                        bytes: payload_bytes,
                        payload: TransferPayload::GroupPartial { origin_group: q },
                    });
                }
            }
            phases.push(PlanPhase::Cross(transfers));
            // Scatter leg: each leader hands members their world shard.
            let shard_bytes = payload_bytes / world;
            let mut scatter = Vec::new();
            for g in groups {
                for &member in &g.ranks {
                    if member != g.leader() {
                        scatter.push(PlannedTransfer {
                            src_rank: g.leader(),
                            dst_rank: member,
                            bytes: shard_bytes,
                            payload: TransferPayload::WorldShard { shard_rank: member },
                        });
                    }
                }
            }
            phases.push(PlanPhase::Cross(scatter));
        }
        CollectiveOp::Reduce => {
            let root = spec.root().expect("reduce is rooted");
            let root_group = comm.group_of(root);
            phases.push(PlanPhase::Local(
                (0..k)
                    .map(|g| PlannedLocal {
                        group: g,
                        op: CollectiveOp::Reduce,
                        ring_bytes: payload_bytes,
                        local_root: if g == root_group {
                            groups[g].ranks.iter().position(|&r| r == root).unwrap()
                        } else {
                            0
                        },
                    })
                    .collect(),
            ));
            let mut transfers = Vec::new();
            for (g, group) in groups.iter().enumerate() {
                if g != root_group {
                    transfers.push(PlannedTransfer {
                        src_rank: group.leader(),
                        dst_rank: root,
                        bytes: payload_bytes,
                        payload: TransferPayload::GroupPartial { origin_group: g },
                    });
                }
            }
            phases.push(PlanPhase::Cross(transfers));
        }
        CollectiveOp::Broadcast => {
            let root = spec.root().expect("broadcast is rooted");
            let root_group = comm.group_of(root);
            let mut transfers = Vec::new();
            for (g, group) in groups.iter().enumerate() {
                if g != root_group {
                    transfers.push(PlannedTransfer {
                        src_rank: root,
                        dst_rank: group.leader(),
                        bytes: payload_bytes,
                        payload: TransferPayload::RootPayload,
                    });
                }
            }
            phases.push(PlanPhase::Cross(transfers));
            phases.push(PlanPhase::Local(
                (0..k)
                    .map(|g| PlannedLocal {
                        group: g,
                        op: CollectiveOp::Broadcast,
                        ring_bytes: payload_bytes,
                        local_root: if g == root_group {
                            groups[g].ranks.iter().position(|&r| r == root).unwrap()
                        } else {
                            0
                        },
                    })
                    .collect(),
            ));
        }
        CollectiveOp::AllToAll => {
            let block = payload_bytes / world;
            phases.push(PlanPhase::Local(
                (0..k)
                    .map(|g| PlannedLocal {
                        group: g,
                        op: CollectiveOp::AllToAll,
                        ring_bytes: groups[g].size() * block,
                        local_root: 0,
                    })
                    .collect(),
            ));
            let mut transfers = Vec::new();
            for src in 0..world {
                for dst in 0..world {
                    if comm.group_of(src) != comm.group_of(dst) {
                        transfers.push(PlannedTransfer {
                            src_rank: src,
                            dst_rank: dst,
                            bytes: block,
                            payload: TransferPayload::Block { src, dst },
                        });
                    }
                }
            }
            phases.push(PlanPhase::Cross(transfers));
        }
    }
    Ok(Plan { phases })
}

/// Ring-formula size for a wholesale (single-group) delegation.
fn ring_bytes_for(
    op: CollectiveOp,
    elements: usize,
    width: usize,
    group_size: usize,
    world: usize,
) -> usize {
    debug_assert_eq!(group_size, world, "wholesale delegation spans the world");
    match op {
        // all_gather rings carry the total gathered payload.
        CollectiveOp::AllGather => elements * width * group_size,
        _ => elements * width,
    }
}

// ---------------------------------------------------------------------------
// Backend collective (vendor-library analog)
// ---------------------------------------------------------------------------

/// Run one vendor-local collective over a single-platform set of ranks.
///
/// Data semantics are exact (combines run through the platform's kernels in
/// ascending member order); the duration is the ring formula over `link`.
/// `local_root` indexes into `inputs` for rooted ops.
pub fn backend_collective(
    registry: &PlatformRegistry,
    link: &LinkModel,
    platforms: &[Platform],
    spec: &CollectiveSpec,
    inputs: &[Vec<u8>],
    local_root: usize,
) -> Result<(Vec<Vec<u8>>, f64), CollectiveError> {
    assert_eq!(platforms.len(), inputs.len(), "one platform tag per member");
    let mut distinct: Vec<Platform> = platforms.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() > 1 {
        return Err(CollectiveError::MixedGroup { platforms: distinct });
    }
    let platform = distinct[0];
    let m = inputs.len();
    let width = spec.dtype().width();
    if inputs.iter().any(|p| p.len() % width != 0) {
        return Err(length_mismatch(format!(
            "payloads must hold whole {} elements",
            spec.dtype().name()
        )));
    }
    let bytes = inputs[0].len();
    // all_gather accepts ragged shards (concatenation and total-size ring
    // timing stay well-defined); the other ops need equal counts.
    if spec.op() == CollectiveOp::AllGather {
        if inputs.iter().map(|p| p.len()).sum::<usize>() == 0 {
            return Err(length_mismatch("gathered payloads must hold at least one element"));
        }
    } else {
        if inputs.iter().any(|p| p.len() != bytes) {
            return Err(length_mismatch("group members supplied unequal payload lengths"));
        }
        if bytes == 0 {
            return Err(length_mismatch("payloads must hold at least one element"));
        }
        if spec.op() == CollectiveOp::AllToAll && !(bytes / width).is_multiple_of(m) {
            return Err(length_mismatch(format!(
                "all_to_all needs an element count divisible by the group size ({} % {m} != 0)",
                bytes / width
            )));
        }
    }
    let elements = bytes / width;
    assert!(local_root < m, "local root indexes a group member");

    let fold = |slices: &[&[u8]]| -> Vec<u8> {
        let kernel = spec.combiner().expect("reducing op carries a combiner");
        let mut acc = slices[0].to_vec();
        for slice in &slices[1..] {
            launch_combine(registry, platform, kernel, spec.dtype(), &mut acc, slice);
        }
        acc
    };
    let slices: Vec<&[u8]> = inputs.iter().map(|v| v.as_slice()).collect();

    let outputs: Vec<Vec<u8>> = match spec.op() {
        CollectiveOp::AllReduce => {
            let combined = fold(&slices);
            vec![combined; m]
        }
        CollectiveOp::AllGather => {
            let concat: Vec<u8> = slices.concat();
            vec![concat; m]
        }
        CollectiveOp::ReduceScatter => {
            let combined = fold(&slices);
            chunk_ranges(elements, m)
                .into_iter()
                .map(|r| combined[r.start * width..r.end * width].to_vec())
                .collect()
        }
        CollectiveOp::Reduce => {
            let combined = fold(&slices);
            (0..m).map(|j| if j == local_root { combined.clone() } else { Vec::new() }).collect()
        }
        CollectiveOp::Broadcast => {
            vec![inputs[local_root].clone(); m]
        }
        CollectiveOp::AllToAll => {
            let block = bytes / m;
            (0..m)
                .map(|i| {
                    let mut out = Vec::with_capacity(bytes);
                    for input in inputs {
                        out.extend_from_slice(&input[i * block..(i + 1) * block]);
                    }
                    out
                })
                .collect()
        }
    };

    let ring_bytes = match spec.op() {
        CollectiveOp::AllGather => inputs.iter().map(|p| p.len()).sum(),
        _ => bytes,
    };
    Ok((outputs, ring_time(m, ring_bytes, link, spec.op())))
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

fn validate_inputs(
    comm: &Communicator,
    spec: &CollectiveSpec,
    inputs: &[Vec<u8>],
) -> Result<usize, CollectiveError> {
    let world = comm.world_size();
    if inputs.len() != world {
        return Err(length_mismatch(format!(
            "got {} payloads for a world of {world} ranks",
            inputs.len()
        )));
    }
    let bytes = inputs[0].len();
    if inputs.iter().any(|p| p.len() != bytes) {
        return Err(length_mismatch("ranks supplied unequal payload lengths"));
    }
    let width = spec.dtype().width();
    if bytes == 0 || !bytes.is_multiple_of(width) {
        return Err(length_mismatch(format!(
            "payload of {bytes} bytes is not a positive multiple of the {} element width",
            spec.dtype().name()
        )));
    }
    Ok(bytes / width)
}

/// Canonical result of a collective: the brute-force semantics with the
/// fixed global-rank-ascending combine order, dispatched through each
/// contributing rank's platform kernels.
fn canonical_outputs(
    registry: &PlatformRegistry,
    comm: &Communicator,
    spec: &CollectiveSpec,
    inputs: &[Vec<u8>],
    elements: usize,
) -> Vec<Vec<u8>> {
    let world = comm.world_size();
    let width = spec.dtype().width();
    let all_ranks: Vec<usize> = (0..world).collect();
    let slices: Vec<&[u8]> = inputs.iter().map(|v| v.as_slice()).collect();
    match spec.op() {
        CollectiveOp::AllReduce => {
            let combined = fold_ranks(
                registry,
                comm,
                spec.combiner().unwrap(),
                spec.dtype(),
                &all_ranks,
                &slices,
            );
            vec![combined; world]
        }
        CollectiveOp::AllGather => {
            let concat: Vec<u8> = slices.concat();
            vec![concat; world]
        }
        CollectiveOp::ReduceScatter => {
            let combined = fold_ranks(
                registry,
                comm,
                spec.combiner().unwrap(),
                spec.dtype(),
                &all_ranks,
                &slices,
            );
            let shard = elements / world;
            (0..world)
                .map(|i| combined[i * shard * width..(i + 1) * shard * width].to_vec())
                .collect()
        }
        CollectiveOp::Reduce => {
            let root = spec.root().unwrap();
            let combined = fold_ranks(
                registry,
                comm,
                spec.combiner().unwrap(),
                spec.dtype(),
                &all_ranks,
                &slices,
            );
            (0..world).map(|i| if i == root { combined.clone() } else { Vec::new() }).collect()
        }
        CollectiveOp::Broadcast => {
            vec![inputs[spec.root().unwrap()].clone(); world]
        }
        CollectiveOp::AllToAll => {
            let block = elements / world * width;
            (0..world)
                .map(|i| {
                    let mut out = Vec::with_capacity(elements * width);
                    for input in inputs {
                        out.extend_from_slice(&input[i * block..(i + 1) * block]);
                    }
                    out
                })
                .collect()
        }
    }
}

/// Materialize the bytes of one planned transfer from the original inputs.
fn transfer_bytes(
    registry: &PlatformRegistry,
    comm: &Communicator,
    spec: &CollectiveSpec,
    inputs: &[Vec<u8>],
    elements: usize,
    payload: &TransferPayload,
) -> Vec<u8> {
    let width = spec.dtype().width();
    let group_fold = |g: usize, range: Range<usize>| -> Vec<u8> {
        let ranks = &comm.groups()[g].ranks;
        let slices: Vec<&[u8]> =
            ranks.iter().map(|&r| &inputs[r][range.start * width..range.end * width]).collect();
        match spec.combiner() {
            Some(kernel) => fold_ranks(registry, comm, kernel, spec.dtype(), ranks, &slices),
            None => slices.concat(),
        }
    };
    match payload {
        TransferPayload::GroupPartialSegment { origin_group, seg } => {
            group_fold(*origin_group, seg.clone())
        }
        TransferPayload::GroupPartial { origin_group } => group_fold(*origin_group, 0..elements),
        TransferPayload::GroupBlock { origin_group } => {
            let ranks = &comm.groups()[*origin_group].ranks;
            let mut out = Vec::new();
            for &r in ranks {
                out.extend_from_slice(&inputs[r]);
            }
            out
        }
        TransferPayload::RootPayload => inputs[spec.root().unwrap()].clone(),
        TransferPayload::WorldShard { shard_rank } => {
            let all_ranks: Vec<usize> = (0..comm.world_size()).collect();
            let slices: Vec<&[u8]> = inputs.iter().map(|v| v.as_slice()).collect();
            let combined = fold_ranks(
                registry,
                comm,
                spec.combiner().unwrap(),
                spec.dtype(),
                &all_ranks,
                &slices,
            );
            let shard = elements / comm.world_size();
            combined[shard_rank * shard * width..(shard_rank + 1) * shard * width].to_vec()
        }
        TransferPayload::Block { src, dst } => {
            let block = elements / comm.world_size() * width;
            inputs[*src][dst * block..(dst + 1) * block].to_vec()
        }
    }
}

/// Execute one collective over the communicator: moves payload bytes,
/// advances endpoint and NIC clocks, and reports timing plus structure.
///
/// The call is synchronous: every rank enters at the latest member clock
/// and leaves at the collective's finish time.
pub fn run_collective(
    registry: &PlatformRegistry,
    network: &mut Network<'_>,
    comm: &mut Communicator,
    spec: &CollectiveSpec,
    inputs: &[Vec<u8>],
) -> Result<(Vec<Vec<u8>>, CollectiveReport), CollectiveError> {
    let elements = validate_inputs(comm, spec, inputs)?;
    let width = spec.dtype().width();
    let plan = plan_collective(comm, spec, elements, width)?;
    let topology = network.topology();

    // Synchronized entry.
    let start = comm.endpoints.iter().map(|e| e.clock()).fold(0.0f64, f64::max);
    for ep in &mut comm.endpoints {
        ep.advance_to(start);
    }

    let mut invocations = Vec::new();
    let mut records = Vec::new();
    for phase in &plan.phases {
        match phase {
            PlanPhase::Local(list) => {
                for planned in list {
                    let group = comm.groups()[planned.group].clone();
                    let link = topology.node(group.node).pcie;
                    let member_inputs: Vec<Vec<u8>> = group
                        .ranks
                        .iter()
                        .map(|&r| phase_input(registry, comm, spec, inputs, elements, planned, r))
                        .collect();
                    let sub_spec = backend_spec(spec, planned.op);
                    let (_outputs, duration) = backend_collective(
                        registry,
                        &link,
                        &vec![group.platform; group.size()],
                        &sub_spec,
                        &member_inputs,
                        planned.local_root,
                    )?;
                    debug_assert_eq!(
                        duration,
                        ring_time(group.size(), planned.ring_bytes, &link, planned.op),
                        "backend duration matches the planned ring size"
                    );
                    let begin = group
                        .ranks
                        .iter()
                        .map(|&r| comm.endpoints[r].clock())
                        .fold(0.0f64, f64::max);
                    for &r in &group.ranks {
                        comm.endpoints[r].advance_to(begin + duration);
                    }
                    invocations.push(BackendInvocation {
                        node: group.node,
                        platform: group.platform,
                        op: planned.op,
                        ranks: group.ranks.clone(),
                        duration,
                    });
                }
            }
            PlanPhase::Cross(transfers) => {
                for planned in transfers {
                    let data = transfer_bytes(registry, comm, spec, inputs, elements, &planned.payload);
                    assert_eq!(data.len(), planned.bytes, "planned transfer size matches payload");
                    let report = execute_transfer(registry, network, comm, planned, &data)?;
                    records.push(TransferRecord {
                        src_rank: planned.src_rank,
                        dst_rank: planned.dst_rank,
                        bytes: planned.bytes,
                        path: report,
                    });
                }
            }
        }
    }

    // Synchronized exit.
    let finish = comm.endpoints.iter().map(|e| e.clock()).fold(start, f64::max);
    for ep in &mut comm.endpoints {
        ep.advance_to(finish);
    }
    let completion_time = finish - start;

    let outputs = canonical_outputs(registry, comm, spec, inputs, elements);
    let report = CollectiveReport {
        op: spec.op(),
        completion_time,
        bus_bandwidth: bus_bandwidth(spec.op(), comm.world_size(), elements * width, completion_time),
        backend_invocations: invocations,
        transfers: records,
    };
    Ok((outputs, report))
}

/// The payload a group member feeds into one planned backend invocation.
fn phase_input(
    registry: &PlatformRegistry,
    comm: &Communicator,
    spec: &CollectiveSpec,
    inputs: &[Vec<u8>],
    elements: usize,
    planned: &PlannedLocal,
    rank: usize,
) -> Vec<u8> {
    let width = spec.dtype().width();
    match (spec.op(), planned.op) {
        // Wholesale delegation and first local phases consume the rank's
        // own input.
        (CollectiveOp::AllReduce, CollectiveOp::AllReduce)
        | (CollectiveOp::ReduceScatter, CollectiveOp::ReduceScatter)
        | (CollectiveOp::AllReduce, CollectiveOp::ReduceScatter)
        | (CollectiveOp::ReduceScatter, CollectiveOp::Reduce)
        | (CollectiveOp::Reduce, CollectiveOp::Reduce)
        | (CollectiveOp::AllGather, CollectiveOp::AllGather) => inputs[rank].clone(),
        // Local all_to_all exchanges only the blocks addressed to peers in
        // the same group; cross-group blocks travel point-to-point.
        (CollectiveOp::AllToAll, CollectiveOp::AllToAll) => {
            let group = &comm.groups()[planned.group];
            let block = elements / comm.world_size() * width;
            let mut out = Vec::with_capacity(group.size() * block);
            for &j in &group.ranks {
                out.extend_from_slice(&inputs[rank][j * block..(j + 1) * block]);
            }
            out
        }
        // Broadcast fan-out: the group leader holds the root's payload
        // after the cross phase; other members carry placeholders.
        (CollectiveOp::Broadcast, CollectiveOp::Broadcast) => inputs[spec.root().unwrap()].clone(),
        // all_reduce phase 3: members all-gather their finalized chunks;
        // contents are canonical combined data for the member's chunk.
        (CollectiveOp::AllReduce, CollectiveOp::AllGather) => {
            let group = &comm.groups()[planned.group];
            let chunks = chunk_ranges(elements, group.size());
            let j = group.ranks.iter().position(|&r| r == rank).unwrap();
            let all_ranks: Vec<usize> = (0..comm.world_size()).collect();
            let range = &chunks[j];
            let slices: Vec<&[u8]> = inputs
                .iter()
                .map(|v| &v[range.start * width..range.end * width])
                .collect();
            if range.is_empty() {
                Vec::new()
            } else {
                fold_ranks(registry, comm, spec.combiner().unwrap(), spec.dtype(), &all_ranks, &slices)
            }
        }
        // all_gather phase 3: the leader broadcasts the other groups'
        // bytes; members carry placeholders of the same length.
        (CollectiveOp::AllGather, CollectiveOp::Broadcast) => {
            let group = &comm.groups()[planned.group];
            let mut out = Vec::new();
            for g in comm.groups() {
                if g.node != group.node {
                    for &r in &g.ranks {
                        out.extend_from_slice(&inputs[r]);
                    }
                }
            }
            out
        }
        (outer, inner) => unreachable!("no phase input rule for {outer:?} delegating {inner:?}"),
    }
}

/// Adapt the caller's spec to one backend phase op.
fn backend_spec(spec: &CollectiveSpec, op: CollectiveOp) -> CollectiveSpec {
    CollectiveSpec {
        op,
        dtype: spec.dtype(),
        combiner: if op.reduces() { spec.combiner() } else { None },
        root: if op.rooted() { Some(0) } else { None },
    }
}

/// Move one planned transfer through transport, returning the path taken.
fn execute_transfer(
    registry: &PlatformRegistry,
    network: &mut Network<'_>,
    comm: &mut Communicator,
    planned: &PlannedTransfer,
    data: &[u8],
) -> Result<PathKind, CollectiveError> {
    let topology = network.topology();
    let (src_rank, dst_rank) = (planned.src_rank, planned.dst_rank);
    let src_ep = &comm.endpoints[src_rank];
    let dst_ep = &comm.endpoints[dst_rank];
    let mut src_buf = memory::alloc(registry, src_ep.platform(), src_ep.node(), data.len())
        .map_err(TransportError::from)?;
    let mut dst_buf = memory::alloc(registry, dst_ep.platform(), dst_ep.node(), data.len())
        .map_err(TransportError::from)?;
    src_buf.payload_mut().copy_from_slice(data);
    // Message buffers are registered eagerly; on NIC-equipped nodes the
    // transfer rides RDMA, otherwise it stages.
    let _ = memory::register_region(topology, &mut src_buf);
    let _ = memory::register_region(topology, &mut dst_buf);

    let mut src_ep = comm.endpoints[src_rank].clone();
    let mut dst_ep = comm.endpoints[dst_rank].clone();
    let report = network.send_recv(
        registry,
        (&mut src_ep, &src_buf),
        (&mut dst_ep, &mut dst_buf),
        data.len(),
        true,
    )?;
    comm.endpoints[src_rank] = src_ep;
    comm.endpoints[dst_rank] = dst_ep;
    debug_assert_eq!(dst_buf.payload(), data, "transport delivered the payload intact");
    Ok(report.path_used)
}

/// Bus bandwidth per the vendor benchmark convention.
///
/// With `S` the per-rank payload (for `all_gather`, the total gathered
/// result): `all_reduce` = `2(n−1)/n · S/t`; `all_gather`,
/// `reduce_scatter`, `all_to_all` = `(n−1)/n · S/t`; rooted ops = `S/t`.
fn bus_bandwidth(op: CollectiveOp, world: usize, payload_bytes: usize, t: f64) -> Option<f64> {
    if t <= 0.0 {
        return None;
    }
    let n = world as f64;
    let size = match op {
        CollectiveOp::AllGather => (payload_bytes * world) as f64,
        _ => payload_bytes as f64,
    };
    let factor = match op {
        CollectiveOp::AllReduce => 2.0 * (n - 1.0) / n,
        CollectiveOp::AllGather | CollectiveOp::ReduceScatter | CollectiveOp::AllToAll => {
            (n - 1.0) / n
        }
        CollectiveOp::Reduce | CollectiveOp::Broadcast => 1.0,
    };
    Some(factor * size / t)
}

/// Analytic completion time of one collective: replays the execution plan's
/// clock arithmetic on fresh clocks without materializing any payload.
pub fn collective_time(
    topology: &ClusterTopology,
    comm: &Communicator,
    spec: &CollectiveSpec,
    elements: usize,
) -> Result<f64, CollectiveError> {
    let width = spec.dtype().width();
    let plan = plan_collective(comm, spec, elements, width)?;
    let mut clocks = vec![0.0f64; comm.world_size()];
    let mut network = Network::new(topology);
    for phase in &plan.phases {
        match phase {
            PlanPhase::Local(list) => {
                for planned in list {
                    let group = &comm.groups()[planned.group];
                    let link = topology.node(group.node).pcie;
                    let duration = ring_time(group.size(), planned.ring_bytes, &link, planned.op);
                    let begin =
                        group.ranks.iter().map(|&r| clocks[r]).fold(0.0f64, f64::max);
                    for &r in &group.ranks {
                        clocks[r] = begin + duration;
                    }
                }
            }
            PlanPhase::Cross(transfers) => {
                for planned in transfers {
                    let src = &comm.endpoints()[planned.src_rank];
                    let dst = &comm.endpoints()[planned.dst_rank];
                    let kind = if src.node() == dst.node() {
                        PathKind::Intranode
                    } else {
                        PathKind::Rdma
                    };
                    let model = topology
                        .path_model((src.node(), src.device()), (dst.node(), dst.device()), kind)
                        .map_err(TransportError::from)?;
                    let duration = model.time(planned.bytes as u64);
                    let ready = clocks[planned.src_rank].max(clocks[planned.dst_rank]);
                    let (_start, finish) =
                        network.reserve(src.node(), dst.node(), ready, duration);
                    clocks[planned.src_rank] = finish;
                    clocks[planned.dst_rank] = finish;
                }
            }
        }
    }
    Ok(clocks.iter().copied().fold(0.0f64, f64::max))
}

// ---------------------------------------------------------------------------
// Typed payload helpers
// ---------------------------------------------------------------------------

/// Little-endian encoding of an `f32` slice.
pub fn encode_f32(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Little-endian decoding into `f32` values.
pub fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

/// Little-endian encoding of an `f64` slice.
pub fn encode_f64(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Little-endian decoding into `f64` values.
pub fn decode_f64(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

/// Little-endian encoding of an `i32` slice.
pub fn encode_i32(values: &[i32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Little-endian decoding into `i32` values.
pub fn decode_i32(bytes: &[u8]) -> Vec<i32> {
    bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (PlatformRegistry, ClusterTopology) {
        (PlatformRegistry::standard(), ClusterTopology::builtin())
    }

    fn run(
        registry: &PlatformRegistry,
        topology: &ClusterTopology,
        placements: &[(usize, u32)],
        spec: &CollectiveSpec,
        inputs: &[Vec<u8>],
    ) -> (Vec<Vec<u8>>, CollectiveReport) {
        let mut comm = Communicator::new(topology, placements);
        let mut network = Network::new(topology);
        run_collective(registry, &mut network, &mut comm, spec, inputs).unwrap()
    }

    #[test]
    fn communicator_groups_partition_ranks_by_node() {
        let (_, topo) = setup();
        let comm = Communicator::spanning(&topo, &[(0, 4), (2, 4)]);
        assert_eq!(comm.world_size(), 8);
        assert_eq!(comm.groups().len(), 2);
        assert_eq!(comm.groups()[0].ranks, vec![0, 1, 2, 3]);
        assert_eq!(comm.groups()[1].ranks, vec![4, 5, 6, 7]);
        assert_eq!(comm.groups()[0].platform, Platform::CudaLike);
        assert_eq!(comm.groups()[1].platform, Platform::HipLike);
        let mut seen: Vec<usize> = comm.groups().iter().flat_map(|g| g.ranks.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn ring_time_matches_hand_evaluations() {
        let link = LinkModel { alpha: 0.0, beta: 1024.0 };
        assert_eq!(ring_time(1, 4096, &link, CollectiveOp::AllReduce), 0.0);
        assert_eq!(ring_time(4, 4096, &link, CollectiveOp::AllReduce), 6.0);
        let link2 = LinkModel { alpha: 1.0, beta: 1024.0 };
        assert_eq!(ring_time(2, 2048, &link2, CollectiveOp::AllGather), 2.0);
    }

    #[test]
    fn two_rank_all_reduce_sums() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F64, KernelName::ReduceSum);
        let inputs = vec![encode_f64(&[1.0, 2.0]), encode_f64(&[10.0, 20.0])];
        let (outputs, report) = run(&reg, &topo, &[(0, 0), (2, 0)], &spec, &inputs);
        assert_eq!(decode_f64(&outputs[0]), vec![11.0, 22.0]);
        assert_eq!(decode_f64(&outputs[1]), vec![11.0, 22.0]);
        assert!(report.completion_time > 0.0);
        assert!(report.bus_bandwidth.is_some());
    }

    #[test]
    fn two_rank_all_gather_concatenates() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_gather(DType::F64);
        let inputs = vec![encode_f64(&[1.0]), encode_f64(&[2.0])];
        let (outputs, _) = run(&reg, &topo, &[(0, 0), (2, 0)], &spec, &inputs);
        assert_eq!(decode_f64(&outputs[0]), vec![1.0, 2.0]);
        assert_eq!(decode_f64(&outputs[1]), vec![1.0, 2.0]);
    }

    #[test]
    fn two_rank_reduce_scatter_shards_the_sum() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::reduce_scatter(DType::F64, KernelName::ReduceSum);
        let inputs = vec![encode_f64(&[1.0, 2.0]), encode_f64(&[10.0, 20.0])];
        let (outputs, _) = run(&reg, &topo, &[(0, 0), (2, 0)], &spec, &inputs);
        assert_eq!(decode_f64(&outputs[0]), vec![11.0]);
        assert_eq!(decode_f64(&outputs[1]), vec![22.0]);
    }

    #[test]
    fn broadcast_distributes_the_root_payload() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::broadcast(DType::F32, 0);
        let payload = encode_f32(&[7.0, 7.0]);
        let inputs = vec![payload.clone(), vec![0; 8], vec![0; 8], vec![0; 8]];
        let (outputs, _) = run(&reg, &topo, &[(0, 0), (0, 1), (2, 0), (2, 1)], &spec, &inputs);
        for out in &outputs {
            assert_eq!(decode_f32(out), vec![7.0, 7.0]);
        }
    }

    #[test]
    fn reduce_collects_unit_vectors_at_the_root() {
        let (reg, topo) = setup();
        let world = 4;
        let spec = CollectiveSpec::reduce(DType::F64, KernelName::ReduceSum, 2);
        let inputs: Vec<Vec<u8>> = (0..world)
            .map(|i| {
                let mut v = vec![0.0f64; world];
                v[i] = 1.0;
                encode_f64(&v)
            })
            .collect();
        let (outputs, _) = run(&reg, &topo, &[(0, 0), (0, 1), (2, 0), (2, 1)], &spec, &inputs);
        assert_eq!(decode_f64(&outputs[2]), vec![1.0; world]);
        for (i, out) in outputs.iter().enumerate() {
            if i != 2 {
                assert!(out.is_empty(), "non-root ranks end with empty outputs");
            }
        }
    }

    #[test]
    fn all_to_all_transposes_blocks() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_to_all(DType::I32);
        // Block (i, j) encoded as 10*i + j.
        let inputs: Vec<Vec<u8>> =
            (0..3).map(|i| encode_i32(&[10 * i, 10 * i + 1, 10 * i + 2])).collect();
        let (outputs, _) = run(&reg, &topo, &[(0, 0), (1, 0), (2, 0)], &spec, &inputs);
        for i in 0..3i32 {
            let expect: Vec<i32> = (0..3).map(|j| 10 * j + i).collect();
            assert_eq!(decode_i32(&outputs[i as usize]), expect, "rank {i}");
        }
    }

    #[test]
    fn world_of_one_is_identity_with_degenerate_bandwidth() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum);
        let inputs = vec![encode_f32(&[3.5, -1.0])];
        let (outputs, report) = run(&reg, &topo, &[(0, 0)], &spec, &inputs);
        assert_eq!(outputs[0], inputs[0]);
        assert_eq!(report.completion_time, 0.0);
        assert_eq!(report.bus_bandwidth, None);
        assert_eq!(report.backend_invocations.len(), 1);
        assert!(report.transfers.is_empty(), "no point-to-point traffic at world size 1");
    }

    #[test]
    fn single_group_collective_delegates_wholesale() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum);
        let inputs: Vec<Vec<u8>> = (0..4).map(|r| encode_f32(&[r as f32; 4])).collect();
        let (outputs, report) = run(&reg, &topo, &[(0, 0), (0, 1), (0, 2), (0, 3)], &spec, &inputs);
        for out in &outputs {
            assert_eq!(decode_f32(out), vec![6.0; 4]);
        }
        assert_eq!(report.backend_invocations.len(), 1);
        assert_eq!(report.backend_invocations[0].op, CollectiveOp::AllReduce);
        assert!(report.transfers.is_empty());
        // Flat ring timing applies directly.
        let expect = ring_time(4, 16, &topo.node(0).pcie, CollectiveOp::AllReduce);
        assert!((report.completion_time - expect).abs() < 1e-12);
    }

    #[test]
    fn backend_collective_sums_a_group_of_four() {
        let (reg, _) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F64, KernelName::ReduceSum);
        let inputs: Vec<Vec<u8>> = (0..4).map(|r| encode_f64(&[r as f64; 4])).collect();
        let link = LinkModel::GEN3;
        let (outputs, duration) = backend_collective(
            &reg,
            &link,
            &[Platform::CudaLike; 4],
            &spec,
            &inputs,
            0,
        )
        .unwrap();
        for out in &outputs {
            assert_eq!(decode_f64(out), vec![6.0; 4]);
        }
        assert_eq!(duration, ring_time(4, 32, &link, CollectiveOp::AllReduce));
    }

    #[test]
    fn backend_collective_group_of_one_is_identity() {
        let (reg, _) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum);
        let inputs = vec![encode_f32(&[9.0])];
        let (outputs, duration) =
            backend_collective(&reg, &LinkModel::GEN4, &[Platform::HipLike], &spec, &inputs, 0)
                .unwrap();
        assert_eq!(outputs, inputs);
        assert_eq!(duration, 0.0);
    }

    #[test]
    fn backend_collective_rejects_mixed_groups() {
        let (reg, _) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum);
        let inputs = vec![encode_f32(&[1.0]), encode_f32(&[2.0])];
        let err = backend_collective(
            &reg,
            &LinkModel::GEN3,
            &[Platform::CudaLike, Platform::HipLike],
            &spec,
            &inputs,
            0,
        )
        .unwrap_err();
        assert_eq!(
            err,
            CollectiveError::MixedGroup { platforms: vec![Platform::CudaLike, Platform::HipLike] }
        );
    }

    #[test]
    fn invalid_root_is_rejected() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::broadcast(DType::F32, 9);
        let inputs = vec![encode_f32(&[1.0]); 2];
        let mut comm = Communicator::new(&topo, &[(0, 0), (2, 0)]);
        let mut network = Network::new(&topo);
        let err = run_collective(&reg, &mut network, &mut comm, &spec, &inputs).unwrap_err();
        assert_eq!(err, CollectiveError::InvalidRoot { root: 9, world_size: 2 });
    }

    #[test]
    fn indivisible_reduce_scatter_is_rejected() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::reduce_scatter(DType::F32, KernelName::ReduceSum);
        let inputs = vec![encode_f32(&[1.0, 2.0, 3.0]); 2];
        let mut comm = Communicator::new(&topo, &[(0, 0), (2, 0)]);
        let mut network = Network::new(&topo);
        let err = run_collective(&reg, &mut network, &mut comm, &spec, &inputs).unwrap_err();
        assert!(matches!(err, CollectiveError::LengthMismatch { .. }));
    }

    #[test]
    fn unequal_payload_lengths_are_rejected() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum);
        let inputs = vec![encode_f32(&[1.0, 2.0]), encode_f32(&[1.0])];
        let mut comm = Communicator::new(&topo, &[(0, 0), (2, 0)]);
        let mut network = Network::new(&topo);
        let err = run_collective(&reg, &mut network, &mut comm, &spec, &inputs).unwrap_err();
        assert!(matches!(err, CollectiveError::LengthMismatch { .. }));
    }

    fn oracle_fold_f32(inputs: &[Vec<u8>]) -> Vec<f32> {
        let mut acc = decode_f32(&inputs[0]);
        for input in &inputs[1..] {
            for (a, v) in acc.iter_mut().zip(decode_f32(input)) {
                *a += v;
            }
        }
        acc
    }

    #[test]
    fn mixed_vendor_all_reduce_matches_flat_oracle_bitwise() {
        let (reg, topo) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // 16 ranks across all four nodes, f32 sum: hierarchical execution
        // must equal the flat left-to-right fold bit for bit.
        let placements: Vec<(usize, u32)> =
            (0..4).flat_map(|n| (0..4).map(move |d| (n, d))).collect();
        for _ in 0..20 {
            let elements = rng.gen_range(1..40);
            let inputs: Vec<Vec<u8>> = (0..16)
                .map(|_| {
                    encode_f32(
                        &(0..elements)
                            .map(|_| rng.gen_range(-1.0e3f32..1.0e3))
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            let spec = CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum);
            let (outputs, _) = run(&reg, &topo, &placements, &spec, &inputs);
            let oracle = oracle_fold_f32(&inputs);
            for out in &outputs {
                assert_eq!(decode_f32(out), oracle, "bitwise equality incl. float rounding");
            }
        }
    }

    #[test]
    fn mixed_vendor_i32_all_reduce_matches_oracle() {
        let (reg, topo) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let placements = [(0, 0), (0, 1), (0, 2), (0, 3), (2, 0), (2, 1), (2, 2), (2, 3)];
        let inputs: Vec<Vec<u8>> = (0..8)
            .map(|_| encode_i32(&(0..12).map(|_| rng.gen()).collect::<Vec<i32>>()))
            .collect();
        let spec = CollectiveSpec::all_reduce(DType::I32, KernelName::ReduceSum);
        let (outputs, _) = run(&reg, &topo, &placements, &spec, &inputs);
        let mut oracle = decode_i32(&inputs[0]);
        for input in &inputs[1..] {
            for (a, v) in oracle.iter_mut().zip(decode_i32(input)) {
                *a = a.wrapping_add(v);
            }
        }
        for out in &outputs {
            assert_eq!(decode_i32(out), oracle);
        }
    }

    #[test]
    fn twelve_rank_all_gather_matches_concatenation() {
        let (reg, topo) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        // 4 CUDA-like + 8 HIP-like ranks.
        let placements: Vec<(usize, u32)> = (0..4)
            .map(|d| (0usize, d))
            .chain((0..4).map(|d| (2usize, d)))
            .chain((0..4).map(|d| (3usize, d)))
            .collect();
        let inputs: Vec<Vec<u8>> = (0..12)
            .map(|_| encode_f64(&(0..3).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()))
            .collect();
        let spec = CollectiveSpec::all_gather(DType::F64);
        let (outputs, _) = run(&reg, &topo, &placements, &spec, &inputs);
        let expect: Vec<u8> = inputs.concat();
        for out in &outputs {
            assert_eq!(out, &expect);
        }
    }

    #[test]
    fn sixteen_rank_reduce_scatter_matches_reduce_then_scatter() {
        let (reg, topo) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let placements: Vec<(usize, u32)> =
            (0..4).flat_map(|n| (0..4).map(move |d| (n, d))).collect();
        let elements = 32;
        let inputs: Vec<Vec<u8>> = (0..16)
            .map(|_| {
                encode_f64(&(0..elements).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<_>>())
            })
            .collect();
        let spec = CollectiveSpec::reduce_scatter(DType::F64, KernelName::ReduceSum);
        let (outputs, _) = run(&reg, &topo, &placements, &spec, &inputs);
        let mut combined = decode_f64(&inputs[0]);
        for input in &inputs[1..] {
            for (a, v) in combined.iter_mut().zip(decode_f64(input)) {
                *a += v;
            }
        }
        let shard = elements / 16;
        for (i, out) in outputs.iter().enumerate() {
            assert_eq!(decode_f64(out), combined[i * shard..(i + 1) * shard]);
        }
    }

    #[test]
    fn hierarchical_reports_expose_structure() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum);
        let inputs: Vec<Vec<u8>> = (0..8).map(|r| encode_f32(&[r as f32; 8])).collect();
        let placements = [(0, 0), (0, 1), (0, 2), (0, 3), (2, 0), (2, 1), (2, 2), (2, 3)];
        let (_, report) = run(&reg, &topo, &placements, &spec, &inputs);
        // Two groups, three phases: reduce-scatter x2, all-gather x2.
        assert_eq!(report.backend_invocations.len(), 4);
        let ops: Vec<CollectiveOp> = report.backend_invocations.iter().map(|b| b.op).collect();
        assert_eq!(
            ops,
            vec![
                CollectiveOp::ReduceScatter,
                CollectiveOp::ReduceScatter,
                CollectiveOp::AllGather,
                CollectiveOp::AllGather
            ]
        );
        assert!(!report.transfers.is_empty());
        for t in &report.transfers {
            assert_eq!(t.path, PathKind::Rdma, "cross-group shards ride RDMA");
        }
    }

    #[test]
    fn completion_time_matches_the_analytic_twin() {
        let (reg, topo) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let layouts: Vec<Vec<(usize, u32)>> = vec![
            vec![(0, 0), (0, 1), (0, 2), (0, 3)],
            vec![(0, 0), (0, 1), (2, 0), (2, 1)],
            (0..4).flat_map(|n| (0..4).map(move |d| (n, d))).collect(),
            vec![(0, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)],
        ];
        for placements in &layouts {
            for op in CollectiveOp::ALL {
                let world = placements.len();
                let elements = world * rng.gen_range(1..6);
                let spec = match op {
                    CollectiveOp::AllReduce => {
                        CollectiveSpec::all_reduce(DType::F64, KernelName::ReduceSum)
                    }
                    CollectiveOp::AllGather => CollectiveSpec::all_gather(DType::F64),
                    CollectiveOp::ReduceScatter => {
                        CollectiveSpec::reduce_scatter(DType::F64, KernelName::ReduceSum)
                    }
                    CollectiveOp::Reduce => {
                        CollectiveSpec::reduce(DType::F64, KernelName::ReduceSum, world - 1)
                    }
                    CollectiveOp::Broadcast => CollectiveSpec::broadcast(DType::F64, 0),
                    CollectiveOp::AllToAll => CollectiveSpec::all_to_all(DType::F64),
                };
                let inputs: Vec<Vec<u8>> = (0..world)
                    .map(|_| {
                        encode_f64(
                            &(0..elements).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(),
                        )
                    })
                    .collect();
                let (_, report) = run(&reg, &topo, placements, &spec, &inputs);
                let analytic = collective_time(&topo, &Communicator::new(&topo, placements), &spec, elements)
                    .unwrap();
                assert!(
                    (report.completion_time - analytic).abs() < 1e-9,
                    "{op} on {placements:?}: executed {} vs analytic {analytic}",
                    report.completion_time
                );
            }
        }
    }

    #[test]
    fn mixed_vendor_completion_is_bounded_by_the_slower_group() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum);
        for elements in [64usize, 1024, 16384] {
            let inputs8: Vec<Vec<u8>> = (0..8).map(|r| encode_f32(&vec![r as f32; elements])).collect();
            let het = run(
                &reg,
                &topo,
                &[(0, 0), (0, 1), (0, 2), (0, 3), (2, 0), (2, 1), (2, 2), (2, 3)],
                &spec,
                &inputs8,
            )
            .1;
            let homo_a = run(
                &reg,
                &topo,
                &[(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2), (1, 3)],
                &spec,
                &inputs8,
            )
            .1;
            let homo_b = run(
                &reg,
                &topo,
                &[(2, 0), (2, 1), (2, 2), (2, 3), (3, 0), (3, 1), (3, 2), (3, 3)],
                &spec,
                &inputs8,
            )
            .1;
            let faster = homo_a.completion_time.min(homo_b.completion_time);
            assert!(
                het.completion_time >= faster,
                "elements {elements}: het {} vs faster homo {faster}",
                het.completion_time
            );
        }
    }

    #[test]
    fn repeated_runs_are_deterministic() {
        let (reg, topo) = setup();
        let spec = CollectiveSpec::all_reduce(DType::F64, KernelName::ReduceSum);
        let placements = [(0, 0), (0, 1), (2, 0), (2, 1), (3, 0)];
        let inputs: Vec<Vec<u8>> =
            (0..5).map(|r| encode_f64(&[r as f64, -(r as f64), 0.5 * r as f64])).collect();
        let first = run(&reg, &topo, &placements, &spec, &inputs);
        let second = run(&reg, &topo, &placements, &spec, &inputs);
        assert_eq!(first.0, second.0);
        assert_eq!(first.1, second.1);
    }
}
