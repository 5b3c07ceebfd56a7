//! Speed-proportional micro-batch balancing and a training-step simulator
//! with ZeRO-style communication schedules.
//!
//! The balancer splits a global batch `B` across ranks proportionally to
//! their processing speeds and rounds to integers with a largest-remainder
//! rule whose remainder key is the post-increment load `(b_i+1)/s_i`; the
//! result provably minimizes the straggler term `max_i(b_i/s_i)` among all
//! integer splits summing to `B`. Training steps combine that compute time
//! with the analytic completion times of the schedule's collectives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collectives::{collective_time, CollectiveError, CollectiveOp, CollectiveSpec, Communicator};
use crate::platform::{DType, KernelName};
use crate::topology::ClusterTopology;

// ---------------------------------------------------------------------------
// Assignment
// ---------------------------------------------------------------------------

/// Per-rank processing speeds plus the cost of measuring them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    /// Tokens per second per rank; all positive.
    pub speeds: Vec<f64>,
    /// Virtual seconds spent in the warm-up run that produced the profile.
    pub profiling_duration: f64,
}

/// An integer micro-batch split of the global batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub total: usize,
    pub per_rank: Vec<usize>,
}

/// Errors from balancing and step simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BalancerError {
    #[error("global batch must hold at least one sample")]
    ZeroBatch,
    #[error("assignment covers {assignment_ranks} ranks but the communicator has {world_size}")]
    RankMismatch { assignment_ranks: usize, world_size: usize },
    #[error(transparent)]
    Collective(#[from] CollectiveError),
}

/// The real-valued proportional quotas `B·s_i/Σs` before rounding.
pub fn proportional_quotas(batch: usize, speeds: &[f64]) -> Vec<f64> {
    let total: f64 = speeds.iter().sum();
    speeds.iter().map(|s| batch as f64 * s / total).collect()
}

/// Split `batch` samples across ranks proportionally to `speeds`.
///
/// Quotas are floored, then the remainder goes one sample at a time to the
/// rank whose post-increment load `(b_i+1)/s_i` is smallest, ties to the
/// lower rank. This keeps `Σb_i = batch` exact and minimizes the straggler
/// term `max_i(b_i/s_i)` over all integer splits; at equal speeds it
/// coincides with plain largest-remainder rounding.
pub fn assign_microbatches(batch: usize, speeds: &[f64]) -> Result<Assignment, BalancerError> {
    assert!(!speeds.is_empty(), "at least one rank to balance");
    assert!(speeds.iter().all(|&s| s > 0.0), "speeds are positive");
    if batch == 0 {
        return Err(BalancerError::ZeroBatch);
    }
    let mut per_rank: Vec<usize> =
        proportional_quotas(batch, speeds).iter().map(|q| q.floor() as usize).collect();
    let mut remainder = batch - per_rank.iter().sum::<usize>();
    while remainder > 0 {
        let next = (0..speeds.len())
            .min_by(|&i, &j| {
                let ki = (per_rank[i] + 1) as f64 / speeds[i];
                let kj = (per_rank[j] + 1) as f64 / speeds[j];
                ki.partial_cmp(&kj).unwrap()
            })
            .unwrap();
        per_rank[next] += 1;
        remainder -= 1;
    }
    Ok(Assignment { total: batch, per_rank })
}

/// Equal-share split: the pre-balancing baseline.
pub fn uniform_assignment(batch: usize, ranks: usize) -> Result<Assignment, BalancerError> {
    assign_microbatches(batch, &vec![1.0; ranks])
}

// ---------------------------------------------------------------------------
// Models and schedules
// ---------------------------------------------------------------------------

/// Size parameters of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDesc {
    /// Parameter count.
    pub params: u64,
    /// Bytes per parameter (2 for half precision, 4 for single).
    pub dtype_bytes: u64,
    /// Tokens per sample.
    pub seq_len: u64,
    /// Global batch in samples per step.
    #[serde(rename = "batch_B")]
    pub batch_b: usize,
}

impl ModelDesc {
    pub const PRESET_NAMES: [&'static str; 4] =
        ["gpt-125m", "gpt-355m", "llama-1b", "llama-3b"];

    /// Built-in model sizes (batch sizes calibrated for the default
    /// four-node topology).
    pub fn preset(name: &str) -> Option<ModelDesc> {
        let desc = match name {
            "gpt-125m" => {
                ModelDesc { params: 125_000_000, dtype_bytes: 2, seq_len: 1024, batch_b: 512 }
            }
            "gpt-355m" => {
                ModelDesc { params: 355_000_000, dtype_bytes: 2, seq_len: 1024, batch_b: 1024 }
            }
            "llama-1b" => {
                ModelDesc { params: 1_000_000_000, dtype_bytes: 2, seq_len: 8192, batch_b: 256 }
            }
            "llama-3b" => {
                ModelDesc { params: 3_000_000_000, dtype_bytes: 2, seq_len: 8192, batch_b: 256 }
            }
            _ => return None,
        };
        Some(desc)
    }

    /// Bytes of one full parameter (or gradient) vector.
    pub fn parameter_bytes(&self) -> u64 {
        self.params * self.dtype_bytes
    }

    /// Bytes of one rank's optimizer-state shard.
    pub fn optimizer_slice_bytes(&self, world_size: usize) -> u64 {
        self.parameter_bytes() / world_size as u64
    }
}

/// Which ZeRO sharding stage drives the per-step communication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroStage {
    /// Zero-communication baseline.
    None,
    One,
    Three,
}

impl ZeroStage {
    pub fn name(&self) -> &'static str {
        match self {
            ZeroStage::None => "none",
            ZeroStage::One => "1",
            ZeroStage::Three => "3",
        }
    }

    pub fn parse(name: &str) -> Option<ZeroStage> {
        match name {
            "none" => Some(ZeroStage::None),
            "1" => Some(ZeroStage::One),
            "3" => Some(ZeroStage::Three),
            _ => None,
        }
    }
}

/// One collective in the per-step schedule; `total_bytes` is the volume the
/// operation moves (for `all_gather`, the gathered result size).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledCollective {
    pub op: CollectiveOp,
    pub total_bytes: u64,
}

/// The per-step communication plan for one ZeRO stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSchedule {
    pub model: ModelDesc,
    pub stage: ZeroStage,
    pub collectives: Vec<ScheduledCollective>,
}

impl ZeroSchedule {
    /// Compute-only baseline: no per-step communication.
    pub fn none(model: ModelDesc) -> ZeroSchedule {
        ZeroSchedule { model, stage: ZeroStage::None, collectives: Vec::new() }
    }

    /// Stage 1: optimizer states are sharded. Each step all-gathers one
    /// optimizer-state slice and all-reduces the full gradient.
    pub fn stage1(model: ModelDesc, world_size: usize) -> ZeroSchedule {
        let slice = model.optimizer_slice_bytes(world_size);
        let grads = model.parameter_bytes();
        assert!(slice > 0 && grads > 0, "schedule volumes are positive");
        ZeroSchedule {
            model,
            stage: ZeroStage::One,
            collectives: vec![
                ScheduledCollective { op: CollectiveOp::AllGather, total_bytes: slice },
                ScheduledCollective { op: CollectiveOp::AllReduce, total_bytes: grads },
            ],
        }
    }

    /// Stage 3: parameters are sharded too. Each step all-gathers the full
    /// parameters and reduce-scatters the gradient.
    pub fn stage3(model: ModelDesc) -> ZeroSchedule {
        let params = model.parameter_bytes();
        assert!(params > 0, "schedule volumes are positive");
        ZeroSchedule {
            model,
            stage: ZeroStage::Three,
            collectives: vec![
                ScheduledCollective { op: CollectiveOp::AllGather, total_bytes: params },
                ScheduledCollective { op: CollectiveOp::ReduceScatter, total_bytes: params },
            ],
        }
    }

    /// Build the schedule for a stage.
    pub fn for_stage(stage: ZeroStage, model: ModelDesc, world_size: usize) -> ZeroSchedule {
        match stage {
            ZeroStage::None => ZeroSchedule::none(model),
            ZeroStage::One => ZeroSchedule::stage1(model, world_size),
            ZeroStage::Three => ZeroSchedule::stage3(model),
        }
    }

    /// Total bytes the schedule's all-gather operations move per step.
    pub fn all_gather_bytes(&self) -> u64 {
        self.collectives
            .iter()
            .filter(|c| c.op == CollectiveOp::AllGather)
            .map(|c| c.total_bytes)
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Step simulation
// ---------------------------------------------------------------------------

/// Timing of one simulated training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Straggler-bound compute: `max_i(b_i·seq_len/s_i)`.
    pub compute_time: f64,
    /// Sum of the schedule's collective completion times.
    pub comm_time: f64,
    pub step_time: f64,
    /// Tokens per second: `B·seq_len / step_time`.
    pub throughput: f64,
}

/// Per-rank element count fed to the timing model for one scheduled
/// collective. Volumes are modeled as f32 elements; reduce-scatter counts
/// align down to a world-size multiple (the sharding granularity).
fn scheduled_elements(op: CollectiveOp, total_bytes: u64, world_size: usize) -> usize {
    let width = DType::F32.width() as u64;
    let world = world_size as u64;
    let elements = match op {
        CollectiveOp::AllGather => (total_bytes / (width * world)).max(1),
        CollectiveOp::ReduceScatter => ((total_bytes / width / world) * world).max(world),
        _ => (total_bytes / width).max(1),
    };
    elements as usize
}

fn scheduled_spec(op: CollectiveOp) -> CollectiveSpec {
    match op {
        CollectiveOp::AllReduce => CollectiveSpec::all_reduce(DType::F32, KernelName::ReduceSum),
        CollectiveOp::AllGather => CollectiveSpec::all_gather(DType::F32),
        CollectiveOp::ReduceScatter => {
            CollectiveSpec::reduce_scatter(DType::F32, KernelName::ReduceSum)
        }
        CollectiveOp::Reduce => CollectiveSpec::reduce(DType::F32, KernelName::ReduceSum, 0),
        CollectiveOp::Broadcast => CollectiveSpec::broadcast(DType::F32, 0),
        CollectiveOp::AllToAll => CollectiveSpec::all_to_all(DType::F32),
    }
}

/// Simulate one training step: straggler-bound compute plus the analytic
/// completion times of the schedule's collectives over the communicator.
pub fn simulate_step(
    assignment: &Assignment,
    schedule: &ZeroSchedule,
    comm: &Communicator,
    topology: &ClusterTopology,
) -> Result<StepReport, BalancerError> {
    if assignment.per_rank.len() != comm.world_size() {
        return Err(BalancerError::RankMismatch {
            assignment_ranks: assignment.per_rank.len(),
            world_size: comm.world_size(),
        });
    }
    let speeds = comm.speeds(topology);
    let seq = schedule.model.seq_len as f64;
    let compute_time = assignment
        .per_rank
        .iter()
        .zip(&speeds)
        .map(|(&b, &s)| b as f64 * seq / s)
        .fold(0.0f64, f64::max);
    let mut comm_time = 0.0;
    for c in &schedule.collectives {
        let elements = scheduled_elements(c.op, c.total_bytes, comm.world_size());
        comm_time += collective_time(topology, comm, &scheduled_spec(c.op), elements)?;
    }
    let step_time = compute_time + comm_time;
    Ok(StepReport {
        compute_time,
        comm_time,
        step_time,
        throughput: assignment.total as f64 * seq / step_time,
    })
}

/// Simulated profiling run: speeds come from the topology (measurement is
/// stood in for by configuration), and the cost of profiling is
/// `warmup_steps` uniform-assignment steps under the stage-1 schedule.
pub fn simulate_profiling(
    model: &ModelDesc,
    topology: &ClusterTopology,
    warmup_steps: usize,
) -> SpeedProfile {
    assert!(warmup_steps >= 1, "profiling needs at least one warm-up step");
    let placements: Vec<(usize, u32)> = (0..topology.node_count())
        .flat_map(|n| (0..topology.node(n).device_count).map(move |d| (n, d)))
        .collect();
    let comm = Communicator::new(topology, &placements);
    let speeds = comm.speeds(topology);
    let uniform = uniform_assignment(model.batch_b, comm.world_size())
        .expect("presets carry nonzero batches");
    let schedule = ZeroSchedule::stage1(*model, comm.world_size());
    let step = simulate_step(&uniform, &schedule, &comm, topology)
        .expect("uniform assignment matches the communicator");
    SpeedProfile { speeds, profiling_duration: warmup_steps as f64 * step.step_time }
}

/// Throughput of the heterogeneous run normalized by the sum of the two
/// homogeneous runs' throughputs.
pub fn efficiency(het: &StepReport, homo_a: &StepReport, homo_b: &StepReport) -> f64 {
    het.throughput / (homo_a.throughput + homo_b.throughput)
}
