//! Benchmark sweeps and the training simulation behind the CLI: p2p
//! bandwidth curves, collective bandwidth curves, and balanced-training
//! reports, all emitted as deterministic CSV.
//!
//! Every bandwidth cell is recomputed from an underlying transfer or
//! collective report (bytes over measured duration; collectives use the
//! documented bus-bandwidth convention) — there is no separate
//! bookkeeping. Collective cells self-check their payloads against an
//! independent typed oracle before any timing row is emitted.

use thiserror::Error;

use crate::balancer::{
    assign_microbatches, simulate_profiling, simulate_step, uniform_assignment, BalancerError,
    ModelDesc, ZeroSchedule, ZeroStage,
};
use crate::collectives::{
    decode_f32, encode_f32, run_collective, CollectiveError, CollectiveOp, CollectiveReport,
    CollectiveSpec, Communicator,
};
use crate::memory::{self, MemoryError};
use crate::parallel;
use crate::platform::{DType, KernelName, Platform, PlatformRegistry};
use crate::topology::{ClusterTopology, PathKind, TopologyError};
use crate::transport::{measured_bandwidth, Endpoint, Network, TransportError};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Scenarios and specs
// ---------------------------------------------------------------------------

/// A `(node, device)` placement on each side of a point-to-point transfer.
pub type EndpointPair = ((usize, u32), (usize, u32));

/// Which slice of the cluster a sweep exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// CUDA-like nodes only.
    HomoA,
    /// HIP-like nodes only.
    HomoB,
    /// Both vendors.
    Het,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::HomoA, Scenario::HomoB, Scenario::Het];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::HomoA => "homoA",
            Scenario::HomoB => "homoB",
            Scenario::Het => "het",
        }
    }

    pub fn parse(name: &str) -> Option<Scenario> {
        Scenario::ALL.iter().copied().find(|s| s.name() == name)
    }

    /// World sizes swept by default: the homogeneous scenarios stop at one
    /// vendor's capacity, the heterogeneous one scales past it.
    pub fn default_world_sizes(&self) -> Vec<usize> {
        match self {
            Scenario::HomoA | Scenario::HomoB => vec![2, 4, 8],
            Scenario::Het => vec![8, 12, 16],
        }
    }

    fn vendor_devices(topology: &ClusterTopology, platform: Platform) -> Vec<(usize, u32)> {
        (0..topology.node_count())
            .filter(|&n| topology.node(n).platform == platform)
            .flat_map(|n| (0..topology.node(n).device_count).map(move |d| (n, d)))
            .collect()
    }

    /// The node pair a p2p sweep transfers between (device 0 on each side).
    pub fn p2p_endpoints(&self, topology: &ClusterTopology) -> Result<EndpointPair, SweepError> {
        let pick = |devices: Vec<(usize, u32)>, want: &str| -> Result<Vec<usize>, SweepError> {
            let mut nodes: Vec<usize> = devices.iter().map(|&(n, _)| n).collect();
            nodes.dedup();
            if nodes.len() < 2 {
                return Err(SweepError::ScenarioUnavailable {
                    scenario: self.name(),
                    reason: format!("needs two {want} nodes"),
                });
            }
            Ok(nodes)
        };
        match self {
            Scenario::HomoA => {
                let nodes =
                    pick(Self::vendor_devices(topology, Platform::CudaLike), "cuda-like")?;
                Ok(((nodes[0], 0), (nodes[1], 0)))
            }
            Scenario::HomoB => {
                let nodes = pick(Self::vendor_devices(topology, Platform::HipLike), "hip-like")?;
                Ok(((nodes[0], 0), (nodes[1], 0)))
            }
            Scenario::Het => {
                let a = Self::vendor_devices(topology, Platform::CudaLike);
                let b = Self::vendor_devices(topology, Platform::HipLike);
                match (a.first(), b.first()) {
                    (Some(&(na, _)), Some(&(nb, _))) => Ok(((na, 0), (nb, 0))),
                    _ => Err(SweepError::ScenarioUnavailable {
                        scenario: self.name(),
                        reason: "needs one node of each vendor".into(),
                    }),
                }
            }
        }
    }

    /// Rank placements for a collective of `world` ranks. Homogeneous
    /// scenarios fill one vendor's devices in node order; the
    /// heterogeneous scenario alternates vendors device by device.
    pub fn placements(
        &self,
        topology: &ClusterTopology,
        world: usize,
    ) -> Result<Vec<(usize, u32)>, SweepError> {
        assert!(world >= 1, "a collective needs at least one rank");
        let unavailable = |reason: String| SweepError::ScenarioUnavailable {
            scenario: self.name(),
            reason,
        };
        let out = match self {
            Scenario::HomoA | Scenario::HomoB => {
                let platform = if *self == Scenario::HomoA {
                    Platform::CudaLike
                } else {
                    Platform::HipLike
                };
                let devices = Self::vendor_devices(topology, platform);
                if devices.len() < world {
                    return Err(unavailable(format!(
                        "only {} {} devices for a world of {world}",
                        devices.len(),
                        platform.config_name()
                    )));
                }
                devices[..world].to_vec()
            }
            Scenario::Het => {
                let a = Self::vendor_devices(topology, Platform::CudaLike);
                let b = Self::vendor_devices(topology, Platform::HipLike);
                if world > 1 && (a.is_empty() || b.is_empty()) {
                    return Err(unavailable("needs devices of both vendors".into()));
                }
                if a.len() + b.len() < world {
                    return Err(unavailable(format!(
                        "only {} devices for a world of {world}",
                        a.len() + b.len()
                    )));
                }
                let mut out = Vec::with_capacity(world);
                let (mut ia, mut ib) = (a.into_iter(), b.into_iter());
                while out.len() < world {
                    if let Some(p) = ia.next() {
                        out.push(p);
                    }
                    if out.len() < world {
                        if let Some(p) = ib.next() {
                            out.push(p);
                        }
                    }
                }
                out
            }
        };
        Ok(out)
    }
}

/// Default p2p payload sizes: 1 KiB to 1 GiB, doubling.
pub fn default_p2p_sizes() -> Vec<u64> {
    (10..=30).map(|e| 1u64 << e).collect()
}

/// Parameters of one sweep run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: Scenario,
    /// p2p: transfer sizes in bytes. Collective: per-rank payload bytes
    /// (single entry used).
    pub sizes: Vec<u64>,
    pub ops: Vec<CollectiveOp>,
    pub world_sizes: Vec<usize>,
    /// When false the p2p sweep emits only staged rows.
    pub include_rdma: bool,
    pub seed: u64,
}

impl SweepSpec {
    pub fn p2p(scenario: Scenario) -> SweepSpec {
        SweepSpec {
            scenario,
            sizes: default_p2p_sizes(),
            ops: Vec::new(),
            world_sizes: Vec::new(),
            include_rdma: true,
            seed: 0,
        }
    }

    pub fn collective(scenario: Scenario) -> SweepSpec {
        SweepSpec {
            scenario,
            sizes: vec![1 << 20],
            ops: CollectiveOp::ALL.to_vec(),
            world_sizes: scenario.default_world_sizes(),
            include_rdma: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SweepError::InvalidSpec {
                message: "sizes must be a strictly increasing non-empty list".into(),
            });
        }
        Ok(())
    }
}

/// Errors from sweeps and the training simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid sweep: {message}")]
    InvalidSpec { message: String },
    #[error("scenario {scenario} does not fit this topology: {reason}")]
    ScenarioUnavailable { scenario: &'static str, reason: String },
    #[error("self-check failed for {context}: simulated payloads diverged from the oracle")]
    SelfCheckFailed { context: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Collective(#[from] CollectiveError),
    #[error(transparent)]
    Balancer(#[from] BalancerError),
}

/// Mix a per-cell seed from the sweep seed and the cell identity so
/// payloads are independent of execution order.
fn cell_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0x100_0000_01b3);
        h ^= h >> 29;
    }
    h
}

// ---------------------------------------------------------------------------
// p2p sweep
// ---------------------------------------------------------------------------

/// One p2p sweep cell: a transfer of `size` bytes over one path.
#[derive(Debug, Clone, PartialEq)]
pub struct P2pRow {
    pub size: u64,
    pub scenario: Scenario,
    pub path: PathKind,
    pub bandwidth: f64,
}

/// Run the point-to-point sweep: for every size, one registered RDMA
/// transfer (unless disabled) and one host-staged transfer between the
/// scenario's endpoint pair. Payloads are seeded, moved for real, and
/// verified before the bandwidth is recorded.
pub fn run_p2p_sweep(
    topology: &ClusterTopology,
    spec: &SweepSpec,
) -> Result<Vec<P2pRow>, SweepError> {
    spec.validate()?;
    let registry = PlatformRegistry::standard();
    registry.set_tracing(false);
    let ((src_node, src_dev), (dst_node, dst_dev)) = spec.scenario.p2p_endpoints(topology)?;
    let src_platform = topology.node(src_node).platform;
    let dst_platform = topology.node(dst_node).platform;

    let mut rows = Vec::new();
    let paths: &[PathKind] =
        if spec.include_rdma { &[PathKind::Rdma, PathKind::Staged] } else { &[PathKind::Staged] };
    for &size in &spec.sizes {
        for &path in paths {
            let mut network = Network::new(topology);
            let mut src_ep = Endpoint::new(0, src_node, src_dev, src_platform);
            let mut dst_ep = Endpoint::new(1, dst_node, dst_dev, dst_platform);
            let mut src_buf = memory::alloc(&registry, src_platform, src_node, size as usize)?;
            let mut dst_buf = memory::alloc(&registry, dst_platform, dst_node, size as usize)?;
            let mut rng =
                ChaCha8Rng::seed_from_u64(cell_seed(spec.seed, &[size, path as u64]));
            rng.fill_bytes(src_buf.payload_mut());
            let prefer_rdma = path == PathKind::Rdma;
            if prefer_rdma {
                memory::register_region(topology, &mut src_buf)?;
                memory::register_region(topology, &mut dst_buf)?;
            }
            let report = network.send_recv(
                &registry,
                (&mut src_ep, &src_buf),
                (&mut dst_ep, &mut dst_buf),
                size as usize,
                prefer_rdma,
            )?;
            assert_eq!(report.path_used, path, "path selection honors the sweep cell");
            if dst_buf.payload() != src_buf.payload() {
                return Err(SweepError::SelfCheckFailed {
                    context: format!("p2p {} {} bytes over {path}", spec.scenario.name(), size),
                });
            }
            rows.push(P2pRow {
                size,
                scenario: spec.scenario,
                path,
                bandwidth: measured_bandwidth(&report),
            });
        }
    }
    rows.sort_by(|a, b| (a.size, a.path.name()).cmp(&(b.size, b.path.name())));
    Ok(rows)
}

/// Serialize p2p rows as CSV (`size,scenario,path,bandwidth`).
pub fn p2p_csv(rows: &[P2pRow]) -> String {
    let mut out = String::from("size,scenario,path,bandwidth\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.size,
            r.scenario.name(),
            r.path.name(),
            r.bandwidth
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Collective sweep
// ---------------------------------------------------------------------------

/// One collective sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveRow {
    pub op: CollectiveOp,
    pub world_size: usize,
    pub scenario: Scenario,
    /// Bus bandwidth; `None` for degenerate (zero-duration) runs.
    pub bandwidth: Option<f64>,
}

/// Per-rank element count for one sweep cell, aligned down to the world
/// size for ops that shard.
fn sweep_elements(op: CollectiveOp, bytes_per_rank: u64, world: usize) -> usize {
    let base = (bytes_per_rank as usize / DType::F32.width()).max(1);
    match op {
        CollectiveOp::ReduceScatter | CollectiveOp::AllToAll => {
            ((base / world) * world).max(world)
        }
        _ => base,
    }
}

fn sweep_spec_for(op: CollectiveOp) -> CollectiveSpec {
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

/// Independent typed oracle for the sweep self-check (plain f32 arithmetic,
/// no kernel dispatch).
fn oracle_f32(op: CollectiveOp, inputs: &[Vec<f32>], root: usize) -> Vec<Vec<f32>> {
    let world = inputs.len();
    let fold = || {
        let mut acc = inputs[0].clone();
        for input in &inputs[1..] {
            for (a, v) in acc.iter_mut().zip(input) {
                *a += v;
            }
        }
        acc
    };
    match op {
        CollectiveOp::AllReduce => vec![fold(); world],
        CollectiveOp::AllGather => {
            let concat: Vec<f32> = inputs.concat();
            vec![concat; world]
        }
        CollectiveOp::ReduceScatter => {
            let combined = fold();
            let shard = combined.len() / world;
            (0..world).map(|i| combined[i * shard..(i + 1) * shard].to_vec()).collect()
        }
        CollectiveOp::Reduce => {
            let combined = fold();
            (0..world).map(|i| if i == root { combined.clone() } else { Vec::new() }).collect()
        }
        CollectiveOp::Broadcast => vec![inputs[root].clone(); world],
        CollectiveOp::AllToAll => {
            let block = inputs[0].len() / world;
            (0..world)
                .map(|i| {
                    let mut out = Vec::with_capacity(inputs[0].len());
                    for input in inputs {
                        out.extend_from_slice(&input[i * block..(i + 1) * block]);
                    }
                    out
                })
                .collect()
        }
    }
}

fn run_collective_cell(
    registry: &PlatformRegistry,
    topology: &ClusterTopology,
    spec: &SweepSpec,
    op: CollectiveOp,
    world: usize,
) -> Result<CollectiveRow, SweepError> {
    let placements = spec.scenario.placements(topology, world)?;
    let mut comm = Communicator::new(topology, &placements);
    let mut network = Network::new(topology);
    let elements = sweep_elements(op, spec.sizes[0], world);
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(
        spec.seed,
        &[1, op as u64, world as u64, spec.scenario as u64],
    ));
    let typed: Vec<Vec<f32>> = (0..world)
        .map(|_| (0..elements).map(|_| rng.gen_range(-1.0e3f32..1.0e3)).collect())
        .collect();
    let inputs: Vec<Vec<u8>> = typed.iter().map(|v| encode_f32(v)).collect();
    let cspec = sweep_spec_for(op);
    let (outputs, report): (Vec<Vec<u8>>, CollectiveReport) =
        run_collective(registry, &mut network, &mut comm, &cspec, &inputs)?;
    let expect = oracle_f32(op, &typed, 0);
    let got: Vec<Vec<f32>> = outputs.iter().map(|o| decode_f32(o)).collect();
    if got != expect {
        return Err(SweepError::SelfCheckFailed {
            context: format!("{op} world {world} {}", spec.scenario.name()),
        });
    }
    Ok(CollectiveRow {
        op,
        world_size: world,
        scenario: spec.scenario,
        bandwidth: report.bus_bandwidth,
    })
}

/// Run the collective sweep: every (op, world size) cell self-checks its
/// payloads against the typed oracle, then reports bus bandwidth. Cells run
/// in parallel when the `parallel` feature is on; rows are sorted before
/// serialization either way.
pub fn run_collective_sweep(
    topology: &ClusterTopology,
    spec: &SweepSpec,
) -> Result<Vec<CollectiveRow>, SweepError> {
    spec.validate()?;
    let registry = PlatformRegistry::standard();
    registry.set_tracing(false);
    let cells: Vec<(CollectiveOp, usize)> = spec
        .ops
        .iter()
        .flat_map(|&op| spec.world_sizes.iter().map(move |&w| (op, w)))
        .collect();
    let results: Vec<Result<CollectiveRow, SweepError>> = parallel::map_collect(
        &cells,
        |&(op, world)| run_collective_cell(&registry, topology, spec, op, world),
    );
    let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| (a.op.name(), a.world_size).cmp(&(b.op.name(), b.world_size)));
    Ok(rows)
}

/// Serialize collective rows as CSV (`op,world_size,scenario,bandwidth`);
/// degenerate cells print `degenerate`.
pub fn collective_csv(rows: &[CollectiveRow]) -> String {
    let mut out = String::from("op,world_size,scenario,bandwidth\n");
    for r in rows {
        let cell = match r.bandwidth {
            Some(b) => b.to_string(),
            None => "degenerate".into(),
        };
        out.push_str(&format!("{},{},{},{}\n", r.op.name(), r.world_size, r.scenario.name(), cell));
    }
    out
}

// ---------------------------------------------------------------------------
// Training simulation
// ---------------------------------------------------------------------------

/// Metrics of one simulated training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: String,
    pub stage: ZeroStage,
    pub scenario: Scenario,
    pub balanced: bool,
    /// Tokens per second of the requested configuration.
    pub throughput: f64,
    /// Requested configuration over the uniform-split baseline.
    pub speedup_vs_uniform: f64,
    /// Heterogeneous throughput over the sum of the two single-vendor
    /// runs; only defined for the `het` scenario.
    pub efficiency: Option<f64>,
    /// Virtual seconds spent profiling speeds before balancing.
    pub profiling_overhead: f64,
}

/// Run one training simulation: throughput of the requested configuration,
/// its speedup over the uniform split, profiling overhead, and (for the
/// heterogeneous scenario) efficiency against the single-vendor runs.
pub fn run_train_sim(
    topology: &ClusterTopology,
    model_name: &str,
    model: &ModelDesc,
    stage: ZeroStage,
    scenario: Scenario,
    balanced: bool,
    warmup_steps: usize,
) -> Result<TrainReport, SweepError> {
    let full = |sc: Scenario| -> Result<(Communicator, usize), SweepError> {
        let all = match sc {
            Scenario::HomoA => Scenario::vendor_devices(topology, Platform::CudaLike),
            Scenario::HomoB => Scenario::vendor_devices(topology, Platform::HipLike),
            Scenario::Het => (0..topology.node_count())
                .flat_map(|n| (0..topology.node(n).device_count).map(move |d| (n, d)))
                .collect(),
        };
        if all.is_empty() {
            return Err(SweepError::ScenarioUnavailable {
                scenario: sc.name(),
                reason: "no devices of the requested vendor".into(),
            });
        }
        let world = all.len();
        Ok((Communicator::new(topology, &all), world))
    };

    let throughput_of = |sc: Scenario, balance: bool| -> Result<f64, SweepError> {
        let (comm, world) = full(sc)?;
        let schedule = ZeroSchedule::for_stage(stage, *model, world);
        let assignment = if balance {
            assign_microbatches(model.batch_b, &comm.speeds(topology))?
        } else {
            uniform_assignment(model.batch_b, world)?
        };
        Ok(simulate_step(&assignment, &schedule, &comm, topology)?.throughput)
    };

    let requested = throughput_of(scenario, balanced)?;
    let uniform = throughput_of(scenario, false)?;
    let efficiency = if scenario == Scenario::Het
        && !Scenario::vendor_devices(topology, Platform::CudaLike).is_empty()
        && !Scenario::vendor_devices(topology, Platform::HipLike).is_empty()
    {
        let a = throughput_of(Scenario::HomoA, balanced)?;
        let b = throughput_of(Scenario::HomoB, balanced)?;
        Some(requested / (a + b))
    } else {
        None
    };
    let profiling_overhead = simulate_profiling(model, topology, warmup_steps).profiling_duration;
    Ok(TrainReport {
        model: model_name.to_string(),
        stage,
        scenario,
        balanced,
        throughput: requested,
        speedup_vs_uniform: requested / uniform,
        efficiency,
        profiling_overhead,
    })
}

/// Serialize one training report as CSV.
pub fn train_csv(report: &TrainReport) -> String {
    let mut out = String::from(
        "model,zero_stage,scenario,balance,throughput,speedup_vs_uniform,efficiency,profiling_overhead\n",
    );
    let eff = report.efficiency.map(|e| e.to_string()).unwrap_or_default();
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{}\n",
        report.model,
        report.stage.name(),
        report.scenario.name(),
        if report.balanced { "on" } else { "off" },
        report.throughput,
        report.speedup_vs_uniform,
        eff,
        report.profiling_overhead
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes_double_from_one_kib_to_one_gib() {
        let sizes = default_p2p_sizes();
        assert_eq!(sizes.len(), 21);
        assert_eq!(sizes[0], 1024);
        assert_eq!(*sizes.last().unwrap(), 1 << 30);
        assert!(sizes.windows(2).all(|w| w[1] == 2 * w[0]));
    }

    #[test]
    fn scenario_placements_match_the_mixtures() {
        let topo = ClusterTopology::builtin();
        assert_eq!(
            Scenario::HomoA.placements(&topo, 8).unwrap(),
            (0..2).flat_map(|n| (0..4).map(move |d| (n, d))).collect::<Vec<_>>()
        );
        let het8 = Scenario::Het.placements(&topo, 8).unwrap();
        let cuda = het8.iter().filter(|&&(n, _)| n < 2).count();
        assert_eq!(cuda, 4, "half the heterogeneous ranks are cuda-like");
        assert!(Scenario::HomoA.placements(&topo, 9).is_err(), "vendor capacity is 8");
    }

    fn small_p2p_spec(scenario: Scenario) -> SweepSpec {
        let mut spec = SweepSpec::p2p(scenario);
        spec.sizes = vec![1 << 10, 1 << 14, 1 << 20];
        spec
    }

    #[test]
    fn p2p_sweep_reports_rdma_and_staged_rows() {
        let topo = ClusterTopology::builtin();
        let rows = run_p2p_sweep(&topo, &small_p2p_spec(Scenario::Het)).unwrap();
        assert_eq!(rows.len(), 6);
        for pair in rows.chunks(2) {
            assert_eq!(pair[0].path, PathKind::Rdma);
            assert_eq!(pair[1].path, PathKind::Staged);
            assert_eq!(pair[0].size, pair[1].size);
            assert!(
                pair[0].bandwidth >= pair[1].bandwidth,
                "rdma never slower than staged at {} bytes",
                pair[0].size
            );
        }
    }

    #[test]
    fn het_p2p_bandwidth_is_the_rowwise_minimum_of_the_homos() {
        let topo = ClusterTopology::builtin();
        let het = run_p2p_sweep(&topo, &small_p2p_spec(Scenario::Het)).unwrap();
        let a = run_p2p_sweep(&topo, &small_p2p_spec(Scenario::HomoA)).unwrap();
        let b = run_p2p_sweep(&topo, &small_p2p_spec(Scenario::HomoB)).unwrap();
        for ((h, ra), rb) in het.iter().zip(&a).zip(&b) {
            if h.path == PathKind::Rdma {
                assert_eq!(h.bandwidth, ra.bandwidth.min(rb.bandwidth), "{} bytes", h.size);
            }
        }
    }

    #[test]
    fn p2p_sweep_is_deterministic() {
        let topo = ClusterTopology::builtin();
        let spec = small_p2p_spec(Scenario::Het);
        let first = p2p_csv(&run_p2p_sweep(&topo, &spec).unwrap());
        let second = p2p_csv(&run_p2p_sweep(&topo, &spec).unwrap());
        assert_eq!(first, second);
        assert!(first.starts_with("size,scenario,path,bandwidth\n"));
    }

    #[test]
    fn decreasing_sizes_are_rejected() {
        let topo = ClusterTopology::builtin();
        let mut spec = SweepSpec::p2p(Scenario::Het);
        spec.sizes = vec![2048, 1024];
        assert!(matches!(
            run_p2p_sweep(&topo, &spec),
            Err(SweepError::InvalidSpec { .. })
        ));
    }

    fn small_coll_spec(scenario: Scenario) -> SweepSpec {
        let mut spec = SweepSpec::collective(scenario);
        spec.sizes = vec![1 << 12];
        spec
    }

    #[test]
    fn collective_sweep_covers_scaled_heterogeneous_worlds() {
        let topo = ClusterTopology::builtin();
        let het = run_collective_sweep(&topo, &small_coll_spec(Scenario::Het)).unwrap();
        let homo = run_collective_sweep(&topo, &small_coll_spec(Scenario::HomoA)).unwrap();
        let het_worlds: Vec<usize> =
            het.iter().filter(|r| r.op == CollectiveOp::AllReduce).map(|r| r.world_size).collect();
        let homo_worlds: Vec<usize> =
            homo.iter().filter(|r| r.op == CollectiveOp::AllReduce).map(|r| r.world_size).collect();
        assert_eq!(het_worlds, vec![8, 12, 16], "het scales past the vendor limit");
        assert_eq!(homo_worlds, vec![2, 4, 8]);
        assert_eq!(het.len(), 18, "six ops x three world sizes");
        for r in &het {
            assert!(r.bandwidth.unwrap() > 0.0);
        }
    }

    #[test]
    fn world_of_one_is_flagged_degenerate() {
        let topo = ClusterTopology::builtin();
        let mut spec = small_coll_spec(Scenario::HomoA);
        spec.ops = vec![CollectiveOp::AllReduce];
        spec.world_sizes = vec![1, 2];
        let rows = run_collective_sweep(&topo, &spec).unwrap();
        assert_eq!(rows[0].bandwidth, None);
        let csv = collective_csv(&rows);
        assert!(csv.contains("all_reduce,1,homoA,degenerate\n"));
        assert!(rows[1].bandwidth.is_some());
    }

    #[test]
    fn collective_sweep_is_deterministic() {
        let topo = ClusterTopology::builtin();
        let mut spec = small_coll_spec(Scenario::Het);
        spec.seed = 42;
        let first = collective_csv(&run_collective_sweep(&topo, &spec).unwrap());
        let second = collective_csv(&run_collective_sweep(&topo, &spec).unwrap());
        assert_eq!(first, second);
    }

    #[test]
    fn het_collective_bandwidth_is_bounded_by_the_faster_homo() {
        let topo = ClusterTopology::builtin();
        let het = run_collective_sweep(&topo, &small_coll_spec(Scenario::Het)).unwrap();
        let a = run_collective_sweep(&topo, &small_coll_spec(Scenario::HomoA)).unwrap();
        let b = run_collective_sweep(&topo, &small_coll_spec(Scenario::HomoB)).unwrap();
        for op in CollectiveOp::ALL {
            let at = |rows: &[CollectiveRow], w: usize| {
                rows.iter()
                    .find(|r| r.op == op && r.world_size == w)
                    .and_then(|r| r.bandwidth)
                    .unwrap()
            };
            // Compare the 8-rank worlds common to all three scenarios.
            let het8 = at(&het, 8);
            let faster = at(&a, 8).max(at(&b, 8));
            assert!(het8 <= faster * (1.0 + 1e-12), "{op}: het {het8} vs faster homo {faster}");
        }
    }

    #[test]
    fn train_sim_reports_the_metric_set() {
        let topo = ClusterTopology::builtin();
        let model = ModelDesc::preset("gpt-125m").unwrap();
        let report = run_train_sim(
            &topo,
            "gpt-125m",
            &model,
            ZeroStage::One,
            Scenario::Het,
            true,
            3,
        )
        .unwrap();
        assert!(report.throughput > 0.0);
        assert!(report.speedup_vs_uniform > 1.0, "balancing helps the mixed cluster");
        let eff = report.efficiency.unwrap();
        assert!(eff > 0.0 && eff <= 1.0, "efficiency {eff}");
        assert!(report.profiling_overhead > 0.0);
        let csv = train_csv(&report);
        assert!(csv.starts_with("model,zero_stage,scenario,balance,"));
        assert!(csv.contains("gpt-125m,1,het,on,"));
    }

    #[test]
    fn unbalanced_train_sim_reports_unit_speedup() {
        let topo = ClusterTopology::builtin();
        let model = ModelDesc::preset("gpt-125m").unwrap();
        let report = run_train_sim(
            &topo,
            "gpt-125m",
            &model,
            ZeroStage::Three,
            Scenario::HomoA,
            false,
            1,
        )
        .unwrap();
        assert_eq!(report.speedup_vs_uniform, 1.0);
        assert_eq!(report.efficiency, None);
    }

    #[test]
    fn cell_seed_depends_on_every_identity_part() {
        let a = cell_seed(7, &[1, 2, 3]);
        assert_eq!(a, cell_seed(7, &[1, 2, 3]));
        assert_ne!(a, cell_seed(8, &[1, 2, 3]));
        assert_ne!(a, cell_seed(7, &[1, 2, 4]));
        assert_ne!(a, cell_seed(7, &[2, 1, 3]));
    }
}
