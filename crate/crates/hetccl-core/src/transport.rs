//! Point-to-point transfers: real payload movement plus virtual-time
//! accounting over the topology's path models.
//!
//! A transfer is a rendezvous: it begins once both endpoints are ready and,
//! for inter-node paths, once both NICs are free in the needed direction.
//! NICs are full-duplex — transmit and receive sides have independent
//! availability — but each direction serializes its flows, so two
//! simultaneous sends out of one node queue behind each other. Durations
//! come exclusively from [`PathModel::time`], which keeps replayed schedules
//! bit-identical.
//!
//! Path choice mirrors a graceful-fallback design: RDMA is used when the
//! caller asks for it and both buffers hold valid registrations on
//! NIC-equipped nodes; otherwise inter-node transfers stage through host
//! memory, and same-node transfers ride the PCIe link directly. RDMA moves
//! bytes without touching either vendor runtime (the NIC DMAs device
//! memory), which is visible in the dispatch trace: staged transfers show
//! `copy_d2h`/`copy_h2d` pairs, RDMA transfers show nothing.

use std::collections::HashMap;

use thiserror::Error;

use crate::memory::{self, DeviceBuffer, MemoryError};
use crate::platform::{Platform, PlatformRegistry};
use crate::topology::{ClusterTopology, NicId, PathKind, TopologyError};

/// One rank's communication endpoint: placement plus a non-decreasing
/// virtual clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    rank: usize,
    node: usize,
    device: u32,
    platform: Platform,
    clock: f64,
}

impl Endpoint {
    pub fn new(rank: usize, node: usize, device: u32, platform: Platform) -> Endpoint {
        Endpoint { rank, node, device, platform, clock: 0.0 }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn device(&self) -> u32 {
        self.device
    }

    pub fn platform(&self) -> Platform {
        self.platform
    }

    /// Current virtual time of this endpoint in seconds.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub(crate) fn advance_to(&mut self, t: f64) {
        assert!(t >= self.clock, "virtual clocks never run backwards");
        self.clock = t;
    }
}

/// Record of one completed transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferReport {
    pub bytes: usize,
    pub path_used: PathKind,
    pub duration: f64,
    pub src_clock_after: f64,
    pub dst_clock_after: f64,
}

/// Observed bandwidth of one transfer in bytes per second.
pub fn measured_bandwidth(report: &TransferReport) -> f64 {
    assert!(report.duration > 0.0, "bandwidth needs a positive duration");
    report.bytes as f64 / report.duration
}

/// Errors from point-to-point transfers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("transfer of {requested} bytes does not fit (src {src_capacity}, dst {dst_capacity}; size must be >= 1)")]
    SizeMismatch { requested: usize, src_capacity: usize, dst_capacity: usize },
    #[error("memory region key does not belong to the NIC serving node '{node}'")]
    InvalidRegion { node: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Shared network state: per-NIC transmit and receive availability clocks.
///
/// Owning one `Network` per simulation run makes NIC contention explicit and
/// the whole run a deterministic function of the issue order.
pub struct Network<'a> {
    topology: &'a ClusterTopology,
    tx_free: HashMap<NicId, f64>,
    rx_free: HashMap<NicId, f64>,
}

impl<'a> Network<'a> {
    pub fn new(topology: &'a ClusterTopology) -> Network<'a> {
        Network { topology, tx_free: HashMap::new(), rx_free: HashMap::new() }
    }

    pub fn topology(&self) -> &'a ClusterTopology {
        self.topology
    }

    /// Clock-only reservation of one transfer: given both endpoints ready at
    /// `ready`, gate on NIC availability (inter-node only), occupy the NICs
    /// for the whole transfer, and return (start, finish).
    pub(crate) fn reserve(
        &mut self,
        src_node: usize,
        dst_node: usize,
        ready: f64,
        duration: f64,
    ) -> (f64, f64) {
        if src_node == dst_node {
            return (ready, ready + duration);
        }
        let src_nic = self.topology.node(src_node).nic.expect("inter-node transfer needs NICs").id;
        let dst_nic = self.topology.node(dst_node).nic.expect("inter-node transfer needs NICs").id;
        let tx = self.tx_free.get(&src_nic).copied().unwrap_or(0.0);
        let rx = self.rx_free.get(&dst_nic).copied().unwrap_or(0.0);
        let start = ready.max(tx).max(rx);
        let finish = start + duration;
        self.tx_free.insert(src_nic, finish);
        self.rx_free.insert(dst_nic, finish);
        (start, finish)
    }

    fn select_path(
        &self,
        src: (&Endpoint, &DeviceBuffer),
        dst: (&Endpoint, &DeviceBuffer),
        prefer_rdma: bool,
    ) -> Result<PathKind, TransportError> {
        if src.0.node == dst.0.node {
            return Ok(PathKind::Intranode);
        }
        if prefer_rdma && src.1.rdma_eligible() && dst.1.rdma_eligible() {
            // An attempted RDMA with a key minted against some other NIC is
            // a hard error, not a fallback: the verbs operation would fault.
            for (endpoint, buffer) in [&src, &dst] {
                let node = self.topology.node(endpoint.node);
                let key = buffer.registration().expect("eligibility implies registration");
                match node.nic {
                    Some(nic) if nic.id == key.nic() => {}
                    _ => return Err(TransportError::InvalidRegion { node: node.name.clone() }),
                }
            }
            return Ok(PathKind::Rdma);
        }
        Ok(PathKind::Staged)
    }

    /// Move the first `size` bytes of `src`'s buffer into `dst`'s, advancing
    /// both endpoint clocks and the NIC availability clocks.
    ///
    /// The destination prefix equals the source prefix afterwards regardless
    /// of the path taken or the platform pair.
    pub fn send_recv(
        &mut self,
        registry: &PlatformRegistry,
        src: (&mut Endpoint, &DeviceBuffer),
        dst: (&mut Endpoint, &mut DeviceBuffer),
        size: usize,
        prefer_rdma: bool,
    ) -> Result<TransferReport, TransportError> {
        let (src_ep, src_buf) = src;
        let (dst_ep, dst_buf) = dst;
        assert!(
            !(src_ep.node == dst_ep.node && src_ep.device == dst_ep.device),
            "transfer endpoints must be distinct"
        );
        assert_eq!(src_ep.node, src_buf.node(), "source buffer lives at its endpoint");
        assert_eq!(dst_ep.node, dst_buf.node(), "destination buffer lives at its endpoint");
        assert_eq!(src_ep.platform, src_buf.platform(), "source platform tags agree");
        assert_eq!(dst_ep.platform, dst_buf.platform(), "destination platform tags agree");
        if size == 0 || size > src_buf.size() || size > dst_buf.size() {
            return Err(TransportError::SizeMismatch {
                requested: size,
                src_capacity: src_buf.size(),
                dst_capacity: dst_buf.size(),
            });
        }

        let path = self.select_path((src_ep, src_buf), (dst_ep, dst_buf), prefer_rdma)?;
        let model = self.topology.path_model(
            (src_ep.node, src_ep.device),
            (dst_ep.node, dst_ep.device),
            path,
        )?;
        let duration = model.time(size as u64);
        let ready = src_ep.clock.max(dst_ep.clock);
        let (_start, finish) = self.reserve(src_ep.node, dst_ep.node, ready, duration);

        match path {
            PathKind::Intranode => {
                // Same node means same vendor; one runtime moves the bytes.
                let mut staged = src_buf.payload()[..size].to_vec();
                registry.dispatch(
                    src_ep.platform,
                    crate::platform::CallArgs::CopyD2d {
                        src: &staged,
                        dst: &mut dst_buf.payload_mut()[..size],
                    },
                )
                .map_err(|e| match e {
                    crate::platform::PlatformError::UnregisteredPlatform { platform } => {
                        TransportError::Memory(MemoryError::UnregisteredPlatform { platform })
                    }
                    other => unreachable!("copy dispatch cannot fail with {other:?}"),
                })?;
                staged.clear();
            }
            PathKind::Rdma => {
                // The NIC DMAs device memory directly on both ends; neither
                // vendor runtime is invoked, so the trace stays silent here.
                dst_buf.payload_mut()[..size].copy_from_slice(&src_buf.payload()[..size]);
            }
            PathKind::Staged => {
                let mut src_host = memory::host_alloc(src_ep.node, size)?;
                memory::copy_d2h(registry, self.topology, src_buf, &mut src_host, size)?;
                let mut dst_host = memory::host_alloc(dst_ep.node, size)?;
                dst_host.payload_mut().copy_from_slice(src_host.payload());
                memory::copy_h2d(registry, self.topology, &dst_host, dst_buf, size)?;
            }
        }

        src_ep.advance_to(finish);
        dst_ep.advance_to(finish);
        Ok(TransferReport {
            bytes: size,
            path_used: path,
            duration,
            src_clock_after: src_ep.clock,
            dst_clock_after: dst_ep.clock,
        })
    }
}
