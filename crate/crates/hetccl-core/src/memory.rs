//! Device and host buffer management: platform-tagged allocations, RDMA
//! region registration against a node's NIC, and priced host↔device copies.
//!
//! Buffers carry real payload bytes. Allocation and every copy direction are
//! routed through [`PlatformRegistry::dispatch`], so the dispatch trace shows
//! exactly which vendor's runtime touched which buffer. Payloads are untyped
//! byte sequences; element types are imposed by the collective layer, and
//! bytes mean the same thing on both vendors, so no translation happens at
//! any copy boundary.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::platform::{CallArgs, CallResult, Platform, PlatformError, PlatformRegistry};
use crate::topology::{ClusterTopology, NicId};

static NEXT_BUFFER_ID: AtomicU64 = AtomicU64::new(1);
static NEXT_REGION_KEY: AtomicU64 = AtomicU64::new(1);

/// Proof that a buffer is registered for RDMA through one specific NIC.
/// Valid only for transfers through that NIC's node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionKey {
    key: u64,
    nic: NicId,
}

impl RegionKey {
    /// The NIC this registration is bound to.
    pub fn nic(&self) -> NicId {
        self.nic
    }
}

/// A device allocation: platform- and node-tagged payload bytes.
///
/// Platform and node are fixed at allocation; the payload length always
/// equals the allocation size.
#[derive(Debug)]
pub struct DeviceBuffer {
    id: u64,
    platform: Platform,
    node: usize,
    payload: Vec<u8>,
    registered: Option<RegionKey>,
}

impl DeviceBuffer {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn platform(&self) -> Platform {
        self.platform
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn size(&self) -> usize {
        self.payload.len()
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn payload_mut(&mut self) -> &mut [u8] {
        &mut self.payload
    }

    /// The RDMA registration, if [`register_region`] has been called.
    pub fn registration(&self) -> Option<RegionKey> {
        self.registered
    }

    /// Whether this buffer can be the endpoint of an RDMA transfer.
    pub fn rdma_eligible(&self) -> bool {
        self.registered.is_some()
    }
}

/// A host staging allocation on one node.
#[derive(Debug)]
pub struct HostBuffer {
    id: u64,
    node: usize,
    payload: Vec<u8>,
}

impl HostBuffer {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn size(&self) -> usize {
        self.payload.len()
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn payload_mut(&mut self) -> &mut [u8] {
        &mut self.payload
    }
}

/// Errors from allocation, registration, and copies.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("allocation size must be at least 1 byte")]
    ZeroSize,
    #[error("no backend table registered for {platform}")]
    UnregisteredPlatform { platform: Platform },
    #[error("node '{node}' has no NIC; cannot register memory for RDMA")]
    NoNic { node: String },
    #[error("device-to-device copy between {src} and {dst} buffers; cross-vendor moves go through transport")]
    CrossPlatformCopy { src: Platform, dst: Platform },
    #[error("copy of {requested} bytes does not fit (src {src_capacity}, dst {dst_capacity}; size must be >= 1)")]
    SizeMismatch { requested: usize, src_capacity: usize, dst_capacity: usize },
}

fn map_dispatch(err: PlatformError) -> MemoryError {
    match err {
        PlatformError::UnregisteredPlatform { platform } => {
            MemoryError::UnregisteredPlatform { platform }
        }
        other => unreachable!("dispatch of a fixed call cannot fail with {other:?}"),
    }
}

/// Allocate a zero-initialized device buffer on `node` through `platform`'s
/// backend.
pub fn alloc(
    registry: &PlatformRegistry,
    platform: Platform,
    node: usize,
    size: usize,
) -> Result<DeviceBuffer, MemoryError> {
    if size == 0 {
        return Err(MemoryError::ZeroSize);
    }
    let result = registry
        .dispatch(platform, CallArgs::Alloc { size: size as u64 })
        .map_err(map_dispatch)?;
    let payload = match result {
        CallResult::Bytes(bytes) => bytes,
        other => unreachable!("alloc backend must return bytes, got {other:?}"),
    };
    assert_eq!(payload.len(), size, "backend allocation honored the requested size");
    Ok(DeviceBuffer {
        id: NEXT_BUFFER_ID.fetch_add(1, Ordering::Relaxed),
        platform,
        node,
        payload,
        registered: None,
    })
}

/// Allocate a zero-initialized host staging buffer on `node`.
pub fn host_alloc(node: usize, size: usize) -> Result<HostBuffer, MemoryError> {
    if size == 0 {
        return Err(MemoryError::ZeroSize);
    }
    Ok(HostBuffer {
        id: NEXT_BUFFER_ID.fetch_add(1, Ordering::Relaxed),
        node,
        payload: vec![0u8; size],
    })
}

/// Register a device buffer with its node's NIC, making it RDMA-eligible
/// for the buffer's lifetime. Idempotent: repeat calls return the same key.
pub fn register_region(
    topology: &ClusterTopology,
    buffer: &mut DeviceBuffer,
) -> Result<RegionKey, MemoryError> {
    if let Some(existing) = buffer.registered {
        return Ok(existing);
    }
    let node = topology.node(buffer.node);
    let nic = node.nic.ok_or_else(|| MemoryError::NoNic { node: node.name.clone() })?;
    let key = RegionKey { key: NEXT_REGION_KEY.fetch_add(1, Ordering::Relaxed), nic: nic.id };
    buffer.registered = Some(key);
    Ok(key)
}

fn check_extent(size: usize, src_capacity: usize, dst_capacity: usize) -> Result<(), MemoryError> {
    if size == 0 || size > src_capacity || size > dst_capacity {
        return Err(MemoryError::SizeMismatch { requested: size, src_capacity, dst_capacity });
    }
    Ok(())
}

/// Copy `size` bytes host→device through the device platform's backend.
/// Returns the virtual duration of one hop over the node's host link.
pub fn copy_h2d(
    registry: &PlatformRegistry,
    topology: &ClusterTopology,
    src: &HostBuffer,
    dst: &mut DeviceBuffer,
    size: usize,
) -> Result<f64, MemoryError> {
    check_extent(size, src.size(), dst.size())?;
    registry
        .dispatch(
            dst.platform,
            CallArgs::CopyH2d { src: &src.payload[..size], dst: &mut dst.payload[..size] },
        )
        .map_err(map_dispatch)?;
    Ok(topology.node(dst.node).pcie.time(size as u64))
}

/// Copy `size` bytes device→host through the device platform's backend.
/// Returns the virtual duration of one hop over the node's host link.
pub fn copy_d2h(
    registry: &PlatformRegistry,
    topology: &ClusterTopology,
    src: &DeviceBuffer,
    dst: &mut HostBuffer,
    size: usize,
) -> Result<f64, MemoryError> {
    check_extent(size, src.size(), dst.size())?;
    registry
        .dispatch(
            src.platform,
            CallArgs::CopyD2h { src: &src.payload[..size], dst: &mut dst.payload[..size] },
        )
        .map_err(map_dispatch)?;
    Ok(topology.node(src.node).pcie.time(size as u64))
}

/// Copy `size` bytes between two device buffers on the same node and
/// platform. Cross-vendor device pairs must go through transport instead.
pub fn copy_d2d(
    registry: &PlatformRegistry,
    topology: &ClusterTopology,
    src: &DeviceBuffer,
    dst: &mut DeviceBuffer,
    size: usize,
) -> Result<f64, MemoryError> {
    check_extent(size, src.size(), dst.size())?;
    if src.platform != dst.platform {
        return Err(MemoryError::CrossPlatformCopy { src: src.platform, dst: dst.platform });
    }
    assert_eq!(src.node, dst.node, "device-to-device copies stay on one node");
    registry
        .dispatch(
            src.platform,
            CallArgs::CopyD2d { src: &src.payload[..size], dst: &mut dst.payload[..size] },
        )
        .map_err(map_dispatch)?;
    Ok(topology.node(src.node).pcie.time(size as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::LinkModel;
    use proptest::prelude::*;

    fn setup() -> (PlatformRegistry, ClusterTopology) {
        (PlatformRegistry::standard(), ClusterTopology::builtin())
    }

    fn nicless_topology() -> ClusterTopology {
        ClusterTopology::from_json(
            r#"{"nodes":[{"id":"bare","platform":"hip-like","devices":1,
                 "speed_tokens_per_s":1.0,"pcie":"gen4","nic":null}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn alloc_returns_zeroed_tagged_buffer() {
        let (reg, _) = setup();
        let buf = alloc(&reg, Platform::CudaLike, 0, 16).unwrap();
        assert_eq!(buf.payload(), &[0u8; 16]);
        assert_eq!(buf.platform(), Platform::CudaLike);
        assert_eq!(buf.node(), 0);
        assert_eq!(buf.size(), 16);
        assert!(!buf.rdma_eligible());
    }

    #[test]
    fn zero_size_alloc_is_rejected() {
        let (reg, _) = setup();
        assert_eq!(alloc(&reg, Platform::HipLike, 2, 0).unwrap_err(), MemoryError::ZeroSize);
        assert_eq!(host_alloc(0, 0).unwrap_err(), MemoryError::ZeroSize);
    }

    #[test]
    fn alloc_on_unregistered_platform_fails() {
        let mut reg = PlatformRegistry::new();
        reg.register_backend(crate::platform::BackendTable::standard(Platform::CudaLike, 1))
            .unwrap();
        assert_eq!(
            alloc(&reg, Platform::HipLike, 0, 8).unwrap_err(),
            MemoryError::UnregisteredPlatform { platform: Platform::HipLike }
        );
    }

    #[test]
    fn buffer_ids_are_unique() {
        let (reg, _) = setup();
        let a = alloc(&reg, Platform::CudaLike, 0, 4).unwrap();
        let b = alloc(&reg, Platform::CudaLike, 0, 4).unwrap();
        let h = host_alloc(0, 4).unwrap();
        assert_ne!(a.id(), b.id());
        assert_ne!(a.id(), h.id());
        assert_ne!(b.id(), h.id());
    }

    #[test]
    fn register_binds_key_to_the_nodes_nic() {
        let (reg, topo) = setup();
        let mut buf = alloc(&reg, Platform::HipLike, 2, 32).unwrap();
        let key = register_region(&topo, &mut buf).unwrap();
        assert_eq!(key.nic(), topo.node(2).nic.unwrap().id);
        assert!(buf.rdma_eligible());
        assert_eq!(buf.registration(), Some(key));
    }

    #[test]
    fn register_without_nic_fails() {
        let (reg, _) = setup();
        let topo = nicless_topology();
        let mut buf = alloc(&reg, Platform::HipLike, 0, 32).unwrap();
        assert_eq!(
            register_region(&topo, &mut buf).unwrap_err(),
            MemoryError::NoNic { node: "bare".into() }
        );
        assert!(!buf.rdma_eligible());
    }

    #[test]
    fn registration_is_idempotent_and_permanent() {
        let (reg, topo) = setup();
        let mut buf = alloc(&reg, Platform::CudaLike, 1, 8).unwrap();
        let first = register_region(&topo, &mut buf).unwrap();
        let second = register_region(&topo, &mut buf).unwrap();
        assert_eq!(first, second);
        assert!(buf.rdma_eligible());
    }

    #[test]
    fn h2d_moves_bytes_and_prices_one_pcie_hop() {
        let (reg, topo) = setup();
        let mut host = host_alloc(0, 8).unwrap();
        host.payload_mut().copy_from_slice(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let mut dev = alloc(&reg, Platform::CudaLike, 0, 8).unwrap();
        let duration = copy_h2d(&reg, &topo, &host, &mut dev, 8).unwrap();
        assert_eq!(dev.payload(), &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(duration, LinkModel::GEN3.alpha + 8.0 / LinkModel::GEN3.beta);
    }

    #[test]
    fn cross_platform_d2d_is_rejected() {
        let (reg, topo) = setup();
        let cuda = alloc(&reg, Platform::CudaLike, 0, 8).unwrap();
        let mut hip = alloc(&reg, Platform::HipLike, 0, 8).unwrap();
        assert_eq!(
            copy_d2d(&reg, &topo, &cuda, &mut hip, 8).unwrap_err(),
            MemoryError::CrossPlatformCopy { src: Platform::CudaLike, dst: Platform::HipLike }
        );
    }

    #[test]
    fn zero_extent_copy_is_a_size_mismatch() {
        let (reg, topo) = setup();
        let dev = alloc(&reg, Platform::CudaLike, 0, 8).unwrap();
        let mut host = host_alloc(0, 8).unwrap();
        assert_eq!(
            copy_d2h(&reg, &topo, &dev, &mut host, 0).unwrap_err(),
            MemoryError::SizeMismatch { requested: 0, src_capacity: 8, dst_capacity: 8 }
        );
    }

    #[test]
    fn oversized_copy_is_a_size_mismatch() {
        let (reg, topo) = setup();
        let dev = alloc(&reg, Platform::CudaLike, 0, 8).unwrap();
        let mut host = host_alloc(0, 4).unwrap();
        assert_eq!(
            copy_d2h(&reg, &topo, &dev, &mut host, 8).unwrap_err(),
            MemoryError::SizeMismatch { requested: 8, src_capacity: 8, dst_capacity: 4 }
        );
    }

    #[test]
    fn d2d_same_platform_copies_and_prices_pcie() {
        let (reg, topo) = setup();
        let mut a = alloc(&reg, Platform::HipLike, 2, 8).unwrap();
        a.payload_mut().copy_from_slice(b"abcdefgh");
        let mut b = alloc(&reg, Platform::HipLike, 2, 8).unwrap();
        let duration = copy_d2d(&reg, &topo, &a, &mut b, 8).unwrap();
        assert_eq!(b.payload(), b"abcdefgh");
        assert_eq!(duration, topo.node(2).pcie.time(8));
    }

    proptest! {
        /// Round-tripping host→device→host is the identity on the payload,
        /// and platform tags survive the copies.
        #[test]
        fn h2d_then_d2h_is_identity(data in proptest::collection::vec(any::<u8>(), 1..512)) {
            let (reg, topo) = setup();
            let size = data.len();
            let mut up = host_alloc(0, size).unwrap();
            up.payload_mut().copy_from_slice(&data);
            let mut dev = alloc(&reg, Platform::HipLike, 2, size).unwrap();
            let mut down = host_alloc(2, size).unwrap();
            copy_h2d(&reg, &topo, &up, &mut dev, size).unwrap();
            copy_d2h(&reg, &topo, &dev, &mut down, size).unwrap();
            prop_assert_eq!(down.payload(), &data[..]);
            prop_assert_eq!(dev.platform(), Platform::HipLike);
        }
    }
}
