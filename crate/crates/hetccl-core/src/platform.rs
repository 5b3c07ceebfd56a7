//! Platform abstraction layer: vendor identities, per-vendor backend call
//! tables, reduction-kernel libraries, and the dispatch point that routes
//! every runtime call to the owning vendor's implementation.
//!
//! The registry mirrors how a cross-vendor runtime shim works in practice:
//! each vendor runtime is wrapped in a table of implementation handles keyed
//! by an abstract call name, the table is validated for completeness when it
//! is registered (never at dispatch time), and everything downstream —
//! allocation, copies, kernel launches — goes through [`PlatformRegistry::dispatch`]
//! so a trace can prove that no call ever crossed into the wrong vendor's
//! implementation.
//!
//! Reduction kernels are element-wise combiners over little-endian typed
//! payloads. Both vendors' kernels apply operands in the same left-to-right
//! element order, so cross-platform results are bit-exact; that property is
//! what makes the collective layer's oracle tests exact even for floats.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::parallel::zip_chunks_mut;

// ---------------------------------------------------------------------------
// Vendor identity
// ---------------------------------------------------------------------------

/// Vendor identity of a device runtime. One platform is active per node; a
/// node never mixes vendors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Platform {
    /// NVIDIA-style runtime (CUDA analog).
    CudaLike,
    /// AMD-style runtime (HIP analog).
    HipLike,
}

impl Platform {
    pub const ALL: [Platform; 2] = [Platform::CudaLike, Platform::HipLike];

    /// Name used in config files and CSV output.
    pub fn config_name(&self) -> &'static str {
        match self {
            Platform::CudaLike => "cuda-like",
            Platform::HipLike => "hip-like",
        }
    }

    /// Parse the config-file spelling.
    pub fn parse(name: &str) -> Option<Platform> {
        Platform::ALL.iter().copied().find(|p| p.config_name() == name)
    }
}

impl std::fmt::Display for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.config_name())
    }
}

// ---------------------------------------------------------------------------
// Abstract call surface
// ---------------------------------------------------------------------------

/// The closed set of runtime calls every backend table must implement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbstractCall {
    Alloc,
    Free,
    CopyH2d,
    CopyD2h,
    CopyD2d,
    Memset,
    StreamCreate,
    StreamSync,
    EventRecord,
    EventQuery,
    LaunchKernel,
    DeviceCount,
}

impl AbstractCall {
    pub const ALL: [AbstractCall; 12] = [
        AbstractCall::Alloc,
        AbstractCall::Free,
        AbstractCall::CopyH2d,
        AbstractCall::CopyD2h,
        AbstractCall::CopyD2d,
        AbstractCall::Memset,
        AbstractCall::StreamCreate,
        AbstractCall::StreamSync,
        AbstractCall::EventRecord,
        AbstractCall::EventQuery,
        AbstractCall::LaunchKernel,
        AbstractCall::DeviceCount,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AbstractCall::Alloc => "alloc",
            AbstractCall::Free => "free",
            AbstractCall::CopyH2d => "copy_h2d",
            AbstractCall::CopyD2h => "copy_d2h",
            AbstractCall::CopyD2d => "copy_d2d",
            AbstractCall::Memset => "memset",
            AbstractCall::StreamCreate => "stream_create",
            AbstractCall::StreamSync => "stream_sync",
            AbstractCall::EventRecord => "event_record",
            AbstractCall::EventQuery => "event_query",
            AbstractCall::LaunchKernel => "launch_kernel",
            AbstractCall::DeviceCount => "device_count",
        }
    }

    /// Parse a call name; `None` for anything outside the declared surface.
    pub fn parse(name: &str) -> Option<AbstractCall> {
        AbstractCall::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for AbstractCall {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Typed payloads and reduction kernels
// ---------------------------------------------------------------------------

/// Element type of a typed payload; bytes are always little-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
    I32,
}

impl DType {
    /// Element width in bytes.
    pub fn width(&self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::I32 => "i32",
        }
    }
}

/// Named reduction kernels shipped in every platform's kernel library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelName {
    ReduceSum,
    ReduceMin,
    ReduceMax,
}

impl KernelName {
    pub const ALL: [KernelName; 3] =
        [KernelName::ReduceSum, KernelName::ReduceMin, KernelName::ReduceMax];

    pub fn name(&self) -> &'static str {
        match self {
            KernelName::ReduceSum => "reduce_sum",
            KernelName::ReduceMin => "reduce_min",
            KernelName::ReduceMax => "reduce_max",
        }
    }
}

trait Elem: Copy + Send + Sync {
    const WIDTH: usize;
    fn load(bytes: &[u8]) -> Self;
    fn store(self, bytes: &mut [u8]);
    fn sum(a: Self, b: Self) -> Self;
    fn min(a: Self, b: Self) -> Self;
    fn max(a: Self, b: Self) -> Self;
}

impl Elem for f32 {
    const WIDTH: usize = 4;
    fn load(b: &[u8]) -> Self {
        f32::from_le_bytes(b.try_into().unwrap())
    }
    fn store(self, b: &mut [u8]) {
        b.copy_from_slice(&self.to_le_bytes());
    }
    fn sum(a: Self, b: Self) -> Self {
        a + b
    }
    fn min(a: Self, b: Self) -> Self {
        a.min(b)
    }
    fn max(a: Self, b: Self) -> Self {
        a.max(b)
    }
}

impl Elem for f64 {
    const WIDTH: usize = 8;
    fn load(b: &[u8]) -> Self {
        f64::from_le_bytes(b.try_into().unwrap())
    }
    fn store(self, b: &mut [u8]) {
        b.copy_from_slice(&self.to_le_bytes());
    }
    fn sum(a: Self, b: Self) -> Self {
        a + b
    }
    fn min(a: Self, b: Self) -> Self {
        a.min(b)
    }
    fn max(a: Self, b: Self) -> Self {
        a.max(b)
    }
}

impl Elem for i32 {
    const WIDTH: usize = 4;
    fn load(b: &[u8]) -> Self {
        i32::from_le_bytes(b.try_into().unwrap())
    }
    fn store(self, b: &mut [u8]) {
        b.copy_from_slice(&self.to_le_bytes());
    }
    // Integer sum wraps on overflow so the result is order-independent and
    // identical on every platform.
    fn sum(a: Self, b: Self) -> Self {
        a.wrapping_add(b)
    }
    fn min(a: Self, b: Self) -> Self {
        a.min(b)
    }
    fn max(a: Self, b: Self) -> Self {
        a.max(b)
    }
}

fn combine_typed<T: Elem>(kernel: KernelName, acc: &mut [u8], operand: &[u8]) {
    // Chunk size for the parallel fan-out; a multiple of every element width.
    const BLOCK: usize = 1 << 14;
    let op: fn(T, T) -> T = match kernel {
        KernelName::ReduceSum => T::sum,
        KernelName::ReduceMin => T::min,
        KernelName::ReduceMax => T::max,
    };
    zip_chunks_mut(acc, operand, BLOCK, |a, o| {
        for (ea, eo) in a.chunks_exact_mut(T::WIDTH).zip(o.chunks_exact(T::WIDTH)) {
            op(T::load(ea), T::load(eo)).store(ea);
        }
    });
}

/// Element-wise combine of `operand` into `acc` (`acc[i] = op(acc[i], operand[i])`).
///
/// Operands are applied strictly left-to-right by every caller, which is why
/// the same sequence of combines yields bit-identical bytes on both
/// platforms. Float min/max follow IEEE `min`/`max` semantics; integer sum
/// wraps.
fn combine_elementwise(kernel: KernelName, dtype: DType, acc: &mut [u8], operand: &[u8]) {
    assert_eq!(acc.len(), operand.len(), "combiner operand length mismatch");
    assert_eq!(acc.len() % dtype.width(), 0, "payload not a whole number of elements");
    match dtype {
        DType::F32 => combine_typed::<f32>(kernel, acc, operand),
        DType::F64 => combine_typed::<f64>(kernel, acc, operand),
        DType::I32 => combine_typed::<i32>(kernel, acc, operand),
    }
}

// ---------------------------------------------------------------------------
// Backend tables
// ---------------------------------------------------------------------------

/// Arguments of one abstract call. Slices borrow the caller's buffers so the
/// backend implementations move bytes in place.
pub enum CallArgs<'a> {
    Alloc { size: u64 },
    Free { buffer: u64 },
    CopyH2d { src: &'a [u8], dst: &'a mut [u8] },
    CopyD2h { src: &'a [u8], dst: &'a mut [u8] },
    CopyD2d { src: &'a [u8], dst: &'a mut [u8] },
    Memset { dst: &'a mut [u8], value: u8 },
    StreamCreate,
    StreamSync { stream: u64 },
    EventRecord { stream: u64 },
    EventQuery { event: u64 },
    LaunchKernel { kernel: KernelName, dtype: DType, acc: &'a mut [u8], operand: &'a [u8] },
    DeviceCount,
}

impl CallArgs<'_> {
    /// The abstract call these arguments belong to.
    pub fn call(&self) -> AbstractCall {
        match self {
            CallArgs::Alloc { .. } => AbstractCall::Alloc,
            CallArgs::Free { .. } => AbstractCall::Free,
            CallArgs::CopyH2d { .. } => AbstractCall::CopyH2d,
            CallArgs::CopyD2h { .. } => AbstractCall::CopyD2h,
            CallArgs::CopyD2d { .. } => AbstractCall::CopyD2d,
            CallArgs::Memset { .. } => AbstractCall::Memset,
            CallArgs::StreamCreate => AbstractCall::StreamCreate,
            CallArgs::StreamSync { .. } => AbstractCall::StreamSync,
            CallArgs::EventRecord { .. } => AbstractCall::EventRecord,
            CallArgs::EventQuery { .. } => AbstractCall::EventQuery,
            CallArgs::LaunchKernel { .. } => AbstractCall::LaunchKernel,
            CallArgs::DeviceCount => AbstractCall::DeviceCount,
        }
    }
}

/// Result of a dispatched call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallResult {
    Unit,
    /// Freshly allocated (zero-initialized) backing bytes.
    Bytes(Vec<u8>),
    /// Stream or event identifier.
    Id(u64),
    /// Event completion.
    Ready(bool),
    /// Visible device count.
    Count(u32),
}

/// One backend implementation behind an abstract call.
pub type BackendFn = Box<dyn for<'a> Fn(CallArgs<'a>) -> CallResult + Send + Sync>;

// Implementation handles are allocated from one process-wide counter so that
// two tables can never share a handle, no matter how they were built.
static NEXT_HANDLE: AtomicU64 = AtomicU64::new(1);

struct BackendEntry {
    handle: u64,
    func: BackendFn,
}

/// A vendor's table of backend implementations, keyed by abstract call.
///
/// Tables are built incrementally and may be partial; completeness over the
/// full 12-call surface is enforced once, at registration.
pub struct BackendTable {
    platform: Platform,
    entries: HashMap<AbstractCall, BackendEntry>,
}

impl BackendTable {
    /// New empty table for `platform`.
    pub fn new(platform: Platform) -> Self {
        BackendTable { platform, entries: HashMap::new() }
    }

    pub fn platform(&self) -> Platform {
        self.platform
    }

    /// Install (or replace) the implementation of one call. Every install
    /// gets a fresh process-unique handle.
    pub fn set_entry(&mut self, call: AbstractCall, func: BackendFn) {
        let handle = NEXT_HANDLE.fetch_add(1, Ordering::Relaxed);
        self.entries.insert(call, BackendEntry { handle, func });
    }

    /// Calls still missing from the 12-call surface.
    pub fn missing_calls(&self) -> Vec<AbstractCall> {
        AbstractCall::ALL.iter().copied().filter(|c| !self.entries.contains_key(c)).collect()
    }

    /// Handles of all installed entries (used by routing-exclusivity checks).
    pub fn handles(&self) -> Vec<u64> {
        self.entries.values().map(|e| e.handle).collect()
    }

    /// Reference simulation backend for `platform`: allocation returns zeroed
    /// bytes, copies and memset move bytes in place, stream/event calls hand
    /// out ids from a per-table counter, and `launch_kernel` runs this
    /// platform's element-wise combiners. `device_count` reports
    /// `visible_devices`.
    pub fn standard(platform: Platform, visible_devices: u32) -> BackendTable {
        let mut table = BackendTable::new(platform);
        let ids = Arc::new(AtomicU64::new(1));
        let event_ids = Arc::clone(&ids);
        table.set_entry(
            AbstractCall::Alloc,
            Box::new(|args| match args {
                CallArgs::Alloc { size } => CallResult::Bytes(vec![0u8; size as usize]),
                _ => unreachable!("alloc entry invoked with wrong arguments"),
            }),
        );
        table.set_entry(AbstractCall::Free, Box::new(|_| CallResult::Unit));
        table.set_entry(
            AbstractCall::CopyH2d,
            Box::new(|args| match args {
                CallArgs::CopyH2d { src, dst } => {
                    dst.copy_from_slice(src);
                    CallResult::Unit
                }
                _ => unreachable!("copy_h2d entry invoked with wrong arguments"),
            }),
        );
        table.set_entry(
            AbstractCall::CopyD2h,
            Box::new(|args| match args {
                CallArgs::CopyD2h { src, dst } => {
                    dst.copy_from_slice(src);
                    CallResult::Unit
                }
                _ => unreachable!("copy_d2h entry invoked with wrong arguments"),
            }),
        );
        table.set_entry(
            AbstractCall::CopyD2d,
            Box::new(|args| match args {
                CallArgs::CopyD2d { src, dst } => {
                    dst.copy_from_slice(src);
                    CallResult::Unit
                }
                _ => unreachable!("copy_d2d entry invoked with wrong arguments"),
            }),
        );
        table.set_entry(
            AbstractCall::Memset,
            Box::new(|args| match args {
                CallArgs::Memset { dst, value } => {
                    dst.fill(value);
                    CallResult::Unit
                }
                _ => unreachable!("memset entry invoked with wrong arguments"),
            }),
        );
        table.set_entry(
            AbstractCall::StreamCreate,
            Box::new(move |_| CallResult::Id(ids.fetch_add(1, Ordering::Relaxed))),
        );
        table.set_entry(AbstractCall::StreamSync, Box::new(|_| CallResult::Unit));
        table.set_entry(
            AbstractCall::EventRecord,
            Box::new(move |_| CallResult::Id(event_ids.fetch_add(1, Ordering::Relaxed))),
        );
        table.set_entry(AbstractCall::EventQuery, Box::new(|_| CallResult::Ready(true)));
        table.set_entry(
            AbstractCall::LaunchKernel,
            Box::new(|args| match args {
                CallArgs::LaunchKernel { kernel, dtype, acc, operand } => {
                    combine_elementwise(kernel, dtype, acc, operand);
                    CallResult::Unit
                }
                _ => unreachable!("launch_kernel entry invoked with wrong arguments"),
            }),
        );
        table.set_entry(
            AbstractCall::DeviceCount,
            Box::new(move |_| CallResult::Count(visible_devices)),
        );
        table
    }
}

// ---------------------------------------------------------------------------
// Kernel libraries
// ---------------------------------------------------------------------------

type KernelFn = Box<dyn Fn(DType, &mut [u8], &[u8]) + Send + Sync>;

struct KernelEntry {
    handle: u64,
    func: KernelFn,
}

/// A platform's loadable set of reduction kernels. Loadable into the
/// registry only after the platform's backend table is registered.
pub struct KernelLibrary {
    platform: Platform,
    kernels: HashMap<KernelName, KernelEntry>,
}

impl KernelLibrary {
    /// The reference library: all three combiners, applying elements
    /// left-to-right so both platforms produce bit-identical results.
    pub fn standard(platform: Platform) -> KernelLibrary {
        let mut kernels = HashMap::new();
        for name in KernelName::ALL {
            let handle = NEXT_HANDLE.fetch_add(1, Ordering::Relaxed);
            let func: KernelFn =
                Box::new(move |dtype, acc, operand| combine_elementwise(name, dtype, acc, operand));
            kernels.insert(name, KernelEntry { handle, func });
        }
        KernelLibrary { platform, kernels }
    }

    pub fn platform(&self) -> Platform {
        self.platform
    }

    /// Run one named combiner: `acc[i] = op(acc[i], operand[i])`.
    pub fn combine(&self, kernel: KernelName, dtype: DType, acc: &mut [u8], operand: &[u8]) {
        let entry = self.kernels.get(&kernel).expect("standard library carries all kernels");
        (entry.func)(dtype, acc, operand);
    }

    pub fn handles(&self) -> Vec<u64> {
        self.kernels.values().map(|e| e.handle).collect()
    }
}

// ---------------------------------------------------------------------------
// Registry and dispatch
// ---------------------------------------------------------------------------

/// Errors raised by registration, platform selection, and dispatch.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlatformError {
    #[error("backend table for {platform} is already registered")]
    DuplicatePlatform { platform: Platform },
    #[error("backend table for {platform} is missing calls: {}",
            missing.iter().map(|c| c.name()).collect::<Vec<_>>().join(", "))]
    IncompleteTable { platform: Platform, missing: Vec<AbstractCall> },
    #[error("no registered platform is available on this node")]
    NoPlatform,
    #[error("multiple platforms available ({}); nodes are single-vendor",
            available.iter().map(|p| p.config_name()).collect::<Vec<_>>().join(", "))]
    AmbiguousPlatform { available: Vec<Platform> },
    #[error("call '{name}' is not part of the abstract runtime surface")]
    UnknownCall { name: String },
    #[error("no backend table registered for {platform}")]
    UnregisteredPlatform { platform: Platform },
}

/// One dispatch trace record: which call ran on which platform, and through
/// which implementation handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchRecord {
    pub call: AbstractCall,
    pub platform: Platform,
    pub handle: u64,
}

struct RegisteredBackend {
    backend_id: u32,
    table: BackendTable,
}

/// Owner of all registered backend tables and kernel libraries, and the
/// single dispatch point for abstract runtime calls.
///
/// Registration is a single-threaded setup phase (`&mut self`); afterwards
/// the registry is immutable and can be shared across rank workers. The
/// dispatch trace uses interior mutability and is safe for concurrent
/// appends.
pub struct PlatformRegistry {
    backends: HashMap<Platform, RegisteredBackend>,
    kernels: HashMap<Platform, KernelLibrary>,
    next_backend_id: u32,
    trace: Mutex<Vec<DispatchRecord>>,
    tracing: AtomicBool,
}

impl PlatformRegistry {
    /// Empty registry with tracing enabled.
    pub fn new() -> Self {
        PlatformRegistry {
            backends: HashMap::new(),
            kernels: HashMap::new(),
            next_backend_id: 0,
            trace: Mutex::new(Vec::new()),
            tracing: AtomicBool::new(true),
        }
    }

    /// Registry with both vendors' standard tables and kernel libraries
    /// loaded — the usual starting point for simulations.
    pub fn standard() -> Self {
        let mut reg = PlatformRegistry::new();
        for platform in Platform::ALL {
            reg.register_backend(BackendTable::standard(platform, 1))
                .expect("fresh registry accepts both platforms");
            reg.register_kernels(KernelLibrary::standard(platform))
                .expect("table was just registered");
        }
        reg
    }

    /// Register a vendor's table. Completeness over the 12-call surface is
    /// checked here and only here. Returns a stable backend id (0, 1, …).
    pub fn register_backend(&mut self, table: BackendTable) -> Result<u32, PlatformError> {
        let platform = table.platform();
        if self.backends.contains_key(&platform) {
            return Err(PlatformError::DuplicatePlatform { platform });
        }
        let mut missing = table.missing_calls();
        if !missing.is_empty() {
            missing.sort_by_key(|c| c.name());
            return Err(PlatformError::IncompleteTable { platform, missing });
        }
        let backend_id = self.next_backend_id;
        self.next_backend_id += 1;
        self.backends.insert(platform, RegisteredBackend { backend_id, table });
        Ok(backend_id)
    }

    /// Load a platform's kernel library. Valid only after that platform's
    /// backend table is registered.
    pub fn register_kernels(&mut self, library: KernelLibrary) -> Result<(), PlatformError> {
        let platform = library.platform();
        if !self.backends.contains_key(&platform) {
            return Err(PlatformError::UnregisteredPlatform { platform });
        }
        self.kernels.insert(platform, library);
        Ok(())
    }

    /// Backend id assigned at registration.
    pub fn backend_id(&self, platform: Platform) -> Option<u32> {
        self.backends.get(&platform).map(|b| b.backend_id)
    }

    /// The platform's kernel library, if loaded.
    pub fn kernel_library(&self, platform: Platform) -> Option<&KernelLibrary> {
        self.kernels.get(&platform)
    }

    /// Implementation handles of a registered platform's table.
    pub fn table_handles(&self, platform: Platform) -> Option<Vec<u64>> {
        self.backends.get(&platform).map(|b| b.table.handles())
    }

    /// Pick the active platform for a node given an availability probe.
    /// Exactly one registered platform must be visible: none is
    /// `NoPlatform`, more than one is `AmbiguousPlatform` (nodes are
    /// single-vendor by scope).
    pub fn set_platform_auto(&self, available: &[Platform]) -> Result<Platform, PlatformError> {
        let mut found: Vec<Platform> = available
            .iter()
            .copied()
            .filter(|p| self.backends.contains_key(p))
            .collect();
        found.dedup();
        match found.len() {
            0 => Err(PlatformError::NoPlatform),
            1 => Ok(found[0]),
            _ => Err(PlatformError::AmbiguousPlatform { available: found }),
        }
    }

    /// Route one call to `platform`'s table entry and pass its result
    /// through unchanged. Appends a trace record when tracing is enabled.
    pub fn dispatch(&self, platform: Platform, args: CallArgs<'_>) -> Result<CallResult, PlatformError> {
        let call = args.call();
        let backend = self
            .backends
            .get(&platform)
            .ok_or(PlatformError::UnregisteredPlatform { platform })?;
        let entry = backend
            .table
            .entries
            .get(&call)
            .expect("registered tables are complete by construction");
        if self.tracing.load(Ordering::Relaxed) {
            self.trace
                .lock()
                .expect("trace lock")
                .push(DispatchRecord { call, platform, handle: entry.handle });
        }
        Ok((entry.func)(args))
    }

    /// Dispatch by call name; names outside the declared surface are
    /// `UnknownCall`. The name must match the variant carried by `args`.
    pub fn dispatch_named(
        &self,
        name: &str,
        platform: Platform,
        args: CallArgs<'_>,
    ) -> Result<CallResult, PlatformError> {
        let call = AbstractCall::parse(name)
            .ok_or_else(|| PlatformError::UnknownCall { name: name.to_string() })?;
        assert_eq!(call, args.call(), "call name does not match the supplied arguments");
        self.dispatch(platform, args)
    }

    /// Enable or disable trace recording (dispatch itself is unaffected).
    pub fn set_tracing(&self, enabled: bool) {
        self.tracing.store(enabled, Ordering::Relaxed);
    }

    /// Snapshot of the dispatch trace in append order.
    pub fn trace(&self) -> Vec<DispatchRecord> {
        self.trace.lock().expect("trace lock").clone()
    }

    pub fn clear_trace(&self) {
        self.trace.lock().expect("trace lock").clear();
    }
}

impl Default for PlatformRegistry {
    fn default() -> Self {
        PlatformRegistry::new()
    }
}
