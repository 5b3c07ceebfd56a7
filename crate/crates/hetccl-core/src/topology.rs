//! Cluster description: nodes, devices, link models, and the per-path cost
//! functions every higher layer prices transfers with.
//!
//! A topology is loaded from a JSON document (see [`ClusterTopology::from_json`]
//! for the schema) and is immutable afterwards. Inter-node wire links are
//! derived from the two endpoints' NIC parameters: the wire latency is the
//! sum of both NIC latencies and the wire bandwidth is the slower NIC's.
//! Three path models are exposed:
//!
//! * `intranode` — one PCIe hop: `α_pcie + s/β_pcie`.
//! * `rdma` — single DMA pass end to end: all four segment latencies are
//!   paid once, and the transfer streams at the slowest segment's bandwidth.
//! * `staged` — store-and-forward through host memory: device→host, wire,
//!   and host→device are each paid in full and summed.
//!
//! The staged/rdma gap is the model-level cost of losing direct NIC access
//! to device memory: with equal segment bandwidths, staged approaches three
//! times the rdma time as sizes grow.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Deserializer};
use thiserror::Error;

use crate::platform::Platform;

// ---------------------------------------------------------------------------
// Link models and tiers
// ---------------------------------------------------------------------------

/// Alpha-beta cost model of one link: `time(s) = alpha + s/beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    /// Per-message latency in seconds.
    pub alpha: f64,
    /// Bandwidth in bytes per second.
    pub beta: f64,
}

impl LinkModel {
    /// PCIe Gen3-class host link preset.
    pub const GEN3: LinkModel = LinkModel { alpha: 5.0e-6, beta: 12.0e9 };
    /// PCIe Gen4-class host link preset.
    pub const GEN4: LinkModel = LinkModel { alpha: 5.0e-6, beta: 24.0e9 };
    /// InfiniBand HDR-class NIC preset.
    pub const HDR: LinkModel = LinkModel { alpha: 2.0e-6, beta: 25.0e9 };

    /// Look up a named tier preset.
    pub fn tier(name: &str) -> Option<LinkModel> {
        match name {
            "gen3" => Some(LinkModel::GEN3),
            "gen4" => Some(LinkModel::GEN4),
            "hdr" => Some(LinkModel::HDR),
            _ => None,
        }
    }

    /// Time to move `bytes` over this link.
    pub fn time(&self, bytes: u64) -> f64 {
        self.alpha + bytes as f64 / self.beta
    }
}

// ---------------------------------------------------------------------------
// Topology types
// ---------------------------------------------------------------------------

/// Process-unique identity of one node's NIC, minted fresh on every load so
/// registrations cannot leak across topology instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NicId(u64);

static NEXT_NIC_ID: AtomicU64 = AtomicU64::new(1);

/// A node's NIC: identity plus its link parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nic {
    pub id: NicId,
    pub link: LinkModel,
}

/// One cluster node: a single-vendor box with `device_count` identical
/// devices behind one host link.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub platform: Platform,
    pub device_count: u32,
    /// Per-device processing speed in tokens per second.
    pub device_speed: f64,
    /// Host↔device link.
    pub pcie: LinkModel,
    pub nic: Option<Nic>,
}

/// Immutable cluster description: nodes plus derived inter-node wire links.
#[derive(Debug, Clone)]
pub struct ClusterTopology {
    nodes: Vec<NodeSpec>,
    /// Wire link per unordered node pair, present iff both nodes have NICs.
    wires: BTreeMap<(usize, usize), LinkModel>,
}

/// Which transfer mechanism a path model prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathKind {
    Intranode,
    Rdma,
    Staged,
}

impl PathKind {
    /// Name used in reports and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            PathKind::Intranode => "intranode",
            PathKind::Rdma => "rdma",
            PathKind::Staged => "staged",
        }
    }
}

impl std::fmt::Display for PathKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Composed cost function of one concrete path; evaluate with [`PathModel::time`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathModel {
    /// One PCIe hop between two devices on the same node.
    Intranode { pcie: LinkModel },
    /// Direct NIC access to device memory: one streaming pass bottlenecked
    /// by the slowest segment. `alpha_sum` carries both host-link latencies
    /// plus the wire latency.
    Rdma { alpha_sum: f64, beta_min: f64 },
    /// Store-and-forward through host memory: the two host links and the
    /// wire, each paid in full. Segments are stored in a direction-agnostic
    /// order so both directions price bit-identically.
    Staged { segments: [LinkModel; 3] },
}

impl PathModel {
    /// Seconds to move `bytes` along this path.
    pub fn time(&self, bytes: u64) -> f64 {
        match self {
            PathModel::Intranode { pcie } => pcie.time(bytes),
            PathModel::Rdma { alpha_sum, beta_min } => alpha_sum + bytes as f64 / beta_min,
            PathModel::Staged { segments } => {
                segments[0].time(bytes) + segments[1].time(bytes) + segments[2].time(bytes)
            }
        }
    }
}

/// Errors from loading a topology document or composing a path model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    ParseError { message: String, line: usize, column: usize },
    #[error("node '{node}' lists more than one platform; nodes are single-vendor")]
    MixedVendorNode { node: String },
    #[error("required config field '{field}' is missing")]
    MissingField { field: String },
    #[error("no RDMA-capable wire between '{src}' and '{dst}' (both nodes need a NIC)")]
    NoRdmaPath { src: String, dst: String },
}

fn semantic_error(message: String) -> TopologyError {
    TopologyError::ParseError { message, line: 0, column: 0 }
}

// ---------------------------------------------------------------------------
// Document schema
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum TierDoc {
    Gen3,
    Gen4,
    Hdr,
}

impl TierDoc {
    fn link(&self) -> LinkModel {
        match self {
            TierDoc::Gen3 => LinkModel::GEN3,
            TierDoc::Gen4 => LinkModel::GEN4,
            TierDoc::Hdr => LinkModel::HDR,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkParamsDoc {
    alpha_s: f64,
    #[serde(rename = "beta_Bps")]
    beta_bps: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LinkDoc {
    Tier(TierDoc),
    Params(LinkParamsDoc),
}

impl LinkDoc {
    fn link(&self) -> LinkModel {
        match self {
            LinkDoc::Tier(t) => t.link(),
            LinkDoc::Params(p) => LinkModel { alpha: p.alpha_s, beta: p.beta_bps },
        }
    }
}

#[derive(Deserialize, Clone, Copy, PartialEq)]
enum PlatformDoc {
    #[serde(rename = "cuda-like")]
    CudaLike,
    #[serde(rename = "hip-like")]
    HipLike,
}

impl PlatformDoc {
    fn platform(&self) -> Platform {
        match self {
            PlatformDoc::CudaLike => Platform::CudaLike,
            PlatformDoc::HipLike => Platform::HipLike,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PlatformField {
    One(PlatformDoc),
    Many(Vec<PlatformDoc>),
}

// Distinguishes `"nic": null` (explicitly no NIC) from an omitted key
// (fall back to the document defaults).
fn explicit_option<'de, T, D>(de: D) -> Result<Option<Option<T>>, D::Error>
where
    T: Deserialize<'de>,
    D: Deserializer<'de>,
{
    Deserialize::deserialize(de).map(Some)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: Option<String>,
    platform: Option<PlatformField>,
    devices: Option<u32>,
    speed_tokens_per_s: Option<f64>,
    pcie: Option<LinkDoc>,
    #[serde(default, deserialize_with = "explicit_option")]
    nic: Option<Option<LinkDoc>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DefaultsDoc {
    pcie: Option<LinkDoc>,
    nic: Option<LinkDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    nodes: Option<Vec<NodeDoc>>,
    #[serde(default)]
    defaults: Option<DefaultsDoc>,
}

// ---------------------------------------------------------------------------
// Loading and path composition
// ---------------------------------------------------------------------------

const DEFAULT_TOPOLOGY_JSON: &str = include_str!("default_topology.json");

impl ClusterTopology {
    /// The built-in four-node reference cluster: two CUDA-like nodes (4
    /// devices each, 2e4 tokens/s per device, Gen3 host links) and two
    /// HIP-like nodes (4 devices each, 1e4 tokens/s, Gen4 host links), all
    /// on HDR NICs.
    pub fn builtin() -> ClusterTopology {
        ClusterTopology::from_json(DEFAULT_TOPOLOGY_JSON)
            .expect("embedded default topology is valid")
    }

    /// Load a topology from its JSON document.
    ///
    /// Schema: `{"nodes": [{"id", "platform", "devices",
    /// "speed_tokens_per_s", "pcie", "nic"}], "defaults": {"pcie", "nic"}}`.
    /// `pcie` and `nic` accept either a tier name (`"gen3"`, `"gen4"`,
    /// `"hdr"`) or `{"alpha_s": seconds, "beta_Bps": bytes/s}`. A node
    /// omitting `pcie`/`nic` inherits the document defaults (built-in
    /// fallback: Gen3 PCIe, no NIC); `"nic": null` declares the node
    /// NIC-less regardless of defaults. Unknown keys are rejected.
    pub fn from_json(document: &str) -> Result<ClusterTopology, TopologyError> {
        let doc: TopologyDoc =
            serde_json::from_str(document).map_err(|e| TopologyError::ParseError {
                message: e.to_string(),
                line: e.line(),
                column: e.column(),
            })?;
        let defaults = doc.defaults.unwrap_or_default();
        let node_docs = doc.nodes.ok_or(TopologyError::MissingField { field: "nodes".into() })?;

        let mut nodes = Vec::with_capacity(node_docs.len());
        for (index, nd) in node_docs.into_iter().enumerate() {
            let missing = |field: &str| TopologyError::MissingField {
                field: format!("nodes[{index}].{field}"),
            };
            let name = nd.id.ok_or_else(|| missing("id"))?;
            let platform = match nd.platform.ok_or_else(|| missing("platform"))? {
                PlatformField::One(p) => p.platform(),
                PlatformField::Many(list) => {
                    let mut vendors: Vec<Platform> = list.iter().map(|p| p.platform()).collect();
                    vendors.sort();
                    vendors.dedup();
                    match vendors.len() {
                        0 => return Err(missing("platform")),
                        1 => vendors[0],
                        _ => return Err(TopologyError::MixedVendorNode { node: name }),
                    }
                }
            };
            let device_count = nd.devices.ok_or_else(|| missing("devices"))?;
            if device_count == 0 {
                return Err(semantic_error(format!("node '{name}': devices must be >= 1")));
            }
            let device_speed = nd.speed_tokens_per_s.ok_or_else(|| missing("speed_tokens_per_s"))?;
            // Negated form so NaN fails validation too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(device_speed > 0.0) {
                return Err(semantic_error(format!(
                    "node '{name}': speed_tokens_per_s must be > 0"
                )));
            }
            let pcie = nd
                .pcie
                .as_ref()
                .or(defaults.pcie.as_ref())
                .map(LinkDoc::link)
                .unwrap_or(LinkModel::GEN3);
            validate_link(&name, "pcie", &pcie)?;
            let nic_link = match &nd.nic {
                Some(None) => None,
                Some(Some(doc)) => Some(doc.link()),
                None => defaults.nic.as_ref().map(LinkDoc::link),
            };
            if let Some(link) = &nic_link {
                validate_link(&name, "nic", link)?;
            }
            let nic = nic_link.map(|link| Nic {
                id: NicId(NEXT_NIC_ID.fetch_add(1, Ordering::Relaxed)),
                link,
            });
            if nodes.iter().any(|n: &NodeSpec| n.name == name) {
                return Err(semantic_error(format!("duplicate node id '{name}'")));
            }
            nodes.push(NodeSpec { name, platform, device_count, device_speed, pcie, nic });
        }

        let mut wires = BTreeMap::new();
        for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                if let (Some(na), Some(nb)) = (&nodes[a].nic, &nodes[b].nic) {
                    wires.insert(
                        (a, b),
                        LinkModel {
                            alpha: na.link.alpha + nb.link.alpha,
                            beta: na.link.beta.min(nb.link.beta),
                        },
                    );
                }
            }
        }
        Ok(ClusterTopology { nodes, wires })
    }

    /// Load from a file on disk.
    pub fn from_file(path: &Path) -> Result<ClusterTopology, TopologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| TopologyError::ParseError {
            message: format!("cannot read '{}': {e}", path.display()),
            line: 0,
            column: 0,
        })?;
        ClusterTopology::from_json(&text)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &NodeSpec {
        &self.nodes[index]
    }

    /// Index of the node with the given config id.
    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Total device count across all nodes.
    pub fn total_devices(&self) -> u32 {
        self.nodes.iter().map(|n| n.device_count).sum()
    }

    /// The wire link between two distinct nodes, if both have NICs.
    pub fn wire(&self, a: usize, b: usize) -> Option<&LinkModel> {
        let key = (a.min(b), a.max(b));
        self.wires.get(&key)
    }

    /// Compose the cost function of one path between two devices.
    ///
    /// `intranode` requires both endpoints on the same node; `rdma` and
    /// `staged` require distinct nodes joined by a NIC wire.
    pub fn path_model(
        &self,
        src: (usize, u32),
        dst: (usize, u32),
        path: PathKind,
    ) -> Result<PathModel, TopologyError> {
        let (src_node, src_dev) = src;
        let (dst_node, dst_dev) = dst;
        assert!(src_node < self.nodes.len() && dst_node < self.nodes.len(), "endpoint node exists");
        assert!(
            src_dev < self.nodes[src_node].device_count && dst_dev < self.nodes[dst_node].device_count,
            "endpoint device exists"
        );
        match path {
            PathKind::Intranode => {
                assert_eq!(src_node, dst_node, "intranode path needs one node");
                Ok(PathModel::Intranode { pcie: self.nodes[src_node].pcie })
            }
            PathKind::Rdma | PathKind::Staged => {
                assert_ne!(src_node, dst_node, "inter-node path needs two nodes");
                let wire = *self.wire(src_node, dst_node).ok_or_else(|| TopologyError::NoRdmaPath {
                    src: self.nodes[src_node].name.clone(),
                    dst: self.nodes[dst_node].name.clone(),
                })?;
                // Host links enter in node-index order so model(a,b) and
                // model(b,a) compose the identical float expression.
                let lo = self.nodes[src_node.min(dst_node)].pcie;
                let hi = self.nodes[src_node.max(dst_node)].pcie;
                if path == PathKind::Rdma {
                    Ok(PathModel::Rdma {
                        alpha_sum: lo.alpha + wire.alpha + hi.alpha,
                        beta_min: lo.beta.min(wire.beta).min(hi.beta),
                    })
                } else {
                    Ok(PathModel::Staged { segments: [lo, wire, hi] })
                }
            }
        }
    }
}

// Negated comparisons so NaN parameters fail validation too.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn validate_link(node: &str, field: &str, link: &LinkModel) -> Result<(), TopologyError> {
    if !(link.alpha >= 0.0) {
        return Err(semantic_error(format!("node '{node}': {field} alpha_s must be >= 0")));
    }
    if !(link.beta > 0.0) {
        return Err(semantic_error(format!("node '{node}': {field} beta_Bps must be > 0")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_cluster_matches_reference_shape() {
        let topo = ClusterTopology::builtin();
        assert_eq!(topo.node_count(), 4);
        assert_eq!(topo.total_devices(), 16);
        for (i, node) in topo.nodes().iter().enumerate() {
            assert_eq!(node.name, format!("n{i}"));
            assert_eq!(node.device_count, 4);
            assert!(node.nic.is_some());
            assert_eq!(node.nic.unwrap().link, LinkModel::HDR);
        }
        assert_eq!(topo.node(0).platform, Platform::CudaLike);
        assert_eq!(topo.node(1).platform, Platform::CudaLike);
        assert_eq!(topo.node(2).platform, Platform::HipLike);
        assert_eq!(topo.node(3).platform, Platform::HipLike);
        assert_eq!(topo.node(0).device_speed, 2.0e4);
        assert_eq!(topo.node(2).device_speed, 1.0e4);
        assert_eq!(topo.node(0).pcie, LinkModel::GEN3);
        assert_eq!(topo.node(2).pcie, LinkModel::GEN4);
        // Every pair is wired: all nodes carry NICs.
        for a in 0..4 {
            for b in (a + 1)..4 {
                assert!(topo.wire(a, b).is_some());
            }
        }
    }

    #[test]
    #[allow(clippy::assertions_on_constants)]
    fn tier_betas_are_ordered() {
        assert!(LinkModel::GEN3.beta < LinkModel::GEN4.beta);
        assert!(LinkModel::GEN4.beta < LinkModel::HDR.beta);
    }

    #[test]
    fn mixed_vendor_node_is_rejected() {
        let doc = r#"{"nodes":[{"id":"bad","platform":["cuda-like","hip-like"],
                       "devices":2,"speed_tokens_per_s":1000.0,"pcie":"gen3"}]}"#;
        let err = ClusterTopology::from_json(doc).unwrap_err();
        assert_eq!(err, TopologyError::MixedVendorNode { node: "bad".into() });
    }

    #[test]
    fn single_entry_platform_list_is_accepted() {
        let doc = r#"{"nodes":[{"id":"a","platform":["hip-like"],
                       "devices":1,"speed_tokens_per_s":1.0,"pcie":"gen4"}]}"#;
        let topo = ClusterTopology::from_json(doc).unwrap();
        assert_eq!(topo.node(0).platform, Platform::HipLike);
    }

    #[test]
    fn minimal_node_inherits_default_links() {
        let doc = r#"{"nodes":[{"id":"solo","platform":"cuda-like",
                       "devices":1,"speed_tokens_per_s":500.0}]}"#;
        let topo = ClusterTopology::from_json(doc).unwrap();
        assert_eq!(topo.node(0).pcie, LinkModel::GEN3);
        assert!(topo.node(0).nic.is_none());
    }

    #[test]
    fn document_defaults_apply_to_omitted_links() {
        let doc = r#"{"defaults":{"pcie":"gen4","nic":"hdr"},
                      "nodes":[{"id":"a","platform":"cuda-like","devices":1,"speed_tokens_per_s":1.0}]}"#;
        let topo = ClusterTopology::from_json(doc).unwrap();
        assert_eq!(topo.node(0).pcie, LinkModel::GEN4);
        assert_eq!(topo.node(0).nic.unwrap().link, LinkModel::HDR);
    }

    #[test]
    fn explicit_null_nic_overrides_defaults() {
        let doc = r#"{"defaults":{"nic":"hdr"},
                      "nodes":[{"id":"a","platform":"cuda-like","devices":1,
                                "speed_tokens_per_s":1.0,"pcie":"gen3","nic":null}]}"#;
        let topo = ClusterTopology::from_json(doc).unwrap();
        assert!(topo.node(0).nic.is_none());
    }

    #[test]
    fn unknown_keys_are_parse_errors_with_location() {
        let doc = r#"{"nodes":[{"id":"a","platform":"cuda-like","devices":1,
                       "speed_tokens_per_s":1.0,"pcie":"gen3","extra":true}]}"#;
        match ClusterTopology::from_json(doc).unwrap_err() {
            TopologyError::ParseError { line, .. } => assert!(line >= 1),
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn unknown_tier_is_a_parse_error() {
        let doc = r#"{"nodes":[{"id":"a","platform":"cuda-like","devices":1,
                       "speed_tokens_per_s":1.0,"pcie":"gen5"}]}"#;
        assert!(matches!(
            ClusterTopology::from_json(doc).unwrap_err(),
            TopologyError::ParseError { .. }
        ));
    }

    #[test]
    fn missing_required_field_is_reported_by_name() {
        let doc = r#"{"nodes":[{"id":"a","platform":"cuda-like","devices":1}]}"#;
        let err = ClusterTopology::from_json(doc).unwrap_err();
        assert_eq!(
            err,
            TopologyError::MissingField { field: "nodes[0].speed_tokens_per_s".into() }
        );
    }

    #[test]
    fn explicit_link_params_are_honored() {
        let doc = r#"{"nodes":[{"id":"a","platform":"cuda-like","devices":1,"speed_tokens_per_s":1.0,
                       "pcie":{"alpha_s":1.0e-6,"beta_Bps":5.0e9}}]}"#;
        let topo = ClusterTopology::from_json(doc).unwrap();
        assert_eq!(topo.node(0).pcie, LinkModel { alpha: 1.0e-6, beta: 5.0e9 });
    }

    fn two_node_topology(
        pcie_a: LinkModel,
        pcie_b: LinkModel,
        nic: LinkModel,
    ) -> ClusterTopology {
        let doc = format!(
            r#"{{"nodes":[
                {{"id":"a","platform":"cuda-like","devices":1,"speed_tokens_per_s":1.0,
                  "pcie":{{"alpha_s":{},"beta_Bps":{}}},"nic":{{"alpha_s":{},"beta_Bps":{}}}}},
                {{"id":"b","platform":"hip-like","devices":1,"speed_tokens_per_s":1.0,
                  "pcie":{{"alpha_s":{},"beta_Bps":{}}},"nic":{{"alpha_s":{},"beta_Bps":{}}}}}
            ]}}"#,
            pcie_a.alpha, pcie_a.beta, nic.alpha, nic.beta,
            pcie_b.alpha, pcie_b.beta, nic.alpha, nic.beta,
        );
        ClusterTopology::from_json(&doc).unwrap()
    }

    #[test]
    fn rdma_streams_at_slowest_segment() {
        // Segment betas 10/20/15 B/s with zero latency: 100 bytes take 10 s.
        let topo = two_node_topology(
            LinkModel { alpha: 0.0, beta: 10.0 },
            LinkModel { alpha: 0.0, beta: 15.0 },
            LinkModel { alpha: 0.0, beta: 20.0 },
        );
        let model = topo.path_model((0, 0), (1, 0), PathKind::Rdma).unwrap();
        assert_eq!(model.time(100), 10.0);
    }

    #[test]
    fn staged_sums_three_full_segments() {
        // All segment betas 10 B/s, zero latency: 100 bytes take 3 x 10 s.
        let topo = two_node_topology(
            LinkModel { alpha: 0.0, beta: 10.0 },
            LinkModel { alpha: 0.0, beta: 10.0 },
            LinkModel { alpha: 0.0, beta: 10.0 },
        );
        let model = topo.path_model((0, 0), (1, 0), PathKind::Staged).unwrap();
        assert_eq!(model.time(100), 30.0);
    }

    #[test]
    fn rdma_between_nicless_nodes_has_no_path() {
        let doc = r#"{"nodes":[
            {"id":"a","platform":"cuda-like","devices":1,"speed_tokens_per_s":1.0,"pcie":"gen3","nic":null},
            {"id":"b","platform":"hip-like","devices":1,"speed_tokens_per_s":1.0,"pcie":"gen4","nic":null}
        ]}"#;
        let topo = ClusterTopology::from_json(doc).unwrap();
        let err = topo.path_model((0, 0), (1, 0), PathKind::Rdma).unwrap_err();
        assert_eq!(err, TopologyError::NoRdmaPath { src: "a".into(), dst: "b".into() });
    }

    #[test]
    fn intranode_prices_one_pcie_hop() {
        let topo = ClusterTopology::builtin();
        let model = topo.path_model((0, 0), (0, 3), PathKind::Intranode).unwrap();
        let expect = LinkModel::GEN3.alpha + 4096.0 / LinkModel::GEN3.beta;
        assert_eq!(model.time(4096), expect);
    }

    #[test]
    fn rdma_bandwidth_approaches_bottleneck_beta() {
        let topo = ClusterTopology::builtin();
        // Gen3 endpoint bounds the cross-vendor path at 12 GB/s.
        let model = topo.path_model((0, 0), (2, 0), PathKind::Rdma).unwrap();
        let size = 1u64 << 30;
        let bandwidth = size as f64 / model.time(size);
        let limit = 12.0e9;
        assert!((bandwidth - limit).abs() / limit < 0.01, "bandwidth {bandwidth} vs limit {limit}");
    }

    #[test]
    fn node_ids_resolve_to_indices() {
        let topo = ClusterTopology::builtin();
        assert_eq!(topo.node_index("n2"), Some(2));
        assert_eq!(topo.node_index("n9"), None);
    }

    proptest! {
        /// The rdma path never costs more than the staged path over the
        /// same links, for any size.
        #[test]
        fn rdma_never_slower_than_staged(
            alpha_a in 0.0..1.0e-4f64,
            alpha_b in 0.0..1.0e-4f64,
            alpha_n in 0.0..1.0e-4f64,
            beta_a in 1.0e6..1.0e12f64,
            beta_b in 1.0e6..1.0e12f64,
            beta_n in 1.0e6..1.0e12f64,
            size in 1u64..(1 << 34),
        ) {
            let topo = two_node_topology(
                LinkModel { alpha: alpha_a, beta: beta_a },
                LinkModel { alpha: alpha_b, beta: beta_b },
                LinkModel { alpha: alpha_n, beta: beta_n },
            );
            let rdma = topo.path_model((0, 0), (1, 0), PathKind::Rdma).unwrap();
            let staged = topo.path_model((0, 0), (1, 0), PathKind::Staged).unwrap();
            prop_assert!(rdma.time(size) <= staged.time(size));
        }

        /// Path models are symmetric in their endpoints.
        #[test]
        fn path_models_are_symmetric(
            beta_a in 1.0e6..1.0e12f64,
            beta_b in 1.0e6..1.0e12f64,
            beta_n in 1.0e6..1.0e12f64,
            size in 1u64..(1 << 34),
        ) {
            let topo = two_node_topology(
                LinkModel { alpha: 3.0e-6, beta: beta_a },
                LinkModel { alpha: 7.0e-6, beta: beta_b },
                LinkModel { alpha: 2.0e-6, beta: beta_n },
            );
            for kind in [PathKind::Rdma, PathKind::Staged] {
                let fwd = topo.path_model((0, 0), (1, 0), kind).unwrap();
                let rev = topo.path_model((1, 0), (0, 0), kind).unwrap();
                prop_assert_eq!(fwd.time(size), rev.time(size));
            }
        }

        /// Long-transfer bandwidth of the rdma path never exceeds the
        /// slowest segment's beta.
        #[test]
        fn rdma_bandwidth_bounded_by_bottleneck(
            beta_a in 1.0e6..1.0e12f64,
            beta_b in 1.0e6..1.0e12f64,
            beta_n in 1.0e6..1.0e12f64,
            size in 1u64..(1 << 34),
        ) {
            let topo = two_node_topology(
                LinkModel { alpha: 1.0e-6, beta: beta_a },
                LinkModel { alpha: 1.0e-6, beta: beta_b },
                LinkModel { alpha: 1.0e-6, beta: beta_n },
            );
            let model = topo.path_model((0, 0), (1, 0), PathKind::Rdma).unwrap();
            let bandwidth = size as f64 / model.time(size);
            let bottleneck = beta_a.min(beta_b).min(beta_n);
            prop_assert!(bandwidth <= bottleneck * (1.0 + 1.0e-12));
        }
    }
}
