//! Domain types and the in-memory dataset container.

mod attrs;
pub(crate) mod schema;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geomath::{self, AffineTransform, ControlPointPair};

pub use crate::geomath::GeoPosition;
pub use attrs::{AttrValue, Attributes};
pub use schema::{AttributeAction, AttributeSpec, ElementTypeStyle, ObjectSnapshot};

pub const NODES_LAYER: &str = "nodes";
pub const PIPELINES_LAYER: &str = "pipelines";
pub const DEFAULT_SUBLAYER: &str = "natural_gas";

/// Keys that can never be used as free attributes.
pub const RESERVED_ATTRIBUTES: &[&str] = &[
    "id",
    "start_node",
    "end_node",
    "length_km",
    "is_short_pipe",
    "sublayer",
    "group_id",
    "node_ref",
    "pipeline_ref",
    "position_fraction",
];

/// Structural key of node features, reserved on the node layer only.
pub const NODE_NAME_KEY: &str = "name";

/// Id prefixes for generated identifiers.
pub const NODE_ID_PREFIX: &str = "node";
pub const PIPELINE_ID_PREFIX: &str = "pipe";
pub const GROUP_ID_PREFIX: &str = "group";

pub fn is_reserved_attribute(layer: &str, key: &str) -> bool {
    RESERVED_ATTRIBUTES.contains(&key) || (layer == NODES_LAYER && key == NODE_NAME_KEY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub name: String,
    pub position: GeoPosition,
    pub attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub id: String,
    pub start_node: String,
    pub end_node: String,
    pub route: Vec<GeoPosition>,
    pub length_km: f64,
    pub is_short_pipe: bool,
    pub sublayer: String,
    pub group_id: Option<String>,
    pub attributes: Attributes,
}

impl Pipeline {
    /// Recompute `length_km` from the route; short-pipes are lossless.
    pub fn refresh_length(&mut self) {
        self.length_km = if self.is_short_pipe {
            0.0
        } else {
            geomath::polyline_length_km(&self.route).unwrap_or(0.0)
        };
    }

    pub fn touches(&self, node: &str) -> bool {
        self.start_node == node || self.end_node == node
    }

    /// The node at the other end from `node`.
    pub fn opposite(&self, node: &str) -> &str {
        if self.start_node == node {
            &self.end_node
        } else {
            &self.start_node
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Line,
    NodeAttached,
    Point,
    InLine,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Line => "line",
            ElementKind::NodeAttached => "node_attached",
            ElementKind::Point => "point",
            ElementKind::InLine => "in_line",
        }
    }
}

/// Where an element sits; the variant fixes which reference fields exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    Line { route: Vec<GeoPosition> },
    NodeAttached { node_ref: String },
    Point { position: GeoPosition },
    InLine { pipeline_ref: String, position_fraction: f64 },
}

impl Placement {
    pub fn kind(&self) -> ElementKind {
        match self {
            Placement::Line { .. } => ElementKind::Line,
            Placement::NodeAttached { .. } => ElementKind::NodeAttached,
            Placement::Point { .. } => ElementKind::Point,
            Placement::InLine { .. } => ElementKind::InLine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfrastructureElement {
    pub id: String,
    pub layer: String,
    pub placement: Placement,
    pub attributes: Attributes,
}

impl InfrastructureElement {
    pub fn kind(&self) -> ElementKind {
        self.placement.kind()
    }

    pub fn node_ref(&self) -> Option<&str> {
        match &self.placement {
            Placement::NodeAttached { node_ref } => Some(node_ref),
            _ => None,
        }
    }

    pub fn pipeline_ref(&self) -> Option<&str> {
        match &self.placement {
            Placement::InLine { pipeline_ref, .. } => Some(pipeline_ref),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Node,
    Pipeline,
    Line,
    NodeAttached,
    Point,
    InLine,
}

impl LayerKind {
    pub fn element_kind(self) -> Option<ElementKind> {
        match self {
            LayerKind::Line => Some(ElementKind::Line),
            LayerKind::NodeAttached => Some(ElementKind::NodeAttached),
            LayerKind::Point => Some(ElementKind::Point),
            LayerKind::InLine => Some(ElementKind::InLine),
            LayerKind::Node | LayerKind::Pipeline => None,
        }
    }
}

impl From<ElementKind> for LayerKind {
    fn from(kind: ElementKind) -> Self {
        match kind {
            ElementKind::Line => LayerKind::Line,
            ElementKind::NodeAttached => LayerKind::NodeAttached,
            ElementKind::Point => LayerKind::Point,
            ElementKind::InLine => LayerKind::InLine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub layer: String,
    pub kind: LayerKind,
    pub legend_label: String,
    pub color: String,
    pub marker: String,
    pub visible_default: bool,
    #[serde(default)]
    pub sublayer_of: Option<String>,
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#ff7f0e",
];

impl LayerConfig {
    pub fn nodes() -> Self {
        Self {
            layer: NODES_LAYER.into(),
            kind: LayerKind::Node,
            legend_label: "Nodes".into(),
            color: "#333333".into(),
            marker: "circle".into(),
            visible_default: true,
            sublayer_of: None,
        }
    }

    pub fn pipelines() -> Self {
        Self {
            layer: PIPELINES_LAYER.into(),
            kind: LayerKind::Pipeline,
            legend_label: "Pipelines".into(),
            color: "#1f77b4".into(),
            marker: "line".into(),
            visible_default: true,
            sublayer_of: None,
        }
    }

    /// Config for a pipeline sublayer, colored from a fixed palette by position.
    pub fn sublayer(name: &str, index: usize) -> Self {
        Self {
            layer: name.into(),
            kind: LayerKind::Pipeline,
            legend_label: name.replace('_', " "),
            color: PALETTE[index % PALETTE.len()].into(),
            marker: "line".into(),
            visible_default: true,
            sublayer_of: Some(PIPELINES_LAYER.into()),
        }
    }

    pub fn is_sublayer(&self) -> bool {
        self.kind == LayerKind::Pipeline && self.sublayer_of.as_deref() == Some(PIPELINES_LAYER)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineGroup {
    pub id: String,
    pub name: String,
    pub member_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOverlay {
    pub id: String,
    /// File name inside the project's `plans` directory.
    pub image_file: String,
    pub transform: AffineTransform,
    pub opacity: f64,
    #[serde(default)]
    pub source_note: String,
    #[serde(default)]
    pub control_points: Vec<ControlPointPair>,
}

/// The whole editable project state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub nodes: BTreeMap<String, Node>,
    pub pipelines: BTreeMap<String, Pipeline>,
    pub elements: BTreeMap<String, InfrastructureElement>,
    pub groups: BTreeMap<String, PipelineGroup>,
    pub layer_configs: Vec<LayerConfig>,
    pub plan_overlays: Vec<PlanOverlay>,
    pub schemas: BTreeMap<String, Vec<AttributeSpec>>,
    pub license_text: String,
}

impl Default for Dataset {
    fn default() -> Self {
        Self::new()
    }
}

impl Dataset {
    pub fn new() -> Self {
        let mut schemas = BTreeMap::new();
        schemas.insert(NODES_LAYER.to_owned(), Vec::new());
        schemas.insert(PIPELINES_LAYER.to_owned(), Vec::new());
        Self {
            nodes: BTreeMap::new(),
            pipelines: BTreeMap::new(),
            elements: BTreeMap::new(),
            groups: BTreeMap::new(),
            layer_configs: vec![LayerConfig::nodes(), LayerConfig::pipelines()],
            plan_overlays: Vec::new(),
            schemas,
            license_text: String::new(),
        }
    }

    pub fn node(&self, id: &str) -> Result<&Node> {
        self.nodes.get(id).ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    pub fn node_mut(&mut self, id: &str) -> Result<&mut Node> {
        self.nodes.get_mut(id).ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    pub fn pipeline(&self, id: &str) -> Result<&Pipeline> {
        self.pipelines.get(id).ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    pub fn pipeline_mut(&mut self, id: &str) -> Result<&mut Pipeline> {
        self.pipelines.get_mut(id).ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    pub fn element(&self, id: &str) -> Result<&InfrastructureElement> {
        self.elements.get(id).ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    pub fn layer_config(&self, layer: &str) -> Option<&LayerConfig> {
        self.layer_configs.iter().find(|c| c.layer == layer)
    }

    /// Element layer config, or `UnknownLayer`.
    pub fn element_layer(&self, layer: &str) -> Result<(&LayerConfig, ElementKind)> {
        self.layer_config(layer)
            .and_then(|c| c.kind.element_kind().map(|k| (c, k)))
            .ok_or_else(|| Error::UnknownLayer(layer.to_owned()))
    }

    pub fn element_layers(&self) -> impl Iterator<Item = &LayerConfig> {
        self.layer_configs.iter().filter(|c| c.kind.element_kind().is_some())
    }

    pub fn sublayers(&self) -> impl Iterator<Item = &LayerConfig> {
        self.layer_configs.iter().filter(|c| c.is_sublayer())
    }

    /// Registers a sublayer config if none exists yet.
    pub fn ensure_sublayer(&mut self, name: &str) {
        if self.layer_config(name).is_none() {
            let index = self.sublayers().count();
            self.layer_configs.push(LayerConfig::sublayer(name, index));
        }
    }

    /// Ids of pipelines with an endpoint at `node`, in id order.
    pub fn incident_pipelines(&self, node: &str) -> Vec<String> {
        self.pipelines.values().filter(|p| p.touches(node)).map(|p| p.id.clone()).collect()
    }

    /// Number of pipeline endpoints at `node`.
    pub fn degree(&self, node: &str) -> usize {
        self.pipelines
            .values()
            .map(|p| usize::from(p.start_node == node) + usize::from(p.end_node == node))
            .sum()
    }

    pub fn attached_elements(&self, node: &str) -> Vec<String> {
        self.elements
            .values()
            .filter(|e| e.node_ref() == Some(node))
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn inline_elements(&self, pipeline: &str) -> Vec<String> {
        self.elements
            .values()
            .filter(|e| e.pipeline_ref() == Some(pipeline))
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
            || self.pipelines.contains_key(id)
            || self.elements.contains_key(id)
            || self.groups.contains_key(id)
    }

    /// Next free `<prefix>_<n>` id, seeded from the largest numeric suffix in
    /// use by any object class so generated ids never collide.
    pub fn next_id(&self, prefix: &str) -> String {
        let max = self
            .nodes
            .keys()
            .chain(self.pipelines.keys())
            .chain(self.elements.keys())
            .chain(self.groups.keys())
            .filter_map(|id| id.strip_prefix(prefix)?.strip_prefix('_')?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        format!("{prefix}_{}", max + 1)
    }

    pub fn group_total_length_km(&self, group: &PipelineGroup) -> f64 {
        group
            .member_ids
            .iter()
            .filter_map(|id| self.pipelines.get(id))
            .map(|p| p.length_km)
            .sum()
    }

    /// Rendered position of an element: the node for node-attached
    /// elements, the arc-length point for in-line ones, the first vertex
    /// of a line.
    pub fn element_position(&self, element: &InfrastructureElement) -> Result<GeoPosition> {
        match &element.placement {
            Placement::NodeAttached { node_ref } => Ok(self.node(node_ref)?.position),
            Placement::Point { position } => Ok(*position),
            Placement::InLine { pipeline_ref, position_fraction } => {
                let p = self.pipeline(pipeline_ref)?;
                Ok(geomath::point_at_fraction(&p.route, *position_fraction)?)
            }
            Placement::Line { route } => route.first().copied().ok_or(Error::EmptyRoute),
        }
    }

    /// Hex SHA-256 of the dataset's canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
