//! Dataset-modifying tools and their wire-level parameter contracts.

mod layers;
mod network;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geomath::{ControlPointPair, GeoPosition};
use crate::model::{
    AttrValue, AttributeAction, AttributeSpec, Attributes, Dataset, ElementKind, ElementTypeStyle, DEFAULT_SUBLAYER,
};
use crate::project_io::integrate::{integrate_dataset, DEFAULT_SNAP_TOLERANCE_KM};

pub use layers::{
    add_infrastructure, distribute_compressors, group_pipelines, register_plan_overlay, switch_sublayer, ChainSpec,
    GroupSummary, PlacementSpec, NODE_REUSE_TOL_KM,
};
pub use network::{
    add_pipeline, add_short_pipe, change_direction, delete_element, divide_pipeline, edit_route, move_node, reconnect,
    split_node, DivideOutcome, Endpoint, PipelineEnd, ReconnectTarget, SplitAssignment, ENDPOINT_MATCH_TOL_DEG,
    SNAP_TOL_DEG,
};

/// Registered operation names, in documentation order.
pub const OPERATION_NAMES: &[&str] = &[
    "add_pipeline",
    "divide_pipeline",
    "split_node",
    "change_direction",
    "add_short_pipe",
    "reconnect",
    "move_node",
    "edit_route",
    "delete_element",
    "distribute_compressors",
    "switch_sublayer",
    "group_pipelines",
    "add_infrastructure",
    "define_element_type",
    "manage_attribute",
    "set_element_attributes",
    "add_plan_overlay",
    "integrate_dataset",
];

fn default_endpoint() -> Endpoint {
    Endpoint::New
}

fn default_sublayer() -> String {
    DEFAULT_SUBLAYER.to_owned()
}

fn default_opacity() -> f64 {
    0.5
}

fn default_snap_tolerance() -> f64 {
    DEFAULT_SNAP_TOLERANCE_KM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddPipelineParams {
    pub route: Vec<GeoPosition>,
    #[serde(default = "default_endpoint")]
    pub start: Endpoint,
    #[serde(default = "default_endpoint")]
    pub end: Endpoint,
    #[serde(default = "default_sublayer")]
    pub sublayer: String,
    #[serde(default)]
    pub attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DividePipelineParams {
    pub pipeline_id: String,
    pub click: GeoPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitNodeParams {
    pub node_id: String,
    pub plan: SplitAssignment,
    #[serde(default)]
    pub offsets: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineIdParams {
    pub pipeline_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddShortPipeParams {
    pub node_a: String,
    pub node_b: String,
    #[serde(default)]
    pub sublayer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconnectParams {
    pub target: ReconnectTarget,
    pub new_node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveNodeParams {
    pub node_id: String,
    pub new_position: GeoPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRouteParams {
    pub pipeline_id: String,
    pub new_route: Vec<GeoPosition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeleteElementParams {
    pub id: String,
    #[serde(default)]
    pub cascade: bool,
}

/// Chain given either as a group id or as an ordered pipeline list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributeCompressorsParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline_ids: Option<Vec<String>>,
    pub n: usize,
    pub element_layer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSublayerParams {
    pub pipeline_ids: Vec<String>,
    pub target_sublayer: String,
    #[serde(default)]
    pub create_if_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupPipelinesParams {
    pub name: String,
    pub pipeline_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddInfrastructureParams {
    pub layer: String,
    pub placement: PlacementSpec,
    #[serde(default)]
    pub attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefineElementTypeParams {
    pub name: String,
    pub kind: ElementKind,
    #[serde(default)]
    pub schema: Vec<AttributeSpec>,
    #[serde(default)]
    pub style: ElementTypeStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeActionName {
    Add,
    Rename,
    Remove,
    SetDefault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManageAttributeParams {
    pub layer: String,
    pub action: AttributeActionName,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<AttrValue>,
}

impl ManageAttributeParams {
    pub fn to_action(&self) -> Result<AttributeAction> {
        let key = self.key.clone();
        let unexpected = |field: &str| Error::ValidationError(format!("`{field}` is not used by {:?}", self.action));
        Ok(match self.action {
            AttributeActionName::Add => {
                if self.new_key.is_some() {
                    return Err(unexpected("new_key"));
                }
                AttributeAction::Add { key, default: self.default.clone().unwrap_or_default() }
            }
            AttributeActionName::Rename => {
                if self.default.is_some() {
                    return Err(unexpected("default"));
                }
                let new_key = self
                    .new_key
                    .clone()
                    .ok_or_else(|| Error::ValidationError("rename needs `new_key`".into()))?;
                AttributeAction::Rename { key, new_key }
            }
            AttributeActionName::Remove => {
                if self.new_key.is_some() {
                    return Err(unexpected("new_key"));
                }
                if self.default.is_some() {
                    return Err(unexpected("default"));
                }
                AttributeAction::Remove { key }
            }
            AttributeActionName::SetDefault => {
                if self.new_key.is_some() {
                    return Err(unexpected("new_key"));
                }
                let default = self
                    .default
                    .clone()
                    .ok_or_else(|| Error::ValidationError("set_default needs `default`".into()))?;
                AttributeAction::SetDefault { key, default }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetElementAttributesParams {
    pub id: String,
    pub updates: Attributes,
}

/// `image_file` names a file in the project's plans directory. The editor
/// also accepts a filesystem path and copies the image in before applying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddPlanOverlayParams {
    pub image_file: String,
    pub pairs: Vec<ControlPointPair>,
    #[serde(default = "default_opacity")]
    pub opacity: f64,
    #[serde(default)]
    pub source_note: String,
}

/// External data as GeoJSON feature collections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateDatasetParams {
    pub nodes: Value,
    #[serde(default = "empty_collection")]
    pub pipelines: Value,
    #[serde(default = "default_snap_tolerance")]
    pub snap_tolerance_km: f64,
}

fn empty_collection() -> Value {
    json!({"type": "FeatureCollection", "features": []})
}

/// A parsed, typed command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "params", rename_all = "snake_case")]
pub enum Operation {
    AddPipeline(AddPipelineParams),
    DividePipeline(DividePipelineParams),
    SplitNode(SplitNodeParams),
    ChangeDirection(PipelineIdParams),
    AddShortPipe(AddShortPipeParams),
    Reconnect(ReconnectParams),
    MoveNode(MoveNodeParams),
    EditRoute(EditRouteParams),
    DeleteElement(DeleteElementParams),
    DistributeCompressors(DistributeCompressorsParams),
    SwitchSublayer(SwitchSublayerParams),
    GroupPipelines(GroupPipelinesParams),
    AddInfrastructure(AddInfrastructureParams),
    DefineElementType(DefineElementTypeParams),
    ManageAttribute(ManageAttributeParams),
    SetElementAttributes(SetElementAttributesParams),
    AddPlanOverlay(AddPlanOverlayParams),
    IntegrateDataset(IntegrateDatasetParams),
}

impl Operation {
    /// Builds an operation from its name and raw parameters.
    pub fn parse(op: &str, params: &Value) -> Result<Self> {
        if !OPERATION_NAMES.contains(&op) {
            return Err(Error::UnknownOperation(op.to_owned()));
        }
        let params = if params.is_null() { json!({}) } else { params.clone() };
        serde_json::from_value(json!({"op": op, "params": params}))
            .map_err(|e| Error::ValidationError(format!("{op}: {e}")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Operation::AddPipeline(_) => "add_pipeline",
            Operation::DividePipeline(_) => "divide_pipeline",
            Operation::SplitNode(_) => "split_node",
            Operation::ChangeDirection(_) => "change_direction",
            Operation::AddShortPipe(_) => "add_short_pipe",
            Operation::Reconnect(_) => "reconnect",
            Operation::MoveNode(_) => "move_node",
            Operation::EditRoute(_) => "edit_route",
            Operation::DeleteElement(_) => "delete_element",
            Operation::DistributeCompressors(_) => "distribute_compressors",
            Operation::SwitchSublayer(_) => "switch_sublayer",
            Operation::GroupPipelines(_) => "group_pipelines",
            Operation::AddInfrastructure(_) => "add_infrastructure",
            Operation::DefineElementType(_) => "define_element_type",
            Operation::ManageAttribute(_) => "manage_attribute",
            Operation::SetElementAttributes(_) => "set_element_attributes",
            Operation::AddPlanOverlay(_) => "add_plan_overlay",
            Operation::IntegrateDataset(_) => "integrate_dataset",
        }
    }

    /// The parameter record as sent on the wire.
    pub fn params(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("operation serializes");
        v.get_mut("params").map(Value::take).unwrap_or(Value::Null)
    }
}

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("result serializes")
}

/// Applies `op` to `ds` in place. On error `ds` may be partially modified;
/// callers needing atomicity work on a clone.
pub fn apply(ds: &mut Dataset, op: &Operation) -> Result<Value> {
    Ok(match op {
        Operation::AddPipeline(p) => to_json(&add_pipeline(ds, &p.route, &p.start, &p.end, &p.sublayer, &p.attributes)?),
        Operation::DividePipeline(p) => to_json(&divide_pipeline(ds, &p.pipeline_id, p.click)?),
        Operation::SplitNode(p) => {
            json!({"subnodes": split_node(ds, &p.node_id, &p.plan, p.offsets.as_deref())?})
        }
        Operation::ChangeDirection(p) => to_json(&change_direction(ds, &p.pipeline_id)?),
        Operation::AddShortPipe(p) => to_json(&add_short_pipe(ds, &p.node_a, &p.node_b, p.sublayer.as_deref())?),
        Operation::Reconnect(p) => to_json(&reconnect(ds, &p.target, &p.new_node)?),
        Operation::MoveNode(p) => to_json(&move_node(ds, &p.node_id, p.new_position)?),
        Operation::EditRoute(p) => to_json(&edit_route(ds, &p.pipeline_id, &p.new_route)?),
        Operation::DeleteElement(p) => json!({"deleted": delete_element(ds, &p.id, p.cascade)?}),
        Operation::DistributeCompressors(p) => {
            let chain = match (&p.group_id, &p.pipeline_ids) {
                (Some(group_id), None) => ChainSpec::Group { group_id: group_id.clone() },
                (None, Some(pipeline_ids)) => ChainSpec::Pipelines { pipeline_ids: pipeline_ids.clone() },
                _ => return Err(Error::ValidationError("give exactly one of `group_id` or `pipeline_ids`".into())),
            };
            json!({"created": distribute_compressors(ds, &chain, p.n, &p.element_layer)?})
        }
        Operation::SwitchSublayer(p) => {
            json!({"moved": switch_sublayer(ds, &p.pipeline_ids, &p.target_sublayer, p.create_if_missing)?})
        }
        Operation::GroupPipelines(p) => to_json(&group_pipelines(ds, &p.name, &p.pipeline_ids)?),
        Operation::AddInfrastructure(p) => to_json(&add_infrastructure(ds, &p.layer, &p.placement, &p.attributes)?),
        Operation::DefineElementType(p) => {
            to_json(&ds.define_element_type(&p.name, p.kind, p.schema.clone(), p.style.clone())?)
        }
        Operation::ManageAttribute(p) => json!({"affected": ds.manage_attribute(&p.layer, &p.to_action()?)?}),
        Operation::SetElementAttributes(p) => to_json(&ds.set_element_attributes(&p.id, &p.updates)?),
        Operation::AddPlanOverlay(p) => {
            to_json(&register_plan_overlay(ds, &p.image_file, &p.pairs, p.opacity, &p.source_note)?)
        }
        Operation::IntegrateDataset(p) => to_json(&integrate_dataset(ds, &p.nodes, &p.pipelines, p.snap_tolerance_km)?),
    })
}
