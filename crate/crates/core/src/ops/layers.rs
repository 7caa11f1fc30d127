//! Layer and infrastructure management tools.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::network::{divide_at, order_chain};
use crate::error::{Error, Result};
use crate::geomath::{self, ControlPointPair, GeoPosition};
use crate::model::schema::validate_layer_name;
use crate::model::{
    Attributes, Dataset, ElementKind, InfrastructureElement, PipelineGroup, Placement, PlanOverlay, GROUP_ID_PREFIX,
};

/// Arc-length boundaries closer than this (km) to a chain node reuse it.
pub const NODE_REUSE_TOL_KM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSpec {
    Group { group_id: String },
    Pipelines { pipeline_ids: Vec<String> },
}

impl ChainSpec {
    fn pipeline_ids(&self, ds: &Dataset) -> Result<Vec<String>> {
        match self {
            ChainSpec::Group { group_id } => ds
                .groups
                .get(group_id)
                .map(|g| g.member_ids.iter().cloned().collect())
                .ok_or_else(|| Error::UnknownId(group_id.clone())),
            ChainSpec::Pipelines { pipeline_ids } => {
                for id in pipeline_ids {
                    ds.pipeline(id)?;
                }
                Ok(pipeline_ids.clone())
            }
        }
    }
}

/// Cumulative chain layout: node ids with their arc position, and each
/// pipeline's start offset along the chain.
struct ChainLayout {
    nodes: Vec<(String, f64)>,
    pipes: Vec<(String, bool, f64, f64)>,
}

fn layout(ds: &Dataset, start: &str, order: &[(String, bool)]) -> ChainLayout {
    let mut nodes = vec![(start.to_owned(), 0.0)];
    let mut pipes = Vec::with_capacity(order.len());
    let mut at = start.to_owned();
    let mut walked = 0.0;
    for (id, forward) in order {
        let p = &ds.pipelines[id];
        pipes.push((id.clone(), *forward, walked, p.length_km));
        walked += p.length_km;
        at = p.opposite(&at).to_owned();
        nodes.push((at.clone(), walked));
    }
    ChainLayout { nodes, pipes }
}

/// Places `count` compressors at equal arc-length spacing along a chain of
/// pipelines, dividing pipelines where no node exists yet.
pub fn distribute_compressors(
    ds: &mut Dataset,
    chain: &ChainSpec,
    count: usize,
    element_layer: &str,
) -> Result<Vec<String>> {
    let (_, kind) = ds.element_layer(element_layer)?;
    if kind != ElementKind::NodeAttached {
        return Err(Error::PlacementKindMismatch(element_layer.to_owned()));
    }
    if count == 0 {
        return Err(Error::InvalidParameter("compressor count must be at least 1".into()));
    }
    let ids = chain.pipeline_ids(ds)?;
    let (start, mut order) = order_chain(ds, &ids)?;
    let total: f64 = order.iter().map(|(id, _)| ds.pipelines[id].length_km).sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("chain has zero length".into()));
    }
    let attributes = ds.attributes_with_defaults(element_layer, &Attributes::new())?;

    let mut created = Vec::with_capacity(count);
    for i in 1..=count {
        let s = total * i as f64 / (count + 1) as f64;
        let chain_now = layout(ds, &start, &order);
        let node = match chain_now.nodes.iter().find(|(_, at)| (s - at).abs() <= NODE_REUSE_TOL_KM) {
            Some((id, _)) => id.clone(),
            None => {
                let (pid, forward, offset, len) = chain_now
                    .pipes
                    .iter()
                    .find(|(_, _, offset, len)| s > *offset && s < offset + len)
                    .cloned()
                    .expect("interior boundary falls inside some pipeline");
                let local = if forward { s - offset } else { len - (s - offset) };
                let at = geomath::locate_along(&ds.pipelines[&pid].route, local)?;
                let out = divide_at(ds, &pid, at.segment_index, at.t)?;
                let pos = order.iter().position(|(id, _)| id == &pid).expect("pipeline in chain");
                let halves = if forward {
                    [(out.pipeline_a, true), (out.pipeline_b, true)]
                } else {
                    [(out.pipeline_b, false), (out.pipeline_a, false)]
                };
                order.splice(pos..=pos, halves);
                out.node
            }
        };
        let id = ds.next_id(element_layer);
        ds.elements.insert(
            id.clone(),
            InfrastructureElement {
                id: id.clone(),
                layer: element_layer.to_owned(),
                placement: Placement::NodeAttached { node_ref: node },
                attributes: attributes.clone(),
            },
        );
        created.push(id);
    }
    Ok(created)
}

/// Moves pipelines to another sublayer; graph and attributes are untouched.
/// Returns how many pipelines actually changed sublayer.
pub fn switch_sublayer(ds: &mut Dataset, pipeline_ids: &[String], target: &str, create_if_missing: bool) -> Result<usize> {
    for id in pipeline_ids {
        ds.pipeline(id)?;
    }
    match ds.layer_config(target) {
        Some(cfg) if cfg.is_sublayer() => {}
        Some(_) => return Err(Error::InvalidParameter(format!("`{target}` is not a pipeline sublayer"))),
        None if create_if_missing => {
            validate_layer_name(target)?;
            ds.ensure_sublayer(target);
        }
        None => return Err(Error::UnknownSublayer(target.to_owned())),
    }
    let mut moved = 0;
    for id in pipeline_ids.iter().collect::<BTreeSet<_>>() {
        let p = ds.pipelines.get_mut(id).expect("checked above");
        if p.sublayer != target {
            p.sublayer = target.to_owned();
            moved += 1;
        }
    }
    Ok(moved)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    #[serde(flatten)]
    pub group: PipelineGroup,
    pub total_length_km: f64,
}

pub fn group_pipelines(ds: &mut Dataset, name: &str, pipeline_ids: &[String]) -> Result<GroupSummary> {
    if pipeline_ids.is_empty() {
        return Err(Error::InvalidParameter("a group needs at least one pipeline".into()));
    }
    for id in pipeline_ids {
        let p = ds.pipeline(id)?;
        if let Some(group) = &p.group_id {
            return Err(Error::AlreadyGrouped { pipeline: id.clone(), group: group.clone() });
        }
    }
    let group = PipelineGroup {
        id: ds.next_id(GROUP_ID_PREFIX),
        name: name.to_owned(),
        member_ids: pipeline_ids.iter().cloned().collect(),
    };
    for id in &group.member_ids {
        ds.pipelines.get_mut(id).expect("checked above").group_id = Some(group.id.clone());
    }
    ds.groups.insert(group.id.clone(), group.clone());
    let total_length_km = ds.group_total_length_km(&group);
    Ok(GroupSummary { group, total_length_km })
}

/// Where a new element goes; must match the layer's kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlacementSpec {
    Node { node_id: String },
    InLine { pipeline_id: String, fraction: f64 },
    Point { position: GeoPosition },
    Line { route: Vec<GeoPosition> },
}

pub fn add_infrastructure(
    ds: &mut Dataset,
    layer: &str,
    placement: &PlacementSpec,
    attributes: &Attributes,
) -> Result<InfrastructureElement> {
    let (_, kind) = ds.element_layer(layer)?;
    let placement = match (kind, placement) {
        (ElementKind::NodeAttached, PlacementSpec::Node { node_id }) => {
            ds.node(node_id)?;
            Placement::NodeAttached { node_ref: node_id.clone() }
        }
        (ElementKind::InLine, PlacementSpec::InLine { pipeline_id, fraction }) => {
            ds.pipeline(pipeline_id)?;
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::InvalidParameter(format!("fraction {fraction} outside [0, 1]")));
            }
            Placement::InLine { pipeline_ref: pipeline_id.clone(), position_fraction: *fraction }
        }
        (ElementKind::Point, PlacementSpec::Point { position }) => Placement::Point { position: *position },
        (ElementKind::Line, PlacementSpec::Line { route }) => {
            if route.len() < 2 {
                return Err(Error::InvalidGeometry("line elements need at least 2 points".into()));
            }
            Placement::Line { route: route.clone() }
        }
        _ => return Err(Error::PlacementKindMismatch(layer.to_owned())),
    };
    let attributes = ds.attributes_with_defaults(layer, attributes)?;
    let element = InfrastructureElement { id: ds.next_id(layer), layer: layer.to_owned(), placement, attributes };
    ds.elements.insert(element.id.clone(), element.clone());
    Ok(element)
}

/// Registers a georeferenced plan image already stored in the plans directory.
pub fn register_plan_overlay(
    ds: &mut Dataset,
    image_file: &str,
    pairs: &[ControlPointPair],
    opacity: f64,
    source_note: &str,
) -> Result<PlanOverlay> {
    let bare = !image_file.is_empty()
        && !image_file.contains(['/', '\\'])
        && image_file != "."
        && image_file != "..";
    if !bare {
        return Err(Error::InvalidParameter(format!("`{image_file}` must be a file name inside plans/")));
    }
    if !(0.0..=1.0).contains(&opacity) {
        return Err(Error::InvalidParameter(format!("opacity {opacity} outside [0, 1]")));
    }
    let transform = geomath::solve_affine(pairs)?;
    let next = ds
        .plan_overlays
        .iter()
        .filter_map(|o| o.id.strip_prefix("plan_")?.parse::<u64>().ok())
        .max()
        .unwrap_or(0)
        + 1;
    let overlay = PlanOverlay {
        id: format!("plan_{next}"),
        image_file: image_file.to_owned(),
        transform,
        opacity,
        source_note: source_note.to_owned(),
        control_points: pairs.to_vec(),
    };
    ds.plan_overlays.push(overlay.clone());
    Ok(overlay)
}
