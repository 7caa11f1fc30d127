//! Merging external point/linestring data into a dataset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::geojson::{self, Feature, Geometry};
use crate::error::{Error, Result};
use crate::geomath::{self, GeoPosition};
use crate::model::schema::validate_layer_name;
use crate::model::{
    is_reserved_attribute, AttrValue, AttributeAction, Attributes, Dataset, Node, Pipeline, DEFAULT_SUBLAYER,
    NODES_LAYER, NODE_ID_PREFIX, PIPELINES_LAYER, PIPELINE_ID_PREFIX,
};

pub const DEFAULT_SNAP_TOLERANCE_KM: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMatch {
    pub external_id: String,
    pub local_id: String,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMatch {
    pub external_id: String,
    pub local_id: String,
}

/// A key both sides carry with different values; the local value is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConflict {
    pub object_id: String,
    pub key: String,
    pub local: AttrValue,
    pub external: AttrValue,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub created_ids: Vec<String>,
    pub matched_nodes: Vec<NodeMatch>,
    pub matched_pipelines: Vec<PipelineMatch>,
    pub transferred_attributes: usize,
    pub conflicts: Vec<AttributeConflict>,
    /// External pipelines whose ends collapse onto one node.
    pub skipped: Vec<String>,
}

struct ExternalNode {
    id: String,
    position: GeoPosition,
    name: Option<String>,
    attributes: Attributes,
}

struct ExternalPipeline {
    id: String,
    route: Vec<GeoPosition>,
    start: usize,
    end: usize,
    sublayer: Option<String>,
    attributes: Attributes,
}

fn parse_error(file: &Path, index: usize, cause: impl Into<String>) -> Error {
    Error::ParseError { file: file.to_owned(), index: Some(index), cause: cause.into() }
}

fn external_id(f: &Feature, prefix: &str) -> String {
    f.str_prop("id").map_or_else(|| format!("{prefix}#{}", f.index), str::to_owned)
}

fn parse_external(nodes: &Value, pipelines: &Value) -> Result<(Vec<ExternalNode>, Vec<ExternalPipeline>)> {
    let nodes_file = Path::new("external nodes");
    let pipes_file = Path::new("external pipelines");
    let mut out_nodes: Vec<ExternalNode> = Vec::new();
    let mut by_id: BTreeMap<String, usize> = BTreeMap::new();
    for f in geojson::parse_collection(nodes, nodes_file)? {
        let Geometry::Point(position) = f.geometry else {
            return Err(parse_error(nodes_file, f.index, format!("{} is not a Point", f.geometry.type_name())));
        };
        let id = external_id(&f, "node");
        if by_id.insert(id.clone(), out_nodes.len()).is_some() {
            return Err(parse_error(nodes_file, f.index, format!("duplicate id `{id}`")));
        }
        out_nodes.push(ExternalNode {
            id,
            position,
            name: f.str_prop("name").map(str::to_owned),
            attributes: geojson::free_attributes(&f.properties, |k| is_reserved_attribute(NODES_LAYER, k), nodes_file, f.index)?,
        });
    }

    let mut out_pipes = Vec::new();
    for f in geojson::parse_collection(pipelines, pipes_file)? {
        let Geometry::LineString(route) = &f.geometry else {
            return Err(parse_error(pipes_file, f.index, format!("{} is not a LineString", f.geometry.type_name())));
        };
        if route.len() < 2 {
            return Err(parse_error(pipes_file, f.index, "route needs at least 2 points"));
        }
        // ends without a usable node reference get a synthetic node at the vertex
        let mut endpoint = |key: &str, at: GeoPosition| -> Result<usize> {
            match f.properties.get(key) {
                Some(Value::String(id)) => by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| parse_error(pipes_file, f.index, format!("`{key}` names unknown node `{id}`"))),
                _ => {
                    let id = format!("@{},{}", at.lon(), at.lat());
                    Ok(*by_id.entry(id.clone()).or_insert_with(|| {
                        out_nodes.push(ExternalNode { id, position: at, name: None, attributes: Attributes::new() });
                        out_nodes.len() - 1
                    }))
                }
            }
        };
        let start = endpoint("start_node", route[0])?;
        let end = endpoint("end_node", route[route.len() - 1])?;
        out_pipes.push(ExternalPipeline {
            id: external_id(&f, "pipe"),
            route: route.clone(),
            start,
            end,
            sublayer: f.str_prop("sublayer").map(str::to_owned),
            attributes: geojson::free_attributes(&f.properties, |k| is_reserved_attribute(PIPELINES_LAYER, k), pipes_file, f.index)?,
        });
    }
    Ok((out_nodes, out_pipes))
}

fn ensure_key(ds: &mut Dataset, layer: &str, key: &str) -> Result<()> {
    if !ds.schema(layer)?.iter().any(|s| s.key == key) {
        ds.manage_attribute(layer, &AttributeAction::Add { key: key.to_owned(), default: AttrValue::Null })?;
    }
    Ok(())
}

/// Copies external values onto keys the local object lacks (or holds null
/// for); differing non-null values become conflicts.
fn transfer(
    ds: &mut Dataset,
    layer: &str,
    object_id: &str,
    external: &Attributes,
    report: &mut MergeReport,
) -> Result<()> {
    for (key, value) in external.iter().filter(|(_, v)| !v.is_null()) {
        ensure_key(ds, layer, key)?;
        let attrs = match layer {
            NODES_LAYER => &mut ds.nodes.get_mut(object_id).expect("matched node").attributes,
            _ => &mut ds.pipelines.get_mut(object_id).expect("matched pipeline").attributes,
        };
        let local = attrs.get(key).cloned().unwrap_or_default();
        if local.is_null() {
            attrs.insert(key.clone(), value.clone());
            report.transferred_attributes += 1;
        } else if &local != value {
            report.conflicts.push(AttributeConflict {
                object_id: object_id.to_owned(),
                key: key.clone(),
                local,
                external: value.clone(),
            });
        }
    }
    Ok(())
}

fn new_attributes(ds: &mut Dataset, layer: &str, given: &Attributes) -> Result<Attributes> {
    for key in given.keys() {
        ensure_key(ds, layer, key)?;
    }
    ds.attributes_with_defaults(layer, given)
}

pub fn integrate_dataset(ds: &mut Dataset, nodes: &Value, pipelines: &Value, snap_tolerance_km: f64) -> Result<MergeReport> {
    if !(snap_tolerance_km.is_finite() && snap_tolerance_km > 0.0) {
        return Err(Error::InvalidParameter(format!("snap tolerance {snap_tolerance_km} must be positive")));
    }
    let (ext_nodes, ext_pipes) = parse_external(nodes, pipelines)?;
    let mut report = MergeReport::default();

    let mut candidates: Vec<(f64, usize, String)> = Vec::new();
    for (i, e) in ext_nodes.iter().enumerate() {
        for n in ds.nodes.values() {
            let d = geomath::haversine_km(e.position, n.position);
            if d <= snap_tolerance_km {
                candidates.push((d, i, n.id.clone()));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut local_of: Vec<Option<String>> = vec![None; ext_nodes.len()];
    let mut taken = std::collections::BTreeSet::new();
    for (d, i, local) in candidates {
        if local_of[i].is_some() || taken.contains(&local) {
            continue;
        }
        taken.insert(local.clone());
        report.matched_nodes.push(NodeMatch { external_id: ext_nodes[i].id.clone(), local_id: local.clone(), distance_km: d });
        local_of[i] = Some(local);
    }
    report.matched_nodes.sort_by(|a, b| a.external_id.cmp(&b.external_id));

    for (i, e) in ext_nodes.iter().enumerate() {
        match &local_of[i] {
            Some(local) => transfer(ds, NODES_LAYER, local, &e.attributes, &mut report)?,
            None => {
                let attributes = new_attributes(ds, NODES_LAYER, &e.attributes)?;
                let id = ds.next_id(NODE_ID_PREFIX);
                let name = e.name.clone().unwrap_or_else(|| id.clone());
                ds.nodes.insert(id.clone(), Node { id: id.clone(), name, position: e.position, attributes });
                report.created_ids.push(id.clone());
                local_of[i] = Some(id);
            }
        }
    }

    for ep in &ext_pipes {
        let a = local_of[ep.start].clone().expect("every external node resolved");
        let b = local_of[ep.end].clone().expect("every external node resolved");
        if a == b {
            report.skipped.push(ep.id.clone());
            continue;
        }
        let existing = ds
            .pipelines
            .values()
            .find(|p| (p.start_node == a && p.end_node == b) || (p.start_node == b && p.end_node == a))
            .map(|p| p.id.clone());
        if let Some(local) = existing {
            transfer(ds, PIPELINES_LAYER, &local, &ep.attributes, &mut report)?;
            report.matched_pipelines.push(PipelineMatch { external_id: ep.id.clone(), local_id: local });
            continue;
        }
        let mut route = ep.route.clone();
        let last = route.len() - 1;
        route[0] = ds.nodes[&a].position;
        route[last] = ds.nodes[&b].position;
        route.dedup_by(|x, y| x.approx_eq(y, 1e-12));
        if route.len() < 2 {
            report.skipped.push(ep.id.clone());
            continue;
        }
        let sublayer = ep
            .sublayer
            .clone()
            .filter(|s| validate_layer_name(s).is_ok() && ds.layer_config(s).is_none_or(|c| c.is_sublayer()))
            .unwrap_or_else(|| DEFAULT_SUBLAYER.to_owned());
        ds.ensure_sublayer(&sublayer);
        let attributes = new_attributes(ds, PIPELINES_LAYER, &ep.attributes)?;
        let mut p = Pipeline {
            id: ds.next_id(PIPELINE_ID_PREFIX),
            start_node: a,
            end_node: b,
            route,
            length_km: 0.0,
            is_short_pipe: false,
            sublayer,
            group_id: None,
            attributes,
        };
        p.refresh_length();
        report.created_ids.push(p.id.clone());
        ds.pipelines.insert(p.id.clone(), p);
    }
    Ok(report)
}

/// Serializes part of a dataset as external feature collections, useful for
/// exchanging network sections between projects.
pub fn external_collections(ds: &Dataset) -> (Value, Value) {
    let nodes = super::layer_features(ds, NODES_LAYER).expect("nodes layer");
    let pipelines = super::layer_features(ds, PIPELINES_LAYER).expect("pipelines layer");
    (nodes, pipelines)
}
