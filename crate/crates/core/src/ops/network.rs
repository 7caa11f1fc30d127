//! Graph-mutating tools: pipelines, nodes and their connections.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomath::{self, GeoPosition};
use crate::model::schema::validate_layer_name;
use crate::model::{
    Attributes, Dataset, Node, ObjectSnapshot, Pipeline, Placement, DEFAULT_SUBLAYER, NODES_LAYER, NODE_ID_PREFIX,
    PIPELINES_LAYER, PIPELINE_ID_PREFIX,
};

/// Route endpoints this close (degrees) to the chosen node are snapped onto it.
pub const SNAP_TOL_DEG: f64 = 1e-6;
/// Tolerance (degrees) for route endpoints supplied to `edit_route`.
pub const ENDPOINT_MATCH_TOL_DEG: f64 = 1e-9;
const DUPLICATE_POINT_TOL_DEG: f64 = 1e-12;
/// Division points closer than this (km) to a terminal node are rejected.
const TERMINAL_TOL_KM: f64 = 1e-9;

/// A pipeline end: an existing node id, or `"new"` to create one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Endpoint {
    New,
    Existing(String),
}

impl From<String> for Endpoint {
    fn from(s: String) -> Self {
        if s == "new" {
            Endpoint::New
        } else {
            Endpoint::Existing(s)
        }
    }
}

impl From<Endpoint> for String {
    fn from(e: Endpoint) -> Self {
        match e {
            Endpoint::New => "new".into(),
            Endpoint::Existing(id) => id,
        }
    }
}

impl From<&str> for Endpoint {
    fn from(s: &str) -> Self {
        Endpoint::from(s.to_owned())
    }
}

pub(crate) fn new_node(ds: &mut Dataset, position: GeoPosition, name: Option<String>, attributes: Attributes) -> String {
    let id = ds.next_id(NODE_ID_PREFIX);
    let name = name.unwrap_or_else(|| id.clone());
    ds.nodes.insert(id.clone(), Node { id: id.clone(), name, position, attributes });
    id
}

fn check_route(route: &[GeoPosition]) -> Result<()> {
    if route.len() < 2 {
        return Err(Error::InvalidGeometry(format!("route has {} points, need at least 2", route.len())));
    }
    if let Some(i) = route.windows(2).position(|w| w[0].approx_eq(&w[1], DUPLICATE_POINT_TOL_DEG)) {
        return Err(Error::InvalidGeometry(format!("duplicate consecutive points at vertex {}", i + 1)));
    }
    Ok(())
}

pub fn add_pipeline(
    ds: &mut Dataset,
    route: &[GeoPosition],
    start: &Endpoint,
    end: &Endpoint,
    sublayer: &str,
    attributes: &Attributes,
) -> Result<Pipeline> {
    check_route(route)?;
    validate_layer_name(sublayer)?;
    if let Some(cfg) = ds.layer_config(sublayer) {
        if !cfg.is_sublayer() {
            return Err(Error::InvalidParameter(format!("`{sublayer}` is not a pipeline sublayer")));
        }
    }
    if let (Endpoint::Existing(a), Endpoint::Existing(b)) = (start, end) {
        if a == b {
            return Err(Error::SelfLoop(a.clone()));
        }
    }
    let mut route = route.to_vec();
    let last = route.len() - 1;
    for (endpoint, index) in [(start, 0), (end, last)] {
        if let Endpoint::Existing(id) = endpoint {
            let node = ds.node(id)?;
            if !route[index].approx_eq(&node.position, SNAP_TOL_DEG) {
                return Err(Error::EndpointMismatch(id.clone()));
            }
            route[index] = node.position;
        }
    }
    check_route(&route)?;
    let attributes = ds.attributes_with_defaults(PIPELINES_LAYER, attributes)?;
    let node_defaults = ds.attributes_with_defaults(NODES_LAYER, &Attributes::new())?;

    let resolve = |ds: &mut Dataset, endpoint: &Endpoint, at: GeoPosition| match endpoint {
        Endpoint::Existing(id) => id.clone(),
        Endpoint::New => new_node(ds, at, None, node_defaults.clone()),
    };
    let start_node = resolve(ds, start, route[0]);
    let end_node = resolve(ds, end, route[last]);
    ds.ensure_sublayer(sublayer);

    let mut pipeline = Pipeline {
        id: ds.next_id(PIPELINE_ID_PREFIX),
        start_node,
        end_node,
        route,
        length_km: 0.0,
        is_short_pipe: false,
        sublayer: sublayer.to_owned(),
        group_id: None,
        attributes,
    };
    pipeline.refresh_length();
    ds.pipelines.insert(pipeline.id.clone(), pipeline.clone());
    Ok(pipeline)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivideOutcome {
    pub pipeline_a: String,
    pub pipeline_b: String,
    pub node: String,
}

pub fn divide_pipeline(ds: &mut Dataset, pipeline_id: &str, click: GeoPosition) -> Result<DivideOutcome> {
    let p = ds.pipeline(pipeline_id)?;
    if p.is_short_pipe {
        return Err(Error::ShortPipeNotDividable(pipeline_id.to_owned()));
    }
    let proj = geomath::project_point_to_polyline(click, &p.route)?;
    divide_at(ds, pipeline_id, proj.segment_index, proj.t)
}

fn half_ids(ds: &Dataset, id: &str) -> (String, String) {
    let (a, b) = (format!("{id}_a"), format!("{id}_b"));
    if !ds.contains_id(&a) && !ds.contains_id(&b) {
        return (a, b);
    }
    let first = ds.next_id(PIPELINE_ID_PREFIX);
    let n: u64 = first.rsplit('_').next().and_then(|s| s.parse().ok()).unwrap_or(1);
    (first, format!("{PIPELINE_ID_PREFIX}_{}", n + 1))
}

/// Splits a pipeline at fraction `t` of route segment `segment`.
pub(crate) fn divide_at(ds: &mut Dataset, pipeline_id: &str, segment: usize, t: f64) -> Result<DivideOutcome> {
    let original = ds.pipeline(pipeline_id)?.clone();
    if original.is_short_pipe {
        return Err(Error::ShortPipeNotDividable(pipeline_id.to_owned()));
    }
    let route = &original.route;
    let last_segment = route.len() - 2;
    if segment > last_segment {
        return Err(Error::InvalidParameter(format!("segment {segment} out of range")));
    }
    // normalise a vertex hit onto the vertex index it names
    let vertex = if t >= 1.0 {
        Some(segment + 1)
    } else if t <= 0.0 {
        Some(segment)
    } else {
        None
    };
    let (route_a, route_b, at) = match vertex {
        Some(k) if k == 0 || k == route.len() - 1 => return Err(Error::SplitAtEndpoint(pipeline_id.to_owned())),
        Some(k) => (route[..=k].to_vec(), route[k..].to_vec(), route[k]),
        None => {
            let m = geomath::interpolate(route[segment], route[segment + 1], t);
            let mut a = route[..=segment].to_vec();
            a.push(m);
            let mut b = vec![m];
            b.extend_from_slice(&route[segment + 1..]);
            (a, b, m)
        }
    };
    let ends = [route[0], route[route.len() - 1]];
    if ends.iter().any(|e| geomath::haversine_km(*e, at) < TERMINAL_TOL_KM) {
        return Err(Error::SplitAtEndpoint(pipeline_id.to_owned()));
    }

    let node_defaults = ds.attributes_with_defaults(NODES_LAYER, &Attributes::new())?;
    let node = new_node(ds, at, None, node_defaults);
    let (id_a, id_b) = half_ids(ds, pipeline_id);

    let mut a = Pipeline { id: id_a.clone(), end_node: node.clone(), route: route_a, ..original.clone() };
    let mut b = Pipeline { id: id_b.clone(), start_node: node.clone(), route: route_b, ..original.clone() };
    a.refresh_length();
    b.refresh_length();
    let total = a.length_km + b.length_km;
    let split_fraction = if total > 0.0 { a.length_km / total } else { 0.5 };

    ds.pipelines.remove(pipeline_id);
    ds.pipelines.insert(id_a.clone(), a);
    ds.pipelines.insert(id_b.clone(), b);

    for e in ds.elements.values_mut() {
        if let Placement::InLine { pipeline_ref, position_fraction } = &mut e.placement {
            if pipeline_ref != pipeline_id {
                continue;
            }
            let f = *position_fraction;
            if f <= split_fraction {
                *pipeline_ref = id_a.clone();
                *position_fraction = if split_fraction > 0.0 { (f / split_fraction).clamp(0.0, 1.0) } else { 0.0 };
            } else {
                *pipeline_ref = id_b.clone();
                *position_fraction = ((f - split_fraction) / (1.0 - split_fraction)).clamp(0.0, 1.0);
            }
        }
    }
    if let Some(group) = original.group_id.as_ref().and_then(|g| ds.groups.get_mut(g)) {
        group.member_ids.remove(pipeline_id);
        group.member_ids.insert(id_a.clone());
        group.member_ids.insert(id_b.clone());
    }
    Ok(DivideOutcome { pipeline_a: id_a, pipeline_b: id_b, node })
}

/// Which subnode each incident pipeline and attached element moves to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub subnode_count: usize,
    pub assignment: BTreeMap<String, usize>,
}

pub fn split_node(
    ds: &mut Dataset,
    node_id: &str,
    plan: &SplitAssignment,
    offsets: Option<&[[f64; 2]]>,
) -> Result<Vec<String>> {
    let original = ds.node(node_id)?.clone();
    let k = plan.subnode_count;
    if k < 2 {
        return Err(Error::InvalidParameter(format!("subnode_count must be at least 2, got {k}")));
    }
    let incident = ds.incident_pipelines(node_id);
    let attached = ds.attached_elements(node_id);
    for id in incident.iter().chain(&attached) {
        match plan.assignment.get(id) {
            None => return Err(Error::IncompleteAssignment(id.clone())),
            Some(&index) if index >= k => return Err(Error::InvalidSubnodeIndex { index, count: k }),
            Some(_) => {}
        }
    }
    if let Some(extra) = plan.assignment.keys().find(|id| !incident.contains(id) && !attached.contains(id)) {
        return Err(Error::InvalidParameter(format!("`{extra}` is not connected to `{node_id}`")));
    }
    let positions: Vec<GeoPosition> = match offsets {
        None => vec![original.position; k],
        Some(o) if o.len() != k => {
            return Err(Error::InvalidParameter(format!("{} offsets for {k} subnodes", o.len())))
        }
        Some(o) => o
            .iter()
            .map(|[dlon, dlat]| original.position.offset(*dlon, *dlat))
            .collect::<std::result::Result<_, _>>()?,
    };

    // create first so generated ids stay distinct from the original
    let mut subnodes = Vec::with_capacity(k);
    for position in positions {
        let id = new_node(ds, position, Some(original.name.clone()), original.attributes.clone());
        subnodes.push(id);
    }
    ds.nodes.remove(node_id);
    for pid in &incident {
        let target = &subnodes[plan.assignment[pid]];
        let position = ds.nodes[target].position;
        let p = ds.pipelines.get_mut(pid).expect("incident pipeline exists");
        if p.start_node == node_id {
            p.start_node = target.clone();
            p.route[0] = position;
        }
        if p.end_node == node_id {
            p.end_node = target.clone();
            let last = p.route.len() - 1;
            p.route[last] = position;
        }
        p.refresh_length();
    }
    for eid in &attached {
        let target = subnodes[plan.assignment[eid]].clone();
        if let Some(e) = ds.elements.get_mut(eid) {
            e.placement = Placement::NodeAttached { node_ref: target };
        }
    }
    Ok(subnodes)
}

pub fn change_direction(ds: &mut Dataset, pipeline_id: &str) -> Result<Pipeline> {
    let p = ds.pipeline_mut(pipeline_id)?;
    std::mem::swap(&mut p.start_node, &mut p.end_node);
    p.route.reverse();
    let p = p.clone();
    for e in ds.elements.values_mut() {
        if let Placement::InLine { pipeline_ref, position_fraction } = &mut e.placement {
            if pipeline_ref == pipeline_id {
                *position_fraction = 1.0 - *position_fraction;
            }
        }
    }
    Ok(p)
}

fn short_pipe_between(ds: &Dataset, a: &str, b: &str) -> bool {
    ds.pipelines.values().any(|p| {
        p.is_short_pipe && ((p.start_node == a && p.end_node == b) || (p.start_node == b && p.end_node == a))
    })
}

pub fn add_short_pipe(ds: &mut Dataset, a: &str, b: &str, sublayer: Option<&str>) -> Result<Pipeline> {
    if a == b {
        return Err(Error::SelfLoop(a.to_owned()));
    }
    let (pa, pb) = (ds.node(a)?.position, ds.node(b)?.position);
    if short_pipe_between(ds, a, b) {
        return Err(Error::DuplicateShortPipe(a.to_owned(), b.to_owned()));
    }
    let sublayer = match sublayer {
        Some(s) => {
            validate_layer_name(s)?;
            s.to_owned()
        }
        None => ds
            .pipelines
            .values()
            .find(|p| p.touches(a))
            .or_else(|| ds.pipelines.values().find(|p| p.touches(b)))
            .map_or_else(|| DEFAULT_SUBLAYER.to_owned(), |p| p.sublayer.clone()),
    };
    if ds.layer_config(&sublayer).is_some_and(|c| !c.is_sublayer()) {
        return Err(Error::InvalidParameter(format!("`{sublayer}` is not a pipeline sublayer")));
    }
    let attributes = ds.attributes_with_defaults(PIPELINES_LAYER, &Attributes::new())?;
    ds.ensure_sublayer(&sublayer);
    let p = Pipeline {
        id: ds.next_id(PIPELINE_ID_PREFIX),
        start_node: a.to_owned(),
        end_node: b.to_owned(),
        route: vec![pa, pb],
        length_km: 0.0,
        is_short_pipe: true,
        sublayer,
        group_id: None,
        attributes,
    };
    ds.pipelines.insert(p.id.clone(), p.clone());
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineEnd {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReconnectTarget {
    PipelineEnd { pipeline_id: String, end: PipelineEnd },
    Element { element_id: String },
}

pub fn reconnect(ds: &mut Dataset, target: &ReconnectTarget, new_node: &str) -> Result<ObjectSnapshot> {
    let position = ds.node(new_node)?.position;
    match target {
        ReconnectTarget::PipelineEnd { pipeline_id, end } => {
            let p = ds.pipeline(pipeline_id)?;
            let opposite = match end {
                PipelineEnd::Start => &p.end_node,
                PipelineEnd::End => &p.start_node,
            };
            if opposite == new_node {
                return Err(Error::SelfLoop(new_node.to_owned()));
            }
            if p.is_short_pipe && short_pipe_between(ds, opposite, new_node) {
                return Err(Error::DuplicateShortPipe(opposite.clone(), new_node.to_owned()));
            }
            let p = ds.pipeline_mut(pipeline_id)?;
            match end {
                PipelineEnd::Start => {
                    p.start_node = new_node.to_owned();
                    p.route[0] = position;
                }
                PipelineEnd::End => {
                    p.end_node = new_node.to_owned();
                    let last = p.route.len() - 1;
                    p.route[last] = position;
                }
            }
            p.refresh_length();
            Ok(ObjectSnapshot::Pipeline(p.clone()))
        }
        ReconnectTarget::Element { element_id } => {
            let e = ds.elements.get_mut(element_id).ok_or_else(|| Error::UnknownId(element_id.clone()))?;
            match &mut e.placement {
                Placement::NodeAttached { node_ref } => *node_ref = new_node.to_owned(),
                _ => return Err(Error::PlacementKindMismatch(e.layer.clone())),
            }
            Ok(ObjectSnapshot::Element(e.clone()))
        }
    }
}

pub fn move_node(ds: &mut Dataset, node_id: &str, position: GeoPosition) -> Result<Node> {
    let node = ds.node_mut(node_id)?;
    node.position = position;
    let node = node.clone();
    for p in ds.pipelines.values_mut().filter(|p| p.touches(node_id)) {
        if p.start_node == node_id {
            p.route[0] = position;
        }
        if p.end_node == node_id {
            let last = p.route.len() - 1;
            p.route[last] = position;
        }
        p.refresh_length();
    }
    Ok(node)
}

pub fn edit_route(ds: &mut Dataset, pipeline_id: &str, new_route: &[GeoPosition]) -> Result<Pipeline> {
    let p = ds.pipeline(pipeline_id)?;
    if new_route.len() < 2 {
        return Err(Error::InvalidGeometry(format!("route has {} points, need at least 2", new_route.len())));
    }
    if p.is_short_pipe && new_route.len() != 2 {
        return Err(Error::InvalidGeometry("short-pipes keep exactly 2 points".into()));
    }
    let (start, end) = (ds.node(&p.start_node)?.position, ds.node(&p.end_node)?.position);
    if !new_route[0].approx_eq(&start, ENDPOINT_MATCH_TOL_DEG) {
        return Err(Error::EndpointMismatch(p.start_node.clone()));
    }
    if !new_route[new_route.len() - 1].approx_eq(&end, ENDPOINT_MATCH_TOL_DEG) {
        return Err(Error::EndpointMismatch(p.end_node.clone()));
    }
    let mut route = new_route.to_vec();
    let last = route.len() - 1;
    route[0] = start;
    route[last] = end;
    let p = ds.pipeline_mut(pipeline_id)?;
    p.route = route;
    p.refresh_length();
    Ok(p.clone())
}

fn remove_pipeline(ds: &mut Dataset, pipeline_id: &str, deleted: &mut Vec<String>) {
    let Some(p) = ds.pipelines.remove(pipeline_id) else { return };
    deleted.push(p.id.clone());
    for eid in ds.inline_elements(pipeline_id) {
        ds.elements.remove(&eid);
        deleted.push(eid);
    }
    if let Some(g) = p.group_id {
        let empty = ds.groups.get_mut(&g).map(|group| {
            group.member_ids.remove(pipeline_id);
            group.member_ids.is_empty()
        });
        if empty == Some(true) {
            ds.groups.remove(&g);
        }
    }
}

/// Deletes an object. Nodes with dependents need `cascade`.
pub fn delete_element(ds: &mut Dataset, id: &str, cascade: bool) -> Result<Vec<String>> {
    let mut deleted = Vec::new();
    if ds.nodes.contains_key(id) {
        let pipelines = ds.incident_pipelines(id);
        let attached = ds.attached_elements(id);
        if !cascade && !(pipelines.is_empty() && attached.is_empty()) {
            let dependents = pipelines.into_iter().chain(attached).collect();
            return Err(Error::NodeInUse { node: id.to_owned(), dependents });
        }
        for pid in &pipelines {
            remove_pipeline(ds, pid, &mut deleted);
        }
        for eid in attached {
            ds.elements.remove(&eid);
            deleted.push(eid);
        }
        ds.nodes.remove(id);
        deleted.push(id.to_owned());
    } else if ds.pipelines.contains_key(id) {
        remove_pipeline(ds, id, &mut deleted);
    } else if ds.elements.remove(id).is_some() {
        deleted.push(id.to_owned());
    } else if let Some(group) = ds.groups.remove(id) {
        for m in &group.member_ids {
            if let Some(p) = ds.pipelines.get_mut(m) {
                p.group_id = None;
            }
        }
        deleted.push(id.to_owned());
    } else {
        return Err(Error::UnknownId(id.to_owned()));
    }
    Ok(deleted)
}

/// Orders `ids` into a simple path; returns (pipeline id, traversed forward)
/// pairs and the start node.
pub(crate) fn order_chain(ds: &Dataset, ids: &[String]) -> Result<(String, Vec<(String, bool)>)> {
    let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    if set.is_empty() {
        return Err(Error::NotAChain("no pipelines given".into()));
    }
    let mut ends: BTreeMap<&str, usize> = BTreeMap::new();
    for id in &set {
        let p = ds.pipeline(id)?;
        *ends.entry(&p.start_node).or_default() += 1;
        *ends.entry(&p.end_node).or_default() += 1;
    }
    if let Some((n, _)) = ends.iter().find(|(_, &c)| c > 2) {
        return Err(Error::NotAChain(format!("node `{n}` joins more than two of the pipelines")));
    }
    let terminals: Vec<&str> = ends.iter().filter(|(_, &c)| c == 1).map(|(n, _)| *n).collect();
    if terminals.len() != 2 {
        return Err(Error::NotAChain("pipelines form a loop".into()));
    }
    // keep the caller's direction when the first listed pipeline is a chain end
    let first = ds.pipeline(&ids[0])?;
    let start = if terminals.contains(&first.start_node.as_str()) {
        first.start_node.clone()
    } else if terminals.contains(&first.end_node.as_str()) {
        first.end_node.clone()
    } else {
        terminals[0].to_owned()
    };
    let mut order = Vec::with_capacity(set.len());
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut at = start.clone();
    while order.len() < set.len() {
        let next = set
            .iter()
            .find(|id| !used.contains(**id) && ds.pipelines[**id].touches(&at))
            .copied()
            .ok_or_else(|| Error::NotAChain("pipelines are not connected".into()))?;
        used.insert(next);
        let p = &ds.pipelines[next];
        let forward = p.start_node == at;
        at = p.opposite(&at).to_owned();
        order.push((next.to_owned(), forward));
    }
    Ok((start, order))
}
