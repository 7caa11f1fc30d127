//! Reference auditing, topology checking and network statistics.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomath;
use crate::model::{AttrValue, Dataset, Placement, NODES_LAYER, PIPELINES_LAYER};

/// Coordinate tolerance for endpoint coincidence, degrees.
pub const ENDPOINT_TOL_DEG: f64 = 1e-9;
/// Relative tolerance for stored lengths.
pub const LENGTH_REL_TOL: f64 = 1e-9;

const UNDOCUMENTED_SOURCE: &str = "undocumented";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DanglingReference {
    pub object_id: String,
    pub field: String,
    pub missing_id: String,
}

pub fn check_references(ds: &Dataset) -> Vec<DanglingReference> {
    let mut found = Vec::new();
    let mut missing = |object_id: &str, field: &str, id: &str| {
        found.push(DanglingReference { object_id: object_id.into(), field: field.into(), missing_id: id.into() });
    };
    for p in ds.pipelines.values() {
        if !ds.nodes.contains_key(&p.start_node) {
            missing(&p.id, "start_node", &p.start_node);
        }
        if !ds.nodes.contains_key(&p.end_node) {
            missing(&p.id, "end_node", &p.end_node);
        }
        if let Some(g) = &p.group_id {
            if !ds.groups.contains_key(g) {
                missing(&p.id, "group_id", g);
            }
        }
    }
    for e in ds.elements.values() {
        if ds.layer_config(&e.layer).is_none() {
            missing(&e.id, "layer", &e.layer);
        }
        match &e.placement {
            Placement::NodeAttached { node_ref } if !ds.nodes.contains_key(node_ref) => {
                missing(&e.id, "node_ref", node_ref)
            }
            Placement::InLine { pipeline_ref, .. } if !ds.pipelines.contains_key(pipeline_ref) => {
                missing(&e.id, "pipeline_ref", pipeline_ref)
            }
            _ => {}
        }
    }
    for g in ds.groups.values() {
        for m in &g.member_ids {
            if !ds.pipelines.contains_key(m) {
                missing(&g.id, "member_ids", m);
            }
        }
    }
    found.sort();
    found
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    All,
    Sublayer(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub node_ids: Vec<String>,
    pub pipeline_ids: Vec<String>,
    pub total_length_km: f64,
    pub dominant_sublayer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub component_count: usize,
    pub components: Vec<Component>,
    pub isolated_nodes: Vec<String>,
    pub dangling_references: Vec<DanglingReference>,
}

/// Connected components of the node–pipeline graph. Fails on any dangling
/// reference.
pub fn topology_check(ds: &Dataset, scope: &Scope) -> Result<TopologyReport> {
    let report = audit_topology(ds, scope);
    if let Some(first) = report.dangling_references.first() {
        return Err(Error::DanglingReference(format!(
            "{}.{} -> {} ({} total)",
            first.object_id,
            first.field,
            first.missing_id,
            report.dangling_references.len()
        )));
    }
    Ok(report)
}

/// Like [`topology_check`] but tolerates dangling references: pipelines with
/// a missing endpoint are left out of the graph and the findings are listed.
pub fn audit_topology(ds: &Dataset, scope: &Scope) -> TopologyReport {
    let dangling_references = check_references(ds);
    let edges: Vec<_> = ds
        .pipelines
        .values()
        .filter(|p| ds.nodes.contains_key(&p.start_node) && ds.nodes.contains_key(&p.end_node))
        .filter(|p| match scope {
            Scope::All => true,
            Scope::Sublayer(s) => &p.sublayer == s,
        })
        .collect();

    let mut adjacency: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    match scope {
        Scope::All => ds.nodes.keys().for_each(|n| {
            adjacency.insert(n, Vec::new());
        }),
        Scope::Sublayer(_) => {}
    }
    for (i, p) in edges.iter().enumerate() {
        adjacency.entry(&p.start_node).or_default().push(i);
        adjacency.entry(&p.end_node).or_default().push(i);
    }

    let mut visited: BTreeSet<&str> = BTreeSet::new();
    let mut components = Vec::new();
    let mut isolated_nodes = Vec::new();
    for &start in adjacency.keys() {
        if !visited.insert(start) {
            continue;
        }
        let mut nodes = vec![start.to_owned()];
        let mut pipes = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &e in &adjacency[n] {
                pipes.insert(e);
                let other = edges[e].opposite(n);
                if visited.insert(other) {
                    nodes.push(other.to_owned());
                    queue.push_back(other);
                }
            }
        }
        if pipes.is_empty() {
            isolated_nodes.push(start.to_owned());
        }
        nodes.sort();
        let mut by_sublayer: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        let mut total = 0.0;
        for &e in &pipes {
            let entry = by_sublayer.entry(&edges[e].sublayer).or_default();
            entry.0 += edges[e].length_km;
            entry.1 += 1;
            total += edges[e].length_km;
        }
        // longest total length wins, then most pipelines, then name order
        let dominant = by_sublayer
            .iter()
            .max_by(|a, b| {
                a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.cmp(&b.1 .1)).then_with(|| b.0.cmp(a.0))
            })
            .map(|(s, _)| (*s).to_owned());
        let mut pipeline_ids: Vec<String> = pipes.iter().map(|&e| edges[e].id.clone()).collect();
        pipeline_ids.sort();
        components.push(Component { node_ids: nodes, pipeline_ids, total_length_km: total, dominant_sublayer: dominant });
    }
    TopologyReport { component_count: components.len(), components, isolated_nodes, dangling_references }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SublayerStatistics {
    pub pipeline_count: usize,
    pub short_pipe_count: usize,
    pub total_length_km: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkStatistics {
    pub layer_counts: BTreeMap<String, usize>,
    pub sublayers: BTreeMap<String, SublayerStatistics>,
    pub total_pipeline_length_km: f64,
    pub group_count: usize,
    pub data_sources: Vec<String>,
    pub data_source_count: usize,
}

pub fn compute_statistics(ds: &Dataset) -> NetworkStatistics {
    let mut layer_counts = BTreeMap::new();
    layer_counts.insert(NODES_LAYER.to_owned(), ds.nodes.len());
    layer_counts.insert(PIPELINES_LAYER.to_owned(), ds.pipelines.len());
    for cfg in ds.element_layers() {
        layer_counts.insert(cfg.layer.clone(), 0);
    }
    for e in ds.elements.values() {
        *layer_counts.entry(e.layer.clone()).or_default() += 1;
    }

    let mut sublayers: BTreeMap<String, SublayerStatistics> = BTreeMap::new();
    let mut total = 0.0;
    for p in ds.pipelines.values() {
        let s = sublayers.entry(p.sublayer.clone()).or_default();
        s.pipeline_count += 1;
        if p.is_short_pipe {
            s.short_pipe_count += 1;
        } else {
            s.total_length_km += p.length_km;
            total += p.length_km;
        }
    }

    let mut sources = BTreeSet::new();
    let all_attrs = ds
        .nodes
        .values()
        .map(|n| &n.attributes)
        .chain(ds.pipelines.values().map(|p| &p.attributes))
        .chain(ds.elements.values().map(|e| &e.attributes));
    for attrs in all_attrs {
        let source = match attrs.get("source") {
            None | Some(AttrValue::Null) => UNDOCUMENTED_SOURCE.to_owned(),
            Some(AttrValue::Text(s)) if s.trim().is_empty() => UNDOCUMENTED_SOURCE.to_owned(),
            Some(AttrValue::Text(s)) => s.clone(),
            Some(other) => format!("{other:?}"),
        };
        sources.insert(source);
    }

    NetworkStatistics {
        layer_counts,
        sublayers,
        total_pipeline_length_km: total,
        group_count: ds.groups.len(),
        data_source_count: sources.len(),
        data_sources: sources.into_iter().collect(),
    }
}

/// Every structural invariant the editing tools must preserve, as
/// human-readable findings. Empty means the dataset is consistent.
pub fn check_invariants(ds: &Dataset) -> Vec<String> {
    let mut out: Vec<String> =
        check_references(ds).into_iter().map(|d| format!("dangling {}.{} -> {}", d.object_id, d.field, d.missing_id)).collect();

    for (key, n) in &ds.nodes {
        if key != &n.id {
            out.push(format!("node key {key} != id {}", n.id));
        }
    }
    for (key, p) in &ds.pipelines {
        if key != &p.id {
            out.push(format!("pipeline key {key} != id {}", p.id));
        }
        if p.route.len() < 2 {
            out.push(format!("{}: route has {} points", p.id, p.route.len()));
            continue;
        }
        if p.start_node == p.end_node {
            out.push(format!("{}: self-loop", p.id));
        }
        if let Some(n) = ds.nodes.get(&p.start_node) {
            if !p.route[0].approx_eq(&n.position, ENDPOINT_TOL_DEG) {
                out.push(format!("{}: route start off node {}", p.id, n.id));
            }
        }
        if let Some(n) = ds.nodes.get(&p.end_node) {
            if !p.route[p.route.len() - 1].approx_eq(&n.position, ENDPOINT_TOL_DEG) {
                out.push(format!("{}: route end off node {}", p.id, n.id));
            }
        }
        if p.is_short_pipe {
            if p.length_km != 0.0 || p.route.len() != 2 {
                out.push(format!("{}: short-pipe must have 2 points and zero length", p.id));
            }
        } else {
            let expected = geomath::polyline_length_km(&p.route).unwrap_or(0.0);
            if (p.length_km - expected).abs() > LENGTH_REL_TOL * expected.max(1e-12) {
                out.push(format!("{}: length {} != geodesic {}", p.id, p.length_km, expected));
            }
        }
        if let Some(g) = p.group_id.as_ref().and_then(|g| ds.groups.get(g)) {
            if !g.member_ids.contains(&p.id) {
                out.push(format!("{}: group {} does not list it", p.id, g.id));
            }
        }
    }
    for g in ds.groups.values() {
        if g.member_ids.is_empty() {
            out.push(format!("group {} is empty", g.id));
        }
        for m in &g.member_ids {
            if let Some(p) = ds.pipelines.get(m) {
                if p.group_id.as_deref() != Some(g.id.as_str()) {
                    out.push(format!("group {} lists {} which points elsewhere", g.id, m));
                }
            }
        }
    }
    for e in ds.elements.values() {
        if let Some(cfg) = ds.layer_config(&e.layer) {
            if cfg.kind.element_kind() != Some(e.kind()) {
                out.push(format!("{}: kind {} does not match layer {}", e.id, e.kind().as_str(), e.layer));
            }
        }
        if let Placement::InLine { position_fraction, .. } = e.placement {
            if !(0.0..=1.0).contains(&position_fraction) {
                out.push(format!("{}: fraction {position_fraction} outside [0, 1]", e.id));
            }
        }
    }

    let schema_keys = |layer: &str| -> Option<BTreeSet<&str>> {
        ds.schemas.get(layer).map(|s| s.iter().map(|a| a.key.as_str()).collect())
    };
    let mut check_keys = |id: &str, layer: &str, attrs: &crate::model::Attributes| match schema_keys(layer) {
        Some(keys) => {
            let have: BTreeSet<&str> = attrs.keys().map(String::as_str).collect();
            if have != keys {
                out.push(format!("{id}: attributes {have:?} differ from {layer} schema {keys:?}"));
            }
        }
        None => out.push(format!("{id}: layer {layer} has no schema")),
    };
    for n in ds.nodes.values() {
        check_keys(&n.id, NODES_LAYER, &n.attributes);
    }
    for p in ds.pipelines.values() {
        check_keys(&p.id, PIPELINES_LAYER, &p.attributes);
    }
    for e in ds.elements.values() {
        check_keys(&e.id, &e.layer, &e.attributes);
    }

    for layer in ds.schemas.keys() {
        if ds.layer_config(layer).is_none() {
            out.push(format!("layer {layer} has no config"));
        }
    }
    let mut names = BTreeSet::new();
    for cfg in &ds.layer_configs {
        if !names.insert(cfg.layer.as_str()) {
            out.push(format!("layer {} configured twice", cfg.layer));
        }
    }
    for p in ds.pipelines.values() {
        if ds.layer_config(&p.sublayer).filter(|c| c.is_sublayer()).is_none() {
            out.push(format!("{}: sublayer {} has no config", p.id, p.sublayer));
        }
    }
    out
}
