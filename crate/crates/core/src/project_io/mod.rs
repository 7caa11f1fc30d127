//! Project directory loading and canonical saving.
//!
//! Layout of a project root:
//!
//! ```text
//! nodes.geojson          mandatory, point features
//! pipelines.geojson      mandatory, linestring features
//! layers/<layer>.geojson one file per element layer
//! conf.json              layer configs with schemas, plan overlays, groups
//! plans/                 plan images
//! license.txt
//! journal.jsonl          one journal entry per line
//! ```

pub mod geojson;
pub mod integrate;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::journal::JournalEntry;
use crate::model::{
    is_reserved_attribute, AttrValue, AttributeSpec, Attributes, Dataset, ElementKind, InfrastructureElement,
    LayerConfig, LayerKind, Node, Pipeline, PipelineGroup, Placement, PlanOverlay, DEFAULT_SUBLAYER, NODES_LAYER,
    PIPELINES_LAYER,
};
use crate::validation::check_references;
use geojson::{Feature, Geometry};

pub const NODES_FILE: &str = "nodes.geojson";
pub const PIPELINES_FILE: &str = "pipelines.geojson";
pub const LAYERS_DIR: &str = "layers";
pub const CONFIG_FILE: &str = "conf.json";
pub const PLANS_DIR: &str = "plans";
pub const LICENSE_FILE: &str = "license.txt";
pub const JOURNAL_FILE: &str = "journal.jsonl";

/// Files making up a saved project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectManifest {
    pub root: PathBuf,
    pub nodes_file: PathBuf,
    pub pipelines_file: PathBuf,
    pub layer_files: BTreeMap<String, PathBuf>,
    pub config_file: PathBuf,
    pub plans_dir: PathBuf,
    pub plan_files: Vec<PathBuf>,
    pub license_file: PathBuf,
    pub journal_file: PathBuf,
}

impl ProjectManifest {
    /// Every file written, in a stable order.
    pub fn files(&self) -> Vec<PathBuf> {
        let mut out = vec![self.nodes_file.clone(), self.pipelines_file.clone()];
        out.extend(self.layer_files.values().cloned());
        out.push(self.config_file.clone());
        out.extend(self.plan_files.iter().cloned());
        out.push(self.license_file.clone());
        out.push(self.journal_file.clone());
        out
    }
}

/// A loaded project. `warnings` lists recoverable problems such as
/// dangling references, so users can open and repair broken data.
#[derive(Debug, Clone)]
pub struct Project {
    pub root: PathBuf,
    pub dataset: Dataset,
    pub journal: Vec<JournalEntry>,
    pub warnings: Vec<String>,
}

impl Project {
    pub fn plans_dir(&self) -> PathBuf {
        self.root.join(PLANS_DIR)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerEntry {
    #[serde(flatten)]
    config: LayerConfig,
    #[serde(default)]
    attributes: Option<Vec<AttributeSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupEntry {
    id: String,
    name: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct ProjectConfig {
    layers: Vec<LayerEntry>,
    plans: Vec<PlanOverlay>,
    groups: Vec<GroupEntry>,
}

fn schema_error(file: &Path, index: usize, cause: impl Into<String>) -> Error {
    Error::SchemaError { file: file.to_owned(), index, cause: cause.into() }
}

fn parse_error(file: &Path, index: usize, cause: impl Into<String>) -> Error {
    Error::ParseError { file: file.to_owned(), index: Some(index), cause: cause.into() }
}

fn required_str(f: &Feature, key: &str, file: &Path) -> Result<String> {
    match f.properties.get(key) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        _ => Err(parse_error(file, f.index, format!("missing string property `{key}`"))),
    }
}

fn insert_unique<T>(map: &mut BTreeMap<String, T>, id: String, value: T, file: &Path, index: usize) -> Result<()> {
    if map.contains_key(&id) {
        return Err(parse_error(file, index, format!("duplicate id `{id}`")));
    }
    map.insert(id, value);
    Ok(())
}

fn read_config(root: &Path) -> Result<ProjectConfig> {
    let path = root.join(CONFIG_FILE);
    if !path.exists() {
        return Ok(ProjectConfig::default());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::ParseError { file: path, index: None, cause: e.to_string() })
}

pub fn read_journal(path: &Path) -> Result<Vec<JournalEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| serde_json::from_str(line).map_err(|e| parse_error(path, i, e.to_string())))
        .collect()
}

fn load_nodes(ds: &mut Dataset, path: &Path) -> Result<()> {
    for f in geojson::read_collection(path)? {
        let Geometry::Point(position) = f.geometry else {
            return Err(schema_error(path, f.index, format!("node geometry is {}, expected Point", f.geometry.type_name())));
        };
        let id = required_str(&f, "id", path)?;
        let name = f.str_prop("name").map_or_else(|| id.clone(), str::to_owned);
        let attributes = geojson::free_attributes(&f.properties, |k| is_reserved_attribute(NODES_LAYER, k), path, f.index)?;
        insert_unique(&mut ds.nodes, id.clone(), Node { id, name, position, attributes }, path, f.index)?;
    }
    Ok(())
}

fn load_pipelines(ds: &mut Dataset, path: &Path, warnings: &mut Vec<String>) -> Result<()> {
    for f in geojson::read_collection(path)? {
        let Geometry::LineString(route) = &f.geometry else {
            return Err(schema_error(
                path,
                f.index,
                format!("pipeline geometry is {}, expected LineString", f.geometry.type_name()),
            ));
        };
        if route.len() < 2 {
            return Err(schema_error(path, f.index, "pipeline route needs at least 2 points"));
        }
        let id = required_str(&f, "id", path)?;
        let is_short_pipe = match f.properties.get("is_short_pipe") {
            None | Some(Value::Null) => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => return Err(parse_error(path, f.index, "`is_short_pipe` is not a boolean")),
        };
        let group_id = match f.properties.get("group_id") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(parse_error(path, f.index, "`group_id` is not a string")),
        };
        let mut p = Pipeline {
            id: id.clone(),
            start_node: required_str(&f, "start_node", path)?,
            end_node: required_str(&f, "end_node", path)?,
            route: route.clone(),
            length_km: 0.0,
            is_short_pipe,
            sublayer: f.str_prop("sublayer").unwrap_or(DEFAULT_SUBLAYER).to_owned(),
            group_id,
            attributes: geojson::free_attributes(&f.properties, |k| is_reserved_attribute(PIPELINES_LAYER, k), path, f.index)?,
        };
        p.refresh_length();
        if crate::model::schema::validate_layer_name(&p.sublayer).is_err() {
            return Err(parse_error(path, f.index, format!("invalid sublayer `{}`", p.sublayer)));
        }
        for (node, at) in [(&p.start_node, p.route[0]), (&p.end_node, p.route[p.route.len() - 1])] {
            if let Some(n) = ds.nodes.get(node) {
                if !n.position.approx_eq(&at, crate::validation::ENDPOINT_TOL_DEG) {
                    warnings.push(format!("{id}: route endpoint does not coincide with node {node}"));
                }
            }
        }
        match ds.layer_config(&p.sublayer) {
            Some(cfg) if !cfg.is_sublayer() => {
                return Err(parse_error(path, f.index, format!("`{}` is not a pipeline sublayer", p.sublayer)))
            }
            Some(_) => {}
            None => ds.ensure_sublayer(&p.sublayer),
        }
        insert_unique(&mut ds.pipelines, id, p, path, f.index)?;
    }
    Ok(())
}

fn infer_kind(features: &[Feature]) -> ElementKind {
    let has = |key: &str| features.iter().any(|f| f.properties.contains_key(key));
    if has("node_ref") {
        ElementKind::NodeAttached
    } else if has("pipeline_ref") {
        ElementKind::InLine
    } else if features.iter().any(|f| matches!(f.geometry, Geometry::LineString(_))) {
        ElementKind::Line
    } else {
        ElementKind::Point
    }
}

fn load_elements(ds: &mut Dataset, layer: &str, kind: ElementKind, features: &[Feature], path: &Path) -> Result<()> {
    for f in features {
        let id = required_str(f, "id", path)?;
        let mismatch = || {
            schema_error(
                path,
                f.index,
                format!("geometry {} does not fit {} layer `{layer}`", f.geometry.type_name(), kind.as_str()),
            )
        };
        let placement = match (kind, &f.geometry) {
            (ElementKind::NodeAttached, Geometry::Point(_)) => {
                Placement::NodeAttached { node_ref: required_str(f, "node_ref", path)? }
            }
            (ElementKind::InLine, Geometry::Point(_)) => {
                let position_fraction = f
                    .properties
                    .get("position_fraction")
                    .and_then(Value::as_f64)
                    .filter(|x| (0.0..=1.0).contains(x))
                    .ok_or_else(|| parse_error(path, f.index, "`position_fraction` must be a number in [0, 1]"))?;
                Placement::InLine { pipeline_ref: required_str(f, "pipeline_ref", path)?, position_fraction }
            }
            (ElementKind::Point, Geometry::Point(position)) => Placement::Point { position: *position },
            (ElementKind::Line, Geometry::LineString(route)) if route.len() >= 2 => {
                Placement::Line { route: route.clone() }
            }
            _ => return Err(mismatch()),
        };
        let attributes = geojson::free_attributes(&f.properties, |k| is_reserved_attribute(layer, k), path, f.index)?;
        let element = InfrastructureElement { id: id.clone(), layer: layer.to_owned(), placement, attributes };
        insert_unique(&mut ds.elements, id, element, path, f.index)?;
    }
    Ok(())
}

/// Extends each schema with keys found on objects (default null) and fills
/// keys an object lacks with the schema default.
fn harmonize_schemas(ds: &mut Dataset) {
    let mut found: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for n in ds.nodes.values() {
        found.entry(NODES_LAYER.into()).or_default().extend(n.attributes.keys().cloned());
    }
    for p in ds.pipelines.values() {
        found.entry(PIPELINES_LAYER.into()).or_default().extend(p.attributes.keys().cloned());
    }
    for e in ds.elements.values() {
        found.entry(e.layer.clone()).or_default().extend(e.attributes.keys().cloned());
    }
    for (layer, keys) in found {
        let schema = ds.schemas.entry(layer).or_default();
        for key in keys {
            if !schema.iter().any(|s| s.key == key) {
                schema.push(AttributeSpec { key, default: AttrValue::Null });
            }
        }
    }
    let fill = |attrs: &mut Attributes, schema: &[AttributeSpec]| {
        for s in schema {
            attrs.entry(s.key.clone()).or_insert_with(|| s.default.clone());
        }
    };
    let schemas = ds.schemas.clone();
    for n in ds.nodes.values_mut() {
        fill(&mut n.attributes, &schemas[NODES_LAYER]);
    }
    for p in ds.pipelines.values_mut() {
        fill(&mut p.attributes, &schemas[PIPELINES_LAYER]);
    }
    for e in ds.elements.values_mut() {
        if let Some(schema) = schemas.get(&e.layer) {
            fill(&mut e.attributes, schema);
        }
    }
}

pub fn load_project(root: &Path) -> Result<Project> {
    let nodes_path = root.join(NODES_FILE);
    let pipelines_path = root.join(PIPELINES_FILE);
    for path in [&nodes_path, &pipelines_path] {
        if !path.is_file() {
            return Err(Error::MissingMandatoryFile(path.clone()));
        }
    }
    let config = read_config(root)?;
    let mut warnings = Vec::new();
    let mut ds = Dataset::new();

    let mut configs: Vec<LayerConfig> = Vec::new();
    for entry in config.layers {
        let name = entry.config.layer.clone();
        if configs.iter().any(|c| c.layer == name) {
            warnings.push(format!("{CONFIG_FILE}: duplicate layer `{name}` ignored"));
            continue;
        }
        if entry.config.kind != LayerKind::Pipeline || !entry.config.is_sublayer() {
            ds.schemas.insert(name.clone(), entry.attributes.unwrap_or_default());
        }
        configs.push(entry.config);
    }
    for mandatory in [LayerConfig::pipelines(), LayerConfig::nodes()] {
        if !configs.iter().any(|c| c.layer == mandatory.layer) {
            configs.insert(0, mandatory);
        }
    }
    ds.layer_configs = configs;

    load_nodes(&mut ds, &nodes_path)?;
    load_pipelines(&mut ds, &pipelines_path, &mut warnings)?;

    let layers_dir = root.join(LAYERS_DIR);
    let mut layer_files: BTreeMap<String, PathBuf> = BTreeMap::new();
    if layers_dir.is_dir() {
        let entries = fs::read_dir(&layers_dir).map_err(|e| Error::io(&layers_dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&layers_dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("geojson") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                layer_files.insert(stem.to_owned(), path);
            }
        }
    }
    for (layer, path) in &layer_files {
        let features = geojson::read_collection(path)?;
        let kind = match ds.layer_config(layer) {
            Some(cfg) => match cfg.kind.element_kind() {
                Some(kind) => kind,
                None => {
                    warnings.push(format!("{}: `{layer}` is not an element layer, file ignored", path.display()));
                    continue;
                }
            },
            None => {
                let kind = infer_kind(&features);
                warnings.push(format!("{}: no config for layer `{layer}`, inferred kind {}", path.display(), kind.as_str()));
                if crate::model::schema::validate_layer_name(layer).is_err() {
                    return Err(Error::ParseError {
                        file: path.clone(),
                        index: None,
                        cause: format!("invalid layer name `{layer}`"),
                    });
                }
                ds.define_element_type(layer, kind, Vec::new(), Default::default())?;
                kind
            }
        };
        load_elements(&mut ds, layer, kind, &features, path)?;
    }
    let configured: Vec<String> = ds.element_layers().map(|c| c.layer.clone()).collect();
    for layer in configured {
        ds.schemas.entry(layer).or_default();
    }
    harmonize_schemas(&mut ds);

    let group_names: BTreeMap<String, String> = config.groups.into_iter().map(|g| (g.id, g.name)).collect();
    for p in ds.pipelines.values() {
        if let Some(g) = &p.group_id {
            if let Some(name) = group_names.get(g) {
                ds.groups
                    .entry(g.clone())
                    .or_insert_with(|| PipelineGroup { id: g.clone(), name: name.clone(), member_ids: BTreeSet::new() })
                    .member_ids
                    .insert(p.id.clone());
            }
        }
    }
    for id in group_names.keys().filter(|id| !ds.groups.contains_key(*id)) {
        warnings.push(format!("{CONFIG_FILE}: group `{id}` has no members, dropped"));
    }

    for overlay in &config.plans {
        if !root.join(PLANS_DIR).join(&overlay.image_file).is_file() {
            warnings.push(format!("plan image `{}` of {} is missing", overlay.image_file, overlay.id));
        }
        if overlay.transform.is_degenerate() {
            warnings.push(format!("plan overlay {} has a degenerate transform", overlay.id));
        }
    }
    ds.plan_overlays = config.plans;

    let license = root.join(LICENSE_FILE);
    if license.is_file() {
        ds.license_text = fs::read_to_string(&license).map_err(|e| Error::io(&license, e))?;
    }
    let journal = read_journal(&root.join(JOURNAL_FILE))?;

    warnings.extend(
        check_references(&ds)
            .into_iter()
            .map(|d| format!("dangling reference: {}.{} -> {}", d.object_id, d.field, d.missing_id)),
    );
    Ok(Project { root: root.to_owned(), dataset: ds, journal, warnings })
}

fn attribute_props(mut props: Map<String, Value>, attrs: &Attributes) -> Map<String, Value> {
    for (k, v) in attrs {
        props.insert(k.clone(), v.clone().into());
    }
    props
}

fn node_features(ds: &Dataset) -> Value {
    geojson::collection(
        ds.nodes
            .values()
            .map(|n| {
                let mut props = Map::new();
                props.insert("id".into(), n.id.clone().into());
                props.insert("name".into(), n.name.clone().into());
                geojson::feature(geojson::point(n.position), attribute_props(props, &n.attributes))
            })
            .collect(),
    )
}

fn pipeline_features(ds: &Dataset) -> Value {
    geojson::collection(
        ds.pipelines
            .values()
            .map(|p| {
                let mut props = Map::new();
                props.insert("id".into(), p.id.clone().into());
                props.insert("start_node".into(), p.start_node.clone().into());
                props.insert("end_node".into(), p.end_node.clone().into());
                props.insert("length_km".into(), geojson::round_to(p.length_km, 6).into());
                props.insert("is_short_pipe".into(), p.is_short_pipe.into());
                props.insert("sublayer".into(), p.sublayer.clone().into());
                props.insert("group_id".into(), p.group_id.clone().map_or(Value::Null, Value::from));
                geojson::feature(geojson::line_string(&p.route), attribute_props(props, &p.attributes))
            })
            .collect(),
    )
}

/// One layer as a feature collection; `None` for unknown layers.
pub fn layer_features(ds: &Dataset, layer: &str) -> Option<Value> {
    match layer {
        NODES_LAYER => return Some(node_features(ds)),
        PIPELINES_LAYER => return Some(pipeline_features(ds)),
        _ => {}
    }
    if let Some(cfg) = ds.layer_config(layer).filter(|c| c.is_sublayer()) {
        let mut all = pipeline_features(ds);
        if let Some(features) = all["features"].as_array_mut() {
            features.retain(|f| f["properties"]["sublayer"] == cfg.layer.as_str());
        }
        return Some(all);
    }
    ds.element_layer(layer).ok()?;
    let features = ds
        .elements
        .values()
        .filter(|e| e.layer == layer)
        .map(|e| {
            let mut props = Map::new();
            props.insert("id".into(), e.id.clone().into());
            let geometry = match &e.placement {
                Placement::NodeAttached { node_ref } => {
                    props.insert("node_ref".into(), node_ref.clone().into());
                    ds.nodes.get(node_ref).map_or(Value::Null, |n| geojson::point(n.position))
                }
                Placement::InLine { pipeline_ref, position_fraction } => {
                    props.insert("pipeline_ref".into(), pipeline_ref.clone().into());
                    props.insert(
                        "position_fraction".into(),
                        geojson::round_to(*position_fraction, geojson::FRACTION_DECIMALS).into(),
                    );
                    ds.element_position(e).map_or(Value::Null, geojson::point)
                }
                Placement::Point { position } => geojson::point(*position),
                Placement::Line { route } => geojson::line_string(route),
            };
            geojson::feature(geometry, attribute_props(props, &e.attributes))
        })
        .collect();
    Some(geojson::collection(features))
}

fn config_value(ds: &Dataset) -> Value {
    let layers: Vec<Value> = ds
        .layer_configs
        .iter()
        .map(|c| {
            let mut v = serde_json::to_value(c).expect("config serializes");
            if let Some(schema) = ds.schemas.get(&c.layer).filter(|_| !c.is_sublayer()) {
                v["attributes"] = serde_json::to_value(schema).expect("schema serializes");
            }
            v
        })
        .collect();
    let groups: Vec<Value> =
        ds.groups.values().map(|g| serde_json::json!({"id": g.id, "name": g.name})).collect();
    serde_json::json!({"layers": layers, "plans": ds.plan_overlays, "groups": groups})
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn journal_text(journal: &[JournalEntry]) -> String {
    journal
        .iter()
        .map(|e| serde_json::to_string(e).expect("journal entry serializes") + "\n")
        .collect()
}

/// Writes `ds` and `journal` in canonical form under `root`. Plan images
/// are copied from `plan_source` when it differs from the target plans dir.
pub fn save_project(
    ds: &Dataset,
    journal: &[JournalEntry],
    root: &Path,
    plan_source: Option<&Path>,
) -> Result<ProjectManifest> {
    let layers_dir = root.join(LAYERS_DIR);
    let plans_dir = root.join(PLANS_DIR);
    for dir in [root, &layers_dir, &plans_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let manifest_path = |name: &str| root.join(name);
    let nodes_file = manifest_path(NODES_FILE);
    write(&nodes_file, &geojson::to_canonical_string(&node_features(ds)))?;
    let pipelines_file = manifest_path(PIPELINES_FILE);
    write(&pipelines_file, &geojson::to_canonical_string(&pipeline_features(ds)))?;

    let mut layer_files = BTreeMap::new();
    for cfg in ds.element_layers() {
        let path = layers_dir.join(format!("{}.geojson", cfg.layer));
        let value = layer_features(ds, &cfg.layer).expect("element layer exists");
        write(&path, &geojson::to_canonical_string(&value))?;
        layer_files.insert(cfg.layer.clone(), path);
    }
    let config_file = manifest_path(CONFIG_FILE);
    write(&config_file, &geojson::to_canonical_string(&config_value(ds)))?;

    let mut plan_files = Vec::new();
    for overlay in &ds.plan_overlays {
        let target = plans_dir.join(&overlay.image_file);
        if let Some(source) = plan_source {
            let from = source.join(&overlay.image_file);
            let same = match (fs::canonicalize(&from), fs::canonicalize(&target)) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            };
            if from.is_file() && !same {
                fs::copy(&from, &target).map_err(|e| Error::io(&target, e))?;
            }
        }
        if target.is_file() && !plan_files.contains(&target) {
            plan_files.push(target);
        }
    }
    let license_file = manifest_path(LICENSE_FILE);
    write(&license_file, &ds.license_text)?;
    let journal_file = manifest_path(JOURNAL_FILE);
    write(&journal_file, &journal_text(journal))?;

    Ok(ProjectManifest {
        root: root.to_owned(),
        nodes_file,
        pipelines_file,
        layer_files,
        config_file,
        plans_dir,
        plan_files,
        license_file,
        journal_file,
    })
}

/// Copies an image into `plans_dir` and returns its file name there. A
/// different file already using the name gets a numbered name instead.
pub fn import_plan_image(plans_dir: &Path, source: &Path) -> Result<String> {
    let bytes = fs::read(source).map_err(|e| Error::io(source, e))?;
    fs::create_dir_all(plans_dir).map_err(|e| Error::io(plans_dir, e))?;
    let name = source
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidParameter(format!("`{}` has no usable file name", source.display())))?;
    let (stem, ext) = match name.rsplit_once('.') {
        Some((s, e)) => (s.to_owned(), format!(".{e}")),
        None => (name.to_owned(), String::new()),
    };
    let mut candidate = name.to_owned();
    for n in 2.. {
        let target = plans_dir.join(&candidate);
        match fs::read(&target) {
            Ok(existing) if existing == bytes => return Ok(candidate),
            Ok(_) => candidate = format!("{stem}_{n}{ext}"),
            Err(_) => {
                fs::write(&target, &bytes).map_err(|e| Error::io(&target, e))?;
                return Ok(candidate);
            }
        }
    }
    unreachable!("numbered candidates are unbounded")
}
