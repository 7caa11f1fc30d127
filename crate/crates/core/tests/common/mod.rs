//! Fixtures shared by the integration tests (and the acceptance runner).
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gastopo_core::geomath::{self, AffineTransform, GeoPosition};
use gastopo_core::model::{Attributes, Dataset, Node};
use gastopo_core::ops::{self, Endpoint};
use gastopo_core::validation::{topology_check, Scope};
use gastopo_core::{Command, Editor, JournalEntry};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn sample_project_dir() -> PathBuf {
    data_dir().join("sample_project")
}

pub fn plan_image() -> PathBuf {
    data_dir().join("co2_plan.png")
}

pub fn pos(lon: f64, lat: f64) -> GeoPosition {
    GeoPosition::new(lon, lat).unwrap()
}

/// Random connected network: a spanning tree over `nodes` nodes plus
/// extra edges up to `pipelines`, with a few elements and groups.
pub fn random_network(rng: &mut ChaCha8Rng, nodes: usize, pipelines: usize) -> Dataset {
    let mut ds = Dataset::new();
    ds.manage_attribute("pipelines", &gastopo_core::model::AttributeAction::Add { key: "diameter_mm".into(), default: 600.into() })
        .unwrap();
    for i in 1..=nodes {
        let id = format!("node_{i}");
        let position = pos(rng.gen_range(12.8..15.0), rng.gen_range(46.4..47.1));
        ds.nodes.insert(id.clone(), Node { id: id.clone(), name: id, position, attributes: Attributes::new() });
    }
    let connect = |ds: &mut Dataset, rng: &mut ChaCha8Rng, a: usize, b: usize| {
        let (pa, pb) = (ds.nodes[&format!("node_{a}")].position, ds.nodes[&format!("node_{b}")].position);
        let mut route = vec![pa];
        if rng.gen_bool(0.6) {
            let m = geomath::interpolate(pa, pb, rng.gen_range(0.2..0.8));
            route.push(pos(m.lon() + rng.gen_range(-0.02..0.02), m.lat() + rng.gen_range(-0.02..0.02)));
        }
        route.push(pb);
        let sublayer = if rng.gen_bool(0.8) { "natural_gas" } else { "hydrogen" };
        let (a, b) = (format!("node_{a}"), format!("node_{b}"));
        ops::add_pipeline(ds, &route, &Endpoint::Existing(a), &Endpoint::Existing(b), sublayer, &Attributes::new()).unwrap();
    };
    for i in 2..=nodes {
        let j = rng.gen_range(1..i);
        connect(&mut ds, rng, i, j);
    }
    while ds.pipelines.len() < pipelines {
        let (a, b) = (rng.gen_range(1..=nodes), rng.gen_range(1..=nodes));
        if a != b {
            connect(&mut ds, rng, a, b);
        }
    }
    use gastopo_core::model::{AttributeSpec, ElementKind};
    ds.define_element_type("stations", ElementKind::NodeAttached, vec![AttributeSpec::new("power_mw", 10)], Default::default())
        .unwrap();
    ds.define_element_type("valves", ElementKind::InLine, vec![AttributeSpec::new("valve_type", "block")], Default::default())
        .unwrap();
    ds.define_element_type("sensors", ElementKind::Point, vec![], Default::default()).unwrap();
    let pipe_ids: Vec<String> = ds.pipelines.keys().cloned().collect();
    for _ in 0..8 {
        let node = format!("node_{}", rng.gen_range(1..=nodes));
        ops::add_infrastructure(&mut ds, "stations", &ops::PlacementSpec::Node { node_id: node }, &Attributes::new()).unwrap();
        let pipeline_id = pipe_ids.choose(rng).unwrap().clone();
        let fraction = rng.gen_range(0.0..=1.0);
        ops::add_infrastructure(&mut ds, "valves", &ops::PlacementSpec::InLine { pipeline_id, fraction }, &Attributes::new())
            .unwrap();
    }
    ops::add_infrastructure(&mut ds, "sensors", &ops::PlacementSpec::Point { position: pos(14.0, 46.8) }, &Attributes::new())
        .unwrap();
    ops::group_pipelines(&mut ds, "g1", &pipe_ids[..3]).unwrap();
    ops::group_pipelines(&mut ds, "g2", &pipe_ids[10..14]).unwrap();
    ds
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [String]) -> Option<&'a String> {
    items.choose(rng)
}

/// A random command that is valid for `ds` in the overwhelming majority of
/// draws. Returns `None` when the dataset offers nothing for the drawn tool.
pub fn random_command(ds: &Dataset, rng: &mut ChaCha8Rng) -> Option<Command> {
    let pipes: Vec<String> = ds.pipelines.keys().cloned().collect();
    let long_pipes: Vec<String> = ds.pipelines.values().filter(|p| !p.is_short_pipe).map(|p| p.id.clone()).collect();
    let nodes: Vec<String> = ds.nodes.keys().cloned().collect();
    let cmd = |op: &str, params: Value| Some(Command::new(op, params, "soak"));
    match rng.gen_range(0..100) {
        0..=14 => {
            let p = &ds.pipelines[pick(rng, &long_pipes)?];
            let seg = rng.gen_range(0..p.route.len() - 1);
            let q = geomath::interpolate(p.route[seg], p.route[seg + 1], rng.gen_range(0.05..0.95));
            let click = pos(q.lon() + rng.gen_range(-1e-4..1e-4), q.lat() + rng.gen_range(-1e-4..1e-4));
            cmd("divide_pipeline", json!({"pipeline_id": p.id, "click": click}))
        }
        15..=24 => {
            let busy: Vec<String> = nodes.iter().filter(|n| ds.degree(n) >= 2).cloned().collect();
            let node = pick(rng, &busy)?;
            let k = rng.gen_range(2..=3);
            let assignment: serde_json::Map<String, Value> = ds
                .incident_pipelines(node)
                .into_iter()
                .chain(ds.attached_elements(node))
                .map(|id| (id, json!(rng.gen_range(0..k))))
                .collect();
            let offsets: Option<Vec<[f64; 2]>> = rng
                .gen_bool(0.5)
                .then(|| (0..k).map(|i| [1e-4 * i as f64, -1e-4 * i as f64]).collect());
            cmd("split_node", json!({"node_id": node, "plan": {"subnode_count": k, "assignment": assignment}, "offsets": offsets}))
        }
        25..=34 => cmd("change_direction", json!({"pipeline_id": pick(rng, &pipes)?})),
        35..=39 => {
            let (a, b) = (pick(rng, &nodes)?, pick(rng, &nodes)?);
            cmd("add_short_pipe", json!({"node_a": a, "node_b": b}))
        }
        40..=47 => {
            if rng.gen_bool(0.8) {
                let p = &ds.pipelines[pick(rng, &pipes)?];
                let end = if rng.gen_bool(0.5) { "start" } else { "end" };
                let target = pick(rng, &nodes)?;
                cmd("reconnect", json!({"target": {"pipeline_id": p.id, "end": end}, "new_node": target}))
            } else {
                let stations: Vec<String> = ds.elements.values().filter(|e| e.node_ref().is_some()).map(|e| e.id.clone()).collect();
                let e = pick(rng, &stations)?;
                cmd("reconnect", json!({"target": {"element_id": e}, "new_node": pick(rng, &nodes)?}))
            }
        }
        48..=57 => {
            let n = &ds.nodes[pick(rng, &nodes)?];
            let to = pos(n.position.lon() + rng.gen_range(-0.01..0.01), n.position.lat() + rng.gen_range(-0.01..0.01));
            cmd("move_node", json!({"node_id": n.id, "new_position": to}))
        }
        58..=65 => {
            let p = &ds.pipelines[pick(rng, &long_pipes)?];
            let mut route = p.route.clone();
            let seg = rng.gen_range(0..route.len() - 1);
            let m = geomath::interpolate(route[seg], route[seg + 1], 0.5);
            route.insert(seg + 1, pos(m.lon() + rng.gen_range(-0.01..0.01), m.lat() + rng.gen_range(-0.01..0.01)));
            cmd("edit_route", json!({"pipeline_id": p.id, "new_route": route}))
        }
        66..=73 => {
            let (a, b) = (&ds.nodes[pick(rng, &nodes)?], &ds.nodes[pick(rng, &nodes)?]);
            let m = geomath::interpolate(a.position, b.position, 0.5);
            let mid = pos(m.lon() + 0.01, m.lat() - 0.01);
            let sublayer = ["natural_gas", "hydrogen", "co2"].choose(rng)?;
            cmd(
                "add_pipeline",
                json!({"route": [a.position, mid, b.position], "start": a.id, "end": b.id, "sublayer": sublayer}),
            )
        }
        74..=78 => {
            let ids: Vec<String> = if rng.gen_bool(0.6) { pipes.clone() } else { ds.elements.keys().cloned().collect() };
            cmd("delete_element", json!({"id": pick(rng, &ids)?, "cascade": true}))
        }
        79..=84 => {
            let amount = rng.gen_range(1..=3);
            let chosen: Vec<&String> = pipes.choose_multiple(rng, amount).collect();
            let target = ["natural_gas", "hydrogen", "co2"].choose(rng)?;
            cmd("switch_sublayer", json!({"pipeline_ids": chosen, "target_sublayer": target, "create_if_missing": true}))
        }
        85..=89 => cmd(
            "set_element_attributes",
            json!({"id": pick(rng, &pipes)?, "updates": {"diameter_mm": rng.gen_range(100..1400)}}),
        ),
        90..=94 => cmd(
            "add_infrastructure",
            json!({"layer": "valves", "placement": {"pipeline_id": pick(rng, &pipes)?, "fraction": rng.gen_range(0.0..=1.0)}}),
        ),
        95..=96 => {
            let free: Vec<String> = ds.pipelines.values().filter(|p| p.group_id.is_none()).map(|p| p.id.clone()).collect();
            let chosen: Vec<&String> = free.choose_multiple(rng, 2).collect();
            if chosen.is_empty() {
                return None;
            }
            cmd("group_pipelines", json!({"name": "soak group", "pipeline_ids": chosen}))
        }
        _ => cmd(
            "distribute_compressors",
            json!({"pipeline_ids": [pick(rng, &long_pipes)?], "n": rng.gen_range(1..=2), "element_layer": "stations"}),
        ),
    }
}

/// Known pixel→world transform of the CO₂ plan image.
pub fn co2_plan_truth() -> AffineTransform {
    AffineTransform { a: 6e-4, b: 2e-5, c: 14.35, d: -1e-5, e: -3e-4, f: 46.95, rms_residual_deg: 0.0 }
}

fn digitize(t: &AffineTransform, pixels: &[[f64; 2]]) -> Vec<GeoPosition> {
    pixels.iter().map(|&[x, y]| {
        let [lon, lat] = t.map(x, y);
        pos(lon, lat)
    }).collect()
}

pub struct WorkflowOutcome {
    pub editor: Editor,
    pub overlay_transform: AffineTransform,
    pub co2_pipelines: Vec<String>,
}

fn run(ed: &mut Editor, op: &str, params: Value) -> Value {
    ed.dispatch(&Command::new(op, params.clone(), "workflow"))
        .unwrap_or_else(|e| panic!("{op} {params}: {e}"))
        .result
}

/// Turns the natural-gas sample into a three-carrier dataset: imports a
/// georeferenced plan, repurposes a branch for hydrogen, splits the nodes it
/// shares with natural gas, defines CO₂ layers and digitizes a CO₂ network
/// from plan pixels.
pub fn three_carrier_workflow(ds: Dataset, journal: Vec<JournalEntry>, plans_dir: &Path) -> WorkflowOutcome {
    let mut ed = Editor::new(ds, journal).with_plans_dir(plans_dir);
    let truth = co2_plan_truth();
    let landmarks = [[40.0, 60.0], [950.0, 80.0], [900.0, 760.0], [60.0, 700.0]];
    let pairs: Vec<Value> = landmarks.iter().map(|&[x, y]| json!({"pixel": [x, y], "world": truth.map(x, y)})).collect();
    let overlay = run(
        &mut ed,
        "add_plan_overlay",
        json!({"image_file": plan_image().to_str().unwrap(), "pairs": pairs, "opacity": 0.6,
               "source_note": "CO2 network concept plan, scanned"}),
    );
    let t: AffineTransform = serde_json::from_value(overlay["transform"].clone()).unwrap();

    let hydrogen = ["pipe_8", "pipe_13"];
    run(&mut ed, "switch_sublayer", json!({"pipeline_ids": hydrogen, "target_sublayer": "hydrogen", "create_if_missing": true}));
    let shared: Vec<String> = ed
        .dataset()
        .nodes
        .keys()
        .filter(|n| {
            let subs: std::collections::BTreeSet<&str> =
                ed.dataset().pipelines.values().filter(|p| p.touches(n)).map(|p| p.sublayer.as_str()).collect();
            subs.len() > 1
        })
        .cloned()
        .collect();
    for node in shared {
        let ds = ed.dataset();
        let mut assignment = serde_json::Map::new();
        for pid in ds.incident_pipelines(&node) {
            let index = usize::from(ds.pipelines[&pid].sublayer == "hydrogen");
            assignment.insert(pid, json!(index));
        }
        for eid in ds.attached_elements(&node) {
            assignment.insert(eid, json!(0));
        }
        run(&mut ed, "split_node", json!({"node_id": node, "plan": {"subnode_count": 2, "assignment": assignment}}));
    }

    run(
        &mut ed,
        "define_element_type",
        json!({"name": "co2_emitters", "kind": "node_attached",
               "schema": [{"key": "emission_kt_per_year", "default": 0}, {"key": "source", "default": null}],
               "style": {"legend_label": "CO2 emitters", "color": "#8c564b"}}),
    );
    run(
        &mut ed,
        "define_element_type",
        json!({"name": "co2_storage", "kind": "point", "schema": [{"key": "capacity_mt", "default": null}],
               "style": {"legend_label": "CO2 storage", "color": "#7f7f7f"}}),
    );

    let hub_px = [200.0, 500.0];
    let a = digitize(&t, &[[300.0, 310.0], [250.0, 420.0], hub_px]);
    let p1 = run(&mut ed, "add_pipeline", json!({"route": a, "sublayer": "co2"}));
    let hub = p1["end_node"].as_str().unwrap().to_owned();
    let b = digitize(&t, &[[700.0, 600.0], [450.0, 560.0], hub_px]);
    let p2 = run(&mut ed, "add_pipeline", json!({"route": b, "end": hub, "sublayer": "co2"}));
    let c = digitize(&t, &[hub_px, [120.0, 640.0], [60.0, 700.0]]);
    let p3 = run(&mut ed, "add_pipeline", json!({"route": c, "start": hub, "sublayer": "co2"}));

    for (p, kt) in [(&p1, 410), (&p2, 95)] {
        run(
            &mut ed,
            "add_infrastructure",
            json!({"layer": "co2_emitters", "placement": {"node_id": p["start_node"]},
                   "attributes": {"emission_kt_per_year": kt, "source": "plan annotation"}}),
        );
    }
    let storage = ed.dataset().nodes[p3["end_node"].as_str().unwrap()].position;
    run(&mut ed, "add_infrastructure", json!({"layer": "co2_storage", "placement": {"position": storage}}));

    let co2_pipelines = [&p1, &p2, &p3].iter().map(|p| p["id"].as_str().unwrap().to_owned()).collect();
    WorkflowOutcome { editor: ed, overlay_transform: t, co2_pipelines }
}

/// Sorted dominant sublayers of all components.
pub fn dominant_sublayers(ds: &Dataset) -> (usize, Vec<String>) {
    let report = topology_check(ds, &Scope::All).unwrap();
    let mut dominant: Vec<String> =
        report.components.iter().map(|c| c.dominant_sublayer.clone().unwrap_or_default()).collect();
    dominant.sort();
    (report.component_count, dominant)
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot_files(root: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_owned()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_owned(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
