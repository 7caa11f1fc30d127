//! Acceptance checks, one PASS/FAIL line per criterion.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use gastopo_core::geomath::{haversine_km, solve_affine, AffineTransform, ControlPointPair, GeoError, PixelPoint};
use gastopo_core::journal::replay_journal;
use gastopo_core::ops::Operation;
use gastopo_core::project_io::{load_project, save_project, PLANS_DIR};
use gastopo_core::validation::{check_invariants, check_references, topology_check, Scope};
use gastopo_core::{Dataset, Editor, Error};
use gastopo_server::{router, AppState, DEFAULT_PORT};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        check($cond, || format!($($msg)+))?
    };
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("geodesy oracle", Duration::from_secs(1), geodesy),
        ("topology property suite", Duration::from_secs(30), topology_properties),
        ("three-carrier workflow", Duration::from_secs(5), workflow),
        ("affine georeferencing", Duration::from_secs(1), affine),
        ("round-trip determinism", Duration::MAX, round_trip),
        ("journal replay", Duration::MAX, journal_replay),
        ("service contract", Duration::MAX, service_contract),
    ];
    let mut failures = 0;
    for (name, budget, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:.0?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    println!("{} of 7 criteria passed", 7 - failures);
    if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

/// Central angle from the atan2 form on unit vectors, a different route to
/// the same spherical distance.
fn oracle_km(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let v = |lon: f64, lat: f64| {
        let (l, p) = (lon.to_radians(), lat.to_radians());
        [p.cos() * l.cos(), p.cos() * l.sin(), p.sin()]
    };
    let (a, b) = (v(lon1, lat1), v(lon2, lat2));
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let sin = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    6371.0088 * sin.atan2(cos)
}

fn geodesy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (lon1, lat1) = (rng.gen_range(-180.0..=180.0), rng.gen_range(-90.0..=90.0));
        // mix global pairs with short local ones
        let (lon2, lat2) = if rng.gen_bool(0.5) {
            (rng.gen_range(-180.0..=180.0), rng.gen_range(-90.0..=90.0))
        } else {
            let lon2: f64 = lon1 + rng.gen_range(-0.5..0.5);
            let lat2: f64 = lat1 + rng.gen_range(-0.5..0.5);
            (lon2.clamp(-180.0, 180.0), lat2.clamp(-90.0, 90.0))
        };
        let got = haversine_km(common::pos(lon1, lat1), common::pos(lon2, lat2));
        let want = oracle_km(lon1, lat1, lon2, lat2);
        if want > 0.0 {
            worst = worst.max((got - want).abs() / want);
        }
    }
    ensure!(worst <= 1e-9, "worst relative error {worst:e}");
    let degree = haversine_km(common::pos(0.0, 0.0), common::pos(0.0, 1.0));
    let analytic = 6371.0088 * std::f64::consts::PI / 180.0;
    ensure!((degree - analytic).abs() <= 1e-6, "one degree of latitude = {degree} km, expected {analytic}");
    Ok(format!(
        "1000 pairs, worst relative error {worst:.1e}; 1 deg latitude = {degree:.7} km = R*pi/180 \
         (the quoted 111.1949266 corresponds to R = 6371.0)"
    ))
}

fn topology_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ds = common::random_network(&mut rng, 50, 70);
    ensure!(ds.nodes.len() == 50 && ds.pipelines.len() == 70, "fixture is not 50/70");
    let mut ed = Editor::new(ds, Vec::new());
    let (mut applied, mut divides, mut splits, mut issued) = (0, 0, 0, 0);
    while issued < 1000 {
        let Some(cmd) = common::random_command(ed.dataset(), &mut rng) else { continue };
        issued += 1;
        let op = Operation::parse(&cmd.op, &cmd.params).map_err(|e| e.to_string())?;
        let before: Dataset = ed.dataset().clone();
        let Ok(out) = ed.dispatch(&cmd) else {
            ensure!(ed.dataset() == &before, "failed {} changed the dataset", cmd.op);
            continue;
        };
        applied += 1;
        let ds = ed.dataset();
        match &op {
            Operation::DividePipeline(p) => {
                let original = before.pipelines[&p.pipeline_id].length_km;
                let a = ds.pipelines[out.result["pipeline_a"].as_str().unwrap()].length_km;
                let b = ds.pipelines[out.result["pipeline_b"].as_str().unwrap()].length_km;
                ensure!((a + b - original).abs() <= 1e-9 * original, "additivity {a} + {b} vs {original}");
                divides += 1;
            }
            Operation::SplitNode(p) => {
                let total: usize = out.result["subnodes"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|s| ds.degree(s.as_str().unwrap()))
                    .sum();
                ensure!(total == before.degree(&p.node_id), "degree not conserved at {}", p.node_id);
                splits += 1;
            }
            _ => {}
        }
        let dangling = check_references(ds);
        ensure!(dangling.is_empty(), "after {}: {dangling:?}", cmd.op);
        // includes endpoint coincidence within 1e-9 degrees
        let findings = check_invariants(ds);
        ensure!(findings.is_empty(), "after {}: {findings:?}", cmd.op);
    }
    Ok(format!("1000 commands, {applied} applied, {divides} divides and {splits} splits checked"))
}

fn workflow() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = load_project(&common::sample_project_dir()).map_err(|e| e.to_string())?;
    let out = common::three_carrier_workflow(p.dataset, p.journal, &dir.path().join(PLANS_DIR));
    let report = topology_check(out.editor.dataset(), &Scope::All).map_err(|e| e.to_string())?;
    let mut dominant: Vec<String> = report.components.iter().filter_map(|c| c.dominant_sublayer.clone()).collect();
    dominant.sort();
    ensure!(report.component_count == 3, "{} components", report.component_count);
    ensure!(dominant == ["co2", "hydrogen", "natural_gas"], "dominant sublayers {dominant:?}");
    Ok(format!("3 components dominated by {}", dominant.join(", ")))
}

fn affine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let truth = AffineTransform {
            a: rng.gen_range(-1e-3..1e-3),
            b: rng.gen_range(-1e-3..1e-3),
            c: rng.gen_range(-170.0..170.0),
            d: rng.gen_range(-1e-3..1e-3),
            e: rng.gen_range(-1e-3..1e-3),
            f: rng.gen_range(-80.0..80.0),
            rms_residual_deg: 0.0,
        };
        let pairs: Vec<ControlPointPair> = (0..4)
            .map(|_| {
                let (x, y) = (rng.gen_range(0.0..4000.0), rng.gen_range(0.0..4000.0));
                let [lon, lat] = truth.map(x, y);
                ControlPointPair { pixel: PixelPoint::new(x, y).unwrap(), world: common::pos(lon, lat) }
            })
            .collect();
        let fit = solve_affine(&pairs).map_err(|e| e.to_string())?;
        for (got, want) in [(fit.a, truth.a), (fit.b, truth.b), (fit.c, truth.c), (fit.d, truth.d), (fit.e, truth.e), (fit.f, truth.f)] {
            worst = worst.max((got - want).abs());
        }
    }
    ensure!(worst <= 1e-9, "worst coefficient error {worst:e}");
    let collinear: Vec<ControlPointPair> = [(0.0, 0.0), (10.0, 10.0), (20.0, 20.0)]
        .iter()
        .map(|&(x, y)| ControlPointPair { pixel: PixelPoint::new(x, y).unwrap(), world: common::pos(14.0 + x * 1e-3, 46.0 - y * 1e-3) })
        .collect();
    match solve_affine(&collinear) {
        Err(GeoError::DegenerateControlPoints) => {}
        other => return Err(format!("collinear pixels gave {other:?}")),
    }
    Ok(format!("200 transforms, worst coefficient error {worst:.1e}; collinear pixels rejected"))
}

fn round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = load_project(&common::sample_project_dir()).map_err(|e| e.to_string())?;
    save_project(&first.dataset, &first.journal, &a, None).map_err(|e| e.to_string())?;
    let second = load_project(&a).map_err(|e| e.to_string())?;
    ensure!(second.dataset == first.dataset, "load-save-load changed the dataset");
    save_project(&second.dataset, &second.journal, &b, None).map_err(|e| e.to_string())?;
    save_project(&second.dataset, &second.journal, &a, None).map_err(|e| e.to_string())?;
    let (x, y) = (common::snapshot_files(&a), common::snapshot_files(&b));
    ensure!(x == y, "saves differ in {:?}", x.keys().filter(|k| x.get(*k) != y.get(*k)).collect::<Vec<_>>());
    ensure!(
        common::snapshot_files(&common::sample_project_dir()) == x,
        "the shipped sample project is not in canonical form"
    );
    Ok(format!("{} files byte-identical across saves", x.len()))
}

fn journal_replay() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (initial_dir, live_dir, replay_dir) = (dir.path().join("initial"), dir.path().join("live"), dir.path().join("replay"));
    let p = load_project(&common::sample_project_dir()).map_err(|e| e.to_string())?;
    save_project(&p.dataset, &p.journal, &initial_dir, None).map_err(|e| e.to_string())?;
    let initial = load_project(&initial_dir).map_err(|e| e.to_string())?;
    let live_plans = live_dir.join(PLANS_DIR);
    let out = common::three_carrier_workflow(initial.dataset.clone(), initial.journal.clone(), &live_plans);
    save_project(out.editor.dataset(), out.editor.journal(), &live_dir, Some(&live_plans)).map_err(|e| e.to_string())?;
    let entries = load_project(&live_dir).map_err(|e| e.to_string())?.journal;

    let replayed = replay_journal(initial.dataset.clone(), initial.journal.clone(), &entries).map_err(|e| e.to_string())?;
    save_project(replayed.dataset(), replayed.journal(), &replay_dir, Some(&live_plans)).map_err(|e| e.to_string())?;
    ensure!(common::snapshot_files(&live_dir) == common::snapshot_files(&replay_dir), "replayed project differs");

    let mut tampered = entries.clone();
    let i = tampered.iter().position(|e| e.op == "switch_sublayer").ok_or("no switch_sublayer entry")?;
    tampered[i].params["target_sublayer"] = json!("co2");
    match replay_journal(initial.dataset, initial.journal, &tampered) {
        Err(Error::ReplayDivergence { seq, .. }) => {
            Ok(format!("{} entries replayed byte-identically; tampered entry {seq} diverged", entries.len()))
        }
        Err(e) => Err(format!("tampered journal failed with {e}")),
        Ok(_) => Err("tampered journal replayed".to_owned()),
    }
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json(app: &Router, uri: &str) -> Result<(StatusCode, Value), String> {
    let (status, body) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    serde_json::from_slice(&body).map(|v| (status, v)).map_err(|e| format!("{uri}: {e}"))
}

async fn post_json(app: &Router, uri: &str, body: Value) -> Result<(StatusCode, Value), String> {
    let req = Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap();
    let (status, body) = call(app, req).await;
    serde_json::from_slice(&body).map(|v| (status, v)).map_err(|e| format!("{uri}: {e}"))
}

fn has_keys(v: &Value, keys: &[&str]) -> bool {
    keys.iter().all(|k| v.get(k).is_some())
}

fn service_contract() -> Outcome {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(service_checks())
}

async fn service_checks() -> Outcome {
    ensure!(DEFAULT_PORT == 8000, "default port {DEFAULT_PORT}");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("project");
    let p = load_project(&common::sample_project_dir()).map_err(|e| e.to_string())?;
    save_project(&p.dataset, &p.journal, &root, None).map_err(|e| e.to_string())?;
    let (state, _) = AppState::open(&root).map_err(|e| e.to_string())?;
    let app = router(state);
    let mut checked = 0;

    let (status, body) = call(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    ensure!(status == StatusCode::OK && !body.is_empty(), "GET / -> {status}");
    checked += 1;

    let (s, ds) = get_json(&app, "/api/dataset").await?;
    ensure!(
        s == StatusCode::OK && has_keys(&ds, &["layers", "layer_configs", "schemas", "groups", "plan_overlays", "license_text"]),
        "GET /api/dataset -> {s} {ds}"
    );
    checked += 1;
    for layer in ["nodes", "pipelines", "compressors", "valves", "natural_gas"] {
        let (s, fc) = get_json(&app, &format!("/api/layers/{layer}")).await?;
        ensure!(s == StatusCode::OK && fc["type"] == "FeatureCollection", "GET /api/layers/{layer} -> {s}");
    }
    let (s, err) = get_json(&app, "/api/layers/nope").await?;
    ensure!(s == StatusCode::NOT_FOUND && err["error"]["kind"] == "UnknownLayer", "unknown layer -> {s} {err}");
    checked += 1;
    let (s, stats) = get_json(&app, "/api/stats").await?;
    ensure!(
        s == StatusCode::OK && has_keys(&stats, &["layer_counts", "sublayers", "total_pipeline_length_km", "group_count", "data_sources"]),
        "GET /api/stats -> {s} {stats}"
    );
    checked += 1;
    let (s, topo) = get_json(&app, "/api/topology").await?;
    ensure!(s == StatusCode::OK && topo["component_count"] == 1, "GET /api/topology -> {s} {topo}");
    checked += 1;
    let (s, journal) = get_json(&app, "/api/journal?since=0").await?;
    ensure!(s == StatusCode::OK && journal.as_array().is_some_and(|j| j.is_empty()), "GET /api/journal -> {s} {journal}");
    checked += 1;

    let before = dir.path().join("before");
    let after = dir.path().join("after");
    let (s, exported) = post_json(&app, "/api/export", json!({"out": before})).await?;
    ensure!(s == StatusCode::OK && exported["files"].is_array(), "POST /api/export -> {s} {exported}");
    checked += 1;
    let failing = [
        json!({"op": "warp_pipeline", "params": {}, "user": "qa"}),
        json!({"op": "move_node", "params": {"node_id": "node_1"}, "user": "qa"}),
        json!({"op": "move_node", "params": {"node_id": "node_1", "new_position": [14.0, 46.0]}, "user": ""}),
        json!({"op": "divide_pipeline", "params": {"pipeline_id": "pipe_15", "click": [14.3, 46.6]}, "user": "qa"}),
        json!({"op": "delete_element", "params": {"id": "node_2", "cascade": false}, "user": "qa"}),
        json!({"op": "split_node", "params": {"node_id": "node_2", "plan": {}, "offsets": []}, "user": "qa"}),
    ];
    for cmd in failing {
        let (s, body) = post_json(&app, "/api/command", cmd.clone()).await?;
        ensure!(
            !s.is_success() && body["status"] == "error" && has_keys(&body["error"], &["kind", "message"]),
            "{cmd} -> {s} {body}"
        );
    }
    post_json(&app, "/api/export", json!({"out": after})).await?;
    let diff = files_differ(&before, &after);
    ensure!(diff.is_empty(), "failed commands changed {diff:?}");
    checked += 1;

    let (s, ok) = post_json(&app, "/api/command", json!({"op": "change_direction", "params": {"pipeline_id": "pipe_3"}, "user": "qa"})).await?;
    ensure!(s == StatusCode::OK && ok["status"] == "ok" && ok["seq"] == 1, "successful command -> {s} {ok}");
    let (_, journal) = get_json(&app, "/api/journal?since=0").await?;
    ensure!(journal.as_array().map(Vec::len) == Some(1), "journal after one command: {journal}");

    let pairs: Vec<Value> = [[0.0, 0.0, 14.0, 47.0], [64.0, 0.0, 14.1, 47.0], [0.0, 48.0, 14.0, 46.9]]
        .iter()
        .map(|r| json!({"pixel": [r[0], r[1]], "world": [r[2], r[3]]}))
        .collect();
    let (s, plan) = post_json(
        &app,
        "/api/command",
        json!({"op": "add_plan_overlay", "params": {"image_file": common::plan_image(), "pairs": pairs}, "user": "qa"}),
    )
    .await?;
    ensure!(s == StatusCode::OK, "add_plan_overlay -> {s} {plan}");
    let file = plan["result"]["image_file"].as_str().unwrap_or_default();
    let (s, bytes) = call(&app, Request::get(format!("/plans/{file}")).body(Body::empty()).unwrap()).await;
    ensure!(s == StatusCode::OK && bytes == std::fs::read(common::plan_image()).unwrap(), "GET /plans/{file} -> {s}");
    checked += 1;
    Ok(format!("{checked} endpoint groups answered as documented; failed commands left the export unchanged"))
}

fn files_differ(a: &Path, b: &Path) -> Vec<PathBuf> {
    let (x, y): (BTreeMap<_, _>, BTreeMap<_, _>) = (common::snapshot_files(a), common::snapshot_files(b));
    x.keys().chain(y.keys()).filter(|k| x.get(*k) != y.get(*k)).cloned().collect()
}
