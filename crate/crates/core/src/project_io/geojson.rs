//! Minimal GeoJSON feature-collection reading and canonical writing.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geomath::GeoPosition;
use crate::model::{AttrValue, Attributes};

/// Decimal places kept for coordinates in saved files.
pub const COORD_DECIMALS: i32 = 7;
/// Decimal places kept for in-line position fractions.
pub const FRACTION_DECIMALS: i32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(GeoPosition),
    LineString(Vec<GeoPosition>),
    /// Any other geometry type, by name.
    Other(String),
}

impl Geometry {
    pub fn type_name(&self) -> &str {
        match self {
            Geometry::Point(_) => "Point",
            Geometry::LineString(_) => "LineString",
            Geometry::Other(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub index: usize,
    pub geometry: Geometry,
    pub properties: Map<String, Value>,
}

impl Feature {
    pub fn str_prop(&self, key: &str) -> Option<&str> {
        self.properties.get(key).and_then(Value::as_str)
    }
}

fn parse_error(file: &Path, index: Option<usize>, cause: impl Into<String>) -> Error {
    Error::ParseError { file: file.to_owned(), index, cause: cause.into() }
}

fn position(v: &Value) -> std::result::Result<GeoPosition, String> {
    let arr = v.as_array().ok_or("coordinate is not an array")?;
    if !(2..=3).contains(&arr.len()) {
        return Err(format!("coordinate has {} components", arr.len()));
    }
    let lon = arr[0].as_f64().ok_or("longitude is not a number")?;
    let lat = arr[1].as_f64().ok_or("latitude is not a number")?;
    GeoPosition::new(lon, lat).map_err(|e| e.to_string())
}

fn geometry(v: &Value) -> std::result::Result<Geometry, String> {
    let obj = v.as_object().ok_or("geometry is not an object")?;
    let kind = obj.get("type").and_then(Value::as_str).ok_or("geometry has no type")?;
    let coords = obj.get("coordinates");
    match kind {
        "Point" => Ok(Geometry::Point(position(coords.ok_or("Point without coordinates")?)?)),
        "LineString" => {
            let arr = coords.and_then(Value::as_array).ok_or("LineString coordinates are not an array")?;
            Ok(Geometry::LineString(arr.iter().map(position).collect::<std::result::Result<_, _>>()?))
        }
        other => Ok(Geometry::Other(other.to_owned())),
    }
}

/// Parses a feature collection; `file` only labels errors.
pub fn parse_collection(value: &Value, file: &Path) -> Result<Vec<Feature>> {
    let obj = value.as_object().ok_or_else(|| parse_error(file, None, "top level is not an object"))?;
    if obj.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(parse_error(file, None, "not a FeatureCollection"));
    }
    let features = obj
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_error(file, None, "`features` is not an array"))?;
    features
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let fail = |cause: String| parse_error(file, Some(index), cause);
            let f = f.as_object().ok_or_else(|| fail("feature is not an object".into()))?;
            if f.get("type").and_then(Value::as_str) != Some("Feature") {
                return Err(fail("type is not Feature".into()));
            }
            let geometry = match f.get("geometry") {
                Some(Value::Null) | None => Geometry::Other("null".into()),
                Some(g) => geometry(g).map_err(fail)?,
            };
            let properties = match f.get("properties") {
                Some(Value::Object(m)) => m.clone(),
                Some(Value::Null) | None => Map::new(),
                Some(_) => return Err(fail("properties is not an object".into())),
            };
            Ok(Feature { index, geometry, properties })
        })
        .collect()
}

pub fn read_collection(path: &Path) -> Result<Vec<Feature>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| parse_error(path, None, e.to_string()))?;
    parse_collection(&value, path)
}

/// Splits feature properties into structural values and free attributes.
pub fn free_attributes(
    properties: &Map<String, Value>,
    is_structural: impl Fn(&str) -> bool,
    file: &Path,
    index: usize,
) -> Result<Attributes> {
    properties
        .iter()
        .filter(|(k, _)| !is_structural(k))
        .map(|(k, v)| {
            AttrValue::try_from(v.clone())
                .map(|v| (k.clone(), v))
                .map_err(|cause| parse_error(file, Some(index), format!("{k}: {cause}")))
        })
        .collect()
}

pub fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let r = (x * scale).round() / scale;
    // avoid writing -0.0
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn coord(p: GeoPosition) -> Value {
    json!([round_to(p.lon(), COORD_DECIMALS), round_to(p.lat(), COORD_DECIMALS)])
}

pub fn point(p: GeoPosition) -> Value {
    json!({"type": "Point", "coordinates": coord(p)})
}

pub fn line_string(route: &[GeoPosition]) -> Value {
    json!({"type": "LineString", "coordinates": route.iter().map(|p| coord(*p)).collect::<Vec<_>>()})
}

pub fn feature(geometry: Value, properties: Map<String, Value>) -> Value {
    json!({"type": "Feature", "geometry": geometry, "properties": properties})
}

/// Features sorted by their `id` property.
pub fn collection(mut features: Vec<Value>) -> Value {
    features.sort_by(|a, b| {
        let id = |v: &Value| v["properties"]["id"].as_str().map(str::to_owned).unwrap_or_default();
        id(a).cmp(&id(b))
    });
    json!({"type": "FeatureCollection", "features": features})
}

/// Pretty, key-sorted, newline-terminated JSON text.
pub fn to_canonical_string(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}
