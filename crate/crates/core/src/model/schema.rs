//! Layer schema administration: element types and layer-wide attributes.

use serde::{Deserialize, Serialize};

use super::{
    is_reserved_attribute, AttrValue, Attributes, Dataset, ElementKind, LayerConfig, LayerKind, NODES_LAYER,
    PIPELINES_LAYER,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub key: String,
    #[serde(default)]
    pub default: AttrValue,
}

impl AttributeSpec {
    pub fn new(key: impl Into<String>, default: impl Into<AttrValue>) -> Self {
        Self { key: key.into(), default: default.into() }
    }
}

/// Styling of a new element type; unset fields get neutral defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElementTypeStyle {
    pub legend_label: Option<String>,
    pub color: Option<String>,
    pub marker: Option<String>,
    pub visible_default: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AttributeAction {
    Add { key: String, #[serde(default)] default: AttrValue },
    Rename { key: String, new_key: String },
    Remove { key: String },
    SetDefault { key: String, default: AttrValue },
}

/// Layer names double as file names.
pub(crate) fn validate_layer_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("layer name `{name}` must be [A-Za-z0-9_-]+")))
    }
}

fn valid_color(color: &str) -> bool {
    color.len() == 7 && color.starts_with('#') && color[1..].chars().all(|c| c.is_ascii_hexdigit())
}

impl Dataset {
    /// Schema of a layer (`nodes`, `pipelines`, or an element layer).
    pub fn schema(&self, layer: &str) -> Result<&[AttributeSpec]> {
        self.schemas.get(layer).map(Vec::as_slice).ok_or_else(|| Error::UnknownLayer(layer.to_owned()))
    }

    /// Schema defaults overlaid with `given`; rejects reserved or unknown keys.
    pub fn attributes_with_defaults(&self, layer: &str, given: &Attributes) -> Result<Attributes> {
        let schema = self.schema(layer)?;
        let mut out: Attributes = schema.iter().map(|s| (s.key.clone(), s.default.clone())).collect();
        for (key, value) in given {
            if is_reserved_attribute(layer, key) {
                return Err(Error::ReservedAttribute(key.clone()));
            }
            if !out.contains_key(key) {
                return Err(Error::UnknownAttribute { layer: layer.to_owned(), key: key.clone() });
            }
            out.insert(key.clone(), value.clone());
        }
        Ok(out)
    }

    pub fn define_element_type(
        &mut self,
        name: &str,
        kind: ElementKind,
        schema: Vec<AttributeSpec>,
        style: ElementTypeStyle,
    ) -> Result<LayerConfig> {
        if name == NODES_LAYER || name == PIPELINES_LAYER {
            return Err(Error::ReservedLayer(name.to_owned()));
        }
        validate_layer_name(name)?;
        if self.layer_config(name).is_some() || self.schemas.contains_key(name) {
            return Err(Error::DuplicateLayer(name.to_owned()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &schema {
            if is_reserved_attribute(name, &spec.key) {
                return Err(Error::ReservedAttribute(spec.key.clone()));
            }
            if !seen.insert(spec.key.as_str()) {
                return Err(Error::DuplicateAttribute { layer: name.to_owned(), key: spec.key.clone() });
            }
        }
        let color = style.color.unwrap_or_else(|| "#555555".into());
        if !valid_color(&color) {
            return Err(Error::InvalidParameter(format!("color `{color}` is not #RRGGBB")));
        }
        let config = LayerConfig {
            layer: name.to_owned(),
            kind: LayerKind::from(kind),
            legend_label: style.legend_label.unwrap_or_else(|| name.replace('_', " ")),
            color,
            marker: style.marker.unwrap_or_else(|| default_marker(kind).into()),
            visible_default: style.visible_default.unwrap_or(true),
            sublayer_of: None,
        };
        self.schemas.insert(name.to_owned(), schema);
        self.layer_configs.push(config.clone());
        Ok(config)
    }

    /// Applies a layer-wide attribute change and returns how many objects
    /// of the layer were touched.
    pub fn manage_attribute(&mut self, layer: &str, action: &AttributeAction) -> Result<usize> {
        let schema = self.schemas.get(layer).ok_or_else(|| Error::UnknownLayer(layer.to_owned()))?;
        let key = match action {
            AttributeAction::Add { key, .. }
            | AttributeAction::Rename { key, .. }
            | AttributeAction::Remove { key }
            | AttributeAction::SetDefault { key, .. } => key,
        };
        if is_reserved_attribute(layer, key) {
            return Err(Error::ReservedAttribute(key.clone()));
        }
        let position = schema.iter().position(|s| &s.key == key);
        let unknown = || Error::UnknownAttribute { layer: layer.to_owned(), key: key.clone() };

        match action {
            AttributeAction::Add { key, default } => {
                if position.is_some() {
                    return Err(Error::DuplicateAttribute { layer: layer.to_owned(), key: key.clone() });
                }
                self.schemas.get_mut(layer).unwrap().push(AttributeSpec::new(key.clone(), default.clone()));
                Ok(self.for_each_layer_attributes(layer, |attrs| {
                    attrs.insert(key.clone(), default.clone());
                }))
            }
            AttributeAction::Rename { key, new_key } => {
                let position = position.ok_or_else(unknown)?;
                if is_reserved_attribute(layer, new_key) {
                    return Err(Error::ReservedAttribute(new_key.clone()));
                }
                if new_key != key && schema.iter().any(|s| &s.key == new_key) {
                    return Err(Error::DuplicateAttribute { layer: layer.to_owned(), key: new_key.clone() });
                }
                self.schemas.get_mut(layer).unwrap()[position].key = new_key.clone();
                Ok(self.for_each_layer_attributes(layer, |attrs| {
                    if let Some(v) = attrs.remove(key) {
                        attrs.insert(new_key.clone(), v);
                    }
                }))
            }
            AttributeAction::Remove { key } => {
                let position = position.ok_or_else(unknown)?;
                self.schemas.get_mut(layer).unwrap().remove(position);
                Ok(self.for_each_layer_attributes(layer, |attrs| {
                    attrs.remove(key);
                }))
            }
            AttributeAction::SetDefault { default, .. } => {
                let position = position.ok_or_else(unknown)?;
                self.schemas.get_mut(layer).unwrap()[position].default = default.clone();
                Ok(0)
            }
        }
    }

    /// Overwrites the listed attributes of one object, leaving the rest.
    pub fn set_element_attributes(&mut self, id: &str, updates: &Attributes) -> Result<ObjectSnapshot> {
        let layer = self.layer_of(id)?;
        let schema = self.schema(&layer)?;
        for key in updates.keys() {
            if is_reserved_attribute(&layer, key) {
                return Err(Error::ReservedAttribute(key.clone()));
            }
            if !schema.iter().any(|s| &s.key == key) {
                return Err(Error::UnknownAttribute { layer: layer.clone(), key: key.clone() });
            }
        }
        let attrs = self.attributes_mut(id)?;
        for (k, v) in updates {
            attrs.insert(k.clone(), v.clone());
        }
        self.snapshot(id)
    }

    /// Layer whose schema governs the object `id`.
    pub fn layer_of(&self, id: &str) -> Result<String> {
        if self.nodes.contains_key(id) {
            Ok(NODES_LAYER.to_owned())
        } else if self.pipelines.contains_key(id) {
            Ok(PIPELINES_LAYER.to_owned())
        } else if let Some(e) = self.elements.get(id) {
            Ok(e.layer.clone())
        } else {
            Err(Error::UnknownId(id.to_owned()))
        }
    }

    fn attributes_mut(&mut self, id: &str) -> Result<&mut Attributes> {
        if let Some(n) = self.nodes.get_mut(id) {
            Ok(&mut n.attributes)
        } else if let Some(p) = self.pipelines.get_mut(id) {
            Ok(&mut p.attributes)
        } else if let Some(e) = self.elements.get_mut(id) {
            Ok(&mut e.attributes)
        } else {
            Err(Error::UnknownId(id.to_owned()))
        }
    }

    pub fn snapshot(&self, id: &str) -> Result<ObjectSnapshot> {
        if let Some(n) = self.nodes.get(id) {
            Ok(ObjectSnapshot::Node(n.clone()))
        } else if let Some(p) = self.pipelines.get(id) {
            Ok(ObjectSnapshot::Pipeline(p.clone()))
        } else if let Some(e) = self.elements.get(id) {
            Ok(ObjectSnapshot::Element(e.clone()))
        } else {
            Err(Error::UnknownId(id.to_owned()))
        }
    }

    fn for_each_layer_attributes(&mut self, layer: &str, mut f: impl FnMut(&mut Attributes)) -> usize {
        let mut count = 0;
        let mut visit = |attrs: &mut Attributes| {
            f(attrs);
            count += 1;
        };
        match layer {
            NODES_LAYER => self.nodes.values_mut().for_each(|n| visit(&mut n.attributes)),
            PIPELINES_LAYER => self.pipelines.values_mut().for_each(|p| visit(&mut p.attributes)),
            _ => self
                .elements
                .values_mut()
                .filter(|e| e.layer == layer)
                .for_each(|e| visit(&mut e.attributes)),
        }
        count
    }
}

fn default_marker(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::Line => "line",
        ElementKind::NodeAttached => "square",
        ElementKind::Point => "triangle",
        ElementKind::InLine => "diamond",
    }
}

/// Copy of one object, as returned by attribute edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", content = "object", rename_all = "snake_case")]
pub enum ObjectSnapshot {
    Node(super::Node),
    Pipeline(super::Pipeline),
    Element(super::InfrastructureElement),
}
