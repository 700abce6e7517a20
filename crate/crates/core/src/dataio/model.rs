//! Model persistence: a single JSON document per network.
//!
//! Schema: `{name, layers: [{kind, rows, cols, weights, biases, lambda}],
//! training_meta}` with weights flattened row-major. Numbers are written in
//! shortest round-trip form, so `load(save(n))` reproduces every parameter
//! bit-exactly. Schema violations report the offending field path.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec, ModelMeta, Network};
use crate::numerics::Matrix;

/// Serialize a network to `path`.
pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    let doc = model_to_value(net)?;
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Format { path: path.display().to_string(), detail: e.to_string() })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Deserialize a network from `path`.
pub fn load_model(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Format { path: path.display().to_string(), detail: e.to_string() })?;
    model_from_value(&value).map_err(|e| match e {
        Error::Format { detail, .. } => Error::Format { path: path.display().to_string(), detail },
        other => other,
    })
}

pub(crate) fn model_to_value(net: &Network) -> Result<Value> {
    let layers: Vec<Value> = net
        .layers
        .iter()
        .map(|l| {
            json!({
                "kind": l.kind.as_str(),
                "rows": l.weights.rows(),
                "cols": l.weights.cols(),
                "weights": l.weights.data(),
                "biases": l.biases,
                "lambda": l.lambda,
            })
        })
        .collect();
    let meta = serde_json::to_value(&net.meta)
        .map_err(|e| Error::Format { path: String::new(), detail: e.to_string() })?;
    Ok(json!({
        "name": net.name,
        "layers": layers,
        "training_meta": meta,
    }))
}

fn fail(path: &str, detail: impl Into<String>) -> Error {
    Error::Format { path: String::new(), detail: format!("{path}: {}", detail.into()) }
}

fn as_object<'a>(v: &'a Value, path: &str, allowed: &[&str]) -> Result<&'a Map<String, Value>> {
    let obj = v.as_object().ok_or_else(|| fail(path, "expected an object"))?;
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(fail(&format!("{path}.{key}"), "unknown field"));
        }
    }
    Ok(obj)
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| fail(&format!("{path}.{key}"), "missing field"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| fail(path, "expected a number"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64().map(|u| u as usize).ok_or_else(|| fail(path, "expected a nonnegative integer"))
}

fn as_f64_vec(v: &Value, path: &str) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| fail(path, "expected an array"))?;
    arr.iter()
        .enumerate()
        .map(|(i, e)| as_f64(e, &format!("{path}[{i}]")))
        .collect()
}

pub(crate) fn model_from_value(value: &Value) -> Result<Network> {
    let root = as_object(value, "$", &["name", "layers", "training_meta"])?;
    let name = field(root, "$", "name")?
        .as_str()
        .ok_or_else(|| fail("$.name", "expected a string"))?
        .to_string();

    let layers_value = field(root, "$", "layers")?
        .as_array()
        .ok_or_else(|| fail("$.layers", "expected an array"))?;
    if layers_value.is_empty() {
        return Err(fail("$.layers", "networks must have at least one layer"));
    }

    let mut layers = Vec::with_capacity(layers_value.len());
    for (i, lv) in layers_value.iter().enumerate() {
        let lpath = format!("$.layers[{i}]");
        let obj = as_object(lv, &lpath, &["kind", "rows", "cols", "weights", "biases", "lambda"])?;
        let kind_str = field(obj, &lpath, "kind")?
            .as_str()
            .ok_or_else(|| fail(&format!("{lpath}.kind"), "expected a string"))?;
        let kind = LayerKind::parse(kind_str)
            .map_err(|_| fail(&format!("{lpath}.kind"), format!("unknown layer kind \"{kind_str}\"")))?;
        let rows = as_usize(field(obj, &lpath, "rows")?, &format!("{lpath}.rows"))?;
        let cols = as_usize(field(obj, &lpath, "cols")?, &format!("{lpath}.cols"))?;
        let weights = as_f64_vec(field(obj, &lpath, "weights")?, &format!("{lpath}.weights"))?;
        if weights.len() != rows * cols {
            return Err(fail(
                &format!("{lpath}.weights"),
                format!("has {} entries, expected rows*cols = {}", weights.len(), rows * cols),
            ));
        }
        let biases = as_f64_vec(field(obj, &lpath, "biases")?, &format!("{lpath}.biases"))?;
        if biases.len() != rows {
            return Err(fail(
                &format!("{lpath}.biases"),
                format!("has {} entries, expected rows = {rows}", biases.len()),
            ));
        }
        let lambda = as_f64(field(obj, &lpath, "lambda")?, &format!("{lpath}.lambda"))?;
        let matrix = Matrix::from_vec(rows, cols, weights)
            .map_err(|e| fail(&format!("{lpath}.weights"), e.to_string()))?;
        let layer = LayerSpec::new(kind, matrix, biases, lambda)
            .map_err(|e| fail(&lpath, e.to_string()))?;
        layers.push(layer);
    }

    let meta: ModelMeta = match root.get("training_meta") {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| fail("$.training_meta", e.to_string()))?,
        None => ModelMeta::default(),
    };

    let mut net = Network::new(name, layers)?;
    net.meta = meta;
    Ok(net)
}
