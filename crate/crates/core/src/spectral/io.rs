//! JSON ingestion for spectral layer stacks.
//!
//! Mirrors the model schema, extended with analysis-only kinds: `conv`
//! (carrying features, kernel size, stride, and kernels), `max_pool`,
//! `relu`, and `contrast_norm`.

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec};
use crate::numerics::Matrix;
use crate::spectral::{ContractiveKind, ConvLayerSpec, SpectralLayer};

/// Load a mixed spectral layer list from a JSON document of the form
/// `{"name": ..., "layers": [...]}`.
pub fn load_spectral_spec(path: &Path) -> Result<(String, Vec<SpectralLayer>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Format { path: path.display().to_string(), detail: e.to_string() })?;
    parse_spec(&value).map_err(|e| match e {
        Error::Format { detail, .. } => Error::Format { path: path.display().to_string(), detail },
        other => other,
    })
}

fn fail(path: &str, detail: impl Into<String>) -> Error {
    Error::Format { path: String::new(), detail: format!("{path}: {}", detail.into()) }
}

fn get<'a>(v: &'a Value, path: &str, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| fail(&format!("{path}.{key}"), "missing field"))
}

fn num(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| fail(path, "expected a number"))
}

fn count(v: &Value, path: &str) -> Result<usize> {
    v.as_u64().map(|u| u as usize).ok_or_else(|| fail(path, "expected a nonnegative integer"))
}

fn floats(v: &Value, path: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| fail(path, "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, e)| num(e, &format!("{path}[{i}]")))
        .collect()
}

pub(crate) fn parse_spec(value: &Value) -> Result<(String, Vec<SpectralLayer>)> {
    let name = value
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or("spectral-spec")
        .to_string();
    let layers_value = get(value, "$", "layers")?
        .as_array()
        .ok_or_else(|| fail("$.layers", "expected an array"))?;
    if layers_value.is_empty() {
        return Err(fail("$.layers", "layer list must be nonempty"));
    }

    let mut layers = Vec::with_capacity(layers_value.len());
    for (i, lv) in layers_value.iter().enumerate() {
        let lpath = format!("$.layers[{i}]");
        let kind = get(lv, &lpath, "kind")?
            .as_str()
            .ok_or_else(|| fail(&format!("{lpath}.kind"), "expected a string"))?;
        let layer = match kind {
            "conv" => {
                let c = count(get(lv, &lpath, "in_features")?, &format!("{lpath}.in_features"))?;
                let d = count(get(lv, &lpath, "out_features")?, &format!("{lpath}.out_features"))?;
                let n = count(get(lv, &lpath, "kernel_size")?, &format!("{lpath}.kernel_size"))?;
                let stride = count(get(lv, &lpath, "stride")?, &format!("{lpath}.stride"))?;
                let kpath = format!("{lpath}.kernels");
                let raw = get(lv, &lpath, "kernels")?
                    .as_array()
                    .ok_or_else(|| fail(&kpath, "expected an array"))?;
                let mut kernels = Vec::with_capacity(raw.len());
                for (j, kv) in raw.iter().enumerate() {
                    let flat = floats(kv, &format!("{kpath}[{j}]"))?;
                    let m = Matrix::from_vec(n, n, flat)
                        .map_err(|e| fail(&format!("{kpath}[{j}]"), e.to_string()))?;
                    kernels.push(m);
                }
                let spec = ConvLayerSpec::new(c, d, n, stride, kernels)
                    .map_err(|e| fail(&lpath, e.to_string()))?;
                SpectralLayer::Conv(spec)
            }
            "max_pool" => SpectralLayer::Contractive(ContractiveKind::MaxPool),
            "relu" => SpectralLayer::Contractive(ContractiveKind::Relu),
            "contrast_norm" => {
                let epsilon = num(get(lv, &lpath, "epsilon")?, &format!("{lpath}.epsilon"))?;
                let gamma = num(get(lv, &lpath, "gamma")?, &format!("{lpath}.gamma"))?;
                SpectralLayer::Contractive(ContractiveKind::ContrastNorm { epsilon, gamma })
            }
            fc_kind => {
                let kind = LayerKind::parse(fc_kind)
                    .map_err(|_| fail(&format!("{lpath}.kind"), format!("unknown layer kind \"{fc_kind}\"")))?;
                let rows = count(get(lv, &lpath, "rows")?, &format!("{lpath}.rows"))?;
                let cols = count(get(lv, &lpath, "cols")?, &format!("{lpath}.cols"))?;
                let weights = floats(get(lv, &lpath, "weights")?, &format!("{lpath}.weights"))?;
                let biases = match lv.get("biases") {
                    Some(b) => floats(b, &format!("{lpath}.biases"))?,
                    None => vec![0.0; rows],
                };
                let m = Matrix::from_vec(rows, cols, weights)
                    .map_err(|e| fail(&format!("{lpath}.weights"), e.to_string()))?;
                let spec = LayerSpec::new(kind, m, biases, 0.0)
                    .map_err(|e| fail(&lpath, e.to_string()))?;
                SpectralLayer::Fc(spec)
            }
        };
        layers.push(layer);
    }
    Ok((name, layers))
}
