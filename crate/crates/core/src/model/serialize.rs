//! Model persistence: a small `key=value` text manifest plus a binary blob
//! of little-endian `f64` parameter data.

use std::fs;
use std::path::{Path, PathBuf};

use super::train::EpochRecord;
use super::{param_shapes, Model, ModelConfig};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "KSHAPEM1";

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Write `<path>` (text manifest) and `<path stem>.bin` (parameters).
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let blob = blob_path(path);
    let blob_name = blob
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::invalid("save_model", format!("bad path {}", path.display())))?
        .to_string();
    let mut text = format!("format={FORMAT_TAG}\n");
    let cfg = serde_json::to_value(&model.config).expect("config serializes");
    for (k, v) in cfg.as_object().expect("config is an object") {
        text.push_str(&format!("config.{k}={v}\n"));
    }
    text.push_str(&format!("blob={blob_name}\n"));
    let mut bytes = FORMAT_TAG.as_bytes().to_vec();
    for (name, p) in model.names.iter().zip(&model.params) {
        let dims: Vec<String> = p.shape().iter().map(usize::to_string).collect();
        text.push_str(&format!("tensor.{name}={}@{}\n", dims.join("x"), bytes.len()));
        for v in p.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for rec in &model.history {
        let val = rec.val_acc.map_or("-".to_string(), |v| format!("{v:?}"));
        text.push_str(&format!(
            "history.{}={:?},{:?},{val}\n",
            rec.epoch, rec.loss, rec.train_acc
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut format = None;
    let mut cfg = serde_json::Map::new();
    let mut blob_name = None;
    let mut tensors: Vec<(usize, String, Vec<usize>, usize)> = Vec::new();
    let mut history = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected key=value, got {raw:?}")))?;
        if key == "format" {
            format = Some(value.to_string());
        } else if key == "blob" {
            blob_name = Some(value.to_string());
        } else if let Some(k) = key.strip_prefix("config.") {
            let v: serde_json::Value = serde_json::from_str(value)
                .map_err(|e| parse_err(line, format!("config.{k}: {e}")))?;
            cfg.insert(k.to_string(), v);
        } else if let Some(name) = key.strip_prefix("tensor.") {
            let (dims, offset) = value
                .split_once('@')
                .ok_or_else(|| parse_err(line, "tensor entry needs dims@offset".into()))?;
            let dims = dims
                .split('x')
                .filter(|d| !d.is_empty())
                .map(str::parse)
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|e| parse_err(line, format!("tensor {name} dims: {e}")))?;
            let offset = offset
                .parse()
                .map_err(|e| parse_err(line, format!("tensor {name} offset: {e}")))?;
            tensors.push((line, name.to_string(), dims, offset));
        } else if let Some(epoch) = key.strip_prefix("history.") {
            let epoch: usize = epoch
                .parse()
                .map_err(|e| parse_err(line, format!("history epoch: {e}")))?;
            let parts: Vec<&str> = value.split(',').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(line, format!("history: {e}")));
            if parts.len() != 3 {
                return Err(parse_err(line, "history needs loss,train_acc,val_acc".into()));
            }
            history.push(EpochRecord {
                epoch,
                loss: num(parts[0])?,
                train_acc: num(parts[1])?,
                val_acc: if parts[2] == "-" { None } else { Some(num(parts[2])?) },
            });
        } else {
            return Err(parse_err(line, format!("unknown key {key:?}")));
        }
    }
    if format.as_deref() != Some(FORMAT_TAG) {
        return Err(parse_err(1, format!("format is {format:?}, expected {FORMAT_TAG}")));
    }
    let config: ModelConfig = serde_json::from_value(serde_json::Value::Object(cfg)).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    config.validate()?;
    let blob_name = blob_name.ok_or_else(|| parse_err(0, "missing blob entry".into()))?;
    let blob = path.with_file_name(&blob_name);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    if !bytes.starts_with(FORMAT_TAG.as_bytes()) {
        return Err(Error::invalid("load_model", format!("{}: bad magic", blob.display())));
    }
    let expected = param_shapes(&config);
    if expected.len() != tensors.len() {
        return Err(Error::invalid(
            "load_model",
            format!("{} tensors stored, config needs {}", tensors.len(), expected.len()),
        ));
    }
    let mut names = Vec::new();
    let mut params = Vec::new();
    for ((line, name, dims, offset), (want_name, want_dims)) in tensors.into_iter().zip(expected) {
        if name != want_name || dims != want_dims {
            return Err(parse_err(
                line,
                format!("tensor {name} {dims:?} does not match expected {want_name} {want_dims:?}"),
            ));
        }
        let numel: usize = dims.iter().product();
        let end = offset + numel * 8;
        let chunk = bytes
            .get(offset..end)
            .ok_or_else(|| parse_err(line, format!("tensor {name} runs past end of blob")))?;
        let data = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        params.push(Tensor::new(&dims, data)?);
        names.push(name);
    }
    Ok(Model {
        config,
        names,
        params,
        history,
    })
}
