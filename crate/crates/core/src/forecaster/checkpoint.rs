//! Versioned JSON checkpoints.
//!
//! Layout: `magic`, `version`, `config`, `standardization`, `tensors` (in
//! canonical tensor order, each `{shape, values}`). Floats are written in
//! shortest round-trip form, so loading reproduces every bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use super::{ModelConfig, ModelParams, Weights};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::trajectory::Standardization;

pub const CHECKPOINT_MAGIC: &str = "TRAJXAI";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Serialize)]
struct TensorOut<'a> {
    shape: [usize; 2],
    values: &'a [f64],
}

struct OrderedTensors<'a>(Vec<(String, &'a Matrix)>);

impl Serialize for OrderedTensors<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, m) in &self.0 {
            map.serialize_entry(
                name,
                &TensorOut {
                    shape: [m.rows(), m.cols()],
                    values: m.as_slice(),
                },
            )?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    magic: &'a str,
    version: u64,
    config: &'a ModelConfig,
    standardization: &'a Standardization,
    tensors: OrderedTensors<'a>,
}

#[derive(Deserialize)]
struct TensorIn {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct CheckpointIn {
    config: ModelConfig,
    standardization: Standardization,
    tensors: BTreeMap<String, TensorIn>,
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let doc = CheckpointOut {
        magic: CHECKPOINT_MAGIC,
        version: CHECKPOINT_VERSION,
        config: &params.config,
        standardization: &params.standardization,
        tensors: OrderedTensors(params.weights.tensors()),
    };
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut out, &doc)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let value: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    match value.get("magic").and_then(Value::as_str) {
        Some(CHECKPOINT_MAGIC) => {}
        Some(other) => return Err(Error::BadMagic(other.to_string())),
        None => return Err(Error::BadMagic(String::new())),
    }
    match value.get("version").and_then(Value::as_u64) {
        Some(CHECKPOINT_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedVersion(v)),
        None => return Err(Error::CheckpointShape("missing version".into())),
    }
    let doc: CheckpointIn = serde_json::from_value(value)?;
    doc.config
        .validate()
        .map_err(|e| Error::CheckpointShape(format!("invalid config: {e}")))?;

    let mut weights = Weights::zeros(&doc.config);
    let names: Vec<String> = weights.tensors().into_iter().map(|(n, _)| n).collect();
    if doc.tensors.len() != names.len() {
        return Err(Error::CheckpointShape(format!(
            "expected {} tensors, found {}",
            names.len(),
            doc.tensors.len()
        )));
    }
    for (name, dst) in names.iter().zip(weights.tensors_mut()) {
        let src = doc
            .tensors
            .get(name)
            .ok_or_else(|| Error::CheckpointShape(format!("missing tensor `{name}`")))?;
        if src.shape != [dst.rows(), dst.cols()] || src.values.len() != dst.as_slice().len() {
            return Err(Error::CheckpointShape(format!(
                "tensor `{name}` has shape {:?} with {} values, expected [{}, {}]",
                src.shape,
                src.values.len(),
                dst.rows(),
                dst.cols()
            )));
        }
        *dst = Matrix::from_vec(dst.rows(), dst.cols(), src.values.clone())
            .map_err(|e| Error::CheckpointShape(format!("tensor `{name}`: {e}")))?;
    }
    if !doc.standardization.std.iter().all(|s| *s > 0.0) {
        return Err(Error::CheckpointShape("standardization std must be positive".into()));
    }
    Ok(ModelParams {
        config: doc.config,
        weights,
        standardization: doc.standardization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::{forward, init_model};
    use crate::numerics::RngStream;

    fn model() -> ModelParams {
        let mut p = init_model(&ModelConfig {
            window: 5,
            hidden: 6,
            attn_dim: 5,
            seed: 12,
            ..ModelConfig::default()
        })
        .unwrap();
        p.standardization.mean = [1e-4, -2e-4, 60.0, 60.0];
        p.standardization.std = [3.3e-4, 1.7e-4, 1e-9, 1e-9];
        p
    }

    fn edit(path: &Path, f: impl FnOnce(&mut Value)) {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        f(&mut v);
        fs::write(path, serde_json::to_string(&v).unwrap()).unwrap();
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let p = model();
        save_checkpoint(&p, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, p);
        let mut rng = RngStream::new(3);
        let raw: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let x = Matrix::from_vec(5, 4, raw).unwrap();
        let a = forward(&p, &x, false).unwrap();
        let b = forward(&back, &x, false).unwrap();
        assert_eq!(a.delta.map(f64::to_bits), b.delta.map(f64::to_bits));
    }

    #[test]
    fn field_order_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&model(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("magic") < pos("version"));
        assert!(pos("version") < pos("config"));
        assert!(pos("config") < pos("standardization"));
        assert!(pos("standardization") < pos("tensors"));
        assert!(pos("fwd.w_input") < pos("head.b"));
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_checkpoint(dir.path().join("nope.json")),
            Err(Error::MissingFile(_))
        ));

        let path = dir.path().join("m.json");
        save_checkpoint(&model(), &path).unwrap();
        edit(&path, |v| v["magic"] = "NOTIT".into());
        assert!(matches!(load_checkpoint(&path), Err(Error::BadMagic(_))));

        save_checkpoint(&model(), &path).unwrap();
        edit(&path, |v| v["version"] = 999.into());
        assert!(matches!(load_checkpoint(&path), Err(Error::UnsupportedVersion(999))));

        save_checkpoint(&model(), &path).unwrap();
        edit(&path, |v| v["tensors"]["attn.w"]["shape"] = serde_json::json!([5, 11]));
        assert!(matches!(load_checkpoint(&path), Err(Error::CheckpointShape(_))));

        save_checkpoint(&model(), &path).unwrap();
        edit(&path, |v| {
            v["tensors"].as_object_mut().unwrap().remove("head.b");
        });
        assert!(matches!(load_checkpoint(&path), Err(Error::CheckpointShape(_))));
    }
}
