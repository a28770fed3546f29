//! Weight file: the ASCII magic `FMDL1`, a newline, a `key=value` text header
//! ending with the line `end`, then every parameter tensor as little-endian
//! binary64 in manifest order. Nothing may follow the last blob.
//!
//! ```text
//! FMDL1
//! kind=fusion
//! num_classes=9
//! input_len=1000
//! vibration_convs=16:7:2,32:5:2,64:3:2
//! acoustic_convs=16:7:2,32:5:2
//! lstm_units=64,64
//! dense_units=32
//! class_names=Healthy|Inner-1|...
//! param=vibration.0.conv1d.0 7x1x16
//! ...
//! end
//! <blobs>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ConvBlock, Model, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::Rng;

pub const MAGIC: &[u8; 5] = b"FMDL1";

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_model(model);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

pub fn write_model(model: &Model) -> Vec<u8> {
    let spec = model.spec();
    let mut header = String::new();
    header.push_str(&format!("kind={}\n", spec.kind));
    header.push_str(&format!("num_classes={}\n", spec.num_classes));
    header.push_str(&format!("input_len={}\n", spec.input_len));
    header.push_str(&format!("vibration_convs={}\n", join(&spec.vibration_convs)));
    header.push_str(&format!("acoustic_convs={}\n", join(&spec.acoustic_convs)));
    header.push_str(&format!("lstm_units={}\n", join(&spec.lstm_units)));
    header.push_str(&format!("dense_units={}\n", spec.dense_units));
    header.push_str(&format!("class_names={}\n", model.class_names().join("|")));
    for (name, t) in model.param_names().iter().zip(model.params()) {
        header.push_str(&format!("param={name} {}\n", dims(t.shape())));
    }
    header.push_str("end\n");

    let n_values = model.num_params();
    let mut out = Vec::with_capacity(MAGIC.len() + 1 + header.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.push(b'\n');
    out.extend_from_slice(header.as_bytes());
    for t in model.params() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 1 || &bytes[..MAGIC.len()] != MAGIC || bytes[MAGIC.len()] != b'\n' {
        return Err(Error::Format("bad magic".into()));
    }
    let mut pos = MAGIC.len() + 1;
    let mut spec_fields = Vec::new();
    let mut manifest = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::Format("header is not UTF-8".into()))?;
        pos += nl + 1;
        if line == "end" {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        if key == "param" {
            let (name, shape) = value
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad param line {line:?}")))?;
            let shape: Vec<usize> = shape
                .split('x')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("bad shape in {line:?}")))?;
            manifest.push((name.to_string(), shape));
        } else {
            spec_fields.push((key.to_string(), value.to_string()));
        }
    }

    let spec = parse_spec(&spec_fields)?;
    // The skeleton fixes the expected manifest; its random values are overwritten.
    let mut model = Model::build(&spec, &mut Rng::new(0))
        .map_err(|e| Error::Format(format!("header describes an invalid model: {e}")))?;
    if let Some((_, names)) = spec_fields.iter().find(|(k, _)| k == "class_names") {
        model
            .set_class_names(names.split('|').map(str::to_string).collect())
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    let names = model.param_names();
    if names.len() != manifest.len() {
        return Err(Error::Format(format!(
            "manifest lists {} tensors, model needs {}",
            manifest.len(),
            names.len()
        )));
    }
    for ((name, shape), (expected, t)) in manifest.iter().zip(names.iter().zip(model.params())) {
        if name != expected || shape.as_slice() != t.shape() {
            return Err(Error::Format(format!(
                "manifest entry {name} {shape:?} does not match {expected} {:?}",
                t.shape()
            )));
        }
    }
    let needed = 8 * model.num_params();
    let body = &bytes[pos..];
    if body.len() != needed {
        return Err(Error::Format(format!(
            "expected {needed} bytes of weights, found {}",
            body.len()
        )));
    }
    let mut chunks = body.chunks_exact(8);
    for t in model.params_mut() {
        for v in t.data_mut() {
            let c = chunks.next().expect("length checked");
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    Ok(model)
}

fn parse_spec(fields: &[(String, String)]) -> Result<ModelSpec> {
    let get = |key: &str| -> Result<&str> {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("header is missing {key}")))
    };
    let num = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("bad {key}")))
    };
    let list = |key: &str| -> Result<Vec<String>> {
        let v = get(key)?;
        Ok(if v.is_empty() {
            Vec::new()
        } else {
            v.split(',').map(str::to_string).collect()
        })
    };
    let convs = |key: &str| -> Result<Vec<ConvBlock>> {
        list(key)?
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad {key}"))))
            .collect()
    };
    Ok(ModelSpec {
        kind: get("kind")?
            .parse()
            .map_err(|_| Error::Format("bad kind".into()))?,
        num_classes: num("num_classes")?,
        input_len: num("input_len")?,
        vibration_convs: convs("vibration_convs")?,
        acoustic_convs: convs("acoustic_convs")?,
        lstm_units: list("lstm_units")?
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Format("bad lstm_units".into())))
            .collect::<Result<_>>()?,
        dense_units: num("dense_units")?,
    })
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn dims(shape: &[usize]) -> String {
    join(shape).replace(',', "x")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::tensor::Tensor;

    fn tiny() -> Model {
        let spec = ModelSpec {
            kind: ModelKind::Fusion,
            num_classes: 3,
            input_len: 24,
            vibration_convs: vec![ConvBlock::new(2, 3, 2)],
            acoustic_convs: vec![ConvBlock::new(2, 3, 2)],
            lstm_units: vec![2],
            dense_units: 4,
        };
        let mut model = Model::build(&spec, &mut Rng::new(17)).unwrap();
        model
            .set_class_names(vec!["Healthy".into(), "Inner 1".into(), "Outer-2".into()])
            .unwrap();
        model
    }

    #[test]
    fn round_trip_is_exact() {
        let model = tiny();
        let bytes = write_model(&model);
        let back = read_model(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(write_model(&back), bytes);
        let x = Tensor::filled(&[24, 1], 0.25);
        assert_eq!(
            model.predict(Some(&x), Some(&x)).unwrap(),
            back.predict(Some(&x), Some(&x)).unwrap()
        );
    }

    #[test]
    fn header_is_text() {
        let bytes = write_model(&tiny());
        let text = String::from_utf8_lossy(&bytes[..200]);
        assert!(text.starts_with("FMDL1\nkind=fusion\nnum_classes=3\n"));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = write_model(&tiny());
        bytes[0] = b'X';
        assert!(read_model(&bytes).unwrap_err().to_string().contains("bad magic"));
    }

    #[test]
    fn truncated_blob() {
        let bytes = write_model(&tiny());
        let err = read_model(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_model(&extra).is_err());
    }

    #[test]
    fn truncated_header() {
        let bytes = write_model(&tiny());
        assert!(read_model(&bytes[..40]).is_err());
    }

    #[test]
    fn manifest_shape_mismatch() {
        let bytes = write_model(&tiny());
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let pos = text.find("param=vibration.0.conv1d.0 3x1x2").unwrap();
        let mut tampered = bytes.clone();
        let shape_at = pos + "param=vibration.0.conv1d.0 ".len();
        tampered[shape_at] = b'4';
        assert!(read_model(&tampered).is_err());
    }
}
