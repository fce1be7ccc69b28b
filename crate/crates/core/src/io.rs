//! File formats: JSON-lines datasets, JSON checkpoints, CSV tables.
//!
//! Every writer goes through a temporary file in the destination directory
//! that is renamed into place, so readers never observe partial output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetFile, DatasetRecord};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::gat::{Activation, GatLayerParams, HeadCombine, LayerTensors, ModelParams};
use crate::train::EpochRecord;

pub const CHECKPOINT_FORMAT: &str = "steiner-gat-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes through a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// serde_json's message without its own position suffix, plus the column.
fn json_message(e: &serde_json::Error) -> String {
    let text = e.to_string();
    let bare = match text.rfind(" at line ") {
        Some(i) => &text[..i],
        None => &text,
    };
    format!("{bare} (column {})", e.column())
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn save_dataset(path: &Path, file: &DatasetFile) -> Result<()> {
    write_atomic(path, |w| {
        for r in &file.records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Reads a dataset, checking degrees, pin uniqueness and any labels.
pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| parse_error(path, line_no, json_message(&e)))?;
        if !ids.insert(record.id) {
            return Err(parse_error(path, line_no, format!("duplicate net id {}", record.id)));
        }
        match (&record.labels, record.wl_opt) {
            (Some(_), Some(_)) => {
                record
                    .to_labeled()
                    .map_err(|e| parse_error(path, line_no, e.to_string()))?;
            }
            (None, None) => {
                record
                    .to_net()
                    .map_err(|e| parse_error(path, line_no, e.to_string()))?;
            }
            _ => {
                return Err(parse_error(
                    path,
                    line_no,
                    "labels and wl_opt must appear together",
                ))
            }
        }
        records.push(record);
    }
    Ok(DatasetFile { records })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub training: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerSpec {
    in_dim: usize,
    channels: usize,
    heads: usize,
    activation: Activation,
    combine: HeadCombine,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    layers: Vec<LayerSpec>,
    attention_dropout: f64,
    layer_dropout: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerWeights {
    kernel: Tensor,
    attention_src: Tensor,
    attention_dst: Tensor,
    bias: Tensor,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format: String,
    version: u32,
    model: ModelSpec,
    weights: Vec<LayerWeights>,
    training: TrainingMeta,
}

fn layer_doc(layer: &GatLayerParams) -> (LayerSpec, LayerWeights) {
    let (i, o, h) = (layer.in_dim, layer.out_dim, layer.heads);
    let t = &layer.tensors;
    (
        LayerSpec {
            in_dim: i,
            channels: o,
            heads: h,
            activation: layer.activation,
            combine: layer.combine,
        },
        LayerWeights {
            kernel: Tensor {
                shape: vec![h, i, o],
                data: t.kernel.clone(),
            },
            attention_src: Tensor {
                shape: vec![h, o],
                data: t.att_src.clone(),
            },
            attention_dst: Tensor {
                shape: vec![h, o],
                data: t.att_dst.clone(),
            },
            bias: Tensor {
                shape: vec![h, o],
                data: t.bias.clone(),
            },
        },
    )
}

fn layer_from_doc(spec: LayerSpec, weights: LayerWeights) -> std::result::Result<GatLayerParams, String> {
    let (i, o, h) = (spec.in_dim, spec.channels, spec.heads);
    let check = |name: &str, t: &Tensor, want: Vec<usize>| {
        if t.shape != want {
            return Err(format!("{name} shape {:?}, expected {want:?}", t.shape));
        }
        let count: usize = t.shape.iter().product();
        if t.data.len() != count {
            return Err(format!("{name} has {} values for shape {:?}", t.data.len(), t.shape));
        }
        Ok(())
    };
    check("kernel", &weights.kernel, vec![h, i, o])?;
    check("attention_src", &weights.attention_src, vec![h, o])?;
    check("attention_dst", &weights.attention_dst, vec![h, o])?;
    check("bias", &weights.bias, vec![h, o])?;
    Ok(GatLayerParams {
        in_dim: i,
        out_dim: o,
        heads: h,
        activation: spec.activation,
        combine: spec.combine,
        tensors: LayerTensors {
            kernel: weights.kernel.data,
            att_src: weights.attention_src.data,
            att_dst: weights.attention_dst.data,
            bias: weights.bias.data,
        },
    })
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let p = &checkpoint.params;
    let (s1, w1) = layer_doc(&p.layer1);
    let (s2, w2) = layer_doc(&p.layer2);
    let doc = CheckpointDoc {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        model: ModelSpec {
            layers: vec![s1, s2],
            attention_dropout: p.attention_dropout_rate,
            layer_dropout: p.layer_dropout_rate,
        },
        weights: vec![w1, w2],
        training: checkpoint.training,
    };
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        w.write_all(b"\n")
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json_err = |e: serde_json::Error| parse_error(path, e.line(), json_message(&e));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(CHECKPOINT_FORMAT) => {}
        _ => return Err(parse_error(path, 1, "not a checkpoint file")),
    }
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| parse_error(path, 1, "missing checkpoint version"))?;
    if version != CHECKPOINT_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version.min(u32::MAX as u64) as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let doc: CheckpointDoc = serde_json::from_str(&text).map_err(json_err)?;
    if doc.model.layers.len() != 2 || doc.weights.len() != 2 {
        return Err(parse_error(path, 1, "expected exactly two layers"));
    }
    let mut layers = doc
        .model
        .layers
        .into_iter()
        .zip(doc.weights)
        .map(|(s, w)| layer_from_doc(s, w))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|msg| parse_error(path, 1, msg))?;
    let layer2 = layers.pop().unwrap();
    let layer1 = layers.pop().unwrap();
    let params = ModelParams {
        layer1,
        layer2,
        attention_dropout_rate: doc.model.attention_dropout,
        layer_dropout_rate: doc.model.layer_dropout,
    };
    params
        .validate()
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    Ok(Checkpoint {
        params,
        training: doc.training,
    })
}

pub fn save_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in history {
            csv.serialize(r)?;
        }
        csv.flush()
    })
}

#[derive(Serialize)]
struct EvalRow {
    net_id: u64,
    degree: usize,
    accuracy: f64,
    wl: i64,
    wl_opt: i64,
    wl_increase: f64,
    refined_flag: u8,
}

pub fn save_eval_csv(path: &Path, report: &EvalReport) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &report.rows {
            csv.serialize(EvalRow {
                net_id: r.net_id,
                degree: r.degree,
                accuracy: r.accuracy,
                wl: r.wl,
                wl_opt: r.wl_opt,
                wl_increase: r.wl_increase,
                refined_flag: u8::from(r.refined),
            })?;
        }
        csv.flush()
    })
}

pub fn save_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

/// One line of a prediction output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub selected: Vec<usize>,
    pub wl: i64,
    pub refined: bool,
}

pub fn save_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    write_atomic(path, |w| {
        for r in records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}
