//! Supervised training loops and the dataset file format.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::complex::Complex;
use crate::engine::{constants, Engine};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::io::{complex_from_json, complex_to_json, feature_widths, features_from_rows, features_tokens, read_text, Widths};
use crate::layers::Level;
use crate::model::Model;
use crate::tensor::{Adam, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Complex-level classification of edge flows on one shared complex.
    Trajectory,
    /// Transductive classification of the vertices of one complex.
    NodeClass,
    /// Complex-level classification over many complexes.
    ComplexClass,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trajectory" => Ok(Task::Trajectory),
            "node-class" => Ok(Task::NodeClass),
            "complex-class" => Ok(Task::ComplexClass),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

/// One labelled input: features on `complexes[complex]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub complex: usize,
    pub features: FeatureStore,
    pub label: usize,
    pub test: bool,
}

#[derive(Debug, Clone)]
pub struct ComplexDataset {
    pub complexes: Vec<Complex>,
    pub samples: Vec<Sample>,
}

/// Vertex labels on a single complex with a fixed train/test split.
#[derive(Debug, Clone)]
pub struct NodeDataset {
    pub complex: Complex,
    pub features: FeatureStore,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum Dataset {
    Complexes(ComplexDataset),
    Nodes(NodeDataset),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc<'a> {
    #[serde(borrow, default)]
    complexes: Option<Vec<&'a RawValue>>,
    #[serde(default)]
    samples: Option<Vec<SampleDoc>>,
    #[serde(borrow, default)]
    complex: Option<&'a RawValue>,
    #[serde(default)]
    labels: Option<Vec<usize>>,
    #[serde(default)]
    train: Option<Vec<usize>>,
    #[serde(default)]
    test: Option<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleDoc {
    complex: usize,
    #[serde(default)]
    features: BTreeMap<usize, Vec<Vec<f64>>>,
    #[serde(default)]
    widths: Widths,
    label: usize,
    #[serde(default)]
    test: bool,
}

#[derive(Serialize)]
struct SampleOut {
    complex: usize,
    features: BTreeMap<usize, Vec<Vec<Box<RawValue>>>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    widths: Widths,
    label: usize,
    test: bool,
}

#[derive(Serialize)]
struct ComplexesOut {
    complexes: Vec<Box<RawValue>>,
    samples: Vec<SampleOut>,
}

#[derive(Serialize)]
struct NodesOut<'a> {
    complex: Box<RawValue>,
    labels: &'a [usize],
    train: &'a [usize],
    test: &'a [usize],
}

fn schema(location: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        location: location.into(),
        message: message.into(),
    }
}

fn embed(c: &Complex, h: &FeatureStore) -> Result<Box<RawValue>> {
    let text = complex_to_json(c, h)?;
    Ok(RawValue::from_string(text.trim_end().to_owned()).expect("complex JSON is valid"))
}

impl Dataset {
    /// Parses either `{"complexes", "samples"}` or
    /// `{"complex", "labels", "train", "test"}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetDoc = serde_json::from_str(text).map_err(|e| {
            schema(&format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        match doc {
            DatasetDoc {
                complexes: Some(raw),
                samples: Some(samples),
                complex: None,
                labels: None,
                train: None,
                test: None,
            } => {
                let complexes = raw
                    .iter()
                    .map(|r| complex_from_json(r.get()).map(|(c, _)| c))
                    .collect::<Result<Vec<_>>>()?;
                let samples = samples
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let c = complexes
                            .get(s.complex)
                            .ok_or_else(|| schema(&format!("samples[{i}]"), format!("no complex {}", s.complex)))?;
                        let features = features_from_rows(&s.features, &s.widths)?;
                        features.validate(c)?;
                        Ok(Sample {
                            complex: s.complex,
                            features,
                            label: s.label,
                            test: s.test,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Dataset::Complexes(ComplexDataset { complexes, samples }))
            }
            DatasetDoc {
                complexes: None,
                samples: None,
                complex: Some(raw),
                labels: Some(labels),
                train: Some(train),
                test: Some(test),
            } => {
                let (complex, features) = complex_from_json(raw.get())?;
                let n = complex.num_cells(0);
                if labels.len() != n {
                    return Err(schema("labels", format!("expected {n} labels, got {}", labels.len())));
                }
                if let Some(&bad) = train.iter().chain(&test).find(|&&i| i >= n) {
                    return Err(schema("train/test", format!("vertex index {bad} out of range")));
                }
                Ok(Dataset::Nodes(NodeDataset {
                    complex,
                    features,
                    labels,
                    train,
                    test,
                }))
            }
            _ => Err(schema(
                "top level",
                "expected either complexes+samples or complex+labels+train+test",
            )),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let text = match self {
            Dataset::Complexes(d) => {
                let complexes = d
                    .complexes
                    .iter()
                    .map(|c| embed(c, &FeatureStore::new()))
                    .collect::<Result<Vec<_>>>()?;
                let samples = d
                    .samples
                    .iter()
                    .map(|s| {
                        Ok(SampleOut {
                            complex: s.complex,
                            features: features_tokens(&s.features)?,
                            widths: feature_widths(&s.features),
                            label: s.label,
                            test: s.test,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                serde_json::to_string(&ComplexesOut { complexes, samples })
            }
            Dataset::Nodes(d) => serde_json::to_string(&NodesOut {
                complex: embed(&d.complex, &d.features)?,
                labels: &d.labels,
                train: &d.train,
                test: &d.test,
            }),
        };
        let mut text = text.expect("serializable");
        text.push('\n');
        Ok(text)
    }

    /// The complex used to size the model: the first one in the dataset.
    pub fn first_complex(&self) -> Option<&Complex> {
        match self {
            Dataset::Complexes(d) => d.complexes.first(),
            Dataset::Nodes(d) => Some(&d.complex),
        }
    }

    pub fn input_dims(&self) -> crate::engine::Dims {
        match self {
            Dataset::Complexes(d) => d.samples.first().map(|s| s.features.dims()).unwrap_or_default(),
            Dataset::Nodes(d) => d.features.dims(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Samples per optimizer step for complex-level tasks. Node tasks use
    /// the full training set every step.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            seed: 0,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub task: Task,
    pub epochs: Vec<EpochStats>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn accuracy(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn check_task(task: Task, model: &Model, data: &Dataset) -> Result<()> {
    let readout = model
        .config
        .readout
        .as_ref()
        .ok_or_else(|| Error::Config("training needs a readout".into()))?;
    match (task, data, readout.level) {
        (Task::NodeClass, Dataset::Nodes(_), Level::Node) => Ok(()),
        (Task::Trajectory | Task::ComplexClass, Dataset::Complexes(_), Level::Complex) => Ok(()),
        (Task::NodeClass, _, _) => Err(Error::Config(
            "node-class needs a node-level readout and a node dataset".into(),
        )),
        _ => Err(Error::Config(format!(
            "{task:?} needs a complex-level readout and a sample dataset"
        ))),
    }
}

/// Trains `model` in place with Adam. Zero epochs only evaluates.
pub fn train(model: &mut Model, task: Task, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    check_task(task, model, data)?;
    let epochs = match data {
        Dataset::Complexes(d) => train_complexes(model, d, cfg)?,
        Dataset::Nodes(d) => train_nodes(model, d, cfg)?,
    };
    let (train_accuracy, test_accuracy) = match data {
        Dataset::Complexes(d) => eval_complexes(model, d)?,
        Dataset::Nodes(d) => eval_nodes(model, d)?,
    };
    Ok(TrainReport {
        task,
        epochs,
        train_accuracy,
        test_accuracy,
    })
}

fn record_sample(model: &Model, engine: &Engine<'_>, tape: &mut Tape, s: &Sample) -> Result<Var> {
    let vars = constants(tape, &s.features);
    let (_, logits) = model.record(engine, tape, &vars)?;
    logits.ok_or_else(|| Error::Config("training needs a readout".into()))
}

fn train_complexes(model: &mut Model, data: &ComplexDataset, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
    let engines: Vec<Engine> = data.complexes.iter().map(Engine::new).collect();
    let mut train_idx: Vec<usize> = (0..data.samples.len()).filter(|&i| !data.samples[i].test).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let batch = cfg.batch_size.max(1);
    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0;
        for chunk in train_idx.chunks(batch) {
            let mut tape = Tape::new();
            let mut logits = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &data.samples[i];
                logits.push(record_sample(model, &engines[s.complex], &mut tape, s)?);
            }
            let all = tape.concat_rows(&logits)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.samples[i].label).collect();
            let values = tape.value(all);
            hits += labels.iter().enumerate().filter(|(r, &l)| argmax(values.row(*r)) == l).count();
            let loss = tape.cross_entropy(all, Arc::new(labels))?;
            loss_sum += tape.value(loss).get(0, 0) * chunk.len() as f64;
            model.params.zero_grad();
            tape.backward(loss, &mut model.params)?;
            adam.step(&mut model.params);
        }
        let (_, test_accuracy) = eval_complexes(model, data)?;
        let s = EpochStats {
            epoch,
            loss: loss_sum / train_idx.len().max(1) as f64,
            train_accuracy: accuracy(hits, train_idx.len()),
            test_accuracy,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train {:.3} test {:.3}",
            s.loss,
            s.train_accuracy,
            s.test_accuracy
        );
        stats.push(s);
    }
    Ok(stats)
}

/// Train and test accuracy over all samples.
pub fn eval_complexes(model: &Model, data: &ComplexDataset) -> Result<(f64, f64)> {
    let engines: Vec<Engine> = data.complexes.iter().map(Engine::new).collect();
    // samples are independent, so the pool size cannot change the result
    let outcomes = data
        .samples
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let out = record_sample(model, &engines[s.complex], &mut tape, s)?;
            Ok((usize::from(s.test), argmax(tape.value(out).row(0)) == s.label))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    for (split, hit) in outcomes {
        totals[split] += 1;
        hits[split] += usize::from(hit);
    }
    Ok((accuracy(hits[0], totals[0]), accuracy(hits[1], totals[1])))
}

fn node_logits(model: &Model, engine: &Engine<'_>, tape: &mut Tape, data: &NodeDataset) -> Result<Var> {
    let vars = constants(tape, &data.features);
    let (_, logits) = model.record(engine, tape, &vars)?;
    logits.ok_or_else(|| Error::Config("training needs a readout".into()))
}

fn node_hits(values: &crate::tensor::DenseMatrix, labels: &[usize], idx: &[usize]) -> usize {
    idx.iter().filter(|&&i| argmax(values.row(i)) == labels[i]).count()
}

fn train_nodes(model: &mut Model, data: &NodeDataset, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
    let engine = Engine::new(&data.complex);
    let mut adam = Adam::new(cfg.lr);
    let train_idx = Arc::new(data.train.clone());
    let train_labels = Arc::new(data.train.iter().map(|&i| data.labels[i]).collect::<Vec<_>>());
    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let logits = node_logits(model, &engine, &mut tape, data)?;
        let hits = node_hits(tape.value(logits), &data.labels, &data.train);
        let picked = tape.gather_rows(logits, train_idx.clone())?;
        let loss = tape.cross_entropy(picked, train_labels.clone())?;
        let loss_value = tape.value(loss).get(0, 0);
        model.params.zero_grad();
        tape.backward(loss, &mut model.params)?;
        adam.step(&mut model.params);
        let (_, test_accuracy) = eval_nodes(model, data)?;
        let s = EpochStats {
            epoch,
            loss: loss_value,
            train_accuracy: accuracy(hits, data.train.len()),
            test_accuracy,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train {:.3} test {:.3}",
            s.loss,
            s.train_accuracy,
            s.test_accuracy
        );
        stats.push(s);
    }
    Ok(stats)
}

pub fn eval_nodes(model: &Model, data: &NodeDataset) -> Result<(f64, f64)> {
    let engine = Engine::new(&data.complex);
    let mut tape = Tape::new();
    let logits = node_logits(model, &engine, &mut tape, data)?;
    let values = tape.value(logits);
    Ok((
        accuracy(node_hits(values, &data.labels, &data.train), data.train.len()),
        accuracy(node_hits(values, &data.labels, &data.test), data.test.len()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::synthetic::{block_hypergraph, trajectory_dataset, BlockParams};

    #[test]
    fn dataset_json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Dataset::Complexes(trajectory_dataset(6, 0.5, &mut rng).unwrap());
        let text = d.to_json().unwrap();
        let back = Dataset::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        let n = Dataset::Nodes(block_hypergraph(BlockParams::default(), &mut rng).unwrap());
        let text = n.to_json().unwrap();
        assert_eq!(Dataset::from_json(&text).unwrap().to_json().unwrap(), text);
        assert!(Dataset::from_json(r#"{"complex": {}, "samples": []}"#).is_err());
    }

    #[test]
    fn node_training_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = Dataset::Nodes(block_hypergraph(BlockParams::default(), &mut rng).unwrap());
        let cfg = ModelConfig::from_json(
            r#"{"layers": [{"type": "hg_two_phase", "node_in": 4, "edge_dim": 8, "node_out": 8, "agg": "mean", "recurrent": true}],
                "readout": {"level": "node", "in_dim": 8, "out_dim": 2}}"#,
        )
        .unwrap();
        let mut model = Model::init(cfg, data.first_complex().unwrap(), &data.input_dims(), 0).unwrap();
        let tc = TrainConfig {
            epochs: 30,
            lr: 1e-2,
            ..TrainConfig::default()
        };
        let report = train(&mut model, Task::NodeClass, &data, &tc).unwrap();
        assert!(report.epochs.last().unwrap().loss < report.epochs[0].loss);
        assert!(train(&mut model, Task::Trajectory, &data, &tc).is_err());
    }

    #[test]
    fn zero_epochs_only_evaluates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = Dataset::Complexes(trajectory_dataset(8, 0.25, &mut rng).unwrap());
        let c = data.first_complex().unwrap();
        let cfg = ModelConfig::from_json(
            r#"{"layers": [{"type": "scone", "in_dim": 1, "out_dim": 2}],
                "readout": {"level": "complex", "rank": 1, "agg": "flatten", "in_dim": 2, "out_dim": 2}}"#,
        )
        .unwrap();
        let mut model = Model::init(cfg, c, &data.input_dims(), 0).unwrap();
        let before = model.export_params();
        let report = train(&mut model, Task::Trajectory, &data, &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
        assert!(report.epochs.is_empty());
        assert_eq!(model.export_params(), before);
    }
}
