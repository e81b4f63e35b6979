//! Cross-entropy training of compiled circuits with mini-batch Adam.

use std::fmt::Write as _;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockgraph::Path;
use crate::datasets::{Dataset, Label, Partition};
use crate::error::{Error, Result};
use crate::simulator::{amplitude_encode, forward_probs, ParamCircuit, StateVector, Workspace};

/// Added to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// `-a1·log(g1 + ε) - a2·log(g2 + ε)`.
pub fn loss(g1: f64, g2: f64, label: Label) -> f64 {
    match label {
        Label::Class1 => -(g1 + LOG_CLAMP).ln(),
        Label::Class2 => -(g2 + LOG_CLAMP).ln(),
    }
}

/// `(∂L/∂g1, ∂L/∂g2)`.
pub fn loss_weights(g1: f64, g2: f64, label: Label) -> (f64, f64) {
    match label {
        Label::Class1 => (-1.0 / (g1 + LOG_CLAMP), 0.0),
        Label::Class2 => (0.0, -1.0 / (g2 + LOG_CLAMP)),
    }
}

/// Class 1 when `g1 >= g2`.
pub fn predict(g1: f64, g2: f64) -> Label {
    if g1 >= g2 {
        Label::Class1
    } else {
        Label::Class2
    }
}

/// How the initial angles of a circuit are chosen. Angles are uniform in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "seed")]
pub enum InitPolicy {
    /// Fresh angles from this seed. The evolution loop mixes in the individual's
    /// identity, so every circuit gets its own stream.
    RandomPerRun(u64),
    /// Every circuit takes the prefix of one global stream of this length, so a
    /// parent's angles reappear at the start of its offspring.
    FixedSeed(u64),
    /// Parent's trained angles for the inherited gates, zero for the new ones.
    /// Circuits without a parent fall back to `FixedSeed`.
    Inherit(u64),
}

impl InitPolicy {
    pub fn seed(&self) -> u64 {
        match *self {
            InitPolicy::RandomPerRun(s) | InitPolicy::FixedSeed(s) | InitPolicy::Inherit(s) => s,
        }
    }
}

/// The first `count` angles of the stream seeded by `seed`.
pub fn seeded_angles(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen_range(0.0..TAU)).collect()
}

/// Parent angles followed by zeros up to `count`.
pub fn inherited_angles(parent: &[f64], count: usize) -> Vec<f64> {
    let mut theta = parent[..parent.len().min(count)].to_vec();
    theta.resize(count, 0.0);
    theta
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Passes over the training partition.
    pub epochs: usize,
    /// Optional cap on the total number of Adam updates.
    #[serde(default)]
    pub max_updates: Option<usize>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub init: InitPolicy,
    /// Seeds the per-epoch batch shuffle.
    pub seed: u64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0015,
            batch_size: 30,
            epochs: 200,
            max_updates: None,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            init: InitPolicy::RandomPerRun(0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("Adam eps must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moments for one parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            theta[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Dataset with every sample amplitude-encoded on `data_qubits + 1` qubits.
#[derive(Clone, Debug)]
pub struct EncodedDataset {
    qubits: usize,
    inputs: Vec<StateVector>,
    labels: Vec<Label>,
    train: Vec<usize>,
    validation: Vec<usize>,
    test: Vec<usize>,
}

impl EncodedDataset {
    pub fn new(data: &Dataset) -> Result<Self> {
        let qubits = data.data_qubits() + 1;
        let inputs = data
            .samples()
            .par_iter()
            .map(|s| amplitude_encode(&s.features, data.data_qubits(), qubits))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedDataset {
            qubits,
            inputs,
            labels: data.samples().iter().map(|s| s.label).collect(),
            train: data.indices(Partition::Train),
            validation: data.indices(Partition::Validation),
            test: data.indices(Partition::Test),
        })
    }

    /// Circuit width: data qubits plus the readout.
    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &StateVector {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn partition(&self, p: Partition) -> &[usize] {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's mini-batches, before each update.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub circuit: ParamCircuit,
    pub theta: Vec<f64>,
    pub initial_theta: Vec<f64>,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

fn check_width(circuit: &ParamCircuit, data: &EncodedDataset) -> Result<()> {
    if circuit.qubits() != data.qubits {
        return Err(Error::DimensionMismatch {
            what: "circuit width vs data qubits + readout",
            expected: data.qubits,
            actual: circuit.qubits(),
        });
    }
    Ok(())
}

/// Mean loss and accuracy of `theta` on `indices`. NaN for an empty index list.
pub fn evaluate(circuit: &ParamCircuit, theta: &[f64], data: &EncodedDataset, indices: &[usize]) -> Result<Evaluation> {
    check_width(circuit, data)?;
    let per_sample = indices
        .par_iter()
        .map(|&i| {
            let (g1, g2) = forward_probs(circuit, theta, &data.inputs[i])?;
            let label = data.labels[i];
            Ok((loss(g1, g2, label), predict(g1, g2) == label))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = indices.len() as f64;
    let total: f64 = per_sample.iter().map(|r| r.0).sum();
    let correct = per_sample.iter().filter(|r| r.1).count();
    Ok(Evaluation {
        loss: total / n,
        accuracy: correct as f64 / n,
    })
}

/// Initial angles for a circuit with no parent.
pub fn initial_angles(circuit: &ParamCircuit, policy: InitPolicy) -> Vec<f64> {
    seeded_angles(policy.seed(), circuit.param_count())
}

pub fn train(circuit: &ParamCircuit, data: &EncodedDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_from(circuit, data, cfg, initial_angles(circuit, cfg.init))
}

/// Trains starting from `theta0`.
pub fn train_from(
    circuit: &ParamCircuit,
    data: &EncodedDataset,
    cfg: &TrainConfig,
    theta0: Vec<f64>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    check_width(circuit, data)?;
    if theta0.len() != circuit.param_count() {
        return Err(Error::DimensionMismatch {
            what: "initial angle count",
            expected: circuit.param_count(),
            actual: theta0.len(),
        });
    }
    if data.train.is_empty() && cfg.epochs > 0 {
        return Err(Error::EmptyPartition(Partition::Train.name()));
    }
    let mut theta = theta0.clone();
    let mut adam = Adam::new(theta.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = data.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut updates = 0usize;
    let mut grad = vec![0.0; theta.len()];

    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.max_updates.is_some_and(|m| updates >= m) {
                break 'epochs;
            }
            let results = batch
                .par_iter()
                .map_init(Workspace::new, |ws, &i| {
                    ws.loss_and_gradient(circuit, &theta, &data.inputs[i], data.labels[i])
                })
                .collect::<Result<Vec<_>>>()?;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for (r, &i) in results.iter().zip(batch) {
                batch_loss += r.loss;
                correct += (predict(r.g1, r.g2) == data.labels[i]) as usize;
                for (g, d) in grad.iter_mut().zip(&r.grad) {
                    *g += d;
                }
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut theta, &grad, cfg);
            updates += 1;
            loss_sum += batch_loss;
            seen += batch.len();
        }
        let val = if data.validation.is_empty() {
            Evaluation {
                loss: f64::NAN,
                accuracy: f64::NAN,
            }
        } else {
            evaluate(circuit, &theta, data, &data.validation)?
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
        });
    }
    Ok(TrainedModel {
        circuit: circuit.clone(),
        theta,
        initial_theta: theta0,
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub fitness: f64,
    pub partition: Partition,
    pub correct: usize,
    pub total: usize,
}

/// Accuracy of `model` on `partition`.
pub fn fitness(model: &TrainedModel, data: &EncodedDataset, partition: Partition) -> Result<FitnessReport> {
    let indices = data.partition(partition);
    if indices.is_empty() {
        return Err(Error::EmptyPartition(partition.name()));
    }
    let eval = evaluate(&model.circuit, &model.theta, data, indices)?;
    let total = indices.len();
    let correct = (eval.accuracy * total as f64).round() as usize;
    Ok(FitnessReport {
        fitness: correct as f64 / total as f64,
        partition,
        correct,
        total,
    })
}

/// `epoch,train_loss,train_acc,val_loss,val_acc` rows.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for r in history {
        writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc).unwrap();
    }
    out
}

const THETA_HEADER: &str = "# mqne-theta v1";

/// Versioned text form of trained angles: header, the block path, then one angle
/// per line in shortest round-trip notation.
pub fn theta_to_text(path: &Path, theta: &[f64]) -> String {
    let mut out = format!("{THETA_HEADER}\npath: {path}\nparams: {}\n", theta.len());
    for t in theta {
        writeln!(out, "{t:?}").unwrap();
    }
    out
}

pub fn theta_from_text(text: &str) -> Result<(Path, Vec<f64>)> {
    let bad = |message: String| Error::Format {
        path: "theta file".into(),
        message,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(THETA_HEADER) {
        return Err(bad(format!("missing `{THETA_HEADER}` header")));
    }
    let path = lines
        .next()
        .and_then(|l| l.strip_prefix("path:"))
        .ok_or_else(|| bad("missing `path:` line".into()))?
        .trim()
        .parse::<Path>()?;
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("params:"))
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| bad("missing `params:` line".into()))?;
    let theta = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|e| bad(format!("`{l}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if theta.len() != count {
        return Err(bad(format!("declared {count} angles, found {}", theta.len())));
    }
    Ok((path, theta))
}
