//! Benchmark datasets: MNIST digit pairs, the WDBC breast-cancer table, and
//! ground states of the periodic cluster-Ising chain.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label, one-hot `(1, 0)` or `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Class1,
    Class2,
}

impl Label {
    pub fn one_hot(self) -> (f64, f64) {
        match self {
            Label::Class1 => (1.0, 0.0),
            Label::Class2 => (0.0, 1.0),
        }
    }

    pub fn from_one_hot(a1: f64, a2: f64) -> Result<Self> {
        match (a1, a2) {
            (1.0, 0.0) => Ok(Label::Class1),
            (0.0, 1.0) => Ok(Label::Class2),
            _ => Err(Error::Config(format!("({a1}, {a2}) is not one-hot"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub lambda: Option<f64>,
    pub digit: Option<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Label,
    pub meta: SampleMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

/// Where a dataset came from and how it was prepared.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub task: String,
    pub sources: Vec<String>,
    /// Per-feature `(min, max)` used for min-max scaling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    pub notes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    partitions: Vec<Option<Partition>>,
    data_qubits: usize,
    pub provenance: Provenance,
}

/// Requested partition sizes for [`split`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, validation: usize, test: usize) -> Self {
        SplitCounts {
            train,
            validation,
            test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, data_qubits: usize, provenance: Provenance) -> Result<Self> {
        if let Some(first) = samples.first() {
            let len = first.features.len();
            if let Some(bad) = samples.iter().find(|s| s.features.len() != len) {
                return Err(Error::DimensionMismatch {
                    what: "feature length",
                    expected: len,
                    actual: bad.features.len(),
                });
            }
            if len > 1 << data_qubits {
                return Err(Error::Overflow {
                    len,
                    capacity: 1 << data_qubits,
                });
            }
        }
        let partitions = vec![None; samples.len()];
        Ok(Dataset {
            samples,
            partitions,
            data_qubits,
            provenance,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn data_qubits(&self) -> usize {
        self.data_qubits
    }

    pub fn feature_len(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn partition_of(&self, index: usize) -> Option<Partition> {
        self.partitions[index]
    }

    /// Sample indices tagged `partition`, ascending.
    pub fn indices(&self, partition: Partition) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.partitions[i] == Some(partition))
            .collect()
    }

    /// `(class 1, class 2)` counts over the whole dataset.
    pub fn class_counts(&self) -> (usize, usize) {
        let c1 = self.samples.iter().filter(|s| s.label == Label::Class1).count();
        (c1, self.samples.len() - c1)
    }

    /// Keeps the first `n` samples (with their partition tags).
    pub fn truncate(&mut self, n: usize) {
        self.samples.truncate(n);
        self.partitions.truncate(n);
    }
}

/// Seeded shuffle, then the first `counts.train` shuffled samples become the
/// training partition, the next `counts.validation` validation, then test.
pub fn split(dataset: &Dataset, counts: SplitCounts, seed: u64) -> Result<Dataset> {
    if counts.total() > dataset.len() {
        return Err(Error::InsufficientSamples {
            requested: counts.total(),
            available: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = dataset.clone();
    out.partitions = vec![None; dataset.len()];
    let tags = std::iter::repeat(Partition::Train)
        .take(counts.train)
        .chain(std::iter::repeat(Partition::Validation).take(counts.validation))
        .chain(std::iter::repeat(Partition::Test).take(counts.test));
    for (&i, tag) in order.iter().zip(tags) {
        out.partitions[i] = Some(tag);
    }
    Ok(out)
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let word = bytes.get(at..at + 4).ok_or(Error::Truncated {
        needed: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(word.try_into().unwrap()))
}

/// Raw IDX image tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let needed = 16 + count * rows * cols;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..needed].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

/// Bilinear resampling with pixel-centre alignment, edges clamped.
pub fn downscale_bilinear(src: &[f64], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let coord = |dst: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        let x = ((dst as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(inp - 1);
        (x0, x1, x - x0 as f64)
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for r in 0..out_h {
        let (r0, r1, fr) = coord(r, out_h, height);
        for c in 0..out_w {
            let (c0, c1, fc) = coord(c, out_w, width);
            let at = |rr: usize, cc: usize| src[rr * width + cc];
            let top = at(r0, c0) * (1.0 - fc) + at(r0, c1) * fc;
            let bottom = at(r1, c0) * (1.0 - fc) + at(r1, c1) * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Side length MNIST images are resampled to.
pub const MNIST_SIDE: usize = 16;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads the two `digits` from IDX files, resampled to 16×16 and scaled to `[0, 1]`.
/// The first digit maps to class 1.
pub fn load_mnist(images: &Path, labels: &Path, digits: (u8, u8)) -> Result<Dataset> {
    let imgs = parse_idx_images(&read_file(images)?)?;
    let labs = parse_idx_labels(&read_file(labels)?)?;
    let mut ds = mnist_from_idx(&imgs, &labs, digits)?;
    ds.provenance.sources = vec![images.display().to_string(), labels.display().to_string()];
    Ok(ds)
}

pub fn mnist_from_idx(imgs: &IdxImages, labels: &[u8], digits: (u8, u8)) -> Result<Dataset> {
    if labels.len() != imgs.count {
        return Err(Error::LabelMismatch {
            labels: labels.len(),
            images: imgs.count,
        });
    }
    let samples: Vec<Sample> = (0..imgs.count)
        .into_par_iter()
        .filter_map(|i| {
            let label = match labels[i] {
                d if d == digits.0 => Label::Class1,
                d if d == digits.1 => Label::Class2,
                _ => return None,
            };
            let pixels: Vec<f64> = imgs.image(i).iter().map(|&p| p as f64 / 255.0).collect();
            let features = downscale_bilinear(&pixels, imgs.cols, imgs.rows, MNIST_SIDE, MNIST_SIDE);
            Some(Sample {
                features,
                label,
                meta: SampleMeta {
                    digit: Some(labels[i]),
                    lambda: None,
                },
            })
        })
        .collect();
    let mut notes = BTreeMap::new();
    notes.insert("digits".into(), format!("{},{}", digits.0, digits.1));
    notes.insert("resize".into(), format!("bilinear {}x{} -> 16x16", imgs.rows, imgs.cols));
    Dataset::new(
        samples,
        8,
        Provenance {
            task: "mnist".into(),
            notes,
            ..Default::default()
        },
    )
}

/// Number of real-valued features per WDBC row.
pub const WDBC_FEATURES: usize = 30;

pub fn load_wdbc(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = parse_wdbc(file)?;
    ds.provenance.sources = vec![path.display().to_string()];
    Ok(ds)
}

/// Parses `id,diagnosis,f1..f30` rows; `M` is class 1, `B` class 2. Each feature is
/// min-max scaled over the whole file (constant columns become 0).
pub fn parse_wdbc<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != WDBC_FEATURES + 2 {
            return Err(Error::Parse {
                row,
                message: format!("expected {} columns, found {}", WDBC_FEATURES + 2, record.len()),
            });
        }
        let label = match record[1].trim() {
            "M" => Label::Class1,
            "B" => Label::Class2,
            other => {
                return Err(Error::UnknownDiagnosis {
                    row,
                    value: other.to_string(),
                })
            }
        };
        let features = (2..record.len())
            .map(|c| {
                record[c].trim().parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    message: format!("column {}: `{}`: {e}", c + 1, &record[c]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((features, label));
    }
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); WDBC_FEATURES];
    for (f, _) in &rows {
        for (r, &x) in ranges.iter_mut().zip(f) {
            r.0 = r.0.min(x);
            r.1 = r.1.max(x);
        }
    }
    let samples = rows
        .into_iter()
        .map(|(f, label)| Sample {
            features: f
                .iter()
                .zip(&ranges)
                .map(|(&x, &(lo, hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
                .collect(),
            label,
            meta: SampleMeta::default(),
        })
        .collect();
    Dataset::new(
        samples,
        6,
        Provenance {
            task: "cancer".into(),
            normalization: Some(ranges),
            ..Default::default()
        },
    )
}

/// Largest chain [`gen_cluster_ising`] diagonalizes densely.
pub const MAX_SPINS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterIsingSpec {
    pub spins: usize,
    pub lambdas: Vec<f64>,
}

impl ClusterIsingSpec {
    /// `count` midpoints of an even grid over `(0, 2)`; `λ = 1` is never produced.
    pub fn even_grid(spins: usize, count: usize) -> Self {
        let mut n = count;
        let lambdas = loop {
            let grid: Vec<f64> = (0..n).map(|i| 2.0 * (i as f64 + 0.5) / n as f64).collect();
            if grid.contains(&1.0) {
                n += 1;
                continue;
            }
            break grid;
        };
        ClusterIsingSpec { spins, lambdas }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spins < 3 || self.spins > MAX_SPINS {
            return Err(Error::Config(format!(
                "cluster-Ising chain needs 3..={MAX_SPINS} spins, got {}",
                self.spins
            )));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("λ = {l} must be finite and non-negative")));
        }
        Ok(())
    }
}

/// `H(λ) = -Σ X_{j-1} Z_j X_{j+1} + λ Σ Y_j Y_{j+1}` on a ring; spin 1 is the most
/// significant bit. All entries are real.
pub fn cluster_ising_hamiltonian(spins: usize, lambda: f64) -> DMatrix<f64> {
    let dim = 1usize << spins;
    let mask = |j: usize| 1usize << (spins - 1 - (j % spins));
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for b in 0..dim {
        let sign = |j: usize| if b & mask(j) == 0 { 1.0 } else { -1.0 };
        for j in 0..spins {
            let left = (j + spins - 1) % spins;
            let right = (j + 1) % spins;
            // X_{j-1} Z_j X_{j+1}
            let flipped = b ^ mask(left) ^ mask(right);
            h[(flipped, b)] -= sign(j);
            // Y_j Y_{j+1}: Y|s⟩ = i·(±1)|s̄⟩, so Y⊗Y picks up -s_j·s_{j+1}
            let flipped = b ^ mask(j) ^ mask(right);
            h[(flipped, b)] += -lambda * sign(j) * sign(right);
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    /// Distance to the next eigenvalue.
    pub gap: f64,
    /// Real amplitudes with the largest-magnitude entry positive.
    pub amplitudes: Vec<f64>,
}

/// Ground-state splittings below this are reported as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;

/// Both terms flip spins in pairs, so `H` conserves `∏ Z_j`; each parity sector
/// is diagonalized on its own.
pub fn ground_state(spins: usize, lambda: f64) -> GroundState {
    let h = cluster_ising_hamiltonian(spins, lambda);
    let dim = 1usize << spins;
    let mut levels: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    for parity in 0..2 {
        let basis: Vec<usize> = (0..dim).filter(|b| b.count_ones() as usize % 2 == parity).collect();
        let block = DMatrix::from_fn(basis.len(), basis.len(), |r, c| h[(basis[r], basis[c])]);
        let eig = SymmetricEigen::new(block);
        let mut order: Vec<usize> = (0..basis.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for &i in order.iter().take(2) {
            let mut full = vec![0.0; dim];
            for (r, &b) in basis.iter().enumerate() {
                full[b] = eig.eigenvectors[(r, i)];
            }
            levels.push((eig.eigenvalues[i], parity, full));
        }
    }
    // stable: on an exact tie the even sector wins
    levels.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let energy = levels[0].0;
    let gap = levels[1].0 - energy;
    if gap < DEGENERACY_TOLERANCE {
        log::warn!("cluster-Ising ground state at λ = {lambda} is degenerate (gap {gap:e})");
    }
    let mut amplitudes = levels.swap_remove(0).2;
    let pivot = amplitudes
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, a)| if a.abs() > best.1 { (i, a.abs()) } else { best })
        .0;
    if amplitudes[pivot] < 0.0 {
        amplitudes.iter_mut().for_each(|a| *a = -*a);
    }
    GroundState {
        energy,
        gap,
        amplitudes,
    }
}

/// Ground states for every `λ` of `spec`, labelled class 1 (SPT, `λ < 1`) or
/// class 2 (antiferromagnet).
pub fn gen_cluster_ising(spec: &ClusterIsingSpec) -> Result<Dataset> {
    spec.validate()?;
    let samples: Vec<Sample> = spec
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let gs = ground_state(spec.spins, lambda);
            Sample {
                features: gs.amplitudes,
                label: if lambda < 1.0 { Label::Class1 } else { Label::Class2 },
                meta: SampleMeta {
                    lambda: Some(lambda),
                    digit: None,
                },
            }
        })
        .collect();
    let mut notes = BTreeMap::new();
    notes.insert("spins".into(), spec.spins.to_string());
    notes.insert("boundary".into(), "periodic".into());
    Dataset::new(
        samples,
        spec.spins,
        Provenance {
            task: "spt".into(),
            lambdas: Some(spec.lambdas.clone()),
            notes,
            ..Default::default()
        },
    )
}

const CACHE_MAGIC: &[u8; 8] = b"MQNEDSET";
pub const CACHE_VERSION: u32 = 1;

impl Dataset {
    /// Binary cache: magic, version, shape, then per sample the label, partition,
    /// metadata and little-endian `f64` features. Provenance lives in a JSON sidecar.
    pub fn to_cache_bytes(&self) -> Vec<u8> {
        let nf = self.feature_len();
        let mut out = Vec::with_capacity(32 + self.len() * (11 + 8 * nf));
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.data_qubits as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(nf as u64).to_le_bytes());
        for (s, p) in self.samples.iter().zip(&self.partitions) {
            out.push(match s.label {
                Label::Class1 => 1,
                Label::Class2 => 2,
            });
            out.push(match p {
                None => 0,
                Some(Partition::Train) => 1,
                Some(Partition::Validation) => 2,
                Some(Partition::Test) => 3,
            });
            out.push(s.meta.digit.unwrap_or(u8::MAX));
            out.extend_from_slice(&s.meta.lambda.unwrap_or(f64::NAN).to_le_bytes());
            for x in &s.features {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_cache_bytes(bytes: &[u8], provenance: Provenance) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: "dataset cache".into(),
            message,
        };
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Truncated {
                    needed: n,
                    found: cur.len(),
                });
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(8)? != CACHE_MAGIC {
            return Err(bad("not a dataset cache".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != CACHE_VERSION {
            return Err(bad(format!("unsupported cache version {version}")));
        }
        let data_qubits = u32_at(take(4)?) as usize;
        let n = u64_at(take(8)?) as usize;
        let nf = u64_at(take(8)?) as usize;
        let mut samples = Vec::with_capacity(n);
        let mut partitions = Vec::with_capacity(n);
        for _ in 0..n {
            let head = take(3)?;
            let label = match head[0] {
                1 => Label::Class1,
                2 => Label::Class2,
                x => return Err(bad(format!("bad label byte {x}"))),
            };
            let partition = match head[1] {
                0 => None,
                1 => Some(Partition::Train),
                2 => Some(Partition::Validation),
                3 => Some(Partition::Test),
                x => return Err(bad(format!("bad partition byte {x}"))),
            };
            let digit = (head[2] != u8::MAX).then_some(head[2]);
            let lambda = f64::from_le_bytes(take(8)?.try_into().unwrap());
            let raw = take(8 * nf)?;
            let features = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            samples.push(Sample {
                features,
                label,
                meta: SampleMeta {
                    lambda: (!lambda.is_nan()).then_some(lambda),
                    digit,
                },
            });
            partitions.push(partition);
        }
        let mut ds = Dataset::new(samples, data_qubits, provenance)?;
        ds.partitions = partitions;
        Ok(ds)
    }
}
