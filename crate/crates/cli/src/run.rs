use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use mqne_core::blockgraph::{build_graph_with_limit, StartPolicy, DEFAULT_MAX_NODES};
use mqne_core::datasets::{
    gen_cluster_ising, load_mnist, load_wdbc, split, ClusterIsingSpec, Dataset, Label, Partition, Provenance,
    SplitCounts,
};
use mqne_core::evolution::{
    derive_seed, generations_csv, individuals_csv, run_genetic, run_mqne, streams, GeneticConfig, MqneConfig,
    RunOutcome,
};
use mqne_core::gateblock::{enumerate_library, LibrarySpec};
use mqne_core::trainer::{history_csv, theta_to_text, EncodedDataset, InitPolicy, TrainConfig};

use crate::config::{DataSection, InitKind, RunConfig, Task, TrainSection};

pub const MANIFEST_SCHEMA: &str = "mqne-manifest/1";
pub const DATASET_SCHEMA: &str = "mqne-dataset/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).with_context(|| format!("reading {}", path.display()))?))
}

fn default_split(task: Task, total: usize) -> Result<SplitCounts> {
    Ok(match task {
        Task::Spt => {
            let train = total * 4 / 5;
            SplitCounts::new(train, total - train, 0)
        }
        Task::Cancer => SplitCounts::new(400, 169, 0),
        Task::Mnist => bail!("data.split is required for the mnist task"),
    })
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str, task: Task) -> Result<&'a PathBuf> {
    p.as_ref().with_context(|| format!("data.{key} is required for the {} task", task.name()))
}

/// Input files a dataset was built from, with their hashes.
pub type InputHashes = BTreeMap<String, String>;

/// Loads or generates the dataset for `task` and applies the seeded split.
pub fn build_dataset(task: Task, data: &DataSection, master_seed: u64) -> Result<(Dataset, InputHashes)> {
    let mut inputs = InputHashes::new();
    if let Some(cache) = &data.cache {
        let ds = read_cache(cache)?;
        inputs.insert(cache.display().to_string(), file_sha256(cache)?);
        return Ok((ds, inputs));
    }
    let raw = match task {
        Task::Spt => {
            let spins = data.spins.unwrap_or(8);
            let samples = data.samples.unwrap_or(2000);
            gen_cluster_ising(&ClusterIsingSpec::even_grid(spins, samples))?
        }
        Task::Mnist => {
            let images = require(&data.images, "images", task)?;
            let labels = require(&data.labels, "labels", task)?;
            let [a, b] = data.digits.unwrap_or([1, 9]);
            for p in [images, labels] {
                inputs.insert(p.display().to_string(), file_sha256(p)?);
            }
            load_mnist(images, labels, (a, b)).with_context(|| format!("loading MNIST from {}", images.display()))?
        }
        Task::Cancer => {
            let csv = require(&data.csv, "csv", task)?;
            inputs.insert(csv.display().to_string(), file_sha256(csv)?);
            load_wdbc(csv).with_context(|| format!("loading {}", csv.display()))?
        }
    };
    let counts = match data.split {
        Some([a, b, c]) => SplitCounts::new(a, b, c),
        None => default_split(task, raw.len())?,
    };
    let ds = split(&raw, counts, derive_seed(master_seed, streams::DATA_SPLIT, &[]))?;
    Ok((ds, inputs))
}

fn sidecar_path(cache: &Path) -> PathBuf {
    cache.with_extension("json")
}

/// Writes the binary cache and its JSON sidecar; returns the cache hash.
pub fn write_cache(ds: &Dataset, cache: &Path, split_seed: u64) -> Result<String> {
    let bytes = ds.to_cache_bytes();
    let hash = sha256_hex(&bytes);
    fs::write(cache, &bytes).with_context(|| format!("writing {}", cache.display()))?;
    let (c1, c2) = ds.class_counts();
    let side = json!({
        "schema": DATASET_SCHEMA,
        "task": ds.provenance.task,
        "provenance": ds.provenance,
        "samples": ds.len(),
        "feature_len": ds.feature_len(),
        "data_qubits": ds.data_qubits(),
        "class_counts": { "class1": c1, "class2": c2 },
        "partitions": {
            "train": ds.indices(Partition::Train).len(),
            "validation": ds.indices(Partition::Validation).len(),
            "test": ds.indices(Partition::Test).len(),
        },
        "split_seed": split_seed,
        "cache_sha256": hash,
    });
    fs::write(sidecar_path(cache), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(hash)
}

pub fn read_cache(cache: &Path) -> Result<Dataset> {
    let side_path = sidecar_path(cache);
    let side: Value = serde_json::from_str(
        &fs::read_to_string(&side_path).with_context(|| format!("reading sidecar {}", side_path.display()))?,
    )
    .with_context(|| format!("parsing {}", side_path.display()))?;
    if side["schema"] != DATASET_SCHEMA {
        bail!("{}: not a {DATASET_SCHEMA} sidecar", side_path.display());
    }
    let provenance: Provenance = serde_json::from_value(side["provenance"].clone())?;
    let bytes = fs::read(cache).with_context(|| format!("reading {}", cache.display()))?;
    Ok(Dataset::from_cache_bytes(&bytes, provenance).with_context(|| format!("decoding {}", cache.display()))?)
}

pub fn train_config(section: &TrainSection, master_seed: u64) -> TrainConfig {
    let init_seed = derive_seed(master_seed, streams::THETA_INIT, &[]);
    let defaults = TrainConfig::default();
    TrainConfig {
        learning_rate: section.learning_rate,
        batch_size: section.batch_size,
        epochs: section.epochs,
        max_updates: section.max_updates,
        beta1: section.beta1.unwrap_or(defaults.beta1),
        beta2: section.beta2.unwrap_or(defaults.beta2),
        eps: section.eps.unwrap_or(defaults.eps),
        init: match section.init {
            InitKind::Random => InitPolicy::RandomPerRun(init_seed),
            InitKind::Fixed => InitPolicy::FixedSeed(init_seed),
            InitKind::Inherit => InitPolicy::Inherit(init_seed),
        },
        seed: derive_seed(master_seed, streams::BATCH_SHUFFLE, &[]),
    }
}

fn start_policy(s: &str, lib: &mqne_core::gateblock::BlockLibrary) -> Result<StartPolicy> {
    Ok(match s {
        "all_rotations" => StartPolicy::all_rotations(lib)?,
        "uniform" => StartPolicy::UniformRandom,
        other => StartPolicy::FixedBlock(
            other
                .parse()
                .with_context(|| format!("mqne.start = `{other}`: expected all_rotations, uniform or a block index"))?,
        ),
    })
}

/// How an evolve run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finish {
    Threshold,
    Exhausted,
}

pub fn evolve(cfg: &RunConfig, genetic: bool) -> Result<Finish> {
    let (ds, inputs) = build_dataset(cfg.task, &cfg.data, cfg.master_seed)?;
    let (c1, c2) = ds.class_counts();
    log::info!(
        "{}: {} samples ({c1} class 1, {c2} class 2), {} train / {} validation",
        cfg.task.name(),
        ds.len(),
        ds.indices(Partition::Train).len(),
        ds.indices(Partition::Validation).len()
    );
    let qubits = ds.data_qubits() + 1;
    if let Some(q) = cfg.library.qubits {
        if q != qubits {
            bail!("library.qubits = {q}, but the {} data needs {qubits} (data + readout)", cfg.task.name());
        }
    }
    let spec = LibrarySpec {
        k: qubits,
        mode: cfg.library.mode()?,
        include_empty_block: cfg.library.include_empty,
    };
    let lib = enumerate_library(&spec)?;
    let enc = EncodedDataset::new(&ds)?;
    let train = train_config(&cfg.train, cfg.master_seed);
    let out_dir = &cfg.output;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let library_text = lib.to_text();
    let mut hashes = json!({ "library_sha256": sha256_hex(library_text.as_bytes()) });
    let (outcome, f_c): (RunOutcome, f64) = if genetic {
        let g = cfg.genetic.as_ref().context("`--baseline genetic` needs a [genetic] section")?;
        let gc = GeneticConfig {
            n: g.n.clone(),
            t: g.t.clone(),
            mutation_p: g.mutation_p,
            length: g.length,
            f_c: g.f_c,
            g_c: g.g_c,
            train,
            master_seed: cfg.master_seed,
            evaluate_on: Partition::Validation,
            exclude_empty: g.exclude_empty,
        };
        (run_genetic(&lib, &enc, &gc)?, g.f_c)
    } else {
        let m = cfg.mqne.as_ref().context("config has no [mqne] section")?;
        let graph = build_graph_with_limit(
            &lib,
            cfg.graph.exclude_empty,
            cfg.graph.max_nodes.unwrap_or(DEFAULT_MAX_NODES),
        )?;
        log::info!("graph: {} nodes, {} edges", graph.node_count(), graph.edge_count());
        hashes["graph_sha256"] = json!(sha256_hex(graph.to_adjacency_text().as_bytes()));
        let mc = MqneConfig {
            n: m.n.clone(),
            t: m.t.clone(),
            l: m.l,
            l_prime: m.l_prime,
            f_c: m.f_c,
            g_c: m.g_c,
            start: start_policy(&m.start, &lib)?,
            train,
            master_seed: cfg.master_seed,
            evaluate_on: Partition::Validation,
        };
        (run_mqne(&graph, &lib, &enc, &mc)?, m.f_c)
    };

    let mut files: Vec<(&str, String)> = vec![
        ("config.toml", cfg.to_toml()),
        ("library.txt", library_text),
        ("generations.csv", generations_csv(&outcome.logs)),
        ("individuals.csv", individuals_csv(&outcome.logs)),
    ];
    if let Some(best) = &outcome.best {
        let path = outcome.best_path();
        files.push(("best_history.csv", history_csv(&best.model.history)));
        if let Some(p) = path {
            files.push(("best_path.txt", format!("{p}\n")));
            files.push(("best_theta.txt", theta_to_text(&p, &best.model.theta)));
        }
    }
    let mut outputs = BTreeMap::new();
    for (name, text) in &files {
        fs::write(out_dir.join(name), text).with_context(|| format!("writing {name}"))?;
        outputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
    }
    let manifest = json!({
        "schema": MANIFEST_SCHEMA,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "algorithm": if genetic { "genetic" } else { "mqne" },
        "task": cfg.task.name(),
        "config": serde_json::to_value(cfg)?,
        "seeds": {
            "master": cfg.master_seed,
            "streams": streams::ALL,
        },
        "inputs": inputs,
        "derived": hashes,
        "outputs": outputs,
        "outcome": {
            "best_fitness": outcome.best_fitness(),
            "generations": outcome.logs.len(),
            "evaluations": outcome.evaluations(),
            "reached_threshold": outcome.reached_threshold,
            "f_c": f_c,
            "best_generation": outcome.best.as_ref().map(|b| b.generation),
            "best_blocks": outcome.best.as_ref().map(|b| b.blocks.clone()),
            "labels": { "class1": format!("{:?}", Label::Class1), "class2": format!("{:?}", Label::Class2) },
        },
    });
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!(
        "best fitness {:.4} after {} generations ({} circuits); bundle in {}",
        outcome.best_fitness(),
        outcome.logs.len(),
        outcome.evaluations(),
        out_dir.display()
    );
    Ok(if outcome.reached_threshold {
        Finish::Threshold
    } else {
        Finish::Exhausted
    })
}

/// Verifies the hashes of a bundle and prints its per-generation table.
pub fn report(dir: &Path) -> Result<()> {
    let mpath = dir.join("manifest.json");
    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(&mpath).with_context(|| format!("reading {}", mpath.display()))?,
    )?;
    if manifest["schema"] != MANIFEST_SCHEMA {
        bail!("{}: not a {MANIFEST_SCHEMA} manifest", mpath.display());
    }
    let outputs = manifest["outputs"].as_object().context("manifest has no outputs")?;
    let mut bad = Vec::new();
    for (name, hash) in outputs {
        let actual = file_sha256(&dir.join(name))?;
        if Some(actual.as_str()) != hash.as_str() {
            bad.push(name.clone());
        }
    }
    print!("{}", fs::read_to_string(dir.join("generations.csv"))?);
    let o = &manifest["outcome"];
    println!(
        "algorithm {}, best fitness {}, reached threshold {}",
        manifest["algorithm"], o["best_fitness"], o["reached_threshold"]
    );
    if !bad.is_empty() {
        bail!("hash mismatch for {}", bad.join(", "));
    }
    println!("all {} output hashes verified", outputs.len());
    Ok(())
}
