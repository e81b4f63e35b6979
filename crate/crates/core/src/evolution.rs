//! The Markovian evolution loop and a genetic-algorithm baseline.
//!
//! Generations are numbered from 1; generation 1 is the random initial
//! population. All randomness is drawn from named sub-streams of one master
//! seed (see [`derive_seed`]), so results do not depend on the thread count.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockgraph::{random_path, walk_from, BlockGraph, Path, StartPolicy};
use crate::datasets::Partition;
use crate::error::{Error, Result};
use crate::gateblock::BlockLibrary;
use crate::simulator::compile_blocks;
use crate::trainer::{fitness, inherited_angles, seeded_angles, train_from, EncodedDataset, InitPolicy, TrainConfig, TrainedModel};

/// Names of the random sub-streams.
pub mod streams {
    pub const PATH_INIT: &str = "path-init";
    pub const EXTEND: &str = "extend";
    pub const THETA_INIT: &str = "theta-init";
    pub const BATCH_SHUFFLE: &str = "batch-shuffle";
    pub const GA_INIT: &str = "ga-init";
    pub const GA_CROSSOVER: &str = "ga-crossover";
    pub const GA_MUTATION: &str = "ga-mutation";
    pub const DATA_SPLIT: &str = "data-split";

    pub const ALL: [&str; 8] = [
        PATH_INIT,
        EXTEND,
        THETA_INIT,
        BATCH_SHUFFLE,
        GA_INIT,
        GA_CROSSOVER,
        GA_MUTATION,
        DATA_SPLIT,
    ];
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` at position `indices`.
pub fn derive_seed(master: u64, stream: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for b in stream.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i));
    }
    h
}

fn stream_rng(master: u64, stream: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, indices))
}

/// A per-generation count: one value for every generation, or a list whose last
/// entry repeats.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(usize),
    PerGeneration(Vec<usize>),
}

impl Schedule {
    /// Value at 1-based `generation`.
    pub fn at(&self, generation: usize) -> usize {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::PerGeneration(v) => v[(generation.max(1) - 1).min(v.len() - 1)],
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        if let Schedule::PerGeneration(v) = self {
            if v.is_empty() {
                return Err(Error::Config(format!("`{name}` schedule is empty")));
            }
        }
        Ok(())
    }
}

fn default_partition() -> Partition {
    Partition::Validation
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MqneConfig {
    /// Offspring per survivor (population size in generation 1).
    pub n: Schedule,
    /// Survivors kept after each generation.
    pub t: Schedule,
    /// Initial path length.
    pub l: usize,
    /// Segment length appended per generation.
    pub l_prime: usize,
    /// Stop once the best fitness of a generation reaches this value.
    pub f_c: f64,
    /// Maximum number of generations, including the initial one.
    pub g_c: usize,
    pub start: StartPolicy,
    pub train: TrainConfig,
    pub master_seed: u64,
    #[serde(default = "default_partition")]
    pub evaluate_on: Partition,
}

fn check_common(n: &Schedule, t: &Schedule, f_c: f64, g_c: usize, train: &TrainConfig) -> Result<()> {
    n.check("n")?;
    t.check("t")?;
    if g_c == 0 {
        return Err(Error::Config("g_c must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&f_c) {
        return Err(Error::Config(format!("f_c = {f_c} must lie in [0, 1]")));
    }
    for g in 1..=g_c {
        let (n, t) = (n.at(g), t.at(g));
        if n == 0 {
            return Err(Error::Config(format!("n at generation {g} must be positive")));
        }
        if g < g_c && (t == 0 || t >= n) {
            return Err(Error::Config(format!("generation {g}: need 0 < t ({t}) < n ({n})")));
        }
    }
    train.validate()
}

impl MqneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.l_prime == 0 {
            return Err(Error::Config("l and l' must be at least 1".into()));
        }
        check_common(&self.n, &self.t, self.f_c, self.g_c, &self.train)
    }

    /// Blocks in every path of `generation`.
    pub fn path_len(&self, generation: usize) -> usize {
        self.l + (generation - 1) * self.l_prime
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneticConfig {
    /// Population size per generation.
    pub n: Schedule,
    /// Survivors used as parents for the next generation.
    pub t: Schedule,
    /// Per-position replacement probability.
    pub mutation_p: f64,
    /// Length of the initial random sequences.
    pub length: usize,
    pub f_c: f64,
    pub g_c: usize,
    pub train: TrainConfig,
    pub master_seed: u64,
    #[serde(default = "default_partition")]
    pub evaluate_on: Partition,
    /// Leave the identity block out of random sampling and mutation.
    #[serde(default = "default_true")]
    pub exclude_empty: bool,
}

fn default_true() -> bool {
    true
}

impl GeneticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_p) {
            return Err(Error::Config(format!("mutation probability {} outside [0, 1]", self.mutation_p)));
        }
        check_common(&self.n, &self.t, self.f_c, self.g_c, &self.train)
    }
}

/// One trained and scored circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub generation: usize,
    pub index: usize,
    /// Index of the parent in the previous generation.
    pub parent: Option<usize>,
    pub blocks: Vec<usize>,
    pub param_count: usize,
    pub rot_count: usize,
    pub crx_count: usize,
    pub fitness: f64,
    /// Set when training failed; the individual then scores 0.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationLog {
    pub generation: usize,
    pub individuals: Vec<IndividualRecord>,
    pub best_fitness: f64,
    pub best_so_far: f64,
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Champion {
    pub generation: usize,
    pub index: usize,
    pub blocks: Vec<usize>,
    pub fitness: f64,
    pub model: TrainedModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    /// Best individual over all generations; `None` only if every training failed.
    pub best: Option<Champion>,
    pub logs: Vec<GenerationLog>,
    pub reached_threshold: bool,
}

impl RunOutcome {
    pub fn best_fitness(&self) -> f64 {
        self.best.as_ref().map_or(0.0, |b| b.fitness)
    }

    pub fn evaluations(&self) -> usize {
        self.logs.iter().map(|g| g.individuals.len()).sum()
    }

    pub fn best_path(&self) -> Option<Path> {
        self.best.as_ref().and_then(|b| Path::new(b.blocks.clone()).ok())
    }
}

struct Candidate {
    blocks: Vec<usize>,
    parent: Option<usize>,
    parent_theta: Option<Vec<f64>>,
}

struct Scored {
    record: IndividualRecord,
    model: Option<TrainedModel>,
}

fn individual_train_config(base: &TrainConfig, master: u64, generation: usize, index: usize) -> TrainConfig {
    let at = [generation as u64, index as u64];
    let mut cfg = base.clone();
    cfg.seed = derive_seed(master ^ base.seed, streams::BATCH_SHUFFLE, &at);
    if let InitPolicy::RandomPerRun(s) = base.init {
        cfg.init = InitPolicy::RandomPerRun(derive_seed(master ^ s, streams::THETA_INIT, &at));
    }
    cfg
}

fn evaluate_candidate(
    lib: &BlockLibrary,
    data: &EncodedDataset,
    base: &TrainConfig,
    master: u64,
    partition: Partition,
    generation: usize,
    index: usize,
    cand: &Candidate,
) -> Scored {
    let circuit = match compile_blocks(&cand.blocks, lib) {
        Ok(c) => c,
        Err(e) => return failed(generation, index, cand, 0, 0, 0, e),
    };
    let cfg = individual_train_config(base, master, generation, index);
    let theta0 = match (cfg.init, &cand.parent_theta) {
        (InitPolicy::Inherit(_), Some(parent)) => inherited_angles(parent, circuit.param_count()),
        _ => seeded_angles(cfg.init.seed(), circuit.param_count()),
    };
    let (pc, rc, cc) = (circuit.param_count(), circuit.rot_count(), circuit.crx_count());
    let result = train_from(&circuit, data, &cfg, theta0).and_then(|m| fitness(&m, data, partition).map(|f| (m, f)));
    match result {
        Ok((model, report)) => Scored {
            record: IndividualRecord {
                generation,
                index,
                parent: cand.parent,
                blocks: cand.blocks.clone(),
                param_count: pc,
                rot_count: rc,
                crx_count: cc,
                fitness: report.fitness,
                error: None,
            },
            model: Some(model),
        },
        Err(e) => failed(generation, index, cand, pc, rc, cc, e),
    }
}

fn failed(generation: usize, index: usize, cand: &Candidate, pc: usize, rc: usize, cc: usize, e: Error) -> Scored {
    log::warn!("generation {generation}, individual {index}: {e}; scored 0");
    Scored {
        record: IndividualRecord {
            generation,
            index,
            parent: cand.parent,
            blocks: cand.blocks.clone(),
            param_count: pc,
            rot_count: rc,
            crx_count: cc,
            fitness: 0.0,
            error: Some(e.to_string()),
        },
        model: None,
    }
}

/// Indices of the `t` fittest, best first; ties go to the lower index.
pub fn select_survivors(fitness: &[f64], t: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    order.truncate(t);
    order
}

/// Trains a generation in parallel and folds it into the running state.
struct Ledger<'a> {
    lib: &'a BlockLibrary,
    data: &'a EncodedDataset,
    train: &'a TrainConfig,
    master: u64,
    partition: Partition,
    logs: Vec<GenerationLog>,
    best: Option<Champion>,
}

impl Ledger<'_> {
    fn run_generation(&mut self, generation: usize, cands: &[Candidate]) -> Vec<Scored> {
        let start = Instant::now();
        let scored: Vec<Scored> = cands
            .par_iter()
            .enumerate()
            .map(|(i, c)| evaluate_candidate(self.lib, self.data, self.train, self.master, self.partition, generation, i, c))
            .collect();
        let best_fitness = scored.iter().map(|s| s.record.fitness).fold(0.0, f64::max);
        if let Some(top) = select_survivors(&scored.iter().map(|s| s.record.fitness).collect::<Vec<_>>(), 1).first() {
            let s = &scored[*top];
            if let Some(model) = &s.model {
                if self.best.as_ref().is_none_or(|b| s.record.fitness > b.fitness) {
                    self.best = Some(Champion {
                        generation,
                        index: *top,
                        blocks: s.record.blocks.clone(),
                        fitness: s.record.fitness,
                        model: model.clone(),
                    });
                }
            }
        }
        let best_so_far = self.logs.last().map_or(0.0, |g| g.best_so_far).max(best_fitness);
        log::info!("generation {generation}: {} individuals, best {best_fitness:.4}, best so far {best_so_far:.4}", scored.len());
        self.logs.push(GenerationLog {
            generation,
            individuals: scored.iter().map(|s| s.record.clone()).collect(),
            best_fitness,
            best_so_far,
            wall_time: start.elapsed(),
        });
        scored
    }

    fn finish(self, reached_threshold: bool) -> RunOutcome {
        RunOutcome {
            best: self.best,
            logs: self.logs,
            reached_threshold,
        }
    }
}

/// Runs the Markovian evolution: random length-`l` walks first, then each
/// survivor is extended by independent length-`l'` walks from its last block.
pub fn run_mqne(graph: &BlockGraph, lib: &BlockLibrary, data: &EncodedDataset, cfg: &MqneConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if graph.library_len() != lib.len() {
        return Err(Error::SpecMismatch(format!(
            "graph was built for {} blocks, library has {}",
            graph.library_len(),
            lib.len()
        )));
    }
    let master = cfg.master_seed;
    let mut cands = (0..cfg.n.at(1))
        .map(|i| {
            let mut rng = stream_rng(master, streams::PATH_INIT, &[1, i as u64]);
            Ok(Candidate {
                blocks: random_path(graph, cfg.l, cfg.start, &mut rng)?.nodes().to_vec(),
                parent: None,
                parent_theta: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ledger = Ledger {
        lib,
        data,
        train: &cfg.train,
        master,
        partition: cfg.evaluate_on,
        logs: Vec::new(),
        best: None,
    };
    for generation in 1..=cfg.g_c {
        let scored = ledger.run_generation(generation, &cands);
        if ledger.logs.last().unwrap().best_fitness >= cfg.f_c {
            return Ok(ledger.finish(true));
        }
        if generation == cfg.g_c {
            break;
        }
        let fit: Vec<f64> = scored.iter().map(|s| s.record.fitness).collect();
        let survivors = select_survivors(&fit, cfg.t.at(generation));
        let per = cfg.n.at(generation + 1);
        let next = generation + 1;
        cands = Vec::with_capacity(survivors.len() * per);
        for (rank, &s) in survivors.iter().enumerate() {
            let parent = &scored[s];
            let last = *parent.record.blocks.last().unwrap();
            for j in 0..per {
                let mut rng = stream_rng(master, streams::EXTEND, &[next as u64, rank as u64, j as u64]);
                let mut blocks = parent.record.blocks.clone();
                blocks.extend(walk_from(graph, last, cfg.l_prime, &mut rng)?);
                cands.push(Candidate {
                    blocks,
                    parent: Some(s),
                    parent_theta: parent.model.as_ref().map(|m| m.theta.clone()),
                });
            }
        }
    }
    Ok(ledger.finish(false))
}

/// One-point crossover of two raw block sequences.
pub fn crossover(c1: &[usize], c2: &[usize], cut1: usize, cut2: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if cut1 > c1.len() {
        return Err(Error::CutOutOfRange { cut: cut1, len: c1.len() });
    }
    if cut2 > c2.len() {
        return Err(Error::CutOutOfRange { cut: cut2, len: c2.len() });
    }
    let o1 = c1[..cut1].iter().chain(&c2[cut2..]).copied().collect();
    let o2 = c2[..cut2].iter().chain(&c1[cut1..]).copied().collect();
    Ok((o1, o2))
}

/// Replaces each position with probability `p` by a different block drawn
/// uniformly from `pool`.
pub fn mutation<R: Rng + ?Sized>(c: &[usize], p: f64, pool: &[usize], rng: &mut R) -> Vec<usize> {
    c.iter()
        .map(|&x| {
            if pool.len() < 2 || !rng.gen_bool(p) {
                return x;
            }
            loop {
                let y = pool[rng.gen_range(0..pool.len())];
                if y != x {
                    return y;
                }
            }
        })
        .collect()
}

fn sampling_pool(lib: &BlockLibrary, exclude_empty: bool) -> Vec<usize> {
    (0..lib.len())
        .filter(|&i| !(exclude_empty && lib.empty_index() == Some(i)))
        .collect()
}

/// Genetic baseline: random fixed-length sequences, then crossover of random
/// survivor pairs at uniform cuts followed by mutation. Connection rules are
/// not enforced.
pub fn run_genetic(lib: &BlockLibrary, data: &EncodedDataset, cfg: &GeneticConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let master = cfg.master_seed;
    let pool = sampling_pool(lib, cfg.exclude_empty);
    if pool.is_empty() {
        return Err(Error::Config("library has no blocks to sample".into()));
    }
    let mut cands: Vec<Candidate> = (0..cfg.n.at(1))
        .map(|i| {
            let mut rng = stream_rng(master, streams::GA_INIT, &[1, i as u64]);
            Candidate {
                blocks: (0..cfg.length).map(|_| *pool.choose(&mut rng).unwrap()).collect(),
                parent: None,
                parent_theta: None,
            }
        })
        .collect();
    let mut ledger = Ledger {
        lib,
        data,
        train: &cfg.train,
        master,
        partition: cfg.evaluate_on,
        logs: Vec::new(),
        best: None,
    };
    for generation in 1..=cfg.g_c {
        let scored = ledger.run_generation(generation, &cands);
        if ledger.logs.last().unwrap().best_fitness >= cfg.f_c {
            return Ok(ledger.finish(true));
        }
        if generation == cfg.g_c {
            break;
        }
        let fit: Vec<f64> = scored.iter().map(|s| s.record.fitness).collect();
        let survivors = select_survivors(&fit, cfg.t.at(generation));
        let next = generation + 1;
        let size = cfg.n.at(next);
        let mut xrng = stream_rng(master, streams::GA_CROSSOVER, &[next as u64]);
        let mut mrng = stream_rng(master, streams::GA_MUTATION, &[next as u64]);
        cands = Vec::with_capacity(size + 1);
        while cands.len() < size {
            let a = survivors[xrng.gen_range(0..survivors.len())];
            let b = if survivors.len() > 1 {
                loop {
                    let b = survivors[xrng.gen_range(0..survivors.len())];
                    if b != a {
                        break b;
                    }
                }
            } else {
                a
            };
            let (c1, c2) = (&scored[a].record.blocks, &scored[b].record.blocks);
            let cut1 = xrng.gen_range(0..=c1.len());
            let cut2 = xrng.gen_range(0..=c2.len());
            let (o1, o2) = crossover(c1, c2, cut1, cut2)?;
            for (child, parent) in [(o1, a), (o2, b)] {
                if cands.len() < size {
                    cands.push(Candidate {
                        blocks: mutation(&child, cfg.mutation_p, &pool, &mut mrng),
                        parent: Some(parent),
                        parent_theta: None,
                    });
                }
            }
        }
    }
    Ok(ledger.finish(false))
}

fn blocks_field(blocks: &[usize]) -> String {
    blocks.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// One row per individual:
/// `generation,index,parent,blocks,param_count,rot_count,crx_count,fitness`.
pub fn individuals_csv(logs: &[GenerationLog]) -> String {
    let mut out = String::from("generation,index,parent,blocks,param_count,rot_count,crx_count,fitness\n");
    for g in logs {
        for r in &g.individuals {
            let parent = r.parent.map_or(String::new(), |p| p.to_string());
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.generation,
                r.index,
                parent,
                blocks_field(&r.blocks),
                r.param_count,
                r.rot_count,
                r.crx_count,
                r.fitness
            )
            .unwrap();
        }
    }
    out
}

/// One row per generation: `generation,population,best_fitness,mean_fitness,best_so_far`.
pub fn generations_csv(logs: &[GenerationLog]) -> String {
    let mut out = String::from("generation,population,best_fitness,mean_fitness,best_so_far\n");
    for g in logs {
        let mean = g.individuals.iter().map(|r| r.fitness).sum::<f64>() / g.individuals.len() as f64;
        writeln!(out, "{},{},{},{},{}", g.generation, g.individuals.len(), g.best_fitness, mean, g.best_so_far).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seeds_differ_by_stream_and_index() {
        let a = derive_seed(1, streams::PATH_INIT, &[1, 0]);
        assert_eq!(a, derive_seed(1, streams::PATH_INIT, &[1, 0]));
        assert_ne!(a, derive_seed(1, streams::PATH_INIT, &[1, 1]));
        assert_ne!(a, derive_seed(1, streams::EXTEND, &[1, 0]));
        assert_ne!(a, derive_seed(2, streams::PATH_INIT, &[1, 0]));
    }

    #[test]
    fn schedule_repeats_last() {
        let s = Schedule::PerGeneration(vec![9, 5]);
        assert_eq!((s.at(1), s.at(2), s.at(7)), (9, 5, 5));
        assert_eq!(Schedule::Constant(3).at(4), 3);
    }

    #[test]
    fn crossover_cases() {
        let (c1, c2) = (vec![1, 2, 3], vec![7, 8]);
        assert_eq!(crossover(&c1, &c2, 3, 2).unwrap(), (c1.clone(), c2.clone()));
        assert_eq!(crossover(&c1, &c2, 0, 0).unwrap(), (c2.clone(), c1.clone()));
        let (o1, o2) = crossover(&c1, &c2, 1, 1).unwrap();
        assert_eq!((o1, o2), (vec![1, 8], vec![7, 2, 3]));
        assert!(matches!(crossover(&c1, &c2, 4, 0), Err(Error::CutOutOfRange { cut: 4, len: 3 })));
        assert!(crossover(&c1, &c2, 0, 3).is_err());
    }

    #[test]
    fn mutation_extremes() {
        let pool: Vec<usize> = (0..6).collect();
        let c = vec![0, 1, 2, 3, 4, 5, 5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mutation(&c, 0.0, &pool, &mut rng), c);
        let m = mutation(&c, 1.0, &pool, &mut rng);
        assert_eq!(m.len(), c.len());
        assert!(m.iter().zip(&c).all(|(a, b)| a != b));
    }

    #[test]
    fn survivors_prefer_lower_index_on_ties() {
        assert_eq!(select_survivors(&[0.5, 0.9, 0.9, 0.1], 2), vec![1, 2]);
        assert_eq!(select_survivors(&[0.5, 0.5, 0.5], 1), vec![0]);
    }

    #[test]
    fn config_checks() {
        let mut cfg = MqneConfig {
            n: Schedule::Constant(5),
            t: Schedule::Constant(1),
            l: 5,
            l_prime: 2,
            f_c: 0.9,
            g_c: 3,
            start: StartPolicy::UniformRandom,
            train: TrainConfig::default(),
            master_seed: 0,
            evaluate_on: Partition::Validation,
        };
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.path_len(3), 9);
        cfg.t = Schedule::Constant(5);
        assert!(cfg.validate().is_err());
        cfg.t = Schedule::Constant(1);
        cfg.f_c = 1.5;
        assert!(cfg.validate().is_err());
        cfg.f_c = 0.9;
        cfg.l_prime = 0;
        assert!(cfg.validate().is_err());
    }
}
