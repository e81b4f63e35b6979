use mqne_core::blockgraph::{build_graph, BlockGraph, Path, StartPolicy};
use mqne_core::datasets::{gen_cluster_ising, split, ClusterIsingSpec, Partition, SplitCounts};
use mqne_core::evolution::{
    generations_csv, individuals_csv, run_genetic, run_mqne, GeneticConfig, MqneConfig, RunOutcome, Schedule,
};
use mqne_core::gateblock::{enumerate_library, BlockLibrary, LibraryMode, LibrarySpec};
use mqne_core::trainer::{EncodedDataset, InitPolicy, TrainConfig};

struct Setup {
    lib: BlockLibrary,
    graph: BlockGraph,
    data: EncodedDataset,
}

fn setup() -> Setup {
    let lib = enumerate_library(&LibrarySpec::new(5, LibraryMode::Full)).unwrap();
    let graph = build_graph(&lib, true).unwrap();
    let ds = gen_cluster_ising(&ClusterIsingSpec::even_grid(4, 30)).unwrap();
    let data = EncodedDataset::new(&split(&ds, SplitCounts::new(20, 10, 0), 1).unwrap()).unwrap();
    Setup { lib, graph, data }
}

fn train_cfg(init: InitPolicy) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 5,
        epochs: 2,
        init,
        ..TrainConfig::default()
    }
}

fn mqne_cfg(s: &Setup, g_c: usize, f_c: f64, init: InitPolicy) -> MqneConfig {
    MqneConfig {
        n: Schedule::Constant(3),
        t: Schedule::Constant(2),
        l: 2,
        l_prime: 1,
        f_c,
        g_c,
        start: StartPolicy::all_rotations(&s.lib).unwrap(),
        train: train_cfg(init),
        master_seed: 17,
        evaluate_on: Partition::Validation,
    }
}

fn csvs(o: &RunOutcome) -> (String, String) {
    (individuals_csv(&o.logs), generations_csv(&o.logs))
}

#[test]
fn single_generation_is_the_initial_population() {
    let s = setup();
    let out = run_mqne(&s.graph, &s.lib, &s.data, &mqne_cfg(&s, 1, 1.0, InitPolicy::RandomPerRun(0))).unwrap();
    assert_eq!(out.logs.len(), 1);
    assert_eq!(out.evaluations(), 3);
    let all = s.lib.all_rotations_index().unwrap();
    for r in &out.logs[0].individuals {
        assert_eq!(r.blocks.len(), 2);
        assert_eq!(r.blocks[0], all);
        assert!(r.parent.is_none());
    }
}

#[test]
fn zero_threshold_stops_after_first_generation() {
    let s = setup();
    let out = run_mqne(&s.graph, &s.lib, &s.data, &mqne_cfg(&s, 5, 0.0, InitPolicy::RandomPerRun(0))).unwrap();
    assert!(out.reached_threshold);
    assert_eq!(out.logs.len(), 1);
}

#[test]
fn offspring_extend_their_parents() {
    let s = setup();
    let cfg = mqne_cfg(&s, 4, 1.0, InitPolicy::Inherit(0));
    let out = run_mqne(&s.graph, &s.lib, &s.data, &cfg).unwrap();
    let mut prev_best = 0.0;
    for (g, log) in out.logs.iter().enumerate() {
        let generation = g + 1;
        assert_eq!(log.generation, generation);
        let expected = if generation == 1 { 3 } else { 2 * 3 };
        assert_eq!(log.individuals.len(), expected);
        for r in &log.individuals {
            assert_eq!(r.blocks.len(), cfg.path_len(generation));
            assert_eq!(r.blocks.len(), 2 + (generation - 1));
            s.graph.validate_path(&Path::new(r.blocks.clone()).unwrap()).unwrap();
            assert_eq!(r.param_count, 3 * r.rot_count + r.crx_count);
            if let Some(p) = r.parent {
                let parent = &out.logs[g - 1].individuals[p];
                assert_eq!(r.blocks[..parent.blocks.len()], parent.blocks[..]);
            }
        }
        assert!(log.best_so_far >= prev_best);
        assert!(log.best_so_far >= log.best_fitness);
        prev_best = log.best_so_far;
    }
    if !out.reached_threshold {
        assert_eq!(out.logs.len(), 4);
    }
    let best = out.best.as_ref().unwrap();
    assert_eq!(best.fitness, out.best_fitness());
    assert_eq!(best.model.circuit.block_indices(), &best.blocks[..]);
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let s = setup();
    for init in [InitPolicy::RandomPerRun(3), InitPolicy::FixedSeed(3), InitPolicy::Inherit(3)] {
        let cfg = mqne_cfg(&s, 3, 1.0, init);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_mqne(&s.graph, &s.lib, &s.data, &cfg).unwrap())
        };
        assert_eq!(csvs(&run(1)), csvs(&run(3)));
    }
}

#[test]
fn different_seeds_explore_differently() {
    let s = setup();
    let mut a = mqne_cfg(&s, 2, 1.0, InitPolicy::RandomPerRun(0));
    let out_a = run_mqne(&s.graph, &s.lib, &s.data, &a).unwrap();
    a.master_seed = 18;
    let out_b = run_mqne(&s.graph, &s.lib, &s.data, &a).unwrap();
    assert_ne!(csvs(&out_a).0, csvs(&out_b).0);
}

fn ga_cfg() -> GeneticConfig {
    GeneticConfig {
        n: Schedule::Constant(4),
        t: Schedule::Constant(2),
        mutation_p: 0.2,
        length: 3,
        f_c: 1.0,
        g_c: 3,
        train: train_cfg(InitPolicy::RandomPerRun(0)),
        master_seed: 5,
        evaluate_on: Partition::Validation,
        exclude_empty: true,
    }
}

#[test]
fn genetic_baseline_is_deterministic() {
    let s = setup();
    let cfg = ga_cfg();
    let a = run_genetic(&s.lib, &s.data, &cfg).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap()
        .install(|| run_genetic(&s.lib, &s.data, &cfg).unwrap());
    assert_eq!(csvs(&a), csvs(&b));
    for log in &a.logs {
        assert_eq!(log.individuals.len(), 4);
        let empty = s.lib.empty_index().unwrap();
        assert!(log.individuals.iter().all(|r| !r.blocks.contains(&empty)));
    }
    assert!(a.logs[0].individuals.iter().all(|r| r.blocks.len() == 3));
    if !a.reached_threshold {
        assert_eq!(a.evaluations(), 12);
    }
}

#[test]
fn generation_table_has_one_row_per_generation() {
    let s = setup();
    let out = run_mqne(&s.graph, &s.lib, &s.data, &mqne_cfg(&s, 2, 1.0, InitPolicy::RandomPerRun(1))).unwrap();
    let (ind, gen) = csvs(&out);
    assert_eq!(gen.lines().count(), 1 + out.logs.len());
    assert_eq!(ind.lines().count(), 1 + out.evaluations());
}
