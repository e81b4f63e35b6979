mod config;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mqne_core::blockgraph::{build_graph_with_limit, DEFAULT_MAX_NODES};
use mqne_core::datasets::Partition;
use mqne_core::evolution::{derive_seed, streams};
use mqne_core::gateblock::{count_closed_form, enumerate_library_with_limit, LibraryMode, LibrarySpec, DEFAULT_MAX_BLOCKS};

use config::{DataSection, RunConfig, Task};
use run::Finish;

/// Exit status when `g_c` generations ran without reaching `f_c`.
const EXIT_BUDGET: u8 = 2;
const EXIT_ERROR: u8 = 1;

#[derive(Parser)]
#[command(name = "mqne", version, about = "Markovian quantum neuroevolution")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate a gate-block library.
    Library {
        #[command(flatten)]
        lib: LibraryArgs,
        /// Print the closed-form count without enumerating.
        #[arg(long)]
        count_only: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_BLOCKS)]
        max_blocks: u128,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Build the block graph and write its adjacency list.
    Graph {
        #[command(flatten)]
        lib: LibraryArgs,
        /// Keep the identity block as a graph node.
        #[arg(long)]
        keep_empty: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
        max_nodes: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Prepare a dataset cache with its JSON sidecar.
    Dataset(DatasetArgs),
    /// Run an evolution from a config file.
    Evolve {
        config: PathBuf,
        /// Run the genetic baseline instead.
        #[arg(long, value_parser = ["genetic"])]
        baseline: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Verify a run bundle and print its generation table.
    Report { bundle: PathBuf },
}

#[derive(Args)]
struct LibraryArgs {
    #[arg(long)]
    qubits: usize,
    /// full, cutoff:<c>, minimal or nonadjacent.
    #[arg(long, default_value = "full")]
    mode: LibraryMode,
    /// Leave out the identity block.
    #[arg(long)]
    no_empty: bool,
}

impl LibraryArgs {
    fn spec(&self) -> LibrarySpec {
        LibrarySpec {
            k: self.qubits,
            mode: self.mode,
            include_empty_block: !self.no_empty,
        }
    }
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(value_enum)]
    task: Task,
    /// Output cache file; the sidecar is written next to it with a `.json` extension.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spin count (spt).
    #[arg(long)]
    n: Option<usize>,
    /// Number of λ values (spt).
    #[arg(long)]
    samples: Option<usize>,
    /// IDX image file (mnist).
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file (mnist).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Digit pair, first one is class 1 (mnist).
    #[arg(long, value_delimiter = ',')]
    digits: Option<Vec<u8>>,
    /// WDBC file (cancer).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// train,validation,test counts.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<usize>>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Finish::Threshold) => ExitCode::SUCCESS,
        Ok(Finish::Exhausted) => ExitCode::from(EXIT_BUDGET),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<Finish> {
    match cli.command {
        Command::Library {
            lib,
            count_only,
            max_blocks,
            out,
        } => {
            set_threads(cli.threads)?;
            let spec = lib.spec();
            spec.validate()?;
            let count = count_closed_form(&spec);
            if count_only {
                println!("{count}");
                return Ok(Finish::Threshold);
            }
            let library = enumerate_library_with_limit(&spec, max_blocks)
                .with_context(|| format!("closed-form count is {count}"))?;
            let text = library.to_text();
            match out {
                Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            eprintln!("{} blocks", library.len());
        }
        Command::Graph {
            lib,
            keep_empty,
            max_nodes,
            out,
        } => {
            set_threads(cli.threads)?;
            let library = enumerate_library_with_limit(&lib.spec(), DEFAULT_MAX_BLOCKS)?;
            let graph = build_graph_with_limit(&library, !keep_empty, max_nodes)?;
            let text = graph.to_adjacency_text();
            match out {
                Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            eprintln!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
        }
        Command::Dataset(args) => {
            set_threads(cli.threads)?;
            dataset(args)?;
        }
        Command::Evolve {
            config,
            baseline,
            seed,
            output,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(o) = output {
                cfg.output = o;
            }
            if cli.threads.is_some() {
                cfg.threads = cli.threads;
            }
            set_threads(cfg.threads)?;
            return run::evolve(&cfg, baseline.is_some());
        }
        Command::Report { bundle } => run::report(&bundle)?,
    }
    Ok(Finish::Threshold)
}

fn dataset(args: DatasetArgs) -> Result<()> {
    let digits = match args.digits.as_deref() {
        Some(&[a, b]) => Some([a, b]),
        Some(_) => bail!("--digits takes two values"),
        None => None,
    };
    let data = DataSection {
        cache: None,
        images: args.images,
        labels: args.labels,
        digits,
        csv: args.csv,
        spins: args.n,
        samples: args.samples,
        split: match args.split.as_deref() {
            Some(&[a, b, c]) => Some([a, b, c]),
            Some(_) => bail!("--split takes three values"),
            None => None,
        },
    };
    let (ds, _) = run::build_dataset(args.task, &data, args.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let hash = run::write_cache(&ds, &args.out, derive_seed(args.seed, streams::DATA_SPLIT, &[]))?;
    let (c1, c2) = ds.class_counts();
    let part = |p| ds.indices(p).len();
    println!(
        "{} samples ({c1} class 1, {c2} class 2), {} features, split {}/{}/{}; sha256 {hash}",
        ds.len(),
        ds.feature_len(),
        part(Partition::Train),
        part(Partition::Validation),
        part(Partition::Test)
    );
    Ok(())
}
