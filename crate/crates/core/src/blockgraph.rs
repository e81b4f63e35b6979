//! Directed graph of legal gate-block successions and Markovian path sampling.
//!
//! Node ids are library indices. A block `y` may follow a block `x` when
//!
//! * every gate of `y` touches at least one qubit used by `x` (no gate of `y` could
//!   have been merged into the layer `x`), and
//! * no gate of `y` repeats a gate of `x` on the same qubits with the same
//!   orientation.
//!
//! The all-identity block never follows anything, so the graph has no self-loops.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gateblock::{BlockLibrary, GateBlock};

/// Default cap on the number of library entries [`build_graph`] accepts.
pub const DEFAULT_MAX_NODES: usize = 20_000;

/// Connection rule between consecutive blocks.
pub fn allowed_successor(x: &GateBlock, y: &GateBlock) -> Result<bool> {
    if x.k() != y.k() {
        return Err(Error::DimensionMismatch {
            what: "block qubit count",
            expected: x.k(),
            actual: y.k(),
        });
    }
    Ok(successor_rule(x, y))
}

fn successor_rule(x: &GateBlock, y: &GateBlock) -> bool {
    let support = x.support();
    if y.is_empty() {
        return false;
    }
    // Rotations of y: each must sit on x's support and x must not rotate that qubit.
    let rot = y.rotation_mask();
    if rot & !support != 0 || rot & x.rotation_mask() != 0 {
        return false;
    }
    y.crx_pairs().iter().all(|&(c, t)| {
        let mask = (1u32 << (c - 1)) | (1u32 << (t - 1));
        mask & support != 0 && !x.crx_pairs().contains(&(c, t))
    })
}

#[derive(Clone, Debug)]
pub struct BlockGraph {
    library_len: usize,
    words: usize,
    /// Row-major packed adjacency bits, `library_len` rows of `words` words.
    bits: Vec<u64>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    nodes: Vec<usize>,
    active: Vec<bool>,
}

impl BlockGraph {
    fn from_rows(library_len: usize, active: Vec<bool>, rows: Vec<Vec<u32>>) -> Self {
        let words = library_len.div_ceil(64);
        let mut bits = vec![0u64; library_len * words];
        let mut offsets = Vec::with_capacity(library_len + 1);
        let mut targets = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        offsets.push(0);
        for (x, row) in rows.into_iter().enumerate() {
            for &y in &row {
                bits[x * words + y as usize / 64] |= 1u64 << (y % 64);
            }
            targets.extend(row);
            offsets.push(targets.len());
        }
        let nodes = (0..library_len).filter(|&i| active[i]).collect();
        BlockGraph {
            library_len,
            words,
            bits,
            offsets,
            targets,
            nodes,
            active,
        }
    }

    /// Number of active nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Size of the library the graph indexes into.
    pub fn library_len(&self) -> usize {
        self.library_len
    }

    /// Active node ids (library indices), ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn is_node(&self, x: usize) -> bool {
        self.active.get(x).copied().unwrap_or(false)
    }

    pub fn has_edge(&self, x: usize, y: usize) -> bool {
        x < self.library_len
            && y < self.library_len
            && self.bits[x * self.words + y / 64] & (1u64 << (y % 64)) != 0
    }

    pub fn successors(&self, x: usize) -> &[u32] {
        &self.targets[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn out_degree(&self, x: usize) -> usize {
        self.offsets[x + 1] - self.offsets[x]
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Checks node membership and every consecutive edge of `path`.
    pub fn validate_path(&self, path: &Path) -> Result<()> {
        for &x in path.nodes() {
            if !self.is_node(x) {
                return Err(Error::IndexOutOfRange {
                    index: x,
                    size: self.library_len,
                });
            }
        }
        for w in path.nodes().windows(2) {
            if !self.has_edge(w[0], w[1]) {
                return Err(Error::InvalidPath {
                    from: w[0],
                    to: w[1],
                });
            }
        }
        Ok(())
    }

    /// Adjacency-list export: a header, then `node: successors...` per active node.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = format!(
            "# mqne-graph v1 library_len={} nodes={} edges={}\n",
            self.library_len,
            self.node_count(),
            self.edge_count()
        );
        for &x in &self.nodes {
            out.push_str(&x.to_string());
            out.push(':');
            for y in self.successors(x) {
                out.push(' ');
                out.push_str(&y.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_adjacency_text(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: "graph".into(),
            message,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let fields = header
            .strip_prefix("# mqne-graph v1")
            .ok_or_else(|| bad(format!("unrecognized header `{header}`")))?;
        let library_len = fields
            .split_whitespace()
            .find_map(|f| f.strip_prefix("library_len="))
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| bad("header lacks library_len".into()))?;
        let mut active = vec![false; library_len];
        let mut rows = vec![Vec::new(); library_len];
        for line in lines {
            let (node, rest) = line
                .split_once(':')
                .ok_or_else(|| bad(format!("line `{line}` lacks `:`")))?;
            let x: usize = node
                .trim()
                .parse()
                .map_err(|e| bad(format!("node `{node}`: {e}")))?;
            if x >= library_len {
                return Err(Error::IndexOutOfRange {
                    index: x,
                    size: library_len,
                });
            }
            active[x] = true;
            let mut row = rest
                .split_whitespace()
                .map(|y| {
                    y.parse::<u32>()
                        .map_err(|e| bad(format!("successor `{y}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(&y) = row.iter().find(|&&y| y as usize >= library_len) {
                return Err(Error::IndexOutOfRange {
                    index: y as usize,
                    size: library_len,
                });
            }
            row.sort_unstable();
            rows[x] = row;
        }
        Ok(BlockGraph::from_rows(library_len, active, rows))
    }
}

/// Builds the succession graph over `lib` with the default size cap.
pub fn build_graph(lib: &BlockLibrary, exclude_empty: bool) -> Result<BlockGraph> {
    build_graph_with_limit(lib, exclude_empty, DEFAULT_MAX_NODES)
}

pub fn build_graph_with_limit(
    lib: &BlockLibrary,
    exclude_empty: bool,
    max_nodes: usize,
) -> Result<BlockGraph> {
    let n = lib.len();
    if n > max_nodes {
        return Err(Error::ResourceLimit {
            count: n as u128,
            limit: max_nodes as u128,
        });
    }
    let active: Vec<bool> = (0..n)
        .map(|i| !(exclude_empty && Some(i) == lib.empty_index()))
        .collect();
    let blocks = lib.blocks();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|x| {
            if !active[x] {
                return Vec::new();
            }
            (0..n)
                .filter(|&y| active[y] && successor_rule(&blocks[x], &blocks[y]))
                .map(|y| y as u32)
                .collect()
        })
        .collect();
    Ok(BlockGraph::from_rows(n, active, rows))
}

/// A walk through the graph, as library indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Path(Vec<usize>);

impl Path {
    pub fn new(nodes: Vec<usize>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("a path needs at least one node".into()));
        }
        Ok(Path(nodes))
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> usize {
        *self.0.last().expect("paths are non-empty")
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

impl FromStr for Path {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('[').trim_end_matches(']');
        let nodes = s
            .split("->")
            .map(|x| {
                x.trim().parse::<usize>().map_err(|e| Error::Format {
                    path: "path".into(),
                    message: format!("`{}`: {e}", x.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Path::new(nodes)
    }
}

/// How the first node of a fresh path is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    UniformRandom,
    FixedBlock(usize),
}

impl StartPolicy {
    /// Start every path at the all-rotations block.
    pub fn all_rotations(lib: &BlockLibrary) -> Result<Self> {
        lib.all_rotations_index()
            .map(StartPolicy::FixedBlock)
            .ok_or_else(|| Error::Config("library has no all-rotations block".into()))
    }
}

fn step<R: Rng + ?Sized>(graph: &BlockGraph, x: usize, rng: &mut R) -> Result<usize> {
    let succ = graph.successors(x);
    if succ.is_empty() {
        return Err(Error::DeadEnd(x));
    }
    Ok(succ[rng.gen_range(0..succ.len())] as usize)
}

/// Samples a path of exactly `len` nodes by a uniform random walk.
pub fn random_path<R: Rng + ?Sized>(
    graph: &BlockGraph,
    len: usize,
    policy: StartPolicy,
    rng: &mut R,
) -> Result<Path> {
    if len == 0 {
        return Err(Error::Config("path length must be at least 1".into()));
    }
    let start = match policy {
        StartPolicy::FixedBlock(i) => {
            if !graph.is_node(i) {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    size: graph.library_len(),
                });
            }
            i
        }
        StartPolicy::UniformRandom => {
            if graph.nodes().is_empty() {
                return Err(Error::Config("graph has no nodes".into()));
            }
            graph.nodes()[rng.gen_range(0..graph.node_count())]
        }
    };
    let mut nodes = Vec::with_capacity(len);
    nodes.push(start);
    for _ in 1..len {
        let next = step(graph, *nodes.last().unwrap(), rng)?;
        nodes.push(next);
    }
    Ok(Path(nodes))
}

/// Appends `segment` nodes by a uniform random walk from the last node of `path`.
pub fn extend_path<R: Rng + ?Sized>(
    graph: &BlockGraph,
    path: &Path,
    segment: usize,
    rng: &mut R,
) -> Result<Path> {
    let mut nodes = path.0.clone();
    nodes.extend(walk_from(graph, path.last(), segment, rng)?);
    Ok(Path(nodes))
}

/// The `steps` nodes visited after `start`; depends on nothing but `start` and `rng`.
pub fn walk_from<R: Rng + ?Sized>(
    graph: &BlockGraph,
    start: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(steps);
    let mut x = start;
    for _ in 0..steps {
        x = step(graph, x, rng)?;
        out.push(x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateblock::{enumerate_library, Gate, LibraryMode, LibrarySpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block(k: usize, gates: &[Gate]) -> GateBlock {
        GateBlock::new(k, gates.iter().copied()).unwrap()
    }

    const R1: Gate = Gate::Rot { qubit: 1 };
    const R2: Gate = Gate::Rot { qubit: 2 };
    const R3: Gate = Gate::Rot { qubit: 3 };
    const C12: Gate = Gate::Crx { control: 1, target: 2 };

    #[test]
    fn successor_examples() {
        let x = block(4, &[R1, R2]);
        assert!(!allowed_successor(&x, &x).unwrap());
        assert!(!allowed_successor(&x, &block(4, &[R3])).unwrap());
        assert!(!allowed_successor(&x, &block(4, &[C12, R3])).unwrap());
        assert!(allowed_successor(&x, &block(4, &[C12])).unwrap());
        assert!(allowed_successor(&block(2, &[C12]), &block(2, &[R1, R2])).unwrap());
        // reversed orientation is a different gate
        let c21 = Gate::Crx { control: 2, target: 1 };
        assert!(allowed_successor(&block(2, &[C12]), &block(2, &[c21])).unwrap());
        assert!(!allowed_successor(&block(2, &[C12]), &block(2, &[C12])).unwrap());
        assert!(allowed_successor(&block(2, &[C12]), &block(3, &[C12])).is_err());
    }

    #[test]
    fn two_qubit_graph() {
        let lib = enumerate_library(&LibrarySpec::new(2, LibraryMode::Full)).unwrap();
        let g = build_graph(&lib, true).unwrap();
        assert_eq!(g.node_count(), 5);
        let idx = |gs: &[Gate]| lib.index_of(&block(2, gs)).unwrap();
        assert!(g.has_edge(idx(&[R1, R2]), idx(&[C12])));
        assert!(!g.has_edge(idx(&[R1]), idx(&[R2])));
        assert!(!g.is_node(lib.empty_index().unwrap()));
        for &x in g.nodes() {
            assert!(!g.has_edge(x, x));
            assert!(g.out_degree(x) >= 1);
        }
    }

    #[test]
    fn single_qubit_graph_dead_ends() {
        let lib = enumerate_library(&LibrarySpec::new(1, LibraryMode::Full)).unwrap();
        let g = build_graph(&lib, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let only = g.nodes()[0];
        assert_eq!(random_path(&g, 1, StartPolicy::FixedBlock(only), &mut rng).unwrap().len(), 1);
        assert!(matches!(
            random_path(&g, 2, StartPolicy::FixedBlock(only), &mut rng),
            Err(Error::DeadEnd(_))
        ));
    }

    #[test]
    fn path_text_round_trip() {
        let p = Path::new(vec![4257, 6687, 1345]).unwrap();
        assert_eq!(p.to_string(), "4257 -> 6687 -> 1345");
        assert_eq!("[4257 -> 6687 -> 1345]".parse::<Path>().unwrap(), p);
        assert!("4257 -> x".parse::<Path>().is_err());
        assert!(Path::new(vec![]).is_err());
    }

    #[test]
    fn fixed_start_and_extension() {
        let lib = enumerate_library(&LibrarySpec::new(3, LibraryMode::Full)).unwrap();
        let g = build_graph(&lib, true).unwrap();
        let start = StartPolicy::all_rotations(&lib).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_path(&g, 1, start, &mut rng).unwrap();
        assert_eq!(p.nodes(), &[lib.all_rotations_index().unwrap()]);
        assert_eq!(extend_path(&g, &p, 0, &mut rng).unwrap(), p);
        let q = extend_path(&g, &p, 4, &mut rng).unwrap();
        assert_eq!(q.len(), 5);
        g.validate_path(&q).unwrap();
        assert!(random_path(&g, 0, start, &mut rng).is_err());
        let empty = lib.empty_index().unwrap();
        assert!(random_path(&g, 2, StartPolicy::FixedBlock(empty), &mut rng).is_err());
    }

    #[test]
    fn adjacency_text_round_trip() {
        let lib = enumerate_library(&LibrarySpec::new(3, LibraryMode::Full)).unwrap();
        let g = build_graph(&lib, true).unwrap();
        let back = BlockGraph::from_adjacency_text(&g.to_adjacency_text()).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        for &x in g.nodes() {
            assert_eq!(back.successors(x), g.successors(x));
        }
    }

    #[test]
    fn graph_size_limit() {
        let lib = enumerate_library(&LibrarySpec::new(5, LibraryMode::Full)).unwrap();
        assert!(matches!(
            build_graph_with_limit(&lib, true, 100),
            Err(Error::ResourceLimit { .. })
        ));
    }
}
