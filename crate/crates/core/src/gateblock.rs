//! Gate-blocks, their integer encoding vectors, and block libraries.
//!
//! A gate-block is a depth-1 layer over `k` qubits built from two gate kinds:
//! a general single-qubit rotation `R = Rz·Rx·Rz` and a two-qubit controlled-`Rx`.
//! Qubits are numbered `1..=k`.
//!
//! Every block has a canonical encoding vector of length `k + 2⌊k/2⌋`. The first
//! `2⌊k/2⌋` entries hold controlled-`Rx` gates as `(control, target)` pairs, sorted
//! by their lower qubit with `(0, 0)` padding at the end. The last `k` entries hold
//! `i` at position `i` when qubit `i` carries a rotation and `0` otherwise.
//!
//! ```text
//! [1,2,5,4,0,0; 0,0,3,0,0,6,0]   CRx(1→2), CRx(5→4), R on 3 and 6
//! ```

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest qubit count a block can describe (qubit sets are stored as `u32` masks).
pub const MAX_QUBITS: usize = 32;

/// Default cap on the number of blocks [`enumerate_library`] will materialize.
pub const DEFAULT_MAX_BLOCKS: u128 = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gate {
    /// `Rz·Rx·Rz` rotation on one qubit.
    Rot { qubit: usize },
    /// `Rx` on `target` controlled by `control`.
    Crx { control: usize, target: usize },
}

impl Gate {
    /// Bit mask of the qubits the gate touches (bit `q - 1` for qubit `q`).
    pub fn support(&self) -> u32 {
        match *self {
            Gate::Rot { qubit } => bit(qubit),
            Gate::Crx { control, target } => bit(control) | bit(target),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::Rot { qubit } => write!(f, "R({qubit})"),
            Gate::Crx { control, target } => write!(f, "CRx({control}->{target})"),
        }
    }
}

#[inline]
fn bit(qubit: usize) -> u32 {
    1u32 << (qubit - 1)
}

/// Which qubit pairs a controlled-`Rx` may act on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    /// Nearest neighbours on a line, `|control - target| = 1`.
    Adjacent,
    /// Any two distinct qubits.
    AllToAll,
}

/// A depth-1 layer: each qubit is touched by at most one gate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GateBlock {
    k: usize,
    /// `(control, target)` pairs sorted by `min(control, target)`.
    crx: Vec<(usize, usize)>,
    rotations: u32,
}

impl GateBlock {
    pub fn new(k: usize, gates: impl IntoIterator<Item = Gate>) -> Result<Self> {
        check_qubit_count(k)?;
        let mut used = 0u32;
        let mut crx = Vec::new();
        let mut rotations = 0u32;
        for gate in gates {
            let (lo, hi) = match gate {
                Gate::Rot { qubit } => (qubit, qubit),
                Gate::Crx { control, target } => {
                    if control == target {
                        return Err(Error::InvalidBlock(format!(
                            "controlled-Rx on a single qubit {control}"
                        )));
                    }
                    (control.min(target), control.max(target))
                }
            };
            if lo == 0 || hi > k {
                return Err(Error::InvalidBlock(format!(
                    "gate {gate} outside qubits 1..={k}"
                )));
            }
            let support = gate.support();
            if used & support != 0 {
                return Err(Error::InvalidBlock(format!(
                    "gate {gate} overlaps another gate in the same block"
                )));
            }
            used |= support;
            match gate {
                Gate::Rot { qubit } => rotations |= bit(qubit),
                Gate::Crx { control, target } => crx.push((control, target)),
            }
        }
        crx.sort_by_key(|&(c, t)| c.min(t));
        Ok(GateBlock { k, crx, rotations })
    }

    /// The all-identity layer.
    pub fn empty(k: usize) -> Self {
        GateBlock {
            k,
            crx: Vec::new(),
            rotations: 0,
        }
    }

    /// A rotation on every qubit.
    pub fn all_rotations(k: usize) -> Self {
        GateBlock {
            k,
            crx: Vec::new(),
            rotations: full_mask(k),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Gates in canonical order: controlled-`Rx` pairs first, then rotations by qubit.
    pub fn gates(&self) -> impl Iterator<Item = Gate> + '_ {
        let crx = self
            .crx
            .iter()
            .map(|&(control, target)| Gate::Crx { control, target });
        let rot = (1..=self.k)
            .filter(|&q| self.rotations & bit(q) != 0)
            .map(|qubit| Gate::Rot { qubit });
        crx.chain(rot)
    }

    pub fn crx_pairs(&self) -> &[(usize, usize)] {
        &self.crx
    }

    pub fn rotation_mask(&self) -> u32 {
        self.rotations
    }

    /// Union of the qubits touched by the block's gates.
    pub fn support(&self) -> u32 {
        self.crx
            .iter()
            .fold(self.rotations, |m, &(c, t)| m | bit(c) | bit(t))
    }

    pub fn contains(&self, gate: &Gate) -> bool {
        match *gate {
            Gate::Rot { qubit } => qubit >= 1 && qubit <= self.k && self.rotations & bit(qubit) != 0,
            Gate::Crx { control, target } => self.crx.contains(&(control, target)),
        }
    }

    pub fn rot_count(&self) -> usize {
        self.rotations.count_ones() as usize
    }

    pub fn crx_count(&self) -> usize {
        self.crx.len()
    }

    pub fn gate_count(&self) -> usize {
        self.rot_count() + self.crx_count()
    }

    pub fn is_empty(&self) -> bool {
        self.crx.is_empty() && self.rotations == 0
    }

    /// True when every controlled-`Rx` acts on neighbouring qubits.
    pub fn is_adjacent(&self) -> bool {
        self.crx.iter().all(|&(c, t)| c.abs_diff(t) == 1)
    }
}

impl fmt::Display for GateBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, g) in self.gates().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{g}")?;
        }
        f.write_str("}")
    }
}

fn full_mask(k: usize) -> u32 {
    if k == 0 {
        0
    } else {
        u32::MAX >> (32 - k)
    }
}

fn check_qubit_count(k: usize) -> Result<()> {
    if k == 0 || k > MAX_QUBITS {
        return Err(Error::InvalidSpec(format!(
            "qubit count {k} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

/// Length of the encoding vector for `k` qubits.
pub fn encoding_len(k: usize) -> usize {
    k + 2 * (k / 2)
}

/// Canonical integer encoding of a gate-block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EncodingVector {
    entries: Vec<usize>,
    k: usize,
}

impl EncodingVector {
    pub fn new(k: usize, entries: Vec<usize>) -> Result<Self> {
        check_qubit_count(k)?;
        if entries.len() != encoding_len(k) {
            return Err(Error::MalformedVector(format!(
                "length {} but {k} qubits need {}",
                entries.len(),
                encoding_len(k)
            )));
        }
        Ok(EncodingVector { entries, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn crx_section(&self) -> &[usize] {
        &self.entries[..2 * (self.k / 2)]
    }

    pub fn rotation_section(&self) -> &[usize] {
        &self.entries[2 * (self.k / 2)..]
    }
}

impl fmt::Display for EncodingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(
            f,
            "[{}; {}]",
            join(self.crx_section()),
            join(self.rotation_section())
        )
    }
}

impl FromStr for EncodingVector {
    type Err = Error;

    /// Parses the `[c,c,...; r,r,...]` notation. The qubit count is the length of the
    /// rotation section.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let inner = s
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::MalformedVector(format!("`{s}` is not bracketed")))?;
        let (crx, rot) = inner
            .split_once(';')
            .ok_or_else(|| Error::MalformedVector(format!("`{s}` has no `;` separator")))?;
        let parse = |part: &str| -> Result<Vec<usize>> {
            let part = part.trim();
            if part.is_empty() {
                return Ok(Vec::new());
            }
            part.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::MalformedVector(format!("`{x}`: {e}")))
                })
                .collect()
        };
        let crx = parse(crx)?;
        let rot = parse(rot)?;
        let k = rot.len();
        if crx.len() != 2 * (k / 2) {
            return Err(Error::MalformedVector(format!(
                "controlled-Rx section has {} entries, {k} qubits need {}",
                crx.len(),
                2 * (k / 2)
            )));
        }
        let mut entries = crx;
        entries.extend(rot);
        EncodingVector::new(k, entries)
    }
}

/// Canonical encoding vector of `block`.
pub fn encode_block(block: &GateBlock) -> EncodingVector {
    let k = block.k;
    let mut entries = vec![0; encoding_len(k)];
    for (i, &(c, t)) in block.crx.iter().enumerate() {
        entries[2 * i] = c;
        entries[2 * i + 1] = t;
    }
    let offset = 2 * (k / 2);
    for q in 1..=k {
        if block.rotations & bit(q) != 0 {
            entries[offset + q - 1] = q;
        }
    }
    EncodingVector { entries, k }
}

/// Inverse of [`encode_block`]. Pairs may appear in any order; the result is
/// canonical, so re-encoding yields the canonical form of `entries`.
pub fn decode_vector(entries: &[usize], k: usize, connectivity: Connectivity) -> Result<GateBlock> {
    check_qubit_count(k)?;
    if entries.len() != encoding_len(k) {
        return Err(Error::MalformedVector(format!(
            "length {} but {k} qubits need {}",
            entries.len(),
            encoding_len(k)
        )));
    }
    let pairs = k / 2;
    let mut used = 0u32;
    let claim = |q: usize, used: &mut u32| -> Result<()> {
        if q == 0 || q > k {
            return Err(Error::MalformedVector(format!("qubit {q} outside 1..={k}")));
        }
        if *used & bit(q) != 0 {
            return Err(Error::MalformedVector(format!("qubit {q} appears twice")));
        }
        *used |= bit(q);
        Ok(())
    };
    let mut crx = Vec::new();
    for p in 0..pairs {
        let (c, t) = (entries[2 * p], entries[2 * p + 1]);
        match (c, t) {
            (0, 0) => continue,
            (0, _) | (_, 0) => {
                return Err(Error::MalformedVector(format!(
                    "pair {} = ({c},{t}) is half specified",
                    p + 1
                )))
            }
            _ => {}
        }
        claim(c, &mut used)?;
        claim(t, &mut used)?;
        if connectivity == Connectivity::Adjacent && c.abs_diff(t) != 1 {
            return Err(Error::MalformedVector(format!(
                "controlled-Rx ({c},{t}) acts on non-adjacent qubits"
            )));
        }
        crx.push((c, t));
    }
    let mut rotations = 0u32;
    for (i, &r) in entries[2 * pairs..].iter().enumerate() {
        let q = i + 1;
        if r == 0 {
            continue;
        }
        if r != q {
            return Err(Error::MalformedVector(format!(
                "rotation entry {r} at position {q}"
            )));
        }
        claim(q, &mut used)?;
        rotations |= bit(q);
    }
    crx.sort_by_key(|&(c, t)| c.min(t));
    Ok(GateBlock { k, crx, rotations })
}

/// Restriction regime used to build a library.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LibraryMode {
    /// Adjacent controlled-`Rx` in either orientation, rotation or identity elsewhere.
    Full,
    /// At most `c` adjacent controlled-`Rx` (control on the lower qubit); all other
    /// qubits carry a rotation.
    Cutoff(usize),
    /// A rotation layer and the two brick-wall entangler layers.
    Minimal,
    /// Controlled-`Rx` on any qubit pair in either orientation.
    NonAdjacent,
}

impl LibraryMode {
    pub fn connectivity(&self) -> Connectivity {
        match self {
            LibraryMode::NonAdjacent => Connectivity::AllToAll,
            _ => Connectivity::Adjacent,
        }
    }
}

impl fmt::Display for LibraryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LibraryMode::Full => f.write_str("full"),
            LibraryMode::Cutoff(c) => write!(f, "cutoff:{c}"),
            LibraryMode::Minimal => f.write_str("minimal"),
            LibraryMode::NonAdjacent => f.write_str("nonadjacent"),
        }
    }
}

impl FromStr for LibraryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "full" => Ok(LibraryMode::Full),
            "minimal" => Ok(LibraryMode::Minimal),
            "nonadjacent" | "non-adjacent" => Ok(LibraryMode::NonAdjacent),
            _ => {
                let c = s
                    .strip_prefix("cutoff:")
                    .or_else(|| s.strip_prefix("cutoff="))
                    .ok_or_else(|| Error::InvalidSpec(format!("unknown library mode `{s}`")))?;
                c.parse()
                    .map(LibraryMode::Cutoff)
                    .map_err(|e| Error::InvalidSpec(format!("cutoff `{c}`: {e}")))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LibrarySpec {
    pub k: usize,
    pub mode: LibraryMode,
    /// Keep the all-identity block when it belongs to the mode's family
    /// (only `Full` and `NonAdjacent` contain it).
    pub include_empty_block: bool,
}

impl LibrarySpec {
    pub fn new(k: usize, mode: LibraryMode) -> Self {
        LibrarySpec {
            k,
            mode,
            include_empty_block: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_qubit_count(self.k)?;
        match self.mode {
            LibraryMode::Cutoff(c) if c > self.k / 2 => Err(Error::InvalidSpec(format!(
                "cutoff {c} exceeds ⌊k/2⌋ = {}",
                self.k / 2
            ))),
            LibraryMode::Minimal if self.k < 3 => Err(Error::InvalidSpec(
                "minimal library needs at least 3 qubits".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Blocks of one spec, indexed in ascending lexicographic order of their encodings.
#[derive(Clone, Debug)]
pub struct BlockLibrary {
    spec: LibrarySpec,
    blocks: Vec<GateBlock>,
    vectors: Vec<EncodingVector>,
    empty_index: Option<usize>,
}

impl BlockLibrary {
    fn from_blocks(spec: LibrarySpec, blocks: Vec<GateBlock>) -> Result<Self> {
        let mut pairs: Vec<(EncodingVector, GateBlock)> =
            blocks.into_iter().map(|b| (encode_block(&b), b)).collect();
        pairs.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidBlock(format!("duplicate block {}", w[0].0)));
        }
        let (vectors, blocks): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let empty_index = blocks.iter().position(GateBlock::is_empty);
        Ok(BlockLibrary {
            spec,
            blocks,
            vectors,
            empty_index,
        })
    }

    pub fn spec(&self) -> &LibrarySpec {
        &self.spec
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[GateBlock] {
        &self.blocks
    }

    pub fn block(&self, index: usize) -> Result<&GateBlock> {
        self.blocks.get(index).ok_or(Error::IndexOutOfRange {
            index,
            size: self.blocks.len(),
        })
    }

    pub fn vector(&self, index: usize) -> Result<&EncodingVector> {
        self.vectors.get(index).ok_or(Error::IndexOutOfRange {
            index,
            size: self.vectors.len(),
        })
    }

    pub fn vectors(&self) -> &[EncodingVector] {
        &self.vectors
    }

    pub fn index_of(&self, block: &GateBlock) -> Option<usize> {
        if block.k != self.spec.k {
            return None;
        }
        self.vectors.binary_search(&encode_block(block)).ok()
    }

    /// Index of the all-identity block, when the library holds it.
    pub fn empty_index(&self) -> Option<usize> {
        self.empty_index
    }

    pub fn all_rotations_index(&self) -> Option<usize> {
        self.index_of(&GateBlock::all_rotations(self.spec.k))
    }

    /// Line-oriented text export: a header line, then one encoding vector per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# mqne-library v1 k={} mode={} include_empty={} count={}\n",
            self.spec.k,
            self.spec.mode,
            self.spec.include_empty_block,
            self.len()
        );
        for v in &self.vectors {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: "library".into(),
            message,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let fields = header
            .strip_prefix("# mqne-library v1")
            .ok_or_else(|| bad(format!("unrecognized header `{header}`")))?;
        let mut k = None;
        let mut mode = None;
        let mut include_empty = None;
        let mut count = None;
        for field in fields.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("header field `{field}`")))?;
            match key {
                "k" => k = value.parse::<usize>().ok(),
                "mode" => mode = Some(value.parse::<LibraryMode>()?),
                "include_empty" => include_empty = value.parse::<bool>().ok(),
                "count" => count = value.parse::<usize>().ok(),
                _ => {}
            }
        }
        let spec = LibrarySpec {
            k: k.ok_or_else(|| bad("header lacks k".into()))?,
            mode: mode.ok_or_else(|| bad("header lacks mode".into()))?,
            include_empty_block: include_empty.unwrap_or(true),
        };
        spec.validate()?;
        let count = count.ok_or_else(|| bad("header lacks count".into()))?;
        let mut blocks = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let v: EncodingVector = line.parse().map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
            if v.k != spec.k {
                return Err(bad(format!("line {}: vector for {} qubits", i + 2, v.k)));
            }
            blocks.push(decode_vector(&v.entries, spec.k, spec.mode.connectivity())?);
        }
        if blocks.len() != count {
            return Err(bad(format!(
                "header says {count} blocks, file has {}",
                blocks.len()
            )));
        }
        BlockLibrary::from_blocks(spec, blocks)
    }
}

/// Enumerates every block allowed by `spec` with the default size cap.
pub fn enumerate_library(spec: &LibrarySpec) -> Result<BlockLibrary> {
    enumerate_library_with_limit(spec, DEFAULT_MAX_BLOCKS)
}

pub fn enumerate_library_with_limit(spec: &LibrarySpec, limit: u128) -> Result<BlockLibrary> {
    spec.validate()?;
    let count = count_closed_form(spec);
    if count > limit {
        return Err(Error::ResourceLimit { count, limit });
    }
    let k = spec.k;
    let mut blocks = Vec::with_capacity(count as usize);
    match spec.mode {
        LibraryMode::Full => {
            let mut gates = Vec::new();
            enumerate_adjacent(k, 1, &mut gates, &mut blocks);
        }
        LibraryMode::NonAdjacent => {
            let mut gates = Vec::new();
            enumerate_all_to_all(k, 0, &mut gates, &mut blocks);
        }
        LibraryMode::Cutoff(c) => {
            let mut gates = Vec::new();
            enumerate_cutoff(k, 1, c, &mut gates, &mut blocks);
        }
        LibraryMode::Minimal => blocks.extend(minimal_blocks(k)),
    }
    if !spec.include_empty_block {
        blocks.retain(|b| !b.is_empty());
    }
    BlockLibrary::from_blocks(*spec, blocks)
}

fn push_block(k: usize, gates: &[Gate], out: &mut Vec<GateBlock>) {
    out.push(GateBlock::new(k, gates.iter().copied()).expect("enumerated gates form a depth-1 layer"));
}

fn enumerate_adjacent(k: usize, q: usize, gates: &mut Vec<Gate>, out: &mut Vec<GateBlock>) {
    if q > k {
        push_block(k, gates, out);
        return;
    }
    enumerate_adjacent(k, q + 1, gates, out);
    gates.push(Gate::Rot { qubit: q });
    enumerate_adjacent(k, q + 1, gates, out);
    gates.pop();
    if q < k {
        for (control, target) in [(q, q + 1), (q + 1, q)] {
            gates.push(Gate::Crx { control, target });
            enumerate_adjacent(k, q + 2, gates, out);
            gates.pop();
        }
    }
}

fn enumerate_all_to_all(k: usize, used: u32, gates: &mut Vec<Gate>, out: &mut Vec<GateBlock>) {
    let Some(q) = (1..=k).find(|&q| used & bit(q) == 0) else {
        push_block(k, gates, out);
        return;
    };
    let used = used | bit(q);
    enumerate_all_to_all(k, used, gates, out);
    gates.push(Gate::Rot { qubit: q });
    enumerate_all_to_all(k, used, gates, out);
    gates.pop();
    for p in (q + 1..=k).filter(|&p| used & bit(p) == 0) {
        for (control, target) in [(q, p), (p, q)] {
            gates.push(Gate::Crx { control, target });
            enumerate_all_to_all(k, used | bit(p), gates, out);
            gates.pop();
        }
    }
}

fn enumerate_cutoff(k: usize, q: usize, left: usize, gates: &mut Vec<Gate>, out: &mut Vec<GateBlock>) {
    if q > k {
        push_block(k, gates, out);
        return;
    }
    gates.push(Gate::Rot { qubit: q });
    enumerate_cutoff(k, q + 1, left, gates, out);
    gates.pop();
    if q < k && left > 0 {
        gates.push(Gate::Crx {
            control: q,
            target: q + 1,
        });
        enumerate_cutoff(k, q + 2, left - 1, gates, out);
        gates.pop();
    }
}

fn minimal_blocks(k: usize) -> Vec<GateBlock> {
    let brick = |first: usize| {
        let pairs = (first..)
            .step_by(2)
            .take_while(|&c| c < k)
            .map(|c| Gate::Crx {
                control: c,
                target: c + 1,
            });
        GateBlock::new(k, pairs).expect("brick layer is depth 1")
    };
    vec![GateBlock::all_rotations(k), brick(1), brick(2)]
}

fn binomial(n: u128, r: u128) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Falling factorial `n · (n-1) ··· (n-r+1)`.
fn falling(n: u128, r: u128) -> u128 {
    (0..r).fold(1u128, |acc, i| acc * (n - i))
}

/// Exact number of blocks a spec admits (including the empty block when the
/// family contains it).
///
/// `Full` equals `((1+√3)^(k+1) - (1-√3)^(k+1)) / (2√3)`; it is evaluated here as
/// `Σ_i 2^(k-2i) · C(k-i, i) · 2^i`.
pub fn count_closed_form(spec: &LibrarySpec) -> u128 {
    let k = spec.k as u128;
    let pairs = k / 2;
    let total = match spec.mode {
        LibraryMode::Full => (0..=pairs)
            .map(|i| (1u128 << (k - 2 * i)) * binomial(k - i, i) * (1u128 << i))
            .sum(),
        LibraryMode::Cutoff(c) => (0..=(c as u128).min(pairs))
            .map(|i| binomial(k - i, i))
            .sum(),
        LibraryMode::Minimal => 3,
        LibraryMode::NonAdjacent => (0..=pairs)
            .map(|i| (1u128 << (k - 2 * i)) * falling(k, 2 * i) / falling(i, i))
            .sum(),
    };
    let has_empty = matches!(spec.mode, LibraryMode::Full | LibraryMode::NonAdjacent);
    if has_empty && !spec.include_empty_block {
        total - 1
    } else {
        total
    }
}

/// Builds the `(k+1)`-qubit `Full` library from the `(k-1)`- and `k`-qubit ones:
/// every `k`-qubit block with a rotation or identity on the new qubit, plus every
/// `(k-1)`-qubit block with a controlled-`Rx` on the last two qubits.
pub fn extend_library(lib_km1: &BlockLibrary, lib_k: &BlockLibrary) -> Result<BlockLibrary> {
    let (a, b) = (lib_km1.spec, lib_k.spec);
    if a.mode != LibraryMode::Full || b.mode != LibraryMode::Full {
        return Err(Error::SpecMismatch("both libraries must be Full".into()));
    }
    if a.k + 1 != b.k {
        return Err(Error::SpecMismatch(format!(
            "qubit counts {} and {} are not consecutive",
            a.k, b.k
        )));
    }
    if !a.include_empty_block || !b.include_empty_block {
        return Err(Error::SpecMismatch(
            "both libraries must include the empty block".into(),
        ));
    }
    let k = b.k;
    let new = k + 1;
    let mut blocks = Vec::with_capacity(2 * lib_k.len() + 2 * lib_km1.len());
    for block in lib_k.blocks() {
        let mut with_identity = block.clone();
        with_identity.k = new;
        let mut with_rot = with_identity.clone();
        with_rot.rotations |= bit(new);
        blocks.push(with_identity);
        blocks.push(with_rot);
    }
    for block in lib_km1.blocks() {
        for pair in [(k, new), (new, k)] {
            let mut ext = block.clone();
            ext.k = new;
            ext.crx.push(pair);
            blocks.push(ext);
        }
    }
    BlockLibrary::from_blocks(LibrarySpec::new(new, LibraryMode::Full), blocks)
}
