use std::collections::{BTreeSet, HashSet};

use mqne_core::gateblock::{
    count_closed_form, decode_vector, encode_block, enumerate_library, extend_library, Connectivity, Gate,
    GateBlock, LibraryMode, LibrarySpec,
};
use proptest::prelude::*;

fn full(k: usize) -> LibrarySpec {
    LibrarySpec::new(k, LibraryMode::Full)
}

/// Every non-overlapping subset of the adjacent gate set, found by scanning all subsets.
fn brute_force_blocks(k: usize, all_pairs: bool) -> BTreeSet<Vec<Gate>> {
    let mut gates: Vec<Gate> = (1..=k).map(|q| Gate::Rot { qubit: q }).collect();
    for c in 1..=k {
        for t in 1..=k {
            if c != t && (all_pairs || c.abs_diff(t) == 1) {
                gates.push(Gate::Crx { control: c, target: t });
            }
        }
    }
    let mut out = BTreeSet::new();
    for mask in 0u64..(1 << gates.len()) {
        let mut used = 0u32;
        let mut ok = true;
        let mut chosen = Vec::new();
        for (i, g) in gates.iter().enumerate() {
            if mask >> i & 1 == 1 {
                if used & g.support() != 0 {
                    ok = false;
                    break;
                }
                used |= g.support();
                chosen.push(*g);
            }
        }
        if ok {
            chosen.sort();
            out.insert(chosen);
        }
    }
    out
}

fn gate_set(b: &GateBlock) -> Vec<Gate> {
    let mut g: Vec<Gate> = b.gates().collect();
    g.sort();
    g
}

#[test]
fn full_library_matches_exhaustive_search() {
    for k in 1..=7 {
        let lib = enumerate_library(&full(k)).unwrap();
        let got: BTreeSet<Vec<Gate>> = lib.blocks().iter().map(gate_set).collect();
        assert_eq!(got.len(), lib.len(), "duplicate blocks at k={k}");
        assert_eq!(got, brute_force_blocks(k, false), "k={k}");
    }
}

#[test]
fn nonadjacent_library_matches_exhaustive_search() {
    for k in 1..=4 {
        let lib = enumerate_library(&LibrarySpec::new(k, LibraryMode::NonAdjacent)).unwrap();
        let got: BTreeSet<Vec<Gate>> = lib.blocks().iter().map(gate_set).collect();
        assert_eq!(got, brute_force_blocks(k, true), "k={k}");
        assert_eq!(lib.len() as u128, count_closed_form(lib.spec()));
    }
}

#[test]
fn counts_follow_recurrence() {
    let f: Vec<u128> = (0..=12).map(|k| if k == 0 { 1 } else { count_closed_form(&full(k)) }).collect();
    assert_eq!(f[1], 2);
    assert_eq!(f[2], 6);
    for k in 2..12 {
        assert_eq!(f[k + 1], 2 * f[k] + 2 * f[k - 1]);
    }
    assert_eq!(f[7], 896);
    assert_eq!(f[9], 6688);
}

#[test]
fn cutoff_and_minimal_counts() {
    for k in 1..=9 {
        for c in 0..=k / 2 {
            let spec = LibrarySpec::new(k, LibraryMode::Cutoff(c));
            let lib = enumerate_library(&spec).unwrap();
            assert_eq!(lib.len() as u128, count_closed_form(&spec));
            // Rot on every qubit outside the pairs, control on the lower qubit.
            for b in lib.blocks() {
                assert!(b.crx_count() <= c);
                assert_eq!(b.rot_count() + 2 * b.crx_count(), k);
                assert!(b.crx_pairs().iter().all(|&(ctl, t)| t == ctl + 1));
            }
        }
    }
    for k in 3..=9 {
        assert_eq!(enumerate_library(&LibrarySpec::new(k, LibraryMode::Minimal)).unwrap().len(), 3);
    }
}

#[test]
fn excluding_empty_drops_one_block() {
    for k in 1..=8 {
        let mut spec = full(k);
        spec.include_empty_block = false;
        let lib = enumerate_library(&spec).unwrap();
        assert_eq!(lib.len() as u128, count_closed_form(&full(k)) - 1);
        assert!(lib.empty_index().is_none());
    }
}

#[test]
fn enumeration_is_deterministic_and_sorted() {
    let a = enumerate_library(&full(8)).unwrap();
    let b = enumerate_library(&full(8)).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert!(a.vectors().windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn recursive_extension_agrees() {
    for k in 2..=8 {
        let ext = extend_library(
            &enumerate_library(&full(k - 1)).unwrap(),
            &enumerate_library(&full(k)).unwrap(),
        )
        .unwrap();
        assert_eq!(ext.to_text(), enumerate_library(&full(k + 1)).unwrap().to_text());
    }
}

#[test]
fn encodings_are_injective() {
    for k in 1..=9 {
        let lib = enumerate_library(&full(k)).unwrap();
        let set: HashSet<_> = lib.vectors().iter().collect();
        assert_eq!(set.len(), lib.len());
    }
}

proptest! {
    #[test]
    fn encode_decode_round_trip(k in 1usize..=9, pick in any::<prop::sample::Index>()) {
        let lib = enumerate_library(&full(k)).unwrap();
        let block = &lib.blocks()[pick.index(lib.len())];
        let v = encode_block(block);
        prop_assert_eq!(v.entries().len(), k + 2 * (k / 2));
        let back = decode_vector(v.entries(), k, Connectivity::Adjacent).unwrap();
        prop_assert_eq!(&back, block);
        let parsed: mqne_core::gateblock::EncodingVector = v.to_string().parse().unwrap();
        prop_assert_eq!(parsed, v);
    }

    #[test]
    fn library_text_round_trip(k in 1usize..=6) {
        let lib = enumerate_library(&full(k)).unwrap();
        let back = mqne_core::gateblock::BlockLibrary::from_text(&lib.to_text()).unwrap();
        prop_assert_eq!(back.blocks(), lib.blocks());
    }
}
