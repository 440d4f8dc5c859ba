//! User-side decoding and the server-side completion pass.
//!
//! Both run the same fixpoint: a user knows its cached uncoded pieces; an
//! XOR segment with exactly one unknown operand reveals it; a cached parity
//! family unlocks once the user knows as many distinct members as the
//! family's deficiency. The server runs the label-only variant to detect
//! demand vectors (repeated entries) that leave a family short of seeds,
//! and appends the fewest raw unicasts that restore decodability.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::fieldcode::{self, Field, Symbol};
use crate::model::{
    build_family_code, Layout, Library, MaterializedCache, PieceRef, PlacementSpec, Segment,
    SubfilePlan, Transmission,
};

#[derive(Debug, Error)]
#[error("user {user} cannot reconstruct file {file}: missing {missing:?}")]
pub struct DecodeFailure {
    pub user: usize,
    pub file: usize,
    pub missing: Vec<String>,
}

fn piece_is_empty(plan: &SubfilePlan, piece: &PieceRef) -> bool {
    plan.size[&piece.tag].is_zero()
}

/// Label-only knowledge propagation for one user. Returns the set of
/// (file, tag) pieces the user can reconstruct from its cache plus the
/// broadcast signals.
fn label_fixpoint(
    user: usize,
    spec: &PlacementSpec,
    txs: &[Transmission],
    n: usize,
) -> BTreeSet<(usize, String)> {
    let plan = &spec.plan;
    let cache = &spec.caches[user];
    let mut known: BTreeSet<(usize, String)> = BTreeSet::new();
    for tag in &cache.uncoded {
        for file in 0..n {
            known.insert((file, tag.clone()));
        }
    }
    let mut unlocked: BTreeSet<String> = BTreeSet::new();
    loop {
        let mut progress = false;
        for tx in txs {
            for seg in &tx.segments {
                match seg {
                    Segment::Raw(p) => {
                        if known.insert((p.file, p.tag.clone())) {
                            progress = true;
                        }
                    }
                    Segment::Xor(ps) => {
                        let unknown: Vec<&PieceRef> = ps
                            .iter()
                            .filter(|p| {
                                !piece_is_empty(plan, p)
                                    && !known.contains(&(p.file, p.tag.clone()))
                            })
                            .collect();
                        if unknown.len() == 1 {
                            let p = unknown[0];
                            known.insert((p.file, p.tag.clone()));
                            progress = true;
                        }
                    }
                }
            }
        }
        for fam in &cache.families {
            if unlocked.contains(&fam.tag) || plan.size[&fam.tag].is_zero() {
                continue;
            }
            let have = (0..n)
                .filter(|&f| known.contains(&(f, fam.tag.clone())))
                .count();
            if have >= fam.deficiency {
                unlocked.insert(fam.tag.clone());
                for file in 0..n {
                    known.insert((file, fam.tag.clone()));
                }
                progress = true;
            }
        }
        if !progress {
            return known;
        }
    }
}

fn demand_complete(
    user: usize,
    spec: &PlacementSpec,
    known: &BTreeSet<(usize, String)>,
    d: &[usize],
) -> bool {
    spec.plan
        .order
        .iter()
        .filter(|tag| !spec.plan.size[*tag].is_zero())
        .all(|tag| known.contains(&(d[user], tag.clone())))
}

/// Drop raw pieces already carried raw by an earlier signal, then append
/// the fewest raw unicasts needed so every user's demand decodes. Returns
/// the number of appended pieces.
pub fn completion_pass(spec: &PlacementSpec, txs: &mut Vec<Transmission>, d: &[usize]) -> usize {
    let n_files = spec.n_files;
    let mut seen_raw: BTreeSet<(usize, String)> = BTreeSet::new();
    for tx in txs.iter_mut() {
        tx.segments.retain(|seg| match seg {
            Segment::Raw(p) => seen_raw.insert((p.file, p.tag.clone())),
            Segment::Xor(_) => true,
        });
    }

    let users = spec.caches.len();
    let mut appended = 0usize;
    // Each round can unlock at most one family per user; bound the loop.
    let max_rounds = users * (1 + spec.caches.iter().map(|c| c.families.len()).max().unwrap_or(0));
    for _ in 0..=max_rounds {
        let mut stuck = Vec::new();
        for user in 0..users {
            let known = label_fixpoint(user, spec, txs, n_files);
            if !demand_complete(user, spec, &known, d) {
                stuck.push((user, known));
            }
        }
        if stuck.is_empty() {
            return appended;
        }
        let mut advanced = false;
        for (user, known) in stuck {
            for fam in &spec.caches[user].families {
                if spec.plan.size[&fam.tag].is_zero()
                    || known.contains(&(d[user], fam.tag.clone()))
                {
                    continue;
                }
                let have: Vec<usize> = (0..n_files)
                    .filter(|&f| known.contains(&(f, fam.tag.clone())))
                    .collect();
                if have.len() >= fam.deficiency {
                    continue; // unlockable; fixpoint will handle next round
                }
                let shortage = fam.deficiency - have.len();
                let mut tx = Transmission::new(format!("X+[{}]", user + 1), &[user]);
                tx.completion = true;
                let mut added = 0;
                for file in 0..n_files {
                    if added == shortage {
                        break;
                    }
                    let key = (file, fam.tag.clone());
                    if known.contains(&key) || seen_raw.contains(&key) {
                        continue;
                    }
                    seen_raw.insert(key);
                    tx.raw(&spec.plan, PieceRef::new(file, fam.tag.clone()));
                    added += 1;
                }
                if added > 0 {
                    appended += added;
                    txs.push(tx);
                    advanced = true;
                }
            }
        }
        if !advanced {
            return appended; // verifier will report the decode failure
        }
    }
    appended
}

/// Byte-level decoding of one user's demanded file.
pub struct DecodeInput<'a> {
    pub spec: &'a PlacementSpec,
    pub lib: &'a Library,
    pub layout: &'a Layout,
    pub field: &'a Field,
    pub caches: &'a [MaterializedCache],
    pub txs: &'a [Transmission],
    pub tx_blocks: &'a [Vec<Symbol>],
}

pub fn decode_user(input: &DecodeInput, user: usize, d: &[usize]) -> Result<Vec<Symbol>, DecodeFailure> {
    let spec = input.spec;
    let plan = &spec.plan;
    let n = input.lib.files.len();
    let cache = &spec.caches[user];

    let mut known: BTreeMap<(usize, String), Vec<Symbol>> = BTreeMap::new();
    for tag in &cache.uncoded {
        for file in 0..n {
            let block = input
                .layout
                .piece(input.lib, &PieceRef::new(file, tag.clone()))
                .expect("cached piece resolves");
            known.insert((file, tag.clone()), block.to_vec());
        }
    }
    let mut unlocked: BTreeSet<String> = BTreeSet::new();

    loop {
        let mut progress = false;
        for (tx, block) in input.txs.iter().zip(input.tx_blocks) {
            let mut cursor = 0usize;
            for seg in &tx.segments {
                match seg {
                    Segment::Raw(p) => {
                        let len = input.layout.len_of(&p.tag) as usize;
                        if let std::collections::btree_map::Entry::Vacant(slot) =
                            known.entry((p.file, p.tag.clone()))
                        {
                            slot.insert(block[cursor..cursor + len].to_vec());
                            progress = true;
                        }
                        cursor += len;
                    }
                    Segment::Xor(ps) => {
                        let len = input.layout.len_of(&ps[0].tag) as usize;
                        let unknown: Vec<&PieceRef> = ps
                            .iter()
                            .filter(|p| !known.contains_key(&(p.file, p.tag.clone())))
                            .collect();
                        if unknown.len() == 1 {
                            let mut value = block[cursor..cursor + len].to_vec();
                            for p in ps {
                                if let Some(b) = known.get(&(p.file, p.tag.clone())) {
                                    for (v, &x) in value.iter_mut().zip(b.iter()) {
                                        *v ^= x;
                                    }
                                }
                            }
                            known.insert((unknown[0].file, unknown[0].tag.clone()), value);
                            progress = true;
                        }
                        cursor += len;
                    }
                }
            }
        }
        for fam in &cache.families {
            if unlocked.contains(&fam.tag) || plan.size[&fam.tag].is_zero() {
                continue;
            }
            let members: BTreeMap<usize, Vec<Symbol>> = (0..n)
                .filter_map(|f| known.get(&(f, fam.tag.clone())).map(|b| (f, b.clone())))
                .collect();
            if members.len() >= fam.deficiency {
                let (_, parity_blocks) = &input.caches[user].parities[&fam.tag];
                let code = build_family_code(n, fam.deficiency, input.field);
                let blocks = fieldcode::recover(input.field, &code, parity_blocks, &members)
                    .expect("family recovery from cached parities");
                for (file, b) in blocks.into_iter().enumerate() {
                    known.insert((file, fam.tag.clone()), b);
                }
                unlocked.insert(fam.tag.clone());
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }

    let want = d[user];
    let mut out = Vec::with_capacity(input.layout.f as usize);
    let mut missing = Vec::new();
    for tag in &plan.order {
        if plan.size[tag].is_zero() {
            continue;
        }
        match known.get(&(want, tag.clone())) {
            Some(block) => out.extend_from_slice(block),
            None => missing.push(tag.clone()),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(DecodeFailure {
            user,
            file: want,
            missing,
        })
    }
}
