//! Core data model: system configuration, file library, subfile plans,
//! cache contents, delivery signals, and their materialization to symbols.
//!
//! Sizes stay exact fractions of the file length F until a concrete F is
//! chosen; `min_f` picks the least F that makes every subfile an integer
//! number of symbols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fieldcode::{self, Field, ParityCode, Symbol};
use crate::rational::{lcm_denominators, Rational};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("cache sizes must be sorted ascending within [0, 1]")]
    BadCacheVector,
    #[error("need at least two users")]
    TooFewUsers,
    #[error("need at least one file")]
    NoFiles,
    #[error("XOR operand size mismatch in segment of `{transmission}`")]
    OperandSizeMismatch { transmission: String },
    #[error("unknown subfile tag `{0}`")]
    UnknownTag(String),
}

/// System configuration: K users with sorted normalized cache sizes,
/// N files, and the field exponent used for coded placement.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub k: usize,
    pub n: usize,
    pub m: Vec<Rational>,
    pub r: u32,
}

impl SystemConfig {
    pub fn new(n: usize, m: Vec<Rational>, r: u32) -> Result<SystemConfig, ModelError> {
        let cfg = SystemConfig {
            k: m.len(),
            n,
            m,
            r,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k < 2 {
            return Err(ModelError::TooFewUsers);
        }
        if self.n < 1 {
            return Err(ModelError::NoFiles);
        }
        let mut prev = Rational::zero();
        for mk in &self.m {
            if mk < &prev || mk > &Rational::one() || mk.is_negative() {
                return Err(ModelError::BadCacheVector);
            }
            prev = mk.clone();
        }
        Ok(())
    }
}

/// N files of F pseudo-random field symbols, deterministic in the seed.
#[derive(Debug, Clone)]
pub struct Library {
    pub files: Vec<Vec<Symbol>>,
    pub f: u64,
}

pub fn make_library(cfg: &SystemConfig, f: u64, seed: u64) -> Library {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: u16 = ((1u32 << cfg.r) - 1) as u16;
    let files = (0..cfg.n)
        .map(|_| (0..f).map(|_| rng.gen::<u16>() & mask).collect())
        .collect();
    Library { files, f }
}

/// Reference to one subfile: file index plus the scheme's tag for the piece.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PieceRef {
    pub file: usize,
    pub tag: String,
}

impl PieceRef {
    pub fn new(file: usize, tag: impl Into<String>) -> PieceRef {
        PieceRef {
            file,
            tag: tag.into(),
        }
    }
}

impl fmt::Display for PieceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W[{}].{}", self.file, self.tag)
    }
}

/// Per-file partition into labeled subfiles. The tag order is the canonical
/// byte layout inside each file.
#[derive(Debug, Clone, Default)]
pub struct SubfilePlan {
    pub order: Vec<String>,
    pub size: BTreeMap<String, Rational>,
}

impl SubfilePlan {
    pub fn push(&mut self, tag: impl Into<String>, size: Rational) {
        let tag = tag.into();
        assert!(
            !self.size.contains_key(&tag),
            "duplicate subfile tag `{tag}`"
        );
        self.order.push(tag.clone());
        self.size.insert(tag, size);
    }

    pub fn size_of(&self, tag: &str) -> Result<&Rational, ModelError> {
        self.size
            .get(tag)
            .ok_or_else(|| ModelError::UnknownTag(tag.to_string()))
    }

    /// Sum over all tags; exactly 1 for a valid per-file partition.
    pub fn total(&self) -> Rational {
        self.size.values().cloned().sum()
    }

    /// Least F such that every subfile is an integer number of symbols.
    pub fn min_f(&self) -> u64 {
        lcm_denominators(self.size.values())
    }

    /// Symbol offsets of each tag inside a file of length f.
    pub fn layout(&self, f: u64) -> Layout {
        let mut offsets = BTreeMap::new();
        let mut cursor = 0u64;
        for tag in &self.order {
            let len = self.size[tag].scale_int(f);
            offsets.insert(tag.clone(), (cursor, len));
            cursor += len;
        }
        Layout { offsets, f }
    }
}

/// Resolved byte layout of a plan at a concrete F.
#[derive(Debug, Clone)]
pub struct Layout {
    offsets: BTreeMap<String, (u64, u64)>,
    pub f: u64,
}

impl Layout {
    pub fn range(&self, tag: &str) -> Result<(u64, u64), ModelError> {
        self.offsets
            .get(tag)
            .copied()
            .ok_or_else(|| ModelError::UnknownTag(tag.to_string()))
    }

    pub fn piece<'a>(&self, lib: &'a Library, piece: &PieceRef) -> Result<&'a [Symbol], ModelError> {
        let (off, len) = self.range(&piece.tag)?;
        Ok(&lib.files[piece.file][off as usize..(off + len) as usize])
    }

    pub fn len_of(&self, tag: &str) -> u64 {
        self.offsets.get(tag).map_or(0, |&(_, len)| len)
    }
}

/// One coded family cached by a user: the same tag across all N files,
/// stored as the N-j parity blocks of the family's MDS code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityFamilySpec {
    pub tag: String,
    pub deficiency: usize,
}

/// What one user stores: uncoded tags (all files) plus coded families.
#[derive(Debug, Clone, Default)]
pub struct CacheSpec {
    pub uncoded: BTreeSet<String>,
    pub families: Vec<ParityFamilySpec>,
}

impl CacheSpec {
    /// Total cached size as a fraction of F (summed over all N files).
    pub fn size(&self, plan: &SubfilePlan, n: usize) -> Result<Rational, ModelError> {
        let mut total = Rational::zero();
        for tag in &self.uncoded {
            total += &(Rational::int(n as i64) * plan.size_of(tag)?.clone());
        }
        for fam in &self.families {
            let per_block = plan.size_of(&fam.tag)?.clone();
            total += &(Rational::int((n - fam.deficiency) as i64) * per_block);
        }
        Ok(total)
    }
}

/// A delivery signal: an ordered list of aligned segments, each either a
/// raw subfile or an XOR of equal-size subfiles.
#[derive(Debug, Clone)]
pub enum Segment {
    Raw(PieceRef),
    Xor(Vec<PieceRef>),
}

#[derive(Debug, Clone)]
pub struct Transmission {
    pub label: String,
    pub targets: BTreeSet<usize>,
    pub segments: Vec<Segment>,
    /// Set on signals appended by the repeated-demand completion pass.
    pub completion: bool,
}

impl Transmission {
    pub fn new(label: impl Into<String>, targets: &[usize]) -> Transmission {
        Transmission {
            label: label.into(),
            targets: targets.iter().copied().collect(),
            segments: Vec::new(),
            completion: false,
        }
    }

    /// Append a raw segment unless the piece has zero size.
    pub fn raw(&mut self, plan: &SubfilePlan, piece: PieceRef) {
        if !plan.size[&piece.tag].is_zero() {
            self.segments.push(Segment::Raw(piece));
        }
    }

    /// Append an XOR segment; all operands must have equal size.
    pub fn xor(&mut self, plan: &SubfilePlan, pieces: Vec<PieceRef>) -> Result<(), ModelError> {
        let sizes: Vec<&Rational> = pieces
            .iter()
            .map(|p| plan.size_of(&p.tag))
            .collect::<Result<_, _>>()?;
        if sizes.windows(2).any(|w| w[0] != w[1]) {
            return Err(ModelError::OperandSizeMismatch {
                transmission: self.label.clone(),
            });
        }
        if !sizes.is_empty() && !sizes[0].is_zero() {
            self.segments.push(Segment::Xor(pieces));
        }
        Ok(())
    }

    /// Size as a fraction of F.
    pub fn size(&self, plan: &SubfilePlan) -> Rational {
        self.segments
            .iter()
            .map(|seg| match seg {
                Segment::Raw(p) => plan.size[&p.tag].clone(),
                Segment::Xor(ps) => plan.size[&ps[0].tag].clone(),
            })
            .sum()
    }

    pub fn symbol_len(&self, layout: &Layout) -> u64 {
        self.segments
            .iter()
            .map(|seg| match seg {
                Segment::Raw(p) => layout.len_of(&p.tag),
                Segment::Xor(ps) => layout.len_of(&ps[0].tag),
            })
            .sum()
    }
}

/// Materialize a transmission to symbols: concatenate segments, XORing the
/// operands of each XOR segment symbol-wise.
pub fn materialize(
    tx: &Transmission,
    lib: &Library,
    layout: &Layout,
) -> Result<Vec<Symbol>, ModelError> {
    let mut out = Vec::with_capacity(tx.symbol_len(layout) as usize);
    for seg in &tx.segments {
        match seg {
            Segment::Raw(p) => out.extend_from_slice(layout.piece(lib, p)?),
            Segment::Xor(ps) => {
                let first = layout.piece(lib, &ps[0])?;
                let start = out.len();
                out.extend_from_slice(first);
                for p in &ps[1..] {
                    let block = layout.piece(lib, p)?;
                    if block.len() != first.len() {
                        return Err(ModelError::OperandSizeMismatch {
                            transmission: tx.label.clone(),
                        });
                    }
                    for (o, &x) in out[start..].iter_mut().zip(block.iter()) {
                        *o ^= x;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Full placement description: the subfile plan, per-user cache contents,
/// and whether each user's budget is met with equality by construction.
#[derive(Debug, Clone)]
pub struct PlacementSpec {
    pub plan: SubfilePlan,
    pub caches: Vec<CacheSpec>,
    pub budget_exact: Vec<bool>,
    pub regime: String,
    pub n_files: usize,
}

/// Cache contents materialized at a concrete F.
#[derive(Debug, Clone)]
pub struct MaterializedCache {
    /// Parity blocks per coded family tag: (deficiency, N-j blocks).
    pub parities: BTreeMap<String, (usize, Vec<Vec<Symbol>>)>,
}

pub fn materialize_cache(
    spec: &CacheSpec,
    plan: &SubfilePlan,
    lib: &Library,
    layout: &Layout,
    field: &Field,
) -> Result<MaterializedCache, ModelError> {
    let n = lib.files.len();
    let mut parities = BTreeMap::new();
    for fam in &spec.families {
        if plan.size[&fam.tag].is_zero() {
            continue;
        }
        let blocks: Vec<Vec<Symbol>> = (0..n)
            .map(|file| layout.piece(lib, &PieceRef::new(file, fam.tag.clone())).map(<[Symbol]>::to_vec))
            .collect::<Result<_, _>>()?;
        let code = build_family_code(n, fam.deficiency, field);
        let parity_blocks = fieldcode::sigma(field, &code, &blocks).expect("valid family");
        parities.insert(fam.tag.clone(), (fam.deficiency, parity_blocks));
    }
    Ok(MaterializedCache { parities })
}

/// Parity code shared by a family of N blocks with the given deficiency.
pub fn build_family_code(n: usize, deficiency: usize, field: &Field) -> ParityCode {
    fieldcode::build_parity_code(n, deficiency, field).expect("field large enough for family")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn plan_from(sizes: &[(&str, Rational)]) -> SubfilePlan {
        let mut plan = SubfilePlan::default();
        for (tag, size) in sizes {
            plan.push(*tag, size.clone());
        }
        plan
    }

    #[test]
    fn min_f_examples() {
        let plan = plan_from(&[
            ("a", rat(0, 1)),
            ("b", rat(3, 10)),
            ("c", rat(3, 10)),
            ("d", rat(0, 1)),
            ("e", rat(2, 5)),
        ]);
        assert_eq!(plan.min_f(), 10);

        let plan = plan_from(&[("a", rat(1, 3)), ("b", rat(2, 3))]);
        assert_eq!(plan.min_f(), 3);

        let plan = plan_from(&[("a", Rational::int(1))]);
        assert_eq!(plan.min_f(), 1);
    }

    #[test]
    fn library_deterministic_in_seed() {
        let cfg = SystemConfig::new(4, vec![rat(1, 10), rat(1, 5), rat(3, 10)], 8).unwrap();
        let a = make_library(&cfg, 10, 7);
        let b = make_library(&cfg, 10, 7);
        let c = make_library(&cfg, 10, 8);
        assert_eq!(a.files, b.files);
        assert_eq!(a.files.len(), 4);
        assert!(a.files.iter().all(|f| f.len() == 10));
        assert_ne!(a.files, c.files);
        assert!(a.files.iter().flatten().all(|&s| s < 256));
    }

    #[test]
    fn xor_self_cancels() {
        let cfg = SystemConfig::new(2, vec![rat(1, 2), rat(1, 2)], 8).unwrap();
        let plan = plan_from(&[("p", rat(1, 2)), ("q", rat(1, 2))]);
        let lib = make_library(&cfg, 4, 3);
        let layout = plan.layout(4);
        let mut tx = Transmission::new("x", &[1]);
        tx.xor(&plan, vec![PieceRef::new(0, "p"), PieceRef::new(0, "p")])
            .unwrap();
        let block = materialize(&tx, &lib, &layout).unwrap();
        assert_eq!(block, vec![0, 0]);
    }

    #[test]
    fn raw_piece_length() {
        let cfg = SystemConfig::new(2, vec![rat(0, 1), rat(0, 1)], 8).unwrap();
        let plan = plan_from(&[("p", rat(2, 5)), ("q", rat(3, 5))]);
        let lib = make_library(&cfg, 10, 1);
        let layout = plan.layout(10);
        let mut tx = Transmission::new("x", &[1]);
        tx.raw(&plan, PieceRef::new(1, "q"));
        let block = materialize(&tx, &lib, &layout).unwrap();
        assert_eq!(block.len(), 6);
        assert_eq!(tx.size(&plan), rat(3, 5));
        assert_eq!(block, lib.files[1][4..10].to_vec());
    }

    #[test]
    fn xor_rejects_mismatched_sizes() {
        let plan = plan_from(&[("p", rat(1, 4)), ("q", rat(1, 2))]);
        let mut tx = Transmission::new("x", &[1, 2]);
        let err = tx
            .xor(&plan, vec![PieceRef::new(0, "p"), PieceRef::new(1, "q")])
            .unwrap_err();
        assert!(matches!(err, ModelError::OperandSizeMismatch { .. }));
    }

    #[test]
    fn cache_size_counts_parities() {
        let plan = plan_from(&[("a", rat(1, 4)), ("b", rat(1, 8))]);
        let spec = CacheSpec {
            uncoded: BTreeSet::from(["a".to_string()]),
            families: vec![ParityFamilySpec {
                tag: "b".into(),
                deficiency: 1,
            }],
        };
        // N=4: 4*(1/4) + 3*(1/8)
        assert_eq!(spec.size(&plan, 4).unwrap(), rat(11, 8));
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::new(4, vec![rat(1, 2), rat(1, 4), rat(3, 4)], 8).is_err());
        assert!(SystemConfig::new(4, vec![rat(1, 2)], 8).is_err());
        assert!(SystemConfig::new(0, vec![rat(1, 4), rat(1, 2)], 8).is_err());
        assert!(SystemConfig::new(4, vec![rat(1, 4), rat(5, 4)], 8).is_err());
    }
}
