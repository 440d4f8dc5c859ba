//! K-user small-memory scheme: per-level MDS-coded placement, unicast plus
//! pairwise-multicast delivery, and the uncoded reference scheme.
//!
//! Every file splits into a server-only residue `phi` and level pieces
//! `u{k}.l{i}` (user k, level i <= k). Level 1 is cached verbatim; level i
//! of user k is cached as the parity blocks of a deficiency-(i-1) family
//! across the N files. The unicast to user t seeds levels i > t at richer
//! users, so each family receives exactly the i-1 outside pieces it needs.

use thiserror::Error;

use crate::decode::{self, DecodeFailure, DecodeInput};
use crate::fieldcode::Symbol;
use crate::model::{
    CacheSpec, ModelError, ParityFamilySpec, PieceRef, PlacementSpec, SubfilePlan, SystemConfig,
    Transmission,
};
use crate::rational::Rational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegimeError {
    #[error("small-memory scheme needs N >= K+1 (got N={n}, K={k})")]
    BadDimensions { n: usize, k: usize },
    #[error("cache sizes outside the small-memory regime (condition value {value} > 1)")]
    OutOfRegime { value: Rational },
    #[error("uncoded baseline needs sum of cache sizes <= 1")]
    CachesTooLarge,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn deltas(m: &[Rational]) -> Vec<Rational> {
    let mut out = Vec::with_capacity(m.len());
    let mut prev = Rational::zero();
    for mi in m {
        out.push(mi - &prev);
        prev = mi.clone();
    }
    out
}

/// Value of the regime condition; the scheme applies while this is <= 1.
pub fn small_memory_margin(m: &[Rational], n: usize) -> Rational {
    let k = m.len();
    let d = deltas(m);
    let mut value: Rational = m.iter().cloned().sum();
    for i in 2..=k {
        let coeff = Rational::new(((i - 1) * (k - i + 1)) as i64, (n - i + 2 - 1) as i64);
        value += &(coeff * d[i - 1].clone());
    }
    value
}

pub fn check_small_memory(m: &[Rational], n: usize, k: usize) -> Result<bool, RegimeError> {
    if n < k + 1 {
        return Err(RegimeError::BadDimensions { n, k });
    }
    Ok(small_memory_margin(m, n) <= Rational::one())
}

/// Delivery load of the uncoded reference scheme: K - sum (K-i+1) m_i.
pub fn load_uncoded_k(m: &[Rational]) -> Rational {
    let k = m.len();
    let mut load = Rational::int(k as i64);
    for (i, mi) in m.iter().enumerate() {
        load -= Rational::int((k - i) as i64) * mi.clone();
    }
    load
}

/// Coded delivery load: the uncoded load minus the per-level savings.
pub fn load_coded_k(m: &[Rational], n: usize) -> Result<Rational, RegimeError> {
    let k = m.len();
    if !check_small_memory(m, n, k)? {
        return Err(RegimeError::OutOfRegime {
            value: small_memory_margin(m, n),
        });
    }
    let d = deltas(m);
    let mut load = load_uncoded_k(m);
    for i in 2..=k {
        let num = ((i - 1) * (k - i + 1) * (k - i + 2)) as i64;
        let den = (2 * (n - i + 1)) as i64;
        load -= Rational::new(num, den) * d[i - 1].clone();
    }
    Ok(load)
}

pub fn level_tag(user: usize, level: usize) -> String {
    format!("u{}.l{}", user + 1, level)
}

/// Level piece size: level 1 is m_1, level i >= 2 is N*(m_i - m_{i-1})/(N-i+1).
fn level_size(m: &[Rational], n: usize, level: usize) -> Rational {
    if level == 1 {
        m[0].clone()
    } else {
        let d = deltas(m);
        Rational::new(n as i64, (n - level + 1) as i64) * d[level - 1].clone()
    }
}

pub fn place_small_mem(cfg: &SystemConfig) -> Result<PlacementSpec, RegimeError> {
    let (k, n) = (cfg.k, cfg.n);
    if !check_small_memory(&cfg.m, n, k)? {
        return Err(RegimeError::OutOfRegime {
            value: small_memory_margin(&cfg.m, n),
        });
    }

    let mut plan = SubfilePlan::default();
    let mut phi = Rational::one();
    let mut level_sizes = vec![Rational::zero()];
    for i in 1..=k {
        level_sizes.push(level_size(&cfg.m, n, i));
    }
    for user in 0..k {
        for i in 1..=user + 1 {
            phi -= level_sizes[i].clone();
        }
    }
    assert!(!phi.is_negative(), "regime guarantees a server residue");
    plan.push("phi", phi);
    for user in 0..k {
        for i in 1..=user + 1 {
            plan.push(level_tag(user, i), level_sizes[i].clone());
        }
    }
    debug_assert_eq!(plan.total(), Rational::one());

    let caches = (0..k)
        .map(|user| {
            let mut spec = CacheSpec::default();
            spec.uncoded.insert(level_tag(user, 1));
            for i in 2..=user + 1 {
                spec.families.push(ParityFamilySpec {
                    tag: level_tag(user, i),
                    deficiency: i - 1,
                });
            }
            spec
        })
        .collect();

    Ok(PlacementSpec {
        plan,
        caches,
        budget_exact: vec![true; k],
        regime: "small-memory".into(),
        n_files: n,
    })
}

/// K unicasts plus K(K-1)/2 pairwise multicasts, then the completion pass
/// for demand vectors with repeated entries.
pub fn deliver_small_mem(
    spec: &PlacementSpec,
    d: &[usize],
) -> Result<Vec<Transmission>, ModelError> {
    let k = spec.caches.len();
    let plan = &spec.plan;
    let mut txs = Vec::new();
    for user in 0..k {
        let mut tx = Transmission::new(format!("X[{}]", user + 1), &[user]);
        for i in user + 2..=k {
            for j in i - 1..k {
                tx.raw(plan, PieceRef::new(d[user], level_tag(j, i)));
            }
        }
        tx.raw(plan, PieceRef::new(d[user], "phi"));
        txs.push(tx);
    }
    for a in 0..k {
        for b in a + 1..k {
            let mut tx = Transmission::new(format!("X[{},{}]", a + 1, b + 1), &[a, b]);
            for i in 1..=a + 1 {
                tx.xor(
                    plan,
                    vec![
                        PieceRef::new(d[b], level_tag(a, i)),
                        PieceRef::new(d[a], level_tag(b, i)),
                    ],
                )?;
            }
            txs.push(tx);
        }
    }
    decode::completion_pass(spec, &mut txs, d);
    Ok(txs)
}

/// Reconstruct W_{d_k} for one user from its cache and the broadcast.
pub fn decode_user(input: &DecodeInput, user: usize, d: &[usize]) -> Result<Vec<Symbol>, DecodeFailure> {
    decode::decode_user(input, user, d)
}

/// Uncoded reference placement: user k stores a private m_k slice of every
/// file. The slice is laid out in nested segments so pairwise signals can
/// XOR the common prefix and ship the remainder raw.
pub fn place_uncoded_baseline(cfg: &SystemConfig) -> Result<PlacementSpec, RegimeError> {
    let (k, n) = (cfg.k, cfg.n);
    let total: Rational = cfg.m.iter().cloned().sum();
    if total > Rational::one() {
        return Err(RegimeError::CachesTooLarge);
    }

    let d = deltas(&cfg.m);
    let mut plan = SubfilePlan::default();
    plan.push("phi", Rational::one() - total);
    for user in 0..k {
        // segment t of user's slice has size m_{t+1} - m_t
        for t in 0..=user {
            plan.push(seg_tag(user, t), d[t].clone());
        }
    }
    debug_assert_eq!(plan.total(), Rational::one());

    let caches = (0..k)
        .map(|user| {
            let mut spec = CacheSpec::default();
            for t in 0..=user {
                spec.uncoded.insert(seg_tag(user, t));
            }
            spec
        })
        .collect();

    Ok(PlacementSpec {
        plan,
        caches,
        budget_exact: vec![true; k],
        regime: "uncoded-baseline".into(),
        n_files: n,
    })
}

fn seg_tag(user: usize, t: usize) -> String {
    format!("u{}.s{}", user + 1, t + 1)
}

pub fn deliver_uncoded_baseline(
    spec: &PlacementSpec,
    d: &[usize],
) -> Result<Vec<Transmission>, ModelError> {
    let k = spec.caches.len();
    let plan = &spec.plan;
    let mut txs = Vec::new();
    for user in 0..k {
        let mut tx = Transmission::new(format!("X[{}]", user + 1), &[user]);
        tx.raw(plan, PieceRef::new(d[user], "phi"));
        txs.push(tx);
    }
    for a in 0..k {
        for b in a + 1..k {
            let mut tx = Transmission::new(format!("X[{},{}]", a + 1, b + 1), &[a, b]);
            for t in 0..=a {
                tx.xor(
                    plan,
                    vec![
                        PieceRef::new(d[b], seg_tag(a, t)),
                        PieceRef::new(d[a], seg_tag(b, t)),
                    ],
                )?;
            }
            for t in a + 1..=b {
                tx.raw(plan, PieceRef::new(d[a], seg_tag(b, t)));
            }
            txs.push(tx);
        }
    }
    decode::completion_pass(spec, &mut txs, d);
    Ok(txs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, Rational};

    fn m4() -> Vec<Rational> {
        vec![rat(1, 10), rat(3, 20), rat(1, 5), rat(1, 4)]
    }

    #[test]
    fn regime_condition_examples() {
        assert_eq!(small_memory_margin(&m4(), 5), rat(211, 240));
        assert!(check_small_memory(&m4(), 5, 4).unwrap());
        assert!(check_small_memory(&vec![Rational::zero(); 3], 4, 3).unwrap());
        assert!(!check_small_memory(&vec![Rational::one(); 3], 4, 3).unwrap());
        assert_eq!(
            check_small_memory(&m4(), 4, 4),
            Err(RegimeError::BadDimensions { n: 4, k: 4 })
        );
    }

    #[test]
    fn load_examples() {
        assert_eq!(load_uncoded_k(&m4()), rat(5, 2));
        assert_eq!(load_coded_k(&m4(), 5).unwrap(), rat(9, 4));
        let zeros = vec![Rational::zero(); 4];
        assert_eq!(load_uncoded_k(&zeros), Rational::int(4));
        assert_eq!(load_coded_k(&zeros, 5).unwrap(), Rational::int(4));
        // K=3 cross-check against the three-user uncoded first term
        let m3 = vec![rat(1, 10), rat(1, 5), rat(3, 10)];
        assert_eq!(load_uncoded_k(&m3), Rational::int(2));
    }

    #[test]
    fn equal_caches_lose_nothing() {
        let m = vec![rat(1, 8); 4];
        assert_eq!(load_coded_k(&m, 6).unwrap(), load_uncoded_k(&m));
    }

    #[test]
    fn placement_sizes_and_budgets() {
        let cfg = SystemConfig::new(5, m4(), 8).unwrap();
        let spec = place_small_mem(&cfg).unwrap();
        let plan = &spec.plan;
        assert_eq!(plan.size["phi"], rat(29, 240));
        assert_eq!(plan.size[&level_tag(1, 2)], rat(1, 16));
        assert_eq!(plan.size[&level_tag(2, 3)], rat(1, 12));
        assert_eq!(plan.size[&level_tag(3, 4)], rat(1, 8));
        assert_eq!(plan.total(), Rational::one());
        // 11 subfiles for K=4
        assert_eq!(plan.order.len(), 11);
        for (user, mk) in cfg.m.iter().enumerate() {
            let used = spec.caches[user].size(plan, cfg.n).unwrap();
            assert_eq!(used, Rational::int(cfg.n as i64) * mk.clone());
        }
    }

    #[test]
    fn equal_caches_have_no_parity_families() {
        let cfg = SystemConfig::new(6, vec![rat(1, 8); 4], 8).unwrap();
        let spec = place_small_mem(&cfg).unwrap();
        for cache in &spec.caches {
            assert!(cache
                .families
                .iter()
                .all(|f| spec.plan.size[&f.tag].is_zero()));
        }
    }

    #[test]
    fn delivery_counts_and_total() {
        let cfg = SystemConfig::new(5, m4(), 8).unwrap();
        let spec = place_small_mem(&cfg).unwrap();
        let txs = deliver_small_mem(&spec, &[0, 1, 2, 3]).unwrap();
        assert_eq!(txs.len(), 4 + 6);
        let total: Rational = txs.iter().map(|t| t.size(&spec.plan)).sum();
        assert_eq!(total, rat(9, 4));
        // pairwise signal size is the sum of the lower user's level sizes
        let x12 = txs.iter().find(|t| t.label == "X[1,2]").unwrap();
        assert_eq!(x12.size(&spec.plan), rat(1, 10));
        let x34 = txs.iter().find(|t| t.label == "X[3,4]").unwrap();
        assert_eq!(
            x34.size(&spec.plan),
            rat(1, 10) + rat(1, 16) + rat(1, 12)
        );
    }

    #[test]
    fn two_user_degenerate_counts() {
        let cfg = SystemConfig::new(3, vec![rat(1, 10), rat(1, 5)], 8).unwrap();
        let spec = place_small_mem(&cfg).unwrap();
        let txs = deliver_small_mem(&spec, &[0, 1]).unwrap();
        assert_eq!(txs.len(), 3);
    }

    #[test]
    fn baseline_load_matches_formula() {
        let cfg = SystemConfig::new(4, vec![rat(1, 10), rat(1, 5), rat(3, 10)], 8).unwrap();
        let spec = place_uncoded_baseline(&cfg).unwrap();
        assert_eq!(spec.plan.total(), Rational::one());
        let txs = deliver_uncoded_baseline(&spec, &[0, 1, 2]).unwrap();
        let total: Rational = txs.iter().map(|t| t.size(&spec.plan)).sum();
        assert_eq!(total, Rational::int(2));
        for (user, mk) in cfg.m.iter().enumerate() {
            let used = spec.caches[user].size(&spec.plan, cfg.n).unwrap();
            assert_eq!(used, Rational::int(cfg.n as i64) * mk.clone());
        }
    }

    #[test]
    fn baseline_zero_cache_is_pure_unicast() {
        let cfg = SystemConfig::new(4, vec![Rational::zero(); 3], 8).unwrap();
        let spec = place_uncoded_baseline(&cfg).unwrap();
        let txs = deliver_uncoded_baseline(&spec, &[0, 1, 2]).unwrap();
        let total: Rational = txs.iter().map(|t| t.size(&spec.plan)).sum();
        assert_eq!(total, Rational::int(3));
    }

    #[test]
    fn matches_three_user_region_one_term() {
        // for K=3 in the small-memory regime the coded load equals the
        // first term of the three-user formula
        let n = 4;
        for (a, b, c) in [(1i64, 2, 3), (0, 2, 5), (2, 2, 2), (0, 0, 4)] {
            let m = vec![rat(a, 20), rat(b, 20), rat(c, 20)];
            let coded = load_coded_k(&m, n).unwrap();
            assert_eq!(coded, crate::scheme_three::terms_coded(&m, n)[0]);
        }
    }

    #[test]
    fn gap_shrinks_with_library_size() {
        let k = 4usize;
        let m = vec![rat(1, 10), rat(3, 20), rat(1, 5), rat(1, 4)];
        let gap = |n: usize| load_uncoded_k(&m) - load_coded_k(&m, n).unwrap();
        let gaps = [gap(k + 1), gap(2 * k), gap(10 * k)];
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1]);
        assert!(!gaps[2].is_negative());
    }

    #[test]
    fn zero_library_reconstructs_to_zero() {
        use crate::decode::{self, DecodeInput};
        use crate::fieldcode::Field;
        use crate::model::{materialize, materialize_cache, Library};

        let cfg = SystemConfig::new(4, vec![rat(1, 10), rat(1, 5), rat(1, 4)], 8).unwrap();
        let spec = place_small_mem(&cfg).unwrap();
        let f = spec.plan.min_f();
        let lib = Library {
            files: vec![vec![0u16; f as usize]; cfg.n],
            f,
        };
        let layout = spec.plan.layout(f);
        let field = Field::new(8).unwrap();
        let caches: Vec<_> = spec
            .caches
            .iter()
            .map(|c| materialize_cache(c, &spec.plan, &lib, &layout, &field).unwrap())
            .collect();
        let d = [0usize, 1, 2];
        let txs = deliver_small_mem(&spec, &d).unwrap();
        let tx_blocks: Vec<Vec<u16>> = txs
            .iter()
            .map(|t| materialize(t, &lib, &layout).unwrap())
            .collect();
        let input = DecodeInput {
            spec: &spec,
            lib: &lib,
            layout: &layout,
            field: &field,
            caches: &caches,
            txs: &txs,
            tx_blocks: &tx_blocks,
        };
        for user in 0..cfg.k {
            let file = decode::decode_user(&input, user, &d).unwrap();
            assert!(file.iter().all(|&s| s == 0));
            assert_eq!(file.len(), f as usize);
        }
    }

    proptest::proptest! {
        #[test]
        fn partition_and_budgets_hold_in_regime(
            k in 2usize..5,
            extra in 1usize..4,
            raw in proptest::collection::vec(0i64..12, 4),
        ) {
            let n = k + extra;
            let mut m: Vec<Rational> = raw[..k].iter().map(|&v| rat(v, 48)).collect();
            m.sort();
            proptest::prop_assume!(small_memory_margin(&m, n) <= Rational::one());
            let cfg = SystemConfig::new(n, m.clone(), 8).unwrap();
            let spec = place_small_mem(&cfg).unwrap();
            proptest::prop_assert_eq!(spec.plan.total(), Rational::one());
            for (user, mk) in m.iter().enumerate() {
                let used = spec.caches[user].size(&spec.plan, n).unwrap();
                proptest::prop_assert_eq!(used, Rational::int(n as i64) * mk.clone());
            }
            let d: Vec<usize> = (0..k).collect();
            let txs = deliver_small_mem(&spec, &d).unwrap();
            let total: Rational = txs.iter().map(|t| t.size(&spec.plan)).sum();
            proptest::prop_assert_eq!(total, load_coded_k(&m, n).unwrap());
        }
    }

    #[test]
    fn equal_caches_same_signal_multiset() {
        let m = vec![rat(3, 20); 3];
        let cfg = SystemConfig::new(5, m, 8).unwrap();
        let coded = place_small_mem(&cfg).unwrap();
        let uncoded = place_uncoded_baseline(&cfg).unwrap();
        let d = [0, 1, 2];
        let mut a: Vec<Rational> = deliver_small_mem(&coded, &d)
            .unwrap()
            .iter()
            .map(|t| t.size(&coded.plan))
            .collect();
        let mut b: Vec<Rational> = deliver_uncoded_baseline(&uncoded, &d)
            .unwrap()
            .iter()
            .map(|t| t.size(&uncoded.plan))
            .collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
