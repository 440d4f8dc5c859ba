//! Convex decomposition of infeasible-corner configurations.
//!
//! Every load term is affine in the cache vector, so a config can be served
//! at its region's closed-form load by splitting files across several
//! feasible constructions whose own loads agree with that term's affine
//! extension. Anchors are drawn from the surfaces where two terms coincide
//! (t1=t3 on the region-I boundary, t2=t3, t2=t4, t3=t4 on the pairwise
//! boundaries) and from the interiors where a construction is natively
//! feasible; a small exact-rational phase-1 simplex then finds convex
//! weights reproducing the target config. Returns None when the config is
//! outside the convex hull of all feasible anchor graphs, which does happen
//! on parts of regions II-IV.

use crate::rational::{rat, Rational};

use super::{pure_feasible, terms_coded, PureScheme};

const KINDS: [PureScheme; 4] = [
    PureScheme::SmallMem,
    PureScheme::RegionTwo,
    PureScheme::RegionThree,
    PureScheme::RegionFour,
];

/// A construction at `x` whose load equals the target term's value at `x`.
fn achiever(x: &[Rational], n: usize, target: usize) -> Option<PureScheme> {
    let terms = terms_coded(x, n);
    KINDS
        .into_iter()
        .find(|kind| terms[kind.term_index()] == terms[target] && pure_feasible(*kind, x, n))
}

fn third_coordinates(x1: &Rational, x2: &Rational, m3: &Rational, n: usize) -> Vec<Rational> {
    let ni = n as i64;
    let one = Rational::one();
    let d2 = x2 - x1;
    vec![
        // zero-size triple piece in the region-II construction
        x2.clone() + rat(ni - 1, ni) * (Rational::int(3) * x1.clone() - one.clone()),
        // t2 == t4 surface
        (Rational::int(2 * (ni - 1)) - Rational::int(2 * ni - 3) * x2.clone()) / Rational::int(ni),
        // vanishing sigma-2 piece in the region-III construction
        (Rational::int(2 * ni) * x2.clone() + Rational::int(2 * ni - 3) * x1.clone()
            - Rational::int(ni - 1))
            / Rational::int(ni),
        // region-I boundary
        (Rational::int(ni - 2)
            * (one.clone() - x1 - x2 - rat(2, ni - 1) * d2)
            + Rational::int(2) * x2.clone())
            / Rational::int(ni),
        // case boundary of the region-IV construction
        (Rational::int(ni - 1) + x1.clone()) / Rational::int(ni),
        x2.clone(),
        one,
        m3.clone(),
    ]
}

fn anchor_menu(
    m: &[Rational],
    n: usize,
    target: usize,
) -> Vec<([Rational; 3], PureScheme)> {
    let ni = n as i64;
    let mut firsts = vec![
        m[0].clone(),
        Rational::zero(),
        rat(1, 3),
        rat(1, 2),
        m[1].clone(),
        (&m[0] + &m[1]) / Rational::int(2),
        rat(1, 4),
        rat(1, 5),
    ];
    firsts.sort();
    firsts.dedup();
    let mut anchors: Vec<([Rational; 3], PureScheme)> = Vec::new();
    let mut seen: Vec<[Rational; 3]> = Vec::new();
    for x1 in &firsts {
        if x1.is_negative() || x1 > &Rational::one() {
            continue;
        }
        let mut seconds = vec![
            m[1].clone(),
            x1.clone(),
            rat(1, 3),
            rat(1, 2),
            rat(2, 3),
            rat(3, 4),
            (&m[1] + &m[2]) / Rational::int(2),
            (Rational::int(ni - 1) - Rational::int(ni - 2) * x1.clone()) / Rational::int(ni),
        ];
        seconds.sort();
        seconds.dedup();
        for x2 in &seconds {
            if x2 < x1 || x2 > &Rational::one() {
                continue;
            }
            for x3 in third_coordinates(x1, x2, &m[2], n) {
                if &x3 < x2 || x3 > Rational::one() {
                    continue;
                }
                let x = [x1.clone(), x2.clone(), x3];
                if seen.contains(&x) {
                    continue;
                }
                if let Some(kind) = achiever(&x, n, target) {
                    seen.push(x.clone());
                    anchors.push((x, kind));
                }
            }
        }
    }
    anchors
}

/// Phase-1 simplex over exact rationals: find lambda >= 0 with
/// sum(lambda) = 1 and sum(lambda_i * x_i) = m.
fn convex_weights(anchors: &[[Rational; 3]], m: &[Rational]) -> Option<Vec<Rational>> {
    let rows = 4;
    let n = anchors.len();
    if n == 0 {
        return None;
    }
    let b = [m[0].clone(), m[1].clone(), m[2].clone(), Rational::one()];
    // tableau: n real columns, `rows` artificial columns, rhs
    let mut t: Vec<Vec<Rational>> = (0..rows)
        .map(|r| {
            let mut row: Vec<Rational> = (0..n)
                .map(|j| {
                    if r < 3 {
                        anchors[j][r].clone()
                    } else {
                        Rational::one()
                    }
                })
                .collect();
            row.extend((0..rows).map(|a| {
                if a == r {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            }));
            row.push(b[r].clone());
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + rows).collect();

    for _ in 0..4000 {
        let art_rows: Vec<usize> = (0..rows).filter(|&r| basis[r] >= n).collect();
        let objective: Rational = art_rows.iter().map(|&r| t[r][n + rows].clone()).sum();
        // price only the real columns
        let enter = (0..n).find(|&j| {
            let c: Rational = art_rows.iter().map(|&r| t[r][j].clone()).sum();
            c > Rational::zero()
        });
        let Some(enter) = enter else {
            if !objective.is_zero() {
                return None;
            }
            let mut lam = vec![Rational::zero(); n];
            for r in 0..rows {
                if basis[r] < n {
                    lam[basis[r]] = t[r][n + rows].clone();
                }
            }
            return Some(lam);
        };
        // ratio test with Bland's tie-break
        let mut leave: Option<(Rational, usize)> = None;
        for r in 0..rows {
            if t[r][enter] > Rational::zero() {
                let ratio = &t[r][n + rows] / &t[r][enter];
                let better = match &leave {
                    None => true,
                    Some((best, row)) => {
                        ratio < *best || (ratio == *best && basis[r] < basis[*row])
                    }
                };
                if better {
                    leave = Some((ratio, r));
                }
            }
        }
        let (_, lr) = leave?;
        let pivot = t[lr][enter].clone();
        for x in t[lr].iter_mut() {
            *x = &*x / &pivot;
        }
        for r in 0..rows {
            if r != lr && !t[r][enter].is_zero() {
                let f = t[r][enter].clone();
                for c in 0..=n + rows {
                    let delta = &f * &t[lr][c];
                    t[r][c] = &t[r][c] - &delta;
                }
            }
        }
        basis[lr] = enter;
    }
    None
}

/// Decompose `m` into weighted feasible constructions whose total load is
/// exactly the target term's value at `m`.
pub fn decompose(
    m: &[Rational],
    n: usize,
    target: usize,
) -> Option<Vec<(Rational, Vec<Rational>, PureScheme)>> {
    let anchors = anchor_menu(m, n, target);
    let points: Vec<[Rational; 3]> = anchors.iter().map(|(x, _)| x.clone()).collect();
    let lam = convex_weights(&points, m)?;
    let mut parts: Vec<(Rational, Vec<Rational>, PureScheme)> = lam
        .into_iter()
        .zip(anchors)
        .filter(|(w, _)| !w.is_zero())
        .map(|(w, (x, kind))| (w, x.to_vec(), kind))
        .collect();
    parts.sort_by_key(|p| (p.1.clone(), p.2.term_index()));

    // exactness invariants of a valid decomposition
    for i in 0..3 {
        let mixed: Rational = parts.iter().map(|(w, x, _)| w * &x[i]).sum();
        assert_eq!(mixed, m[i], "decomposition must reproduce the config");
    }
    let total_weight: Rational = parts.iter().map(|(w, _, _)| w.clone()).sum();
    assert_eq!(total_weight, Rational::one());
    let target_value = terms_coded(m, n)[target].clone();
    let mixed_load: Rational = parts
        .iter()
        .map(|(w, x, kind)| w * &terms_coded(x, n)[kind.term_index()])
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    assert_eq!(mixed_load, target_value, "decomposition must preserve the load");
    Some(parts)
}
