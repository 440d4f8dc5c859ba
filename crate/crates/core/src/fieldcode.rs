//! GF(2^r) arithmetic and the systematic-MDS parity operator.
//!
//! A parity code for N information blocks with deficiency j holds the N-j
//! parity columns of a systematic (2N-j, N) MDS code. The recovery contract
//! is: all N-j parities plus any j information blocks determine the whole
//! family. A Cauchy parity matrix guarantees the contract because every
//! square submatrix of a Cauchy matrix is invertible.

use std::collections::BTreeMap;

use thiserror::Error;

pub type Symbol = u16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("unsupported field exponent r={0}; expected 3, 8 or 16")]
    UnsupportedExponent(u32),
    #[error("field GF(2^{r}) too small for {n} information blocks (need 2N <= 2^r)")]
    FieldTooSmall { r: u32, n: usize },
    #[error("block length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{got} known blocks but deficiency is {needed}")]
    InsufficientKnowns { needed: usize, got: usize },
    #[error("known block at index {index} contradicts the parity system")]
    InconsistentInput { index: usize },
    #[error("wrong number of blocks: expected {expected}, got {got}")]
    BlockCountMismatch { expected: usize, got: usize },
}

/// A binary extension field with log/antilog multiplication tables.
///
/// The reduction polynomials are fixed per exponent and have x as a
/// primitive element, so the tables are generated by repeated doubling.
#[derive(Debug, Clone)]
pub struct Field {
    r: u32,
    poly: u32,
    log: Vec<u16>,
    exp: Vec<u16>,
}

impl Field {
    pub fn new(r: u32) -> Result<Field, FieldError> {
        let poly = match r {
            3 => 0b1011,        // x^3 + x + 1
            8 => 0x11d,         // x^8 + x^4 + x^3 + x^2 + 1
            16 => 0x1100b,      // x^16 + x^12 + x^3 + x + 1
            _ => return Err(FieldError::UnsupportedExponent(r)),
        };
        let order = 1usize << r;
        let mut log = vec![0u16; order];
        let mut exp = vec![0u16; order - 1];
        let mut val: u32 = 1;
        for i in 0..(order - 1) {
            exp[i] = val as u16;
            log[val as usize] = i as u16;
            val <<= 1;
            if val & (1 << r) != 0 {
                val ^= poly;
            }
        }
        debug_assert_eq!(val, 1, "reduction polynomial is not primitive");
        Ok(Field { r, poly, log, exp })
    }

    pub fn exponent(&self) -> u32 {
        self.r
    }

    pub fn reduction_polynomial(&self) -> u32 {
        self.poly
    }

    pub fn order(&self) -> usize {
        1usize << self.r
    }

    #[inline]
    pub fn add(&self, a: Symbol, b: Symbol) -> Symbol {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: Symbol, b: Symbol) -> Symbol {
        if a == 0 || b == 0 {
            return 0;
        }
        let m = self.order() - 1;
        let idx = (self.log[a as usize] as usize + self.log[b as usize] as usize) % m;
        self.exp[idx]
    }

    /// Multiplicative inverse; None for zero.
    pub fn inv(&self, a: Symbol) -> Option<Symbol> {
        if a == 0 {
            return None;
        }
        let m = self.order() - 1;
        let idx = (m - self.log[a as usize] as usize) % m;
        Some(self.exp[idx])
    }
}

/// Parity side of a systematic (2N-j, N) MDS code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCode {
    n_info: usize,
    deficiency: usize,
    /// N x (N-j), row i holds the coefficients of information block i.
    matrix: Vec<Vec<Symbol>>,
}

impl ParityCode {
    pub fn n_info(&self) -> usize {
        self.n_info
    }

    pub fn deficiency(&self) -> usize {
        self.deficiency
    }

    pub fn parity_count(&self) -> usize {
        self.n_info - self.deficiency
    }

    pub fn matrix(&self) -> &[Vec<Symbol>] {
        &self.matrix
    }

    /// Test hook: a hand-built parity matrix (used for the classic
    /// adjacent-XOR j=1 construction, which satisfies the recovery
    /// contract without being fully MDS).
    pub fn from_matrix(matrix: Vec<Vec<Symbol>>, deficiency: usize) -> ParityCode {
        let n_info = matrix.len();
        assert!(deficiency < n_info);
        assert!(matrix.iter().all(|row| row.len() == n_info - deficiency));
        ParityCode {
            n_info,
            deficiency,
            matrix,
        }
    }
}

/// Cauchy-based parity matrix: entry (i, t) = 1 / (x_i + y_t) with
/// x_i = i and y_t = N + t, all distinct in GF(2^r).
pub fn build_parity_code(n: usize, j: usize, field: &Field) -> Result<ParityCode, FieldError> {
    assert!(j < n, "deficiency must be below the block count");
    if 2 * n > field.order() {
        return Err(FieldError::FieldTooSmall {
            r: field.exponent(),
            n,
        });
    }
    let parities = n - j;
    let matrix = (0..n)
        .map(|i| {
            (0..parities)
                .map(|t| {
                    let x = i as Symbol;
                    let y = (n + t) as Symbol;
                    field.inv(x ^ y).expect("distinct Cauchy points")
                })
                .collect()
        })
        .collect();
    Ok(ParityCode {
        n_info: n,
        deficiency: j,
        matrix,
    })
}

fn check_equal_lengths(blocks: &[Vec<Symbol>]) -> Result<usize, FieldError> {
    let len = blocks.first().map_or(0, |b| b.len());
    for b in blocks {
        if b.len() != len {
            return Err(FieldError::LengthMismatch {
                expected: len,
                got: b.len(),
            });
        }
    }
    Ok(len)
}

/// Parity blocks of the information family: output t at symbol position s is
/// sum_i info[i][s] * P[i][t] in the field.
pub fn sigma(
    field: &Field,
    code: &ParityCode,
    info: &[Vec<Symbol>],
) -> Result<Vec<Vec<Symbol>>, FieldError> {
    if info.len() != code.n_info {
        return Err(FieldError::BlockCountMismatch {
            expected: code.n_info,
            got: info.len(),
        });
    }
    let len = check_equal_lengths(info)?;
    let mut out = vec![vec![0u16; len]; code.parity_count()];
    for (i, block) in info.iter().enumerate() {
        for (t, parity) in out.iter_mut().enumerate() {
            let coeff = code.matrix[i][t];
            if coeff == 0 {
                continue;
            }
            for (p, &x) in parity.iter_mut().zip(block.iter()) {
                *p ^= field.mul(coeff, x);
            }
        }
    }
    Ok(out)
}

/// Invert a square matrix over the field by Gauss-Jordan elimination.
/// Returns None when singular.
fn invert(field: &Field, mat: &[Vec<Symbol>]) -> Option<Vec<Vec<Symbol>>> {
    let n = mat.len();
    let mut aug: Vec<Vec<Symbol>> = mat
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| u16::from(i == j)));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| aug[r][col] != 0)?;
        aug.swap(col, pivot);
        let inv = field.inv(aug[col][col]).expect("nonzero pivot");
        for x in aug[col].iter_mut() {
            *x = field.mul(inv, *x);
        }
        for r in 0..n {
            if r != col && aug[r][col] != 0 {
                let f = aug[r][col];
                let (head, tail) = if r < col {
                    let (a, b) = aug.split_at_mut(col);
                    (&mut a[r], &b[0])
                } else {
                    let (a, b) = aug.split_at_mut(r);
                    (&mut b[0], &a[col])
                };
                for (x, &y) in head.iter_mut().zip(tail.iter()) {
                    *x ^= field.mul(f, y);
                }
            }
        }
    }
    Some(aug.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Rebuild the full information family from all parities plus at least j
/// known blocks. Exactly j knowns (the smallest indices) enter the linear
/// solve; any extra knowns are checked against the solution.
pub fn recover(
    field: &Field,
    code: &ParityCode,
    parities: &[Vec<Symbol>],
    known: &BTreeMap<usize, Vec<Symbol>>,
) -> Result<Vec<Vec<Symbol>>, FieldError> {
    let n = code.n_info;
    let j = code.deficiency;
    if parities.len() != code.parity_count() {
        return Err(FieldError::BlockCountMismatch {
            expected: code.parity_count(),
            got: parities.len(),
        });
    }
    if known.len() < j {
        return Err(FieldError::InsufficientKnowns {
            needed: j,
            got: known.len(),
        });
    }
    let len = check_equal_lengths(parities)?;
    for block in known.values() {
        if block.len() != len && !parities.is_empty() {
            return Err(FieldError::LengthMismatch {
                expected: len,
                got: block.len(),
            });
        }
    }

    let solve_set: Vec<usize> = known.keys().copied().take(j).collect();
    let unknown: Vec<usize> = (0..n).filter(|i| !solve_set.contains(i)).collect();

    // rhs[t] = parity[t] - contributions of the j solve-set blocks
    let mut rhs: Vec<Vec<Symbol>> = parities.to_vec();
    for &i in &solve_set {
        let block = &known[&i];
        for (t, r) in rhs.iter_mut().enumerate() {
            let coeff = code.matrix[i][t];
            if coeff == 0 {
                continue;
            }
            for (x, &y) in r.iter_mut().zip(block.iter()) {
                *x ^= field.mul(coeff, y);
            }
        }
    }

    // System A u = rhs with A[t][c] = P[unknown[c]][t]; invertible by the
    // recovery contract.
    let dim = unknown.len();
    let a: Vec<Vec<Symbol>> = (0..dim)
        .map(|t| unknown.iter().map(|&i| code.matrix[i][t]).collect())
        .collect();
    let a_inv = invert(field, &a).expect("recovery contract violated: singular submatrix");

    let mut blocks: Vec<Vec<Symbol>> = vec![Vec::new(); n];
    for &i in &solve_set {
        blocks[i] = known[&i].clone();
    }
    for (c, &i) in unknown.iter().enumerate() {
        let mut out = vec![0u16; len];
        for (t, r) in rhs.iter().enumerate() {
            let coeff = a_inv[c][t];
            if coeff == 0 {
                continue;
            }
            for (x, &y) in out.iter_mut().zip(r.iter()) {
                *x ^= field.mul(coeff, y);
            }
        }
        blocks[i] = out;
    }

    for (&i, block) in known.iter() {
        if blocks[i] != *block {
            return Err(FieldError::InconsistentInput { index: i });
        }
    }
    Ok(blocks)
}
