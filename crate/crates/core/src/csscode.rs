//! Classical linear codes, CSS pairs `C2 ⊆ C1`, and coset key extraction.
//!
//! Alice picks `u ∈ C1` and publishes `w ⊕ u`; Bob, holding `w ⊕ e`, decodes
//! `u ⊕ e` to the nearest codeword of C1 and keeps the coset `û + C2`. Only
//! bit-flip information enters here: every routine takes plain bit strings.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bitlinalg::{BitMatrix, BitVec, DimensionError};

/// Codes longer than this have no syndrome table.
pub const MAX_DECODE_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error("generator has rank {rank} but {rows} rows")]
    RankDeficient { rank: usize, rows: usize },
    #[error("generator row {row} violates a parity check")]
    NotOrthogonal { row: usize },
    #[error("parity checks have rank {rank}, expected {expected}")]
    IncompleteChecks { rank: usize, expected: usize },
    #[error("row {row} of C2 is not a codeword of C1")]
    NotSubcode { row: usize },
    #[error("codes have lengths {c1} and {c2}")]
    LengthMismatch { c1: usize, c2: usize },
    #[error("word is not a codeword of C1")]
    NotCodeword,
    #[error("syndrome decoding supports n <= {MAX_DECODE_LEN}, got {n}")]
    TooLong { n: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalCode {
    generator: BitMatrix,
    parity_check: BitMatrix,
}

impl ClassicalCode {
    /// Validates `G Hᵀ = 0`, full rank of `G`, and that `H` spans the whole
    /// dual.
    pub fn new(generator: BitMatrix, parity_check: BitMatrix) -> Result<Self, CodeError> {
        let n = generator.ncols();
        if parity_check.ncols() != n {
            return Err(DimensionError::LengthMismatch {
                left: n,
                right: parity_check.ncols(),
            }
            .into());
        }
        let rank = generator.rank();
        if rank != generator.nrows() {
            return Err(CodeError::RankDeficient {
                rank,
                rows: generator.nrows(),
            });
        }
        for (row, g) in generator.rows().iter().enumerate() {
            if !parity_check.mul_vec(g)?.is_zero() {
                return Err(CodeError::NotOrthogonal { row });
            }
        }
        let check_rank = parity_check.rank();
        if check_rank != n - rank {
            return Err(CodeError::IncompleteChecks {
                rank: check_rank,
                expected: n - rank,
            });
        }
        Ok(Self {
            generator,
            parity_check,
        })
    }

    /// Derives the parity checks as a kernel basis of `G`.
    pub fn from_generator(generator: BitMatrix) -> Result<Self, CodeError> {
        let rank = generator.rank();
        if rank != generator.nrows() {
            return Err(CodeError::RankDeficient {
                rank,
                rows: generator.nrows(),
            });
        }
        let n = generator.ncols();
        let kernel = generator.solve_or_kernel(&BitVec::zeros(generator.nrows()))?.kernel;
        let parity_check = if kernel.is_empty() {
            BitMatrix::empty(n)
        } else {
            BitMatrix::from_rows(kernel)?
        };
        Self::new(generator, parity_check)
    }

    /// One generator row per non-blank line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CodeError> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row: BitVec = line.parse().map_err(|e: DimensionError| CodeError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if let Some(first) = rows.first() {
                let first: &BitVec = first;
                if first.len() != row.len() {
                    return Err(CodeError::Parse {
                        line: i + 1,
                        message: format!("row has {} bits, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(CodeError::Parse {
                line: 0,
                message: "no generator rows".into(),
            });
        }
        Self::from_generator(BitMatrix::from_rows(rows)?)
    }

    pub fn load(path: &Path) -> Result<Self, CodeError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CodeError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `[n, 1]` repetition code.
    pub fn repetition(n: usize) -> Self {
        let g = BitMatrix::from_rows(vec![BitVec::ones(n)]).expect("single row");
        Self::from_generator(g).expect("repetition code is valid")
    }

    /// `[7, 4, 3]` Hamming code in systematic form.
    pub fn hamming_7_4() -> Self {
        let g = BitMatrix::parse_rows("1000110\n0100101\n0010011\n0001111").expect("rows");
        let h = BitMatrix::parse_rows("1101100\n1011010\n0111001").expect("rows");
        Self::new(g, h).expect("Hamming code is valid")
    }

    /// The dual code: generator and parity checks swap roles.
    pub fn dual(&self) -> Self {
        Self {
            generator: self.parity_check.clone(),
            parity_check: self.generator.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.generator.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &BitMatrix {
        &self.generator
    }

    pub fn parity_check(&self) -> &BitMatrix {
        &self.parity_check
    }

    pub fn syndrome(&self, v: &BitVec) -> Result<BitVec, CodeError> {
        Ok(self.parity_check.mul_vec(v)?)
    }

    pub fn contains(&self, v: &BitVec) -> Result<bool, CodeError> {
        Ok(self.syndrome(v)?.is_zero())
    }

    /// Codeword for message `m` (length `dim`).
    pub fn encode(&self, m: &BitVec) -> Result<BitVec, CodeError> {
        Ok(self.generator.combine_rows(m)?)
    }

    /// All `2^dim` codewords; only sensible for small `dim`.
    pub fn codewords(&self) -> impl Iterator<Item = BitVec> + '_ {
        let k = self.dim();
        assert!(k < 32, "too many codewords to enumerate");
        (0u64..1 << k).map(move |m| {
            let msg = BitVec::from_indices(k, (0..k).filter(|&j| m >> j & 1 == 1));
            self.encode(&msg).expect("message length is dim")
        })
    }

    /// Minimum weight of a nonzero codeword, by enumeration. `None` for the
    /// zero code.
    pub fn min_distance(&self) -> Option<usize> {
        self.codewords().map(|c| c.count_ones()).filter(|&w| w > 0).min()
    }
}

/// Coset-leader table of a code: the lightest error for every syndrome.
#[derive(Debug, Clone)]
pub struct SyndromeDecoder {
    n: usize,
    columns: Vec<u32>,
    leaders: Vec<u32>,
    radius: usize,
}

impl SyndromeDecoder {
    pub fn new(code: &ClassicalCode) -> Result<Self, CodeError> {
        let n = code.len();
        if n > MAX_DECODE_LEN {
            return Err(CodeError::TooLong { n });
        }
        let h = code.parity_check();
        let r = h.nrows();
        let columns: Vec<u32> = (0..n)
            .map(|j| (0..r).filter(|&i| h.get(i, j)).fold(0, |acc, i| acc | 1 << i))
            .collect();
        const UNSET: u32 = u32::MAX;
        let mut leaders = vec![UNSET; 1 << r];
        let mut filled = 0;
        // Patterns in order of weight, so the first hit is a coset leader.
        'weights: for w in 0..=n {
            let mut combo: u32 = if w == 0 { 0 } else { (1 << w) - 1 };
            loop {
                let syn = (0..n)
                    .filter(|&j| combo >> j & 1 == 1)
                    .fold(0, |acc, j| acc ^ columns[j]) as usize;
                if leaders[syn] == UNSET {
                    leaders[syn] = combo;
                    filled += 1;
                    if filled == leaders.len() {
                        break 'weights;
                    }
                }
                if w == 0 {
                    break;
                }
                // Gosper's hack: next word with the same popcount.
                let c = combo & combo.wrapping_neg();
                let next = combo + c;
                let nxt = (((next ^ combo) >> 2) / c) | next;
                if nxt >= 1 << n || nxt < combo {
                    break;
                }
                combo = nxt;
            }
        }
        let radius = code.min_distance().map_or(n, |d| (d - 1) / 2);
        Ok(Self {
            n,
            columns,
            leaders,
            radius,
        })
    }

    /// Errors of weight at most this are always corrected.
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Nearest codeword and whether the removed error was within the radius.
    pub fn decode(&self, v: &BitVec) -> Result<(BitVec, bool), CodeError> {
        if v.len() != self.n {
            return Err(DimensionError::LengthMismatch {
                left: v.len(),
                right: self.n,
            }
            .into());
        }
        let syn = v.iter_ones().fold(0, |acc, j| acc ^ self.columns[j]) as usize;
        let leader = self.leaders[syn];
        let mut out = v.clone();
        for j in (0..self.n).filter(|&j| leader >> j & 1 == 1) {
            out.flip(j);
        }
        Ok((out, leader.count_ones() as usize <= self.radius))
    }
}

/// A CSS pair with `C2 ⊆ C1`, keyed by the cosets of C2 in C1.
#[derive(Debug, Clone)]
pub struct CssCode {
    c1: ClassicalCode,
    c2: ClassicalCode,
    /// Reduced echelon basis of C2, used to strip C2 components.
    c2_rows: Vec<BitVec>,
    c2_pivots: Vec<usize>,
    /// Pivot columns of the quotient basis; the label reads these bits.
    label_pivots: Vec<usize>,
    decoder: Option<SyndromeDecoder>,
}

impl CssCode {
    pub fn new(c1: ClassicalCode, c2: ClassicalCode) -> Result<Self, CodeError> {
        if c1.len() != c2.len() {
            return Err(CodeError::LengthMismatch {
                c1: c1.len(),
                c2: c2.len(),
            });
        }
        for (row, g) in c2.generator().rows().iter().enumerate() {
            if !c1.contains(g)? {
                return Err(CodeError::NotSubcode { row });
            }
        }
        let ech = c2.generator().echelon();
        let (c2_rows, c2_pivots) = (ech.rows, ech.pivots);
        let reduced: Vec<BitVec> = c1
            .generator()
            .rows()
            .iter()
            .map(|g| strip(g, &c2_rows, &c2_pivots))
            .collect();
        let label_pivots = BitMatrix::from_rows(reduced)?.echelon().pivots;
        let decoder = if c1.len() <= MAX_DECODE_LEN {
            Some(SyndromeDecoder::new(&c1)?)
        } else {
            None
        };
        Ok(Self {
            c1,
            c2,
            c2_rows,
            c2_pivots,
            label_pivots,
            decoder,
        })
    }

    /// Hamming(7,4) over its dual (7,3): one key bit per block.
    pub fn hamming_dual() -> Self {
        let c1 = ClassicalCode::hamming_7_4();
        let c2 = c1.dual();
        Self::new(c1, c2).expect("dual of Hamming is a subcode")
    }

    /// Repetition(3) over the zero code.
    pub fn repetition3() -> Self {
        let c1 = ClassicalCode::repetition(3);
        let c2 = ClassicalCode::from_generator(BitMatrix::empty(3)).expect("zero code");
        Self::new(c1, c2).expect("zero code is a subcode")
    }

    pub fn c1(&self) -> &ClassicalCode {
        &self.c1
    }

    pub fn c2(&self) -> &ClassicalCode {
        &self.c2
    }

    pub fn len(&self) -> usize {
        self.c1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c1.is_empty()
    }

    pub fn key_len(&self) -> usize {
        self.c1.dim() - self.c2.dim()
    }

    /// Canonical label of `u + C2`: reduce `u` against C2's echelon basis and
    /// read the quotient pivot coordinates.
    pub fn coset_label(&self, u: &BitVec) -> Result<BitVec, CodeError> {
        if !self.c1.contains(u)? {
            return Err(CodeError::NotCodeword);
        }
        let rep = strip(u, &self.c2_rows, &self.c2_pivots);
        Ok(rep.select(&self.label_pivots))
    }

    /// Bob's side of the extraction. `announced` is Alice's public `w ⊕ u`;
    /// `received` is his `w ⊕ e`.
    pub fn bob_extract(
        &self,
        announced: &BitVec,
        received: &BitVec,
    ) -> Result<Extraction, CodeError> {
        let decoder = self.decoder.as_ref().ok_or(CodeError::TooLong { n: self.len() })?;
        let noisy = received.xor(announced)?;
        let (codeword, success) = decoder.decode(&noisy)?;
        Ok(Extraction {
            key: self.coset_label(&codeword)?,
            success,
            codeword,
        })
    }
}

/// Bob's decoded coset and whether decoding stayed within the radius of C1.
/// A heavier error can still be mapped to a wrong codeword with
/// `success = true`; the flag only reports the decoder's own view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub key: BitVec,
    pub success: bool,
    pub codeword: BitVec,
}

/// Runs both sides: Alice announces `w ⊕ u`, Bob decodes `received`.
pub fn extract_key(
    w: &BitVec,
    received: &BitVec,
    u: &BitVec,
    code: &CssCode,
) -> Result<Extraction, CodeError> {
    if !code.c1().contains(u)? {
        return Err(CodeError::NotCodeword);
    }
    code.bob_extract(&w.xor(u)?, received)
}

fn strip(v: &BitVec, rows: &[BitVec], pivots: &[usize]) -> BitVec {
    let mut out = v.clone();
    for (row, &p) in rows.iter().zip(pivots) {
        if out.get(p) {
            out.xor_in_place(row).expect("equal lengths");
        }
    }
    out
}

/// `H₂(p)`, with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Asymptotic one-way key rate `1 − 2H₂(p)`.
pub fn one_way_rate(p: f64) -> f64 {
    1.0 - 2.0 * binary_entropy(p)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Threshold {
    pub root: f64,
    pub iterations: u32,
    pub tolerance: f64,
}

/// Error rate in `(0, 0.5)` where the one-way rate crosses zero, by
/// bisection until the bracket is narrower than `tol`.
pub fn rate_threshold(tol: f64) -> Threshold {
    let tol = if tol > 0.0 { tol } else { 1e-6 };
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if one_way_rate(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Threshold {
        root: 0.5 * (lo + hi),
        iterations,
        tolerance: tol,
    }
}
