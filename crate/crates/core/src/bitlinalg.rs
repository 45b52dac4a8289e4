//! Dense GF(2) vectors and matrices.
//!
//! Bits are packed little-endian into `u64` words: bit `i` lives in word
//! `i / 64` at position `i % 64`. Textual forms list bit 0 first, so the
//! string `"1011"` has bits 0, 2 and 3 set.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const WORD_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimensionError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("requested {rows}x{cols} full-rank matrix but rows exceed columns")]
    TooManyRows { rows: usize, cols: usize },
    #[error("invalid bit character {found:?} at position {position}")]
    InvalidBit { position: usize, found: char },
    #[error("matrix rows must share a common length")]
    RaggedRows,
}

fn check_len(left: usize, right: usize) -> Result<(), DimensionError> {
    if left == right {
        Ok(())
    } else {
        Err(DimensionError::LengthMismatch { left, right })
    }
}

fn word_count(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

/// A fixed-length vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; word_count(len)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self {
            words: vec![u64::MAX; word_count(len)],
            len,
        };
        v.clear_tail();
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Vector of length `len` with exactly the given positions set.
    pub fn from_indices<I: IntoIterator<Item = usize>>(len: usize, indices: I) -> Self {
        let mut v = Self::zeros(len);
        for i in indices {
            v.set(i, true);
        }
        v
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = Self {
            words: (0..word_count(len)).map(|_| rng.gen()).collect(),
            len,
        };
        v.clear_tail();
        v
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// # Panics
    /// Panics if `i >= self.len()`.
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range (len={})", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    /// # Panics
    /// Panics if `i >= self.len()`.
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range (len={})", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    /// # Panics
    /// Panics if `i >= self.len()`.
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range (len={})", self.len);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    /// Componentwise sum mod 2.
    pub fn xor(&self, other: &Self) -> Result<Self, DimensionError> {
        let mut out = self.clone();
        out.xor_in_place(other)?;
        Ok(out)
    }

    pub fn xor_in_place(&mut self, other: &Self) -> Result<(), DimensionError> {
        check_len(self.len, other.len)?;
        self.xor_words_from(&other.words, 0);
        Ok(())
    }

    fn xor_words_from(&mut self, other: &[u64], start_word: usize) {
        for (a, b) in self.words[start_word..].iter_mut().zip(&other[start_word..]) {
            *a ^= b;
        }
    }

    /// Componentwise product (intersection of supports).
    pub fn and(&self, other: &Self) -> Result<Self, DimensionError> {
        check_len(self.len, other.len)?;
        Ok(Self {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
            len: self.len,
        })
    }

    /// Parity of the bits of `self` selected by `mask`.
    pub fn masked_parity(&self, mask: &Self) -> Result<bool, DimensionError> {
        check_len(self.len, mask.len)?;
        Ok(self.dot_unchecked(mask))
    }

    fn dot_unchecked(&self, other: &Self) -> bool {
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        ones & 1 == 1
    }

    /// Parity of the bits at the listed positions.
    pub fn parity_of(&self, indices: &[usize]) -> bool {
        indices.iter().fold(false, |acc, &i| acc ^ self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set bits in ascending order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD_BITS + bit)
            })
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    /// Lowest set index at or after `from`.
    fn first_one_from(&self, from: usize) -> Option<usize> {
        if from >= self.len {
            return None;
        }
        let mut wi = from / WORD_BITS;
        let mut w = self.words[wi] & (u64::MAX << (from % WORD_BITS));
        loop {
            if w != 0 {
                return Some(wi * WORD_BITS + w.trailing_zeros() as usize);
            }
            wi += 1;
            if wi >= self.words.len() {
                return None;
            }
            w = self.words[wi];
        }
    }

    /// Sub-vector of the positions `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::zeros(indices.len());
        for (j, &i) in indices.iter().enumerate() {
            if self.get(i) {
                out.set(j, true);
            }
        }
        out
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.len + other.len);
        for i in self.iter_ones() {
            out.set(i, true);
        }
        for i in other.iter_ones() {
            out.set(self.len + i, true);
        }
        out
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

impl FromStr for BitVec {
    type Err = DimensionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut v = Self::zeros(s.chars().count());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                other => {
                    return Err(DimensionError::InvalidBit {
                        position: i,
                        found: other,
                    })
                }
            }
        }
        Ok(v)
    }
}

impl Serialize for BitVec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitVec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of solving `M x = b` over GF(2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSolution {
    /// One solution, or `None` when the system is inconsistent.
    pub particular: Option<BitVec>,
    /// Basis of the kernel of `M`.
    pub kernel: Vec<BitVec>,
}

/// Reduced row-echelon form and the pivot column of each nonzero row.
#[derive(Debug, Clone)]
pub struct Echelon {
    pub rows: Vec<BitVec>,
    pub pivots: Vec<usize>,
}

/// An `m x n` matrix over GF(2), stored as rows.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: Vec<BitVec>,
    cols: usize,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows: vec![BitVec::zeros(cols); rows],
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).map(|i| BitVec::from_indices(n, [i])).collect(),
            cols: n,
        }
    }

    /// Builds a matrix from rows; an empty row list needs `cols` explicitly,
    /// so use [`BitMatrix::empty`] for that case.
    pub fn from_rows(rows: Vec<BitVec>) -> Result<Self, DimensionError> {
        let cols = rows.first().map_or(0, BitVec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(DimensionError::RaggedRows);
        }
        Ok(Self { rows, cols })
    }

    pub fn empty(cols: usize) -> Self {
        Self {
            rows: Vec::new(),
            cols,
        }
    }

    /// Parses one row per non-empty line.
    pub fn parse_rows(text: &str) -> Result<Self, DimensionError> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<BitVec>, _>>()?;
        Self::from_rows(rows)
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self {
            rows: (0..rows).map(|_| BitVec::random(cols, rng)).collect(),
            cols,
        }
    }

    /// Uniformly random `rows x cols` matrix of full row rank, resampled until
    /// the rank check passes. Deterministic per seed.
    pub fn random_full_rank(rows: usize, cols: usize, seed: u64) -> Result<Self, DimensionError> {
        if rows > cols {
            return Err(DimensionError::TooManyRows { rows, cols });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let m = Self::random(rows, cols, &mut rng);
            if m.rank() == rows {
                return Ok(m);
            }
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<BitVec> {
        self.rows
    }

    pub fn push_row(&mut self, row: BitVec) -> Result<(), DimensionError> {
        check_len(self.cols, row.len())?;
        self.rows.push(row);
        Ok(())
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows.len());
        for (r, row) in self.rows.iter().enumerate() {
            for c in row.iter_ones() {
                out.rows[c].set(r, true);
            }
        }
        out
    }

    /// `M v`: one parity per row.
    pub fn mul_vec(&self, v: &BitVec) -> Result<BitVec, DimensionError> {
        check_len(self.cols, v.len())?;
        let mut out = BitVec::zeros(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if row.dot_unchecked(v) {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    /// `self * other^T`, i.e. the matrix of pairwise row inner products.
    pub fn mul_transpose(&self, other: &Self) -> Result<Self, DimensionError> {
        check_len(self.cols, other.cols)?;
        let mut out = Self::zeros(self.rows.len(), other.rows.len());
        for (i, a) in self.rows.iter().enumerate() {
            for (j, b) in other.rows.iter().enumerate() {
                if a.dot_unchecked(b) {
                    out.rows[i].set(j, true);
                }
            }
        }
        Ok(out)
    }

    /// `v^T M` for a row-combination vector `v` of length `nrows`.
    pub fn combine_rows(&self, v: &BitVec) -> Result<BitVec, DimensionError> {
        check_len(self.rows.len(), v.len())?;
        let mut out = BitVec::zeros(self.cols);
        for i in v.iter_ones() {
            out.xor_words_from(&self.rows[i].words, 0);
        }
        Ok(out)
    }

    pub fn echelon(&self) -> Echelon {
        let mut rows = self.rows.clone();
        let pivots = reduce_in_place(&mut rows, self.cols);
        rows.truncate(pivots.len());
        Echelon { rows, pivots }
    }

    pub fn rank(&self) -> usize {
        let mut rows = self.rows.clone();
        reduce_in_place(&mut rows, self.cols).len()
    }

    /// One solution of `M x = b` (if consistent) together with a kernel basis.
    pub fn solve_or_kernel(&self, b: &BitVec) -> Result<LinearSolution, DimensionError> {
        check_len(self.rows.len(), b.len())?;
        // Augment each row with its right-hand-side bit in column `cols`.
        let mut aug: Vec<BitVec> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.concat(&BitVec::zeros(1));
                r.set(self.cols, b.get(i));
                r
            })
            .collect();
        let pivots = reduce_in_place(&mut aug, self.cols);
        let consistent = aug[pivots.len()..].iter().all(|r| !r.get(self.cols));

        let particular = consistent.then(|| {
            let mut x = BitVec::zeros(self.cols);
            for (row, &p) in aug.iter().zip(&pivots) {
                if row.get(self.cols) {
                    x.set(p, true);
                }
            }
            x
        });

        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let kernel = (0..self.cols)
            .filter(|&c| !is_pivot[c])
            .map(|free| {
                let mut k = BitVec::from_indices(self.cols, [free]);
                for (row, &p) in aug.iter().zip(&pivots) {
                    if row.get(free) {
                        k.set(p, true);
                    }
                }
                k
            })
            .collect();
        Ok(LinearSolution { particular, kernel })
    }

    /// `true` iff `v` lies in the row space.
    pub fn spans(&self, v: &BitVec) -> Result<bool, DimensionError> {
        check_len(self.cols, v.len())?;
        let mut rows = self.rows.clone();
        let base = reduce_in_place(&mut rows, self.cols).len();
        rows.truncate(base);
        rows.push(v.clone());
        Ok(reduce_in_place(&mut rows, self.cols).len() == base)
    }
}

/// Gauss-Jordan elimination restricted to the first `pivot_cols` columns.
/// Rows are permuted so the first `rank` rows are the reduced basis; returns
/// the pivot column of each.
fn reduce_in_place(rows: &mut [BitVec], pivot_cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut next = 0;
    let mut col = 0;
    while next < rows.len() && col < pivot_cols {
        // Leftmost column at or after `col` that has a one in rows[next..].
        let Some((pivot_row, pivot_col)) = rows[next..]
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.first_one_from(col).map(|c| (next + i, c)))
            .filter(|&(_, c)| c < pivot_cols)
            .min_by_key(|&(i, c)| (c, i))
        else {
            break;
        };
        rows.swap(next, pivot_row);
        let pivot_words = rows[next].words.clone();
        let start = pivot_col / WORD_BITS;
        for (i, row) in rows.iter_mut().enumerate() {
            if i != next && row.get(pivot_col) {
                row.xor_words_from(&pivot_words, start);
            }
        }
        pivots.push(pivot_col);
        next += 1;
        col = pivot_col + 1;
    }
    pivots
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows.len(), self.cols)?;
        for r in &self.rows {
            writeln!(f, "  {r}")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    fn mat(rows: &[&str]) -> BitMatrix {
        BitMatrix::from_rows(rows.iter().map(|r| bv(r)).collect()).unwrap()
    }

    /// Rank by exhaustive span enumeration: log2 of the number of distinct
    /// row combinations. Only for tiny matrices.
    fn rank_by_span(m: &BitMatrix) -> usize {
        let mut seen = std::collections::HashSet::new();
        for sel in 0u32..(1 << m.nrows()) {
            let mut acc = BitVec::zeros(m.ncols());
            for i in 0..m.nrows() {
                if sel >> i & 1 == 1 {
                    acc.xor_in_place(m.row(i)).unwrap();
                }
            }
            seen.insert(acc);
        }
        seen.len().trailing_zeros() as usize
    }

    #[test]
    fn xor_examples() {
        assert_eq!(bv("1011").xor(&bv("0110")).unwrap(), bv("1101"));
        let v = bv("1011");
        assert_eq!(v.xor(&v).unwrap(), bv("0000"));
        assert_eq!(bv("0000").xor(&v).unwrap(), v);
        assert!(matches!(
            bv("101").xor(&bv("1010")),
            Err(DimensionError::LengthMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn masked_parity_examples() {
        let v = bv("1011");
        assert!(v.masked_parity(&bv("1111")).unwrap());
        assert!(!v.masked_parity(&bv("0000")).unwrap());
        assert!(!v.masked_parity(&bv("1010")).unwrap());
        assert!(v.masked_parity(&bv("11")).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(BitMatrix::identity(3).rank(), 3);
        assert_eq!(mat(&["11", "11"]).rank(), 1);
        let hamming = mat(&["1000110", "0100101", "0010011", "0001111"]);
        assert_eq!(rank_by_span(&hamming), 4);
        assert_eq!(hamming.rank(), 4);
        // input unmodified
        assert_eq!(hamming, mat(&["1000110", "0100101", "0010011", "0001111"]));
    }

    #[test]
    fn solve_examples() {
        let sol = BitMatrix::identity(3).solve_or_kernel(&bv("101")).unwrap();
        assert_eq!(sol.particular, Some(bv("101")));
        assert!(sol.kernel.is_empty());

        let zero = BitMatrix::zeros(2, 3);
        let sol = zero.solve_or_kernel(&bv("00")).unwrap();
        assert_eq!(sol.particular, Some(bv("000")));
        assert_eq!(sol.kernel.len(), 3);

        let sol = zero.solve_or_kernel(&bv("01")).unwrap();
        assert_eq!(sol.particular, None);

        assert!(zero.solve_or_kernel(&bv("010")).is_err());
    }

    #[test]
    fn wide_solve_spans_multiple_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = BitMatrix::random(70, 150, &mut rng);
        let x = BitVec::random(150, &mut rng);
        let b = m.mul_vec(&x).unwrap();
        let sol = m.solve_or_kernel(&b).unwrap();
        let p = sol.particular.unwrap();
        assert_eq!(m.mul_vec(&p).unwrap(), b);
        assert_eq!(sol.kernel.len(), 150 - m.rank());
        for k in &sol.kernel {
            assert!(m.mul_vec(k).unwrap().is_zero());
        }
    }

    #[test]
    fn random_full_rank_examples() {
        assert_eq!(BitMatrix::random_full_rank(1, 1, 1234).unwrap(), mat(&["1"]));
        let m = BitMatrix::random_full_rank(2, 4, 7).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 4));
        assert_eq!(rank_by_span(&m), 2);
        let sq = BitMatrix::random_full_rank(4, 4, 1).unwrap();
        assert_eq!(rank_by_span(&sq), 4);
        assert_eq!(
            BitMatrix::random_full_rank(5, 4, 0),
            Err(DimensionError::TooManyRows { rows: 5, cols: 4 })
        );
        assert_eq!(BitMatrix::random_full_rank(3, 9, 42), BitMatrix::random_full_rank(3, 9, 42));
    }

    #[test]
    fn random_full_rank_hundred_seeds() {
        for seed in 0..100 {
            let m = BitMatrix::random_full_rank(8, 12, seed).unwrap();
            assert_eq!(rank_by_span(&m), 8, "seed {seed}");
        }
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(bv("0110").to_string(), "0110");
        assert!(matches!(
            "01x".parse::<BitVec>(),
            Err(DimensionError::InvalidBit { position: 2, found: 'x' })
        ));
        assert_eq!(BitVec::ones(3), bv("111"));
        assert!(BitMatrix::parse_rows("101\n11\n").is_err());
    }

    fn arb_bitvec(len: usize) -> impl Strategy<Value = BitVec> {
        proptest::collection::vec(any::<bool>(), len).prop_map(|b| BitVec::from_bools(&b))
    }

    proptest! {
        #[test]
        fn parity_over_symmetric_difference(
            (v, m1, m2) in (1usize..200).prop_flat_map(|n| (arb_bitvec(n), arb_bitvec(n), arb_bitvec(n)))
        ) {
            let lhs = v.masked_parity(&m1).unwrap() ^ v.masked_parity(&m2).unwrap();
            let rhs = v.masked_parity(&m1.xor(&m2).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn rank_invariant_under_row_ops(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..80) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = BitMatrix::random(rows, cols, &mut rng);
            let r = m.rank();
            prop_assert!(r <= rows.min(cols));
            let mut shuffled = m.rows().to_vec();
            let i = rng.gen_range(0..rows);
            let j = rng.gen_range(0..rows);
            if i != j {
                let add = shuffled[j].clone();
                shuffled[i].xor_in_place(&add).unwrap();
            }
            shuffled.swap(0, rows - 1);
            prop_assert_eq!(BitMatrix::from_rows(shuffled).unwrap().rank(), r);
            if rows <= 10 {
                prop_assert_eq!(rank_by_span(&m), r);
            }
        }

        #[test]
        fn display_round_trip(v in (0usize..150).prop_flat_map(arb_bitvec)) {
            prop_assert_eq!(v.to_string().parse::<BitVec>().unwrap(), v);
        }
    }
}
