//! Binary sample matrices: one observation per row, bits packed into u64
//! words. Rows are unlimited in width for ingestion and Hamming work; the
//! exact-table views require n_cols <= MAX_N.

use crate::coords::{JointTable, MAX_N};
use crate::error::{Error, Result};
use rand::Rng;

/// Row-major packed 0/1 matrix. Bit c of a row is variable c+1, matching the
/// SubsetIndex convention.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMatrix {
    n_cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BinaryMatrix {
    pub fn new(n_cols: usize) -> BinaryMatrix {
        assert!(n_cols >= 1, "matrix needs at least one column");
        BinaryMatrix {
            n_cols,
            words_per_row: n_cols.div_ceil(64),
            words: Vec::new(),
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.words.len() / self.words_per_row
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Appends a row given as 0/1 flags, one per column.
    pub fn push_row_bits(&mut self, bits: &[bool]) -> Result<()> {
        if bits.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: bits.len(),
            });
        }
        let base = self.words.len();
        self.words.extend(std::iter::repeat(0u64).take(self.words_per_row));
        for (c, &bit) in bits.iter().enumerate() {
            if bit {
                self.words[base + c / 64] |= 1u64 << (c % 64);
            }
        }
        Ok(())
    }

    /// Appends a row from a state bitmask; the matrix must be at most MAX_N
    /// columns wide.
    pub fn push_mask(&mut self, mask: u32) {
        assert!(self.n_cols <= MAX_N && (mask as u64) < (1u64 << self.n_cols));
        let base = self.words.len();
        self.words.extend(std::iter::repeat(0u64).take(self.words_per_row));
        self.words[base] = mask as u64;
    }

    pub fn bit(&self, row: usize, col: usize) -> bool {
        assert!(row < self.n_rows() && col < self.n_cols);
        let w = self.words[row * self.words_per_row + col / 64];
        (w >> (col % 64)) & 1 == 1
    }

    /// Row as a cell index; requires n_cols <= MAX_N.
    pub fn row_mask(&self, row: usize) -> u32 {
        assert!(self.n_cols <= MAX_N);
        self.words[row * self.words_per_row] as u32
    }

    /// Row as a wide state; requires n_cols <= 128.
    pub fn row_bits(&self, row: usize) -> u128 {
        assert!(self.n_cols <= 128);
        let base = row * self.words_per_row;
        let lo = self.words[base] as u128;
        let hi = if self.words_per_row > 1 {
            (self.words[base + 1] as u128) << 64
        } else {
            0
        };
        lo | hi
    }

    /// Hamming distance between a row of self and a row of other.
    pub fn hamming(&self, row: usize, other: &BinaryMatrix, other_row: usize) -> u32 {
        assert_eq!(self.n_cols, other.n_cols);
        let a = &self.words[row * self.words_per_row..][..self.words_per_row];
        let b = &other.words[other_row * other.words_per_row..][..other.words_per_row];
        a.iter()
            .zip(b)
            .map(|(x, y)| (x ^ y).count_ones())
            .sum()
    }

    /// New matrix holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> BinaryMatrix {
        let mut out = BinaryMatrix::new(self.n_cols);
        for &r in rows {
            let base = r * self.words_per_row;
            out.words
                .extend_from_slice(&self.words[base..base + self.words_per_row]);
        }
        out
    }

    /// Cell occupation counts over the 2^n states; requires n_cols <= MAX_N.
    pub fn counts(&self) -> Result<Vec<f64>> {
        if self.n_cols > MAX_N {
            return Err(Error::SizeCap {
                n: self.n_cols,
                cap: MAX_N,
            });
        }
        let mut counts = vec![0.0f64; 1 << self.n_cols];
        for r in 0..self.n_rows() {
            counts[self.row_mask(r) as usize] += 1.0;
        }
        Ok(counts)
    }

    /// Empirical distribution of the rows (EPS_P floor on empty cells).
    pub fn empirical_table(&self) -> Result<JointTable> {
        if self.is_empty() {
            return Err(Error::InsufficientSamples { need: 1, got: 0 });
        }
        JointTable::from_empirical(self.n_cols, &self.counts()?)
    }

    /// Occupation counts of the four (var_i, var_j) cells, var_i on bit 0 and
    /// var_j on bit 1 as in `JointTable::marginal_pair`. Variables 1-based.
    pub fn pair_counts(&self, var_i: usize, var_j: usize) -> [f64; 4] {
        assert!(var_i != var_j && var_i >= 1 && var_j >= 1);
        assert!(var_i <= self.n_cols && var_j <= self.n_cols);
        let mut out = [0.0f64; 4];
        for r in 0..self.n_rows() {
            let cell = (self.bit(r, var_i - 1) as usize) | ((self.bit(r, var_j - 1) as usize) << 1);
            out[cell] += 1.0;
        }
        out
    }
}

/// n_rows i.i.d. draws from t by inverse CDF over the cells.
pub fn sample_rows(t: &JointTable, n_rows: usize, rng: &mut impl Rng) -> BinaryMatrix {
    let mut out = BinaryMatrix::new(t.n());
    for _ in 0..n_rows {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut cell = t.len() - 1;
        for (i, &p) in t.probs().iter().enumerate() {
            acc += p;
            if u < acc {
                cell = i;
                break;
            }
        }
        out.push_mask(cell as u32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::total_variation;
    use crate::stream::rng_stream;

    #[test]
    fn rows_round_trip_bits_and_masks() {
        let mut m = BinaryMatrix::new(3);
        m.push_row_bits(&[true, false, true]).unwrap();
        m.push_mask(0b010);
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row_mask(0), 0b101);
        assert_eq!(m.row_bits(1), 0b010);
        assert!(m.bit(0, 0) && !m.bit(0, 1) && m.bit(0, 2));
        assert!(m.push_row_bits(&[true]).is_err());
    }

    #[test]
    fn wide_rows_pack_across_words() {
        let mut m = BinaryMatrix::new(100);
        let mut bits = vec![false; 100];
        bits[0] = true;
        bits[63] = true;
        bits[64] = true;
        bits[99] = true;
        m.push_row_bits(&bits).unwrap();
        m.push_row_bits(&vec![false; 100]).unwrap();
        assert_eq!(
            m.row_bits(0),
            1 | (1u128 << 63) | (1u128 << 64) | (1u128 << 99)
        );
        assert_eq!(m.hamming(0, &m, 1), 4);
        assert!(m.counts().is_err());
    }

    #[test]
    fn counts_and_pair_counts_agree_with_bits() {
        let mut m = BinaryMatrix::new(2);
        for mask in [0b00, 0b01, 0b01, 0b10, 0b11, 0b11, 0b11] {
            m.push_mask(mask);
        }
        assert_eq!(m.counts().unwrap(), vec![1.0, 2.0, 1.0, 3.0]);
        assert_eq!(m.pair_counts(1, 2), [1.0, 2.0, 1.0, 3.0]);
        // Swapping the variable order swaps the two middle cells.
        assert_eq!(m.pair_counts(2, 1), [1.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn select_rows_reorders() {
        let mut m = BinaryMatrix::new(4);
        for mask in [1, 2, 4, 8] {
            m.push_mask(mask);
        }
        let s = m.select_rows(&[3, 1]);
        assert_eq!(s.n_rows(), 2);
        assert_eq!(s.row_mask(0), 8);
        assert_eq!(s.row_mask(1), 2);
    }

    #[test]
    fn sampled_rows_concentrate_on_the_table() {
        let t = JointTable::new(2, vec![0.4, 0.2, 0.3, 0.1]).unwrap();
        let mut rng = rng_stream(7, &[1]);
        let m = sample_rows(&t, 60_000, &mut rng);
        let emp = m.empirical_table().unwrap();
        assert!(total_variation(&emp, &t) < 0.01);
        assert_eq!(sample_rows(&t, 0, &mut rng).n_rows(), 0);
    }
}
