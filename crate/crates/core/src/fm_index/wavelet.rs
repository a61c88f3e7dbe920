//! Balanced, pointerless (levelwise) wavelet tree over integer symbols.
//!
//! Level `l` stores bit `width - 1 - l` of every symbol, with the symbols of
//! each node laid out contiguously in the order induced by the higher bits.
//! A node is therefore an interval `[start, end)` that is identical on every
//! level; its left child is the prefix of zeros and its right child the
//! suffix of ones.

use super::bits::BitVector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveletTree {
    levels: Vec<BitVector>,
    width: u32,
    len: usize,
}

/// Bits needed to represent every symbol below `alphabet`.
pub fn symbol_width(alphabet: usize) -> u32 {
    if alphabet <= 2 {
        1
    } else {
        usize::BITS - (alphabet - 1).leading_zeros()
    }
}

impl WaveletTree {
    pub fn new(symbols: &[u32], alphabet: usize) -> Self {
        let width = symbol_width(alphabet);
        let mut levels = Vec::with_capacity(width as usize);
        let mut current = symbols.to_vec();
        for l in 0..width {
            let shift = width - 1 - l;
            levels.push(BitVector::from_bits(
                current.iter().map(|&s| (s >> shift) & 1 == 1),
            ));
            // stable: keeps every node contiguous, zeros before ones
            current.sort_by_key(|&s| s >> shift);
        }
        WaveletTree {
            levels,
            width,
            len: symbols.len(),
        }
    }

    pub(crate) fn from_levels(levels: Vec<BitVector>, width: u32, len: usize) -> Self {
        WaveletTree { levels, width, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub(crate) fn levels(&self) -> &[BitVector] {
        &self.levels
    }

    #[inline]
    fn bit(&self, sym: u32, level: usize) -> bool {
        (sym >> (self.width - 1 - level as u32)) & 1 == 1
    }

    pub fn access(&self, mut i: usize) -> u32 {
        debug_assert!(i < self.len);
        let (mut start, mut end) = (0, self.len);
        let mut sym = 0u32;
        for bv in &self.levels {
            let ones_start = bv.rank1(start);
            let ones_end = bv.rank1(end);
            let zeros = (end - start) - (ones_end - ones_start);
            let pos = start + i;
            sym <<= 1;
            if bv.get(pos) {
                sym |= 1;
                i = bv.rank1(pos) - ones_start;
                start += zeros;
            } else {
                i -= bv.rank1(pos) - ones_start;
                end = start + zeros;
            }
        }
        sym
    }

    /// Occurrences of `sym` in `[0, i)`.
    pub fn rank(&self, sym: u32, mut i: usize) -> usize {
        debug_assert!(i <= self.len);
        if self.width < 32 && sym >> self.width != 0 {
            return 0;
        }
        let (mut start, mut end) = (0, self.len);
        for (l, bv) in self.levels.iter().enumerate() {
            if i == 0 {
                return 0;
            }
            let ones_start = bv.rank1(start);
            let ones_end = bv.rank1(end);
            let zeros = (end - start) - (ones_end - ones_start);
            let ones_i = bv.rank1(start + i) - ones_start;
            if self.bit(sym, l) {
                i = ones_i;
                start += zeros;
            } else {
                i -= ones_i;
                end = start + zeros;
            }
        }
        i
    }

    /// Position of the `k`-th (0-based) occurrence of `sym`.
    pub fn select(&self, sym: u32, k: usize) -> Option<usize> {
        if self.width < 32 && sym >> self.width != 0 {
            return None;
        }
        let mut starts = Vec::with_capacity(self.levels.len());
        let (mut start, mut end) = (0, self.len);
        for (l, bv) in self.levels.iter().enumerate() {
            starts.push(start);
            let ones_start = bv.rank1(start);
            let zeros = (end - start) - (bv.rank1(end) - ones_start);
            if self.bit(sym, l) {
                start += zeros;
            } else {
                end = start + zeros;
            }
        }
        if k >= end - start {
            return None;
        }
        let mut pos = k;
        for (l, bv) in self.levels.iter().enumerate().rev() {
            let start = starts[l];
            pos = if self.bit(sym, l) {
                bv.select1(bv.rank1(start) + pos)? - start
            } else {
                bv.select0(bv.rank0(start) + pos)? - start
            };
        }
        Some(pos)
    }

    pub fn size_in_bytes(&self) -> usize {
        self.levels.iter().map(BitVector::size_in_bytes).sum()
    }
}
