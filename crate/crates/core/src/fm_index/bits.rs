//! Plain bitvector with constant-time rank and logarithmic select.

const WORDS_PER_BLOCK: usize = 8;
const BITS_PER_BLOCK: usize = WORDS_PER_BLOCK * 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
    /// Number of ones before each block, plus a final total.
    block_ranks: Vec<u64>,
}

impl BitVector {
    pub fn from_words(words: Vec<u64>, len: usize) -> Self {
        debug_assert!(words.len() == len.div_ceil(64));
        let mut bv = BitVector {
            words,
            len,
            block_ranks: Vec::new(),
        };
        bv.build_ranks();
        bv
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if bit {
                *words.last_mut().unwrap() |= 1 << (len % 64);
            }
            len += 1;
        }
        Self::from_words(words, len)
    }

    fn build_ranks(&mut self) {
        let blocks = self.words.len().div_ceil(WORDS_PER_BLOCK);
        let mut ranks = Vec::with_capacity(blocks + 1);
        let mut acc = 0u64;
        for chunk in self.words.chunks(WORDS_PER_BLOCK) {
            ranks.push(acc);
            acc += chunk.iter().map(|w| w.count_ones() as u64).sum::<u64>();
        }
        ranks.push(acc);
        self.block_ranks = ranks;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> usize {
        *self.block_ranks.last().unwrap_or(&0) as usize
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Ones in `[0, i)`.
    #[inline]
    pub fn rank1(&self, i: usize) -> usize {
        debug_assert!(i <= self.len);
        let word = i / 64;
        let block = word / WORDS_PER_BLOCK;
        let mut r = self.block_ranks[block];
        for w in &self.words[block * WORDS_PER_BLOCK..word] {
            r += w.count_ones() as u64;
        }
        let bit = i % 64;
        if bit > 0 {
            r += (self.words[word] & ((1u64 << bit) - 1)).count_ones() as u64;
        }
        r as usize
    }

    #[inline]
    pub fn rank0(&self, i: usize) -> usize {
        i - self.rank1(i)
    }

    /// Position of the `k`-th one (0-based).
    pub fn select1(&self, k: usize) -> Option<usize> {
        if k >= self.count_ones() {
            return None;
        }
        let k = k as u64;
        // last block whose starting rank is <= k
        let block = self.block_ranks.partition_point(|&r| r <= k) - 1;
        let mut remaining = k - self.block_ranks[block];
        for (wi, &w) in self.words[block * WORDS_PER_BLOCK..]
            .iter()
            .enumerate()
            .take(WORDS_PER_BLOCK)
        {
            let ones = w.count_ones() as u64;
            if remaining < ones {
                return Some(
                    (block * WORDS_PER_BLOCK + wi) * 64 + select_in_word(w, remaining as u32),
                );
            }
            remaining -= ones;
        }
        unreachable!("block ranks inconsistent with words")
    }

    /// Position of the `k`-th zero (0-based).
    pub fn select0(&self, k: usize) -> Option<usize> {
        if k >= self.len - self.count_ones() {
            return None;
        }
        let k = k as u64;
        let zeros_before = |b: usize| (b * BITS_PER_BLOCK) as u64 - self.block_ranks[b];
        let blocks = self.block_ranks.len() - 1;
        let (mut lo, mut hi) = (0, blocks);
        // last block whose starting zero count is <= k
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if zeros_before(mid) <= k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let block = lo;
        let mut remaining = k - zeros_before(block);
        for (wi, &w) in self.words[block * WORDS_PER_BLOCK..]
            .iter()
            .enumerate()
            .take(WORDS_PER_BLOCK)
        {
            let zeros = w.count_zeros() as u64;
            if remaining < zeros {
                return Some(
                    (block * WORDS_PER_BLOCK + wi) * 64 + select_in_word(!w, remaining as u32),
                );
            }
            remaining -= zeros;
        }
        unreachable!("block ranks inconsistent with words")
    }

    pub fn size_in_bytes(&self) -> usize {
        self.words.len() * 8 + self.block_ranks.len() * 8
    }
}

#[inline]
fn select_in_word(mut w: u64, k: u32) -> usize {
    for _ in 0..k {
        w &= w - 1;
    }
    w.trailing_zeros() as usize
}
