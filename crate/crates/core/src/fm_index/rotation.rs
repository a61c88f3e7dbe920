//! Lexicographic sorting of the cyclic rotations of a token text by prefix
//! doubling with radix passes, O(n log n).

/// Start positions of the rotations of `text`, in sorted order.
///
/// Rotations are compared cyclically. When the text is periodic some
/// rotations are equal and no order of them keeps the LF-mapping a single
/// cycle, so in that case the final symbol is treated as a unique minimum
/// (equivalently, suffixes are sorted).
pub fn sort_rotations(text: &[u32]) -> Vec<u32> {
    let n = text.len();
    if n == 0 {
        return Vec::new();
    }
    let (order, distinct) = cyclic_order(text.iter().map(|&s| s as u64));
    if distinct {
        return order;
    }
    let last = n - 1;
    let marked = text
        .iter()
        .enumerate()
        .map(|(i, &s)| if i == last { 0 } else { s as u64 + 1 });
    let (order, distinct) = cyclic_order(marked);
    debug_assert!(distinct);
    order
}

/// Returns the sorted rotation order and whether all rotations are distinct.
fn cyclic_order(symbols: impl Iterator<Item = u64>) -> (Vec<u32>, bool) {
    let symbols: Vec<u64> = symbols.collect();
    let n = symbols.len();

    // dense initial ranks
    let mut distinct_syms = symbols.clone();
    distinct_syms.sort_unstable();
    distinct_syms.dedup();
    let mut rank: Vec<u32> = symbols
        .iter()
        .map(|s| distinct_syms.binary_search(s).unwrap() as u32)
        .collect();
    let mut classes = distinct_syms.len();

    let mut order: Vec<u32> = (0..n as u32).collect();
    counting_sort(&mut order, &rank, classes);

    let mut shifted = vec![0u32; n];
    let mut next_rank = vec![0u32; n];
    let mut k = 1usize;
    while classes < n && k < n {
        // order by second key: rotation i+k is in `order`, so i = order - k
        for (dst, &p) in shifted.iter_mut().zip(&order) {
            *dst = ((p as usize + n - k) % n) as u32;
        }
        order.copy_from_slice(&shifted);
        counting_sort(&mut order, &rank, classes);

        let mut c = 0u32;
        next_rank[order[0] as usize] = 0;
        for w in order.windows(2) {
            let (a, b) = (w[0] as usize, w[1] as usize);
            if rank[a] != rank[b] || rank[(a + k) % n] != rank[(b + k) % n] {
                c += 1;
            }
            next_rank[b] = c;
        }
        std::mem::swap(&mut rank, &mut next_rank);
        classes = c as usize + 1;
        k *= 2;
    }
    (order, classes == n)
}

/// Stable counting sort of `items` by `key[item]`.
fn counting_sort(items: &mut [u32], key: &[u32], classes: usize) {
    let mut counts = vec![0usize; classes + 1];
    for &i in items.iter() {
        counts[key[i as usize] as usize + 1] += 1;
    }
    for c in 1..counts.len() {
        counts[c] += counts[c - 1];
    }
    let mut out = vec![0u32; items.len()];
    for &i in items.iter() {
        let slot = &mut counts[key[i as usize] as usize];
        out[*slot] = i;
        *slot += 1;
    }
    items.copy_from_slice(&out);
}
