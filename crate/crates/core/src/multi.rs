//! Strictly increasing multi-indices `i1 < ... < ik`, stored as bitmasks.
//!
//! The basis of degree `k` in dimension `n` is listed in lexicographic order of
//! the sorted tuples, which is also the storage order of form components.

pub type Mask = u8;

/// Binomial coefficient for the small sizes used here.
pub fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Increasing multi-indices of length `k` over `0..n`, in lexicographic order.
pub fn basis(n: usize, k: usize) -> Vec<Mask> {
    fn rec(start: usize, n: usize, k: usize, acc: Mask, out: &mut Vec<Mask>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for i in start..n {
            rec(i + 1, n, k - 1, acc | (1 << i), out);
        }
    }
    let mut out = Vec::with_capacity(binom(n, k));
    if k <= n {
        rec(0, n, k, 0, &mut out);
    }
    out
}

/// Storage position of `mask` inside `basis(n, popcount(mask))`.
pub fn position(n: usize, mask: Mask) -> usize {
    let k = mask.count_ones() as usize;
    basis(n, k)
        .iter()
        .position(|&m| m == mask)
        .expect("mask outside the basis")
}

/// The indices of `mask` in increasing order.
pub fn indices(mask: Mask) -> impl Iterator<Item = usize> {
    (0..8).filter(move |i| mask & (1 << i) != 0)
}

/// Number of entries of `mask` strictly below `l`, i.e. the slot `l` occupies.
#[inline]
pub fn rank(mask: Mask, l: usize) -> usize {
    (mask & ((1u16 << l) - 1) as Mask).count_ones() as usize
}

#[inline]
pub fn parity(count: usize) -> f64 {
    if count % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of `dx^I ∧ dx^J` relative to `dx^{I∪J}`; zero when they overlap.
pub fn wedge_sign(i: Mask, j: Mask) -> f64 {
    if i & j != 0 {
        return 0.0;
    }
    let mut inversions = 0;
    for a in indices(i) {
        inversions += rank(j, a);
    }
    parity(inversions)
}

/// Precomputed lookup tables for one dimension.
#[derive(Clone, Debug)]
pub struct Table {
    pub n: usize,
    pub bases: Vec<Vec<Mask>>,
    pos: [usize; 256],
}

impl Table {
    pub fn new(n: usize) -> Self {
        let bases: Vec<Vec<Mask>> = (0..=n).map(|k| basis(n, k)).collect();
        let mut pos = [usize::MAX; 256];
        for b in &bases {
            for (i, &m) in b.iter().enumerate() {
                pos[m as usize] = i;
            }
        }
        Self { n, bases, pos }
    }

    #[inline]
    pub fn pos(&self, mask: Mask) -> usize {
        self.pos[mask as usize]
    }

    pub fn count(&self, k: usize) -> usize {
        self.bases.get(k).map_or(0, Vec::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_order() {
        assert_eq!(basis(3, 2), vec![0b011, 0b101, 0b110]);
        assert_eq!(basis(3, 1), vec![0b001, 0b010, 0b100]);
        assert_eq!(basis(2, 0), vec![0]);
        assert_eq!(basis(3, 3), vec![0b111]);
        for n in 2..=3 {
            for k in 0..=n {
                assert_eq!(basis(n, k).len(), binom(n, k));
            }
        }
    }

    #[test]
    fn wedge_signs() {
        assert_eq!(wedge_sign(0b001, 0b010), 1.0);
        assert_eq!(wedge_sign(0b010, 0b001), -1.0);
        assert_eq!(wedge_sign(0b100, 0b011), 1.0);
        assert_eq!(wedge_sign(0b010, 0b101), -1.0);
        assert_eq!(wedge_sign(0b010, 0b010), 0.0);
    }

    #[test]
    fn rank_counts_lower_entries() {
        assert_eq!(rank(0b101, 0), 0);
        assert_eq!(rank(0b101, 2), 1);
        assert_eq!(rank(0b111, 2), 2);
    }
}
