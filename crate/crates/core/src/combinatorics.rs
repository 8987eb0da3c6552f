//! Switch patterns: permutations, derangements and condensed derangement sets.
//!
//! A [`Permutation`] of `n` stations is stored as a target-to-source map:
//! `source_of[j]` is the station whose signal is delivered to station `j`.
//! Indices are 0-based internally; [`Permutation::to_one_based`] and the
//! `Display` impl use the 1-based numbering of the station labels.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Default upper bound on `n` for exhaustive derangement enumeration.
pub const DERANGEMENT_LIMIT: usize = 8;
/// Default upper bound on `n` for exhaustive condensed-set search.
pub const CONDENSED_LIMIT: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    source_of: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from a 0-based source map, checking bijectivity.
    pub fn new(source_of: Vec<usize>) -> Result<Self> {
        let n = source_of.len();
        if n == 0 {
            return Err(Error::InvalidSize {
                n,
                reason: "permutation needs at least one station".into(),
            });
        }
        let mut seen = vec![false; n];
        for (j, &i) in source_of.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidPermutation(format!(
                    "source {} of station {} out of range 1..={}",
                    i + 1,
                    j + 1,
                    n
                )));
            }
            if seen[i] {
                return Err(Error::InvalidPermutation(format!(
                    "station {} is the source of more than one target",
                    i + 1
                )));
            }
            seen[i] = true;
        }
        Ok(Self { source_of })
    }

    /// Builds a permutation from the 1-based notation, e.g. `[4, 3, 2, 1]`.
    pub fn from_one_based(source_of: &[usize]) -> Result<Self> {
        let mut zero = Vec::with_capacity(source_of.len());
        for &s in source_of {
            if s == 0 {
                return Err(Error::InvalidPermutation(
                    "station numbers are 1-based".into(),
                ));
            }
            zero.push(s - 1);
        }
        Self::new(zero)
    }

    /// Like [`Permutation::from_one_based`] but additionally requires a zero diagonal.
    pub fn derangement_from_one_based(source_of: &[usize]) -> Result<Self> {
        let p = Self::from_one_based(source_of)?;
        if !p.is_derangement() {
            return Err(Error::InvalidPermutation(format!(
                "{p} has a fixed point"
            )));
        }
        Ok(p)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            source_of: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.source_of.len()
    }

    pub fn source_of(&self) -> &[usize] {
        &self.source_of
    }

    /// Station that transmits to `j`.
    pub fn source(&self, j: usize) -> usize {
        self.source_of[j]
    }

    /// Inverse map: `target_of()[i]` is the station that receives from `i`.
    pub fn target_of(&self) -> Vec<usize> {
        let mut t = vec![0; self.n()];
        for (j, &i) in self.source_of.iter().enumerate() {
            t[i] = j;
        }
        t
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.source_of.iter().map(|i| i + 1).collect()
    }

    pub fn is_derangement(&self) -> bool {
        self.source_of.iter().enumerate().all(|(j, &i)| i != j)
    }

    /// Switch matrix: row `j` has its single 1 in column `source_of[j]`.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        self.source_of
            .iter()
            .map(|&i| {
                let mut row = vec![0u8; n];
                row[i] = 1;
                row
            })
            .collect()
    }

    /// Disjoint cycles, each starting at its smallest station, ordered by that station.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                cycle.push(j);
                j = self.source_of[j];
            }
            out.push(cycle);
        }
        out
    }

    /// Bitmask of the covered `(row, column)` cells, `row * n + column`.
    fn cell_mask(&self) -> u64 {
        let n = self.n();
        self.source_of
            .iter()
            .enumerate()
            .fold(0u64, |m, (j, &i)| m | 1u64 << (j * n + i))
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, s) in self.source_of.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", s + 1)?;
        }
        write!(f, "]")
    }
}

/// An unordered set of `n - 1` derangements whose matrices sum to `J - I`.
///
/// Members are kept sorted in canonical (lexicographic) order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CondensedSet {
    members: Vec<Permutation>,
}

impl CondensedSet {
    pub fn new(mut members: Vec<Permutation>) -> Result<Self> {
        let n = members
            .first()
            .map(Permutation::n)
            .ok_or_else(|| Error::InvalidSize {
                n: 0,
                reason: "empty condensed set".into(),
            })?;
        if members.len() != n - 1 {
            return Err(Error::InvalidPermutation(format!(
                "condensed set for n={n} needs {} members, got {}",
                n - 1,
                members.len()
            )));
        }
        let mut cover = vec![vec![0u32; n]; n];
        for p in &members {
            if p.n() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    found: p.n(),
                });
            }
            if !p.is_derangement() {
                return Err(Error::InvalidPermutation(format!("{p} is not a derangement")));
            }
            for (j, &i) in p.source_of().iter().enumerate() {
                cover[j][i] += 1;
            }
        }
        for (j, row) in cover.iter().enumerate() {
            for (i, &c) in row.iter().enumerate() {
                if i != j && c != 1 {
                    return Err(Error::InvalidPermutation(format!(
                        "cell ({}, {}) covered {c} times",
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        members.sort();
        Ok(Self { members })
    }

    pub fn n(&self) -> usize {
        self.members[0].n()
    }

    pub fn members(&self) -> &[Permutation] {
        &self.members
    }

    /// Element-wise sum of the member matrices.
    pub fn matrix_sum(&self) -> Vec<Vec<u32>> {
        let n = self.n();
        let mut sum = vec![vec![0u32; n]; n];
        for p in &self.members {
            for (j, &i) in p.source_of().iter().enumerate() {
                sum[j][i] += 1;
            }
        }
        sum
    }
}

impl fmt::Display for CondensedSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, p) in self.members.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

/// Number of derangements of `n` elements, `!n = (n-1)(!(n-1) + !(n-2))`.
///
/// Exact for `n <= 34`; larger values overflow `u128` and panic.
pub fn subfactorial(n: u32) -> u128 {
    let (mut prev, mut cur) = (1u128, 0u128); // !0, !1
    if n == 0 {
        return prev;
    }
    for k in 2..=n as u128 {
        let next = (k - 1)
            .checked_mul(prev + cur)
            .expect("subfactorial overflows u128 beyond n = 34");
        prev = cur;
        cur = next;
    }
    cur
}

/// All derangements of `n` stations in lexicographic order of `source_of`.
pub fn enumerate_derangements(n: usize) -> Result<Vec<Permutation>> {
    enumerate_derangements_bounded(n, DERANGEMENT_LIMIT)
}

pub fn enumerate_derangements_bounded(n: usize, limit: usize) -> Result<Vec<Permutation>> {
    check_size(n, limit)?;
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    let mut used = vec![false; n];
    derange_rec(n, &mut current, &mut used, &mut out);
    Ok(out)
}

fn derange_rec(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
    let j = cur.len();
    if j == n {
        out.push(Permutation {
            source_of: cur.clone(),
        });
        return;
    }
    for i in 0..n {
        if i == j || used[i] {
            continue;
        }
        used[i] = true;
        cur.push(i);
        derange_rec(n, cur, used, out);
        cur.pop();
        used[i] = false;
    }
}

/// True iff the permutation is an involution, i.e. its switch matrix is symmetric
/// and the stations exchange traffic in pairs.
pub fn is_pairwise(p: &Permutation) -> bool {
    p.source_of
        .iter()
        .enumerate()
        .all(|(j, &i)| p.source_of[i] == j)
}

/// All condensed derangement sets of size `n`, deduplicated and sorted.
pub fn enumerate_condensed_sets(n: usize) -> Result<Vec<CondensedSet>> {
    enumerate_condensed_sets_bounded(n, CONDENSED_LIMIT)
}

pub fn enumerate_condensed_sets_bounded(n: usize, limit: usize) -> Result<Vec<CondensedSet>> {
    check_size(n, limit.min(DERANGEMENT_LIMIT))?;
    let ders = enumerate_derangements_bounded(n, DERANGEMENT_LIMIT)?;
    let masks: Vec<u64> = ders.iter().map(Permutation::cell_mask).collect();
    let full: u64 = (0..n)
        .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| 1u64 << (j * n + i)))
        .fold(0, |m, b| m | b);

    let mut found = BTreeSet::new();
    let mut chosen = Vec::with_capacity(n - 1);
    condensed_rec(full, 0, &ders, &masks, &mut chosen, &mut found);
    Ok(found
        .into_iter()
        .map(|keys: Vec<usize>| CondensedSet {
            members: keys.into_iter().map(|k| ders[k].clone()).collect(),
        })
        .collect())
}

fn condensed_rec(
    full: u64,
    covered: u64,
    ders: &[Permutation],
    masks: &[u64],
    chosen: &mut Vec<usize>,
    found: &mut BTreeSet<Vec<usize>>,
) {
    if covered == full {
        let mut keys = chosen.clone();
        keys.sort_unstable();
        found.insert(keys);
        return;
    }
    // Smallest uncovered off-diagonal cell; exactly one member must cover it.
    let free = full & !covered;
    let cell = free.trailing_zeros() as usize;
    let bit = 1u64 << cell;
    for k in 0..ders.len() {
        let m = masks[k];
        if m & bit != 0 && m & covered == 0 {
            chosen.push(k);
            condensed_rec(full, covered | m, ders, masks, chosen, found);
            chosen.pop();
        }
    }
}

fn check_size(n: usize, limit: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidSize {
            n,
            reason: "at least 2 stations are needed".into(),
        });
    }
    if n > limit {
        return Err(Error::InvalidSize {
            n,
            reason: format!("exhaustive enumeration bounded at n <= {limit}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[usize]) -> Permutation {
        Permutation::from_one_based(v).unwrap()
    }

    #[test]
    fn subfactorial_small_values() {
        assert_eq!(subfactorial(0), 1);
        assert_eq!(subfactorial(1), 0);
        assert_eq!(subfactorial(2), 1);
        assert_eq!(subfactorial(3), 2);
        assert_eq!(subfactorial(4), 9);
        assert_eq!(subfactorial(5), 44);
    }

    #[test]
    fn subfactorial_matches_alternating_recurrence() {
        // d_n = n d_{n-1} + (-1)^n, d_1 = 0
        let mut d: i128 = 0;
        for n in 2..=30u32 {
            d = n as i128 * d + if n % 2 == 0 { 1 } else { -1 };
            assert_eq!(subfactorial(n) as i128, d, "n={n}");
        }
    }

    #[test]
    fn derangement_ratio_approaches_inverse_e() {
        let fact10: u128 = (1..=10u128).product();
        let ratio = subfactorial(10) as f64 / fact10 as f64;
        assert!((ratio - (-1.0f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn derangements_of_two_and_three() {
        assert_eq!(enumerate_derangements(2).unwrap(), vec![p(&[2, 1])]);
        assert_eq!(
            enumerate_derangements(3).unwrap(),
            vec![p(&[2, 3, 1]), p(&[3, 1, 2])]
        );
    }

    #[test]
    fn derangement_counts_match_subfactorial() {
        for n in 2..=8 {
            let ders = enumerate_derangements(n).unwrap();
            assert_eq!(ders.len() as u128, subfactorial(n as u32));
            assert!(ders.iter().all(Permutation::is_derangement));
            assert!(ders.windows(2).all(|w| w[0] < w[1]), "sorted, no duplicates");
        }
    }

    #[test]
    fn enumerate_rejects_bad_sizes() {
        assert!(matches!(
            enumerate_derangements(1),
            Err(Error::InvalidSize { n: 1, .. })
        ));
        assert!(enumerate_derangements(9).is_err());
        assert!(enumerate_derangements_bounded(9, 9).is_ok());
        assert!(enumerate_condensed_sets(0).is_err());
        assert!(enumerate_condensed_sets(7).is_err());
    }

    #[test]
    fn pairwise_classification() {
        assert!(is_pairwise(&p(&[4, 3, 2, 1])));
        assert!(!is_pairwise(&p(&[4, 3, 1, 2])));
        assert!(!is_pairwise(&p(&[2, 3, 1])));
        assert!(is_pairwise(&p(&[2, 1])));
    }

    #[test]
    fn condensed_sets_small_n() {
        assert_eq!(enumerate_condensed_sets(2).unwrap().len(), 1);
        let three = enumerate_condensed_sets(3).unwrap();
        assert_eq!(three.len(), 1);
        assert_eq!(three[0].members(), &[p(&[2, 3, 1]), p(&[3, 1, 2])]);
    }

    #[test]
    fn condensed_sets_satisfy_definition() {
        for n in 2..=5 {
            for set in enumerate_condensed_sets(n).unwrap() {
                let sum = set.matrix_sum();
                for (j, row) in sum.iter().enumerate() {
                    for (i, &c) in row.iter().enumerate() {
                        assert_eq!(c, u32::from(i != j));
                    }
                }
            }
        }
    }

    #[test]
    fn condensed_set_validation() {
        let ok = CondensedSet::new(vec![p(&[3, 1, 2]), p(&[2, 3, 1])]).unwrap();
        assert_eq!(ok.members()[0], p(&[2, 3, 1]));
        assert!(CondensedSet::new(vec![p(&[2, 3, 1]), p(&[2, 3, 1])]).is_err());
        assert!(CondensedSet::new(vec![p(&[2, 1, 4, 3])]).is_err());
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::from_one_based(&[1, 1]).is_err());
        assert!(Permutation::from_one_based(&[0, 1]).is_err());
        assert!(Permutation::from_one_based(&[3, 1]).is_err());
        assert!(Permutation::derangement_from_one_based(&[1, 2]).is_err());
        let q = p(&[4, 3, 1, 2]);
        assert_eq!(q.to_string(), "[4,3,1,2]");
        assert_eq!(q.target_of(), vec![2, 3, 1, 0]);
        assert_eq!(q.cycles(), vec![vec![0, 3, 1, 2]]);
        assert_eq!(q.matrix()[2], vec![1, 0, 0, 0]);
    }
}
