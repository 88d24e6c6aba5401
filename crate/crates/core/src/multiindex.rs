//! Symmetric multi-index algebra: class, counting formulas, class-respecting
//! term orders, Pommaret cones and Rees-decomposition verification.
//!
//! A multi-index addresses a mixed partial derivative; symmetry of mixed
//! partials makes the sorted form canonical.  The *class* of a multi-index is
//! the smallest variable rank appearing in it, and drives both the column
//! ordering of symbol matrices and the multiplicative directions of the
//! Pommaret division.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Symmetric multi-index: a sorted (ascending) list of variable indices in
/// `1..=p`.  The empty multi-index is the 0-jet.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex {
    entries: Vec<u8>,
}

impl MultiIndex {
    pub fn empty() -> Self {
        MultiIndex {
            entries: Vec::new(),
        }
    }

    /// Builds from arbitrary entries; sorts into canonical form.
    pub fn new(mut entries: Vec<u8>) -> Self {
        entries.sort_unstable();
        MultiIndex { entries }
    }

    pub fn single(i: u8) -> Self {
        MultiIndex { entries: vec![i] }
    }

    /// `i` repeated `k` times.
    pub fn repeated(i: u8, k: usize) -> Self {
        MultiIndex {
            entries: vec![i; k],
        }
    }

    /// Derivative order `|J|`.
    pub fn order(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    /// Appends direction `i`, re-sorting into canonical form.
    pub fn append(&self, i: u8) -> Self {
        let mut entries = self.entries.clone();
        let pos = entries.partition_point(|&e| e <= i);
        entries.insert(pos, i);
        MultiIndex { entries }
    }

    /// Removes one occurrence of `k`; `None` when `k` does not occur.
    pub fn remove(&self, k: u8) -> Option<Self> {
        let pos = self.entries.iter().position(|&e| e == k)?;
        let mut entries = self.entries.clone();
        entries.remove(pos);
        Some(MultiIndex { entries })
    }

    /// Multiset concatenation `J,K`.
    pub fn concat(&self, other: &MultiIndex) -> Self {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        entries.sort_unstable();
        MultiIndex { entries }
    }

    /// Multiset difference `self \ other` when `other ⊆ self`.
    pub fn subtract(&self, other: &MultiIndex) -> Option<Self> {
        let mut rest = self.entries.clone();
        for &e in &other.entries {
            let pos = rest.iter().position(|&r| r == e)?;
            rest.remove(pos);
        }
        Some(MultiIndex { entries: rest })
    }

    /// Number of occurrences of variable `i`.
    pub fn count(&self, i: u8) -> usize {
        self.entries.iter().filter(|&&e| e == i).count()
    }

    /// Exponent vector over `p` variables.
    pub fn exponents(&self, p: usize) -> Vec<usize> {
        let mut exps = vec![0; p];
        for &e in &self.entries {
            exps[(e - 1) as usize] += 1;
        }
        exps
    }

    pub fn from_exponents(exps: &[usize]) -> Self {
        let mut entries = Vec::new();
        for (i, &k) in exps.iter().enumerate() {
            entries.extend(std::iter::repeat_n(i as u8 + 1, k));
        }
        MultiIndex { entries }
    }

    /// `J!`, the product of factorials of the exponents.
    pub fn factorial(&self) -> u64 {
        let mut f = 1u64;
        let mut run = 1u64;
        for w in self.entries.windows(2) {
            if w[0] == w[1] {
                run += 1;
                f *= run;
            } else {
                run = 1;
            }
        }
        f
    }

    /// All multi-indices of order exactly `k` over `1..=p`, ascending lex.
    pub fn all_of_order(p: u8, k: usize) -> Vec<MultiIndex> {
        fn rec(p: u8, k: usize, min: u8, cur: &mut Vec<u8>, out: &mut Vec<MultiIndex>) {
            if k == 0 {
                out.push(MultiIndex {
                    entries: cur.clone(),
                });
                return;
            }
            for i in min..=p {
                cur.push(i);
                rec(p, k - 1, i, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(p, k, 1, &mut Vec::new(), &mut out);
        out
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.entries)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return write!(f, "()");
        }
        let parts: Vec<String> = self.entries.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A jet coordinate address: dependent-variable tag plus multi-index.
///
/// Tags `1..=q` address the dependent variables `u^α`; tags `q+1..=q+p` are
/// reserved for the reduced horizontal pseudo-group coordinates when normal
/// form systems mix both families.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct IndexedCoordinate {
    pub dep: u8,
    pub index: MultiIndex,
}

impl IndexedCoordinate {
    pub fn new(dep: u8, index: MultiIndex) -> Self {
        IndexedCoordinate { dep, index }
    }

    pub fn order(&self) -> usize {
        self.index.order()
    }
}

impl fmt::Display for IndexedCoordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({};{})", self.dep, self.index)
    }
}

/// Class of a multi-index: the smallest entry, or the sentinel 0 for the
/// empty multi-index so that 0-jets sort after every class-1 column.
pub fn class(j: &MultiIndex) -> u8 {
    j.entries().first().copied().unwrap_or(0)
}

fn binomial(n: i64, k: i64) -> u64 {
    if k < 0 || n < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut b = 1u64;
    for i in 1..=k {
        b = b * (n - k + i) as u64 / i as u64;
    }
    b
}

/// `t_k`: number of jet coordinates of order exactly `k` for `q` dependent
/// variables over `p` independent variables, `q · C(p+k-1, k)`.
pub fn count_order(p: usize, q: usize, k: usize) -> u64 {
    q as u64 * binomial((p + k) as i64 - 1, k as i64)
}

/// `t_k^{(i)}`: number of those whose multi-index is of class `i`,
/// `q · C(p+k-i-1, k-1)`.  Requires `k ≥ 1` and `1 ≤ i ≤ p`.
pub fn count_class(p: usize, q: usize, k: usize, i: usize) -> u64 {
    assert!(k >= 1, "class counts are defined for order >= 1");
    assert!((1..=p).contains(&i), "class out of range");
    q as u64 * binomial((p + k) as i64 - i as i64 - 1, k as i64 - 1)
}

/// Membership in the Pommaret cone of `generator`: true iff `target` is the
/// generator with entries `≤ class(generator)` appended (zero or more), with
/// matching dependent tags.
pub fn in_cone(target: &IndexedCoordinate, generator: &IndexedCoordinate) -> bool {
    if target.dep != generator.dep {
        return false;
    }
    let Some(extra) = target.index.subtract(&generator.index) else {
        return false;
    };
    let cls = class(&generator.index);
    extra.entries().iter().all(|&e| e <= cls)
}

/// Class-respecting term order on jet coordinates of a fixed order.
///
/// Columns are sorted by descending class under an optional permutation of
/// the variables; ties break on descending graded-lexicographic entries and
/// then on dependent tag via an explicit priority list.  Any fixed choice
/// within a class is mathematically admissible; this one makes echelon forms
/// reproducible and matches the convention of solving for the highest tag
/// first, which puts reduced horizontal coordinates ahead of submanifold jets
/// in normal form systems.
#[derive(Clone, Debug)]
pub struct ClassTermOrder {
    /// `rank[i-1]` is the position of variable `i` in the chosen ordering;
    /// rank 1 is the earliest variable.
    rank: Vec<u8>,
    /// Dependent tags in decreasing pivot priority.
    dep_priority: Vec<u8>,
}

impl ClassTermOrder {
    /// Identity variable ordering with descending dependent-tag priority over
    /// tags `1..=deps`.
    pub fn natural(p: usize, deps: usize) -> Self {
        ClassTermOrder {
            rank: (1..=p as u8).collect(),
            dep_priority: (1..=deps as u8).rev().collect(),
        }
    }

    /// `ordering[k]` is the variable that comes k-th (earliest first).
    pub fn with_variable_order(ordering: &[u8], deps: usize) -> Self {
        let mut rank = vec![0u8; ordering.len()];
        for (pos, &v) in ordering.iter().enumerate() {
            rank[(v - 1) as usize] = pos as u8 + 1;
        }
        ClassTermOrder {
            rank,
            dep_priority: (1..=deps as u8).rev().collect(),
        }
    }

    pub fn with_dep_priority(mut self, priority: Vec<u8>) -> Self {
        self.dep_priority = priority;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.rank.len()
    }

    /// Rank of a single variable under the permutation (1 = earliest).
    pub fn var_rank(&self, i: u8) -> u8 {
        self.rank[(i - 1) as usize]
    }

    /// Class of a multi-index under the permutation: minimal rank among the
    /// entries, 0 for the empty multi-index.
    pub fn class_of(&self, j: &MultiIndex) -> u8 {
        j.entries()
            .iter()
            .map(|&e| self.var_rank(e))
            .min()
            .unwrap_or(0)
    }

    fn dep_pos(&self, dep: u8) -> usize {
        self.dep_priority
            .iter()
            .position(|&d| d == dep)
            .unwrap_or(usize::MAX)
    }

    /// Column comparison: `Less` means "further left" (solved for first).
    /// Only meaningful between coordinates of equal order.
    pub fn cmp_columns(&self, a: &IndexedCoordinate, b: &IndexedCoordinate) -> Ordering {
        debug_assert_eq!(a.order(), b.order());
        let ca = self.class_of(&a.index);
        let cb = self.class_of(&b.index);
        // Higher class first.
        cb.cmp(&ca)
            .then_with(|| {
                // Descending graded-lex on rank vectors (orders are equal, so
                // this is a pure lexicographic comparison of sorted ranks).
                let ra: Vec<u8> = a.index.entries().iter().map(|&e| self.var_rank(e)).collect();
                let rb: Vec<u8> = b.index.entries().iter().map(|&e| self.var_rank(e)).collect();
                let mut ra = ra;
                let mut rb = rb;
                ra.sort_unstable();
                rb.sort_unstable();
                rb.cmp(&ra)
            })
            .then_with(|| self.dep_pos(a.dep).cmp(&self.dep_pos(b.dep)))
    }

    /// All coordinates of a fixed order in column order, for the given
    /// dependent tags.
    pub fn columns(&self, deps: &[u8], order: usize) -> Vec<IndexedCoordinate> {
        let p = self.num_vars() as u8;
        let mut cols: Vec<IndexedCoordinate> = MultiIndex::all_of_order(p, order)
            .into_iter()
            .flat_map(|j| {
                deps.iter()
                    .map(move |&d| IndexedCoordinate::new(d, j.clone()))
                    .collect::<Vec<_>>()
            })
            .collect();
        cols.sort_by(|a, b| self.cmp_columns(a, b));
        cols
    }
}

/// Outcome of a Rees-decomposition check.
#[derive(Clone, Debug, Default)]
pub struct ReesVerdict {
    /// Universe members covered by no generator cone.
    pub uncovered: Vec<IndexedCoordinate>,
    /// Universe members covered by more than one cone.
    pub overlapped: Vec<IndexedCoordinate>,
    /// Cone members (inside the order range) that fall outside the universe,
    /// which breaks the required equality of the disjoint union.
    pub excess: Vec<IndexedCoordinate>,
}

impl ReesVerdict {
    pub fn ok(&self) -> bool {
        self.uncovered.is_empty() && self.overlapped.is_empty() && self.excess.is_empty()
    }
}

/// Verifies that the generator cones decompose the universe: over every order
/// in `lo..=hi`, each universe coordinate lies in exactly one cone and each
/// cone stays inside the universe.
pub fn verify_rees<F>(
    generators: &[IndexedCoordinate],
    universe: F,
    p: u8,
    deps: &[u8],
    order_range: (usize, usize),
) -> ReesVerdict
where
    F: Fn(&IndexedCoordinate) -> bool,
{
    let (lo, hi) = order_range;
    let mut verdict = ReesVerdict::default();
    for k in lo..=hi {
        for j in MultiIndex::all_of_order(p, k) {
            for &dep in deps {
                let coord = IndexedCoordinate::new(dep, j.clone());
                let hits = generators.iter().filter(|g| in_cone(&coord, g)).count();
                if universe(&coord) {
                    match hits {
                        0 => verdict.uncovered.push(coord),
                        1 => {}
                        _ => verdict.overlapped.push(coord),
                    }
                } else if hits > 0 {
                    verdict.excess.push(coord);
                }
            }
        }
    }
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(entries: &[u8]) -> MultiIndex {
        MultiIndex::new(entries.to_vec())
    }

    fn ic(dep: u8, entries: &[u8]) -> IndexedCoordinate {
        IndexedCoordinate::new(dep, mi(entries))
    }

    #[test]
    fn class_examples() {
        assert_eq!(class(&mi(&[3])), 3);
        assert_eq!(class(&mi(&[1, 2, 2])), 1);
        assert_eq!(class(&MultiIndex::empty()), 0);
    }

    #[test]
    fn count_order_examples() {
        assert_eq!(count_order(3, 1, 2), 6);
        assert_eq!(count_order(2, 1, 0), 1);
        // Enumerated: sorted multi-indices of order 2 over 3 variables,
        // times q = 3.
        assert_eq!(
            MultiIndex::all_of_order(3, 2).len() as u64 * 3,
            count_order(3, 3, 2)
        );
        assert_eq!(count_order(3, 3, 2), 18);
    }

    #[test]
    fn count_class_examples() {
        let counts: Vec<u64> = (1..=3).map(|i| count_class(3, 3, 2, i)).collect();
        assert_eq!(counts, vec![9, 6, 3]);
        assert_eq!(count_class(2, 1, 1, 2), 1);
        // Enumerated class-2 multi-indices of order 3 over 3 variables.
        let brute = MultiIndex::all_of_order(3, 3)
            .into_iter()
            .filter(|j| class(j) == 2)
            .count() as u64;
        assert_eq!(count_class(3, 1, 3, 2), brute);
        assert_eq!(count_class(3, 1, 3, 2), 3);
    }

    #[test]
    fn counting_identities_exhaustive() {
        // Sum of class counts equals the order count, and the weighted sum
        // telescopes to the next order, for p <= 4, q <= 3, k <= 6.
        for p in 1..=4usize {
            for q in 1..=3usize {
                for k in 1..=6usize {
                    let brute: Vec<u64> = (1..=p)
                        .map(|i| {
                            MultiIndex::all_of_order(p as u8, k)
                                .into_iter()
                                .filter(|j| class(j) == i as u8)
                                .count() as u64
                                * q as u64
                        })
                        .collect();
                    for i in 1..=p {
                        assert_eq!(count_class(p, q, k, i), brute[i - 1]);
                    }
                    let total: u64 = (1..=p).map(|i| count_class(p, q, k, i)).sum();
                    assert_eq!(total, count_order(p, q, k));
                    let weighted: u64 = (1..=p).map(|i| i as u64 * count_class(p, q, k, i)).sum();
                    assert_eq!(weighted, count_order(p, q, k + 1));
                }
            }
        }
    }

    #[test]
    fn cone_membership() {
        // Pure x-power tails stay in the cone.
        assert!(in_cone(&ic(1, &[1, 1, 1, 1, 1]), &ic(1, &[1, 1, 1])));
        // An extra y above a class-1 generator leaves the cone.
        assert!(!in_cone(&ic(1, &[1, 1, 1, 2, 2]), &ic(1, &[1, 1, 2])));
        // n = 0 appendix.
        assert!(in_cone(&ic(1, &[1, 2]), &ic(1, &[1, 2])));
        // Dep tags must match.
        assert!(!in_cone(&ic(2, &[1, 1, 1]), &ic(1, &[1, 1])));
    }

    #[test]
    fn cone_reflexive_transitive() {
        let coords: Vec<IndexedCoordinate> = (0..=3)
            .flat_map(|k| {
                MultiIndex::all_of_order(3, k)
                    .into_iter()
                    .map(|j| IndexedCoordinate::new(1, j))
            })
            .collect();
        for a in &coords {
            assert!(in_cone(a, a));
            for b in &coords {
                for c in &coords {
                    if in_cone(b, a) && in_cone(c, b) {
                        assert!(in_cone(c, a), "{a} -> {b} -> {c}");
                    }
                }
            }
        }
    }

    #[test]
    fn rees_running_example_cross_section() {
        // Well-posed cross-section indices of order > 2: u_{x^k} (k >= 3) and
        // u_{x^k y} (k >= 2), decomposed as C(3,0) ⊎ C(2,1).
        let generators = vec![ic(1, &[1, 1, 1]), ic(1, &[1, 1, 2])];
        let universe = |c: &IndexedCoordinate| {
            let ys = c.index.count(2);
            c.dep == 1 && c.index.count(1) + ys == c.order() && ys <= 1
        };
        let verdict = verify_rees(&generators, universe, 2, &[1], (3, 8));
        assert!(verdict.ok(), "{verdict:?}");
    }

    #[test]
    fn rees_uncovered_and_overlap() {
        let generators = vec![ic(1, &[1, 1])];
        let universe =
            |c: &IndexedCoordinate| c.index.count(2) == 0 || c.index == mi(&[1, 2]);
        let verdict = verify_rees(&generators, universe, 2, &[1], (2, 5));
        assert!(verdict
            .uncovered
            .contains(&ic(1, &[1, 2])));

        let generators = vec![ic(1, &[1, 1]), ic(1, &[1, 1, 1])];
        let universe = |c: &IndexedCoordinate| c.index.count(2) == 0;
        let verdict = verify_rees(&generators, universe, 2, &[1], (2, 5));
        assert!(verdict.overlapped.contains(&ic(1, &[1, 1, 1])));
    }

    #[test]
    fn term_order_is_total_and_class_respecting() {
        let order = ClassTermOrder::natural(3, 2);
        let cols = order.columns(&[1, 2], 2);
        assert_eq!(cols.len(), 12);
        for w in cols.windows(2) {
            assert_eq!(order.cmp_columns(&w[0], &w[1]), Ordering::Less);
            assert!(order.class_of(&w[0].index) >= order.class_of(&w[1].index));
        }
    }

    #[test]
    fn term_order_permutation_equivariance() {
        // Ordering with permuted variables equals ordering then relabeling.
        let natural = ClassTermOrder::natural(3, 1);
        let permuted = ClassTermOrder::with_variable_order(&[2, 3, 1], 1);
        // Under the permuted order, variable 2 has rank 1, 3 has rank 2,
        // 1 has rank 3. Relabel entries accordingly and compare columns.
        let relabel = |j: &MultiIndex| {
            MultiIndex::new(
                j.entries()
                    .iter()
                    .map(|&e| match e {
                        2 => 1,
                        3 => 2,
                        1 => 3,
                        _ => unreachable!(),
                    })
                    .collect(),
            )
        };
        let a: Vec<MultiIndex> = permuted
            .columns(&[1], 3)
            .into_iter()
            .map(|c| relabel(&c.index))
            .collect();
        let b: Vec<MultiIndex> = natural.columns(&[1], 3).into_iter().map(|c| c.index).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn paper_order2_column_example() {
        // For p = 3 with x ≺ y ≺ z the class-respecting order puts ψ_zz
        // first, then the class-2 block, then the class-1 block.
        let order = ClassTermOrder::natural(3, 1);
        let cols = order.columns(&[1], 2);
        let classes: Vec<u8> = cols.iter().map(|c| order.class_of(&c.index)).collect();
        assert_eq!(classes, vec![3, 2, 2, 1, 1, 1]);
        assert_eq!(cols[0].index, mi(&[3, 3]));
    }
}
