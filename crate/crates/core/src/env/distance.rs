//! Edit distance, Hamming distance and multiset Jaccard similarity.

use std::cmp;
use std::collections::BTreeMap;

/// Levenshtein distance with unit insert/delete/substitute costs.
pub fn levenshtein_slice<T: PartialEq>(source: &[T], target: &[T]) -> usize {
    if source.is_empty() {
        return target.len();
    }
    if target.is_empty() {
        return source.len();
    }
    let mut row: Vec<usize> = (0..=target.len()).collect();
    for (i, a) in source.iter().enumerate() {
        let mut diag = i;
        row[0] = i + 1;
        for (j, b) in target.iter().enumerate() {
            let d = cmp::min(cmp::min(row[j], row[j + 1]) + 1, diag + usize::from(a != b));
            diag = row[j + 1];
            row[j + 1] = d;
        }
    }
    row[target.len()]
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_slice(&a, &b)
}

/// Positional mismatches; a length difference counts as that many mismatches.
pub fn hamming<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let common = a.iter().zip(b).filter(|(x, y)| x != y).count();
    common + a.len().abs_diff(b.len())
}

/// `|A ∩ B| / |A ∪ B|` over multisets; two empty multisets are identical.
pub fn jaccard_multiset<T: Ord + Copy>(a: &[T], b: &[T]) -> f64 {
    let mut counts: BTreeMap<T, (usize, usize)> = BTreeMap::new();
    for &x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for &x in b {
        counts.entry(x).or_default().1 += 1;
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for &(ca, cb) in counts.values() {
        inter += ca.min(cb);
        union += ca.max(cb);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
