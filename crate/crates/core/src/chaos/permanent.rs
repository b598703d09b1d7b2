//! Permanents of small real matrices.

use crate::error::{Error, Result};
use crate::tolerances::{PERMANENT_MAX, PERMANENT_NAIVE_MAX};

/// Permanent of the row-major `k x k` matrix `m`.
///
/// Sizes up to 6 expand over all permutations, sizes up to 20 use Ryser's
/// formula, larger sizes are refused.
pub fn permanent(m: &[f64], k: usize) -> Result<f64> {
    assert_eq!(m.len(), k * k, "matrix must be k x k");
    if k > PERMANENT_MAX {
        return Err(Error::UnsupportedDegree(k));
    }
    Ok(if k <= PERMANENT_NAIVE_MAX { permanent_naive(m, k) } else { permanent_ryser(m, k) })
}

/// Sum over permutations in lexicographic order of `prod_t m[t][tau(t)]`,
/// each product accumulated left to right from row 0.
pub fn permanent_naive(m: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut tau: Vec<usize> = (0..k).collect();
    let mut total = 0.0;
    loop {
        let mut p = 1.0;
        for (t, &s) in tau.iter().enumerate() {
            p *= m[t * k + s];
        }
        total += p;
        if !next_permutation(&mut tau) {
            break;
        }
    }
    total
}

/// Ryser's inclusion-exclusion formula with Gray-code column updates.
pub fn permanent_ryser(m: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut row_sums = vec![0.0; k];
    let mut in_set = vec![false; k];
    let mut total = 0.0;
    let mut size = 0usize;
    for g in 1u64..(1u64 << k) {
        let col = g.trailing_zeros() as usize;
        let sign = if in_set[col] { -1.0 } else { 1.0 };
        in_set[col] = !in_set[col];
        if in_set[col] {
            size += 1;
        } else {
            size -= 1;
        }
        for (i, rs) in row_sums.iter_mut().enumerate() {
            *rs += sign * m[i * k + col];
        }
        let prod: f64 = row_sums.iter().product();
        if (k - size) % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    total
}

/// Advance to the next permutation in lexicographic order; false after the last one.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
