//! Distribution and rating-vector similarity measures.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hellinger distance (1/√2)·‖√p − √q‖₂ between two distributions, clamped
/// into [0, 1] against floating-point drift.
pub fn hellinger_distance<S: Scalar>(p: &[S], q: &[S]) -> Result<S> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let sum: S = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    let h = (sum / S::lit(2.0)).sqrt();
    Ok(h.min(S::one()).max(S::zero()))
}

/// Topic similarity 1 − H(p, q).
pub fn hellinger_similarity<S: Scalar>(p: &[S], q: &[S]) -> Result<S> {
    Ok(S::one() - hellinger_distance(p, q)?)
}

/// Tanimoto coefficient a·b / (‖a‖² + ‖b‖² − a·b); 0 when both vectors are
/// all-zero. Slices must have equal length.
pub fn tanimoto<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "tanimoto over unequal lengths");
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    finish_tanimoto(dot, na, nb)
}

/// Tanimoto over sparse vectors given as (index, value) pairs sorted by
/// index; absent indices are zeros, so implicit lengths may differ.
pub fn tanimoto_sparse<S: Scalar>(a: &[(u32, S)], b: &[(u32, S)]) -> S {
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (ia, va) = a[i];
        let (ib, vb) = b[j];
        match ia.cmp(&ib) {
            std::cmp::Ordering::Less => {
                na = na + va * va;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                nb = nb + vb * vb;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                dot = dot + va * vb;
                na = na + va * va;
                nb = nb + vb * vb;
                i += 1;
                j += 1;
            }
        }
    }
    for &(_, va) in &a[i..] {
        na = na + va * va;
    }
    for &(_, vb) in &b[j..] {
        nb = nb + vb * vb;
    }
    finish_tanimoto(dot, na, nb)
}

fn finish_tanimoto<S: Scalar>(dot: S, na: S, nb: S) -> S {
    let denom = na + nb - dot;
    if denom == S::zero() {
        S::zero()
    } else {
        dot / denom
    }
}
