//! Plackett-Luce worth estimation from full rankings.
//!
//! Uses the minorization-maximization iteration for the Plackett-Luce
//! likelihood. A small pseudo-count keeps every worth strictly positive when
//! some item never beats anything.

use crate::error::{Error, Result};

pub const PL_RIDGE: f64 = 1e-6;
pub const PL_TOLERANCE: f64 = 1e-9;
pub const PL_MAX_ROUNDS: usize = 10_000;

/// Checks that every ranking is a permutation of `0..K` for a common `K`.
fn validate(rankings: &[Vec<usize>]) -> Result<usize> {
    let first = rankings.first().ok_or_else(|| Error::MalformedRanking {
        index: 0,
        reason: "no rankings given".into(),
    })?;
    let k = first.len();
    if k == 0 {
        return Err(Error::MalformedRanking {
            index: 0,
            reason: "empty ranking".into(),
        });
    }
    for (index, r) in rankings.iter().enumerate() {
        if r.len() != k {
            return Err(Error::MalformedRanking {
                index,
                reason: format!("expected {k} items, found {}", r.len()),
            });
        }
        let mut seen = vec![false; k];
        for &item in r {
            if item >= k || seen[item] {
                return Err(Error::MalformedRanking {
                    index,
                    reason: format!("not a permutation of 1..={k}"),
                });
            }
            seen[item] = true;
        }
    }
    Ok(k)
}

/// Plackett-Luce log-likelihood of `rankings` under `worth`.
pub fn log_likelihood(rankings: &[Vec<usize>], worth: &[f64]) -> f64 {
    let mut ll = 0.0;
    for r in rankings {
        let mut rest: f64 = r.iter().map(|&i| worth[i]).sum();
        for &item in &r[..r.len() - 1] {
            ll += worth[item].ln() - rest.ln();
            rest -= worth[item];
        }
    }
    ll
}

/// Maximum-likelihood Plackett-Luce scores, normalized to sum to 1.
///
/// Each ranking lists 0-based item indices best first. A score is the
/// model probability of that item being ranked first.
pub fn plackett_luce_scores(rankings: &[Vec<usize>]) -> Result<Vec<f64>> {
    let k = validate(rankings)?;
    let mut wins = vec![0.0f64; k];
    for r in rankings {
        for &item in &r[..k - 1] {
            wins[item] += 1.0;
        }
    }
    let mut worth = vec![1.0 / k as f64; k];
    for _ in 0..PL_MAX_ROUNDS {
        let mut denom = vec![0.0f64; k];
        for r in rankings {
            // Suffix sums of worth: the choice set at each stage.
            let mut rest: f64 = r.iter().map(|&i| worth[i]).sum();
            let mut acc = 0.0;
            // An item placed at position p sits in the choice sets of
            // stages 0..=p, so it collects the running sum of 1/rest.
            for &item in &r[..k - 1] {
                acc += 1.0 / rest;
                denom[item] += acc;
                rest -= worth[item];
            }
            denom[r[k - 1]] += acc;
        }
        let mut next: Vec<f64> = (0..k)
            .map(|i| (wins[i] + PL_RIDGE) / (denom[i] + PL_RIDGE))
            .collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let delta = next
            .iter()
            .zip(&worth)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worth = next;
        if delta < PL_TOLERANCE {
            break;
        }
    }
    Ok(worth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair() {
        let r = vec![vec![0, 1], vec![1, 0], vec![0, 1], vec![1, 0]];
        let s = plackett_luce_scores(&r).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-6 && (s[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn unanimous_winner() {
        let r = vec![vec![0, 1, 2]; 50];
        let s = plackett_luce_scores(&r).unwrap();
        assert!(s[0] >= 0.99, "{s:?}");
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn malformed_rankings() {
        assert!(plackett_luce_scores(&[]).is_err());
        assert!(plackett_luce_scores(&[vec![0, 1], vec![0]]).is_err());
        assert!(plackett_luce_scores(&[vec![0, 0]]).is_err());
        assert!(plackett_luce_scores(&[vec![0, 2]]).is_err());
        assert!(plackett_luce_scores(&[vec![]]).is_err());
    }

    #[test]
    fn order_invariant() {
        let mut r = vec![vec![0, 1, 2], vec![1, 0, 2], vec![2, 1, 0], vec![0, 2, 1], vec![1, 2, 0]];
        let a = plackett_luce_scores(&r).unwrap();
        r.reverse();
        let b = plackett_luce_scores(&r).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn likelihood_increases_over_uniform() {
        let r = vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2]];
        let s = plackett_luce_scores(&r).unwrap();
        assert!(log_likelihood(&r, &s) >= log_likelihood(&r, &[1.0 / 3.0; 3]));
    }
}
