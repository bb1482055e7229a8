//! Permutation operators against dense permutation matrices.

use proptest::prelude::*;
use suquan::perm::{apply_pi, apply_pi_transpose, pi_inner_product, sort_sample, SortedSample};

/// Dense `P[j][k] = 1` iff entry `j` has sorted position `k`.
fn dense(s: &SortedSample) -> Vec<Vec<f64>> {
    let p = s.len();
    let mut m = vec![vec![0.0; p]; p];
    for (j, &k) in s.rank().iter().enumerate() {
        m[j][k] = 1.0;
    }
    m
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn matvec_t(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|k| m.iter().zip(v).map(|(row, x)| row[k] * x).sum())
        .collect()
}

fn frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

/// Small integer values so that ties are common.
fn with_ties(max_p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..4).prop_map(f64::from), 1..=max_p)
}

fn permutations(p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for sub in permutations(p - 1) {
        for pos in 0..p {
            let mut v = sub.clone();
            v.insert(pos, p - 1);
            out.push(v);
        }
    }
    out
}

proptest! {
    #[test]
    fn rank_and_order_are_inverse(x in with_ties(12)) {
        let s = sort_sample(&x).unwrap();
        for (k, &j) in s.order().iter().enumerate() {
            prop_assert_eq!(s.rank()[j], k);
        }
        // sorted and stable
        for w in s.order().windows(2) {
            prop_assert!(x[w[0]] < x[w[1]] || (x[w[0]] == x[w[1]] && w[0] < w[1]));
        }
    }

    #[test]
    fn apply_pi_is_a_rearrangement(
        x in prop::collection::vec(-10.0f64..10.0, 1..20),
        seed in any::<u64>(),
    ) {
        let f: Vec<f64> = (0..x.len()).map(|j| ((j as u64 ^ seed) % 7) as f64 - 3.0).collect();
        let s = sort_sample(&x).unwrap();
        let mut a = apply_pi(&s, &f).unwrap();
        let mut b = f.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dense_oracle(
        x in with_ties(8),
        y_seed in any::<u64>(),
        v in prop::collection::vec(-5.0f64..5.0, 8),
    ) {
        let p = x.len();
        let y: Vec<f64> = (0..p).map(|j| ((y_seed >> (3 * j)) & 3) as f64).collect();
        let (sx, sy) = (sort_sample(&x).unwrap(), sort_sample(&y).unwrap());
        let (dx, dy) = (dense(&sx), dense(&sy));
        let v = &v[..p];
        prop_assert_eq!(apply_pi(&sx, v).unwrap(), matvec(&dx, v));
        prop_assert_eq!(apply_pi_transpose(&sx, v).unwrap(), matvec_t(&dx, v));
        prop_assert_eq!(pi_inner_product(&sx, &sy).unwrap() as f64, frobenius(&dx, &dy));
    }
}

#[test]
fn exhaustive_small_permutations() {
    let v = [0.5, -1.0, 2.0, 3.5, -0.25];
    for p in 1..=5 {
        let perms: Vec<SortedSample> = permutations(p)
            .into_iter()
            .map(|r| SortedSample::from_rank(r).unwrap())
            .collect();
        for a in &perms {
            let da = dense(a);
            assert_eq!(apply_pi(a, &v[..p]).unwrap(), matvec(&da, &v[..p]));
            assert_eq!(apply_pi_transpose(a, &v[..p]).unwrap(), matvec_t(&da, &v[..p]));
            for b in &perms {
                let ip = pi_inner_product(a, b).unwrap();
                assert_eq!(ip as f64, frobenius(&da, &dense(b)));
            }
        }
    }
}

#[test]
fn from_rank_rejects_non_permutations() {
    assert!(SortedSample::from_rank(vec![0, 0]).is_err());
    assert!(SortedSample::from_rank(vec![0, 2]).is_err());
}
