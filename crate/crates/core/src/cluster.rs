//! One-dimensional 2-means (Lloyd) clustering, used to split a row profile
//! into text rows and background rows.

use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 0.5;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterError {
    #[error("need at least 2 values, got {0}")]
    EmptyInput(usize),
    #[error("all values are equal; nothing to separate")]
    DegenerateInput,
}

/// Label for the cluster with the smaller centroid.
pub const LO: u8 = 0;
/// Label for the cluster with the larger centroid.
pub const HI: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoMeansResult<T: Real> {
    pub centroid_lo: T,
    pub centroid_hi: T,
    /// `LO` or `HI` per input value.
    pub labels: Vec<u8>,
    pub iterations: usize,
}

impl<T: Real> TwoMeansResult<T> {
    pub fn contrast(&self) -> T {
        self.centroid_hi - self.centroid_lo
    }
}

#[inline]
fn nearest<T: Real>(v: T, lo: T, hi: T) -> u8 {
    if (v - lo).abs() <= (v - hi).abs() {
        LO
    } else {
        HI
    }
}

fn assign<T: Real>(values: &[T], lo: T, hi: T, labels: &mut [u8]) -> bool {
    let mut changed = false;
    for (l, &v) in labels.iter_mut().zip(values) {
        let n = nearest(v, lo, hi);
        changed |= *l != n;
        *l = n;
    }
    changed
}

/// Mean of each cluster; `None` for an empty one.
fn means<T: Real>(values: &[T], labels: &[u8]) -> [Option<T>; 2] {
    let mut sum = [T::zero(); 2];
    let mut count = [0usize; 2];
    for (&v, &l) in values.iter().zip(labels) {
        sum[l as usize] = sum[l as usize] + v;
        count[l as usize] += 1;
    }
    [0, 1].map(|k| (count[k] > 0).then(|| sum[k] / T::from_usize_lossy(count[k])))
}

/// Lloyd iterations initialised at `(min, max)`. Iteration stops once both
/// centroids move less than `tol` and the assignment is stable under the new
/// centroids, or after `max_iter` updates.
pub fn two_means_1d<T: Real>(
    values: &[T],
    tol: T,
    max_iter: usize,
) -> Result<TwoMeansResult<T>, ClusterError> {
    if values.len() < 2 {
        return Err(ClusterError::EmptyInput(values.len()));
    }
    let (min, max) = values.iter().fold((values[0], values[0]), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(max - min > T::zero()) {
        return Err(ClusterError::DegenerateInput);
    }

    let (mut lo, mut hi) = (min, max);
    let mut labels = vec![LO; values.len()];
    assign(values, lo, hi, &mut labels);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let [m_lo, m_hi] = means(values, &labels);
        let new_lo = m_lo.unwrap_or(lo);
        let new_hi = m_hi.unwrap_or(hi);
        let moved = (new_lo - lo).abs().max((new_hi - hi).abs());
        lo = new_lo;
        hi = new_hi;
        let changed = assign(values, lo, hi, &mut labels);
        if moved < tol && !changed {
            break;
        }
    }

    // Centroids are reported as the exact means of the final labelling.
    let [m_lo, m_hi] = means(values, &labels);
    Ok(TwoMeansResult {
        centroid_lo: m_lo.unwrap_or(lo),
        centroid_hi: m_hi.unwrap_or(hi),
        labels,
        iterations,
    })
}

/// Convenience wrapper with the default tolerance and iteration cap.
pub fn two_means_default<T: Real>(values: &[T]) -> Result<TwoMeansResult<T>, ClusterError> {
    two_means_1d(values, T::from_f64_lossy(DEFAULT_TOL), DEFAULT_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive sorted-threshold scan: the best split of the sorted values
    /// into a prefix and a suffix by within-cluster sum of squares.
    fn threshold_scan_oracle(values: &[f64]) -> Vec<u8> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let sse = |idx: &[usize]| {
            let m = idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().map(|&i| (values[i] - m).powi(2)).sum::<f64>()
        };
        let mut best = (f64::INFINITY, 0);
        for k in 1..values.len() {
            let cost = sse(&order[..k]) + sse(&order[k..]);
            if cost < best.0 {
                best = (cost, k);
            }
        }
        let mut labels = vec![HI; values.len()];
        for &i in &order[..best.1] {
            labels[i] = LO;
        }
        labels
    }

    #[test]
    fn symmetric_two_point_clusters() {
        let r = two_means_default(&[0.0f64, 0.0, 10.0, 10.0]).unwrap();
        assert_eq!((r.centroid_lo, r.centroid_hi), (0.0, 10.0));
        assert_eq!(r.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn degenerate_and_empty() {
        assert_eq!(two_means_default(&[5.0f64; 4]), Err(ClusterError::DegenerateInput));
        assert_eq!(two_means_default(&[5.0f64]), Err(ClusterError::EmptyInput(1)));
        assert_eq!(two_means_default::<f32>(&[]), Err(ClusterError::EmptyInput(0)));
    }

    #[test]
    fn equidistant_value_goes_low() {
        let r = two_means_default(&[0.0f64, 5.0, 10.0]).unwrap();
        // Initial centroids 0 and 10: 5 ties and joins the low cluster.
        assert_eq!(r.labels, vec![0, 0, 1]);
        assert_eq!((r.centroid_lo, r.centroid_hi), (2.5, 10.0));
    }

    #[test]
    fn well_separated_groups_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..32)
            .map(|i| {
                let base = if i % 3 == 0 { 210.0 } else { 40.0 };
                base + rng.random_range(-6.0..6.0)
            })
            .collect();
        let r = two_means_default(&values).unwrap();
        assert_eq!(r.labels, threshold_scan_oracle(&values));
    }

    #[test]
    fn works_in_f32() {
        let r = two_means_default(&[1.0f32, 2.0, 200.0, 202.0]).unwrap();
        assert_eq!(r.labels, vec![0, 0, 1, 1]);
        assert_eq!(r.centroid_hi, 201.0);
    }

    fn is_fixed_point(values: &[f64], r: &TwoMeansResult<f64>) -> bool {
        let mut labels = r.labels.clone();
        let changed = assign(values, r.centroid_lo, r.centroid_hi, &mut labels);
        let [lo, hi] = means(values, &labels);
        !changed && lo.is_none_or(|m| m == r.centroid_lo) && hi.is_none_or(|m| m == r.centroid_hi)
    }

    proptest! {
        #[test]
        fn result_is_fixed_point(values in proptest::collection::vec(0.0f64..255.0, 2..64)) {
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let r = two_means_default(&values).unwrap();
            prop_assert!(r.centroid_lo <= r.centroid_hi);
            prop_assert!(is_fixed_point(&values, &r));
        }

        #[test]
        fn clusters_are_intervals(values in proptest::collection::vec(0.0f64..255.0, 2..64)) {
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let r = two_means_default(&values).unwrap();
            let mut pairs: Vec<(f64, u8)> = values.iter().copied().zip(r.labels.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let transitions = pairs.windows(2).filter(|w| w[0].1 != w[1].1).count();
            prop_assert!(transitions <= 1);
            prop_assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        }

        #[test]
        fn permutation_invariant(values in proptest::collection::vec(0u8..=255, 2..40), seed in any::<u64>()) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let mut perm: Vec<usize> = (0..values.len()).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
            let a = two_means_default(&values).unwrap();
            let b = two_means_default(&permuted).unwrap();
            // Integer-valued inputs keep sums exact, so the centroids agree bit for bit.
            prop_assert_eq!(a.centroid_lo, b.centroid_lo);
            prop_assert_eq!(a.centroid_hi, b.centroid_hi);
            let expected: Vec<u8> = perm.iter().map(|&i| a.labels[i]).collect();
            prop_assert_eq!(b.labels, expected);
        }
    }
}
