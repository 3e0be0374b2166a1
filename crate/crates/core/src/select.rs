//! Deterministic linear-time selection (median of medians, groups of five).

use std::cmp::Ordering;

use crate::error::{Error, Result};

const GROUP: usize = 5;
const SMALL: usize = 10;

/// Returns the `k`-th smallest value (1-based rank) of `values`.
pub fn median_select(values: &[f64], k: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("selection from an empty set".into()));
    }
    if k == 0 || k > values.len() {
        return Err(Error::InvalidArgument(format!(
            "rank {k} out of range 1..={}",
            values.len()
        )));
    }
    let mut buf = values.to_vec();
    Ok(select_in_place(&mut buf, k - 1))
}

/// Lower median of `values`, reordering them.
pub(crate) fn lower_median(values: &mut [f64]) -> f64 {
    let k = (values.len() - 1) / 2;
    select_in_place(values, k)
}

/// Element of 0-based rank `k`; reorders `a`.
pub(crate) fn select_in_place(mut a: &mut [f64], mut k: usize) -> f64 {
    debug_assert!(k < a.len());
    loop {
        if a.len() <= SMALL {
            a.sort_unstable_by(f64::total_cmp);
            return a[k];
        }
        let pivot = median_of_medians(a);
        let (lt, eq) = partition3(a, pivot);
        if k < lt {
            a = &mut a[..lt];
        } else if k < lt + eq {
            return pivot;
        } else {
            k -= lt + eq;
            a = &mut a[lt + eq..];
        }
    }
}

fn median_of_medians(a: &mut [f64]) -> f64 {
    let mut groups = 0;
    let mut start = 0;
    while start < a.len() {
        let end = (start + GROUP).min(a.len());
        let chunk = &mut a[start..end];
        insertion_sort(chunk);
        let mid = start + (end - start - 1) / 2;
        a.swap(groups, mid);
        groups += 1;
        start = end;
    }
    select_in_place(&mut a[..groups], (groups - 1) / 2)
}

fn insertion_sort(a: &mut [f64]) {
    for i in 1..a.len() {
        let mut j = i;
        while j > 0 && a[j - 1].total_cmp(&a[j]) == Ordering::Greater {
            a.swap(j - 1, j);
            j -= 1;
        }
    }
}

/// Dutch-flag partition; returns the sizes of the `< pivot` and `== pivot` blocks.
fn partition3(a: &mut [f64], pivot: f64) -> (usize, usize) {
    let (mut lo, mut mid, mut hi) = (0, 0, a.len());
    while mid < hi {
        match a[mid].total_cmp(&pivot) {
            Ordering::Less => {
                a.swap(lo, mid);
                lo += 1;
                mid += 1;
            }
            Ordering::Equal => mid += 1,
            Ordering::Greater => {
                hi -= 1;
                a.swap(mid, hi);
            }
        }
    }
    (lo, hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_examples() {
        assert_eq!(median_select(&[3.0, 1.0, 2.0], 2).unwrap(), 2.0);
        assert_eq!(median_select(&[7.0; 13], 9).unwrap(), 7.0);
        assert!(median_select(&[], 1).is_err());
        assert!(median_select(&[1.0], 0).is_err());
        assert!(median_select(&[1.0], 2).is_err());
    }

    #[test]
    fn matches_sort_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..5000).map(|_| rng.gen()).collect();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(median_select(&v, 2500).unwrap(), sorted[2499]);
    }

    #[test]
    fn handles_infinities_and_duplicates() {
        let v = [f64::INFINITY, 1.0, 1.0, f64::INFINITY, 0.5, 1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 3.0];
        let mut sorted = v.to_vec();
        sorted.sort_by(f64::total_cmp);
        for k in 1..=v.len() {
            assert_eq!(median_select(&v, k).unwrap(), sorted[k - 1]);
        }
    }

    proptest! {
        #[test]
        fn agrees_with_sorting(v in prop::collection::vec(-1e3f64..1e3, 1..300), r in 0.0f64..1.0) {
            let k = 1 + ((v.len() - 1) as f64 * r) as usize;
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assert_eq!(median_select(&v, k).unwrap(), sorted[k - 1]);
        }

        #[test]
        fn agrees_with_sorting_on_few_distinct(v in prop::collection::vec(0u8..4, 1..200)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let k = (v.len() + 1) / 2;
            prop_assert_eq!(median_select(&v, k).unwrap(), sorted[k - 1]);
        }
    }
}
