use rayon::prelude::*;

use super::{Descriptor, FeatureSet};
use crate::calibration::MatchScoreVector;

#[inline]
fn squared_distance(a: &Descriptor, b: &Descriptor) -> f32 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Number of sample descriptors whose nearest source descriptor passes the ratio test
/// `nearest < ratio * second_nearest`. Several sample descriptors may hit the same
/// source descriptor. A single-descriptor source has no runner-up, so its nearest
/// neighbour is always accepted.
pub fn match_brute_force(sample: &FeatureSet, source: &FeatureSet, ratio: f32) -> u32 {
    if sample.is_empty() || source.is_empty() {
        return 0;
    }
    let ratio_sq = ratio * ratio;
    let mut accepted = 0;
    for q in &sample.descriptors {
        let mut best = f32::INFINITY;
        let mut second = f32::INFINITY;
        for t in &source.descriptors {
            let d = squared_distance(q, t);
            if d < best {
                second = best;
                best = d;
            } else if d < second {
                second = d;
            }
        }
        if best < ratio_sq * second || (second.is_infinite() && best.is_finite()) {
            accepted += 1;
        }
    }
    accepted
}

/// Raw match counts of `sample` against every source, in source order.
pub fn score_against_classes(
    sample: &FeatureSet,
    sources: &[FeatureSet],
    ratio: f32,
) -> MatchScoreVector {
    let scores = sources
        .par_iter()
        .map(|src| match_brute_force(sample, src, ratio))
        .collect();
    MatchScoreVector::new(scores)
}

#[cfg(test)]
mod tests {
    use super::super::{Keypoint, DESCRIPTOR_LEN};
    use super::*;

    fn set(vectors: &[Vec<f32>]) -> FeatureSet {
        FeatureSet {
            keypoints: vectors.iter().map(|_| Keypoint::at(0.0, 0.0)).collect(),
            descriptors: vectors.iter().map(|v| Descriptor::from_slice(v)).collect(),
            source_class: None,
        }
    }

    fn basis(i: usize) -> Vec<f32> {
        let mut v = vec![0.0; DESCRIPTOR_LEN];
        v[i] = 1.0;
        v
    }

    #[test]
    fn self_match_counts_every_descriptor() {
        let f = set(&(0..10).map(|i| basis(i * 7)).collect::<Vec<_>>());
        assert_eq!(match_brute_force(&f, &f, 0.75), 10);
    }

    #[test]
    fn empty_sets_give_zero() {
        let f = set(&[basis(0), basis(1)]);
        let empty = FeatureSet::default();
        assert_eq!(match_brute_force(&f, &empty, 0.75), 0);
        assert_eq!(match_brute_force(&empty, &f, 0.75), 0);
    }

    #[test]
    fn ambiguous_matches_are_rejected() {
        // two identical source descriptors make every query ambiguous
        let src = set(&[basis(0), basis(0)]);
        let q = set(&[basis(0)]);
        assert_eq!(match_brute_force(&q, &src, 0.75), 0);
        let single = set(&[basis(3)]);
        assert_eq!(match_brute_force(&q, &single, 0.75), 1);
    }

    #[test]
    fn matching_is_directional() {
        // many-to-one: both sample descriptors land on the single close source entry
        let mut near = basis(0);
        near[1] = 0.05;
        let sample = set(&[basis(0), near]);
        let source = set(&[basis(0), basis(64)]);
        assert_eq!(match_brute_force(&sample, &source, 0.75), 2);
        // reversed, only the exact duplicate survives; the far descriptor is ambiguous
        assert_eq!(match_brute_force(&source, &sample, 0.75), 1);
    }

    #[test]
    fn scores_follow_source_order() {
        let a = set(&[basis(0), basis(1), basis(2)]);
        let b = set(&[basis(10), basis(11)]);
        let sample = set(&[basis(10), basis(11)]);
        let v = score_against_classes(&sample, &[a, b], 0.75);
        assert_eq!(v.scores(), &[0, 2]);
    }
}
