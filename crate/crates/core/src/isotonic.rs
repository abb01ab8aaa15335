//! Pool-adjacent-violators projection onto non-increasing sequences.

/// Least-squares projection of `values` onto non-increasing sequences with
/// the given positive weights.
pub fn pava_decreasing_weighted(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // (weighted sum, total weight, length) per block
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v * w, w, 1));
        while blocks.len() > 1 {
            let (s1, w1, _) = blocks[blocks.len() - 2];
            let (s2, w2, _) = blocks[blocks.len() - 1];
            if s1 / w1 < s2 / w2 {
                let (s, w, c) = blocks.pop().unwrap();
                let last = blocks.last_mut().unwrap();
                last.0 += s;
                last.1 += w;
                last.2 += c;
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, w, c) in blocks {
        out.extend(std::iter::repeat_n(s / w, c));
    }
    out
}

pub fn pava_decreasing(values: &[f64]) -> Vec<f64> {
    pava_decreasing_weighted(values, &vec![1.0; values.len()])
}

/// Clips to [0, 1], then projects onto non-increasing sequences.
pub fn monotone_project(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    pava_decreasing(&clipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Brute force: best non-increasing fit whose values lie on a fine lattice.
    fn brute_force_three(x: &[f64; 3], step: f64) -> ([f64; 3], f64) {
        let lattice: Vec<f64> = (0..=(1.0 / step).round() as usize).map(|i| i as f64 * step).collect();
        let mut best = ([0.0; 3], f64::INFINITY);
        for &a in &lattice {
            for &b in lattice.iter().filter(|&&b| b <= a) {
                for &c in lattice.iter().filter(|&&c| c <= b) {
                    let sse = (x[0] - a).powi(2) + (x[1] - b).powi(2) + (x[2] - c).powi(2);
                    if sse < best.1 {
                        best = ([a, b, c], sse);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn pools_violating_pair() {
        let out = monotone_project(&[0.9, 0.95, 0.8]);
        for (o, e) in out.iter().zip([0.925, 0.925, 0.8]) {
            assert!((o - e).abs() < 1e-15);
        }
        let (bf, _) = brute_force_three(&[0.9, 0.95, 0.8], 0.005);
        for (o, b) in out.iter().zip(bf) {
            assert!((o - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_point_and_clip() {
        let x = [1.0, 0.7, 0.7, 0.2, 0.0];
        assert_eq!(monotone_project(&x), x.to_vec());
        assert_eq!(monotone_project(&[1.02, 0.5]), vec![1.0, 0.5]);
        assert_eq!(monotone_project(&[-0.1, -0.2]), vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn output_is_non_increasing_and_mean_preserving(v in proptest::collection::vec(-1.0f64..2.0, 1..40)) {
            let p = pava_decreasing(&v);
            prop_assert!(p.windows(2).all(|w| w[0] >= w[1] - 1e-12));
            let s1: f64 = v.iter().sum();
            let s2: f64 = p.iter().sum();
            prop_assert!((s1 - s2).abs() < 1e-9);
        }

        #[test]
        fn sup_norm_contraction(
            v in proptest::collection::vec(-0.3f64..1.3, 1..40),
            g in proptest::collection::vec(0.0f64..1.0, 40),
        ) {
            let mut truth: Vec<f64> = g[..v.len()].to_vec();
            truth.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let p = monotone_project(&v);
            let before = v.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let after = p.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(after <= before + 1e-12);
        }
    }
}
