use rand::Rng;
use rayon::prelude::*;

use crate::engine::stream_rng;
use crate::error::{Error, Result};

/// Half the L1 distance, with the shorter vector padded by zeros.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|k| (at(p, k) - at(q, k)).abs()).sum::<f64>()
}

/// `exp(−d² / 2σ²)` on the total-variation distance.
pub fn gaussian_tv_kernel(p: &[f64], q: &[f64], sigma: f64) -> f64 {
    let d = tv_distance(p, q);
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Squared MMD estimate. `biased` is set when either set is a singleton and
/// the V-statistic replaced the unbiased estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmdEstimate {
    pub value: f64,
    pub biased: bool,
}

fn kernel_sum(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64, skip_diagonal: bool) -> f64 {
    a.par_iter()
        .enumerate()
        .map(|(i, x)| {
            b.iter()
                .enumerate()
                .filter(|&(j, _)| !(skip_diagonal && i == j))
                .map(|(_, y)| gaussian_tv_kernel(x, y, sigma))
                .sum::<f64>()
        })
        .sum()
}

/// Squared maximum mean discrepancy between two descriptor sets.
pub fn mmd_squared(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> Result<MmdEstimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("MMD needs two nonempty sets"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    let (m, n) = (a.len() as f64, b.len() as f64);
    let biased = a.len() == 1 || b.len() == 1;
    let cross = kernel_sum(a, b, sigma, false) / (m * n);
    let value = if biased {
        kernel_sum(a, a, sigma, false) / (m * m) + kernel_sum(b, b, sigma, false) / (n * n) - 2.0 * cross
    } else {
        kernel_sum(a, a, sigma, true) / (m * (m - 1.0)) + kernel_sum(b, b, sigma, true) / (n * (n - 1.0)) - 2.0 * cross
    };
    Ok(MmdEstimate { value, biased })
}

/// Median pairwise total-variation distance within `set`; 1 when the
/// median is zero or the set has fewer than two elements.
pub fn median_bandwidth(set: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = (0..set.len())
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..set.len()).map(move |j| tv_distance(&set[i], &set[j])))
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Squared MMDs of generated-vs-test and train-vs-test and their ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmdReport {
    pub gen_test: f64,
    pub train_test: f64,
    pub ratio: f64,
    pub sigma: f64,
}

/// Floor applied to both squared MMDs in [`MmdReport::ratio`], so two
/// estimates at the noise floor give a ratio of 1.
pub const RATIO_FLOOR: f64 = 1e-12;

fn clamp_negative(v: f64, what: &str) -> f64 {
    if v < 0.0 {
        if v < -1e-9 {
            log::warn!("{what} MMD² estimate {v:.3e} is negative; clamped to 0");
        }
        0.0
    } else {
        v
    }
}

/// Ratio from already-computed descriptors with a fixed bandwidth.
pub fn mmd_ratio_with(gen: &[Vec<f64>], train: &[Vec<f64>], test: &[Vec<f64>], sigma: f64) -> Result<MmdReport> {
    let gen_test = clamp_negative(mmd_squared(gen, test, sigma)?.value, "generated-vs-test");
    let train_test = clamp_negative(mmd_squared(train, test, sigma)?.value, "train-vs-test");
    if train_test < RATIO_FLOOR {
        log::warn!("train-vs-test MMD² {train_test:.3e} below {RATIO_FLOOR:e}; ratio uses the floor");
    }
    Ok(MmdReport {
        gen_test,
        train_test,
        ratio: gen_test.max(RATIO_FLOOR) / train_test.max(RATIO_FLOOR),
        sigma,
    })
}

/// MMD ratio with the bandwidth from `sigma` or, if absent, the median
/// heuristic over `train`.
pub fn mmd_ratio(gen: &[Vec<f64>], train: &[Vec<f64>], test: &[Vec<f64>], sigma: Option<f64>) -> Result<MmdReport> {
    let sigma = sigma.unwrap_or_else(|| median_bandwidth(train));
    mmd_ratio_with(gen, train, test, sigma)
}

fn resample<R: Rng + ?Sized>(set: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
    (0..set.len()).map(|_| set[rng.random_range(0..set.len())].clone()).collect()
}

/// Percentile bootstrap interval for the MMD ratio: each replicate resamples
/// the three sets independently with replacement at a fixed bandwidth.
pub fn bootstrap_ratio_ci(
    gen: &[Vec<f64>],
    train: &[Vec<f64>],
    test: &[Vec<f64>],
    sigma: f64,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if replicates < 2 || !(0.0 < level && level < 1.0) {
        return Err(Error::arg(format!(
            "bootstrap needs at least 2 replicates and a level in (0, 1), got {replicates} and {level}"
        )));
    }
    let mut ratios = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let (g, tr, te) = (resample(gen, &mut rng), resample(train, &mut rng), resample(test, &mut rng));
            Ok(mmd_ratio_with(&g, &tr, &te, sigma)?.ratio)
        })
        .collect::<Result<Vec<f64>>>()?;
    ratios.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| ratios[((q * (replicates - 1) as f64).round() as usize).min(replicates - 1)];
    Ok((pick(tail), pick(1.0 - tail)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hist<R: Rng>(rng: &mut R, bias: f64) -> Vec<f64> {
        let mut h: Vec<f64> = (0..5).map(|k| rng.random::<f64>() + bias * k as f64).collect();
        let s: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= s);
        h
    }

    #[test]
    fn tv_pads_shorter_vector() {
        assert_eq!(tv_distance(&[1.0], &[0.0, 1.0]), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5, 0.0]), 0.0);
    }

    #[test]
    fn two_point_masses_closed_form() {
        let est = mmd_squared(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]], 1.0).unwrap();
        assert!(est.biased);
        assert!((est.value - (2.0 - 2.0 * (-0.5f64).exp())).abs() < 1e-15);
        assert!((est.value - 0.7869).abs() < 1e-4);
    }

    #[test]
    fn identical_sets_are_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set: Vec<_> = (0..20).map(|_| hist(&mut rng, 0.0)).collect();
        let est = mmd_squared(&set, &set, 0.3).unwrap();
        assert!(!est.biased);
        assert!(est.value <= 1e-9);
    }

    #[test]
    fn matches_direct_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<_> = (0..7).map(|_| hist(&mut rng, 0.0)).collect();
        let b: Vec<_> = (0..5).map(|_| hist(&mut rng, 0.5)).collect();
        let k = |x: &Vec<f64>, y: &Vec<f64>| {
            let d: f64 = x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0;
            (-d * d / (2.0 * 0.2 * 0.2)).exp()
        };
        let mut aa = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    aa += k(&a[i], &a[j]);
                }
            }
        }
        let mut bb = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    bb += k(&b[i], &b[j]);
                }
            }
        }
        let ab: f64 = a.iter().flat_map(|x| b.iter().map(move |y| k(x, y))).sum();
        let expected = aa / 42.0 + bb / 20.0 - 2.0 * ab / 35.0;
        assert!((mmd_squared(&a, &b, 0.2).unwrap().value - expected).abs() < 1e-12);
    }

    #[test]
    fn same_distribution_passes_permutation_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pool: Vec<_> = (0..60).map(|_| hist(&mut rng, 0.0)).collect();
        let sigma = median_bandwidth(&pool);
        let observed = mmd_squared(&pool[..30], &pool[30..], sigma).unwrap().value;
        let mut null: Vec<f64> = (0..1000)
            .map(|r| {
                let mut idx: Vec<usize> = (0..60).collect();
                let mut prng = stream_rng(99, r);
                for k in (1..60).rev() {
                    idx.swap(k, prng.random_range(0..=k));
                }
                let (x, y): (Vec<_>, Vec<_>) = (
                    idx[..30].iter().map(|&i| pool[i].clone()).collect(),
                    idx[30..].iter().map(|&i| pool[i].clone()).collect(),
                );
                mmd_squared(&x, &y, sigma).unwrap().value
            })
            .collect();
        null.sort_by(f64::total_cmp);
        assert!(observed < null[949], "{observed} vs {}", null[949]);
    }

    #[test]
    fn shifted_distribution_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<_> = (0..40).map(|_| hist(&mut rng, 0.0)).collect();
        let b: Vec<_> = (0..40).map(|_| hist(&mut rng, 1.0)).collect();
        assert!(mmd_squared(&a, &b, median_bandwidth(&a)).unwrap().value > 0.05);
    }

    #[test]
    fn ratio_definitional_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train: Vec<_> = (0..30).map(|_| hist(&mut rng, 0.0)).collect();
        let test: Vec<_> = (0..30).map(|_| hist(&mut rng, 0.3)).collect();
        let same = mmd_ratio(&train, &train, &test, None).unwrap();
        assert_eq!(same.ratio, 1.0);
        let perfect = mmd_ratio(&test, &train, &test, None).unwrap();
        assert_eq!(perfect.gen_test, 0.0);
        assert!(perfect.ratio < 1e-9);
        let (lo, hi) = bootstrap_ratio_ci(&train, &train, &test, same.sigma, 200, 0.95, 7).unwrap();
        assert!(lo <= 1.0 && 1.0 <= hi, "({lo}, {hi})");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(mmd_squared(&[], &[vec![1.0]], 1.0).is_err());
        assert!(mmd_squared(&[vec![1.0]], &[vec![1.0]], 0.0).is_err());
        assert_eq!(median_bandwidth(&[vec![1.0]]), 1.0);
    }
}
