//! Mode-collapse metrics.
//!
//! Bin-based comparison follows the usual NDB construction: K-means bins are
//! fitted on training samples, generated samples are assigned to their nearest
//! centroid, and each bin's two proportions are compared with a pooled
//! two-proportion z-test. JSD is computed between the two bin-proportion
//! vectors with base-2 logarithms, so it lies in `[0, 1]`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{DataError, MixtureSpec, Point};
use crate::rng::{Purpose, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("cannot fit {k} clusters to {n} samples")]
    TooFewSamples { k: usize, n: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("need at least {need} samples, got {got}")]
    NotEnough { need: usize, got: usize },
    #[error("samples have inconsistent dimensions")]
    Dimension,
    #[error("t_sigma must be positive, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and the squared distance.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment pass, starting with the k-means++ seeding.
    pub inertia_trace: Vec<f64>,
}

pub const DEFAULT_MAX_ITER: usize = 100;

/// k-means++ seeding followed by Lloyd iterations until the assignments stop
/// changing or `max_iter` updates have run.
///
/// An empty cluster is reseeded at the sample farthest from its own centroid.
pub fn kmeans<P: AsRef<[f64]>>(
    samples: &[P],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeans, MetricsError> {
    let n = samples.len();
    if k == 0 || k > n {
        return Err(MetricsError::TooFewSamples { k, n });
    }
    let dim = samples[0].as_ref().len();
    if samples.iter().any(|s| s.as_ref().len() != dim) {
        return Err(MetricsError::Dimension);
    }
    let max_iter = max_iter.max(1);
    let mut rng = Stream::new(seed, Purpose::KMeans);

    let mut chosen = vec![false; n];
    let first = rng.below(n);
    chosen[first] = true;
    let mut centroids = vec![samples[first].as_ref().to_vec()];
    let mut d2: Vec<f64> = samples
        .iter()
        .map(|s| sq_dist(s.as_ref(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut idx = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    idx = Some(i);
                    break;
                }
            }
            // rounding can leave target at the very end
            idx.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // only duplicates left; take an unused index
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.below(free.len())]
        };
        chosen[pick] = true;
        let c = samples[pick].as_ref().to_vec();
        for (i, s) in samples.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(s.as_ref(), &c));
        }
        centroids.push(c);
    }

    let assign = |centroids: &[Vec<f64>]| -> (Vec<usize>, Vec<f64>) {
        samples
            .iter()
            .map(|s| nearest(s.as_ref(), centroids))
            .unzip()
    };
    let (mut assignments, mut dists) = assign(&centroids);
    let mut inertia_trace = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (s, &a) in samples.iter().zip(&assignments) {
            counts[a] += 1;
            for (acc, x) in sums[a].iter_mut().zip(s.as_ref()) {
                *acc += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|x| x / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let (far, _) = dists
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
                centroids[j] = samples[far].as_ref().to_vec();
                dists[far] = 0.0;
            }
        }
        let (next, next_dists) = assign(&centroids);
        inertia_trace.push(next_dists.iter().sum());
        let stable = next == assignments;
        assignments = next;
        dists = next_dists;
        if stable {
            break;
        }
    }

    Ok(KMeans {
        centroids,
        assignments,
        inertia: *inertia_trace.last().unwrap(),
        iterations,
        inertia_trace,
    })
}

/// Bin count for `n_train` samples: about `n_train / 20`, keeping at least
/// ten training samples per bin.
pub fn default_k(n_train: usize) -> usize {
    let k = (n_train as f64 / 20.0).round() as usize;
    k.min(n_train / 10).max(1)
}

/// K-means bins fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct BinModel {
    pub centroids: Vec<Vec<f64>>,
    pub proportions: Vec<f64>,
    pub n_train: usize,
}

impl BinModel {
    pub fn fit<P: AsRef<[f64]>>(train: &[P], k: usize, seed: u64) -> Result<Self, MetricsError> {
        let km = kmeans(train, k, seed, DEFAULT_MAX_ITER)?;
        let mut counts = vec![0usize; k];
        for &a in &km.assignments {
            counts[a] += 1;
        }
        Ok(BinModel {
            centroids: km.centroids,
            proportions: proportions(&counts),
            n_train: train.len(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn counts<P: AsRef<[f64]>>(&self, samples: &[P]) -> Vec<usize> {
        let mut counts = vec![0usize; self.k()];
        for s in samples {
            counts[nearest(s.as_ref(), &self.centroids).0] += 1;
        }
        counts
    }
}

fn proportions(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Pooled two-proportion z statistic; 0 when both proportions are 0 or 1.
pub fn two_proportion_z(p1: f64, n1: usize, p2: f64, n2: usize) -> f64 {
    let (n1, n2) = (n1 as f64, n2 as f64);
    let pooled = (p1 * n1 + p2 * n2) / (n1 + n2);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    if se > 0.0 {
        (p1 - p2) / se
    } else {
        0.0
    }
}

/// Two-sided critical value `z_{1 - alpha/2}`.
pub fn critical_z(alpha: f64) -> Result<f64, MetricsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::BadAlpha(alpha));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - alpha / 2.0))
}

/// Jensen–Shannon divergence in bits, with `0 log 0 = 0`.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (x / (0.5 * (x + y))).log2())
            .sum()
    };
    let v = 0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p);
    v.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdbResult {
    pub ndb: usize,
    pub jsd: f64,
    pub bins: BinModel,
    pub gen_proportions: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn ndb_jsd<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    train: &[P],
    generated: &[Q],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<NdbResult, MetricsError> {
    let threshold = critical_z(alpha)?;
    if train.is_empty() || generated.is_empty() {
        return Err(MetricsError::NotEnough { need: 1, got: 0 });
    }
    let bins = BinModel::fit(train, k, seed)?;
    Ok(compare_to_bins(bins, generated, threshold))
}

fn compare_to_bins<Q: AsRef<[f64]>>(bins: BinModel, generated: &[Q], threshold: f64) -> NdbResult {
    let gen_proportions = proportions(&bins.counts(generated));
    let z: Vec<f64> = bins
        .proportions
        .iter()
        .zip(&gen_proportions)
        .map(|(&p1, &p2)| two_proportion_z(p1, bins.n_train, p2, generated.len()))
        .collect();
    let ndb = z.iter().filter(|z| z.abs() > threshold).count();
    let jsd = jsd(&bins.proportions, &gen_proportions);
    NdbResult {
        ndb,
        jsd,
        bins,
        gen_proportions,
        z,
    }
}

pub fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Mean over random distinct pairs of the mean absolute coordinate difference.
/// When `n_pairs` is 0 or covers every unordered pair, all pairs are used.
pub fn pairwise_diversity<P: AsRef<[f64]>>(
    samples: &[P],
    n_pairs: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricsError::NotEnough { need: 2, got: n });
    }
    let all = n * (n - 1) / 2;
    if n_pairs == 0 || n_pairs >= all {
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += mean_abs_diff(samples[i].as_ref(), samples[j].as_ref());
            }
        }
        return Ok(total / all as f64);
    }
    let mut rng = Stream::new(seed, Purpose::Pairs);
    let mut total = 0.0;
    for _ in 0..n_pairs {
        let i = rng.below(n);
        let mut j = rng.below(n - 1);
        if j >= i {
            j += 1;
        }
        total += mean_abs_diff(samples[i].as_ref(), samples[j].as_ref());
    }
    Ok(total / n_pairs as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub modes_covered: usize,
    pub hq_fraction: f64,
    /// High-quality samples nearest to each mode of the category.
    pub per_mode: Vec<usize>,
}

/// Counts modes of `category` that receive at least `max(1, 0.01 n)`
/// high-quality samples, i.e. samples within `t_sigma * sigma` of their
/// nearest mode center.
pub fn mode_coverage(
    samples: &[Point],
    spec: &MixtureSpec,
    category: usize,
    t_sigma: f64,
) -> Result<Coverage, MetricsError> {
    let centers = spec.centers_of(category)?;
    coverage_against(samples, &centers, spec.sigma, t_sigma)
}

pub fn coverage_against(
    samples: &[Point],
    centers: &[Point],
    sigma: f64,
    t_sigma: f64,
) -> Result<Coverage, MetricsError> {
    if !(t_sigma > 0.0) {
        return Err(MetricsError::BadThreshold(t_sigma));
    }
    let radius2 = (t_sigma * sigma).powi(2);
    let centers: Vec<Vec<f64>> = centers.iter().map(|c| c.to_vec()).collect();
    let mut per_mode = vec![0usize; centers.len()];
    let mut hq = 0usize;
    for s in samples {
        let (m, d2) = nearest(s, &centers);
        if d2 <= radius2 {
            hq += 1;
            per_mode[m] += 1;
        }
    }
    let need = (0.01 * samples.len() as f64).max(1.0);
    let modes_covered = per_mode.iter().filter(|&&c| c as f64 >= need).count();
    let hq_fraction = if samples.is_empty() {
        0.0
    } else {
        hq as f64 / samples.len() as f64
    };
    Ok(Coverage {
        modes_covered,
        hq_fraction,
        per_mode,
    })
}

/// One evaluation of generated samples against training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ndb: usize,
    pub ndb_fraction: f64,
    pub jsd: f64,
    pub pairwise_diversity: f64,
    pub modes_covered: usize,
    pub hq_fraction: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
}

impl MetricsReport {
    /// Pools per-category reports: bin counts and covered modes add up,
    /// the real-valued metrics are averaged.
    pub fn pooled(reports: &[MetricsReport]) -> Option<MetricsReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let ndb: usize = reports.iter().map(|r| r.ndb).sum();
        let k: usize = reports.iter().map(|r| r.k).sum();
        let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport {
            ndb,
            ndb_fraction: ndb as f64 / k as f64,
            jsd: mean(|r| r.jsd),
            pairwise_diversity: mean(|r| r.pairwise_diversity),
            modes_covered: reports.iter().map(|r| r.modes_covered).sum(),
            hq_fraction: mean(|r| r.hq_fraction),
            k,
            alpha: first.alpha,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// `None` picks [`default_k`] of the training set size.
    pub k_bins: Option<usize>,
    pub alpha: f64,
    pub n_pairs: usize,
    pub t_sigma: f64,
    pub n_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_bins: None,
            alpha: 0.05,
            n_pairs: 1000,
            t_sigma: 3.0,
            n_samples: 2000,
        }
    }
}

/// Full report for generated samples of one category. `centers` and `sigma`
/// describe the ground-truth modes the category should cover.
pub fn evaluate(
    train: &[Point],
    generated: &[Point],
    centers: &[Point],
    sigma: f64,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<MetricsReport, MetricsError> {
    let k = cfg.k_bins.unwrap_or_else(|| default_k(train.len()));
    let nj = ndb_jsd(train, generated, k, cfg.alpha, seed)?;
    let diversity = pairwise_diversity(generated, cfg.n_pairs, seed)?;
    let cov = coverage_against(generated, centers, sigma, cfg.t_sigma)?;
    Ok(MetricsReport {
        ndb: nj.ndb,
        ndb_fraction: nj.ndb as f64 / k as f64,
        jsd: nj.jsd,
        pairwise_diversity: diversity,
        modes_covered: cov.modes_covered,
        hq_fraction: cov.hq_fraction,
        k,
        alpha: cfg.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_grid, sample_real};

    fn blob(center: [f64; 2], n: usize, spread: f64, seed: u64) -> Vec<[f64; 2]> {
        let mut s = Stream::new(seed, Purpose::Custom(77));
        (0..n)
            .map(|_| [center[0] + spread * s.normal(), center[1] + spread * s.normal()])
            .collect()
    }

    #[test]
    fn two_far_clusters() {
        let sigma = 0.1;
        let mut pts = blob([-5.0, 0.0], 50, sigma, 1);
        pts.extend(blob([5.0, 3.0], 50, sigma, 2));
        let km = kmeans(&pts, 2, 0, DEFAULT_MAX_ITER).unwrap();
        // brute force: the true group means
        let mean = |xs: &[[f64; 2]]| {
            let n = xs.len() as f64;
            [xs.iter().map(|p| p[0]).sum::<f64>() / n, xs.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        for truth in [mean(&pts[..50]), mean(&pts[50..])] {
            let (_, d2) = nearest(&truth, &km.centroids);
            assert!(d2.sqrt() < sigma, "{truth:?} vs {:?}", km.centroids);
        }
    }

    #[test]
    fn single_cluster_is_mean() {
        let pts = blob([1.0, -2.0], 37, 0.5, 3);
        let km = kmeans(&pts, 1, 5, DEFAULT_MAX_ITER).unwrap();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        assert_eq!(km.centroids[0], vec![mx, my]);
    }

    #[test]
    fn k_equals_n() {
        let pts = blob([0.0, 0.0], 12, 1.0, 4);
        let km = kmeans(&pts, 12, 1, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut ids = km.assignments.clone();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 12);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let pts = blob([0.0, 0.0], 3, 1.0, 4);
        assert_eq!(
            kmeans(&pts, 4, 0, 10).unwrap_err(),
            MetricsError::TooFewSamples { k: 4, n: 3 }
        );
    }

    #[test]
    fn inertia_never_increases() {
        let spec = make_grid(5, 5, 2.0, 0.3).unwrap();
        let mut pts = Vec::new();
        for c in 0..5 {
            pts.extend(sample_real(&spec, c, 200, c as u64).unwrap().samples);
        }
        for seed in 0..5 {
            let km = kmeans(&pts, 40, seed, DEFAULT_MAX_ITER).unwrap();
            for w in km.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", km.inertia_trace);
            }
        }
    }

    #[test]
    fn default_bin_count() {
        assert_eq!(default_k(2000), 100);
        assert_eq!(default_k(5), 1);
        assert_eq!(default_k(30), 2);
        for n in 10..500 {
            assert!(n / default_k(n) >= 10);
        }
    }

    #[test]
    fn identical_sets() {
        let spec = make_grid(5, 5, 2.0, 0.05).unwrap();
        let pts = sample_real(&spec, 2, 400, 8).unwrap().samples;
        let r = ndb_jsd(&pts, &pts, 20, 0.05, 0).unwrap();
        assert_eq!(r.ndb, 0);
        assert_eq!(r.jsd, 0.0);
    }

    #[test]
    fn disjoint_jsd_is_one() {
        let p = [0.25, 0.25, 0.5, 0.0, 0.0, 0.0];
        let q = [0.0, 0.0, 0.0, 0.1, 0.3, 0.6];
        assert!((jsd(&p, &q) - 1.0).abs() <= 1e-12);
        assert_eq!(jsd(&p, &p), 0.0);
        assert_eq!(jsd(&p, &q), jsd(&q, &p));
    }

    #[test]
    fn bad_alpha() {
        let pts = [[0.0, 0.0], [1.0, 1.0]];
        assert_eq!(
            ndb_jsd(&pts, &pts, 1, 1.0, 0).unwrap_err(),
            MetricsError::BadAlpha(1.0)
        );
        assert!(critical_z(0.0).is_err());
        assert!((critical_z(0.05).unwrap() - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn diversity_basics() {
        let same = vec![[1.0, 2.0]; 10];
        assert_eq!(pairwise_diversity(&same, 50, 0).unwrap(), 0.0);
        let two = [[0.0, 0.0], [2.0, 2.0]];
        assert_eq!(pairwise_diversity(&two, 0, 0).unwrap(), 2.0);
        assert_eq!(pairwise_diversity(&two, 5, 0).unwrap(), 2.0);
        assert!(pairwise_diversity(&two[..1], 5, 0).is_err());

        let pts = blob([0.0, 0.0], 100, 1.0, 6);
        let scaled: Vec<[f64; 2]> = pts.iter().map(|p| [3.0 * p[0], 3.0 * p[1]]).collect();
        let a = pairwise_diversity(&pts, 300, 2).unwrap();
        let b = pairwise_diversity(&scaled, 300, 2).unwrap();
        assert!((b / a - 3.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_cases() {
        let spec = make_grid(5, 5, 2.0, 0.05).unwrap();
        let centers = spec.centers_of(1).unwrap();
        let c = mode_coverage(&centers, &spec, 1, 3.0).unwrap();
        assert_eq!(c.modes_covered, 5);
        assert_eq!(c.hq_fraction, 1.0);

        let collapsed = vec![centers[2]; 100];
        assert_eq!(mode_coverage(&collapsed, &spec, 1, 3.0).unwrap().modes_covered, 1);

        let off: Vec<Point> = centers.iter().map(|c| [c[0], c[1] + 4.0 * 0.05]).collect();
        assert_eq!(mode_coverage(&off, &spec, 1, 3.0).unwrap().hq_fraction, 0.0);

        assert!(mode_coverage(&off, &spec, 7, 3.0).is_err());
        assert!(mode_coverage(&off, &spec, 1, 0.0).is_err());
    }

    #[test]
    fn report_json_field_names() {
        let r = MetricsReport {
            ndb: 1,
            ndb_fraction: 0.5,
            jsd: 0.1,
            pairwise_diversity: 0.2,
            modes_covered: 3,
            hq_fraction: 0.9,
            k: 2,
            alpha: 0.05,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            ["K", "alpha", "hq_fraction", "jsd", "modes_covered", "ndb", "ndb_fraction", "pairwise_diversity"]
        );
    }
}
