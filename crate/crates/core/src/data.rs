//! Conditional Gaussian-mixture datasets in the plane.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::rng::{Purpose, Stream};
use crate::tensor::Tensor;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{modes} modes cannot be split evenly into {categories} categories")]
    Indivisible { modes: usize, categories: usize },
    #[error("category {category} out of range (have {count})")]
    UnknownCategory { category: usize, count: usize },
    #[error("invalid mixture: {0}")]
    Invalid(String),
}

/// Ground-truth mixture: isotropic Gaussians with a shared `sigma`, grouped
/// into categories.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub centers: Vec<Point>,
    pub sigma: f64,
    /// `categories[c]` lists the mode indices owned by category `c`.
    pub categories: Vec<Vec<usize>>,
}

impl MixtureSpec {
    pub fn new(
        centers: Vec<Point>,
        sigma: f64,
        categories: Vec<Vec<usize>>,
    ) -> Result<Self, DataError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(DataError::Invalid(format!("sigma {sigma}")));
        }
        let mut owner = vec![None; centers.len()];
        for (c, modes) in categories.iter().enumerate() {
            if modes.is_empty() {
                return Err(DataError::Invalid(format!("category {c} is empty")));
            }
            for &m in modes {
                match owner.get_mut(m) {
                    None => return Err(DataError::Invalid(format!("mode {m} out of range"))),
                    Some(Some(_)) => {
                        return Err(DataError::Invalid(format!("mode {m} in two categories")))
                    }
                    Some(slot) => *slot = Some(c),
                }
            }
        }
        if owner.iter().any(Option::is_none) {
            return Err(DataError::Invalid("every mode needs a category".into()));
        }
        for i in 0..centers.len() {
            for j in 0..i {
                if centers[i] == centers[j] {
                    return Err(DataError::Invalid(format!("modes {j} and {i} coincide")));
                }
            }
        }
        Ok(MixtureSpec {
            centers,
            sigma,
            categories,
        })
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn modes_of(&self, category: usize) -> Result<&[usize], DataError> {
        self.categories
            .get(category)
            .map(Vec::as_slice)
            .ok_or(DataError::UnknownCategory {
                category,
                count: self.categories.len(),
            })
    }

    pub fn centers_of(&self, category: usize) -> Result<Vec<Point>, DataError> {
        Ok(self
            .modes_of(category)?
            .iter()
            .map(|&m| self.centers[m])
            .collect())
    }
}

/// `n_modes` centers evenly spaced on a circle; category `c` owns modes
/// `c, c + n_categories, ...`.
pub fn make_ring(
    n_modes: usize,
    radius: f64,
    sigma: f64,
    n_categories: usize,
) -> Result<MixtureSpec, DataError> {
    if n_modes == 0 || n_categories == 0 || !n_modes.is_multiple_of(n_categories) {
        return Err(DataError::Indivisible {
            modes: n_modes,
            categories: n_categories,
        });
    }
    let centers = (0..n_modes)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n_modes as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    let categories = (0..n_categories)
        .map(|c| (c..n_modes).step_by(n_categories).collect())
        .collect();
    MixtureSpec::new(centers, sigma, categories)
}

/// `rows × cols` lattice centered at the origin, one category per row
/// (row 0 is the bottom row).
pub fn make_grid(rows: usize, cols: usize, spacing: f64, sigma: f64) -> Result<MixtureSpec, DataError> {
    if rows == 0 || cols == 0 {
        return Err(DataError::Invalid("grid needs at least one row and column".into()));
    }
    let x0 = -spacing * (cols - 1) as f64 / 2.0;
    let y0 = -spacing * (rows - 1) as f64 / 2.0;
    let mut centers = Vec::with_capacity(rows * cols);
    let mut categories = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut modes = Vec::with_capacity(cols);
        for c in 0..cols {
            modes.push(centers.len());
            centers.push([x0 + spacing * c as f64, y0 + spacing * r as f64]);
        }
        categories.push(modes);
    }
    MixtureSpec::new(centers, sigma, categories)
}

/// Conditions and points of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub conditions: Vec<usize>,
    pub samples: Vec<Point>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples_tensor(&self) -> Tensor {
        Tensor::from_rows(&self.samples).unwrap()
    }

    /// CSV with a `category,x0,x1` header and 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,x0,x1\n");
        for (c, p) in self.conditions.iter().zip(&self.samples) {
            writeln!(out, "{c},{},{}", fmt_f64(p[0]), fmt_f64(p[1])).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next().map(str::trim) {
            Some("category,x0,x1") => {}
            other => return Err(DataError::Invalid(format!("bad CSV header {other:?}"))),
        }
        let mut batch = Batch::default();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            let bad = || DataError::Invalid(format!("bad CSV row {}: {line:?}", i + 2));
            if fields.len() != 3 {
                return Err(bad());
            }
            let c = fields[0].trim().parse().map_err(|_| bad())?;
            let x: f64 = fields[1].trim().parse().map_err(|_| bad())?;
            let y: f64 = fields[2].trim().parse().map_err(|_| bad())?;
            batch.conditions.push(c);
            batch.samples.push([x, y]);
        }
        Ok(batch)
    }

    pub fn filter_category(&self, category: usize) -> Batch {
        let mut out = Batch::default();
        for (c, p) in self.conditions.iter().zip(&self.samples) {
            if *c == category {
                out.conditions.push(*c);
                out.samples.push(*p);
            }
        }
        out
    }
}

/// Exact round-trip decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One draw per entry of `conditions`: a uniformly chosen mode of the
/// condition's category plus `N(0, sigma² I)` noise.
pub fn sample_for_conditions(
    spec: &MixtureSpec,
    conditions: &[usize],
    rng: &mut Stream,
) -> Result<Batch, DataError> {
    let mut samples = Vec::with_capacity(conditions.len());
    for &c in conditions {
        let modes = spec.modes_of(c)?;
        let center = spec.centers[modes[rng.below(modes.len())]];
        let dx = rng.normal();
        let dy = rng.normal();
        samples.push([center[0] + spec.sigma * dx, center[1] + spec.sigma * dy]);
    }
    Ok(Batch {
        conditions: conditions.to_vec(),
        samples,
    })
}

/// `n` real samples of one category, determined entirely by `seed`.
pub fn sample_real(spec: &MixtureSpec, category: usize, n: usize, seed: u64) -> Result<Batch, DataError> {
    spec.modes_of(category)?;
    let mut rng = Stream::new(seed, Purpose::RealData);
    sample_for_conditions(spec, &vec![category; n], &mut rng)
}

/// Conditions drawn uniformly over categories.
pub fn sample_conditions(n_categories: usize, n: usize, rng: &mut Stream) -> Vec<usize> {
    (0..n).map(|_| rng.below(n_categories)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentSpec {
    pub dim: usize,
}

impl Default for LatentSpec {
    fn default() -> Self {
        LatentSpec { dim: 2 }
    }
}

/// `[n, dim]` i.i.d. standard normals drawn from `rng`.
pub fn draw_latent(spec: LatentSpec, n: usize, rng: &mut Stream) -> Tensor {
    assert!(spec.dim >= 1 && n >= 1);
    Tensor::new(vec![n, spec.dim], rng.normals(n * spec.dim)).unwrap()
}

/// `n` latent vectors determined entirely by `seed`; `None` when `n == 0`.
pub fn sample_latent(spec: LatentSpec, n: usize, seed: u64) -> Option<Tensor> {
    (n > 0).then(|| draw_latent(spec, n, &mut Stream::new(seed, Purpose::Latent)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Point, b: Point) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn ring_geometry_and_round_robin() {
        let s = make_ring(8, 2.0, 0.02, 2).unwrap();
        assert!(close(s.centers[0], [2.0, 0.0]));
        assert_eq!(s.categories[0], vec![0, 2, 4, 6]);
        assert_eq!(s.categories[1], vec![1, 3, 5, 7]);

        let s = make_ring(4, 1.0, 0.02, 1).unwrap();
        let want = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (c, w) in s.centers.iter().zip(want) {
            assert!(close(*c, w), "{c:?} vs {w:?}");
        }
    }

    #[test]
    fn ring_divisibility() {
        assert_eq!(
            make_ring(8, 2.0, 0.02, 3),
            Err(DataError::Indivisible {
                modes: 8,
                categories: 3
            })
        );
    }

    #[test]
    fn grid_layout() {
        let s = make_grid(5, 5, 2.0, 0.05).unwrap();
        assert_eq!(s.centers.len(), 25);
        assert_eq!(s.centers[0], [-4.0, -4.0]);
        assert_eq!(s.centers[24], [4.0, 4.0]);
        assert_eq!(s.n_categories(), 5);
        assert!(s.centers_of(0).unwrap().iter().all(|c| c[1] == -4.0));

        let s = make_grid(1, 1, 2.0, 0.05).unwrap();
        assert_eq!(s.centers, vec![[0.0, 0.0]]);

        let s = make_grid(2, 3, 1.0, 0.05).unwrap();
        assert_eq!(s.centers.len(), 6);
        assert_eq!(s.categories, vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn mixture_validation() {
        assert!(MixtureSpec::new(vec![[0.0, 0.0], [0.0, 0.0]], 0.1, vec![vec![0, 1]]).is_err());
        assert!(MixtureSpec::new(vec![[0.0, 0.0], [1.0, 0.0]], 0.1, vec![vec![0]]).is_err());
        assert!(MixtureSpec::new(vec![[0.0, 0.0]], 0.1, vec![vec![0], vec![]]).is_err());
    }

    #[test]
    fn zero_sigma_hits_centers() {
        let s = make_grid(5, 5, 2.0, 0.0).unwrap();
        let b = sample_real(&s, 3, 200, 1).unwrap();
        let centers = s.centers_of(3).unwrap();
        assert!(b.samples.iter().all(|p| centers.contains(p)));
    }

    #[test]
    fn sampling_is_seeded() {
        let s = make_ring(8, 2.0, 0.02, 2).unwrap();
        assert_eq!(sample_real(&s, 1, 50, 9).unwrap(), sample_real(&s, 1, 50, 9).unwrap());
        assert_ne!(sample_real(&s, 1, 50, 9).unwrap(), sample_real(&s, 1, 50, 10).unwrap());
        let l = LatentSpec { dim: 3 };
        assert_eq!(sample_latent(l, 4, 2), sample_latent(l, 4, 2));
        assert_eq!(sample_latent(l, 4, 2).unwrap().shape(), &[4, 3]);
    }

    #[test]
    fn empty_requests() {
        let s = make_ring(8, 2.0, 0.02, 2).unwrap();
        assert!(sample_real(&s, 0, 0, 1).unwrap().is_empty());
        assert!(sample_latent(LatentSpec::default(), 0, 1).is_none());
        assert!(sample_real(&s, 2, 1, 1).is_err());
    }

    #[test]
    fn per_mode_counts_within_binomial_bounds() {
        let s = make_grid(5, 5, 2.0, 0.05).unwrap();
        let n = 100_000;
        let b = sample_real(&s, 0, n, 42).unwrap();
        let centers = s.centers_of(0).unwrap();
        let mut counts = vec![0usize; centers.len()];
        for p in &b.samples {
            let nearest = (0..centers.len())
                .min_by(|&i, &j| {
                    let di = (p[0] - centers[i][0]).powi(2) + (p[1] - centers[i][1]).powi(2);
                    let dj = (p[0] - centers[j][0]).powi(2) + (p[1] - centers[j][1]).powi(2);
                    di.total_cmp(&dj)
                })
                .unwrap();
            counts[nearest] += 1;
        }
        let p = 0.2;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "count {c}");
        }
    }

    #[test]
    fn ring_marginal_mean_near_origin() {
        let s = make_ring(8, 2.0, 0.02, 2).unwrap();
        let mut rng = Stream::new(5, Purpose::RealData);
        let n = 40_000;
        let conds = sample_conditions(2, n, &mut rng);
        let b = sample_for_conditions(&s, &conds, &mut rng).unwrap();
        let mx = b.samples.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let my = b.samples.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        // per-coordinate sd is about sqrt(2); 5 standard errors
        let tol = 5.0 * (2.0f64 / n as f64).sqrt();
        assert!(mx.abs() < tol && my.abs() < tol, "({mx}, {my})");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = make_ring(8, 2.0, 0.02, 2).unwrap();
        let b = sample_real(&s, 1, 20, 3).unwrap();
        let text = b.to_csv();
        assert!(text.starts_with("category,x0,x1\n"));
        assert_eq!(Batch::from_csv(&text).unwrap(), b);
    }
}
