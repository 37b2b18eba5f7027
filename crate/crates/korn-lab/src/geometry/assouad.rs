use serde::Serialize;

use crate::error::{Error, Result};

/// A finite point set in 2 or 3 dimensions, stored flat and dim-strided.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub dim: usize,
    pts: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, pts: Vec<f64>) -> Self {
        assert!(dim == 1 || dim == 2 || dim == 3);
        assert_eq!(pts.len() % dim, 0);
        PointCloud { dim, pts }
    }

    pub fn len(&self) -> usize {
        self.pts.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn dist2(&self, i: usize, p: &[f64]) -> f64 {
        let q = self.point(i);
        (0..self.dim).map(|a| (q[a] - p[a]).powi(2)).sum()
    }

    /// Size of a greedy `small_r`-net of the points inside the closed ball
    /// `B(center, big_r)`: scan in index order, start a new net point at
    /// every point not yet within `small_r` of the net. The result both
    /// covers the ball and is `small_r`-separated, so it bounds the true
    /// covering number within a dimensional factor.
    pub fn covering_number(&self, center: &[f64], big_r: f64, small_r: f64) -> usize {
        let big2 = big_r * big_r;
        let small2 = small_r * small_r;
        let mut net: Vec<usize> = Vec::new();
        for i in 0..self.len() {
            if self.dist2(i, center) > big2 {
                continue;
            }
            let p = self.point(i);
            if net.iter().all(|&j| self.dist2(j, p) > small2) {
                net.push(i);
            }
        }
        net.len()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AssouadSample {
    pub big_r: f64,
    pub small_r: f64,
    /// Largest covering number over all probed ball centers.
    pub count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssouadFit {
    /// Fitted homogeneity exponent: slope of log(count) vs log(R/r).
    pub lambda: f64,
    /// Fitted log of the multiplicative constant.
    pub log_c: f64,
    pub samples: Vec<AssouadSample>,
}

/// Estimate the homogeneity (Assouad) exponent of a point cloud: for each
/// scale pair `(R, r)` take the worst covering number over ball centers,
/// then least-squares fit `log N = log C + lambda * log(R/r)`.
///
/// Requires at least three pairs, ratios `R/r >= 4`, and at least two
/// distinct ratios. At most `max_centers` cloud points are probed as ball
/// centers, chosen by a deterministic stride.
pub fn assouad_estimate(
    cloud: &PointCloud,
    pairs: &[(f64, f64)],
    max_centers: usize,
) -> Result<AssouadFit> {
    if cloud.is_empty() {
        return Err(Error::InvalidParameter("empty point cloud".into()));
    }
    if pairs.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 scale pairs, got {}",
            pairs.len()
        )));
    }
    for &(big_r, small_r) in pairs {
        if !(small_r > 0.0 && big_r >= 4.0 * small_r) {
            return Err(Error::InvalidParameter(format!(
                "scale pair ({big_r}, {small_r}) must satisfy R >= 4r > 0"
            )));
        }
    }
    let n = cloud.len();
    let stride = n.div_ceil(max_centers.max(1)).max(1);
    let centers: Vec<usize> = (0..n).step_by(stride).collect();

    use rayon::prelude::*;
    let samples: Vec<AssouadSample> = pairs
        .par_iter()
        .map(|&(big_r, small_r)| {
            let count = centers
                .iter()
                .map(|&c| {
                    let p: Vec<f64> = cloud.point(c).to_vec();
                    cloud.covering_number(&p, big_r, small_r)
                })
                .max()
                .unwrap_or(0);
            AssouadSample { big_r, small_r, count }
        })
        .collect();

    if samples.iter().any(|s| s.count == 0) {
        return Err(Error::DegenerateFit(
            "a scale pair captured no points in any ball".into(),
        ));
    }

    // Least squares with intercept on (log ratio, log count).
    let xs: Vec<f64> = samples.iter().map(|s| (s.big_r / s.small_r).ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| (s.count as f64).ln()).collect();
    let (lambda, log_c) = fit_line(&xs, &ys)?;
    Ok(AssouadFit { lambda, log_c, samples })
}

/// Scale-pair ladder with a fixed outer radius and quartering inner radii,
/// stopping before the inner radius falls below `r_min`.
pub fn ratio_ladder(big_r: f64, r_min: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut r = big_r / 4.0;
    while r >= r_min {
        out.push((big_r, r));
        r /= 4.0;
    }
    out
}

/// Box-counting dimension of a point cloud: the number of occupied grid
/// boxes `N(eps)` is counted per scale and `log N` is regressed on
/// `log(1/eps)`. A coarser notion than the homogeneity exponent (it probes
/// the whole cloud at once instead of the worst ball), which makes it a
/// useful independent cross-check.
pub fn box_counting(cloud: &PointCloud, epsilons: &[f64]) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::InvalidParameter("empty point cloud".into()));
    }
    if epsilons.len() < 2 {
        return Err(Error::InvalidParameter(
            "box counting needs at least two scales".into(),
        ));
    }
    let mut xs = Vec::with_capacity(epsilons.len());
    let mut ys = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "box size {eps} must be positive and finite"
            )));
        }
        let mut boxes = std::collections::BTreeSet::new();
        for i in 0..cloud.len() {
            let p = cloud.point(i);
            let mut key = [0i64; 3];
            for a in 0..cloud.dim {
                key[a] = (p[a] / eps).floor() as i64;
            }
            boxes.insert(key);
        }
        xs.push((1.0 / eps).ln());
        ys.push((boxes.len() as f64).ln());
    }
    Ok(fit_line(&xs, &ys)?.0)
}

/// Ordinary least squares for y = a*x + b; returns (a, b).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit("need at least two fit points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx < 1e-18 {
        return Err(Error::DegenerateFit(
            "scale ratios are all equal; cannot fit an exponent".into(),
        ));
    }
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment_cloud(n: usize) -> PointCloud {
        let mut pts = Vec::with_capacity(2 * (n + 1));
        for k in 0..=n {
            pts.push(k as f64 / n as f64);
            pts.push(0.0);
        }
        PointCloud::new(2, pts)
    }

    #[test]
    fn covering_number_counts_separated_points() {
        // Five collinear points spaced 1 apart, centered ball captures all.
        let pts = vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0];
        let cloud = PointCloud::new(2, pts);
        assert_eq!(cloud.covering_number(&[2.0, 0.0], 2.2, 0.9), 5);
        assert_eq!(cloud.covering_number(&[2.0, 0.0], 2.2, 1.1), 3);
        assert_eq!(cloud.covering_number(&[2.0, 0.0], 0.5, 0.9), 1);
        assert_eq!(cloud.covering_number(&[-5.0, 0.0], 0.5, 0.9), 0);
    }

    #[test]
    fn segment_has_exponent_one() {
        let cloud = segment_cloud(512);
        let pairs = ratio_ladder(0.5, 4.0 / 512.0);
        assert!(pairs.len() >= 3);
        let fit = assouad_estimate(&cloud, &pairs, 64).unwrap();
        assert!(
            (fit.lambda - 1.0).abs() < 0.1,
            "segment exponent {}",
            fit.lambda
        );
    }

    #[test]
    fn reciprocal_sequence_needs_localized_scales() {
        // {1/k} has box-counting dimension 1/2 but homogeneity exponent 1;
        // pairs (R, r) = (4/m, 1/m^2) centered near 1/m expose it.
        let mut pts = vec![0.0, 0.0];
        for k in 1..=256 {
            pts.push(1.0 / k as f64);
            pts.push(0.0);
        }
        let cloud = PointCloud::new(2, pts);
        let pairs: Vec<(f64, f64)> = [16.0, 32.0, 64.0]
            .iter()
            .map(|&m| (4.0 / m, 1.0 / (m * m)))
            .collect();
        let fit = assouad_estimate(&cloud, &pairs, cloud.len()).unwrap();
        assert!(fit.lambda > 0.8, "localized exponent {}", fit.lambda);

        // Global scales see only the box-counting behaviour, well below 1.
        let global = ratio_ladder(1.0, 1.0 / 256.0);
        let gfit = assouad_estimate(&cloud, &global, cloud.len()).unwrap();
        assert!(gfit.lambda < 0.8, "global exponent {}", gfit.lambda);
    }

    #[test]
    fn subset_has_smaller_or_equal_counts() {
        let cloud = segment_cloud(256);
        let sub = segment_cloud(128); // same segment, coarser sampling
        for &(big_r, small_r) in &ratio_ladder(0.5, 1.0 / 32.0) {
            for c in [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]] {
                assert!(
                    sub.covering_number(&c, big_r, small_r)
                        <= cloud.covering_number(&c, big_r, small_r) + 1
                );
            }
        }
    }

    #[test]
    fn estimate_rejects_bad_inputs() {
        let cloud = segment_cloud(16);
        assert!(assouad_estimate(&cloud, &[(1.0, 0.1)], 16).is_err());
        let bad_ratio = vec![(1.0, 0.5), (1.0, 0.4), (1.0, 0.3)];
        assert!(assouad_estimate(&cloud, &bad_ratio, 16).is_err());
        // All-equal ratios cannot be fitted.
        let flat = vec![(1.0, 0.25), (0.5, 0.125), (0.25, 0.0625)];
        assert!(matches!(
            assouad_estimate(&cloud, &flat, 16),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn fit_line_recovers_exact_affine_data() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let (a, b) = fit_line(&xs, &ys).unwrap();
        assert!((a - 2.5).abs() < 1e-12);
        assert!((b + 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_counting_measures_a_segment_and_a_square() {
        let seg = segment_cloud(4096);
        let eps = [0.1, 0.05, 0.025, 0.0125];
        let d = box_counting(&seg, &eps).unwrap();
        assert!((d - 1.0).abs() <= 0.05, "segment box dimension {d}");

        let n = 64;
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(i as f64 / n as f64);
                pts.push(j as f64 / n as f64);
            }
        }
        let sq = PointCloud::new(2, pts);
        let d = box_counting(&sq, &[0.2, 0.1, 0.05]).unwrap();
        assert!((d - 2.0).abs() <= 0.1, "square box dimension {d}");
    }

    #[test]
    fn box_counting_rejects_degenerate_scales() {
        let seg = segment_cloud(64);
        assert!(box_counting(&seg, &[0.1]).is_err());
        assert!(box_counting(&seg, &[0.1, 0.0]).is_err());
    }
}
