//! Summary statistics for paired derivative comparisons.

use serde::Serialize;

/// Ordinary least squares `y = slope * x + intercept`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    (slope, my - slope * mx)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Population skewness; zero when the spread is zero.
pub fn skewness(v: &[f64]) -> f64 {
    let m = mean(v);
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    if m2 == 0.0 {
        return 0.0;
    }
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / v.len() as f64;
    m3 / m2.powf(1.5)
}

/// Linear-interpolated quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Freedman-Diaconis histogram: width `2 IQR n^(-1/3)`. Falls back to a single
/// bin when the data have no spread.
pub fn histogram(v: &[f64]) -> Histogram {
    const MAX_BINS: usize = 10_000;
    let s = sorted(v);
    let (lo, hi) = (s[0], s[s.len() - 1]);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let mut width = 2.0 * iqr / (s.len() as f64).cbrt();
    if width.is_nan() || width <= 0.0 || hi == lo {
        let w = if hi > lo { hi - lo } else { 1.0 };
        return Histogram {
            bin_width: w,
            edges: vec![lo, lo + w],
            counts: vec![s.len() as u64],
        };
    }
    let mut bins = ((hi - lo) / width).ceil().max(1.0) as usize;
    if bins > MAX_BINS {
        bins = MAX_BINS;
        width = (hi - lo) / bins as f64;
    }
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &x in &s {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Histogram {
        bin_width: width,
        edges,
        counts,
    }
}

/// Agreement statistics between reference and estimated derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterStats {
    pub n_points: usize,
    /// OLS fit of estimate against reference.
    pub slope: f64,
    pub intercept: f64,
    pub median_abs_error: f64,
    pub p95_abs_error: f64,
    /// Median of `|estimate - reference| / |reference|`.
    pub median_rel_error: f64,
    /// Moments of `estimate - reference`.
    pub diff_mean: f64,
    pub diff_std: f64,
    pub diff_skewness: f64,
    pub histogram: Histogram,
}

impl ScatterStats {
    /// Statistics over `(reference, estimate)` pairs; `None` when empty.
    pub fn from_pairs(reference: &[f64], estimate: &[f64]) -> Option<Self> {
        if reference.is_empty() || reference.len() != estimate.len() {
            return None;
        }
        let diff: Vec<f64> = estimate.iter().zip(reference).map(|(e, r)| e - r).collect();
        let abs = sorted(&diff.iter().map(|d| d.abs()).collect::<Vec<_>>());
        let rel = sorted(
            &diff
                .iter()
                .zip(reference)
                .map(|(d, r)| if *r == 0.0 { if *d == 0.0 { 0.0 } else { f64::INFINITY } } else { (d / r).abs() })
                .collect::<Vec<_>>(),
        );
        let (slope, intercept) = ols(reference, estimate);
        Some(Self {
            n_points: reference.len(),
            slope,
            intercept,
            median_abs_error: quantile_sorted(&abs, 0.5),
            p95_abs_error: quantile_sorted(&abs, 0.95),
            median_rel_error: quantile_sorted(&rel, 0.5),
            diff_mean: mean(&diff),
            diff_std: sample_std(&diff),
            diff_skewness: skewness(&diff),
            histogram: histogram(&diff),
        })
    }

    /// `|mean| <= tol * std` of the difference histogram.
    pub fn is_centered(&self, tol: f64) -> bool {
        self.diff_mean.abs() <= tol * self.diff_std
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, i) = ols(&x, &y);
        assert!((s - 2.0).abs() < 1e-14 && (i + 1.0).abs() < 1e-14);
    }

    #[test]
    fn moments() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&v), 2.5);
        assert!((sample_std(&v) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(skewness(&v), 0.0);
        assert!(skewness(&[0.0, 0.0, 0.0, 10.0]) > 0.0);
        assert_eq!(sample_std(&[1.0]), 0.0);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.25), 2.0);
        assert_eq!(quantile_sorted(&s, 0.95), 4.8);
    }

    #[test]
    fn histogram_counts_sum() {
        let v: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 100.0).collect();
        let h = histogram(&v);
        assert_eq!(h.counts.iter().sum::<u64>(), 1000);
        assert_eq!(h.edges.len(), h.counts.len() + 1);
        let h = histogram(&[2.0; 5]);
        assert_eq!(h.counts, vec![5]);
    }

    #[test]
    fn stats_are_repeatable() {
        let r: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let e: Vec<f64> = r.iter().enumerate().map(|(i, x)| x + 1e-3 * (i as f64).cos()).collect();
        assert_eq!(ScatterStats::from_pairs(&r, &e), ScatterStats::from_pairs(&r, &e));
        assert!(ScatterStats::from_pairs(&[], &[]).is_none());
    }
}
