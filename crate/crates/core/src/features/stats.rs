//! Missing-tolerant window statistics and lag-0 correlation.

/// Descriptor names in output order.
pub const STAT_NAMES: [&str; 10] =
    ["mean", "sd", "variance", "median", "min", "max", "iqr", "skewness", "kurtosis", "slope"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub variance: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub iqr: f64,
    /// Adjusted Fisher-Pearson skewness.
    pub skewness: f64,
    /// Bias-adjusted excess kurtosis.
    pub kurtosis: f64,
    /// OLS slope of value on minute index.
    pub slope: f64,
}

impl WindowStats {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.mean,
            self.sd,
            self.variance,
            self.median,
            self.min,
            self.max,
            self.iqr,
            self.skewness,
            self.kurtosis,
            self.slope,
        ]
    }
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Statistics over the present values of `values`. Returns `None` with fewer
/// than two present values. Moments of a zero-variance window are 0.
pub fn window_stats(values: &[Option<f64>]) -> Option<WindowStats> {
    let pts: Vec<(f64, f64)> =
        values.iter().enumerate().filter_map(|(i, v)| v.map(|x| (i as f64, x))).collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / nf;

    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &(_, x) in &pts {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (nf - 1.0);
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);

    let zero_var = m2 <= f64::EPSILON * mean.abs().max(1.0).powi(2) * 1e-3;
    let skewness = if zero_var || n < 3 {
        0.0
    } else {
        let g1 = m3 / m2.powf(1.5);
        g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
    };
    let kurtosis = if zero_var || n < 4 {
        0.0
    } else {
        let g2 = m4 / (m2 * m2) - 3.0;
        ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0))
    };

    let tmean = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, x) in &pts {
        sxy += (t - tmean) * (x - mean);
        sxx += (t - tmean) * (t - tmean);
    }
    let slope = if zero_var { 0.0 } else { sxy / sxx };

    let mut sorted: Vec<f64> = pts.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);

    Some(WindowStats {
        mean,
        sd: if zero_var { 0.0 } else { variance.sqrt() },
        variance: if zero_var { 0.0 } else { variance },
        median: quantile_sorted(&sorted, 0.5),
        min: sorted[0],
        max: sorted[n - 1],
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
        skewness,
        kurtosis,
        slope,
    })
}

/// Pearson correlation at lag 0 over minutes where both values are present.
/// Zero variance in either operand (or fewer than two pairs) gives 0.
pub fn pearson(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let pairs: Vec<(f64, f64)> = a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let tiny = |s: f64, m: f64| s <= f64::EPSILON * m.abs().max(1.0).powi(2) * 1e-3 * n;
    if tiny(saa, ma) || tiny(sbb, mb) {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}
