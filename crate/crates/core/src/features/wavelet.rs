//! Periodized Daubechies-4 discrete wavelet transform and relative band
//! energies.

use crate::error::{Error, Result};

/// Decomposition depth.
pub const LEVELS: usize = 5;
/// Minimum window length accepted by [`wavelet_energies`].
pub const MIN_LEN: usize = 1 << LEVELS;
pub const BAND_NAMES: [&str; LEVELS + 1] = ["wav_d1", "wav_d2", "wav_d3", "wav_d4", "wav_d5", "wav_a5"];

/// Four-tap Daubechies scaling filter (two vanishing moments).
pub fn d4_lowpass() -> [f64; 4] {
    let s3 = 3f64.sqrt();
    let norm = 4.0 * 2f64.sqrt();
    [(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm]
}

/// Quadrature mirror of the scaling filter.
pub fn d4_highpass() -> [f64; 4] {
    let h = d4_lowpass();
    [h[3], -h[2], h[1], -h[0]]
}

/// Output of a multi-level transform: `details[0]` is the finest band.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
}

impl Decomposition {
    /// Squared norms of `d1..dL` followed by the final approximation.
    pub fn band_energies(&self) -> Vec<f64> {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        self.details.iter().map(|d| sq(d)).chain(std::iter::once(sq(&self.approx))).collect()
    }
}

fn analysis_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (h, g) = (d4_lowpass(), d4_highpass());
    let n = x.len();
    let half = n / 2;
    let mut a = Vec::with_capacity(half);
    let mut d = Vec::with_capacity(half);
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for m in 0..4 {
            let v = x[(2 * k + m) % n];
            sa += h[m] * v;
            sd += g[m] * v;
        }
        a.push(sa);
        d.push(sd);
    }
    (a, d)
}

/// Periodized DWT. The input length must be a multiple of `2^levels`, which
/// keeps every level an orthogonal change of basis.
pub fn dwt(x: &[f64], levels: usize) -> Result<Decomposition> {
    let block = 1usize << levels;
    if x.is_empty() || !x.len().is_multiple_of(block) {
        return Err(Error::Config(format!("DWT input length {} is not a multiple of {block}", x.len())));
    }
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis_step(&approx);
        details.push(d);
        approx = a;
    }
    Ok(Decomposition { details, approx })
}

/// Extends `x` periodically (wrapping to its start) up to the next multiple
/// of [`MIN_LEN`]. A 60-minute window becomes 64 samples.
pub fn periodic_extend(x: &[f64]) -> Vec<f64> {
    let target = x.len().div_ceil(MIN_LEN) * MIN_LEN;
    x.iter().copied().cycle().take(target).collect()
}

/// Relative energies of `d1..d5` and `a5`. They sum to one unless the window
/// has no energy, in which case all six are zero.
pub fn wavelet_energies(values: &[f64]) -> Result<[f64; LEVELS + 1]> {
    if values.len() < MIN_LEN {
        return Err(Error::Config(format!("wavelet window needs at least {MIN_LEN} samples, got {}", values.len())));
    }
    let dec = dwt(&periodic_extend(values), LEVELS)?;
    let e = dec.band_energies();
    let total: f64 = e.iter().sum();
    let mut out = [0.0; LEVELS + 1];
    if total > 0.0 {
        for (o, b) in out.iter_mut().zip(&e) {
            *o = b / total;
        }
    }
    Ok(out)
}

/// Fills interior gaps by linear interpolation and edges by the nearest
/// present value. `None` when nothing is present.
pub fn interpolate_missing(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let present: Vec<(usize, f64)> = values.iter().enumerate().filter_map(|(i, v)| v.map(|x| (i, x))).collect();
    let (&(first_i, first_v), &(last_i, last_v)) = (present.first()?, present.last()?);
    let mut out = vec![0.0; values.len()];
    out[..=first_i].fill(first_v);
    out[last_i..].fill(last_v);
    for w in present.windows(2) {
        let ((i0, v0), (i1, v1)) = (w[0], w[1]);
        for (k, o) in out[i0..=i1].iter_mut().enumerate() {
            *o = v0 + (v1 - v0) * k as f64 / (i1 - i0) as f64;
        }
    }
    Some(out)
}
