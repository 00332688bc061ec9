//! Fixed-length feature vectors from observation windows.
//!
//! Layout (default six signals): ten statistics per signal, then six wavelet
//! band energies per signal, then fifteen pairwise lag-0 correlations, for
//! 6 x 10 + 6 x 6 + 15 = 111 values. Descriptors that cannot be computed
//! (fewer than two present readings) are `NaN` in raw vectors and replaced
//! by an [`Imputer`] fitted on training rows.

pub mod stats;
pub mod wavelet;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::series::{EntitySeries, SignalKind, SubSequence};

pub use stats::{pearson, window_stats, WindowStats, STAT_NAMES};
pub use wavelet::{wavelet_energies, BAND_NAMES};

pub const N_FEATURES: usize = 6 * STAT_NAMES.len() + 6 * BAND_NAMES.len() + 15;

/// Ordered feature names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        let sig = SignalKind::ALL;
        let mut names = Vec::with_capacity(N_FEATURES);
        for s in sig {
            names.extend(STAT_NAMES.iter().map(|d| format!("{s}.{d}")));
        }
        for s in sig {
            names.extend(BAND_NAMES.iter().map(|d| format!("{s}.{d}")));
        }
        for (i, a) in sig.iter().enumerate() {
            for b in &sig[i + 1..] {
                names.push(format!("corr.{a}.{b}"));
            }
        }
        Self { names }
    }
}

impl FeatureSchema {
    pub fn from_names(names: Vec<String>) -> Self {
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn check(&self, width: usize) -> Result<()> {
        if width != self.len() {
            return Err(Error::SchemaMismatch { expected: self.len(), actual: width });
        }
        Ok(())
    }
}

/// Raw (possibly `NaN`) feature vector for the observation window of `ss`.
pub fn featurize(series: &EntitySeries, ss: &SubSequence) -> Result<Vec<f64>> {
    if ss.ow.len() < wavelet::MIN_LEN {
        return Err(Error::Config(format!(
            "observation window of {} minutes is too short for a {}-level wavelet decomposition",
            ss.ow.len(),
            wavelet::LEVELS
        )));
    }
    let windows: Vec<&[Option<f64>]> = SignalKind::ALL
        .iter()
        .map(|&k| {
            series
                .signal(k)
                .map(|v| &v[ss.ow.clone()])
                .ok_or_else(|| Error::Config(format!("entity {}: signal {k} missing; derive CO/PP first", series.entity_id())))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(N_FEATURES);
    for w in &windows {
        match window_stats(w) {
            Some(s) => out.extend(s.to_array()),
            None => out.extend([f64::NAN; STAT_NAMES.len()]),
        }
    }
    for w in &windows {
        let present = w.iter().flatten().count();
        match wavelet::interpolate_missing(w).filter(|_| present >= 2) {
            Some(filled) => out.extend(wavelet_energies(&filled)?),
            None => out.extend([f64::NAN; BAND_NAMES.len()]),
        }
    }
    for (i, a) in windows.iter().enumerate() {
        for b in &windows[i + 1..] {
            out.push(pearson(a, b));
        }
    }
    debug_assert_eq!(out.len(), N_FEATURES);
    Ok(out)
}

/// Per-column median imputation. Columns with no observed value impute 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    medians: Vec<f64>,
}

impl Imputer {
    pub fn fit(x: &Matrix) -> Self {
        let medians = (0..x.cols())
            .map(|j| {
                let mut col: Vec<f64> = x.column(j).filter(|v| !v.is_nan()).collect();
                if col.is_empty() {
                    return 0.0;
                }
                col.sort_by(f64::total_cmp);
                stats::quantile_sorted(&col, 0.5)
            })
            .collect();
        Self { medians }
    }

    pub fn width(&self) -> usize {
        self.medians.len()
    }

    pub fn transform_row(&self, row: &mut [f64]) -> Result<()> {
        if row.len() != self.medians.len() {
            return Err(Error::SchemaMismatch { expected: self.medians.len(), actual: row.len() });
        }
        for (v, m) in row.iter_mut().zip(&self.medians) {
            if v.is_nan() {
                *v = *m;
            }
        }
        Ok(())
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.transform_row(out.row_mut(i))?;
        }
        Ok(out)
    }
}

/// Feature rows with their provenance, as cached between pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema: FeatureSchema,
    pub entity_ids: Vec<String>,
    pub t_starts: Vec<i64>,
    pub x: Matrix,
    /// SHA-256 of the upstream input this table was computed from.
    pub input_digest: [u8; 32],
}

const MAGIC: &[u8; 8] = b"PRCFEAT\0";
const VERSION: u32 = 1;

impl FeatureTable {
    /// CSV with header `entity_id,t_start,<schema...>`; `NaN` becomes an empty field.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["entity_id".to_string(), "t_start".to_string()];
        header.extend(self.schema.names().iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (i, row) in self.x.iter_rows().enumerate() {
            let mut rec = vec![self.entity_ids[i].clone(), self.t_starts[i].to_string()];
            rec.extend(row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Versioned binary cache: magic, version, shape, digest, names,
    /// provenance, then row-major little-endian `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.x.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.x.cols() as u64).to_le_bytes())?;
        w.write_all(&self.input_digest)?;
        let put_str = |w: &mut W, s: &str| -> std::io::Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())
        };
        for n in self.schema.names() {
            put_str(&mut w, n)?;
        }
        for (id, t) in self.entity_ids.iter().zip(&self.t_starts) {
            put_str(&mut w, id)?;
            w.write_all(&t.to_le_bytes())?;
        }
        for v in self.x.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a feature cache (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Format(format!("feature cache version {version}, expected {VERSION}")));
        }
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let mut input_digest = [0u8; 32];
        r.read_exact(&mut input_digest)?;
        let mut get_str = |r: &mut R| -> Result<String> {
            r.read_exact(&mut b4)?;
            let mut buf = vec![0u8; u32::from_le_bytes(b4) as usize];
            r.read_exact(&mut buf)?;
            String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
        };
        let names = (0..cols).map(|_| get_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut entity_ids = Vec::with_capacity(rows);
        let mut t_starts = Vec::with_capacity(rows);
        for _ in 0..rows {
            entity_ids.push(get_str(&mut r)?);
            r.read_exact(&mut b8)?;
            t_starts.push(i64::from_le_bytes(b8));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        Ok(Self { schema: FeatureSchema::from_names(names), entity_ids, t_starts, x: Matrix::from_vec(rows, cols, data), input_digest })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{derive_signals, make_subsequences, WindowConfig};

    fn series(f: impl Fn(usize, SignalKind) -> Option<f64>) -> EntitySeries {
        let raw = SignalKind::RAW.map(|k| (k, (0..150).map(|i| f(i, k)).collect::<Vec<_>>()));
        derive_signals(&EntitySeries::new("e", 0, raw).unwrap()).unwrap()
    }

    fn first_ss(s: &EntitySeries) -> SubSequence {
        make_subsequences(s, &WindowConfig::default(), 30).unwrap().remove(0)
    }

    #[test]
    fn schema_width() {
        let schema = FeatureSchema::default();
        assert_eq!(schema.len(), 111);
        assert_eq!(schema.names()[0], "HR.mean");
        assert_eq!(schema.names()[60], "HR.wav_d1");
        assert_eq!(schema.names()[96], "corr.HR.SBP");
        assert_eq!(schema.names()[110], "corr.CO.PP");
    }

    #[test]
    fn vector_length_and_consistency() {
        let s = series(|i, k| Some(80.0 + (i as f64 * 0.3 + k as usize as f64).sin() * 5.0 + k as usize as f64 * 10.0));
        let ss = first_ss(&s);
        let v = featurize(&s, &ss).unwrap();
        assert_eq!(v.len(), 111);
        assert!(v.iter().all(|x| x.is_finite()));
        let schema = FeatureSchema::default();
        let map = window_stats(&s.signal(SignalKind::Map).unwrap()[ss.ow.clone()]).unwrap();
        assert_eq!(v[schema.index_of("MAP.mean").unwrap()], map.mean);
        assert_eq!(v[schema.index_of("MAP.slope").unwrap()], map.slope);
    }

    #[test]
    fn flat_windows_have_zero_correlation() {
        let s = series(|_, _| Some(70.0));
        let v = featurize(&s, &first_ss(&s)).unwrap();
        assert!(v[96..].iter().all(|&c| c == 0.0));
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn deterministic() {
        let s = series(|i, _| Some(60.0 + (i % 7) as f64));
        let ss = first_ss(&s);
        let a = featurize(&s, &ss).unwrap();
        let b = featurize(&s, &ss).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_window_is_nan_then_imputed() {
        let s = series(|i, k| if k == SignalKind::Hr && i < 100 { None } else { Some(80.0 + (i % 5) as f64) });
        let v = featurize(&s, &first_ss(&s)).unwrap();
        assert!(v[..10].iter().all(|x| x.is_nan()));
        assert!(v[60..66].iter().all(|x| x.is_nan()));

        let train = Matrix::from_rows(3, [[1.0, f64::NAN, 5.0], [3.0, 2.0, f64::NAN], [2.0, 4.0, f64::NAN]]);
        let imp = Imputer::fit(&train);
        let mut row = [f64::NAN, f64::NAN, f64::NAN];
        imp.transform_row(&mut row).unwrap();
        assert_eq!(row, [2.0, 3.0, 5.0]);
        assert!(imp.transform_row(&mut [0.0; 2]).is_err());
    }

    #[test]
    fn binary_cache_roundtrip() {
        let x = Matrix::from_rows(2, [[1.5, f64::NAN], [-0.0, 1e300]]);
        let t = FeatureTable {
            schema: FeatureSchema::from_names(vec!["a".into(), "b".into()]),
            entity_ids: vec!["p1".into(), "p2".into()],
            t_starts: vec![0, -5],
            x,
            input_digest: [7; 32],
        };
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"PRCFEAT\0");
        let back = FeatureTable::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.entity_ids, t.entity_ids);
        assert_eq!(back.t_starts, t.t_starts);
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.x), bits(&t.x));

        buf[0] = b'X';
        assert!(FeatureTable::read_binary(buf.as_slice()).is_err());

        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("entity_id,t_start,a,b\np1,0,1.5,\n"));
    }
}
