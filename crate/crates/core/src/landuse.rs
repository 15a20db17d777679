//! Land-use configuration tensors and the quality measure.
//!
//! A configuration is an `m × n × n` tensor: channel `c`, row `r` (from
//! north), column `col` (from west) holds the number of category-`c` POIs in
//! that grid cell of the central square. Generated configurations hold
//! non-negative reals.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{AreaFrame, CheckInRecord, PoiRecord, Region};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandUseConfig {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl LandUseConfig {
    pub fn zeros(m: usize, n: usize) -> Self {
        assert!(m >= 1 && n >= 1, "configuration needs m, n ≥ 1");
        LandUseConfig {
            m,
            n,
            data: vec![0.0; m * n * n],
        }
    }

    /// Channel-major data (`c`, then row, then column).
    pub fn from_data(m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 || data.len() != m * n * n {
            return Err(Error::Dimension {
                op: "LandUseConfig",
                left: vec![m, n, n],
                right: vec![data.len()],
            });
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "configuration entries must be finite and non-negative, got {bad}"
            )));
        }
        Ok(LandUseConfig { m, n, data })
    }

    pub fn channels(&self) -> usize {
        self.m
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn offset(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.n + r) * self.n + col
    }

    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[self.offset(c, r, col)]
    }

    pub fn add(&mut self, c: usize, r: usize, col: usize, v: f64) {
        let o = self.offset(c, r, col);
        self.data[o] += v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let k = self.n * self.n;
        &self.data[c * k..(c + 1) * k]
    }

    /// Per-category totals.
    pub fn totals(&self) -> Vec<f64> {
        (0..self.m).map(|c| self.channel(c).iter().sum()).collect()
    }

    /// Per-cell totals over all channels, row-major.
    pub fn cell_totals(&self) -> Vec<f64> {
        let k = self.n * self.n;
        let mut out = vec![0.0; k];
        for c in 0..self.m {
            for (o, v) in out.iter_mut().zip(self.channel(c)) {
                *o += v;
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.totals().iter().sum()
    }

    pub fn scaled(&self, k: f64) -> LandUseConfig {
        LandUseConfig {
            m: self.m,
            n: self.n,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    pub fn rounded(&self) -> LandUseConfig {
        LandUseConfig {
            m: self.m,
            n: self.n,
            data: self.data.iter().map(|v| v.round()).collect(),
        }
    }
}

/// Counts POIs per category and grid cell of the central square. POIs
/// outside the square or with category `≥ m` are ignored.
pub fn build_config<'a>(
    pois: impl IntoIterator<Item = &'a PoiRecord>,
    frame: &AreaFrame,
    m: usize,
    n: usize,
) -> LandUseConfig {
    let mut cfg = LandUseConfig::zeros(m, n);
    for p in pois {
        if (p.category as usize) < m {
            if let Some((r, c)) = frame.grid_cell(p.location, n) {
                cfg.add(p.category as usize, r, c, 1.0);
            }
        }
    }
    cfg
}

/// Normalised Shannon entropy of the per-category totals, in `[0, 1]`.
pub fn diversity(cfg: &LandUseConfig) -> f64 {
    entropy_of(&cfg.totals())
}

pub(crate) fn entropy_of(totals: &[f64]) -> f64 {
    let m = totals.len();
    let sum: f64 = totals.iter().sum();
    if m < 2 || sum <= 0.0 {
        return 0.0;
    }
    let h: f64 = totals
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| {
            let p = t / sum;
            -p * p.ln()
        })
        .sum();
    (h / (m as f64).ln()).clamp(0.0, 1.0)
}

/// Number of check-ins inside the central square.
pub fn count_checkins<'a>(
    checkins: impl IntoIterator<Item = &'a CheckInRecord>,
    frame: &AreaFrame,
) -> usize {
    checkins
        .into_iter()
        .filter(|c| frame.locate(c.location) == Region::Center)
        .count()
}

/// Corpus extremes of central-square check-in counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckinStats {
    pub min: f64,
    pub max: f64,
}

impl CheckinStats {
    pub fn from_counts(counts: &[usize]) -> Option<Self> {
        let min = *counts.iter().min()? as f64;
        let max = *counts.iter().max()? as f64;
        Some(CheckinStats { min, max })
    }
}

/// Min–max normalised check-in frequency; a degenerate corpus maps to 0.5.
pub fn checkin_frequency(count: usize, stats: &CheckinStats) -> f64 {
    if stats.max <= stats.min {
        return 0.5;
    }
    ((count as f64 - stats.min) / (stats.max - stats.min)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub freq: f64,
    pub div: f64,
    pub q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityLabel {
    Excellent,
    Terrible,
}

impl QualityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityLabel::Excellent => "excellent",
            QualityLabel::Terrible => "terrible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "excellent" => Some(QualityLabel::Excellent),
            "terrible" => Some(QualityLabel::Terrible),
            _ => None,
        }
    }

    pub fn is_excellent(self) -> bool {
        self == QualityLabel::Excellent
    }
}

/// Harmonic combination `2·freq·div / (freq + div)`, 0 when both are 0.
pub fn quality(freq: f64, div: f64) -> QualityScore {
    let s = freq + div;
    let q = if s > 0.0 { 2.0 * freq * div / s } else { 0.0 };
    QualityScore { freq, div, q }
}

pub const EXCELLENT_THRESHOLD: f64 = 0.5;

pub fn label(q: f64) -> QualityLabel {
    if q > EXCELLENT_THRESHOLD {
        QualityLabel::Excellent
    } else {
        QualityLabel::Terrible
    }
}

/// Per-cell dominant category (`None` for empty cells), row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub n: usize,
    pub cells: Vec<Option<u8>>,
}

impl CategoryMap {
    pub fn get(&self, r: usize, c: usize) -> Option<u8> {
        self.cells[r * self.n + c]
    }
}

/// Argmax over channels per cell; ties go to the lowest category code.
pub fn merge_dominant(cfg: &LandUseConfig) -> CategoryMap {
    let n = cfg.resolution();
    let cells = (0..n * n)
        .map(|cell| {
            let mut best: Option<(usize, f64)> = None;
            for c in 0..cfg.channels() {
                let v = cfg.channel(c)[cell];
                if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
            best.map(|(c, _)| c as u8)
        })
        .collect();
    CategoryMap { n, cells }
}

/// Share of each category in the whole configuration.
pub fn poi_proportions(cfg: &LandUseConfig) -> Vec<f64> {
    let totals = cfg.totals();
    let sum: f64 = totals.iter().sum();
    if sum <= 0.0 {
        return vec![0.0; totals.len()];
    }
    totals.iter().map(|t| t / sum).collect()
}

/// Writes the sparse `channel,row,col,value` form (zeros omitted).
pub fn write_config_csv(path: &Path, cfg: &LandUseConfig) -> Result<()> {
    let mut out = String::from("channel,row,col,value\n");
    let n = cfg.resolution();
    for c in 0..cfg.channels() {
        for r in 0..n {
            for col in 0..n {
                let v = cfg.get(c, r, col);
                if v != 0.0 {
                    out.push_str(&format!("{c},{r},{col},{v}\n"));
                }
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_config_csv(path: &Path, m: usize, n: usize) -> Result<LandUseConfig> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["channel", "row", "col", "value"] {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: Some(1),
            detail: format!("expected channel,row,col,value, found {}", header.join(",")),
        });
    }
    let mut cfg = LandUseConfig::zeros(m, n);
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |detail: String| Error::Ingest {
            path: path.to_path_buf(),
            line: Some(i as u64 + 2),
            detail,
        };
        let parse_idx = |k: usize, lim: usize| -> Result<usize> {
            let v: usize = row
                .get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad(format!("bad index in column {}", k + 1)))?;
            if v < lim {
                Ok(v)
            } else {
                Err(bad(format!("index {v} out of range 0..{lim}")))
            }
        };
        let (c, r, col) = (parse_idx(0, m)?, parse_idx(1, n)?, parse_idx(2, n)?);
        let v: f64 = row
            .get(3)
            .and_then(|s| s.trim().parse().ok())
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| bad("value must be a finite non-negative number".into()))?;
        cfg.add(c, r, col, v);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{GeoPoint, LocalPoint};
    use crate::numerics::SeededRng;

    fn frame() -> AreaFrame {
        AreaFrame::new(
            GeoPoint {
                lat: 39.9,
                lon: 116.4,
            },
            1000.0,
        )
        .unwrap()
    }

    #[test]
    fn single_poi_config() {
        let f = frame();
        let p = PoiRecord {
            location: f.cell_center(0, 0, 10),
            category: 4,
        };
        let cfg = build_config([&p], &f, 20, 10);
        assert_eq!(cfg.get(4, 0, 0), 1.0);
        assert_eq!(cfg.total(), 1.0);
        assert_eq!(build_config([], &f, 20, 10).total(), 0.0);
    }

    #[test]
    fn build_config_matches_recount() {
        let f = frame();
        let mut rng = SeededRng::new(4);
        let pois: Vec<PoiRecord> = (0..500)
            .map(|_| PoiRecord {
                location: f.unproject(LocalPoint {
                    x: rng.uniform_range(-900.0, 900.0),
                    y: rng.uniform_range(-900.0, 900.0),
                }),
                category: rng.below(20) as u8,
            })
            .collect();
        let cfg = build_config(&pois, &f, 20, 10);
        let inside = pois
            .iter()
            .filter(|p| f.locate(p.location) == Region::Center)
            .count();
        assert_eq!(cfg.total(), inside as f64);
        for c in 0..20 {
            for r in 0..10 {
                for col in 0..10 {
                    let n = pois
                        .iter()
                        .filter(|p| {
                            p.category as usize == c
                                && f.grid_cell(p.location, 10) == Some((r, col))
                        })
                        .count();
                    assert_eq!(cfg.get(c, r, col), n as f64);
                }
            }
        }
    }

    #[test]
    fn diversity_examples() {
        let mut one = LandUseConfig::zeros(20, 2);
        one.add(3, 0, 0, 7.0);
        assert_eq!(diversity(&one), 0.0);
        let mut flat = LandUseConfig::zeros(20, 2);
        for c in 0..20 {
            flat.add(c, 1, 1, 2.0);
        }
        assert!((diversity(&flat) - 1.0).abs() < 1e-12);
        let mut two = LandUseConfig::zeros(2, 1);
        two.add(0, 0, 0, 3.0);
        two.add(1, 0, 0, 1.0);
        let expected = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln()) / 2f64.ln();
        assert!((diversity(&two) - expected).abs() < 1e-12);
        assert!((diversity(&two) - 0.8113).abs() < 1e-4);
        assert_eq!(diversity(&LandUseConfig::zeros(20, 3)), 0.0);
    }

    #[test]
    fn frequency_examples() {
        let s = CheckinStats {
            min: 0.0,
            max: 200.0,
        };
        assert_eq!(checkin_frequency(0, &s), 0.0);
        assert_eq!(checkin_frequency(200, &s), 1.0);
        assert_eq!(checkin_frequency(100, &s), 0.5);
        let flat = CheckinStats { min: 5.0, max: 5.0 };
        assert_eq!(checkin_frequency(5, &flat), 0.5);
    }

    #[test]
    fn quality_examples() {
        let q = quality(1.0, 1.0);
        assert_eq!(q.q, 1.0);
        assert_eq!(label(q.q), QualityLabel::Excellent);
        for div in [0.0, 0.3, 1.0] {
            let q = quality(0.0, div);
            assert_eq!(q.q, 0.0);
            assert_eq!(label(q.q), QualityLabel::Terrible);
        }
        let q = quality(0.6, 0.3);
        assert!((q.q - 0.4).abs() < 1e-12);
        assert_eq!(label(q.q), QualityLabel::Terrible);
        assert_eq!(label(0.5), QualityLabel::Terrible);
    }

    #[test]
    fn dominant_examples() {
        let mut cfg = LandUseConfig::zeros(20, 2);
        cfg.add(0, 0, 0, 3.0);
        cfg.add(1, 0, 0, 1.0);
        cfg.add(0, 0, 1, 2.0);
        cfg.add(1, 0, 1, 2.0);
        let map = merge_dominant(&cfg);
        assert_eq!(map.get(0, 0), Some(0));
        assert_eq!(map.get(0, 1), Some(0));
        assert_eq!(map.get(1, 0), None);
    }

    #[test]
    fn proportion_examples() {
        let mut one = LandUseConfig::zeros(20, 2);
        one.add(7, 1, 0, 4.0);
        let p = poi_proportions(&one);
        assert_eq!(p[7], 1.0);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
        let mut flat = LandUseConfig::zeros(20, 1);
        for c in 0..20 {
            flat.add(c, 0, 0, 3.0);
        }
        assert!(poi_proportions(&flat)
            .iter()
            .all(|v| (v - 0.05).abs() < 1e-15));
        assert!(poi_proportions(&LandUseConfig::zeros(20, 2))
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn config_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut cfg = LandUseConfig::zeros(3, 4);
        cfg.add(2, 3, 1, 5.0);
        cfg.add(0, 0, 0, 0.125);
        write_config_csv(&path, &cfg).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "channel,row,col,value\n0,0,0,0.125\n2,3,1,5\n");
        assert_eq!(read_config_csv(&path, 3, 4).unwrap(), cfg);
        assert!(read_config_csv(&path, 2, 4).is_err());
    }

    #[test]
    fn from_data_rejects_negative() {
        assert!(LandUseConfig::from_data(1, 1, vec![-1.0]).is_err());
        assert!(LandUseConfig::from_data(1, 2, vec![1.0]).is_err());
    }
}
