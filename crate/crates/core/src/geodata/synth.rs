//! Synthetic city with planted ground truth.
//!
//! The city is a `G × G` lattice of `L`-sided blocks. Residential
//! communities sit at the centers of interior blocks (so every community has
//! eight populated context blocks). Each block is planted as excellent or
//! terrible from a smooth spatial quality field: the top
//! `excellent_fraction` of blocks by field value are excellent, which makes
//! neighbouring blocks, and therefore the contexts of a community, correlate
//! with its own label.
//!
//! Block archetypes:
//! - excellent: many POIs over all categories, laid out around city-wide
//!   per-category anchor locations, heavy check-in traffic, dense transit;
//! - terrible/monoculture: a few dominant categories scattered uniformly;
//! - terrible/sparse: few POIs, little activity.
//!
//! Everything is a pure function of the config (including its seed).

use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::frame::{AreaFrame, LocalPoint};
use super::ingest::write_records;
use super::types::*;
use crate::error::{Error, Result};
use crate::landuse::QualityLabel;
use crate::numerics::SeededRng;

/// Distance kept between generated points and block edges, in metres.
const EDGE_MARGIN_M: f64 = 25.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub communities: usize,
    pub seed: u64,
    pub excellent_fraction: f64,
    pub side_m: f64,
    pub origin: GeoPoint,
    /// Months of house-price history per community.
    pub months: usize,
    /// Days spanned by the mobility records.
    pub days: u32,
    /// Relative category intensities for excellent blocks (length 20).
    pub category_weights: Vec<f64>,
    /// Inclusive POI-count ranges per archetype.
    pub poi_excellent: (u32, u32),
    pub poi_monoculture: (u32, u32),
    pub poi_sparse: (u32, u32),
    /// Share of excellent-block POIs placed around the category anchors.
    pub layout_share: f64,
    pub checkins_excellent: (u32, u32),
    pub checkins_terrible: (u32, u32),
    pub trips_excellent: (u32, u32),
    pub trips_terrible: (u32, u32),
    pub fares_excellent: (u32, u32),
    pub fares_terrible: (u32, u32),
    pub price_base_excellent: (f64, f64),
    pub price_base_terrible: (f64, f64),
    /// Monthly growth-rate ranges.
    pub price_growth_excellent: (f64, f64),
    pub price_growth_terrible: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            communities: 600,
            seed: 42,
            excellent_fraction: 0.3,
            side_m: 1000.0,
            origin: GeoPoint {
                lat: 39.9042,
                lon: 116.4074,
            },
            months: 6,
            days: 14,
            category_weights: vec![1.0; POI_CATEGORY_COUNT],
            poi_excellent: (80, 150),
            poi_monoculture: (30, 80),
            poi_sparse: (5, 20),
            layout_share: 0.85,
            checkins_excellent: (120, 240),
            checkins_terrible: (0, 50),
            trips_excellent: (15, 30),
            trips_terrible: (3, 10),
            fares_excellent: (20, 40),
            fares_terrible: (4, 12),
            price_base_excellent: (50_000.0, 80_000.0),
            price_base_terrible: (25_000.0, 45_000.0),
            price_growth_excellent: (0.01, 0.03),
            price_growth_terrible: (-0.01, 0.01),
        }
    }
}

impl SynthConfig {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synth: {m}")));
        if !(0.0..=1.0).contains(&self.excellent_fraction) {
            return fail(format!(
                "excellent_fraction {} outside [0,1]",
                self.excellent_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.layout_share) {
            return fail(format!("layout_share {} outside [0,1]", self.layout_share));
        }
        if !(self.side_m > 0.0) {
            return fail("side_m must be positive".into());
        }
        if self.months < 2 {
            return fail("months must be at least 2".into());
        }
        if self.days == 0 {
            return fail("days must be positive".into());
        }
        if self.category_weights.len() != POI_CATEGORY_COUNT
            || self.category_weights.iter().any(|w| !(*w >= 0.0))
            || self.category_weights.iter().sum::<f64>() <= 0.0
        {
            return fail("category_weights must be 20 non-negative values, not all zero".into());
        }
        let ranges = [
            self.poi_excellent,
            self.poi_monoculture,
            self.poi_sparse,
            self.checkins_excellent,
            self.checkins_terrible,
            self.trips_excellent,
            self.trips_terrible,
            self.fares_excellent,
            self.fares_terrible,
        ];
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return fail("count ranges must satisfy lo ≤ hi".into());
        }
        let real = [
            self.price_base_excellent,
            self.price_base_terrible,
            self.price_growth_excellent,
            self.price_growth_terrible,
        ];
        if real.iter().any(|(lo, hi)| !(lo <= hi))
            || self.price_base_terrible.0 <= 0.0
            || self.price_base_excellent.0 <= 0.0
        {
            return fail("price ranges must be ordered and bases positive".into());
        }
        if self.price_growth_excellent.0 <= -1.0 || self.price_growth_terrible.0 <= -1.0 {
            return fail("growth rates must exceed -1".into());
        }
        AreaFrame::new(self.origin, self.side_m)?;
        Ok(())
    }

    /// Lattice side `G`: enough interior blocks for every community plus a
    /// one-block filler ring.
    pub fn lattice_side(&self) -> usize {
        let mut g = (self.communities as f64).sqrt().ceil() as usize;
        while g * g < self.communities {
            g += 1;
        }
        g.max(1) + 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Archetype {
    Excellent,
    Monoculture,
    Sparse,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SyntheticCity {
    pub communities: Vec<CommunitySite>,
    pub pois: Vec<PoiRecord>,
    pub trips: Vec<TripRecord>,
    pub fares: Vec<FareRecord>,
    pub checkins: Vec<CheckInRecord>,
    pub prices: Vec<PriceObservation>,
    /// Planted label of every community, in community order.
    pub planted: Vec<(u64, QualityLabel)>,
}

pub const PLANTED_LABELS_FILE: &str = "planted_labels.csv";

impl SyntheticCity {
    /// Writes the six record files plus `planted_labels.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_records(&dir.join("communities.csv"), &self.communities)?;
        write_records(&dir.join("pois.csv"), &self.pois)?;
        write_records(&dir.join("trips.csv"), &self.trips)?;
        write_records(&dir.join("fares.csv"), &self.fares)?;
        write_records(&dir.join("checkins.csv"), &self.checkins)?;
        write_records(&dir.join("prices.csv"), &self.prices)?;
        let path = dir.join(PLANTED_LABELS_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["community_id", "label"])?;
        for (id, label) in &self.planted {
            w.write_record([id.to_string(), label.as_str().to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

fn round_coord(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

fn round_cents(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn rounded(p: GeoPoint) -> GeoPoint {
    GeoPoint {
        lat: round_coord(p.lat),
        lon: round_coord(p.lon),
    }
}

struct Lattice {
    side: usize,
    frames: Vec<AreaFrame>,
    archetype: Vec<Archetype>,
}

impl Lattice {
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.side + c
    }
}

fn in_block(rng: &mut SeededRng, half: f64) -> LocalPoint {
    let lim = half - EDGE_MARGIN_M;
    LocalPoint {
        x: rng.uniform_range(-lim, lim),
        y: rng.uniform_range(-lim, lim),
    }
}

fn count_in(rng: &mut SeededRng, (lo, hi): (u32, u32)) -> usize {
    rng.int_range(lo as u64, hi as u64) as usize
}

/// Generates the full synthetic corpus.
pub fn synth_city(cfg: &SynthConfig) -> Result<SyntheticCity> {
    cfg.validate()?;
    let root = SeededRng::new(cfg.seed);
    let g = cfg.lattice_side();
    let l = cfg.side_m;
    let half = l / 2.0;
    let origin_frame = AreaFrame::new(cfg.origin, l)?;

    // Block centers on a global equirectangular lattice about the origin.
    let mut frames = Vec::with_capacity(g * g);
    let mid = (g as f64 - 1.0) / 2.0;
    for r in 0..g {
        for c in 0..g {
            let center = origin_frame.unproject(LocalPoint {
                x: (c as f64 - mid) * l,
                y: (mid - r as f64) * l,
            });
            frames.push(AreaFrame::new(rounded(center), l)?);
        }
    }

    // Smooth quality field: a sum of Gaussian bumps plus per-block noise.
    let mut field_rng = root.substream("synth/field");
    let bumps = ((g * g) / 30).max(4);
    let centers: Vec<(f64, f64, f64, f64)> = (0..bumps)
        .map(|_| {
            (
                field_rng.uniform_range(0.0, g as f64),
                field_rng.uniform_range(0.0, g as f64),
                field_rng.uniform_range(g as f64 / 10.0 + 1.0, g as f64 / 5.0 + 1.5),
                field_rng.uniform_range(0.5, 1.5),
            )
        })
        .collect();
    let mut score: Vec<(f64, usize)> = (0..g * g)
        .map(|i| {
            let (r, c) = ((i / g) as f64, (i % g) as f64);
            let f: f64 = centers
                .iter()
                .map(|&(br, bc, s, a)| {
                    a * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * s * s)).exp()
                })
                .sum();
            (f + 0.25 * field_rng.normal(), i)
        })
        .collect();
    score.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let n_excellent = (cfg.excellent_fraction * (g * g) as f64).round() as usize;
    let mut archetype = vec![Archetype::Sparse; g * g];
    let mut kind_rng = root.substream("synth/archetype");
    for (rank, &(_, i)) in score.iter().enumerate() {
        archetype[i] = if rank < n_excellent {
            Archetype::Excellent
        } else if kind_rng.bernoulli(0.5) {
            Archetype::Monoculture
        } else {
            Archetype::Sparse
        };
    }
    let lattice = Lattice {
        side: g,
        frames,
        archetype,
    };

    // City-wide layout: two anchor locations per category.
    let mut layout_rng = root.substream("synth/layout");
    let anchors: Vec<[LocalPoint; 2]> = (0..POI_CATEGORY_COUNT)
        .map(|_| {
            let mut a = || LocalPoint {
                x: layout_rng.uniform_range(-0.4 * l, 0.4 * l),
                y: layout_rng.uniform_range(-0.4 * l, 0.4 * l),
            };
            [a(), a()]
        })
        .collect();

    let start = NaiveDate::from_ymd_opt(2012, 3, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");
    let span_s = cfg.days as u64 * 86_400;
    let random_time =
        |rng: &mut SeededRng| start + Duration::seconds(rng.int_range(0, span_s - 1) as i64);

    let mut city = SyntheticCity::default();

    // Communities occupy interior blocks in row-major order.
    let mut community_blocks = Vec::with_capacity(cfg.communities);
    'outer: for r in 1..g - 1 {
        for c in 1..g - 1 {
            if community_blocks.len() == cfg.communities {
                break 'outer;
            }
            community_blocks.push((r, c));
        }
    }
    for (k, &(r, c)) in community_blocks.iter().enumerate() {
        let i = lattice.idx(r, c);
        let id = k as u64 + 1;
        city.communities.push(CommunitySite {
            id,
            center: lattice.frames[i].center,
        });
        let label = if lattice.archetype[i] == Archetype::Excellent {
            QualityLabel::Excellent
        } else {
            QualityLabel::Terrible
        };
        city.planted.push((id, label));

        let mut rng = root.substream(&format!("synth/price/{r}/{c}"));
        let (base, growth) = match lattice.archetype[i] {
            Archetype::Excellent => (cfg.price_base_excellent, cfg.price_growth_excellent),
            _ => (cfg.price_base_terrible, cfg.price_growth_terrible),
        };
        let base = rng.uniform_range(base.0, base.1);
        let rate = rng.uniform_range(growth.0, growth.1);
        for month in 0..cfg.months {
            let noise = 1.0 + 0.005 * rng.normal();
            let price = round_cents(base * (1.0 + rate).powi(month as i32) * noise).max(1.0);
            city.prices.push(PriceObservation {
                community_id: id,
                month,
                price,
            });
        }
    }

    // Bus stops per block, shared by all fare records.
    let stops: Vec<Vec<GeoPoint>> = (0..g * g)
        .map(|i| {
            let mut rng = root.substream(&format!("synth/stops/{i}"));
            let k = match lattice.archetype[i] {
                Archetype::Excellent => rng.int_range(4, 6),
                _ => rng.int_range(1, 3),
            };
            (0..k)
                .map(|_| rounded(lattice.frames[i].unproject(in_block(&mut rng, half))))
                .collect()
        })
        .collect();

    let neighbour = |rng: &mut SeededRng, r: usize, c: usize| -> (usize, usize, f64) {
        let dr = rng.int_range(0, 4) as i64 - 2;
        let dc = rng.int_range(0, 4) as i64 - 2;
        let nr = (r as i64 + dr).clamp(0, g as i64 - 1) as usize;
        let nc = (c as i64 + dc).clamp(0, g as i64 - 1) as usize;
        let blocks = ((nr as f64 - r as f64).powi(2) + (nc as f64 - c as f64).powi(2)).sqrt();
        (nr, nc, blocks * l)
    };

    for r in 0..g {
        for c in 0..g {
            let i = lattice.idx(r, c);
            let frame = &lattice.frames[i];
            let kind = lattice.archetype[i];

            // POIs
            let mut rng = root.substream(&format!("synth/poi/{r}/{c}"));
            match kind {
                Archetype::Excellent => {
                    let weights: Vec<f64> = cfg
                        .category_weights
                        .iter()
                        .map(|w| w * rng.uniform_range(0.5, 1.5))
                        .collect();
                    let count = count_in(&mut rng, cfg.poi_excellent);
                    for _ in 0..count {
                        let cat = rng.weighted(&weights);
                        let p = if rng.bernoulli(cfg.layout_share) {
                            let a = anchors[cat][rng.below(2)];
                            let lim = half - EDGE_MARGIN_M;
                            LocalPoint {
                                x: (a.x + 0.08 * l * rng.normal()).clamp(-lim, lim),
                                y: (a.y + 0.08 * l * rng.normal()).clamp(-lim, lim),
                            }
                        } else {
                            in_block(&mut rng, half)
                        };
                        city.pois.push(PoiRecord {
                            location: rounded(frame.unproject(p)),
                            category: cat as u8,
                        });
                    }
                }
                Archetype::Monoculture => {
                    let k = rng.int_range(2, 3) as usize;
                    let dominant = rng.sample_indices(POI_CATEGORY_COUNT, k);
                    let mut weights = vec![0.15; POI_CATEGORY_COUNT];
                    for d in dominant {
                        weights[d] = 12.0;
                    }
                    let count = count_in(&mut rng, cfg.poi_monoculture);
                    for _ in 0..count {
                        let cat = rng.weighted(&weights);
                        let p = in_block(&mut rng, half);
                        city.pois.push(PoiRecord {
                            location: rounded(frame.unproject(p)),
                            category: cat as u8,
                        });
                    }
                }
                Archetype::Sparse => {
                    let count = count_in(&mut rng, cfg.poi_sparse);
                    for _ in 0..count {
                        let cat = rng.below(POI_CATEGORY_COUNT);
                        let p = in_block(&mut rng, half);
                        city.pois.push(PoiRecord {
                            location: rounded(frame.unproject(p)),
                            category: cat as u8,
                        });
                    }
                }
            }

            // Check-ins
            let mut rng = root.substream(&format!("synth/checkin/{r}/{c}"));
            let span = if kind == Archetype::Excellent {
                cfg.checkins_excellent
            } else {
                cfg.checkins_terrible
            };
            for _ in 0..count_in(&mut rng, span) {
                let p = in_block(&mut rng, half);
                let time = random_time(&mut rng);
                city.checkins.push(CheckInRecord {
                    location: rounded(frame.unproject(p)),
                    time,
                });
            }

            // Taxi trips originating here
            let mut rng = root.substream(&format!("synth/trip/{r}/{c}"));
            let (span, speed) = if kind == Archetype::Excellent {
                (cfg.trips_excellent, (15.0, 30.0))
            } else {
                (cfg.trips_terrible, (25.0, 50.0))
            };
            for _ in 0..count_in(&mut rng, span) {
                let p = in_block(&mut rng, half);
                let (nr, nc, offset) = neighbour(&mut rng, r, c);
                let q = in_block(&mut rng, half);
                let kmh = round_cents(rng.uniform_range(speed.0, speed.1));
                let distance = (1.3 * offset + 200.0 + 0.5 * rng.uniform_range(0.0, l)).round();
                let duration = (distance / (kmh / 3.6)).round().max(1.0);
                let pickup_time = random_time(&mut rng);
                city.trips.push(TripRecord {
                    pickup: rounded(frame.unproject(p)),
                    pickup_time,
                    dropoff: rounded(lattice.frames[lattice.idx(nr, nc)].unproject(q)),
                    dropoff_time: pickup_time + Duration::seconds(duration as i64),
                    distance_m: distance,
                    duration_s: duration,
                    avg_kmh: kmh,
                });
            }

            // Bus fares boarding here
            let mut rng = root.substream(&format!("synth/fare/{r}/{c}"));
            let (span, balance) = if kind == Archetype::Excellent {
                (cfg.fares_excellent, (30.0, 120.0))
            } else {
                (cfg.fares_terrible, (5.0, 50.0))
            };
            for _ in 0..count_in(&mut rng, span) {
                let from = stops[i][rng.below(stops[i].len())];
                let (nr, nc, _) = neighbour(&mut rng, r, c);
                let dest = &stops[lattice.idx(nr, nc)];
                let to = dest[rng.below(dest.len())];
                let boarding_time = random_time(&mut rng);
                city.fares.push(FareRecord {
                    boarding: from,
                    boarding_time,
                    alighting: to,
                    alighting_time: boarding_time
                        + Duration::seconds(rng.int_range(300, 2400) as i64),
                    balance: round_cents(rng.uniform_range(balance.0, balance.1)),
                });
            }
        }
    }
    Ok(city)
}
