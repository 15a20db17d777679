//! CSV ingestion and export for the six record kinds.
//!
//! All files are UTF-8, comma separated, with a mandatory header row:
//!
//! | file            | columns |
//! |-----------------|---------|
//! | pois.csv        | lat,lon,category |
//! | trips.csv       | plat,plon,ptime,dlat,dlon,dtime,distance_m,duration_s,avg_kmh |
//! | fares.csv       | blat,blon,btime,alat,alon,atime,balance |
//! | checkins.csv    | lat,lon,time |
//! | prices.csv      | community_id,month,price |
//! | communities.csv | id,lat,lon |
//!
//! Timestamps are ISO-8601 (`YYYY-MM-DDTHH:MM:SS`). Rows that fail to parse
//! or violate a record invariant are skipped and counted.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::types::*;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Pois,
    Trips,
    Fares,
    CheckIns,
    Prices,
    Communities,
}

impl RecordKind {
    pub const ALL: [RecordKind; 6] = [
        RecordKind::Pois,
        RecordKind::Trips,
        RecordKind::Fares,
        RecordKind::CheckIns,
        RecordKind::Prices,
        RecordKind::Communities,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            RecordKind::Pois => "pois.csv",
            RecordKind::Trips => "trips.csv",
            RecordKind::Fares => "fares.csv",
            RecordKind::CheckIns => "checkins.csv",
            RecordKind::Prices => "prices.csv",
            RecordKind::Communities => "communities.csv",
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            RecordKind::Pois => PoiRecord::HEADER,
            RecordKind::Trips => TripRecord::HEADER,
            RecordKind::Fares => FareRecord::HEADER,
            RecordKind::CheckIns => CheckInRecord::HEADER,
            RecordKind::Prices => PriceObservation::HEADER,
            RecordKind::Communities => CommunitySite::HEADER,
        }
    }
}

pub trait CsvRecord: Sized {
    const KIND: RecordKind;
    const HEADER: &'static [&'static str];

    fn parse(fields: &csv::StringRecord) -> Result<Self, String>;
    fn to_fields(&self) -> Vec<String>;
}

#[derive(Clone, Debug)]
pub struct Ingested<R> {
    pub records: Vec<R>,
    pub rejected: usize,
    /// Up to the first ten rejections as `(line, reason)`.
    pub reasons: Vec<(u64, String)>,
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).ok_or_else(|| format!("missing column {name}"))?;
    raw.trim()
        .parse()
        .map_err(|e| format!("column {name}: {raw:?}: {e}"))
}

fn point(
    rec: &csv::StringRecord,
    lat: usize,
    lon: usize,
    names: (&str, &str),
) -> Result<GeoPoint, String> {
    let p = GeoPoint {
        lat: field(rec, lat, names.0)?,
        lon: field(rec, lon, names.1)?,
    };
    if p.is_valid() {
        Ok(p)
    } else {
        Err(format!("coordinate out of range ({}, {})", p.lat, p.lon))
    }
}

fn time(rec: &csv::StringRecord, i: usize, name: &str) -> Result<Timestamp, String> {
    parse_timestamp(rec.get(i).ok_or_else(|| format!("missing column {name}"))?)
        .map_err(|e| format!("column {name}: {e}"))
}

fn fmt_point(p: &GeoPoint) -> [String; 2] {
    [p.lat.to_string(), p.lon.to_string()]
}

impl CsvRecord for PoiRecord {
    const KIND: RecordKind = RecordKind::Pois;
    const HEADER: &'static [&'static str] = &["lat", "lon", "category"];

    fn parse(r: &csv::StringRecord) -> Result<Self, String> {
        let location = point(r, 0, 1, ("lat", "lon"))?;
        let category: u8 = field(r, 2, "category")?;
        if category as usize >= POI_CATEGORY_COUNT {
            return Err(format!(
                "category {category} outside 0..{POI_CATEGORY_COUNT}"
            ));
        }
        Ok(PoiRecord { location, category })
    }

    fn to_fields(&self) -> Vec<String> {
        let [a, b] = fmt_point(&self.location);
        vec![a, b, self.category.to_string()]
    }
}

impl CsvRecord for TripRecord {
    const KIND: RecordKind = RecordKind::Trips;
    const HEADER: &'static [&'static str] = &[
        "plat",
        "plon",
        "ptime",
        "dlat",
        "dlon",
        "dtime",
        "distance_m",
        "duration_s",
        "avg_kmh",
    ];

    fn parse(r: &csv::StringRecord) -> Result<Self, String> {
        let t = TripRecord {
            pickup: point(r, 0, 1, ("plat", "plon"))?,
            pickup_time: time(r, 2, "ptime")?,
            dropoff: point(r, 3, 4, ("dlat", "dlon"))?,
            dropoff_time: time(r, 5, "dtime")?,
            distance_m: field(r, 6, "distance_m")?,
            duration_s: field(r, 7, "duration_s")?,
            avg_kmh: field(r, 8, "avg_kmh")?,
        };
        if !(t.distance_m >= 0.0 && t.distance_m.is_finite()) {
            return Err(format!("negative distance {}", t.distance_m));
        }
        if !(t.duration_s > 0.0 && t.duration_s.is_finite()) {
            return Err(format!("non-positive duration {}", t.duration_s));
        }
        if !(t.avg_kmh >= 0.0 && t.avg_kmh.is_finite()) {
            return Err(format!("invalid speed {}", t.avg_kmh));
        }
        if t.dropoff_time < t.pickup_time {
            return Err("dropoff precedes pickup".into());
        }
        Ok(t)
    }

    fn to_fields(&self) -> Vec<String> {
        let [a, b] = fmt_point(&self.pickup);
        let [c, d] = fmt_point(&self.dropoff);
        vec![
            a,
            b,
            format_timestamp(&self.pickup_time),
            c,
            d,
            format_timestamp(&self.dropoff_time),
            self.distance_m.to_string(),
            self.duration_s.to_string(),
            self.avg_kmh.to_string(),
        ]
    }
}

impl CsvRecord for FareRecord {
    const KIND: RecordKind = RecordKind::Fares;
    const HEADER: &'static [&'static str] =
        &["blat", "blon", "btime", "alat", "alon", "atime", "balance"];

    fn parse(r: &csv::StringRecord) -> Result<Self, String> {
        let f = FareRecord {
            boarding: point(r, 0, 1, ("blat", "blon"))?,
            boarding_time: time(r, 2, "btime")?,
            alighting: point(r, 3, 4, ("alat", "alon"))?,
            alighting_time: time(r, 5, "atime")?,
            balance: field(r, 6, "balance")?,
        };
        if !(f.balance >= 0.0 && f.balance.is_finite()) {
            return Err(format!("negative balance {}", f.balance));
        }
        Ok(f)
    }

    fn to_fields(&self) -> Vec<String> {
        let [a, b] = fmt_point(&self.boarding);
        let [c, d] = fmt_point(&self.alighting);
        vec![
            a,
            b,
            format_timestamp(&self.boarding_time),
            c,
            d,
            format_timestamp(&self.alighting_time),
            self.balance.to_string(),
        ]
    }
}

impl CsvRecord for CheckInRecord {
    const KIND: RecordKind = RecordKind::CheckIns;
    const HEADER: &'static [&'static str] = &["lat", "lon", "time"];

    fn parse(r: &csv::StringRecord) -> Result<Self, String> {
        Ok(CheckInRecord {
            location: point(r, 0, 1, ("lat", "lon"))?,
            time: time(r, 2, "time")?,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        let [a, b] = fmt_point(&self.location);
        vec![a, b, format_timestamp(&self.time)]
    }
}

impl CsvRecord for PriceObservation {
    const KIND: RecordKind = RecordKind::Prices;
    const HEADER: &'static [&'static str] = &["community_id", "month", "price"];

    fn parse(r: &csv::StringRecord) -> Result<Self, String> {
        let p = PriceObservation {
            community_id: field(r, 0, "community_id")?,
            month: field(r, 1, "month")?,
            price: field(r, 2, "price")?,
        };
        if !(p.price > 0.0 && p.price.is_finite()) {
            return Err(format!("non-positive price {}", p.price));
        }
        Ok(p)
    }

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.community_id.to_string(),
            self.month.to_string(),
            self.price.to_string(),
        ]
    }
}

impl CsvRecord for CommunitySite {
    const KIND: RecordKind = RecordKind::Communities;
    const HEADER: &'static [&'static str] = &["id", "lat", "lon"];

    fn parse(r: &csv::StringRecord) -> Result<Self, String> {
        Ok(CommunitySite {
            id: field(r, 0, "id")?,
            center: point(r, 1, 2, ("lat", "lon"))?,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        let [a, b] = fmt_point(&self.center);
        vec![self.id.to_string(), a, b]
    }
}

/// Reads one record file. Wrong headers and unreadable files are errors;
/// malformed rows are skipped and counted.
pub fn ingest<R: CsvRecord>(path: &Path) -> Result<Ingested<R>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        line: Some(1),
        detail: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != R::HEADER {
        let column = got
            .iter()
            .zip(R::HEADER)
            .position(|(a, b)| a != b)
            .unwrap_or(got.len().min(R::HEADER.len()));
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: Some(1),
            detail: format!(
                "header mismatch at column {}: expected {:?}, found {:?}",
                column + 1,
                R::HEADER.join(","),
                got.join(",")
            ),
        });
    }

    let mut out = Ingested {
        records: Vec::new(),
        rejected: 0,
        reasons: Vec::new(),
    };
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let parsed = row.map_err(|e| e.to_string()).and_then(|r| {
            if r.len() != R::HEADER.len() {
                Err(format!(
                    "expected {} fields, found {}",
                    R::HEADER.len(),
                    r.len()
                ))
            } else {
                R::parse(&r)
            }
        });
        match parsed {
            Ok(rec) => out.records.push(rec),
            Err(reason) => {
                out.rejected += 1;
                if out.reasons.len() < 10 {
                    out.reasons.push((line, reason));
                }
            }
        }
    }
    Ok(out)
}

/// Reads `communities.csv`, rejecting rows whose id repeats an earlier row.
pub fn ingest_communities(path: &Path) -> Result<Ingested<CommunitySite>> {
    let mut raw = ingest::<CommunitySite>(path)?;
    let mut seen = HashSet::new();
    let before = raw.records.len();
    raw.records.retain(|c| seen.insert(c.id));
    raw.rejected += before - raw.records.len();
    Ok(raw)
}

pub fn write_records<R: CsvRecord>(path: &Path, records: &[R]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(R::HEADER)?;
    for r in records {
        w.write_record(r.to_fields())?;
    }
    let mut inner = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
