use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of POI categories in the category table.
pub const POI_CATEGORY_COUNT: usize = 20;

/// Category names indexed by code.
pub const POI_CATEGORIES: [&str; POI_CATEGORY_COUNT] = [
    "road",
    "car service",
    "car repair",
    "motorbike service",
    "food service",
    "shopping",
    "daily life service",
    "recreation service",
    "medical service",
    "lodging",
    "tourist attraction",
    "real estate",
    "government place",
    "education",
    "transportation",
    "finance",
    "company",
    "road furniture",
    "specific address",
    "public service",
];

pub type Timestamp = NaiveDateTime;

pub(crate) const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    let s = s.trim();
    let s = s.strip_suffix('Z').unwrap_or(s);
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.format(TIME_FORMAT).to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::Domain(format!("invalid coordinate ({lat}, {lon})")))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoiRecord {
    pub location: GeoPoint,
    pub category: u8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripRecord {
    pub pickup: GeoPoint,
    pub pickup_time: Timestamp,
    pub dropoff: GeoPoint,
    pub dropoff_time: Timestamp,
    pub distance_m: f64,
    pub duration_s: f64,
    pub avg_kmh: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FareRecord {
    pub boarding: GeoPoint,
    pub boarding_time: Timestamp,
    pub alighting: GeoPoint,
    pub alighting_time: Timestamp,
    pub balance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckInRecord {
    pub location: GeoPoint,
    pub time: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriceObservation {
    pub community_id: u64,
    pub month: usize,
    pub price: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunitySite {
    pub id: u64,
    pub center: GeoPoint,
}
