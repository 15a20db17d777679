//! Spatial framing of a community: a central `L × L` square wrapped by the
//! eight equal squares of its 3×3 neighbourhood.
//!
//! Positions are handled in a local equirectangular projection about the
//! frame center: `x` metres east and `y` metres north. Cell membership uses
//! raster axes (columns run east, rows run south) with half-open intervals
//! `[a, b)` on both, so every point lands in exactly one cell.

use serde::{Deserialize, Serialize};

use super::types::{CommunitySite, GeoPoint};
use crate::error::{Error, Result};

/// Metres per degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Frames are refused beyond this absolute latitude.
pub const MAX_ABS_LATITUDE: f64 = 85.0;

pub const DEFAULT_SIDE_M: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Center,
    /// Context `1..=8`, row-major NW→SE: 1=NW 2=N 3=NE 4=W 5=E 6=SW 7=S 8=SE.
    Context(u8),
    Outside,
}

impl Region {
    /// Context index `0..8` (C1 → 0), if any.
    pub fn context_slot(self) -> Option<usize> {
        match self {
            Region::Context(k) => Some(k as usize - 1),
            _ => None,
        }
    }
}

/// Maps a block position in the 3×3 neighbourhood (row from north, column
/// from west) to its region.
pub fn region_of_block(row: usize, col: usize) -> Region {
    const TABLE: [[Region; 3]; 3] = [
        [Region::Context(1), Region::Context(2), Region::Context(3)],
        [Region::Context(4), Region::Center, Region::Context(5)],
        [Region::Context(6), Region::Context(7), Region::Context(8)],
    ];
    TABLE[row][col]
}

/// Position of a context `1..=8` in the 3×3 neighbourhood as `(row, col)`.
pub fn block_of_context(k: u8) -> (usize, usize) {
    assert!((1..=8).contains(&k), "context index {k}");
    let idx = if k <= 4 { k as usize - 1 } else { k as usize };
    (idx / 3, idx % 3)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

/// Axis-aligned box in local metres: `x ∈ [west, east)`, `y ∈ (south, north]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
}

impl BoundingBox {
    pub fn contains(&self, p: LocalPoint) -> bool {
        p.x >= self.west && p.x < self.east && p.y > self.south && p.y <= self.north
    }

    pub fn area(&self) -> f64 {
        (self.east - self.west) * (self.north - self.south)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.east.min(other.east) - self.west.max(other.west)).max(0.0);
        let h = (self.north.min(other.north) - self.south.max(other.south)).max(0.0);
        w * h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaFrame {
    pub center: GeoPoint,
    pub side_m: f64,
    cos_lat: f64,
}

/// Frames a community with side length `side_m`.
pub fn make_frame(site: &CommunitySite, side_m: f64) -> Result<AreaFrame> {
    AreaFrame::new(site.center, side_m)
}

impl AreaFrame {
    pub fn new(center: GeoPoint, side_m: f64) -> Result<Self> {
        if !(side_m > 0.0 && side_m.is_finite()) {
            return Err(Error::Precondition(format!(
                "side length must be positive, got {side_m}"
            )));
        }
        if !center.is_valid() {
            return Err(Error::Domain(format!("invalid frame center {center:?}")));
        }
        if center.lat.abs() > MAX_ABS_LATITUDE {
            return Err(Error::UnsupportedRegion { lat: center.lat });
        }
        Ok(AreaFrame {
            center,
            side_m,
            cos_lat: center.lat.to_radians().cos(),
        })
    }

    pub fn project(&self, p: GeoPoint) -> LocalPoint {
        LocalPoint {
            x: (p.lon - self.center.lon) * METERS_PER_DEGREE * self.cos_lat,
            y: (p.lat - self.center.lat) * METERS_PER_DEGREE,
        }
    }

    pub fn unproject(&self, p: LocalPoint) -> GeoPoint {
        GeoPoint {
            lat: self.center.lat + p.y / METERS_PER_DEGREE,
            lon: self.center.lon + p.x / (METERS_PER_DEGREE * self.cos_lat),
        }
    }

    /// Raster coordinates relative to the central square: `u` east, `v`
    /// south, both in units of `L`, with the central square at `[0,1)²`.
    fn unit_coords(&self, p: LocalPoint) -> (f64, f64) {
        let half = self.side_m / 2.0;
        ((p.x + half) / self.side_m, (half - p.y) / self.side_m)
    }

    pub fn locate(&self, p: GeoPoint) -> Region {
        self.locate_local(self.project(p))
    }

    pub fn locate_local(&self, p: LocalPoint) -> Region {
        let (u, v) = self.unit_coords(p);
        let (col, row) = (u.floor(), v.floor());
        if !(-1.0..=1.0).contains(&col) || !(-1.0..=1.0).contains(&row) {
            return Region::Outside;
        }
        region_of_block((row + 1.0) as usize, (col + 1.0) as usize)
    }

    /// `(row, col)` of the `n × n` grid cell holding `p`, rows from north.
    pub fn grid_cell(&self, p: GeoPoint, n: usize) -> Option<(usize, usize)> {
        self.grid_cell_local(self.project(p), n)
    }

    pub fn grid_cell_local(&self, p: LocalPoint, n: usize) -> Option<(usize, usize)> {
        assert!(n >= 1, "grid resolution must be positive");
        let (u, v) = self.unit_coords(p);
        if u.floor() != 0.0 || v.floor() != 0.0 {
            return None;
        }
        let cell = |t: f64| ((t * n as f64).floor() as usize).min(n - 1);
        Some((cell(v), cell(u)))
    }

    pub fn cell_center_local(&self, row: usize, col: usize, n: usize) -> LocalPoint {
        let step = self.side_m / n as f64;
        LocalPoint {
            x: -self.side_m / 2.0 + (col as f64 + 0.5) * step,
            y: self.side_m / 2.0 - (row as f64 + 0.5) * step,
        }
    }

    pub fn cell_center(&self, row: usize, col: usize, n: usize) -> GeoPoint {
        self.unproject(self.cell_center_local(row, col, n))
    }

    fn block_box(&self, row: usize, col: usize) -> BoundingBox {
        let l = self.side_m;
        let west = -1.5 * l + col as f64 * l;
        let north = 1.5 * l - row as f64 * l;
        BoundingBox {
            west,
            east: west + l,
            south: north - l,
            north,
        }
    }

    pub fn central_box(&self) -> BoundingBox {
        self.block_box(1, 1)
    }

    /// Box of context `1..=8`.
    pub fn context_box(&self, k: u8) -> BoundingBox {
        let (r, c) = block_of_context(k);
        self.block_box(r, c)
    }

    pub fn region_box(&self, region: Region) -> Option<BoundingBox> {
        match region {
            Region::Center => Some(self.central_box()),
            Region::Context(k) => Some(self.context_box(k)),
            Region::Outside => None,
        }
    }

    /// Area of one square in km².
    pub fn square_km2(&self) -> f64 {
        self.side_m * self.side_m / 1e6
    }

    /// Lat/lon envelope of the whole 3×3 block, padded by `pad_m` metres.
    pub fn geo_envelope(&self, pad_m: f64) -> (GeoPoint, GeoPoint) {
        let r = 1.5 * self.side_m + pad_m;
        let sw = self.unproject(LocalPoint { x: -r, y: -r });
        let ne = self.unproject(LocalPoint { x: r, y: r });
        (sw, ne)
    }
}
