use std::collections::HashMap;

use super::frame::AreaFrame;
use super::types::GeoPoint;

/// Bucket edge in degrees (~1.1 km of latitude).
const BUCKET_DEG: f64 = 0.01;

/// Hash-grid over lat/lon so per-community extraction only visits nearby
/// records. Queries return record indices in ascending order.
#[derive(Clone, Debug, Default)]
pub struct PointIndex {
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

fn key(p: GeoPoint) -> (i64, i64) {
    (
        (p.lat / BUCKET_DEG).floor() as i64,
        (p.lon / BUCKET_DEG).floor() as i64,
    )
}

impl PointIndex {
    pub fn build(points: impl IntoIterator<Item = GeoPoint>) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.into_iter().enumerate() {
            buckets.entry(key(p)).or_default().push(i as u32);
        }
        PointIndex { buckets }
    }

    /// Indices of points inside the lat/lon rectangle `[sw, ne]` (plus
    /// bucket slack), ascending and de-duplicated.
    pub fn query_rect(&self, sw: GeoPoint, ne: GeoPoint) -> Vec<usize> {
        let (r0, c0) = key(sw);
        let (r1, c1) = key(ne);
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                if let Some(ids) = self.buckets.get(&(r, c)) {
                    out.extend(ids.iter().map(|&i| i as usize));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Candidates for the 3×3 block of `frame`.
    pub fn query_frame(&self, frame: &AreaFrame) -> Vec<usize> {
        let (sw, ne) = frame.geo_envelope(10.0);
        self.query_rect(sw, ne)
    }
}

/// Index over both endpoints of origin–destination records. A record is
/// returned once if either endpoint is near the query.
#[derive(Clone, Debug, Default)]
pub struct OdIndex {
    origins: PointIndex,
    destinations: PointIndex,
}

impl OdIndex {
    pub fn build(pairs: impl IntoIterator<Item = (GeoPoint, GeoPoint)>) -> Self {
        let (o, d): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        OdIndex {
            origins: PointIndex::build(o),
            destinations: PointIndex::build(d),
        }
    }

    pub fn query_frame(&self, frame: &AreaFrame) -> Vec<usize> {
        let mut out = self.origins.query_frame(frame);
        out.extend(self.destinations.query_frame(frame));
        out.sort_unstable();
        out.dedup();
        out
    }
}
