//! Explicit context features for the eight neighbours of a community.
//!
//! Each context row is `[V | R | O | U]`:
//! * `V` (`t−1`): first differences of the monthly mean house price over
//!   communities whose centre lies in the context;
//! * `R` (`m`): POI category shares;
//! * `O` (5): smart-card fares: daily boardings in the region, daily
//!   alightings in the region, daily trips with both ends inside, distinct
//!   stops per km², mean card balance of records touching the region;
//! * `U` (5): taxi trips: daily pickups in the region, daily dropoffs in the
//!   region, daily trips with both ends inside, mean average speed (km/h) and
//!   mean distance (m) of trips touching the region.
//!
//! Daily rates divide by the number of distinct calendar days in the
//! respective dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{
    AreaFrame, CommunitySite, FareRecord, GeoPoint, OdIndex, PoiRecord, PointIndex,
    PriceObservation, Region, TripRecord, POI_CATEGORIES,
};
use crate::numerics::Tensor;

pub const CONTEXT_COUNT: usize = 8;
pub const TRANSPORT_WIDTH: usize = 5;
pub const DEFAULT_TREND_MONTHS: usize = 6;

/// Row width `K = (t−1) + m + 10`.
pub fn feature_width(months: usize, categories: usize) -> usize {
    months - 1 + categories + 2 * TRANSPORT_WIDTH
}

/// Column names of a context row.
pub fn feature_names(months: usize, categories: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..months).map(|i| format!("price_diff_{i}")).collect();
    for c in 0..categories {
        match POI_CATEGORIES.get(c) {
            Some(name) => names.push(format!("poi_{name}")),
            None => names.push(format!("poi_{c}")),
        }
    }
    for n in [
        "bus_leaving",
        "bus_arriving",
        "bus_internal",
        "bus_stop_density",
        "card_balance",
    ] {
        names.push(n.to_string());
    }
    for n in [
        "taxi_leaving",
        "taxi_arriving",
        "taxi_internal",
        "taxi_speed",
        "taxi_distance",
    ] {
        names.push(n.to_string());
    }
    names
}

/// The `t` consecutive months used for the price trend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendWindow {
    pub start: usize,
    pub months: usize,
}

impl TrendWindow {
    /// The last `months` months present in the observations (starting at 0
    /// when the dataset is shorter or empty).
    pub fn latest(prices: &[PriceObservation], months: usize) -> Self {
        let last = prices.iter().map(|p| p.month).max().unwrap_or(0);
        TrendWindow {
            start: (last + 1).saturating_sub(months),
            months,
        }
    }
}

/// Prices grouped by community and month.
#[derive(Clone, Debug, Default)]
pub struct PriceTable {
    by_community: HashMap<u64, BTreeMap<usize, Vec<f64>>>,
}

impl PriceTable {
    pub fn build(prices: &[PriceObservation]) -> Self {
        let mut by_community: HashMap<u64, BTreeMap<usize, Vec<f64>>> = HashMap::new();
        for p in prices {
            by_community
                .entry(p.community_id)
                .or_default()
                .entry(p.month)
                .or_default()
                .push(p.price);
        }
        PriceTable { by_community }
    }

    /// Monthly mean over the given communities, `None` for months without
    /// any observation.
    pub fn monthly_means(&self, communities: &[u64], window: TrendWindow) -> Vec<Option<f64>> {
        (window.start..window.start + window.months)
            .map(|month| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for id in communities {
                    if let Some(obs) = self.by_community.get(id).and_then(|m| m.get(&month)) {
                        sum += obs.iter().sum::<f64>();
                        count += obs.len();
                    }
                }
                (count > 0).then(|| sum / count as f64)
            })
            .collect()
    }
}

/// First differences of a monthly series. Missing months are forward
/// filled (leading gaps back filled); a series without any value yields
/// zeros.
pub fn trend_from_means(means: &[Option<f64>]) -> Vec<f64> {
    let width = means.len().saturating_sub(1);
    let Some(first) = means.iter().flatten().next().copied() else {
        return vec![0.0; width];
    };
    let mut last = first;
    let filled: Vec<f64> = means
        .iter()
        .map(|m| {
            if let Some(v) = m {
                last = *v;
            }
            last
        })
        .collect();
    filled.windows(2).map(|w| w[1] - w[0]).collect()
}

/// `V` for one context given the communities lying inside it.
pub fn value_added_trend(
    prices: &PriceTable,
    communities: &[u64],
    window: TrendWindow,
) -> Result<Vec<f64>> {
    if window.months < 2 {
        return Err(Error::Precondition(
            "price trend needs at least 2 months".into(),
        ));
    }
    Ok(trend_from_means(&prices.monthly_means(communities, window)))
}

/// `R` from the categories of the POIs inside a context.
pub fn poi_ratio(categories: impl IntoIterator<Item = u8>, m: usize) -> Vec<f64> {
    let mut counts = vec![0.0; m];
    for c in categories {
        if (c as usize) < m {
            counts[c as usize] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        for v in &mut counts {
            *v /= total;
        }
    }
    counts
}

/// Number of distinct calendar days among the timestamps.
pub fn distinct_days<'a>(times: impl IntoIterator<Item = &'a crate::geodata::Timestamp>) -> usize {
    times
        .into_iter()
        .map(|t| t.date())
        .collect::<HashSet<_>>()
        .len()
}

fn per_day(total: f64, days: usize) -> f64 {
    if days == 0 {
        0.0
    } else {
        total / days as f64
    }
}

fn mean_or_zero(sum: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Stop identity: coordinates rounded to 5 decimal places.
fn stop_key(p: GeoPoint) -> (i64, i64) {
    ((p.lat * 1e5).round() as i64, (p.lon * 1e5).round() as i64)
}

#[derive(Default)]
struct FareAcc {
    leaving: f64,
    arriving: f64,
    internal: f64,
    stops: HashSet<(i64, i64)>,
    balance: f64,
    touching: usize,
}

impl FareAcc {
    fn add(&mut self, f: &FareRecord, from: bool, to: bool) {
        if from {
            self.leaving += 1.0;
            self.stops.insert(stop_key(f.boarding));
        }
        if to {
            self.arriving += 1.0;
            self.stops.insert(stop_key(f.alighting));
        }
        if from && to {
            self.internal += 1.0;
        }
        if from || to {
            self.balance += f.balance;
            self.touching += 1;
        }
    }

    fn finish(&self, days: usize, area_km2: f64) -> [f64; 5] {
        [
            per_day(self.leaving, days),
            per_day(self.arriving, days),
            per_day(self.internal, days),
            self.stops.len() as f64 / area_km2,
            mean_or_zero(self.balance, self.touching),
        ]
    }
}

#[derive(Default)]
struct TripAcc {
    leaving: f64,
    arriving: f64,
    internal: f64,
    speed: f64,
    distance: f64,
    touching: usize,
}

impl TripAcc {
    fn add(&mut self, t: &TripRecord, from: bool, to: bool) {
        if from {
            self.leaving += 1.0;
        }
        if to {
            self.arriving += 1.0;
        }
        if from && to {
            self.internal += 1.0;
        }
        if from || to {
            self.speed += t.avg_kmh;
            self.distance += t.distance_m;
            self.touching += 1;
        }
    }

    fn finish(&self, days: usize) -> [f64; 5] {
        [
            per_day(self.leaving, days),
            per_day(self.arriving, days),
            per_day(self.internal, days),
            mean_or_zero(self.speed, self.touching),
            mean_or_zero(self.distance, self.touching),
        ]
    }
}

/// `O` for context `k` (1..=8) over the given fares.
pub fn public_transport_features<'a>(
    fares: impl IntoIterator<Item = &'a FareRecord>,
    frame: &AreaFrame,
    k: u8,
    days: usize,
) -> [f64; 5] {
    let region = Region::Context(k);
    let mut acc = FareAcc::default();
    for f in fares {
        acc.add(
            f,
            frame.locate(f.boarding) == region,
            frame.locate(f.alighting) == region,
        );
    }
    acc.finish(days, frame.square_km2())
}

/// `U` for context `k` (1..=8) over the given trips.
pub fn private_transport_features<'a>(
    trips: impl IntoIterator<Item = &'a TripRecord>,
    frame: &AreaFrame,
    k: u8,
    days: usize,
) -> [f64; 5] {
    let region = Region::Context(k);
    let mut acc = TripAcc::default();
    for t in trips {
        acc.add(
            t,
            frame.locate(t.pickup) == region,
            frame.locate(t.dropoff) == region,
        );
    }
    acc.finish(days)
}

/// The `8 × K` feature matrix of one community (row `k−1` is context `k`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatureMatrix {
    pub months: usize,
    pub categories: usize,
    pub values: Tensor,
}

impl ContextFeatureMatrix {
    pub fn width(&self) -> usize {
        feature_width(self.months, self.categories)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.values.row(k)
    }

    /// The `R` block of row `k`.
    pub fn poi_block(&self, k: usize) -> &[f64] {
        let s = self.months - 1;
        &self.values.row(k)[s..s + self.categories]
    }
}

/// Concatenates the four blocks per context.
pub fn assemble(
    v: &[Vec<f64>],
    r: &[Vec<f64>],
    o: &[[f64; 5]],
    u: &[[f64; 5]],
) -> Result<ContextFeatureMatrix> {
    for (name, len) in [
        ("V", v.len()),
        ("R", r.len()),
        ("O", o.len()),
        ("U", u.len()),
    ] {
        if len != CONTEXT_COUNT {
            return Err(Error::Precondition(format!(
                "block {name} has {len} rows, expected {CONTEXT_COUNT}"
            )));
        }
    }
    let months = v[0].len() + 1;
    let categories = r[0].len();
    if v.iter().any(|x| x.len() + 1 != months) || r.iter().any(|x| x.len() != categories) {
        return Err(Error::Precondition("ragged feature blocks".into()));
    }
    let mut data = Vec::with_capacity(CONTEXT_COUNT * feature_width(months, categories));
    for k in 0..CONTEXT_COUNT {
        data.extend_from_slice(&v[k]);
        data.extend_from_slice(&r[k]);
        data.extend_from_slice(&o[k]);
        data.extend_from_slice(&u[k]);
    }
    let values = Tensor::matrix(CONTEXT_COUNT, feature_width(months, categories), data)?;
    Ok(ContextFeatureMatrix {
        months,
        categories,
        values,
    })
}

/// All datasets needed for feature extraction, with spatial indexes.
pub struct FeatureCorpus<'a> {
    pub communities: &'a [CommunitySite],
    pub pois: &'a [PoiRecord],
    pub trips: &'a [TripRecord],
    pub fares: &'a [FareRecord],
    pub side_m: f64,
    pub categories: usize,
    pub window: TrendWindow,
    prices: PriceTable,
    community_index: PointIndex,
    poi_index: PointIndex,
    trip_index: OdIndex,
    fare_index: OdIndex,
    trip_days: usize,
    fare_days: usize,
}

impl<'a> FeatureCorpus<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        communities: &'a [CommunitySite],
        pois: &'a [PoiRecord],
        trips: &'a [TripRecord],
        fares: &'a [FareRecord],
        prices: &[PriceObservation],
        side_m: f64,
        categories: usize,
        months: usize,
    ) -> Result<Self> {
        if months < 2 {
            return Err(Error::Precondition(
                "price trend needs at least 2 months".into(),
            ));
        }
        Ok(FeatureCorpus {
            communities,
            pois,
            trips,
            fares,
            side_m,
            categories,
            window: TrendWindow::latest(prices, months),
            prices: PriceTable::build(prices),
            community_index: PointIndex::build(communities.iter().map(|c| c.center)),
            poi_index: PointIndex::build(pois.iter().map(|p| p.location)),
            trip_index: OdIndex::build(trips.iter().map(|t| (t.pickup, t.dropoff))),
            fare_index: OdIndex::build(fares.iter().map(|f| (f.boarding, f.alighting))),
            trip_days: distinct_days(trips.iter().map(|t| &t.pickup_time)),
            fare_days: distinct_days(fares.iter().map(|f| &f.boarding_time)),
        })
    }

    pub fn trip_days(&self) -> usize {
        self.trip_days
    }

    pub fn fare_days(&self) -> usize {
        self.fare_days
    }

    /// Features of the community at `site`; each record is located once.
    pub fn extract(&self, site: &CommunitySite) -> Result<ContextFeatureMatrix> {
        let frame = AreaFrame::new(site.center, self.side_m)?;
        let slot = |p: GeoPoint| frame.locate(p).context_slot();

        let mut members: Vec<Vec<u64>> = vec![Vec::new(); CONTEXT_COUNT];
        for i in self.community_index.query_frame(&frame) {
            let c = &self.communities[i];
            if let Some(s) = slot(c.center) {
                members[s].push(c.id);
            }
        }
        let v = members
            .iter()
            .map(|ids| value_added_trend(&self.prices, ids, self.window))
            .collect::<Result<Vec<_>>>()?;

        let mut cats: Vec<Vec<u8>> = vec![Vec::new(); CONTEXT_COUNT];
        for i in self.poi_index.query_frame(&frame) {
            let p = &self.pois[i];
            if let Some(s) = slot(p.location) {
                cats[s].push(p.category);
            }
        }
        let r: Vec<Vec<f64>> = cats
            .into_iter()
            .map(|c| poi_ratio(c, self.categories))
            .collect();

        let mut fare_acc: Vec<FareAcc> = (0..CONTEXT_COUNT).map(|_| FareAcc::default()).collect();
        for i in self.fare_index.query_frame(&frame) {
            let f = &self.fares[i];
            let (a, b) = (slot(f.boarding), slot(f.alighting));
            for s in [a, b].into_iter().flatten().collect::<BTreeSet<_>>() {
                fare_acc[s].add(f, a == Some(s), b == Some(s));
            }
        }
        let area = frame.square_km2();
        let o: Vec<[f64; 5]> = fare_acc
            .iter()
            .map(|a| a.finish(self.fare_days, area))
            .collect();

        let mut trip_acc: Vec<TripAcc> = (0..CONTEXT_COUNT).map(|_| TripAcc::default()).collect();
        for i in self.trip_index.query_frame(&frame) {
            let t = &self.trips[i];
            let (a, b) = (slot(t.pickup), slot(t.dropoff));
            for s in [a, b].into_iter().flatten().collect::<BTreeSet<_>>() {
                trip_acc[s].add(t, a == Some(s), b == Some(s));
            }
        }
        let u: Vec<[f64; 5]> = trip_acc.iter().map(|a| a.finish(self.trip_days)).collect();

        assemble(&v, &r, &o, &u)
    }

    /// Features for every community, in input order.
    pub fn extract_all(&self) -> Result<Vec<ContextFeatureMatrix>> {
        self.communities
            .par_iter()
            .map(|c| self.extract(c))
            .collect()
    }
}

/// Per-column z-scoring fitted on every context row of the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    /// Population statistics; constant columns get mean 0 and std 1 so they
    /// pass through unchanged.
    pub fn fit(corpus: &[ContextFeatureMatrix]) -> Result<Self> {
        let first = corpus
            .first()
            .ok_or_else(|| Error::Precondition("cannot fit a scaler on an empty corpus".into()))?;
        let k = first.values.cols();
        let rows: Vec<&[f64]> = corpus
            .iter()
            .flat_map(|m| (0..m.values.rows()).map(move |r| m.values.row(r)))
            .collect();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Precondition(
                "feature matrices differ in width".into(),
            ));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; k];
        let mut std = vec![1.0; k];
        for j in 0..k {
            let mu = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n;
            if var > 1e-24 * (1.0 + mu * mu) {
                mean[j] = mu;
                std[j] = var.sqrt();
            }
        }
        Ok(FeatureScaler { mean, std })
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(Error::Dimension {
                op: "FeatureScaler",
                left: vec![self.mean.len()],
                right: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let k = self.mean.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % k]) / self.std[i % k])
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn unapply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let k = self.mean.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.std[i % k] + self.mean[i % k])
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }
}

/// Writes `community_id,context_index,<features…>`.
pub fn write_features_csv(
    path: &Path,
    ids: &[u64],
    matrices: &[ContextFeatureMatrix],
) -> Result<()> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Precondition("no feature matrices to write".into()))?;
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Domain(format!("{other:?}")),
    })?;
    let mut header = vec!["community_id".to_string(), "context_index".to_string()];
    header.extend(feature_names(first.months, first.categories));
    w.write_record(&header)?;
    for (id, m) in ids.iter().zip(matrices) {
        for k in 0..CONTEXT_COUNT {
            let mut rec = vec![id.to_string(), (k + 1).to_string()];
            rec.extend(m.row(k).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_features_csv`]; matrices are returned in
/// file order with their community ids.
pub fn read_features_csv(
    path: &Path,
    months: usize,
    categories: usize,
) -> Result<Vec<(u64, ContextFeatureMatrix)>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let k = feature_width(months, categories);
    let mut reader = csv::Reader::from_path(path)?;
    let width = reader.headers()?.len();
    if width != k + 2 {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: Some(1),
            detail: format!("expected {} columns, found {width}", k + 2),
        });
    }
    let mut out: Vec<(u64, ContextFeatureMatrix)> = Vec::new();
    let mut pending: Vec<f64> = Vec::new();
    let mut current: Option<u64> = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |detail: &str| Error::Ingest {
            path: path.to_path_buf(),
            line: Some(i as u64 + 2),
            detail: detail.to_string(),
        };
        let id: u64 = rec[0].parse().map_err(|_| bad("bad community_id"))?;
        let ctx: usize = rec[1].parse().map_err(|_| bad("bad context_index"))?;
        if ctx != pending.len() / k + 1 || current.is_some_and(|c| c != id && ctx != 1) {
            return Err(bad("context rows must appear as 1..8 per community"));
        }
        if ctx == 1 {
            current = Some(id);
        }
        for s in rec.iter().skip(2) {
            let v: f64 = s.parse().map_err(|_| bad("bad feature value"))?;
            pending.push(v);
        }
        if ctx == CONTEXT_COUNT {
            let values = Tensor::matrix(CONTEXT_COUNT, k, std::mem::take(&mut pending))?;
            out.push((
                id,
                ContextFeatureMatrix {
                    months,
                    categories,
                    values,
                },
            ));
        }
    }
    if !pending.is_empty() {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: None,
            detail: "truncated community block".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{parse_timestamp, LocalPoint};

    fn frame() -> AreaFrame {
        AreaFrame::new(
            GeoPoint {
                lat: 31.2,
                lon: 121.5,
            },
            1000.0,
        )
        .unwrap()
    }

    fn at(frame: &AreaFrame, x: f64, y: f64) -> GeoPoint {
        frame.unproject(LocalPoint { x, y })
    }

    #[test]
    fn trend_examples() {
        let means: Vec<Option<f64>> = [10.0, 12.0, 11.0, 14.0, 14.0, 15.0].map(Some).to_vec();
        assert_eq!(trend_from_means(&means), vec![2.0, -1.0, 3.0, 0.0, 1.0]);
        assert_eq!(trend_from_means(&[Some(7.0); 6]), vec![0.0; 5]);
        assert_eq!(trend_from_means(&[None; 6]), vec![0.0; 5]);
        assert_eq!(
            trend_from_means(&[None, Some(3.0), None, Some(5.0)]),
            vec![0.0, 0.0, 2.0]
        );
    }

    #[test]
    fn trend_over_table() {
        let prices: Vec<PriceObservation> = (0..6)
            .flat_map(|m| {
                [
                    PriceObservation {
                        community_id: 1,
                        month: m,
                        price: 10.0 + m as f64,
                    },
                    PriceObservation {
                        community_id: 2,
                        month: m,
                        price: 20.0 + 3.0 * m as f64,
                    },
                ]
            })
            .collect();
        let table = PriceTable::build(&prices);
        let w = TrendWindow::latest(&prices, 6);
        assert_eq!(
            w,
            TrendWindow {
                start: 0,
                months: 6
            }
        );
        assert_eq!(value_added_trend(&table, &[1, 2], w).unwrap(), vec![2.0; 5]);
        assert_eq!(value_added_trend(&table, &[], w).unwrap(), vec![0.0; 5]);
        assert!(value_added_trend(
            &table,
            &[1],
            TrendWindow {
                start: 0,
                months: 1
            }
        )
        .is_err());
    }

    #[test]
    fn ratio_examples() {
        let r = poi_ratio([0, 0, 1, 1], 20);
        assert_eq!(&r[..3], &[0.5, 0.5, 0.0]);
        let r = poi_ratio([19], 20);
        assert_eq!(r[19], 1.0);
        assert_eq!(r.iter().sum::<f64>(), 1.0);
        assert!(poi_ratio([], 20).iter().all(|v| *v == 0.0));
    }

    fn ts(s: &str) -> crate::geodata::Timestamp {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn fare_examples() {
        let f = frame();
        assert_eq!(public_transport_features([], &f, 1, 1), [0.0; 5]);
        let rec = FareRecord {
            boarding: at(&f, -1000.0, 1000.0),
            boarding_time: ts("2012-03-01T08:00:00"),
            alighting: at(&f, 1000.0, -1000.0),
            alighting_time: ts("2012-03-01T08:30:00"),
            balance: 12.5,
        };
        let o = public_transport_features([&rec], &f, 1, 1);
        assert_eq!(&o[..3], &[1.0, 0.0, 0.0]);
        assert_eq!(o[3], 1.0);
        assert_eq!(o[4], 12.5);
        let o8 = public_transport_features([&rec], &f, 8, 1);
        assert_eq!(&o8[..3], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn trip_speed_mean() {
        let f = frame();
        let mk = |kmh: f64| TripRecord {
            pickup: at(&f, 0.0, 1000.0),
            pickup_time: ts("2012-03-01T08:00:00"),
            dropoff: at(&f, 3000.0, 3000.0),
            dropoff_time: ts("2012-03-01T08:20:00"),
            distance_m: 2000.0,
            duration_s: 1200.0,
            avg_kmh: kmh,
        };
        let trips = [mk(30.0), mk(50.0)];
        let u = private_transport_features(&trips, &f, 2, 2);
        assert_eq!(u, [1.0, 0.0, 0.0, 40.0, 2000.0]);
        assert_eq!(private_transport_features([], &f, 2, 2), [0.0; 5]);
    }

    #[test]
    fn width_and_assembly() {
        assert_eq!(feature_width(6, 20), 35);
        assert_eq!(feature_names(6, 20).len(), 35);
        let v = vec![vec![1.0; 5]; 8];
        let r = vec![vec![0.05; 20]; 8];
        let o = vec![[2.0; 5]; 8];
        let u = vec![[3.0; 5]; 8];
        let m = assemble(&v, &r, &o, &u).unwrap();
        assert_eq!(m.values.shape(), &[8, 35]);
        assert_eq!(m.row(3)[5], 0.05);
        assert_eq!(m.row(7)[34], 3.0);
        assert!(assemble(&v[..7], &r, &o, &u).is_err());
    }

    #[test]
    fn scaler_roundtrip_and_constant_column() {
        let mk = |a: f64| {
            let v = vec![vec![a, 4.0]; 8];
            let r = vec![vec![1.0]; 8];
            assemble(&v, &r, &[[a; 5]; 8], &[[0.0; 5]; 8]).unwrap()
        };
        let corpus = vec![mk(1.0), mk(2.0), mk(6.0)];
        let s = FeatureScaler::fit(&corpus).unwrap();
        assert_eq!((s.mean[1], s.std[1]), (0.0, 1.0));
        for m in &corpus {
            let z = s.apply(&m.values).unwrap();
            assert_eq!(z.at(0, 1), 4.0);
            let back = s.unapply(&z).unwrap();
            for (a, b) in back.data().iter().zip(m.values.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let zs: Vec<f64> = corpus
            .iter()
            .map(|m| s.apply(&m.values).unwrap().at(0, 0))
            .collect();
        let mean = zs.iter().sum::<f64>() / 3.0;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn features_csv_roundtrip() {
        let v = vec![vec![1.5; 5]; 8];
        let r = vec![vec![0.25; 4]; 8];
        let m = assemble(&v, &r, &[[2.0; 5]; 8], &[[0.1; 5]; 8]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_features_csv(&path, &[7, 9], &[m.clone(), m.clone()]).unwrap();
        let back = read_features_csv(&path, 6, 4).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].0, 9);
        assert_eq!(back[1].1, m);
    }
}
