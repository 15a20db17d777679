//! Record types, CSV ingestion, spatial framing and the synthetic city.

mod frame;
mod index;
mod ingest;
mod synth;
mod types;

pub use frame::{
    block_of_context, make_frame, region_of_block, AreaFrame, BoundingBox, LocalPoint, Region,
    DEFAULT_SIDE_M, MAX_ABS_LATITUDE, METERS_PER_DEGREE,
};
pub use index::{OdIndex, PointIndex};
pub use ingest::{ingest, ingest_communities, write_records, CsvRecord, Ingested, RecordKind};
pub use synth::{synth_city, SynthConfig, SyntheticCity, PLANTED_LABELS_FILE};
pub use types::{
    format_timestamp, parse_timestamp, CheckInRecord, CommunitySite, FareRecord, GeoPoint,
    PoiRecord, PriceObservation, Timestamp, TripRecord, POI_CATEGORIES, POI_CATEGORY_COUNT,
};
