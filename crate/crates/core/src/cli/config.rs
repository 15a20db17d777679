use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advplanner::{GanConfig, VaeConfig};
use crate::error::{Error, Result};
use crate::features::DEFAULT_TREND_MONTHS;
use crate::geodata::{RecordKind, SynthConfig, DEFAULT_SIDE_M, POI_CATEGORY_COUNT};
use crate::scoring::ForestConfig;
use crate::spatialgraph::VgaeConfig;

/// Dataset locations; unset entries default to `<out>/data/<kind>.csv`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub pois: Option<PathBuf>,
    pub trips: Option<PathBuf>,
    pub fares: Option<PathBuf>,
    pub checkins: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub communities: Option<PathBuf>,
}

/// Full run configuration. Every field has a default except `seed`, which
/// must come from the file or the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub data: DataPaths,
    pub synth: SynthConfig,
    /// Side of the central square and of every context, in metres.
    pub side_m: f64,
    /// Grid resolution `n` of the configuration tensor.
    pub resolution: usize,
    /// Months `t` of price history per context.
    pub months: usize,
    /// POI categories `m`.
    pub categories: usize,
    pub vgae: VgaeConfig,
    pub gan: GanConfig,
    pub vae: VaeConfig,
    pub forest: ForestConfig,
    /// Terrible communities re-planned and scored per method.
    pub eval_communities: usize,
    /// Rows per label in the exported embeddings.
    pub embedding_sample: usize,
    /// Pixels per grid cell in raster exports.
    pub raster_scale: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: PathBuf::from("lucgen-out"),
            data: DataPaths::default(),
            synth: SynthConfig::default(),
            side_m: DEFAULT_SIDE_M,
            resolution: 10,
            months: DEFAULT_TREND_MONTHS,
            categories: POI_CATEGORY_COUNT,
            vgae: VgaeConfig::default(),
            gan: GanConfig::default(),
            vae: VaeConfig::default(),
            forest: ForestConfig::default(),
            eval_communities: 100,
            embedding_sample: 500,
            raster_scale: 8,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::Config("a seed is required (config field `seed` or --seed)".into())
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if !(self.side_m > 0.0 && self.side_m.is_finite()) {
            return Err(Error::Config("side_m must be positive".into()));
        }
        if !(1..=64).contains(&self.resolution) {
            return Err(Error::Config("resolution must be in 1..=64".into()));
        }
        if !(2..=120).contains(&self.months) {
            return Err(Error::Config("months must be in 2..=120".into()));
        }
        if !(1..=POI_CATEGORY_COUNT).contains(&self.categories) {
            return Err(Error::Config(format!(
                "categories must be in 1..={POI_CATEGORY_COUNT}"
            )));
        }
        if self.eval_communities == 0 || self.embedding_sample == 0 {
            return Err(Error::Config(
                "eval_communities and embedding_sample must be positive".into(),
            ));
        }
        if !(1..=64).contains(&self.raster_scale) {
            return Err(Error::Config("raster_scale must be in 1..=64".into()));
        }
        self.synth.validate()?;
        self.vgae.validate()?;
        self.gan.validate()?;
        self.vae.validate()?;
        self.forest.validate()
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    pub fn dataset(&self, kind: RecordKind) -> PathBuf {
        let set = match kind {
            RecordKind::Pois => &self.data.pois,
            RecordKind::Trips => &self.data.trips,
            RecordKind::Fares => &self.data.fares,
            RecordKind::CheckIns => &self.data.checkins,
            RecordKind::Prices => &self.data.prices,
            RecordKind::Communities => &self.data.communities,
        };
        set.clone()
            .unwrap_or_else(|| self.data_dir().join(kind.file_name()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_seed_required() {
        let cfg = RunConfig::default();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            seed: Some(1),
            ..cfg
        };
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig =
            serde_json::from_str(r#"{"seed": 3, "gan": {"iterations": 5}}"#).unwrap();
        assert_eq!(partial.gan.iterations, 5);
        assert_eq!(partial.gan.batch_size, 32);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
    }

    #[test]
    fn dataset_paths_default_under_out() {
        let cfg = RunConfig {
            out: PathBuf::from("/tmp/x"),
            ..RunConfig::default()
        };
        assert_eq!(
            cfg.dataset(RecordKind::Pois),
            PathBuf::from("/tmp/x/data/pois.csv")
        );
    }
}
