//! Pipeline stages. Each stage reads its inputs from the output directory
//! (or the configured dataset paths), writes its artifacts there, and is a
//! pure function of those inputs, the run configuration and the seed.
//!
//! Layout of the output directory:
//!
//! | path | written by |
//! |------|------------|
//! | `data/*.csv`, `data/planted_labels.csv` | synth |
//! | `features.csv`, `scaler.json` | featurize |
//! | `labels.csv` | label |
//! | `checkpoints/vgae.json`, `vgae_log.csv`, `embeddings_all.csv` | embed |
//! | `checkpoints/gan.json`, `checkpoints/vae.json`, `gan_log.csv`, `vae_log.csv` | train-gan |
//! | `generated/<METHOD>.csv`, `generated/targets.csv` | generate |
//! | `checkpoints/scoring.json`, `scores.csv`, `reference_scores.csv` | score |
//! | `proportions.csv`, `embeddings.csv`, `rasters/*.ppm`, `report.json` | report |

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::export::{channel_raster, merged_raster, write_bytes};
use crate::advplanner::{
    baseline_avg, baseline_max, baseline_vae, train_gan, GanModel, PlanVae, GAN_CHECKPOINT_KIND,
    VAE_CHECKPOINT_KIND,
};
use crate::error::{Error, Result};
use crate::features::{read_features_csv, write_features_csv, FeatureCorpus, FeatureScaler};
use crate::geodata::{
    ingest, ingest_communities, synth_city, AreaFrame, CheckInRecord, CommunitySite, FareRecord,
    Ingested, PoiRecord, PointIndex, PriceObservation, RecordKind, TripRecord, PLANTED_LABELS_FILE,
};
use crate::landuse::{
    build_config, checkin_frequency, count_checkins, diversity, label, merge_dominant,
    poi_proportions, quality, CheckinStats, LandUseConfig, QualityLabel,
};
use crate::numerics::{Checkpoint, SeededRng, Tensor};
use crate::scoring::{rf_train, scoring_features, RandomForestModel};
use crate::spatialgraph::{
    graph_from_rows, reconstruction_auc, train_vgae, with_self_loops, write_embeddings_csv,
    ContextEmbedding, EmbeddingMode, SpatialGraph, Vgae,
};

/// Generation methods reported in `scores.csv`, in row order.
pub const METHODS: [&str; 4] = ["LUCGAN", "VAE", "AVG", "MAX"];
/// Untrained-generator reference plans.
pub const CONTROL: &str = "CONTROL";

/// Human-readable progress lines produced by a stage.
pub type Notes = Vec<String>;

fn path_in(cfg: &RunConfig, rel: &str) -> PathBuf {
    cfg.out.join(rel)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn note_ingest<R>(notes: &mut Notes, kind: RecordKind, ing: &Ingested<R>) {
    notes.push(format!(
        "{}: {} records, {} rejected",
        kind.file_name(),
        ing.records.len(),
        ing.rejected
    ));
    for (line, reason) in &ing.reasons {
        notes.push(format!("  line {line}: {reason}"));
    }
}

fn load<R: crate::geodata::CsvRecord>(cfg: &RunConfig, notes: &mut Notes) -> Result<Vec<R>> {
    let ing = ingest::<R>(&cfg.dataset(R::KIND))?;
    note_ingest(notes, R::KIND, &ing);
    Ok(ing.records)
}

fn load_communities(cfg: &RunConfig, notes: &mut Notes) -> Result<Vec<CommunitySite>> {
    let ing = ingest_communities(&cfg.dataset(RecordKind::Communities))?;
    note_ingest(notes, RecordKind::Communities, &ing);
    if ing.records.is_empty() {
        return Err(Error::Precondition("no communities to process".into()));
    }
    Ok(ing.records)
}

// ---------------------------------------------------------------- synth

pub fn stage_synth(cfg: &RunConfig) -> Result<Notes> {
    let mut synth = cfg.synth.clone();
    synth.seed = cfg.seed()?;
    synth.side_m = cfg.side_m;
    synth.months = cfg.months;
    let city = synth_city(&synth)?;
    city.write_to(&cfg.data_dir())?;
    Ok(vec![format!(
        "synthesized {} communities, {} POIs, {} trips, {} fares, {} check-ins into {}",
        city.communities.len(),
        city.pois.len(),
        city.trips.len(),
        city.fares.len(),
        city.checkins.len(),
        cfg.data_dir().display()
    )])
}

// ---------------------------------------------------------------- featurize

pub fn stage_featurize(cfg: &RunConfig) -> Result<Notes> {
    let mut notes = Notes::new();
    let communities = load_communities(cfg, &mut notes)?;
    let pois: Vec<PoiRecord> = load(cfg, &mut notes)?;
    let trips: Vec<TripRecord> = load(cfg, &mut notes)?;
    let fares: Vec<FareRecord> = load(cfg, &mut notes)?;
    let prices: Vec<PriceObservation> = load(cfg, &mut notes)?;
    let corpus = FeatureCorpus::new(
        &communities,
        &pois,
        &trips,
        &fares,
        &prices,
        cfg.side_m,
        cfg.categories,
        cfg.months,
    )?;
    let matrices = corpus.extract_all()?;
    let scaler = FeatureScaler::fit(&matrices)?;
    let ids: Vec<u64> = communities.iter().map(|c| c.id).collect();
    ensure_dir(&cfg.out)?;
    write_features_csv(&path_in(cfg, "features.csv"), &ids, &matrices)?;
    write_text(
        &path_in(cfg, "scaler.json"),
        &serde_json::to_string_pretty(&scaler)?,
    )?;
    notes.push(format!(
        "features for {} communities ({} trip days, {} fare days)",
        ids.len(),
        corpus.trip_days(),
        corpus.fare_days()
    ));
    Ok(notes)
}

// ---------------------------------------------------------------- label

/// Central-square plans of every community, in input order.
pub fn community_configs(
    cfg: &RunConfig,
    communities: &[CommunitySite],
    pois: &[PoiRecord],
) -> Result<Vec<LandUseConfig>> {
    let index = PointIndex::build(pois.iter().map(|p| p.location));
    communities
        .par_iter()
        .map(|c| {
            let frame = AreaFrame::new(c.center, cfg.side_m)?;
            let near = index.query_frame(&frame);
            Ok(build_config(
                near.iter().map(|&i| &pois[i]),
                &frame,
                cfg.categories,
                cfg.resolution,
            ))
        })
        .collect()
}

fn checkin_counts(
    cfg: &RunConfig,
    communities: &[CommunitySite],
    checkins: &[CheckInRecord],
) -> Result<Vec<usize>> {
    let index = PointIndex::build(checkins.iter().map(|c| c.location));
    communities
        .par_iter()
        .map(|c| {
            let frame = AreaFrame::new(c.center, cfg.side_m)?;
            Ok(count_checkins(
                index.query_frame(&frame).into_iter().map(|i| &checkins[i]),
                &frame,
            ))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelRow {
    pub community_id: u64,
    pub checkins: usize,
    pub freq: f64,
    pub div: f64,
    pub q: f64,
    pub label: QualityLabel,
}

pub fn stage_label(cfg: &RunConfig) -> Result<Notes> {
    let mut notes = Notes::new();
    let communities = load_communities(cfg, &mut notes)?;
    let pois: Vec<PoiRecord> = load(cfg, &mut notes)?;
    let checkins: Vec<CheckInRecord> = load(cfg, &mut notes)?;
    let configs = community_configs(cfg, &communities, &pois)?;
    let counts = checkin_counts(cfg, &communities, &checkins)?;
    let stats = CheckinStats::from_counts(&counts).expect("non-empty corpus");
    let rows: Vec<LabelRow> = communities
        .iter()
        .zip(&configs)
        .zip(&counts)
        .map(|((c, conf), &n)| {
            let s = quality(checkin_frequency(n, &stats), diversity(conf));
            LabelRow {
                community_id: c.id,
                checkins: n,
                freq: s.freq,
                div: s.div,
                q: s.q,
                label: label(s.q),
            }
        })
        .collect();
    let mut text = String::from("community_id,checkins,freq,div,q,label\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.community_id,
            r.checkins,
            r.freq,
            r.div,
            r.q,
            r.label.as_str()
        ));
    }
    write_text(&path_in(cfg, "labels.csv"), &text)?;
    let excellent = rows.iter().filter(|r| r.label.is_excellent()).count();
    notes.push(format!(
        "labelled {} communities: {excellent} excellent",
        rows.len()
    ));
    if let Some(agree) = planted_agreement(cfg, &rows)? {
        notes.push(format!("agreement with planted labels: {agree:.4}"));
    }
    Ok(notes)
}

fn read_planted(cfg: &RunConfig) -> Result<Option<HashMap<u64, QualityLabel>>> {
    let path = cfg.data_dir().join(PLANTED_LABELS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let mut out = HashMap::new();
    let mut reader = csv::Reader::from_path(&path)?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed = rec
            .get(0)
            .and_then(|s| s.parse::<u64>().ok())
            .zip(rec.get(1).and_then(QualityLabel::parse));
        let (id, l) = parsed.ok_or_else(|| Error::Ingest {
            path: path.clone(),
            line: Some(i as u64 + 2),
            detail: "expected community_id,label".into(),
        })?;
        out.insert(id, l);
    }
    Ok(Some(out))
}

fn planted_agreement(cfg: &RunConfig, rows: &[LabelRow]) -> Result<Option<f64>> {
    let Some(planted) = read_planted(cfg)? else {
        return Ok(None);
    };
    let matched: Vec<bool> = rows
        .iter()
        .filter_map(|r| planted.get(&r.community_id).map(|p| *p == r.label))
        .collect();
    if matched.is_empty() {
        return Ok(None);
    }
    Ok(Some(
        matched.iter().filter(|&&m| m).count() as f64 / matched.len() as f64,
    ))
}

pub fn read_labels(cfg: &RunConfig) -> Result<Vec<LabelRow>> {
    let path = path_in(cfg, "labels.csv");
    if !path.exists() {
        return Err(Error::MissingInput(path));
    }
    let mut reader = csv::Reader::from_path(&path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Ingest {
            path: path.clone(),
            line: Some(i as u64 + 2),
            detail: "malformed label row".into(),
        };
        let num = |k: usize| {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(bad)
        };
        rows.push(LabelRow {
            community_id: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            checkins: rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            freq: num(2)?,
            div: num(3)?,
            q: num(4)?,
            label: rec.get(5).and_then(QualityLabel::parse).ok_or_else(bad)?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------- embed

/// Standardised community graphs in feature-file order.
pub fn load_graphs(cfg: &RunConfig) -> Result<Vec<(u64, SpatialGraph)>> {
    let feats = read_features_csv(&path_in(cfg, "features.csv"), cfg.months, cfg.categories)?;
    let scaler: FeatureScaler = serde_json::from_str(&read_text(&path_in(cfg, "scaler.json"))?)?;
    feats
        .into_iter()
        .map(|(id, m)| {
            Ok((
                id,
                graph_from_rows(&scaler.apply(&m.values)?, cfg.vgae.pattern)?,
            ))
        })
        .collect()
}

pub fn stage_embed(cfg: &RunConfig) -> Result<Notes> {
    let seed = cfg.seed()?;
    let graphs = load_graphs(cfg)?;
    let (ids, gs): (Vec<u64>, Vec<SpatialGraph>) = graphs.into_iter().unzip();
    let run = train_vgae(&gs, &cfg.vgae, seed)?;
    ensure_dir(&path_in(cfg, "checkpoints"))?;
    let epochs_done = run.log.epoch_losses.len() as u64;
    run.model
        .checkpoint(seed, epochs_done)?
        .save(&path_in(cfg, "checkpoints/vgae.json"))?;
    let mut log = String::from("epoch,loss\n");
    for (e, l) in run.log.epoch_losses.iter().enumerate() {
        log.push_str(&format!("{e},{l}\n"));
    }
    write_text(&path_in(cfg, "vgae_log.csv"), &log)?;
    if let Some(epoch) = run.diverged_at {
        return Err(Error::Diverged {
            stage: "vgae",
            iteration: epoch,
        });
    }
    let embeddings = run.model.embed_all(&gs)?;
    let rows: Vec<(ContextEmbedding, Option<QualityLabel>)> = ids
        .iter()
        .zip(embeddings)
        .map(|(&id, z)| {
            (
                ContextEmbedding {
                    community_id: id,
                    mode: EmbeddingMode::Mean,
                    z,
                },
                None,
            )
        })
        .collect();
    write_embeddings_csv(&path_in(cfg, "embeddings_all.csv"), &rows)?;
    let auc = mean_auc(&run.model, &gs)?;
    Ok(vec![format!(
        "vgae trained for {} epochs, final loss {:.4}, mean reconstruction AUC {auc:.4}",
        run.log.epoch_losses.len(),
        run.log.epoch_losses.last().copied().unwrap_or(f64::NAN)
    )])
}

/// Mean edge-reconstruction AUC over the graphs, decoding from `μ`.
pub fn mean_auc(model: &Vgae, graphs: &[SpatialGraph]) -> Result<f64> {
    let aucs: Vec<Option<f64>> = graphs
        .par_iter()
        .map(|g| {
            Ok(reconstruction_auc(
                &with_self_loops(&g.adjacency),
                &model.reconstruct(g)?,
            ))
        })
        .collect::<Result<_>>()?;
    let vals: Vec<f64> = aucs.into_iter().flatten().collect();
    Ok(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
}

pub fn read_embeddings(cfg: &RunConfig) -> Result<Vec<(u64, Vec<f64>)>> {
    let path = path_in(cfg, "embeddings_all.csv");
    if !path.exists() {
        return Err(Error::MissingInput(path));
    }
    let mut reader = csv::Reader::from_path(&path)?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Ingest {
            path: path.clone(),
            line: Some(i as u64 + 2),
            detail: "malformed embedding row".into(),
        };
        let id: u64 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let z = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        out.push((id, z));
    }
    Ok(out)
}

// ---------------------------------------------------------------- train-gan

/// Labelled real plans and embeddings joined on community id.
pub struct TrainingSet {
    pub ids: Vec<u64>,
    pub configs: Vec<LandUseConfig>,
    pub labels: Vec<QualityLabel>,
    pub embeddings: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn of(&self, wanted: QualityLabel) -> Vec<LandUseConfig> {
        self.configs
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == wanted)
            .map(|(c, _)| c.clone())
            .collect()
    }
}

pub fn training_set(cfg: &RunConfig, notes: &mut Notes) -> Result<TrainingSet> {
    let communities = load_communities(cfg, notes)?;
    let pois: Vec<PoiRecord> = load(cfg, notes)?;
    let configs = community_configs(cfg, &communities, &pois)?;
    let labels: HashMap<u64, QualityLabel> = read_labels(cfg)?
        .into_iter()
        .map(|r| (r.community_id, r.label))
        .collect();
    let embeddings: HashMap<u64, Vec<f64>> = read_embeddings(cfg)?.into_iter().collect();
    let mut set = TrainingSet {
        ids: Vec::new(),
        configs: Vec::new(),
        labels: Vec::new(),
        embeddings: Vec::new(),
    };
    for (c, conf) in communities.iter().zip(configs) {
        let (Some(l), Some(z)) = (labels.get(&c.id), embeddings.get(&c.id)) else {
            return Err(Error::Precondition(format!(
                "community {} lacks a label or an embedding; rerun label and embed",
                c.id
            )));
        };
        set.ids.push(c.id);
        set.configs.push(conf);
        set.labels.push(*l);
        set.embeddings.push(z.clone());
    }
    Ok(set)
}

pub fn stage_train_gan(cfg: &RunConfig) -> Result<Notes> {
    let seed = cfg.seed()?;
    let mut notes = Notes::new();
    let set = training_set(cfg, &mut notes)?;
    let excellent = set.of(QualityLabel::Excellent);
    let terrible = set.of(QualityLabel::Terrible);
    if excellent.is_empty() || terrible.is_empty() {
        return Err(Error::Precondition(format!(
            "training needs both classes, found {} excellent and {} terrible",
            excellent.len(),
            terrible.len()
        )));
    }
    ensure_dir(&path_in(cfg, "checkpoints"))?;
    let gan = train_gan(&excellent, &terrible, &set.embeddings, &cfg.gan, seed)?;
    gan.model
        .checkpoint(seed, gan.log.records.len() as u64)?
        .save(&path_in(cfg, "checkpoints/gan.json"))?;
    write_text(&path_in(cfg, "gan_log.csv"), &gan.log.to_csv())?;
    if let Some(it) = gan.diverged_at {
        return Err(Error::Diverged {
            stage: "gan",
            iteration: it,
        });
    }
    if let Some(last) = gan.log.records.last() {
        notes.push(format!(
            "gan trained for {} iterations: d_loss {:.4}, g_loss {:.4}, D(E) {:.3}, D(F) {:.3}, D(T) {:.3}",
            gan.log.records.len(),
            last.d_loss,
            last.g_loss,
            last.mean_d_excellent,
            last.mean_d_generated,
            last.mean_d_terrible
        ));
    }
    let latent = set.embeddings[0].len();
    let vae = baseline_vae(&excellent, latent, &cfg.vae, seed)?;
    vae.model
        .checkpoint(seed, vae.log.epochs.len() as u64)?
        .save(&path_in(cfg, "checkpoints/vae.json"))?;
    let mut log = String::from("epoch,reconstruction,kl\n");
    for (e, l) in vae.log.epochs.iter().enumerate() {
        log.push_str(&format!("{e},{},{}\n", l.reconstruction, l.kl));
    }
    write_text(&path_in(cfg, "vae_log.csv"), &log)?;
    if let Some(epoch) = vae.diverged_at {
        return Err(Error::Diverged {
            stage: "vae",
            iteration: epoch,
        });
    }
    notes.push(format!(
        "vae baseline trained for {} epochs",
        vae.log.epochs.len()
    ));
    Ok(notes)
}

// ---------------------------------------------------------------- generate

/// Terrible communities selected for re-planning, in corpus order.
pub fn eval_targets(cfg: &RunConfig, set: &TrainingSet) -> Result<Vec<usize>> {
    let terrible: Vec<usize> = (0..set.ids.len())
        .filter(|&i| set.labels[i] == QualityLabel::Terrible)
        .collect();
    if terrible.is_empty() {
        return Err(Error::Precondition(
            "no terrible communities to re-plan".into(),
        ));
    }
    if terrible.len() <= cfg.eval_communities {
        return Ok(terrible);
    }
    let mut rng = SeededRng::derive(cfg.seed()?, "eval-targets");
    let mut pick: Vec<usize> = rng
        .sample_indices(terrible.len(), cfg.eval_communities)
        .into_iter()
        .map(|k| terrible[k])
        .collect();
    pick.sort_unstable();
    Ok(pick)
}

fn plans_csv(ids: &[u64], plans: &[LandUseConfig]) -> String {
    let mut out = String::from("community_id,channel,row,col,value\n");
    for (id, p) in ids.iter().zip(plans) {
        let n = p.resolution();
        for c in 0..p.channels() {
            for r in 0..n {
                for col in 0..n {
                    let v = p.get(c, r, col);
                    if v != 0.0 {
                        out.push_str(&format!("{id},{c},{r},{col},{v}\n"));
                    }
                }
            }
        }
    }
    out
}

fn read_plans(cfg: &RunConfig, method: &str, ids: &[u64]) -> Result<Vec<LandUseConfig>> {
    let path = path_in(cfg, &format!("generated/{method}.csv"));
    if !path.exists() {
        return Err(Error::MissingInput(path));
    }
    let slot: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut plans = vec![LandUseConfig::zeros(cfg.categories, cfg.resolution); ids.len()];
    let mut reader = csv::Reader::from_path(&path)?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Ingest {
            path: path.clone(),
            line: Some(i as u64 + 2),
            detail: "malformed plan row".into(),
        };
        let int = |k: usize| {
            rec.get(k)
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(bad)
        };
        let id = rec
            .get(0)
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(bad)?;
        let (c, r, col) = (int(1)?, int(2)?, int(3)?);
        let v: f64 = rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let k = *slot.get(&id).ok_or_else(bad)?;
        if c >= cfg.categories
            || r >= cfg.resolution
            || col >= cfg.resolution
            || !(v >= 0.0 && v.is_finite())
        {
            return Err(bad());
        }
        plans[k].add(c, r, col, v);
    }
    Ok(plans)
}

fn read_targets(cfg: &RunConfig) -> Result<Vec<u64>> {
    read_text(&path_in(cfg, "generated/targets.csv"))?
        .lines()
        .skip(1)
        .map(|l| {
            l.trim().parse::<u64>().map_err(|_| Error::Ingest {
                path: path_in(cfg, "generated/targets.csv"),
                line: None,
                detail: format!("bad community id {l:?}"),
            })
        })
        .collect()
}

pub fn stage_generate(cfg: &RunConfig) -> Result<Notes> {
    let seed = cfg.seed()?;
    let mut notes = Notes::new();
    let set = training_set(cfg, &mut notes)?;
    let targets = eval_targets(cfg, &set)?;
    let gan = GanModel::from_checkpoint(&Checkpoint::load(
        &path_in(cfg, "checkpoints/gan.json"),
        GAN_CHECKPOINT_KIND,
    )?)?;
    let vae = PlanVae::from_checkpoint(&Checkpoint::load(
        &path_in(cfg, "checkpoints/vae.json"),
        VAE_CHECKPOINT_KIND,
    )?)?;
    let latent = set.embeddings[0].len();
    let control = GanModel::init(&cfg.gan, latent, cfg.categories, cfg.resolution, seed)?;
    let excellent = set.of(QualityLabel::Excellent);
    let avg = baseline_avg(&excellent)?;
    let max = baseline_max(&excellent)?;

    let ids: Vec<u64> = targets.iter().map(|&i| set.ids[i]).collect();
    let zs: Vec<&[f64]> = targets
        .iter()
        .map(|&i| set.embeddings[i].as_slice())
        .collect();
    let run = |f: &(dyn Fn(&[f64]) -> Result<LandUseConfig> + Sync)| -> Result<Vec<LandUseConfig>> {
        zs.par_iter().map(|z| f(z)).collect()
    };
    let by_method: Vec<(&str, Vec<LandUseConfig>)> = vec![
        ("LUCGAN", run(&|z| gan.generator.generate(z))?),
        ("VAE", run(&|z| vae.generate(z))?),
        ("AVG", vec![avg; ids.len()]),
        ("MAX", vec![max; ids.len()]),
        (CONTROL, run(&|z| control.generator.generate(z))?),
    ];
    ensure_dir(&path_in(cfg, "generated"))?;
    let mut t = String::from("community_id\n");
    for id in &ids {
        t.push_str(&format!("{id}\n"));
    }
    write_text(&path_in(cfg, "generated/targets.csv"), &t)?;
    for (name, plans) in &by_method {
        write_text(
            &path_in(cfg, &format!("generated/{name}.csv")),
            &plans_csv(&ids, plans),
        )?;
    }
    notes.push(format!(
        "generated plans for {} terrible communities",
        ids.len()
    ));
    Ok(notes)
}

// ---------------------------------------------------------------- score

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub method: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

fn summarize(method: &str, scores: &[f64]) -> ScoreSummary {
    ScoreSummary {
        method: method.to_string(),
        mean: scores.iter().sum::<f64>() / scores.len().max(1) as f64,
        min: scores.iter().cloned().fold(f64::INFINITY, f64::min),
        max: scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        count: scores.len(),
    }
}

fn scores_csv(rows: &[ScoreSummary]) -> String {
    let mut out = String::from("method,mean_score,min_score,max_score,count\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method, r.mean, r.min, r.max, r.count
        ));
    }
    out
}

pub fn stage_score(cfg: &RunConfig) -> Result<Notes> {
    let seed = cfg.seed()?;
    let mut notes = Notes::new();
    let set = training_set(cfg, &mut notes)?;
    let x: Vec<Vec<f64>> = set.configs.iter().map(scoring_features).collect();
    let y: Vec<bool> = set.labels.iter().map(|l| l.is_excellent()).collect();
    let model = rf_train(&x, &y, &cfg.forest, seed)?;
    ensure_dir(&path_in(cfg, "checkpoints"))?;
    model.save(&path_in(cfg, "checkpoints/scoring.json"))?;
    if let Some(acc) = model.oob_accuracy {
        notes.push(format!("scoring forest out-of-bag accuracy {acc:.4}"));
    }
    let ids = read_targets(cfg)?;
    let score_all = |plans: &[LandUseConfig]| -> Result<Vec<f64>> {
        plans
            .iter()
            .map(|p| model.score_features(&scoring_features(p)))
            .collect()
    };
    let mut rows = Vec::new();
    for m in METHODS {
        rows.push(summarize(m, &score_all(&read_plans(cfg, m, &ids)?)?));
    }
    write_text(&path_in(cfg, "scores.csv"), &scores_csv(&rows))?;

    let slot: HashMap<u64, usize> = set.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let originals: Vec<LandUseConfig> =
        ids.iter().map(|id| set.configs[slot[id]].clone()).collect();
    let reference = vec![
        summarize("TERRIBLE", &score_all(&originals)?),
        summarize("EXCELLENT", &score_all(&set.of(QualityLabel::Excellent))?),
        summarize(CONTROL, &score_all(&read_plans(cfg, CONTROL, &ids)?)?),
    ];
    write_text(
        &path_in(cfg, "reference_scores.csv"),
        &scores_csv(&reference),
    )?;
    for r in rows.iter().chain(&reference) {
        notes.push(format!("{:<9} mean score {:.4}", r.method, r.mean));
    }
    Ok(notes)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreSummary>> {
    let text = read_text(path)?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Ingest {
                path: path.to_path_buf(),
                line: None,
                detail: format!("malformed score row {l:?}"),
            };
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(ScoreSummary {
                method: f[0].to_string(),
                mean: num(f[1])?,
                min: num(f[2])?,
                max: num(f[3])?,
                count: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- report

#[derive(Serialize)]
struct Report {
    seed: u64,
    communities: usize,
    excellent: usize,
    terrible: usize,
    planted_agreement: Option<f64>,
    scoring_oob_accuracy: Option<f64>,
    scores: Vec<ScoreSummary>,
    reference_scores: Vec<ScoreSummary>,
    representative_community: u64,
    proportions: BTreeMap<String, Vec<f64>>,
    files: Vec<String>,
}

fn summed(plans: &[LandUseConfig]) -> LandUseConfig {
    let (m, n) = (plans[0].channels(), plans[0].resolution());
    let mut acc = vec![0.0; m * n * n];
    for p in plans {
        for (a, v) in acc.iter_mut().zip(p.data()) {
            *a += v;
        }
    }
    LandUseConfig::from_data(m, n, acc).expect("sum of valid plans")
}

/// Up to `k` rows per label, sampled with a fixed stream and kept in corpus
/// order within each label.
pub fn sample_embeddings(
    set: &TrainingSet,
    k: usize,
    seed: u64,
) -> Vec<(ContextEmbedding, Option<QualityLabel>)> {
    let mut rows = Vec::new();
    for wanted in [QualityLabel::Excellent, QualityLabel::Terrible] {
        let pool: Vec<usize> = (0..set.ids.len())
            .filter(|&i| set.labels[i] == wanted)
            .collect();
        let mut pick: Vec<usize> = if pool.len() <= k {
            pool
        } else {
            let mut rng = SeededRng::derive(seed, &format!("embedding-sample/{}", wanted.as_str()));
            rng.sample_indices(pool.len(), k)
                .into_iter()
                .map(|j| pool[j])
                .collect()
        };
        pick.sort_unstable();
        for i in pick {
            rows.push((
                ContextEmbedding {
                    community_id: set.ids[i],
                    mode: EmbeddingMode::Mean,
                    z: set.embeddings[i].clone(),
                },
                Some(wanted),
            ));
        }
    }
    rows
}

pub fn stage_report(cfg: &RunConfig) -> Result<Notes> {
    let seed = cfg.seed()?;
    let mut notes = Notes::new();
    let set = training_set(cfg, &mut notes)?;
    let ids = read_targets(cfg)?;
    let scores = read_scores(&path_in(cfg, "scores.csv"))?;
    let reference = read_scores(&path_in(cfg, "reference_scores.csv"))?;
    let model = RandomForestModel::load(&path_in(cfg, "checkpoints/scoring.json"))?;
    let mut files = vec![
        "scores.csv".to_string(),
        "reference_scores.csv".to_string(),
        "proportions.csv".to_string(),
        "embeddings.csv".to_string(),
    ];

    let mut proportions = BTreeMap::new();
    let mut prop_csv = String::from("method");
    for c in 0..cfg.categories {
        prop_csv.push_str(&format!(",{}", crate::geodata::POI_CATEGORIES[c]));
    }
    prop_csv.push('\n');
    ensure_dir(&path_in(cfg, "rasters"))?;
    for m in METHODS {
        let plans = read_plans(cfg, m, &ids)?;
        let p = poi_proportions(&summed(&plans));
        prop_csv.push_str(m);
        for v in &p {
            prop_csv.push_str(&format!(",{v}"));
        }
        prop_csv.push('\n');
        proportions.insert(m.to_string(), p);

        let rep = &plans[0];
        let merged = format!("rasters/merged_{m}.ppm");
        write_bytes(
            &path_in(cfg, &merged),
            &merged_raster(&merge_dominant(rep), cfg.raster_scale),
        )?;
        files.push(merged);
        for c in 0..cfg.categories {
            let name = format!("rasters/channel_{m}_{c}.ppm");
            write_bytes(
                &path_in(cfg, &name),
                &channel_raster(rep, c, cfg.raster_scale),
            )?;
            files.push(name);
        }
    }
    write_text(&path_in(cfg, "proportions.csv"), &prop_csv)?;
    write_embeddings_csv(
        &path_in(cfg, "embeddings.csv"),
        &sample_embeddings(&set, cfg.embedding_sample, seed),
    )?;

    let labels = read_labels(cfg)?;
    let excellent = labels.iter().filter(|r| r.label.is_excellent()).count();
    let report = Report {
        seed,
        communities: set.ids.len(),
        excellent,
        terrible: labels.len() - excellent,
        planted_agreement: planted_agreement(cfg, &labels)?,
        scoring_oob_accuracy: model.oob_accuracy,
        scores,
        reference_scores: reference,
        representative_community: ids[0],
        proportions,
        files,
    };
    write_text(
        &path_in(cfg, "report.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    notes.push(format!(
        "report written to {}",
        path_in(cfg, "report.json").display()
    ));
    Ok(notes)
}

/// Flattened rows of `plans`, for callers that need a matrix view.
pub fn plan_matrix(plans: &[LandUseConfig]) -> Result<Tensor> {
    let rows: Vec<&[f64]> = plans.iter().map(|p| p.data()).collect();
    Tensor::stack_rows(&rows)
}
