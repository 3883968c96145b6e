use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use super::{Pipeline, RunConfig};
use crate::catalog::{assign_mission_class, select_rsos, MissionClass, MissionSource, SatCat};
use crate::error::{Error, Result};
use crate::eval::report::{temporal_wide_csv, write_table, GridRecord, TemporalRecord};
use crate::eval::{
    chi_square_2x2, diff_series, element_correlations, element_mean_change, grid_search, is_communications,
    mission_distribution, monthly_counts, object_seed, temporal_window_eval, ConfusionCounts, ContingencyTable2x2,
    Detector, GridSpec, LabeledRows, PeriodCounts, PeriodWindow,
};
use crate::iforest::IForestConfig;
use crate::nn::{store, train, AnomalyVerdict, ModelConfig, ModelKind, INPUT_DIM};
use crate::oracle::{label_population, write_labels_csv};
use crate::synth::{generate, write_corpus, CorpusFiles, ScenarioConfig};
use crate::tle::fetch::{CatalogClient, UreqTransport};
use crate::tle::{group_records, load_tle_file, Element, EphemerisSeries, IngestReport, SeriesMap, TleRecord};
use crate::util::{sha256_hex, write_atomic};

pub const INGEST_DIR: &str = "ingest";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const SELECTED_FILE: &str = "selected.csv";

fn rfc3339(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn element_columns(prefix: &str) -> impl Iterator<Item = String> + '_ {
    Element::ALL.iter().map(move |e| format!("{prefix}{}", e.name()))
}

/// One row of the selection table written by `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedObject {
    pub norad_id: u32,
    pub name: String,
    pub country: String,
    pub object_type: String,
    pub mission_class: String,
    pub observations: usize,
}

impl SelectedObject {
    pub fn mission(&self) -> MissionClass {
        self.mission_class.parse().unwrap_or(MissionClass::Unidentified)
    }
}

/// Ingested series plus the selected population.
pub struct Corpus {
    pub series: SeriesMap,
    pub selected: Vec<SelectedObject>,
}

impl Corpus {
    pub fn ids(&self) -> Vec<u32> {
        self.selected.iter().map(|s| s.norad_id).collect()
    }

    fn series(&self, id: u32) -> Result<&EphemerisSeries> {
        self.series
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("selected object {id} has no series")))
    }
}

fn records_path(p: &Pipeline) -> PathBuf {
    p.out_dir().join(INGEST_DIR).join(RECORDS_FILE)
}

fn selected_path(p: &Pipeline) -> PathBuf {
    p.out_dir().join(INGEST_DIR).join(SELECTED_FILE)
}

pub fn load_corpus(p: &Pipeline) -> Result<Corpus> {
    let rec_path = records_path(p);
    let file = std::fs::File::open(&rec_path)
        .map_err(|e| Error::invalid(format!("{}: {e} (run ingest first)", rec_path.display())))?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&rec_path, e))?;
        if !line.is_empty() {
            records.push(serde_json::from_str::<TleRecord>(&line).map_err(|e| Error::invalid(e.to_string()))?);
        }
    }
    let (series, _) = group_records(records);
    let sel_path = selected_path(p);
    let mut rdr = csv::Reader::from_path(&sel_path)?;
    let selected = rdr.deserialize().collect::<std::result::Result<Vec<SelectedObject>, _>>()?;
    Ok(Corpus { series, selected })
}

pub enum IngestSource {
    /// The `data.tle` path of the configuration.
    Configured,
    TleFile(PathBuf),
    Fetch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub report: IngestReport,
    pub objects: usize,
    pub selected: usize,
}

pub fn cmd_ingest(p: &Pipeline, source: IngestSource) -> Result<IngestSummary> {
    let cfg = p.config();
    let satcat_path = cfg
        .data
        .satcat
        .as_ref()
        .ok_or_else(|| Error::Config("data.satcat is required for selection".into()))?;
    let satcat = SatCat::load(satcat_path)?;
    let mut manifest = p.manifest("ingest");
    manifest.add_input(satcat_path)?;

    let (series, report) = match source {
        IngestSource::Fetch => {
            let client_cfg = cfg
                .data
                .fetch
                .clone()
                .ok_or_else(|| Error::Config("--fetch needs a [data.fetch] section".into()))?;
            let client = CatalogClient::new(client_cfg, UreqTransport::default())?;
            let ids: Vec<u32> = satcat
                .entries()
                .filter(|e| cfg.selection.owner_codes.contains(&e.country_code))
                .filter(|e| !cfg.selection.excluded_object_types.contains(&e.object_type))
                .map(|e| e.norad_id)
                .collect();
            let start = cfg.windows.iter().map(|w| w.start).min().expect("validated windows");
            let end = cfg
                .windows
                .iter()
                .map(|w| w.end)
                .chain([cfg.selection.activity_window.1])
                .max()
                .expect("validated windows");
            client.fetch_window(&ids, start, end)?
        }
        other => {
            let path = match other {
                IngestSource::TleFile(p) => p,
                _ => cfg
                    .data
                    .tle
                    .clone()
                    .ok_or_else(|| Error::Config("no TLE source: pass --tle, --fetch or set data.tle".into()))?,
            };
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
            manifest.add_input(&path)?;
            load_tle_file(&path)?
        }
    };

    let load_missions = |path: &Option<PathBuf>, m: &mut RunManifest| -> Result<MissionSource> {
        match path {
            Some(path) => {
                m.add_input(path)?;
                MissionSource::load(path)
            }
            None => Ok(MissionSource::default()),
        }
    };
    let primary = load_missions(&cfg.data.missions_primary, &mut manifest)?;
    let secondary = load_missions(&cfg.data.missions_secondary, &mut manifest)?;

    let ids = select_rsos(&satcat, &series, &cfg.selection);
    let selected: Vec<SelectedObject> = ids
        .iter()
        .map(|&id| {
            let entry = satcat.get(id).expect("selection requires a catalog entry");
            SelectedObject {
                norad_id: id,
                name: entry.object_name.clone(),
                country: entry.country_code.clone(),
                object_type: format!("{:?}", entry.object_type).to_uppercase(),
                mission_class: assign_mission_class(id, &primary, &secondary).label().to_string(),
                observations: series[&id].len(),
            }
        })
        .collect();

    let dir = p.stage_dir(&[INGEST_DIR])?;
    let mut text = String::new();
    for s in series.values() {
        for r in &s.observations {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
    }
    write_atomic(&dir.join(RECORDS_FILE), text.as_bytes())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &selected {
        w.serialize(s)?;
    }
    if selected.is_empty() {
        w.write_record(["norad_id", "name", "country", "object_type", "mission_class", "observations"])?;
    }
    write_atomic(
        &dir.join(SELECTED_FILE),
        &w.into_inner().map_err(|e| Error::Serde(e.to_string()))?,
    )?;
    write_atomic(
        &dir.join("ingest_report.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    manifest.outputs = vec![RECORDS_FILE.into(), SELECTED_FILE.into(), "ingest_report.json".into()];
    manifest.write(&dir)?;
    info!(
        "ingested {} records for {} objects; {} selected",
        report.records_parsed,
        series.len(),
        selected.len()
    );
    Ok(IngestSummary {
        report,
        objects: series.len(),
        selected: selected.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSummary {
    pub window: String,
    pub tables: usize,
    pub outliers: usize,
}

pub fn cmd_label(p: &Pipeline, window: Option<&str>) -> Result<LabelSummary> {
    let cfg = p.config();
    let window = cfg.window(window.unwrap_or(&cfg.label_window))?.clone();
    let corpus = load_corpus(p)?;
    let subset: SeriesMap = corpus
        .ids()
        .into_iter()
        .filter_map(|id| corpus.series.get(&id).map(|s| (id, s.clone())))
        .collect();
    let tables = p.install(|| label_population(&subset, &Element::ALL, Some((window.start, window.end))));
    let dir = p.stage_dir(&["labels", &window.name])?;
    let mut buf = Vec::new();
    write_labels_csv(&tables, &mut buf)?;
    write_atomic(&dir.join("labels.csv"), &buf)?;
    let mut manifest = p.manifest("label");
    manifest.add_input(&records_path(p))?;
    manifest.add_input(&selected_path(p))?;
    manifest.outputs = vec!["labels.csv".into()];
    manifest.write(&dir)?;
    Ok(LabelSummary {
        window: window.name,
        tables: tables.len(),
        outliers: tables.iter().map(|t| t.outlier_count()).sum(),
    })
}

/// Digest of everything a trained model depends on.
pub fn training_digest(config: &ModelConfig, rows: &[[f64; INPUT_DIM]]) -> String {
    let mut bytes = serde_json::to_vec(config).expect("model config serializes");
    for r in rows {
        for v in r {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

pub fn model_dir(p: &Pipeline, window: &str) -> PathBuf {
    p.out_dir().join("models").join(window)
}

pub fn model_path(dir: &Path, norad_id: u32) -> PathBuf {
    dir.join(format!("{norad_id}.json"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Trained,
    UpToDate,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRecord {
    pub norad_id: u32,
    pub status: TrainStatus,
    pub rows: usize,
    pub final_loss: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainSummary {
    pub window: String,
    pub trained: usize,
    pub up_to_date: usize,
    pub failures: Vec<(u32, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub window: Option<String>,
    pub force: bool,
}

fn train_one(p: &Pipeline, dir: &Path, window: &PeriodWindow, series: &EphemerisSeries, force: bool) -> TrainRecord {
    let cfg = p.config();
    let id = series.norad_id;
    let rows = series.window(window.start, window.end).matrix();
    let model_cfg = ModelConfig {
        seed: object_seed(cfg.seed, id),
        ..cfg.model.clone()
    };
    let digest = training_digest(&model_cfg, &rows);
    let path = model_path(dir, id);
    let record = |status, final_loss, error: String| TrainRecord {
        norad_id: id,
        status,
        rows: rows.len(),
        final_loss,
        error,
    };
    if !force && path.exists() {
        if let Ok(existing) = store::load(&path) {
            if existing.training.input_digest.as_deref() == Some(digest.as_str()) {
                return record(TrainStatus::UpToDate, Some(existing.training.final_loss), String::new());
            }
        }
    }
    let outcome = train(&rows, &model_cfg).and_then(|mut model| {
        model.training.input_digest = Some(digest.clone());
        store::save(&model, Some(id), &path)?;
        Ok(model.training.final_loss)
    });
    match outcome {
        Ok(loss) => record(TrainStatus::Trained, Some(loss), String::new()),
        Err(e) => {
            warn!("object {id}: training failed: {e}");
            record(TrainStatus::Failed, None, e.to_string())
        }
    }
}

/// Trains one model per selected object. Objects whose model file already
/// matches the current inputs are skipped unless `force` is set; failures
/// are collected rather than aborting the run.
pub fn cmd_train(p: &Pipeline, opts: &TrainOptions) -> Result<TrainSummary> {
    let cfg = p.config();
    let window = cfg.window(opts.window.as_deref().unwrap_or(&cfg.train_window))?.clone();
    let corpus = load_corpus(p)?;
    let dir = p.stage_dir(&["models", &window.name])?;
    let series: Vec<&EphemerisSeries> = corpus.ids().into_iter().map(|id| corpus.series(id)).collect::<Result<_>>()?;
    let records: Vec<TrainRecord> = p.install(|| {
        series
            .par_iter()
            .map(|s| train_one(p, &dir, &window, s, opts.force))
            .collect()
    });

    let mut summary = TrainSummary {
        window: window.name.clone(),
        ..Default::default()
    };
    for r in &records {
        match r.status {
            TrainStatus::Trained => summary.trained += 1,
            TrainStatus::UpToDate => summary.up_to_date += 1,
            TrainStatus::Failed => summary.failures.push((r.norad_id, r.error.clone())),
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &records {
        w.serialize(r)?;
    }
    write_atomic(&dir.join("train_log.csv"), &w.into_inner().map_err(|e| Error::Serde(e.to_string()))?)?;

    let mut manifest = p.manifest("train");
    manifest.add_input(&records_path(p))?;
    manifest.add_input(&selected_path(p))?;
    manifest.outputs = vec!["train_log.csv".into(), "<norad_id>.json".into()];
    manifest.failures = summary.failures.iter().map(|(id, e)| format!("{id}: {e}")).collect();
    manifest.write(&dir)?;
    info!(
        "{}: trained {}, up to date {}, failed {}",
        window.name,
        summary.trained,
        summary.up_to_date,
        summary.failures.len()
    );
    if !records.is_empty() && summary.failures.len() == records.len() {
        return Err(Error::invalid(format!("training failed for all {} objects", records.len())));
    }
    Ok(summary)
}

/// Scores the complete series of every selected object with its model
/// from `model_window`. Objects without a usable model are reported as
/// failures.
fn score_all(p: &Pipeline, corpus: &Corpus, model_window: &str) -> (BTreeMap<u32, Vec<AnomalyVerdict>>, Vec<(u32, String)>) {
    let dir = model_dir(p, model_window);
    let outcomes: Vec<(u32, Result<Vec<AnomalyVerdict>>)> = p.install(|| {
        corpus
            .ids()
            .par_iter()
            .map(|&id| {
                let r = corpus
                    .series(id)
                    .and_then(|s| store::load(&model_path(&dir, id)).and_then(|m| m.score_series(s)));
                (id, r)
            })
            .collect()
    });
    let mut verdicts = BTreeMap::new();
    let mut failures = Vec::new();
    for (id, r) in outcomes {
        match r {
            Ok(v) => {
                verdicts.insert(id, v);
            }
            Err(e) => {
                warn!("object {id}: not scored: {e}");
                failures.push((id, e.to_string()));
            }
        }
    }
    (verdicts, failures)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub window: String,
    pub objects: usize,
    pub observations: usize,
    pub flagged: usize,
    pub failures: Vec<(u32, String)>,
}

pub fn cmd_score(p: &Pipeline, window: &str, model_window: Option<&str>) -> Result<ScoreSummary> {
    let cfg = p.config();
    let window = cfg.window(window)?.clone();
    let model_window = cfg.window(model_window.unwrap_or(&cfg.train_window))?.name.clone();
    let corpus = load_corpus(p)?;
    let (verdicts, failures) = score_all(p, &corpus, &model_window);
    if verdicts.is_empty() && !failures.is_empty() {
        return Err(Error::invalid(format!(
            "no models could be applied from window {model_window} (run train first)"
        )));
    }

    let mut header = vec!["norad_id".to_string(), "epoch".to_string()];
    header.extend(element_columns("error_"));
    header.extend(element_columns("flag_"));
    header.extend(["latent_knn_distance".to_string(), "any_flag".to_string()]);
    let mut rows = Vec::new();
    let mut rate_rows = Vec::new();
    let (mut observations, mut flagged) = (0, 0);
    for (id, vs) in &verdicts {
        let (mut n, mut f) = (0usize, 0usize);
        for v in vs.iter().filter(|v| window.contains(v.epoch)) {
            let mut row = vec![id.to_string(), rfc3339(v.epoch)];
            row.extend(v.errors.iter().map(|e| e.to_string()));
            row.extend(v.flags.iter().map(|&b| (b as u8).to_string()));
            row.push(v.latent_knn_distance.to_string());
            row.push((v.any_flag as u8).to_string());
            rows.push(row);
            n += 1;
            f += v.any_flag as usize;
        }
        let rate = (n > 0).then(|| f as f64 / n as f64);
        rate_rows.push(vec![id.to_string(), f.to_string(), n.to_string(), opt_num(rate)]);
        observations += n;
        flagged += f;
    }
    let dir = p.stage_dir(&["scores", &window.name])?;
    write_rows(&dir.join("verdicts.csv"), &header, rows)?;
    let rate_header: Vec<String> = ["norad_id", "flagged", "total", "rate"].map(String::from).to_vec();
    write_rows(&dir.join("rates.csv"), &rate_header, rate_rows)?;

    let mut manifest = p.manifest("score");
    manifest.add_input(&records_path(p))?;
    manifest.add_input(&selected_path(p))?;
    manifest.outputs = vec!["verdicts.csv".into(), "rates.csv".into()];
    manifest.failures = failures.iter().map(|(id, e)| format!("{id}: {e}")).collect();
    manifest.write(&dir)?;
    Ok(ScoreSummary {
        window: window.name,
        objects: verdicts.len(),
        observations,
        flagged,
        failures,
    })
}

/// The three model families compared by the study, built from the run
/// configuration.
pub fn study_detectors(model: &ModelConfig, forest: &IForestConfig) -> Vec<Detector> {
    vec![
        Detector::IsolationForest(forest.clone()),
        Detector::Autoencoder(ModelConfig {
            kind: ModelKind::Autoencoder,
            ..model.clone()
        }),
        Detector::Autoencoder(ModelConfig {
            kind: ModelKind::AnchorAe,
            ..model.clone()
        }),
    ]
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Grid file, or `None` to skip the search. The literal `study` selects
    /// the built-in search space.
    pub grid: Option<PathBuf>,
    pub temporal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AgreementRecord {
    norad_id: String,
    family: &'static str,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    accuracy: f64,
    f1: f64,
}

impl AgreementRecord {
    fn new(norad_id: String, family: &'static str, c: &ConfusionCounts) -> Self {
        AgreementRecord {
            norad_id,
            family,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            accuracy: c.accuracy(),
            f1: c.f1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EvaluateSummary {
    pub agreement_f1: Option<f64>,
    pub grid_rows: usize,
    pub temporal_rows: usize,
    pub temporal_skipped: usize,
    pub failures: Vec<(u32, String)>,
}

fn labeled_window(corpus: &Corpus, ids: &[u32], window: &PeriodWindow) -> Vec<Result<LabeledRows>> {
    ids.par_iter()
        .map(|&id| LabeledRows::from_series(&corpus.series(id)?.window(window.start, window.end)))
        .collect()
}

/// Trained models (and an isolation forest on the same rows) against IQR
/// labels over the training window.
fn evaluate_agreement(p: &Pipeline, corpus: &Corpus, dir: &Path, summary: &mut EvaluateSummary) -> Result<Vec<String>> {
    let cfg = p.config();
    let window = cfg.window(&cfg.train_window)?;
    let mdir = model_dir(p, &window.name);
    if !mdir.exists() {
        warn!("no models for window {}; skipping label agreement", window.name);
        return Ok(Vec::new());
    }
    let ids = corpus.ids();
    let forest = Detector::IsolationForest(cfg.iforest.clone());
    let outcomes: Vec<(u32, Result<(ConfusionCounts, ConfusionCounts)>)> = p.install(|| {
        let data = labeled_window(corpus, &ids, window);
        ids.par_iter()
            .zip(data)
            .map(|(&id, d)| {
                let r = d.and_then(|d| {
                    let model = store::load(&model_path(&mdir, id))?;
                    let ae = crate::eval::confusion_rows(&d.labels, &model.flag_rows(&d.rows)?)?;
                    let iforest = crate::eval::evaluate_detector(&forest, &d, cfg.seed)?;
                    Ok((ae, iforest))
                });
                (id, r)
            })
            .collect()
    });
    let model_family = Detector::Autoencoder(cfg.model.clone()).family().name();
    let mut records = Vec::new();
    let (mut total_ae, mut total_if) = (ConfusionCounts::default(), ConfusionCounts::default());
    for (id, r) in outcomes {
        match r {
            Ok((ae, iforest)) => {
                records.push(AgreementRecord::new(id.to_string(), model_family, &ae));
                records.push(AgreementRecord::new(id.to_string(), "IF", &iforest));
                total_ae += ae;
                total_if += iforest;
            }
            Err(e) => summary.failures.push((id, e.to_string())),
        }
    }
    records.push(AgreementRecord::new("all".into(), model_family, &total_ae));
    records.push(AgreementRecord::new("all".into(), "IF", &total_if));
    summary.agreement_f1 = Some(total_ae.f1());
    write_table(dir, "agreement", &records)?;
    Ok(vec!["agreement.csv".into(), "agreement.jsonl".into()])
}

pub fn cmd_evaluate(p: &Pipeline, opts: &EvaluateOptions) -> Result<EvaluateSummary> {
    let cfg = p.config();
    let corpus = load_corpus(p)?;
    let dir = p.stage_dir(&["evaluate"])?;
    let mut manifest = p.manifest("evaluate");
    manifest.add_input(&records_path(p))?;
    manifest.add_input(&selected_path(p))?;
    let mut summary = EvaluateSummary::default();

    manifest.outputs.extend(evaluate_agreement(p, &corpus, &dir, &mut summary)?);

    if let Some(grid_path) = &opts.grid {
        let spec = if grid_path.as_os_str() == "study" {
            GridSpec::study()
        } else {
            let spec = GridSpec::load(grid_path).map_err(|e| match e {
                Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
                other => other,
            })?;
            manifest.add_input(grid_path)?;
            spec
        };
        let candidates = spec.candidates(&cfg.model, &cfg.iforest);
        let window = cfg.window(&cfg.train_window)?;
        let ids: Vec<u32> = corpus.ids().into_iter().take(cfg.evaluation.grid_objects).collect();
        let results = p.install(|| {
            let subset = labeled_window(&corpus, &ids, window)
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            grid_search(&candidates, &subset, cfg.seed)
        })?;
        let records: Vec<GridRecord> = results.iter().map(GridRecord::from).collect();
        write_table(&dir, "grid", &records)?;
        let best: Vec<_> = results.iter().filter(|r| r.rank == 1).collect();
        write_atomic(&dir.join("grid_best.json"), serde_json::to_string_pretty(&best)?.as_bytes())?;
        manifest
            .outputs
            .extend(["grid.csv", "grid.jsonl", "grid_best.json"].map(String::from));
        summary.grid_rows = records.len();
    }

    if opts.temporal {
        let detectors = study_detectors(&cfg.model, &cfg.iforest);
        let rows = p.install(|| temporal_window_eval(&detectors, &corpus.series, &corpus.ids(), &cfg.temporal, cfg.seed))?;
        let records: Vec<TemporalRecord> = rows.iter().map(TemporalRecord::from).collect();
        write_table(&dir, "temporal", &records)?;
        write_atomic(&dir.join("temporal_table.csv"), temporal_wide_csv(&rows).as_bytes())?;
        manifest
            .outputs
            .extend(["temporal.csv", "temporal.jsonl", "temporal_table.csv"].map(String::from));
        summary.temporal_rows = rows.len();
        summary.temporal_skipped = rows.iter().filter(|r| r.skipped.is_some()).count();
    }

    manifest.failures = summary.failures.iter().map(|(id, e)| format!("{id}: {e}")).collect();
    manifest.write(&dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, Default)]
pub struct StatsOptions {
    /// Window names compared by the chi-square test.
    pub chi2: Option<(String, String)>,
    pub monthly: bool,
    pub diffs: bool,
    pub corr: bool,
}

impl StatsOptions {
    pub fn all() -> Self {
        StatsOptions {
            chi2: None,
            monthly: true,
            diffs: true,
            corr: true,
        }
    }

    fn nothing_selected(&self) -> bool {
        self.chi2.is_none() && !self.monthly && !self.diffs && !self.corr
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StatsSummary {
    pub chi_square: Option<f64>,
    pub outputs: Vec<String>,
    pub failures: Vec<(u32, String)>,
}

#[derive(Serialize)]
struct Chi2Record<'a> {
    first_window: &'a str,
    second_window: &'a str,
    first_anomalies: u64,
    first_total: u64,
    second_anomalies: u64,
    second_total: u64,
    first_rate: f64,
    second_rate: f64,
    statistic_yates: f64,
    statistic_uncorrected: f64,
    dof: u32,
    p_value: f64,
    ln_p_value: f64,
    p_display: String,
}

#[derive(Serialize)]
struct RateRecord<'a> {
    window: &'a str,
    flagged: u64,
    total: u64,
    rate: Option<f64>,
}

#[derive(Serialize)]
struct MissionRecord {
    family: &'static str,
    mission: &'static str,
    count: u64,
    pct_of_all: f64,
    pct_of_family: f64,
}

fn period_counts(verdicts: &BTreeMap<u32, Vec<AnomalyVerdict>>, window: &PeriodWindow) -> PeriodCounts {
    let mut c = PeriodCounts { anomalies: 0, total: 0 };
    for v in verdicts.values().flatten().filter(|v| window.contains(v.epoch)) {
        c.total += 1;
        c.anomalies += v.any_flag as u64;
    }
    c
}

/// Hypothesis test, rates, monthly activity, differencing and
/// correlation analytics over verdicts from the training-window models.
pub fn cmd_stats(p: &Pipeline, opts: &StatsOptions) -> Result<StatsSummary> {
    let cfg = p.config();
    let opts = if opts.nothing_selected() { StatsOptions::all() } else { opts.clone() };
    let (first_name, second_name) = opts
        .chi2
        .clone()
        .unwrap_or_else(|| (cfg.stats.baseline.clone(), cfg.stats.leadup.clone()));
    let first = cfg.window(&first_name)?.clone();
    let second = cfg.window(&second_name)?.clone();
    let run_chi2 = opts.chi2.is_some() || (opts.monthly && opts.diffs && opts.corr);

    let corpus = load_corpus(p)?;
    let (verdicts, failures) = score_all(p, &corpus, &cfg.train_window);
    if verdicts.is_empty() {
        return Err(Error::invalid(format!(
            "no models could be applied from window {} (run train first)",
            cfg.train_window
        )));
    }
    let missions: BTreeMap<u32, MissionClass> = corpus.selected.iter().map(|s| (s.norad_id, s.mission())).collect();
    let dir = p.stage_dir(&["stats"])?;
    let mut summary = StatsSummary {
        failures,
        ..Default::default()
    };

    let rates: Vec<RateRecord> = cfg
        .windows
        .iter()
        .map(|w| {
            let c = period_counts(&verdicts, w);
            RateRecord {
                window: &w.name,
                flagged: c.anomalies,
                total: c.total,
                rate: (c.total > 0).then(|| c.anomalies as f64 / c.total as f64),
            }
        })
        .collect();
    write_table(&dir, "rates", &rates)?;
    summary.outputs.push("rates".into());

    if run_chi2 {
        let table = ContingencyTable2x2::new(period_counts(&verdicts, &first), period_counts(&verdicts, &second))?;
        match chi_square_2x2(&table) {
            Ok(r) => {
                let (fr, sr) = table.rate();
                let rec = Chi2Record {
                    first_window: &first.name,
                    second_window: &second.name,
                    first_anomalies: table.first.anomalies,
                    first_total: table.first.total,
                    second_anomalies: table.second.anomalies,
                    second_total: table.second.total,
                    first_rate: fr,
                    second_rate: sr,
                    statistic_yates: r.statistic,
                    statistic_uncorrected: r.uncorrected,
                    dof: r.dof,
                    p_value: r.p_value,
                    ln_p_value: r.ln_p_value,
                    p_display: r.p_display(),
                };
                write_table(&dir, "chi2", &[rec])?;
                summary.chi_square = Some(r.statistic);
                summary.outputs.push("chi2".into());
            }
            Err(e) => warn!("chi-square {first_name} vs {second_name} not computed: {e}"),
        }
    }

    if opts.monthly {
        let items: Vec<(DateTime<Utc>, &str, bool)> = verdicts
            .iter()
            .flat_map(|(id, vs)| {
                let label = missions[id].label();
                vs.iter().map(move |v| (v.epoch, label, v.any_flag))
            })
            .collect();
        let monthly = monthly_counts(items);
        write_table(&dir, "monthly", &monthly)?;
        let header: Vec<String> = ["series", "x", "y"].map(String::from).to_vec();
        write_rows(
            &dir.join("plot_monthly.csv"),
            &header,
            monthly
                .iter()
                .map(|m| vec![m.group.clone(), m.month.clone(), m.count.to_string()]),
        )?;

        let mut counts: BTreeMap<MissionClass, u64> = BTreeMap::new();
        for (id, vs) in &verdicts {
            let n = vs.iter().filter(|v| v.any_flag && second.contains(v.epoch)).count() as u64;
            *counts.entry(missions[id]).or_default() += n;
        }
        let mut shares = Vec::new();
        for (family, filter) in [
            ("all", (|_| true) as fn(MissionClass) -> bool),
            ("communications", is_communications as fn(MissionClass) -> bool),
        ] {
            shares.extend(mission_distribution(&counts, filter).into_iter().map(|s| MissionRecord {
                family,
                mission: s.mission.label(),
                count: s.count,
                pct_of_all: s.pct_of_all,
                pct_of_family: s.pct_of_family,
            }));
        }
        write_table(&dir, "missions", &shares)?;
        summary.outputs.extend(["monthly", "plot_monthly", "missions"].map(String::from));
    }

    if opts.diffs {
        let mut header = vec!["norad_id".to_string(), "epoch".to_string(), "anomalous".to_string()];
        header.extend(element_columns("raw_"));
        header.extend(element_columns("wrapped_"));
        let mut rows = Vec::new();
        let mut plot = Vec::new();
        for (id, vs) in &verdicts {
            let series = corpus.series(*id)?;
            let Ok(diffs) = diff_series(series) else { continue };
            for (d, v) in diffs.iter().zip(&vs[1..]) {
                let mut row = vec![id.to_string(), rfc3339(d.epoch), (v.any_flag as u8).to_string()];
                row.extend(d.raw.iter().map(|x| x.to_string()));
                row.extend(d.wrapped.iter().map(|x| x.to_string()));
                rows.push(row);
                if v.any_flag && second.contains(d.epoch) {
                    for e in Element::ALL {
                        plot.push(vec![
                            e.name().to_string(),
                            rfc3339(d.epoch),
                            d.wrapped[e.index()].to_string(),
                            id.to_string(),
                        ]);
                    }
                }
            }
        }
        write_rows(&dir.join("diffs.csv"), &header, rows)?;
        let plot_header: Vec<String> = ["series", "x", "y", "norad_id"].map(String::from).to_vec();
        write_rows(&dir.join("plot_anomaly_diffs.csv"), &plot_header, plot)?;

        let value_rows = corpus.ids().into_iter().flat_map(|id| {
            let m = missions[&id];
            corpus.series[&id]
                .observations
                .iter()
                .map(move |r| (m, r.epoch, r.elements.to_array()))
        });
        let changes = element_mean_change(value_rows, &first, &second);
        let change_header: Vec<String> = [
            "mission",
            "element",
            "baseline_n",
            "leadup_n",
            "baseline_mean",
            "leadup_mean",
            "percent_change",
        ]
        .map(String::from)
        .to_vec();
        write_rows(
            &dir.join("element_change.csv"),
            &change_header,
            changes.iter().flat_map(|c| {
                Element::ALL.iter().map(move |e| {
                    let j = e.index();
                    vec![
                        c.mission.label().to_string(),
                        e.name().to_string(),
                        c.baseline_n.to_string(),
                        c.leadup_n.to_string(),
                        opt_num(c.baseline_mean[j]),
                        opt_num(c.leadup_mean[j]),
                        opt_num(c.percent_change[j]),
                    ]
                })
            }),
        )?;
        summary
            .outputs
            .extend(["diffs", "plot_anomaly_diffs", "element_change"].map(String::from));
    }

    if opts.corr {
        let mut rows = Vec::new();
        for id in corpus.ids() {
            let m = missions[&id];
            for r in &corpus.series[&id].observations {
                if second.contains(r.epoch) {
                    if let Ok(regime) = cfg.stats.regimes.classify(r.elements.mean_motion) {
                        rows.push((m, regime, r.elements.to_array()));
                    }
                }
            }
        }
        let groups = element_correlations(rows);
        let header: Vec<String> = ["mission", "regime", "samples", "element_a", "element_b", "pearson"]
            .map(String::from)
            .to_vec();
        write_rows(
            &dir.join("correlations.csv"),
            &header,
            groups.iter().flat_map(|g| {
                Element::ALL.iter().flat_map(move |a| {
                    Element::ALL.iter().map(move |b| {
                        vec![
                            g.mission.label().to_string(),
                            g.regime.name().to_string(),
                            g.samples.to_string(),
                            a.name().to_string(),
                            b.name().to_string(),
                            opt_num(g.matrix[a.index()][b.index()]),
                        ]
                    })
                })
            }),
        )?;
        summary.outputs.push("correlations".into());
    }

    let mut manifest = p.manifest("stats");
    manifest.add_input(&records_path(p))?;
    manifest.add_input(&selected_path(p))?;
    manifest.outputs = summary.outputs.clone();
    manifest.failures = summary.failures.iter().map(|(id, e)| format!("{id}: {e}")).collect();
    manifest.write(&dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub files: CorpusFiles,
    pub objects: usize,
    pub observations: usize,
    pub injections: usize,
    pub anomalous_fraction: f64,
}

/// Generates a scenario corpus into `dir` with its manifest.
pub fn cmd_synth(scenario: &ScenarioConfig, dir: &Path, workers: usize) -> Result<SynthSummary> {
    scenario.validate()?;
    let threads = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let corpus = pool.install(|| generate(scenario))?;
    let files = write_corpus(&corpus, dir)?;
    let scenario_hash = sha256_hex(scenario.to_toml_string()?.as_bytes());
    let mut manifest = RunManifest::new("synth", &scenario_hash, scenario.seed, threads);
    manifest.outputs = [&files.tle, &files.masks, &files.injections, &files.satcat, &files.missions_primary, &files.missions_secondary]
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    manifest.write(dir)?;
    Ok(SynthSummary {
        objects: corpus.series.len(),
        observations: corpus.series.values().map(|s| s.len()).sum(),
        injections: corpus.injections.len(),
        anomalous_fraction: corpus.anomalous_fraction(),
        files,
    })
}

/// A run configuration reading a generated corpus.
pub fn corpus_run_config(files: &CorpusFiles, out_dir: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        out_dir: out_dir.to_path_buf(),
        ..Default::default()
    };
    cfg.data.tle = Some(files.tle.clone());
    cfg.data.satcat = Some(files.satcat.clone());
    cfg.data.missions_primary = Some(files.missions_primary.clone());
    cfg.data.missions_secondary = Some(files.missions_secondary.clone());
    cfg
}
