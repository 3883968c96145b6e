//! Synthetic corpora with known injected anomalies.
//!
//! Each object gets a noisy, linearly drifting baseline per element plus a
//! schedule of step, impulse and ramp offsets measured in units of that
//! element's noise σ. The injection masks are the ground truth.

mod format;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, NaiveDate, SecondsFormat, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use format::{format_tle, format_tle_text};

use crate::catalog::{MissionClass, ObjectType};
use crate::error::{Error, Result};
use crate::tle::{Element, EphemerisSeries, OrbitalElements, PackedExp, SeriesMap, TleRecord};
use crate::util::write_atomic;

const NANOS_PER_DAY: f64 = 86_400e9;
/// TLE epoch resolution: 1e-8 day.
const EPOCH_QUANTUM_NS: i64 = 864_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementBaseline {
    pub level: f64,
    pub noise_sigma: f64,
    #[serde(default)]
    pub drift_per_day: f64,
    /// Each object's level is drawn uniformly from `level ± level_spread`.
    #[serde(default)]
    pub level_spread: f64,
    /// Randomize the drift sign per object.
    #[serde(default)]
    pub random_drift_sign: bool,
}

impl ElementBaseline {
    pub const fn new(level: f64, noise_sigma: f64, drift_per_day: f64) -> Self {
        ElementBaseline {
            level,
            noise_sigma,
            drift_per_day,
            level_spread: 0.0,
            random_drift_sign: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baselines {
    pub mean_motion: ElementBaseline,
    pub eccentricity: ElementBaseline,
    pub inclination: ElementBaseline,
    pub raan: ElementBaseline,
    pub arg_perigee: ElementBaseline,
    pub mean_anomaly: ElementBaseline,
}

impl Baselines {
    pub fn get(&self, element: Element) -> &ElementBaseline {
        match element {
            Element::MeanMotion => &self.mean_motion,
            Element::Eccentricity => &self.eccentricity,
            Element::Inclination => &self.inclination,
            Element::Raan => &self.raan,
            Element::ArgPerigee => &self.arg_perigee,
            Element::MeanAnomaly => &self.mean_anomaly,
        }
    }

    pub fn get_mut(&mut self, element: Element) -> &mut ElementBaseline {
        match element {
            Element::MeanMotion => &mut self.mean_motion,
            Element::Eccentricity => &mut self.eccentricity,
            Element::Inclination => &mut self.inclination,
            Element::Raan => &mut self.raan,
            Element::ArgPerigee => &mut self.arg_perigee,
            Element::MeanAnomaly => &mut self.mean_anomaly,
        }
    }
}

impl Default for Baselines {
    /// A near-circular LEO object, angles kept away from the 0/360 seam.
    fn default() -> Self {
        Baselines {
            mean_motion: ElementBaseline::new(15.2, 2e-4, 0.0),
            eccentricity: ElementBaseline::new(1.5e-3, 2e-5, 0.0),
            inclination: ElementBaseline::new(82.5, 3e-3, 0.0),
            raan: ElementBaseline::new(120.0, 2e-2, 0.0),
            arg_perigee: ElementBaseline::new(90.0, 5e-2, 0.0),
            mean_anomaly: ElementBaseline::new(270.0, 5e-2, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cadence {
    pub per_day: f64,
    /// Each epoch moves by up to ± jitter/2 of the nominal spacing.
    #[serde(default)]
    pub jitter: f64,
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence {
            per_day: 2.0,
            jitter: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// Constant offset over every observation in the range.
    Step,
    /// Offset on the first observation in the range only.
    Impulse,
    /// Offset growing linearly from 1× to 2× the magnitude across the range.
    Ramp,
}

impl InjectionKind {
    pub const ALL: [InjectionKind; 3] = [InjectionKind::Step, InjectionKind::Impulse, InjectionKind::Ramp];

    pub fn name(self) -> &'static str {
        match self {
            InjectionKind::Step => "step",
            InjectionKind::Impulse => "impulse",
            InjectionKind::Ramp => "ramp",
        }
    }
}

/// Distribution of the unit-variance noise factors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    #[default]
    Gaussian,
    /// Uniform on ±√3, so no noise value lies beyond 1.5 IQR of the bulk.
    Uniform,
}

impl NoiseShape {
    fn sample(self, rng: &mut impl Rng) -> f64 {
        match self {
            NoiseShape::Gaussian => Normal::new(0.0, 1.0).expect("unit normal").sample(rng),
            NoiseShape::Uniform => rng.gen_range(-3f64.sqrt()..=3f64.sqrt()),
        }
    }
}

/// One scheduled anomaly. The range is half-open `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    /// Zero-based object index within the scenario.
    pub object: usize,
    pub element: Element,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub kind: InjectionKind,
    /// Offset size in units of the element's noise σ.
    pub magnitude: f64,
    #[serde(default)]
    pub negative: bool,
}

/// Randomly placed, non-overlapping injections covering a target fraction
/// of each object's observations inside `window` (whole span when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInjections {
    pub fraction: f64,
    pub min_magnitude: f64,
    pub max_magnitude: f64,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<InjectionKind>,
    #[serde(default = "default_min_length")]
    pub min_length: usize,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    #[serde(default)]
    pub elements: Option<Vec<Element>>,
    #[serde(default)]
    pub window: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

fn default_kinds() -> Vec<InjectionKind> {
    InjectionKind::ALL.to_vec()
}

fn default_min_length() -> usize {
    2
}

fn default_max_length() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDefaults {
    pub country: String,
    pub object_type: ObjectType,
    pub mission_classes: Vec<MissionClass>,
}

impl Default for ObjectDefaults {
    fn default() -> Self {
        ObjectDefaults {
            country: "CIS".into(),
            object_type: ObjectType::Payload,
            mission_classes: vec![
                MissionClass::Communications,
                MissionClass::NavigationGlobalPositioning,
                MissionClass::SurveillanceAndOtherMilitary,
                MissionClass::EarthScience,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub objects: usize,
    #[serde(default = "default_first_id")]
    pub first_norad_id: u32,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    #[serde(default)]
    pub cadence: Cadence,
    #[serde(default)]
    pub baseline: Baselines,
    /// Share of each element's noise variance drawn from one factor common
    /// to all six elements of an observation.
    #[serde(default)]
    pub noise_correlation: f64,
    #[serde(default)]
    pub noise_shape: NoiseShape,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default)]
    pub random_injections: Vec<RandomInjections>,
    #[serde(default)]
    pub catalog: ObjectDefaults,
}

fn default_first_id() -> u32 {
    90_001
}

fn utc(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

impl ScenarioConfig {
    /// Small scenario with no injections.
    pub fn quiet(seed: u64, objects: usize, start: DateTime<Utc>, observations: usize) -> Self {
        let cadence = Cadence::default();
        let days = observations as f64 / cadence.per_day;
        ScenarioConfig {
            seed,
            objects,
            first_norad_id: default_first_id(),
            start,
            end: start + Duration::nanoseconds((days * NANOS_PER_DAY).ceil() as i64),
            cadence,
            baseline: Baselines::default(),
            noise_correlation: 0.0,
            noise_shape: NoiseShape::Gaussian,
            injections: Vec::new(),
            random_injections: Vec::new(),
            catalog: ObjectDefaults::default(),
        }
    }

    /// Eight objects from mid-2016 to early 2024 with a quiet training era
    /// and elevated anomaly rates in the months before and after 2022-02-24.
    pub fn demo(seed: u64) -> Self {
        let mut baseline = Baselines::default();
        for e in Element::ALL {
            let b = baseline.get_mut(e);
            // a few σ of drift over the whole span
            b.drift_per_day = 3.0 * b.noise_sigma / 2740.0;
            b.random_drift_sign = true;
        }
        baseline.mean_motion.level_spread = 0.5;
        baseline.inclination.level_spread = 15.0;
        baseline.raan.level_spread = 60.0;
        let block = |fraction, window| RandomInjections {
            fraction,
            min_magnitude: 10.0,
            max_magnitude: 20.0,
            kinds: default_kinds(),
            min_length: 2,
            max_length: 6,
            elements: None,
            window: Some(window),
        };
        ScenarioConfig {
            seed,
            objects: 8,
            first_norad_id: default_first_id(),
            start: utc(2016, 8, 24),
            end: utc(2024, 2, 24),
            cadence: Cadence {
                per_day: 0.5,
                jitter: 0.2,
            },
            baseline,
            noise_correlation: 0.0,
            noise_shape: NoiseShape::Gaussian,
            injections: Vec::new(),
            random_injections: vec![
                block(0.01, (utc(2016, 8, 24), utc(2021, 8, 24))),
                block(0.08, (utc(2021, 8, 24), utc(2022, 2, 24))),
                block(0.04, (utc(2022, 2, 24), utc(2024, 2, 24))),
            ],
            catalog: ObjectDefaults::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn norad_id(&self, object: usize) -> u32 {
        self.first_norad_id + object as u32
    }

    /// Observation count per object.
    pub fn observations_per_object(&self) -> usize {
        let days = (self.end - self.start).num_nanoseconds().unwrap_or(i64::MAX) as f64 / NANOS_PER_DAY;
        (days * self.cadence.per_day).floor().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.objects == 0 {
            return bad("scenario needs at least one object".into());
        }
        if self.start >= self.end {
            return bad(format!("scenario start {} is not before end {}", self.start, self.end));
        }
        if self.start.year() < 1957 || self.end.year() > 2056 {
            return bad("scenario span must lie within TLE epoch years 1957..2056".into());
        }
        let last_id = self.first_norad_id as u64 + self.objects as u64 - 1;
        if self.first_norad_id == 0 || last_id > 99_999 {
            return bad(format!("catalog numbers {}..={last_id} do not fit five digits", self.first_norad_id));
        }
        let c = self.cadence;
        if !(c.per_day > 0.0 && c.per_day.is_finite()) || !(0.0..0.5).contains(&c.jitter) {
            return bad(format!("cadence needs per_day > 0 and jitter in [0, 0.5), got {c:?}"));
        }
        if self.observations_per_object() == 0 {
            return bad("scenario span holds no observations at this cadence".into());
        }
        for e in Element::ALL {
            let b = self.baseline.get(e);
            let finite = [b.level, b.noise_sigma, b.drift_per_day, b.level_spread].iter().all(|v| v.is_finite());
            if !finite || b.noise_sigma < 0.0 || b.level_spread < 0.0 {
                return bad(format!("baseline for {e} is invalid: {b:?}"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_correlation) {
            return bad(format!("noise_correlation {} must be in [0, 1]", self.noise_correlation));
        }
        if self.catalog.mission_classes.is_empty() {
            return bad("catalog.mission_classes must not be empty".into());
        }
        for (i, inj) in self.injections.iter().enumerate() {
            if inj.object >= self.objects {
                return bad(format!("injection {i}: object {} out of range", inj.object));
            }
            if !(inj.magnitude > 0.0 && inj.magnitude.is_finite()) {
                return bad(format!("injection {i}: magnitude must be > 0"));
            }
            if inj.start >= inj.end || inj.start < self.start || inj.end > self.end {
                return bad(format!("injection {i}: range must be non-empty and inside the scenario span"));
            }
            if self.baseline.get(inj.element).noise_sigma == 0.0 {
                return bad(format!("injection {i}: {} has zero noise σ", inj.element));
            }
        }
        for (i, r) in self.random_injections.iter().enumerate() {
            let ok = (0.0..1.0).contains(&r.fraction)
                && r.min_magnitude > 0.0
                && r.min_magnitude <= r.max_magnitude
                && r.max_magnitude.is_finite()
                && !r.kinds.is_empty()
                && r.min_length >= 1
                && r.min_length <= r.max_length;
            if !ok {
                return bad(format!("random_injections {i} is invalid"));
            }
            if let Some((s, e)) = r.window {
                if s >= e || s < self.start || e > self.end {
                    return bad(format!("random_injections {i}: window must be non-empty and inside the span"));
                }
            }
            let elements = r.elements.clone().unwrap_or_else(|| Element::ALL.to_vec());
            if elements.is_empty() || elements.iter().any(|&e| self.baseline.get(e).noise_sigma == 0.0) {
                return bad(format!("random_injections {i}: elements need non-zero noise σ"));
            }
        }
        Ok(())
    }
}

/// An injection as applied, with the observations it touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedInjection {
    pub norad_id: u32,
    pub element: Element,
    pub kind: InjectionKind,
    pub magnitude: f64,
    pub negative: bool,
    pub first_epoch: DateTime<Utc>,
    pub last_epoch: DateTime<Utc>,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    pub norad_id: u32,
    pub name: String,
    pub country: String,
    pub object_type: ObjectType,
    pub launch_date: NaiveDate,
    pub primary_mission: Option<MissionClass>,
    pub secondary_mission: Option<MissionClass>,
}

/// Generated series and their ground truth. `masks[id][k][j]` is true when
/// element `j` of observation `k` carries an injected offset.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub series: SeriesMap,
    pub masks: BTreeMap<u32, Vec<[bool; 6]>>,
    pub injections: Vec<AppliedInjection>,
    pub objects: Vec<SynthObject>,
}

impl SynthCorpus {
    pub fn records(&self) -> impl Iterator<Item = &TleRecord> {
        self.series.values().flat_map(|s| s.observations.iter())
    }

    pub fn tle_text(&self) -> Result<String> {
        let records: Vec<TleRecord> = self.records().cloned().collect();
        format_tle_text(&records)
    }

    /// Fraction of observations with at least one injected element.
    pub fn anomalous_fraction(&self) -> f64 {
        let (hit, total) = self.masks.values().flatten().fold((0usize, 0usize), |(h, t), m| {
            (h + m.iter().any(|&b| b) as usize, t + 1)
        });
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }
}

/// Rounds to the TLE epoch grid (1e-8 day from Jan 1 of the year).
pub fn quantize_epoch(t: DateTime<Utc>) -> DateTime<Utc> {
    let jan1 = utc(t.year(), 1, 1);
    let ns = (t - jan1).num_nanoseconds().expect("epoch within a year");
    let q = (ns as f64 / EPOCH_QUANTUM_NS as f64).round() as i64 * EPOCH_QUANTUM_NS;
    jan1 + Duration::nanoseconds(q)
}

fn round_to(v: f64, scale: f64) -> f64 {
    (v * scale).round() / scale
}

/// Brings a value onto its column grid, clamping or wrapping as needed.
fn quantize_element(element: Element, v: f64) -> f64 {
    match element {
        Element::MeanMotion => round_to(v.clamp(1e-8, 99.99999999), 1e8),
        Element::Eccentricity => round_to(v.clamp(0.0, 0.9999999), 1e7),
        Element::Inclination => round_to(v.clamp(0.0, 180.0), 1e4),
        _ => {
            let w = round_to(v.rem_euclid(360.0), 1e4);
            if w >= 360.0 {
                0.0
            } else {
                w
            }
        }
    }
}

fn object_rng(seed: u64, norad_id: u32, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ norad_id as u64);
    rng.set_stream(stream);
    rng
}

fn observation_epochs(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<DateTime<Utc>> {
    let n = cfg.observations_per_object();
    let spacing_ns = NANOS_PER_DAY / cfg.cadence.per_day;
    (0..n)
        .map(|k| {
            let jitter = if cfg.cadence.jitter > 0.0 {
                rng.gen_range(-0.5..0.5) * cfg.cadence.jitter
            } else {
                0.0
            };
            // keep the first observation at or after start
            let offset = (k as f64 + 0.5 + jitter) * spacing_ns;
            quantize_epoch(cfg.start + Duration::nanoseconds(offset as i64))
        })
        .collect()
}

/// Observation indices an injection touches.
fn affected(epochs: &[DateTime<Utc>], inj: &Injection) -> Vec<usize> {
    let idx: Vec<usize> = epochs
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= inj.start && **t < inj.end)
        .map(|(k, _)| k)
        .collect();
    match inj.kind {
        InjectionKind::Impulse => idx.into_iter().take(1).collect(),
        _ => idx,
    }
}

/// Places non-overlapping random injections until the target fraction of
/// observations in the window is covered.
fn random_schedule(
    object: usize,
    epochs: &[DateTime<Utc>],
    spec: &RandomInjections,
    baseline: &Baselines,
    taken: &mut [bool],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Injection>> {
    let (ws, we) = spec.window.unwrap_or((epochs[0], *epochs.last().unwrap() + Duration::seconds(1)));
    let candidates: Vec<usize> = (0..epochs.len()).filter(|&k| epochs[k] >= ws && epochs[k] < we).collect();
    let target = (spec.fraction * candidates.len() as f64).round() as usize;
    let elements = spec.elements.clone().unwrap_or_else(|| Element::ALL.to_vec());
    let mut out = Vec::new();
    let mut covered = 0;
    let mut attempts = 0;
    while covered < target {
        attempts += 1;
        if attempts > 10_000 + 100 * target {
            return Err(Error::Config(format!(
                "could not place {target} injected observations for object {object}; lower the fraction"
            )));
        }
        let kind = *spec.kinds.choose(rng).unwrap();
        let element = *elements.choose(rng).unwrap();
        let len = match kind {
            InjectionKind::Impulse => 1,
            _ => rng.gen_range(spec.min_length..=spec.max_length).min(target - covered).max(1),
        };
        if len > candidates.len() {
            continue;
        }
        let first = rng.gen_range(0..=candidates.len() - len);
        let span = &candidates[first..first + len];
        // contiguous in observation order, no overlap, one clean gap on each side
        let lo = span[0].saturating_sub(1);
        let hi = (span[len - 1] + 1).min(epochs.len() - 1);
        if span[len - 1] - span[0] != len - 1 || taken[lo..=hi].iter().any(|&t| t) {
            continue;
        }
        let magnitude = rng.gen_range(spec.min_magnitude..=spec.max_magnitude);
        let b = baseline.get(element);
        let mut negative = rng.gen_bool(0.5);
        if element == Element::Eccentricity && b.level - 2.0 * magnitude * b.noise_sigma - b.level_spread <= 0.0 {
            negative = false;
        }
        span.iter().for_each(|&k| taken[k] = true);
        covered += len;
        let end = if span[len - 1] + 1 < epochs.len() {
            epochs[span[len - 1] + 1]
        } else {
            epochs[span[len - 1]] + Duration::seconds(1)
        };
        out.push(Injection {
            object,
            element,
            start: epochs[span[0]],
            end,
            kind,
            magnitude: round_to(magnitude, 1e3),
            negative,
        });
    }
    Ok(out)
}

fn launch_designator(launch: NaiveDate, object: usize) -> String {
    let piece = (b'A' + (object % 26) as u8) as char;
    format!("{:02}{:03}{}", launch.year() % 100, 1 + object / 26, piece)
}

fn generate_object(cfg: &ScenarioConfig, object: usize) -> Result<(EphemerisSeries, Vec<[bool; 6]>, Vec<AppliedInjection>, SynthObject)> {
    let norad_id = cfg.norad_id(object);
    let epochs = observation_epochs(cfg, &mut object_rng(cfg.seed, norad_id, 0));
    let n = epochs.len();

    let mut schedule: Vec<Injection> = cfg.injections.iter().filter(|i| i.object == object).cloned().collect();
    let mut taken = vec![false; n];
    for inj in &schedule {
        for k in affected(&epochs, inj) {
            taken[k] = true;
        }
    }
    let mut sched_rng = object_rng(cfg.seed, norad_id, 1);
    for spec in &cfg.random_injections {
        let placed = random_schedule(object, &epochs, spec, &cfg.baseline, &mut taken, &mut sched_rng)?;
        schedule.extend(placed);
    }

    let mut value_rng = object_rng(cfg.seed, norad_id, 2);
    let mut levels = [0.0; 6];
    let mut drifts = [0.0; 6];
    for e in Element::ALL {
        let b = cfg.baseline.get(e);
        let j = e.index();
        levels[j] = b.level + if b.level_spread > 0.0 { value_rng.gen_range(-b.level_spread..=b.level_spread) } else { 0.0 };
        let sign = if b.random_drift_sign && value_rng.gen_bool(0.5) { -1.0 } else { 1.0 };
        drifts[j] = sign * b.drift_per_day;
    }
    let mut offsets = vec![[0.0f64; 6]; n];
    let mut mask = vec![[false; 6]; n];
    let mut applied = Vec::with_capacity(schedule.len());
    for inj in &schedule {
        let hit = affected(&epochs, inj);
        if hit.is_empty() {
            return Err(Error::Config(format!(
                "injection on object {object} [{}, {}) selects no observations",
                inj.start, inj.end
            )));
        }
        let j = inj.element.index();
        let sigma = cfg.baseline.get(inj.element).noise_sigma;
        let sign = if inj.negative { -1.0 } else { 1.0 };
        for (pos, &k) in hit.iter().enumerate() {
            let scale = match inj.kind {
                InjectionKind::Ramp if hit.len() > 1 => 1.0 + pos as f64 / (hit.len() - 1) as f64,
                _ => 1.0,
            };
            offsets[k][j] += sign * scale * inj.magnitude * sigma;
            mask[k][j] = true;
        }
        applied.push(AppliedInjection {
            norad_id,
            element: inj.element,
            kind: inj.kind,
            magnitude: inj.magnitude,
            negative: inj.negative,
            first_epoch: epochs[hit[0]],
            last_epoch: epochs[*hit.last().unwrap()],
            observations: hit.len(),
        });
    }

    let launch = (cfg.start - Duration::days(365 + 30 * (object as i64 % 12))).date_naive();
    let intl = launch_designator(launch, object);
    let name = format!("SYNTH {norad_id}");
    let mut rev = 1_000 + 37 * object as u64;
    let mut prev_epoch = cfg.start;
    let mut records = Vec::with_capacity(n);
    for (k, &epoch) in epochs.iter().enumerate() {
        let days = (epoch - cfg.start).num_nanoseconds().unwrap() as f64 / NANOS_PER_DAY;
        let rho = cfg.noise_correlation;
        let common = cfg.noise_shape.sample(&mut value_rng);
        let values: [f64; 6] = std::array::from_fn(|j| {
            let b = cfg.baseline.get(Element::ALL[j]);
            let own = cfg.noise_shape.sample(&mut value_rng);
            let noise = (rho.sqrt() * common + (1.0 - rho).sqrt() * own) * b.noise_sigma;
            quantize_element(Element::ALL[j], levels[j] + drifts[j] * days + noise + offsets[k][j])
        });
        let elements = OrbitalElements::from_array(values);
        let elapsed = (epoch - prev_epoch).num_nanoseconds().unwrap() as f64 / NANOS_PER_DAY;
        rev += (elements.mean_motion * elapsed) as u64;
        prev_epoch = epoch;
        records.push(TleRecord {
            norad_id,
            name: Some(name.clone()),
            classification: 'U',
            intl_designator: intl.clone(),
            epoch,
            mean_motion_dot: 0.0,
            mean_motion_ddot: PackedExp { mantissa: 0, exponent: 0 },
            bstar: PackedExp { mantissa: 0, exponent: 0 },
            ephemeris_type: '0',
            element_set_number: (k % 9_999) as u32 + 1,
            elements,
            rev_number: (rev % 100_000) as u32,
            checksum_valid: (true, true),
        });
    }

    let classes = &cfg.catalog.mission_classes;
    let class = classes[object % classes.len()];
    let (primary_mission, secondary_mission) = match object % 5 {
        4 => (None, None),
        r if r % 2 == 0 => (Some(class), None),
        _ => (None, Some(class)),
    };
    let meta = SynthObject {
        norad_id,
        name,
        country: cfg.catalog.country.clone(),
        object_type: cfg.catalog.object_type,
        launch_date: launch,
        primary_mission,
        secondary_mission,
    };
    Ok((EphemerisSeries { norad_id, observations: records }, mask, applied, meta))
}

/// Generates the corpus. Objects are independent and built in parallel;
/// the result depends only on the scenario.
pub fn generate(cfg: &ScenarioConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let parts = (0..cfg.objects)
        .into_par_iter()
        .map(|o| generate_object(cfg, o))
        .collect::<Result<Vec<_>>>()?;
    let mut corpus = SynthCorpus {
        series: SeriesMap::new(),
        masks: BTreeMap::new(),
        injections: Vec::new(),
        objects: Vec::new(),
    };
    for (series, mask, applied, meta) in parts {
        corpus.masks.insert(series.norad_id, mask);
        corpus.series.insert(series.norad_id, series);
        corpus.injections.extend(applied);
        corpus.objects.push(meta);
    }
    Ok(corpus)
}

/// Files written by [`write_corpus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFiles {
    pub tle: PathBuf,
    pub masks: PathBuf,
    pub injections: PathBuf,
    pub satcat: PathBuf,
    pub missions_primary: PathBuf,
    pub missions_secondary: PathBuf,
}

impl CorpusFiles {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusFiles {
            tle: dir.join("corpus.tle"),
            masks: dir.join("masks.csv"),
            injections: dir.join("injections.csv"),
            satcat: dir.join("satcat.csv"),
            missions_primary: dir.join("missions_primary.csv"),
            missions_secondary: dir.join("missions_secondary.csv"),
        }
    }
}

fn rfc3339(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Serde(e.to_string()))
}

/// Writes TLE text, the mask sidecar, the applied schedule and catalog
/// fixtures into `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<CorpusFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = CorpusFiles::in_dir(dir);
    write_atomic(&files.tle, corpus.tle_text()?.as_bytes())?;

    let mut header = vec!["norad_id", "epoch"];
    header.extend(Element::ALL.iter().map(|e| e.name()));
    let mask_rows = corpus.series.values().flat_map(|s| {
        let mask = &corpus.masks[&s.norad_id];
        s.observations.iter().zip(mask).map(|(r, m)| {
            let mut row = vec![r.norad_id.to_string(), rfc3339(r.epoch)];
            row.extend(m.iter().map(|&b| (b as u8).to_string()));
            row
        })
    });
    write_atomic(&files.masks, &csv_bytes(&header, mask_rows)?)?;

    let inj_rows = corpus.injections.iter().map(|i| {
        vec![
            i.norad_id.to_string(),
            i.element.name().to_string(),
            i.kind.name().to_string(),
            format!("{}", i.magnitude),
            (i.negative as u8).to_string(),
            rfc3339(i.first_epoch),
            rfc3339(i.last_epoch),
            i.observations.to_string(),
        ]
    });
    write_atomic(
        &files.injections,
        &csv_bytes(
            &["norad_id", "element", "kind", "magnitude_sigma", "negative", "first_epoch", "last_epoch", "observations"],
            inj_rows,
        )?,
    )?;

    let type_name = |t: ObjectType| match t {
        ObjectType::Payload => "PAYLOAD",
        ObjectType::Satellite => "SATELLITE",
        ObjectType::Debris => "DEBRIS",
        ObjectType::RocketBody => "ROCKET BODY",
        ObjectType::Unknown => "UNKNOWN",
    };
    let satcat_rows = corpus.objects.iter().map(|o| {
        vec![
            o.norad_id.to_string(),
            o.country.clone(),
            type_name(o.object_type).to_string(),
            o.name.clone(),
            o.launch_date.format("%Y-%m-%d").to_string(),
            String::new(),
        ]
    });
    write_atomic(
        &files.satcat,
        &csv_bytes(&["norad_id", "country", "object_type", "name", "launch_date", "decay_date"], satcat_rows)?,
    )?;

    for (path, pick) in [
        (&files.missions_primary, (|o: &SynthObject| o.primary_mission) as fn(&SynthObject) -> Option<MissionClass>),
        (&files.missions_secondary, |o: &SynthObject| o.secondary_mission),
    ] {
        let rows = corpus
            .objects
            .iter()
            .filter_map(|o| pick(o).map(|m| vec![o.norad_id.to_string(), m.label().to_string()]));
        write_atomic(path, &csv_bytes(&["norad_id", "mission_class_label"], rows)?)?;
    }
    Ok(files)
}

/// Mask sidecar reader, keyed by catalog number in observation order.
pub fn read_masks(path: &Path) -> Result<BTreeMap<u32, Vec<(DateTime<Utc>, [bool; 6])>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let mut out: BTreeMap<u32, Vec<(DateTime<Utc>, [bool; 6])>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::invalid(format!("{}: short mask row", path.display())));
        let id: u32 = field(0)?.parse().map_err(|_| Error::invalid("mask norad_id"))?;
        let epoch = DateTime::parse_from_rfc3339(field(1)?)
            .map_err(|e| Error::invalid(format!("mask epoch: {e}")))?
            .with_timezone(&Utc);
        let mut m = [false; 6];
        for (j, slot) in m.iter_mut().enumerate() {
            *slot = field(2 + j)? == "1";
        }
        out.entry(id).or_default().push((epoch, m));
    }
    Ok(out)
}

/// A random record on the column grid, for round-trip testing.
pub fn random_record(rng: &mut impl Rng) -> TleRecord {
    let year = rng.gen_range(1957..=2056);
    let jan1 = utc(year, 1, 1);
    let days_in_year = if NaiveDate::from_ymd_opt(year, 12, 31).unwrap().ordinal() == 366 { 366 } else { 365 };
    let units: i64 = rng.gen_range(0..days_in_year * 100_000_000);
    let epoch = jan1 + Duration::nanoseconds(units * EPOCH_QUANTUM_NS);
    let packed = |rng: &mut dyn rand::RngCore| PackedExp {
        mantissa: rng.gen_range(-99_999..=99_999),
        exponent: rng.gen_range(-9..=9),
    };
    let angle = |rng: &mut dyn rand::RngCore, max: i64| rng.gen_range(0..max) as f64 / 1e4;
    let designator = format!(
        "{:02}{:03}{}",
        rng.gen_range(0..100),
        rng.gen_range(1..1000),
        ["A", "B", "AB", "ZZZ"][rng.gen_range(0..4)]
    );
    TleRecord {
        norad_id: rng.gen_range(1..=99_999),
        name: None,
        classification: ['U', 'C', 'S'][rng.gen_range(0..3)],
        intl_designator: designator,
        epoch,
        mean_motion_dot: rng.gen_range(-99_999_999i64..=99_999_999) as f64 / 1e8,
        mean_motion_ddot: packed(rng),
        bstar: packed(rng),
        ephemeris_type: '0',
        element_set_number: rng.gen_range(0..=9_999),
        elements: OrbitalElements {
            mean_motion: rng.gen_range(1..10_000_000_000i64) as f64 / 1e8,
            eccentricity: rng.gen_range(0..10_000_000) as f64 / 1e7,
            inclination: angle(rng, 1_800_001),
            raan: angle(rng, 3_600_000),
            arg_perigee: angle(rng, 3_600_000),
            mean_anomaly: angle(rng, 3_600_000),
        },
        rev_number: rng.gen_range(0..=99_999),
        checksum_valid: (true, true),
    }
}
