//! Satellite catalog metadata, mission classes and population selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tle::SeriesMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectType {
    Payload,
    Satellite,
    Debris,
    RocketBody,
    Unknown,
}

impl FromStr for ObjectType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace([' ', '-'], "_");
        Ok(match norm.as_str() {
            "PAYLOAD" | "PAY" => ObjectType::Payload,
            "SATELLITE" | "SAT" => ObjectType::Satellite,
            "DEBRIS" | "DEB" => ObjectType::Debris,
            "ROCKET_BODY" | "R/B" | "RB" => ObjectType::RocketBody,
            "UNKNOWN" | "TBA" | "" => ObjectType::Unknown,
            _ => return Err(Error::Catalog(format!("unknown object type {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatCatEntry {
    pub norad_id: u32,
    pub country_code: String,
    pub object_type: ObjectType,
    pub object_name: String,
    pub launch_date: Option<NaiveDate>,
    pub decay_date: Option<NaiveDate>,
}

/// A catalog snapshot keyed by catalog number.
#[derive(Debug, Clone, Default)]
pub struct SatCat {
    entries: BTreeMap<u32, SatCatEntry>,
}

#[derive(Debug, Deserialize)]
struct SatCatRow {
    norad_id: u32,
    country: String,
    object_type: String,
    name: String,
    #[serde(default)]
    launch_date: String,
    #[serde(default)]
    decay_date: String,
}

fn optional_date(s: &str, line: u64) -> Result<Option<NaiveDate>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(Some)
        .map_err(|e| Error::Catalog(format!("line {line}: bad date {s:?}: {e}")))
}

impl SatCat {
    pub fn from_entries(entries: impl IntoIterator<Item = SatCatEntry>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            let id = e.norad_id;
            if map.insert(id, e).is_some() {
                return Err(Error::Catalog(format!("duplicate catalog number {id}")));
            }
        }
        Ok(SatCat { entries: map })
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<SatCatRow>() {
            let row = row?;
            let line = entries.len() as u64 + 2;
            entries.push(SatCatEntry {
                norad_id: row.norad_id,
                country_code: row.country,
                object_type: row.object_type.parse()?,
                object_name: row.name,
                launch_date: optional_date(&row.launch_date, line)?,
                decay_date: optional_date(&row.decay_date, line)?,
            });
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| Error::Catalog(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, norad_id: u32) -> Option<&SatCatEntry> {
        self.entries.get(&norad_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &SatCatEntry> {
        self.entries.values()
    }
}

macro_rules! mission_classes {
    ($($variant:ident => $label:literal),+ $(,)?) => {
        /// Mission category of an object. Composite categories are distinct
        /// values, not label sets.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum MissionClass {
            $($variant),+
        }

        impl MissionClass {
            pub const ALL: &'static [MissionClass] = &[$(MissionClass::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $(MissionClass::$variant => $label),+
                }
            }
        }
    };
}

mission_classes! {
    Astronomy => "astronomy",
    Communications => "communications",
    CommunicationsOther => "communications_other",
    CommunicationsSurveillanceAndOtherMilitary => "communications_surveillance_and_other_military",
    CommunicationsTechnologyApplications => "communications_technology_applications",
    EarthScience => "earth_science",
    EarthScienceCommunications => "earth_science_communications",
    EarthScienceNavigationGlobalPositioning => "earth_science_navigation_global_positioning",
    EarthScienceSpacePhysics => "earth_science_space_physics",
    EarthScienceSurveillanceAndOtherMilitary => "earth_science_surveillance_and_other_military",
    Engineering => "engineering",
    NavigationGlobalPositioning => "navigation_global_positioning",
    NavigationGlobalPositioningSurveillanceAndOtherMilitary => "navigation_global_positioning_surveillance_and_other_military",
    Other => "other",
    PlanetaryScience => "planetary_science",
    SolarPhysics => "solar_physics",
    SpacePhysics => "space_physics",
    SurveillanceAndOtherMilitary => "surveillance_and_other_military",
    TechnologyApplications => "technology_applications",
    UncategorizedCosmos => "uncategorized_cosmos",
    Unidentified => "unidentified",
}

impl fmt::Display for MissionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MissionClass {
    type Err = Error;

    /// Accepts the snake_case label or a display form such as
    /// `"communications, surveillance and other military"`.
    fn from_str(s: &str) -> Result<Self> {
        let mut norm = String::with_capacity(s.len());
        for c in s.trim().chars() {
            if c.is_ascii_alphanumeric() {
                norm.push(c.to_ascii_lowercase());
            } else if !norm.ends_with('_') {
                norm.push('_');
            }
        }
        let norm = norm.trim_matches('_');
        MissionClass::ALL
            .iter()
            .copied()
            .find(|m| m.label() == norm)
            .ok_or_else(|| Error::Catalog(format!("unknown mission class {s:?}")))
    }
}

/// One snapshotted mission mapping table.
#[derive(Debug, Clone, Default)]
pub struct MissionSource {
    map: HashMap<u32, MissionClass>,
}

#[derive(Debug, Deserialize)]
struct MissionRow {
    norad_id: u32,
    mission_class_label: String,
}

impl MissionSource {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, MissionClass)>) -> Self {
        MissionSource {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut map = HashMap::new();
        for (i, row) in rdr.deserialize::<MissionRow>().enumerate() {
            let row = row?;
            let class = row
                .mission_class_label
                .parse()
                .map_err(|e| Error::Catalog(format!("row {}: {e}", i + 2)))?;
            map.insert(row.norad_id, class);
        }
        Ok(MissionSource { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| Error::Catalog(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, norad_id: u32) -> Option<MissionClass> {
        self.map.get(&norad_id).copied()
    }
}

/// Primary source wins; the secondary fills gaps; anything unmapped is
/// `Unidentified`.
pub fn assign_mission_class(norad_id: u32, primary: &MissionSource, secondary: &MissionSource) -> MissionClass {
    primary
        .get(norad_id)
        .or_else(|| secondary.get(norad_id))
        .unwrap_or(MissionClass::Unidentified)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionCriteria {
    pub owner_codes: BTreeSet<String>,
    pub excluded_object_types: BTreeSet<ObjectType>,
    /// Half-open `[start, end)`; the object needs one observation inside.
    pub activity_window: (DateTime<Utc>, DateTime<Utc>),
    pub min_training_observations: usize,
    /// Where training observations are counted; the whole series if unset.
    #[serde(default)]
    pub training_window: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

impl Default for SelectionCriteria {
    /// Russian-owned non-debris objects seen between February and April
    /// 2022, with at least 100 observations in the five-year training span.
    fn default() -> Self {
        let utc = |y, m, d| Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap();
        SelectionCriteria {
            owner_codes: BTreeSet::from(["CIS".to_string()]),
            excluded_object_types: BTreeSet::from([ObjectType::Debris, ObjectType::RocketBody]),
            activity_window: (utc(2022, 2, 1), utc(2022, 5, 1)),
            min_training_observations: 100,
            training_window: Some((utc(2016, 8, 24), utc(2021, 8, 24))),
        }
    }
}

impl SelectionCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.activity_window.0 >= self.activity_window.1 {
            return Err(Error::Config("activity window start must precede end".into()));
        }
        if let Some((s, e)) = self.training_window {
            if s >= e {
                return Err(Error::Config("training window start must precede end".into()));
            }
        }
        if self.min_training_observations == 0 {
            return Err(Error::Config("min_training_observations must be positive".into()));
        }
        Ok(())
    }
}

/// Catalog numbers satisfying every selection predicate, ascending.
pub fn select_rsos(satcat: &SatCat, series_map: &SeriesMap, criteria: &SelectionCriteria) -> Vec<u32> {
    let (act_start, act_end) = criteria.activity_window;
    let selected: Vec<u32> = series_map
        .iter()
        .filter(|(id, series)| {
            let Some(entry) = satcat.get(**id) else {
                return false;
            };
            if !criteria.owner_codes.contains(&entry.country_code) {
                return false;
            }
            if criteria.excluded_object_types.contains(&entry.object_type) {
                return false;
            }
            if !series
                .observations
                .iter()
                .any(|r| r.epoch >= act_start && r.epoch < act_end)
            {
                return false;
            }
            let training = match criteria.training_window {
                Some((s, e)) => series.observations.iter().filter(|r| r.epoch >= s && r.epoch < e).count(),
                None => series.len(),
            };
            training >= criteria.min_training_observations
        })
        .map(|(id, _)| *id)
        .collect();
    if selected.is_empty() {
        warn!("selection criteria matched no objects");
    }
    selected
}
