mod common;

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rso_anomaly::catalog::{
    assign_mission_class, select_rsos, MissionClass, MissionSource, ObjectType, SatCat, SatCatEntry, SelectionCriteria,
};
use rso_anomaly::oracle::{iqr_outliers, label_population, quartiles};
use rso_anomaly::tle::{Element, SeriesMap};

fn utc(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

fn entry(id: u32, country: &str, kind: ObjectType) -> SatCatEntry {
    SatCatEntry {
        norad_id: id,
        country_code: country.into(),
        object_type: kind,
        object_name: format!("OBJ {id}"),
        launch_date: None,
        decay_date: None,
    }
}

/// `training` observations a week apart from 2017, then `active`.
fn epochs(training: usize, active: Option<DateTime<Utc>>) -> Vec<DateTime<Utc>> {
    let mut e: Vec<_> = (0..training).map(|i| utc(2017, 1, 1) + Duration::days(7 * i as i64)).collect();
    e.extend(active);
    e
}

#[test]
fn selection_fixture() {
    let inside = Some(utc(2022, 3, 1));
    let fixture: Vec<(SatCatEntry, Vec<DateTime<Utc>>)> = vec![
        (entry(1, "CIS", ObjectType::Payload), epochs(150, inside)),
        (entry(2, "CIS", ObjectType::Payload), epochs(100, inside)),
        (entry(3, "CIS", ObjectType::Payload), epochs(99, inside)),
        (entry(4, "US", ObjectType::Payload), epochs(150, inside)),
        (entry(5, "CIS", ObjectType::Debris), epochs(150, inside)),
        (entry(6, "CIS", ObjectType::RocketBody), epochs(150, inside)),
        (entry(7, "CIS", ObjectType::Payload), epochs(150, Some(utc(2022, 1, 31)))),
        (entry(8, "CIS", ObjectType::Payload), epochs(150, Some(utc(2022, 5, 1)))),
        (entry(9, "CIS", ObjectType::Satellite), epochs(150, inside)),
        (entry(10, "CIS", ObjectType::Unknown), epochs(150, inside)),
    ];
    let satcat = SatCat::from_entries(fixture.iter().map(|(e, _)| e.clone())).unwrap();
    let mut series: SeriesMap = fixture.iter().map(|(e, t)| (e.norad_id, common::series_at(e.norad_id, t))).collect();
    // observed but absent from the catalog
    series.insert(11, common::series_at(11, &epochs(150, inside)));
    assert_eq!(select_rsos(&satcat, &series, &SelectionCriteria::default()), vec![1, 2, 9, 10]);
}

#[test]
fn satcat_csv_round_trip() {
    let text = "norad_id,country,object_type,name,launch_date,decay_date\n\
                25544,ISS,PAYLOAD,ISS (ZARYA),1998-11-20,\n\
                40001,CIS,R/B,SL-4 R/B,2014-06-01,2014-07-01\n";
    let cat = SatCat::from_reader(text.as_bytes()).unwrap();
    assert_eq!(cat.len(), 2);
    assert_eq!(cat.get(40001).unwrap().object_type, ObjectType::RocketBody);
    assert_eq!(cat.get(25544).unwrap().decay_date, None);
    let dup = "norad_id,country,object_type,name\n1,CIS,PAY,A\n1,CIS,PAY,B\n";
    assert!(SatCat::from_reader(dup.as_bytes()).is_err());
}

#[test]
fn mission_class_precedence() {
    let primary = MissionSource::from_pairs([(1, MissionClass::Communications), (2, MissionClass::EarthScience), (5, MissionClass::Astronomy)]);
    let secondary = MissionSource::from_reader(
        "norad_id,mission_class_label\n2,Communications\n3,earth_science\n5,Communications\n".as_bytes(),
    )
    .unwrap();
    let got: Vec<MissionClass> = [1, 2, 3, 4, 5].iter().map(|&id| assign_mission_class(id, &primary, &secondary)).collect();
    assert_eq!(
        got,
        vec![
            MissionClass::Communications,
            MissionClass::EarthScience,
            MissionClass::EarthScience,
            MissionClass::Unidentified,
            MissionClass::Astronomy,
        ]
    );
}

const TYPES: [ObjectType; 5] = [
    ObjectType::Payload,
    ObjectType::Satellite,
    ObjectType::Debris,
    ObjectType::RocketBody,
    ObjectType::Unknown,
];
const OWNERS: [&str; 3] = ["CIS", "US", "PRC"];

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tightening_criteria_never_adds_objects(seed in any::<u64>(), extra_min in 0usize..40, drop_owner in 0usize..3, add_type in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        let mut series = SeriesMap::new();
        for id in 1..=30u32 {
            entries.push(entry(id, OWNERS[rng.gen_range(0..3)], TYPES[rng.gen_range(0..5)]));
            let active = rng.gen_bool(0.8).then(|| utc(2022, 2, 1) + Duration::days(rng.gen_range(-30..120)));
            series.insert(id, common::series_at(id, &epochs(rng.gen_range(80..140), active)));
        }
        let satcat = SatCat::from_entries(entries).unwrap();
        let loose = SelectionCriteria {
            owner_codes: OWNERS.iter().map(|s| s.to_string()).collect(),
            excluded_object_types: BTreeSet::new(),
            ..Default::default()
        };
        let mut tight = loose.clone();
        tight.min_training_observations += extra_min;
        tight.owner_codes.remove(OWNERS[drop_owner]);
        tight.excluded_object_types.insert(TYPES[add_type]);
        let a: BTreeSet<u32> = select_rsos(&satcat, &series, &loose).into_iter().collect();
        let b: BTreeSet<u32> = select_rsos(&satcat, &series, &tight).into_iter().collect();
        prop_assert!(b.is_subset(&a));
    }

    #[test]
    fn outliers_match_reference(values in prop::collection::vec(-1e6f64..1e6, 4..200)) {
        prop_assert_eq!(iqr_outliers(&values).unwrap(), common::brute_iqr_mask(&values));
    }

    #[test]
    fn outliers_ignore_order_and_positive_affine_maps(values in prop::collection::vec(-1000i32..1000, 4..120), shift in -50i32..50, seed in any::<u64>()) {
        // integer data and power-of-two scaling keep the arithmetic exact
        let x: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 4.0 * v + shift as f64).collect();
        let base = iqr_outliers(&x).unwrap();
        prop_assert_eq!(iqr_outliers(&y).unwrap(), base.clone());
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let permuted: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        let mask = iqr_outliers(&permuted).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(mask[k], base[i]);
        }
    }
}

#[test]
fn quartile_examples() {
    assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0]).unwrap(), (1.75, 3.25));
    assert_eq!(quartiles(&[7.0; 9]).unwrap(), (7.0, 7.0));
    assert!(quartiles(&[1.0, 2.0, 3.0]).is_err());
    assert!(quartiles(&[1.0, f64::NAN, 2.0, 3.0]).is_err());
}

#[test]
fn label_population_marks_a_large_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sigma = 0.01;
    let rows: Vec<[f64; 6]> = (0..200)
        .map(|i| {
            let mut r = [15.2, 0.0015, 82.5, 120.0, 90.0, 270.0];
            // bounded noise so only the step can cross the fences
            r[2] += rng.gen_range(-sigma..sigma);
            if (150..160).contains(&i) {
                r[2] += 12.0 * sigma;
            }
            r
        })
        .collect();
    let mut map = SeriesMap::new();
    map.insert(7, common::series_from_rows(7, utc(2020, 1, 1), 12, &rows));
    let tables = label_population(&map, &Element::ALL, None);
    assert_eq!(tables.len(), 6);
    let incl = tables.iter().find(|t| t.element == Element::Inclination).unwrap();
    let flagged: Vec<usize> = incl.labels.iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i).collect();
    assert_eq!(flagged, (150..160).collect::<Vec<_>>());
    assert!(tables.iter().filter(|t| t.element != Element::Inclination).all(|t| t.outlier_count() == 0));

    // a window holding three observations is skipped
    let few = label_population(&map, &[Element::Raan], Some((utc(2020, 1, 1), utc(2020, 1, 2) + Duration::hours(1))));
    assert!(few.is_empty());
}
