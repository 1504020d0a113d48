mod common;

use midway::study::{
    apply_stratum, ingest_csv, parse_filter, wfns_from_gcs, ColumnData, ColumnSpec, ColumnType, GcsAssessment,
    IngestError, PatientTable, Role, Schema, StratumFilter,
};
use proptest::prelude::*;

fn gcs_with_total(total: u8) -> GcsAssessment {
    GcsAssessment::all().find(|g| g.total() == total).unwrap()
}

#[test]
fn wfns_examples() {
    for (f, p) in [(false, false), (true, true), (true, false)] {
        assert_eq!(wfns_from_gcs(gcs_with_total(15), f, p).grade(), 1);
    }
    assert_eq!(wfns_from_gcs(gcs_with_total(13), true, true).grade(), 2);
    assert_eq!(wfns_from_gcs(gcs_with_total(4), false, false).grade(), 6);
    assert_eq!(wfns_from_gcs(gcs_with_total(4), true, false).grade(), 6);
    assert_eq!(wfns_from_gcs(gcs_with_total(8), false, true).grade(), 4);
}

#[test]
fn wfns_is_onto_all_grades() {
    let mut seen = [false; 6];
    for g in GcsAssessment::all() {
        for f in [false, true] {
            for p in [false, true] {
                seen[wfns_from_gcs(g, f, p).grade() as usize - 1] = true;
            }
        }
    }
    assert!(seen.iter().all(|s| *s));
}

fn small_schema() -> Schema {
    Schema::from_json(
        r#"{"columns":[
            {"name":"id","type":"id"},
            {"name":"evd","type":"binary","role":"treatment"},
            {"name":"outcome","type":"binary","role":"outcome"},
            {"name":"age","type":"real"}]}"#,
    )
    .unwrap()
}

#[test]
fn ingest_examples() {
    let s = small_schema();
    let t = ingest_csv("id,evd,outcome,age\na,1,0,50\nb,0,1,61.5\nc,TRUE,false,40\n".as_bytes(), &s).unwrap();
    assert_eq!(t.n_rows(), 3);
    assert!(t.summary().missing.values().all(|m| *m == 0));

    let t = ingest_csv("id,evd,outcome,age\na,1,0,50\nb,0,1,\nc,1,1,40\n".as_bytes(), &s).unwrap();
    assert_eq!(t.missing_count("age"), Some(1));
    assert!(t.is_missing("age", 1));

    let err = ingest_csv("id,EVD,outcome,age\na,1,0,50\n".as_bytes(), &s).unwrap_err();
    assert!(matches!(err, IngestError::HeaderMismatch { .. }));
}

#[test]
fn ingest_rejects_duplicates_and_bad_cells() {
    let s = small_schema();
    assert!(ingest_csv("id,evd,outcome,age\na,1,0,50\na,0,1,3\n".as_bytes(), &s).is_err());
    assert!(ingest_csv("id,evd,outcome,age\na,yes,0,50\n".as_bytes(), &s).is_err());
}

/// 258 rows of which exactly 147 are grade 1, not rebled, with AB ratio
/// above 0.12; the others each fail one clause.
fn planted_cohort() -> PatientTable {
    let schema = Schema::new(vec![
        ColumnSpec::new("id", ColumnType::Id),
        ColumnSpec::new("wfns", ColumnType::Ordered).with_levels(["1", "2", "3", "4", "5", "6"]),
        ColumnSpec::new("rebleed", ColumnType::Binary),
        ColumnSpec::new("ab", ColumnType::Real).with_role(Role::Scan),
    ])
    .unwrap();
    let n = 258;
    let (mut wfns, mut rebleed, mut ab) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let (w, r, a) = match i {
            0..147 => (0, false, 0.13 + 0.001 * i as f64),
            147..190 => (1 + (i % 5) as u32, false, 0.3),
            190..220 => (0, true, 0.3),
            _ => (0, false, 0.05 + 0.001 * (i - 220) as f64),
        };
        wfns.push(Some(w));
        rebleed.push(Some(r));
        ab.push(Some(a));
    }
    PatientTable::from_columns(
        schema,
        vec![
            ColumnData::Id((0..n).map(|i| format!("P{i:03}")).collect()),
            ColumnData::Level(wfns),
            ColumnData::Binary(rebleed),
            ColumnData::Real(ab),
        ],
    )
    .unwrap()
}

#[test]
fn planted_stratum_count() {
    let t = planted_cohort();
    let f = parse_filter("wfns == 1 and rebleed == 0 and ab > 0.12", t.schema()).unwrap();
    let (sub, report) = apply_stratum(&t, &f).unwrap();
    assert_eq!(sub.n_rows(), 147);
    assert_eq!(report.matched + report.non_matching, 258);
    assert_eq!(sub.schema(), t.schema());
}

#[test]
fn filter_examples() {
    let t = planted_cohort();
    assert!(parse_filter("ab > 0.1 and ab <= 0.5", t.schema()).is_ok());
    assert!(parse_filter("unknown_col > 1", t.schema()).is_err());
    assert!(parse_filter("wfns == 7", t.schema()).is_err());
    let (all, _) = apply_stratum(&t, &StratumFilter::all()).unwrap();
    assert_eq!(all, t);
    let (none, _) = apply_stratum(&t, &parse_filter("ab > 10", t.schema()).unwrap()).unwrap();
    assert_eq!(none.n_rows(), 0);
}

#[test]
fn planted_fixture_stratum() {
    let t = common::planted_stratum();
    let (sub, _) = apply_stratum(&t, &parse_filter("wfns == 1", t.schema()).unwrap()).unwrap();
    assert_eq!(sub.n_rows(), 147);
}

fn random_table() -> impl Strategy<Value = PatientTable> {
    let row = (
        prop::option::weighted(0.9, 0u32..6),
        prop::option::weighted(0.9, any::<bool>()),
        prop::option::weighted(0.9, -1e6f64..1e6),
        prop::option::weighted(0.9, 0u32..3),
    );
    prop::collection::vec(row, 0..40).prop_map(|rows| {
        let schema = Schema::new(vec![
            ColumnSpec::new("id", ColumnType::Id),
            ColumnSpec::new("wfns", ColumnType::Ordered).with_levels(["1", "2", "3", "4", "5", "6"]),
            ColumnSpec::new("rebleed", ColumnType::Binary),
            ColumnSpec::new("ab", ColumnType::Real),
            ColumnSpec::new("centre", ColumnType::Categorical).with_levels(["C01", "C 02", "C,03"]),
        ])
        .unwrap();
        let ids = (0..rows.len()).map(|i| format!("id{i}")).collect();
        PatientTable::from_columns(
            schema,
            vec![
                ColumnData::Id(ids),
                ColumnData::Level(rows.iter().map(|r| r.0).collect()),
                ColumnData::Binary(rows.iter().map(|r| r.1).collect()),
                ColumnData::Real(rows.iter().map(|r| r.2).collect()),
                ColumnData::Level(rows.iter().map(|r| r.3).collect()),
            ],
        )
        .unwrap()
    })
}

fn stratum_ids(t: &PatientTable, f: &StratumFilter) -> Vec<String> {
    apply_stratum(t, f).unwrap().0.ids().to_vec()
}

proptest! {
    #[test]
    fn csv_round_trip(t in random_table()) {
        let text = t.to_csv_string();
        let back = ingest_csv(text.as_bytes(), t.schema()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn and_composes_as_sequential_filters(t in random_table(), w in 1u32..=6, cut in -1e6f64..1e6) {
        let f = parse_filter(&format!("wfns >= {w}"), t.schema()).unwrap();
        let g = parse_filter(&format!("ab < {cut}"), t.schema()).unwrap();
        let (first, _) = apply_stratum(&t, &f).unwrap();
        prop_assert_eq!(stratum_ids(&t, &f.and(&g)), stratum_ids(&first, &g));
    }

    #[test]
    fn stratum_rows_are_accounted(t in random_table(), cut in -1e6f64..1e6) {
        let f = parse_filter(&format!("ab > {cut} or rebleed == 1"), t.schema()).unwrap();
        let (sub, report) = apply_stratum(&t, &f).unwrap();
        prop_assert_eq!(sub.n_rows(), report.matched);
        prop_assert_eq!(report.matched + report.non_matching + report.exclusions.excluded_missing, t.n_rows());
    }
}
