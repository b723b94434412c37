use std::path::PathBuf;

use leniency_core::corpus::{classify_conditions, parse_cases, write_cases, OffenseClass, RuleSet, Schema, Variant};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Flags frozen by tests/fixtures/classifier_oracle.py.
#[test]
fn classifier_matches_golden_fixture() {
    let mut rdr = csv::Reader::from_path(fixture("classifier_golden.csv")).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let text = &rec[0];
        for (k, v) in Variant::ALL.iter().enumerate() {
            let want = (&rec[1 + 2 * k] == "1", &rec[2 + 2 * k] == "1");
            let got = classify_conditions(text, &RuleSet::standard(*v));
            assert_eq!(got, want, "{:?} on {text:?}", v.as_str());
        }
        n += 1;
    }
    assert_eq!(n, 60);
}

#[test]
fn parse_fixture_collects_bad_dates() {
    let out = parse_cases(std::fs::File::open(fixture("parse_fixture.csv")).unwrap(), &Schema::default()).unwrap();
    assert_eq!(out.cases.len(), 47);
    assert_eq!(out.rejects.len(), 3);
    let mut ids: Vec<&str> = out.rejects.iter().map(|r| r.case_id.as_str()).collect();
    ids.sort();
    assert_eq!(ids, ["C007", "C023", "C041"]);
    assert!(out.rejects.iter().all(|r| r.column == "disposition_date"));
    // header is line 1
    assert_eq!(out.rejects.iter().find(|r| r.case_id == "C007").unwrap().line, 8);
}

#[test]
fn charges_collapse_to_most_severe() {
    let text = "case_id,judge_id,court,circuit,district,disposition_date,offense_class,special_conditions\n\
                K1,J1,superior,02,05,2004-03-02,M1,pay costs\n\
                K1,J1,superior,02,05,2004-03-01,FI,anger couns\n";
    let out = parse_cases(text.as_bytes(), &Schema::default()).unwrap();
    assert_eq!(out.cases.len(), 1);
    let c = &out.cases[0];
    assert_eq!(c.offense_class, OffenseClass::FelonyI);
    assert_eq!(c.disposition_date.to_string(), "2004-03-01");
    assert!(c.special_conditions.contains("pay costs") && c.special_conditions.contains("anger couns"));
}

#[test]
fn written_cases_read_back() {
    let out = parse_cases(std::fs::File::open(fixture("parse_fixture.csv")).unwrap(), &Schema::default()).unwrap();
    let mut buf = b"# comment lines are skipped\n".to_vec();
    write_cases(&out.cases, &mut buf, b',').unwrap();
    let back = parse_cases(buf.as_slice(), &Schema::default()).unwrap();
    assert!(back.rejects.is_empty());
    assert_eq!(back.cases, out.cases);
}

#[test]
fn header_only_is_empty() {
    let out = parse_cases("case_id,judge_id,court,district,disposition_date,offense_class\n".as_bytes(), &Schema::default()).unwrap();
    assert!(out.cases.is_empty() && out.rejects.is_empty());
}
