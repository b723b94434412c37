//! Ordered sample restrictions with a row-count report.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::eligibility::eligibility;
use super::record::CaseRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Restriction {
    KeyVariables,
    AdultAge { min: f64, max: f64 },
    StructuredSentencingPeriod { start: NaiveDate, end: NaiveDate },
    NoDrugCourt,
    /// Drop judge-years with fewer than `min_per_year` cases.
    JudgeCaseMinimum { min_per_year: usize, label: String },
    ProbationCharge,
}

impl Restriction {
    pub fn name(&self) -> String {
        match self {
            Restriction::KeyVariables => "Key variables".into(),
            Restriction::AdultAge { .. } => "Adults".into(),
            Restriction::StructuredSentencingPeriod { .. } => "Struct. Sent. Period".into(),
            Restriction::NoDrugCourt => "No Drug Court".into(),
            Restriction::JudgeCaseMinimum { label, .. } => label.clone(),
            Restriction::ProbationCharge => "Probation Charge".into(),
        }
    }

    fn keep(&self, cases: &[CaseRecord]) -> Vec<bool> {
        match self {
            Restriction::KeyVariables => cases
                .iter()
                .map(|c| {
                    !c.person_id.is_empty()
                        && !c.judge_id.is_empty()
                        && !c.district.is_empty()
                        && c.demographics.age.is_some()
                })
                .collect(),
            Restriction::AdultAge { min, max } => cases
                .iter()
                .map(|c| c.demographics.age.is_some_and(|a| a >= *min && a <= *max))
                .collect(),
            Restriction::StructuredSentencingPeriod { start, end } => cases
                .iter()
                .map(|c| c.disposition_date >= *start && c.disposition_date <= *end)
                .collect(),
            Restriction::NoDrugCourt => cases.iter().map(|c| !c.drug_court).collect(),
            Restriction::JudgeCaseMinimum { min_per_year, .. } => {
                let mut counts: HashMap<(&str, i32), usize> = HashMap::new();
                for c in cases {
                    *counts.entry((&c.judge_id, c.year)).or_insert(0) += 1;
                }
                cases
                    .iter()
                    .map(|c| counts[&(c.judge_id.as_str(), c.year)] >= *min_per_year)
                    .collect()
            }
            Restriction::ProbationCharge => cases
                .iter()
                .map(|c| eligibility(c.offense_class, c.prior_points).probation_eligible())
                .collect(),
        }
    }
}

/// The standard restriction sequence.
pub fn standard_funnel() -> Vec<Restriction> {
    vec![
        Restriction::KeyVariables,
        Restriction::AdultAge { min: 16.0, max: 100.0 },
        Restriction::StructuredSentencingPeriod {
            start: NaiveDate::from_ymd_opt(1994, 10, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2009, 12, 1).unwrap(),
        },
        Restriction::NoDrugCourt,
        Restriction::JudgeCaseMinimum { min_per_year: 10, label: "Judge Cases".into() },
        Restriction::ProbationCharge,
        Restriction::JudgeCaseMinimum { min_per_year: 10, label: "Enough Cases per Judge".into() },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelRow {
    pub step_name: String,
    pub rows_remaining: usize,
    pub pct_dropped: f64,
    pub pct_of_original: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FunnelReport {
    pub rows: Vec<FunnelRow>,
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl FunnelReport {
    pub fn to_delimited(&self, delimiter: char) -> String {
        let d = delimiter;
        let mut s = format!("step{d}observations{d}pct_dropped{d}pct_remaining_of_original\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{}{d}{}{d}{:.1}{d}{:.1}\n",
                r.step_name, r.rows_remaining, r.pct_dropped, r.pct_of_original
            ));
        }
        s
    }

    pub fn to_aligned(&self) -> String {
        let w = self.rows.iter().map(|r| r.step_name.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<w$}  {:>12}  {:>9}  {:>11}\n", "", "Observations", "% Dropped", "% Remaining");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<w$}  {:>12}  {:>9.1}  {:>11.1}\n",
                r.step_name, r.rows_remaining, r.pct_dropped, r.pct_of_original
            ));
        }
        s
    }
}

/// Apply restrictions in order. Row order of survivors is preserved.
pub fn apply_funnel(cases: Vec<CaseRecord>, steps: &[Restriction]) -> (Vec<CaseRecord>, FunnelReport) {
    let start = cases.len();
    let mut report = FunnelReport {
        rows: vec![FunnelRow { step_name: "Start".into(), rows_remaining: start, pct_dropped: 0.0, pct_of_original: 100.0 }],
    };
    let mut current = cases;
    for step in steps {
        let before = current.len();
        let keep = step.keep(&current);
        current = current.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect();
        report.rows.push(FunnelRow {
            step_name: step.name(),
            rows_remaining: current.len(),
            pct_dropped: pct(before - current.len(), before),
            pct_of_original: pct(current.len(), start),
        });
    }
    (current, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::record::OffenseClass;

    fn cases() -> Vec<CaseRecord> {
        (0..30)
            .map(|i| {
                let mut c = CaseRecord::new(format!("c{i}"), if i < 25 { "j1" } else { "j2" }, NaiveDate::from_ymd_opt(2000, 3, 1).unwrap());
                c.person_id = format!("p{i}");
                c.demographics.age = Some(if i == 0 { 15.0 } else { 30.0 });
                if i == 1 {
                    c.offense_class = OffenseClass::FelonyC;
                }
                c
            })
            .collect()
    }

    #[test]
    fn empty_list_leaves_input() {
        let (out, rep) = apply_funnel(cases(), &[]);
        assert_eq!(out.len(), 30);
        assert_eq!(rep.rows.len(), 1);
    }

    #[test]
    fn standard_steps_count() {
        let (out, rep) = apply_funnel(cases(), &standard_funnel());
        // minor dropped, felony C dropped, j2 has only 5 cases
        assert_eq!(out.len(), 23);
        let counts: Vec<usize> = rep.rows.iter().map(|r| r.rows_remaining).collect();
        assert_eq!(counts, vec![30, 30, 29, 29, 29, 24, 23, 23]);
        assert!(rep.rows.windows(2).all(|w| w[0].rows_remaining >= w[1].rows_remaining));
        assert!((rep.rows.last().unwrap().pct_of_original - 100.0 * 23.0 / 30.0).abs() < 1e-12);
    }
}
