//! Keyword classification of special-condition text into treatment flags.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Broadest,
    Base,
    NoSudOverlap,
    NoMhCourt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Broadest, Variant::Base, Variant::NoSudOverlap, Variant::NoMhCourt];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Broadest => "broadest",
            Variant::Base => "base",
            Variant::NoSudOverlap => "no_sud_overlap",
            Variant::NoMhCourt => "no_mh_court",
        }
    }
}

/// Phrase lists are kept verbatim; matching lowercases both sides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub mht_keywords: Vec<String>,
    pub sudt_keywords: Vec<String>,
    pub mht_core_keywords: Vec<String>,
    pub negation_phrases: Vec<String>,
    /// Added to the MHT phrases under `broadest`.
    pub program_keywords: Vec<String>,
    /// Cases mentioning any of these are removed under `no_mh_court`.
    pub mh_court_keywords: Vec<String>,
    pub variant: Variant,
}

fn owned(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub const MHT_KEYWORDS: [&str; 25] = [
    "mental",
    "mntl",
    "mntal",
    "eval",
    "exam",
    "exm",
    "asses",
    "couns",
    "cnsl",
    "therap",
    "trt",
    "trea",
    "psy",
    "behavioral",
    "trmnt",
    "prescribed medicine",
    "prescribed meds",
    "psd meds",
    "mental health med",
    "mental med",
    "depress",
    "anger",
    "stress",
    "anxi",
    "mood disord",
];

pub const SUDT_KEYWORDS: [&str; 11] = [
    "drug trt",
    "drg trt",
    "drug trea",
    "drg trea",
    "drug eval",
    "drg eval",
    "alcohol",
    "DART",
    "subs",
    "sub abus",
    "TASC",
];

pub const MHT_CORE_KEYWORDS: [&str; 12] = [
    "mental",
    "mntl",
    "mntal",
    "couns",
    "therap",
    "psy",
    "behavioral",
    "mental health med",
    "mental med",
    "depress",
    "anxi",
    "mood disord",
];

pub const PROGRAM_KEYWORDS: [&str; 8] = [
    "program",
    "medical issu",
    "medical eval",
    "medical prob",
    "medical trea",
    "residential",
    "inpatient",
    "rehab",
];

pub const MH_COURT_KEYWORDS: [&str; 12] = [
    "S.T.E.P.",
    "mental health court",
    "by mh",
    "community resource court",
    "to crc",
    "in crc",
    "crc court",
    "crc prog",
    "complete crc",
    "by crc",
    "completed crc",
    "attend crc",
];

pub const NEGATION_PHRASES: [&str; 1] = ["court does not recommend"];

impl RuleSet {
    pub fn standard(variant: Variant) -> RuleSet {
        RuleSet {
            mht_keywords: owned(&MHT_KEYWORDS),
            sudt_keywords: owned(&SUDT_KEYWORDS),
            mht_core_keywords: owned(&MHT_CORE_KEYWORDS),
            negation_phrases: owned(&NEGATION_PHRASES),
            program_keywords: owned(&PROGRAM_KEYWORDS),
            mh_court_keywords: owned(&MH_COURT_KEYWORDS),
            variant,
        }
    }

    pub fn with_variant(&self, variant: Variant) -> RuleSet {
        RuleSet { variant, ..self.clone() }
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::standard(Variant::Base)
    }
}

fn any_match(text: &str, phrases: &[String]) -> bool {
    phrases.iter().any(|p| text.contains(&p.to_lowercase()))
}

/// Returns `(mht, sudt)`.
pub fn classify_conditions(text: &str, rules: &RuleSet) -> (bool, bool) {
    let t = text.to_lowercase();
    if any_match(&t, &rules.negation_phrases) {
        return (false, false);
    }
    let sudt = any_match(&t, &rules.sudt_keywords);
    let raw = any_match(&t, &rules.mht_keywords);
    let base = raw && !(sudt && !any_match(&t, &rules.mht_core_keywords));
    let mht = match rules.variant {
        Variant::Broadest => raw || any_match(&t, &rules.program_keywords),
        Variant::Base => base,
        Variant::NoSudOverlap => base && !sudt,
        Variant::NoMhCourt => base && !any_match(&t, &rules.mh_court_keywords),
    };
    (mht, sudt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_cases() {
        let base = RuleSet::standard(Variant::Base);
        assert_eq!(classify_conditions("anger management couns weekly", &base), (true, false));
        assert_eq!(classify_conditions("", &base), (false, false));
        let t = "drug trt program, eval by TASC";
        assert_eq!(classify_conditions(t, &base), (false, true));
        assert_eq!(classify_conditions(t, &base.with_variant(Variant::Broadest)), (true, true));
    }

    #[test]
    fn negation_clears_both() {
        let r = RuleSet::default();
        assert_eq!(classify_conditions("Court does not recommend mental health eval; DART", &r), (false, false));
    }

    #[test]
    fn core_keyword_rescues_overlap() {
        let r = RuleSet::default();
        assert_eq!(classify_conditions("substance abuse and mental health assessment", &r), (true, true));
        assert_eq!(
            classify_conditions("substance abuse and mental health assessment", &r.with_variant(Variant::NoSudOverlap)),
            (false, true)
        );
    }

    #[test]
    fn mh_court_removed() {
        let r = RuleSet::standard(Variant::NoMhCourt);
        assert_eq!(classify_conditions("complete CRC and counseling", &r), (false, false));
    }

    proptest! {
        #[test]
        fn variants_nest(words in proptest::collection::vec(
            prop::sample::select(vec!["mental", "drug trt", "eval", "couns", "TASC", "program", "to crc",
                "pay costs", "psy", "alcohol", "no contact", "court does not recommend", "trea"]), 0..6)) {
            let text = words.join(" ");
            let r = RuleSet::default();
            let b = classify_conditions(&text, &r.with_variant(Variant::Broadest)).0;
            let m = classify_conditions(&text, &r).0;
            let n = classify_conditions(&text, &r.with_variant(Variant::NoSudOverlap)).0;
            let c = classify_conditions(&text, &r.with_variant(Variant::NoMhCourt)).0;
            prop_assert!(!m || b);
            prop_assert!(!n || m);
            prop_assert!(!c || m);
        }
    }
}
