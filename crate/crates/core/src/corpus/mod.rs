//! Case ingestion: parsing, classification, linkage, eligibility, restrictions, outcomes.

pub mod classify;
pub mod eligibility;
pub mod funnel;
pub mod linkage;
pub mod outcome;
pub mod parse;
pub mod record;

pub use classify::{classify_conditions, RuleSet, Variant};
pub use eligibility::{eligibility, Eligibility};
pub use funnel::{apply_funnel, standard_funnel, FunnelReport, FunnelRow, Restriction};
pub use linkage::{link_offenders, LinkReport};
pub use outcome::{build_outcome, OutcomeMode};
pub use parse::{parse_cases, write_cases, ParseOutput, Reject, Schema};
pub use record::{CaseRecord, Court, OffenseClass, OffenseGroup};

/// Overwrite `mht`/`sudt` from the special-conditions text.
pub fn apply_classifier(cases: &mut [CaseRecord], rules: &RuleSet) {
    for c in cases {
        let (m, s) = classify_conditions(&c.special_conditions, rules);
        c.mht = m;
        c.sudt = s;
    }
}
