//! Synthetic court data with known treatment effects.

pub mod config;
pub mod generate;
pub mod oracle;

use std::io::Write;

pub use config::{CovEffects, CovariateLaw, EffectThreshold, JudgeLaw, OutcomeLaw, Selection, SimConfig, Traits};
pub use generate::{generate, original_judges, CaseTruth, JudgeTruth, SimTruth};
pub use oracle::{oracle_late, Margin};

use crate::error::Result;

/// Truth sidecar: a TOML header with the seed and true LATE, then one
/// delimited row per case with its latent draws.
pub fn write_truth<W: Write>(truth: &SimTruth, case_ids: &[String], fingerprint: &str, mut w: W) -> Result<()> {
    writeln!(w, "# seed = {}", truth.seed)?;
    writeln!(w, "# fingerprint = \"{fingerprint}\"")?;
    writeln!(w, "# late = {:.10}", truth.late)?;
    writeln!(w, "# late_se = {:.10}", truth.late_se)?;
    writeln!(w, "case_id,u_m,u_d,pi_m,pi_d,v,y0,y1")?;
    for (id, t) in case_ids.iter().zip(&truth.cases) {
        writeln!(w, "{id},{},{},{},{},{},{},{}", t.u_m, t.u_d, t.pi_m, t.pi_d, t.v, t.y0, t.y1)?;
    }
    Ok(())
}
