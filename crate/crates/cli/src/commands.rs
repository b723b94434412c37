//! Subcommand bodies. Each writes its artifacts under `--out` with a header
//! naming the subcommand, the config fingerprint and the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use leniency_core::cba;
use leniency_core::corpus::{apply_classifier, apply_funnel, link_offenders, parse_cases, parse::write_rejects, write_cases, CaseRecord, Schema};
use leniency_core::ddml::ddml_cases;
use leniency_core::diagnostics::{
    balance_joint_f, predicted_vs_actual_f, revocation_randomization_test, subgroup_effects, time_profile, upm_test, SubgroupOutcome,
    SubgroupSpec,
};
use leniency_core::ivcore::{build_frame, fingerprint, fit_model, report_table, AnalysisFrame, FrameSpec, ModelSpec};
use leniency_core::simgen::{generate, write_truth, SimConfig};
use leniency_core::{Error, Result};
use serde::Serialize;

use crate::config::{self, DdmlConfig, DiagnoseConfig, EstimateConfig, IngestConfig};
use crate::{Cli, Command};

struct Run<'a> {
    name: &'static str,
    out: &'a Path,
    fingerprint: String,
    seed: u64,
}

impl Run<'_> {
    fn header(&self) -> String {
        format!("# leniency {}\n# fingerprint = \"{}\"\n# seed = {}\n", self.name, self.fingerprint, self.seed)
    }

    fn write(&self, file: &str, body: &str) -> Result<()> {
        fs::write(self.out.join(file), format!("{}{body}", self.header()))?;
        Ok(())
    }

    fn write_toml<T: Serialize>(&self, file: &str, value: &T) -> Result<()> {
        let body = toml::to_string(value).map_err(|e| Error::Invalid(format!("serializing {file}: {e}")))?;
        self.write(file, &body)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let dir = cli.config_dir.as_deref();
    let cfg_path = cli.config.as_deref();
    if let Command::Defaults { subcommand } = &cli.command {
        print!("{}", defaults(subcommand)?);
        return Ok(());
    }
    fs::create_dir_all(&cli.out)?;
    let mut run = Run { name: "", out: &cli.out, fingerprint: String::new(), seed: cli.seed };
    match &cli.command {
        Command::Ingest { input } => {
            let c: IngestConfig = config::load(cfg_path, dir)?;
            run.name = "ingest";
            run.fingerprint = fingerprint(&c);
            ingest(&run, &c, input)
        }
        Command::Simulate => {
            let c: SimConfig = config::load(cfg_path, dir)?;
            c.validate()?;
            run.name = "simulate";
            run.fingerprint = fingerprint(&c);
            simulate(&run, &c)
        }
        Command::Instruments { input } => {
            let c: FrameSpec = config::load(cfg_path, dir)?;
            run.name = "instruments";
            run.fingerprint = fingerprint(&c);
            instruments(&run, &c, input)
        }
        Command::Estimate { input } => {
            let c: EstimateConfig = config::load(cfg_path, dir)?;
            run.name = "estimate";
            run.fingerprint = fingerprint(&c);
            estimate(&run, &c, input)
        }
        Command::Diagnose { input } => {
            let c: DiagnoseConfig = config::load(cfg_path, dir)?;
            run.name = "diagnose";
            run.fingerprint = fingerprint(&c);
            diagnose(&run, &c, input)
        }
        Command::Ddml { input } => {
            let mut c: DdmlConfig = config::load(cfg_path, dir)?;
            c.ddml.options.seed = cli.seed;
            run.name = "ddml";
            run.fingerprint = fingerprint(&c);
            ddml(&run, &c, input)
        }
        Command::Cba => {
            let text = config::read_text(cfg_path, dir)?.unwrap_or_else(config::cba_defaults);
            let c = config::parse_cba(&text)?;
            run.name = "cba";
            run.fingerprint = fingerprint(&c.model);
            let result = cba::evaluate(&c.model, &c.effects)?;
            run.write("cba_ledger.tsv", &result.ledger())
        }
        Command::Defaults { .. } => unreachable!(),
    }
}

fn defaults(sub: &str) -> Result<String> {
    let ser = |r: std::result::Result<String, toml::ser::Error>| r.map_err(|e| Error::Invalid(e.to_string()));
    match sub {
        "ingest" => ser(toml::to_string(&IngestConfig::default())),
        "simulate" => ser(toml::to_string(&SimConfig::default())),
        "instruments" => ser(toml::to_string(&FrameSpec::default())),
        "estimate" => ser(toml::to_string(&EstimateConfig::default())),
        "diagnose" => ser(toml::to_string(&DiagnoseConfig::default())),
        "ddml" => ser(toml::to_string(&DdmlConfig::default())),
        "cba" => Ok(config::cba_defaults()),
        other => Err(Error::Config(format!("no defaults for `{other}`"))),
    }
}

fn read_cases(input: &Path) -> Result<Vec<CaseRecord>> {
    let parsed = parse_cases(fs::File::open(input)?, &Schema::default())?;
    if parsed.cases.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(parsed.cases)
}

fn frame_for(input: &Path, spec: &FrameSpec) -> Result<(Vec<CaseRecord>, AnalysisFrame)> {
    let all = read_cases(input)?;
    let frame = build_frame(&all, spec)?;
    if frame.cases.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok((all, frame))
}

fn ingest(run: &Run, c: &IngestConfig, input: &Path) -> Result<()> {
    let parsed = parse_cases(fs::File::open(input)?, &c.schema)?;
    let mut cases = parsed.cases;
    apply_classifier(&mut cases, &c.rules);
    let link = link_offenders(&mut cases);
    let (kept, funnel) = apply_funnel(cases, &c.funnel);
    let mut buf = Vec::new();
    write_cases(&kept, &mut buf, b',')?;
    run.write("cases.csv", &String::from_utf8_lossy(&buf))?;
    let mut buf = Vec::new();
    write_rejects(&parsed.rejects, &mut buf)?;
    run.write("rejects.csv", &String::from_utf8_lossy(&buf))?;
    run.write("funnel.tsv", &funnel.to_delimited('\t'))?;
    run.write_toml("linkage.toml", &link)
}

fn simulate(run: &Run, c: &SimConfig) -> Result<()> {
    let (cases, truth) = generate(c, run.seed)?;
    let mut w = BufWriter::new(fs::File::create(run.out.join("cases.csv"))?);
    std::io::Write::write_all(&mut w, run.header().as_bytes())?;
    write_cases(&cases, &mut w, b',')?;
    let ids: Vec<String> = cases.iter().map(|c| c.case_id.clone()).collect();
    let mut w = BufWriter::new(fs::File::create(run.out.join("truth.csv"))?);
    std::io::Write::write_all(&mut w, format!("# leniency {}\n", run.name).as_bytes())?;
    write_truth(&truth, &ids, &run.fingerprint, &mut w)
}

fn instruments(run: &Run, c: &FrameSpec, input: &Path) -> Result<()> {
    let all = read_cases(input)?;
    let frame = build_frame(&all, &FrameSpec { outcomes: Vec::new(), drop_revocations: false, ..c.clone() })?;
    let mut s = String::from("case_id");
    for name in frame.instruments.keys() {
        let _ = write!(s, ",{name},{name}_n_jt,{name}_n_ijt");
    }
    s.push('\n');
    for (i, case) in all.iter().enumerate() {
        s.push_str(&case.case_id);
        for series in frame.instruments.values() {
            let z = series.z[i].map(|v| format!("{v:.12}")).unwrap_or_else(|| "NA".into());
            let _ = write!(s, ",{z},{},{}", series.n_jt[i], series.n_ijt[i]);
        }
        s.push('\n');
    }
    run.write("instruments.csv", &s)?;
    let summary: BTreeMap<&String, _> = frame.instruments.iter().map(|(k, v)| (k, &v.summary)).collect();
    run.write_toml("instruments_summary.toml", &summary)
}

fn estimate(run: &Run, c: &EstimateConfig, input: &Path) -> Result<()> {
    let (_, frame) = frame_for(input, &c.frame)?;
    let mut results = Vec::new();
    for m in &c.models {
        results.push((m.label.clone(), fit_model(&frame.cases, &frame.extras, &m.model)?));
    }
    run.write("estimates.tsv", &report_table(&results, &c.rows, '\t'))?;
    let detail: BTreeMap<String, _> = results.into_iter().collect();
    run.write_toml("estimates.toml", &detail)
}

#[derive(Serialize)]
struct DiagnoseReport {
    balance: leniency_core::diagnostics::BalanceReport,
    predicted_vs_actual: leniency_core::diagnostics::PredictedVsActual,
    upm: leniency_core::diagnostics::UpmResult,
    revocation: Option<leniency_core::diagnostics::RevocationTest>,
    notes: Vec<String>,
}

fn diagnose(run: &Run, c: &DiagnoseConfig, input: &Path) -> Result<()> {
    let (all, frame) = frame_for(input, &c.frame)?;
    let (cases, ex) = (&frame.cases, &frame.extras);
    let mut notes = Vec::new();
    let balance = balance_joint_f(cases, ex, &c.treatment, &c.instrument, &c.controls, &c.fe, &c.cluster)?;
    let pva = predicted_vs_actual_f(cases, ex, &c.treatment, &c.controls, &c.fe, c.pva_min_cases)?;
    let upm = upm_test(cases, ex, &c.upm)?;
    let revocation = match revocation_randomization_test(&all) {
        Ok(r) => Some(r),
        Err(Error::NoRevocations) => {
            notes.push("no revocation cases; randomization test skipped".into());
            None
        }
        Err(e) => return Err(e),
    };
    run.write_toml("diagnostics.toml", &DiagnoseReport { balance, predicted_vs_actual: pva, upm, revocation, notes })?;

    if let Some(p) = &c.profile {
        let rows = time_profile(&all, &frame.rows, ex, p)?;
        let mut s = String::from("horizon\testimate\tse\tfirst_stage_f\tpct_of_mean\tn\tnote\n");
        for h in rows {
            let (est, se, f, n) = match &h.fit {
                Some(fit) => {
                    let (b, s) = fit.get(&p.model.endogenous[0]).unwrap_or((f64::NAN, f64::NAN));
                    (format!("{b:.6}"), format!("{s:.6}"), fit.first_stage_f.map(|f| format!("{f:.1}")).unwrap_or_default(), fit.n_obs.to_string())
                }
                None => Default::default(),
            };
            let pct = h.pct_of_mean.map(|x| format!("{x:.1}")).unwrap_or_default();
            let _ = writeln!(s, "{}\t{est}\t{se}\t{f}\t{pct}\t{n}\t{}", h.horizon, h.note.unwrap_or_default());
        }
        run.write("time_profile.tsv", &s)?;
    }

    let model = ModelSpec::default();
    let mut s = String::from("split\tgroup\testimate\tse\tfirst_stage_f\tn\tnote\n");
    for key in &c.subgroups {
        let mut spec = SubgroupSpec::new(key, model.clone());
        spec.instruments = c.frame.instruments.clone();
        spec.min_n = c.subgroup_min_n;
        for (group, out) in subgroup_effects(cases, ex, &spec)? {
            match out {
                SubgroupOutcome::Fit(fit) => {
                    let (b, se) = fit.get(&model.endogenous[0]).unwrap_or((f64::NAN, f64::NAN));
                    let f = fit.first_stage_f.map(|f| format!("{f:.1}")).unwrap_or_default();
                    let _ = writeln!(s, "{key}\t{group}\t{b:.6}\t{se:.6}\t{f}\t{}\t", fit.n_obs);
                }
                SubgroupOutcome::Skipped { n, note } => {
                    let _ = writeln!(s, "{key}\t{group}\t\t\t\t{n}\t{note}");
                }
            }
        }
    }
    run.write("subgroups.tsv", &s)
}

fn ddml(run: &Run, c: &DdmlConfig, input: &Path) -> Result<()> {
    let (_, frame) = frame_for(input, &c.frame)?;
    let r = ddml_cases(&frame.cases, &frame.extras, &c.ddml)?;
    let table = report_table(&[("DDML".to_string(), r.fit.clone())], std::slice::from_ref(&c.ddml.treatment), '\t');
    run.write("ddml.tsv", &table)?;
    run.write_toml("ddml.toml", &r)
}
