//! Synthetic court corpus from the latent-index treatment model.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Months, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::config::{SimConfig, Traits};
use super::oracle::{oracle_late, Margin};
use crate::corpus::record::{Attorney, CaseRecord, Court, OffenseClass, OffenseGroup, Region, Season, Shift};
use crate::error::Result;

const STREAM_JUDGES: u64 = u64::MAX;
const SALT_SLOTS: u64 = 0x9E37_79B9_7F4A_7C15;
const SALT_REVOCATION: u64 = 0xD1B5_4A32_D192_ED03;

pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeTruth {
    pub judge_id: String,
    pub court: Court,
    /// Circuit index for superior judges, district index for district judges.
    pub home: usize,
    pub a_m: f64,
    pub a_d: f64,
}

/// Latent draws behind one generated case. Revocation rows carry NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseTruth {
    pub u_m: f64,
    pub u_d: f64,
    pub pi_m: f64,
    pub pi_d: f64,
    pub v: f64,
    /// Three-year recidivism under T_M = 0 and T_M = 1, holding T_D at its realized value.
    pub y0: f64,
    pub y1: f64,
}

impl CaseTruth {
    fn missing() -> CaseTruth {
        CaseTruth { u_m: f64::NAN, u_d: f64::NAN, pi_m: f64::NAN, pi_d: f64::NAN, v: f64::NAN, y0: f64::NAN, y1: f64::NAN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub seed: u64,
    pub cases: Vec<CaseTruth>,
    pub judges: Vec<JudgeTruth>,
    /// Monte Carlo complier effect on three-year recidivism along the z_M margin.
    pub late: f64,
    pub late_se: f64,
}

struct Court_ {
    judges: Vec<JudgeTruth>,
    /// circuit -> ordered district list
    circuit_districts: Vec<Vec<usize>>,
    /// circuit -> ordered superior judge indices
    circuit_judges: Vec<Vec<usize>>,
    /// district -> district judge indices
    district_judges: Vec<Vec<usize>>,
}

fn build_judges(cfg: &SimConfig, seed: u64) -> Court_ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_JUDGES);
    let n_circ = cfg.n_circuits();
    let n_sup = cfg.n_superior_judges();
    let jl = cfg.judges;
    let mut judges = Vec::with_capacity(cfg.n_judges);
    let mut circuit_judges = vec![Vec::new(); n_circ];
    let mut district_judges = vec![Vec::new(); cfg.n_districts];
    for j in 0..cfg.n_judges {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let a_m = jl.sd_m * e1;
        let a_d = jl.sd_d * (jl.corr * e1 + (1.0 - jl.corr * jl.corr).sqrt() * e2);
        let (court, home, id) = if j < n_sup {
            let c = j % n_circ;
            circuit_judges[c].push(j);
            (Court::Superior, c, format!("S{:02}-{:02}", c, circuit_judges[c].len()))
        } else {
            let d = (j - n_sup) % cfg.n_districts;
            district_judges[d].push(j);
            (Court::District, d, format!("D{:02}-{:02}", d, district_judges[d].len()))
        };
        judges.push(JudgeTruth { judge_id: id, court, home, a_m, a_d });
    }
    let circuit_districts = (0..n_circ)
        .map(|c| (0..cfg.n_districts).filter(|d| d / cfg.districts_per_circuit == c).collect())
        .collect();
    Court_ { judges, circuit_districts, circuit_judges, district_judges }
}

impl Court_ {
    /// Superior judges sitting in `district` during half-year `period`:
    /// judge k of a circuit with m districts sits in district (k + period) mod m.
    fn superior_pool(&self, district: usize, period: i64) -> Vec<usize> {
        let c = self.circuit_districts.iter().position(|ds| ds.contains(&district)).unwrap();
        let ds = &self.circuit_districts[c];
        let pos = ds.iter().position(|&d| d == district).unwrap() as i64;
        let m = ds.len() as i64;
        self.circuit_judges[c]
            .iter()
            .enumerate()
            .filter(|(k, _)| (*k as i64 + period).rem_euclid(m) == pos)
            .map(|(_, &j)| j)
            .collect()
    }

    /// The chief judge's uniform draw for one district-court slot.
    fn slot_judge(&self, seed: u64, district: usize, date: NaiveDate, shift: Shift, origin: NaiveDate) -> usize {
        let day = (date - origin).num_days();
        let week = day.div_euclid(7) as u64;
        let dow = date.weekday().num_days_from_monday() as u64;
        let slot = ((district as u64 * 100_000 + week) * 7 + dow) * 2 + u64::from(shift == Shift::Pm);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SALT_SLOTS);
        rng.set_stream(slot);
        let pool = &self.district_judges[district];
        pool[rng.random_range(0..pool.len())]
    }
}

fn conditions_text(mht: bool, sudt: bool, rng: &mut ChaCha8Rng) -> String {
    const NONE: [&str; 3] = ["pay costs and fees", "no contact with victim", "community service 24 hours"];
    const MHT: [&str; 3] = ["mental health eval and follow recommended couns", "obtain psych assessment", "attend anger management and therapy"];
    const SUD: [&str; 3] = ["drug trt as directed", "alcohol assessment, comply w/ DART", "TASC referral"];
    let pick = |xs: &[&'static str], r: &mut ChaCha8Rng| xs[r.random_range(0..xs.len())];
    match (mht, sudt) {
        (false, false) => pick(&NONE, rng).to_string(),
        (true, false) => pick(&MHT, rng).to_string(),
        (false, true) => pick(&SUD, rng).to_string(),
        (true, true) => format!("{}; {}", pick(&MHT, rng), pick(&SUD, rng)),
    }
}

fn draw_group(rng: &mut ChaCha8Rng) -> OffenseGroup {
    let u: f64 = rng.random();
    match u {
        u if u < 0.28 => OffenseGroup::ViolentProperty,
        u if u < 0.52 => OffenseGroup::FinancialFraud,
        u if u < 0.77 => OffenseGroup::TrafficPublicOrder,
        u if u < 0.99 => OffenseGroup::DrugsAlcohol,
        _ => OffenseGroup::Miscellaneous,
    }
}

/// Selection probabilities before clamping.
pub fn selection_index(cfg: &SimConfig, x: &Traits, a_m: f64, a_d: f64) -> (f64, f64) {
    let s = &cfg.selection;
    let pi_m = s.base_m + s.m_on_am * a_m + s.m_on_ad * a_d + s.x_m.dot(x);
    let het = 1.0 + 2.0 * if x.prior_arrest { 1.0 } else { 0.0 };
    let pi_d = s.base_d + s.d_on_ad * a_d + s.upm_violation * a_m * het + s.x_d.dot(x);
    (pi_m, pi_d)
}

/// Effect scale on the MHT path for a case.
pub fn effect_scale(cfg: &SimConfig, x: &Traits, u_m: f64) -> f64 {
    let o = &cfg.outcome;
    let th = match o.effect_threshold {
        Some(t) if u_m >= t.u_m => t.scale_above,
        Some(t) => t.scale_below,
        None => 1.0,
    };
    th * if x.first_time { o.scale_first_time } else { o.scale_repeat }
}

/// Cumulative probabilities of a next case within 1..=5 years.
pub fn cumulative_hazard(cfg: &SimConfig, x: &Traits, u_m: f64, t_m: bool, t_d: bool) -> [f64; 5] {
    let o = &cfg.outcome;
    let risk = (1.0 + o.kappa * (1.0 - 2.0 * u_m)) * cfg.risk_multiplier(x);
    let scale = effect_scale(cfg, x, u_m);
    let mut c = [0.0; 5];
    let mut acc = 0.0;
    for k in 0..5 {
        let mut p = o.base_hazard[k] * risk;
        if t_m {
            p += scale * o.beta_m[k];
        }
        if t_d {
            p += o.beta_d[k];
        }
        acc = (acc + p.clamp(0.0, 1.0)).min(1.0);
        c[k] = acc;
    }
    c
}

struct Draft {
    case: CaseRecord,
    truth: CaseTruth,
    /// For revocation rows, the judge of the case being revoked.
    revokes: Option<String>,
}

/// First day simulated, including the burn-in.
fn epoch(cfg: &SimConfig) -> NaiveDate {
    NaiveDate::from_ymd_opt(cfg.start_year - cfg.burn_in_years as i32, 1, 1).unwrap()
}

fn add_years(d: NaiveDate, years: u32) -> NaiveDate {
    d.checked_add_months(Months::new(12 * years)).unwrap_or(NaiveDate::MAX)
}

fn gen_person(cfg: &SimConfig, court: &Court_, seed: u64, p: usize) -> Vec<Draft> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p as u64);
    let cv = &cfg.covariates;
    let origin = NaiveDate::from_ymd_opt(cfg.start_year, 1, 1).unwrap();
    let epoch = epoch(cfg);
    let last = NaiveDate::from_ymd_opt(cfg.end_year, 12, 31).unwrap();
    // persons past n_cases enter during the burn-in
    let (lo, hi) = if p < cfg.n_cases { (origin, last) } else { (epoch, origin.pred_opt().unwrap()) };
    let span = (hi - lo).num_days();

    let district = rng.random_range(0..cfg.n_districts);
    let female = rng.random_bool(cv.female);
    let black = rng.random_bool(cv.black);
    let hispanic = rng.random_bool(cv.hispanic);
    let young = rng.random_bool(cv.young);
    let sex_offender = rng.random_bool(cv.sex_offender);
    let region = match rng.random_range(0..20) {
        0..=2 => Region::Northeast,
        3..=6 => Region::Midwest,
        7..=16 => Region::South,
        _ => Region::West,
    };
    let mut age: f64 = if young { rng.random_range(16.0..25.0) } else { rng.random_range(25.0..60.0) };
    let mut first_time = rng.random_bool(cv.first_time);
    let mut prior_arrest = rng.random_bool(cv.prior_arrest);
    let mut date = lo + chrono::Duration::days(rng.random_range(0..=span));

    let mut out: Vec<Draft> = Vec::new();
    for c in 0..cfg.max_cases_per_person {
        let felony = rng.random_bool(cfg.felony_share);
        let court_kind = if felony { Court::Superior } else { Court::District };
        let shift = if rng.random_bool(0.5) { Shift::Pm } else { Shift::Am };
        let year = date.year();
        let judge = match court_kind {
            Court::Superior => {
                let period = i64::from(year - cfg.start_year) * 2 + i64::from(date.month() > 6);
                let pool = court.superior_pool(district, period);
                pool[rng.random_range(0..pool.len())]
            }
            Court::District => court.slot_judge(seed, district, date, shift, epoch),
        };
        let jt = &court.judges[judge];
        let x = Traits { female, black, hispanic, first_time, prior_arrest, felony, young: age < 25.0 };
        let (pi_m, pi_d) = selection_index(cfg, &x, jt.a_m, jt.a_d);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let u_m = norm_cdf(e1);
        let u_d = norm_cdf(cfg.u_corr * e1 + (1.0 - cfg.u_corr * cfg.u_corr).sqrt() * e2);
        let t_m = pi_m >= u_m;
        let t_d = pi_d >= u_d;
        let v: f64 = rng.random();
        let c0 = cumulative_hazard(cfg, &x, u_m, false, t_d);
        let c1 = cumulative_hazard(cfg, &x, u_m, true, t_d);
        let realized = if t_m { c1 } else { c0 };

        let (class, points) = if felony {
            (OffenseClass::FelonyI, rng.random_range(0..=4))
        } else {
            match rng.random_range(0..3) {
                0 => (OffenseClass::Misdemeanor1, 0),
                1 => (OffenseClass::Misdemeanor2, rng.random_range(0..=4)),
                _ => (OffenseClass::Misdemeanor3, rng.random_range(0..=4)),
            }
        };
        let mut rec = CaseRecord::new(format!("P{p:07}-{c}"), jt.judge_id.clone(), date);
        rec.person_id = format!("P{p:07}");
        rec.court = court_kind;
        rec.district = format!("{district:02}");
        rec.circuit = (court_kind == Court::Superior).then(|| format!("{:02}", district / cfg.districts_per_circuit));
        rec.season = Season::of(date);
        rec.shift = shift;
        rec.offense_class = class;
        rec.felony = felony;
        rec.offense_group = draw_group(&mut rng);
        rec.prior_points = points;
        rec.mht = t_m;
        rec.sudt = t_d;
        rec.special_conditions = conditions_text(t_m, t_d, &mut rng);
        rec.sentence_days = rng.random_range(1..=120) as f64;
        rec.demographics.age = Some((age * 100.0).round() / 100.0);
        rec.demographics.female = female;
        rec.demographics.black = black;
        rec.demographics.hispanic = hispanic;
        rec.demographics.region = region;
        rec.demographics.attorney = {
            let u: f64 = rng.random();
            if u < cv.private_attorney {
                Attorney::Private
            } else if u < cv.private_attorney + cv.waived_attorney {
                Attorney::Waived
            } else {
                Attorney::Public
            }
        };
        rec.demographics.first_time = first_time;
        rec.demographics.prior_arrest_last_year = prior_arrest;
        rec.demographics.sex_offender = sex_offender;
        rec.county_covariates.insert(
            "unemployment".into(),
            ((0.04 + 0.002 * district as f64 + 0.001 * f64::from(year - cfg.start_year)) * 1e6).round() / 1e6,
        );
        let truth = CaseTruth {
            u_m,
            u_d,
            pi_m,
            pi_d,
            v,
            y0: f64::from(u8::from(v <= c0[2])),
            y1: f64::from(u8::from(v <= c1[2])),
        };
        let this_judge = rec.judge_id.clone();
        let recorded = date >= origin;
        if recorded {
            out.push(Draft { case: rec.clone(), truth, revokes: None });
        }

        let Some(k) = realized.iter().position(|&ck| v <= ck) else { break };
        let lo = add_years(date, k as u32);
        let hi = add_years(date, k as u32 + 1);
        let next = lo + chrono::Duration::days(rng.random_range(1..=(hi - lo).num_days()));
        if next > last {
            break;
        }
        let revocation = court_kind == Court::District && rng.random_bool(cfg.revocation_share);
        age += (next - date).num_days() as f64 / 365.25;
        prior_arrest = (next - date).num_days() <= 365;
        first_time = false;
        if revocation {
            if next < origin {
                break;
            }
            let mut r = rec;
            r.case_id = format!("P{p:07}-{}", c + 1);
            r.judge_id = String::new();
            r.disposition_date = next;
            r.year = next.year();
            r.season = Season::of(next);
            r.day_of_week = next.weekday().num_days_from_monday() as u8;
            r.probation_violation_case = true;
            r.mht = false;
            r.sudt = false;
            r.special_conditions = "probation revoked".into();
            r.demographics.age = Some((age * 100.0).round() / 100.0);
            out.push(Draft { case: r, truth: CaseTruth::missing(), revokes: Some(this_judge) });
            break;
        }
        date = next;
    }
    out
}

/// Generate a corpus and its latent truth. Output is a pure function of
/// `(config, seed)`; persons are simulated in parallel on independent
/// counter-keyed streams and collected in order.
pub fn generate(cfg: &SimConfig, seed: u64) -> Result<(Vec<CaseRecord>, SimTruth)> {
    cfg.validate()?;
    let court = build_judges(cfg, seed);
    let n_persons = cfg.n_cases + cfg.n_burn_in_persons();
    let drafts: Vec<Vec<Draft>> = (0..n_persons).into_par_iter().map(|p| gen_person(cfg, &court, seed, p)).collect();
    let mut cases = Vec::new();
    let mut truths = Vec::new();
    let mut revokes = Vec::new();
    for d in drafts.into_iter().flatten() {
        cases.push(d.case);
        truths.push(d.truth);
        revokes.push(d.revokes);
    }

    // revocation judges: uniform over the judges observed in the same district-court year
    let mut pools: BTreeMap<(String, i32), BTreeSet<String>> = BTreeMap::new();
    for c in cases.iter().filter(|c| !c.probation_violation_case && c.court == Court::District) {
        pools.entry((c.district.clone(), c.year)).or_default().insert(c.judge_id.clone());
    }
    for (i, c) in cases.iter_mut().enumerate() {
        if revokes[i].is_none() {
            continue;
        }
        let fallback: BTreeSet<String> = {
            let d: usize = c.district.parse().unwrap_or(0);
            court.district_judges[d].iter().map(|&j| court.judges[j].judge_id.clone()).collect()
        };
        let pool: Vec<&String> = pools.get(&(c.district.clone(), c.year)).unwrap_or(&fallback).iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SALT_REVOCATION);
        rng.set_stream(i as u64);
        c.judge_id = pool[rng.random_range(0..pool.len())].clone();
    }

    let (late, late_se) = match oracle_late(cfg, Margin::ZmGivenZd, cfg.oracle_reps) {
        Ok(v) => v,
        Err(_) => (f64::NAN, f64::NAN),
    };
    Ok((cases, SimTruth { seed, cases: truths, judges: court.judges, late, late_se }))
}

/// Judge of the case each revocation row revokes, aligned with the table.
pub fn original_judges(cases: &[CaseRecord]) -> Vec<Option<String>> {
    let mut prev: Option<(&str, &str)> = None;
    cases
        .iter()
        .map(|c| {
            let out = if c.probation_violation_case {
                prev.filter(|(p, _)| *p == c.person_id).map(|(_, j)| j.to_string())
            } else {
                None
            };
            prev = Some((&c.person_id, &c.judge_id));
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig { n_cases: 2_000, n_judges: 40, n_districts: 4, oracle_reps: 1_000, ..SimConfig::default() }
    }

    #[test]
    fn deterministic_given_seed() {
        let (a, _) = generate(&small(), 7).unwrap();
        let (b, _) = generate(&small(), 7).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate(&small(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn treatment_matches_threshold_rule() {
        let (cases, truth) = generate(&small(), 1).unwrap();
        for (c, t) in cases.iter().zip(&truth.cases) {
            if c.probation_violation_case {
                continue;
            }
            assert_eq!(c.mht, t.pi_m >= t.u_m);
            assert_eq!(c.sudt, t.pi_d >= t.u_d);
        }
    }

    #[test]
    fn burn_in_cases_are_not_recorded() {
        let cfg = small();
        let (cases, truth) = generate(&cfg, 11).unwrap();
        assert!(cases.iter().all(|c| c.year >= cfg.start_year && c.year <= cfg.end_year));
        assert_eq!(cases.len(), truth.cases.len());
        // burn-in persons still show up through their later cases
        let n_cases = cfg.n_cases;
        assert!(cases.iter().any(|c| c.person_id[1..].parse::<usize>().unwrap() >= n_cases));
    }

    #[test]
    fn always_treated_when_threshold_is_one() {
        let mut cfg = small();
        cfg.selection.base_m = 2.0;
        let (cases, _) = generate(&cfg, 3).unwrap();
        assert!(cases.iter().filter(|c| !c.probation_violation_case).all(|c| c.mht));
    }

    #[test]
    fn judges_come_from_current_pool() {
        let cfg = small();
        let court = build_judges(&cfg, 5);
        let (cases, _) = generate(&cfg, 5).unwrap();
        let id_of: BTreeMap<&str, &JudgeTruth> = court.judges.iter().map(|j| (j.judge_id.as_str(), j)).collect();
        for c in &cases {
            let j = id_of[c.judge_id.as_str()];
            let d: usize = c.district.parse().unwrap();
            match c.court {
                Court::District => assert_eq!(j.home, d),
                Court::Superior => {
                    let period = i64::from(c.year - cfg.start_year) * 2 + i64::from(c.disposition_date.month() > 6);
                    let pool: Vec<String> =
                        court.superior_pool(d, period).iter().map(|&k| court.judges[k].judge_id.clone()).collect();
                    assert!(pool.contains(&c.judge_id));
                }
            }
        }
    }

    #[test]
    fn infeasible_rotation_is_config_error() {
        let cfg = SimConfig { n_judges: 20, superior_judge_share: 0.2, n_districts: 8, districts_per_circuit: 4, ..small() };
        assert!(matches!(generate(&cfg, 1), Err(crate::error::Error::Config(_))));
    }

    #[test]
    fn raising_am_is_monotone_and_leaves_sud_alone() {
        let cfg = small();
        let x = Traits { female: true, ..Traits::default() };
        for k in 0..50 {
            let u_m = k as f64 / 50.0;
            let (m0, d0) = selection_index(&cfg, &x, 0.0, 0.01);
            let (m1, d1) = selection_index(&cfg, &x, 0.05, 0.01);
            assert!(!(m0 >= u_m) || m1 >= u_m);
            assert_eq!(d0, d1);
        }
    }
}
