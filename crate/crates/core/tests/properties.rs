use chrono::NaiveDate;
use leniency_core::cba::{self, Bound, CostModel, Mvpf};
use leniency_core::corpus::record::CaseRecord;
use leniency_core::hdfe::{absorb, AbsorbOptions, FeIndex, Factor};
use leniency_core::ivcore::{build_instrument, Grouping, Horizon, InstrumentSpec, LeaveOut};
use proptest::prelude::*;
use rust_decimal::Decimal;

fn crossed(n: usize, a: usize, b: usize, seed: &[u32]) -> FeIndex {
    let f1 = Factor::from_ids((0..n).map(|i| seed[i % seed.len()] % a as u32).collect());
    let f2 = Factor::from_ids((0..n).map(|i| (seed[(i * 7 + 3) % seed.len()] / 3) % b as u32).collect());
    FeIndex::new(vec![compact(f1), compact(f2)]).unwrap()
}

// level ids must be dense
fn compact(f: Factor) -> Factor {
    Factor::from_keys(&f.ids.iter().map(|v| v.to_string()).collect::<Vec<_>>())
}

fn cell_means(col: &[f64], f: &Factor) -> Vec<f64> {
    let mut s = vec![0.0; f.n_levels];
    let mut c = vec![0.0; f.n_levels];
    for (v, &g) in col.iter().zip(&f.ids) {
        s[g as usize] += v;
        c[g as usize] += 1.0;
    }
    s.iter().zip(&c).map(|(a, b)| a / b).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn absorbed_columns_have_zero_cell_means(
        seed in prop::collection::vec(0u32..1000, 5..40),
        vals in prop::collection::vec(-10.0f64..10.0, 30..200),
        a in 2usize..6, b in 2usize..6,
    ) {
        let n = vals.len();
        let idx = crossed(n, a, b, &seed);
        let opts = AbsorbOptions { tol: 1e-11, max_iter: 100_000 };
        let (out, _) = absorb(&[vals.clone()], &idx, opts).unwrap();
        let f1 = Factor::from_ids((0..n).map(|i| seed[i % seed.len()] % a as u32).collect());
        for m in cell_means(&out[0], &compact(f1)) {
            prop_assert!(m.abs() < 1e-10);
        }
        // absorbing again is a no-op
        let (again, rep) = absorb(&out, &idx, opts).unwrap();
        prop_assert_eq!(rep.iterations, 0);
        prop_assert_eq!(&again[0], &out[0]);
    }

    #[test]
    fn absorb_ignores_added_cell_constants(
        seed in prop::collection::vec(0u32..1000, 5..40),
        vals in prop::collection::vec(-10.0f64..10.0, 30..200),
        shift in prop::collection::vec(-5.0f64..5.0, 8),
    ) {
        let n = vals.len();
        let idx = crossed(n, 4, 3, &seed);
        let f1 = compact(Factor::from_ids((0..n).map(|i| seed[i % seed.len()] % 4).collect()));
        let moved: Vec<f64> = vals.iter().zip(&f1.ids).map(|(v, &g)| v + shift[g as usize]).collect();
        let opts = AbsorbOptions { tol: 1e-12, max_iter: 100_000 };
        let (x, _) = absorb(&[vals], &idx, opts).unwrap();
        let (y, _) = absorb(&[moved], &idx, opts).unwrap();
        for (p, q) in x[0].iter().zip(&y[0]) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }
}

fn random_cases(rows: &[(u8, u8, u8, u8, bool)]) -> Vec<CaseRecord> {
    rows.iter()
        .enumerate()
        .map(|(i, &(j, p, y, day, t))| {
            let date = NaiveDate::from_ymd_opt(2000 + i32::from(y), 3, 1 + u32::from(day)).unwrap();
            let mut c = CaseRecord::new(format!("c{i}"), format!("J{j}"), date);
            c.person_id = format!("P{p}");
            c.mht = t;
            c.felony = day % 2 == 0;
            c
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn instrument_follows_rows_under_permutation(
        rows in prop::collection::vec((0u8..5, 0u8..40, 0u8..4, 0u8..14, any::<bool>()), 10..120),
        rot in 1usize..50,
        h in 0usize..5,
        jack in any::<bool>(),
    ) {
        let cases = random_cases(&rows);
        let spec = InstrumentSpec {
            grouping: Grouping::Saturated(vec!["felony".into()]),
            horizon: Horizon::ALL[h],
            leave_out: if jack { LeaveOut::OwnClusterJackknife } else { LeaveOut::OwnCases },
            min_cases: 2,
            ..InstrumentSpec::new("mht")
        };
        let base = build_instrument(&cases, &spec).unwrap();
        let n = cases.len();
        let r = rot % n;
        let mut turned = cases.clone();
        turned.rotate_left(r);
        let moved = build_instrument(&turned, &spec).unwrap();
        for i in 0..n {
            let (a, b) = (base.z[(i + r) % n], moved.z[i]);
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn instrument_is_bounded_by_residual_range(
        rows in prop::collection::vec((0u8..4, 0u8..60, 0u8..3, 0u8..14, any::<bool>()), 10..150),
    ) {
        let cases = random_cases(&rows);
        let spec = InstrumentSpec { grouping: Grouping::None, min_cases: 1, ..InstrumentSpec::new("mht") };
        let s = build_instrument(&cases, &spec).unwrap();
        // residuals lie in [-1, 1], and so does the centering term
        for z in s.z.iter().flatten() {
            prop_assert!(z.abs() <= 2.0 + 1e-12);
        }
        prop_assert_eq!(s.summary.n_missing, s.z.iter().filter(|v| v.is_none()).count());
    }
}

fn scaled(m: &CostModel, k: Decimal) -> CostModel {
    let mut m = m.clone();
    for g in m.groups.values_mut() {
        for r in [&mut g.judicial, &mut g.offender, &mut g.social, &mut g.lost_revenue] {
            r.low *= k;
            r.high *= k;
        }
    }
    m
}

proptest! {
    #[test]
    fn mvpf_times_cost_returns_wtp(w in 1u64..10_000_000, c in 1u64..10_000_000) {
        let (w, c) = (Decimal::new(w as i64, 2), Decimal::new(c as i64, 2));
        match cba::mvpf(w, c).unwrap() {
            Mvpf::Finite(m) => {
                let rel = ((m * c - w) / w).abs();
                prop_assert!(rel < Decimal::new(1, 20));
            }
            Mvpf::Infinite => prop_assert!(false),
        }
        prop_assert_eq!(cba::mvpf(w, -c).unwrap(), Mvpf::Infinite);
        prop_assert_eq!(cba::mvpf(w, Decimal::ZERO).unwrap(), Mvpf::Infinite);
    }

    #[test]
    fn benefits_scale_and_stay_ordered(k in 1i64..500, bump in 0i64..200) {
        let base = CostModel::default();
        let k = Decimal::new(k, 2);
        let m = scaled(&base, k);
        let mut effects = cba::default_effects();
        let lo = cba::crime_benefits(&effects, &m, Bound::Low).unwrap();
        let hi = cba::crime_benefits(&effects, &m, Bound::High).unwrap();
        let mid = cba::crime_benefits(&effects, &m, Bound::Mid).unwrap();
        prop_assert!(lo.is_ordered() && hi.is_ordered() && mid.is_ordered());
        prop_assert!(lo.point <= mid.point && mid.point <= hi.point);
        let b0 = cba::crime_benefits(&effects, &base, Bound::Low).unwrap();
        prop_assert_eq!(lo.point, b0.point * k);
        // a larger avoided effect never lowers benefits
        for e in effects.values_mut() {
            e.estimate -= Decimal::new(bump, 3);
        }
        let more = cba::crime_benefits(&effects, &m, Bound::Low).unwrap();
        prop_assert!(more.point >= lo.point);
    }

    #[test]
    fn treatment_cost_bounds_bracket_midpoint(months in 6u32..24, rebate in 0i64..50) {
        let mut m = CostModel::default();
        m.treatment.duration_months.low = Decimal::from(months);
        m.treatment.duration_months.high = Decimal::from(months + 6);
        m.treatment.medicaid_rebate = Decimal::new(rebate, 2);
        let (lo, hi, mid) = (
            cba::treatment_cost(&m, Bound::Low),
            cba::treatment_cost(&m, Bound::High),
            cba::treatment_cost(&m, Bound::Mid),
        );
        prop_assert!(lo <= mid && mid <= hi);
        prop_assert_eq!(mid, (lo + hi) / Decimal::TWO);
    }
}
