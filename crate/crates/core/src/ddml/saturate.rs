//! Interaction expansions of categorical case keys.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::CaseRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Controls,
    Instruments,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaturationSpec {
    pub base_keys: Vec<String>,
    pub max_order: usize,
    pub target: Target,
    pub column_cap: usize,
}

impl Default for SaturationSpec {
    fn default() -> Self {
        SaturationSpec {
            base_keys: [
                "black",
                "hispanic",
                "female",
                "first_time",
                "prior_arrest_last_year",
                "sex_offender",
                "offense_group",
                "felony",
                "age_bin",
                "court",
                "year",
                "season",
                "day_of_week",
                "shift",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            max_order: 3,
            target: Target::Both,
            column_cap: 2000,
        }
    }
}

/// Named dense design, one column per candidate regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
}

impl Design {
    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design {
        Design { names: self.names.clone(), matrix: self.matrix.select_rows(rows) }
    }

    /// Horizontal concatenation.
    pub fn concat(&self, other: &Design) -> Design {
        let n = self.matrix.nrows();
        let mut m = DMatrix::zeros(n, self.ncols() + other.ncols());
        m.columns_mut(0, self.ncols()).copy_from(&self.matrix);
        m.columns_mut(self.ncols(), other.ncols()).copy_from(&other.matrix);
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Design { names, matrix: m }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Saturated {
    pub controls: Design,
    /// Instrument and its interactions with every control indicator.
    pub instruments: Design,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Indicator columns for every non-empty combination of non-reference levels
/// of up to `max_order` keys. The lowest sorted level of each key is its
/// reference. With `instrument`, also `z` and `z` times each indicator.
pub fn saturate(cases: &[CaseRecord], spec: &SaturationSpec, instrument: Option<(&str, &[f64])>) -> Result<Saturated> {
    if spec.max_order == 0 || spec.max_order > 3 {
        return Err(Error::Config(format!("interaction order {} outside 1..=3", spec.max_order)));
    }
    let n = cases.len();
    let mut codes: Vec<Vec<u32>> = Vec::with_capacity(spec.base_keys.len());
    let mut levels: Vec<Vec<String>> = Vec::with_capacity(spec.base_keys.len());
    for k in &spec.base_keys {
        let vals = cases
            .iter()
            .map(|c| c.key(k).ok_or_else(|| Error::MissingColumn(k.clone())))
            .collect::<Result<Vec<_>>>()?;
        let lv: Vec<String> = vals.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let pos: BTreeMap<&str, u32> = lv.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
        codes.push(vals.iter().map(|v| pos[v.as_str()]).collect());
        levels.push(lv);
    }
    // count observed cells first so the cap is checked before allocating
    let mut cells: Vec<(Vec<usize>, Vec<u32>)> = Vec::new();
    for order in 1..=spec.max_order {
        for combo in combinations(spec.base_keys.len(), order) {
            let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
            for i in 0..n {
                let t: Vec<u32> = combo.iter().map(|&k| codes[k][i]).collect();
                if t.iter().all(|&c| c > 0) {
                    seen.insert(t);
                }
            }
            cells.extend(seen.into_iter().map(|t| (combo.clone(), t)));
        }
    }
    let z_cols = if instrument.is_some() && spec.target != Target::Controls { cells.len() + 1 } else { 0 };
    let x_cols = if spec.target != Target::Instruments { cells.len() } else { 0 };
    if x_cols + z_cols > spec.column_cap {
        return Err(Error::ColumnCap { count: x_cols + z_cols, cap: spec.column_cap });
    }
    let mut names = Vec::with_capacity(cells.len());
    let mut ind = DMatrix::<f64>::zeros(n, cells.len());
    for (j, (combo, t)) in cells.iter().enumerate() {
        let parts: Vec<String> =
            combo.iter().zip(t).map(|(&k, &c)| format!("{}={}", spec.base_keys[k], levels[k][c as usize])).collect();
        names.push(parts.join("*"));
        for i in 0..n {
            if combo.iter().zip(t).all(|(&k, &c)| codes[k][i] == c) {
                ind[(i, j)] = 1.0;
            }
        }
    }
    let controls = if x_cols > 0 {
        Design { names: names.clone(), matrix: ind.clone() }
    } else {
        Design { names: vec![], matrix: DMatrix::zeros(n, 0) }
    };
    let instruments = match instrument {
        Some((zname, z)) if z_cols > 0 => {
            if z.len() != n {
                return Err(Error::Invalid("instrument length differs from case count".into()));
            }
            let mut m = DMatrix::<f64>::zeros(n, z_cols);
            let mut zn = vec![zname.to_string()];
            for i in 0..n {
                m[(i, 0)] = z[i];
            }
            for (j, name) in names.iter().enumerate() {
                zn.push(format!("{zname}*{name}"));
                for i in 0..n {
                    m[(i, j + 1)] = z[i] * ind[(i, j)];
                }
            }
            Design { names: zn, matrix: m }
        }
        _ => Design { names: vec![], matrix: DMatrix::zeros(n, 0) },
    };
    Ok(Saturated { controls, instruments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn cases() -> Vec<CaseRecord> {
        (0..8)
            .map(|i| {
                let mut c = CaseRecord::new(format!("c{i}"), "j", NaiveDate::from_ymd_opt(2000, 1, 3).unwrap());
                c.demographics.female = i & 1 == 1;
                c.demographics.black = i & 2 == 2;
                c.felony = i & 4 == 4;
                c
            })
            .collect()
    }

    fn spec(keys: &[&str], order: usize) -> SaturationSpec {
        SaturationSpec { base_keys: keys.iter().map(|s| s.to_string()).collect(), max_order: order, ..Default::default() }
    }

    #[test]
    fn one_binary_key() {
        let s = saturate(&cases(), &spec(&["female"], 1), None).unwrap();
        assert_eq!(s.controls.names, vec!["female=1"]);
    }

    #[test]
    fn three_binary_keys_order_three() {
        let s = saturate(&cases(), &spec(&["female", "black", "felony"], 3), None).unwrap();
        assert_eq!(s.controls.ncols(), 7);
        let triple = s.controls.names.iter().position(|n| n == "female=1*black=1*felony=1").unwrap();
        assert_eq!(s.controls.matrix.column(triple).sum(), 1.0);
    }

    #[test]
    fn empty_cells_are_excluded() {
        let mut cs = cases();
        for c in &mut cs {
            c.demographics.black = c.demographics.female;
        }
        let s = saturate(&cs, &spec(&["female", "black"], 2), None).unwrap();
        assert_eq!(s.controls.ncols(), 3);
        let s = saturate(&cs, &spec(&["female", "felony"], 2), None).unwrap();
        assert_eq!(s.controls.ncols(), 3);
    }

    #[test]
    fn cap_reports_count() {
        let sp = SaturationSpec { column_cap: 5, ..spec(&["female", "black", "felony"], 3) };
        let z = vec![0.1; 8];
        match saturate(&cases(), &sp, Some(("z", &z))) {
            Err(Error::ColumnCap { count, cap }) => assert_eq!((count, cap), (15, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn instrument_interactions() {
        let z: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let sp = SaturationSpec { target: Target::Both, ..spec(&["female"], 1) };
        let s = saturate(&cases(), &sp, Some(("z", &z))).unwrap();
        assert_eq!(s.instruments.names, vec!["z", "z*female=1"]);
        assert_eq!(s.instruments.matrix[(3, 1)], 3.0);
        assert_eq!(s.instruments.matrix[(2, 1)], 0.0);
    }
}
