//! Fixed-effect absorption by alternating projections.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::record::{CaseRecord, Court};
use crate::dsu::Dsu;
use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;

/// Dense integer coding of a categorical key. Levels are numbered in sorted
/// key order, so the coding does not depend on row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub ids: Vec<u32>,
    pub n_levels: usize,
}

impl Factor {
    pub fn from_keys<S: AsRef<str>>(keys: &[S]) -> Factor {
        let mut levels: BTreeMap<&str, u32> = BTreeMap::new();
        for k in keys {
            levels.insert(k.as_ref(), 0);
        }
        for (i, v) in levels.values_mut().enumerate() {
            *v = i as u32;
        }
        let ids = keys.iter().map(|k| levels[k.as_ref()]).collect();
        Factor { ids, n_levels: levels.len() }
    }

    pub fn from_ids(ids: Vec<u32>) -> Factor {
        let n_levels = ids.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
        Factor { ids, n_levels }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_levels];
        for &g in &self.ids {
            c[g as usize] += 1;
        }
        c
    }

    pub fn subset(&self, rows: &[usize]) -> Factor {
        let mut used = vec![false; self.n_levels];
        for &r in rows {
            used[self.ids[r] as usize] = true;
        }
        let mut remap = vec![u32::MAX; self.n_levels];
        let mut next = 0u32;
        for (g, u) in used.iter().enumerate() {
            if *u {
                remap[g] = next;
                next += 1;
            }
        }
        Factor { ids: rows.iter().map(|&r| remap[self.ids[r] as usize]).collect(), n_levels: next as usize }
    }
}

/// Row lists per cell, one per factor (CSR layout).
#[derive(Debug, Clone)]
struct Cells {
    offsets: Vec<usize>,
    rows: Vec<usize>,
}

impl Cells {
    fn new(f: &Factor) -> Cells {
        let counts = f.counts();
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut fill = offsets.clone();
        let mut rows = vec![0; f.ids.len()];
        for (i, &g) in f.ids.iter().enumerate() {
            rows[fill[g as usize]] = i;
            fill[g as usize] += 1;
        }
        Cells { offsets, rows }
    }

    fn cell(&self, g: usize) -> &[usize] {
        &self.rows[self.offsets[g]..self.offsets[g + 1]]
    }

    fn n_cells(&self) -> usize {
        self.offsets.len() - 1
    }
}

#[derive(Debug, Clone)]
pub struct FeIndex {
    pub factors: Vec<Factor>,
    cells: Vec<Cells>,
    n: usize,
}

impl FeIndex {
    pub fn new(factors: Vec<Factor>) -> Result<FeIndex> {
        let n = factors.first().map(|f| f.len()).unwrap_or(0);
        if factors.iter().any(|f| f.len() != n) {
            return Err(Error::Invalid("fixed-effect factors differ in length".into()));
        }
        let cells = factors.iter().map(Cells::new).collect();
        Ok(FeIndex { factors, cells, n })
    }

    /// A single all-rows cell, i.e. an intercept.
    pub fn intercept(n: usize) -> FeIndex {
        FeIndex::new(vec![Factor { ids: vec![0; n], n_levels: usize::from(n > 0) }]).unwrap()
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    /// Restrict to a subset of rows, recoding levels.
    pub fn subset(&self, rows: &[usize]) -> FeIndex {
        FeIndex::new(self.factors.iter().map(|f| f.subset(rows)).collect()).unwrap()
    }

    /// Rows that sit in a one-observation cell of any factor.
    pub fn singleton_rows(&self) -> usize {
        let counts: Vec<Vec<usize>> = self.factors.iter().map(|f| f.counts()).collect();
        (0..self.n)
            .filter(|&i| {
                self.factors
                    .iter()
                    .zip(&counts)
                    .any(|(f, c)| c[f.ids[i] as usize] == 1)
            })
            .count()
    }

    /// Number of absorbed parameters. Exact for one and two factors
    /// (connected-component correction); a conservative count beyond.
    pub fn absorbed_dof(&self) -> usize {
        match self.factors.len() {
            0 => 0,
            1 => self.factors[0].n_levels,
            _ => {
                let a = &self.factors[0];
                let b = &self.factors[1];
                let comps = bipartite_components(a, b);
                let mut dof = a.n_levels + b.n_levels - comps;
                for f in &self.factors[2..] {
                    dof += f.n_levels.saturating_sub(1);
                }
                dof
            }
        }
    }
}

fn bipartite_components(a: &Factor, b: &Factor) -> usize {
    let na = a.n_levels;
    let mut dsu = Dsu::new(na + b.n_levels);
    for (&i, &j) in a.ids.iter().zip(&b.ids) {
        dsu.union(i as usize, na + j as usize);
    }
    dsu.components()
}

/// Court-specific key tuple defining one fixed-effect set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeSet {
    pub superior: Vec<String>,
    pub district: Vec<String>,
}

impl FeSet {
    pub fn uniform<S: AsRef<str>>(keys: &[S]) -> FeSet {
        let k: Vec<String> = keys.iter().map(|s| s.as_ref().to_string()).collect();
        FeSet { superior: k.clone(), district: k }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeSpec {
    pub sets: Vec<FeSet>,
    #[serde(default = "yes")]
    pub interact_court: bool,
}

fn yes() -> bool {
    true
}

impl Default for FeSpec {
    fn default() -> Self {
        FeSpec::court_time()
    }
}

impl FeSpec {
    /// Randomization cells: circuit x district x year in superior court,
    /// district x year x weekday x shift in district court.
    pub fn court_time() -> FeSpec {
        FeSpec {
            sets: vec![FeSet {
                superior: vec!["circuit".into(), "district".into(), "year".into()],
                district: vec![
                    "district".into(),
                    "year".into(),
                    "day_of_week".into(),
                    "shift".into(),
                ],
            }],
            interact_court: true,
        }
    }

    pub fn none() -> FeSpec {
        FeSpec { sets: vec![], interact_court: false }
    }

    pub fn cell_keys(&self, set: &FeSet, case: &CaseRecord) -> Result<String> {
        let keys = match case.court {
            Court::Superior => &set.superior,
            Court::District => &set.district,
        };
        let mut out = String::new();
        if self.interact_court {
            out.push_str(&case.court.to_string());
        }
        for k in keys {
            let v = case
                .key(k)
                .ok_or_else(|| Error::MissingColumn(format!("{k} (case {})", case.case_id)))?;
            out.push('\u{1f}');
            out.push_str(&v);
        }
        Ok(out)
    }

    /// Cell coding of each set; an empty spec yields a single global cell.
    pub fn factors(&self, cases: &[CaseRecord]) -> Result<Vec<Factor>> {
        if self.sets.is_empty() {
            return Ok(vec![Factor { ids: vec![0; cases.len()], n_levels: usize::from(!cases.is_empty()) }]);
        }
        self.sets
            .iter()
            .map(|set| {
                let keys = cases
                    .iter()
                    .map(|c| self.cell_keys(set, c))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Factor::from_keys(&keys))
            })
            .collect()
    }

    pub fn index(&self, cases: &[CaseRecord]) -> Result<FeIndex> {
        FeIndex::new(self.factors(cases)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        AbsorbOptions { tol: 1e-8, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbReport {
    pub iterations: usize,
    pub max_cell_mean: f64,
    pub singletons: usize,
    pub cells_per_set: Vec<usize>,
}

/// Mean of `col` over `rows`, shifted by the first element so constant cells
/// return that constant exactly.
fn cell_mean(col: &[f64], rows: &[usize], buf: &mut Vec<f64>) -> f64 {
    let c0 = col[rows[0]];
    buf.clear();
    buf.extend(rows.iter().map(|&r| col[r] - c0));
    c0 + pairwise_sum(buf) / rows.len() as f64
}

fn max_cell_mean(col: &[f64], index: &FeIndex, buf: &mut Vec<f64>) -> f64 {
    let mut worst = 0.0f64;
    for cells in &index.cells {
        for g in 0..cells.n_cells() {
            let rows = cells.cell(g);
            buf.clear();
            buf.extend(rows.iter().map(|&r| col[r]));
            let m = (pairwise_sum(buf) / rows.len() as f64).abs();
            if !(m <= worst) {
                worst = m;
            }
        }
    }
    worst
}

fn absorb_column(mut col: Vec<f64>, index: &FeIndex, opts: AbsorbOptions) -> Result<(Vec<f64>, usize, f64)> {
    let mut buf = Vec::new();
    let mut means = Vec::new();
    let mut iterations = 0;
    loop {
        let worst = max_cell_mean(&col, index, &mut buf);
        if worst < opts.tol {
            return Ok((col, iterations, worst));
        }
        if !worst.is_finite() {
            return Err(Error::Invalid("non-finite value in absorbed column".into()));
        }
        if iterations >= opts.max_iter {
            return Err(Error::NotConverged { iterations, achieved: worst });
        }
        for cells in &index.cells {
            means.clear();
            for g in 0..cells.n_cells() {
                means.push(cell_mean(&col, cells.cell(g), &mut buf));
            }
            for g in 0..cells.n_cells() {
                let m = means[g];
                for &r in cells.cell(g) {
                    col[r] -= m;
                }
            }
        }
        iterations += 1;
    }
}

/// Demean each column within the cells of every factor, alternating until the
/// largest absolute cell mean drops below `tol`.
pub fn absorb(columns: &[Vec<f64>], index: &FeIndex, opts: AbsorbOptions) -> Result<(Vec<Vec<f64>>, AbsorbReport)> {
    if opts.tol <= 0.0 || opts.tol.is_nan() {
        return Err(Error::Config("absorption tolerance must be positive".into()));
    }
    for c in columns {
        if c.len() != index.n_obs() {
            return Err(Error::Invalid(format!(
                "column length {} does not match {} fixed-effect rows",
                c.len(),
                index.n_obs()
            )));
        }
    }
    let results: Vec<Result<(Vec<f64>, usize, f64)>> = columns
        .par_iter()
        .map(|c| absorb_column(c.clone(), index, opts))
        .collect();
    let mut out = Vec::with_capacity(columns.len());
    let mut iterations = 0;
    let mut worst = 0.0f64;
    for r in results {
        let (c, it, w) = r?;
        iterations = iterations.max(it);
        worst = worst.max(w);
        out.push(c);
    }
    let report = AbsorbReport {
        iterations,
        max_cell_mean: worst,
        singletons: index.singleton_rows(),
        cells_per_set: index.factors.iter().map(|f| f.n_levels).collect(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(sets: &[&[u32]]) -> FeIndex {
        FeIndex::new(sets.iter().map(|s| Factor::from_ids(s.to_vec())).collect()).unwrap()
    }

    #[test]
    fn one_set_is_exact_in_one_pass() {
        let index = idx(&[&[0, 0, 1, 1, 1]]);
        let (out, rep) = absorb(&[vec![1.0, 3.0, 2.0, 4.0, 6.0]], &index, AbsorbOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(out[0], vec![-1.0, 1.0, -2.0, 0.0, 2.0]);
    }

    #[test]
    fn constant_within_cells_gives_zeros() {
        let index = idx(&[&[0, 0, 1, 1, 2], &[0, 1, 0, 1, 1]]);
        let col = vec![0.1, 0.1, 0.7, 0.7, 5.3];
        let (out, _) = absorb(&[col], &index, AbsorbOptions::default()).unwrap();
        assert!(out[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singletons_are_exact_zero_and_counted() {
        let index = idx(&[&[0, 1, 1, 2, 2]]);
        let (out, rep) = absorb(&[vec![9.0, 1.0, 2.0, 3.0, 4.0]], &index, AbsorbOptions::default()).unwrap();
        assert_eq!(out[0][0], 0.0);
        assert_eq!(rep.singletons, 1);
    }

    #[test]
    fn dof_with_two_connected_sets() {
        // levels 3 + 2, one connected component
        let index = idx(&[&[0, 1, 2, 0], &[0, 0, 1, 1]]);
        assert_eq!(index.absorbed_dof(), 4);
        // disconnected: {a0,b0} and {a1,b1}
        let index = idx(&[&[0, 1], &[0, 1]]);
        assert_eq!(index.absorbed_dof(), 2);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let index = idx(&[&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 2, 2, 0]]);
        let err = absorb(&[vec![1.0, 5.0, 2.0, 8.0, 3.0, 1.0]], &index, AbsorbOptions { tol: 1e-14, max_iter: 1 })
            .unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 1, .. }));
    }

    #[test]
    fn factor_coding_ignores_row_order() {
        let a = Factor::from_keys(&["b", "a", "c", "a"]);
        assert_eq!(a.ids, vec![1, 0, 2, 0]);
    }
}
