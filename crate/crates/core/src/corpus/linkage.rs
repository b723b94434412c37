//! Longitudinal linkage of cases into persons.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::record::{CaseRecord, Identity};
use crate::dsu::Dsu;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collision {
    /// The shorter name that is a token-prefix of several incompatible longer names.
    pub prefix: String,
    pub names: Vec<String>,
    pub birthdate: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkReport {
    pub n_records: usize,
    pub n_persons: usize,
    pub prefix_merges: usize,
    pub birthdate_merges: usize,
    pub collisions: Vec<Collision>,
}

/// Upper-cased word tokens; commas and periods separate words.
pub fn name_tokens(name: &str) -> Vec<String> {
    name.split(|c: char| c.is_whitespace() || c == ',' || c == '.')
        .filter(|t| !t.is_empty())
        .map(|t| t.to_uppercase())
        .collect()
}

fn canonical_name(name: &str) -> String {
    name_tokens(name).join(" ")
}

/// True when `short` is a proper word-level prefix of `long` with at least two words.
pub fn is_token_prefix(short: &[String], long: &[String]) -> bool {
    short.len() >= 2 && short.len() < long.len() && long[..short.len()] == *short
}

/// Same-length digit strings that differ in exactly one aligned pair of digits.
pub fn differs_in_one_pair(a: &str, b: &str) -> bool {
    if a.len() != b.len() || a.len() % 2 != 0 || a == b {
        return false;
    }
    let diff = a
        .as_bytes()
        .chunks(2)
        .zip(b.as_bytes().chunks(2))
        .filter(|(x, y)| x != y)
        .count();
    diff == 1
}

/// Parse `MMDDYY` or `MMDDYYYY`. Two-digit years take the latest century that
/// leaves the person at least ten years old at `asof`.
pub fn parse_birthdate(dob: &str, asof: NaiveDate) -> Option<NaiveDate> {
    if !dob.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let m: u32 = dob.get(0..2)?.parse().ok()?;
    let d: u32 = dob.get(2..4)?.parse().ok()?;
    let y: i32 = match dob.len() {
        6 => {
            let yy: i32 = dob[4..6].parse().ok()?;
            let mut y = 2000 + yy;
            while y > asof.year() - 10 {
                y -= 100;
            }
            y
        }
        8 => dob[4..8].parse().ok()?,
        _ => return None,
    };
    NaiveDate::from_ymd_opt(y, m, d)
}

pub fn age_at(dob: NaiveDate, date: NaiveDate) -> f64 {
    (date - dob).num_days() as f64 / 365.25
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Key {
    name: String,
    dob: String,
    race: String,
    sex: String,
    zip: String,
}

impl Key {
    fn of(id: &Identity) -> Key {
        Key {
            name: canonical_name(&id.name),
            dob: id.birthdate.trim().to_string(),
            race: id.race.trim().to_uppercase(),
            sex: id.sex.trim().to_uppercase(),
            zip: id.zip.trim().to_string(),
        }
    }
}

/// Fill `person_id` by merging identity records. Ids are assigned from the
/// sorted identity content, so they do not depend on input row order.
pub fn link_offenders(cases: &mut [CaseRecord]) -> LinkReport {
    let mut keys: Vec<Key> = cases.iter().filter_map(|c| c.identity.as_ref().map(Key::of)).collect();
    keys.sort();
    keys.dedup();
    let n = keys.len();
    let mut dsu = Dsu::new(n);
    let mut report = LinkReport { n_records: cases.len(), ..LinkReport::default() };

    // exact (name, dob) matches
    let mut by_name_dob: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        by_name_dob.entry((&k.name, &k.dob)).or_default().push(i);
    }
    for ids in by_name_dob.values() {
        for &j in &ids[1..] {
            dsu.union(ids[0], j);
        }
    }

    // token-prefix names with identical (dob, race, sex)
    let mut by_drs: BTreeMap<(&str, &str, &str), BTreeMap<Vec<String>, Vec<usize>>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        by_drs
            .entry((&k.dob, &k.race, &k.sex))
            .or_default()
            .entry(name_tokens(&k.name))
            .or_default()
            .push(i);
    }
    for ((dob, _, _), names) in &by_drs {
        for (tokens, ids) in names {
            let mut extensions: Vec<&Vec<String>> = Vec::new();
            for (other, other_ids) in names.range(tokens.clone()..) {
                if other == tokens {
                    continue;
                }
                if other.len() < tokens.len() || other[..tokens.len()] != tokens[..] {
                    break;
                }
                if is_token_prefix(tokens, other) {
                    extensions.push(other);
                    if dsu.union(ids[0], other_ids[0]) {
                        report.prefix_merges += 1;
                    }
                }
            }
            // two extensions that are not prefixes of one another are ambiguous
            let maximal: Vec<&Vec<String>> = extensions
                .iter()
                .filter(|e| !extensions.iter().any(|f| is_token_prefix(e, f)))
                .copied()
                .collect();
            if maximal.len() > 1 {
                report.collisions.push(Collision {
                    prefix: tokens.join(" "),
                    names: maximal.iter().map(|t| t.join(" ")).collect(),
                    birthdate: dob.to_string(),
                });
            }
        }
    }

    // one digit-pair birth-date differences with identical (name, race, zip)
    let mut by_nrz: BTreeMap<(&str, &str, &str), BTreeMap<&str, usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        by_nrz.entry((&k.name, &k.race, &k.zip)).or_default().entry(&k.dob).or_insert(i);
    }
    for dobs in by_nrz.values() {
        let list: Vec<(&&str, &usize)> = dobs.iter().collect();
        for a in 0..list.len() {
            for b in a + 1..list.len() {
                if differs_in_one_pair(list[a].0, list[b].0) && dsu.union(*list[a].1, *list[b].1) {
                    report.birthdate_merges += 1;
                }
            }
        }
    }

    let key_index: HashMap<&Key, usize> = keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    // roots are the smallest member, so root order equals canonical order
    let mut root_rank: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        let r = dsu.find(i);
        let next = root_rank.len();
        root_rank.entry(r).or_insert(next);
    }
    report.n_persons = root_rank.len();
    let width = n.to_string().len().max(6);

    let mut person_dobs: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut unlinked = BTreeSet::new();
    for c in cases.iter_mut() {
        match c.identity.as_ref() {
            Some(id) => {
                let k = Key::of(id);
                let root = dsu.find(key_index[&k]);
                c.person_id = format!("P{:0width$}", root_rank[&root], width = width);
                *person_dobs.entry(c.person_id.clone()).or_default().entry(k.dob).or_insert(0) += 1;
            }
            None => {
                if c.person_id.is_empty() {
                    c.person_id = format!("U{}", c.case_id);
                }
                unlinked.insert(c.person_id.clone());
            }
        }
    }
    report.n_persons += unlinked.len();

    // modal birth date; ties go to the smallest string
    let modal: HashMap<String, String> = person_dobs
        .into_iter()
        .map(|(p, counts)| {
            let best = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(d, _)| d.clone())
                .unwrap_or_default();
            (p, best)
        })
        .collect();
    for c in cases.iter_mut() {
        if let Some(dob) = modal.get(&c.person_id) {
            if let Some(d) = parse_birthdate(dob, c.disposition_date) {
                c.demographics.age = Some(age_at(d, c.disposition_date));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(id: &str, name: &str, dob: &str, race: &str, sex: &str, zip: &str) -> CaseRecord {
        let mut c = CaseRecord::new(id, "j", NaiveDate::from_ymd_opt(2000, 6, 1).unwrap());
        c.identity = Some(Identity {
            name: name.into(),
            birthdate: dob.into(),
            race: race.into(),
            sex: sex.into(),
            zip: zip.into(),
        });
        c
    }

    #[test]
    fn prefix_names_merge() {
        let mut cs = vec![
            case("1", "VASQUEZ, JOSE PERRERO ARTURO", "011754", "H", "M", "27601"),
            case("2", "VASQUEZ, JOSE PERRERO", "011754", "H", "M", "27701"),
        ];
        let r = link_offenders(&mut cs);
        assert_eq!(cs[0].person_id, cs[1].person_id);
        assert_eq!(r.prefix_merges, 1);
    }

    #[test]
    fn birthdate_pair_merge_uses_modal_dob() {
        let mut cs = vec![
            case("1", "SMITH, ANN", "011754", "W", "F", "27601"),
            case("2", "SMITH, ANN", "101754", "W", "F", "27601"),
            case("3", "SMITH, ANN", "011754", "W", "F", "27601"),
        ];
        link_offenders(&mut cs);
        assert!(cs.iter().all(|c| c.person_id == cs[0].person_id));
        let expect = age_at(NaiveDate::from_ymd_opt(1954, 1, 17).unwrap(), cs[1].disposition_date);
        assert_eq!(cs[1].demographics.age, Some(expect));
    }

    #[test]
    fn different_sex_blocks_prefix_merge() {
        let mut cs = vec![
            case("1", "LEE, KIM A", "020280", "A", "F", "1"),
            case("2", "LEE, KIM", "020280", "A", "M", "2"),
        ];
        link_offenders(&mut cs);
        assert_ne!(cs[0].person_id, cs[1].person_id);
    }

    #[test]
    fn ambiguous_prefix_is_reported() {
        let mut cs = vec![
            case("1", "DOE, JOHN", "010101", "B", "M", "1"),
            case("2", "DOE, JOHN ALBERT", "010101", "B", "M", "1"),
            case("3", "DOE, JOHN BRIAN", "010101", "B", "M", "1"),
        ];
        let r = link_offenders(&mut cs);
        assert_eq!(r.collisions.len(), 1);
        assert_eq!(r.collisions[0].names.len(), 2);
    }

    #[test]
    fn one_pair_rule() {
        assert!(differs_in_one_pair("011754", "101754"));
        assert!(!differs_in_one_pair("011754", "101755"));
        assert!(!differs_in_one_pair("011754", "011754"));
    }
}
