//! Structured-sentencing punishment grid.

use serde::{Deserialize, Serialize};

use super::record::OffenseClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    ActiveOnly,
    CommunityOrIntermediate,
    MixedActive,
}

impl Eligibility {
    /// Probation-eligible cells carry no active option at all.
    pub fn probation_eligible(self) -> bool {
        self == Eligibility::CommunityOrIntermediate
    }
}

/// One grid cell's punishment menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Menu {
    pub community: bool,
    pub intermediate: bool,
    pub active: bool,
}

const fn m(s: &str) -> Menu {
    let b = s.as_bytes();
    let mut out = Menu { community: false, intermediate: false, active: false };
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'C' => out.community = true,
            b'I' => out.intermediate = true,
            b'A' => out.active = true,
            _ => {}
        }
        i += 1;
    }
    out
}

// Felony grid: rows A..I, columns prior record levels I..VI.
const FELONY: [[Menu; 6]; 10] = [
    [m("A"), m("A"), m("A"), m("A"), m("A"), m("A")],
    [m("A"), m("A"), m("A"), m("A"), m("A"), m("A")],
    [m("A"), m("A"), m("A"), m("A"), m("A"), m("A")],
    [m("A"), m("A"), m("A"), m("A"), m("A"), m("A")],
    [m("A"), m("A"), m("A"), m("A"), m("A"), m("A")],
    [m("I/A"), m("I/A"), m("A"), m("A"), m("A"), m("A")],
    [m("I/A"), m("I/A"), m("I/A"), m("A"), m("A"), m("A")],
    [m("I/A"), m("I/A"), m("I/A"), m("I/A"), m("A"), m("A")],
    [m("C/I/A"), m("I/A"), m("I/A"), m("I/A"), m("I/A"), m("A")],
    [m("C"), m("C/I"), m("I"), m("I/A"), m("I/A"), m("I/A")],
];

// Misdemeanor grid: rows A1, 1, 2, 3; columns conviction levels I..III.
const MISDEMEANOR: [[Menu; 3]; 4] = [
    [m("C/I/A"), m("C/I/A"), m("C/I/A")],
    [m("C"), m("C/I/A"), m("C/I/A")],
    [m("C"), m("C/I"), m("C/I/A")],
    [m("C"), m("C/I"), m("C/I/A")],
];

/// Felony prior record level (0-based) from prior-record points.
pub fn felony_level(points: u32) -> usize {
    match points {
        0 => 0,
        1..=4 => 1,
        5..=8 => 2,
        9..=14 => 3,
        15..=18 => 4,
        _ => 5,
    }
}

/// Misdemeanor prior conviction level (0-based) from prior convictions.
pub fn misdemeanor_level(priors: u32) -> usize {
    match priors {
        0 => 0,
        1..=4 => 1,
        _ => 2,
    }
}

pub fn menu(class: OffenseClass, prior_points: u32) -> Menu {
    let rank = class.severity_rank() as usize;
    if class.is_felony() {
        FELONY[rank][felony_level(prior_points)]
    } else {
        MISDEMEANOR[rank - 10][misdemeanor_level(prior_points)]
    }
}

/// The class is a closed enum, so every input is a valid grid cell; parsing
/// free text into a class is where unknown classes are rejected.
pub fn eligibility(class: OffenseClass, prior_points: u32) -> Eligibility {
    let cell = menu(class, prior_points);
    if cell.active && !cell.community && !cell.intermediate {
        Eligibility::ActiveOnly
    } else if !cell.active {
        Eligibility::CommunityOrIntermediate
    } else {
        Eligibility::MixedActive
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_cells() {
        assert_eq!(eligibility(OffenseClass::Misdemeanor2, 0), Eligibility::CommunityOrIntermediate);
        for p in [0, 3, 7, 12, 16, 40] {
            assert_eq!(eligibility(OffenseClass::FelonyC, p), Eligibility::ActiveOnly);
        }
        assert_eq!(eligibility(OffenseClass::FelonyI, 0), Eligibility::CommunityOrIntermediate);
        assert_eq!(eligibility(OffenseClass::FelonyH, 0), Eligibility::MixedActive);
        assert_eq!(eligibility(OffenseClass::MisdemeanorA1, 0), Eligibility::MixedActive);
    }

    #[test]
    fn level_boundaries() {
        assert_eq!(felony_level(4), 1);
        assert_eq!(felony_level(5), 2);
        assert_eq!(felony_level(19), 5);
        assert_eq!(misdemeanor_level(5), 2);
    }
}
