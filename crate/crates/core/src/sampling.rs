//! Demographic quota tables and persona rosters.
//!
//! A [`QuotaTable`] lists `(age bracket, gender, ethnicity) -> count` cells. Expanding
//! it yields one [`Persona`] per counted slot with an exact age drawn uniformly
//! from the cell's inclusive bracket.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const DEFAULT_LOCALE: &str = "United Kingdom";

/// Table-1-compatible default quota (322 personas; 156 male, 166 female).
/// Bracket edges are illustrative, not the recruitment platform's own.
pub const STUDY1_QUOTA_CSV: &str = include_str!("../data/quota_study1.csv");

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("quota table is empty")]
    EmptyQuota,
    #[error("invalid quota cell {index}: age_min {age_min} > age_max {age_max}")]
    InvalidCell {
        index: usize,
        age_min: u32,
        age_max: u32,
    },
    #[error("duplicate quota cell key {0}")]
    DuplicateCell(String),
    #[error("cell counts sum to {sum} but target_n is {target_n}")]
    CountMismatch { sum: usize, target_n: usize },
    #[error("age {0} does not fall in any bracket")]
    UnbracketedAge(u32),
    #[error("age brackets overlap: {0} and {1}")]
    OverlappingBrackets(AgeBracket, AgeBracket),
    #[error("unknown {field} value {value:?}")]
    UnknownValue { field: &'static str, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Other,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Other => "other",
        }
    }

    /// Capitalized label used inside prompts.
    pub fn label(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
            Gender::Other => "Non-binary",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" | "man" | "men" => Ok(Gender::Male),
            "female" | "f" | "woman" | "women" => Ok(Gender::Female),
            "other" | "o" | "non-binary" | "nonbinary" => Ok(Gender::Other),
            _ => Err(SamplingError::UnknownValue {
                field: "gender",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ethnicity {
    Asian,
    Black,
    Mixed,
    White,
    Other,
    Unspecified,
}

impl Ethnicity {
    pub fn as_str(self) -> &'static str {
        match self {
            Ethnicity::Asian => "asian",
            Ethnicity::Black => "black",
            Ethnicity::Mixed => "mixed",
            Ethnicity::White => "white",
            Ethnicity::Other => "other",
            Ethnicity::Unspecified => "unspecified",
        }
    }

    /// Capitalized label used inside prompts; `None` for unspecified.
    pub fn label(self) -> Option<&'static str> {
        match self {
            Ethnicity::Asian => Some("Asian"),
            Ethnicity::Black => Some("Black"),
            Ethnicity::Mixed => Some("Mixed"),
            Ethnicity::White => Some("White"),
            Ethnicity::Other => Some("Other"),
            Ethnicity::Unspecified => None,
        }
    }
}

impl fmt::Display for Ethnicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ethnicity {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asian" => Ok(Ethnicity::Asian),
            "black" => Ok(Ethnicity::Black),
            "mixed" => Ok(Ethnicity::Mixed),
            "white" => Ok(Ethnicity::White),
            "other" => Ok(Ethnicity::Other),
            "" | "unspecified" | "na" | "n/a" => Ok(Ethnicity::Unspecified),
            _ => Err(SamplingError::UnknownValue {
                field: "ethnicity",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgeBracket {
    pub min: u32,
    pub max: u32,
}

impl AgeBracket {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, age: u32) -> bool {
        self.min <= age && age <= self.max
    }
}

impl fmt::Display for AgeBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.min, self.max)
    }
}

/// Default brackets matching [`STUDY1_QUOTA_CSV`].
pub fn default_brackets() -> Vec<AgeBracket> {
    vec![
        AgeBracket::new(18, 24),
        AgeBracket::new(25, 34),
        AgeBracket::new(35, 44),
        AgeBracket::new(45, 54),
        AgeBracket::new(55, 64),
        AgeBracket::new(65, 120),
    ]
}

/// Index of the single bracket containing `age`.
pub fn bracket_of(brackets: &[AgeBracket], age: u32) -> Option<usize> {
    brackets.iter().position(|b| b.contains(age))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaCell {
    pub age_min: u32,
    pub age_max: u32,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
    pub count: usize,
}

impl QuotaCell {
    fn key(&self) -> (u32, u32, Gender, Ethnicity) {
        (self.age_min, self.age_max, self.gender, self.ethnicity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaTable {
    pub cells: Vec<QuotaCell>,
    pub locale: String,
    pub target_n: usize,
}

impl QuotaTable {
    /// Builds a table whose `target_n` is the sum of its cell counts.
    pub fn from_cells(cells: Vec<QuotaCell>) -> Self {
        let target_n = cells.iter().map(|c| c.count).sum();
        Self {
            cells,
            locale: DEFAULT_LOCALE.to_string(),
            target_n,
        }
    }

    pub fn study1_default() -> Self {
        Self::read_csv(STUDY1_QUOTA_CSV.as_bytes()).expect("bundled quota table parses")
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.cells.is_empty() || self.target_n == 0 {
            return Err(SamplingError::EmptyQuota);
        }
        let mut seen = HashSet::new();
        for (index, cell) in self.cells.iter().enumerate() {
            if cell.age_min > cell.age_max {
                return Err(SamplingError::InvalidCell {
                    index,
                    age_min: cell.age_min,
                    age_max: cell.age_max,
                });
            }
            if !seen.insert(cell.key()) {
                return Err(SamplingError::DuplicateCell(format!(
                    "{}-{},{},{}",
                    cell.age_min, cell.age_max, cell.gender, cell.ethnicity
                )));
            }
        }
        let sum: usize = self.cells.iter().map(|c| c.count).sum();
        if sum != self.target_n {
            return Err(SamplingError::CountMismatch {
                sum,
                target_n: self.target_n,
            });
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SamplingError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut cells = Vec::new();
        for record in rdr.deserialize::<QuotaCell>() {
            cells.push(record?);
        }
        Ok(Self::from_cells(cells))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SamplingError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for cell in &self.cells {
            wtr.serialize(cell)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        buf.extend_from_slice(self.locale.as_bytes());
        buf
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: String,
    pub age: u32,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
    pub locale: String,
}

/// Expands a quota table into a roster of `target_n` personas.
///
/// Cells are visited in table order; ages are uniform over each cell's
/// inclusive range. Ids are `<prefix>-<00001..>` where the prefix is derived
/// from the table contents and the seed.
pub fn expand_quota(table: &QuotaTable, seed: u64) -> Result<Vec<Persona>, SamplingError> {
    table.validate()?;
    let mut bytes = table.canonical_bytes();
    bytes.extend_from_slice(&seed.to_le_bytes());
    let prefix = &seed::sha256_hex(&bytes)[..8];
    let mut rng = seed::rng_for(seed, "roster", 0);
    let mut roster = Vec::with_capacity(table.target_n);
    for cell in &table.cells {
        for _ in 0..cell.count {
            let age = rng.random_range(cell.age_min..=cell.age_max);
            roster.push(Persona {
                id: format!("{prefix}-{:05}", roster.len() + 1),
                age,
                gender: cell.gender,
                ethnicity: cell.ethnicity,
                locale: table.locale.clone(),
            });
        }
    }
    Ok(roster)
}

/// Counts the joint `(bracket, gender, ethnicity)` frequencies of a sample.
///
/// Cells are ordered by bracket, then gender, then ethnicity.
pub fn derive_quota_from_sample(
    demographics: &[(u32, Gender, Ethnicity)],
    brackets: &[AgeBracket],
) -> Result<QuotaTable, SamplingError> {
    check_brackets(brackets)?;
    let mut counts: BTreeMap<(usize, Gender, Ethnicity), usize> = BTreeMap::new();
    for &(age, gender, ethnicity) in demographics {
        let b = bracket_of(brackets, age).ok_or(SamplingError::UnbracketedAge(age))?;
        *counts.entry((b, gender, ethnicity)).or_default() += 1;
    }
    let cells = counts
        .into_iter()
        .map(|((b, gender, ethnicity), count)| QuotaCell {
            age_min: brackets[b].min,
            age_max: brackets[b].max,
            gender,
            ethnicity,
            count,
        })
        .collect();
    Ok(QuotaTable::from_cells(cells))
}

fn check_brackets(brackets: &[AgeBracket]) -> Result<(), SamplingError> {
    for (i, a) in brackets.iter().enumerate() {
        for b in &brackets[i + 1..] {
            if a.min <= b.max && b.min <= a.max {
                return Err(SamplingError::OverlappingBrackets(*a, *b));
            }
        }
    }
    Ok(())
}

/// One persona per real respondent, keeping their id and exact age.
/// Used when simulated respondents are matched one-to-one with a real sample.
pub fn personas_matching(
    records: &[(String, u32, Gender, Ethnicity)],
    locale: &str,
) -> Vec<Persona> {
    records
        .iter()
        .map(|(id, age, gender, ethnicity)| Persona {
            id: id.clone(),
            age: *age,
            gender: *gender,
            ethnicity: *ethnicity,
            locale: locale.to_string(),
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct RosterRow {
    id: String,
    age: u32,
    gender: Gender,
    ethnicity: Ethnicity,
    locale: String,
}

pub fn write_roster<W: Write>(roster: &[Persona], writer: W) -> Result<(), SamplingError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in roster {
        wtr.serialize(RosterRow {
            id: p.id.clone(),
            age: p.age,
            gender: p.gender,
            ethnicity: p.ethnicity,
            locale: p.locale.clone(),
        })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_roster<R: Read>(reader: R) -> Result<Vec<Persona>, SamplingError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<RosterRow>() {
        let row = row?;
        out.push(Persona {
            id: row.id,
            age: row.age,
            gender: row.gender,
            ethnicity: row.ethnicity,
            locale: row.locale,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cell(age_min: u32, age_max: u32, g: Gender, e: Ethnicity, count: usize) -> QuotaCell {
        QuotaCell {
            age_min,
            age_max,
            gender: g,
            ethnicity: e,
            count,
        }
    }

    #[test]
    fn degenerate_bracket() {
        let t = QuotaTable::from_cells(vec![cell(18, 18, Gender::Female, Ethnicity::White, 3)]);
        let roster = expand_quota(&t, 7).unwrap();
        assert_eq!(roster.len(), 3);
        assert!(roster.iter().all(|p| p.age == 18
            && p.gender == Gender::Female
            && p.ethnicity == Ethnicity::White));
    }

    #[test]
    fn study1_roster_counts() {
        let t = QuotaTable::study1_default();
        let roster = expand_quota(&t, 1).unwrap();
        assert_eq!(roster.len(), 322);
        assert_eq!(roster.iter().filter(|p| p.gender == Gender::Male).count(), 156);
        assert_eq!(roster.iter().filter(|p| p.gender == Gender::Female).count(), 166);
        let white = roster.iter().filter(|p| p.ethnicity == Ethnicity::White).count();
        assert_eq!(white, 271);
        let ids: HashSet<_> = roster.iter().map(|p| &p.id).collect();
        assert_eq!(ids.len(), 322);
    }

    #[test]
    fn seeds_change_only_ages() {
        let t = QuotaTable::study1_default();
        let a = expand_quota(&t, 1).unwrap();
        let b = expand_quota(&t, 2).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.gender, x.ethnicity), (y.gender, y.ethnicity));
        }
        assert!(a.iter().zip(&b).any(|(x, y)| x.age != y.age));
    }

    #[test]
    fn errors() {
        let empty = QuotaTable::from_cells(vec![]);
        assert!(matches!(expand_quota(&empty, 1), Err(SamplingError::EmptyQuota)));
        let bad = QuotaTable::from_cells(vec![cell(30, 20, Gender::Male, Ethnicity::Asian, 1)]);
        assert!(matches!(
            expand_quota(&bad, 1),
            Err(SamplingError::InvalidCell { .. })
        ));
        let dup = QuotaTable::from_cells(vec![
            cell(20, 30, Gender::Male, Ethnicity::Asian, 1),
            cell(20, 30, Gender::Male, Ethnicity::Asian, 2),
        ]);
        assert!(matches!(expand_quota(&dup, 1), Err(SamplingError::DuplicateCell(_))));
        let mut off = QuotaTable::from_cells(vec![cell(20, 30, Gender::Male, Ethnicity::Asian, 1)]);
        off.target_n = 5;
        assert!(matches!(
            expand_quota(&off, 1),
            Err(SamplingError::CountMismatch { .. })
        ));
    }

    #[test]
    fn derive_counts_and_errors() {
        let brackets = vec![AgeBracket::new(18, 34)];
        let t = derive_quota_from_sample(
            &[(25, Gender::Male, Ethnicity::White), (25, Gender::Male, Ethnicity::White)],
            &brackets,
        )
        .unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t.cells[0].count, 2);
        assert_eq!(t.target_n, 2);

        let empty = derive_quota_from_sample(&[], &brackets).unwrap();
        assert!(matches!(expand_quota(&empty, 0), Err(SamplingError::EmptyQuota)));

        assert!(matches!(
            derive_quota_from_sample(&[(70, Gender::Male, Ethnicity::White)], &brackets),
            Err(SamplingError::UnbracketedAge(70))
        ));
        assert!(matches!(
            derive_quota_from_sample(&[], &[AgeBracket::new(18, 30), AgeBracket::new(30, 40)]),
            Err(SamplingError::OverlappingBrackets(..))
        ));
    }

    #[test]
    fn missing_ethnicity_is_unspecified() {
        let t = derive_quota_from_sample(
            &[(40, Gender::Female, "".parse().unwrap())],
            &default_brackets(),
        )
        .unwrap();
        assert_eq!(t.cells[0].ethnicity, Ethnicity::Unspecified);
    }

    #[test]
    fn csv_roundtrip() {
        let t = QuotaTable::study1_default();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"age_min,age_max,gender,ethnicity,count\n"));
        assert_eq!(QuotaTable::read_csv(&buf[..]).unwrap(), t);

        let roster = expand_quota(&t, 3).unwrap();
        let mut buf = Vec::new();
        write_roster(&roster, &mut buf).unwrap();
        assert!(buf.starts_with(b"id,age,gender,ethnicity,locale\n"));
        assert_eq!(read_roster(&buf[..]).unwrap(), roster);
    }

    fn arb_table() -> impl Strategy<Value = Vec<(usize, usize, usize, usize)>> {
        // (bracket, gender, ethnicity, count) with unique keys enforced below
        prop::collection::vec((0usize..6, 0usize..2, 0usize..6, 0usize..6), 1..12)
    }

    proptest! {
        #[test]
        fn expansion_preserves_cell_multiset(raw in arb_table(), seed in any::<u64>()) {
            let brackets = default_brackets();
            let genders = [Gender::Male, Gender::Female];
            let eths = [Ethnicity::Asian, Ethnicity::Black, Ethnicity::Mixed,
                        Ethnicity::White, Ethnicity::Other, Ethnicity::Unspecified];
            let mut seen = HashSet::new();
            let cells: Vec<QuotaCell> = raw.into_iter()
                .filter(|(b, g, e, _)| seen.insert((*b, *g, *e)))
                .map(|(b, g, e, n)| cell(brackets[b].min, brackets[b].max, genders[g], eths[e], n))
                .collect();
            let table = QuotaTable::from_cells(cells);
            prop_assume!(table.target_n > 0);
            let roster = expand_quota(&table, seed).unwrap();
            prop_assert_eq!(roster.len(), table.target_n);
            let demo: Vec<_> = roster.iter().map(|p| (p.age, p.gender, p.ethnicity)).collect();
            let back = derive_quota_from_sample(&demo, &brackets).unwrap();
            let mut want: Vec<_> = table.cells.iter().filter(|c| c.count > 0)
                .map(|c| (c.age_min, c.gender, c.ethnicity, c.count)).collect();
            let mut got: Vec<_> = back.cells.iter()
                .map(|c| (c.age_min, c.gender, c.ethnicity, c.count)).collect();
            want.sort();
            got.sort();
            prop_assert_eq!(want, got);
            prop_assert_eq!(expand_quota(&table, seed).unwrap(), roster);
        }
    }
}
