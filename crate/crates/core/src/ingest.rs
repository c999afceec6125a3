//! Parsing completions into item vectors and assembling datasets.
//!
//! A completion is valid only if it is exactly `n_items` comma-separated
//! integers inside the Likert range (surrounding whitespace and one trailing
//! period tolerated). Anything else becomes an all-missing vector. The three
//! prompt variants of a persona are then averaged item by item over the
//! present values.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{CompletionResult, CompletionStatus};
use crate::prompt::ScaleDefinition;
use crate::sampling::{Ethnicity, Gender, Persona};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("persona {persona_id} has {count} completions, expected 3")]
    IncompleteEnsemble { persona_id: String, count: usize },
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("duplicate respondent id {0}")]
    DuplicateId(String),
    #[error("row {row}: {reason}")]
    BadValue { row: usize, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One respondent's answers; `None` is missing.
pub type ItemVector = Vec<Option<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedLine {
    Valid(Vec<f64>),
    Invalid(String),
}

impl ParsedLine {
    pub fn is_valid(&self) -> bool {
        matches!(self, ParsedLine::Valid(_))
    }

    pub fn into_vector(self, n_items: usize) -> ItemVector {
        match self {
            ParsedLine::Valid(v) => v.into_iter().map(Some).collect(),
            ParsedLine::Invalid(_) => vec![None; n_items],
        }
    }
}

pub fn parse_line(raw_text: &str, scale: &ScaleDefinition) -> ParsedLine {
    let mut text = raw_text.trim();
    if let Some(stripped) = text.strip_suffix('.') {
        text = stripped.trim_end();
    }
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != scale.n_items() {
        return ParsedLine::Invalid(format!(
            "expected {} values, found {}",
            scale.n_items(),
            fields.len()
        ));
    }
    let mut values = Vec::with_capacity(fields.len());
    for f in fields {
        let v: i64 = match f.parse() {
            Ok(v) => v,
            Err(_) => return ParsedLine::Invalid(format!("non-numeric value {f:?}")),
        };
        if v < scale.likert_min as i64 || v > scale.likert_max as i64 {
            return ParsedLine::Invalid(format!("value {v} outside Likert range"));
        }
        values.push(v as f64);
    }
    ParsedLine::Valid(values)
}

/// Which of the three prompt variants contributed to an item (bit `t-1` for
/// template slot `t`).
pub type Contributors = u8;

/// Item-level mean of the present values across three vectors, with the
/// contributor mask per item.
pub fn ensemble_with_provenance(
    vectors: [&ItemVector; 3],
) -> Result<(ItemVector, Vec<Contributors>), IngestError> {
    let n = vectors[0].len();
    if vectors.iter().any(|v| v.len() != n) {
        return Err(IngestError::ShapeError(format!(
            "ensemble lengths {:?}",
            vectors.iter().map(|v| v.len()).collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0;
        let mut m = 0u8;
        for (slot, v) in vectors.iter().enumerate() {
            if let Some(x) = v[i] {
                sum += x;
                count += 1;
                m |= 1 << slot;
            }
        }
        out.push((count > 0).then(|| sum / count as f64));
        mask.push(m);
    }
    Ok((out, mask))
}

pub fn ensemble_average(
    v1: &ItemVector,
    v2: &ItemVector,
    v3: &ItemVector,
) -> Result<ItemVector, IngestError> {
    ensemble_with_provenance([v1, v2, v3]).map(|(v, _)| v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Simulated,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Real => "real",
            Source::Simulated => "simulated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    pub age: Option<u32>,
    pub gender: Option<Gender>,
    pub ethnicity: Ethnicity,
    pub values: ItemVector,
}

impl Respondent {
    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn all_missing(&self) -> bool {
        self.values.iter().all(Option::is_none)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    pub source: Source,
    pub scale: ScaleDefinition,
    pub rows: Vec<Respondent>,
}

impl ResponseMatrix {
    /// Validates ids, shapes and ranges. Present values must lie within the
    /// Likert range; nothing is clamped.
    pub fn new(
        source: Source,
        scale: ScaleDefinition,
        rows: Vec<Respondent>,
    ) -> Result<Self, IngestError> {
        let mut ids = HashSet::new();
        let (lo, hi) = (scale.likert_min as f64, scale.likert_max as f64);
        for (i, r) in rows.iter().enumerate() {
            if !ids.insert(r.id.as_str()) {
                return Err(IngestError::DuplicateId(r.id.clone()));
            }
            if r.values.len() != scale.n_items() {
                return Err(IngestError::ShapeError(format!(
                    "row {} has {} items, scale has {}",
                    i + 1,
                    r.values.len(),
                    scale.n_items()
                )));
            }
            if let Some(v) = r.values.iter().flatten().find(|v| !(lo..=hi).contains(*v)) {
                return Err(IngestError::BadValue {
                    row: i + 1,
                    reason: format!("value {v} outside [{lo}, {hi}]"),
                });
            }
        }
        Ok(Self { source, scale, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.scale.n_items()
    }

    /// Listwise deletion: keeps rows without missing items. Returns the number dropped.
    pub fn complete_cases(&self) -> (ResponseMatrix, usize) {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.is_complete()).cloned().collect();
        let dropped = self.rows.len() - rows.len();
        (
            ResponseMatrix {
                source: self.source,
                scale: self.scale.clone(),
                rows,
            },
            dropped,
        )
    }

    /// Rows × items matrix of a complete-case matrix.
    pub fn data(&self) -> Result<DMatrix<f64>, IngestError> {
        let p = self.n_items();
        let mut m = DMatrix::zeros(self.rows.len(), p);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r.values.iter().enumerate() {
                m[(i, j)] = v.ok_or_else(|| IngestError::BadValue {
                    row: i + 1,
                    reason: format!("item_{} missing; apply complete_cases first", j + 1),
                })?;
            }
        }
        Ok(m)
    }

    /// Keeps only the given item columns, in order.
    pub fn select_items(&self, items: &[usize]) -> ResponseMatrix {
        let scale = ScaleDefinition {
            items: items.iter().map(|&i| self.scale.items[i].clone()).collect(),
            ..self.scale.clone()
        };
        let rows = self
            .rows
            .iter()
            .map(|r| Respondent {
                values: items.iter().map(|&i| r.values[i]).collect(),
                ..r.clone()
            })
            .collect();
        ResponseMatrix {
            source: self.source,
            scale,
            rows,
        }
    }

    pub fn filter_rows(&self, keep: impl Fn(&Respondent) -> bool) -> ResponseMatrix {
        ResponseMatrix {
            source: self.source,
            scale: self.scale.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn has_gender(&self) -> bool {
        self.rows.iter().any(|r| r.gender.is_some())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![
            "id".to_string(),
            "age".into(),
            "gender".into(),
            "ethnicity".into(),
            "source".into(),
        ];
        header.extend(self.scale.item_columns());
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.id.clone(),
                r.age.map(|a| a.to_string()).unwrap_or_default(),
                r.gender.map(|g| g.to_string()).unwrap_or_default(),
                r.ethnicity.to_string(),
                self.source.to_string(),
            ];
            rec.extend(r.values.iter().map(|v| v.map(format_value).unwrap_or_default()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a dataset written by [`ResponseMatrix::write_csv`].
    pub fn read_csv<R: Read>(reader: R, scale: &ScaleDefinition) -> Result<Self, IngestError> {
        let map = ColumnMap::standard(scale);
        let loaded = load_real(reader, scale, &map, &LoadOptions::default())?;
        let source = loaded.source_column.unwrap_or(Source::Real);
        Ok(ResponseMatrix {
            source,
            ..loaded.matrix
        })
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Per-respondent, per-item contributing template slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub rows: Vec<(String, Vec<Contributors>)>,
}

impl Provenance {
    /// Fraction of (respondent, item) cells fed by fewer than three templates.
    pub fn gap_rate(&self) -> f64 {
        let (mut gaps, mut total) = (0usize, 0usize);
        for (_, mask) in &self.rows {
            for m in mask {
                total += 1;
                if m.count_ones() < 3 {
                    gaps += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            gaps as f64 / total as f64
        }
    }

    /// Fraction of respondents with at least one template dropped.
    pub fn respondent_gap_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let n = self
            .rows
            .iter()
            .filter(|(_, m)| m.iter().any(|x| x.count_ones() < 3))
            .count();
        n as f64 / self.rows.len() as f64
    }

    /// CSV sidecar: `id,item_1..item_k` with each cell listing contributing
    /// template slots, e.g. `123` or `13`; empty when none contributed.
    pub fn write_csv<W: Write>(&self, writer: W, n_items: usize) -> Result<(), IngestError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend((1..=n_items).map(|i| format!("item_{i}")));
        wtr.write_record(&header)?;
        for (id, mask) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(mask.iter().map(|m| {
                (0..3)
                    .filter(|b| m & (1 << b) != 0)
                    .map(|b| char::from(b'1' + b as u8))
                    .collect::<String>()
            }));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub matrix: ResponseMatrix,
    pub provenance: Provenance,
    /// Personas whose three completions were all invalid.
    pub all_invalid: Vec<String>,
}

/// Builds the simulated dataset: one row per roster persona, in roster order.
/// Each persona must have exactly three results; their template ids are
/// ordered ascending to define the contributor slots.
pub fn assemble(
    results: &[CompletionResult],
    roster: &[Persona],
    scale: &ScaleDefinition,
) -> Result<Assembled, IngestError> {
    let mut by_persona: HashMap<&str, Vec<&CompletionResult>> = HashMap::new();
    for r in results {
        by_persona.entry(r.persona_id.as_str()).or_default().push(r);
    }
    let n = scale.n_items();
    let mut rows = Vec::with_capacity(roster.len());
    let mut provenance = Provenance::default();
    let mut all_invalid = Vec::new();
    for p in roster {
        let mut rs = by_persona.remove(p.id.as_str()).unwrap_or_default();
        if rs.len() != 3 {
            return Err(IngestError::IncompleteEnsemble {
                persona_id: p.id.clone(),
                count: rs.len(),
            });
        }
        rs.sort_by_key(|r| r.template_id);
        let vectors: Vec<ItemVector> = rs
            .iter()
            .map(|r| match r.status {
                CompletionStatus::Ok => parse_line(&r.raw_text, scale).into_vector(n),
                _ => vec![None; n],
            })
            .collect();
        let (values, mask) = ensemble_with_provenance([&vectors[0], &vectors[1], &vectors[2]])?;
        if values.iter().all(Option::is_none) {
            all_invalid.push(p.id.clone());
        }
        provenance.rows.push((p.id.clone(), mask));
        rows.push(Respondent {
            id: p.id.clone(),
            age: Some(p.age),
            gender: Some(p.gender),
            ethnicity: p.ethnicity,
            values,
        });
    }
    if let Some((extra, _)) = by_persona.into_iter().next() {
        return Err(IngestError::SchemaError(format!(
            "completion for persona {extra} not in roster"
        )));
    }
    let matrix = ResponseMatrix::new(Source::Simulated, scale.clone(), rows)?;
    Ok(Assembled {
        matrix,
        provenance,
        all_invalid,
    })
}

/// Maps dataset columns to respondent fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub id: String,
    pub age: Option<String>,
    pub gender: Option<String>,
    pub ethnicity: Option<String>,
    pub items: Vec<String>,
}

impl ColumnMap {
    /// `id,age,gender,ethnicity,item_1..item_k`.
    pub fn standard(scale: &ScaleDefinition) -> Self {
        Self {
            id: "id".into(),
            age: Some("age".into()),
            gender: Some("gender".into()),
            ethnicity: Some("ethnicity".into()),
            items: scale.item_columns(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Remove every row whose id occurs more than once instead of failing.
    pub drop_duplicates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub matrix: ResponseMatrix,
    pub duplicates_removed: usize,
    /// Cells that failed validation and were read as missing.
    pub invalid_cells: usize,
    source_column: Option<Source>,
}

pub fn load_real_csv(
    path: &Path,
    scale: &ScaleDefinition,
    map: &ColumnMap,
    options: &LoadOptions,
) -> Result<LoadReport, IngestError> {
    let file = std::fs::File::open(path)?;
    load_real(file, scale, map, options)
}

/// Reads a real-respondent dataset. Item cells get the same validation as
/// [`parse_line`]: empty, non-numeric or out-of-range cells become missing.
pub fn load_real<R: Read>(
    reader: R,
    scale: &ScaleDefinition,
    map: &ColumnMap,
    options: &LoadOptions,
) -> Result<LoadReport, IngestError> {
    if map.items.len() != scale.n_items() {
        return Err(IngestError::SchemaError(format!(
            "column map lists {} items, scale has {}",
            map.items.len(),
            scale.n_items()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.clone(),
        Ok(_) => return Err(IngestError::SchemaError("empty file".into())),
        Err(e) => return Err(IngestError::SchemaError(e.to_string())),
    };
    let col = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::SchemaError(format!("missing column {name:?}")))
    };
    let id_col = col(&map.id)?;
    let opt_col = |name: &Option<String>| -> Result<Option<usize>, IngestError> {
        name.as_deref().map(col).transpose()
    };
    let age_col = opt_col(&map.age)?;
    let gender_col = opt_col(&map.gender)?;
    let eth_col = opt_col(&map.ethnicity)?;
    let source_col = headers.iter().position(|h| h == "source");
    let item_cols = map
        .items
        .iter()
        .map(|n| col(n))
        .collect::<Result<Vec<_>, _>>()?;

    let (lo, hi) = (scale.likert_min as f64, scale.likert_max as f64);
    let mut rows = Vec::new();
    let mut invalid_cells = 0;
    let mut source_column = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |reason: String| IngestError::BadValue { row, reason };
        let id = rec[id_col].to_string();
        if id.is_empty() {
            return Err(bad("empty id".into()));
        }
        let age = match age_col.map(|c| &rec[c]) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|_| bad(format!("age {s:?}")))?
                    .round() as u32,
            ),
        };
        let gender = match gender_col.map(|c| &rec[c]) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|e: crate::sampling::SamplingError| bad(e.to_string()))?),
        };
        let ethnicity = match eth_col.map(|c| &rec[c]) {
            None => Ethnicity::Unspecified,
            Some(s) => s.parse().map_err(|e: crate::sampling::SamplingError| bad(e.to_string()))?,
        };
        if let Some(c) = source_col {
            source_column = match rec[c].to_ascii_lowercase().as_str() {
                "simulated" | "sim" => Some(Source::Simulated),
                _ => Some(Source::Real),
            };
        }
        let values = item_cols
            .iter()
            .map(|&c| {
                let s = &rec[c];
                if s.is_empty() {
                    return None;
                }
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() && (lo..=hi).contains(&v) => Some(v),
                    _ => {
                        invalid_cells += 1;
                        None
                    }
                }
            })
            .collect();
        rows.push(Respondent {
            id,
            age,
            gender,
            ethnicity,
            values,
        });
    }
    if rows.is_empty() {
        return Err(IngestError::SchemaError("no data rows".into()));
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in &rows {
        *counts.entry(r.id.as_str()).or_default() += 1;
    }
    let dup_ids: HashSet<String> = counts
        .into_iter()
        .filter(|(_, c)| *c > 1)
        .map(|(id, _)| id.to_string())
        .collect();
    let mut duplicates_removed = 0;
    if !dup_ids.is_empty() {
        if !options.drop_duplicates {
            let mut ids: Vec<_> = dup_ids.into_iter().collect();
            ids.sort();
            return Err(IngestError::DuplicateId(ids.join(", ")));
        }
        let before = rows.len();
        rows.retain(|r| !dup_ids.contains(&r.id));
        duplicates_removed = before - rows.len();
        log::info!("removed {duplicates_removed} rows with duplicated ids");
    }
    let matrix = ResponseMatrix::new(Source::Real, scale.clone(), rows)?;
    Ok(LoadReport {
        matrix,
        duplicates_removed,
        invalid_cells,
        source_column,
    })
}

/// How subscale scores combine their items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    #[default]
    Mean,
    Sum,
}

/// Per-row subscale scores for complete rows; `None` where an item is missing.
pub fn subscale_scores(
    matrix: &ResponseMatrix,
    items: &[usize],
    method: ScoreMethod,
) -> Vec<Option<f64>> {
    matrix
        .rows
        .iter()
        .map(|r| {
            let vals: Option<Vec<f64>> = items.iter().map(|&i| r.values[i]).collect();
            vals.map(|v| {
                let s: f64 = v.iter().sum();
                match method {
                    ScoreMethod::Mean => s / v.len() as f64,
                    ScoreMethod::Sum => s,
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scale3() -> ScaleDefinition {
        ScaleDefinition::generic("s", 3, 1, 5)
    }

    #[test]
    fn parse_examples() {
        let s = scale3();
        assert_eq!(parse_line("3,4,2", &s), ParsedLine::Valid(vec![3.0, 4.0, 2.0]));
        assert_eq!(parse_line("  3 , 4,2. ", &s), ParsedLine::Valid(vec![3.0, 4.0, 2.0]));
        assert!(!parse_line("3,4", &s).is_valid());
        assert!(!parse_line("1, 5, 6", &s).is_valid());
        assert!(!parse_line("1, five, 3", &s).is_valid());
        assert!(!parse_line("Sure: 1,2,3", &s).is_valid());
        assert!(!parse_line("", &s).is_valid());
        assert_eq!(parse_line("3,4", &s).into_vector(3), vec![None; 3]);
    }

    #[test]
    fn ensemble_examples() {
        let a = vec![Some(4.0), None, Some(2.0)];
        let b = vec![Some(2.0), Some(3.0), None];
        let c = vec![Some(3.0), Some(3.0), Some(5.0)];
        assert_eq!(
            ensemble_average(&a, &b, &c).unwrap(),
            vec![Some(3.0), Some(3.0), Some(3.5)]
        );
        assert_eq!(ensemble_average(&c, &c, &c).unwrap(), c);
        let none = vec![None; 3];
        assert_eq!(ensemble_average(&none, &none, &none).unwrap(), none);
        assert!(matches!(
            ensemble_average(&a, &b, &vec![None; 2]),
            Err(IngestError::ShapeError(_))
        ));
    }

    fn persona(id: &str) -> Persona {
        Persona {
            id: id.into(),
            age: 30,
            gender: Gender::Male,
            ethnicity: Ethnicity::White,
            locale: "United Kingdom".into(),
        }
    }

    fn result(p: &str, t: u8, text: &str) -> CompletionResult {
        CompletionResult {
            persona_id: p.into(),
            template_id: t,
            raw_text: text.into(),
            status: CompletionStatus::Ok,
            attempt_count: 1,
        }
    }

    #[test]
    fn assemble_two_personas() {
        let roster = vec![persona("a"), persona("b")];
        let results = vec![
            result("b", 3, "1,1,1"),
            result("a", 1, "1,2,3"),
            result("a", 2, "3,2"),
            result("a", 3, "3,2,1"),
            result("b", 1, "x"),
            result("b", 2, "bad"),
        ];
        let out = assemble(&results, &roster, &scale3()).unwrap();
        assert_eq!(out.matrix.n_rows(), 2);
        assert_eq!(out.matrix.source, Source::Simulated);
        assert_eq!(out.matrix.rows[0].values, vec![Some(2.0), Some(2.0), Some(2.0)]);
        assert_eq!(out.provenance.rows[0].1, vec![0b101; 3]);
        assert_eq!(out.provenance.rows[1].1, vec![0b100; 3]);
        assert!(out.all_invalid.is_empty());

        let err = assemble(&results[..5], &roster, &scale3()).unwrap_err();
        assert!(matches!(err, IngestError::IncompleteEnsemble { count: 2, .. }));

        let mut buf = Vec::new();
        out.provenance.write_csv(&mut buf, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,item_1,item_2,item_3\na,13,13,13\nb,3,3,3"));
    }

    #[test]
    fn all_invalid_is_flagged_and_deleted_listwise() {
        let roster = vec![persona("a"), persona("b")];
        let results = vec![
            result("a", 1, "no"),
            result("a", 2, "no"),
            result("a", 3, "no"),
            result("b", 1, "1,2,3"),
            result("b", 2, "1,2,3"),
            result("b", 3, "1,2,3"),
        ];
        let out = assemble(&results, &roster, &scale3()).unwrap();
        assert_eq!(out.all_invalid, vec!["a".to_string()]);
        let (cc, dropped) = out.matrix.complete_cases();
        assert_eq!((cc.n_rows(), dropped), (1, 1));
    }

    #[test]
    fn dataset_csv_roundtrip() {
        let m = ResponseMatrix::new(
            Source::Simulated,
            scale3(),
            vec![Respondent {
                id: "x".into(),
                age: Some(40),
                gender: Some(Gender::Female),
                ethnicity: Ethnicity::Asian,
                values: vec![Some(1.0), None, Some(3.5)],
            }],
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "id,age,gender,ethnicity,source,item_1,item_2,item_3\nx,40,female,asian,simulated,1,,3.5\n"
        );
        assert_eq!(ResponseMatrix::read_csv(&buf[..], &scale3()).unwrap(), m);
    }

    #[test]
    fn real_csv_loading() {
        let s = scale3();
        let map = ColumnMap::standard(&s);
        let good = "id,age,gender,ethnicity,item_1,item_2,item_3\n1,30,m,white,1,2,3\n2,40,f,asian,4,9,\n";
        let r = load_real(good.as_bytes(), &s, &map, &LoadOptions::default()).unwrap();
        assert_eq!(r.matrix.n_rows(), 2);
        assert_eq!(r.matrix.source, Source::Real);
        assert_eq!(r.invalid_cells, 1);
        assert_eq!(r.matrix.rows[1].values, vec![Some(4.0), None, None]);

        let dup = "id,age,gender,ethnicity,item_1,item_2,item_3\n1,30,m,white,1,2,3\n1,31,m,white,1,2,3\n2,40,f,asian,4,4,4\n";
        assert!(matches!(
            load_real(dup.as_bytes(), &s, &map, &LoadOptions::default()),
            Err(IngestError::DuplicateId(_))
        ));
        let r = load_real(dup.as_bytes(), &s, &map, &LoadOptions { drop_duplicates: true }).unwrap();
        assert_eq!((r.matrix.n_rows(), r.duplicates_removed), (1, 2));

        assert!(matches!(
            load_real("".as_bytes(), &s, &map, &LoadOptions::default()),
            Err(IngestError::SchemaError(_))
        ));
        let missing = "id,age,gender,item_1,item_2\n1,30,m,1,2\n";
        assert!(matches!(
            load_real(missing.as_bytes(), &s, &map, &LoadOptions::default()),
            Err(IngestError::SchemaError(_))
        ));
        let no_eth = ColumnMap {
            ethnicity: None,
            ..map.clone()
        };
        let r = load_real(
            "id,age,gender,item_1,item_2,item_3\n7,50,female,2,2,2\n".as_bytes(),
            &s,
            &no_eth,
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(r.matrix.rows[0].ethnicity, Ethnicity::Unspecified);
    }

    #[test]
    fn scores() {
        let m = ResponseMatrix::new(
            Source::Real,
            scale3(),
            vec![Respondent {
                id: "x".into(),
                age: None,
                gender: None,
                ethnicity: Ethnicity::Unspecified,
                values: vec![Some(1.0), Some(2.0), None],
            }],
        )
        .unwrap();
        assert_eq!(subscale_scores(&m, &[0, 1], ScoreMethod::Mean), vec![Some(1.5)]);
        assert_eq!(subscale_scores(&m, &[0, 1], ScoreMethod::Sum), vec![Some(3.0)]);
        assert_eq!(subscale_scores(&m, &[1, 2], ScoreMethod::Mean), vec![None]);
    }

    #[test]
    fn out_of_range_is_rejected_not_clamped() {
        let err = ResponseMatrix::new(
            Source::Real,
            scale3(),
            vec![Respondent {
                id: "x".into(),
                age: None,
                gender: None,
                ethnicity: Ethnicity::Unspecified,
                values: vec![Some(0.0), Some(2.0), Some(2.0)],
            }],
        );
        assert!(matches!(err, Err(IngestError::BadValue { .. })));
    }

    proptest! {
        #[test]
        fn parse_roundtrip(values in prop::collection::vec(1i32..=7, 1..20), pad in 0usize..3) {
            let scale = ScaleDefinition::generic("s", values.len(), 1, 7);
            let sep = format!(",{}", " ".repeat(pad));
            let text = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(&sep);
            let want: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            prop_assert_eq!(parse_line(&text, &scale), ParsedLine::Valid(want));
        }

        #[test]
        fn ensemble_is_permutation_invariant(
            raw in prop::collection::vec((prop::option::of(1u8..=5), prop::option::of(1u8..=5), prop::option::of(1u8..=5)), 1..10)
        ) {
            let a: ItemVector = raw.iter().map(|t| t.0.map(f64::from)).collect();
            let b: ItemVector = raw.iter().map(|t| t.1.map(f64::from)).collect();
            let c: ItemVector = raw.iter().map(|t| t.2.map(f64::from)).collect();
            let base = ensemble_average(&a, &b, &c).unwrap();
            for perm in [(&b, &a, &c), (&c, &b, &a), (&a, &c, &b), (&b, &c, &a)] {
                let other = ensemble_average(perm.0, perm.1, perm.2).unwrap();
                for (x, y) in base.iter().zip(&other) {
                    match (x, y) {
                        (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                        (None, None) => {}
                        _ => prop_assert!(false),
                    }
                }
            }
            for v in base.iter().flatten() {
                prop_assert!((1.0..=5.0).contains(v));
            }
        }
    }
}
