use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Estimator, FactorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identification {
    /// First loading of each factor fixed to 1.
    #[default]
    Marker,
    /// Factor variances fixed to 1 (in the first group).
    VarianceStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    /// Zero-based data column indices.
    pub items: Vec<usize>,
}

/// Simple-structure measurement model: every listed item loads on exactly one
/// factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub factors: Vec<FactorSpec>,
    #[serde(default)]
    pub identification: Identification,
    #[serde(default = "yes")]
    pub correlated_factors: bool,
}

fn yes() -> bool {
    true
}

impl MeasurementModel {
    pub fn new(factors: Vec<(String, Vec<usize>)>) -> Result<Self, FactorError> {
        let model = Self {
            factors: factors
                .into_iter()
                .map(|(name, items)| FactorSpec { name, items })
                .collect(),
            identification: Identification::Marker,
            correlated_factors: true,
        };
        model.validate(None)?;
        Ok(model)
    }

    /// `n_factors` consecutive blocks of `per_factor` items named `F1..`.
    pub fn blocks(n_factors: usize, per_factor: usize) -> Self {
        Self::new(
            (0..n_factors)
                .map(|f| {
                    (
                        format!("F{}", f + 1),
                        (f * per_factor..(f + 1) * per_factor).collect(),
                    )
                })
                .collect(),
        )
        .expect("block model is valid")
    }

    pub fn with_identification(mut self, id: Identification) -> Self {
        self.identification = id;
        self
    }

    pub fn with_correlated(mut self, correlated: bool) -> Self {
        self.correlated_factors = correlated;
        self
    }

    pub fn validate(&self, n_columns: Option<usize>) -> Result<(), FactorError> {
        if self.factors.is_empty() {
            return Err(FactorError::InvalidModel("no factors".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.factors {
            if f.items.is_empty() {
                return Err(FactorError::InvalidModel(format!("factor {} has no items", f.name)));
            }
            for &i in &f.items {
                if !seen.insert(i) {
                    return Err(FactorError::InvalidModel(format!(
                        "column {i} loads on more than one factor"
                    )));
                }
                if let Some(n) = n_columns {
                    if i >= n {
                        return Err(FactorError::InvalidModel(format!(
                            "column {i} out of range for {n} columns"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    /// Data columns in model order (factor by factor).
    pub fn item_order(&self) -> Vec<usize> {
        self.factors.iter().flat_map(|f| f.items.iter().copied()).collect()
    }

    pub fn n_items(&self) -> usize {
        self.factors.iter().map(|f| f.items.len()).sum()
    }

    /// Factor of each observed variable, in model order.
    pub(crate) fn assignment(&self) -> Vec<usize> {
        self.factors
            .iter()
            .enumerate()
            .flat_map(|(f, spec)| std::iter::repeat_n(f, spec.items.len()))
            .collect()
    }

    /// Renders in the text format read by [`parse_model_spec`].
    pub fn to_spec_string(&self, columns: &[String], estimator: Option<Estimator>) -> String {
        let mut out = String::new();
        out.push_str(match self.identification {
            Identification::Marker => "identification = marker\n",
            Identification::VarianceStd => "identification = variance_std\n",
        });
        out.push_str(&format!("correlated = {}\n", self.correlated_factors));
        if let Some(e) = estimator {
            out.push_str(&format!("estimator = {}\n", e.as_str()));
        }
        for f in &self.factors {
            let names: Vec<&str> = f.items.iter().map(|&i| columns[i].as_str()).collect();
            out.push_str(&format!("{}: {}\n", f.name, names.join(" ")));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: MeasurementModel,
    pub estimator: Option<Estimator>,
}

/// Parses `factor: item_a item_b` lines plus `key = value` options
/// (`identification`, `estimator`, `correlated`). Items are column names, or
/// 1-based column numbers. `#` starts a comment.
pub fn parse_model_spec(text: &str, columns: &[String]) -> Result<ModelSpec, FactorError> {
    let mut factors = Vec::new();
    let mut identification = Identification::Marker;
    let mut correlated = true;
    let mut estimator = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| FactorError::Spec {
            line: lineno + 1,
            reason,
        };
        if let Some((key, value)) = line.split_once('=') {
            let value = value.trim().to_ascii_lowercase();
            match key.trim() {
                "identification" => {
                    identification = match value.as_str() {
                        "marker" => Identification::Marker,
                        "variance_std" | "std" => Identification::VarianceStd,
                        v => return Err(err(format!("unknown identification {v:?}"))),
                    }
                }
                "estimator" => {
                    estimator = Some(value.parse().map_err(err)?);
                }
                "correlated" => {
                    correlated = match value.as_str() {
                        "true" | "yes" => true,
                        "false" | "no" => false,
                        v => return Err(err(format!("expected true/false, got {v:?}"))),
                    }
                }
                k => return Err(err(format!("unknown option {k:?}"))),
            }
            continue;
        }
        let Some((name, items)) = line.split_once(':') else {
            return Err(err("expected `factor: items` or `key = value`".into()));
        };
        let name = name.trim();
        if name.is_empty() {
            return Err(err("empty factor name".into()));
        }
        let mut idx = Vec::new();
        for tok in items.split_whitespace() {
            let col = match columns.iter().position(|c| c == tok) {
                Some(c) => c,
                None => match tok.parse::<usize>() {
                    Ok(k) if k >= 1 && k <= columns.len() => k - 1,
                    _ => return Err(err(format!("unknown item {tok:?}"))),
                },
            };
            idx.push(col);
        }
        factors.push(FactorSpec {
            name: name.to_string(),
            items: idx,
        });
    }
    let model = MeasurementModel {
        factors,
        identification,
        correlated_factors: correlated,
    };
    model.validate(Some(columns.len()))?;
    Ok(ModelSpec { model, estimator })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(n: usize) -> Vec<String> {
        (1..=n).map(|k| format!("item_{k}")).collect()
    }

    #[test]
    fn parses_factors_and_options() {
        let text = "# three factors\nestimator = mlr\nA: item_1 item_2 item_3\nB: item_4 5 item_6\nC: item_9 item_8 item_7\n";
        let spec = parse_model_spec(text, &cols(9)).unwrap();
        assert_eq!(spec.estimator, Some(Estimator::Mlr));
        assert_eq!(spec.model.factors[1].items, vec![3, 4, 5]);
        assert_eq!(spec.model.factors[2].items, vec![8, 7, 6]);
        assert_eq!(spec.model.item_order().len(), 9);
        let back = spec.model.to_spec_string(&cols(9), spec.estimator);
        assert_eq!(parse_model_spec(&back, &cols(9)).unwrap(), spec);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(matches!(
            parse_model_spec("A: item_1 item_2\nB: item_2", &cols(3)),
            Err(FactorError::InvalidModel(_))
        ));
        assert!(matches!(
            parse_model_spec("A: item_7", &cols(3)),
            Err(FactorError::Spec { line: 1, .. })
        ));
        assert!(matches!(
            parse_model_spec("A:", &cols(3)),
            Err(FactorError::InvalidModel(_))
        ));
        assert!(parse_model_spec("", &cols(3)).is_err());
    }
}
