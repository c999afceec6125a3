//! Four-rung invariance ladder and the verdict rules applied to it.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{fit_multigroup, FactorError, FitOptions, FitResult, InvarianceLevel, MeasurementModel};
use crate::ingest::{IngestError, ResponseMatrix};
use crate::sampling::Gender;
use crate::stats::ComparisonReport;

#[derive(Debug, Error)]
pub enum InvarianceError {
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Data(#[from] IngestError),
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("incomplete analysis: {0} has no input")]
    IncompleteAnalysis(String),
}

/// Absolute fit cutoffs. Only CFI gates the configural rung; the rest are
/// reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbsoluteFitGate {
    pub cfi_acceptable: f64,
    pub cfi_good: f64,
    pub tli_acceptable: f64,
    pub tli_good: f64,
    pub rmsea_acceptable: f64,
    pub rmsea_good: f64,
    pub srmr_acceptable: f64,
}

impl Default for AbsoluteFitGate {
    fn default() -> Self {
        Self {
            cfi_acceptable: 0.90,
            cfi_good: 0.95,
            tli_acceptable: 0.90,
            tli_good: 0.95,
            rmsea_acceptable: 0.080,
            rmsea_good: 0.060,
            srmr_acceptable: 0.080,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateAssessment {
    pub passes: bool,
    pub cfi_good: bool,
    pub tli_acceptable: bool,
    pub rmsea_acceptable: bool,
    pub srmr_acceptable: bool,
}

impl AbsoluteFitGate {
    pub fn is_consistent(&self) -> bool {
        self.cfi_good >= self.cfi_acceptable
            && self.tli_good >= self.tli_acceptable
            && self.rmsea_good <= self.rmsea_acceptable
    }

    pub fn assess(&self, cfi: f64, tli: f64, rmsea: f64, srmr: f64) -> GateAssessment {
        GateAssessment {
            passes: cfi >= self.cfi_acceptable - SLACK,
            cfi_good: cfi >= self.cfi_good - SLACK,
            tli_acceptable: tli >= self.tli_acceptable - SLACK,
            rmsea_acceptable: rmsea <= self.rmsea_acceptable + SLACK,
            srmr_acceptable: srmr <= self.srmr_acceptable + SLACK,
        }
    }
}

/// Change-in-fit thresholds between adjacent rungs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeltaCriteria {
    /// Largest tolerated CFI drop.
    pub delta_cfi: f64,
    /// Largest tolerated RMSEA rise.
    pub delta_rmsea: f64,
    /// A failed criterion missing by at most this much is annotated approximate.
    pub approximate_tolerance: f64,
}

impl Default for DeltaCriteria {
    fn default() -> Self {
        Self {
            delta_cfi: 0.010,
            delta_rmsea: 0.015,
            approximate_tolerance: 0.002,
        }
    }
}

// three-decimal table values compare exactly against three-decimal thresholds
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Supported,
    Partial,
    NotSupported,
    Inadmissible,
}

impl Verdict {
    /// Y / P / N as in a ladder table; inadmissible rungs read N.
    pub fn letter(self) -> char {
        match self {
            Verdict::Supported => 'Y',
            Verdict::Partial => 'P',
            Verdict::NotSupported | Verdict::Inadmissible => 'N',
        }
    }

    pub fn blocks(self) -> bool {
        matches!(self, Verdict::NotSupported | Verdict::Inadmissible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// Supported only because a failed criterion fell within the tolerance.
    pub approximate: bool,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.verdict {
            Verdict::Supported => "Supported",
            Verdict::Partial => "Partial",
            Verdict::NotSupported => "NotSupported",
            Verdict::Inadmissible => "Inadmissible",
        };
        if self.approximate {
            write!(f, "{s}(approximate)")
        } else {
            f.write_str(s)
        }
    }
}

/// The numbers a rung verdict depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RungFit {
    pub cfi: f64,
    pub tli: f64,
    pub rmsea: f64,
    pub srmr: f64,
    pub inadmissible: bool,
    pub converged: bool,
}

impl From<&FitResult> for RungFit {
    fn from(f: &FitResult) -> Self {
        Self {
            cfi: f.cfi,
            tli: f.tli,
            rmsea: f.rmsea,
            srmr: f.srmr,
            inadmissible: f.inadmissible,
            converged: f.converged,
        }
    }
}

/// Change from the preceding rung, current minus previous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub cfi: f64,
    pub rmsea: f64,
}

impl Delta {
    pub fn between(prev: &RungFit, cur: &RungFit) -> Self {
        Self {
            cfi: cur.cfi - prev.cfi,
            rmsea: cur.rmsea - prev.rmsea,
        }
    }
}

/// Verdict for one rung, ignoring the rungs below it. `delta` is required
/// above configural; without it the rung is not supported.
pub fn classify(
    level: InvarianceLevel,
    cur: &RungFit,
    delta: Option<Delta>,
    gate: &AbsoluteFitGate,
    criteria: &DeltaCriteria,
) -> Classification {
    let plain = |verdict| Classification { verdict, approximate: false };
    if level == InvarianceLevel::Configural {
        if !cur.converged {
            return plain(Verdict::Inadmissible);
        }
        let ok = gate.assess(cur.cfi, cur.tli, cur.rmsea, cur.srmr).passes;
        return plain(if ok { Verdict::Supported } else { Verdict::NotSupported });
    }
    if cur.inadmissible || !cur.converged {
        return plain(Verdict::Inadmissible);
    }
    let Some(d) = delta else {
        return plain(Verdict::NotSupported);
    };
    // positive miss = by how much a criterion fails
    let miss_cfi = -d.cfi - criteria.delta_cfi;
    let miss_rmsea = d.rmsea - criteria.delta_rmsea;
    let strict = [miss_cfi <= SLACK, miss_rmsea <= SLACK];
    let near = [
        miss_cfi <= criteria.approximate_tolerance + SLACK,
        miss_rmsea <= criteria.approximate_tolerance + SLACK,
    ];
    match (strict, near) {
        ([true, true], _) => plain(Verdict::Supported),
        (_, [true, true]) => Classification {
            verdict: Verdict::Supported,
            approximate: true,
        },
        ([true, false], _) | ([false, true], _) => plain(Verdict::Partial),
        _ => plain(Verdict::NotSupported),
    }
}

/// Classifies rungs in order, forcing everything above a blocking rung to
/// NotSupported.
pub fn classify_ladder(
    rungs: &[(InvarianceLevel, RungFit, Option<Delta>)],
    gate: &AbsoluteFitGate,
    criteria: &DeltaCriteria,
) -> Vec<Classification> {
    let mut blocked = false;
    rungs
        .iter()
        .map(|(level, fit, delta)| {
            if blocked {
                return Classification {
                    verdict: Verdict::NotSupported,
                    approximate: false,
                };
            }
            let c = classify(*level, fit, *delta, gate, criteria);
            blocked = c.verdict.blocks();
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub level: InvarianceLevel,
    pub fit: FitResult,
    pub delta: Option<Delta>,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderResult {
    pub grouping: String,
    pub group_labels: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub rungs: Vec<Rung>,
    pub halt_reason: Option<String>,
}

impl LadderResult {
    pub fn rung(&self, level: InvarianceLevel) -> Option<&Rung> {
        self.rungs.iter().find(|r| r.level == level)
    }

    pub fn verdict(&self, level: InvarianceLevel) -> Option<Verdict> {
        self.rung(level).map(|r| r.classification.verdict)
    }

    /// χ², df, CFI, ΔCFI, RMSEA, ΔRMSEA, SRMR, Supp.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "Invariance across {} ({})\n{:<12} {:>10} {:>5} {:>6} {:>7} {:>6} {:>8} {:>6} {:>6}\n",
            self.grouping,
            self.group_labels
                .iter()
                .zip(&self.group_sizes)
                .map(|(l, n)| format!("{l} n = {n}"))
                .collect::<Vec<_>>()
                .join(", "),
            "Model",
            "χ2",
            "df",
            "CFI",
            "ΔCFI",
            "RMSEA",
            "ΔRMSEA",
            "SRMR",
            "Supp."
        );
        for r in &self.rungs {
            let dec = |v: f64| fmt_dec(v);
            let (dc, dr) = r
                .delta
                .map(|d| (dec(d.cfi), dec(d.rmsea)))
                .unwrap_or_else(|| ("-".into(), "-".into()));
            let supp = if r.classification.approximate {
                format!("{}~", r.classification.verdict.letter())
            } else {
                r.classification.verdict.letter().to_string()
            };
            out.push_str(&format!(
                "{:<12} {:>10.2} {:>5} {:>6} {:>7} {:>6} {:>8} {:>6} {:>6}\n",
                r.level.label(),
                r.fit.chi2_scaled,
                r.fit.df,
                dec(r.fit.cfi),
                dc,
                dec(r.fit.rmsea),
                dr,
                dec(r.fit.srmr),
                supp
            ));
        }
        if self.rungs.iter().any(|r| r.classification.approximate) {
            out.push_str("~ approximate: a criterion missed by no more than the tolerance\n");
        }
        if let Some(h) = &self.halt_reason {
            out.push_str(&format!("Halted: {h}\n"));
        }
        out
    }
}

/// Three decimals without the leading zero.
fn fmt_dec(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        return ".000".into();
    }
    s.replacen("0.", ".", 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LadderConfig {
    pub fit: FitOptions,
    pub gate: AbsoluteFitGate,
    pub criteria: DeltaCriteria,
}

/// Fits all four rungs, even past a failed gate, and classifies them.
pub fn run_ladder(
    groups: &[(String, ResponseMatrix)],
    model: &MeasurementModel,
    grouping: &str,
    config: &LadderConfig,
) -> Result<LadderResult, InvarianceError> {
    if groups.len() < 2 {
        return Err(InvarianceError::TooFewGroups(groups.len()));
    }
    let data = groups
        .iter()
        .map(|(_, m)| m.complete_cases().0.data())
        .collect::<Result<Vec<_>, _>>()?;
    let fits = InvarianceLevel::ALL
        .par_iter()
        .map(|&level| fit_multigroup(&data, model, level, &config.fit))
        .collect::<Result<Vec<_>, _>>()?;
    let mut prev: Option<RungFit> = None;
    let inputs: Vec<_> = InvarianceLevel::ALL
        .iter()
        .zip(&fits)
        .map(|(&level, fit)| {
            let cur = RungFit::from(fit);
            let delta = prev.map(|p| Delta::between(&p, &cur));
            prev = Some(cur);
            (level, cur, delta)
        })
        .collect();
    let classes = classify_ladder(&inputs, &config.gate, &config.criteria);
    let halt_reason = (classes[0].verdict != Verdict::Supported).then(|| {
        format!(
            "configural CFI {} below {}; higher rungs not supported",
            fmt_dec(fits[0].cfi),
            fmt_dec(config.gate.cfi_acceptable)
        )
    });
    let rungs = inputs
        .into_iter()
        .zip(fits)
        .zip(classes)
        .map(|(((level, _, delta), fit), classification)| Rung {
            level,
            fit,
            delta,
            classification,
        })
        .collect();
    Ok(LadderResult {
        grouping: grouping.into(),
        group_labels: groups.iter().map(|g| g.0.clone()).collect(),
        group_sizes: data.iter().map(|d| d.nrows()).collect(),
        rungs,
        halt_reason,
    })
}

/// Real and simulated samples as the two groups.
pub fn source_groups(real: &ResponseMatrix, sim: &ResponseMatrix) -> Vec<(String, ResponseMatrix)> {
    vec![("real".into(), real.clone()), ("simulated".into(), sim.clone())]
}

/// Male and female respondents as the two groups; other and unknown genders
/// are left out.
pub fn gender_groups(matrix: &ResponseMatrix) -> Vec<(String, ResponseMatrix)> {
    [Gender::Male, Gender::Female]
        .into_iter()
        .map(|g| (g.to_string(), matrix.filter_rows(|r| r.gender == Some(g))))
        .filter(|(_, m)| m.n_rows() > 0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisVerdict {
    Supported,
    PartiallySupported,
    Rejected,
    NotComputed,
}

impl fmt::Display for HypothesisVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HypothesisVerdict::Supported => "Supported",
            HypothesisVerdict::PartiallySupported => "Partially Supported",
            HypothesisVerdict::Rejected => "Rejected",
            HypothesisVerdict::NotComputed => "Not computed",
        })
    }
}

impl From<Verdict> for HypothesisVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Supported => HypothesisVerdict::Supported,
            Verdict::Partial => HypothesisVerdict::PartiallySupported,
            Verdict::NotSupported | Verdict::Inadmissible => HypothesisVerdict::Rejected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub id: String,
    pub label: String,
    pub verdict: HypothesisVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSummary {
    pub rows: Vec<HypothesisRow>,
}

impl HypothesisSummary {
    pub fn get(&self, id: &str) -> Option<HypothesisVerdict> {
        self.rows.iter().find(|r| r.id == id).map(|r| r.verdict)
    }

    /// Fails on the first hypothesis that could not be computed.
    pub fn require_complete(&self) -> Result<&Self, InvarianceError> {
        match self.rows.iter().find(|r| r.verdict == HypothesisVerdict::NotComputed) {
            Some(r) => Err(InvarianceError::IncompleteAnalysis(r.id.clone())),
            None => Ok(self),
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<44} {}\n", "Hypothesis", "Verdict");
        for r in &self.rows {
            let label = format!("{} ({})", r.id, r.label);
            out.push_str(&format!("{label:<44} {}", r.verdict));
            if let Some(n) = &r.note {
                out.push_str(&format!("  [{n}]"));
            }
            out.push('\n');
        }
        out
    }
}

/// Thresholds for the battery-based hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRules {
    pub gate: AbsoluteFitGate,
    /// Smallest ICC counted as substantial agreement.
    pub icc_substantial: f64,
}

impl Default for HypothesisRules {
    fn default() -> Self {
        Self {
            gate: AbsoluteFitGate::default(),
            icc_substantial: 0.50,
        }
    }
}

fn all_some(flags: &[bool]) -> HypothesisVerdict {
    if flags.iter().all(|&f| f) {
        HypothesisVerdict::Supported
    } else if flags.iter().any(|&f| f) {
        HypothesisVerdict::PartiallySupported
    } else {
        HypothesisVerdict::Rejected
    }
}

fn h3(b: &ComparisonReport, rules: &HypothesisRules) -> (HypothesisVerdict, Option<String>) {
    let rho: Vec<bool> = b
        .subscales
        .iter()
        .filter_map(|s| s.spearman.as_ref())
        .map(|r| r.significantly_positive(b.alpha))
        .collect();
    if rho.is_empty() {
        return (HypothesisVerdict::NotComputed, Some("no defined Spearman correlation".into()));
    }
    let icc: Vec<(bool, bool)> = b
        .subscales
        .iter()
        .filter_map(|s| s.icc.as_ref())
        .map(|i| (i.p < b.alpha && i.value > 0.0, i.value >= rules.icc_substantial))
        .collect();
    let any_signal = rho.iter().any(|&f| f) || icc.iter().any(|i| i.0);
    let full = rho.iter().all(|&f| f) && icc.iter().all(|i| i.0 && i.1);
    let v = if full {
        HypothesisVerdict::Supported
    } else if any_signal {
        HypothesisVerdict::PartiallySupported
    } else {
        HypothesisVerdict::Rejected
    };
    (v, None)
}

fn h4(b: &ComparisonReport) -> HypothesisVerdict {
    let mwu_ns = b.subscales.iter().all(|s| s.mwu.p >= b.alpha);
    let ks_ns = b.subscales.iter().all(|s| s.ks.p >= b.alpha);
    match (mwu_ns, ks_ns) {
        (true, true) => HypothesisVerdict::Supported,
        (true, false) | (false, true) => HypothesisVerdict::PartiallySupported,
        _ => HypothesisVerdict::Rejected,
    }
}

fn h6(l: &LadderResult) -> HypothesisVerdict {
    use InvarianceLevel::*;
    let v = |lvl| l.verdict(lvl).map(HypothesisVerdict::from);
    match (v(Configural), v(Metric), v(Scalar)) {
        (Some(HypothesisVerdict::Supported), Some(HypothesisVerdict::Supported), Some(HypothesisVerdict::Supported)) => {
            HypothesisVerdict::Supported
        }
        (Some(HypothesisVerdict::Supported), _, _) => HypothesisVerdict::PartiallySupported,
        _ => HypothesisVerdict::Rejected,
    }
}

/// H1 to H6 in summary-table layout. Missing inputs give NotComputed rows;
/// see [`HypothesisSummary::require_complete`] for the strict form.
pub fn hypothesis_summary(
    h1_fit: Option<&FitResult>,
    ladder: Option<&LadderResult>,
    h6_ladder: Option<&LadderResult>,
    battery: Option<&ComparisonReport>,
    rules: &HypothesisRules,
) -> HypothesisSummary {
    let row = |id: &str, label: &str, verdict, note: Option<String>| HypothesisRow {
        id: id.into(),
        label: label.into(),
        verdict,
        note,
    };
    let missing = || Some("input not available".to_string());
    let mut rows = Vec::new();
    rows.push(match h1_fit {
        Some(f) => {
            let g = rules.gate.assess(f.cfi, f.tli, f.rmsea, f.srmr);
            let v = if g.passes && f.converged {
                HypothesisVerdict::Supported
            } else {
                HypothesisVerdict::Rejected
            };
            row("H1", "Equality of factor structures", v, None)
        }
        None => row("H1", "Equality of factor structures", HypothesisVerdict::NotComputed, missing()),
    });
    let h2 = [
        ("H2.1", "Configural Invariance", InvarianceLevel::Configural),
        ("H2.2", "Metric Invariance", InvarianceLevel::Metric),
        ("H2.3", "Scalar Invariance", InvarianceLevel::Scalar),
        ("H2.4", "Residual Invariance", InvarianceLevel::Residual),
    ];
    for (id, label, level) in h2 {
        rows.push(match ladder.and_then(|l| l.rung(level)) {
            Some(r) => row(
                id,
                label,
                r.classification.verdict.into(),
                r.classification.approximate.then(|| "approximate".to_string()),
            ),
            None => row(id, label, HypothesisVerdict::NotComputed, missing()),
        });
    }
    match battery {
        Some(b) => {
            let (v, note) = h3(b, rules);
            rows.push(row("H3", "Cross-dataset Correlations", v, note));
            rows.push(row("H4", "Equality of distributions", h4(b), None));
            let lev: Vec<bool> = b.subscales.iter().map(|s| s.levene.p >= b.alpha).collect();
            rows.push(row("H5", "Equality of variances", all_some(&lev), None));
        }
        None => {
            for (id, label) in [
                ("H3", "Cross-dataset Correlations"),
                ("H4", "Equality of distributions"),
                ("H5", "Equality of variances"),
            ] {
                rows.push(row(id, label, HypothesisVerdict::NotComputed, missing()));
            }
        }
    }
    rows.push(match h6_ladder {
        Some(l) => row("H6", "Internal measurement invariance", h6(l), None),
        None => row(
            "H6",
            "Internal measurement invariance",
            HypothesisVerdict::NotComputed,
            Some("no gender grouping available".into()),
        ),
    });
    HypothesisSummary { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use InvarianceLevel::*;

    fn fit(cfi: f64, rmsea: f64) -> RungFit {
        RungFit {
            cfi,
            tli: cfi,
            rmsea,
            srmr: 0.05,
            inadmissible: false,
            converged: true,
        }
    }

    fn d(cfi: f64, rmsea: f64) -> Option<Delta> {
        Some(Delta { cfi, rmsea })
    }

    fn verdicts(rows: &[(InvarianceLevel, RungFit, Option<Delta>)]) -> String {
        classify_ladder(rows, &AbsoluteFitGate::default(), &DeltaCriteria::default())
            .iter()
            .map(|c| c.verdict.letter())
            .collect()
    }

    #[test]
    fn single_rung_examples() {
        let (g, c) = (AbsoluteFitGate::default(), DeltaCriteria::default());
        let s = classify(Metric, &fit(0.97, 0.07), d(-0.008, 0.009), &g, &c);
        assert_eq!(s.verdict, Verdict::Supported);
        assert!(!s.approximate);
        assert_eq!(classify(Metric, &fit(0.9, 0.1), d(-0.016, 0.012), &g, &c).verdict, Verdict::Partial);
        let mut bad = fit(0.9, 0.1);
        bad.inadmissible = true;
        assert_eq!(classify(Residual, &bad, d(0.0, 0.0), &g, &c).verdict, Verdict::Inadmissible);
        // boundary values are inclusive
        assert_eq!(classify(Metric, &fit(0.9, 0.1), d(-0.010, 0.015), &g, &c).verdict, Verdict::Supported);
        assert_eq!(classify(Configural, &fit(0.90, 0.2), None, &g, &c).verdict, Verdict::Supported);
        assert_eq!(classify(Configural, &fit(0.894, 0.05), None, &g, &c).verdict, Verdict::NotSupported);
    }

    #[test]
    fn approximate_annotation() {
        let (g, c) = (AbsoluteFitGate::default(), DeltaCriteria::default());
        let r = classify(Scalar, &fit(0.961, 0.079), d(-0.011, 0.009), &g, &c);
        assert_eq!(r.to_string(), "Supported(approximate)");
        let strict = DeltaCriteria {
            approximate_tolerance: 0.0,
            ..c
        };
        assert_eq!(classify(Scalar, &fit(0.961, 0.079), d(-0.011, 0.009), &g, &strict).verdict, Verdict::Partial);
    }

    #[test]
    fn blocked_rungs_cascade() {
        let rows = [
            (Configural, fit(0.953, 0.084), None),
            (Metric, fit(0.937, 0.096), d(-0.016, 0.012)),
            (Scalar, fit(0.906, 0.115), d(-0.031, 0.019)),
            (Residual, fit(0.99, 0.01), d(0.0, 0.0)),
        ];
        assert_eq!(verdicts(&rows), "YPNN");
    }

    #[test]
    fn gate_consistency() {
        assert!(AbsoluteFitGate::default().is_consistent());
        let g = AbsoluteFitGate {
            rmsea_good: 0.09,
            ..AbsoluteFitGate::default()
        };
        assert!(!g.is_consistent());
    }

    #[test]
    fn decimals() {
        assert_eq!(fmt_dec(-0.0081), "-.008");
        assert_eq!(fmt_dec(0.963), ".963");
        assert_eq!(fmt_dec(-0.0001), ".000");
    }
}
