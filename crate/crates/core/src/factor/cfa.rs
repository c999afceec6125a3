use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::indices::{fit_indices, srmr, srmr_multigroup, FitIndices};
use super::linalg::{spd_inverse_logdet, sorted_eigen, vech_pairs};
use super::model::{Identification, MeasurementModel};
use super::moments::{sample_moments, CovDivisor};
use super::optim::{minimize, Objective, Settings};
use super::robust;
use super::FactorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Ml,
    Mlr,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Ml => "ml",
            Estimator::Mlr => "mlr",
        }
    }
}

impl FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" => Ok(Estimator::Ml),
            "mlr" => Ok(Estimator::Mlr),
            other => Err(format!("unknown estimator {other:?} (expected ml or mlr)")),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rungs of the invariance ladder, each adding equality constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceLevel {
    Configural,
    Metric,
    Scalar,
    Residual,
}

impl InvarianceLevel {
    pub const ALL: [InvarianceLevel; 4] = [
        InvarianceLevel::Configural,
        InvarianceLevel::Metric,
        InvarianceLevel::Scalar,
        InvarianceLevel::Residual,
    ];

    pub fn label(self) -> &'static str {
        match self {
            InvarianceLevel::Configural => "Configural",
            InvarianceLevel::Metric => "Metric",
            InvarianceLevel::Scalar => "Scalar",
            InvarianceLevel::Residual => "Residual",
        }
    }
}

/// Sample-size multiplier turning the discrepancy into a chi-square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMultiplier {
    #[default]
    N,
    NMinusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub estimator: Estimator,
    pub multiplier: StatMultiplier,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            estimator: Estimator::Ml,
            multiplier: StatMultiplier::N,
            max_iter: 500,
            grad_tol: 1e-6,
            f_tol: 1e-9,
        }
    }
}

impl FitOptions {
    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }
}

/// Estimates for one group, items in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub n: usize,
    /// Items × factors.
    pub loadings: Vec<Vec<f64>>,
    pub standardized_loadings: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub residual_variances: Vec<f64>,
    pub factor_covariances: Vec<Vec<f64>>,
    pub latent_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimator: Estimator,
    pub level: Option<InvarianceLevel>,
    pub chi2: f64,
    pub df: usize,
    pub pvalue: f64,
    /// 1.0 for plain ML.
    pub scaling_factor: f64,
    pub chi2_scaled: f64,
    /// Scaled indices under `mlr`, plain ML indices otherwise.
    pub cfi: f64,
    pub tli: f64,
    pub rmsea: f64,
    pub rmsea_ci: (f64, f64),
    pub srmr: f64,
    /// Unscaled indices, identical to the reported ones under `ml`.
    pub ml_indices: FitIndices,
    pub baseline_chi2: f64,
    pub baseline_df: usize,
    pub baseline_scaling_factor: f64,
    pub loglik: f64,
    pub params: Vec<GroupParams>,
    /// Data columns in model order.
    pub items: Vec<usize>,
    pub factor_names: Vec<String>,
    pub n_free: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Negative residual variance or a standardized loading beyond ±1.
    pub heywood: bool,
    pub negative_loading: bool,
    /// Heywood case, negative loading or negative factor variance.
    pub inadmissible: bool,
    pub n_total: usize,
    pub n_groups: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Slot {
    Lambda(usize, usize),
    Phi(usize, usize),
    Theta(usize),
    Nu(usize),
    Alpha(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Val {
    Fixed(f64),
    Free(usize),
}

pub(crate) struct Group {
    pub s: DMatrix<f64>,
    pub xbar: DVector<f64>,
    pub n: usize,
    pub w: f64,
    logdet_s: f64,
    slots: Vec<(Slot, Val)>,
    pub data: DMatrix<f64>,
}

pub(crate) struct Implied {
    pub lambda: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub theta: DVector<f64>,
    pub nu: DVector<f64>,
    pub alpha: DVector<f64>,
}

impl Implied {
    pub fn sigma(&self) -> DMatrix<f64> {
        let mut s = &self.lambda * &self.phi * self.lambda.transpose();
        for i in 0..s.nrows() {
            s[(i, i)] += self.theta[i];
        }
        s
    }

    pub fn mu(&self) -> DVector<f64> {
        &self.nu + &self.lambda * &self.alpha
    }
}

/// The multigroup ML discrepancy as a function of the free parameters.
pub(crate) struct Problem {
    pub p: usize,
    pub m: usize,
    pub groups: Vec<Group>,
    pub n_free: usize,
    start: DVector<f64>,
    labels: Vec<String>,
}

struct Builder {
    keys: HashMap<(Slot, Option<usize>), usize>,
    labels: Vec<String>,
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl Builder {
    fn free(&mut self, slot: Slot, group: Option<usize>, start: f64) -> Val {
        let n = self.keys.len();
        let idx = *self.keys.entry((slot, group)).or_insert(n);
        if idx == self.labels.len() {
            let g = group.map(|g| format!("g{}", g + 1)).unwrap_or_else(|| "all".into());
            self.labels.push(format!("{slot:?}@{g}"));
            self.sums.push(0.0);
            self.counts.push(0);
        }
        self.sums[idx] += start;
        self.counts[idx] += 1;
        Val::Free(idx)
    }
}

/// Per-factor first principal component, scaled by item SDs.
fn start_loadings(s: &DMatrix<f64>, assign: &[Option<usize>], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; assign.len()];
    for f in 0..m {
        let items: Vec<usize> = (0..assign.len()).filter(|&i| assign[i] == Some(f)).collect();
        let sub = DMatrix::from_fn(items.len(), items.len(), |a, b| s[(items[a], items[b])]);
        let (vals, vecs) = sorted_eigen(&sub);
        let col = vecs.column(0);
        let sign = if col.sum() < 0.0 { -1.0 } else { 1.0 };
        for (k, &i) in items.iter().enumerate() {
            out[i] = sign * col[k] * vals[0].max(0.0).sqrt();
        }
    }
    out
}

impl Problem {
    fn build(
        groups: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>,
        assign: &[Option<usize>],
        m: usize,
        correlated: bool,
        ident: Identification,
        level: InvarianceLevel,
    ) -> Result<Self, FactorError> {
        let p = assign.len();
        let n_total: usize = groups.iter().map(|g| g.0.nrows()).sum();
        let markers: Vec<usize> = (0..m)
            .map(|f| assign.iter().position(|&a| a == Some(f)).expect("factor has items"))
            .collect();
        let mut b = Builder {
            keys: HashMap::new(),
            labels: Vec::new(),
            sums: Vec::new(),
            counts: Vec::new(),
        };
        let mut built = Vec::new();
        for (g, (data, s, xbar)) in groups.into_iter().enumerate() {
            let per = |shared: bool| if shared { None } else { Some(g) };
            let lam0 = start_loadings(&s, assign, m);
            let mut slots = Vec::new();
            for i in 0..p {
                let Some(f) = assign[i] else { continue };
                let scale = lam0[markers[f]];
                let val = match ident {
                    Identification::Marker if i == markers[f] => Val::Fixed(1.0),
                    Identification::Marker => {
                        let st = if scale.abs() > 1e-8 { lam0[i] / scale } else { 1.0 };
                        b.free(Slot::Lambda(i, f), per(level >= InvarianceLevel::Metric), st)
                    }
                    Identification::VarianceStd => {
                        b.free(Slot::Lambda(i, f), per(level >= InvarianceLevel::Metric), lam0[i])
                    }
                };
                slots.push((Slot::Lambda(i, f), val));
            }
            for f in 0..m {
                let val = match ident {
                    Identification::Marker => {
                        let l = lam0[markers[f]];
                        let st = if l.abs() > 1e-8 { l * l } else { s[(markers[f], markers[f])] / 2.0 };
                        b.free(Slot::Phi(f, f), Some(g), st)
                    }
                    Identification::VarianceStd => {
                        if g > 0 && level >= InvarianceLevel::Metric {
                            b.free(Slot::Phi(f, f), Some(g), 1.0)
                        } else {
                            Val::Fixed(1.0)
                        }
                    }
                };
                slots.push((Slot::Phi(f, f), val));
                for k in 0..f {
                    let val = if correlated {
                        b.free(Slot::Phi(f, k), Some(g), 0.0)
                    } else {
                        Val::Fixed(0.0)
                    };
                    slots.push((Slot::Phi(f, k), val));
                }
            }
            for i in 0..p {
                let st = if assign[i].is_some() { s[(i, i)] / 2.0 } else { s[(i, i)] };
                let val = b.free(Slot::Theta(i), per(level >= InvarianceLevel::Residual), st);
                slots.push((Slot::Theta(i), val));
            }
            for i in 0..p {
                let val = b.free(Slot::Nu(i), per(level >= InvarianceLevel::Scalar), xbar[i]);
                slots.push((Slot::Nu(i), val));
            }
            for f in 0..m {
                let val = if g > 0 && level >= InvarianceLevel::Scalar {
                    b.free(Slot::Alpha(f), Some(g), 0.0)
                } else {
                    Val::Fixed(0.0)
                };
                slots.push((Slot::Alpha(f), val));
            }
            let logdet_s = spd_inverse_logdet(&s)
                .map(|(_, ld)| ld)
                .ok_or_else(|| FactorError::InsufficientData(format!("group {} covariance is singular", g + 1)))?;
            built.push(Group {
                w: data.nrows() as f64 / n_total as f64,
                n: data.nrows(),
                s,
                xbar,
                logdet_s,
                slots,
                data,
            });
        }
        let start = DVector::from_iterator(
            b.sums.len(),
            b.sums.iter().zip(&b.counts).map(|(s, &c)| s / c as f64),
        );
        Ok(Self {
            p,
            m,
            groups: built,
            n_free: start.len(),
            start,
            labels: b.labels,
        })
    }

    pub fn n_moments(&self) -> usize {
        self.groups.len() * (self.p + self.p * (self.p + 1) / 2)
    }

    pub fn df(&self) -> usize {
        self.n_moments().saturating_sub(self.n_free)
    }

    pub fn implied(&self, g: usize, x: &DVector<f64>) -> Implied {
        let (p, m) = (self.p, self.m);
        let mut out = Implied {
            lambda: DMatrix::zeros(p, m),
            phi: DMatrix::zeros(m, m),
            theta: DVector::zeros(p),
            nu: DVector::zeros(p),
            alpha: DVector::zeros(m),
        };
        for &(slot, val) in &self.groups[g].slots {
            let v = match val {
                Val::Fixed(v) => v,
                Val::Free(k) => x[k],
            };
            match slot {
                Slot::Lambda(i, f) => out.lambda[(i, f)] = v,
                Slot::Phi(f, k) => {
                    out.phi[(f, k)] = v;
                    out.phi[(k, f)] = v;
                }
                Slot::Theta(i) => out.theta[i] = v,
                Slot::Nu(i) => out.nu[i] = v,
                Slot::Alpha(f) => out.alpha[f] = v,
            }
        }
        out
    }

    /// Per-group discrepancy, `+inf` when Σ is not positive definite.
    fn group_value(&self, g: usize, x: &DVector<f64>) -> f64 {
        let grp = &self.groups[g];
        let imp = self.implied(g, x);
        let Some((si, logdet)) = spd_inverse_logdet(&imp.sigma()) else {
            return f64::INFINITY;
        };
        let d = &grp.xbar - imp.mu();
        let tr = (&grp.s * &si).trace();
        logdet + tr - grp.logdet_s - self.p as f64 + d.dot(&(&si * &d))
    }

    pub fn value_at(&self, x: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for g in 0..self.groups.len() {
            let v = self.group_value(g, x);
            if !v.is_finite() {
                return f64::INFINITY;
            }
            total += self.groups[g].w * v;
        }
        total
    }

    pub fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut grad = DVector::zeros(self.n_free);
        for (g, grp) in self.groups.iter().enumerate() {
            let imp = self.implied(g, x);
            let Some((si, _)) = spd_inverse_logdet(&imp.sigma()) else {
                return DVector::from_element(self.n_free, f64::NAN);
            };
            let d = &grp.xbar - imp.mu();
            let wmat = &grp.s + &d * d.transpose();
            let gs = &si - &si * wmat * &si;
            let gmu = -2.0 * (&si * &d);
            let glp = &gs * &imp.lambda * &imp.phi;
            let lgl = imp.lambda.transpose() * &gs * &imp.lambda;
            let lgmu = imp.lambda.transpose() * &gmu;
            for &(slot, val) in &grp.slots {
                let Val::Free(k) = val else { continue };
                let v = match slot {
                    Slot::Lambda(i, f) => 2.0 * glp[(i, f)] + gmu[i] * imp.alpha[f],
                    Slot::Phi(f, k2) if f == k2 => lgl[(f, f)],
                    Slot::Phi(f, k2) => 2.0 * lgl[(f, k2)],
                    Slot::Theta(i) => gs[(i, i)],
                    Slot::Nu(i) => gmu[i],
                    Slot::Alpha(f) => lgmu[f],
                };
                grad[k] += grp.w * v;
            }
        }
        grad
    }

    /// Jacobian of (μ, vech Σ) for group `g` with respect to the free
    /// parameters.
    pub fn jacobian(&self, g: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let p = self.p;
        let imp = self.implied(g, x);
        let pairs = vech_pairs(p);
        let mut jac = DMatrix::zeros(p + pairs.len(), self.n_free);
        let lp = &imp.lambda * &imp.phi;
        for &(slot, val) in &self.groups[g].slots {
            let Val::Free(k) = val else { continue };
            match slot {
                Slot::Lambda(i, f) => {
                    jac[(i, k)] += imp.alpha[f];
                    for (r, &(a, b)) in pairs.iter().enumerate() {
                        let mut v = 0.0;
                        if a == i {
                            v += lp[(b, f)];
                        }
                        if b == i {
                            v += lp[(a, f)];
                        }
                        jac[(p + r, k)] += v;
                    }
                }
                Slot::Phi(f, h) => {
                    for (r, &(a, b)) in pairs.iter().enumerate() {
                        let v = if f == h {
                            imp.lambda[(a, f)] * imp.lambda[(b, f)]
                        } else {
                            imp.lambda[(a, f)] * imp.lambda[(b, h)] + imp.lambda[(a, h)] * imp.lambda[(b, f)]
                        };
                        jac[(p + r, k)] += v;
                    }
                }
                Slot::Theta(i) => {
                    let r = pairs.iter().position(|&pr| pr == (i, i)).expect("diagonal pair");
                    jac[(p + r, k)] += 1.0;
                }
                Slot::Nu(i) => jac[(i, k)] += 1.0,
                Slot::Alpha(f) => {
                    for a in 0..p {
                        jac[(a, k)] += imp.lambda[(a, f)];
                    }
                }
            }
        }
        jac
    }

    /// Normal-theory weight matrix blockdiag(Σ⁻¹, ½Dᵀ(Σ⁻¹⊗Σ⁻¹)D).
    pub fn weight(&self, g: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = self.p;
        let (a, _) = spd_inverse_logdet(&self.implied(g, x).sigma())?;
        let pairs = vech_pairs(p);
        let q = p + pairs.len();
        let mut v = DMatrix::zeros(q, q);
        v.view_mut((0, 0), (p, p)).copy_from(&a);
        for (r, &(i, j)) in pairs.iter().enumerate() {
            let mij = if i == j { 1.0 } else { 2.0 };
            for (c, &(k, l)) in pairs.iter().enumerate() {
                let mkl = if k == l { 1.0 } else { 2.0 };
                v[(p + r, p + c)] = 0.25 * mij * mkl * (a[(i, k)] * a[(j, l)] + a[(i, l)] * a[(j, k)]);
            }
        }
        Some(v)
    }

    /// Expected information Σ_g w_g ΔᵀVΔ (half the expected Hessian of F).
    pub fn information(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut info = DMatrix::zeros(self.n_free, self.n_free);
        for g in 0..self.groups.len() {
            let jac = self.jacobian(g, x);
            let v = self.weight(g, x)?;
            info += (jac.transpose() * v * &jac) * self.groups[g].w;
        }
        Some(info)
    }
}

impl Objective for Problem {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.value_at(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.gradient_at(x)
    }
    fn curvature(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.information(x).map(|i| i * 2.0)
    }
}

/// Public handle on the ML discrepancy for diagnostics such as gradient
/// checks. Parameters are indexed as in [`MlDiscrepancy::labels`].
pub struct MlDiscrepancy {
    problem: Problem,
}

impl MlDiscrepancy {
    pub fn new(
        groups: &[DMatrix<f64>],
        model: &MeasurementModel,
        level: InvarianceLevel,
    ) -> Result<Self, FactorError> {
        Ok(Self {
            problem: prepare(groups, model, level)?.0,
        })
    }

    pub fn n_free(&self) -> usize {
        self.problem.n_free
    }
    pub fn df(&self) -> usize {
        self.problem.df()
    }
    pub fn start(&self) -> Vec<f64> {
        self.problem.start.iter().copied().collect()
    }
    pub fn labels(&self) -> &[String] {
        &self.problem.labels
    }
    pub fn value(&self, x: &[f64]) -> f64 {
        self.problem.value_at(&DVector::from_column_slice(x))
    }
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.problem.gradient_at(&DVector::from_column_slice(x)).iter().copied().collect()
    }
}

fn select_columns(data: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(data.nrows(), cols.len(), |r, c| data[(r, cols[c])])
}

fn group_inputs(
    groups: &[DMatrix<f64>],
    cols: &[usize],
) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>, FactorError> {
    if groups.is_empty() {
        return Err(FactorError::InsufficientData("no groups".into()));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (g, data) in groups.iter().enumerate() {
        if let Some(&bad) = cols.iter().find(|&&c| c >= data.ncols()) {
            return Err(FactorError::InvalidModel(format!(
                "column {bad} out of range for {} columns",
                data.ncols()
            )));
        }
        let sel = select_columns(data, cols);
        let mom = sample_moments(&sel, CovDivisor::N).map_err(|e| match e {
            FactorError::InsufficientData(msg) if groups.len() > 1 => {
                FactorError::InsufficientData(format!("group {}: {msg}", g + 1))
            }
            FactorError::DegenerateItem(j) => FactorError::DegenerateItem(cols[j]),
            e => e,
        })?;
        out.push((sel, mom.cov, mom.means));
    }
    Ok(out)
}

fn prepare(
    groups: &[DMatrix<f64>],
    model: &MeasurementModel,
    level: InvarianceLevel,
) -> Result<(Problem, Vec<usize>), FactorError> {
    model.validate(None)?;
    let cols = model.item_order();
    let inputs = group_inputs(groups, &cols)?;
    let assign: Vec<Option<usize>> = model.assignment().into_iter().map(Some).collect();
    let problem = Problem::build(
        inputs,
        &assign,
        model.n_factors(),
        model.correlated_factors,
        model.identification,
        level,
    )?;
    Ok((problem, cols))
}

fn baseline_problem(groups: &[DMatrix<f64>], cols: &[usize]) -> Result<Problem, FactorError> {
    let inputs = group_inputs(groups, cols)?;
    Problem::build(
        inputs,
        &vec![None; cols.len()],
        0,
        false,
        Identification::Marker,
        InvarianceLevel::Configural,
    )
}

struct Solved {
    x: DVector<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn solve(problem: &Problem, options: &FitOptions) -> Solved {
    let out = minimize(
        problem,
        problem.start.clone(),
        Settings {
            max_iter: options.max_iter,
            grad_tol: options.grad_tol,
            f_tol: options.f_tol,
        },
    );
    Solved {
        x: out.x,
        f: out.value,
        iterations: out.iterations,
        converged: out.converged,
    }
}

fn chi2_of(problem: &Problem, x: &DVector<f64>, mult: StatMultiplier) -> f64 {
    let mut chi2 = 0.0;
    for g in 0..problem.groups.len() {
        let n = problem.groups[g].n as f64;
        let n = match mult {
            StatMultiplier::N => n,
            StatMultiplier::NMinusOne => n - 1.0,
        };
        chi2 += n * problem.group_value(g, x);
    }
    chi2.max(0.0)
}

fn scaling(problem: &Problem, x: &DVector<f64>, options: &FitOptions) -> f64 {
    match options.estimator {
        Estimator::Ml => 1.0,
        Estimator::Mlr => robust::scaling_factor(problem, x),
    }
}

fn pvalue(chi2: f64, df: usize) -> f64 {
    if df == 0 {
        return if chi2 < 1e-8 { 1.0 } else { 0.0 };
    }
    1.0 - ChiSquared::new(df as f64).expect("df > 0").cdf(chi2)
}

fn assemble(
    problem: &Problem,
    solved: &Solved,
    baseline: (f64, usize, f64),
    options: &FitOptions,
    level: Option<InvarianceLevel>,
    items: Vec<usize>,
    factor_names: Vec<String>,
) -> Result<FitResult, FactorError> {
    let x = &solved.x;
    let df = problem.df();
    let n_total: usize = problem.groups.iter().map(|g| g.n).sum();
    let n_groups = problem.groups.len();
    let chi2 = if solved.f.is_finite() {
        chi2_of(problem, x, options.multiplier)
    } else {
        f64::INFINITY
    };
    let c = if solved.f.is_finite() { scaling(problem, x, options) } else { 1.0 };
    let chi2_scaled = chi2 / c;
    let (b_chi2, b_df, b_c) = baseline;
    let ml_indices = fit_indices(chi2, df, b_chi2, b_df, n_total, n_groups);
    let reported = match options.estimator {
        Estimator::Ml => ml_indices,
        Estimator::Mlr => fit_indices(chi2_scaled, df, b_chi2 / b_c, b_df, n_total, n_groups),
    };
    let mut params = Vec::new();
    let mut srmr_parts = Vec::new();
    let mut heywood = false;
    let mut negative_loading = false;
    let mut negative_variance = false;
    let mut loglik = 0.0;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    for (g, grp) in problem.groups.iter().enumerate() {
        let imp = problem.implied(g, x);
        let sigma = imp.sigma();
        let mu = imp.mu();
        srmr_parts.push((srmr(&grp.s, &sigma, Some((&grp.xbar, &mu)))?, grp.n));
        if let Some((si, ld)) = spd_inverse_logdet(&sigma) {
            let d = &grp.xbar - &mu;
            loglik -= 0.5
                * grp.n as f64
                * (problem.p as f64 * ln2pi + ld + (&grp.s * &si).trace() + d.dot(&(&si * &d)));
        } else {
            loglik = f64::NEG_INFINITY;
        }
        let mut std_l = DMatrix::zeros(problem.p, problem.m);
        for i in 0..problem.p {
            for f in 0..problem.m {
                let l = imp.lambda[(i, f)];
                if l == 0.0 {
                    continue;
                }
                let v = l * imp.phi[(f, f)].max(0.0).sqrt() / sigma[(i, i)].max(1e-300).sqrt();
                std_l[(i, f)] = v;
                heywood |= v.abs() > 1.0;
                negative_loading |= v < 0.0;
            }
            heywood |= imp.theta[i] < 0.0;
        }
        negative_variance |= (0..problem.m).any(|f| imp.phi[(f, f)] < 0.0);
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
        };
        params.push(GroupParams {
            n: grp.n,
            loadings: rows(&imp.lambda),
            standardized_loadings: rows(&std_l),
            intercepts: imp.nu.iter().copied().collect(),
            residual_variances: imp.theta.iter().copied().collect(),
            factor_covariances: rows(&imp.phi),
            latent_means: imp.alpha.iter().copied().collect(),
        });
    }
    Ok(FitResult {
        estimator: options.estimator,
        level,
        chi2,
        df,
        pvalue: pvalue(chi2_scaled, df),
        scaling_factor: c,
        chi2_scaled,
        cfi: reported.cfi,
        tli: reported.tli,
        rmsea: reported.rmsea,
        rmsea_ci: reported.rmsea_ci,
        srmr: srmr_multigroup(&srmr_parts),
        ml_indices,
        baseline_chi2: b_chi2,
        baseline_df: b_df,
        baseline_scaling_factor: b_c,
        loglik,
        params,
        items,
        factor_names,
        n_free: problem.n_free,
        converged: solved.converged,
        iterations: solved.iterations,
        heywood,
        negative_loading,
        inadmissible: heywood || negative_loading || negative_variance,
        n_total,
        n_groups,
    })
}

fn baseline_stats(groups: &[DMatrix<f64>], cols: &[usize], options: &FitOptions) -> Result<(f64, usize, f64), FactorError> {
    let problem = baseline_problem(groups, cols)?;
    let solved = solve(&problem, options);
    let chi2 = chi2_of(&problem, &solved.x, options.multiplier);
    Ok((chi2, problem.df(), scaling(&problem, &solved.x, options)))
}

/// Simultaneous ML fit over `groups` with the constraints of `level`. Each
/// group is an `N_g × columns` matrix; the model picks its columns.
pub fn fit_multigroup(
    groups: &[DMatrix<f64>],
    model: &MeasurementModel,
    level: InvarianceLevel,
    options: &FitOptions,
) -> Result<FitResult, FactorError> {
    let (problem, cols) = prepare(groups, model, level)?;
    let solved = solve(&problem, options);
    let baseline = baseline_stats(groups, &cols, options)?;
    let names = model.factors.iter().map(|f| f.name.clone()).collect();
    let level = if groups.len() > 1 { Some(level) } else { None };
    assemble(&problem, &solved, baseline, options, level, cols, names)
}

/// Single-group CFA with a saturated mean structure.
pub fn fit_cfa(
    data: &DMatrix<f64>,
    model: &MeasurementModel,
    options: &FitOptions,
) -> Result<FitResult, FactorError> {
    fit_multigroup(std::slice::from_ref(data), model, InvarianceLevel::Configural, options)
}

/// Independence model over all columns: free variances and means, zero
/// covariances, fitted per group.
pub fn fit_baseline(groups: &[DMatrix<f64>], options: &FitOptions) -> Result<FitResult, FactorError> {
    let p = groups.first().map(|g| g.ncols()).unwrap_or(0);
    let cols: Vec<usize> = (0..p).collect();
    let problem = baseline_problem(groups, &cols)?;
    let solved = solve(&problem, options);
    let chi2 = chi2_of(&problem, &solved.x, options.multiplier);
    let c = scaling(&problem, &solved.x, options);
    assemble(&problem, &solved, (chi2, problem.df(), c), options, None, cols, Vec::new())
}
