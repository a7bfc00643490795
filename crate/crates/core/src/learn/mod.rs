//! Parameter learning for fully observed ITBNs.
//!
//! The log-likelihood of fully observed data factorizes over grounded
//! nodes, and every node of one process shares that process's CPD. Fitting
//! therefore reduces to one penalized regression per process: rows are the
//! (entity, slice `j >= 1`) instances of the process, columns are the
//! spline basis at the realized gap, the basis times the previous value,
//! and the gamma parents.

mod data;
pub mod discrete;
mod regression;

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    predictor_eta, resolve_edge, BernoulliLogitCpd, Cpd, EdgeDecl, EdgeRole, Family,
    GaussianLinearCpd, InitialCpd, Itbn, ItbnStructure, LinearPredictor, ParentTime, ProcessCpd,
    SliceLag,
};
use crate::splines::{design_row, penalty_matrix, KnotRule, SplineConfig, SplineSpec};

pub use data::{EntityData, ObservationSet, Record};
pub(crate) use regression::{bernoulli_log_mass, sigmoid};
pub use regression::{
    fit_gaussian, fit_logit, gaussian_objective, logit_objective, penalized_least_squares,
    GaussianFit, LogitFit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fill unobserved parent values (including parents at invented,
    /// off-grid times) by linear interpolation between neighbouring
    /// observations of the parent process.
    #[serde(default)]
    pub interpolate_parents: bool,
}

impl FitOptions {
    pub fn interpolating() -> Self {
        FitOptions {
            interpolate_parents: true,
        }
    }
}

/// Conditioning values of one (entity, slice) instance of a process.
#[derive(Debug, Clone, PartialEq)]
struct RowInput {
    entity: usize,
    slice: usize,
    gap: f64,
    y: f64,
    y_prev: f64,
    parents: Vec<f64>,
    interpolated: usize,
}

#[derive(Debug, Clone, Copy)]
struct RowMode {
    interpolate: bool,
    /// Drop rows whose inputs are unavailable instead of failing.
    skip_unavailable: bool,
}

impl RowMode {
    fn strict(options: &FitOptions) -> Self {
        RowMode {
            interpolate: options.interpolate_parents,
            skip_unavailable: false,
        }
    }
}

fn missing(
    data: &ObservationSet,
    entity: &EntityData,
    process: usize,
    time: f64,
    what: &str,
) -> Error {
    Error::NotFullyObserved(format!(
        "{what} `{}` of entity `{}` at time {time} is not observed",
        data.process_names()[process],
        entity.entity()
    ))
}

struct RowContext<'a> {
    data: &'a ObservationSet,
    entity: &'a EntityData,
    mode: RowMode,
    interpolated: usize,
}

impl RowContext<'_> {
    /// Value of `process` at slice `k`, interpolated if allowed.
    fn at_slice(&mut self, process: usize, k: usize, what: &str) -> Result<Option<f64>> {
        if let Some(v) = self.entity.value(k, process) {
            return Ok(Some(v));
        }
        self.at_time(process, self.entity.times()[k], what)
    }

    fn at_time(&mut self, process: usize, t: f64, what: &str) -> Result<Option<f64>> {
        if self.mode.interpolate {
            if let Some(v) = self.entity.interpolate(process, t) {
                self.interpolated += 1;
                return Ok(Some(v));
            }
        }
        if self.mode.skip_unavailable {
            Ok(None)
        } else {
            Err(missing(self.data, self.entity, process, t, what))
        }
    }
}

type ResolvedEdge<'a> = (usize, &'a EdgeDecl);

fn resolved_gamma_edges(structure: &ItbnStructure, process: usize) -> Vec<ResolvedEdge<'_>> {
    structure
        .gamma_edges(process)
        .into_iter()
        .map(|e| {
            (
                structure
                    .process_index(&e.parent)
                    .expect("validated structure"),
                e,
            )
        })
        .collect()
}

/// Inputs of the transition at slice `j >= 1`, or `None` when skipped.
fn transition_row(
    structure: &ItbnStructure,
    cx: &mut RowContext<'_>,
    edges: &[ResolvedEdge<'_>],
    process: usize,
    entity: usize,
    j: usize,
) -> Result<Option<RowInput>> {
    let Some(y) = cx.entity.value(j, process) else {
        return Ok(None);
    };
    cx.interpolated = 0;
    let y_prev = if structure.has_autoregression(process) {
        match cx.at_slice(process, j - 1, "previous value of")? {
            Some(v) => v,
            None => return Ok(None),
        }
    } else {
        0.0
    };
    let times = cx.entity.times();
    let mut parents = Vec::with_capacity(edges.len());
    for &(q, edge) in edges {
        let v = match resolve_edge(times, edge, j) {
            ParentTime::Slice(k) => cx.at_slice(q, k, "parent")?,
            ParentTime::OffGrid { time, .. } => cx.at_time(q, time, "invented parent")?,
            ParentTime::OutOfRange(time) => {
                if cx.mode.skip_unavailable {
                    None
                } else {
                    return Err(Error::DelayOutOfRange {
                        process: structure.processes[process].name.clone(),
                        slice: j,
                        time,
                    });
                }
            }
        };
        match v {
            Some(v) => parents.push(v),
            None => return Ok(None),
        }
    }
    Ok(Some(RowInput {
        entity,
        slice: j,
        gap: times[j] - times[j - 1],
        y,
        y_prev,
        parents,
        interpolated: cx.interpolated,
    }))
}

/// Gamma edges active at slice 0: intra-slice without delay. Returns their
/// positions in the gamma vector and parent processes.
fn initial_edges(structure: &ItbnStructure, process: usize) -> Vec<(usize, usize)> {
    resolved_gamma_edges(structure, process)
        .into_iter()
        .enumerate()
        .filter(|(_, (_, e))| e.lag == SliceLag::INTRA && e.delay == 0.0)
        .map(|(g, (q, _))| (g, q))
        .collect()
}

fn collect_rows(
    structure: &ItbnStructure,
    data: &ObservationSet,
    process: usize,
    mode: RowMode,
) -> Result<Vec<RowInput>> {
    let edges = resolved_gamma_edges(structure, process);
    let mut rows = Vec::new();
    for (ei, entity) in data.entities().iter().enumerate() {
        let mut cx = RowContext {
            data,
            entity,
            mode,
            interpolated: 0,
        };
        for j in 1..entity.slice_count() {
            if let Some(row) = transition_row(structure, &mut cx, &edges, process, ei, j)? {
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Slice-0 instances: `(y, parent values)` with parents per [`initial_edges`].
fn collect_initial_rows(
    structure: &ItbnStructure,
    data: &ObservationSet,
    process: usize,
    mode: RowMode,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let edges = initial_edges(structure, process);
    let mut rows = Vec::new();
    for entity in data.entities() {
        let Some(y) = entity.value(0, process) else {
            continue;
        };
        let mut cx = RowContext {
            data,
            entity,
            mode,
            interpolated: 0,
        };
        let mut parents = Vec::with_capacity(edges.len());
        for &(_, q) in &edges {
            match cx.at_slice(q, 0, "parent")? {
                Some(v) => parents.push(v),
                None => break,
            }
        }
        if parents.len() == edges.len() {
            rows.push((y, parents));
        }
    }
    Ok(rows)
}

/// Column layout of one process's regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub alpha_degree: usize,
    pub alpha_knots: Vec<f64>,
    /// Present iff the process is autoregressive.
    pub beta: Option<(usize, Vec<f64>)>,
    pub gamma: usize,
}

impl DesignLayout {
    pub fn alpha_len(&self) -> usize {
        self.alpha_degree + self.alpha_knots.len() + 1
    }

    pub fn beta_len(&self) -> usize {
        self.beta.as_ref().map_or(0, |(d, k)| d + k.len() + 1)
    }

    pub fn width(&self) -> usize {
        self.alpha_len() + self.beta_len() + self.gamma
    }

    fn row(&self, gap: f64, y_prev: f64, parents: &[f64]) -> Vec<f64> {
        let mut row = design_row(self.alpha_degree, &self.alpha_knots, gap);
        if let Some((d, k)) = &self.beta {
            row.extend(design_row(*d, k, gap).into_iter().map(|b| b * y_prev));
        }
        row.extend_from_slice(parents);
        row
    }

    fn penalty(&self, lambda: f64) -> Result<DMatrix<f64>> {
        let w = self.width();
        let mut p = DMatrix::zeros(w, w);
        let a = penalty_matrix(self.alpha_degree, self.alpha_knots.len(), lambda)?;
        let na = self.alpha_len();
        p.view_mut((0, 0), (na, na)).copy_from(&a);
        if let Some((d, k)) = &self.beta {
            let b = penalty_matrix(*d, k.len(), lambda)?;
            let nb = self.beta_len();
            p.view_mut((na, na), (nb, nb)).copy_from(&b);
        }
        Ok(p)
    }

    /// Splits a coefficient vector into the predictor it parameterizes.
    pub fn predictor(&self, theta: &[f64]) -> Result<LinearPredictor> {
        if theta.len() != self.width() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for a layout of width {}",
                theta.len(),
                self.width()
            )));
        }
        let na = self.alpha_len();
        let nb = self.beta_len();
        let alpha = SplineSpec::new(
            self.alpha_degree,
            self.alpha_knots.clone(),
            theta[..na].to_vec(),
        )?;
        let beta = match &self.beta {
            Some((d, k)) => Some(SplineSpec::new(*d, k.clone(), theta[na..na + nb].to_vec())?),
            None => None,
        };
        Ok(LinearPredictor {
            alpha,
            beta,
            gamma: theta[na + nb..].to_vec(),
        })
    }
}

fn layout_for(structure: &ItbnStructure, process: usize, gaps: &[f64]) -> Result<DesignLayout> {
    let decl = &structure.processes[process];
    let name = &decl.name;
    let alpha_knots = decl
        .alpha
        .resolve_knots(gaps)
        .map_err(|e| e.in_process(name))?;
    let beta = if structure.has_autoregression(process) {
        Some((
            decl.beta.degree,
            decl.beta
                .resolve_knots(gaps)
                .map_err(|e| e.in_process(name))?,
        ))
    } else {
        None
    };
    Ok(DesignLayout {
        alpha_degree: decl.alpha.degree,
        alpha_knots,
        beta,
        gamma: structure.gamma_edges(process).len(),
    })
}

/// One process's penalized regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub penalty: DMatrix<f64>,
    pub layout: DesignLayout,
    /// Realized gap of every row.
    pub gaps: Vec<f64>,
    /// Parent values filled in by interpolation.
    pub interpolated: usize,
}

impl Regression {
    pub fn rows(&self) -> usize {
        self.design.nrows()
    }
}

fn build_regression(
    structure: &ItbnStructure,
    process: usize,
    rows: &[RowInput],
) -> Result<Regression> {
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let layout = layout_for(structure, process, &gaps)?;
    let w = layout.width();
    let mut design = DMatrix::zeros(rows.len(), w);
    for (i, r) in rows.iter().enumerate() {
        let row = layout.row(r.gap, r.y_prev, &r.parents);
        design.row_mut(i).copy_from_slice(&row);
    }
    let response = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.y));
    let penalty = layout.penalty(structure.processes[process].lambda)?;
    Ok(Regression {
        design,
        response,
        penalty,
        layout,
        gaps,
        interpolated: rows.iter().map(|r| r.interpolated).sum(),
    })
}

/// Builds the regression of `process` from fully observed data.
pub fn assemble_regression(
    structure: &ItbnStructure,
    data: &ObservationSet,
    process: &str,
) -> Result<Regression> {
    assemble_regression_with(structure, data, process, &FitOptions::default())
}

pub fn assemble_regression_with(
    structure: &ItbnStructure,
    data: &ObservationSet,
    process: &str,
    options: &FitOptions,
) -> Result<Regression> {
    structure.validate()?;
    check_data(structure, data)?;
    let p = structure.process(process)?;
    let rows = collect_rows(structure, data, p, RowMode::strict(options))
        .map_err(|e| e.in_process(process))?;
    build_regression(structure, p, &rows).map_err(|e| e.in_process(process))
}

fn check_data(structure: &ItbnStructure, data: &ObservationSet) -> Result<()> {
    let names: Vec<&str> = structure
        .processes
        .iter()
        .map(|p| p.name.as_str())
        .collect();
    if data
        .process_names()
        .iter()
        .map(String::as_str)
        .ne(names.iter().copied())
    {
        return Err(Error::Data(format!(
            "observations are over processes {:?}, structure declares {:?}",
            data.process_names(),
            names
        )));
    }
    Ok(())
}

/// Learned CPD of one process plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessFit {
    pub process: String,
    pub cpd: ProcessCpd,
    pub layout: DesignLayout,
    /// Standard errors of the transition coefficients, in design order.
    pub standard_errors: Vec<f64>,
    pub edf: f64,
    pub rows: usize,
    pub initial_rows: usize,
    /// Transition plus slice-0 log-likelihood at the fitted parameters.
    pub log_likelihood: f64,
    pub transition_log_likelihood: f64,
    pub initial_log_likelihood: f64,
    /// Penalized regression objective at the solution.
    pub objective: f64,
    pub condition_estimate: f64,
    pub interpolated_parents: usize,
    /// Newton iterations (logistic processes only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

/// Modelling choices a fit was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub interpolate_parents: bool,
    pub solver: String,
    pub precision_estimator: String,
    pub logistic_objective: String,
    pub knot_rule: String,
    pub initial_estimator: String,
}

impl FitSettings {
    fn from_options(options: &FitOptions) -> Self {
        FitSettings {
            interpolate_parents: options.interpolate_parents,
            solver: "qr of the penalty-augmented, column-equilibrated design".into(),
            precision_estimator: "maximum likelihood: rows / residual sum of squares".into(),
            logistic_objective: "-loglik + theta' P theta / 2, Newton with backtracking, |grad|inf <= 1e-8".into(),
            knot_rule: "quantiles k/(K+1) of the realized gaps of the process's rows".into(),
            initial_estimator: "gaussian: residual sample mean and ML variance at slice 0; bernoulli: intercept with a Jeffreys pseudo-observation".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub structure: ItbnStructure,
    pub processes: Vec<ProcessFit>,
    pub log_likelihood: f64,
    pub objective: f64,
    pub edf: f64,
    pub settings: FitSettings,
    /// Knot counts chosen per process, when selection was run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub knot_selection: Vec<(String, KnotSelection)>,
}

impl FitResult {
    pub fn itbn(&self) -> Result<Itbn> {
        Itbn::new(
            self.structure.clone(),
            self.processes.iter().map(|p| p.cpd.clone()).collect(),
        )
    }

    pub fn process(&self, name: &str) -> Option<&ProcessFit> {
        self.processes.iter().find(|p| p.process == name)
    }

    pub fn interpolated_parents(&self) -> usize {
        self.processes.iter().map(|p| p.interpolated_parents).sum()
    }
}

fn weighted_mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Maximizes `sum [y (b + o) - ln(1 + e^(b + o))] + b/2 - ln(1 + e^b)` over
/// the intercept `b`; the extra term is one half-success pseudo-observation
/// that keeps `b` finite when every response agrees.
fn bernoulli_intercept(rows: &[(f64, f64)]) -> Result<f64> {
    let mut b = 0.0;
    for _ in 0..200 {
        let mut g = 0.5 - sigmoid(b);
        let mut h = sigmoid(b) * (1.0 - sigmoid(b));
        for &(y, o) in rows {
            let mu = sigmoid(b + o);
            g += y - mu;
            h += mu * (1.0 - mu);
        }
        if g.abs() <= 1e-12 * (rows.len() as f64 + 1.0) {
            return Ok(b);
        }
        // concave objective: damped Newton step stays safe
        let step = (g / h).clamp(-5.0, 5.0);
        b += step;
    }
    Err(Error::NotConverged {
        iterations: 200,
        gradient_norm: f64::NAN,
    })
}

fn estimate_initial(
    structure: &ItbnStructure,
    process: usize,
    predictor: &LinearPredictor,
    rows0: &[(f64, Vec<f64>)],
    transition: &Cpd,
    responses: &DVector<f64>,
) -> Result<InitialCpd> {
    if let Some(init) = &structure.processes[process].initial {
        return Ok(init.clone());
    }
    let gammas: Vec<f64> = initial_edges(structure, process)
        .iter()
        .map(|&(g, _)| predictor.gamma[g])
        .collect();
    let offset = |parents: &[f64]| gammas.iter().zip(parents).map(|(g, x)| g * x).sum::<f64>();
    match transition {
        Cpd::Gaussian(t) => {
            if rows0.is_empty() {
                let (mean, _) = weighted_mean_var(responses.as_slice());
                return Ok(InitialCpd::Gaussian {
                    mean,
                    precision: t.precision,
                });
            }
            let resid: Vec<f64> = rows0.iter().map(|(y, x)| y - offset(x)).collect();
            let (mean, var) = weighted_mean_var(&resid);
            let precision = if resid.len() < 2 || var <= 1e-12 * (1.0 + mean * mean) {
                t.precision
            } else {
                1.0 / var
            };
            Ok(InitialCpd::Gaussian { mean, precision })
        }
        Cpd::Bernoulli(_) => {
            let rows: Vec<(f64, f64)> = rows0.iter().map(|(y, x)| (*y, offset(x))).collect();
            if rows.iter().any(|(y, _)| *y != 0.0 && *y != 1.0) {
                return Err(Error::Data("bernoulli observations must be 0 or 1".into()));
            }
            let b = bernoulli_intercept(&rows)?;
            Ok(InitialCpd::Bernoulli { p: sigmoid(b) })
        }
    }
}

fn initial_log_likelihood(
    structure: &ItbnStructure,
    process: usize,
    cpd: &ProcessCpd,
    rows0: &[(f64, Vec<f64>)],
) -> f64 {
    let gamma = &cpd.transition.predictor().gamma;
    let gammas: Vec<f64> = initial_edges(structure, process)
        .iter()
        .map(|&(g, _)| gamma[g])
        .collect();
    rows0
        .iter()
        .map(|(y, x)| {
            let eta =
                cpd.initial.intercept() + gammas.iter().zip(x).map(|(g, v)| g * v).sum::<f64>();
            node_log_density(&cpd.initial_kind(), *y, eta)
        })
        .sum()
}

/// Fits one process's CPD.
pub fn fit_process(
    structure: &ItbnStructure,
    data: &ObservationSet,
    process: &str,
    options: &FitOptions,
) -> Result<ProcessFit> {
    structure.validate()?;
    check_data(structure, data)?;
    let p = structure.process(process)?;
    fit_process_index(structure, data, p, options).map_err(|e| e.in_process(process))
}

fn fit_process_index(
    structure: &ItbnStructure,
    data: &ObservationSet,
    p: usize,
    options: &FitOptions,
) -> Result<ProcessFit> {
    let mode = RowMode::strict(options);
    let rows = collect_rows(structure, data, p, mode)?;
    if rows.is_empty() {
        return Err(Error::Data("no observed transitions to fit".into()));
    }
    let reg = build_regression(structure, p, &rows)?;
    let rows0 = collect_initial_rows(structure, data, p, mode)?;
    fit_regression(structure, p, reg, &rows0)
}

fn fit_regression(
    structure: &ItbnStructure,
    p: usize,
    reg: Regression,
    rows0: &[(f64, Vec<f64>)],
) -> Result<ProcessFit> {
    let decl = &structure.processes[p];
    let (transition, se, edf, ll, objective, condition, iterations) = match decl.family {
        Family::Gaussian => {
            let fit = fit_gaussian(&reg.design, &reg.response, &reg.penalty)?;
            let cpd = Cpd::Gaussian(GaussianLinearCpd {
                predictor: reg.layout.predictor(&fit.coefficients)?,
                precision: fit.precision,
            });
            (
                cpd,
                fit.standard_errors,
                fit.edf,
                fit.log_likelihood,
                fit.objective,
                fit.condition_estimate,
                None,
            )
        }
        Family::Bernoulli => {
            let fit = fit_logit(&reg.design, &reg.response, &reg.penalty)?;
            let cpd = Cpd::Bernoulli(BernoulliLogitCpd {
                predictor: reg.layout.predictor(&fit.coefficients)?,
            });
            (
                cpd,
                fit.standard_errors,
                fit.edf,
                fit.log_likelihood,
                fit.objective,
                fit.condition_estimate,
                Some(fit.iterations),
            )
        }
    };
    let initial = estimate_initial(
        structure,
        p,
        transition.predictor(),
        rows0,
        &transition,
        &reg.response,
    )?;
    let cpd = ProcessCpd {
        transition,
        initial,
    };
    let init_ll = initial_log_likelihood(structure, p, &cpd, rows0);
    Ok(ProcessFit {
        process: decl.name.clone(),
        cpd,
        layout: reg.layout.clone(),
        standard_errors: se,
        edf,
        rows: reg.rows(),
        initial_rows: rows0.len(),
        log_likelihood: ll + init_ll,
        transition_log_likelihood: ll,
        initial_log_likelihood: init_ll,
        objective,
        condition_estimate: condition,
        interpolated_parents: reg.interpolated,
        iterations,
    })
}

/// Fits every process independently from irregularly complete data.
pub fn fit_fully_observed(structure: &ItbnStructure, data: &ObservationSet) -> Result<FitResult> {
    fit_with(structure, data, &FitOptions::default())
}

pub fn fit_with(
    structure: &ItbnStructure,
    data: &ObservationSet,
    options: &FitOptions,
) -> Result<FitResult> {
    structure.validate()?;
    check_data(structure, data)?;
    if !options.interpolate_parents {
        require_complete(structure, data)?;
    }
    let processes = (0..structure.process_count())
        .map(|p| {
            fit_process_index(structure, data, p, options)
                .map_err(|e| e.in_process(&structure.processes[p].name))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FitResult {
        structure: structure.clone(),
        log_likelihood: processes.iter().map(|p| p.log_likelihood).sum(),
        objective: processes.iter().map(|p| p.objective).sum(),
        edf: processes.iter().map(|p| p.edf).sum(),
        processes,
        settings: FitSettings::from_options(options),
        knot_selection: Vec::new(),
    })
}

fn require_complete(structure: &ItbnStructure, data: &ObservationSet) -> Result<()> {
    for e in data.entities() {
        if e.is_irregularly_complete() {
            continue;
        }
        // name the first hole inside the observed span
        let last = (0..e.slice_count())
            .rev()
            .find(|&j| e.row(j).iter().any(Option::is_some))
            .unwrap_or(0);
        for j in 0..=last {
            for (p, v) in e.row(j).iter().enumerate() {
                if v.is_none() {
                    return Err(Error::NotFullyObserved(format!(
                        "node `{}` of entity `{}` at time {} is not observed",
                        structure.processes[p].name,
                        e.entity(),
                        e.times()[j] + structure.processes[p].offset
                    )));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum DensityKind {
    Gaussian { precision: f64 },
    Bernoulli,
}

impl ProcessCpd {
    pub(crate) fn initial_kind(&self) -> DensityKind {
        match self.initial {
            InitialCpd::Gaussian { precision, .. } => DensityKind::Gaussian { precision },
            InitialCpd::Bernoulli { .. } => DensityKind::Bernoulli,
        }
    }
}

impl Cpd {
    pub(crate) fn density_kind(&self) -> DensityKind {
        match self {
            Cpd::Gaussian(g) => DensityKind::Gaussian {
                precision: g.precision,
            },
            Cpd::Bernoulli(_) => DensityKind::Bernoulli,
        }
    }
}

pub(crate) fn node_log_density(kind: &DensityKind, y: f64, eta: f64) -> f64 {
    match *kind {
        DensityKind::Gaussian { precision } => {
            0.5 * (precision.ln() - (2.0 * std::f64::consts::PI).ln())
                - 0.5 * precision * (y - eta).powi(2)
        }
        DensityKind::Bernoulli => bernoulli_log_mass(y, eta),
    }
}

/// Log-likelihood of fully observed data: slice-0 terms plus every
/// observed transition.
pub fn log_likelihood(model: &Itbn, data: &ObservationSet) -> Result<f64> {
    log_likelihood_with(model, data, &FitOptions::default())
}

pub fn log_likelihood_with(
    model: &Itbn,
    data: &ObservationSet,
    options: &FitOptions,
) -> Result<f64> {
    Ok(process_log_likelihoods(model, data, options)?.iter().sum())
}

/// Per-process log-likelihood contributions.
pub fn process_log_likelihoods(
    model: &Itbn,
    data: &ObservationSet,
    options: &FitOptions,
) -> Result<Vec<f64>> {
    let structure = &model.structure;
    check_data(structure, data)?;
    let mode = RowMode::strict(options);
    (0..structure.process_count())
        .map(|p| {
            let name = &structure.processes[p].name;
            let cpd = &model.cpds[p];
            let rows = collect_rows(structure, data, p, mode).map_err(|e| e.in_process(name))?;
            let kind = cpd.transition.density_kind();
            let mut total = 0.0;
            for r in &rows {
                let eta = predictor_eta(cpd.transition.predictor(), r.gap, r.y_prev, &r.parents)?;
                total += node_log_density(&kind, r.y, eta);
            }
            let rows0 =
                collect_initial_rows(structure, data, p, mode).map_err(|e| e.in_process(name))?;
            Ok(total + initial_log_likelihood(structure, p, cpd, &rows0))
        })
        .collect()
}

/// Score of one knot-count candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotScore {
    pub knots: usize,
    /// Corrected AIC; `None` when the fit failed or `N - edf - 1 <= 0`.
    pub aicc: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub edf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSelection {
    pub best: usize,
    pub scores: Vec<KnotScore>,
}

/// Applies knot count `count` to the process's automatic splines (to
/// `alpha` when none is automatic).
pub fn with_knot_count(structure: &ItbnStructure, process: usize, count: usize) -> ItbnStructure {
    let mut s = structure.clone();
    let decl = &mut s.processes[process];
    let ar = structure.has_autoregression(process);
    let alpha_auto = matches!(decl.alpha.knots, KnotRule::Auto { .. });
    let beta_auto = ar && matches!(decl.beta.knots, KnotRule::Auto { .. });
    if alpha_auto || !beta_auto {
        decl.alpha = SplineConfig::auto(decl.alpha.degree, count);
    }
    if beta_auto {
        decl.beta = SplineConfig::auto(decl.beta.degree, count);
    }
    s
}

/// Small-sample corrected AIC with effective degrees of freedom `edf`.
pub fn aicc(log_likelihood: f64, edf: f64, rows: usize) -> Option<f64> {
    let n = rows as f64;
    let denom = n - edf - 1.0;
    (denom > 0.0).then(|| -2.0 * log_likelihood + 2.0 * edf * n / denom)
}

/// Picks the knot count minimizing AICc of the process's transition fit.
pub fn select_knot_count(
    structure: &ItbnStructure,
    data: &ObservationSet,
    process: &str,
    candidates: &[usize],
    options: &FitOptions,
) -> Result<KnotSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no knot-count candidates".into()));
    }
    structure.validate()?;
    check_data(structure, data)?;
    let p = structure.process(process)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for &k in candidates {
        let s = with_knot_count(structure, p, k);
        let outcome = collect_rows(&s, data, p, RowMode::strict(options))
            .and_then(|rows| build_regression(&s, p, &rows))
            .and_then(|reg| fit_regression(&s, p, reg, &[]));
        scores.push(match outcome {
            Ok(fit) => KnotScore {
                knots: k,
                aicc: aicc(fit.transition_log_likelihood, fit.edf, fit.rows),
                log_likelihood: Some(fit.transition_log_likelihood),
                edf: Some(fit.edf),
                error: None,
            },
            Err(e) => KnotScore {
                knots: k,
                aicc: None,
                log_likelihood: None,
                edf: None,
                error: Some(e.to_string()),
            },
        });
    }
    if candidates.len() == 1 {
        return Ok(KnotSelection {
            best: candidates[0],
            scores,
        });
    }
    let best = scores
        .iter()
        .filter_map(|s| s.aicc.map(|a| (a, s.knots)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, k)| k)
        .ok_or_else(|| {
            let reasons: Vec<String> = scores
                .iter()
                .map(|s| {
                    format!(
                        "{}: {}",
                        s.knots,
                        s.error.as_deref().unwrap_or("too few rows")
                    )
                })
                .collect();
            Error::Data(format!(
                "every knot-count candidate failed ({})",
                reasons.join("; ")
            ))
        })?;
    Ok(KnotSelection { best, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetScore {
    pub delay: f64,
    /// How often the delay occurs as a child-to-parent-observation lag.
    pub frequency: usize,
    /// Invented nodes the delay requires when grounding the data.
    pub invented: usize,
    pub penalized_log_likelihood: Option<f64>,
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSearch {
    pub best: f64,
    /// Rows shared by every candidate; all candidates are fitted on these.
    pub rows: usize,
    /// Weight per invented node.
    pub compactness_weight: f64,
    pub candidates: Vec<OffsetScore>,
}

fn find_edge(structure: &ItbnStructure, edge: &EdgeDecl) -> Result<usize> {
    if edge.role != EdgeRole::Gamma {
        return Err(Error::InvalidParameter(
            "offset search applies to gamma edges only".into(),
        ));
    }
    structure
        .edges
        .iter()
        .position(|e| {
            e.parent == edge.parent
                && e.child == edge.child
                && e.lag == edge.lag
                && e.role == edge.role
        })
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "structure has no gamma edge {} -> {}",
                edge.parent, edge.child
            ))
        })
}

/// Lags `T_ref - T_k >= 0` (in ticks) from each observed child's reference
/// slice back to the parent's observations, with their frequencies.
fn delay_candidates(
    structure: &ItbnStructure,
    data: &ObservationSet,
    edge: &EdgeDecl,
) -> Result<BTreeMap<i64, usize>> {
    let child = structure.process(&edge.child)?;
    let parent = structure.process(&edge.parent)?;
    let lag = edge.lag.0 as usize;
    let mut counts = BTreeMap::new();
    for e in data.entities() {
        let ticks = e.timeline().ticks();
        for j in 1..e.slice_count() {
            if e.value(j, child).is_none() || lag > j {
                continue;
            }
            let reference = ticks[j - lag];
            for k in 0..=(j - lag) {
                if e.value(k, parent).is_some() {
                    *counts.entry(reference - ticks[k]).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(counts)
}

fn invented_count(data: &ObservationSet, edge: &EdgeDecl) -> usize {
    data.entities()
        .iter()
        .map(|e| {
            (1..e.slice_count())
                .filter(|&j| matches!(resolve_edge(e.times(), edge, j), ParentTime::OffGrid { .. }))
                .count()
        })
        .sum()
}

/// Searches the delay of a gamma edge over lags that occur in the data.
///
/// Every candidate is fitted with interpolated parents on the rows
/// available to all candidates; the score is the penalized log-likelihood
/// minus `ln(rows)/2` per invented node. Ties go to fewer invented nodes,
/// then to the smaller delay.
pub fn search_offsets(
    structure: &ItbnStructure,
    data: &ObservationSet,
    edge: &EdgeDecl,
    max_candidates: usize,
) -> Result<OffsetSearch> {
    structure.validate()?;
    check_data(structure, data)?;
    if max_candidates == 0 {
        return Err(Error::InvalidParameter(
            "max_candidates must be positive".into(),
        ));
    }
    let index = find_edge(structure, edge)?;
    let child = structure.process(&edge.child)?;
    let resolution = structure.resolution;
    let counts = delay_candidates(structure, data, edge)?;
    if counts.is_empty() {
        return Err(Error::Data(
            "no candidate delays: the data hold no usable parent-child time pairs".into(),
        ));
    }
    let mut ranked: Vec<(i64, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(max_candidates);

    let lenient = RowMode {
        interpolate: true,
        skip_unavailable: true,
    };
    let mut variants = Vec::with_capacity(ranked.len());
    for &(ticks, frequency) in &ranked {
        let mut s = structure.clone();
        s.edges[index].delay = resolution.to_time(ticks);
        let rows = collect_rows(&s, data, child, lenient)?;
        variants.push((s, frequency, rows));
    }
    let mut common: Option<HashSet<(usize, usize)>> = None;
    for (_, _, rows) in &variants {
        let keys: HashSet<_> = rows.iter().map(|r| (r.entity, r.slice)).collect();
        common = Some(match common {
            None => keys,
            Some(c) => c.intersection(&keys).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.is_empty() {
        return Err(Error::Data("candidate delays share no usable rows".into()));
    }
    let weight = (common.len() as f64).ln() / 2.0;
    let mut candidates = Vec::with_capacity(variants.len());
    for (s, frequency, rows) in variants {
        let delay = s.edges[index].delay;
        let invented = invented_count(data, &s.edges[index]);
        let kept: Vec<RowInput> = rows
            .into_iter()
            .filter(|r| common.contains(&(r.entity, r.slice)))
            .collect();
        let outcome = build_regression(&s, child, &kept).and_then(|reg| {
            let penalty = reg.penalty.clone();
            let fit = fit_regression(&s, child, reg, &[])?;
            let t = DVector::from_vec(coefficients_of(&fit));
            Ok(fit.transition_log_likelihood - 0.5 * t.dot(&(&penalty * &t)))
        });
        candidates.push(match outcome {
            Ok(pll) => OffsetScore {
                delay,
                frequency,
                invented,
                penalized_log_likelihood: Some(pll),
                score: Some(pll - weight * invented as f64),
                error: None,
            },
            Err(e) => OffsetScore {
                delay,
                frequency,
                invented,
                penalized_log_likelihood: None,
                score: None,
                error: Some(e.to_string()),
            },
        });
    }
    let best = candidates
        .iter()
        .filter(|c| c.score.is_some())
        .max_by(|a, b| {
            a.score
                .unwrap()
                .total_cmp(&b.score.unwrap())
                .then(b.invented.cmp(&a.invented))
                .then(b.delay.total_cmp(&a.delay))
        })
        .map(|c| c.delay)
        .ok_or_else(|| Error::Data("every candidate delay failed to fit".into()))?;
    Ok(OffsetSearch {
        best,
        rows: common.len(),
        compactness_weight: weight,
        candidates,
    })
}

/// Transition coefficients of a fit in design order.
pub fn coefficients_of(fit: &ProcessFit) -> Vec<f64> {
    let pred = fit.cpd.transition.predictor();
    let mut out = pred.alpha.coefficients.clone();
    if let Some(b) = &pred.beta {
        out.extend_from_slice(&b.coefficients);
    }
    out.extend_from_slice(&pred.gamma);
    out
}
