//! Discrete-time analog of an all-Gaussian ITBN.
//!
//! The data are expanded onto a regular grid at the pooled granularity,
//! unobserved grid slices are filled by linear interpolation, and a
//! constant-coefficient model is fitted with the same per-process
//! regressions. Its likelihood for the original observations composes the
//! one-step transition `k` times across a gap of `k` grid steps, so both
//! models are scored on the same irregular data.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Cpd, EdgeRole, InitialCpd, ItbnStructure, SliceLag};
use crate::splines::SplineConfig;
use crate::timegrid::{gcd, Timeline};

use super::{fit_fully_observed, EntityData, FitResult, ObservationSet};

#[derive(Debug, Clone)]
pub struct DiscreteAnalog {
    /// Fit on the interpolated regular grid.
    pub fit: FitResult,
    /// Grid step in time units.
    pub step: f64,
    /// Slices after expansion, over all entities.
    pub expanded_slices: usize,
    /// Log-likelihood of the original observations under the discrete model.
    pub log_likelihood: f64,
}

/// Constant-coefficient copy of `structure`.
pub fn constant_structure(structure: &ItbnStructure) -> ItbnStructure {
    let mut s = structure.clone();
    for p in &mut s.processes {
        p.alpha = SplineConfig::constant();
        p.beta = SplineConfig::constant();
        p.lambda = 0.0;
    }
    s
}

/// Pooled gcd of every entity's gaps, in ticks.
fn pooled_granularity(data: &ObservationSet) -> Result<i64> {
    let g = data
        .entities()
        .iter()
        .flat_map(|e| e.timeline().ticks().windows(2).map(|w| w[1] - w[0]))
        .fold(0, gcd);
    if g == 0 {
        return Err(Error::NoGaps);
    }
    Ok(g)
}

/// Regular-grid copy of `data` with interpolated fills.
pub fn expand(data: &ObservationSet, step_ticks: i64) -> Result<ObservationSet> {
    let m = data.process_names().len();
    let mut out = ObservationSet::new(data.process_names().to_vec(), data.resolution());
    for e in data.entities() {
        let ticks = e.timeline().ticks();
        let (first, last) = (ticks[0], ticks[ticks.len() - 1]);
        let grid: Vec<i64> = (0..=(last - first) / step_ticks)
            .map(|i| first + i * step_ticks)
            .collect();
        let timeline = Timeline::from_ticks(e.entity(), grid.clone(), data.resolution())?;
        let mut values = Vec::with_capacity(grid.len());
        let mut next = 0;
        for &t in &grid {
            if next < ticks.len() && ticks[next] == t {
                values.push(e.row(next).to_vec());
                next += 1;
            } else {
                let time = data.resolution().to_time(t);
                values.push((0..m).map(|p| e.interpolate(p, time)).collect());
            }
        }
        out.push(EntityData::new(timeline, values)?)?;
    }
    Ok(out)
}

/// One-step linear-Gaussian transition `x_j = c + B x_j + A x_(j-1) + e`.
struct Transition {
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    noise: DVector<f64>,
}

fn transition(structure: &ItbnStructure, fit: &FitResult) -> Result<Transition> {
    let m = structure.process_count();
    let mut t = Transition {
        c: DVector::zeros(m),
        a: DMatrix::zeros(m, m),
        b: DMatrix::zeros(m, m),
        noise: DVector::zeros(m),
    };
    for (p, pf) in fit.processes.iter().enumerate() {
        let Cpd::Gaussian(g) = &pf.cpd.transition else {
            return Err(Error::NotAllGaussian(pf.process.clone()));
        };
        t.c[p] = g.predictor.alpha.coefficients[0];
        if let Some(beta) = &g.predictor.beta {
            t.a[(p, p)] += beta.coefficients[0];
        }
        t.noise[p] = 1.0 / g.precision;
        for (k, e) in structure.gamma_edges(p).into_iter().enumerate() {
            if e.delay != 0.0 {
                return Err(Error::InvalidParameter(
                    "the discrete analog does not support delayed edges".into(),
                ));
            }
            let q = structure.process(&e.parent)?;
            let w = g.predictor.gamma[k];
            match e.lag {
                SliceLag::INTRA => t.b[(p, q)] += w,
                _ => t.a[(p, q)] += w,
            }
        }
    }
    debug_assert!(structure
        .edges
        .iter()
        .all(|e| e.role != EdgeRole::Autoregressive || e.lag == SliceLag::PREVIOUS));
    Ok(t)
}

fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("k-step covariance is not positive definite".into()))?;
    let r = x - mean;
    let z = chol
        .l()
        .solve_lower_triangular(&r)
        .expect("cholesky factor is invertible");
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let n = x.len() as f64;
    Ok(-0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared()))
}

/// Fits the discrete-time analog and scores the original observations.
pub fn discrete_analog(structure: &ItbnStructure, data: &ObservationSet) -> Result<DiscreteAnalog> {
    if !data.is_irregularly_complete() {
        return Err(Error::NotFullyObserved(
            "the discrete analog needs irregularly complete data".into(),
        ));
    }
    let step_ticks = pooled_granularity(data)?;
    let expanded = expand(data, step_ticks)?;
    let discrete = constant_structure(structure);
    let fit = fit_fully_observed(&discrete, &expanded)?;
    let tr = transition(&discrete, &fit)?;
    let m = discrete.process_count();
    let solve = (DMatrix::identity(m, m) - &tr.b)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("I - B is singular".into()))?;
    let f = &solve * &tr.a;
    let q = &solve * DMatrix::from_diagonal(&tr.noise) * solve.transpose();
    let shift = &solve * &tr.c;

    let mut total = 0.0;
    for (p, pf) in fit.processes.iter().enumerate() {
        // slice-0 terms use the discrete fit's initial distributions
        let gamma = &pf.cpd.transition.predictor().gamma;
        let edges = super::initial_edges(&discrete, p);
        for e in data.entities() {
            let Some(y) = e.value(0, p) else { continue };
            let eta = pf.cpd.initial.intercept()
                + edges
                    .iter()
                    .map(|&(g, q)| gamma[g] * e.value(0, q).unwrap_or(0.0))
                    .sum::<f64>();
            total += super::node_log_density(&pf.cpd.initial_kind(), y, eta);
            debug_assert!(matches!(pf.cpd.initial, InitialCpd::Gaussian { .. }));
        }
    }
    for e in data.entities() {
        let ticks = e.timeline().ticks();
        let full = |j: usize| -> Option<DVector<f64>> {
            let row: Option<Vec<f64>> = e.row(j).iter().copied().collect();
            row.map(DVector::from_vec)
        };
        for j in 1..e.slice_count() {
            let (Some(prev), Some(cur)) = (full(j - 1), full(j)) else {
                continue;
            };
            let k = ((ticks[j] - ticks[j - 1]) / step_ticks) as usize;
            let mut mean = prev;
            let mut cov = DMatrix::zeros(m, m);
            for _ in 0..k {
                mean = &f * mean + &shift;
                cov = &f * cov * f.transpose() + &q;
            }
            total += mvn_log_density(&cur, &mean, &cov)?;
        }
    }
    Ok(DiscreteAnalog {
        fit,
        step: data.resolution().to_time(step_ticks),
        expanded_slices: expanded.entities().iter().map(|e| e.slice_count()).sum(),
        log_likelihood: total,
    })
}
