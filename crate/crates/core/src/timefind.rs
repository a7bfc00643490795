//! Finding the time of a partially specified slice.
//!
//! A slice with known neighbours at `t-` and `t+` but unknown time `T_j`
//! has conditional mean curve `m(t) = E[X_i(T_j) | T_j = t, evidence]`. The
//! spline CPDs make `m` continuous, so any target between its endpoint
//! values is attained somewhere in `(t-, t+)`; we locate it by bracketed
//! root finding. Under Monte Carlo estimation `m` is replaced by sample
//! averages with common random numbers, solved on growing sample sizes
//! (retrospective approximation).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::infer::{exact_joint, likelihood_weighting, smooth, Evidence};
use crate::learn::EntityData;
use crate::model::{same_time, Itbn};

/// Points of the coarse sign-change scan.
pub const SCAN_POINTS: usize = 32;
const MAX_ITERATIONS: usize = 200;
const MIN_STAGE_SAMPLES: usize = 64;
const MAX_STAGES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Estimator {
    Exact,
    MonteCarlo { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeQuery {
    pub process: usize,
    /// Open interval `(t-, t+)` that contains the free slice.
    pub bracket: (f64, f64),
    pub target: f64,
    /// Accepted `|m(t) - target|`.
    pub tolerance: f64,
    /// Accepted bracket width.
    pub time_tolerance: f64,
    pub estimator: Estimator,
}

impl TimeQuery {
    pub fn new(process: usize, bracket: (f64, f64), target: f64) -> Self {
        TimeQuery {
            process,
            bracket,
            target,
            tolerance: 1e-9,
            time_tolerance: 1e-9 * (bracket.1 - bracket.0).abs().max(1.0),
            estimator: Estimator::Exact,
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_tolerances(mut self, tolerance: f64, time_tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.time_tolerance = time_tolerance;
        self
    }

    /// Distance kept from the bracket ends: wide enough that the free slice
    /// never coincides with a known slice at `t-` or `t+`.
    fn margin(&self) -> f64 {
        let (lo, hi) = self.bracket;
        (1e-9 * (hi - lo)).max(2e-9 * lo.abs().max(hi.abs()).max(1.0))
    }
}

/// An entity's slices and evidence, plus one free slice to be placed.
#[derive(Debug, Clone)]
pub struct FreeSlice<'a> {
    model: &'a Itbn,
    times: Vec<f64>,
    /// `values[slice][process]` for the known slices.
    values: Vec<Vec<Option<f64>>>,
}

/// Posterior mean of the free node at one candidate time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// Monte Carlo standard error of `mean`; zero when exact.
    pub standard_error: f64,
}

impl<'a> FreeSlice<'a> {
    pub fn new(model: &'a Itbn, times: Vec<f64>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidParameter(
                "one value row per known slice is required".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidTimeline(
                "known slice times must increase".into(),
            ));
        }
        let m = model.structure.process_count();
        if values.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidParameter(format!(
                "value rows must have {m} entries"
            )));
        }
        Ok(FreeSlice {
            model,
            times,
            values,
        })
    }

    pub fn from_entity(model: &'a Itbn, entity: &EntityData) -> Result<Self> {
        let values = (0..entity.slice_count())
            .map(|j| entity.row(j).to_vec())
            .collect();
        Self::new(model, entity.times().to_vec(), values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn check_query(&self, query: &TimeQuery) -> Result<()> {
        let (lo, hi) = query.bracket;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bracket ({lo}, {hi}) is not an interval"
            )));
        }
        if !(query.tolerance > 0.0) || !(query.time_tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        if query.process >= self.model.structure.process_count() {
            return Err(Error::InvalidParameter(format!(
                "unknown process index {}",
                query.process
            )));
        }
        if let Some(t) = self
            .times
            .iter()
            .find(|&&t| t > lo && t < hi && !same_time(t, lo) && !same_time(t, hi))
        {
            return Err(Error::InvalidParameter(format!(
                "known slice at {t} lies inside the bracket ({lo}, {hi})"
            )));
        }
        if let Estimator::MonteCarlo { count, .. } = query.estimator {
            if count == 0 {
                return Err(Error::InvalidParameter(
                    "Monte Carlo sample count must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Moments of the free node when the free slice sits at `t`.
    pub fn moments(&self, query: &TimeQuery, t: f64) -> Result<Moments> {
        self.check_query(query)?;
        let (lo, hi) = query.bracket;
        if !(t > lo && t < hi) {
            return Err(Error::InvalidParameter(format!(
                "time {t} is outside the open bracket ({lo}, {hi})"
            )));
        }
        self.moments_with(query, t, query.estimator)
    }

    fn moments_with(&self, query: &TimeQuery, t: f64, estimator: Estimator) -> Result<Moments> {
        if self.times.iter().any(|&s| same_time(s, t)) {
            return Err(Error::InvalidParameter(format!(
                "time {t} coincides with a known slice"
            )));
        }
        let j = self.times.partition_point(|&s| s < t);
        let mut times = self.times.clone();
        times.insert(j, t);
        let g = self.model.unroll_times(&times)?;
        let mut ev = Evidence::new();
        for (k, row) in self.values.iter().enumerate() {
            let slice = if k < j { k } else { k + 1 };
            for (p, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    ev.insert(p, slice, *v);
                }
            }
        }
        let node = g
            .grid_node(query.process, j)
            .expect("free slice is grounded");
        match estimator {
            Estimator::Exact => {
                g.is_all_gaussian()?;
                let b = if g.check_chain().is_ok() {
                    smooth(&g, &ev)?
                } else {
                    exact_joint(&g, &ev, &[node])?
                };
                let n = b.node(node).expect("queried node is reported");
                Ok(Moments {
                    mean: n.mean,
                    variance: n.variance,
                    standard_error: 0.0,
                })
            }
            Estimator::MonteCarlo { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = likelihood_weighting(&g, &ev, &[node], count, &mut rng)?;
                let e = w.estimates[0];
                Ok(Moments {
                    mean: e.mean,
                    variance: e.variance,
                    standard_error: e.standard_error,
                })
            }
        }
    }
}

/// `m(t)` for the query's process.
pub fn conditional_mean(free: &FreeSlice<'_>, query: &TimeQuery, t: f64) -> Result<f64> {
    Ok(free.moments(query, t)?.mean)
}

/// One stage of the solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    /// Samples per evaluation (`None` for the exact estimator).
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tolerance: f64,
    pub root: f64,
    pub residual: f64,
    pub standard_error: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSolution {
    pub t: f64,
    /// Estimated curve value at `t`.
    pub value: f64,
    pub residual: f64,
    /// Root-finding iterations over all stages (scan evaluations excluded).
    pub iterations: usize,
    /// Sign changes of the residual on the first stage's scan grid; more
    /// than one means the root may not be unique.
    pub sign_changes: usize,
    pub standard_error: f64,
    pub trace: Vec<StageTrace>,
}

/// Brent's bracketed root finder (bisection, secant and inverse quadratic
/// interpolation). Stops when `|f| <= tol` or the bracket is narrower than
/// `time_tol`. Iterates never leave `[a, b]`.
pub fn brent<F>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
    time_tol: f64,
) -> Result<(f64, f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa.abs() <= tol {
        return Ok((a, fa, 0));
    }
    if fb.abs() <= tol {
        return Ok((b, fb, 0));
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoBracketedRoot { scan_points: 2 });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=MAX_ITERATIONS {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let half_tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * time_tol;
        let mid = 0.5 * (c - b);
        if fb.abs() <= tol || mid.abs() <= half_tol {
            return Ok((b, fb, iter - 1));
        }
        if e.abs() >= half_tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * mid * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * mid * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * mid * q - (half_tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = mid;
                e = d;
            }
        } else {
            d = mid;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > half_tol {
            d
        } else {
            half_tol.copysign(mid)
        };
        fb = f(b)?;
    }
    Err(Error::IterationLimit {
        iterations: MAX_ITERATIONS,
        lo: b.min(c),
        hi: b.max(c),
    })
}

struct Bracketed {
    root: f64,
    residual: f64,
    iterations: usize,
    sign_changes: usize,
}

/// Scans `SCAN_POINTS` points of `[a, b]`; solves on the whole interval when
/// the endpoints bracket a root, otherwise on the first sign change.
fn scan_and_solve<F>(f: &mut F, a: f64, b: f64, tol: f64, time_tol: f64) -> Result<Bracketed>
where
    F: FnMut(f64) -> Result<f64>,
{
    let n = SCAN_POINTS;
    let grid: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let vals = grid.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
    let sign_changes = vals.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    let (lo, hi, flo, fhi) = if vals[0] * vals[n - 1] < 0.0 {
        (a, b, vals[0], vals[n - 1])
    } else if let Some(i) = vals.iter().position(|v| v.abs() <= tol) {
        return Ok(Bracketed {
            root: grid[i],
            residual: vals[i],
            iterations: 0,
            sign_changes,
        });
    } else if let Some(i) = (0..n - 1).find(|&i| vals[i] * vals[i + 1] < 0.0) {
        (grid[i], grid[i + 1], vals[i], vals[i + 1])
    } else {
        return Err(Error::NoBracketedRoot { scan_points: n });
    };
    let (root, residual, iterations) = brent(&mut *f, lo, hi, flo, fhi, tol, time_tol)?;
    Ok(Bracketed {
        root,
        residual,
        iterations,
        sign_changes,
    })
}

/// Sample sizes of the retrospective stages, smallest first, growing 4x
/// and ending at `count`.
pub fn stage_sizes(count: usize) -> Vec<usize> {
    let mut sizes = vec![count];
    let mut n = count;
    while sizes.len() < MAX_STAGES && n / 4 >= MIN_STAGE_SAMPLES {
        n /= 4;
        sizes.push(n);
    }
    sizes.reverse();
    sizes
}

fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stage as u64 + 1))
}

/// Solves `curve(t) = target` on the query's bracket, where `curve` maps
/// posterior moments to the curve value.
fn solve_curve<C>(free: &FreeSlice<'_>, query: &TimeQuery, curve: C) -> Result<TimeSolution>
where
    C: Fn(&Moments) -> f64,
{
    free.check_query(query)?;
    let eps = query.margin();
    let (a, b) = (query.bracket.0 + eps, query.bracket.1 - eps);
    if !(a < b) {
        return Err(Error::InvalidParameter(format!(
            "bracket ({}, {}) is too narrow for its magnitude",
            query.bracket.0, query.bracket.1
        )));
    }
    match query.estimator {
        Estimator::Exact => {
            let mut f =
                |t: f64| Ok(curve(&free.moments_with(query, t, Estimator::Exact)?) - query.target);
            let s = scan_and_solve(&mut f, a, b, query.tolerance, query.time_tolerance)?;
            Ok(TimeSolution {
                t: s.root,
                value: s.residual + query.target,
                residual: s.residual,
                iterations: s.iterations,
                sign_changes: s.sign_changes,
                standard_error: 0.0,
                trace: vec![StageTrace {
                    samples: None,
                    seed: None,
                    tolerance: query.tolerance,
                    root: s.root,
                    residual: s.residual,
                    standard_error: 0.0,
                    iterations: s.iterations,
                }],
            })
        }
        Estimator::MonteCarlo { count, seed } => {
            let sizes = stage_sizes(count);
            let k = sizes.len();
            let mut trace = Vec::with_capacity(k);
            let mut previous: Option<f64> = None;
            let mut sign_changes = 0;
            for (stage, &n) in sizes.iter().enumerate() {
                let est = Estimator::MonteCarlo {
                    count: n,
                    seed: stage_seed(seed, stage),
                };
                let tol = query.tolerance * 2f64.powi((k - 1 - stage) as i32);
                let mut f = |t: f64| Ok(curve(&free.moments_with(query, t, est)?) - query.target);
                let solved = match previous {
                    None => {
                        let s = scan_and_solve(&mut f, a, b, tol, query.time_tolerance)?;
                        sign_changes = s.sign_changes;
                        (s.root, s.residual, s.iterations)
                    }
                    Some(r) => warm_solve(&mut f, r, a, b, tol, query.time_tolerance)?,
                };
                let (root, residual, iterations) = solved;
                let m = free.moments_with(query, root, est)?;
                trace.push(StageTrace {
                    samples: Some(n),
                    seed: Some(stage_seed(seed, stage)),
                    tolerance: tol,
                    root,
                    residual,
                    standard_error: m.standard_error,
                    iterations,
                });
                previous = Some(root);
            }
            let last = trace.last().expect("at least one stage").clone();
            Ok(TimeSolution {
                t: last.root,
                value: last.residual + query.target,
                residual: last.residual,
                iterations: trace.iter().map(|s| s.iterations).sum(),
                sign_changes,
                standard_error: last.standard_error,
                trace,
            })
        }
    }
}

/// Brackets around `start`, doubling the half-width until the residual
/// changes sign; falls back to a full scan.
fn warm_solve<F>(
    f: &mut F,
    start: f64,
    a: f64,
    b: f64,
    tol: f64,
    time_tol: f64,
) -> Result<(f64, f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f0 = f(start)?;
    if f0.abs() <= tol {
        return Ok((start, f0, 0));
    }
    let mut w = (b - a) / 64.0;
    loop {
        let lo = (start - w).max(a);
        let hi = (start + w).min(b);
        let (flo, fhi) = (f(lo)?, f(hi)?);
        if flo * f0 < 0.0 {
            return brent(&mut *f, lo, start, flo, f0, tol, time_tol);
        }
        if fhi * f0 < 0.0 {
            return brent(&mut *f, start, hi, f0, fhi, tol, time_tol);
        }
        if lo == a && hi == b {
            let s = scan_and_solve(f, a, b, tol, time_tol)?;
            return Ok((s.root, s.residual, s.iterations));
        }
        w *= 2.0;
    }
}

/// Time at which the free slice's conditional mean reaches the target.
pub fn find_time(free: &FreeSlice<'_>, query: &TimeQuery) -> Result<TimeSolution> {
    solve_curve(free, query, |m| m.mean)
}

/// Time at which the `q`-quantile `m(t) + z_q sd(t)` reaches the target.
pub fn find_time_quantile(free: &FreeSlice<'_>, query: &TimeQuery, q: f64) -> Result<TimeSolution> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile level {q} must lie in (0, 1)"
        )));
    }
    if query.estimator != Estimator::Exact {
        return Err(Error::InvalidParameter(
            "quantile curves need the exact estimator".into(),
        ));
    }
    let z = Normal::standard().inverse_cdf(q);
    solve_curve(free, query, move |m| m.mean + z * m.variance.sqrt())
}
