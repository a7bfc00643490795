//! State estimation on grounded ITBNs.
//!
//! All-Gaussian networks are linear-Gaussian: every node is
//! `x_i = c_i + sum_p w_ip x_p + e_i` with `e_i ~ N(0, 1/tau_i)`. Two exact
//! engines are provided. [`exact_joint`] assembles the joint precision
//! matrix and conditions densely; [`smooth`] runs a forward filter and a
//! Rauch-Tung-Striebel backward pass over the slice states, which needs
//! every parent to sit in its own or the previous slice. Networks with
//! logistic nodes are handled by [`likelihood_weighting`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::learn::{sigmoid, EntityData, ObservationSet};
use crate::model::{EdgeRole, Family, GroundedNetwork, Itbn, NodeId, NodeKind};
use crate::timegrid::Timeline;

/// Largest network [`exact_joint`] accepts by default.
pub const EXACT_NODE_CAP: usize = 2000;

/// Largest precision used in inversions (variance floor `1e-12`).
const MAX_PRECISION: f64 = 1e12;

/// Observed values keyed by `(process, slice)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    values: BTreeMap<(usize, usize), f64>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, process: usize, slice: usize, value: f64) {
        self.values.insert((process, slice), value);
    }

    pub fn with(mut self, process: usize, slice: usize, value: f64) -> Self {
        self.insert(process, slice, value);
        self
    }

    pub fn get(&self, process: usize, slice: usize) -> Option<f64> {
        self.values.get(&(process, slice)).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    /// Every observed value of one entity.
    pub fn from_entity(entity: &EntityData) -> Self {
        let mut ev = Evidence::new();
        for j in 0..entity.slice_count() {
            for (p, v) in entity.row(j).iter().enumerate() {
                if let Some(v) = v {
                    ev.insert(p, j, *v);
                }
            }
        }
        ev
    }

    /// Evidence value per node of `grounded`.
    fn resolve(&self, grounded: &GroundedNetwork) -> Result<Vec<Option<f64>>> {
        let mut out = vec![None; grounded.len()];
        for ((p, j), v) in self.iter() {
            let id = grounded.grid_node(p, j).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "evidence for process {p} at slice {j} is outside the network"
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidParameter(
                    "evidence values must be finite".into(),
                ));
            }
            out[id.0] = Some(v);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeBelief {
    pub node: NodeId,
    pub process: usize,
    pub slice: usize,
    pub time: f64,
    pub mean: f64,
    pub variance: f64,
    pub observed: bool,
}

/// Posterior marginals of a set of nodes, optionally with their joint
/// covariance (in the order of `nodes`).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub nodes: Vec<NodeBelief>,
    pub covariance: Option<DMatrix<f64>>,
}

impl GaussianBelief {
    pub fn get(&self, process: usize, slice: usize) -> Option<&NodeBelief> {
        self.nodes
            .iter()
            .find(|n| n.process == process && n.slice == slice)
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeBelief> {
        self.nodes.iter().find(|n| n.node == id)
    }
}

fn gaussian_precision(grounded: &GroundedNetwork, id: usize) -> Result<f64> {
    let node = &grounded.nodes()[id];
    match node.kind {
        NodeKind::Gaussian { precision } => {
            if !(precision > 0.0) || precision.is_nan() {
                return Err(Error::Numeric(format!(
                    "node `{}` at slice {} has precision {precision}",
                    grounded.process_name(node.process),
                    node.slice
                )));
            }
            Ok(precision.min(MAX_PRECISION))
        }
        NodeKind::Bernoulli => Err(Error::NotAllGaussian(
            grounded.process_name(node.process).to_string(),
        )),
    }
}

fn node_belief(
    grounded: &GroundedNetwork,
    id: NodeId,
    mean: f64,
    variance: f64,
    observed: bool,
) -> NodeBelief {
    let n = grounded.node(id);
    NodeBelief {
        node: id,
        process: n.process,
        slice: n.slice,
        time: n.time,
        mean,
        variance: variance.max(0.0),
        observed,
    }
}

/// Exact posterior of `queries` by dense joint-Gaussian conditioning.
pub fn exact_joint(
    grounded: &GroundedNetwork,
    evidence: &Evidence,
    queries: &[NodeId],
) -> Result<GaussianBelief> {
    exact_joint_capped(grounded, evidence, queries, EXACT_NODE_CAP)
}

pub fn exact_joint_capped(
    grounded: &GroundedNetwork,
    evidence: &Evidence,
    queries: &[NodeId],
    cap: usize,
) -> Result<GaussianBelief> {
    let n = grounded.len();
    if n > cap {
        return Err(Error::InvalidParameter(format!(
            "network has {n} nodes, above the exact-inference cap of {cap}"
        )));
    }
    if let Some(q) = queries.iter().find(|q| q.0 >= n) {
        return Err(Error::InvalidParameter(format!(
            "query node {} is not in the network",
            q.0
        )));
    }
    let observed = evidence.resolve(grounded)?;
    // information form: Lambda = sum_i d_i u_i u_i', h = sum_i d_i c_i u_i
    // with u_i = e_i - sum_p w_ip e_p
    let mut lambda = DMatrix::<f64>::zeros(n, n);
    let mut h = DVector::<f64>::zeros(n);
    for (i, node) in grounded.nodes().iter().enumerate() {
        let d = gaussian_precision(grounded, i)?;
        let mut u: Vec<(usize, f64)> = vec![(i, 1.0)];
        for &(p, w) in &node.parents {
            u.push((p.0, -w));
        }
        for &(a, ua) in &u {
            h[a] += d * node.intercept * ua;
            for &(b, ub) in &u {
                lambda[(a, b)] += d * ua * ub;
            }
        }
    }
    let hidden: Vec<usize> = (0..n).filter(|&i| observed[i].is_none()).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in hidden.iter().enumerate() {
        pos[i] = k;
    }
    let nh = hidden.len();
    let mut mean_h = DVector::zeros(nh);
    let mut chol = None;
    if nh > 0 {
        let lhh = DMatrix::from_fn(nh, nh, |a, b| lambda[(hidden[a], hidden[b])]);
        let rhs = DVector::from_fn(nh, |a, _| {
            let i = hidden[a];
            let mut v = h[i];
            for (e, val) in observed.iter().enumerate() {
                if let Some(x) = val {
                    v -= lambda[(i, e)] * x;
                }
            }
            v
        });
        let c = lhh
            .cholesky()
            .ok_or_else(|| Error::Numeric("posterior precision is not positive definite".into()))?;
        mean_h = c.solve(&rhs);
        chol = Some(c);
    }
    // covariance among queried hidden nodes: columns of Lambda_HH^-1
    let hidden_queries: Vec<usize> = queries
        .iter()
        .filter(|q| observed[q.0].is_none())
        .map(|q| pos[q.0])
        .collect();
    let cols = match &chol {
        Some(c) if !hidden_queries.is_empty() => {
            let mut e = DMatrix::zeros(nh, hidden_queries.len());
            for (k, &a) in hidden_queries.iter().enumerate() {
                e[(a, k)] = 1.0;
            }
            c.solve(&e)
        }
        _ => DMatrix::zeros(nh, 0),
    };
    let col_of = |a: usize| hidden_queries.iter().position(|&x| x == a);
    let nq = queries.len();
    let mut cov = DMatrix::zeros(nq, nq);
    for (r, qr) in queries.iter().enumerate() {
        for (s, qs) in queries.iter().enumerate() {
            if observed[qr.0].is_none() && observed[qs.0].is_none() {
                let k = col_of(pos[qs.0]).expect("hidden query has a column");
                cov[(r, s)] = cols[(pos[qr.0], k)];
            }
        }
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    let nodes = queries
        .iter()
        .enumerate()
        .map(|(r, &q)| match observed[q.0] {
            Some(v) => node_belief(grounded, q, v, 0.0, true),
            None => node_belief(grounded, q, mean_h[pos[q.0]], cov[(r, r)], false),
        })
        .collect();
    Ok(GaussianBelief {
        nodes,
        covariance: Some(cov),
    })
}

/// Linear-Gaussian system of one slice:
/// `x_j = c + B x_j + A x_(j-1) + e`, `e ~ N(0, diag(noise))`.
#[derive(Debug, Clone, PartialEq)]
struct SliceSystem {
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    noise: DVector<f64>,
}

fn slice_system(grounded: &GroundedNetwork, j: usize) -> Result<SliceSystem> {
    let m = grounded.process_count();
    let mut sys = SliceSystem {
        c: DVector::zeros(m),
        a: DMatrix::zeros(m, m),
        b: DMatrix::zeros(m, m),
        noise: DVector::zeros(m),
    };
    for p in 0..m {
        let id = grounded.grid_node(p, j).expect("grid is complete");
        let node = grounded.node(id);
        sys.c[p] = node.intercept;
        sys.noise[p] = 1.0 / gaussian_precision(grounded, id.0)?;
        for &(pid, w) in &node.parents {
            let parent = grounded.node(pid);
            if parent.invented {
                return Err(Error::NotChainStructured(
                    "network has invented nodes".into(),
                ));
            }
            let q = parent.process;
            if parent.slice == j {
                sys.b[(p, q)] += w;
            } else if parent.slice + 1 == j {
                sys.a[(p, q)] += w;
            } else {
                return Err(Error::NotChainStructured(format!(
                    "node `{}` at slice {j} has a parent at slice {}",
                    grounded.process_name(p),
                    parent.slice
                )));
            }
        }
    }
    Ok(sys)
}

/// Filtered distribution of one slice's state vector (one entry per
/// process, in declaration order).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceBelief {
    /// Slice time; `None` for the slice-0 prior before any time is known.
    pub time: Option<f64>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl SliceBelief {
    pub fn variance(&self, process: usize) -> f64 {
        self.covariance[(process, process)].max(0.0)
    }
}

struct Predicted {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// `F = (I - B)^-1 A`, the map from the previous state's mean.
    f: DMatrix<f64>,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn predict_step(
    sys: &SliceSystem,
    prev: Option<(&DVector<f64>, &DMatrix<f64>)>,
) -> Result<Predicted> {
    let m = sys.c.len();
    let solve = (DMatrix::identity(m, m) - &sys.b)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("intra-slice system is singular".into()))?;
    let f = &solve * &sys.a;
    let noise = &solve * DMatrix::from_diagonal(&sys.noise) * solve.transpose();
    let (mean, cov) = match prev {
        Some((mu, p)) => (&solve * &sys.c + &f * mu, &f * p * f.transpose() + noise),
        None => (&solve * &sys.c, noise),
    };
    Ok(Predicted {
        mean,
        cov: symmetrize(&cov),
        f,
    })
}

/// Conditions a predicted state on exactly observed entries.
fn condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    obs: &[Option<f64>],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let idx: Vec<usize> = (0..obs.len()).filter(|&i| obs[i].is_some()).collect();
    if idx.is_empty() {
        return Ok((mean.clone(), cov.clone()));
    }
    let m = mean.len();
    let s = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov[(idx[a], idx[b])]);
    let cross = DMatrix::from_fn(m, idx.len(), |r, b| cov[(r, idx[b])]);
    let resid = DVector::from_fn(idx.len(), |a, _| obs[idx[a]].unwrap() - mean[idx[a]]);
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("evidence covariance is not positive definite".into()))?;
    let gain_t = chol.solve(&cross.transpose());
    let mut mean = mean + gain_t.transpose() * resid;
    let mut cov = symmetrize(&(cov - cross * gain_t));
    for &i in &idx {
        mean[i] = obs[i].unwrap();
        for k in 0..m {
            cov[(i, k)] = 0.0;
            cov[(k, i)] = 0.0;
        }
    }
    Ok((mean, cov))
}

fn slice_observations(evidence: &Evidence, m: usize, j: usize) -> Vec<Option<f64>> {
    (0..m).map(|p| evidence.get(p, j)).collect()
}

struct ForwardPass {
    filtered: Vec<SliceBelief>,
    predicted: Vec<Predicted>,
}

fn forward(grounded: &GroundedNetwork, evidence: &Evidence) -> Result<ForwardPass> {
    grounded.is_all_gaussian()?;
    grounded.check_chain()?;
    evidence.resolve(grounded)?;
    let m = grounded.process_count();
    let mut filtered: Vec<SliceBelief> = Vec::with_capacity(grounded.slice_count());
    let mut predicted = Vec::with_capacity(grounded.slice_count());
    for j in 0..grounded.slice_count() {
        let sys = slice_system(grounded, j)?;
        let prev = filtered.last().map(|b| (&b.mean, &b.covariance));
        let pred = predict_step(&sys, prev)?;
        let (mean, covariance) =
            condition(&pred.mean, &pred.cov, &slice_observations(evidence, m, j))?;
        filtered.push(SliceBelief {
            time: Some(grounded.slice_times()[j]),
            mean,
            covariance,
        });
        predicted.push(pred);
    }
    Ok(ForwardPass {
        filtered,
        predicted,
    })
}

/// Forward filtering: the belief of every slice given evidence up to it.
pub fn filter(grounded: &GroundedNetwork, evidence: &Evidence) -> Result<Vec<SliceBelief>> {
    Ok(forward(grounded, evidence)?.filtered)
}

/// Smoothed slice beliefs given all evidence.
pub fn smooth_slices(grounded: &GroundedNetwork, evidence: &Evidence) -> Result<Vec<SliceBelief>> {
    let ForwardPass {
        filtered,
        predicted,
    } = forward(grounded, evidence)?;
    let n = filtered.len();
    let mut out = filtered.clone();
    for j in (0..n.saturating_sub(1)).rev() {
        let next = &predicted[j + 1];
        let p = &filtered[j].covariance;
        // G = P_j F' (P^-_(j+1))^-1
        let chol = next.cov.clone().cholesky().ok_or_else(|| {
            Error::Numeric("predicted covariance is not positive definite".into())
        })?;
        let gain = chol.solve(&(&next.f * p)).transpose();
        let mean = &filtered[j].mean + &gain * (&out[j + 1].mean - &next.mean);
        let cov = p + &gain * (&out[j + 1].covariance - &next.cov) * gain.transpose();
        out[j].mean = mean;
        out[j].covariance = symmetrize(&cov);
    }
    Ok(out)
}

/// Smoothed marginals of every node; evidence nodes carry their value
/// with variance zero.
pub fn smooth(grounded: &GroundedNetwork, evidence: &Evidence) -> Result<GaussianBelief> {
    let slices = smooth_slices(grounded, evidence)?;
    let mut nodes = Vec::with_capacity(grounded.len());
    for (j, b) in slices.iter().enumerate() {
        for p in 0..grounded.process_count() {
            let id = grounded.grid_node(p, j).expect("grid is complete");
            let observed = evidence.get(p, j).is_some();
            nodes.push(node_belief(
                grounded,
                id,
                b.mean[p],
                b.covariance[(p, p)],
                observed,
            ));
        }
    }
    Ok(GaussianBelief {
        nodes,
        covariance: None,
    })
}

fn require_lazy_model(model: &Itbn) -> Result<()> {
    if let Some(p) = model
        .structure
        .processes
        .iter()
        .find(|p| p.family != Family::Gaussian)
    {
        return Err(Error::NotAllGaussian(p.name.clone()));
    }
    if let Some(e) = model
        .structure
        .edges
        .iter()
        .find(|e| e.delay != 0.0 && e.role == EdgeRole::Gamma)
    {
        return Err(Error::NotChainStructured(format!(
            "edge {} -> {} carries a delay",
            e.parent, e.child
        )));
    }
    Ok(())
}

/// Lazy forward filter: each call to [`FilterSession::advance`] grounds
/// only the new slice.
#[derive(Debug, Clone)]
pub struct FilterSession<'a> {
    model: &'a Itbn,
    belief: Option<SliceBelief>,
    slices: usize,
}

impl<'a> FilterSession<'a> {
    pub fn new(model: &'a Itbn) -> Result<Self> {
        require_lazy_model(model)?;
        Ok(FilterSession {
            model,
            belief: None,
            slices: 0,
        })
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    /// Current belief; before any increment, the slice-0 prior.
    pub fn current(&self) -> Result<SliceBelief> {
        match &self.belief {
            Some(b) => Ok(b.clone()),
            None => {
                let g = self.model.unroll_times(&[0.0])?;
                let pred = predict_step(&slice_system(&g, 0)?, None)?;
                Ok(SliceBelief {
                    time: None,
                    mean: pred.mean,
                    covariance: pred.cov,
                })
            }
        }
    }

    /// Adds the slice at `time` with `observations` as `(process, value)`.
    pub fn advance(&mut self, time: f64, observations: &[(usize, f64)]) -> Result<&SliceBelief> {
        let m = self.model.structure.process_count();
        let mut obs = vec![None; m];
        for &(p, v) in observations {
            if p >= m || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "bad observation ({p}, {v})"
                )));
            }
            obs[p] = Some(v);
        }
        let (sys, prev) = match &self.belief {
            None => (slice_system(&self.model.unroll_times(&[time])?, 0)?, None),
            Some(b) => {
                let last = b.time.expect("filtered slices have times");
                if !(time > last) {
                    return Err(Error::InvalidParameter(format!(
                        "slice at {time} arrives after the slice at {last}"
                    )));
                }
                let g = self.model.unroll_times(&[last, time])?;
                (slice_system(&g, 1)?, Some((&b.mean, &b.covariance)))
            }
        };
        let pred = predict_step(&sys, prev)?;
        let (mean, covariance) = condition(&pred.mean, &pred.cov, &obs)?;
        self.slices += 1;
        Ok(self.belief.insert(SliceBelief {
            time: Some(time),
            mean,
            covariance,
        }))
    }
}

/// One transition from the belief at `T_n` straight to `t > T_n`.
pub fn predict(model: &Itbn, belief: &SliceBelief, t: f64) -> Result<SliceBelief> {
    require_lazy_model(model)?;
    let tn = belief
        .time
        .ok_or_else(|| Error::InvalidParameter("belief has no time to predict from".into()))?;
    if !(t > tn) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "prediction time {t} must be after the belief time {tn}"
        )));
    }
    let g = model.unroll_times(&[tn, t])?;
    let pred = predict_step(
        &slice_system(&g, 1)?,
        Some((&belief.mean, &belief.covariance)),
    )?;
    Ok(SliceBelief {
        time: Some(t),
        mean: pred.mean,
        covariance: pred.cov,
    })
}

/// One ancestral sample of every node.
pub fn sample_network<R: Rng + ?Sized>(grounded: &GroundedNetwork, rng: &mut R) -> Vec<f64> {
    let mut x = vec![0.0; grounded.len()];
    for (i, node) in grounded.nodes().iter().enumerate() {
        let eta = node.intercept + node.parents.iter().map(|(p, w)| w * x[p.0]).sum::<f64>();
        x[i] = match node.kind {
            NodeKind::Gaussian { precision } => {
                let z: f64 = rng.sample(StandardNormal);
                eta + z / precision.sqrt()
            }
            NodeKind::Bernoulli => {
                if rng.random::<f64>() < sigmoid(eta) {
                    1.0
                } else {
                    0.0
                }
            }
        };
    }
    x
}

/// One sampled entity on `timeline`, named after the timeline's entity.
pub fn sample_entity<R: Rng + ?Sized>(
    model: &Itbn,
    timeline: &Timeline,
    rng: &mut R,
) -> Result<EntityData> {
    let grounded = model.unroll(timeline)?;
    entity_from_sample(&grounded, timeline.clone(), &sample_network(&grounded, rng))
}

fn entity_from_sample(
    grounded: &GroundedNetwork,
    timeline: Timeline,
    x: &[f64],
) -> Result<EntityData> {
    let m = grounded.process_count();
    let values = (0..timeline.len())
        .map(|j| {
            (0..m)
                .map(|p| Some(x[grounded.grid_node(p, j).expect("grid is complete").0]))
                .collect()
        })
        .collect();
    EntityData::new(timeline, values)
}

/// `count` sampled entities on `timeline`, named `<entity>-<k>`.
pub fn sample_paths<R: Rng + ?Sized>(
    model: &Itbn,
    timeline: &Timeline,
    count: usize,
    rng: &mut R,
) -> Result<ObservationSet> {
    let grounded = model.unroll(timeline)?;
    let mut data = ObservationSet::new(
        model
            .structure
            .processes
            .iter()
            .map(|p| p.name.clone())
            .collect(),
        timeline.resolution(),
    );
    for k in 0..count {
        let x = sample_network(&grounded, rng);
        let tl = Timeline::from_ticks(
            format!("{}-{}", timeline.entity(), k + 1),
            timeline.ticks().to_vec(),
            timeline.resolution(),
        )?;
        data.push(entity_from_sample(&grounded, tl, &x)?)?;
    }
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEstimate {
    pub node: NodeId,
    pub mean: f64,
    pub variance: f64,
    /// Delta-method standard error of the self-normalized mean.
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBelief {
    pub estimates: Vec<WeightedEstimate>,
    pub effective_sample_size: f64,
    pub samples: usize,
}

fn evidence_log_weight(kind: NodeKind, y: f64, eta: f64) -> f64 {
    match kind {
        NodeKind::Gaussian { precision } => {
            let precision = precision.min(MAX_PRECISION);
            0.5 * (precision.ln() - (2.0 * std::f64::consts::PI).ln())
                - 0.5 * precision * (y - eta).powi(2)
        }
        NodeKind::Bernoulli => {
            if y == 1.0 {
                sigmoid(eta).ln()
            } else if y == 0.0 {
                (1.0 - sigmoid(eta)).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Self-normalized importance estimates: evidence nodes are clamped and
/// weighted by their conditional density, all other nodes are sampled.
pub fn likelihood_weighting<R: Rng + ?Sized>(
    grounded: &GroundedNetwork,
    evidence: &Evidence,
    queries: &[NodeId],
    count: usize,
    rng: &mut R,
) -> Result<WeightedBelief> {
    if count == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be positive".into(),
        ));
    }
    if let Some(q) = queries.iter().find(|q| q.0 >= grounded.len()) {
        return Err(Error::InvalidParameter(format!(
            "query node {} is not in the network",
            q.0
        )));
    }
    let observed = evidence.resolve(grounded)?;
    let mut log_w = Vec::with_capacity(count);
    let mut values = vec![Vec::with_capacity(count); queries.len()];
    let mut x = vec![0.0; grounded.len()];
    for _ in 0..count {
        let mut lw = 0.0;
        for (i, node) in grounded.nodes().iter().enumerate() {
            let eta = node.intercept + node.parents.iter().map(|(p, w)| w * x[p.0]).sum::<f64>();
            x[i] = match observed[i] {
                Some(y) => {
                    lw += evidence_log_weight(node.kind, y, eta);
                    y
                }
                None => match node.kind {
                    NodeKind::Gaussian { precision } => {
                        let z: f64 = rng.sample(StandardNormal);
                        eta + z / precision.sqrt()
                    }
                    NodeKind::Bernoulli => {
                        if rng.random::<f64>() < sigmoid(eta) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                },
            };
        }
        log_w.push(lw);
        for (k, q) in queries.iter().enumerate() {
            values[k].push(x[q.0]);
        }
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::EvidenceIncompatible);
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|v| v * v).sum();
    let estimates = queries
        .iter()
        .zip(&values)
        .map(|(&node, xs)| {
            let mean = w.iter().zip(xs).map(|(wi, xi)| wi * xi).sum::<f64>() / sum;
            let variance = w
                .iter()
                .zip(xs)
                .map(|(wi, xi)| wi * (xi - mean).powi(2))
                .sum::<f64>()
                / sum;
            let se2 = w
                .iter()
                .zip(xs)
                .map(|(wi, xi)| (wi * (xi - mean)).powi(2))
                .sum::<f64>()
                / (sum * sum);
            WeightedEstimate {
                node,
                mean,
                variance,
                standard_error: se2.sqrt(),
            }
        })
        .collect();
    Ok(WeightedBelief {
        estimates,
        effective_sample_size: sum * sum / sum_sq,
        samples: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Cpd, EdgeDecl, GaussianLinearCpd, InitialCpd, ItbnStructure, LinearPredictor, ProcessCpd,
        ProcessDecl, SliceLag,
    };
    use crate::splines::SplineSpec;

    fn gaussian(
        mean: f64,
        precision: f64,
        alpha: f64,
        beta: Option<f64>,
        gamma: Vec<f64>,
        tau: f64,
    ) -> ProcessCpd {
        ProcessCpd {
            transition: Cpd::Gaussian(GaussianLinearCpd {
                predictor: LinearPredictor {
                    alpha: SplineSpec::constant(alpha),
                    beta: beta.map(SplineSpec::constant),
                    gamma,
                },
                precision: tau,
            }),
            initial: InitialCpd::Gaussian { mean, precision },
        }
    }

    fn single() -> Itbn {
        let s = ItbnStructure::new(
            vec![ProcessDecl::new("X", Family::Gaussian)],
            vec![EdgeDecl::autoregressive("X")],
        );
        Itbn::new(s, vec![gaussian(1.0, 4.0, 0.5, Some(0.8), vec![], 2.0)]).unwrap()
    }

    /// A -> B intra-slice, both autoregressive.
    fn pair() -> Itbn {
        let s = ItbnStructure::new(
            vec![
                ProcessDecl::new("A", Family::Gaussian),
                ProcessDecl::new("B", Family::Gaussian),
            ],
            vec![
                EdgeDecl::autoregressive("A"),
                EdgeDecl::autoregressive("B"),
                EdgeDecl::gamma("A", "B", SliceLag::INTRA),
            ],
        );
        Itbn::new(
            s,
            vec![
                gaussian(0.0, 1.0, 0.2, Some(0.9), vec![], 3.0),
                gaussian(1.0, 2.0, -0.1, Some(0.5), vec![0.7], 1.5),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_node_prior() {
        let g = single().unroll_times(&[0.0]).unwrap();
        let b = exact_joint(&g, &Evidence::new(), &[NodeId(0)]).unwrap();
        assert!((b.nodes[0].mean - 1.0).abs() < 1e-15);
        assert!((b.nodes[0].variance - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_node_conjugate_update() {
        // slice 0: A ~ N(0, 1), B | A ~ N(1 + 0.7 A, 1/2)
        let g = pair().unroll_times(&[0.0]).unwrap();
        let ev = Evidence::new().with(1, 0, 2.0);
        let b = exact_joint(&g, &ev, &[NodeId(0)]).unwrap();
        let (w, v0, vn) = (0.7, 1.0, 0.5);
        let post_var = 1.0 / (1.0 / v0 + w * w / vn);
        let post_mean = post_var * (w * (2.0 - 1.0) / vn);
        assert!((b.nodes[0].mean - post_mean).abs() < 1e-12);
        assert!((b.nodes[0].variance - post_var).abs() < 1e-12);
    }

    #[test]
    fn full_evidence_has_zero_variance() {
        let g = pair().unroll_times(&[0.0, 1.0]).unwrap();
        let mut ev = Evidence::new();
        for (k, n) in g.nodes().iter().enumerate() {
            ev.insert(n.process, n.slice, k as f64);
        }
        let ids: Vec<NodeId> = (0..g.len()).map(NodeId).collect();
        let b = exact_joint(&g, &ev, &ids).unwrap();
        assert!(b.nodes.iter().all(|n| n.variance == 0.0 && n.observed));
    }

    #[test]
    fn smooth_matches_exact_and_flows_backward() {
        let model = pair();
        let times = [0.0, 0.5, 2.0, 2.25, 5.0];
        let g = model.unroll_times(&times).unwrap();
        let ev = Evidence::new().with(1, 4, 3.0).with(0, 2, -1.0);
        let s = smooth(&g, &ev).unwrap();
        let ids: Vec<NodeId> = (0..g.len()).map(NodeId).collect();
        let e = exact_joint(&g, &ev, &ids).unwrap();
        for n in &s.nodes {
            let o = e.node(n.node).unwrap();
            assert!((n.mean - o.mean).abs() < 1e-10 && (n.variance - o.variance).abs() < 1e-10);
        }
        let prior = smooth(&g, &Evidence::new().with(1, 4, 3.0)).unwrap();
        let none = smooth(&g, &Evidence::new()).unwrap();
        assert!((prior.get(0, 0).unwrap().mean - none.get(0, 0).unwrap().mean).abs() > 1e-6);
    }

    #[test]
    fn session_matches_batch_and_rejects_disorder() {
        let model = pair();
        let times = [0.0, 0.3, 1.7, 2.0, 4.5];
        let g = model.unroll_times(&times).unwrap();
        let ev = Evidence::new()
            .with(0, 1, 0.4)
            .with(1, 3, 2.0)
            .with(0, 4, 1.0);
        let batch = filter(&g, &ev).unwrap();
        let mut session = FilterSession::new(&model).unwrap();
        assert!(session.current().unwrap().time.is_none());
        for (j, &t) in times.iter().enumerate() {
            let obs: Vec<(usize, f64)> = (0..2)
                .filter_map(|p| ev.get(p, j).map(|v| (p, v)))
                .collect();
            let b = session.advance(t, &obs).unwrap();
            assert!((&b.mean - &batch[j].mean).amax() <= 1e-10);
            assert!((&b.covariance - &batch[j].covariance).amax() <= 1e-10);
        }
        assert!(session.advance(4.0, &[]).is_err());
    }

    #[test]
    fn prediction_formula() {
        let model = single();
        let belief = SliceBelief {
            time: Some(1.0),
            mean: DVector::from_vec(vec![2.0]),
            covariance: DMatrix::zeros(1, 1),
        };
        let p = predict(&model, &belief, 4.0).unwrap();
        assert!((p.mean[0] - (0.5 + 0.8 * 2.0)).abs() < 1e-15);
        assert!((p.covariance[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(predict(&model, &belief, 1.0).is_err());
    }

    #[test]
    fn lw_without_evidence_is_forward_sampling() {
        use rand::SeedableRng;
        let g = pair().unroll_times(&[0.0, 1.0]).unwrap();
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let lw = likelihood_weighting(&g, &Evidence::new(), &[NodeId(3)], 500, &mut r1).unwrap();
        let mean = (0..500)
            .map(|_| sample_network(&g, &mut r2)[3])
            .sum::<f64>()
            / 500.0;
        assert!((lw.estimates[0].mean - mean).abs() < 1e-12);
        assert!((lw.effective_sample_size - 500.0).abs() < 1e-9);
    }

    #[test]
    fn incompatible_evidence() {
        use rand::SeedableRng;
        let s = ItbnStructure::new(vec![ProcessDecl::new("M", Family::Bernoulli)], vec![]);
        let model = Itbn::new(
            s,
            vec![ProcessCpd {
                transition: Cpd::Bernoulli(crate::model::BernoulliLogitCpd {
                    predictor: LinearPredictor::constant(0.0),
                }),
                initial: InitialCpd::Bernoulli { p: 0.5 },
            }],
        )
        .unwrap();
        let g = model.unroll_times(&[0.0]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let err = likelihood_weighting(
            &g,
            &Evidence::new().with(0, 0, 0.5),
            &[NodeId(0)],
            10,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EvidenceIncompatible));
        assert!(matches!(
            exact_joint(&g, &Evidence::new(), &[]),
            Err(Error::NotAllGaussian(_))
        ));
    }
}
