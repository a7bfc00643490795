//! ITBN templates and their grounding onto concrete timelines.
//!
//! A template ([`ItbnStructure`]) names processes and the edges between
//! them. Slices sit only at observation time-points; a node's parents are in
//! its own slice (`intra-slice`) or in the previous one (`previous-slice`).
//! Every edge may carry an effect delay: the parent value is read at
//! `reference slice time - delay`. When that time is not a slice of the
//! timeline, grounding invents a node for the parent process there.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::splines::{SplineConfig, SplineSpec};
use crate::timegrid::{self, Resolution, Timeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "gaussian-identity")]
    Gaussian,
    #[serde(rename = "bernoulli-logit")]
    Bernoulli,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian-identity",
            Family::Bernoulli => "bernoulli-logit",
        })
    }
}

/// One process of the template together with the layout of its varying
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDecl {
    pub name: String,
    pub family: Family,
    /// Placement offset of this process's nodes within a slice.
    #[serde(default)]
    pub offset: f64,
    /// Latent process (counted by the node-size comparison).
    #[serde(default)]
    pub hidden: bool,
    #[serde(default = "SplineConfig::constant")]
    pub alpha: SplineConfig,
    #[serde(default = "SplineConfig::constant")]
    pub beta: SplineConfig,
    #[serde(default)]
    pub lambda: f64,
    /// Fixed slice-0 distribution; estimated from data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCpd>,
}

impl ProcessDecl {
    pub fn new(name: impl Into<String>, family: Family) -> Self {
        ProcessDecl {
            name: name.into(),
            family,
            offset: 0.0,
            hidden: false,
            alpha: SplineConfig::constant(),
            beta: SplineConfig::constant(),
            lambda: 0.0,
            initial: None,
        }
    }

    pub fn hidden(mut self) -> Self {
        self.hidden = true;
        self
    }

    pub fn with_alpha(mut self, alpha: SplineConfig) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: SplineConfig) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// How many slices back an edge's parent lives: 0 = intra-slice,
/// 1 = previous-slice. Larger values only exist to be reported as invalid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SliceLag(pub u32);

impl SliceLag {
    pub const INTRA: SliceLag = SliceLag(0);
    pub const PREVIOUS: SliceLag = SliceLag(1);
}

impl Serialize for SliceLag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            0 => s.serialize_str("intra-slice"),
            1 => s.serialize_str("previous-slice"),
            n => s.serialize_u32(n),
        }
    }
}

impl<'de> Deserialize<'de> for SliceLag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Count(u32),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(SliceLag(n)),
            Raw::Name(s) => match s.as_str() {
                "intra-slice" | "intra" => Ok(SliceLag::INTRA),
                "previous-slice" | "previous" => Ok(SliceLag::PREVIOUS),
                other => Err(serde::de::Error::custom(format!("unknown lag `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeRole {
    /// Constant effect `gamma`.
    Gamma,
    /// The varying `beta(gap)` applied to the child's own previous value.
    Autoregressive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecl {
    pub parent: String,
    pub child: String,
    pub lag: SliceLag,
    /// Effect delay (nonnegative): the parent is read at child-time minus delay.
    #[serde(default)]
    pub delay: f64,
    #[serde(default = "default_role")]
    pub role: EdgeRole,
}

fn default_role() -> EdgeRole {
    EdgeRole::Gamma
}

impl EdgeDecl {
    pub fn gamma(parent: &str, child: &str, lag: SliceLag) -> Self {
        EdgeDecl {
            parent: parent.into(),
            child: child.into(),
            lag,
            delay: 0.0,
            role: EdgeRole::Gamma,
        }
    }

    pub fn autoregressive(process: &str) -> Self {
        EdgeDecl {
            parent: process.into(),
            child: process.into(),
            lag: SliceLag::PREVIOUS,
            delay: 0.0,
            role: EdgeRole::Autoregressive,
        }
    }

    pub fn with_delay(mut self, delay: f64) -> Self {
        self.delay = delay;
        self
    }
}

fn default_resolution() -> Resolution {
    Resolution::default()
}

impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Resolution::new(v).map_err(serde::de::Error::custom)
    }
}

/// The template: processes and edges. Numbers that are learned live in
/// [`ProcessCpd`]; this type only fixes shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItbnStructure {
    #[serde(default = "default_resolution")]
    pub resolution: Resolution,
    pub processes: Vec<ProcessDecl>,
    #[serde(default)]
    pub edges: Vec<EdgeDecl>,
}

/// A broken template invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoProcesses,
    DuplicateProcess(String),
    UnknownProcess { edge: usize, name: String },
    IntraSliceCycle(Vec<String>),
    ParentOutsideWindow { edge: usize, lag: u32 },
    AutoregressiveNotSelfPrevious { edge: usize },
    MultipleAutoregressive { child: String },
    AutoregressiveDelay { edge: usize },
    InvalidDelay { edge: usize, delay: f64 },
    InvalidOffset { process: String },
    InvalidSpline { process: String, reason: String },
    NegativeLambda { process: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoProcesses => write!(f, "structure declares no processes"),
            Violation::DuplicateProcess(n) => write!(f, "duplicate process name `{n}`"),
            Violation::UnknownProcess { edge, name } => {
                write!(f, "edge {edge} refers to unknown process `{name}`")
            }
            Violation::IntraSliceCycle(names) => {
                write!(f, "intra-slice cycle through {}", names.join(" -> "))
            }
            Violation::ParentOutsideWindow { edge, lag } => write!(
                f,
                "edge {edge} reaches {lag} slices back: parent outside V_(j-1) ∪ V_j"
            ),
            Violation::AutoregressiveNotSelfPrevious { edge } => write!(
                f,
                "edge {edge}: autoregressive role requires a previous-slice self-edge"
            ),
            Violation::MultipleAutoregressive { child } => {
                write!(f, "process `{child}` has more than one autoregressive edge")
            }
            Violation::AutoregressiveDelay { edge } => {
                write!(f, "edge {edge}: autoregressive edges cannot carry a delay")
            }
            Violation::InvalidDelay { edge, delay } => {
                write!(f, "edge {edge}: delay {delay} must be finite, nonnegative and on the resolution grid")
            }
            Violation::InvalidOffset { process } => {
                write!(
                    f,
                    "process `{process}`: offset must be finite and on the resolution grid"
                )
            }
            Violation::InvalidSpline { process, reason } => {
                write!(f, "process `{process}`: {reason}")
            }
            Violation::NegativeLambda { process } => {
                write!(
                    f,
                    "process `{process}`: lambda must be finite and nonnegative"
                )
            }
        }
    }
}

impl ItbnStructure {
    pub fn new(processes: Vec<ProcessDecl>, edges: Vec<EdgeDecl>) -> Self {
        ItbnStructure {
            resolution: Resolution::default(),
            processes,
            edges,
        }
    }

    pub fn process_count(&self) -> usize {
        self.processes.len()
    }

    pub fn process_index(&self, name: &str) -> Option<usize> {
        self.processes.iter().position(|p| p.name == name)
    }

    pub fn process(&self, name: &str) -> Result<usize> {
        self.process_index(name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown process `{name}`")))
    }

    /// Gamma-role edges into `child`, in declaration order. Their order is
    /// the order of the child's `gamma` vector.
    pub fn gamma_edges(&self, child: usize) -> Vec<&EdgeDecl> {
        let name = &self.processes[child].name;
        self.edges
            .iter()
            .filter(|e| &e.child == name && e.role == EdgeRole::Gamma)
            .collect()
    }

    pub fn has_autoregression(&self, child: usize) -> bool {
        let name = &self.processes[child].name;
        self.edges
            .iter()
            .any(|e| &e.child == name && e.role == EdgeRole::Autoregressive)
    }

    /// Check every template invariant; an empty list means valid.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.processes.is_empty() {
            out.push(Violation::NoProcesses);
        }
        let mut seen = HashMap::new();
        for p in &self.processes {
            if seen.insert(p.name.as_str(), ()).is_some() {
                out.push(Violation::DuplicateProcess(p.name.clone()));
            }
            if !p.offset.is_finite() || self.resolution.ticks_from_f64(p.offset).is_err() {
                out.push(Violation::InvalidOffset {
                    process: p.name.clone(),
                });
            }
            if !(p.lambda >= 0.0 && p.lambda.is_finite()) {
                out.push(Violation::NegativeLambda {
                    process: p.name.clone(),
                });
            }
            for (label, cfg) in [("alpha", &p.alpha), ("beta", &p.beta)] {
                if let crate::splines::KnotRule::Fixed(k) = &cfg.knots {
                    if k.iter().any(|x| !x.is_finite()) || k.windows(2).any(|w| w[0] >= w[1]) {
                        out.push(Violation::InvalidSpline {
                            process: p.name.clone(),
                            reason: format!("{label} knots must be finite and strictly increasing"),
                        });
                    }
                }
            }
            if let Some(init) = &p.initial {
                if let Err(e) = init.check(p.family) {
                    out.push(Violation::InvalidSpline {
                        process: p.name.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        let mut ar_count: HashMap<&str, usize> = HashMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            for name in [&e.parent, &e.child] {
                if self.process_index(name).is_none() {
                    out.push(Violation::UnknownProcess {
                        edge: i,
                        name: name.clone(),
                    });
                }
            }
            if e.lag.0 > 1 {
                out.push(Violation::ParentOutsideWindow {
                    edge: i,
                    lag: e.lag.0,
                });
            }
            if !(e.delay >= 0.0 && e.delay.is_finite())
                || self.resolution.ticks_from_f64(e.delay).is_err()
            {
                out.push(Violation::InvalidDelay {
                    edge: i,
                    delay: e.delay,
                });
            }
            if e.role == EdgeRole::Autoregressive {
                if e.parent != e.child || e.lag != SliceLag::PREVIOUS {
                    out.push(Violation::AutoregressiveNotSelfPrevious { edge: i });
                }
                if e.delay != 0.0 {
                    out.push(Violation::AutoregressiveDelay { edge: i });
                }
                *ar_count.entry(e.child.as_str()).or_default() += 1;
            }
        }
        let mut multi: Vec<_> = ar_count.into_iter().filter(|(_, c)| *c > 1).collect();
        multi.sort();
        for (child, _) in multi {
            out.push(Violation::MultipleAutoregressive {
                child: child.to_string(),
            });
        }
        if let Err(cycle) = self.intra_order() {
            out.push(Violation::IntraSliceCycle(cycle));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidStructure(v))
        }
    }

    /// Topological order of processes under intra-slice edges, or the
    /// names on a cycle.
    pub fn intra_order(&self) -> std::result::Result<Vec<usize>, Vec<String>> {
        let m = self.processes.len();
        let mut indegree = vec![0usize; m];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
        for e in self.edges.iter().filter(|e| e.lag == SliceLag::INTRA) {
            if let (Some(p), Some(c)) =
                (self.process_index(&e.parent), self.process_index(&e.child))
            {
                children[p].push(c);
                indegree[c] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..m).filter(|&i| indegree[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(m);
        while let Some(p) = ready.pop() {
            order.push(p);
            for &c in &children[p] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() == m {
            Ok(order)
        } else {
            let mut stuck: Vec<String> = (0..m)
                .filter(|&i| indegree[i] > 0)
                .map(|i| self.processes[i].name.clone())
                .collect();
            stuck.sort();
            Err(stuck)
        }
    }
}

/// Linear predictor shared by both CPD families:
/// `eta = alpha(gap) + beta(gap) * y_prev + sum gamma_i x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub alpha: SplineSpec,
    /// Present iff the process has an autoregressive edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<SplineSpec>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl LinearPredictor {
    pub fn constant(value: f64) -> Self {
        LinearPredictor {
            alpha: SplineSpec::constant(value),
            beta: None,
            gamma: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianLinearCpd {
    #[serde(flatten)]
    pub predictor: LinearPredictor,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliLogitCpd {
    #[serde(flatten)]
    pub predictor: LinearPredictor,
}

/// Transition CPD of one process for slices `j >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Cpd {
    #[serde(rename = "gaussian-identity")]
    Gaussian(GaussianLinearCpd),
    #[serde(rename = "bernoulli-logit")]
    Bernoulli(BernoulliLogitCpd),
}

impl Cpd {
    pub fn predictor(&self) -> &LinearPredictor {
        match self {
            Cpd::Gaussian(c) => &c.predictor,
            Cpd::Bernoulli(c) => &c.predictor,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Cpd::Gaussian(_) => Family::Gaussian,
            Cpd::Bernoulli(_) => Family::Bernoulli,
        }
    }
}

/// Slice-0 distribution. With intra-slice parents at slice 0 the transition
/// `gamma` effects are added to the base intercept (`mean`, or `logit(p)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum InitialCpd {
    #[serde(rename = "gaussian-identity")]
    Gaussian { mean: f64, precision: f64 },
    #[serde(rename = "bernoulli-logit")]
    Bernoulli { p: f64 },
}

impl InitialCpd {
    pub fn check(&self, family: Family) -> Result<()> {
        match (self, family) {
            (InitialCpd::Gaussian { mean, precision }, Family::Gaussian) => {
                if !(mean.is_finite() && *precision > 0.0 && precision.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "initial Gaussian needs a finite mean and positive precision".into(),
                    ));
                }
            }
            (InitialCpd::Bernoulli { p }, Family::Bernoulli) => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidParameter(
                        "initial Bernoulli probability must lie in (0, 1)".into(),
                    ));
                }
            }
            _ => {
                return Err(Error::InvalidParameter(
                    "initial CPD family does not match the process family".into(),
                ))
            }
        }
        Ok(())
    }

    /// Base intercept on the predictor scale.
    pub fn intercept(&self) -> f64 {
        match self {
            InitialCpd::Gaussian { mean, .. } => *mean,
            InitialCpd::Bernoulli { p } => (p / (1.0 - p)).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessCpd {
    pub transition: Cpd,
    pub initial: InitialCpd,
}

/// Evaluates `eta` for one transition.
pub fn predictor_eta(
    predictor: &LinearPredictor,
    gap: f64,
    y_prev: f64,
    parent_values: &[f64],
) -> Result<f64> {
    if parent_values.len() != predictor.gamma.len() {
        return Err(Error::InvalidParameter(format!(
            "predictor has {} gamma effects but {} parent values were given",
            predictor.gamma.len(),
            parent_values.len()
        )));
    }
    let mut eta = predictor.alpha.eval(gap);
    if let Some(beta) = &predictor.beta {
        eta += beta.eval(gap) * y_prev;
    }
    for (g, x) in predictor.gamma.iter().zip(parent_values) {
        eta += g * x;
    }
    Ok(eta)
}

/// A template with numbers: one CPD per process.
#[derive(Debug, Clone, PartialEq)]
pub struct Itbn {
    pub structure: ItbnStructure,
    pub cpds: Vec<ProcessCpd>,
}

impl Itbn {
    pub fn new(structure: ItbnStructure, cpds: Vec<ProcessCpd>) -> Result<Self> {
        structure.validate()?;
        if cpds.len() != structure.process_count() {
            return Err(Error::InvalidParameter(format!(
                "{} CPDs given for {} processes",
                cpds.len(),
                structure.process_count()
            )));
        }
        for (i, (p, cpd)) in structure.processes.iter().zip(&cpds).enumerate() {
            let name = &p.name;
            let fail =
                |msg: String| Err(Error::InvalidParameter(format!("process `{name}`: {msg}")));
            if cpd.transition.family() != p.family {
                return fail(format!(
                    "CPD family {} does not match declared {}",
                    cpd.transition.family(),
                    p.family
                ));
            }
            cpd.initial
                .check(p.family)
                .map_err(|e| e.in_process(name))?;
            let pred = cpd.transition.predictor();
            pred.alpha.check().map_err(|e| e.in_process(name))?;
            if let Some(b) = &pred.beta {
                b.check().map_err(|e| e.in_process(name))?;
            }
            if pred.beta.is_some() != structure.has_autoregression(i) {
                return fail(
                    "beta must be present exactly when the process has an autoregressive edge"
                        .into(),
                );
            }
            let ng = structure.gamma_edges(i).len();
            if pred.gamma.len() != ng {
                return fail(format!(
                    "{} gamma effects for {} gamma edges",
                    pred.gamma.len(),
                    ng
                ));
            }
            if let Cpd::Gaussian(g) = &cpd.transition {
                if !(g.precision > 0.0) {
                    return fail(format!("precision must be positive, got {}", g.precision));
                }
            }
        }
        Ok(Itbn { structure, cpds })
    }

    pub fn unroll(&self, timeline: &Timeline) -> Result<GroundedNetwork> {
        ground(&self.structure, Some(&self.cpds), &timeline.times())
    }

    /// Grounds on slice times that need not lie on the resolution grid.
    pub fn unroll_times(&self, times: &[f64]) -> Result<GroundedNetwork> {
        ground(&self.structure, Some(&self.cpds), times)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Gaussian { precision: f64 },
    Bernoulli,
}

/// One grounded variable with its resolved linear predictor
/// `intercept + sum weight * parent`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedNode {
    pub process: usize,
    /// Slice the node belongs to; invented nodes belong to the slice of the
    /// child that required them.
    pub slice: usize,
    /// Absolute time: slice time plus the process offset, or the off-grid
    /// time of an invented node.
    pub time: f64,
    /// Realized gap the splines were evaluated at (`None` at slice 0).
    pub gap: Option<f64>,
    pub invented: bool,
    pub intercept: f64,
    pub parents: Vec<(NodeId, f64)>,
    pub kind: NodeKind,
}

/// The template unrolled onto slice times. Node ids follow creation order,
/// which is a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedNetwork {
    nodes: Vec<GroundedNode>,
    grid: Vec<Vec<NodeId>>,
    slice_times: Vec<f64>,
    invented: Vec<NodeId>,
    process_names: Vec<String>,
}

impl GroundedNetwork {
    pub fn nodes(&self) -> &[GroundedNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &GroundedNode {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn slice_count(&self) -> usize {
        self.grid.len()
    }

    pub fn process_count(&self) -> usize {
        self.process_names.len()
    }

    pub fn process_name(&self, process: usize) -> &str {
        &self.process_names[process]
    }

    pub fn slice_times(&self) -> &[f64] {
        &self.slice_times
    }

    /// The node of `process` at `slice`.
    pub fn grid_node(&self, process: usize, slice: usize) -> Option<NodeId> {
        self.grid.get(slice).and_then(|s| s.get(process)).copied()
    }

    pub fn invented(&self) -> &[NodeId] {
        &self.invented
    }

    pub fn is_all_gaussian(&self) -> Result<()> {
        match self.nodes.iter().find(|n| n.kind == NodeKind::Bernoulli) {
            Some(n) => Err(Error::NotAllGaussian(self.process_names[n.process].clone())),
            None => Ok(()),
        }
    }

    /// `Ok` when every parent of a grid node lies in its own or the previous
    /// slice and nothing was invented.
    pub fn check_chain(&self) -> Result<()> {
        if !self.invented.is_empty() {
            return Err(Error::NotChainStructured(format!(
                "{} invented nodes",
                self.invented.len()
            )));
        }
        for n in &self.nodes {
            for (p, _) in &n.parents {
                let ps = self.nodes[p.0].slice;
                if ps + 1 < n.slice || ps > n.slice {
                    return Err(Error::NotChainStructured(format!(
                        "node `{}` at slice {} has a parent at slice {}",
                        self.process_names[n.process], n.slice, ps
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) enum ParentTime {
    Slice(usize),
    /// Not a slice time; `before` is the last slice strictly earlier.
    OffGrid {
        time: f64,
        before: usize,
    },
    OutOfRange(f64),
}

pub(crate) fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Locates time `t` among sorted slice times.
pub(crate) fn locate(times: &[f64], t: f64) -> ParentTime {
    let idx = times.partition_point(|&x| x < t && !same_time(x, t));
    if idx < times.len() && same_time(times[idx], t) {
        return ParentTime::Slice(idx);
    }
    if idx == 0 {
        ParentTime::OutOfRange(t)
    } else {
        ParentTime::OffGrid {
            time: t,
            before: idx - 1,
        }
    }
}

/// Where edge `edge`'s parent lives for a child at slice `j >= 1`.
pub(crate) fn resolve_edge(times: &[f64], edge: &EdgeDecl, j: usize) -> ParentTime {
    let lag = edge.lag.0 as usize;
    if lag > j {
        return ParentTime::OutOfRange(f64::NEG_INFINITY);
    }
    let reference = j - lag;
    if edge.delay == 0.0 {
        return ParentTime::Slice(reference);
    }
    locate(times, times[reference] - edge.delay)
}

struct Grounder<'a> {
    structure: &'a ItbnStructure,
    cpds: Option<&'a [ProcessCpd]>,
    times: &'a [f64],
    nodes: Vec<GroundedNode>,
    grid: Vec<Vec<NodeId>>,
    invented: Vec<NodeId>,
    index: Vec<usize>,
}

impl Grounder<'_> {
    fn transition_kind(&self, process: usize) -> NodeKind {
        match self.cpds.map(|c| &c[process].transition) {
            Some(Cpd::Gaussian(g)) => NodeKind::Gaussian {
                precision: g.precision,
            },
            Some(Cpd::Bernoulli(_)) => NodeKind::Bernoulli,
            None => match self.structure.processes[process].family {
                Family::Gaussian => NodeKind::Gaussian { precision: 1.0 },
                Family::Bernoulli => NodeKind::Bernoulli,
            },
        }
    }

    fn predictor(&self, process: usize) -> Option<&LinearPredictor> {
        self.cpds.map(|c| c[process].transition.predictor())
    }

    fn push(&mut self, node: GroundedNode) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(node);
        id
    }

    fn initial_node(&mut self, p: usize) -> NodeId {
        let mut parents = Vec::new();
        for (g, e) in self.structure.gamma_edges(p).into_iter().enumerate() {
            if e.lag == SliceLag::INTRA && e.delay == 0.0 {
                let parent = self.at(0, self.structure.process_index(&e.parent).unwrap());
                let w = self.predictor(p).map_or(0.0, |pr| pr.gamma[g]);
                parents.push((parent, w));
            }
        }
        let (intercept, kind) = match self.cpds.map(|c| &c[p].initial) {
            Some(InitialCpd::Gaussian { mean, precision }) => (
                *mean,
                NodeKind::Gaussian {
                    precision: *precision,
                },
            ),
            Some(init @ InitialCpd::Bernoulli { .. }) => (init.intercept(), NodeKind::Bernoulli),
            None => (0.0, self.transition_kind(p)),
        };
        self.push(GroundedNode {
            process: p,
            slice: 0,
            time: self.times[0] + self.structure.processes[p].offset,
            gap: None,
            invented: false,
            intercept,
            parents,
            kind,
        })
    }

    fn transition_node(&mut self, p: usize, j: usize) -> Result<NodeId> {
        let gap = self.times[j] - self.times[j - 1];
        let (intercept, beta) = match self.predictor(p) {
            Some(pr) => (pr.alpha.eval(gap), pr.beta.as_ref().map(|b| b.eval(gap))),
            None => (0.0, self.structure.has_autoregression(p).then_some(0.0)),
        };
        let mut parents = Vec::new();
        if let Some(b) = beta {
            parents.push((self.at(j - 1, p), b));
        }
        let edges: Vec<EdgeDecl> = self.structure.gamma_edges(p).into_iter().cloned().collect();
        for (g, e) in edges.iter().enumerate() {
            let q = self.structure.process_index(&e.parent).unwrap();
            let w = self.predictor(p).map_or(0.0, |pr| pr.gamma[g]);
            let node = match resolve_edge(self.times, e, j) {
                ParentTime::Slice(k) if k < j => self.at(k, q),
                ParentTime::Slice(_) => self.current_slice_node(q, j),
                ParentTime::OffGrid { time, before } => self.invent(q, time, before, j),
                ParentTime::OutOfRange(time) => {
                    return Err(Error::DelayOutOfRange {
                        process: self.structure.processes[p].name.clone(),
                        slice: j,
                        time,
                    })
                }
            };
            parents.push((node, w));
        }
        Ok(self.push(GroundedNode {
            process: p,
            slice: j,
            time: self.times[j] + self.structure.processes[p].offset,
            gap: Some(gap),
            invented: false,
            intercept,
            parents,
            kind: self.transition_kind(p),
        }))
    }

    fn current_slice_node(&self, q: usize, j: usize) -> NodeId {
        // intra-slice order guarantees the parent exists already
        self.at(j, q)
    }

    fn at(&self, slice: usize, process: usize) -> NodeId {
        self.grid[slice][self.index[process]]
    }

    /// Off-grid node of process `q` at `time`, after slice `before`. It
    /// uses `q`'s transition CPD from slice `before`, with its gamma
    /// parents read at that slice without delay.
    fn invent(&mut self, q: usize, time: f64, before: usize, slice: usize) -> NodeId {
        if let Some(&id) = self
            .invented
            .iter()
            .find(|id| self.nodes[id.0].process == q && same_time(self.nodes[id.0].time, time))
        {
            return id;
        }
        let gap = time - self.times[before];
        let (intercept, beta) = match self.predictor(q) {
            Some(pr) => (pr.alpha.eval(gap), pr.beta.as_ref().map(|b| b.eval(gap))),
            None => (0.0, self.structure.has_autoregression(q).then_some(0.0)),
        };
        let mut parents = Vec::new();
        if let Some(b) = beta {
            parents.push((self.at(before, q), b));
        }
        for (g, e) in self.structure.gamma_edges(q).into_iter().enumerate() {
            let lag = e.lag.0 as usize;
            if lag > before {
                continue;
            }
            let r = self.structure.process_index(&e.parent).unwrap();
            let w = self.predictor(q).map_or(0.0, |pr| pr.gamma[g]);
            parents.push((self.at(before - lag, r), w));
        }
        let id = self.push(GroundedNode {
            process: q,
            slice,
            time,
            gap: Some(gap),
            invented: true,
            intercept,
            parents,
            kind: self.transition_kind(q),
        });
        self.invented.push(id);
        id
    }
}

/// Grounds `structure` on `times`. Without CPDs the resolved coefficients
/// are zero (topology only).
pub(crate) fn ground(
    structure: &ItbnStructure,
    cpds: Option<&[ProcessCpd]>,
    times: &[f64],
) -> Result<GroundedNetwork> {
    structure.validate()?;
    if times.is_empty() {
        return Err(Error::InvalidTimeline("timeline is empty".into()));
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidTimeline(
            "slice times must be finite and strictly increasing".into(),
        ));
    }
    let order = structure
        .intra_order()
        .expect("validated structure is acyclic");
    let m = structure.process_count();
    let mut g = Grounder {
        structure,
        cpds,
        times,
        nodes: Vec::new(),
        grid: Vec::with_capacity(times.len()),
        invented: Vec::new(),
        // grid rows are filled in intra order; index maps process -> position
        index: {
            let mut idx = vec![0; m];
            for (pos, &p) in order.iter().enumerate() {
                idx[p] = pos;
            }
            idx
        },
    };
    for j in 0..times.len() {
        g.grid.push(Vec::with_capacity(m));
        for &p in &order {
            let id = if j == 0 {
                g.initial_node(p)
            } else {
                g.transition_node(p, j)?
            };
            g.grid[j].push(id);
        }
    }
    // reorder rows from intra order to process order
    let grid = g
        .grid
        .iter()
        .map(|row| (0..m).map(|p| row[g.index[p]]).collect())
        .collect();
    Ok(GroundedNetwork {
        nodes: g.nodes,
        grid,
        slice_times: times.to_vec(),
        invented: g.invented,
        process_names: structure.processes.iter().map(|p| p.name.clone()).collect(),
    })
}

/// Grounds the topology only (coefficients are zero).
pub fn unroll_structure(structure: &ItbnStructure, timeline: &Timeline) -> Result<GroundedNetwork> {
    ground(structure, None, &timeline.times())
}

/// Hidden-node totals of the ITBN versus a discrete-time model at each
/// entity's granularity: `(itbn_nodes, dbn_nodes)`.
pub fn node_count_comparison(
    structure: &ItbnStructure,
    timelines: &[Timeline],
) -> Result<(u64, u64)> {
    let hidden: Vec<bool> = structure.processes.iter().map(|p| p.hidden).collect();
    let m_hidden = hidden.iter().filter(|&&h| h).count() as u64;
    let mut itbn = 0u64;
    let mut dbn = 0u64;
    for tl in timelines {
        let expansion = timegrid::discrete_expansion_size(tl)?;
        let grounded = unroll_structure(structure, tl)?;
        itbn += grounded
            .nodes()
            .iter()
            .filter(|n| hidden[n.process])
            .count() as u64;
        dbn += m_hidden * expansion;
    }
    Ok((itbn, dbn))
}
