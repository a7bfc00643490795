//! The `itbn` command-line tool.
//!
//! Every subcommand is deterministic given its flags and seeds. Failures
//! print a JSON object `{error, message, exit_code}` on stderr and exit
//! with 1 (usage), 2 (data) or 3 (numeric failure).

mod io;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::infer::{
    exact_joint, predict, sample_entity, smooth, Evidence, FilterSession, GaussianBelief,
    NodeBelief,
};
use crate::learn::{
    fit_with, log_likelihood, select_knot_count, with_knot_count, EntityData, FitOptions,
    FitResult, ObservationSet,
};
use crate::model::{Itbn, ItbnStructure, NodeId};
use crate::splines::KnotRule;
use crate::synthetic;
use crate::timefind::{
    find_time, find_time_quantile, Estimator, FreeSlice, TimeQuery, TimeSolution,
};
use crate::timegrid::{compression_study, simulate_geometric_timeline, Resolution, Timeline};

pub use io::{
    infer_resolution, parse_records, read_json, read_observations, read_records, read_structure,
    write_file, write_records, OBSERVATION_HEADER,
};

#[derive(Debug, Parser)]
#[command(name = "itbn", version, about = "Irregular-time Bayesian networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model spec and report structural violations.
    Validate(ValidateArgs),
    /// Fit parameters to fully observed data and write params JSON.
    Fit(FitArgs),
    /// Log-likelihood of data under fitted parameters.
    Loglik(ModelDataArgs),
    /// Posterior marginals of every node of one entity.
    Smooth(SmoothArgs),
    /// Belief at a future time given an entity's earlier observations.
    Predict(PredictArgs),
    /// Time at which a conditional mean (or quantile) reaches a target.
    FindTime(FindTimeArgs),
    /// Hidden-node counts of the ITBN versus a discrete-time expansion.
    SizeCompare(SizeCompareArgs),
    /// Compression ratio of simulated geometric timelines.
    Prop3Sim(Prop3Args),
    /// Forward-sample observations from fitted parameters.
    Simulate(SimulateArgs),
    /// Posterior mean band over a regular time grid.
    Plot(PlotArgs),
    /// Write a synthetic glucose-like corpus.
    SynthGlucose(SynthGlucoseArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fill unobserved parent values by linear interpolation.
    #[arg(long)]
    pub interpolate_parents: bool,
    /// Choose knot counts by AICc over `MIN..MAX` (inclusive).
    #[arg(long, value_name = "MIN..MAX")]
    pub select_knots: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelDataArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[command(flatten)]
    pub inputs: ModelDataArgs,
    #[arg(long)]
    pub entity: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub inputs: ModelDataArgs,
    #[arg(long)]
    pub entity: String,
    #[arg(long, allow_negative_numbers = true)]
    pub at: String,
}

#[derive(Debug, Args)]
pub struct FindTimeArgs {
    #[command(flatten)]
    pub inputs: ModelDataArgs,
    #[arg(long)]
    pub entity: String,
    #[arg(long)]
    pub process: String,
    /// Index the free slice takes among the entity's slices.
    #[arg(long)]
    pub slice: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub target: f64,
    #[arg(long, num_args = 2, value_names = ["T1", "T2"], allow_negative_numbers = true)]
    pub bracket: Vec<f64>,
    /// Solve for the `Q`-quantile curve instead of the mean.
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Monte Carlo estimator with this final-stage sample count.
    #[arg(long, value_name = "N")]
    pub mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Accepted |m(t) - target|.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Accepted bracket width.
    #[arg(long)]
    pub time_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SizeCompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub hidden_processes: u64,
    /// Time resolution; inferred from the decimal times when omitted.
    #[arg(long)]
    pub resolution: Option<String>,
}

#[derive(Debug, Args)]
pub struct Prop3Args {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    /// File with one decimal time per line.
    #[arg(
        long,
        conflicts_with = "geometric",
        required_unless_present = "geometric"
    )]
    pub timeline: Option<PathBuf>,
    /// Geometric gaps: `n,p` (n time-points, success probability p).
    #[arg(long, value_name = "N,P")]
    pub geometric: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub entities: usize,
    /// Leave hidden processes out of the output.
    #[arg(long)]
    pub drop_hidden: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub inputs: ModelDataArgs,
    #[arg(long)]
    pub entity: String,
    /// Defaults to the first process.
    #[arg(long)]
    pub process: Option<String>,
    #[arg(long)]
    pub grid: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthGlucoseArgs {
    #[arg(long, default_value_t = 6)]
    pub entities: usize,
    #[arg(long, default_value_t = 63)]
    pub per_entity: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the matching model spec.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Normal output goes to `out`, JSON errors to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let _ = writeln!(err, "{}", error_json("usage", &e.render().to_string(), 1));
            return 1;
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let _ = writeln!(err, "{}", error_json(e.kind(), &e.to_string(), code));
            code
        }
    }
}

fn error_json(kind: &str, message: &str, code: i32) -> String {
    serde_json::json!({ "error": kind, "message": message.trim_end(), "exit_code": code })
        .to_string()
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Validate(a) => cmd_validate(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Loglik(a) => cmd_loglik(a, out),
        Command::Smooth(a) => cmd_smooth(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::FindTime(a) => cmd_find_time(a, out),
        Command::SizeCompare(a) => cmd_size_compare(a, out),
        Command::Prop3Sim(a) => cmd_prop3_sim(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Plot(a) => cmd_plot(a, out),
        Command::SynthGlucose(a) => cmd_synth_glucose(a, out),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Time text: exact decimal when on the resolution grid.
fn format_time(resolution: Resolution, t: f64) -> String {
    match resolution.ticks_from_f64(t) {
        Ok(ticks) => resolution.format_ticks(ticks),
        Err(_) => t.to_string(),
    }
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let s = read_structure(&a.model)?;
    let violations = s.violations();
    if violations.is_empty() {
        writeln!(
            out,
            "valid: {} processes, {} edges",
            s.processes.len(),
            s.edges.len()
        )?;
        return Ok(());
    }
    for v in &violations {
        writeln!(out, "violation: {v}")?;
    }
    Err(Error::InvalidStructure(violations))
}

fn parse_knot_range(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidParameter(format!("knot range `{text}` must look like MIN..MAX"));
    let (lo, hi) = text.split_once("..").ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let mut structure = read_structure(&a.model)?;
    structure.validate()?;
    let data = read_observations(&a.data, &structure)?;
    let options = FitOptions {
        interpolate_parents: a.interpolate_parents,
    };
    let mut selections = Vec::new();
    if let Some(range) = &a.select_knots {
        let candidates = parse_knot_range(range)?;
        for p in 0..structure.process_count() {
            let decl = &structure.processes[p];
            let auto = matches!(decl.alpha.knots, KnotRule::Auto { .. })
                || (structure.has_autoregression(p)
                    && matches!(decl.beta.knots, KnotRule::Auto { .. }));
            if !auto {
                continue;
            }
            let name = decl.name.clone();
            let sel = select_knot_count(&structure, &data, &name, &candidates, &options)?;
            structure = with_knot_count(&structure, p, sel.best);
            writeln!(out, "{name}: {} knots", sel.best)?;
            selections.push((name, sel));
        }
    }
    let mut fit = fit_with(&structure, &data, &options)?;
    fit.knot_selection = selections;
    write_file(&a.out, to_json(&fit)?.as_bytes())?;
    for p in &fit.processes {
        writeln!(
            out,
            "{}: {} rows, edf {:.3}, log-likelihood {}",
            p.process, p.rows, p.edf, p.log_likelihood
        )?;
    }
    writeln!(out, "log-likelihood {}", fit.log_likelihood)?;
    Ok(())
}

fn load_model(model: &Path, params: &Path) -> Result<Itbn> {
    let structure = read_structure(model)?;
    let fit: FitResult = read_json(params)?;
    if fit.processes.len() != structure.process_count() {
        return Err(Error::Data(format!(
            "params hold {} processes, the model declares {}",
            fit.processes.len(),
            structure.process_count()
        )));
    }
    for (decl, pf) in structure.processes.iter().zip(&fit.processes) {
        if decl.name != pf.process {
            return Err(Error::Data(format!(
                "params process `{}` does not match model process `{}`",
                pf.process, decl.name
            )));
        }
    }
    Itbn::new(
        structure,
        fit.processes.into_iter().map(|p| p.cpd).collect(),
    )
}

fn load_inputs(a: &ModelDataArgs) -> Result<(Itbn, ObservationSet)> {
    let model = load_model(&a.model, &a.params)?;
    let data = read_observations(&a.data, &model.structure)?;
    Ok((model, data))
}

fn entity<'d>(data: &'d ObservationSet, id: &str) -> Result<&'d EntityData> {
    data.entity(id)
        .ok_or_else(|| Error::Data(format!("no entity `{id}` in the data")))
}

fn cmd_loglik(a: &ModelDataArgs, out: &mut dyn Write) -> Result<()> {
    let (model, data) = load_inputs(a)?;
    writeln!(out, "{}", log_likelihood(&model, &data)?)?;
    Ok(())
}

/// Posterior marginals of every node of one entity: the smoother on
/// chain-structured networks, dense conditioning otherwise.
fn entity_posterior(model: &Itbn, e: &EntityData) -> Result<GaussianBelief> {
    let g = model.unroll(e.timeline())?;
    let ev = Evidence::from_entity(e);
    g.is_all_gaussian()?;
    if g.check_chain().is_ok() {
        smooth(&g, &ev)
    } else {
        let all: Vec<NodeId> = (0..g.len()).map(NodeId).collect();
        exact_joint(&g, &ev, &all)
    }
}

fn cmd_smooth(a: &SmoothArgs, out: &mut dyn Write) -> Result<()> {
    let (model, data) = load_inputs(&a.inputs)?;
    let e = entity(&data, &a.entity)?;
    let belief = entity_posterior(&model, e)?;
    let res = model.structure.resolution;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["process", "time", "mean", "variance"])?;
    for n in &belief.nodes {
        w.write_record([
            model.structure.processes[n.process].name.as_str(),
            &format_time(res, n.time),
            &n.mean.to_string(),
            &n.variance.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_file(&a.out, &bytes)?;
    writeln!(out, "wrote {} nodes", belief.nodes.len())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ProcessMoment {
    process: String,
    mean: f64,
    variance: f64,
}

#[derive(Debug, Serialize)]
struct PredictReport {
    entity: String,
    from: String,
    time: String,
    slices_used: usize,
    processes: Vec<ProcessMoment>,
    covariance: Vec<Vec<f64>>,
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let (model, data) = load_inputs(&a.inputs)?;
    let e = entity(&data, &a.entity)?;
    let res = model.structure.resolution;
    let at_ticks = res.ticks_from_str(&a.at)?;
    let used = e.timeline().ticks().partition_point(|&t| t < at_ticks);
    if used == 0 {
        return Err(Error::InvalidParameter(format!(
            "entity `{}` has no slice before time {}",
            a.entity, a.at
        )));
    }
    let mut session = FilterSession::new(&model)?;
    for j in 0..used {
        let obs: Vec<(usize, f64)> = e
            .row(j)
            .iter()
            .enumerate()
            .filter_map(|(p, v)| v.map(|v| (p, v)))
            .collect();
        session.advance(e.times()[j], &obs)?;
    }
    let belief = predict(&model, &session.current()?, res.to_time(at_ticks))?;
    let m = model.structure.process_count();
    let report = PredictReport {
        entity: a.entity.clone(),
        from: res.format_ticks(e.timeline().ticks()[used - 1]),
        time: res.format_ticks(at_ticks),
        slices_used: used,
        processes: (0..m)
            .map(|p| ProcessMoment {
                process: model.structure.processes[p].name.clone(),
                mean: belief.mean[p],
                variance: belief.variance(p),
            })
            .collect(),
        covariance: (0..m)
            .map(|r| (0..m).map(|c| belief.covariance[(r, c)]).collect())
            .collect(),
    };
    out.write_all(to_json(&report)?.as_bytes())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FindTimeReport {
    entity: String,
    process: String,
    slice: usize,
    target: f64,
    estimator: Estimator,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantile: Option<f64>,
    #[serde(flatten)]
    solution: TimeSolution,
}

fn cmd_find_time(a: &FindTimeArgs, out: &mut dyn Write) -> Result<()> {
    let (model, data) = load_inputs(&a.inputs)?;
    let e = entity(&data, &a.entity)?;
    let process = model.structure.process(&a.process)?;
    let (lo, hi) = (a.bracket[0], a.bracket[1]);
    let free = FreeSlice::from_entity(&model, e)?;
    let before = free.times().partition_point(|&s| s < 0.5 * (lo + hi));
    if before != a.slice {
        return Err(Error::InvalidParameter(format!(
            "bracket ({lo}, {hi}) places the free slice at index {before}, not {}",
            a.slice
        )));
    }
    let estimator = match a.mc {
        Some(count) => Estimator::MonteCarlo {
            count,
            seed: a.seed,
        },
        None => Estimator::Exact,
    };
    let mut query = TimeQuery::new(process, (lo, hi), a.target).with_estimator(estimator);
    query = query.with_tolerances(
        a.tol.unwrap_or(query.tolerance),
        a.time_tol.unwrap_or(query.time_tolerance),
    );
    let solution = match a.quantile {
        Some(q) => find_time_quantile(&free, &query, q)?,
        None => find_time(&free, &query)?,
    };
    let report = FindTimeReport {
        entity: a.entity.clone(),
        process: a.process.clone(),
        slice: a.slice,
        target: a.target,
        estimator,
        quantile: a.quantile,
        solution,
    };
    out.write_all(to_json(&report)?.as_bytes())?;
    Ok(())
}

fn cmd_size_compare(a: &SizeCompareArgs, out: &mut dyn Write) -> Result<()> {
    let resolution = match &a.resolution {
        Some(r) => Resolution::parse(r)?,
        None => infer_resolution(&a.data)?,
    };
    let records = read_records(&a.data, resolution)?;
    let mut by_entity: Vec<(String, Vec<i64>)> = Vec::new();
    for r in &records {
        match by_entity.iter_mut().find(|(e, _)| *e == r.entity) {
            Some((_, ticks)) => ticks.push(r.ticks),
            None => by_entity.push((r.entity.clone(), vec![r.ticks])),
        }
    }
    let m = a.hidden_processes;
    let mut table = String::from("entity,slices,itbn_nodes,dbn_nodes,ratio\n");
    let (mut itbn_total, mut dbn_total, mut slices_total) = (0u64, 0u64, 0u64);
    for (name, ticks) in by_entity {
        let tl = Timeline::from_unsorted(&name, ticks, resolution)?;
        let n = tl.len() as u64;
        let expansion = if tl.len() < 2 {
            1
        } else {
            crate::timegrid::discrete_expansion_size(&tl)?
        };
        let (itbn, dbn) = (m * n, m * expansion);
        writeln!(table, "{name},{n},{itbn},{dbn},{}", ratio(dbn, itbn)).expect("string write");
        itbn_total += itbn;
        dbn_total += dbn;
        slices_total += n;
    }
    writeln!(
        table,
        "total,{slices_total},{itbn_total},{dbn_total},{}",
        ratio(dbn_total, itbn_total)
    )
    .expect("string write");
    out.write_all(table.as_bytes())?;
    Ok(())
}

fn ratio(dbn: u64, itbn: u64) -> String {
    if itbn == 0 {
        "nan".into()
    } else {
        format!("{:.4}", dbn as f64 / itbn as f64)
    }
}

fn cmd_prop3_sim(a: &Prop3Args, out: &mut dyn Write) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let s = compression_study(a.n, a.p, a.reps, &mut rng)?;
    writeln!(
        out,
        "n,p,reps,mean_ratio,expected_ratio,prob_unit_granularity"
    )?;
    writeln!(
        out,
        "{},{},{},{:.6},{:.6},{:.6}",
        s.n, s.p, s.replicates, s.mean_ratio, s.expected_ratio, s.prob_unit_granularity
    )?;
    Ok(())
}

fn parse_geometric(text: &str) -> Result<(usize, f64)> {
    let bad = || Error::InvalidParameter(format!("--geometric `{text}` must look like N,P"));
    let (n, p) = text.split_once(',').ok_or_else(bad)?;
    Ok((
        n.trim().parse().map_err(|_| bad())?,
        p.trim().parse().map_err(|_| bad())?,
    ))
}

fn read_timeline_file(path: &Path, entity: &str, resolution: Resolution) -> Result<Timeline> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut ticks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        ticks.push(
            resolution
                .ticks_from_str(line)
                .map_err(|e| Error::Data(format!("line {}: {e}", i + 1)))?,
        );
    }
    Timeline::from_ticks(entity, ticks, resolution)
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model, &a.params)?;
    let res = model.structure.resolution;
    if a.entities == 0 {
        return Err(Error::InvalidParameter(
            "--entities must be at least 1".into(),
        ));
    }
    let shared = match &a.timeline {
        Some(path) => Some(read_timeline_file(path, "timeline", res)?),
        None => None,
    };
    let geometric = a.geometric.as_deref().map(parse_geometric).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut data = ObservationSet::for_structure(&model.structure);
    for k in 0..a.entities {
        let name = format!("e{}", k + 1);
        let tl = match (&shared, geometric) {
            (Some(tl), _) => Timeline::from_ticks(&name, tl.ticks().to_vec(), res)?,
            (None, Some((n, p))) => {
                let g = simulate_geometric_timeline(n, p, &mut rng)?;
                Timeline::from_times(&name, &g.times(), res)?
            }
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "pass --timeline or --geometric".into(),
                ))
            }
        };
        data.push(sample_entity(&model, &tl, &mut rng)?)?;
    }
    let mut records = data.to_records(&model.structure)?;
    if a.drop_hidden {
        let hidden: Vec<&str> = model
            .structure
            .processes
            .iter()
            .filter(|p| p.hidden)
            .map(|p| p.name.as_str())
            .collect();
        records.retain(|r| !hidden.contains(&r.process.as_str()));
    }
    let mut bytes = Vec::new();
    write_records(&mut bytes, &records, res)?;
    write_file(&a.out, &bytes)?;
    writeln!(
        out,
        "wrote {} observations for {} entities",
        records.len(),
        a.entities
    )?;
    Ok(())
}

struct PlotRow {
    ticks: i64,
    mean: f64,
    sd: f64,
}

fn cmd_plot(a: &PlotArgs, out: &mut dyn Write) -> Result<()> {
    let (model, data) = load_inputs(&a.inputs)?;
    let e = entity(&data, &a.entity)?;
    let res = model.structure.resolution;
    let process = match &a.process {
        Some(name) => model.structure.process(name)?,
        None => 0,
    };
    let step = res.ticks_from_str(&a.grid)?;
    if step <= 0 {
        return Err(Error::InvalidParameter(format!(
            "grid step {} must be positive",
            a.grid
        )));
    }
    let ticks = e.timeline().ticks();
    let known = entity_posterior(&model, e)?;
    let at_slice =
        |j: usize| -> &NodeBelief { known.get(process, j).expect("every grid node is reported") };
    let free = FreeSlice::from_entity(&model, e)?;
    let (first, last) = (ticks[0], ticks[ticks.len() - 1]);
    let mut rows = Vec::new();
    let mut t = first;
    while t <= last {
        let j = ticks.partition_point(|&s| s < t);
        let (mean, variance) = if ticks[j] == t {
            let b = at_slice(j);
            (b.mean, b.variance)
        } else {
            let bracket = (res.to_time(ticks[j - 1]), res.to_time(ticks[j]));
            let m = free.moments(&TimeQuery::new(process, bracket, 0.0), res.to_time(t))?;
            (m.mean, m.variance)
        };
        rows.push(PlotRow {
            ticks: t,
            mean,
            sd: variance.max(0.0).sqrt(),
        });
        t += step;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "mean", "lower", "upper"])?;
    for r in &rows {
        w.write_record([
            res.format_ticks(r.ticks),
            r.mean.to_string(),
            (r.mean - 2.0 * r.sd).to_string(),
            (r.mean + 2.0 * r.sd).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_file(&a.out, &bytes)?;
    if let Some(svg) = &a.svg {
        write_file(svg, render_svg(&rows, res).as_bytes())?;
    }
    writeln!(out, "wrote {} grid points", rows.len())?;
    Ok(())
}

fn render_svg(rows: &[PlotRow], res: Resolution) -> String {
    const W: f64 = 640.0;
    const H: f64 = 320.0;
    const PAD: f64 = 20.0;
    let t0 = res.to_time(rows[0].ticks);
    let t1 = res.to_time(rows[rows.len() - 1].ticks);
    let lo = rows
        .iter()
        .map(|r| r.mean - 2.0 * r.sd)
        .fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.mean + 2.0 * r.sd)
        .fold(f64::NEG_INFINITY, f64::max);
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let span_y = if hi > lo { hi - lo } else { 1.0 };
    let x = |t: i64| PAD + (res.to_time(t) - t0) / span_t * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - (v - lo) / span_y * (H - 2.0 * PAD);
    let line = |f: &dyn Fn(&PlotRow) -> f64| {
        rows.iter()
            .map(|r| format!("{:.2},{:.2}", x(r.ticks), y(f(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s =
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">\n");
    for (points, style) in [
        (
            line(&|r| r.mean - 2.0 * r.sd),
            "stroke=\"gray\" stroke-dasharray=\"4 3\"",
        ),
        (
            line(&|r| r.mean + 2.0 * r.sd),
            "stroke=\"gray\" stroke-dasharray=\"4 3\"",
        ),
        (line(&|r| r.mean), "stroke=\"black\""),
    ] {
        writeln!(s, "<polyline fill=\"none\" {style} points=\"{points}\"/>").expect("string write");
    }
    s.push_str("</svg>\n");
    s
}

fn cmd_synth_glucose(a: &SynthGlucoseArgs, out: &mut dyn Write) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let data = synthetic::glucose_like(a.entities, a.per_entity, &mut rng)?;
    let structure: ItbnStructure = synthetic::glucose_measurement_structure();
    let records = data.to_records(&structure)?;
    let mut bytes = Vec::new();
    write_records(&mut bytes, &records, structure.resolution)?;
    write_file(&a.out, &bytes)?;
    if let Some(path) = &a.model_out {
        write_file(path, to_json(&structure)?.as_bytes())?;
    }
    writeln!(
        out,
        "wrote {} observations for {} entities",
        records.len(),
        a.entities
    )?;
    Ok(())
}
