//! Declarative experiments: a JSON config names a problem, a set of
//! algorithms, a parameter profile and tolerance ladders; [`run`] solves
//! every (algorithm, rule) pair and writes per-cell traces plus a report.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{fit_rate_from_distances, RateFit};
use crate::error::{DcError, Result};
use crate::graphgl::{build_gl_problem, build_weights, GlParams, SyntheticTwoPhase};
use crate::io::{
    load_mask, load_pgm, parse_libsvm, rate_plot_data, write_rate_plot, write_report, write_trace,
    Report, ReportCell, TraceMeta,
};
use crate::linesearch::{LineSearchParams, LsdeParams};
use crate::model::DcProblem;
use crate::parallel::{map_on_workers, Execution};
use crate::precond::PreconditionerKind;
use crate::scad::{
    build_scad_problem, LeastSquaresData, ScadParams, ScadSplit, ScadVariant, SyntheticScad,
};
use crate::solvers::{
    solve, Algorithm, SolveReport, SolverConfig, Status, TerminationRule, TraceLevel,
};

pub const EXPERIMENT_SCHEMA: &str = "dcopt-experiment/1";

const DEFAULT_MAX_ITER: usize = 100_000;
const DEFAULT_JACOBI_SWEEPS: usize = 5;
const DEFAULT_CG_TOL: f64 = 1e-11;
const DEFAULT_CG_MAX_INNER: usize = 1000;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSpec,
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    pub termination: Vec<LadderSpec>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub trace: TraceLevel,
    /// Re-solve converged runs against their final iterate to record
    /// distances for rate plots and local-rate fits.
    #[serde(default)]
    pub rate_data: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Scad {
        #[serde(default)]
        params: ScadParamSpec,
        data: ScadData,
    },
    HuberScad {
        #[serde(default)]
        params: ScadParamSpec,
        data: ScadData,
    },
    GraphGl {
        #[serde(default)]
        params: GlParams,
        data: GlData,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScadParamSpec {
    pub mu: f64,
    pub theta: f64,
    /// Huber knee; `μ/2` when absent.
    pub alpha: Option<f64>,
}

impl Default for ScadParamSpec {
    fn default() -> Self {
        let p = ScadParams::default();
        Self {
            mu: p.mu,
            theta: p.theta,
            alpha: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScadData {
    Synthetic(SyntheticScad),
    Libsvm { path: PathBuf },
    Explicit { a: Vec<Vec<f64>>, b: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GlData {
    Synthetic(SyntheticTwoPhase),
    Image {
        image: PathBuf,
        mask: PathBuf,
        /// Binary ground truth, white = foreground; needed for DICE.
        #[serde(default)]
        truth: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgorithmEntry {
    Name(String),
    Detailed {
        algorithm: String,
        #[serde(default)]
        preconditioner: Option<PreconditionerKind>,
        #[serde(default)]
        label: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Scad,
    Gl,
}

impl ProfileName {
    pub fn line_search(self) -> LineSearchParams {
        match self {
            ProfileName::Scad => LineSearchParams::scad_profile(),
            ProfileName::Gl => LineSearchParams::gl_profile(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileName::Scad => "scad",
            ProfileName::Gl => "gl",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(ProfileName),
    Custom {
        name: ProfileName,
        /// Field-wise overrides of the named line-search profile.
        #[serde(default)]
        line_search: Option<Value>,
        #[serde(default)]
        lsde: Option<LsdeParams>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    RelChange,
    StepNorm,
    GradNorm,
    DiceBound,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::RelChange => "rel_change",
            RuleKind::StepNorm => "step_norm",
            RuleKind::GradNorm => "grad_norm",
            RuleKind::DiceBound => "dice_bound",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub rule: RuleKind,
    pub ladder: Vec<f64>,
}

/// A resolved algorithm entry.
#[derive(Clone, Debug)]
pub struct AlgorithmChoice {
    pub algorithm: Algorithm,
    pub label: String,
    pub preconditioner: PreconditionerKind,
}

/// Everything a run needs besides the problems themselves.
#[derive(Clone, Debug)]
pub struct Plan {
    pub profile: ProfileName,
    pub line_search: LineSearchParams,
    pub lsde: LsdeParams,
    pub algorithms: Vec<AlgorithmChoice>,
}

/// Problem instances built from a config.
pub struct Instance {
    pub standard: DcProblem,
    /// The boosted split, for SCAD problems.
    pub boosted: Option<DcProblem>,
    pub truth: Option<Arc<Vec<bool>>>,
    pub setup_time_s: f64,
    pub label: String,
}

impl Instance {
    pub fn problem_for(&self, algorithm: Algorithm) -> &DcProblem {
        match (algorithm, &self.boosted) {
            (Algorithm::BdcaLs, Some(b)) => b,
            _ => &self.standard,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| DcError::Configuration(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| DcError::Configuration(e.to_string()))?;
        if cfg.schema != EXPERIMENT_SCHEMA {
            return Err(DcError::Configuration(format!(
                "unsupported schema '{}', expected '{EXPERIMENT_SCHEMA}'",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match &mut self.problem {
            ProblemSpec::Scad { data, .. } | ProblemSpec::HuberScad { data, .. } => {
                if let ScadData::Libsvm { path } = data {
                    fix(path);
                }
            }
            ProblemSpec::GraphGl { data, .. } => {
                if let GlData::Image { image, mask, truth } = data {
                    fix(image);
                    fix(mask);
                    if let Some(t) = truth {
                        fix(t);
                    }
                }
            }
        }
    }

    fn default_profile(&self) -> ProfileName {
        match self.problem {
            ProblemSpec::GraphGl { .. } => ProfileName::Gl,
            _ => ProfileName::Scad,
        }
    }

    fn is_gl(&self) -> bool {
        matches!(self.problem, ProblemSpec::GraphGl { .. })
    }

    /// Checks everything that can be checked without building the problem.
    pub fn plan(&self) -> Result<Plan> {
        let cfg_err = |m: String| Err(DcError::Configuration(m));
        if self.algorithms.is_empty() {
            return cfg_err("at least one algorithm is required".into());
        }
        if self.termination.is_empty() {
            return cfg_err("at least one termination rule is required".into());
        }
        if self.max_iter == 0 {
            return cfg_err("max_iter must be at least 1".into());
        }
        let mut kinds = BTreeSet::new();
        for l in &self.termination {
            if l.ladder.is_empty() {
                return cfg_err(format!("{} ladder is empty", l.rule.as_str()));
            }
            if !kinds.insert(l.rule.as_str()) {
                return cfg_err(format!("{} listed twice", l.rule.as_str()));
            }
            if l.ladder.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return cfg_err(format!("{} tolerances must be positive", l.rule.as_str()));
            }
            if l.rule == RuleKind::DiceBound {
                if !self.is_gl() {
                    return cfg_err("dice_bound needs a graph_gl problem".into());
                }
                if l.ladder.iter().any(|&t| t > 1.0) {
                    return cfg_err("DICE thresholds must lie in (0, 1]".into());
                }
            }
        }
        if let ProblemSpec::Scad { params, .. } | ProblemSpec::HuberScad { params, .. } =
            &self.problem
        {
            ScadParams::new(params.mu, params.theta, params.alpha)?;
        }
        if let ProblemSpec::GraphGl { params, .. } = &self.problem {
            params.validate()?;
        }
        self.check_files()?;

        let (profile, line_search, lsde) = match &self.profile {
            None => {
                let p = self.default_profile();
                (p, p.line_search(), LsdeParams::default())
            }
            Some(ProfileSpec::Named(p)) => (*p, p.line_search(), LsdeParams::default()),
            Some(ProfileSpec::Custom {
                name,
                line_search,
                lsde,
            }) => {
                let ls = match line_search {
                    Some(patch) => merge_line_search(name.line_search(), patch)?,
                    None => name.line_search(),
                };
                (*name, ls, lsde.unwrap_or_default())
            }
        };
        line_search.validate()?;
        lsde.validate()?;

        let mut labels = BTreeSet::new();
        let mut algorithms = Vec::with_capacity(self.algorithms.len());
        for entry in &self.algorithms {
            let (name, pre, label) = match entry {
                AlgorithmEntry::Name(n) => (n.as_str(), None, None),
                AlgorithmEntry::Detailed {
                    algorithm,
                    preconditioner,
                    label,
                } => (algorithm.as_str(), preconditioner.clone(), label.clone()),
            };
            let algorithm: Algorithm = name.parse()?;
            let label = label.unwrap_or_else(|| algorithm.name().to_owned());
            if label.is_empty()
                || !label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return cfg_err(format!("label '{label}' must be nonempty [A-Za-z0-9_-]"));
            }
            if !labels.insert(label.clone()) {
                return cfg_err(format!("duplicate algorithm label '{label}'"));
            }
            let preconditioner =
                pre.unwrap_or_else(|| default_preconditioner(algorithm, self.is_gl()));
            algorithms.push(AlgorithmChoice {
                algorithm,
                label,
                preconditioner,
            });
        }
        Ok(Plan {
            profile,
            line_search,
            lsde,
            algorithms,
        })
    }

    fn check_files(&self) -> Result<()> {
        let paths: Vec<&PathBuf> = match &self.problem {
            ProblemSpec::Scad { data, .. } | ProblemSpec::HuberScad { data, .. } => match data {
                ScadData::Libsvm { path } => vec![path],
                _ => vec![],
            },
            ProblemSpec::GraphGl { data, .. } => match data {
                GlData::Image { image, mask, truth } => [Some(image), Some(mask), truth.as_ref()]
                    .into_iter()
                    .flatten()
                    .collect(),
                GlData::Synthetic(_) => vec![],
            },
        };
        match paths.into_iter().find(|p| !p.is_file()) {
            Some(p) => Err(DcError::Configuration(format!(
                "referenced file {} does not exist",
                p.display()
            ))),
            None => Ok(()),
        }
    }

    /// Builds the problem instance(s) for `seed`.
    pub fn build(&self, seed: u64) -> Result<Instance> {
        let start = Instant::now();
        match &self.problem {
            ProblemSpec::Scad { params, data } => {
                scad_instance(params, data, ScadVariant::L1, seed, start)
            }
            ProblemSpec::HuberScad { params, data } => {
                scad_instance(params, data, ScadVariant::Huber, seed, start)
            }
            ProblemSpec::GraphGl { params, data } => {
                let (image, prior, truth) = match data {
                    GlData::Synthetic(s) => {
                        let inst = s.generate(seed)?;
                        (inst.image, inst.prior, Some(inst.truth))
                    }
                    GlData::Image { image, mask, truth } => {
                        let image = load_pgm(&read_input(image)?)?;
                        let (h, w, prior) = load_mask(&read_input(mask)?)?;
                        if (h, w) != (image.height(), image.width()) {
                            return Err(DcError::Configuration(
                                "mask and image sizes differ".into(),
                            ));
                        }
                        let truth = match truth {
                            Some(t) => {
                                let (th, tw, labels) = load_mask(&read_input(t)?)?;
                                if (th, tw) != (h, w) {
                                    return Err(DcError::Configuration(
                                        "truth and image sizes differ".into(),
                                    ));
                                }
                                Some(labels.labels().iter().map(|&v| v > 0.0).collect())
                            }
                            None => None,
                        };
                        (image, prior, truth)
                    }
                };
                let weights = build_weights(&image, params, seed, Execution::Parallel)?;
                let problem = build_gl_problem(&weights, &prior, params)?;
                Ok(Instance {
                    label: problem.label().to_owned(),
                    standard: problem,
                    boosted: None,
                    truth: truth.map(Arc::new),
                    setup_time_s: start.elapsed().as_secs_f64(),
                })
            }
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path)
        .map_err(|e| DcError::Configuration(format!("cannot read {}: {e}", path.display())))
}

fn scad_instance(
    params: &ScadParamSpec,
    data: &ScadData,
    variant: ScadVariant,
    seed: u64,
    start: Instant,
) -> Result<Instance> {
    let params = ScadParams::new(params.mu, params.theta, params.alpha)?;
    let ls = match data {
        ScadData::Synthetic(s) => s.generate(seed)?.data,
        ScadData::Libsvm { path } => {
            let file = File::open(path).map_err(|e| {
                DcError::Configuration(format!("cannot read {}: {e}", path.display()))
            })?;
            parse_libsvm(BufReader::new(file), &path.display().to_string())?.to_least_squares()?
        }
        ScadData::Explicit { a, b } => {
            let cols = a.first().map_or(0, Vec::len);
            if a.iter().any(|r| r.len() != cols) {
                return Err(DcError::Configuration(
                    "explicit rows differ in length".into(),
                ));
            }
            let flat: Vec<f64> = a.iter().flatten().copied().collect();
            let a = Array2::from_shape_vec((a.len(), cols), flat)
                .map_err(|e| DcError::Configuration(e.to_string()))?;
            LeastSquaresData::new(a, Array1::from_vec(b.clone()))?
        }
    };
    let standard = build_scad_problem(&ls, &params, variant, ScadSplit::Standard)?;
    let boosted = build_scad_problem(&ls, &params, variant, ScadSplit::Boosted)?;
    Ok(Instance {
        label: standard.label().to_owned(),
        standard,
        boosted: Some(boosted),
        truth: None,
        setup_time_s: start.elapsed().as_secs_f64(),
    })
}

fn merge_line_search(base: LineSearchParams, patch: &Value) -> Result<LineSearchParams> {
    let Value::Object(fields) = patch else {
        return Err(DcError::Configuration(
            "line_search overrides must be an object".into(),
        ));
    };
    let mut merged = serde_json::to_value(base)?;
    let target = merged
        .as_object_mut()
        .expect("a struct serializes to an object");
    for (k, v) in fields {
        target.insert(k.clone(), v.clone());
    }
    serde_json::from_value(merged).map_err(|e| DcError::Configuration(format!("line_search: {e}")))
}

/// Preconditioner used when an entry does not name one.
pub fn default_preconditioner(algorithm: Algorithm, graph: bool) -> PreconditionerKind {
    match (graph, algorithm) {
        (true, Algorithm::Pdcae) => PreconditionerKind::Cg {
            tol: DEFAULT_CG_TOL,
            max_inner: DEFAULT_CG_MAX_INNER,
        },
        (true, _) => PreconditionerKind::jacobi(DEFAULT_JACOBI_SWEEPS),
        (false, Algorithm::BdcaLs) => PreconditionerKind::IdentityScaled(0.0),
        (false, a) if a.implicit() => PreconditionerKind::SpectralGap,
        (false, _) => PreconditionerKind::IdentityScaled(1.0),
    }
}

/// Per-cell outcome of a finished experiment.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub report: Report,
    pub out_dir: PathBuf,
    pub nan_cells: usize,
}

/// Setup problems and configuration mistakes, reported before any solve.
#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(DcError),
    #[error("{0}")]
    Output(DcError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateSummary {
    pub algorithm: String,
    pub termination: String,
    pub fit: RateFit,
}

/// Options that override the config from the command line.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

struct Job<'a> {
    choice: &'a AlgorithmChoice,
    ladder: &'a LadderSpec,
}

struct JobResult {
    report: SolveReport,
    rate: Option<SolveReport>,
}

fn tightest(ladder: &LadderSpec) -> f64 {
    let it = ladder.ladder.iter().copied();
    match ladder.rule {
        RuleKind::DiceBound => it.fold(f64::NEG_INFINITY, f64::max),
        _ => it.fold(f64::INFINITY, f64::min),
    }
}

fn rule_for(kind: RuleKind, tol: f64, truth: &Option<Arc<Vec<bool>>>) -> Result<TerminationRule> {
    Ok(match kind {
        RuleKind::RelChange => TerminationRule::RelChange(tol),
        RuleKind::StepNorm => TerminationRule::StepNorm(tol),
        RuleKind::GradNorm => TerminationRule::GradNorm(tol),
        RuleKind::DiceBound => TerminationRule::DiceBound {
            threshold: tol,
            truth: truth
                .clone()
                .ok_or_else(|| DcError::Configuration("dice_bound needs ground truth".into()))?,
        },
    })
}

/// Solver configuration of one (algorithm, rule) cell group.
pub fn cell_config(
    plan: &Plan,
    choice: &AlgorithmChoice,
    rule: TerminationRule,
    ladder: &[f64],
    max_iter: usize,
    trace: TraceLevel,
) -> SolverConfig {
    let mut cfg = choice.algorithm.config(
        plan.line_search,
        plan.lsde,
        choice.preconditioner.clone(),
        rule,
        max_iter,
    );
    cfg.trace = trace;
    cfg.ladder = ladder.to_vec();
    cfg
}

/// File name of a per-cell trace.
pub fn trace_file_name(label: &str, rule: RuleKind, tol: f64) -> String {
    format!("{label}_{}_{tol:e}.csv", rule.as_str())
}

/// Runs a full experiment and writes its artifacts.
pub fn run(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> std::result::Result<RunSummary, ExperimentError> {
    let plan = config.plan().map_err(ExperimentError::Config)?;
    let seed = opts.seed.unwrap_or(config.seed);
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&config.name));
    let workers = opts.workers.unwrap_or(1).max(1);
    let instance = config.build(seed).map_err(ExperimentError::Config)?;

    let jobs: Vec<Job> = plan
        .algorithms
        .iter()
        .flat_map(|choice| {
            config
                .termination
                .iter()
                .map(move |ladder| Job { choice, ladder })
        })
        .collect();
    let mut configs = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let rule = rule_for(job.ladder.rule, tightest(job.ladder), &instance.truth)
            .map_err(ExperimentError::Config)?;
        let cfg = cell_config(
            &plan,
            job.choice,
            rule,
            &job.ladder.ladder,
            config.max_iter,
            config.trace,
        );
        cfg.validate(instance.problem_for(job.choice.algorithm))
            .map_err(ExperimentError::Config)?;
        configs.push(cfg);
    }

    log::info!(
        "{}: {} solver runs on {} worker(s)",
        config.name,
        jobs.len(),
        workers
    );
    let results = map_on_workers(workers, jobs.len(), |i| -> Result<JobResult> {
        let problem = instance.problem_for(jobs[i].choice.algorithm);
        let report = solve(problem, &configs[i])?;
        log::info!(
            "{} {}: {:?} after {} iterations",
            jobs[i].choice.label,
            jobs[i].ladder.rule.as_str(),
            report.status,
            report.iterations
        );
        let rate = if config.rate_data && report.status == Status::Converged {
            let mut cfg = configs[i].clone();
            cfg.reference = Some(report.x.clone());
            Some(solve(problem, &cfg)?)
        } else {
            None
        };
        Ok(JobResult { report, rate })
    })
    .map_err(|e| ExperimentError::Config(DcError::Configuration(e)))?;

    fs::create_dir_all(&out_dir).map_err(|e| ExperimentError::Output(e.into()))?;
    let mut report = Report::new(&config.name, &instance.label, seed);
    report.setup_time_s = instance.setup_time_s;
    report
        .notes
        .push(format!("profile {}", plan.profile.as_str()));
    let mut rates = Vec::new();
    let mut nan_cells = 0;
    for (job, result) in jobs.iter().zip(results) {
        let result = result.map_err(ExperimentError::Config)?;
        let cells = write_cells(
            &out_dir,
            config,
            &plan,
            seed,
            &instance,
            job,
            &result.report,
        )
        .map_err(ExperimentError::Output)?;
        nan_cells += cells
            .iter()
            .filter(|c| c.status == Status::NanAbort)
            .count();
        report.cells.extend(cells);
        if let Some(rate_run) = &result.rate {
            let fit = write_rate_data(&out_dir, config, &plan, seed, &instance, job, rate_run)
                .map_err(ExperimentError::Output)?;
            rates.push(RateSummary {
                algorithm: job.choice.label.clone(),
                termination: job.ladder.rule.as_str().to_owned(),
                fit,
            });
        }
    }
    for r in &rates {
        report.notes.push(format!(
            "rate {} {}: {:?} eta={} r2={}",
            r.algorithm,
            r.termination,
            r.fit.regime,
            r.fit.eta.map_or("-".into(), |e| format!("{e:.6}")),
            r.fit.r_squared.map_or("-".into(), |e| format!("{e:.4}")),
        ));
    }
    let file =
        File::create(out_dir.join("report.json")).map_err(|e| ExperimentError::Output(e.into()))?;
    write_report(BufWriter::new(file), &report).map_err(ExperimentError::Output)?;
    Ok(RunSummary {
        report,
        out_dir,
        nan_cells,
    })
}

fn trace_meta(
    config: &ExperimentConfig,
    plan: &Plan,
    seed: u64,
    instance: &Instance,
    job: &Job,
    tol: f64,
    run: &SolveReport,
) -> TraceMeta {
    TraceMeta {
        algorithm: job.choice.label.clone(),
        profile: plan.profile.as_str().to_owned(),
        seed,
        problem: format!("{}/{}", config.name, instance.label),
        termination: job.ladder.rule.as_str().to_owned(),
        tolerance: tol,
        status: Some(run.status),
        iterations: run.iterations,
        n0: run.n0,
        c_lambda: run.c_lambda,
        mu_min: run.mu_min,
        initial_energy: run.initial_energy,
        final_energy: run.final_energy,
    }
}

/// One report cell and trace file per rung of the ladder. A rung's trace is
/// the prefix of the shared run up to its first crossing.
fn write_cells(
    out_dir: &Path,
    config: &ExperimentConfig,
    plan: &Plan,
    seed: u64,
    instance: &Instance,
    job: &Job,
    run: &SolveReport,
) -> Result<Vec<ReportCell>> {
    let mut cells = Vec::with_capacity(run.crossings.len());
    for crossing in &run.crossings {
        let tol = crossing.tolerance;
        let (status, iterations, wall) = match crossing.iterations {
            Some(k) => (Status::Converged, k, crossing.wall_time_s),
            None => (
                run.status,
                run.iterations,
                Some(run.wall_time.as_secs_f64()),
            ),
        };
        let rows = &run.trace[..iterations.min(run.trace.len())];
        let final_energy = rows.last().map_or(run.final_energy, |r| r.energy);
        let mut meta = trace_meta(config, plan, seed, instance, job, tol, run);
        meta.status = Some(status);
        meta.iterations = iterations;
        meta.final_energy = final_energy;
        let name = trace_file_name(&job.choice.label, job.ladder.rule, tol);
        if config.trace != TraceLevel::Off {
            write_trace(
                BufWriter::new(File::create(out_dir.join(&name))?),
                &meta,
                rows,
            )?;
        }
        let mut cell = ReportCell::new(
            &job.choice.label,
            job.ladder.rule.as_str(),
            tol,
            status,
            Some(iterations),
            wall,
        );
        cell.final_energy = Some(final_energy);
        cell.trace_file = (config.trace != TraceLevel::Off).then_some(name);
        cells.push(cell);
    }
    Ok(cells)
}

fn write_rate_data(
    out_dir: &Path,
    config: &ExperimentConfig,
    plan: &Plan,
    seed: u64,
    instance: &Instance,
    job: &Job,
    run: &SolveReport,
) -> Result<RateFit> {
    let meta = trace_meta(config, plan, seed, instance, job, tightest(job.ladder), run);
    let stem = format!("{}_{}", job.choice.label, job.ladder.rule.as_str());
    let trace = File::create(out_dir.join(format!("{stem}_ref.csv")))?;
    write_trace(BufWriter::new(trace), &meta, &run.trace)?;
    let file = File::create(out_dir.join(format!("{stem}_rate.csv")))?;
    write_rate_plot(BufWriter::new(file), &rate_plot_data(&meta, &run.trace))?;
    let dist: Vec<f64> = run.trace.iter().filter_map(|r| r.dist_ref).collect();
    Ok(fit_rate_from_distances(&dist))
}
