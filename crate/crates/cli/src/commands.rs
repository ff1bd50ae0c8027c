use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use rccm::model::{rccm_fit_with_retries, TuningParams};
use rccm::network::{edge_set, DEFAULT_EDGE_THRESHOLD};
use rccm::panel::TimeSeriesPanel;
use rccm::selection::{gap_select, stars_select, Estimator, GapConfig, GapReport, StabilityReport, StarsConfig, TuningGrid};
use rccm::solvers::SolverOptions;
use rccm::synthetic::{
    evaluate, generate_truth, run_benchmark, sample_panel, BenchmarkConfig, BenchmarkTable, Method, MetricSummary,
    Selection, SimulationConfig,
};
use rccm::PrecisionMatrix;
use serde::{Deserialize, Serialize};

use crate::artifact::{FitArtifact, FitSettings, Manifest, TruthFile, VERSION};
use crate::error::{CliError, CliResult};
use crate::files::{prepare_out_dir, read_subject_dir, read_text, write_json, write_matrix_csv};
use crate::schema;

const EMPTY_CLUSTER_RESTARTS: usize = 3;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation settings (JSON).
    pub config: PathBuf,
    /// Overrides the seed in the settings file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut cfg: SimulationConfig = schema::parse(schema::SIMULATION, &read_text(&args.config)?, "simulation settings")?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Schema(vec![e.to_string()]))?;
    let truth = generate_truth(&cfg)?;
    let panel = sample_panel(&truth, cfg.n, cfg.seed)?;
    let out = prepare_out_dir(&args.out)?;

    let mut files = Vec::with_capacity(cfg.subjects);
    for (k, subject) in panel.subjects().iter().enumerate() {
        let name = format!("subject_{}.csv", k + 1);
        write_matrix_csv(&out.join(&name), panel.roi_names(), subject.data())?;
        files.push(name);
    }
    write_json(&out.join("truth.json"), &TruthFile::new(cfg.clone(), &truth))?;
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            software_version: VERSION.to_owned(),
            seed: cfg.seed,
            subjects: cfg.subjects,
            p: cfg.p,
            n: cfg.n,
            subject_files: files,
            truth: "truth.json".into(),
        },
    )?;
    log::info!("wrote {} subjects to {}", cfg.subjects, out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory of subject_<k>.csv files (header row of ROI names).
    pub data: PathBuf,
    /// Center the columns without scaling them.
    #[arg(long)]
    pub no_standardize: bool,
}

impl DataArgs {
    fn load(&self) -> CliResult<(TimeSeriesPanel, Vec<String>)> {
        let files = read_subject_dir(&self.data)?;
        let panel = TimeSeriesPanel::from_raw(files.data, files.roi_names, !self.no_standardize).map_err(|e| match e {
            rccm::RccmError::InvalidInput(msg) => CliError::Ingestion(msg),
            other => other.into(),
        })?;
        Ok((panel, files.names))
    }
}

#[derive(Debug, Args)]
pub struct PenaltyArgs {
    /// Subject-level sparsity penalty.
    #[arg(long)]
    pub lambda1: f64,
    /// Wishart degrees of freedom; must exceed p - 1.
    #[arg(long)]
    pub lambda2: f64,
    /// Cluster-level sparsity penalty.
    #[arg(long)]
    pub lambda3: f64,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    /// Convergence threshold on the largest entrywise change.
    #[arg(long, default_value_t = 0.001)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    /// Graphical lasso penalty of the initial per-subject estimates.
    #[arg(long, default_value_t = 0.001)]
    pub init_lambda: f64,
}

impl EmArgs {
    fn settings(&self) -> FitSettings {
        FitSettings {
            epsilon: self.epsilon,
            max_em_iterations: self.max_iterations,
            init_glasso_lambda: self.init_lambda,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub groups: usize,
    #[command(flatten)]
    pub penalties: PenaltyArgs,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn check_tuning(tp: &TuningParams, panel: &TimeSeriesPanel) -> CliResult<()> {
    tp.validate_for(panel).map_err(|e| CliError::Tuning(e.to_string()))
}

fn write_edges(path: &Path, m: &PrecisionMatrix, roi_names: &[String]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["node_i", "node_j", "weight"]).context("csv write")?;
    for (i, j) in edge_set(m, DEFAULT_EDGE_THRESHOLD) {
        let weight = format!("{:?}", m.as_matrix()[(i, j)]);
        w.write_record([roi_names[i].as_str(), roi_names[j].as_str(), weight.as_str()]).context("csv write")?;
    }
    w.flush()?;
    Ok(())
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let (panel, names) = args.data.load()?;
    if names.len() < args.groups {
        return Err(CliError::Ingestion(format!(
            "{} subject files cannot form {} clusters",
            names.len(),
            args.groups
        )));
    }
    let p = &args.penalties;
    let tp = TuningParams::new(p.lambda1, p.lambda2, p.lambda3, args.groups);
    check_tuning(&tp, &panel)?;
    let settings = args.em.settings();
    let opts = settings.options(args.seed);
    opts.validate().map_err(|e| CliError::Other(e.into()))?;

    let outcome = rccm_fit_with_retries(&panel, &tp, &opts, EMPTY_CLUSTER_RESTARTS)?;
    let state = &outcome.state;
    let out = prepare_out_dir(&args.out)?;
    let artifact = FitArtifact::new(
        state,
        outcome.restarts,
        tp,
        settings,
        args.seed,
        panel.is_standardized(),
        panel.roi_names().to_vec(),
        names.clone(),
    );
    write_json(&out.join("fit.json"), &artifact)?;
    let edges = prepare_out_dir(&out.join("edges"))?;
    for (g, m) in state.group_precisions.iter().enumerate() {
        write_edges(&edges.join(format!("group_{g}.csv")), m, panel.roi_names())?;
    }
    for (name, m) in names.iter().zip(&state.subject_precisions) {
        let stem = name.trim_end_matches(".csv");
        write_edges(&edges.join(format!("{stem}.csv")), m, panel.roi_names())?;
    }
    if !state.converged {
        return Err(CliError::NonConvergence {
            iterations: state.iteration,
            change: state.max_entry_change,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Rccm,
    Glasso,
}

#[derive(Debug, Args)]
pub struct StarsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Tuning grid axes (JSON).
    #[arg(long)]
    pub grid: PathBuf,
    /// Number of clusters; overrides the grid file.
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Rccm)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 20)]
    pub subsamples: usize,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    groups: Option<usize>,
    lambda1: Vec<f64>,
    lambda2: Option<Vec<f64>>,
    lambda3: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct StarsOutput<'a> {
    #[serde(flatten)]
    report: &'a StabilityReport,
    selected_params: TuningParams,
}

pub fn stars(args: &StarsArgs) -> CliResult<()> {
    let file: GridFile = schema::parse(schema::GRID, &read_text(&args.grid)?, "tuning grid")?;
    let (panel, _) = args.data.load()?;
    let (grid, estimator) = match args.estimator {
        EstimatorArg::Glasso => (
            TuningGrid::from_axes(&file.lambda1, &[0.0], &[0.0], 1)?,
            Estimator::GlassoPerSubject(SolverOptions::default()),
        ),
        EstimatorArg::Rccm => {
            let missing: Vec<String> = [
                ("groups", file.groups.or(args.groups).is_none()),
                ("lambda2", file.lambda2.is_none()),
                ("lambda3", file.lambda3.is_none()),
            ]
            .iter()
            .filter(|(_, absent)| *absent)
            .map(|(key, _)| format!("the rccm estimator needs `{key}` in the grid"))
            .collect();
            if !missing.is_empty() {
                return Err(CliError::Schema(missing));
            }
            let groups = args.groups.or(file.groups).expect("checked above");
            let grid = TuningGrid::from_axes(
                &file.lambda1,
                file.lambda2.as_deref().expect("checked above"),
                file.lambda3.as_deref().expect("checked above"),
                groups,
            )?;
            for tp in grid.candidates() {
                check_tuning(tp, &panel)?;
            }
            (grid, Estimator::Rccm(args.em.settings().options(args.seed)))
        }
    };
    let cfg = StarsConfig {
        num_subsamples: args.subsamples,
        beta: args.beta,
        seed: args.seed,
    };
    let report = stars_select(&panel, &grid, &cfg, &estimator)?;
    let out = prepare_out_dir(&args.out)?;
    write_json(
        &out.join("stars.json"),
        &StarsOutput {
            report: &report,
            selected_params: report.selected_params(),
        },
    )?;
    if !report.any_feasible {
        return Err(CliError::Infeasible { beta: args.beta });
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Largest number of clusters considered.
    #[arg(long)]
    pub gmax: usize,
    /// Number of reference data sets.
    #[arg(long = "references", short = 'B', default_value_t = 10)]
    pub references: usize,
    /// Graphical lasso penalty of the estimates whose dispersion is measured.
    #[arg(long, default_value_t = 1e-16)]
    pub reference_lambda: f64,
    #[command(flatten)]
    pub penalties: PenaltyArgs,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct GapOutput<'a> {
    tuning: TuningParams,
    num_reference: usize,
    seed: u64,
    #[serde(flatten)]
    report: &'a GapReport,
}

pub fn gap(args: &GapArgs) -> CliResult<()> {
    let (panel, _) = args.data.load()?;
    let p = &args.penalties;
    let tp = TuningParams::new(p.lambda1, p.lambda2, p.lambda3, 2);
    check_tuning(&tp, &panel)?;
    let cfg = GapConfig {
        g_max: args.gmax,
        num_reference: args.references,
        reference_glasso_lambda: args.reference_lambda,
        seed: args.seed,
    };
    let report = gap_select(&panel, &tp, &cfg, &args.em.settings().options(args.seed))?;
    let out = prepare_out_dir(&args.out)?;
    write_json(
        &out.join("gap.json"),
        &GapOutput {
            tuning: tp,
            num_reference: args.references,
            seed: args.seed,
            report: &report,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rccm,
    GlassoKmeans,
    WardPooled,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rccm => Method::Rccm,
            MethodArg::GlassoKmeans => Method::GlassoKmeans,
            MethodArg::WardPooled => Method::WardPooled,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Benchmark settings (JSON).
    pub config: PathBuf,
    /// Overrides the replicate count in the settings file.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Overrides the method list in the settings file.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Option<Vec<MethodArg>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkFile {
    pub simulation: SimulationConfig,
    pub replicates: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    pub selection: Selection,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default)]
    pub seed: u64,
}

fn all_methods() -> Vec<Method> {
    vec![Method::Rccm, Method::GlassoKmeans, Method::WardPooled]
}

#[derive(Serialize)]
struct BenchmarkOutput<'a> {
    software_version: &'static str,
    config: &'a BenchmarkFile,
    #[serde(flatten)]
    table: &'a BenchmarkTable,
}

const METRICS: [&str; 8] = [
    "rand_index",
    "adjusted_rand_index",
    "tpr_subject",
    "fpr_subject",
    "ppv_subject",
    "tpr_group",
    "fpr_group",
    "ppv_group",
];

fn write_benchmark_csv(path: &Path, table: &BenchmarkTable) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header: Vec<String> = ["groups", "magnitude", "overlap", "method", "successes", "failures"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sd"));
    }
    w.write_record(&header).context("csv write")?;
    for row in &table.rows {
        let mut record = vec![
            row.groups.to_string(),
            row.magnitude.to_string(),
            format!("{:?}", row.overlap),
            row.method.to_string(),
            row.successes.to_string(),
            row.failures.to_string(),
        ];
        let summaries: [Option<MetricSummary>; 8] = [
            row.rand_index,
            row.adjusted_rand_index,
            row.tpr_subject,
            row.fpr_subject,
            row.ppv_subject,
            row.tpr_group,
            row.fpr_group,
            row.ppv_group,
        ];
        for s in summaries {
            match s {
                Some(s) => {
                    record.push(format!("{:?}", s.mean));
                    record.push(format!("{:?}", s.sd));
                }
                None => record.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&record).context("csv write")?;
    }
    w.flush()?;
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs) -> CliResult<()> {
    let mut file: BenchmarkFile = schema::parse(schema::BENCHMARK, &read_text(&args.config)?, "benchmark settings")?;
    if let Some(r) = args.replicates {
        file.replicates = r;
    }
    if let Some(methods) = &args.methods {
        file.methods = methods.iter().map(|&m| m.into()).collect();
    }
    file.simulation.validate().map_err(|e| CliError::Schema(vec![e.to_string()]))?;
    let cfg = BenchmarkConfig {
        simulation: file.simulation.clone(),
        replicates: file.replicates,
        methods: file.methods.clone(),
        selection: file.selection.clone(),
        fit: file.fit.options(file.seed),
        seed: file.seed,
    };
    let table = run_benchmark(&cfg)?;
    let out = prepare_out_dir(&args.out)?;
    write_benchmark_csv(&out.join("benchmark.csv"), &table)?;
    write_json(
        &out.join("benchmark.json"),
        &BenchmarkOutput {
            software_version: VERSION,
            config: &file,
            table: &table,
        },
    )
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// fit.json written by `rccm fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// truth.json written by `rccm simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn evaluate_fit(args: &EvaluateArgs) -> CliResult<()> {
    let fit: FitArtifact = serde_json::from_str(&read_text(&args.fit)?)
        .map_err(|e| CliError::Ingestion(format!("{}: {e}", args.fit.display())))?;
    let truth: TruthFile = serde_json::from_str(&read_text(&args.truth)?)
        .map_err(|e| CliError::Ingestion(format!("{}: {e}", args.truth.display())))?;
    let truth = truth.to_truth().map_err(|e| CliError::Ingestion(e.to_string()))?;
    let subjects = fit.subject_matrices().map_err(|e| CliError::Ingestion(e.to_string()))?;
    let groups = fit.group_matrices().map_err(|e| CliError::Ingestion(e.to_string()))?;
    let result = evaluate(&truth, &fit.hard_assignments, &subjects, Some(&groups))?;
    match &args.out {
        Some(path) => write_json(path, &result),
        None => {
            println!("{}", serde_json::to_string_pretty(&result).context("serialize JSON")?);
            Ok(())
        }
    }
}
