//! Command-line orchestration for the netsurv toolkit.
//!
//! [`run_command`] parses an argument vector, runs one subcommand, writes its
//! outputs atomically together with a reproducibility manifest, and returns
//! the one-line summary that `main` prints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use netsurv::bootstrap::{bootstrap_estimate, make_replicates, SurveyDesign};
use netsurv::diagnostics::{deaths_per_interview, internal_consistency_holdout, loo_degree};
use netsurv::export::{
    estimate_rows, read_estimates_csv, write_atomic, write_ci_summary, write_estimates_csv, write_grid_csv,
    write_replicates_long, write_rows, EstimateRow,
};
use netsurv::lifetable::{conditional_q, RateSchedule, DEFAULT_A_FRACTION};
use netsurv::sensitivity::{sensitivity_grid, DEFAULT_GRID};
use netsurv::sibling::{expand_sibling_histories, load_siblings, sibling_totals, DEFAULT_WINDOW_MONTHS};
use netsurv::sim::{draw_sample, generate_world, SimConfig};
use netsurv::survey::{
    check_kp_names, load_known_populations, load_respondents, write_deaths, write_known_populations, write_respondents,
    FrameTotals, GroupId, GroupScheme, KnownPopulationTable, LoadSummary, RespondentRecord, SurveyConfig,
};
use netsurv::PreparedSample;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "NETSURV_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(#[from] clap::Error),
    #[error(transparent)]
    Core(#[from] netsurv::Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid {name}: {message}")]
    Env { name: &'static str, message: String },
}

impl CliError {
    /// Process exit status: 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) if !e.use_stderr() => 0,
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "netsurv", version, about = "Network survival estimation of adult death rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-group death rates from network reports.
    Estimate(EstimateArgs),
    /// Sibling-history death rates.
    Sibling(SiblingArgs),
    /// 45q15 and 35q15 from an estimates table.
    Lifetable(LifetableArgs),
    /// Rescaled bootstrap intervals for the death rates.
    Bootstrap(BootstrapArgs),
    /// Adjusted rates over a (delta, eta/tau) grid.
    Sensitivity(SensitivityArgs),
    /// Generate a synthetic world and a survey extract.
    Simulate(SimulateArgs),
    /// Deaths per interview, hold-out and leave-one-out checks.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct SurveyInputs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    respondents: PathBuf,
    #[arg(long)]
    deaths: Option<PathBuf>,
    #[arg(long)]
    known_pops: PathBuf,
    /// Keep only respondents asked with this tie definition.
    #[arg(long)]
    tie_definition: Option<String>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    inputs: SurveyInputs,
    /// Output file; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SiblingArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    siblings: PathBuf,
    #[arg(long)]
    window_months: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LifetableArgs {
    #[arg(long)]
    estimates: PathBuf,
    /// Supplies `a_fraction`; defaults to half the interval.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[command(flatten)]
    inputs: SurveyInputs,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    #[arg(long)]
    estimates: PathBuf,
    /// Comma-separated values used for both delta and eta/tau.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Overrides the eta/tau axis.
    #[arg(long, value_delimiter = ',')]
    eta_over_tau_grid: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    inputs: SurveyInputs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    arguments: Vec<String>,
    inputs: Vec<InputHash>,
    config: serde_json::Value,
    seed: Option<u64>,
    threads: Option<usize>,
    outputs: Vec<String>,
}

struct Run {
    command: &'static str,
    arguments: Vec<String>,
    inputs: Vec<InputHash>,
    config: serde_json::Value,
    seed: Option<u64>,
    threads: Option<usize>,
    outputs: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

impl Run {
    fn new(command: &'static str, arguments: Vec<String>, threads: Option<usize>) -> Self {
        Run {
            command,
            arguments,
            inputs: Vec::new(),
            config: serde_json::Value::Null,
            seed: None,
            threads,
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        self.inputs.push(InputHash { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        Ok(())
    }

    fn config(&mut self, path: &Path) -> CliResult<()> {
        self.input(path)?;
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        self.config = serde_json::from_str(&text).map_err(netsurv::Error::from)?;
        Ok(())
    }

    fn write<F>(&mut self, path: &Path, fill: F) -> CliResult<()>
    where
        F: FnOnce(&mut fs::File) -> netsurv::Result<()>,
    {
        write_atomic(path, fill)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    fn finish(self, manifest_path: &Path) -> CliResult<()> {
        let manifest = Manifest {
            tool: "netsurv",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            arguments: self.arguments,
            inputs: self.inputs,
            config: self.config,
            seed: self.seed,
            threads: self.threads,
            outputs: self.outputs,
        };
        write_atomic(manifest_path, |f| {
            serde_json::to_writer_pretty(&mut *f, &manifest)?;
            Ok(f.write_all(b"\n")?)
        })?;
        Ok(())
    }
}

fn manifest_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

struct Survey {
    scheme: GroupScheme,
    records: Vec<RespondentRecord>,
    table: KnownPopulationTable,
    totals: FrameTotals,
    summary: LoadSummary,
}

fn load_survey(inputs: &SurveyInputs, run: &mut Run) -> CliResult<Survey> {
    run.config(&inputs.config)?;
    run.input(&inputs.respondents)?;
    if let Some(d) = &inputs.deaths {
        run.input(d)?;
    }
    run.input(&inputs.known_pops)?;
    let mut config = SurveyConfig::from_path(&inputs.config)?;
    if let Some(t) = &inputs.tie_definition {
        config.tie_definition = Some(t.clone());
    }
    let loaded = load_respondents(&inputs.respondents, inputs.deaths.as_deref())?;
    let table = load_known_populations(&inputs.known_pops)?;
    check_kp_names(&loaded.records, &table)?;
    let scheme = config.scheme()?;
    let (records, totals) = config.prepare(loaded.records)?;
    if records.is_empty() {
        return Err(netsurv::Error::EmptyInput("no respondents left after filtering".into()).into());
    }
    Ok(Survey { scheme, records, table, totals, summary: loaded.summary })
}

fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Env { name: THREADS_ENV, message: format!("expected a positive integer, got `{v}`") }),
        },
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the one-line summary on success.
pub fn run_command<I, T>(argv: I) -> CliResult<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv)?;
    let arguments: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let threads = threads_from_env()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Env { name: THREADS_ENV, message: e.to_string() })?
    };
    pool.install(|| dispatch(cli.command, arguments, threads))
}

fn dispatch(command: Command, arguments: Vec<String>, threads: Option<usize>) -> CliResult<String> {
    match command {
        Command::Estimate(a) => estimate(a, Run::new("estimate", arguments, threads)),
        Command::Sibling(a) => sibling(a, Run::new("sibling", arguments, threads)),
        Command::Lifetable(a) => lifetable(a, Run::new("lifetable", arguments, threads)),
        Command::Bootstrap(a) => bootstrap(a, Run::new("bootstrap", arguments, threads)),
        Command::Sensitivity(a) => sensitivity(a, Run::new("sensitivity", arguments, threads)),
        Command::Simulate(a) => simulate(a, Run::new("simulate", arguments, threads)),
        Command::Diagnose(a) => diagnose(a, Run::new("diagnose", arguments, threads)),
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn estimate(a: EstimateArgs, mut run: Run) -> CliResult<String> {
    let s = load_survey(&a.inputs, &mut run)?;
    let est = netsurv::network_survival_rate(&s.records, &s.table, &s.scheme, &s.totals)?;
    let rows = estimate_rows(&est);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    run.write(&a.out, |f| {
        if is_json(&a.out) {
            serde_json::to_writer_pretty(&mut *f, &rows)?;
            Ok(f.write_all(b"\n")?)
        } else {
            write_estimates_csv(&rows, f)
        }
    })?;
    run.finish(&manifest_for(&a.out))?;
    Ok(format!(
        "estimate: {} respondents, {} death reports ({} incomplete), {} groups ({} failed) -> {}",
        s.records.len(),
        s.summary.death_reports,
        s.summary.incomplete_reports,
        rows.len(),
        failed,
        a.out.display()
    ))
}

#[derive(Serialize)]
struct SiblingRow {
    group: String,
    deaths: f64,
    person_years: f64,
    rate: Option<f64>,
}

fn sibling(a: SiblingArgs, mut run: Run) -> CliResult<String> {
    run.config(&a.config)?;
    run.input(&a.siblings)?;
    let config = SurveyConfig::from_path(&a.config)?;
    let scheme = config.scheme()?;
    let window = a.window_months.or(config.window_months).unwrap_or(DEFAULT_WINDOW_MONTHS);
    let siblings = load_siblings(&a.siblings)?;
    let periods = expand_sibling_histories(&siblings, window, &scheme, config.interview_cmc)?;
    let weights: Vec<f64> = siblings.iter().map(|s| s.respondent_weight).collect();
    let rows: Vec<SiblingRow> = sibling_totals(&periods, &scheme, &weights)
        .into_iter()
        .zip(scheme.groups())
        .map(|((d, py), g)| SiblingRow {
            group: g.to_string(),
            deaths: d,
            person_years: py,
            rate: (py > 0.0).then(|| d / py),
        })
        .collect();
    run.write(&a.out, |f| write_rows(&rows, f))?;
    run.finish(&manifest_for(&a.out))?;
    Ok(format!(
        "sibling: {} siblings, {} person-periods, window {} months -> {}",
        siblings.len(),
        periods.len(),
        window,
        a.out.display()
    ))
}

fn parse_rates(rows: &[EstimateRow]) -> CliResult<Vec<(GroupId, f64)>> {
    rows.iter()
        .filter_map(|r| r.m_hat.map(|m| (r, m)))
        .map(|(r, m)| {
            r.group
                .parse::<GroupId>()
                .map(|g| (g, m))
                .map_err(|e| CliError::Core(netsurv::Error::Argument(format!("group `{}`: {e}", r.group))))
        })
        .collect()
}

fn read_estimates(path: &Path, run: &mut Run) -> CliResult<Vec<(GroupId, f64)>> {
    run.input(path)?;
    let file = fs::File::open(path).map_err(io_err(path))?;
    let rows = read_estimates_csv(file)?;
    let rates = parse_rates(&rows)?;
    if rates.is_empty() {
        return Err(netsurv::Error::EmptyInput(format!("{} has no estimated rates", path.display())).into());
    }
    Ok(rates)
}

#[derive(Serialize)]
struct LifetableRow {
    sex: String,
    measure: String,
    value: Option<f64>,
    error: Option<String>,
}

fn lifetable(a: LifetableArgs, mut run: Run) -> CliResult<String> {
    let a_fraction = match &a.config {
        Some(p) => {
            run.config(p)?;
            SurveyConfig::from_path(p)?.a_fraction.unwrap_or(DEFAULT_A_FRACTION)
        }
        None => DEFAULT_A_FRACTION,
    };
    let rates = read_estimates(&a.estimates, &mut run)?;
    let mut rows = Vec::new();
    for sex in [netsurv::Sex::Female, netsurv::Sex::Male] {
        if !rates.iter().any(|(g, _)| g.sex == sex) {
            continue;
        }
        let schedule = RateSchedule::for_sex(&rates, sex);
        for (measure, to) in [("45q15", 60), ("35q15", 50)] {
            let q = schedule
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|s| conditional_q(s, 15, to, a_fraction).map_err(|e| e.to_string()));
            rows.push(LifetableRow {
                sex: sex.name().to_string(),
                measure: measure.to_string(),
                value: q.as_ref().ok().copied(),
                error: q.err(),
            });
        }
    }
    run.write(&a.out, |f| write_rows(&rows, f))?;
    run.finish(&manifest_for(&a.out))?;
    let ok = rows.iter().filter(|r| r.value.is_some()).count();
    Ok(format!("lifetable: {ok} of {} measures computed -> {}", rows.len(), a.out.display()))
}

fn bootstrap(a: BootstrapArgs, mut run: Run) -> CliResult<String> {
    run.seed = Some(a.seed);
    let s = load_survey(&a.inputs, &mut run)?;
    ensure_dir(&a.out_dir)?;
    let design = SurveyDesign::from_ids(s.records.iter().map(|r| (r.stratum_id.as_str(), r.psu_id.as_str())));
    let base: Vec<f64> = s.records.iter().map(|r| r.weight).collect();
    let reps = make_replicates(&design, &base, a.replicates, a.seed)?;
    let prepared = PreparedSample::new(&s.records, &s.scheme);
    let groups: Vec<String> = s.scheme.groups().iter().map(|g| g.to_string()).collect();
    let results = bootstrap_estimate(&groups, |w| prepared.rates(w, &s.table, &s.totals), &base, &reps, a.level)?;
    let summary_path = a.out_dir.join("summary.csv");
    let reps_path = a.out_dir.join("replicates.csv");
    run.write(&summary_path, |f| write_ci_summary(&results, f))?;
    run.write(&reps_path, |f| write_replicates_long(&results, f))?;
    run.finish(&a.out_dir.join("manifest.json"))?;
    let degenerate = results.iter().filter(|r| r.degenerate).count();
    Ok(format!(
        "bootstrap: {} replicates over {} strata, {} groups ({} degenerate) -> {}",
        a.replicates,
        design.strata().len(),
        results.len(),
        degenerate,
        a.out_dir.display()
    ))
}

fn sensitivity(a: SensitivityArgs, mut run: Run) -> CliResult<String> {
    let rates = read_estimates(&a.estimates, &mut run)?;
    let delta = a.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let ratio = a.eta_over_tau_grid.clone().or(a.grid.clone()).unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let cells = sensitivity_grid(&rates, &delta, &ratio)?;
    run.write(&a.out, |f| write_grid_csv(&cells, f))?;
    run.finish(&manifest_for(&a.out))?;
    Ok(format!("sensitivity: {} cells x {} groups -> {}", cells.len(), rates.len(), a.out.display()))
}

#[derive(Serialize)]
struct WorldTruth<'a> {
    seed: u64,
    population: usize,
    frame_total: u64,
    known_populations: &'a KnownPopulationTable,
    groups: &'a [netsurv::sim::GroupTruth],
}

fn simulate(a: SimulateArgs, mut run: Run) -> CliResult<String> {
    run.config(&a.config)?;
    run.seed = Some(a.seed);
    let text = fs::read_to_string(&a.config).map_err(io_err(&a.config))?;
    let mut config: SimConfig = serde_json::from_str(&text).map_err(netsurv::Error::from)?;
    config.seed = a.seed;
    let world = generate_world(&config)?;
    // the sample stream is derived from the seed so one flag pins both draws
    let sample = draw_sample(&world, &config.sample, a.seed.wrapping_add(1))?;
    ensure_dir(&a.out_dir)?;
    let kp_names: Vec<String> = world.known_populations.names().map(str::to_string).collect();
    let truth = WorldTruth {
        seed: a.seed,
        population: world.persons.len(),
        frame_total: world.frame_total(),
        known_populations: &world.known_populations,
        groups: world.truth(),
    };
    let survey_config = SurveyConfig {
        age_breaks: config.age_breaks.clone(),
        frame_age_range: config.frame_age_range,
        topcode_cap: None,
        n_f: Some(world.frame_total() as f64),
        tie_definition: Some(config.tie_definition.clone()),
        a_fraction: None,
        interview_cmc: None,
        window_months: None,
    };
    let dir = &a.out_dir;
    run.write(&dir.join("respondents.csv"), |f| write_respondents(&sample.records, &kp_names, f))?;
    run.write(&dir.join("deaths.csv"), |f| write_deaths(&sample.records, f))?;
    run.write(&dir.join("known_populations.csv"), |f| write_known_populations(&world.known_populations, f))?;
    run.write(&dir.join("survey_config.json"), |f| {
        serde_json::to_writer_pretty(&mut *f, &survey_config)?;
        Ok(f.write_all(b"\n")?)
    })?;
    run.write(&dir.join("truth.json"), |f| {
        serde_json::to_writer_pretty(&mut *f, &truth)?;
        Ok(f.write_all(b"\n")?)
    })?;
    run.finish(&dir.join("manifest.json"))?;
    let deaths: u64 = world.truth().iter().map(|t| t.deaths).sum();
    Ok(format!(
        "simulate: {} persons, {} deaths, {} reports, {} respondents -> {}",
        world.persons.len(),
        deaths,
        world.reports.len(),
        sample.records.len(),
        dir.display()
    ))
}

#[derive(Serialize)]
struct HoldoutRow {
    population: String,
    predicted: f64,
    actual: u64,
    relative_error: f64,
}

#[derive(Serialize)]
struct LooRow {
    group: String,
    held_out: String,
    d_bar_hat: Option<f64>,
}

fn diagnose(a: DiagnoseArgs, mut run: Run) -> CliResult<String> {
    let s = load_survey(&a.inputs, &mut run)?;
    ensure_dir(&a.out_dir)?;
    let dpi = deaths_per_interview(&s.records)?;
    let holdout: Vec<HoldoutRow> = internal_consistency_holdout(&s.records, &s.table, &s.totals)?
        .into_iter()
        .map(|p| HoldoutRow {
            relative_error: p.relative_error(),
            population: p.population,
            predicted: p.predicted,
            actual: p.actual,
        })
        .collect();
    let loo: Vec<LooRow> = loo_degree(&s.records, &s.table, &s.scheme, &s.totals)?
        .into_iter()
        .map(|r| LooRow {
            group: r.group.to_string(),
            held_out: r.held_out.unwrap_or_else(|| "(none)".into()),
            d_bar_hat: r.d_bar_hat,
        })
        .collect();
    let dir = &a.out_dir;
    run.write(&dir.join("deaths_per_interview.csv"), |f| write_rows(&[dpi], f))?;
    run.write(&dir.join("holdout.csv"), |f| write_rows(&holdout, f))?;
    run.write(&dir.join("loo_degree.csv"), |f| write_rows(&loo, f))?;
    run.finish(&dir.join("manifest.json"))?;
    Ok(format!(
        "diagnose: {} deaths / {} interviews = {:.2}; {} hold-outs -> {}",
        dpi.deaths,
        dpi.interviews,
        dpi.ratio,
        holdout.len(),
        dir.display()
    ))
}
