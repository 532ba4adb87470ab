//! Command-line front end: configuration resolution, run orchestration,
//! tabular output, and plot-script emission.
//!
//! Every command writes a `manifest.txt` with all defaults materialized;
//! re-running with `--config manifest.txt` reproduces the output tables
//! bitwise. Numbers in tables are serialized with 17 significant digits.

use crate::config::{
    parse_assignments, parse_bool, parse_f64, parse_f64_list, parse_usize, ConfigError, ParamSpec,
    ParamsBuilder,
};
use crate::diagnostics::DiagnosticsRecord;
use crate::harness::{
    self, compare_models, convergence_time, run, test_case, ConvergenceResult, HarnessError,
    RunConfig, RunResult, SpaceStudyConfig, TestCase, TimeStudyConfig,
};
use crate::potential::{
    entropy_density_truncated, entropy_density_truncated_prime, mobility, mobility_truncated,
    Branch, PotentialParams,
};
use crate::scheme::{CoefficientTreatment, Grid, ModelKind, State};
use crate::solver::NewtonConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug)]
enum CliError {
    /// Configuration or environment problem; exit code 1.
    Config(String),
    /// Newton failure during time stepping; exit code 2.
    Solver(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match &e {
            HarnessError::Step { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

#[derive(Parser)]
#[command(
    name = "biofilm-sim",
    version,
    about = "Finite-volume BDF2 solver for a coupled substrate/biomass Cahn-Hilliard system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-step one test case and write snapshots and diagnostics.
    Run(RunArgs),
    /// Mesh refinement study against a fine reference solution.
    ConvergenceSpace(StudyArgs),
    /// Time-step refinement study on a fixed mesh.
    ConvergenceTime(StudyArgs),
    /// Run both models from identical data and tabulate differences.
    CompareModels(RunArgs),
    /// Verify the regularized potential family and exit.
    CheckPotentials,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    ThisPaper,
    WangZhang,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TreatmentArg {
    Extrapolated,
    Implicit,
}

#[derive(Args)]
struct RunArgs {
    /// Key-value configuration file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Test case id (1..=5).
    #[arg(long)]
    case: Option<u8>,
    #[arg(long)]
    model: Option<ModelArg>,
    #[arg(long)]
    treatment: Option<TreatmentArg>,
    /// Potential regularization parameter.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n_cells: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Comma-separated snapshot times.
    #[arg(long)]
    snapshots: Option<String>,
    /// Diagnostics stride in steps (0: first and last only).
    #[arg(long)]
    diag_every: Option<usize>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Drop the gradient/mixing energy coefficients from the scheme.
    #[arg(long)]
    no_gamma_factors: bool,
    /// Also emit a gnuplot script for the tables.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Test case providing the initial data.
    #[arg(long)]
    case: Option<u8>,
    #[arg(long)]
    model: Option<ModelArg>,
    #[arg(long)]
    treatment: Option<TreatmentArg>,
    #[arg(long)]
    delta: Option<f64>,
    /// Shared time step (spatial study only).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Reference mesh size (spatial study only).
    #[arg(long)]
    reference_cells: Option<usize>,
    /// Reference time step (temporal study only).
    #[arg(long)]
    reference_dt: Option<f64>,
    /// Fixed mesh size (temporal study only).
    #[arg(long)]
    n_cells: Option<usize>,
    /// Comma-separated study exponents.
    #[arg(long)]
    exponents: Option<String>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    no_gamma_factors: bool,
    /// Directory for cached reference solutions.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
}

/// Entry point used by the binary; returns the process exit code.
pub fn cli_run(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { 0 } else { 1 };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run_command(&args),
        Command::CompareModels(args) => compare_command(&args),
        Command::ConvergenceSpace(args) => study_command(&args, StudyKind::Space),
        Command::ConvergenceTime(args) => study_command(&args, StudyKind::Time),
        Command::CheckPotentials => check_potentials_command(),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            2
        }
    }
}

// ---------------------------------------------------------------------
// Settings resolution

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_f64_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Ordered canonical key-value entries of a resolved configuration.
struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    fn push(&mut self, key: &str, value: String) {
        self.entries.push((key.to_string(), value));
    }

    fn body(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn hash(&self) -> u64 {
        fnv1a64(self.body().as_bytes())
    }

    fn write(&self, path: &Path, wall_clock_s: f64) -> Result<(), CliError> {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let text = format!(
            "# biofilm-sim manifest\n# version = {}\n# config_hash = {:016x}\n\
             # created_unix_s = {}\n# wall_clock_s = {:.6}\n{}",
            env!("CARGO_PKG_VERSION"),
            self.hash(),
            created,
            wall_clock_s,
            self.body()
        );
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }

    fn push_params(&mut self, spec: &ParamSpec) {
        match spec {
            ParamSpec::Scaled(s) => {
                self.push("D0", fmt_f64(s.d0));
                self.push("M0", fmt_f64(s.m0));
                self.push("Rc0", fmt_f64(s.rc0));
                self.push("Rp0", fmt_f64(s.rp0));
                self.push("K", fmt_f64(s.k));
                self.push("Gamma1_0", fmt_f64(s.gamma1_0));
                self.push("Gamma2_0", fmt_f64(s.gamma2_0));
                self.push("N", fmt_f64(s.polymerization_index));
                self.push("lambda", fmt_f64(s.flory_huggins));
                self.push("K_tilde", fmt_f64(s.half_saturation_variant));
            }
            ParamSpec::Physical(p) => {
                self.push("D", fmt_f64(p.diffusivity));
                self.push("M_prime", fmt_f64(p.mobility));
                self.push("R_c", fmt_f64(p.consumption_rate));
                self.push("R_p", fmt_f64(p.production_rate));
                self.push("K_v", fmt_f64(p.half_saturation));
                self.push("Gamma1", fmt_f64(p.distortional_energy));
                self.push("Gamma2", fmt_f64(p.mixing_energy));
                self.push("x0", fmt_f64(p.length_scale));
                self.push("t0", fmt_f64(p.time_scale));
                self.push("v0", fmt_f64(p.concentration_scale));
                self.push("kBT", fmt_f64(p.thermal_energy));
                self.push("N", fmt_f64(p.polymerization_index));
                self.push("lambda", fmt_f64(p.flory_huggins));
                self.push("K_tilde", fmt_f64(p.half_saturation_variant));
            }
        }
    }
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::ThisPaper => "this-paper",
        ModelKind::WangZhang => "wang-zhang",
    }
}

fn treatment_name(t: CoefficientTreatment) -> &'static str {
    match t {
        CoefficientTreatment::Extrapolated => "extrapolated",
        CoefficientTreatment::Implicit => "implicit",
    }
}

fn parse_model(key: &str, value: &str) -> Result<ModelKind, ConfigError> {
    match value {
        "this-paper" => Ok(ModelKind::ThisPaper),
        "wang-zhang" => Ok(ModelKind::WangZhang),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "this-paper or wang-zhang",
        }),
    }
}

fn parse_treatment(key: &str, value: &str) -> Result<CoefficientTreatment, ConfigError> {
    match value {
        "extrapolated" => Ok(CoefficientTreatment::Extrapolated),
        "implicit" => Ok(CoefficientTreatment::Implicit),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "extrapolated or implicit",
        }),
    }
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<u32>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            item.trim().parse().map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                value: value.to_string(),
                expected: "a comma-separated list of integers",
            })
        })
        .collect()
}

fn range_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::OutOfRange {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Assignments from an optional file followed by flag overrides.
fn gather_assignments(
    config: &Option<PathBuf>,
    flags: Vec<(&'static str, String)>,
) -> Result<Vec<(String, String)>, CliError> {
    let mut assignments = Vec::new();
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        assignments.extend(parse_assignments(&text)?);
    }
    assignments.extend(flags.into_iter().map(|(k, v)| (k.to_string(), v)));
    Ok(assignments)
}

fn last_case(assignments: &[(String, String)], default: u8) -> Result<u8, CliError> {
    let mut case = default;
    for (k, v) in assignments {
        if k == "case" {
            case = v.parse().map_err(|_| {
                CliError::Config(format!("key `case`: cannot parse `{v}` as a case id"))
            })?;
        }
    }
    Ok(case)
}

#[derive(Debug)]
struct RunSettings {
    subcommand: &'static str,
    case: TestCase,
    model: ModelKind,
    treatment: CoefficientTreatment,
    delta: f64,
    include_gamma_factors: bool,
    n_cells: usize,
    dt: f64,
    t_end: f64,
    snapshots: Option<Vec<f64>>,
    diag_every: usize,
    newton: NewtonConfig,
    params: ParamSpec,
}

impl RunSettings {
    fn resolve(
        subcommand: &'static str,
        assignments: &[(String, String)],
        allow_model: bool,
    ) -> Result<Self, CliError> {
        let case = test_case(last_case(assignments, 1)?)?;
        let newton = NewtonConfig::default();
        let mut s = Self {
            subcommand,
            case,
            model: ModelKind::ThisPaper,
            treatment: CoefficientTreatment::Extrapolated,
            delta: 1e-8,
            include_gamma_factors: true,
            n_cells: case.n_cells,
            dt: case.dt,
            t_end: case.t_end,
            snapshots: None,
            diag_every: 1,
            newton,
            params: ParamSpec::Scaled(crate::params::default_scaled()),
        };
        let mut builder = ParamsBuilder::default();
        for (key, value) in assignments {
            s.apply(key, value, &mut builder, allow_model)?;
        }
        s.params = builder.resolve()?;
        s.validate()?;
        Ok(s)
    }

    fn apply(
        &mut self,
        key: &str,
        value: &str,
        builder: &mut ParamsBuilder,
        allow_model: bool,
    ) -> Result<(), CliError> {
        match key {
            "subcommand" => {
                if value != self.subcommand {
                    return Err(CliError::Config(format!(
                        "config was written for subcommand `{value}`, not `{}`",
                        self.subcommand
                    )));
                }
            }
            "case" => {} // applied up front
            "model" if allow_model => self.model = parse_model(key, value)?,
            "treatment" => self.treatment = parse_treatment(key, value)?,
            "delta" => self.delta = parse_f64(key, value)?,
            "include_gamma_factors" => self.include_gamma_factors = parse_bool(key, value)?,
            "n_cells" => self.n_cells = parse_usize(key, value)?,
            "dt" => self.dt = parse_f64(key, value)?,
            "t_end" => self.t_end = parse_f64(key, value)?,
            "snapshots" => self.snapshots = Some(parse_f64_list(key, value)?),
            "diag_every" => self.diag_every = parse_usize(key, value)?,
            "abs_tol" => self.newton.abs_tol = parse_f64(key, value)?,
            "rel_tol" => self.newton.rel_tol = parse_f64(key, value)?,
            "max_iters" => self.newton.max_iters = parse_usize(key, value)?,
            _ => {
                if !builder.try_set(key, value)? {
                    return Err(ConfigError::UnknownKey(key.to_string()).into());
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(range_err("delta", "must lie in (0, 1/2)").into());
        }
        if self.n_cells == 0 {
            return Err(range_err("n_cells", "must be positive").into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(range_err("dt", "must be positive").into());
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(range_err("t_end", "must be positive").into());
        }
        if self.newton.max_iters == 0 {
            return Err(range_err("max_iters", "must be at least 1").into());
        }
        if !(self.newton.abs_tol > 0.0) {
            return Err(range_err("abs_tol", "must be positive").into());
        }
        Ok(())
    }

    fn snapshots_resolved(&self) -> Vec<f64> {
        self.snapshots
            .clone()
            .unwrap_or_else(|| vec![0.0, self.t_end])
    }

    fn run_config(&self) -> RunConfig {
        let mut scheme = crate::scheme::SchemeConfig::new(self.params.scaled());
        scheme.model = self.model;
        scheme.treatment = self.treatment;
        scheme.delta = self.delta;
        scheme.include_gamma_factors = self.include_gamma_factors;
        RunConfig {
            scheme,
            newton: self.newton.clone(),
            n_cells: self.n_cells,
            dt: self.dt,
            t_end: self.t_end,
            snapshot_times: self.snapshots_resolved(),
            diag_every: self.diag_every,
        }
    }

    fn manifest(&self, with_model: bool) -> Manifest {
        let mut m = Manifest::new();
        m.push("subcommand", self.subcommand.to_string());
        m.push("case", self.case.id.to_string());
        if with_model {
            m.push("model", model_name(self.model).to_string());
        }
        m.push("treatment", treatment_name(self.treatment).to_string());
        m.push("delta", fmt_f64(self.delta));
        m.push(
            "include_gamma_factors",
            self.include_gamma_factors.to_string(),
        );
        m.push("n_cells", self.n_cells.to_string());
        m.push("dt", fmt_f64(self.dt));
        m.push("t_end", fmt_f64(self.t_end));
        m.push("snapshots", fmt_f64_list(&self.snapshots_resolved()));
        m.push("diag_every", self.diag_every.to_string());
        m.push("abs_tol", fmt_f64(self.newton.abs_tol));
        m.push("rel_tol", fmt_f64(self.newton.rel_tol));
        m.push("max_iters", self.newton.max_iters.to_string());
        m.push_params(&self.params);
        m
    }
}

fn run_flag_assignments(args: &RunArgs) -> Vec<(&'static str, String)> {
    let mut flags = Vec::new();
    if let Some(v) = args.case {
        flags.push(("case", v.to_string()));
    }
    if let Some(v) = args.model {
        let name = match v {
            ModelArg::ThisPaper => "this-paper",
            ModelArg::WangZhang => "wang-zhang",
        };
        flags.push(("model", name.to_string()));
    }
    if let Some(v) = args.treatment {
        let name = match v {
            TreatmentArg::Extrapolated => "extrapolated",
            TreatmentArg::Implicit => "implicit",
        };
        flags.push(("treatment", name.to_string()));
    }
    if let Some(v) = args.delta {
        flags.push(("delta", format!("{v}")));
    }
    if let Some(v) = args.n_cells {
        flags.push(("n_cells", v.to_string()));
    }
    if let Some(v) = args.dt {
        flags.push(("dt", format!("{v}")));
    }
    if let Some(v) = args.t_end {
        flags.push(("t_end", format!("{v}")));
    }
    if let Some(v) = &args.snapshots {
        flags.push(("snapshots", v.clone()));
    }
    if let Some(v) = args.diag_every {
        flags.push(("diag_every", v.to_string()));
    }
    if let Some(v) = args.abs_tol {
        flags.push(("abs_tol", format!("{v}")));
    }
    if let Some(v) = args.rel_tol {
        flags.push(("rel_tol", format!("{v}")));
    }
    if let Some(v) = args.max_iters {
        flags.push(("max_iters", v.to_string()));
    }
    if args.no_gamma_factors {
        flags.push(("include_gamma_factors", "false".to_string()));
    }
    flags
}

// ---------------------------------------------------------------------
// Table writing

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn snapshot_file_name(t: f64) -> String {
    format!("snapshots_{t:.6}.csv")
}

fn snapshot_csv(grid: &Grid, state: &State) -> String {
    let mut s = String::from("x,u,v,mu\n");
    for i in 0..grid.n_cells() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(grid.cell_center(i)),
            fmt_f64(state.u[i]),
            fmt_f64(state.v[i]),
            fmt_f64(state.mu[i])
        );
    }
    s
}

fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s =
        String::from("t,mass_u,mass_v,energy,entropy,min_u,max_u,min_v,max_v,newton_iters\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.mass_u),
            fmt_f64(r.mass_v),
            fmt_f64(r.energy),
            fmt_f64(r.entropy),
            fmt_f64(r.min_u),
            fmt_f64(r.max_u),
            fmt_f64(r.min_v),
            fmt_f64(r.max_v),
            r.newton_iters
        );
    }
    s
}

fn convergence_csv(result: &ConvergenceResult, integer_resolution: bool) -> String {
    let mut s = String::from("resolution,error_u,error_v,order_u,order_v\n");
    for i in 0..result.resolutions.len() {
        let res = if integer_resolution {
            format!("{}", result.resolutions[i] as u64)
        } else {
            fmt_f64(result.resolutions[i])
        };
        let (order_u, order_v) = if i == 0 {
            (String::new(), String::new())
        } else {
            (
                fmt_f64(result.observed_orders_u[i - 1]),
                fmt_f64(result.observed_orders_v[i - 1]),
            )
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            res,
            fmt_f64(result.errors_u[i]),
            fmt_f64(result.errors_v[i]),
            order_u,
            order_v
        );
    }
    s
}

fn write_run_outputs(dir: &Path, result: &RunResult) -> Result<Vec<String>, CliError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for snap in &result.snapshots {
        let name = snapshot_file_name(snap.t);
        write_text(&dir.join(&name), &snapshot_csv(&result.grid, &snap.state))?;
        written.push(name);
    }
    write_text(
        &dir.join("diagnostics.csv"),
        &diagnostics_csv(&result.diagnostics),
    )?;
    written.push("diagnostics.csv".to_string());
    Ok(written)
}

fn run_plot_script(snapshot_files: &[String]) -> String {
    let mut s = String::from(
        "# gnuplot script for the emitted tables\n\
         set datafile separator \",\"\n\
         set key autotitle columnhead\n\
         set terminal pngcairo size 1000,700\n",
    );
    for (column, label) in [(2, "u"), (3, "v")] {
        let _ = writeln!(s, "set output \"fields_{label}.png\"");
        let _ = writeln!(s, "set xlabel \"x\"; set ylabel \"{label}\"");
        let parts: Vec<String> = snapshot_files
            .iter()
            .map(|f| format!("\"{f}\" using 1:{column} with lines title \"{f}\""))
            .collect();
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    s.push_str("set output \"diagnostics.png\"\n");
    s.push_str("set xlabel \"t\"; set ylabel \"\"\n");
    let series: Vec<String> = [(2, "mass u"), (3, "mass v"), (4, "energy"), (5, "entropy")]
        .iter()
        .map(|(col, label)| format!("\"diagnostics.csv\" using 1:{col} with lines title \"{label}\""))
        .collect();
    let _ = writeln!(s, "plot {}", series.join(", "));
    s
}

fn convergence_plot_script() -> String {
    let mut s = String::from(
        "# gnuplot script for the emitted tables\n\
         set datafile separator \",\"\n\
         set key autotitle columnhead\n\
         set terminal pngcairo size 800,600\n\
         set output \"convergence.png\"\n\
         set logscale xy\n\
         set xlabel \"resolution\"; set ylabel \"L2 error\"\n",
    );
    s.push_str(
        "plot \"convergence.csv\" using 1:2 with linespoints title \"u\", \
         \"convergence.csv\" using 1:3 with linespoints title \"v\"\n",
    );
    s
}

// ---------------------------------------------------------------------
// Subcommands

fn run_command(args: &RunArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let assignments = gather_assignments(&args.config, run_flag_assignments(args))?;
    let settings = RunSettings::resolve("run", &assignments, true)?;
    let cfg = settings.run_config();
    let case = settings.case;
    let result = run(case.initial_u, case.initial_v, &cfg)?;

    let written = write_run_outputs(&args.out, &result)?;
    if args.plot {
        let snaps: Vec<String> = written
            .iter()
            .filter(|f| f.starts_with("snapshots_"))
            .cloned()
            .collect();
        write_text(&args.out.join("plot.gp"), &run_plot_script(&snaps))?;
    }
    settings
        .manifest(true)
        .write(&args.out.join("manifest.txt"), started.elapsed().as_secs_f64())?;

    println!(
        "case {} ({}): {} steps on {} cells, dt = {:.3e}",
        case.id,
        model_name(settings.model),
        result.steps,
        cfg.n_cells,
        cfg.dt
    );
    println!(
        "wrote {} files to {}",
        written.len() + 1,
        args.out.display()
    );
    Ok(())
}

fn compare_command(args: &RunArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let assignments = gather_assignments(&args.config, run_flag_assignments(args))?;
    let mut settings = RunSettings::resolve("compare-models", &assignments, false)?;
    // Elevens snapshots across the horizon unless given explicitly.
    if settings.snapshots.is_none() {
        let t_end = settings.t_end;
        settings.snapshots = Some((0..=10).map(|k| t_end * k as f64 / 10.0).collect());
    }
    let cfg = settings.run_config();
    let case = settings.case;
    let comparison = compare_models(case.initial_u, case.initial_v, &cfg)?;

    ensure_dir(&args.out)?;
    write_run_outputs(&args.out.join("this-paper"), &comparison.this_paper)?;
    write_run_outputs(&args.out.join("wang-zhang"), &comparison.variant)?;
    let mut diff = String::from("t,l2_u,l2_v\n");
    for i in 0..comparison.snapshot_times.len() {
        let _ = writeln!(
            diff,
            "{},{},{}",
            fmt_f64(comparison.snapshot_times[i]),
            fmt_f64(comparison.snapshot_l2_u[i]),
            fmt_f64(comparison.snapshot_l2_v[i])
        );
    }
    write_text(&args.out.join("model_difference.csv"), &diff)?;
    settings
        .manifest(false)
        .write(&args.out.join("manifest.txt"), started.elapsed().as_secs_f64())?;
    println!(
        "compared models on case {} over {} snapshots; outputs in {}",
        case.id,
        comparison.snapshot_times.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum StudyKind {
    Space,
    Time,
}

fn study_flag_assignments(args: &StudyArgs) -> Vec<(&'static str, String)> {
    let mut flags = Vec::new();
    if let Some(v) = args.case {
        flags.push(("case", v.to_string()));
    }
    if let Some(v) = args.model {
        let name = match v {
            ModelArg::ThisPaper => "this-paper",
            ModelArg::WangZhang => "wang-zhang",
        };
        flags.push(("model", name.to_string()));
    }
    if let Some(v) = args.treatment {
        let name = match v {
            TreatmentArg::Extrapolated => "extrapolated",
            TreatmentArg::Implicit => "implicit",
        };
        flags.push(("treatment", name.to_string()));
    }
    if let Some(v) = args.delta {
        flags.push(("delta", format!("{v}")));
    }
    if let Some(v) = args.dt {
        flags.push(("dt", format!("{v}")));
    }
    if let Some(v) = args.t_end {
        flags.push(("t_end", format!("{v}")));
    }
    if let Some(v) = args.reference_cells {
        flags.push(("reference_cells", v.to_string()));
    }
    if let Some(v) = args.reference_dt {
        flags.push(("reference_dt", format!("{v}")));
    }
    if let Some(v) = args.n_cells {
        flags.push(("n_cells", v.to_string()));
    }
    if let Some(v) = &args.exponents {
        flags.push(("exponents", v.clone()));
    }
    if let Some(v) = args.abs_tol {
        flags.push(("abs_tol", format!("{v}")));
    }
    if let Some(v) = args.rel_tol {
        flags.push(("rel_tol", format!("{v}")));
    }
    if let Some(v) = args.max_iters {
        flags.push(("max_iters", v.to_string()));
    }
    if args.no_gamma_factors {
        flags.push(("include_gamma_factors", "false".to_string()));
    }
    flags
}

struct StudySettings {
    subcommand: &'static str,
    kind: StudyKind,
    case: TestCase,
    model: ModelKind,
    treatment: CoefficientTreatment,
    delta: f64,
    include_gamma_factors: bool,
    t_end: f64,
    dt: f64,
    n_cells: usize,
    reference_cells: usize,
    reference_dt: f64,
    exponents: Vec<u32>,
    newton: NewtonConfig,
    params: ParamSpec,
}

impl StudySettings {
    fn resolve(kind: StudyKind, assignments: &[(String, String)]) -> Result<Self, CliError> {
        let default_case = if kind == StudyKind::Space { 4 } else { 5 };
        let case = test_case(last_case(assignments, default_case)?)?;
        let time_cells = 128;
        let mut s = Self {
            subcommand: match kind {
                StudyKind::Space => "convergence-space",
                StudyKind::Time => "convergence-time",
            },
            kind,
            case,
            model: ModelKind::ThisPaper,
            treatment: CoefficientTreatment::Extrapolated,
            delta: 1e-8,
            include_gamma_factors: true,
            t_end: 1.0,
            dt: 1e-5,
            n_cells: time_cells,
            reference_cells: 2048,
            reference_dt: 1.0 / ((1u64 << 14) as f64 * time_cells as f64),
            exponents: match kind {
                StudyKind::Space => (4..=10).collect(),
                StudyKind::Time => (1..=6).collect(),
            },
            newton: NewtonConfig::default(),
            params: ParamSpec::Scaled(crate::params::default_scaled()),
        };
        let mut builder = ParamsBuilder::default();
        for (key, value) in assignments {
            s.apply(key, value, &mut builder)?;
        }
        s.params = builder.resolve()?;
        s.validate()?;
        Ok(s)
    }

    fn apply(
        &mut self,
        key: &str,
        value: &str,
        builder: &mut ParamsBuilder,
    ) -> Result<(), CliError> {
        match (key, self.kind) {
            ("subcommand", _) => {
                if value != self.subcommand {
                    return Err(CliError::Config(format!(
                        "config was written for subcommand `{value}`, not `{}`",
                        self.subcommand
                    )));
                }
            }
            ("case", _) => {}
            ("model", _) => self.model = parse_model(key, value)?,
            ("treatment", _) => self.treatment = parse_treatment(key, value)?,
            ("delta", _) => self.delta = parse_f64(key, value)?,
            ("include_gamma_factors", _) => {
                self.include_gamma_factors = parse_bool(key, value)?
            }
            ("t_end", _) => self.t_end = parse_f64(key, value)?,
            ("exponents", _) => self.exponents = parse_usize_list(key, value)?,
            ("abs_tol", _) => self.newton.abs_tol = parse_f64(key, value)?,
            ("rel_tol", _) => self.newton.rel_tol = parse_f64(key, value)?,
            ("max_iters", _) => self.newton.max_iters = parse_usize(key, value)?,
            ("dt", StudyKind::Space) => self.dt = parse_f64(key, value)?,
            ("reference_cells", StudyKind::Space) => {
                self.reference_cells = parse_usize(key, value)?
            }
            ("n_cells", StudyKind::Time) => {
                self.n_cells = parse_usize(key, value)?;
                self.reference_dt = 1.0 / ((1u64 << 14) as f64 * self.n_cells as f64);
            }
            ("reference_dt", StudyKind::Time) => self.reference_dt = parse_f64(key, value)?,
            _ => {
                if !builder.try_set(key, value)? {
                    return Err(ConfigError::UnknownKey(key.to_string()).into());
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(range_err("delta", "must lie in (0, 1/2)").into());
        }
        if self.exponents.is_empty() {
            return Err(range_err("exponents", "must not be empty").into());
        }
        if !(self.t_end > 0.0) {
            return Err(range_err("t_end", "must be positive").into());
        }
        match self.kind {
            StudyKind::Space => {
                if !(self.dt > 0.0) {
                    return Err(range_err("dt", "must be positive").into());
                }
                if self.reference_cells == 0 {
                    return Err(range_err("reference_cells", "must be positive").into());
                }
                for &j in &self.exponents {
                    if self.reference_cells % (1usize << j) != 0 {
                        return Err(range_err(
                            "exponents",
                            format!(
                                "mesh 2^{j} does not nest in the reference mesh of {} cells",
                                self.reference_cells
                            ),
                        )
                        .into());
                    }
                }
            }
            StudyKind::Time => {
                if self.n_cells == 0 {
                    return Err(range_err("n_cells", "must be positive").into());
                }
                if !(self.reference_dt > 0.0) {
                    return Err(range_err("reference_dt", "must be positive").into());
                }
            }
        }
        Ok(())
    }

    fn scheme(&self) -> crate::scheme::SchemeConfig {
        let mut scheme = crate::scheme::SchemeConfig::new(self.params.scaled());
        scheme.model = self.model;
        scheme.treatment = self.treatment;
        scheme.delta = self.delta;
        scheme.include_gamma_factors = self.include_gamma_factors;
        scheme
    }

    fn manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.push("subcommand", self.subcommand.to_string());
        m.push("case", self.case.id.to_string());
        m.push("model", model_name(self.model).to_string());
        m.push("treatment", treatment_name(self.treatment).to_string());
        m.push("delta", fmt_f64(self.delta));
        m.push(
            "include_gamma_factors",
            self.include_gamma_factors.to_string(),
        );
        match self.kind {
            StudyKind::Space => {
                m.push("dt", fmt_f64(self.dt));
                m.push("reference_cells", self.reference_cells.to_string());
            }
            StudyKind::Time => {
                m.push("n_cells", self.n_cells.to_string());
                m.push("reference_dt", fmt_f64(self.reference_dt));
            }
        }
        m.push("t_end", fmt_f64(self.t_end));
        m.push(
            "exponents",
            self.exponents
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.push("abs_tol", fmt_f64(self.newton.abs_tol));
        m.push("rel_tol", fmt_f64(self.newton.rel_tol));
        m.push("max_iters", self.newton.max_iters.to_string());
        m.push_params(&self.params);
        m
    }
}

fn study_command(args: &StudyArgs, kind: StudyKind) -> Result<(), CliError> {
    let started = Instant::now();
    let assignments = gather_assignments(&args.config, study_flag_assignments(args))?;
    let settings = StudySettings::resolve(kind, &assignments)?;

    let result = match kind {
        StudyKind::Space => harness::convergence_space(&SpaceStudyConfig {
            case: settings.case,
            scheme: settings.scheme(),
            newton: settings.newton.clone(),
            dt: settings.dt,
            t_end: settings.t_end,
            reference_cells: settings.reference_cells,
            exponents: settings.exponents.clone(),
            cache_dir: args.cache_dir.clone(),
        })?,
        StudyKind::Time => convergence_time(&TimeStudyConfig {
            case: settings.case,
            scheme: settings.scheme(),
            newton: settings.newton.clone(),
            n_cells: settings.n_cells,
            t_end: settings.t_end,
            reference_dt: settings.reference_dt,
            study_dts: settings
                .exponents
                .iter()
                .map(|&j| 1.0 / ((1u64 << (2 * j)) as f64 * settings.n_cells as f64))
                .collect(),
            cache_dir: args.cache_dir.clone(),
        })?,
    };

    ensure_dir(&args.out)?;
    write_text(
        &args.out.join("convergence.csv"),
        &convergence_csv(&result, kind == StudyKind::Space),
    )?;
    if args.plot {
        write_text(&args.out.join("plot.gp"), &convergence_plot_script())?;
    }
    settings
        .manifest()
        .write(&args.out.join("manifest.txt"), started.elapsed().as_secs_f64())?;

    for i in 0..result.resolutions.len() {
        let orders = if i == 0 {
            String::from("      -       -")
        } else {
            format!(
                "{:7.3} {:7.3}",
                result.observed_orders_u[i - 1],
                result.observed_orders_v[i - 1]
            )
        };
        println!(
            "{:>12.6e}  e_u={:.6e}  e_v={:.6e}  orders: {}",
            result.resolutions[i], result.errors_u[i], result.errors_v[i], orders
        );
    }
    println!(
        "mean observed order: u = {:.3}, v = {:.3}",
        result.mean_order_u(),
        result.mean_order_v()
    );
    Ok(())
}

fn check_potentials_command() -> Result<(), CliError> {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {} ({detail})", name, if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    let deltas = [1e-2, 1e-4, 1e-6];
    let ns = [1.0, 1e3];
    let lambda = 0.55;

    let mut worst_match: f64 = 0.0;
    let mut min_curvature = f64::INFINITY;
    for &n in &ns {
        for &delta in &deltas {
            let p = PotentialParams::new(n, lambda, delta).expect("valid");
            for (i, &b) in p.breakpoints().iter().enumerate() {
                let (left, right) = (Branch::ALL[i], Branch::ALL[i + 1]);
                for (a, c) in [
                    (p.log_part_branch(left, b), p.log_part_branch(right, b)),
                    (
                        p.log_part_branch_prime(left, b),
                        p.log_part_branch_prime(right, b),
                    ),
                    (
                        p.log_part_branch_second(left, b),
                        p.log_part_branch_second(right, b),
                    ),
                ] {
                    worst_match = worst_match.max((a - c).abs() / a.abs().max(c.abs()).max(1.0));
                }
            }
            let mut u = -5.0;
            while u <= 6.0 {
                min_curvature = min_curvature.min(p.log_part_regularized_second(u));
                u += 1e-3;
            }
        }
    }
    check(
        "branch matching (value/slope/curvature)",
        worst_match <= 1e-9,
        format!("worst relative mismatch {worst_match:.3e}"),
    );
    check(
        "regularized log part convex",
        min_curvature >= 0.0,
        format!("min curvature {min_curvature:.3e}"),
    );

    let mut min_dominance = f64::INFINITY;
    for &delta in &deltas {
        let mut u = -2.0;
        while u <= 3.0 {
            min_dominance = min_dominance.min(mobility_truncated(u, delta) - mobility(u));
            u += 1e-3;
        }
    }
    check(
        "truncated mobility dominates",
        min_dominance >= -1e-15,
        format!("min difference {min_dominance:.3e}"),
    );

    let mut anchor_ok = true;
    let mut ode_worst: f64 = 0.0;
    for &delta in &deltas {
        anchor_ok &= entropy_density_truncated(0.5, delta) == 0.0
            && entropy_density_truncated_prime(0.5, delta) == 0.0;
        // Second differences of the entropy density reproduce 1/M_delta
        // away from the gluing points.
        let h = 1e-5;
        for k in 0..200 {
            let u = -0.5 + 2.0 * k as f64 / 200.0;
            if (u - delta).abs() < 10.0 * h || (u - (1.0 - delta)).abs() < 10.0 * h {
                continue;
            }
            let second = (entropy_density_truncated(u + h, delta)
                - 2.0 * entropy_density_truncated(u, delta)
                + entropy_density_truncated(u - h, delta))
                / (h * h);
            let expected = 1.0 / mobility_truncated(u, delta);
            ode_worst = ode_worst.max((second - expected).abs() / expected.abs());
        }
    }
    check(
        "entropy anchored at one half",
        anchor_ok,
        "Phi(1/2) = Phi'(1/2) = 0".to_string(),
    );
    check(
        "entropy curvature equals inverse mobility",
        ode_worst <= 1e-5,
        format!("worst relative error {ode_worst:.3e}"),
    );

    let mut product_worst: f64 = 0.0;
    for &delta in &deltas {
        for k in 0..=4000 {
            let u = k as f64 / 4000.0;
            let weight = u.clamp(0.0, 1.0) * (1.0 - u).clamp(0.0, 1.0);
            product_worst =
                product_worst.max((weight * entropy_density_truncated_prime(u, delta)).abs());
        }
    }
    check(
        "weighted entropy slope bounded by 2",
        product_worst <= 2.0,
        format!("max |u(1-u) Phi'| = {product_worst:.6}"),
    );

    if all_ok {
        Ok(())
    } else {
        Err(CliError::Config("potential verification failed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for &x in &[
            0.1,
            1.0 / 3.0,
            1e-300,
            12345.6789,
            -7.25e88,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "round trip failed for {s}");
        }
    }

    #[test]
    fn snapshot_names_are_stable() {
        assert_eq!(snapshot_file_name(0.0), "snapshots_0.000000.csv");
        assert_eq!(snapshot_file_name(10.0), "snapshots_10.000000.csv");
        assert_eq!(snapshot_file_name(0.123456789), "snapshots_0.123457.csv");
    }

    #[test]
    fn manifest_hash_ignores_nothing_in_body() {
        let mut a = Manifest::new();
        a.push("x", "1".into());
        let mut b = Manifest::new();
        b.push("x", "2".into());
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn run_settings_defaults_and_overrides() {
        let assignments = vec![
            ("n_cells".to_string(), "64".to_string()),
            ("dt".to_string(), "5e-3".to_string()),
        ];
        let s = RunSettings::resolve("run", &assignments, true).unwrap();
        assert_eq!(s.case.id, 1);
        assert_eq!(s.n_cells, 64);
        assert_eq!(s.dt, 5e-3);
        assert_eq!(s.t_end, 10.0);
        assert_eq!(s.delta, 1e-8);
    }

    #[test]
    fn flag_overrides_file_value() {
        // File sets 64, the trailing (flag) assignment sets 128.
        let assignments = vec![
            ("n_cells".to_string(), "64".to_string()),
            ("n_cells".to_string(), "128".to_string()),
        ];
        let s = RunSettings::resolve("run", &assignments, true).unwrap();
        assert_eq!(s.n_cells, 128);
    }

    #[test]
    fn delta_range_is_enforced() {
        let assignments = vec![("delta".to_string(), "0.7".to_string())];
        let err = RunSettings::resolve("run", &assignments, true).unwrap_err();
        match err {
            CliError::Config(msg) => assert!(msg.contains("delta")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let assignments = vec![("cells".to_string(), "64".to_string())];
        let err = RunSettings::resolve("run", &assignments, true).unwrap_err();
        match err {
            CliError::Config(msg) => assert!(msg.contains("cells")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_round_trips_through_resolution() {
        let assignments = vec![
            ("case".to_string(), "3".to_string()),
            ("dt".to_string(), "0.002".to_string()),
            ("M0".to_string(), "0.5e-3".to_string()),
        ];
        let s1 = RunSettings::resolve("run", &assignments, true).unwrap();
        let m1 = s1.manifest(true);
        let reparsed = parse_assignments(&m1.body()).unwrap();
        let s2 = RunSettings::resolve("run", &reparsed, true).unwrap();
        let m2 = s2.manifest(true);
        assert_eq!(m1.body(), m2.body());
        assert_eq!(m1.hash(), m2.hash());
    }

    #[test]
    fn study_settings_defaults() {
        let s = StudySettings::resolve(StudyKind::Space, &[]).unwrap();
        assert_eq!(s.case.id, 4);
        assert_eq!(s.reference_cells, 2048);
        assert_eq!(s.exponents, vec![4, 5, 6, 7, 8, 9, 10]);
        let s = StudySettings::resolve(StudyKind::Time, &[]).unwrap();
        assert_eq!(s.case.id, 5);
        assert_eq!(s.n_cells, 128);
        assert_eq!(s.reference_dt, 1.0 / (16384.0 * 128.0));
        assert_eq!(s.exponents, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn non_nesting_exponents_rejected() {
        let assignments = vec![
            ("reference_cells".to_string(), "100".to_string()),
            ("exponents".to_string(), "4,5".to_string()),
        ];
        assert!(StudySettings::resolve(StudyKind::Space, &assignments).is_err());
    }

    #[test]
    fn convergence_table_shape() {
        let result = ConvergenceResult {
            resolutions: vec![16.0, 32.0, 64.0],
            errors_u: vec![16e-4, 4e-4, 1e-4],
            errors_v: vec![8e-5, 2e-5, 5e-6],
            observed_orders_u: vec![2.0, 2.0],
            observed_orders_v: vec![2.0, 2.0],
        };
        let csv = convergence_csv(&result, true);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "resolution,error_u,error_v,order_u,order_v");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("16,"));
        assert!(lines[1].ends_with(",,"));
        assert!(lines[2].contains(",2.0000000000000000e0"));
    }
}
