//! Built-in experiments: initial data, run orchestration, model
//! comparison, and convergence studies with observed-order estimation.

use crate::diagnostics::{self, DiagnosticsError, DiagnosticsRecord};
use crate::params::default_scaled;
use crate::scheme::{
    chemical_potential_of, Grid, History, ModelKind, SchemeConfig, SchemeError, State,
};
use crate::solver::{solve_bdf2_step, solve_first_step, NewtonConfig, SolverError};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown test case id {0} (valid ids are 1..=5)")]
    UnknownCase(u8),
    #[error("step {step} (t = {t:.6}) failed: {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("invalid run configuration: {0}")]
    BadConfig(String),
}

/// Initial data and default discretization of one built-in experiment.
#[derive(Debug, Clone, Copy)]
pub struct TestCase {
    pub id: u8,
    pub initial_u: fn(f64) -> f64,
    pub initial_v: fn(f64) -> f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_cells: usize,
}

fn bump_profile(x: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * x).sin().powi(2) + 2e-2
}

fn step_profile(x: f64) -> f64 {
    if x <= 0.2 {
        0.2
    } else {
        1e-2
    }
}

fn parabola_profile(x: f64) -> f64 {
    -(x - 0.5) * (x - 0.5) + 1.0 / 3.0
}

fn const_075(_: f64) -> f64 {
    0.75
}

fn const_01(_: f64) -> f64 {
    0.1
}

fn const_03(_: f64) -> f64 {
    0.3
}

/// The five built-in experiments.
///
/// Cases 1-3 study the qualitative dynamics on 128 cells with dt = 1e-3;
/// case 4 is the spatial refinement study (reference on 2048 cells at
/// dt = 1e-5), case 5 the temporal refinement study on 128 cells with
/// reference dt = 1/(2^14 * 128).
pub fn test_case(id: u8) -> Result<TestCase, HarnessError> {
    let case = match id {
        1 => TestCase {
            id,
            initial_u: bump_profile,
            initial_v: const_075,
            t_end: 10.0,
            dt: 1e-3,
            n_cells: 128,
        },
        2 => TestCase {
            id,
            initial_u: step_profile,
            initial_v: const_01,
            t_end: 10.0,
            dt: 1e-3,
            n_cells: 128,
        },
        3 => TestCase {
            id,
            initial_u: parabola_profile,
            initial_v: const_03,
            t_end: 1.0,
            dt: 1e-3,
            n_cells: 128,
        },
        4 => TestCase {
            id,
            initial_u: parabola_profile,
            initial_v: const_03,
            t_end: 1.0,
            dt: 1e-5,
            n_cells: 2048,
        },
        5 => TestCase {
            id,
            initial_u: parabola_profile,
            initial_v: const_03,
            t_end: 1.0,
            dt: 1.0 / ((1 << 14) as f64 * 128.0),
            n_cells: 128,
        },
        _ => return Err(HarnessError::UnknownCase(id)),
    };
    Ok(case)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scheme: SchemeConfig,
    pub newton: NewtonConfig,
    pub n_cells: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Requested snapshot times; each resolves to the nearest step at or
    /// after the request.
    pub snapshot_times: Vec<f64>,
    /// Record diagnostics every this many steps; 0 records only the
    /// initial and final rows.
    pub diag_every: usize,
}

impl RunConfig {
    pub fn for_case(case: &TestCase) -> Self {
        Self {
            scheme: SchemeConfig::new(default_scaled()),
            newton: NewtonConfig::default(),
            n_cells: case.n_cells,
            dt: case.dt,
            t_end: case.t_end,
            snapshot_times: Vec::new(),
            diag_every: 1,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.n_cells == 0 {
            return Err(HarnessError::BadConfig("n_cells must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(HarnessError::BadConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(HarnessError::BadConfig(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        self.scheme
            .validate()
            .map_err(|e| HarnessError::BadConfig(e.to_string()))?;
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }
}

/// One captured state along a trajectory.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub requested_t: f64,
    pub t: f64,
    pub step: usize,
    pub state: State,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub grid: Grid,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub final_state: State,
    pub steps: usize,
}

/// Midpoint projection of the initial data with the consistent initial
/// chemical potential.
pub fn initial_state(
    grid: &Grid,
    u0: impl Fn(f64) -> f64,
    v0: impl Fn(f64) -> f64,
    config: &SchemeConfig,
) -> State {
    let u: Vec<f64> = (0..grid.n_cells())
        .map(|i| u0(grid.cell_center(i)))
        .collect();
    let v: Vec<f64> = (0..grid.n_cells())
        .map(|i| v0(grid.cell_center(i)))
        .collect();
    let mu = chemical_potential_of(&u, grid, config);
    State { v, u, mu }
}

/// Time-step the scheme: implicit Euler startup, then BDF2.
pub fn run(
    u0: impl Fn(f64) -> f64,
    v0: impl Fn(f64) -> f64,
    cfg: &RunConfig,
) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let grid = Grid::new(cfg.n_cells)?;
    let n_steps = cfg.n_steps();
    let state0 = initial_state(&grid, u0, v0, &cfg.scheme);

    // Resolve snapshot requests to step indices (first step at or after
    // the requested time), deduplicated.
    let mut wanted: Vec<(usize, f64)> = cfg
        .snapshot_times
        .iter()
        .map(|&t| {
            let step = ((t / cfg.dt).ceil() - 1e-9).ceil().max(0.0) as usize;
            (step.min(n_steps), t)
        })
        .collect();
    wanted.sort_by(|a, b| a.0.cmp(&b.0));
    wanted.dedup_by_key(|p| p.0);

    let mut snapshots = Vec::new();
    let mut diagnostics = Vec::new();
    let delta = cfg.scheme.delta;
    let params = cfg.scheme.params;

    diagnostics.push(diagnostics::record(0.0, &state0, &grid, &params, delta, 0));
    for &(step, req_t) in wanted.iter().filter(|(s, _)| *s == 0) {
        snapshots.push(Snapshot {
            requested_t: req_t,
            t: 0.0,
            step,
            state: state0.clone(),
        });
    }

    let mut prev2 = state0.clone();
    let mut prev = state0;
    for step in 1..=n_steps {
        let t = step as f64 * cfg.dt;
        let solved = if step == 1 {
            solve_first_step(&prev, &grid, cfg.dt, &cfg.scheme, &cfg.newton)
        } else {
            let history = History {
                prev: prev.clone(),
                prev2: prev2.clone(),
                step_index: step,
            };
            solve_bdf2_step(&history, &grid, cfg.dt, &cfg.scheme, &cfg.newton)
        };
        let (state, report) = solved.map_err(|source| HarnessError::Step { step, t, source })?;

        let record_now = step == n_steps || (cfg.diag_every > 0 && step % cfg.diag_every == 0);
        if record_now {
            diagnostics.push(diagnostics::record(
                t,
                &state,
                &grid,
                &params,
                delta,
                report.iterations,
            ));
        }
        for &(s, req_t) in wanted.iter().filter(|(s, _)| *s == step) {
            snapshots.push(Snapshot {
                requested_t: req_t,
                t,
                step: s,
                state: state.clone(),
            });
        }

        prev2 = std::mem::replace(&mut prev, state);
    }

    Ok(RunResult {
        grid,
        snapshots,
        diagnostics,
        final_state: prev,
        steps: n_steps,
    })
}

/// Observed order per refinement pair: log(e_j / e_{j+1}) / log(ratio).
pub fn observed_orders(errors: &[f64], refinement_ratio: f64) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).ln() / refinement_ratio.ln())
        .collect()
}

/// Errors against a reference solution under refinement, plus pairwise
/// observed orders (one fewer than the errors).
#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    /// Cells for spatial studies, time step size for temporal studies.
    pub resolutions: Vec<f64>,
    pub errors_u: Vec<f64>,
    pub errors_v: Vec<f64>,
    pub observed_orders_u: Vec<f64>,
    pub observed_orders_v: Vec<f64>,
}

impl ConvergenceResult {
    pub fn mean_order_u(&self) -> f64 {
        mean(&self.observed_orders_u)
    }

    pub fn mean_order_v(&self) -> f64 {
        mean(&self.observed_orders_v)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone)]
pub struct SpaceStudyConfig {
    pub case: TestCase,
    pub scheme: SchemeConfig,
    pub newton: NewtonConfig,
    /// Shared time step isolating the spatial error.
    pub dt: f64,
    pub t_end: f64,
    pub reference_cells: usize,
    /// Coarse meshes of 2^j cells.
    pub exponents: Vec<u32>,
    pub cache_dir: Option<PathBuf>,
}

impl SpaceStudyConfig {
    pub fn case4() -> Result<Self, HarnessError> {
        let case = test_case(4)?;
        Ok(Self {
            case,
            scheme: SchemeConfig::new(default_scaled()),
            newton: NewtonConfig::default(),
            dt: case.dt,
            t_end: case.t_end,
            reference_cells: case.n_cells,
            exponents: (4..=10).collect(),
            cache_dir: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TimeStudyConfig {
    pub case: TestCase,
    pub scheme: SchemeConfig,
    pub newton: NewtonConfig,
    pub n_cells: usize,
    pub t_end: f64,
    pub reference_dt: f64,
    pub study_dts: Vec<f64>,
    pub cache_dir: Option<PathBuf>,
}

impl TimeStudyConfig {
    pub fn case5() -> Result<Self, HarnessError> {
        let case = test_case(5)?;
        let cells = case.n_cells as f64;
        Ok(Self {
            case,
            scheme: SchemeConfig::new(default_scaled()),
            newton: NewtonConfig::default(),
            n_cells: case.n_cells,
            t_end: case.t_end,
            reference_dt: case.dt,
            study_dts: (1..=6)
                .map(|j| 1.0 / ((1u64 << (2 * j)) as f64 * cells))
                .collect(),
            cache_dir: None,
        })
    }
}

fn run_to_final(
    case: &TestCase,
    scheme: &SchemeConfig,
    newton: &NewtonConfig,
    n_cells: usize,
    dt: f64,
    t_end: f64,
) -> Result<State, HarnessError> {
    let cfg = RunConfig {
        scheme: scheme.clone(),
        newton: newton.clone(),
        n_cells,
        dt,
        t_end,
        snapshot_times: Vec::new(),
        diag_every: 0,
    };
    Ok(run(case.initial_u, case.initial_v, &cfg)?.final_state)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn reference_key(
    case: &TestCase,
    scheme: &SchemeConfig,
    newton: &NewtonConfig,
    n_cells: usize,
    dt: f64,
    t_end: f64,
) -> u64 {
    let p = &scheme.params;
    let text = format!(
        "refcache-v1|case={}|model={:?}|treatment={:?}|delta={:.17e}|gamma={}|\
         d0={:.17e}|m0={:.17e}|rc0={:.17e}|rp0={:.17e}|k={:.17e}|g1={:.17e}|g2={:.17e}|\
         n={:.17e}|lambda={:.17e}|kt={:.17e}|cells={}|dt={:.17e}|t={:.17e}|\
         atol={:.17e}|rtol={:.17e}|iters={}",
        case.id,
        scheme.model,
        scheme.treatment,
        scheme.delta,
        scheme.include_gamma_factors,
        p.d0,
        p.m0,
        p.rc0,
        p.rp0,
        p.k,
        p.gamma1_0,
        p.gamma2_0,
        p.polymerization_index,
        p.flory_huggins,
        p.half_saturation_variant,
        n_cells,
        dt,
        t_end,
        newton.abs_tol,
        newton.rel_tol,
        newton.max_iters,
    );
    fnv1a64(text.as_bytes())
}

fn save_state(path: &Path, state: &State) {
    let mut text = String::with_capacity(state.n_cells() * 80);
    text.push_str(&format!("{}\n", state.n_cells()));
    for i in 0..state.n_cells() {
        text.push_str(&format!(
            "{:.16e} {:.16e} {:.16e}\n",
            state.v[i], state.u[i], state.mu[i]
        ));
    }
    // Best effort: the cache only avoids recomputation.
    let _ = std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")));
    let _ = std::fs::write(path, text);
}

fn load_state(path: &Path) -> Option<State> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let n: usize = lines.next()?.trim().parse().ok()?;
    let mut state = State {
        v: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        mu: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let line = lines.next()?;
        let mut cols = line.split_whitespace();
        state.v.push(cols.next()?.parse().ok()?);
        state.u.push(cols.next()?.parse().ok()?);
        state.mu.push(cols.next()?.parse().ok()?);
    }
    (state.n_cells() == n).then_some(state)
}

#[allow(clippy::too_many_arguments)]
fn reference_solution(
    case: &TestCase,
    scheme: &SchemeConfig,
    newton: &NewtonConfig,
    n_cells: usize,
    dt: f64,
    t_end: f64,
    cache_dir: Option<&Path>,
) -> Result<State, HarnessError> {
    let path = cache_dir.map(|dir| {
        dir.join(format!(
            "ref-{:016x}.txt",
            reference_key(case, scheme, newton, n_cells, dt, t_end)
        ))
    });
    if let Some(p) = &path {
        if let Some(state) = load_state(p) {
            if state.n_cells() == n_cells {
                return Ok(state);
            }
        }
    }
    let state = run_to_final(case, scheme, newton, n_cells, dt, t_end)?;
    if let Some(p) = &path {
        save_state(p, &state);
    }
    Ok(state)
}

/// Run study members on their own threads and collect in index order.
fn run_members<F>(count: usize, member: F) -> Vec<Result<State, HarnessError>>
where
    F: Fn(usize) -> Result<State, HarnessError> + Sync,
{
    let mut results: Vec<Option<Result<State, HarnessError>>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (idx, slot) in results.iter_mut().enumerate() {
            let member = &member;
            handles.push(scope.spawn(move || {
                *slot = Some(member(idx));
            }));
        }
    });
    results.into_iter().map(|r| r.expect("member ran")).collect()
}

/// Spatial convergence study: L2 errors of the restricted reference
/// against each coarse run at the final time.
pub fn convergence_space(cfg: &SpaceStudyConfig) -> Result<ConvergenceResult, HarnessError> {
    let reference = reference_solution(
        &cfg.case,
        &cfg.scheme,
        &cfg.newton,
        cfg.reference_cells,
        cfg.dt,
        cfg.t_end,
        cfg.cache_dir.as_deref(),
    )?;

    let finals = run_members(cfg.exponents.len(), |idx| {
        let cells = 1usize << cfg.exponents[idx];
        run_to_final(&cfg.case, &cfg.scheme, &cfg.newton, cells, cfg.dt, cfg.t_end)
    });

    let mut resolutions = Vec::new();
    let mut errors_u = Vec::new();
    let mut errors_v = Vec::new();
    for (idx, final_state) in finals.into_iter().enumerate() {
        let state = final_state?;
        let cells = 1usize << cfg.exponents[idx];
        let dx = 1.0 / cells as f64;
        let ref_u = diagnostics::restrict(&reference.u, cells)?;
        let ref_v = diagnostics::restrict(&reference.v, cells)?;
        resolutions.push(cells as f64);
        errors_u.push(diagnostics::l2_distance(&ref_u, &state.u, dx)?);
        errors_v.push(diagnostics::l2_distance(&ref_v, &state.v, dx)?);
    }

    Ok(ConvergenceResult {
        observed_orders_u: observed_orders(&errors_u, 2.0),
        observed_orders_v: observed_orders(&errors_v, 2.0),
        resolutions,
        errors_u,
        errors_v,
    })
}

/// Temporal convergence study on a fixed mesh against a fine-step
/// reference.
pub fn convergence_time(cfg: &TimeStudyConfig) -> Result<ConvergenceResult, HarnessError> {
    let reference = reference_solution(
        &cfg.case,
        &cfg.scheme,
        &cfg.newton,
        cfg.n_cells,
        cfg.reference_dt,
        cfg.t_end,
        cfg.cache_dir.as_deref(),
    )?;

    let finals = run_members(cfg.study_dts.len(), |idx| {
        run_to_final(
            &cfg.case,
            &cfg.scheme,
            &cfg.newton,
            cfg.n_cells,
            cfg.study_dts[idx],
            cfg.t_end,
        )
    });

    let dx = 1.0 / cfg.n_cells as f64;
    let mut errors_u = Vec::new();
    let mut errors_v = Vec::new();
    for final_state in finals {
        let state = final_state?;
        errors_u.push(diagnostics::l2_distance(&reference.u, &state.u, dx)?);
        errors_v.push(diagnostics::l2_distance(&reference.v, &state.v, dx)?);
    }

    // Successive study steps shrink by a fixed factor.
    let ratio = if cfg.study_dts.len() >= 2 {
        cfg.study_dts[0] / cfg.study_dts[1]
    } else {
        2.0
    };

    Ok(ConvergenceResult {
        observed_orders_u: observed_orders(&errors_u, ratio),
        observed_orders_v: observed_orders(&errors_v, ratio),
        resolutions: cfg.study_dts.clone(),
        errors_u,
        errors_v,
    })
}

/// Paired trajectories of the two models from identical initial data.
#[derive(Debug)]
pub struct ModelComparison {
    pub this_paper: RunResult,
    pub variant: RunResult,
    pub snapshot_times: Vec<f64>,
    pub snapshot_l2_u: Vec<f64>,
    pub snapshot_l2_v: Vec<f64>,
}

/// Run both models with identical grids, steps, and initial data.
pub fn compare_models(
    u0: impl Fn(f64) -> f64 + Copy,
    v0: impl Fn(f64) -> f64 + Copy,
    cfg: &RunConfig,
) -> Result<ModelComparison, HarnessError> {
    let mut cfg_tp = cfg.clone();
    cfg_tp.scheme.model = ModelKind::ThisPaper;
    let mut cfg_wz = cfg.clone();
    cfg_wz.scheme.model = ModelKind::WangZhang;

    let this_paper = run(u0, v0, &cfg_tp)?;
    let variant = run(u0, v0, &cfg_wz)?;

    let dx = this_paper.grid.dx();
    let mut snapshot_times = Vec::new();
    let mut snapshot_l2_u = Vec::new();
    let mut snapshot_l2_v = Vec::new();
    for (a, b) in this_paper.snapshots.iter().zip(&variant.snapshots) {
        snapshot_times.push(a.t);
        snapshot_l2_u.push(diagnostics::l2_distance(&a.state.u, &b.state.u, dx)?);
        snapshot_l2_v.push(diagnostics::l2_distance(&a.state.v, &b.state.v, dx)?);
    }

    Ok(ModelComparison {
        this_paper,
        variant,
        snapshot_times,
        snapshot_l2_u,
        snapshot_l2_v,
    })
}
