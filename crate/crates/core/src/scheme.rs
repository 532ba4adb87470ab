//! Fully discrete residual of the BDF2 finite-volume scheme on (0, 1).
//!
//! Unknowns per cell are (v, u, mu): substrate concentration, biomass
//! volume fraction, and chemical potential. Time stepping is BDF2 with an
//! implicit-Euler startup step; reactions are implicit, the potential is
//! evaluated at the second-order extrapolation u_bar = 2 u^{k-1} - u^{k-2},
//! and the flux coefficients are taken either at u_bar (default) or at the
//! current iterate. All three flux families carry zero flux through the
//! domain boundary faces.

use crate::params::ScaledParams;
use crate::potential::{diffusivity_plus, mobility, mobility_truncated, PotentialParams};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SchemeError {
    #[error("grid must have at least one cell")]
    EmptyGrid,
    #[error("state arrays must all have length {expected}; got v={v}, u={u}, mu={mu}")]
    LengthMismatch {
        expected: usize,
        v: usize,
        u: usize,
        mu: usize,
    },
    #[error("residual component {component} in cell {cell} is not finite")]
    NonFinite { cell: usize, component: &'static str },
    #[error("regularization delta must lie in (0, 1/2), got {0}")]
    BadDelta(f64),
}

/// Uniform finite-volume mesh of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n_cells: usize,
    dx: f64,
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self, SchemeError> {
        if n_cells == 0 {
            return Err(SchemeError::EmptyGrid);
        }
        Ok(Self {
            n_cells,
            dx: 1.0 / n_cells as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Center of cell i: x_i = (i + 1/2) dx.
    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.cell_center(i)).collect()
    }
}

/// Per-cell fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub mu: Vec<f64>,
}

impl State {
    pub fn constant(n_cells: usize, v: f64, u: f64, mu: f64) -> Self {
        Self {
            v: vec![v; n_cells],
            u: vec![u; n_cells],
            mu: vec![mu; n_cells],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.u.len()
    }

    pub fn check_lengths(&self, expected: usize) -> Result<(), SchemeError> {
        if self.v.len() != expected || self.u.len() != expected || self.mu.len() != expected {
            return Err(SchemeError::LengthMismatch {
                expected,
                v: self.v.len(),
                u: self.u.len(),
                mu: self.mu.len(),
            });
        }
        Ok(())
    }

    /// Subtract an interleaved (v, u, mu) increment, as produced by the
    /// linear solve of a Newton step.
    pub fn apply_newton_step(&mut self, step: &[f64]) {
        debug_assert_eq!(step.len(), 3 * self.n_cells());
        for i in 0..self.n_cells() {
            self.v[i] -= step[3 * i];
            self.u[i] -= step[3 * i + 1];
            self.mu[i] -= step[3 * i + 2];
        }
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        let mut m: f64 = 0.0;
        for (a, b) in self
            .v
            .iter()
            .chain(self.u.iter())
            .chain(self.mu.iter())
            .zip(other.v.iter().chain(other.u.iter()).chain(other.mu.iter()))
        {
            m = m.max((a - b).abs());
        }
        m
    }
}

/// Two prior time levels feeding the BDF2 combination.
#[derive(Debug, Clone)]
pub struct History {
    /// Level k-1.
    pub prev: State,
    /// Level k-2.
    pub prev2: State,
    /// Index k of the step being computed.
    pub step_index: usize,
}

/// Which discrete model the residual assembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Reaction terms carry the volume-filling factor u(1-u) and the
    /// substrate time derivative acts on v directly.
    ThisPaper,
    /// Two-phase variant: substrate time derivative acts on w = (1-u)v,
    /// Monod consumption, and mobility without the 1-u factor.
    WangZhang,
}

/// Where the u-arguments of the flux coefficients are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientTreatment {
    /// Coefficients at face averages of the extrapolated u_bar.
    Extrapolated,
    /// Coefficients at face averages of the current Newton iterate.
    Implicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub model: ModelKind,
    pub treatment: CoefficientTreatment,
    /// Regularization parameter for in-scheme potential evaluation.
    pub delta: f64,
    /// Apply the gradient/mixing energy coefficients in the flux H and
    /// the potential term. When false, both coefficients are 1.
    pub include_gamma_factors: bool,
    pub params: ScaledParams,
}

impl SchemeConfig {
    pub fn new(params: ScaledParams) -> Self {
        Self {
            model: ModelKind::ThisPaper,
            treatment: CoefficientTreatment::Extrapolated,
            delta: 1e-8,
            include_gamma_factors: true,
            params,
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(SchemeError::BadDelta(self.delta));
        }
        Ok(())
    }

    pub fn gamma1(&self) -> f64 {
        if self.include_gamma_factors {
            self.params.gamma1_0
        } else {
            1.0
        }
    }

    pub fn gamma2(&self) -> f64 {
        if self.include_gamma_factors {
            self.params.gamma2_0
        } else {
            1.0
        }
    }

    pub fn potential(&self) -> PotentialParams {
        PotentialParams::new(
            self.params.polymerization_index,
            self.params.flory_huggins,
            self.delta,
        )
        .expect("scheme config validated")
    }
}

/// Second-order time extrapolation of the volume fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolatedState {
    pub u_bar: Vec<f64>,
}

/// u_bar = 2 u^{k-1} - u^{k-2} for k >= 2; the startup step uses u^0.
pub fn extrapolate(history: &History) -> ExtrapolatedState {
    if history.step_index < 2 {
        return ExtrapolatedState {
            u_bar: history.prev.u.clone(),
        };
    }
    let u_bar = history
        .prev
        .u
        .iter()
        .zip(&history.prev2.u)
        .map(|(a, b)| 2.0 * a - b)
        .collect();
    ExtrapolatedState { u_bar }
}

/// Substrate flux through a face: -D0 D_+(u_face) (v_R - v_L)/dx.
pub fn flux_g(u_face: f64, v_left: f64, v_right: f64, dx: f64, d0: f64) -> f64 {
    -d0 * diffusivity_plus(u_face) * (v_right - v_left) / dx
}

/// Biomass flux through a face with an explicit coefficient value.
pub(crate) fn flux_f_coeff(coeff: f64, mu_left: f64, mu_right: f64, dx: f64, m0: f64) -> f64 {
    -m0 * coeff * (mu_right - mu_left) / dx
}

/// Biomass flux through a face: -M0 u_face (1 - u_face) (mu_R - mu_L)/dx.
pub fn flux_f(u_face: f64, mu_left: f64, mu_right: f64, dx: f64, m0: f64) -> f64 {
    flux_f_coeff(mobility(u_face), mu_left, mu_right, dx, m0)
}

/// Gradient flux through a face: -gamma1 (u_R - u_L)/dx.
pub fn flux_h(u_left: f64, u_right: f64, dx: f64, gamma1: f64) -> f64 {
    -gamma1 * (u_right - u_left) / dx
}

/// Mobility coefficient actually used inside the residual, kept
/// well-defined for iterates that leave the unit interval.
pub(crate) fn face_mobility(u_face: f64, model: ModelKind, delta: f64) -> f64 {
    match model {
        ModelKind::ThisPaper => mobility_truncated(u_face, delta),
        // No truncation is prescribed for the variant model; clamping at
        // zero keeps the flux dissipative for transient iterates.
        ModelKind::WangZhang => u_face.max(0.0),
    }
}

pub(crate) fn face_mobility_deriv(u_face: f64, model: ModelKind, delta: f64) -> f64 {
    match model {
        ModelKind::ThisPaper => {
            if u_face > delta && u_face < 1.0 - delta {
                1.0 - 2.0 * u_face
            } else {
                0.0
            }
        }
        ModelKind::WangZhang => {
            if u_face > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub(crate) fn face_diffusivity_deriv(u_face: f64) -> f64 {
    if u_face > 0.0 && u_face < 1.0 {
        -1.0
    } else {
        0.0
    }
}

/// All data of one nonlinear per-step system except the candidate state.
pub(crate) struct StepSystem<'a> {
    pub grid: &'a Grid,
    pub config: &'a SchemeConfig,
    pub u_bar: &'a [f64],
    /// dx/dt.
    pub scale: f64,
    /// Lead coefficient of the candidate in the time term: 3/2 for BDF2,
    /// 1 for the implicit-Euler startup.
    pub lead: f64,
    /// Known history combination for v (same lead convention).
    pub hist_v: Vec<f64>,
    /// Known history combination for u.
    pub hist_u: Vec<f64>,
    /// Known history combination for w = (1-u)v (variant model only).
    pub hist_w: Vec<f64>,
    pub potential: PotentialParams,
}

fn bdf2_combo(prev: &[f64], prev2: &[f64]) -> Vec<f64> {
    prev.iter()
        .zip(prev2)
        .map(|(a, b)| (4.0 * a - b) / 2.0)
        .collect()
}

impl<'a> StepSystem<'a> {
    pub fn bdf2(
        history: &'a History,
        u_bar: &'a ExtrapolatedState,
        grid: &'a Grid,
        dt: f64,
        config: &'a SchemeConfig,
    ) -> Result<Self, SchemeError> {
        config.validate()?;
        let n = grid.n_cells();
        history.prev.check_lengths(n)?;
        history.prev2.check_lengths(n)?;
        let w_prev: Vec<f64> = history
            .prev
            .u
            .iter()
            .zip(&history.prev.v)
            .map(|(u, v)| (1.0 - u) * v)
            .collect();
        let w_prev2: Vec<f64> = history
            .prev2
            .u
            .iter()
            .zip(&history.prev2.v)
            .map(|(u, v)| (1.0 - u) * v)
            .collect();
        Ok(Self {
            grid,
            config,
            u_bar: &u_bar.u_bar,
            scale: grid.dx() / dt,
            lead: 1.5,
            hist_v: bdf2_combo(&history.prev.v, &history.prev2.v),
            hist_u: bdf2_combo(&history.prev.u, &history.prev2.u),
            hist_w: bdf2_combo(&w_prev, &w_prev2),
            potential: config.potential(),
        })
    }

    pub fn first_step(
        initial: &'a State,
        u_bar: &'a [f64],
        grid: &'a Grid,
        dt: f64,
        config: &'a SchemeConfig,
    ) -> Result<Self, SchemeError> {
        config.validate()?;
        let n = grid.n_cells();
        initial.check_lengths(n)?;
        let w0 = initial
            .u
            .iter()
            .zip(&initial.v)
            .map(|(u, v)| (1.0 - u) * v)
            .collect();
        Ok(Self {
            grid,
            config,
            u_bar,
            scale: grid.dx() / dt,
            lead: 1.0,
            hist_v: initial.v.clone(),
            hist_u: initial.u.clone(),
            hist_w: w0,
            potential: config.potential(),
        })
    }

    /// u-values feeding the flux coefficients at this iterate.
    fn coefficient_field<'b>(&'b self, candidate: &'b State) -> &'b [f64] {
        match self.config.treatment {
            CoefficientTreatment::Extrapolated => self.u_bar,
            CoefficientTreatment::Implicit => &candidate.u,
        }
    }

    /// Face averages of the coefficient field on the n-1 interior faces.
    pub fn face_values(&self, candidate: &State) -> Vec<f64> {
        let c = self.coefficient_field(candidate);
        c.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn residual(&self, candidate: &State) -> Result<Vec<f64>, SchemeError> {
        let n = self.grid.n_cells();
        candidate.check_lengths(n)?;
        let p = &self.config.params;
        let dx = self.grid.dx();
        let gamma1 = self.config.gamma1();
        let gamma2 = self.config.gamma2();
        let faces = self.face_values(candidate);

        // Interior fluxes; boundary faces carry zero flux.
        let mut flux_v = vec![0.0; n + 1];
        let mut flux_u = vec![0.0; n + 1];
        let mut flux_grad = vec![0.0; n + 1];
        for j in 0..n.saturating_sub(1) {
            let uf = faces[j];
            flux_v[j + 1] = flux_g(uf, candidate.v[j], candidate.v[j + 1], dx, p.d0);
            let coeff = face_mobility(uf, self.config.model, self.config.delta);
            flux_u[j + 1] = flux_f_coeff(coeff, candidate.mu[j], candidate.mu[j + 1], dx, p.m0);
            flux_grad[j + 1] = flux_h(candidate.u[j], candidate.u[j + 1], dx, gamma1);
        }

        let mut res = vec![0.0; 3 * n];
        for i in 0..n {
            let v = candidate.v[i];
            let u = candidate.u[i];
            let mu = candidate.mu[i];

            let time_v = match self.config.model {
                ModelKind::ThisPaper => self.scale * (self.lead * v - self.hist_v[i]),
                ModelKind::WangZhang => {
                    self.scale * (self.lead * (1.0 - u) * v - self.hist_w[i])
                }
            };
            let consumption = match self.config.model {
                ModelKind::ThisPaper => dx * p.rc0 * u * v,
                ModelKind::WangZhang => {
                    dx * p.rc0 * u * v / (p.half_saturation_variant + v)
                }
            };
            res[3 * i] = time_v + flux_v[i + 1] - flux_v[i] + consumption;

            let time_u = self.scale * (self.lead * u - self.hist_u[i]);
            let production = match self.config.model {
                ModelKind::ThisPaper => dx * p.rp0 * u * (1.0 - u) * v / (p.k + v),
                ModelKind::WangZhang => dx * p.rp0 * u * v / (p.k + v),
            };
            res[3 * i + 1] = time_u + flux_u[i + 1] - flux_u[i] - production;

            res[3 * i + 2] = flux_grad[i + 1] - flux_grad[i]
                + dx * gamma2 * self.potential.regularized_prime(self.u_bar[i])
                - dx * mu;
        }

        for i in 0..n {
            for (c, name) in [(0, "v"), (1, "u"), (2, "mu")] {
                if !res[3 * i + c].is_finite() {
                    return Err(SchemeError::NonFinite {
                        cell: i,
                        component: name,
                    });
                }
            }
        }
        Ok(res)
    }
}

/// BDF2 residual of the default model; `config.model` is overridden.
pub fn residual_this_paper(
    candidate: &State,
    history: &History,
    u_bar: &ExtrapolatedState,
    grid: &Grid,
    dt: f64,
    config: &SchemeConfig,
) -> Result<Vec<f64>, SchemeError> {
    let mut cfg = config.clone();
    cfg.model = ModelKind::ThisPaper;
    let sys = StepSystem::bdf2(history, u_bar, grid, dt, &cfg)?;
    sys.residual(candidate)
}

/// BDF2 residual of the two-phase variant model; `config.model` is
/// overridden.
pub fn residual_wang_zhang(
    candidate: &State,
    history: &History,
    u_bar: &ExtrapolatedState,
    grid: &Grid,
    dt: f64,
    config: &SchemeConfig,
) -> Result<Vec<f64>, SchemeError> {
    let mut cfg = config.clone();
    cfg.model = ModelKind::WangZhang;
    let sys = StepSystem::bdf2(history, u_bar, grid, dt, &cfg)?;
    sys.residual(candidate)
}

/// BDF2 residual dispatching on `config.model`.
pub fn residual_bdf2(
    candidate: &State,
    history: &History,
    u_bar: &ExtrapolatedState,
    grid: &Grid,
    dt: f64,
    config: &SchemeConfig,
) -> Result<Vec<f64>, SchemeError> {
    let sys = StepSystem::bdf2(history, u_bar, grid, dt, config)?;
    sys.residual(candidate)
}

/// Implicit-Euler startup residual; u_bar is the initial volume fraction.
pub fn residual_first_step(
    candidate: &State,
    initial: &State,
    grid: &Grid,
    dt: f64,
    config: &SchemeConfig,
) -> Result<Vec<f64>, SchemeError> {
    let sys = StepSystem::first_step(initial, &initial.u, grid, dt, config)?;
    sys.residual(candidate)
}

/// Chemical potential consistent with a given volume fraction field:
/// mu_i = gamma2 f_delta'(u_i) - gamma1 (discrete Neumann Laplacian u)_i.
pub fn chemical_potential_of(u: &[f64], grid: &Grid, config: &SchemeConfig) -> Vec<f64> {
    let n = grid.n_cells();
    assert_eq!(u.len(), n);
    let dx = grid.dx();
    let gamma1 = config.gamma1();
    let gamma2 = config.gamma2();
    let potential = config.potential();
    (0..n)
        .map(|i| {
            let right = if i + 1 < n {
                flux_h(u[i], u[i + 1], dx, gamma1)
            } else {
                0.0
            };
            let left = if i > 0 {
                flux_h(u[i - 1], u[i], dx, gamma1)
            } else {
                0.0
            };
            gamma2 * potential.regularized_prime(u[i]) + (right - left) / dx
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_scaled;

    fn config() -> SchemeConfig {
        SchemeConfig::new(default_scaled())
    }

    fn constant_history(n: usize, v: f64, u: f64, mu: f64) -> History {
        History {
            prev: State::constant(n, v, u, mu),
            prev2: State::constant(n, v, u, mu),
            step_index: 2,
        }
    }

    #[test]
    fn grid_basics() {
        let g = Grid::new(4).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.cell_center(0), 0.125);
        assert_eq!(g.cell_center(3), 0.875);
        assert!(Grid::new(0).is_err());
    }

    #[test]
    fn extrapolation_constant_fixed_point() {
        let h = constant_history(3, 0.1, 0.4, 0.0);
        assert_eq!(extrapolate(&h).u_bar, vec![0.4; 3]);
    }

    #[test]
    fn extrapolation_arithmetic() {
        let h = History {
            prev: State::constant(1, 0.0, 2.0, 0.0),
            prev2: State::constant(1, 0.0, 1.0, 0.0),
            step_index: 5,
        };
        assert_eq!(extrapolate(&h).u_bar, vec![3.0]);
    }

    #[test]
    fn extrapolation_exact_on_linear_data() {
        // u(t) = a + b t sampled at t_{k-1}, t_{k-2} extrapolates exactly
        // to t_k.
        let (a, b, dt) = (0.3, 0.05, 0.1);
        let t = |k: f64| a + b * k * dt;
        let h = History {
            prev: State::constant(2, 0.0, t(4.0), 0.0),
            prev2: State::constant(2, 0.0, t(3.0), 0.0),
            step_index: 5,
        };
        let ex = extrapolate(&h);
        assert!((ex.u_bar[0] - t(5.0)).abs() < 1e-15);
    }

    #[test]
    fn extrapolation_startup_uses_initial() {
        let h = History {
            prev: State::constant(2, 0.0, 0.7, 0.0),
            prev2: State::constant(2, 0.0, 0.1, 0.0),
            step_index: 1,
        };
        assert_eq!(extrapolate(&h).u_bar, vec![0.7; 2]);
    }

    #[test]
    fn flux_examples() {
        assert_eq!(flux_g(0.4, 0.2, 0.2, 0.1, 1.0), 0.0);
        assert_eq!(flux_g(1.0, 0.1, 0.9, 0.1, 1.0), 0.0);
        assert!((flux_g(0.5, 0.0, 0.1, 0.1, 1.0) + 0.5).abs() < 1e-15);

        assert_eq!(flux_f(0.5, 1.0, 1.0, 0.1, 1e-3), 0.0);
        assert_eq!(flux_f(0.0, 0.0, 1.0, 0.1, 1e-3), 0.0);
        assert_eq!(flux_f(1.0, 0.0, 1.0, 0.1, 1e-3), 0.0);
        assert!((flux_f(0.5, 0.0, 1.0, 0.5, 1e-3) + 5e-4).abs() < 1e-18);

        assert_eq!(flux_h(0.3, 0.3, 0.1, 0.1), 0.0);
        assert!((flux_h(0.0, 0.2, 0.1, 0.1) + 0.2).abs() < 1e-15);
        // Printed form without the gradient-energy coefficient.
        assert!((flux_h(0.0, 0.2, 0.1, 1.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_steady_state_has_zero_residual() {
        let n = 6;
        let grid = Grid::new(n).unwrap();
        let mut cfg = config();
        cfg.params.rc0 = 0.0;
        cfg.params.rp0 = 0.0;
        let c = 0.37;
        let mu = cfg.gamma2() * cfg.potential().regularized_prime(c);
        let state = State::constant(n, 0.5, c, mu);
        let h = History {
            prev: state.clone(),
            prev2: state.clone(),
            step_index: 2,
        };
        let ex = extrapolate(&h);
        for res in [
            residual_this_paper(&state, &h, &ex, &grid, 1e-3, &cfg).unwrap(),
            residual_wang_zhang(&state, &h, &ex, &grid, 1e-3, &cfg).unwrap(),
            residual_first_step(&state, &state, &grid, 1e-3, &cfg).unwrap(),
        ] {
            for r in res {
                assert!(r.abs() < 1e-13, "nonzero residual {r}");
            }
        }
    }

    #[test]
    fn u_rows_telescope_without_production() {
        let n = 8;
        let grid = Grid::new(n).unwrap();
        let mut cfg = config();
        cfg.params.rp0 = 0.0;
        let dt = 2e-3;
        let prev = State {
            v: (0..n).map(|i| 0.2 + 0.05 * i as f64 / n as f64).collect(),
            u: (0..n).map(|i| 0.3 + 0.02 * (i as f64).sin()).collect(),
            mu: (0..n).map(|i| 0.1 * i as f64).collect(),
        };
        let prev2 = State {
            v: prev.v.iter().map(|x| x * 0.9).collect(),
            u: prev.u.iter().map(|x| x * 0.95).collect(),
            mu: prev.mu.clone(),
        };
        let h = History {
            prev,
            prev2,
            step_index: 2,
        };
        let ex = extrapolate(&h);
        let cand = State {
            v: h.prev.v.iter().map(|x| x * 1.01).collect(),
            u: h.prev.u.iter().map(|x| x * 1.02).collect(),
            mu: h.prev.mu.iter().map(|x| x + 0.3).collect(),
        };
        let res = residual_this_paper(&cand, &h, &ex, &grid, dt, &cfg).unwrap();
        let sum_u_rows: f64 = (0..n).map(|i| res[3 * i + 1]).sum();
        let expected: f64 = (0..n)
            .map(|i| {
                grid.dx() / (2.0 * dt)
                    * (3.0 * cand.u[i] - 4.0 * h.prev.u[i] + h.prev2.u[i])
            })
            .sum();
        assert!((sum_u_rows - expected).abs() < 1e-13);
    }

    #[test]
    fn variant_reduces_to_plain_substrate_diffusion_at_zero_u() {
        let n = 5;
        let grid = Grid::new(n).unwrap();
        let cfg = config();
        let v: Vec<f64> = (0..n).map(|i| 0.1 + 0.1 * i as f64).collect();
        let mk_state = |v: &Vec<f64>| State {
            v: v.clone(),
            u: vec![0.0; n],
            mu: vec![0.0; n],
        };
        let h = History {
            prev: mk_state(&v),
            prev2: mk_state(&v.iter().map(|x| x * 0.8).collect()),
            step_index: 2,
        };
        let ex = extrapolate(&h);
        let cand = mk_state(&v.iter().map(|x| x * 1.1).collect());
        let wz = residual_wang_zhang(&cand, &h, &ex, &grid, 1e-3, &cfg).unwrap();
        let tp = residual_this_paper(&cand, &h, &ex, &grid, 1e-3, &cfg).unwrap();
        for i in 0..n {
            // w = v at u = 0 and both consumption terms vanish.
            assert!((wz[3 * i] - tp[3 * i]).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_is_symmetric_for_symmetric_data() {
        let n = 10;
        let grid = Grid::new(n).unwrap();
        let cfg = config();
        let sym = |f: fn(f64) -> f64| -> Vec<f64> {
            (0..n).map(|i| f(grid.cell_center(i))).collect()
        };
        let u0 = sym(|x| 0.3 + 0.1 * (2.0 * std::f64::consts::PI * x).sin().powi(2));
        let v0 = sym(|x| 0.5 + 0.2 * (x - 0.5).powi(2));
        let state = State {
            v: v0,
            u: u0.clone(),
            mu: chemical_potential_of(&u0, &grid, &cfg),
        };
        let h = History {
            prev: state.clone(),
            prev2: state.clone(),
            step_index: 2,
        };
        let ex = extrapolate(&h);
        let cand = state.clone();
        let res = residual_this_paper(&cand, &h, &ex, &grid, 1e-3, &cfg).unwrap();
        for i in 0..n {
            let j = n - 1 - i;
            for c in 0..3 {
                assert!(
                    (res[3 * i + c] - res[3 * j + c]).abs() < 1e-12,
                    "asymmetry in component {c} between cells {i} and {j}"
                );
            }
        }
    }

    #[test]
    fn nonfinite_entries_are_reported_with_cell_index() {
        let n = 4;
        let grid = Grid::new(n).unwrap();
        let cfg = config();
        let mut state = State::constant(n, 0.5, 0.3, 0.0);
        state.v[2] = f64::NAN;
        let h = History {
            prev: State::constant(n, 0.5, 0.3, 0.0),
            prev2: State::constant(n, 0.5, 0.3, 0.0),
            step_index: 2,
        };
        let ex = extrapolate(&h);
        let err = residual_this_paper(&state, &h, &ex, &grid, 1e-3, &cfg).unwrap_err();
        match err {
            SchemeError::NonFinite { cell, .. } => assert!(cell == 1 || cell == 2 || cell == 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn chemical_potential_of_constant_field() {
        let grid = Grid::new(5).unwrap();
        let cfg = config();
        let mu = chemical_potential_of(&vec![0.25; 5], &grid, &cfg);
        let expected = cfg.gamma2() * cfg.potential().regularized_prime(0.25);
        for m in mu {
            assert!((m - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = config();
        cfg.delta = 0.7;
        assert!(cfg.validate().is_err());
    }
}
