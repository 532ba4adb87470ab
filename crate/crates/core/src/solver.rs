//! Newton solver for the per-step nonlinear system with an analytic
//! block-tridiagonal Jacobian and a direct block Thomas solve.
//!
//! The stencil of the scheme is nearest-neighbor, so the Jacobian with
//! respect to the interleaved per-cell unknowns (v, u, mu) consists of
//! 3x3 blocks on three block diagonals.

use crate::scheme::{
    extrapolate, face_diffusivity_deriv, face_mobility, face_mobility_deriv, ExtrapolatedState,
    Grid, History, ModelKind, SchemeConfig, SchemeError, State, StepSystem,
};
use crate::potential::diffusivity_plus;
use thiserror::Error;

pub type Block = [[f64; 3]; 3];

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("singular pivot block at cell {block}")]
    SingularBlock { block: usize },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(
        "Newton did not converge after {} iterations (residual max-norm {:.3e})",
        report.iterations,
        report.final_residual_norm
    )]
    DidNotConverge { report: NewtonReport },
    #[error("line search could not produce a finite residual at iteration {iteration}")]
    LineSearchFailed { iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    None,
    /// Backtracking with the given step-shrink factor and minimal step.
    Armijo { factor: f64, min_step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    /// Convergence threshold on the residual max-norm.
    pub abs_tol: f64,
    /// Alternative threshold relative to the initial residual norm.
    pub rel_tol: f64,
    pub max_iters: usize,
    pub damping: Damping,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_iters: 25,
            damping: Damping::Armijo {
                factor: 0.5,
                min_step: (2.0f64).powi(-10),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
    /// Residual max-norms: initial value followed by one entry per
    /// accepted iterate.
    pub residual_norms: Vec<f64>,
}

/// Sparse matrix with 3x3 blocks on the main, sub-, and super-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonalMatrix {
    n: usize,
    diag: Vec<Block>,
    /// lower[j] is block (j+1, j).
    lower: Vec<Block>,
    /// upper[j] is block (j, j+1).
    upper: Vec<Block>,
}

const ZERO_BLOCK: Block = [[0.0; 3]; 3];

fn mat_vec(m: &Block, x: &[f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for r in 0..3 {
        y[r] = m[r][0] * x[0] + m[r][1] * x[1] + m[r][2] * x[2];
    }
    y
}

fn mat_mul(a: &Block, b: &Block) -> Block {
    let mut c = ZERO_BLOCK;
    for r in 0..3 {
        for k in 0..3 {
            let s = a[r][k];
            if s != 0.0 {
                for col in 0..3 {
                    c[r][col] += s * b[k][col];
                }
            }
        }
    }
    c
}

/// Invert a 3x3 block by Gauss-Jordan with partial pivoting.
fn invert(m: &Block) -> Option<Block> {
    let mut a = *m;
    let mut inv: Block = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..3 {
        let mut piv = col;
        for r in col + 1..3 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < f64::MIN_POSITIVE {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for c in 0..3 {
            a[col][c] /= d;
            inv[col][c] /= d;
        }
        for r in 0..3 {
            if r != col {
                let factor = a[r][col];
                if factor != 0.0 {
                    for c in 0..3 {
                        a[r][c] -= factor * a[col][c];
                        inv[r][c] -= factor * inv[col][c];
                    }
                }
            }
        }
    }
    Some(inv)
}

impl BlockTridiagonalMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            diag: vec![ZERO_BLOCK; n],
            lower: vec![ZERO_BLOCK; n.saturating_sub(1)],
            upper: vec![ZERO_BLOCK; n.saturating_sub(1)],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn diag_mut(&mut self, i: usize) -> &mut Block {
        &mut self.diag[i]
    }

    pub fn lower_mut(&mut self, j: usize) -> &mut Block {
        &mut self.lower[j]
    }

    pub fn upper_mut(&mut self, j: usize) -> &mut Block {
        &mut self.upper[j]
    }

    /// Block at (row_cell, col_cell); None outside the stencil.
    pub fn block(&self, row_cell: usize, col_cell: usize) -> Option<&Block> {
        if row_cell == col_cell {
            self.diag.get(row_cell)
        } else if col_cell + 1 == row_cell {
            self.lower.get(col_cell)
        } else if row_cell + 1 == col_cell {
            self.upper.get(row_cell)
        } else {
            None
        }
    }

    /// Matrix-vector product with an interleaved vector of length 3n.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), 3 * self.n);
        let mut y = vec![0.0; 3 * self.n];
        let cell = |i: usize| -> [f64; 3] { [x[3 * i], x[3 * i + 1], x[3 * i + 2]] };
        for i in 0..self.n {
            let mut acc = mat_vec(&self.diag[i], &cell(i));
            if i > 0 {
                let t = mat_vec(&self.lower[i - 1], &cell(i - 1));
                for c in 0..3 {
                    acc[c] += t[c];
                }
            }
            if i + 1 < self.n {
                let t = mat_vec(&self.upper[i], &cell(i + 1));
                for c in 0..3 {
                    acc[c] += t[c];
                }
            }
            y[3 * i..3 * i + 3].copy_from_slice(&acc);
        }
        y
    }

    /// Direct solve by the block Thomas algorithm.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        solve_block_tridiagonal(self, rhs)
    }
}

/// Forward block elimination followed by backward substitution.
pub fn solve_block_tridiagonal(
    a: &BlockTridiagonalMatrix,
    rhs: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let n = a.n;
    assert_eq!(rhs.len(), 3 * n);
    let mut carry: Vec<Block> = Vec::with_capacity(n.saturating_sub(1));
    let mut y: Vec<[f64; 3]> = Vec::with_capacity(n);

    let mut m = a.diag[0];
    for i in 0..n {
        if i > 0 {
            let lw = mat_mul(&a.lower[i - 1], &carry[i - 1]);
            m = a.diag[i];
            for r in 0..3 {
                for c in 0..3 {
                    m[r][c] -= lw[r][c];
                }
            }
        }
        let inv = invert(&m).ok_or(SolverError::SingularBlock { block: i })?;
        if i + 1 < n {
            carry.push(mat_mul(&inv, &a.upper[i]));
        }
        let mut r = [rhs[3 * i], rhs[3 * i + 1], rhs[3 * i + 2]];
        if i > 0 {
            let t = mat_vec(&a.lower[i - 1], &y[i - 1]);
            for c in 0..3 {
                r[c] -= t[c];
            }
        }
        y.push(mat_vec(&inv, &r));
    }

    let mut x = vec![0.0; 3 * n];
    x[3 * (n - 1)..].copy_from_slice(&y[n - 1]);
    for i in (0..n - 1).rev() {
        let xn = [x[3 * (i + 1)], x[3 * (i + 1) + 1], x[3 * (i + 1) + 2]];
        let t = mat_vec(&carry[i], &xn);
        for c in 0..3 {
            x[3 * i + c] = y[i][c] - t[c];
        }
    }
    Ok(x)
}

/// Analytic Jacobian of the per-step residual at `candidate`.
pub(crate) fn jacobian_of(sys: &StepSystem, candidate: &State) -> BlockTridiagonalMatrix {
    let grid = sys.grid;
    let n = grid.n_cells();
    let dx = grid.dx();
    let p = &sys.config.params;
    let gamma1 = sys.config.gamma1();
    let scale = sys.scale;
    let lead = sys.lead;
    let implicit = sys.config.treatment == crate::scheme::CoefficientTreatment::Implicit;
    let model = sys.config.model;
    let faces = sys.face_values(candidate);

    let mut a = BlockTridiagonalMatrix::zeros(n);

    for i in 0..n {
        let v = candidate.v[i];
        let u = candidate.u[i];
        let d = a.diag_mut(i);
        match model {
            ModelKind::ThisPaper => {
                d[0][0] += scale * lead + dx * p.rc0 * u;
                d[0][1] += dx * p.rc0 * v;
                let kv = p.k + v;
                d[1][0] += -dx * p.rp0 * u * (1.0 - u) * p.k / (kv * kv);
                d[1][1] += scale * lead - dx * p.rp0 * (1.0 - 2.0 * u) * v / kv;
            }
            ModelKind::WangZhang => {
                let kt = p.half_saturation_variant;
                let ktv = kt + v;
                d[0][0] += scale * lead * (1.0 - u) + dx * p.rc0 * u * kt / (ktv * ktv);
                d[0][1] += -scale * lead * v + dx * p.rc0 * v / ktv;
                let kv = p.k + v;
                d[1][0] += -dx * p.rp0 * u * p.k / (kv * kv);
                d[1][1] += scale * lead - dx * p.rp0 * v / kv;
            }
        }
        d[2][2] -= dx;
    }

    for j in 0..n.saturating_sub(1) {
        let uf = faces[j];
        let ga = p.d0 * diffusivity_plus(uf) / dx;
        let gb = p.m0 * face_mobility(uf, model, sys.config.delta) / dx;
        let gh = gamma1 / dx;

        a.diag_mut(j)[0][0] += ga;
        a.upper_mut(j)[0][0] -= ga;
        a.diag_mut(j + 1)[0][0] += ga;
        a.lower_mut(j)[0][0] -= ga;

        a.diag_mut(j)[1][2] += gb;
        a.upper_mut(j)[1][2] -= gb;
        a.diag_mut(j + 1)[1][2] += gb;
        a.lower_mut(j)[1][2] -= gb;

        a.diag_mut(j)[2][1] += gh;
        a.upper_mut(j)[2][1] -= gh;
        a.diag_mut(j + 1)[2][1] += gh;
        a.lower_mut(j)[2][1] -= gh;

        if implicit {
            // Coefficient derivatives: each face average depends on the
            // two adjacent u values with weight 1/2.
            let dv = (candidate.v[j + 1] - candidate.v[j]) / dx;
            let dmu = (candidate.mu[j + 1] - candidate.mu[j]) / dx;
            let da = 0.5 * face_diffusivity_deriv(uf);
            let db = 0.5 * face_mobility_deriv(uf, model, sys.config.delta);
            let gva = -p.d0 * da * dv;
            a.diag_mut(j)[0][1] += gva;
            a.upper_mut(j)[0][1] += gva;
            a.diag_mut(j + 1)[0][1] -= gva;
            a.lower_mut(j)[0][1] -= gva;
            let fub = -p.m0 * db * dmu;
            a.diag_mut(j)[1][1] += fub;
            a.upper_mut(j)[1][1] += fub;
            a.diag_mut(j + 1)[1][1] -= fub;
            a.lower_mut(j)[1][1] -= fub;
        }
    }
    a
}

/// Jacobian of the BDF2 residual, dispatching on `config.model`.
pub fn assemble_jacobian(
    candidate: &State,
    history: &History,
    u_bar: &ExtrapolatedState,
    grid: &Grid,
    dt: f64,
    config: &SchemeConfig,
) -> Result<BlockTridiagonalMatrix, SchemeError> {
    let sys = StepSystem::bdf2(history, u_bar, grid, dt, config)?;
    candidate.check_lengths(grid.n_cells())?;
    Ok(jacobian_of(&sys, candidate))
}

/// Jacobian of the implicit-Euler startup residual.
pub fn assemble_jacobian_first_step(
    candidate: &State,
    initial: &State,
    grid: &Grid,
    dt: f64,
    config: &SchemeConfig,
) -> Result<BlockTridiagonalMatrix, SchemeError> {
    let sys = StepSystem::first_step(initial, &initial.u, grid, dt, config)?;
    candidate.check_lengths(grid.n_cells())?;
    Ok(jacobian_of(&sys, candidate))
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration on a residual/Jacobian pair.
///
/// The returned report carries the accepted residual norms; convergence
/// means the final max-norm is below `abs_tol` or has been reduced by
/// `rel_tol` relative to the initial one.
pub fn newton_solve<R, J>(
    initial_guess: &State,
    mut residual_fn: R,
    mut jacobian_fn: J,
    config: &NewtonConfig,
) -> Result<(State, NewtonReport), SolverError>
where
    R: FnMut(&State) -> Result<Vec<f64>, SchemeError>,
    J: FnMut(&State) -> Result<BlockTridiagonalMatrix, SchemeError>,
{
    let mut x = initial_guess.clone();
    let mut r = residual_fn(&x)?;
    let mut norm = max_norm(&r);
    let norm0 = norm;
    let mut norms = vec![norm];

    let converged = |norm: f64| norm <= config.abs_tol || norm <= config.rel_tol * norm0;

    if converged(norm) {
        return Ok((
            x,
            NewtonReport {
                iterations: 0,
                final_residual_norm: norm,
                converged: true,
                residual_norms: norms,
            },
        ));
    }

    for iteration in 1..=config.max_iters {
        let jac = jacobian_fn(&x)?;
        let step = jac.solve(&r)?;

        let mut lambda = 1.0;
        let (accepted, r_new, norm_new) = loop {
            let mut trial = x.clone();
            let scaled: Vec<f64> = step.iter().map(|s| lambda * s).collect();
            trial.apply_newton_step(&scaled);
            match residual_fn(&trial) {
                Ok(rt) => {
                    let nt = max_norm(&rt);
                    let sufficient = nt <= (1.0 - 1e-4 * lambda) * norm;
                    match config.damping {
                        Damping::None => break (trial, rt, nt),
                        Damping::Armijo { factor, min_step } => {
                            if sufficient || lambda * factor < min_step {
                                break (trial, rt, nt);
                            }
                            lambda *= factor;
                        }
                    }
                }
                Err(_) => match config.damping {
                    Damping::None => {
                        return Err(SolverError::LineSearchFailed { iteration });
                    }
                    Damping::Armijo { factor, min_step } => {
                        if lambda * factor < min_step {
                            return Err(SolverError::LineSearchFailed { iteration });
                        }
                        lambda *= factor;
                    }
                },
            }
        };

        x = accepted;
        r = r_new;
        norm = norm_new;
        norms.push(norm);

        if converged(norm) {
            return Ok((
                x,
                NewtonReport {
                    iterations: iteration,
                    final_residual_norm: norm,
                    converged: true,
                    residual_norms: norms,
                },
            ));
        }
    }

    Err(SolverError::DidNotConverge {
        report: NewtonReport {
            iterations: config.max_iters,
            final_residual_norm: norm,
            converged: false,
            residual_norms: norms,
        },
    })
}

/// Solve one BDF2 step. The Newton initial guess pairs the extrapolated
/// volume fraction with the previous substrate and potential fields.
pub fn solve_bdf2_step(
    history: &History,
    grid: &Grid,
    dt: f64,
    config: &SchemeConfig,
    newton: &NewtonConfig,
) -> Result<(State, NewtonReport), SolverError> {
    let u_bar = extrapolate(history);
    let sys = StepSystem::bdf2(history, &u_bar, grid, dt, config)?;
    let guess = State {
        v: history.prev.v.clone(),
        u: u_bar.u_bar.clone(),
        mu: history.prev.mu.clone(),
    };
    newton_solve(
        &guess,
        |x| sys.residual(x),
        |x| Ok(jacobian_of(&sys, x)),
        newton,
    )
}

/// Solve the implicit-Euler startup step from the initial state.
pub fn solve_first_step(
    initial: &State,
    grid: &Grid,
    dt: f64,
    config: &SchemeConfig,
    newton: &NewtonConfig,
) -> Result<(State, NewtonReport), SolverError> {
    let sys = StepSystem::first_step(initial, &initial.u, grid, dt, config)?;
    newton_solve(
        initial,
        |x| sys.residual(x),
        |x| Ok(jacobian_of(&sys, x)),
        newton,
    )
}
