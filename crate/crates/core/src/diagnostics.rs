//! Discrete energy, entropy, mass, and norm functionals.

use crate::params::ScaledParams;
use crate::potential::{entropy_density, entropy_density_truncated, PotentialParams, PotentialError};
use crate::scheme::{Grid, State};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("array length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("coarse cell count {coarse} does not divide fine cell count {fine}")]
    NonNesting { fine: usize, coarse: usize },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// One row of the diagnostics time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub energy: f64,
    pub entropy: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub newton_iters: usize,
}

/// Cell-average mass of a field: dx * sum.
pub fn mass(field: &[f64], grid: &Grid) -> f64 {
    grid.dx() * field.iter().sum::<f64>()
}

/// Discrete free energy: gradient part summed over interior faces plus
/// the regularized potential at cell centers,
/// sum_faces dx (gamma1/2) ((u_{i+1}-u_i)/dx)^2 + sum_cells dx gamma2 f_delta(u_i).
pub fn discrete_energy(state: &State, grid: &Grid, params: &ScaledParams, delta: f64) -> f64 {
    let potential =
        PotentialParams::new(params.polymerization_index, params.flory_huggins, delta)
            .expect("valid delta");
    let dx = grid.dx();
    let mut gradient = 0.0;
    for w in state.u.windows(2) {
        let slope = (w[1] - w[0]) / dx;
        gradient += dx * 0.5 * params.gamma1_0 * slope * slope;
    }
    let bulk: f64 = state
        .u
        .iter()
        .map(|&u| dx * params.gamma2_0 * potential.regularized(u))
        .sum();
    gradient + bulk
}

/// Discrete entropy: sum_cells dx Phi_delta(u_i). Nonnegative.
pub fn discrete_entropy(state: &State, grid: &Grid, delta: f64) -> f64 {
    state
        .u
        .iter()
        .map(|&u| grid.dx() * entropy_density_truncated(u, delta))
        .sum()
}

/// Discrete entropy with the unregularized density; requires u in [0, 1].
pub fn discrete_entropy_exact(state: &State, grid: &Grid) -> Result<f64, DiagnosticsError> {
    let mut total = 0.0;
    for &u in &state.u {
        total += grid.dx() * entropy_density(u)?;
    }
    Ok(total)
}

/// Discrete L2 distance sqrt(dx * sum (a_i - b_i)^2).
pub fn l2_distance(a: &[f64], b: &[f64], dx: f64) -> Result<f64, DiagnosticsError> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::LengthMismatch(a.len(), b.len()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((dx * sum).sqrt())
}

/// Extrema of the two physical fields.
pub fn linf_bounds(state: &State) -> (f64, f64, f64, f64) {
    let fold = |xs: &[f64]| {
        xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
    };
    let (min_u, max_u) = fold(&state.u);
    let (min_v, max_v) = fold(&state.v);
    (min_u, max_u, min_v, max_v)
}

/// Restrict a fine-grid field to a coarser nested grid by averaging the
/// children of each coarse cell.
pub fn restrict(fine: &[f64], coarse_cells: usize) -> Result<Vec<f64>, DiagnosticsError> {
    if coarse_cells == 0 || fine.len() % coarse_cells != 0 {
        return Err(DiagnosticsError::NonNesting {
            fine: fine.len(),
            coarse: coarse_cells,
        });
    }
    let ratio = fine.len() / coarse_cells;
    Ok(fine
        .chunks(ratio)
        .map(|chunk| chunk.iter().sum::<f64>() / ratio as f64)
        .collect())
}

/// Snapshot the full record for one accepted time step.
pub fn record(
    t: f64,
    state: &State,
    grid: &Grid,
    params: &ScaledParams,
    delta: f64,
    newton_iters: usize,
) -> DiagnosticsRecord {
    let (min_u, max_u, min_v, max_v) = linf_bounds(state);
    DiagnosticsRecord {
        t,
        mass_u: mass(&state.u, grid),
        mass_v: mass(&state.v, grid),
        energy: discrete_energy(state, grid, params, delta),
        entropy: discrete_entropy(state, grid, delta),
        min_u,
        max_u,
        min_v,
        max_v,
        newton_iters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_scaled;

    #[test]
    fn energy_of_constant_half_with_unit_mixing_coefficient() {
        let grid = Grid::new(8).unwrap();
        let mut p = default_scaled();
        p.polymerization_index = 1.0;
        p.flory_huggins = 0.0;
        p.gamma2_0 = 1.0;
        let state = State::constant(8, 0.0, 0.5, 0.0);
        let e = discrete_energy(&state, &grid, &p, 1e-8);
        assert!((e - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn energy_of_two_cell_ramp_is_single_face_term() {
        let grid = Grid::new(2).unwrap();
        let mut p = default_scaled();
        p.gamma2_0 = 0.0;
        let jump = 0.2;
        let state = State {
            v: vec![0.0; 2],
            u: vec![0.3, 0.3 + jump],
            mu: vec![0.0; 2],
        };
        let e = discrete_energy(&state, &grid, &p, 1e-8);
        let dx = grid.dx();
        let expected = dx * 0.5 * p.gamma1_0 * (jump / dx).powi(2);
        assert!((e - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn entropy_reference_values() {
        let grid = Grid::new(16).unwrap();
        let half = State::constant(16, 0.0, 0.5, 0.0);
        assert_eq!(discrete_entropy(&half, &grid, 1e-4), 0.0);
        let zero = State::constant(16, 0.0, 0.0, 0.0);
        let exact = discrete_entropy_exact(&zero, &grid).unwrap();
        assert!((exact - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn entropy_nonnegative_on_arbitrary_fields() {
        let grid = Grid::new(5).unwrap();
        let state = State {
            v: vec![0.0; 5],
            u: vec![-0.5, 0.01, 0.5, 0.99, 1.5],
            mu: vec![0.0; 5],
        };
        assert!(discrete_entropy(&state, &grid, 1e-3) >= 0.0);
    }

    #[test]
    fn functionals_are_reflection_invariant() {
        let grid = Grid::new(9).unwrap();
        let p = default_scaled();
        let u: Vec<f64> = (0..9).map(|i| 0.2 + 0.05 * i as f64).collect();
        let state = State {
            v: vec![0.0; 9],
            u: u.clone(),
            mu: vec![0.0; 9],
        };
        let mirrored = State {
            v: vec![0.0; 9],
            u: u.iter().rev().copied().collect(),
            mu: vec![0.0; 9],
        };
        let delta = 1e-6;
        assert!(
            (discrete_energy(&state, &grid, &p, delta)
                - discrete_energy(&mirrored, &grid, &p, delta))
            .abs()
                < 1e-14
        );
        assert!(
            (discrete_entropy(&state, &grid, delta) - discrete_entropy(&mirrored, &grid, delta))
                .abs()
                < 1e-14
        );
    }

    #[test]
    fn l2_basics() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(l2_distance(&a, &a, 0.1).unwrap(), 0.0);
        // Constant offset c on the unit domain has norm |c|.
        let n = 10;
        let x = vec![0.7; n];
        let y = vec![0.2; n];
        let d = l2_distance(&x, &y, 1.0 / n as f64).unwrap();
        assert!((d - 0.5).abs() < 1e-14);
        assert!(l2_distance(&a, &[1.0], 0.1).is_err());
    }

    #[test]
    fn restriction_examples() {
        assert_eq!(restrict(&[0.4; 8], 2).unwrap(), vec![0.4, 0.4]);
        let fine = vec![0.0, 1.0, 2.0, 3.0];
        assert_eq!(restrict(&fine, 2).unwrap(), vec![0.5, 2.5]);
        assert!(restrict(&fine, 3).is_err());
    }

    #[test]
    fn bounds_extraction() {
        let state = State {
            v: vec![0.1, 0.9],
            u: vec![0.3, 0.2],
            mu: vec![0.0, 0.0],
        };
        assert_eq!(linf_bounds(&state), (0.2, 0.3, 0.1, 0.9));
    }
}
