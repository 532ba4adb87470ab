//! Flory-Huggins free energy, its regularized family, mobilities, and the
//! entropy density.
//!
//! The free energy density splits as f = f1 + f2 with a logarithmic part
//! f1(u) = (1/N) u ln u + (1-u) ln(1-u), singular at u = 0 and u = 1, and a
//! quadratic mixing part f2(u) = lambda u(1-u). The regularized family
//! replaces f1 outside (delta, 1-delta) by C^2-glued polynomial pieces so
//! that every evaluation is total on the real line and the first derivative
//! stays bounded. The entropy density Phi has Phi'' = 1/M with the
//! degenerate mobility M(u) = u(1-u); its truncated version is quadratic
//! outside the core interval.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("argument {0} outside the domain of the singular potential (0, 1)")]
    DomainOpenUnit(f64),
    #[error("argument {0} outside [0, 1]")]
    DomainClosedUnit(f64),
    #[error("regularization delta must lie in (0, 1/2), got {0}")]
    BadDelta(f64),
    #[error("polymerization index must be positive, got {0}")]
    BadPolymerizationIndex(f64),
    #[error("mixing parameter must be nonnegative, got {0}")]
    BadMixingParameter(f64),
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Flory-Huggins free energy density f(u) for u in (0, 1).
pub fn flory_huggins(u: f64, n: f64, lambda: f64) -> Result<f64, PotentialError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(PotentialError::DomainOpenUnit(u));
    }
    Ok(u * u.ln() / n + (1.0 - u) * (1.0 - u).ln() + lambda * u * (1.0 - u))
}

/// f'(u) for u in (0, 1).
pub fn flory_huggins_prime(u: f64, n: f64, lambda: f64) -> Result<f64, PotentialError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(PotentialError::DomainOpenUnit(u));
    }
    Ok((u.ln() + 1.0) / n - (1.0 - u).ln() - 1.0 + lambda * (1.0 - 2.0 * u))
}

/// f''(u) for u in (0, 1).
pub fn flory_huggins_second(u: f64, n: f64, lambda: f64) -> Result<f64, PotentialError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(PotentialError::DomainOpenUnit(u));
    }
    Ok(1.0 / (n * u) + 1.0 / (1.0 - u) - 2.0 * lambda)
}

fn log_part(u: f64, n: f64) -> f64 {
    xlnx(u) / n + xlnx(1.0 - u)
}

fn log_part_prime(u: f64, n: f64) -> f64 {
    (u.ln() + 1.0) / n - (1.0 - u).ln() - 1.0
}

fn log_part_second(u: f64, n: f64) -> f64 {
    1.0 / (n * u) + 1.0 / (1.0 - u)
}

/// Degenerate mobility M(u) = u(1-u).
pub fn mobility(u: f64) -> f64 {
    u * (1.0 - u)
}

/// Truncated mobility: constant M(delta) below delta and above 1-delta.
///
/// Dominates M on the whole line.
pub fn mobility_truncated(u: f64, delta: f64) -> f64 {
    if u <= delta {
        mobility(delta)
    } else if u >= 1.0 - delta {
        mobility(1.0 - delta)
    } else {
        mobility(u)
    }
}

/// Truncated substrate diffusivity D_+(u) = clamp(1-u, 0, 1).
pub fn diffusivity_plus(u: f64) -> f64 {
    (1.0 - u).clamp(0.0, 1.0)
}

/// Quadratic mixing part lambda u(1-u), continued as a constant outside
/// [-1, 2]. C^0 only; used for diagnostics far outside the unit interval.
pub fn mixing_extended(u: f64, lambda: f64) -> f64 {
    let v = u.clamp(-1.0, 2.0);
    lambda * v * (1.0 - v)
}

pub fn mixing_extended_prime(u: f64, lambda: f64) -> f64 {
    if (-1.0..=2.0).contains(&u) {
        lambda * (1.0 - 2.0 * u)
    } else {
        0.0
    }
}

pub fn mixing_extended_second(u: f64, lambda: f64) -> f64 {
    if (-1.0..=2.0).contains(&u) {
        -2.0 * lambda
    } else {
        0.0
    }
}

/// Closed-form pieces of the regularized logarithmic part, ordered left
/// to right on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// u <= -2: affine.
    LinearLeft,
    /// -2 <= u <= -1: cubic ramping the curvature up from zero.
    CubicLeft,
    /// -1 <= u <= delta: second-order Taylor expansion about delta.
    QuadraticLeft,
    /// delta < u < 1-delta: the exact logarithmic part.
    Core,
    /// 1-delta <= u <= 2: second-order Taylor expansion about 1-delta.
    QuadraticRight,
    /// 2 <= u <= 3: cubic ramping the curvature back down to zero.
    CubicRight,
    /// u >= 3: affine.
    LinearRight,
}

impl Branch {
    pub const ALL: [Branch; 7] = [
        Branch::LinearLeft,
        Branch::CubicLeft,
        Branch::QuadraticLeft,
        Branch::Core,
        Branch::QuadraticRight,
        Branch::CubicRight,
        Branch::LinearRight,
    ];
}

/// Parameters of the regularized potential family.
///
/// Construction precomputes the Taylor data of the logarithmic part at the
/// gluing points delta and 1-delta together with the integration constants
/// that make the seven branches match in value, first, and second
/// derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub n: f64,
    pub lambda: f64,
    pub delta: f64,
    // Taylor data at delta (left gluing point).
    f1_lo: f64,
    df1_lo: f64,
    ddf1_lo: f64,
    // Taylor data at 1-delta (right gluing point).
    f1_hi: f64,
    df1_hi: f64,
    ddf1_hi: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
}

impl PotentialParams {
    pub fn new(n: f64, lambda: f64, delta: f64) -> Result<Self, PotentialError> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(PotentialError::BadDelta(delta));
        }
        if !(n > 0.0) || !n.is_finite() {
            return Err(PotentialError::BadPolymerizationIndex(n));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(PotentialError::BadMixingParameter(lambda));
        }
        let hi = 1.0 - delta;
        let f1_lo = log_part(delta, n);
        let df1_lo = log_part_prime(delta, n);
        let ddf1_lo = log_part_second(delta, n);
        let f1_hi = log_part(hi, n);
        let df1_hi = log_part_prime(hi, n);
        let ddf1_hi = log_part_second(hi, n);
        let c2 =
            f1_lo - df1_lo * delta + 0.5 * ddf1_lo * ((1.0 + delta).powi(2) - 2.0 * delta - 2.0 / 3.0);
        let c1 = c2 - 4.0 / 3.0 * ddf1_lo;
        let c3 = f1_hi
            + df1_hi * (delta - 1.0)
            + ddf1_hi * (0.5 * (delta + 1.0).powi(2) - 2.0 * delta + 4.0 / 3.0);
        let c4 = c3 - 4.5 * ddf1_hi;
        Ok(Self {
            n,
            lambda,
            delta,
            f1_lo,
            df1_lo,
            ddf1_lo,
            f1_hi,
            df1_hi,
            ddf1_hi,
            c1,
            c2,
            c3,
            c4,
        })
    }

    /// Interior breakpoints between adjacent branches, left to right.
    pub fn breakpoints(&self) -> [f64; 6] {
        [-2.0, -1.0, self.delta, 1.0 - self.delta, 2.0, 3.0]
    }

    fn classify(&self, u: f64) -> Branch {
        if u <= -2.0 {
            Branch::LinearLeft
        } else if u <= -1.0 {
            Branch::CubicLeft
        } else if u <= self.delta {
            Branch::QuadraticLeft
        } else if u < 1.0 - self.delta {
            Branch::Core
        } else if u <= 2.0 {
            Branch::QuadraticRight
        } else if u <= 3.0 {
            Branch::CubicRight
        } else {
            Branch::LinearRight
        }
    }

    /// Evaluate one closed-form branch regardless of where u lies.
    pub fn log_part_branch(&self, branch: Branch, u: f64) -> f64 {
        let d = self.delta;
        let hi = 1.0 - d;
        match branch {
            Branch::LinearLeft => (self.df1_lo - self.ddf1_lo * (1.5 + d)) * u + self.c1,
            Branch::CubicLeft => {
                self.ddf1_lo * (u * u * u / 6.0 + u * u + (0.5 - d) * u) + self.df1_lo * u + self.c2
            }
            Branch::QuadraticLeft => {
                let s = u - d;
                self.f1_lo + self.df1_lo * s + 0.5 * self.ddf1_lo * s * s
            }
            Branch::Core => log_part(u, self.n),
            Branch::QuadraticRight => {
                let s = u - hi;
                self.f1_hi + self.df1_hi * s + 0.5 * self.ddf1_hi * s * s
            }
            Branch::CubicRight => {
                self.ddf1_hi * (-u * u * u / 6.0 + 1.5 * u * u - (2.0 + hi) * u)
                    + self.df1_hi * u
                    + self.c3
            }
            Branch::LinearRight => (self.df1_hi + self.ddf1_hi * (1.5 + d)) * u + self.c4,
        }
    }

    pub fn log_part_branch_prime(&self, branch: Branch, u: f64) -> f64 {
        let d = self.delta;
        let hi = 1.0 - d;
        match branch {
            Branch::LinearLeft => self.df1_lo - self.ddf1_lo * (1.5 + d),
            Branch::CubicLeft => self.ddf1_lo * (0.5 * u * u + 2.0 * u + 0.5 - d) + self.df1_lo,
            Branch::QuadraticLeft => self.df1_lo + self.ddf1_lo * (u - d),
            Branch::Core => log_part_prime(u, self.n),
            Branch::QuadraticRight => self.df1_hi + self.ddf1_hi * (u - hi),
            Branch::CubicRight => {
                self.ddf1_hi * (-0.5 * u * u + 3.0 * u - (2.0 + hi)) + self.df1_hi
            }
            Branch::LinearRight => self.df1_hi + self.ddf1_hi * (1.5 + d),
        }
    }

    pub fn log_part_branch_second(&self, branch: Branch, u: f64) -> f64 {
        match branch {
            Branch::LinearLeft | Branch::LinearRight => 0.0,
            Branch::CubicLeft => self.ddf1_lo * (u + 2.0),
            Branch::QuadraticLeft => self.ddf1_lo,
            Branch::Core => log_part_second(u, self.n),
            Branch::QuadraticRight => self.ddf1_hi,
            Branch::CubicRight => self.ddf1_hi * (3.0 - u),
        }
    }

    /// Regularized logarithmic part, total on the real line.
    pub fn log_part_regularized(&self, u: f64) -> f64 {
        self.log_part_branch(self.classify(u), u)
    }

    pub fn log_part_regularized_prime(&self, u: f64) -> f64 {
        self.log_part_branch_prime(self.classify(u), u)
    }

    pub fn log_part_regularized_second(&self, u: f64) -> f64 {
        self.log_part_branch_second(self.classify(u), u)
    }

    /// Full regularized free energy density: log part plus extended mixing
    /// part. Agrees with [`flory_huggins`] on (delta, 1-delta).
    pub fn regularized(&self, u: f64) -> f64 {
        self.log_part_regularized(u) + mixing_extended(u, self.lambda)
    }

    pub fn regularized_prime(&self, u: f64) -> f64 {
        self.log_part_regularized_prime(u) + mixing_extended_prime(u, self.lambda)
    }

    pub fn regularized_second(&self, u: f64) -> f64 {
        self.log_part_regularized_second(u) + mixing_extended_second(u, self.lambda)
    }
}

/// Entropy density Phi(u) = u ln u + (1-u) ln(1-u) + ln 2 on [0, 1].
pub fn entropy_density(u: f64) -> Result<f64, PotentialError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(PotentialError::DomainClosedUnit(u));
    }
    Ok(xlnx(u) + xlnx(1.0 - u) + std::f64::consts::LN_2)
}

/// Truncated entropy density, total on the real line.
///
/// Second antiderivative of 1/M_delta anchored at Phi(1/2) = Phi'(1/2) = 0:
/// logarithmic core on [delta, 1-delta], quadratic continuation outside.
pub fn entropy_density_truncated(u: f64, delta: f64) -> f64 {
    let m = mobility(delta);
    let slope = ((1.0 - delta) / delta).ln();
    if u < delta {
        let s = u - delta;
        entropy_core(delta) - slope * s + s * s / (2.0 * m)
    } else if u > 1.0 - delta {
        let s = u - (1.0 - delta);
        entropy_core(1.0 - delta) + slope * s + s * s / (2.0 * m)
    } else {
        entropy_core(u)
    }
}

/// Derivative of the truncated entropy density.
pub fn entropy_density_truncated_prime(u: f64, delta: f64) -> f64 {
    let m = mobility(delta);
    let slope = ((1.0 - delta) / delta).ln();
    if u < delta {
        -slope + (u - delta) / m
    } else if u > 1.0 - delta {
        slope + (u - (1.0 - delta)) / m
    } else {
        (u / (1.0 - u)).ln()
    }
}

fn entropy_core(u: f64) -> f64 {
    xlnx(u) + xlnx(1.0 - u) + std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_HALF: f64 = -std::f64::consts::LN_2;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn flory_huggins_symmetric_point() {
        assert!((flory_huggins(0.5, 1.0, 0.0).unwrap() - LN_HALF).abs() < 1e-15);
        assert!(flory_huggins_prime(0.5, 1.0, 0.7).unwrap().abs() < 1e-15);
        assert!((flory_huggins_second(0.5, 1.0, 0.0).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn flory_huggins_domain_errors() {
        assert!(flory_huggins(0.0, 1.0, 0.0).is_err());
        assert!(flory_huggins(1.0, 1.0, 0.0).is_err());
        assert!(flory_huggins_prime(-0.2, 1.0, 0.0).is_err());
        assert!(flory_huggins_second(1.3, 1.0, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(PotentialParams::new(1.0, 0.0, 0.7).is_err());
        assert!(PotentialParams::new(1.0, 0.0, 0.0).is_err());
        assert!(PotentialParams::new(0.0, 0.0, 1e-2).is_err());
        assert!(PotentialParams::new(1.0, -0.1, 1e-2).is_err());
        assert!(PotentialParams::new(1e3, 0.55, 1e-8).is_ok());
    }

    #[test]
    fn regularized_log_part_matches_exact_in_core() {
        let p = PotentialParams::new(1.0, 0.0, 1e-2).unwrap();
        assert_eq!(p.log_part_regularized(0.5), LN_HALF);
        for &u in &[0.011, 0.2, 0.7, 0.989] {
            assert!(rel_err(p.log_part_regularized(u), log_part(u, 1.0)) < 1e-15);
        }
    }

    #[test]
    fn regularized_matches_full_potential_in_core() {
        let p = PotentialParams::new(1e3, 0.55, 1e-3).unwrap();
        for &u in &[0.002, 0.25, 0.5, 0.75, 0.998] {
            assert!(rel_err(p.regularized(u), flory_huggins(u, 1e3, 0.55).unwrap()) < 1e-14);
            assert!(
                rel_err(
                    p.regularized_prime(u),
                    flory_huggins_prime(u, 1e3, 0.55).unwrap()
                ) < 1e-13
            );
        }
    }

    #[test]
    fn second_derivative_vanishes_far_out() {
        for &delta in &[1e-2, 1e-5] {
            let p = PotentialParams::new(1.0, 0.0, delta).unwrap();
            assert_eq!(p.log_part_regularized_second(-3.0), 0.0);
            assert_eq!(p.log_part_regularized_second(4.0), 0.0);
        }
    }

    #[test]
    fn left_linear_and_cubic_branches_agree_at_minus_two() {
        let p = PotentialParams::new(1e3, 0.0, 1e-3).unwrap();
        for (a, b) in [
            (Branch::LinearLeft, Branch::CubicLeft),
        ] {
            let u = -2.0;
            assert!(rel_err(p.log_part_branch(a, u), p.log_part_branch(b, u)) < 1e-10);
            assert!(
                rel_err(
                    p.log_part_branch_prime(a, u),
                    p.log_part_branch_prime(b, u)
                ) < 1e-10
            );
            assert!(
                (p.log_part_branch_second(a, u) - p.log_part_branch_second(b, u)).abs() < 1e-10
            );
        }
    }

    #[test]
    fn all_breakpoints_match_to_second_order() {
        for &n in &[1.0, 1e3] {
            for &delta in &[1e-2, 1e-4, 1e-6] {
                let p = PotentialParams::new(n, 0.0, delta).unwrap();
                let bps = p.breakpoints();
                for (i, &b) in bps.iter().enumerate() {
                    let left = Branch::ALL[i];
                    let right = Branch::ALL[i + 1];
                    assert!(
                        rel_err(p.log_part_branch(left, b), p.log_part_branch(right, b)) < 1e-9,
                        "value mismatch at breakpoint {b} (n={n}, delta={delta})"
                    );
                    assert!(
                        rel_err(
                            p.log_part_branch_prime(left, b),
                            p.log_part_branch_prime(right, b)
                        ) < 1e-9,
                        "slope mismatch at breakpoint {b} (n={n}, delta={delta})"
                    );
                    assert!(
                        rel_err(
                            p.log_part_branch_second(left, b),
                            p.log_part_branch_second(right, b)
                        ) < 1e-9,
                        "curvature mismatch at breakpoint {b} (n={n}, delta={delta})"
                    );
                }
            }
        }
    }

    #[test]
    fn regularized_log_part_is_convex() {
        for &n in &[1.0, 1e3] {
            for &delta in &[1e-2, 1e-4, 1e-6] {
                let p = PotentialParams::new(n, 0.0, delta).unwrap();
                let mut u = -5.0;
                while u <= 6.0 {
                    assert!(
                        p.log_part_regularized_second(u) >= 0.0,
                        "negative curvature at u={u} (n={n}, delta={delta})"
                    );
                    u += 0.01;
                }
            }
        }
    }

    #[test]
    fn regularized_bounded_below_and_slope_bounded() {
        let p = PotentialParams::new(1.0, 0.55, 1e-2).unwrap();
        let mut min = f64::INFINITY;
        let mut max_slope: f64 = 0.0;
        let mut u = -10.0;
        while u <= 10.0 {
            min = min.min(p.regularized(u));
            max_slope = max_slope.max(p.regularized_prime(u).abs());
            u += 1e-3;
        }
        assert!(min.is_finite() && min > -10.0);
        assert!(max_slope.is_finite());
        // Outside [-2, 3] the log part is affine, so growth is sub-linear in
        // the slope sense: the derivative saturates.
        let far_slope = p.regularized_prime(50.0).abs();
        assert!((far_slope - p.regularized_prime(8.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn mobility_values_and_truncation() {
        assert_eq!(mobility(0.5), 0.25);
        assert_eq!(mobility(0.0), 0.0);
        assert_eq!(mobility(1.0), 0.0);
        assert!((mobility_truncated(-5.0, 0.1) - 0.09).abs() < 1e-15);
        assert!((mobility_truncated(5.0, 0.1) - 0.09).abs() < 1e-15);
        assert_eq!(mobility_truncated(0.5, 0.1), 0.25);
    }

    #[test]
    fn truncated_mobility_dominates() {
        let delta = 1e-3;
        let mut u = -2.0;
        while u <= 3.0 {
            assert!(mobility_truncated(u, delta) >= mobility(u) - 1e-15);
            u += 1e-3;
        }
    }

    #[test]
    fn diffusivity_clamps() {
        assert!((diffusivity_plus(0.3) - 0.7).abs() < 1e-15);
        assert_eq!(diffusivity_plus(-2.0), 1.0);
        assert_eq!(diffusivity_plus(1.5), 0.0);
    }

    #[test]
    fn mixing_extension_is_bounded_and_continuous() {
        let l = 0.55;
        assert!((mixing_extended(-1.0, l) - (-2.0 * l)).abs() < 1e-15);
        assert!((mixing_extended(2.0, l) - (-2.0 * l)).abs() < 1e-15);
        assert_eq!(mixing_extended(-7.0, l), -2.0 * l);
        assert_eq!(mixing_extended(9.0, l), -2.0 * l);
        assert_eq!(mixing_extended(0.5, l), l * 0.25);
    }

    #[test]
    fn entropy_density_reference_values() {
        assert_eq!(entropy_density(0.5).unwrap(), 0.0);
        assert!((entropy_density(0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((entropy_density(1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(entropy_density(-0.1).is_err());
        assert!(entropy_density(1.1).is_err());
    }

    #[test]
    fn truncated_entropy_anchored_at_half() {
        for &delta in &[1e-2, 1e-6] {
            assert_eq!(entropy_density_truncated(0.5, delta), 0.0);
            assert_eq!(entropy_density_truncated_prime(0.5, delta), 0.0);
        }
    }

    #[test]
    fn truncated_entropy_nonnegative_and_symmetric() {
        let delta = 1e-3;
        let mut u = -1.0;
        while u <= 2.0 {
            let phi = entropy_density_truncated(u, delta);
            assert!(phi >= -1e-15, "negative entropy at u={u}");
            let mirrored = entropy_density_truncated(1.0 - u, delta);
            assert!((phi - mirrored).abs() < 1e-12 * phi.abs().max(1.0));
            u += 1e-3;
        }
    }

    #[test]
    fn truncated_entropy_matches_exact_inside() {
        let delta = 1e-2;
        for &u in &[0.011, 0.3, 0.5, 0.8, 0.989] {
            assert!(
                (entropy_density_truncated(u, delta) - entropy_density(u).unwrap()).abs() < 1e-15
            );
        }
    }
}
