//! Physical model parameters and their nondimensionalization.
//!
//! The solver itself only ever sees [`ScaledParams`]; the dimensional
//! [`PhysicalParams`] exist to document the regime and to derive the
//! scaled values from characteristic scales.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter `{0}` must be strictly positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("polymerization index must satisfy N >= 1, got {0}")]
    PolymerizationIndex(f64),
}

/// Dimensional constants of the biofilm model.
///
/// Units are SI throughout: lengths in m, times in s, concentrations in
/// kg/m^3, energies in kg m^2/s^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Substrate diffusivity [m^2/s].
    pub diffusivity: f64,
    /// Mobility constant of the biomass gradient flow [s].
    pub mobility: f64,
    /// Substrate consumption rate [1/s].
    pub consumption_rate: f64,
    /// Biomass production rate [kg/(m^3 s)].
    pub production_rate: f64,
    /// Monod half-saturation constant [kg/m^3].
    pub half_saturation: f64,
    /// Distortional (gradient) energy coefficient [m^4/s^2].
    pub distortional_energy: f64,
    /// Mixing free energy coefficient [m^2/s^2].
    pub mixing_energy: f64,
    /// Generalized polymerization index [-].
    pub polymerization_index: f64,
    /// Flory-Huggins mixing parameter [-].
    pub flory_huggins: f64,
    /// Characteristic length [m].
    pub length_scale: f64,
    /// Characteristic time [s].
    pub time_scale: f64,
    /// Characteristic concentration [kg/m^3].
    pub concentration_scale: f64,
    /// Thermal energy k_B T [kg m^2/s^2].
    pub thermal_energy: f64,
    /// Half-saturation constant of the two-phase variant model [-].
    pub half_saturation_variant: f64,
}

/// Dimensionless parameters consumed by the discrete scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledParams {
    pub d0: f64,
    pub m0: f64,
    pub rc0: f64,
    pub rp0: f64,
    pub k: f64,
    pub gamma1_0: f64,
    pub gamma2_0: f64,
    /// Carried through unchanged (already dimensionless).
    pub polymerization_index: f64,
    /// Carried through unchanged (already dimensionless).
    pub flory_huggins: f64,
    /// Carried through unchanged (already dimensionless).
    pub half_saturation_variant: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let fields = [
            ("diffusivity", self.diffusivity),
            ("mobility", self.mobility),
            ("consumption_rate", self.consumption_rate),
            ("production_rate", self.production_rate),
            ("half_saturation", self.half_saturation),
            ("distortional_energy", self.distortional_energy),
            ("mixing_energy", self.mixing_energy),
            ("polymerization_index", self.polymerization_index),
            ("flory_huggins", self.flory_huggins),
            ("length_scale", self.length_scale),
            ("time_scale", self.time_scale),
            ("concentration_scale", self.concentration_scale),
            ("thermal_energy", self.thermal_energy),
            ("half_saturation_variant", self.half_saturation_variant),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ParamError::NonPositive(name, value));
            }
        }
        if self.polymerization_index < 1.0 {
            return Err(ParamError::PolymerizationIndex(self.polymerization_index));
        }
        Ok(())
    }
}

impl ScaledParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let fields = [
            ("D0", self.d0),
            ("M0", self.m0),
            ("Rc0", self.rc0),
            ("Rp0", self.rp0),
            ("K", self.k),
            ("Gamma1_0", self.gamma1_0),
            ("Gamma2_0", self.gamma2_0),
            ("polymerization_index", self.polymerization_index),
            ("flory_huggins", self.flory_huggins),
            ("half_saturation_variant", self.half_saturation_variant),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ParamError::NonPositive(name, value));
            }
        }
        Ok(())
    }
}

/// Characteristic chemical potential mu_0 = k_B T / (v_0 x_0^3) [m^2/s^2].
pub fn characteristic_potential(p: &PhysicalParams) -> f64 {
    p.thermal_energy / (p.concentration_scale * p.length_scale.powi(3))
}

/// Nondimensionalize a physical parameter set.
///
/// D0 = D t0/x0^2, M0 = M' t0 mu0/x0^2, Rc0 = Rc t0, Rp0 = Rp t0,
/// K = Kv/v0, Gamma1_0 = Gamma1/(mu0 x0^2), Gamma2_0 = Gamma2/mu0.
pub fn scale_parameters(p: &PhysicalParams) -> ScaledParams {
    let mu0 = characteristic_potential(p);
    let x0_sq = p.length_scale * p.length_scale;
    ScaledParams {
        d0: p.diffusivity * p.time_scale / x0_sq,
        m0: p.mobility * p.time_scale * mu0 / x0_sq,
        rc0: p.consumption_rate * p.time_scale,
        rp0: p.production_rate * p.time_scale,
        k: p.half_saturation / p.concentration_scale,
        gamma1_0: p.distortional_energy / (mu0 * x0_sq),
        gamma2_0: p.mixing_energy / mu0,
        polymerization_index: p.polymerization_index,
        flory_huggins: p.flory_huggins,
        half_saturation_variant: p.half_saturation_variant,
    }
}

/// The parameter set used for all built-in simulations.
pub fn paper_defaults() -> PhysicalParams {
    PhysicalParams {
        diffusivity: 1e-10,
        mobility: 2.5e-8,
        consumption_rate: 1e-2,
        production_rate: 1e-2,
        half_saturation: 1e-4,
        distortional_energy: 4e-15,
        mixing_energy: 4e-6,
        polymerization_index: 1e3,
        flory_huggins: 0.55,
        length_scale: 1e-4,
        time_scale: 1e2,
        concentration_scale: 1e-3,
        thermal_energy: 4e-21,
        half_saturation_variant: 5e-4,
    }
}

/// Scaled image of [`paper_defaults`]; the default input of the solver.
pub fn default_scaled() -> ScaledParams {
    scale_parameters(&paper_defaults())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn characteristic_potential_default() {
        let p = paper_defaults();
        assert!(rel_eq(characteristic_potential(&p), 4e-6, 1e-12));
    }

    #[test]
    fn characteristic_potential_identity_scales() {
        let mut p = paper_defaults();
        p.thermal_energy = 1.0;
        p.concentration_scale = 1.0;
        p.length_scale = 1.0;
        assert_eq!(characteristic_potential(&p), 1.0);
    }

    #[test]
    fn characteristic_potential_linear_in_thermal_energy() {
        let mut p = paper_defaults();
        p.thermal_energy = 8e-21;
        assert!(rel_eq(characteristic_potential(&p), 8e-6, 1e-12));
    }

    #[test]
    fn scaled_defaults_match_reference_values() {
        let s = default_scaled();
        assert!(rel_eq(s.d0, 1.0, 1e-12));
        assert!(rel_eq(s.rc0, 1.0, 1e-12));
        assert!(rel_eq(s.rp0, 1.0, 1e-12));
        assert!(rel_eq(s.k, 0.1, 1e-12));
        assert!(rel_eq(s.m0, 1e-3, 1e-12));
        assert!(rel_eq(s.gamma1_0, 0.1, 1e-12));
        assert!(rel_eq(s.gamma2_0, 1.0, 1e-12));
        assert_eq!(s.polymerization_index, 1e3);
        assert_eq!(s.flory_huggins, 0.55);
        assert_eq!(s.half_saturation_variant, 5e-4);
    }

    #[test]
    fn all_unit_scales_give_unit_parameters() {
        let p = PhysicalParams {
            diffusivity: 1.0,
            mobility: 1.0,
            consumption_rate: 1.0,
            production_rate: 1.0,
            half_saturation: 1.0,
            distortional_energy: 1.0,
            mixing_energy: 1.0,
            polymerization_index: 1.0,
            flory_huggins: 1.0,
            length_scale: 1.0,
            time_scale: 1.0,
            concentration_scale: 1.0,
            thermal_energy: 1.0,
            half_saturation_variant: 1.0,
        };
        let s = scale_parameters(&p);
        for value in [s.d0, s.m0, s.rc0, s.rp0, s.k, s.gamma1_0, s.gamma2_0] {
            assert_eq!(value, 1.0);
        }
    }

    #[test]
    fn doubling_time_scale_doubles_rates_only() {
        let p = paper_defaults();
        let mut p2 = p;
        p2.time_scale *= 2.0;
        let s = scale_parameters(&p);
        let s2 = scale_parameters(&p2);
        assert!(rel_eq(s2.d0, 2.0 * s.d0, 1e-12));
        assert!(rel_eq(s2.m0, 2.0 * s.m0, 1e-12));
        assert!(rel_eq(s2.rc0, 2.0 * s.rc0, 1e-12));
        assert!(rel_eq(s2.rp0, 2.0 * s.rp0, 1e-12));
        assert_eq!(s2.k, s.k);
        assert_eq!(s2.gamma1_0, s.gamma1_0);
        assert_eq!(s2.gamma2_0, s.gamma2_0);
    }

    #[test]
    fn diffusivity_length_homogeneity() {
        let p = paper_defaults();
        let mut p2 = p;
        p2.diffusivity *= 9.0;
        p2.length_scale *= 3.0;
        let s = scale_parameters(&p);
        let s2 = scale_parameters(&p2);
        assert!(rel_eq(s2.d0, s.d0, 1e-12));
    }

    #[test]
    fn round_trip_consistency_with_characteristic_potential() {
        let p = paper_defaults();
        let s = scale_parameters(&p);
        let mu0 = characteristic_potential(&p);
        assert!(rel_eq(s.gamma2_0 * mu0, p.mixing_energy, 1e-12));
    }

    #[test]
    fn defaults_are_table_values() {
        let p = paper_defaults();
        assert_eq!(p.diffusivity, 1e-10);
        assert_eq!(p.flory_huggins, 0.55);
        assert_eq!(p.half_saturation_variant, 5e-4);
        p.validate().unwrap();
    }

    #[test]
    fn validation_rejects_nonpositive_and_small_n() {
        let mut p = paper_defaults();
        p.diffusivity = 0.0;
        assert!(matches!(p.validate(), Err(ParamError::NonPositive(_, _))));
        let mut p = paper_defaults();
        p.polymerization_index = 0.5;
        assert!(matches!(
            p.validate(),
            Err(ParamError::PolymerizationIndex(_))
        ));
    }
}
