//! Plain-text configuration: one `name = value` per line, `#` comments.
//!
//! Model parameters may be given either as the physical set (keys `D`,
//! `M_prime`, `R_c`, `R_p`, `K_v`, `Gamma1`, `Gamma2`, `x0`, `t0`, `v0`,
//! `kBT`) or directly as the scaled set (`D0`, `M0`, `Rc0`, `Rp0`, `K`,
//! `Gamma1_0`, `Gamma2_0`); mixing the two families is an error. The
//! dimensionless keys `N`, `lambda`, and `K_tilde` belong to both.

use crate::params::{
    default_scaled, paper_defaults, scale_parameters, PhysicalParams, ScaledParams,
};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line_no}: expected `name = value`, got `{line}`")]
    Syntax { line_no: usize, line: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    InvalidValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key `{key}`: {message}")]
    OutOfRange { key: String, message: String },
    #[error(
        "physical parameter `{physical}` and scaled parameter `{scaled}` \
         cannot both be given"
    )]
    MixedFamilies { physical: String, scaled: String },
}

/// Split configuration text into (key, value) assignments.
pub fn parse_assignments(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line_no: idx + 1,
                line: raw.to_string(),
            });
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a number",
    })
}

pub fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a nonnegative integer",
    })
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "true or false",
        }),
    }
}

/// Comma-separated list of numbers; empty value means an empty list.
pub fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| parse_f64(key, item.trim()))
        .collect()
}

pub const PHYSICAL_KEYS: [&str; 11] = [
    "D", "M_prime", "R_c", "R_p", "K_v", "Gamma1", "Gamma2", "x0", "t0", "v0", "kBT",
];

pub const SCALED_KEYS: [&str; 7] = ["D0", "M0", "Rc0", "Rp0", "K", "Gamma1_0", "Gamma2_0"];

pub const SHARED_KEYS: [&str; 3] = ["N", "lambda", "K_tilde"];

/// Which parameter family a resolved configuration uses.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSpec {
    Scaled(ScaledParams),
    Physical(PhysicalParams),
}

impl ParamSpec {
    pub fn scaled(&self) -> ScaledParams {
        match self {
            ParamSpec::Scaled(s) => *s,
            ParamSpec::Physical(p) => scale_parameters(p),
        }
    }
}

/// Accumulates parameter assignments on top of the built-in defaults.
#[derive(Debug, Clone)]
pub struct ParamsBuilder {
    physical: PhysicalParams,
    scaled: ScaledParams,
    physical_seen: Option<String>,
    scaled_seen: Option<String>,
}

impl Default for ParamsBuilder {
    fn default() -> Self {
        Self {
            physical: paper_defaults(),
            scaled: default_scaled(),
            physical_seen: None,
            scaled_seen: None,
        }
    }
}

impl ParamsBuilder {
    /// Apply one assignment if the key belongs to a parameter family.
    /// Returns false when the key is not a parameter key.
    pub fn try_set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        if PHYSICAL_KEYS.contains(&key) {
            if let Some(scaled) = &self.scaled_seen {
                return Err(ConfigError::MixedFamilies {
                    physical: key.to_string(),
                    scaled: scaled.clone(),
                });
            }
            let v = parse_f64(key, value)?;
            let slot = match key {
                "D" => &mut self.physical.diffusivity,
                "M_prime" => &mut self.physical.mobility,
                "R_c" => &mut self.physical.consumption_rate,
                "R_p" => &mut self.physical.production_rate,
                "K_v" => &mut self.physical.half_saturation,
                "Gamma1" => &mut self.physical.distortional_energy,
                "Gamma2" => &mut self.physical.mixing_energy,
                "x0" => &mut self.physical.length_scale,
                "t0" => &mut self.physical.time_scale,
                "v0" => &mut self.physical.concentration_scale,
                "kBT" => &mut self.physical.thermal_energy,
                _ => unreachable!(),
            };
            *slot = v;
            self.physical_seen = Some(key.to_string());
            return Ok(true);
        }
        if SCALED_KEYS.contains(&key) {
            if let Some(physical) = &self.physical_seen {
                return Err(ConfigError::MixedFamilies {
                    physical: physical.clone(),
                    scaled: key.to_string(),
                });
            }
            let v = parse_f64(key, value)?;
            let slot = match key {
                "D0" => &mut self.scaled.d0,
                "M0" => &mut self.scaled.m0,
                "Rc0" => &mut self.scaled.rc0,
                "Rp0" => &mut self.scaled.rp0,
                "K" => &mut self.scaled.k,
                "Gamma1_0" => &mut self.scaled.gamma1_0,
                "Gamma2_0" => &mut self.scaled.gamma2_0,
                _ => unreachable!(),
            };
            *slot = v;
            self.scaled_seen = Some(key.to_string());
            return Ok(true);
        }
        if SHARED_KEYS.contains(&key) {
            let v = parse_f64(key, value)?;
            match key {
                "N" => {
                    self.physical.polymerization_index = v;
                    self.scaled.polymerization_index = v;
                }
                "lambda" => {
                    self.physical.flory_huggins = v;
                    self.scaled.flory_huggins = v;
                }
                "K_tilde" => {
                    self.physical.half_saturation_variant = v;
                    self.scaled.half_saturation_variant = v;
                }
                _ => unreachable!(),
            }
            return Ok(true);
        }
        Ok(false)
    }

    /// Validate and return the active family.
    pub fn resolve(&self) -> Result<ParamSpec, ConfigError> {
        if self.physical_seen.is_some() {
            self.physical.validate().map_err(|e| ConfigError::OutOfRange {
                key: self.physical_seen.clone().unwrap(),
                message: e.to_string(),
            })?;
            return Ok(ParamSpec::Physical(self.physical));
        }
        self.scaled.validate().map_err(|e| ConfigError::OutOfRange {
            key: self.scaled_seen.clone().unwrap_or_else(|| "params".into()),
            message: e.to_string(),
        })?;
        Ok(ParamSpec::Scaled(self.scaled))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignments_with_comments_and_blanks() {
        let text = "# heading\n\n a = 1 # trailing\nb=two\n";
        let kv = parse_assignments(text).unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "two".into())]);
    }

    #[test]
    fn missing_equals_is_a_syntax_error() {
        let err = parse_assignments("just words\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line_no: 1, .. }));
    }

    #[test]
    fn empty_config_resolves_to_defaults() {
        let b = ParamsBuilder::default();
        let spec = b.resolve().unwrap();
        assert_eq!(spec.scaled(), default_scaled());
    }

    #[test]
    fn scaled_override_applies() {
        let mut b = ParamsBuilder::default();
        assert!(b.try_set("M0", "0.5").unwrap());
        assert!(b.try_set("lambda", "0.3").unwrap());
        let s = b.resolve().unwrap().scaled();
        assert_eq!(s.m0, 0.5);
        assert_eq!(s.flory_huggins, 0.3);
        assert_eq!(s.d0, 1.0);
    }

    #[test]
    fn physical_override_rescales() {
        let mut b = ParamsBuilder::default();
        assert!(b.try_set("t0", "200").unwrap());
        let s = b.resolve().unwrap().scaled();
        assert_eq!(s.d0, 2.0);
        assert_eq!(s.rc0, 2.0);
    }

    #[test]
    fn mixing_families_is_rejected_both_ways() {
        let mut b = ParamsBuilder::default();
        b.try_set("D", "1e-10").unwrap();
        assert!(matches!(
            b.try_set("M0", "1e-3"),
            Err(ConfigError::MixedFamilies { .. })
        ));
        let mut b = ParamsBuilder::default();
        b.try_set("M0", "1e-3").unwrap();
        assert!(matches!(
            b.try_set("D", "1e-10"),
            Err(ConfigError::MixedFamilies { .. })
        ));
    }

    #[test]
    fn non_parameter_keys_fall_through() {
        let mut b = ParamsBuilder::default();
        assert!(!b.try_set("n_cells", "64").unwrap());
    }

    #[test]
    fn bad_values_name_the_key() {
        let mut b = ParamsBuilder::default();
        let err = b.try_set("D0", "fast").unwrap_err();
        assert!(err.to_string().contains("D0"));
        let mut b = ParamsBuilder::default();
        b.try_set("D0", "-1").unwrap();
        assert!(b.resolve().is_err());
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_f64_list("s", "").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_f64_list("s", "0.5, 1").unwrap(), vec![0.5, 1.0]);
        assert!(parse_f64_list("s", "a,b").is_err());
    }
}
