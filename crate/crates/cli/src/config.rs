//! Case configuration: TOML with a fixed key set; unknown keys are rejected.
//!
//! Polynomials are coefficient lists in descending powers of `s`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use dobkit_core::model::{ControllerSet, DeltaInterval, DobFilter, PlantModel, UncertaintyWeight};
use dobkit_core::sim::{Signal, Structure};
use dobkit_core::solver::{DesignSpec, Problem, SupKind};
use dobkit_core::tf::RationalTF;
use dobkit_core::LogConvention;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub plant: PlantSection,
    pub weight: WeightSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dob: Option<DobSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controllers: Option<ControllerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx_num: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx_den: Option<Vec<f64>>,
}

/// Either `{w_T, e_min, e_max}` or `{num, den}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    #[serde(rename = "w_T", default, skip_serializing_if = "Option::is_none")]
    pub w_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub den: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSection {
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DobSection {
    pub order: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_list: Option<Vec<f64>>,
    /// Sweep grid; defaults to 60 log-spaced points on [1, 1000].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecSection {
    pub alpha: f64,
    pub alpha_beta: f64,
    pub alpha_gamma: f64,
    pub w_beta: f64,
    pub w_gamma: f64,
    #[serde(rename = "sup_logS")]
    pub sup_log_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_kind: Option<SupKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_gamma_per_g: Option<f64>,
    pub delta_small: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub outer_num: Vec<f64>,
    pub outer_den: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefilter_num: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefilter_den: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<Structure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative_filter_tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceKind {
    None,
    Step,
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub kind: DisturbanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

pub const DEFAULT_SWEEP: (f64, f64, usize) = (1.0, 1000.0, 60);

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a config from text.
pub fn parse_config(text: &str) -> Result<CaseConfig, CliError> {
    if text.trim().is_empty() {
        return Err(CliError::Parse {
            line: None,
            message: "empty configuration".into(),
        });
    }
    let cfg: CaseConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<CaseConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigIo {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn tf(num: &[f64], den: &[f64], what: &str) -> Result<RationalTF, CliError> {
    RationalTF::from_descending(num, den).map_err(|e| CliError::Validation(format!("{what}: {e}")))
}

impl CaseConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Builds every model object once so all invariants are checked up front.
    pub fn validate(&self) -> Result<(), CliError> {
        self.plant_model()?;
        if let Some(d) = &self.dob {
            if let Some(g) = d.g {
                DobFilter::make_lpf(d.order, g).map_err(invalid)?;
            }
            for &g in d.g_list.iter().flatten() {
                DobFilter::make_lpf(d.order, g).map_err(invalid)?;
            }
            if d.g.is_none() && d.g_list.as_ref().is_none_or(|l| l.is_empty()) {
                return Err(invalid("dob needs g or a non-empty g_list"));
            }
            let (lo, hi, n) = self.sweep_grid_params();
            if !(lo > 0.0 && hi > lo) || n < 30 {
                return Err(invalid("sweep grid needs 0 < sweep_lo < sweep_hi and at least 30 points"));
            }
        }
        if let Some(s) = self.design_spec()? {
            s.validate().map_err(invalid)?;
        }
        self.controllers()?;
        if let Some(s) = &self.sim {
            if !(s.dt > 0.0) || !(s.horizon > s.dt) {
                return Err(invalid("sim needs 0 < dt < horizon"));
            }
            if s.noise_amplitude.is_some_and(|a| !(a >= 0.0)) {
                return Err(invalid("sim.noise_amplitude must be non-negative"));
            }
            if let Some(d) = &s.disturbance {
                if d.kind == DisturbanceKind::Sine && d.frequency.is_some_and(|f| !(f > 0.0)) {
                    return Err(invalid("sim.disturbance.frequency must be positive"));
                }
            }
        }
        if let Some(o) = &self.outputs {
            if o.dir.as_ref().is_some_and(|d| d.is_empty()) {
                return Err(invalid("outputs.dir must not be empty"));
            }
        }
        Ok(())
    }

    pub fn weight(&self) -> Result<UncertaintyWeight, CliError> {
        let w = &self.weight;
        match (w.w_t, w.e_min, w.e_max, &w.num, &w.den) {
            (Some(t), Some(lo), Some(hi), None, None) => UncertaintyWeight::new(t, lo, hi).map_err(invalid),
            (None, None, None, Some(n), Some(d)) => {
                UncertaintyWeight::from_tf(&tf(n, d, "weight")?).map_err(invalid)
            }
            _ => Err(invalid("weight needs exactly one of {w_T, e_min, e_max} or {num, den}")),
        }
    }

    pub fn plant_model(&self) -> Result<PlantModel, CliError> {
        let w = self.weight()?;
        let nominal = tf(&self.plant.num, &self.plant.den, "plant")?;
        let approx = match (&self.plant.approx_num, &self.plant.approx_den) {
            (Some(n), Some(d)) => Some(tf(n, d, "approximate nominal model")?),
            (None, None) => None,
            _ => return Err(invalid("plant.approx_num and plant.approx_den go together")),
        };
        let delta = match &self.delta {
            Some(d) => DeltaInterval::new(d.lo, d.hi, &w).map_err(invalid)?,
            None => DeltaInterval::nominal(),
        };
        if self.delta.as_ref().and_then(|d| d.grid_points).is_some_and(|n| n < 2) {
            return Err(invalid("delta.grid_points must be at least 2"));
        }
        PlantModel::new(nominal, w, delta, self.plant.tau.unwrap_or(0.0), approx).map_err(invalid)
    }

    pub fn design_spec(&self) -> Result<Option<DesignSpec>, CliError> {
        let Some(s) = &self.spec else { return Ok(None) };
        Ok(Some(DesignSpec {
            alpha: s.alpha,
            alpha_beta: s.alpha_beta,
            alpha_gamma: s.alpha_gamma,
            w_beta: s.w_beta,
            w_gamma: s.w_gamma,
            w_gamma_per_g: s.w_gamma_per_g,
            sup_log_s: s.sup_log_s,
            sup_kind: s.sup_kind.unwrap_or_default(),
            delta: s.delta_small,
            k: s.k.unwrap_or(1),
            m: s.m.unwrap_or(1.0),
            r: s.r,
        }))
    }

    pub fn controllers(&self) -> Result<Option<ControllerSet>, CliError> {
        let Some(c) = &self.controllers else { return Ok(None) };
        let outer = tf(&c.outer_num, &c.outer_den, "outer controller")?;
        let prefilter = match (&c.prefilter_num, &c.prefilter_den) {
            (Some(n), Some(d)) => Some(tf(n, d, "prefilter")?),
            (None, None) => None,
            _ => return Err(invalid("controllers.prefilter_num and prefilter_den go together")),
        };
        ControllerSet::new(outer, prefilter).map(Some).map_err(invalid)
    }

    pub fn order(&self) -> Result<u32, CliError> {
        self.dob.as_ref().map(|d| d.order).ok_or_else(|| invalid("a dob section is required"))
    }

    /// The single bandwidth used by point analyses and simulations.
    pub fn point_g(&self) -> Result<f64, CliError> {
        let d = self.dob.as_ref().ok_or_else(|| invalid("a dob section is required"))?;
        d.g.or_else(|| d.g_list.as_ref().and_then(|l| l.first().copied()))
            .ok_or_else(|| invalid("dob needs g or a non-empty g_list"))
    }

    pub fn g_points(&self) -> Vec<f64> {
        match &self.dob {
            Some(d) => match &d.g_list {
                Some(l) if !l.is_empty() => l.clone(),
                _ => d.g.into_iter().collect(),
            },
            None => Vec::new(),
        }
    }

    pub fn sweep_grid_params(&self) -> (f64, f64, usize) {
        let d = self.dob.as_ref();
        (
            d.and_then(|d| d.sweep_lo).unwrap_or(DEFAULT_SWEEP.0),
            d.and_then(|d| d.sweep_hi).unwrap_or(DEFAULT_SWEEP.1),
            d.and_then(|d| d.sweep_points).unwrap_or(DEFAULT_SWEEP.2),
        )
    }

    pub fn problem(&self, conv: LogConvention) -> Result<Problem, CliError> {
        let spec = self
            .design_spec()?
            .ok_or_else(|| invalid("a spec section is required for constraint analysis"))?;
        let mut p = Problem::new(self.plant_model()?, self.order()?, spec);
        if let Some(c) = self.controllers()? {
            p = p.with_controllers(c);
        }
        if let Some(n) = self.delta.as_ref().and_then(|d| d.grid_points) {
            p.delta_points = n;
        }
        p.conv = conv;
        Ok(p)
    }

    pub fn formats(&self) -> Vec<Format> {
        let mut f = self
            .outputs
            .as_ref()
            .and_then(|o| o.formats.clone())
            .unwrap_or_else(|| vec![Format::Csv, Format::Json]);
        f.sort();
        f.dedup();
        f
    }

    pub fn output_dir(&self) -> Option<&str> {
        self.outputs.as_ref().and_then(|o| o.dir.as_deref())
    }
}

impl SimSection {
    pub fn structure(&self) -> Structure {
        self.structure.unwrap_or_default()
    }

    /// The configured disturbance, or `None` for the default profiles.
    pub fn disturbance_signal(&self, g: f64) -> Option<Signal> {
        let d = self.disturbance.as_ref()?;
        let amplitude = d.amplitude.unwrap_or(1.0);
        let start = d.start_time.unwrap_or(0.5 * self.horizon);
        Some(match d.kind {
            DisturbanceKind::None => Signal::Zero,
            DisturbanceKind::Step => Signal::Step { amplitude, start },
            DisturbanceKind::Sine => Signal::Sine {
                amplitude,
                frequency: d.frequency.unwrap_or(5.0 * g),
                start,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[plant]
num = [1.0, 5.0]
den = [1.0, 5.0, 6.0]

[weight]
w_T = 100.0
e_min = 0.2
e_max = 5.0
"#;

    #[test]
    fn minimal_config() {
        let c = parse_config(MINIMAL).unwrap();
        assert!(c.dob.is_none() && c.spec.is_none());
        assert_eq!(c.formats(), vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = format!("{MINIMAL}\n[delta]\nlo = 0.0\nhi = 1.0\ngrid_pts = 5\n");
        match parse_config(&text) {
            Err(CliError::Parse { line: Some(l), message }) => {
                assert_eq!(l, text.lines().position(|s| s.starts_with("grid_pts")).unwrap() + 1);
                assert!(message.contains("grid_pts"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn both_weight_forms_rejected() {
        let text = MINIMAL.replace("e_max = 5.0", "e_max = 5.0\nnum = [1.0]\nden = [1.0]");
        assert!(matches!(parse_config(&text), Err(CliError::Validation(_))));
    }

    #[test]
    fn delta_below_bound_rejected() {
        let text = format!("{MINIMAL}\n[delta]\nlo = -1.0\nhi = 1.0\n");
        assert!(matches!(parse_config(&text), Err(CliError::Validation(_))));
    }

    #[test]
    fn empty_is_parse_error() {
        assert!(matches!(parse_config(""), Err(CliError::Parse { .. })));
        assert!(matches!(parse_config("  \n"), Err(CliError::Parse { .. })));
    }

    #[test]
    fn g_list_takes_precedence_for_points() {
        let text = format!("{MINIMAL}\n[dob]\norder = 2\ng = 7.0\ng_list = [3.0, 4.0]\n");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.g_points(), vec![3.0, 4.0]);
        assert_eq!(c.point_g().unwrap(), 7.0);
    }
}
