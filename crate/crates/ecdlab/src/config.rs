//! Experiment configuration files (TOML, unknown keys rejected).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ecd_core::ecd::Mode;
use ecd_core::linalg::NormConvention;
use ecd_core::models::ModelKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LabError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LzmDynamics,
    EcdDynamics,
    StandaloneSweep,
    OntopSweep,
    IntnormSweep,
    TwoQubit,
    ThreeLevel,
    Robustness,
    ScalingOrder,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::LzmDynamics,
        ExperimentKind::EcdDynamics,
        ExperimentKind::StandaloneSweep,
        ExperimentKind::OntopSweep,
        ExperimentKind::IntnormSweep,
        ExperimentKind::TwoQubit,
        ExperimentKind::ThreeLevel,
        ExperimentKind::Robustness,
        ExperimentKind::ScalingOrder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::LzmDynamics => "lzm_dynamics",
            ExperimentKind::EcdDynamics => "ecd_dynamics",
            ExperimentKind::StandaloneSweep => "standalone_sweep",
            ExperimentKind::OntopSweep => "ontop_sweep",
            ExperimentKind::IntnormSweep => "intnorm_sweep",
            ExperimentKind::TwoQubit => "two_qubit",
            ExperimentKind::ThreeLevel => "three_level",
            ExperimentKind::Robustness => "robustness",
            ExperimentKind::ScalingOrder => "scaling_order",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            ExperimentKind::LzmDynamics => "uncorrected Landau-Zener sweep: populations, infidelity, asymptotic tail",
            ExperimentKind::EcdDynamics => "Landau-Zener sweep under the first-order oscillating correction",
            ExperimentKind::StandaloneSweep => "infidelity vs duration for correction alone at strength budgets k",
            ExperimentKind::OntopSweep => "infidelity vs duration for H plus correction at strength budgets k",
            ExperimentKind::IntnormSweep => "infidelity vs time-integrated norm, adiabatic vs corrected",
            ExperimentKind::TwoQubit => "two-qubit Bell-state preparation, corrected and adiabatic",
            ExperimentKind::ThreeLevel => "three-level sweep at equal strength, with equal-infidelity speedup",
            ExperimentKind::Robustness => "amplitude and phase offsets of the sine channel",
            ExperimentKind::ScalingOrder => "single-period stroboscopic infidelity vs period length",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, LabError> {
        ExperimentKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown experiment '{s}'")))
    }
}

/// Which operator the base strength S(H) is measured on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthReference {
    /// The generator H(s) of the rescaled dynamics.
    Hamiltonian,
    /// The bracketed sweep operator; for the Landau-Zener model this is 2H(s), elsewhere H(s).
    #[default]
    Bracket,
}

impl StrengthReference {
    pub fn factor(&self, model: ModelKind) -> f64 {
        match (self, model) {
            (StrengthReference::Bracket, ModelKind::Lzm) => 2.0,
            _ => 1.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StrengthReference::Hamiltonian => "hamiltonian",
            StrengthReference::Bracket => "bracket",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Standalone,
    Ontop,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Mode {
        match m {
            ModeName::Standalone => Mode::Standalone,
            ModeName::Ontop => Mode::OnTop,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionName {
    Literal,
    Sqrt,
}

impl From<ConventionName> for NormConvention {
    fn from(c: ConventionName) -> NormConvention {
        match c {
            ConventionName::Literal => NormConvention::Literal,
            ConventionName::Sqrt => NormConvention::Sqrt,
        }
    }
}

impl From<NormConvention> for ConventionName {
    fn from(c: NormConvention) -> ConventionName {
        match c {
            NormConvention::Literal => ConventionName::Literal,
            NormConvention::Sqrt => ConventionName::Sqrt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Lzm,
    TwoQubit,
    ThreeLevel,
}

impl From<ModelName> for ModelKind {
    fn from(m: ModelName) -> ModelKind {
        match m {
            ModelName::Lzm => ModelKind::Lzm,
            ModelName::TwoQubit => ModelKind::TwoQubit,
            ModelName::ThreeLevel => ModelKind::ThreeLevel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisOrder {
    First,
    Third,
}

/// Declarative description of one experiment. Every field except `experiment` has a
/// per-experiment default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: Option<u32>,
    pub experiment: Option<ExperimentKind>,
    pub model: Option<ModelName>,
    pub epsilon: Option<f64>,
    pub tau: Option<f64>,
    pub d: Option<f64>,
    pub mode: Option<ModeName>,
    pub synthesis: Option<SynthesisOrder>,
    pub norm_convention: Option<ConventionName>,
    pub strength_reference: Option<StrengthReference>,
    /// Strength budgets S(H_E) ≤ k S(H).
    pub k: Option<Vec<f64>>,
    pub omega: Option<f64>,
    pub n_periods: Option<usize>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub tau_step: Option<f64>,
    pub adiabatic_tau_max: Option<f64>,
    pub infidelity_target: Option<f64>,
    pub n_periods_list: Option<Vec<usize>>,
    pub deltas: Option<Vec<f64>>,
    pub period_min: Option<f64>,
    pub period_max: Option<f64>,
    pub period_count: Option<usize>,
    pub s_center: Option<f64>,
    pub samples: Option<usize>,
    pub output_points: Option<usize>,
    pub steps_per_period: Option<usize>,
    pub min_steps: Option<usize>,
    pub cert_tol: Option<f64>,
    pub smoothing_window: Option<usize>,
    pub tail_fraction: Option<f64>,
    pub output_dir: Option<String>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn for_experiment(kind: ExperimentKind) -> Self {
        Self { experiment: Some(kind), ..Self::default() }
    }

    pub fn parse(text: &str) -> Result<Self, LabError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.expect("validated config names an experiment")
    }

    pub fn convention(&self) -> NormConvention {
        self.norm_convention.map(Into::into).unwrap_or_default()
    }

    pub fn strength_reference(&self) -> StrengthReference {
        self.strength_reference.unwrap_or_default()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let err = |m: String| Err(LabError::Config(m));
        if let Some(v) = self.schema_version {
            if v != SCHEMA_VERSION {
                return err(format!("schema_version {v} unsupported (expected {SCHEMA_VERSION})"));
            }
        }
        if self.experiment.is_none() {
            return err("missing required key 'experiment'".into());
        }
        let positive = [
            ("epsilon", self.epsilon),
            ("tau", self.tau),
            ("omega", self.omega),
            ("tau_min", self.tau_min),
            ("tau_max", self.tau_max),
            ("tau_step", self.tau_step),
            ("adiabatic_tau_max", self.adiabatic_tau_max),
            ("infidelity_target", self.infidelity_target),
            ("period_min", self.period_min),
            ("period_max", self.period_max),
            ("cert_tol", self.cert_tol),
        ];
        for (name, v) in positive {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return err(format!("'{name}' must be positive and finite (got {x})"));
                }
            }
        }
        if let Some(d) = self.d {
            if !(d >= 0.0 && d.is_finite()) {
                return err(format!("'d' must be non-negative (got {d})"));
            }
        }
        if let Some(ks) = &self.k {
            if ks.is_empty() || ks.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
                return err("'k' must be a nonempty list of positive numbers".into());
            }
        }
        if let Some(ds) = &self.deltas {
            if ds.iter().any(|d| !(-0.5..=0.5).contains(d)) {
                return err("'deltas' must lie in [-0.5, 0.5]".into());
            }
        }
        if let Some(f) = self.tail_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return err(format!("'tail_fraction' must lie in (0, 1] (got {f})"));
            }
        }
        if let Some(s) = self.s_center {
            if !(0.0..=1.0).contains(&s) {
                return err(format!("'s_center' must lie in [0, 1] (got {s})"));
            }
        }
        if self.n_periods == Some(0) || self.n_periods_list.as_ref().is_some_and(|l| l.is_empty() || l.contains(&0)) {
            return err("period counts must be positive".into());
        }
        for (name, v, min) in [
            ("steps_per_period", self.steps_per_period, 32),
            ("min_steps", self.min_steps, 1000),
            ("output_points", self.output_points, 2),
            ("period_count", self.period_count, 3),
            ("samples", self.samples, 10),
            ("smoothing_window", self.smoothing_window, 1),
        ] {
            if let Some(x) = v {
                if x < min {
                    return err(format!("'{name}' must be at least {min} (got {x})"));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.tau_min, self.tau_max) {
            if lo > hi {
                return err("'tau_min' exceeds 'tau_max'".into());
            }
        }
        if let (Some(lo), Some(hi)) = (self.period_min, self.period_max) {
            if lo >= hi {
                return err("'period_min' must be below 'period_max'".into());
            }
        }
        if self.omega.is_some() && self.n_periods.is_some() {
            return err("give at most one of 'omega' and 'n_periods'".into());
        }
        Ok(())
    }
}
