//! Run configuration (JSON). Unknown keys are rejected and every optional
//! block has explicit defaults so the resolved echo is complete.

use std::path::Path;

use dualdiv_core::sim::{Barriers, Reflection, SimConfig};
use dualdiv_core::verify::GridSpec;
use dualdiv_core::{LevyModel, PhaseType, ProblemParams, Upper};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub curves: CurvesConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub c: f64,
    pub sigma: f64,
    pub kappa: f64,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default, rename = "T")]
    pub t: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub q: f64,
    pub r: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvesConfig {
    /// Multiples of b* at which Γ(·, b) is scanned.
    pub b_factors: Vec<f64>,
    /// Points of the a-grid on [0, b] for each scanned b.
    pub a_points: usize,
    /// Value curves run over [0, x_max_factor · b*].
    pub x_max_factor: f64,
    pub x_points: usize,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self { b_factors: vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2], a_points: 101, x_max_factor: 2.0, x_points: 201 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    Beta,
    R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub variable: SweepVar,
    pub values: Vec<f64>,
    /// Points at which the optimal value is reported.
    pub x_ref: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            variable: SweepVar::Beta,
            values: vec![0.3, 0.4, 0.5, 0.51, 0.53, 0.55, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.995, 1.0],
            x_ref: vec![1.0, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReflectionConfig {
    Exact,
    Grid,
}

/// Barriers to simulate: the solved optimum or an explicit pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum BarrierChoice {
    Optimal,
    Explicit {
        a: f64,
        /// `null` for no continuous barrier.
        b: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub x0: Vec<f64>,
    pub paths: u64,
    pub dt: f64,
    pub horizon_eps: f64,
    pub seed: u64,
    pub barriers: BarrierChoice,
    pub reflection: ReflectionConfig,
    /// Also write per-path discounted totals.
    pub per_path_csv: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            x0: vec![0.5, 1.0, 2.0],
            paths: 200_000,
            dt: 1e-3,
            horizon_eps: 1e-8,
            seed: 1,
            barriers: BarrierChoice::Optimal,
            reflection: ReflectionConfig::Exact,
            per_path_csv: false,
        }
    }
}

impl SimulateConfig {
    pub fn sim_config(&self, x0: f64, barriers: Barriers) -> SimConfig {
        SimConfig {
            paths: self.paths,
            dt: self.dt,
            horizon_eps: self.horizon_eps,
            seed: self.seed,
            x0,
            barriers,
            reflection: match self.reflection {
                ReflectionConfig::Exact => Reflection::Exact,
                ReflectionConfig::Grid => Reflection::Grid,
            },
        }
    }

    pub fn explicit_barriers(&self) -> Option<Barriers> {
        match self.barriers {
            BarrierChoice::Optimal => None,
            BarrierChoice::Explicit { a, b } => Some(Barriers { a, b: b.map_or(Upper::Infinite, Upper::Finite) }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub lo: f64,
    pub hi_factor: f64,
    pub log_points: usize,
    pub lin_points: usize,
    pub exclusion: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self { lo: g.lo, hi_factor: g.hi_factor, log_points: g.log_points, lin_points: g.lin_points, exclusion: g.exclusion }
    }
}

impl VerifyConfig {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            lo: self.lo,
            hi_factor: self.hi_factor,
            log_points: self.log_points,
            lin_points: self.lin_points,
            exclusion: self.exclusion,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.levy_model()?;
        self.problem_params()?;
        let s = &self.simulate;
        if s.x0.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(CliError::Config("simulate.x0 entries must be finite and >= 0".into()));
        }
        if let Some(b) = s.explicit_barriers() {
            s.sim_config(0.0, b).validate().map_err(|e| CliError::Config(e.to_string()))?;
        } else {
            s.sim_config(0.0, Barriers::periodic(0.0)).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.curves.a_points < 2 || self.curves.x_points < 2 || !(self.curves.x_max_factor > 0.0) {
            return Err(CliError::Config("curves needs a_points, x_points >= 2 and x_max_factor > 0".into()));
        }
        if self.curves.b_factors.iter().any(|&f| !(f > 0.0)) {
            return Err(CliError::Config("curves.b_factors must be positive".into()));
        }
        let v = &self.verify;
        if !(v.lo > 0.0) || !(v.hi_factor > 0.0) || v.lin_points == 0 || !(v.exclusion >= 0.0) {
            return Err(CliError::Config("verify grid settings out of range".into()));
        }
        Ok(())
    }

    pub fn levy_model(&self) -> Result<LevyModel, CliError> {
        let m = &self.model;
        let jump = if m.kappa > 0.0 {
            Some(PhaseType::new(m.alpha.clone(), m.t.clone()).map_err(|e| CliError::Config(e.to_string()))?)
        } else {
            None
        };
        LevyModel::new(m.c, m.sigma, m.kappa, jump).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn problem_params(&self) -> Result<ProblemParams, CliError> {
        let p = self.params;
        ProblemParams::new(p.q, p.r, p.beta).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical JSON of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(serde_json::to_string(self).expect("config serialises").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
