use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TransformConfig;
use crate::error::{Error, Result};
use crate::landmark::LandmarkFeatures;
use crate::optim::NewtonOptions;
use crate::rmtl::{log_grid, RmtlOptions};
use crate::simulation::{CovariateSim, SimConfig};

/// The closed model roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "Cox")]
    Cox,
    #[serde(rename = "Cox-ac")]
    CoxAc,
    #[serde(rename = "CS")]
    Cs,
    #[serde(rename = "CS-ac")]
    CsAc,
    #[serde(rename = "FG")]
    Fg,
    #[serde(rename = "FG-ac")]
    FgAc,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "MLR")]
    Mlr,
    #[serde(rename = "LM-Cox")]
    LmCox,
    #[serde(rename = "LM-CS")]
    LmCs,
    #[serde(rename = "LM-FG")]
    LmFg,
    #[serde(rename = "FG-sep")]
    FgSep,
    #[serde(rename = "LM-LR")]
    LmLr,
    #[serde(rename = "LM-MLR")]
    LmMlr,
    #[serde(rename = "RMTL-ts")]
    RmtlTs,
}

impl ModelKind {
    pub const ALL: [ModelKind; 15] = [
        ModelKind::Cox,
        ModelKind::CoxAc,
        ModelKind::Cs,
        ModelKind::CsAc,
        ModelKind::Fg,
        ModelKind::FgAc,
        ModelKind::Lr,
        ModelKind::Mlr,
        ModelKind::LmCox,
        ModelKind::LmCs,
        ModelKind::LmFg,
        ModelKind::FgSep,
        ModelKind::LmLr,
        ModelKind::LmMlr,
        ModelKind::RmtlTs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cox => "Cox",
            ModelKind::CoxAc => "Cox-ac",
            ModelKind::Cs => "CS",
            ModelKind::CsAc => "CS-ac",
            ModelKind::Fg => "FG",
            ModelKind::FgAc => "FG-ac",
            ModelKind::Lr => "LR",
            ModelKind::Mlr => "MLR",
            ModelKind::LmCox => "LM-Cox",
            ModelKind::LmCs => "LM-CS",
            ModelKind::LmFg => "LM-FG",
            ModelKind::FgSep => "FG-sep",
            ModelKind::LmLr => "LM-LR",
            ModelKind::LmMlr => "LM-MLR",
            ModelKind::RmtlTs => "RMTL-ts",
        }
    }

    /// Static models use onset covariates and predict at landmark 0 only.
    pub fn is_static(self) -> bool {
        matches!(
            self,
            ModelKind::Cox
                | ModelKind::CoxAc
                | ModelKind::Cs
                | ModelKind::CsAc
                | ModelKind::Fg
                | ModelKind::FgAc
                | ModelKind::Lr
                | ModelKind::Mlr
        )
    }

    /// Training follow-up: censored at the prediction horizon or not at all.
    pub fn training_window(self, window: f64) -> f64 {
        match self {
            ModelKind::Cox | ModelKind::Cs | ModelKind::Fg => f64::INFINITY,
            _ => window,
        }
    }

    /// Landmarks at which the model predicts.
    pub fn landmarks(self, grid: &[u32]) -> Vec<u32> {
        if self.is_static() {
            vec![0]
        } else {
            grid.to_vec()
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown model `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Comma-separated model names, or `all`.
pub fn parse_models(s: &str) -> Result<Vec<ModelKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelKind::ALL.to_vec());
    }
    let mut models: Vec<ModelKind> = s.split(',').map(str::parse).collect::<Result<_>>()?;
    models.sort();
    models.dedup();
    Ok(models)
}

/// `0-30`, `0,7,14` or a mix such as `0-5,10`.
pub fn parse_landmarks(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("invalid landmark list `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u32 = a.trim().parse().map_err(|_| bad())?;
                let b: u32 = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub models: Vec<ModelKind>,
    pub splits: usize,
    pub train_fraction: f64,
    pub landmarks: Vec<u32>,
    pub window: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Write every fitted model as JSON under `<out>/models`.
    pub archive: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            models: ModelKind::ALL.to_vec(),
            splits: 100,
            train_fraction: 2.0 / 3.0,
            landmarks: (0..=30).collect(),
            window: 7.0,
            seed: 2024,
            out: PathBuf::from("results"),
            archive: true,
        }
    }
}

/// Episode source: a CSV file, or the simulator when `input` is unset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub input: Option<PathBuf>,
}

/// A named simulation profile plus optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// `clinical` or `constant`.
    pub profile: String,
    pub n_episodes: usize,
    pub seed: u64,
    pub episodes_per_admission: Option<f64>,
    pub max_landmark: Option<u32>,
    pub max_days: Option<f64>,
    pub hazard_breaks: Option<Vec<f64>>,
    pub hazards: Option<Vec<[f64; 3]>>,
    pub covariates: Option<Vec<CovariateSim>>,
    pub time_resolution: Option<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            profile: "clinical".into(),
            n_episodes: 5000,
            seed: 1,
            episodes_per_admission: None,
            max_landmark: None,
            max_days: None,
            hazard_breaks: None,
            hazards: None,
            covariates: None,
            time_resolution: None,
        }
    }
}

impl SimulationSection {
    pub fn build(&self) -> Result<SimConfig> {
        let mut cfg = match self.profile.as_str() {
            "clinical" => SimConfig::clinical(self.n_episodes, self.seed),
            "constant" => SimConfig::constant(self.n_episodes, [0.02, 0.01, 0.17], self.seed),
            other => {
                return Err(Error::Config(format!(
                    "unknown simulation profile `{other}`; expected clinical or constant"
                )))
            }
        };
        if let Some(v) = self.episodes_per_admission {
            cfg.episodes_per_admission = v;
        }
        if let Some(v) = self.max_landmark {
            cfg.max_landmark = v;
        }
        if let Some(v) = self.max_days {
            cfg.max_days = v;
        }
        if let Some(v) = &self.hazard_breaks {
            cfg.hazard_breaks = v.clone();
        }
        if let Some(v) = &self.hazards {
            cfg.hazards = v.clone();
        }
        if let Some(v) = &self.covariates {
            cfg.covariates = v.clone();
        }
        if let Some(v) = self.time_resolution {
            cfg.time_resolution = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmtlSection {
    pub lambda1_grid: Vec<f64>,
    pub lambda2: f64,
    pub folds: usize,
    #[serde(flatten)]
    pub options: RmtlOptions,
}

impl Default for RmtlSection {
    fn default() -> Self {
        RmtlSection {
            lambda1_grid: log_grid(1e-3, 1e2, 10),
            lambda2: 0.0,
            folds: 5,
            options: RmtlOptions::default(),
        }
    }
}

/// Whole configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub simulation: SimulationSection,
    /// Absent section: the clinical transforms restricted to present columns.
    pub transforms: Option<TransformConfig>,
    pub landmark_features: LandmarkFeatures,
    pub newton: NewtonOptions,
    pub rmtl: RmtlSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if !(e.train_fraction > 0.0 && e.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction must be in (0, 1), got {}", e.train_fraction)));
        }
        if e.splits == 0 {
            return Err(Error::Config("splits must be at least 1".into()));
        }
        if e.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        if !(e.window > 0.0) || !e.window.is_finite() {
            return Err(Error::Config(format!("window must be finite and > 0, got {}", e.window)));
        }
        if e.landmarks.is_empty() || e.landmarks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("landmarks must be nonempty and strictly increasing".into()));
        }
        if e.landmarks[0] != 0 && e.models.iter().any(|m| m.is_static()) {
            return Err(Error::Config("static models need landmark 0 in the grid".into()));
        }
        let r = &self.rmtl;
        if r.lambda1_grid.is_empty() || r.lambda1_grid.iter().any(|l| !(*l >= 0.0)) || !(r.lambda2 >= 0.0) {
            return Err(Error::Config("rmtl penalties must be nonnegative".into()));
        }
        if r.lambda1_grid.len() > 1 && r.folds < 2 {
            return Err(Error::Config("rmtl folds must be at least 2".into()));
        }
        Ok(())
    }
}
