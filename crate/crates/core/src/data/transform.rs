use serde::{Deserialize, Serialize};

use super::EpisodeTable;
use crate::error::{Error, Result};
use crate::linalg::Design;
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    /// Variable expanded into a restricted cubic spline.
    pub spline_variable: Option<String>,
    /// Quantiles of the training distribution used as knots.
    pub knot_quantiles: Vec<f64>,
    pub log_variables: Vec<String>,
    pub log_offset: f64,
    /// Variables centred and scaled (after any log transform).
    pub standardize: Vec<String>,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            spline_variable: Some("VIT_systolic_bp_last".into()),
            knot_quantiles: vec![0.1, 0.5, 0.9],
            log_variables: vec!["LAB_WBC_last".into(), "LAB_CRP_last".into()],
            log_offset: 1.0,
            standardize: vec![
                "VIT_temperature_max".into(),
                "LAB_WBC_last".into(),
                "LAB_CRP_last".into(),
            ],
        }
    }
}

impl TransformConfig {
    /// No spline, no logs, no scaling.
    pub fn identity() -> Self {
        TransformConfig {
            spline_variable: None,
            knot_quantiles: vec![0.1, 0.5, 0.9],
            log_variables: Vec::new(),
            log_offset: 1.0,
            standardize: Vec::new(),
        }
    }

    /// Drops variables that are not among `names`.
    pub fn retain_present(mut self, names: &[String]) -> Self {
        let present = |v: &String| names.contains(v);
        if !self.spline_variable.as_ref().is_some_and(present) {
            self.spline_variable = None;
        }
        self.log_variables.retain(present);
        self.standardize.retain(present);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub variable: String,
    pub knots: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub variable: String,
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// Learned covariate transforms. Output column order follows `input_columns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub input_columns: Vec<String>,
    pub spline: Option<SplineSpec>,
    pub log_variables: Vec<String>,
    pub log_offset: f64,
    pub standardization: Vec<Standardization>,
}

/// Nonlinear terms of the restricted cubic spline with the given knots
/// (k knots give k - 2 terms; the linear term is the raw value). Terms are
/// normalised by the squared outer-knot span.
pub fn rcs_basis(x: f64, knots: &[f64]) -> Vec<f64> {
    let k = knots.len();
    if k < 3 {
        return Vec::new();
    }
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let (tk1, tk) = (knots[k - 2], knots[k - 1]);
    let norm = (tk - knots[0]).powi(2);
    (0..k - 2)
        .map(|j| {
            let tj = knots[j];
            (cube(x - tj) - cube(x - tk1) * (tk - tj) / (tk - tk1)
                + cube(x - tk) * (tk1 - tj) / (tk - tk1))
                / norm
        })
        .collect()
}

fn observed(table: &EpisodeTable, col: usize) -> Vec<f64> {
    table.records.iter().filter_map(|r| r.covariates[col]).collect()
}

pub fn fit_transforms(train: &EpisodeTable, config: &TransformConfig) -> Result<TransformSpec> {
    if train.is_empty() {
        return Err(Error::InvalidInput("cannot learn transforms from an empty training set".into()));
    }
    if config.log_offset.is_nan() {
        return Err(Error::Config("log_offset must be a number".into()));
    }
    let spline = match &config.spline_variable {
        None => None,
        Some(var) => {
            if config.standardize.contains(var) || config.log_variables.contains(var) {
                return Err(Error::Config(format!(
                    "spline variable `{var}` cannot also be log-transformed or standardized"
                )));
            }
            let col = train.covariate_index(var)?;
            let mut vals = observed(train, col);
            vals.sort_by(f64::total_cmp);
            let mut distinct = vals.clone();
            distinct.dedup();
            if distinct.len() < config.knot_quantiles.len().max(3) {
                return Err(Error::Degenerate(format!(
                    "spline variable `{var}` has {} distinct values; need at least {}",
                    distinct.len(),
                    config.knot_quantiles.len().max(3)
                )));
            }
            let knots: Vec<f64> = config
                .knot_quantiles
                .iter()
                .map(|&q| quantile_sorted(&vals, q))
                .collect();
            if knots.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Degenerate(format!(
                    "spline knots for `{var}` are not strictly increasing: {knots:?}"
                )));
            }
            Some(SplineSpec {
                variable: var.clone(),
                knots,
            })
        }
    };

    for var in &config.log_variables {
        let col = train.covariate_index(var)?;
        if let Some(bad) = observed(train, col).into_iter().find(|v| v + config.log_offset <= 0.0) {
            return Err(Error::Degenerate(format!(
                "log transform of `{var}` undefined for value {bad} with offset {}",
                config.log_offset
            )));
        }
    }

    let mut standardization = Vec::new();
    for var in &config.standardize {
        let col = train.covariate_index(var)?;
        let logged = config.log_variables.contains(var);
        let vals: Vec<f64> = observed(train, col)
            .into_iter()
            .map(|v| if logged { (v + config.log_offset).ln() } else { v })
            .collect();
        if vals.len() < 2 {
            return Err(Error::Degenerate(format!(
                "`{var}` needs at least two observed values to standardize"
            )));
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Degenerate(format!("`{var}` has zero standard deviation")));
        }
        standardization.push(Standardization {
            variable: var.clone(),
            mean,
            sd,
        });
    }

    Ok(TransformSpec {
        input_columns: train.covariate_names.clone(),
        spline,
        log_variables: config.log_variables.clone(),
        log_offset: config.log_offset,
        standardization,
    })
}

impl TransformSpec {
    /// Names of the design columns produced by [`TransformSpec::apply`].
    pub fn output_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for var in &self.input_columns {
            if let Some(sp) = self.spline.as_ref().filter(|s| &s.variable == var) {
                names.push(var.clone());
                for j in 0..sp.knots.len().saturating_sub(2) {
                    names.push(format!("{var}{}", "'".repeat(j + 1)));
                }
            } else if self.log_variables.contains(var) {
                names.push(format!("log({var})"));
            } else {
                names.push(var.clone());
            }
        }
        names
    }

    /// Builds the design matrix. Values must already be imputed.
    pub fn apply(&self, table: &EpisodeTable) -> Result<Design> {
        let cols: Vec<usize> = self
            .input_columns
            .iter()
            .map(|v| table.covariate_index(v))
            .collect::<Result<_>>()?;
        enum Step<'a> {
            Spline(&'a [f64]),
            Log(Option<&'a Standardization>),
            Plain(Option<&'a Standardization>),
        }
        let steps: Vec<Step> = self
            .input_columns
            .iter()
            .map(|var| {
                let std = self.standardization.iter().find(|s| &s.variable == var);
                match &self.spline {
                    Some(sp) if &sp.variable == var => Step::Spline(&sp.knots),
                    _ if self.log_variables.contains(var) => Step::Log(std),
                    _ => Step::Plain(std),
                }
            })
            .collect();

        let names = self.output_names();
        let mut data = Vec::with_capacity(table.len() * names.len());
        for (row, rec) in table.records.iter().enumerate() {
            for ((&col, step), var) in cols.iter().zip(&steps).zip(&self.input_columns) {
                let v = rec.covariates[col].ok_or_else(|| Error::Validation {
                    row,
                    message: format!("missing value for `{var}`; impute before transforming"),
                })?;
                match step {
                    Step::Spline(knots) => {
                        data.push(v);
                        data.extend(rcs_basis(v, knots));
                    }
                    Step::Log(std) => {
                        let l = (v + self.log_offset).ln();
                        data.push(std.map_or(l, |s| s.apply(l)));
                    }
                    Step::Plain(std) => data.push(std.map_or(v, |s| s.apply(v))),
                }
            }
        }
        Design::new(names, table.len(), data)
    }
}
