use serde::{Deserialize, Serialize};

use super::EpisodeTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillKind {
    Mean,
    /// Most frequent value; used when every observed value is 0 or 1.
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub variable: String,
    pub kind: FillKind,
    pub value: f64,
}

/// Per-variable fill values learned from a training table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub fills: Vec<Fill>,
}

pub fn fit_impute(train: &EpisodeTable) -> Result<ImputationModel> {
    let mut fills = Vec::with_capacity(train.covariate_names.len());
    for (col, name) in train.covariate_names.iter().enumerate() {
        let vals: Vec<f64> = train.records.iter().filter_map(|r| r.covariates[col]).collect();
        if vals.is_empty() {
            return Err(Error::Degenerate(format!(
                "covariate `{name}` has no observed training values; cannot impute"
            )));
        }
        let fill = if vals.iter().all(|&v| v == 0.0 || v == 1.0) {
            let ones = vals.iter().filter(|&&v| v == 1.0).count();
            // ties go to 0
            let value = if 2 * ones > vals.len() { 1.0 } else { 0.0 };
            Fill {
                variable: name.clone(),
                kind: FillKind::Mode,
                value,
            }
        } else {
            Fill {
                variable: name.clone(),
                kind: FillKind::Mean,
                value: vals.iter().sum::<f64>() / vals.len() as f64,
            }
        };
        fills.push(fill);
    }
    Ok(ImputationModel { fills })
}

/// Fills missing values by column name; observed values are untouched.
pub fn impute(table: &EpisodeTable, model: &ImputationModel) -> Result<EpisodeTable> {
    let values: Vec<f64> = table
        .covariate_names
        .iter()
        .map(|name| {
            model
                .fills
                .iter()
                .find(|f| &f.variable == name)
                .map(|f| f.value)
                .ok_or_else(|| Error::Schema(format!("no imputation value for covariate `{name}`")))
        })
        .collect::<Result<_>>()?;
    let mut out = table.clone();
    for rec in &mut out.records {
        for (v, &fill) in rec.covariates.iter_mut().zip(&values) {
            v.get_or_insert(fill);
        }
    }
    Ok(out)
}
