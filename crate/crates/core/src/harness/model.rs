use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{Config, ModelKind};
use crate::data::{fit_impute, fit_transforms, impute, EpisodeTable, EventType, ImputationModel, TransformConfig, TransformSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::glm::{fit_logistic, fit_multinomial, LogisticFit, MultinomialFit};
use crate::landmark::{
    binary_labels, expand_fine_gray, multinomial_labels, signed_labels, stack_landmarks, CensoringWeights,
    LandmarkFeatures, StackedLandmarkDataset,
};
use crate::linalg::Design;
use crate::optim::NewtonOptions;
use crate::rmtl::{fit_rmtl, tune_lambda1, RawTask, RmtlFit, Task};
use crate::survival::{
    fit_cause_specific, fit_cox, fit_fg_separate, fit_fine_gray, window_risk, CauseSpecificFit, CifMode, CoxFit,
    CoxOptions, FineGrayFit, Intervals,
};

/// Imputation, covariate transforms and landmark terms, all learned from
/// training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub imputation: ImputationModel,
    pub transforms: TransformSpec,
    pub features: LandmarkFeatures,
}

/// Rows at the grid landmarks that are still at risk there.
fn grid_rows(table: &EpisodeTable, grid: &[u32]) -> EpisodeTable {
    table.with_records(
        table
            .records
            .iter()
            .filter(|r| grid.contains(&r.landmark) && r.eventtime > r.landmark as f64)
            .cloned()
            .collect(),
    )
}

impl Preprocessor {
    pub fn fit(
        train: &EpisodeTable,
        grid: &[u32],
        transforms: &TransformConfig,
        features: &LandmarkFeatures,
    ) -> Result<Self> {
        let rows = grid_rows(train, grid);
        if rows.is_empty() {
            return Err(Error::InvalidInput("no training rows at the landmark grid".into()));
        }
        let imputation = fit_impute(&rows)?;
        let transforms = fit_transforms(&impute(&rows, &imputation)?, transforms)?;
        let names = transforms.output_names();
        let mut features = features.clone();
        features.interactions.retain(|v| names.contains(v));
        Ok(Preprocessor {
            imputation,
            transforms,
            features,
        })
    }

    pub fn design(&self, table: &EpisodeTable) -> Result<Design> {
        self.transforms.apply(&impute(table, &self.imputation)?)
    }

    /// Design plus landmark terms taken from each row's landmark.
    pub fn design_with_landmark(&self, table: &EpisodeTable) -> Result<Design> {
        let lms: Vec<u32> = table.records.iter().map(|r| r.landmark).collect();
        self.features.augment(&self.design(table)?, &lms)
    }
}

/// Fitting options shared by all models.
#[derive(Debug, Clone)]
pub struct ModelSettings {
    pub window: f64,
    pub grid: Vec<u32>,
    pub newton: NewtonOptions,
    pub rmtl: super::config::RmtlSection,
    pub exec: Exec,
}

impl ModelSettings {
    pub fn from_config(cfg: &Config, exec: Exec) -> Self {
        ModelSettings {
            window: cfg.experiment.window,
            grid: cfg.experiment.landmarks.clone(),
            newton: NewtonOptions { exec, ..cfg.newton },
            rmtl: cfg.rmtl.clone(),
            exec,
        }
    }

    fn cox(&self) -> CoxOptions {
        CoxOptions {
            newton: self.newton,
            fixed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitted {
    Cox(CoxFit),
    CauseSpecific { fit: CauseSpecificFit, mode: CifMode },
    FineGray(FineGrayFit),
    Logistic(LogisticFit),
    Multinomial(MultinomialFit),
    /// One subdistribution fit per landmark; `None` where fitting failed.
    PerLandmark(Vec<(u32, Option<FineGrayFit>)>),
    Rmtl(RmtlFit),
}

/// Outcome of one estimation run inside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostic {
    /// Landmark of a per-landmark fit; `None` for a single fit.
    pub landmark: Option<u32>,
    pub ok: bool,
    pub message: Option<String>,
}

impl FitDiagnostic {
    fn single(ok: bool, message: Option<String>) -> Self {
        FitDiagnostic {
            landmark: None,
            ok,
            message,
        }
    }
}

/// A fitted model with everything needed to predict on raw episode rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub window: f64,
    pub landmarks: Vec<u32>,
    pub preprocessor: Preprocessor,
    pub fitted: Fitted,
    pub diagnostics: Vec<FitDiagnostic>,
}

/// One evaluated row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub episode_id: String,
    pub admission_id: String,
    pub landmark: u32,
    /// 1 if the event of interest occurs within the window.
    pub observed: f64,
    pub risk: Option<f64>,
}

fn report_message(r: &crate::optim::FitReport) -> Option<String> {
    if r.ok() {
        None
    } else if r.diverged {
        Some("coefficients diverged".into())
    } else {
        Some(format!("no convergence after {} iterations", r.iterations))
    }
}

fn cs_diagnostic(fit: &CauseSpecificFit) -> FitDiagnostic {
    let mut messages: Vec<String> = fit.components.iter().filter_map(|c| c.error.clone()).collect();
    for c in &fit.components {
        if let Some(f) = &c.fit {
            if let Some(m) = report_message(&f.report) {
                messages.push(format!("cause {}: {m}", c.cause.code()));
            }
        }
    }
    FitDiagnostic::single(fit.ok(), (!messages.is_empty()).then(|| messages.join("; ")))
}

/// Row indices grouped by landmark, in increasing landmark order.
fn by_landmark(table: &EpisodeTable) -> BTreeMap<u32, Vec<usize>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.records.iter().enumerate() {
        groups.entry(r.landmark).or_default().push(i);
    }
    groups
}

pub fn fit_model(
    kind: ModelKind,
    train: &EpisodeTable,
    prep: &Preprocessor,
    settings: &ModelSettings,
    seed: u64,
) -> Result<TrainedModel> {
    let w = settings.window;
    let tw = kind.training_window(w);
    let landmarks = kind.landmarks(&settings.grid);
    let opts = settings.cox();
    let (fitted, diagnostics) = match kind {
        ModelKind::Cox | ModelKind::CoxAc => {
            let lm0 = stack_landmarks(train, &[0], tw)?.table;
            let fit = fit_cox(&Intervals::for_cause(&lm0, EventType::Target), &prep.design(&lm0)?, &opts)?;
            let d = FitDiagnostic::single(fit.report.ok(), report_message(&fit.report));
            (Fitted::Cox(fit), vec![d])
        }
        ModelKind::Cs | ModelKind::CsAc => {
            let lm0 = stack_landmarks(train, &[0], tw)?.table;
            let fit = fit_cause_specific(&lm0, &prep.design(&lm0)?, &EventType::ALL_CAUSES, &opts)?;
            let d = cs_diagnostic(&fit);
            (
                Fitted::CauseSpecific {
                    fit,
                    mode: CifMode::Exponential,
                },
                vec![d],
            )
        }
        ModelKind::Fg | ModelKind::FgAc => {
            let st = stack_landmarks(train, &[0], tw)?;
            let fit = fit_fine_gray(
                &expand_fine_gray(&st, CensoringWeights::Administrative),
                &prep.design(&st.table)?,
                &opts,
            )?;
            let d = FitDiagnostic::single(fit.cox.report.ok(), report_message(&fit.cox.report));
            (Fitted::FineGray(fit), vec![d])
        }
        ModelKind::Lr => {
            let lm0 = stack_landmarks(train, &[0], w)?.table;
            let fit = fit_logistic(&prep.design(&lm0)?, &binary_labels(&lm0), &settings.newton)?;
            let d = FitDiagnostic::single(fit.report.ok(), report_message(&fit.report));
            (Fitted::Logistic(fit), vec![d])
        }
        ModelKind::Mlr => {
            let lm0 = stack_landmarks(train, &[0], w)?.table;
            let fit = fit_multinomial(&prep.design(&lm0)?, &multinomial_labels(&lm0), 4, &settings.newton)?;
            let d = FitDiagnostic::single(fit.report.ok(), report_message(&fit.report));
            (Fitted::Multinomial(fit), vec![d])
        }
        ModelKind::LmCox => {
            let st = stack_landmarks(train, &settings.grid, w)?;
            let x = prep.design_with_landmark(&st.table)?;
            let fit = fit_cox(&Intervals::for_cause(&st.table, EventType::Target), &x, &opts)?;
            let d = FitDiagnostic::single(fit.report.ok(), report_message(&fit.report));
            (Fitted::Cox(fit), vec![d])
        }
        ModelKind::LmCs => {
            let st = stack_landmarks(train, &settings.grid, w)?;
            let x = prep.design_with_landmark(&st.table)?;
            let fit = fit_cause_specific(&st.table, &x, &EventType::ALL_CAUSES, &opts)?;
            let d = cs_diagnostic(&fit);
            (
                Fitted::CauseSpecific {
                    fit,
                    mode: CifMode::ProductIntegral,
                },
                vec![d],
            )
        }
        ModelKind::LmFg => {
            let st = stack_landmarks(train, &settings.grid, w)?;
            let x = prep.design_with_landmark(&st.table)?;
            let fit = fit_fine_gray(&expand_fine_gray(&st, CensoringWeights::Administrative), &x, &opts)?;
            let d = FitDiagnostic::single(fit.cox.report.ok(), report_message(&fit.cox.report));
            (Fitted::FineGray(fit), vec![d])
        }
        ModelKind::FgSep => {
            let st = stack_landmarks(train, &settings.grid, w)?;
            let x = prep.design(&st.table)?;
            let mut fits = Vec::new();
            let mut diags = Vec::new();
            for (s, res) in fit_fg_separate(&st, &x, &opts) {
                let (fit, ok, message) = match res {
                    Ok(f) => {
                        let m = report_message(&f.cox.report);
                        let ok = f.cox.report.ok();
                        (Some(f), ok, m)
                    }
                    Err(e) => (None, false, Some(e.to_string())),
                };
                diags.push(FitDiagnostic {
                    landmark: Some(s),
                    ok,
                    message,
                });
                fits.push((s, fit));
            }
            (Fitted::PerLandmark(fits), diags)
        }
        ModelKind::LmLr => {
            let st = stack_landmarks(train, &settings.grid, w)?;
            let x = prep.design_with_landmark(&st.table)?;
            let fit = fit_logistic(&x, &binary_labels(&st.table), &settings.newton)?;
            let d = FitDiagnostic::single(fit.report.ok(), report_message(&fit.report));
            (Fitted::Logistic(fit), vec![d])
        }
        ModelKind::LmMlr => {
            let st = stack_landmarks(train, &settings.grid, w)?;
            let x = prep.design_with_landmark(&st.table)?;
            let fit = fit_multinomial(&x, &multinomial_labels(&st.table), 4, &settings.newton)?;
            let d = FitDiagnostic::single(fit.report.ok(), report_message(&fit.report));
            (Fitted::Multinomial(fit), vec![d])
        }
        ModelKind::RmtlTs => {
            let st = stack_landmarks(train, &settings.grid, w)?;
            let (fit, diags) = fit_rmtl_tasks(&st, prep, settings, seed)?;
            (Fitted::Rmtl(fit), diags)
        }
    };
    Ok(TrainedModel {
        kind,
        window: w,
        landmarks,
        preprocessor: prep.clone(),
        fitted,
        diagnostics,
    })
}

/// One logistic task per landmark; landmarks whose training rows lack a
/// class are left out and reported.
fn fit_rmtl_tasks(
    st: &StackedLandmarkDataset,
    prep: &Preprocessor,
    settings: &ModelSettings,
    seed: u64,
) -> Result<(RmtlFit, Vec<FitDiagnostic>)> {
    let x = prep.design(&st.table)?;
    let y = signed_labels(&st.table);
    let mut raw = Vec::new();
    let mut diags = Vec::new();
    for (s, idx) in by_landmark(&st.table) {
        let yt: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        if !(yt.contains(&1.0) && yt.contains(&-1.0)) {
            diags.push(FitDiagnostic {
                landmark: Some(s),
                ok: false,
                message: Some(format!("task {s} has a single outcome class")),
            });
            continue;
        }
        raw.push(RawTask {
            id: s,
            x: x.select_rows(&idx),
            y: yt,
            groups: idx.iter().map(|&i| st.table.records[i].admission_id.clone()).collect(),
        });
    }
    if raw.is_empty() {
        return Err(Error::Degenerate("no landmark task has both outcome classes".into()));
    }
    let r = &settings.rmtl;
    let opts = crate::rmtl::RmtlOptions {
        exec: settings.exec,
        ..r.options
    };
    let tuned = tune_lambda1(&raw, &r.lambda1_grid, r.lambda2, r.folds, seed, &opts)?;
    let tasks: Vec<Task> = raw
        .iter()
        .map(|t| Task::new(t.id, &t.x, t.y.clone()))
        .collect::<Result<_>>()?;
    let fit = fit_rmtl(&tasks, tuned.lambda1, r.lambda2, &opts, None)?;
    diags.push(FitDiagnostic {
        landmark: None,
        ok: fit.converged,
        message: (!fit.converged).then(|| format!("no convergence after {} iterations", fit.iterations)),
    });
    Ok((fit, diags))
}

impl TrainedModel {
    /// Number of estimation runs and how many of them failed.
    pub fn fit_counts(&self) -> (usize, usize) {
        let failures = self.diagnostics.iter().filter(|d| !d.ok).count();
        (self.diagnostics.len(), failures)
    }

    /// Risk within the window for every row of `data` at risk at one of the
    /// model's landmarks.
    pub fn predict(&self, data: &EpisodeTable, exec: Exec) -> Result<Vec<Prediction>> {
        let rows = stack_landmarks(data, &self.landmarks, self.window)?.table;
        let observed = binary_labels(&rows);
        let risks = self.risks(&rows, exec)?;
        Ok(rows
            .records
            .iter()
            .zip(observed)
            .zip(risks)
            .map(|((r, y), risk)| Prediction {
                episode_id: r.episode_id.clone(),
                admission_id: r.admission_id.clone(),
                landmark: r.landmark,
                observed: y,
                risk,
            })
            .collect())
    }

    fn risks(&self, rows: &EpisodeTable, exec: Exec) -> Result<Vec<Option<f64>>> {
        let w = self.window;
        let prep = &self.preprocessor;
        let dynamic = !self.kind.is_static() && !matches!(self.kind, ModelKind::FgSep | ModelKind::RmtlTs);
        let x = if dynamic {
            prep.design_with_landmark(rows)?
        } else {
            prep.design(rows)?
        };
        let lm: Vec<f64> = rows.records.iter().map(|r| r.landmark as f64).collect();
        let all = |v: Vec<f64>| v.into_iter().map(Some).collect::<Vec<_>>();
        let window_risks = |cox: &CoxFit| -> Result<Vec<Option<f64>>> {
            let eta = cox.linear_predictors(&x)?;
            Ok(eta
                .iter()
                .zip(&lm)
                .map(|(&e, &s)| Some(window_risk(&cox.baseline, e, s, s + w)))
                .collect())
        };
        let mut out = vec![None; rows.len()];
        match &self.fitted {
            Fitted::Cox(f) => return window_risks(f),
            Fitted::FineGray(f) => return window_risks(&f.cox),
            Fitted::Logistic(f) => return Ok(all(f.predict(&x)?)),
            Fitted::Multinomial(f) => return Ok(all(f.predict_category(&x, EventType::Target.code() as usize)?)),
            Fitted::CauseSpecific { fit, mode } => {
                for (s, idx) in by_landmark(rows) {
                    let s = s as f64;
                    let p = fit.predict(&x.select_rows(&idx), s, s + w, *mode, exec)?;
                    for (i, v) in idx.into_iter().zip(p) {
                        out[i] = Some(v);
                    }
                }
            }
            Fitted::PerLandmark(fits) => {
                for (s, idx) in by_landmark(rows) {
                    if let Some((_, Some(f))) = fits.iter().find(|(t, _)| *t == s) {
                        let p = f.predict_window(&x.select_rows(&idx), s as f64, w)?;
                        for (i, v) in idx.into_iter().zip(p) {
                            out[i] = Some(v);
                        }
                    }
                }
            }
            Fitted::Rmtl(f) => {
                for (s, idx) in by_landmark(rows) {
                    if f.task_ids.contains(&s) {
                        let p = f.predict(s, &x.select_rows(&idx))?;
                        for (i, v) in idx.into_iter().zip(p) {
                            out[i] = Some(v);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
