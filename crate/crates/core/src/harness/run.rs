use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{Config, ModelKind};
use super::model::{fit_model, ModelSettings, Prediction, Preprocessor, TrainedModel};
use super::splits::{make_splits, SplitAssignment};
use crate::data::{fmt_num, load_episodes, EpisodeTable, Schema, TransformConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::{evaluate, summarize, METRIC_NAMES};
use crate::simulation::{derive_seed, simulate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: ModelKind,
    pub landmark: u32,
    pub split: usize,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub model: ModelKind,
    /// `None` for a failure of a single (non per-landmark) fit.
    pub landmark: Option<u32>,
    pub split: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub model: ModelKind,
    pub landmark: Option<u32>,
    pub fits: usize,
    pub failures: usize,
}

/// Everything produced for one split.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub split: SplitAssignment,
    pub preprocessor: Option<Preprocessor>,
    pub metrics: Vec<MetricRow>,
    pub failures: Vec<FailureRow>,
    pub models: Vec<TrainedModel>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub splits: Vec<SplitOutcome>,
}

/// Loads the configured CSV or runs the configured simulation.
pub fn load_data(cfg: &Config, exec: Exec) -> Result<EpisodeTable> {
    match &cfg.data.input {
        Some(path) => load_episodes(path, &Schema::default()),
        None => simulate(&cfg.simulation.build()?, exec),
    }
}

pub fn transform_config(cfg: &Config, table: &EpisodeTable) -> TransformConfig {
    cfg.transforms
        .clone()
        .unwrap_or_default()
        .retain_present(&table.covariate_names)
}

/// Metrics of one model at each landmark it predicts at.
pub fn evaluate_predictions(
    model: ModelKind,
    split: usize,
    landmarks: &[u32],
    preds: &[Prediction],
) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for &s in landmarks {
        let (p, y): (Vec<f64>, Vec<f64>) = preds
            .iter()
            .filter(|r| r.landmark == s)
            .filter_map(|r| r.risk.map(|v| (v, r.observed)))
            .unzip();
        let values = evaluate(&p, &y).map(|r| r.values()).unwrap_or([None; 5]);
        for (metric, value) in METRIC_NAMES.iter().zip(values) {
            rows.push(MetricRow {
                model,
                landmark: s,
                split,
                metric: metric.to_string(),
                value,
            });
        }
    }
    rows
}

fn na_rows(model: ModelKind, split: usize, landmarks: &[u32]) -> Vec<MetricRow> {
    evaluate_predictions(model, split, landmarks, &[])
}

/// Learns preprocessing on the training admissions, fits every model and
/// evaluates it on the test admissions.
pub fn run_split(cfg: &Config, table: &EpisodeTable, split: &SplitAssignment, exec: Exec) -> SplitOutcome {
    let settings = ModelSettings::from_config(cfg, exec);
    let models = &cfg.experiment.models;
    let (train, test) = split.partition(table);
    let mut out = SplitOutcome {
        split: split.clone(),
        preprocessor: None,
        metrics: Vec::new(),
        failures: Vec::new(),
        models: Vec::new(),
    };
    let prep = match Preprocessor::fit(
        &train,
        &settings.grid,
        &transform_config(cfg, table),
        &cfg.landmark_features,
    ) {
        Ok(p) => p,
        Err(e) => {
            warn!("split {}: preprocessing failed: {e}", split.index);
            for &m in models {
                out.failures.push(FailureRow {
                    model: m,
                    landmark: None,
                    split: split.index,
                    message: format!("preprocessing: {e}"),
                });
                out.metrics.extend(na_rows(m, split.index, &m.landmarks(&settings.grid)));
            }
            return out;
        }
    };
    for &m in models {
        let landmarks = m.landmarks(&settings.grid);
        let seed = derive_seed(split.seed, m as u64);
        let fitted = fit_model(m, &train, &prep, &settings, seed)
            .and_then(|model| model.predict(&test, exec).map(|p| (model, p)));
        match fitted {
            Ok((model, preds)) => {
                for d in model.diagnostics.iter().filter(|d| !d.ok) {
                    out.failures.push(FailureRow {
                        model: m,
                        landmark: d.landmark,
                        split: split.index,
                        message: d.message.clone().unwrap_or_else(|| "fit failed".into()),
                    });
                }
                out.metrics.extend(evaluate_predictions(m, split.index, &landmarks, &preds));
                out.models.push(model);
            }
            Err(e) => {
                warn!("split {} model {m}: {e}", split.index);
                out.failures.push(FailureRow {
                    model: m,
                    landmark: None,
                    split: split.index,
                    message: e.to_string(),
                });
                out.metrics.extend(na_rows(m, split.index, &landmarks));
            }
        }
    }
    out.preprocessor = Some(prep);
    out
}

pub fn run_experiment(cfg: &Config, table: &EpisodeTable, exec: Exec) -> Result<ExperimentResults> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let splits = make_splits(&table.admission_ids(), e.train_fraction, e.splits, e.seed)?;
    info!(
        "{} episode rows, {} splits, {} models",
        table.len(),
        splits.len(),
        e.models.len()
    );
    // splits run in parallel; each split is sequential inside
    let inner = if exec.is_parallel() { Exec::Sequential } else { exec };
    let outcomes = exec.map(&splits, |s| {
        let o = run_split(cfg, table, s, inner);
        info!("split {} done", s.index);
        o
    });
    Ok(ExperimentResults { splits: outcomes })
}

fn model_order(m: ModelKind) -> usize {
    ModelKind::ALL.iter().position(|&k| k == m).unwrap_or(usize::MAX)
}

fn metric_order(name: &str) -> usize {
    METRIC_NAMES.iter().position(|&k| k == name).unwrap_or(usize::MAX)
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| "NA".into())
}

fn landmark_cell(l: Option<u32>) -> String {
    l.map(|v| v.to_string()).unwrap_or_else(|| "all".into())
}

impl ExperimentResults {
    /// All metric rows sorted by model (roster order), landmark, split, metric.
    pub fn metric_rows(&self) -> Vec<&MetricRow> {
        let mut rows: Vec<&MetricRow> = self.splits.iter().flat_map(|s| &s.metrics).collect();
        rows.sort_by_key(|r| (model_order(r.model), r.landmark, r.split, metric_order(&r.metric)));
        rows
    }

    pub fn failure_rows(&self) -> Vec<&FailureRow> {
        let mut rows: Vec<&FailureRow> = self.splits.iter().flat_map(|s| &s.failures).collect();
        rows.sort_by(|a, b| {
            (model_order(a.model), a.landmark, a.split, &a.message).cmp(&(
                model_order(b.model),
                b.landmark,
                b.split,
                &b.message,
            ))
        });
        rows
    }

    /// Fit and failure counts per model and landmark, summed over splits.
    pub fn convergence(&self) -> Vec<ConvergenceRow> {
        let mut acc: BTreeMap<(usize, Option<u32>), (ModelKind, usize, usize)> = BTreeMap::new();
        for s in &self.splits {
            for m in &s.models {
                for d in &m.diagnostics {
                    let e = acc.entry((model_order(m.kind), d.landmark)).or_insert((m.kind, 0, 0));
                    e.1 += 1;
                    e.2 += usize::from(!d.ok);
                }
            }
            // fits that raised an error never produced a model
            for f in &s.failures {
                if !s.models.iter().any(|m| m.kind == f.model) {
                    let e = acc.entry((model_order(f.model), f.landmark)).or_insert((f.model, 0, 0));
                    e.1 += 1;
                    e.2 += 1;
                }
            }
        }
        acc.into_iter()
            .map(|((_, landmark), (model, fits, failures))| ConvergenceRow {
                model,
                landmark,
                fits,
                failures,
            })
            .collect()
    }

    /// Values of one metric across splits for a model at a landmark.
    pub fn values(&self, model: ModelKind, landmark: u32, metric: &str) -> Vec<Option<f64>> {
        self.metric_rows()
            .into_iter()
            .filter(|r| r.model == model && r.landmark == landmark && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    /// Mean of the available values of one metric.
    pub fn mean(&self, model: ModelKind, landmark: u32, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self.values(model, landmark, metric).into_iter().flatten().collect();
        summarize(&v).map(|s| s.mean)
    }

    pub fn write_metrics<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "landmark", "split", "metric", "value"])?;
        for r in self.metric_rows() {
            out.write_record([
                r.model.name().to_string(),
                r.landmark.to_string(),
                r.split.to_string(),
                r.metric.clone(),
                cell(r.value),
            ])?;
        }
        out.flush().map_err(|e| Error::io("metrics", e))?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, w: W) -> Result<()> {
        let mut groups: BTreeMap<(usize, u32, usize), (ModelKind, String, Vec<Option<f64>>)> = BTreeMap::new();
        for r in self.metric_rows() {
            groups
                .entry((model_order(r.model), r.landmark, metric_order(&r.metric)))
                .or_insert_with(|| (r.model, r.metric.clone(), Vec::new()))
                .2
                .push(r.value);
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "landmark", "metric", "mean", "median", "lo", "hi", "n", "missing"])?;
        for ((_, landmark, _), (model, metric, values)) in groups {
            let finite: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
            let s = summarize(&finite);
            out.write_record([
                model.name().to_string(),
                landmark.to_string(),
                metric,
                cell(s.map(|s| s.mean)),
                cell(s.map(|s| s.median)),
                cell(s.map(|s| s.lo)),
                cell(s.map(|s| s.hi)),
                finite.len().to_string(),
                (values.len() - finite.len()).to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("summary", e))?;
        Ok(())
    }

    pub fn write_convergence<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "landmark", "fits", "failures"])?;
        for r in self.convergence() {
            out.write_record([
                r.model.name().to_string(),
                landmark_cell(r.landmark),
                r.fits.to_string(),
                r.failures.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("convergence", e))?;
        Ok(())
    }

    pub fn write_failures<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "landmark", "split", "message"])?;
        for r in self.failure_rows() {
            out.write_record([
                r.model.name().to_string(),
                landmark_cell(r.landmark),
                r.split.to_string(),
                r.message.clone(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("failures", e))?;
        Ok(())
    }

    /// metrics.csv, summary.csv, convergence.csv, failures.csv and, when
    /// `archive` is set, `models/split_NNN/<model>.json`.
    pub fn write_all(&self, dir: &Path, archive: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p).map(std::io::BufWriter::new).map_err(|e| Error::io(&p, e))
        };
        self.write_metrics(create("metrics.csv")?)?;
        self.write_summary(create("summary.csv")?)?;
        self.write_convergence(create("convergence.csv")?)?;
        self.write_failures(create("failures.csv")?)?;
        if archive {
            for s in &self.splits {
                let sub = dir.join("models").join(format!("split_{:03}", s.split.index));
                std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                for m in &s.models {
                    let p = sub.join(format!("{}.json", m.kind.name()));
                    std::fs::write(&p, m.to_json()?).map_err(|e| Error::io(&p, e))?;
                }
                let p = sub.join("split.json");
                std::fs::write(&p, serde_json::to_string(&s.split)?).map_err(|e| Error::io(&p, e))?;
            }
        }
        Ok(())
    }
}
