//! Landmark subsets with administrative censoring, the stacked super
//! dataset, landmark-time features and the counting-process expansion used
//! for subdistribution-hazard fits.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_num, EpisodeRecord, EpisodeTable, EventType};
use crate::error::{Error, Result};
use crate::linalg::Design;

fn check_window(w: f64) -> Result<()> {
    if w.is_nan() || w <= 0.0 {
        return Err(Error::InvalidInput(format!("prediction window must be > 0, got {w}")));
    }
    Ok(())
}

fn censor_at(rec: &EpisodeRecord, horizon: f64) -> EpisodeRecord {
    let mut r = rec.clone();
    if r.eventtime > horizon {
        r.eventtime = horizon;
        r.event_type = EventType::Censored;
    }
    r
}

/// Episodes at risk at landmark `s` (rows with `LM == s` and `eventtime > s`),
/// administratively censored at `s + w`. `w` may be infinite.
pub fn build_landmark_subset(episodes: &EpisodeTable, s: u32, w: f64) -> Result<EpisodeTable> {
    check_window(w)?;
    let horizon = s as f64 + w;
    let records = episodes
        .records
        .iter()
        .filter(|r| r.landmark == s && r.eventtime > s as f64)
        .map(|r| censor_at(r, horizon))
        .collect();
    Ok(episodes.with_records(records))
}

/// Union of landmark subsets. Rows are ordered by episode (first appearance
/// in the input) and then by landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedLandmarkDataset {
    pub table: EpisodeTable,
    pub grid: Vec<u32>,
    pub window: f64,
}

pub fn stack_landmarks(episodes: &EpisodeTable, grid: &[u32], w: f64) -> Result<StackedLandmarkDataset> {
    check_window(w)?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("landmark grid is empty".into()));
    }
    if grid.windows(2).any(|g| g[1] <= g[0]) {
        return Err(Error::InvalidInput(format!(
            "landmark grid must be strictly increasing: {grid:?}"
        )));
    }
    let mut order: HashMap<&str, usize> = HashMap::new();
    for r in &episodes.records {
        let next = order.len();
        order.entry(r.episode_id.as_str()).or_insert(next);
    }
    let mut rows: Vec<&EpisodeRecord> = episodes
        .records
        .iter()
        .filter(|r| grid.binary_search(&r.landmark).is_ok() && r.eventtime > r.landmark as f64)
        .collect();
    rows.sort_by_key(|r| (order[r.episode_id.as_str()], r.landmark));
    let records = rows
        .into_iter()
        .map(|r| censor_at(r, r.landmark as f64 + w))
        .collect();
    Ok(StackedLandmarkDataset {
        table: episodes.with_records(records),
        grid: grid.to_vec(),
        window: w,
    })
}

impl StackedLandmarkDataset {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn landmarks(&self) -> Vec<u32> {
        self.table.records.iter().map(|r| r.landmark).collect()
    }

    /// Row indices of one landmark subset, in stacked order.
    pub fn subset_indices(&self, s: u32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.table.records[i].landmark == s).collect()
    }
}

/// Smooth landmark-time terms `s/scale`, `(s/scale)^2` and their products
/// with selected design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFeatures {
    pub scale: f64,
    pub interactions: Vec<String>,
}

impl Default for LandmarkFeatures {
    fn default() -> Self {
        LandmarkFeatures {
            scale: 30.0,
            interactions: vec!["MS_is_ICU_unit".into()],
        }
    }
}

impl LandmarkFeatures {
    pub fn terms(&self, s: u32) -> (f64, f64) {
        let lin = s as f64 / self.scale;
        (lin, lin * lin)
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["lm_lin".to_string(), "lm_quad".to_string()];
        for v in &self.interactions {
            names.push(format!("{v}:lm_lin"));
            names.push(format!("{v}:lm_quad"));
        }
        names
    }

    /// Appends the landmark columns; `landmarks[i]` is the landmark of row `i`.
    pub fn augment(&self, design: &Design, landmarks: &[u32]) -> Result<Design> {
        if landmarks.len() != design.nrows {
            return Err(Error::InvalidInput(format!(
                "{} landmarks for {} design rows",
                landmarks.len(),
                design.nrows
            )));
        }
        let cols: Vec<usize> = self
            .interactions
            .iter()
            .map(|v| {
                design.column_index(v).ok_or_else(|| {
                    Error::Schema(format!("interaction column `{v}` not in design"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(design.with_columns(&self.names(), |i, row| {
            let (lin, quad) = self.terms(landmarks[i]);
            let mut extra = vec![lin, quad];
            for &c in &cols {
                extra.push(row[c] * lin);
                extra.push(row[c] * quad);
            }
            extra
        }))
    }
}

/// 1 iff the row ends in the event of interest within its window.
pub fn binary_labels(table: &EpisodeTable) -> Vec<f64> {
    table
        .records
        .iter()
        .map(|r| if r.event_type == EventType::Target { 1.0 } else { 0.0 })
        .collect()
}

/// Event code 0..=3.
pub fn multinomial_labels(table: &EpisodeTable) -> Vec<usize> {
    table.records.iter().map(|r| r.event_type.code() as usize).collect()
}

/// +1 for the event of interest, -1 otherwise.
pub fn signed_labels(table: &EpisodeTable) -> Vec<f64> {
    binary_labels(table).into_iter().map(|y| 2.0 * y - 1.0).collect()
}

/// How competing-event subjects are weighted after their event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CensoringWeights {
    /// Only administrative censoring: weight 1, one extension row.
    #[default]
    Administrative,
    /// Kaplan-Meier estimate of the censoring distribution per subset;
    /// extension rows are split where the weight changes.
    KaplanMeier,
}

/// Counting-process row. `source` indexes the stacked row it derives from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgRow {
    pub source: usize,
    pub tstart: f64,
    pub tstop: f64,
    pub status: EventType,
    pub weight: f64,
    /// 1 for the original row, 2 for extension rows.
    pub count: u8,
}

impl FgRow {
    pub fn is_event(&self) -> bool {
        self.count == 1 && self.status == EventType::Target
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedFineGrayDataset {
    pub rows: Vec<FgRow>,
}

/// Right-continuous Kaplan-Meier estimate of the censoring survival within
/// one subset. Events at a tied time are taken to precede censorings.
fn censoring_km(times: &[(f64, EventType)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, bool)> = times
        .iter()
        .map(|&(t, e)| (t, e == EventType::Censored))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut steps = Vec::new();
    let mut g = 1.0;
    let mut i = 0;
    let n = sorted.len();
    while i < n {
        let t = sorted[i].0;
        let at_risk = (n - i) as f64;
        let mut cens = 0usize;
        let mut j = i;
        while j < n && sorted[j].0 == t {
            cens += sorted[j].1 as usize;
            j += 1;
        }
        if cens > 0 {
            g *= 1.0 - cens as f64 / at_risk;
            steps.push((t, g));
        }
        i = j;
    }
    steps
}

fn step_value(steps: &[(f64, f64)], t: f64) -> f64 {
    match steps.partition_point(|&(s, _)| s <= t) {
        0 => 1.0,
        k => steps[k - 1].1,
    }
}

pub fn expand_fine_gray(stacked: &StackedLandmarkDataset, weights: CensoringWeights) -> ExpandedFineGrayDataset {
    let recs = &stacked.table.records;
    let mut by_landmark: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, r) in recs.iter().enumerate() {
        by_landmark.entry(r.landmark).or_default().push(i);
    }
    // extension rows per source row
    let mut extensions: Vec<Vec<FgRow>> = vec![Vec::new(); recs.len()];
    for (&s, idx) in &by_landmark {
        let horizon = s as f64 + stacked.window;
        let mut event_times: Vec<f64> = idx
            .iter()
            .filter(|&&i| recs[i].event_type == EventType::Target && recs[i].eventtime <= horizon)
            .map(|&i| recs[i].eventtime)
            .collect();
        if event_times.is_empty() {
            continue;
        }
        event_times.sort_by(f64::total_cmp);
        let t_max = *event_times.last().unwrap();
        let km = match weights {
            CensoringWeights::Administrative => Vec::new(),
            CensoringWeights::KaplanMeier => censoring_km(
                &idx.iter().map(|&i| (recs[i].eventtime, recs[i].event_type)).collect::<Vec<_>>(),
            ),
        };
        for &i in idx {
            let r = &recs[i];
            let u = r.eventtime;
            if !r.event_type.is_competing() || u >= t_max {
                continue;
            }
            let ext = FgRow {
                source: i,
                tstart: u,
                tstop: t_max,
                status: r.event_type,
                weight: 1.0,
                count: 2,
            };
            match weights {
                CensoringWeights::Administrative => extensions[i].push(ext),
                CensoringWeights::KaplanMeier => {
                    let g_u = step_value(&km, u);
                    let mut cuts: Vec<f64> = km
                        .iter()
                        .map(|&(c, _)| c)
                        .filter(|&c| c > u && c < t_max)
                        .collect();
                    cuts.push(t_max);
                    let mut a = u;
                    for b in cuts {
                        let w = if g_u > 0.0 { step_value(&km, a) / g_u } else { 0.0 };
                        if w > 0.0 {
                            extensions[i].push(FgRow {
                                tstart: a,
                                tstop: b,
                                weight: w,
                                ..ext
                            });
                        }
                        a = b;
                    }
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(recs.len());
    for (i, r) in recs.iter().enumerate() {
        rows.push(FgRow {
            source: i,
            tstart: r.landmark as f64,
            tstop: r.eventtime,
            status: r.event_type,
            weight: 1.0,
            count: 1,
        });
        rows.append(&mut extensions[i]);
    }
    ExpandedFineGrayDataset { rows }
}

impl ExpandedFineGrayDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Writes the expanded rows with columns
/// `ID, Tstart, Tstop, status, <covariates>, weight.cens, count, failcode`.
pub fn write_fine_gray<W: Write>(
    writer: W,
    stacked: &StackedLandmarkDataset,
    expanded: &ExpandedFineGrayDataset,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["ID", "Tstart", "Tstop", "status"].map(String::from).to_vec();
    header.extend(stacked.table.covariate_names.iter().cloned());
    header.extend(["weight.cens", "count", "failcode"].map(String::from));
    wtr.write_record(&header)?;
    for row in &expanded.rows {
        let rec = &stacked.table.records[row.source];
        let mut out = vec![
            rec.episode_id.clone(),
            fmt_num(row.tstart),
            fmt_num(row.tstop),
            row.status.code().to_string(),
        ];
        out.extend(rec.covariates.iter().map(|v| v.map(fmt_num).unwrap_or_default()));
        out.push(fmt_num(row.weight));
        out.push(row.count.to_string());
        out.push("1".into());
        wtr.write_record(&out)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
