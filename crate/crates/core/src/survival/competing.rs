use log::warn;
use serde::{Deserialize, Serialize};

use super::cox::{fit_cox, CoxFit, CoxOptions};
use super::{window_risk, Intervals};
use crate::data::{EpisodeTable, EventType};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::landmark::{expand_fine_gray, CensoringWeights, ExpandedFineGrayDataset, StackedLandmarkDataset};
use crate::linalg::Design;

/// Discretization of the all-cause event-free survival inside the
/// cumulative-incidence sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CifMode {
    /// `S(t) = exp(-sum_j Lambda_j(t))`.
    Exponential,
    /// `S(t) = prod (1 - sum_j dLambda_j)`.
    ProductIntegral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseComponent {
    pub cause: EventType,
    pub fit: Option<CoxFit>,
    /// Why the component could not be fitted; it then contributes no hazard.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseSpecificFit {
    pub components: Vec<CauseComponent>,
}

/// One Cox model per cause; events of other causes end follow-up without
/// an event. A cause without events is recorded, not fatal, unless it is the
/// event of interest.
pub fn fit_cause_specific(
    table: &EpisodeTable,
    x: &Design,
    causes: &[EventType],
    opts: &CoxOptions,
) -> Result<CauseSpecificFit> {
    if !causes.contains(&EventType::Target) {
        return Err(Error::InvalidInput("cause list must include the event of interest".into()));
    }
    let fits = opts
        .newton
        .exec
        .map(causes, |&c| fit_cox(&Intervals::for_cause(table, c), x, opts));
    let mut components = Vec::with_capacity(causes.len());
    for (&cause, fit) in causes.iter().zip(fits) {
        match fit {
            Ok(f) => components.push(CauseComponent {
                cause,
                fit: Some(f),
                error: None,
            }),
            Err(Error::NoEvents(m)) if cause != EventType::Target => components.push(CauseComponent {
                cause,
                fit: None,
                error: Some(format!("cause {}: {m}", cause.code())),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(CauseSpecificFit { components })
}

impl CauseSpecificFit {
    pub fn component(&self, cause: EventType) -> Option<&CoxFit> {
        self.components
            .iter()
            .find(|c| c.cause == cause)
            .and_then(|c| c.fit.as_ref())
    }

    pub fn fitted(&self) -> impl Iterator<Item = &CoxFit> {
        self.components.iter().filter_map(|c| c.fit.as_ref())
    }

    /// True when every fitted component converged without diverging.
    pub fn ok(&self) -> bool {
        self.fitted().all(|f| f.report.ok())
    }

    /// Cumulative incidence of the event of interest over `(a, b]` given
    /// event-free at `a`, summed over the training event times in the window.
    pub fn predict(&self, x: &Design, a: f64, b: f64, mode: CifMode, exec: Exec) -> Result<Vec<f64>> {
        let fits: Vec<&CoxFit> = self.fitted().collect();
        let target = self
            .components
            .iter()
            .filter(|c| c.fit.is_some())
            .position(|c| c.cause == EventType::Target)
            .ok_or_else(|| Error::Fit("no fitted component for the event of interest".into()))?;
        let mut grid: Vec<f64> = fits
            .iter()
            .flat_map(|f| f.baseline.times.iter().copied())
            .filter(|&t| t > a && t <= b)
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        // baseline increments per cause on the merged grid
        let incs: Vec<Vec<f64>> = fits
            .iter()
            .map(|f| {
                let mut prev = f.baseline.eval(a);
                grid.iter()
                    .map(|&t| {
                        let v = f.baseline.eval(t);
                        let d = v - prev;
                        prev = v;
                        d
                    })
                    .collect()
            })
            .collect();
        let etas: Vec<Vec<f64>> = fits
            .iter()
            .map(|f| f.linear_predictors(x))
            .collect::<Result<_>>()?;
        let out = exec.map_range(x.nrows, |i| {
            let rel: Vec<f64> = etas.iter().map(|e| e[i].exp()).collect();
            let mut s = 1.0;
            let mut f1 = 0.0;
            let mut clamped = false;
            for k in 0..grid.len() {
                let dl1 = incs[target][k] * rel[target];
                let dl: f64 = (0..fits.len()).map(|j| incs[j][k] * rel[j]).sum();
                if dl <= 0.0 {
                    continue;
                }
                let s_next = match mode {
                    CifMode::Exponential => s * (-dl).exp(),
                    CifMode::ProductIntegral => {
                        if dl > 1.0 {
                            clamped = true;
                        }
                        s * (1.0 - dl.min(1.0))
                    }
                };
                f1 += dl1 / dl * (s - s_next);
                s = s_next;
            }
            (f1.clamp(0.0, 1.0), clamped)
        });
        if out.iter().any(|o| o.1) {
            warn!("hazard increment above 1 clamped in product-integral survival");
        }
        Ok(out.into_iter().map(|o| o.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineGrayFit {
    /// Weighted Cox fit whose baseline is the cumulative subdistribution
    /// hazard of the event of interest.
    pub cox: CoxFit,
}

/// `x` has one row per stacked row; expanded rows reuse their source row.
pub fn fit_fine_gray(expanded: &ExpandedFineGrayDataset, x: &Design, opts: &CoxOptions) -> Result<FineGrayFit> {
    let rows: Vec<usize> = expanded.rows.iter().map(|r| r.source).collect();
    if let Some(&bad) = rows.iter().find(|&&i| i >= x.nrows) {
        return Err(Error::InvalidInput(format!(
            "expanded row refers to stacked row {bad} but the design has {} rows",
            x.nrows
        )));
    }
    let xe = x.select_rows(&rows);
    let cox = fit_cox(&Intervals::for_fine_gray(expanded), &xe, opts)?;
    Ok(FineGrayFit { cox })
}

impl FineGrayFit {
    pub fn predict_static(&self, x: &Design, horizon: f64) -> Result<Vec<f64>> {
        self.cox.predict_static(x, horizon)
    }

    pub fn predict_window(&self, x: &Design, s: f64, w: f64) -> Result<Vec<f64>> {
        Ok(self
            .cox
            .linear_predictors(x)?
            .into_iter()
            .map(|eta| window_risk(&self.cox.baseline, eta, s, s + w))
            .collect())
    }
}

/// Independent subdistribution fits per landmark subset. `x` has one row
/// per stacked row.
pub fn fit_fg_separate(
    stacked: &StackedLandmarkDataset,
    x: &Design,
    opts: &CoxOptions,
) -> Vec<(u32, Result<FineGrayFit>)> {
    let inner = CoxOptions {
        newton: crate::optim::NewtonOptions {
            exec: Exec::Sequential,
            ..opts.newton
        },
        fixed: opts.fixed.clone(),
    };
    let fits = opts.newton.exec.map(&stacked.grid, |&s| {
        let idx = stacked.subset_indices(s);
        if idx.is_empty() {
            return Err(Error::NoEvents(format!("landmark {s} has no rows at risk")));
        }
        let sub = StackedLandmarkDataset {
            table: stacked
                .table
                .with_records(idx.iter().map(|&i| stacked.table.records[i].clone()).collect()),
            grid: vec![s],
            window: stacked.window,
        };
        let expanded = expand_fine_gray(&sub, CensoringWeights::Administrative);
        fit_fine_gray(&expanded, &x.select_rows(&idx), &inner)
    });
    stacked.grid.iter().copied().zip(fits).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EpisodeRecord;
    use crate::landmark::stack_landmarks;

    fn rec(id: usize, t: f64, cause: EventType, z: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode_id: id.to_string(),
            admission_id: id.to_string(),
            landmark: 0,
            eventtime: t,
            event_type: cause,
            covariates: vec![Some(z)],
        }
    }

    #[test]
    fn product_integral_matches_aalen_johansen_by_hand() {
        use EventType::*;
        let table = EpisodeTable::new(
            vec!["z".into()],
            vec![rec(0, 1.0, Target, 0.0), rec(1, 2.0, Death, 0.0), rec(2, 3.0, Target, 0.0), rec(3, 4.0, Censored, 0.0)],
        );
        let x = Design::empty(4);
        let cs = fit_cause_specific(&table, &x, &EventType::ALL_CAUSES, &CoxOptions::default()).unwrap();
        assert!(cs.component(Discharge).is_none());
        let p = cs.predict(&Design::empty(1), 0.0, 10.0, CifMode::ProductIntegral, Exec::Sequential).unwrap();
        // S: 3/4 after t=1, 1/2 after t=2; F1 = 1/4 + (1/2)(1/2)
        assert!((p[0] - 0.5).abs() < 1e-15);
        let early = cs.predict(&Design::empty(1), 0.0, 2.5, CifMode::ProductIntegral, Exec::Sequential).unwrap();
        assert!((early[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_cause_cs_and_fg_reduce_to_cox() {
        use EventType::*;
        let recs: Vec<EpisodeRecord> = (0..40)
            .map(|i| {
                let z = (i % 3) as f64;
                let t = 1.0 + ((i * 7919) % 97) as f64 / 10.0;
                rec(i, t, if i % 4 == 0 { Censored } else { Target }, z)
            })
            .collect();
        let table = EpisodeTable::new(vec!["z".into()], recs);
        let x = Design::from_rows(
            vec!["z".into()],
            &table.records.iter().map(|r| vec![r.covariates[0].unwrap()]).collect::<Vec<_>>(),
        )
        .unwrap();
        let opts = CoxOptions::default();
        let cox = fit_cox(&Intervals::for_cause(&table, Target), &x, &opts).unwrap();
        let cs = fit_cause_specific(&table, &x, &EventType::ALL_CAUSES, &opts).unwrap();
        let stacked = stack_landmarks(&table, &[0], f64::INFINITY).unwrap();
        let fg = fit_fine_gray(&expand_fine_gray(&stacked, CensoringWeights::Administrative), &x, &opts).unwrap();
        let pc = cox.predict_static(&x, 7.0).unwrap();
        let ps = cs.predict(&x, 0.0, 7.0, CifMode::Exponential, Exec::Sequential).unwrap();
        let pf = fg.predict_static(&x, 7.0).unwrap();
        for i in 0..x.nrows {
            assert!((pc[i] - ps[i]).abs() < 1e-12);
            assert!((pc[i] - pf[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_window_gives_zero_risk() {
        use EventType::*;
        let table = EpisodeTable::new(vec!["z".into()], vec![rec(0, 1.0, Target, 0.0), rec(1, 2.0, Death, 0.0)]);
        let cs = fit_cause_specific(&table, &Design::empty(2), &EventType::ALL_CAUSES, &CoxOptions::default()).unwrap();
        for mode in [CifMode::Exponential, CifMode::ProductIntegral] {
            assert_eq!(cs.predict(&Design::empty(1), 5.0, 12.0, mode, Exec::Sequential).unwrap(), vec![0.0]);
        }
    }
}
