use std::collections::HashSet;

use approx::assert_abs_diff_eq;
use landmark_risk::data::{EpisodeRecord, EpisodeTable, EventType};
use landmark_risk::harness::{make_splits, train_count};
use landmark_risk::landmark::{build_landmark_subset, expand_fine_gray, stack_landmarks, CensoringWeights};
use landmark_risk::linalg::Design;
use landmark_risk::metrics::{auc, oe_ratio, scaled_brier};
use landmark_risk::simulation::{aalen_johansen, brute_force_partial_likelihood, simulate, SimConfig};
use landmark_risk::survival::{fit_cox, CoxOptions, Intervals};
use landmark_risk::Exec;
use proptest::prelude::*;

fn pair_auc(pred: &[f64], y: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            if yi && !yj {
                den += 1.0;
                num += if pred[i] > pred[j] {
                    1.0
                } else if pred[i] == pred[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn arb_episodes() -> impl Strategy<Value = EpisodeTable> {
    prop::collection::vec((0u32..4, 0.05f64..20.0, 0u8..4, -2.0f64..2.0), 1..25).prop_map(|specs| {
        let mut recs = Vec::new();
        for (i, (max_lm, t, code, z)) in specs.into_iter().enumerate() {
            for s in 0..=max_lm.min(t.ceil() as u32 - 1) {
                recs.push(EpisodeRecord {
                    episode_id: format!("E{i}"),
                    admission_id: format!("A{}", i / 2),
                    landmark: s,
                    eventtime: t,
                    event_type: EventType::from_code(code).unwrap(),
                    covariates: vec![Some(z + s as f64)],
                });
            }
        }
        EpisodeTable::new(vec!["z".into()], recs)
    })
}

proptest! {
    #[test]
    fn auc_is_pair_concordance(
        cases in prop::collection::vec((0u8..6, any::<bool>()), 2..80)
    ) {
        let pred: Vec<f64> = cases.iter().map(|c| c.0 as f64 / 5.0).collect();
        let y: Vec<bool> = cases.iter().map(|c| c.1).collect();
        prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
        let yf: Vec<f64> = y.iter().map(|&v| v as u8 as f64).collect();
        assert_abs_diff_eq!(auc(&pred, &yf).unwrap(), pair_auc(&pred, &y), epsilon = 1e-12);
    }

    #[test]
    fn prevalence_predictor_has_zero_scaled_brier_and_unit_oe(
        y in prop::collection::vec(any::<bool>(), 2..200)
    ) {
        prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
        let yf: Vec<f64> = y.iter().map(|&v| v as u8 as f64).collect();
        let ybar = yf.iter().sum::<f64>() / yf.len() as f64;
        let pred = vec![ybar; yf.len()];
        prop_assert_eq!(scaled_brier(&pred, &yf).unwrap(), 0.0);
        assert_abs_diff_eq!(oe_ratio(&pred, &yf).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cox_matches_grid_maximizer(
        rows in prop::collection::vec((1u8..5, any::<bool>(), -2i8..=2), 2..=5)
    ) {
        let n = rows.len();
        let iv = Intervals {
            start: vec![0.0; n],
            stop: rows.iter().map(|r| r.0 as f64).collect(),
            event: rows.iter().map(|r| r.1).collect(),
            weight: vec![1.0; n],
        };
        let x: Vec<f64> = rows.iter().map(|r| r.2 as f64 / 2.0).collect();
        let coarse = brute_force_partial_likelihood(&iv, &x, -8.0, 8.0, 1e-2);
        prop_assume!(coarse.is_ok());
        let c = coarse.unwrap();
        let fine = brute_force_partial_likelihood(&iv, &x, c - 2e-2, c + 2e-2, 1e-5);
        prop_assume!(fine.is_ok());
        let fit = fit_cox(&iv, &Design::new(vec!["z".into()], n, x).unwrap(), &CoxOptions::default()).unwrap();
        prop_assert!(fit.report.ok());
        assert_abs_diff_eq!(fit.coef[0], fine.unwrap(), epsilon = 1e-3);
    }

    #[test]
    fn landmark_subset_censors_inside_window(table in arb_episodes(), s in 0u32..4, w in 1.0f64..10.0) {
        let sub = build_landmark_subset(&table, s, w).unwrap();
        for r in &sub.records {
            prop_assert_eq!(r.landmark, s);
            prop_assert!(r.eventtime > s as f64 && r.eventtime <= s as f64 + w);
            let orig = table
                .records
                .iter()
                .find(|o| o.episode_id == r.episode_id && o.landmark == s)
                .unwrap();
            if orig.eventtime > s as f64 + w {
                prop_assert_eq!(r.event_type, EventType::Censored);
                prop_assert_eq!(r.eventtime, s as f64 + w);
            } else {
                prop_assert_eq!(r.event_type, orig.event_type);
                prop_assert_eq!(r.eventtime, orig.eventtime);
            }
        }
        let at_risk = table.records.iter().filter(|o| o.landmark == s && o.eventtime > s as f64).count();
        prop_assert_eq!(sub.len(), at_risk);
    }

    #[test]
    fn fine_gray_expansion_keeps_every_row_once(table in arb_episodes(), w in 1.0f64..10.0) {
        let grid: Vec<u32> = (0..4).collect();
        let stacked = stack_landmarks(&table, &grid, w).unwrap();
        let ex = expand_fine_gray(&stacked, CensoringWeights::KaplanMeier);
        let originals = ex.rows.iter().filter(|r| r.count == 1).count();
        prop_assert_eq!(originals, stacked.len());
        for r in &ex.rows {
            prop_assert!(r.tstart < r.tstop);
            prop_assert!(r.weight > 0.0 && r.weight <= 1.0 + 1e-12);
            if r.count == 2 {
                prop_assert!(r.status.is_competing());
            }
        }
    }

    #[test]
    fn splits_partition_admissions(n in 3usize..60, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("A{i}")).collect();
        let splits = make_splits(&ids, 2.0 / 3.0, 4, seed).unwrap();
        for sp in &splits {
            prop_assert_eq!(sp.train.len(), train_count(n, 2.0 / 3.0));
            let train: HashSet<&String> = sp.train.iter().collect();
            prop_assert!(sp.test.iter().all(|a| !train.contains(a)));
            prop_assert_eq!(sp.train.len() + sp.test.len(), n);
        }
        prop_assert_eq!(&splits, &make_splits(&ids, 2.0 / 3.0, 4, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_mode_independent(seed in any::<u64>()) {
        let cfg = SimConfig::clinical(200, seed);
        prop_assert_eq!(simulate(&cfg, Exec::Sequential).unwrap(), simulate(&cfg, Exec::Parallel).unwrap());
    }

    #[test]
    fn aalen_johansen_without_censoring_is_empirical(seed in any::<u64>()) {
        let t = simulate(&SimConfig::constant(400, [0.05, 0.02, 0.1], seed), Exec::Sequential).unwrap();
        let base = t.with_records(t.records.iter().filter(|r| r.landmark == 0).cloned().collect());
        let emp = base
            .records
            .iter()
            .filter(|r| r.event_type == EventType::Target && r.eventtime <= 5.0)
            .count() as f64
            / base.len() as f64;
        assert_abs_diff_eq!(aalen_johansen(&base, EventType::Target, 5.0), emp, epsilon = 1e-12);
    }
}
