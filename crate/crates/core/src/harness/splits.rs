use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::EpisodeTable;
use crate::error::{Error, Result};
use crate::simulation::derive_seed;

/// One train/test partition of admissions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub index: usize,
    pub seed: u64,
    /// Sorted admission ids.
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    /// Rows of `table` whose admission is on the requested side.
    pub fn partition(&self, table: &EpisodeTable) -> (EpisodeTable, EpisodeTable) {
        let train: HashSet<&str> = self.train.iter().map(String::as_str).collect();
        let (tr, te) = table
            .records
            .iter()
            .cloned()
            .partition(|r| train.contains(r.admission_id.as_str()));
        (table.with_records(tr), table.with_records(te))
    }
}

/// Number of training admissions out of `n`: `ceil(fraction * n)`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    // guard against 2/3 * 9 = 6.000000000000001
    let raw = fraction * n as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// `count` random admission partitions; split `i` draws from
/// `derive_seed(seed, i)`.
pub fn make_splits(admissions: &[String], fraction: f64, count: usize, seed: u64) -> Result<Vec<SplitAssignment>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction must be in (0, 1), got {fraction}")));
    }
    let ids: Vec<String> = admissions.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 admissions to split, got {}",
            ids.len()
        )));
    }
    let n_train = train_count(ids.len(), fraction);
    if n_train == 0 || n_train >= ids.len() {
        return Err(Error::InvalidInput(format!(
            "{} admissions leave one side empty at fraction {fraction}",
            ids.len()
        )));
    }
    Ok((0..count)
        .map(|index| {
            let seed = derive_seed(seed, index as u64);
            let mut shuffled = ids.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut train = shuffled[..n_train].to_vec();
            let mut test = shuffled[n_train..].to_vec();
            train.sort();
            test.sort();
            SplitAssignment { index, seed, train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("A{i}")).collect()
    }

    #[test]
    fn nine_admissions_give_six_train() {
        let s = make_splits(&ids(9), 2.0 / 3.0, 4, 11).unwrap();
        for a in &s {
            assert_eq!(a.train.len(), 6);
            assert_eq!(a.test.len(), 3);
        }
        assert_eq!(train_count(10, 2.0 / 3.0), 7);
    }

    #[test]
    fn disjoint_exhaustive_and_reproducible() {
        let all = ids(50);
        let a = make_splits(&all, 2.0 / 3.0, 5, 3).unwrap();
        let b = make_splits(&all, 2.0 / 3.0, 5, 3).unwrap();
        assert_eq!(a, b);
        for s in &a {
            let tr: HashSet<_> = s.train.iter().collect();
            assert!(s.test.iter().all(|t| !tr.contains(t)));
            assert_eq!(s.train.len() + s.test.len(), 50);
        }
        assert_ne!(a[0].train, a[1].train);
    }

    #[test]
    fn too_few_admissions() {
        assert!(make_splits(&ids(2), 2.0 / 3.0, 1, 0).is_err());
        assert!(make_splits(&ids(3), 0.99, 1, 0).is_err());
    }
}
