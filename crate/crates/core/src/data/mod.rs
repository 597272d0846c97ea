//! Episode records, CSV input/output, covariate transforms and imputation.

mod impute;
mod transform;

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use impute::{fit_impute, impute, FillKind, ImputationModel};
pub use transform::{fit_transforms, rcs_basis, TransformConfig, TransformSpec};

/// Outcome code of an episode at the end of its (possibly censored) follow-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    /// Administratively censored.
    Censored,
    /// The event of interest (CLABSI).
    Target,
    /// Death or start of palliative care.
    Death,
    /// Discharge or catheter removal.
    Discharge,
}

impl EventType {
    pub const ALL_CAUSES: [EventType; 3] = [EventType::Target, EventType::Death, EventType::Discharge];

    pub fn code(self) -> u8 {
        match self {
            EventType::Censored => 0,
            EventType::Target => 1,
            EventType::Death => 2,
            EventType::Discharge => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EventType::Censored),
            1 => Some(EventType::Target),
            2 => Some(EventType::Death),
            3 => Some(EventType::Discharge),
            _ => None,
        }
    }

    pub fn is_competing(self) -> bool {
        matches!(self, EventType::Death | EventType::Discharge)
    }
}

/// One catheter episode as seen at one landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub admission_id: String,
    pub landmark: u32,
    /// Days since catheter onset of the first event (or of censoring).
    pub eventtime: f64,
    pub event_type: EventType,
    /// Values aligned with [`EpisodeTable::covariate_names`]; `None` is missing.
    pub covariates: Vec<Option<f64>>,
}

/// A set of episode rows sharing one covariate layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTable {
    pub covariate_names: Vec<String>,
    pub records: Vec<EpisodeRecord>,
}

impl EpisodeTable {
    pub fn new(covariate_names: Vec<String>, records: Vec<EpisodeRecord>) -> Self {
        EpisodeTable {
            covariate_names,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("covariate column `{name}` not present")))
    }

    /// Same layout, different rows.
    pub fn with_records(&self, records: Vec<EpisodeRecord>) -> Self {
        EpisodeTable {
            covariate_names: self.covariate_names.clone(),
            records,
        }
    }

    /// Distinct admission ids in first-appearance order.
    pub fn admission_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.admission_id.as_str()))
            .map(|r| r.admission_id.clone())
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.covariates.iter().filter(|v| v.is_none()).count())
            .sum()
    }
}

/// Predictor kinds of the clinical covariate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    Binary,
    /// Nonnegative continuous measurement.
    Continuous,
}

/// Column names for the 21 clinical predictors (see `docs/covariates.md`).
pub const CLINICAL_COVARIATES: [(&str, CovariateKind); 21] = [
    ("CAT_CVC", CovariateKind::Binary),
    ("CAT_port_a_cath", CovariateKind::Binary),
    ("CAT_tunneled_CVC", CovariateKind::Binary),
    ("CAT_PICC", CovariateKind::Binary),
    ("LOC_subclavian", CovariateKind::Binary),
    ("LOC_jugular", CovariateKind::Binary),
    ("MED_TPN", CovariateKind::Binary),
    ("MED_antibacterials", CovariateKind::Binary),
    ("MED_antineoplastic", CovariateKind::Binary),
    ("CLABSI_history", CovariateKind::Binary),
    ("COM_tumor", CovariateKind::Binary),
    ("COM_lymphoma", CovariateKind::Binary),
    ("COM_transplant", CovariateKind::Binary),
    ("MS_is_ICU_unit", CovariateKind::Binary),
    ("MS_mechanical_ventilation", CovariateKind::Binary),
    ("VIT_temperature_max", CovariateKind::Continuous),
    ("VIT_systolic_bp_last", CovariateKind::Continuous),
    ("LAB_WBC_last", CovariateKind::Continuous),
    ("LAB_CRP_last", CovariateKind::Continuous),
    ("LAB_positive_culture", CovariateKind::Binary),
    ("ADM_from_home", CovariateKind::Binary),
];

/// Maps logical fields onto CSV header names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub id: String,
    /// Optional; defaults to the episode id when the column is absent.
    pub admission_id: String,
    pub landmark: String,
    pub eventtime: String,
    pub event_type: String,
    /// Columns that must hold 0/1 when present.
    pub binary: Vec<String>,
    /// Columns that must be nonnegative when present.
    pub nonnegative: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        let pick = |kind| {
            CLINICAL_COVARIATES
                .iter()
                .filter(|(_, k)| *k == kind)
                .map(|(n, _)| n.to_string())
                .collect::<Vec<_>>()
        };
        Schema {
            id: "ID".into(),
            admission_id: "ADMISSION_ID".into(),
            landmark: "LM".into(),
            eventtime: "eventtime".into(),
            event_type: "type".into(),
            binary: pick(CovariateKind::Binary),
            nonnegative: pick(CovariateKind::Continuous),
        }
    }
}

pub fn load_episodes(path: impl AsRef<Path>, schema: &Schema) -> Result<EpisodeTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_episodes(file, schema)
}

pub fn read_episodes<R: Read>(reader: R, schema: &Schema) -> Result<EpisodeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::Schema(format!("required column `{name}` missing")))
    };
    let id_col = require(&schema.id)?;
    let lm_col = require(&schema.landmark)?;
    let time_col = require(&schema.eventtime)?;
    let type_col = require(&schema.event_type)?;
    let adm_col = find(&schema.admission_id);

    let fixed: HashSet<usize> = [Some(id_col), Some(lm_col), Some(time_col), Some(type_col), adm_col]
        .into_iter()
        .flatten()
        .collect();
    let cov_cols: Vec<usize> = (0..headers.len()).filter(|c| !fixed.contains(c)).collect();
    let covariate_names: Vec<String> = cov_cols.iter().map(|&c| headers[c].to_string()).collect();
    let binary: Vec<bool> = covariate_names.iter().map(|n| schema.binary.contains(n)).collect();
    let nonneg: Vec<bool> = covariate_names
        .iter()
        .map(|n| schema.nonnegative.contains(n))
        .collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let invalid = |message: String| Error::Validation { row, message };
        let field = |c: usize| rec.get(c).unwrap_or("");

        let episode_id = field(id_col).to_string();
        if episode_id.is_empty() {
            return Err(invalid("empty episode id".into()));
        }
        let admission_id = match adm_col.map(field) {
            Some(a) if !a.is_empty() => a.to_string(),
            _ => episode_id.clone(),
        };
        let landmark = parse_landmark(field(lm_col)).ok_or_else(|| {
            invalid(format!("landmark `{}` is not a nonnegative integer", field(lm_col)))
        })?;
        let eventtime: f64 = field(time_col)
            .parse()
            .map_err(|_| invalid(format!("eventtime `{}` is not a number", field(time_col))))?;
        if !eventtime.is_finite() || eventtime < 0.0 {
            return Err(invalid(format!("eventtime {eventtime} must be finite and >= 0")));
        }
        if eventtime < landmark as f64 {
            return Err(invalid(format!(
                "eventtime {eventtime} precedes landmark {landmark}"
            )));
        }
        let event_type = field(type_col)
            .parse::<u8>()
            .ok()
            .and_then(EventType::from_code)
            .ok_or_else(|| invalid(format!("unknown event code `{}`", field(type_col))))?;
        if !seen.insert((episode_id.clone(), landmark)) {
            return Err(invalid(format!(
                "episode `{episode_id}` appears twice at landmark {landmark}"
            )));
        }

        let mut covariates = Vec::with_capacity(cov_cols.len());
        for (k, &c) in cov_cols.iter().enumerate() {
            let raw = field(c);
            if raw.is_empty() || raw == "NA" {
                covariates.push(None);
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| {
                invalid(format!("covariate `{}` value `{raw}` is not a number", covariate_names[k]))
            })?;
            if !v.is_finite() {
                return Err(invalid(format!("covariate `{}` is not finite", covariate_names[k])));
            }
            if binary[k] && v != 0.0 && v != 1.0 {
                return Err(invalid(format!(
                    "binary covariate `{}` has value {v}",
                    covariate_names[k]
                )));
            }
            if nonneg[k] && v < 0.0 {
                return Err(invalid(format!(
                    "covariate `{}` must be nonnegative, got {v}",
                    covariate_names[k]
                )));
            }
            covariates.push(Some(v));
        }
        records.push(EpisodeRecord {
            episode_id,
            admission_id,
            landmark,
            eventtime,
            event_type,
            covariates,
        });
    }
    Ok(EpisodeTable {
        covariate_names,
        records,
    })
}

fn parse_landmark(s: &str) -> Option<u32> {
    if let Ok(v) = s.parse::<u32>() {
        return Some(v);
    }
    let f: f64 = s.parse().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f <= u32::MAX as f64).then_some(f as u32)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn write_episodes<W: Write>(writer: W, table: &EpisodeTable) -> Result<()> {
    let schema = Schema::default();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        schema.id.clone(),
        schema.admission_id.clone(),
        schema.landmark.clone(),
        schema.eventtime.clone(),
        schema.event_type.clone(),
    ];
    header.extend(table.covariate_names.iter().cloned());
    wtr.write_record(&header)?;
    for r in &table.records {
        let mut row = vec![
            r.episode_id.clone(),
            r.admission_id.clone(),
            r.landmark.to_string(),
            fmt_num(r.eventtime),
            r.event_type.code().to_string(),
        ];
        row.extend(r.covariates.iter().map(|v| v.map(fmt_num).unwrap_or_default()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_episodes(path: impl AsRef<Path>, table: &EpisodeTable) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_episodes(std::io::BufWriter::new(file), table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIXTURE_HEAD: &str = "ID,LM,eventtime,type,MS_is_ICU_unit,LAB_CRP_last\n";

    #[test]
    fn censored_row_parses() {
        let csv = format!("{FIXTURE_HEAD}2,0,7.00,0,1,86.1\n");
        let t = read_episodes(csv.as_bytes(), &Schema::default()).unwrap();
        let r = &t.records[0];
        assert_eq!(r.event_type, EventType::Censored);
        assert_eq!(r.eventtime, 7.0);
        assert_eq!(r.admission_id, "2");
        assert_eq!(t.covariate_names, vec!["MS_is_ICU_unit", "LAB_CRP_last"]);
    }

    #[test]
    fn header_only_is_empty() {
        let t = read_episodes(FIXTURE_HEAD.as_bytes(), &Schema::default()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn eventtime_before_landmark_is_rejected() {
        let csv = format!("{FIXTURE_HEAD}1,0,4.42,1,0,28.6\n1,2,1.0,1,0,28.6\n");
        match read_episodes(csv.as_bytes(), &Schema::default()) {
            Err(Error::Validation { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_event_code_and_missing_column() {
        let csv = format!("{FIXTURE_HEAD}1,0,4.42,7,0,28.6\n");
        assert!(matches!(
            read_episodes(csv.as_bytes(), &Schema::default()),
            Err(Error::Validation { row: 0, .. })
        ));
        let err = read_episodes("ID,LM,type\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(err.to_string().contains("eventtime"), "{err}");
    }

    #[test]
    fn binary_and_nonnegative_checks() {
        let csv = format!("{FIXTURE_HEAD}1,0,4.42,1,2,28.6\n");
        assert!(read_episodes(csv.as_bytes(), &Schema::default()).is_err());
        let csv = format!("{FIXTURE_HEAD}1,0,4.42,1,1,-3\n");
        assert!(read_episodes(csv.as_bytes(), &Schema::default()).is_err());
    }

    #[test]
    fn duplicate_landmark_row_is_rejected() {
        let csv = format!("{FIXTURE_HEAD}1,0,4.42,1,0,28.6\n1,0,4.42,1,0,28.6\n");
        assert!(read_episodes(csv.as_bytes(), &Schema::default()).is_err());
    }

    #[test]
    fn missing_fields_are_none() {
        let csv = format!("{FIXTURE_HEAD}1,0,4.42,1,,28.6\n");
        let t = read_episodes(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(t.records[0].covariates, vec![None, Some(28.6)]);
    }

    fn arb_record() -> impl Strategy<Value = EpisodeRecord> {
        (
            0u32..31,
            0.0f64..60.0,
            0u8..4,
            proptest::collection::vec(proptest::option::of(0.0f64..500.0), 2),
            0u32..5,
        )
            .prop_map(|(lm, extra, code, cov, adm)| EpisodeRecord {
                episode_id: String::new(),
                admission_id: format!("A{adm}"),
                landmark: lm,
                eventtime: lm as f64 + extra,
                event_type: EventType::from_code(code).unwrap(),
                covariates: cov,
            })
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(mut recs in proptest::collection::vec(arb_record(), 0..20)) {
            for (i, r) in recs.iter_mut().enumerate() {
                r.episode_id = format!("E{i}");
            }
            let table = EpisodeTable::new(vec!["X1".into(), "X2".into()], recs);
            let mut buf = Vec::new();
            write_episodes(&mut buf, &table).unwrap();
            let back = read_episodes(buf.as_slice(), &Schema::default()).unwrap();
            prop_assert_eq!(&back, &table);
            for (a, b) in back.records.iter().zip(&table.records) {
                prop_assert_eq!(a.eventtime.to_bits(), b.eventtime.to_bits());
            }
        }
    }
}
