//! Command-line front end. Exit code 0 on success, 1 for invalid input or
//! usage, 2 for runtime failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::data::{load_episodes, save_episodes, write_episodes, Schema};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::harness::{
    evaluate_predictions, fit_model, load_data, parse_landmarks, parse_models, run_experiment, transform_config,
    Config, ModelKind, ModelSettings, Prediction, Preprocessor, TrainedModel,
};
use crate::landmark::{expand_fine_gray, stack_landmarks, write_fine_gray, CensoringWeights};
use crate::simulation::simulate;

#[derive(Debug, Parser)]
#[command(name = "lmrisk", version, about = "Static and landmark competing-risks prediction models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (experiment splits; simulation for `simulate`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated model names or `all`.
    #[arg(long, global = true)]
    pub models: Option<String>,
    /// Landmark list such as `0-30` or `0,7,14`.
    #[arg(long, global = true)]
    pub landmarks: Option<String>,
    /// Prediction window in days.
    #[arg(long, global = true)]
    pub window: Option<f64>,
    #[arg(long, global = true)]
    pub splits: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightsArg {
    Administrative,
    KaplanMeier,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate episodes and write them as CSV.
    Simulate {
        /// Number of episodes (overrides the configuration).
        #[arg(long)]
        episodes: Option<usize>,
        /// `clinical` or `constant`.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Build the stacked landmark dataset or its subdistribution expansion.
    Prepare {
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the counting-process expansion instead of the stacked rows.
        #[arg(long)]
        expand_fg: bool,
        #[arg(long, value_enum, default_value = "administrative")]
        weights: WeightsArg,
    },
    /// Fit models on a whole dataset and write them as JSON.
    Fit {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Predict with a fitted model.
    Predict {
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Compute metrics from a predictions CSV.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Repeated split experiment over the model roster.
    Experiment {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn exec_of(g: &GlobalArgs) -> Exec {
    if g.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

/// Configuration file (or defaults) with command-line overrides applied.
pub fn resolve_config(g: &GlobalArgs) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let e = &mut cfg.experiment;
    if let Some(s) = g.seed {
        e.seed = s;
    }
    if let Some(m) = &g.models {
        e.models = parse_models(m)?;
    }
    if let Some(l) = &g.landmarks {
        e.landmarks = parse_landmarks(l)?;
    }
    if let Some(w) = g.window {
        e.window = w;
    }
    if let Some(s) = g.splits {
        e.splits = s;
    }
    if let Some(o) = &g.out {
        e.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| Error::io(p, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let exec = exec_of(g);
    match &cli.command {
        Command::Simulate { episodes, profile } => {
            let mut cfg = resolve_config(g)?;
            if let Some(n) = episodes {
                cfg.simulation.n_episodes = *n;
            }
            if let Some(p) = profile {
                cfg.simulation.profile = p.clone();
            }
            if let Some(s) = g.seed {
                cfg.simulation.seed = s;
            }
            let table = simulate(&cfg.simulation.build()?, exec)?;
            info!("simulated {} rows", table.len());
            match &g.out {
                Some(p) => save_episodes(p, &table),
                None => write_episodes(std::io::stdout().lock(), &table),
            }
        }
        Command::Prepare {
            input,
            expand_fg,
            weights,
        } => {
            let table = load_episodes(input, &Schema::default())?;
            let grid = match &g.landmarks {
                Some(l) => parse_landmarks(l)?,
                None => {
                    let mut v: Vec<u32> = table.records.iter().map(|r| r.landmark).collect();
                    v.sort_unstable();
                    v.dedup();
                    v
                }
            };
            let stacked = stack_landmarks(&table, &grid, g.window.unwrap_or(7.0))?;
            let out = output(g.out.as_deref())?;
            if *expand_fg {
                let w = match weights {
                    WeightsArg::Administrative => CensoringWeights::Administrative,
                    WeightsArg::KaplanMeier => CensoringWeights::KaplanMeier,
                };
                write_fine_gray(out, &stacked, &expand_fine_gray(&stacked, w))
            } else {
                write_episodes(out, &stacked.table)
            }
        }
        Command::Fit { input } => {
            let mut cfg = resolve_config(g)?;
            if let Some(p) = input {
                cfg.data.input = Some(p.clone());
            }
            let table = load_data(&cfg, exec)?;
            let settings = ModelSettings::from_config(&cfg, exec);
            let prep = Preprocessor::fit(
                &table,
                &settings.grid,
                &transform_config(&cfg, &table),
                &cfg.landmark_features,
            )?;
            let dir = &cfg.experiment.out;
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for &m in &cfg.experiment.models {
                let model = fit_model(m, &table, &prep, &settings, cfg.experiment.seed)?;
                let (fits, failures) = model.fit_counts();
                info!("{m}: {fits} fits, {failures} failures");
                let p = dir.join(format!("{}.json", m.name()));
                std::fs::write(&p, model.to_json()?).map_err(|e| Error::io(&p, e))?;
            }
            Ok(())
        }
        Command::Predict { model, input } => {
            let text = std::fs::read_to_string(model).map_err(|e| Error::io(model, e))?;
            let model = TrainedModel::from_json(&text)?;
            let table = load_episodes(input, &Schema::default())?;
            let preds = model.predict(&table, exec)?;
            write_predictions(output(g.out.as_deref())?, model.kind, &preds)
        }
        Command::Evaluate { input } => {
            let rows = read_predictions(input)?;
            let mut out = csv::Writer::from_writer(output(g.out.as_deref())?);
            out.write_record(["model", "landmark", "metric", "value", "n"])?;
            let mut models: Vec<ModelKind> = rows.iter().map(|r| r.0).collect();
            models.sort();
            models.dedup();
            for m in models {
                let preds: Vec<Prediction> = rows.iter().filter(|r| r.0 == m).map(|r| r.1.clone()).collect();
                let mut lms: Vec<u32> = preds.iter().map(|p| p.landmark).collect();
                lms.sort_unstable();
                lms.dedup();
                for r in evaluate_predictions(m, 0, &lms, &preds) {
                    let n = preds.iter().filter(|p| p.landmark == r.landmark && p.risk.is_some()).count();
                    out.write_record([
                        m.name().to_string(),
                        r.landmark.to_string(),
                        r.metric.clone(),
                        r.value.map(crate::data::fmt_num).unwrap_or_else(|| "NA".into()),
                        n.to_string(),
                    ])?;
                }
            }
            out.flush().map_err(|e| Error::io("evaluate output", e))?;
            Ok(())
        }
        Command::Experiment { input } => {
            let mut cfg = resolve_config(g)?;
            if let Some(p) = input {
                cfg.data.input = Some(p.clone());
            }
            let table = load_data(&cfg, exec)?;
            let results = run_experiment(&cfg, &table, exec)?;
            results.write_all(&cfg.experiment.out, cfg.experiment.archive)
        }
    }
}

const PREDICTION_HEADER: [&str; 6] = ["model", "ID", "ADMISSION_ID", "LM", "observed", "risk"];

pub fn write_predictions<W: Write>(w: W, model: ModelKind, preds: &[Prediction]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PREDICTION_HEADER)?;
    for p in preds {
        out.write_record([
            model.name().to_string(),
            p.episode_id.clone(),
            p.admission_id.clone(),
            p.landmark.to_string(),
            crate::data::fmt_num(p.observed),
            p.risk.map(crate::data::fmt_num).unwrap_or_else(|| "NA".into()),
        ])?;
    }
    out.flush().map_err(|e| Error::io("predictions", e))?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<(ModelKind, Prediction)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    })?;
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != PREDICTION_HEADER {
        return Err(Error::Schema(format!(
            "{}: expected columns {}",
            path.display(),
            PREDICTION_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Validation {
            row: i + 1,
            message: m.to_string(),
        };
        let model: ModelKind = rec[0].parse()?;
        let landmark = rec[3].parse().map_err(|_| bad("LM must be a nonnegative integer"))?;
        let observed: f64 = rec[4].parse().map_err(|_| bad("observed must be 0 or 1"))?;
        if observed != 0.0 && observed != 1.0 {
            return Err(bad("observed must be 0 or 1"));
        }
        let risk = match &rec[5] {
            "NA" | "" => None,
            v => {
                let r: f64 = v.parse().map_err(|_| bad("risk must be numeric or NA"))?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(bad("risk must lie in [0, 1]"));
                }
                Some(r)
            }
        };
        out.push((
            model,
            Prediction {
                episode_id: rec[1].to_string(),
                admission_id: rec[2].to_string(),
                landmark,
                observed,
                risk,
            },
        ));
    }
    Ok(out)
}
