use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use qlstm_core::features::hi::{read_feature_table, write_feature_table};
use qlstm_core::features::records::{read_records, write_records};
use qlstm_core::features::{extract_all, FeatureRow, Provenance, SelectionReport};
use qlstm_core::models::{Checkpoint, ModelKind};
use qlstm_core::partition::{loocv_folds, split_cells, Normalizer, SplitMode, SplitPlan};
use qlstm_core::train::{
    evaluate, model_spec, prepare_fold, run_experiment, split_windows, synth_generate, train, ExperimentConfig,
    Protocol, SynthSpec,
};

const RECORDS: &str = "records.csv";
const FEATURES: &str = "features.csv";

#[derive(Parser)]
#[command(name = "qlstm", version, about = "Hybrid quantum-classical LSTM for battery SOH estimation")]
struct Cli {
    /// Line-based key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input directory.
    #[arg(long, global = true, default_value = ".")]
    data: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Generator seed for `synth`, split seed elsewhere, and the model seed
    /// for `train`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic cycling records into <out>/records.csv.
    Synth(SynthArgs),
    /// Extract SOH and the 13 health indicators from <data>/records.csv.
    Extract,
    /// Rank features on the training cells of a split.
    Select(SplitArgs),
    /// Write a cell-level split manifest.
    Split(SplitArgs),
    /// Train one model on a fixed split.
    Train(TrainArgs),
    /// Evaluate a trained run directory on its test cells.
    Eval(EvalArgs),
    /// QLSTM vs LSTM vs GRU on one split, every seed.
    Compare,
    /// LSTM, NG-LSTM, QE-LSTM and QLSTM under leave-one-cell-out folds.
    Ablate,
    /// QLSTM over the configured qubit counts.
    SweepQubits,
    /// QLSTM over the configured bit-flip probabilities.
    SweepNoise,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    cells: usize,
    #[arg(long, default_value_t = 300)]
    cycles_min: u32,
    #[arg(long, default_value_t = 600)]
    cycles_max: u32,
}

#[derive(Args)]
struct SplitArgs {
    /// Leave-one-cell-out folds instead of a fixed-ratio split.
    #[arg(long)]
    loocv: bool,
    /// Split manifest to reuse instead of drawing a new split.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "QLSTM")]
    model: ModelKind,
    /// Split manifest to reuse instead of drawing a new split.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long)]
    run: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_features(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<FeatureRow>> {
    let path = dir.join(FEATURES);
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let rows = read_feature_table(BufReader::new(file))?;
    Ok(rows.into_iter().filter(|r| !cfg.exclude_cells.contains(&r.cell_id)).collect())
}

fn cell_ids(rows: &[FeatureRow]) -> Vec<String> {
    rows.iter().map(|r| r.cell_id.clone()).collect()
}

fn fixed_split(rows: &[FeatureRow], args_split: Option<&PathBuf>, cfg: &ExperimentConfig) -> Result<SplitPlan> {
    match args_split {
        Some(p) => Ok(SplitPlan::from_text(&fs::read_to_string(p)?)?),
        None => Ok(split_cells(&cell_ids(rows), SplitMode::FixedRatio(cfg.train_fraction), cfg.split_seed)?),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.split_seed = seed;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();

    match cli.command {
        Command::Synth(a) => {
            let spec = SynthSpec {
                n_cells: a.cells,
                cycles_min: a.cycles_min,
                cycles_max: a.cycles_max,
                q_nom: cfg.q_nom,
                seed: cli.seed.unwrap_or(SynthSpec::default().seed),
                ..SynthSpec::default()
            };
            let (cells, records) = synth_generate(&spec)?;
            write_records(BufWriter::new(File::create(out.join(RECORDS))?), &records)?;
            write_json(&out.join("synth.json"), &(&spec, &cells))?;
            info!("wrote {} cycles of {} cells", records.len(), cells.len());
        }
        Command::Extract => {
            let path = cli.data.join(RECORDS);
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let cycles = read_records(BufReader::new(file))?;
            let (rows, dropped) = extract_all(&cycles, cfg.q_nom);
            write_feature_table(BufWriter::new(File::create(out.join(FEATURES))?), &rows)?;
            write_json(&out.join("dropped.json"), &dropped)?;
            info!("extracted {} cycles, dropped {}", rows.len(), dropped.len());
        }
        Command::Split(a) => {
            let rows = load_features(&cli.data, &cfg)?;
            if a.loocv {
                for (i, plan) in loocv_folds(&cell_ids(&rows), cfg.split_seed)?.iter().enumerate() {
                    fs::write(out.join(format!("split_fold{i:02}.json")), plan.to_text()?)?;
                }
            } else {
                fs::write(out.join("split.json"), fixed_split(&rows, a.split.as_ref(), &cfg)?.to_text()?)?;
            }
        }
        Command::Select(a) => {
            let rows = load_features(&cli.data, &cfg)?;
            let plans = if a.loocv {
                loocv_folds(&cell_ids(&rows), cfg.split_seed)?
            } else {
                vec![fixed_split(&rows, a.split.as_ref(), &cfg)?]
            };
            for (i, plan) in plans.into_iter().enumerate() {
                let train_rows: Vec<_> =
                    plan.tag(&rows)?.into_iter().filter(|r| r.provenance == Provenance::Train).collect();
                let report = qlstm_core::features::select_features(&train_rows, cfg.k_sel, cfg.mi_bins)?;
                let name = if a.loocv { format!("selection_fold{i:02}.json") } else { "selection.json".into() };
                fs::write(out.join(name), report.to_text()?)?;
                info!("retained features {:?}", report.retained.iter().map(|k| k + 1).collect::<Vec<_>>());
            }
        }
        Command::Train(a) => {
            let rows = load_features(&cli.data, &cfg)?;
            let plan = fixed_split(&rows, a.split.as_ref(), &cfg)?;
            let fold = prepare_fold(&rows, plan, &cfg)?;
            let seed = cli.seed.unwrap_or(cfg.train.seeds[0]);
            let spec = model_spec(a.model, &cfg, fold.train.d_sel, cfg.n_qubits, cfg.noise_p)?;
            let (model, history) = train(spec, &fold.train, &cfg.train, seed)?;
            Checkpoint::from_model(&model).save(&out.join("checkpoint.json"))?;
            write_json(&out.join("history.json"), &history)?;
            write_json(&out.join("normalizer.json"), &fold.normalizer)?;
            write_json(&out.join("run.json"), &cfg)?;
            fs::write(out.join("selection.json"), fold.selection.to_text()?)?;
            fs::write(out.join("split.json"), fold.plan.to_text()?)?;
            let ev = evaluate(&model, &fold.test, &fold.normalizer)?;
            write_json(&out.join("metrics.json"), &ev.metrics)?;
            info!("{} seed {seed}: {:?}", a.model, ev.metrics);
        }
        Command::Eval(a) => {
            let run_cfg: ExperimentConfig = read_json(&a.run.join("run.json"))?;
            let rows = load_features(&cli.data, &run_cfg)?;
            let model = Checkpoint::load(&a.run.join("checkpoint.json"))?.into_model()?;
            let plan = SplitPlan::from_text(&fs::read_to_string(a.run.join("split.json"))?)?;
            let selection = SelectionReport::from_text(&fs::read_to_string(a.run.join("selection.json"))?)?;
            let normalizer: Normalizer = read_json(&a.run.join("normalizer.json"))?;
            let (_, test) = split_windows(&rows, &plan, &selection, &normalizer, run_cfg.window)?;
            let ev = evaluate(&model, &test, &normalizer)?;
            write_json(&out.join("metrics.json"), &ev.metrics)?;
            let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
            w.write_record(["cell_id", "cycle_index", "soh", "soh_pred"])?;
            for (win, (y, p)) in test.windows.iter().zip(&ev.pairs) {
                w.write_record([win.cell_id.clone(), win.cycle.to_string(), y.to_string(), p.to_string()])?;
            }
            w.flush()?;
            info!("{:?}", ev.metrics);
        }
        Command::Compare | Command::Ablate | Command::SweepQubits | Command::SweepNoise => {
            let protocol = match cli.command {
                Command::Compare => Protocol::Compare,
                Command::Ablate => Protocol::Ablate,
                Command::SweepQubits => Protocol::QubitSweep,
                _ => Protocol::NoiseSweep,
            };
            let rows = load_features(&cli.data, &cfg)?;
            if rows.is_empty() {
                bail!("no feature rows in {}", cli.data.join(FEATURES).display());
            }
            let report = run_experiment(protocol, &rows, &cfg)?;
            report.write(out)?;
            for (i, s) in report.selections.iter().enumerate() {
                fs::write(out.join(format!("{protocol}_selection_{i:02}.json")), s.to_text()?)?;
            }
            if !report.all_completed() {
                let failed = report.records.iter().filter(|r| r.error.is_some()).count();
                warn!("{failed} of {} runs failed", report.records.len());
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
