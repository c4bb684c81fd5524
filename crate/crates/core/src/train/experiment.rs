//! The four experiment protocols over a feature table.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{aggregate, Aggregate, Metrics};
use super::trainer::{evaluate, train};
use crate::error::{Error, Result};
use crate::features::{select_features, FeatureRow, Provenance, SelectionReport};
use crate::models::{ModelKind, ModelSpec};
use crate::partition::{
    check_disjoint, group_series, loocv_folds, make_windows, split_cells, Normalizer, SequenceDataset, SplitMode,
    SplitPlan,
};
use crate::quantum::{NoiseSpec, VqcConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Compare,
    Ablate,
    QubitSweep,
    NoiseSweep,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Compare => "compare",
            Protocol::Ablate => "ablate",
            Protocol::QubitSweep => "qubit_sweep",
            Protocol::NoiseSweep => "noise_sweep",
        }
    }

    pub fn models(self) -> &'static [ModelKind] {
        match self {
            Protocol::Compare => &[ModelKind::Qlstm, ModelKind::Lstm, ModelKind::Gru],
            Protocol::Ablate => &[ModelKind::Lstm, ModelKind::NgLstm, ModelKind::QeLstm, ModelKind::Qlstm],
            Protocol::QubitSweep | Protocol::NoiseSweep => &[ModelKind::Qlstm],
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "compare" => Ok(Protocol::Compare),
            "ablate" => Ok(Protocol::Ablate),
            "qubit_sweep" | "sweep_qubits" => Ok(Protocol::QubitSweep),
            "noise_sweep" | "sweep_noise" => Ok(Protocol::NoiseSweep),
            other => Err(Error::Parse(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Selected, normalized and windowed data for one split.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub plan: SplitPlan,
    pub selection: SelectionReport,
    pub normalizer: Normalizer,
    pub train: SequenceDataset,
    pub test: SequenceDataset,
}

impl PreparedFold {
    pub fn label(&self) -> String {
        self.plan.test_cells.join("+")
    }
}

/// Feature selection and normalization are fitted on the training cells
/// only; both refuse test-tagged rows.
pub fn prepare_fold(rows: &[FeatureRow], plan: SplitPlan, cfg: &ExperimentConfig) -> Result<PreparedFold> {
    let tagged = plan.tag(rows)?;
    let train_rows: Vec<_> = tagged.iter().filter(|r| r.provenance == Provenance::Train).cloned().collect();
    let selection = select_features(&train_rows, cfg.k_sel, cfg.mi_bins)?;
    let normalizer = Normalizer::fit(&train_rows)?;
    let (train, test) = split_windows(rows, &plan, &selection, &normalizer, cfg.window)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation(format!(
            "split yields {} train and {} test windows",
            train.len(),
            test.len()
        )));
    }
    Ok(PreparedFold { plan, selection, normalizer, train, test })
}

/// Normalized, projected train and test windows for a fitted split.
pub fn split_windows(
    rows: &[FeatureRow],
    plan: &SplitPlan,
    selection: &SelectionReport,
    normalizer: &Normalizer,
    k: usize,
) -> Result<(SequenceDataset, SequenceDataset)> {
    let scaled = normalizer.apply(rows)?;
    let side = |p: Provenance| -> Result<SequenceDataset> {
        let part: Vec<FeatureRow> = scaled
            .iter()
            .filter(|r| plan.provenance(&r.cell_id) == Some(p))
            .cloned()
            .collect();
        make_windows(&group_series(&part, |r| selection.project(&r.features.hi)), k)
    };
    let train = side(Provenance::Train)?;
    let test = side(Provenance::Test)?;
    check_disjoint(&train, &test)?;
    Ok((train, test))
}

pub fn model_spec(kind: ModelKind, cfg: &ExperimentConfig, input_dim: usize, n_qubits: usize, p: f64) -> Result<ModelSpec> {
    let noise = if p > 0.0 { Some(NoiseSpec::exact(p)?) } else { None };
    let vqc = VqcConfig::new(n_qubits, cfg.n_layers)?.with_noise(noise)?;
    ModelSpec::new(kind, input_dim, cfg.hidden_dim, vqc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub protocol: Protocol,
    pub model: ModelKind,
    pub dataset: String,
    pub fold: String,
    /// Absent for classical models.
    pub n_qubits: Option<usize>,
    pub p: f64,
    pub seed: u64,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub protocol: Protocol,
    pub model: ModelKind,
    pub fold: String,
    pub n_qubits: Option<usize>,
    pub p: f64,
    pub mae: Option<Aggregate>,
    pub rmse: Option<Aggregate>,
    pub r2: Option<Aggregate>,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: Protocol,
    pub dataset: String,
    pub records: Vec<RunRecord>,
    pub summary: Vec<GridSummary>,
    pub splits: Vec<SplitPlan>,
    pub selections: Vec<SelectionReport>,
}

impl ExperimentReport {
    pub fn all_completed(&self) -> bool {
        self.records.iter().all(|r| r.error.is_none())
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per grid cell: the metric-vs-factor table behind the figures.
    pub fn plot_table(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "protocol", "model", "fold", "n_qubits", "p", "mae_mean", "mae_std", "rmse_mean", "rmse_std", "r2_mean",
            "r2_std", "completed", "failed",
        ])?;
        let opt = |a: &Option<Aggregate>| match a {
            Some(a) => [a.mean.to_string(), a.std.to_string()],
            None => [String::new(), String::new()],
        };
        for s in &self.summary {
            let [mae_m, mae_s] = opt(&s.mae);
            let [rmse_m, rmse_s] = opt(&s.rmse);
            let [r2_m, r2_s] = opt(&s.r2);
            w.write_record([
                s.protocol.name().to_string(),
                s.model.name().to_string(),
                s.fold.clone(),
                s.n_qubits.map(|n| n.to_string()).unwrap_or_default(),
                s.p.to_string(),
                mae_m,
                mae_s,
                rmse_m,
                rmse_s,
                r2_m,
                r2_s,
                s.completed.to_string(),
                s.failed.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Writes `<protocol>_records.json` and `<protocol>_plot.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}_records.json", self.protocol)), self.to_text()?)?;
        fs::write(dir.join(format!("{}_plot.csv", self.protocol)), self.plot_table()?)?;
        Ok(())
    }
}

struct GridPoint {
    model: ModelKind,
    n_qubits: usize,
    p: f64,
}

fn grid(protocol: Protocol, cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let base = |model| GridPoint { model, n_qubits: cfg.n_qubits, p: cfg.noise_p };
    match protocol {
        Protocol::Compare | Protocol::Ablate => protocol.models().iter().map(|&m| base(m)).collect(),
        Protocol::QubitSweep => cfg
            .qubit_grid
            .iter()
            .map(|&n| GridPoint { n_qubits: n, ..base(ModelKind::Qlstm) })
            .collect(),
        Protocol::NoiseSweep => cfg
            .noise_grid
            .iter()
            .map(|&p| GridPoint { p, ..base(ModelKind::Qlstm) })
            .collect(),
    }
}

/// Splits for a protocol: LOOCV over every cell for the ablation, one seeded
/// fixed-ratio split otherwise.
pub fn protocol_splits(protocol: Protocol, cells: &[String], cfg: &ExperimentConfig) -> Result<Vec<SplitPlan>> {
    match protocol {
        Protocol::Ablate => loocv_folds(cells, cfg.split_seed),
        _ => Ok(vec![split_cells(cells, SplitMode::FixedRatio(cfg.train_fraction), cfg.split_seed)?]),
    }
}

fn run_one(point: &GridPoint, fold: &PreparedFold, cfg: &ExperimentConfig, seed: u64) -> Result<Metrics> {
    let spec = model_spec(point.model, cfg, fold.train.d_sel, point.n_qubits, point.p)?;
    let (model, history) = train(spec, &fold.train, &cfg.train, seed)?;
    info!(
        "{} seed {seed}: train loss {:.3e} -> {:.3e}",
        point.model,
        history.initial_loss,
        history.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(evaluate(&model, &fold.test, &fold.normalizer)?.metrics)
}

/// Runs every grid cell and seed in a fixed order. A failed run is recorded
/// with its error and the grid continues.
pub fn run_experiment(protocol: Protocol, rows: &[FeatureRow], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let rows: Vec<FeatureRow> = rows.iter().filter(|r| !cfg.exclude_cells.contains(&r.cell_id)).cloned().collect();
    let cells: Vec<String> = rows.iter().map(|r| r.cell_id.clone()).collect();
    let plans = protocol_splits(protocol, &cells, cfg)?;
    let mut folds = Vec::with_capacity(plans.len());
    for plan in plans {
        folds.push(prepare_fold(&rows, plan, cfg)?);
    }
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for fold in &folds {
        for point in grid(protocol, cfg) {
            let n_qubits = point.model.uses_circuit().then_some(point.n_qubits);
            let mut ok: Vec<Metrics> = Vec::new();
            let mut failed = 0;
            for &seed in &cfg.train.seeds {
                info!("{protocol} {} fold {} n={:?} p={} seed {seed}", point.model, fold.label(), n_qubits, point.p);
                let result = run_one(&point, fold, cfg, seed);
                let (m, error) = match result {
                    Ok(m) => (Some(m), None),
                    Err(e) => {
                        warn!("run failed: {e}");
                        failed += 1;
                        (None, Some(e.to_string()))
                    }
                };
                records.push(RunRecord {
                    protocol,
                    model: point.model,
                    dataset: cfg.dataset.clone(),
                    fold: fold.label(),
                    n_qubits,
                    p: point.p,
                    seed,
                    mae: m.as_ref().map(|m| m.mae),
                    rmse: m.as_ref().map(|m| m.rmse),
                    r2: m.as_ref().and_then(|m| m.r2),
                    error,
                });
                ok.extend(m);
            }
            let r2: Vec<f64> = ok.iter().filter_map(|m| m.r2).collect();
            summary.push(GridSummary {
                protocol,
                model: point.model,
                fold: fold.label(),
                n_qubits,
                p: point.p,
                mae: aggregate(&ok.iter().map(|m| m.mae).collect::<Vec<_>>()),
                rmse: aggregate(&ok.iter().map(|m| m.rmse).collect::<Vec<_>>()),
                r2: aggregate(&r2),
                completed: ok.len(),
                failed,
            });
        }
    }
    Ok(ExperimentReport {
        protocol,
        dataset: cfg.dataset.clone(),
        records,
        summary,
        splits: folds.iter().map(|f| f.plan.clone()).collect(),
        selections: folds.into_iter().map(|f| f.selection).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_all;
    use crate::train::synth::{synth_generate, SynthSpec};

    fn tiny_rows() -> Vec<FeatureRow> {
        let spec = SynthSpec { n_cells: 3, cycles_min: 25, cycles_max: 30, ..SynthSpec::default() };
        let (_, recs) = synth_generate(&spec).unwrap();
        extract_all(&recs, spec.q_nom).0
    }

    fn tiny_cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.train.epochs = 1;
        c.train.seeds = vec![1, 2];
        c.train.lr = 0.01;
        c.window = 4;
        c.k_sel = 4;
        c.hidden_dim = 3;
        c.n_qubits = 2;
        c.train_fraction = 0.6;
        c
    }

    #[test]
    fn grids_follow_the_protocols() {
        let cfg = ExperimentConfig::default();
        let n: Vec<usize> = grid(Protocol::QubitSweep, &cfg).iter().map(|g| g.n_qubits).collect();
        assert_eq!(n, vec![4, 6, 8, 10, 12]);
        let p: Vec<f64> = grid(Protocol::NoiseSweep, &cfg).iter().map(|g| g.p).collect();
        assert_eq!(p, vec![0.0, 0.01, 0.02, 0.05]);
        assert_eq!(Protocol::Compare.models(), &[ModelKind::Qlstm, ModelKind::Lstm, ModelKind::Gru]);
        assert_eq!(Protocol::Ablate.models().len(), 4);
        assert_eq!("sweep-qubits".parse::<Protocol>().unwrap(), Protocol::QubitSweep);
    }

    #[test]
    fn compare_runs_every_cell_and_seed() {
        let rep = run_experiment(Protocol::Compare, &tiny_rows(), &tiny_cfg()).unwrap();
        assert_eq!(rep.records.len(), 6);
        assert!(rep.all_completed(), "{:?}", rep.records);
        assert_eq!(rep.summary.len(), 3);
        assert!(rep.summary.iter().all(|s| s.completed == 2 && s.mae.is_some()));
        let table = rep.plot_table().unwrap();
        assert_eq!(table.lines().count(), 4);
        assert!(rep.records.iter().filter(|r| r.model == ModelKind::Lstm).all(|r| r.n_qubits.is_none()));
    }

    #[test]
    fn ablation_uses_loocv_and_shares_selection() {
        let mut cfg = tiny_cfg();
        cfg.train.seeds = vec![1];
        let rep = run_experiment(Protocol::Ablate, &tiny_rows(), &cfg).unwrap();
        assert_eq!(rep.splits.len(), 3);
        assert_eq!(rep.selections.len(), 3);
        assert_eq!(rep.records.len(), 3 * 4);
        for s in &rep.splits {
            assert_eq!(s.test_cells.len(), 1);
        }
    }

    #[test]
    fn failed_runs_are_recorded_and_the_grid_continues() {
        let mut cfg = tiny_cfg();
        cfg.train.seeds = vec![1];
        // 9 qubits exceed the 4 + 3 gate input width.
        cfg.qubit_grid = vec![2, 9];
        let rep = run_experiment(Protocol::QubitSweep, &tiny_rows(), &cfg).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert!(rep.records[0].error.is_none());
        assert!(rep.records[1].error.is_some());
        assert!(!rep.all_completed());
        assert_eq!(rep.summary[1].failed, 1);
    }

    #[test]
    fn reruns_are_identical() {
        let a = run_experiment(Protocol::NoiseSweep, &tiny_rows(), &ExperimentConfig { noise_grid: vec![0.0, 0.05], ..tiny_cfg() }).unwrap();
        let b = run_experiment(Protocol::NoiseSweep, &tiny_rows(), &ExperimentConfig { noise_grid: vec![0.0, 0.05], ..tiny_cfg() }).unwrap();
        assert_eq!(a.to_text().unwrap(), b.to_text().unwrap());
    }
}
