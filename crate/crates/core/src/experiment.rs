//! Config-driven experiment runner.
//!
//! A config is a TOML file with the sections `dataset`, `partition`,
//! `model`, `train`, `eval`, `augment` and `grid`, plus a top-level `seeds`
//! list. Every key has a default and unknown keys are rejected. The `grid`
//! lists, when non-empty, override the matching base value and are expanded
//! as a cartesian product; each grid cell gets its own output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, partition, split_train_test, write_manifest, AugmentSpec, ClientDataset, Dataset, PartitionMode, PartitionSpec};
use crate::error::{Error, Result};
use crate::evaluation::{probe_training_set, LpMode, ProbeEvaluator};
use crate::federation::{run_federation, ClientUpdate, FederationConfig, RoundHooks, RoundMetrics, ServerOptimizer, METRICS_HEADER};
use crate::losses::{Critic, LossConfig, Method};
use crate::model::{write_checkpoint, ModelDims, ModelParams};
use crate::numerics::Rng;

/// Environment variable holding a comma-separated seed list that replaces
/// the config's `seeds`.
pub const SEED_OVERRIDE_VAR: &str = "FCL_SEED_OVERRIDE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub num_classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub class_separation: f64,
    pub test_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 16,
            n_per_class: 200,
            class_separation: 2.0,
            test_fraction: 0.2,
        }
    }
}

/// Network widths; input size, client count and class count come from the
/// other sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub encoder_hidden: Vec<usize>,
    pub z_dim: usize,
    pub projector_hidden: usize,
    pub proj_dim: usize,
    /// Only used by the SimSiam methods.
    pub predictor_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![64],
            z_dim: 32,
            projector_hidden: 64,
            proj_dim: 16,
            predictor_hidden: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerKind {
    Adam,
    Averaging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub rounds: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    pub server: ServerKind,
    pub server_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub method: Method,
    pub uv_weight: f64,
    pub temperature: f64,
    /// Write a checkpoint every this many rounds; `0` disables.
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            rounds: 100,
            clients_per_round: 10,
            local_epochs: 1,
            batch_size: 128,
            local_lr: 0.1,
            server: ServerKind::Adam,
            server_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            method: Method::FederatedSimclr,
            uv_weight: 1.0,
            temperature: 0.5,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub every: usize,
    pub lp_epochs: usize,
    pub lp_lr: f64,
    pub lp_mode: LpMode,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            every: 10,
            lp_epochs: 20,
            lp_lr: 0.1,
            lp_mode: LpMode::FullLabels,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub methods: Vec<Method>,
    pub modes: Vec<PartitionMode>,
    pub alphas: Vec<f64>,
    pub local_epochs: Vec<usize>,
    pub labelled_fractions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub dataset: DatasetSection,
    pub partition: PartitionSpec,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub augment: AugmentSpec,
    pub grid: GridSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            dataset: DatasetSection::default(),
            partition: PartitionSpec::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            augment: AugmentSpec::default(),
            grid: GridSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: need at least one seed"));
        }
        let d = &self.dataset;
        if d.num_classes < 2 || d.n_per_class == 0 || d.dim < 2 {
            return Err(Error::config("dataset: need num_classes >= 2, n_per_class >= 1, dim >= 2"));
        }
        if !(d.class_separation > 0.0) {
            return Err(Error::config("dataset.class_separation must be > 0"));
        }
        if !(0.0..1.0).contains(&d.test_fraction) {
            return Err(Error::config("dataset.test_fraction must be in [0, 1)"));
        }
        if self.model.z_dim == 0 || self.model.proj_dim == 0 || self.model.projector_hidden == 0 {
            return Err(Error::config("model: widths must be positive"));
        }
        if self.eval.lp_lr < 0.0 {
            return Err(Error::config("eval.lp_lr must be >= 0"));
        }
        Critic::new(self.train.temperature).map_err(|e| Error::Config(format!("train.temperature: {e}")))?;
        if !(self.train.uv_weight >= 0.0) {
            return Err(Error::config("train.uv_weight must be >= 0"));
        }
        for cell in self.cells() {
            let c = &cell.config;
            c.federation_config(self.seeds[0])?.validate(c.partition.num_clients)?;
            if c.partition.mode != PartitionMode::LabelSkew && c.dataset.dim % 2 != 0 {
                return Err(Error::config("dataset.dim must be even for rotation partitions"));
            }
        }
        Ok(())
    }

    /// Applies a comma-separated seed list.
    pub fn override_seeds(&mut self, list: &str) -> Result<()> {
        let seeds = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u64>().map_err(|_| Error::config(format!("{SEED_OVERRIDE_VAR}: bad seed `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if seeds.is_empty() {
            return Err(Error::config(format!("{SEED_OVERRIDE_VAR} is empty")));
        }
        self.seeds = seeds;
        Ok(())
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims {
            input_dim: self.dataset.dim,
            encoder_hidden: self.model.encoder_hidden.clone(),
            z_dim: self.model.z_dim,
            projector_hidden: self.model.projector_hidden,
            proj_dim: self.model.proj_dim,
            predictor_hidden: if self.train.method.needs_predictor() { self.model.predictor_hidden } else { 0 },
            num_clients: self.partition.num_clients,
            num_classes: self.dataset.num_classes,
        }
    }

    pub fn federation_config(&self, seed: u64) -> Result<FederationConfig> {
        let t = &self.train;
        let server = match t.server {
            ServerKind::Adam => ServerOptimizer::Adam {
                lr: t.server_lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
            },
            ServerKind::Averaging => ServerOptimizer::Averaging { lr: t.server_lr },
        };
        Ok(FederationConfig {
            rounds: t.rounds,
            clients_per_round: t.clients_per_round,
            local_epochs: t.local_epochs,
            batch_size: t.batch_size,
            local_lr: t.local_lr,
            server,
            loss: LossConfig {
                method: t.method,
                uv_weight: t.uv_weight,
                critic: Critic::new(t.temperature)?,
            },
            augment: self.augment,
            seed,
            eval_every: self.eval.every,
            threads: 1,
        })
    }

    /// Grid expansion; a config without grid lists is a single cell.
    pub fn cells(&self) -> Vec<Cell> {
        fn axis<T: Clone>(list: &[T], base: T) -> Vec<T> {
            if list.is_empty() {
                vec![base]
            } else {
                list.to_vec()
            }
        }
        let g = &self.grid;
        let mut out = Vec::new();
        for method in axis(&g.methods, self.train.method) {
            for mode in axis(&g.modes, self.partition.mode) {
                for alpha in axis(&g.alphas, self.partition.alpha) {
                    for epochs in axis(&g.local_epochs, self.train.local_epochs) {
                        for frac in axis(&g.labelled_fractions, self.partition.labelled_fraction) {
                            let mut c = self.clone();
                            c.grid = GridSection::default();
                            c.train.method = method;
                            c.partition.mode = mode;
                            c.partition.alpha = alpha;
                            c.train.local_epochs = epochs;
                            c.partition.labelled_fraction = frac;
                            out.push(Cell {
                                name: format!("{method}_{mode}_a{alpha}_e{epochs}_l{frac}"),
                                config: c,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One point of the grid: a fully resolved config.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub name: String,
    pub config: ExperimentConfig,
}

/// Data and model state a seed's run starts from.
#[derive(Clone, Debug)]
pub struct SeedSetup {
    pub train: Dataset,
    pub test: Dataset,
    pub clients: Vec<ClientDataset>,
    pub init: ModelParams,
}

/// Builds the dataset, partition and initial parameters for one seed. Data
/// and partition depend only on the seed and the dataset/partition sections,
/// so methods compared at equal seed see identical clients.
pub fn setup_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedSetup> {
    let d = &cfg.dataset;
    let full = generate_synthetic(d.num_classes, d.dim, d.n_per_class, d.class_separation, &mut Rng::derive(seed, "data", 0))?;
    let (train, test) = split_train_test(&full, d.test_fraction, &mut Rng::derive(seed, "split", 0))?;
    let clients = partition(&train, &cfg.partition, &mut Rng::derive(seed, "partition", 0))?;
    let init = ModelParams::init(&cfg.model_dims(), &mut Rng::derive(seed, "init", 0))?;
    Ok(SeedSetup { train, test, clients, init })
}

struct RunnerHooks<'a> {
    evaluator: ProbeEvaluator,
    csv: Option<BufWriter<fs::File>>,
    checkpoint_dir: Option<PathBuf>,
    checkpoint_every: usize,
    seed: u64,
    extra: Option<&'a mut dyn RoundHooks>,
}

impl RunnerHooks<'_> {
    fn write_row(&mut self, row: &RoundMetrics) -> Result<()> {
        if let Some(w) = self.csv.as_mut() {
            writeln!(w, "{}", row.csv_row())?;
            w.flush()?;
        }
        Ok(())
    }
}

impl RoundHooks for RunnerHooks<'_> {
    fn evaluate(&mut self, _round: usize, params: &ModelParams) -> Result<Option<(f64, f64)>> {
        Ok(Some(self.evaluator.evaluate(params)?))
    }

    fn on_client_update(&mut self, round: usize, update: &ClientUpdate) {
        if let Some(h) = self.extra.as_mut() {
            h.on_client_update(round, update);
        }
    }

    fn on_aggregate(&mut self, round: usize, participants: &[usize], g: &[f64]) {
        if let Some(h) = self.extra.as_mut() {
            h.on_aggregate(round, participants, g);
        }
    }

    fn on_skipped_client(&mut self, round: usize, client: usize) {
        eprintln!("warning: round {round}: client {client} has no usable samples, skipped");
        if let Some(h) = self.extra.as_mut() {
            h.on_skipped_client(round, client);
        }
    }

    fn on_round_end(&mut self, metrics: &RoundMetrics, params: &ModelParams) -> Result<()> {
        self.write_row(metrics)?;
        if let Some(dir) = &self.checkpoint_dir {
            if self.checkpoint_every > 0 && metrics.round % self.checkpoint_every == 0 {
                let path = dir.join(format!("seed{}_round{}.fclp", self.seed, metrics.round));
                write_checkpoint(params, BufWriter::new(fs::File::create(path)?))?;
            }
        }
        if let Some(h) = self.extra.as_mut() {
            h.on_round_end(metrics, params)?;
        }
        Ok(())
    }
}

/// Metrics of one seed: a round-0 row with the probe on the initial model,
/// then one row per round.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: Vec<RoundMetrics>,
    pub params: ModelParams,
}

impl SeedOutcome {
    /// Last reported `(train, test)` probe accuracy.
    pub fn final_accuracy(&self) -> (f64, f64) {
        self.metrics
            .iter()
            .rev()
            .find_map(|m| Some((m.lp_train_acc?, m.lp_test_acc?)))
            .unwrap_or((f64::NAN, f64::NAN))
    }
}

/// Runs one resolved config for one seed. With `out_dir`, writes
/// `metrics_<seed>.csv` there row by row, so an aborted run leaves the rows
/// completed so far.
pub fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    threads: usize,
    out_dir: Option<&Path>,
    extra: Option<&mut dyn RoundHooks>,
) -> Result<SeedOutcome> {
    let setup = setup_seed(cfg, seed)?;
    let mut fed = cfg.federation_config(seed)?;
    fed.threads = threads.max(1);

    let evaluator = ProbeEvaluator::new(
        cfg.model.z_dim,
        cfg.dataset.num_classes,
        probe_training_set(&setup.train, &setup.clients, cfg.eval.lp_mode),
        &setup.test,
        cfg.eval.lp_epochs,
        cfg.eval.lp_lr,
    );
    let csv = match out_dir {
        Some(dir) => {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("metrics_{seed}.csv")))?);
            writeln!(w, "{METRICS_HEADER}")?;
            Some(w)
        }
        None => None,
    };
    let checkpoint_dir = match out_dir {
        Some(dir) if cfg.train.checkpoint_every > 0 => {
            let d = dir.join("checkpoints");
            fs::create_dir_all(&d)?;
            Some(d)
        }
        _ => None,
    };
    let mut hooks = RunnerHooks {
        evaluator,
        csv,
        checkpoint_dir,
        checkpoint_every: cfg.train.checkpoint_every,
        seed,
        extra,
    };

    let (train_acc, test_acc) = hooks.evaluator.evaluate(&setup.init)?;
    let initial = RoundMetrics {
        round: 0,
        method: cfg.train.method,
        loss_total: 0.0,
        loss_contrastive: 0.0,
        loss_uv: 0.0,
        loss_label: 0.0,
        lp_train_acc: Some(train_acc),
        lp_test_acc: Some(test_acc),
        participating_clients: 0,
        params_l2: setup.init.l2_norm(),
    };
    hooks.write_row(&initial)?;

    let run = run_federation(&fed, setup.init, &setup.clients, &mut hooks)?;
    let mut metrics = Vec::with_capacity(run.metrics.len() + 1);
    metrics.push(initial);
    metrics.extend(run.metrics);
    Ok(SeedOutcome {
        seed,
        metrics,
        params: run.params,
    })
}

/// Sample mean and standard error (sample std / √n). The error is NaN for a
/// single value.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub name: String,
    pub method: Method,
    pub mode: PartitionMode,
    pub alpha: f64,
    pub local_epochs: usize,
    pub labelled_fraction: f64,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    pub test_accs: Vec<f64>,
    pub train_accs: Vec<f64>,
}

impl CellSummary {
    pub fn test_mean_se(&self) -> (f64, f64) {
        mean_and_se(&self.test_accs)
    }

    pub fn train_mean_se(&self) -> (f64, f64) {
        mean_and_se(&self.train_accs)
    }
}

pub const SUMMARY_HEADER: &str = "cell,method,mode,alpha,local_epochs,labelled_fraction,rounds,num_seeds,lp_test_acc_mean,lp_test_acc_se,lp_train_acc_mean,lp_train_acc_se";

pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for c in cells {
        let (tm, ts) = c.test_mean_se();
        let (rm, rs) = c.train_mean_se();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{tm},{ts},{rm},{rs}",
            c.name,
            c.method,
            c.mode,
            c.alpha,
            c.local_epochs,
            c.labelled_fraction,
            c.rounds,
            c.seeds.len()
        );
    }
    out
}

pub fn report_text(cells: &[CellSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "final linear-probe accuracy, mean ± standard error over seeds\n");
    let _ = writeln!(
        out,
        "{:<18} {:<16} {:>8} {:>3} {:>6} {:>6} {:>18} {:>18}",
        "method", "mode", "alpha", "E", "lab", "seeds", "test acc", "train acc"
    );
    for c in cells {
        let (tm, ts) = c.test_mean_se();
        let (rm, rs) = c.train_mean_se();
        let _ = writeln!(
            out,
            "{:<18} {:<16} {:>8} {:>3} {:>6} {:>6} {:>18} {:>18}",
            c.method.as_str(),
            c.mode.as_str(),
            c.alpha,
            c.local_epochs,
            c.labelled_fraction,
            c.seeds.len(),
            format!("{tm:.4} ± {ts:.4}"),
            format!("{rm:.4} ± {rs:.4}")
        );
    }
    out
}

/// Runs every grid cell and seed, writing per-cell metrics and checkpoints,
/// `summary.csv`, `report.txt` and a verbatim copy of the config text to
/// `out`. If a seed fails, the summary of the cells finished so far is still
/// written before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, config_text: &str, out: &Path, threads: usize) -> Result<Vec<CellSummary>> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), config_text)?;
    let mut summaries = Vec::new();
    let result = (|| -> Result<()> {
        for cell in cfg.cells() {
            let dir = out.join(&cell.name);
            fs::create_dir_all(&dir)?;
            let c = &cell.config;
            let mut summary = CellSummary {
                name: cell.name.clone(),
                method: c.train.method,
                mode: c.partition.mode,
                alpha: c.partition.alpha,
                local_epochs: c.train.local_epochs,
                labelled_fraction: c.partition.labelled_fraction,
                rounds: c.train.rounds,
                seeds: Vec::new(),
                test_accs: Vec::new(),
                train_accs: Vec::new(),
            };
            for &seed in &cfg.seeds {
                let outcome = run_seed(c, seed, threads, Some(&dir), None)?;
                let (train, test) = outcome.final_accuracy();
                summary.seeds.push(seed);
                summary.train_accs.push(train);
                summary.test_accs.push(test);
            }
            summaries.push(summary);
        }
        Ok(())
    })();
    fs::write(out.join("summary.csv"), summary_csv(&summaries))?;
    fs::write(out.join("report.txt"), report_text(&summaries))?;
    result.map(|_| summaries)
}

/// Partition manifest plus per-client label histograms for every
/// (mode, alpha, labelled fraction) in the grid, using the first seed.
pub fn partition_audit(cfg: &ExperimentConfig) -> Result<String> {
    let seed = cfg.seeds[0];
    let mut seen = Vec::new();
    let mut out = String::new();
    for cell in cfg.cells() {
        let p = &cell.config.partition;
        let key = (p.mode, p.alpha.to_bits(), p.labelled_fraction.to_bits());
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let setup = setup_seed(&cell.config, seed)?;
        let classes = cfg.dataset.num_classes;
        let _ = writeln!(
            out,
            "# partition mode={} alpha={} labelled_fraction={} clients={} seed={seed}",
            p.mode, p.alpha, p.labelled_fraction, p.num_clients
        );
        let mut manifest = Vec::new();
        write_manifest(&setup.clients, &mut manifest)?;
        out.push_str(&String::from_utf8(manifest).map_err(|e| Error::Format(e.to_string()))?);
        let _ = write!(out, "# label histograms\nclient_id,num_samples,num_labelled,rotation_bins");
        for k in 0..classes {
            let _ = write!(out, ",class_{k}");
        }
        out.push('\n');
        for c in &setup.clients {
            let bins: Vec<String> = c.rotation_bins.iter().map(|b| b.to_string()).collect();
            let _ = write!(out, "{},{},{},{}", c.client_id, c.len(), c.num_labelled(), bins.join(" "));
            for k in c.label_histogram(classes) {
                let _ = write!(out, ",{k}");
            }
            out.push('\n');
        }
    }
    Ok(out)
}
