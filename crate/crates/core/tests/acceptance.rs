//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fcl_core::data::{make_views, partition, AugmentSpec, PartitionMode, PartitionSpec};
use fcl_core::experiment::{mean_and_se, run_experiment, run_seed, ExperimentConfig};
use fcl_core::federation::{client_rng, run_federation, ClientUpdate, FederationConfig, NoHooks, RoundHooks, ServerOptimizer};
use fcl_core::losses::{compose_client_loss, ClientBatch, LossConfig, Method};
use fcl_core::model::{ModelDims, ModelParams};
use fcl_core::validation::{chain_rule_checks, default_grad_checks, infonce_checks, label_skew_checks, run_grad_checks, uv_checks};
use fcl_core::{data::generate_synthetic, Result, Rng};

const GRAD_CONFIGS: usize = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const CHAIN_JOINTS: usize = 100;
const CHAIN_BUDGET: Duration = Duration::from_secs(5);
const BOUND_CASES: usize = 50;
const BOUND_SAMPLES: usize = 2000;
const BOUND_BUDGET: Duration = Duration::from_secs(30);
const EQUIVALENCE_STEPS: usize = 50;
const EQUIVALENCE_TOL: f64 = 1e-10;
const UNIT_NORM_TOL: f64 = 1e-12;
const TREND_BUDGET: Duration = Duration::from_secs(600);

const LABEL_SKEW: &str = include_str!("../../../configs/label_skew.toml");
const COVARIATE_SHIFT: &str = include_str!("../../../configs/covariate_shift.toml");
const ALPHA_SWEEP: &str = include_str!("../../../configs/alpha_sweep.toml");
const SEMI_SUPERVISED: &str = include_str!("../../../configs/semi_supervised.toml");

struct Outcome {
    pass: bool,
    detail: String,
}

fn gradient_suite() -> Result<Outcome> {
    let start = Instant::now();
    let checks = run_grad_checks(&default_grad_checks(), GRAD_CONFIGS, 0)?;
    let elapsed = start.elapsed();
    let worst = checks.iter().map(|c| c.true_value).fold(0.0, f64::max);
    let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Ok(Outcome {
        pass: failed.is_empty() && elapsed < GRAD_BUDGET,
        detail: format!(
            "{} variants x {GRAD_CONFIGS} configs, worst rel err {worst:.2e}, {:.1}s, failed {failed:?}",
            checks.len(),
            elapsed.as_secs_f64()
        ),
    })
}

fn chain_rule() -> Result<Outcome> {
    let start = Instant::now();
    let checks = chain_rule_checks(CHAIN_JOINTS, 0)?;
    let elapsed = start.elapsed();
    let global = &checks[0];
    Ok(Outcome {
        pass: global.pass && checks.iter().all(|c| c.pass) && elapsed < CHAIN_BUDGET,
        detail: format!(
            "{CHAIN_JOINTS} joints, max residual {:.1e}, {:.2}s",
            checks.iter().map(|c| c.true_value).fold(0.0, f64::max),
            elapsed.as_secs_f64()
        ),
    })
}

fn bound_suite() -> Result<Outcome> {
    let start = Instant::now();
    let mut checks = infonce_checks(BOUND_CASES, BOUND_SAMPLES, 0)?;
    checks.extend(uv_checks(BOUND_CASES, 0)?);
    checks.extend(label_skew_checks(BOUND_CASES, 0)?);
    let elapsed = start.elapsed();
    let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Ok(Outcome {
        pass: failed.is_empty() && elapsed < BOUND_BUDGET,
        detail: format!("{} bound families, {:.1}s, failed {failed:?}", checks.len(), elapsed.as_secs_f64()),
    })
}

fn equivalence() -> Result<Outcome> {
    let ds = generate_synthetic(4, 6, 10, 2.0, &mut Rng::new(3))?;
    let spec = PartitionSpec {
        num_clients: 1,
        ..Default::default()
    };
    let clients = partition(&ds, &spec, &mut Rng::new(4))?;
    let dims = ModelDims {
        input_dim: 6,
        encoder_hidden: vec![8],
        z_dim: 5,
        projector_hidden: 8,
        proj_dim: 4,
        predictor_hidden: 0,
        num_clients: 1,
        num_classes: 4,
    };
    let init = ModelParams::init(&dims, &mut Rng::new(5))?;
    let cfg = FederationConfig {
        rounds: EQUIVALENCE_STEPS,
        clients_per_round: 1,
        local_epochs: 1,
        batch_size: ds.len(),
        local_lr: 0.1,
        server: ServerOptimizer::Averaging { lr: 1.0 },
        loss: LossConfig::new(Method::LocalSimclr),
        augment: AugmentSpec::default(),
        seed: 9,
        eval_every: 0,
        threads: 1,
    };
    let fed = run_federation(&cfg, init.clone(), &clients, &mut NoHooks)?;

    // centralized gradient descent on the same views
    let client = &clients[0];
    let mut params = init;
    for round in 1..=EQUIVALENCE_STEPS {
        let mut rng = client_rng(cfg.seed, round, 0);
        let mut order: Vec<usize> = (0..client.len()).collect();
        rng.shuffle(&mut order);
        let (x1, x2) = make_views(&client.x.select_rows(&order), &cfg.augment, &mut rng)?;
        let batch = ClientBatch {
            x1,
            x2,
            labels: order.iter().map(|&i| client.y[i]).collect(),
            labelled: vec![false; order.len()],
            client_id: 0,
        };
        let loss = compose_client_loss(&params, &batch, &cfg.loss)?;
        params.axpy(-cfg.local_lr, &loss.grads);
    }
    let max_diff = fed
        .params
        .flatten()
        .iter()
        .zip(params.flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        pass: max_diff <= EQUIVALENCE_TOL,
        detail: format!("{EQUIVALENCE_STEPS} steps, max coordinate diff {max_diff:.2e}"),
    })
}

#[derive(Default)]
struct OwnershipAudit {
    uv_range: std::ops::Range<usize>,
    proj_dim: usize,
    rounds: usize,
    updates: usize,
    nonzero_blocks: usize,
    worst_norm_error: f64,
}

impl RoundHooks for OwnershipAudit {
    fn on_client_update(&mut self, _round: usize, update: &ClientUpdate) {
        self.updates += 1;
        let w = &update.params.uv_weights;
        for r in 0..w.rows() {
            let norm = w.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            self.worst_norm_error = self.worst_norm_error.max((norm - 1.0).abs());
        }
    }

    fn on_aggregate(&mut self, _round: usize, participants: &[usize], g: &[f64]) {
        self.rounds += 1;
        let uv = &g[self.uv_range.clone()];
        for (r, block) in uv.chunks(self.proj_dim).enumerate() {
            if !participants.contains(&r) && block.iter().any(|&v| v != 0.0) {
                self.nonzero_blocks += 1;
            }
        }
    }
}

fn uv_ownership() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::from_toml_str(LABEL_SKEW)?;
    cfg.train.method = Method::FederatedSimclr;
    cfg.train.rounds = 40;
    cfg.train.clients_per_round = 5;
    cfg.grid = Default::default();
    let probe = ModelParams::init(&cfg.model_dims(), &mut Rng::new(0))?;
    let mut audit = OwnershipAudit {
        uv_range: probe.uv_range(),
        proj_dim: cfg.model.proj_dim,
        ..Default::default()
    };
    run_seed(&cfg, 0, 1, None, Some(&mut audit))?;
    Ok(Outcome {
        pass: audit.rounds == cfg.train.rounds && audit.nonzero_blocks == 0 && audit.worst_norm_error <= UNIT_NORM_TOL,
        detail: format!(
            "{} rounds, {} client updates, non-owner nonzero blocks {}, worst |‖w‖−1| {:.1e}",
            audit.rounds, audit.updates, audit.nonzero_blocks, audit.worst_norm_error
        ),
    })
}

/// Final test accuracies per grid cell, keyed by (method, mode, alpha bits).
type Accs = BTreeMap<(Method, PartitionMode, u64), Vec<f64>>;

fn run_grid(text: &str) -> Result<(Accs, Duration)> {
    let cfg = ExperimentConfig::from_toml_str(text)?;
    let start = Instant::now();
    let mut out = Accs::new();
    for cell in cfg.cells() {
        let c = &cell.config;
        let accs = out.entry((c.train.method, c.partition.mode, c.partition.alpha.to_bits())).or_default();
        for &seed in &cfg.seeds {
            accs.push(run_seed(c, seed, 1, None, None)?.final_accuracy().1);
        }
    }
    Ok((out, start.elapsed()))
}

fn stats(accs: &Accs, method: Method) -> (f64, f64) {
    let v = accs.iter().find(|(k, _)| k.0 == method).map(|(_, v)| v.clone()).unwrap_or_default();
    mean_and_se(&v)
}

fn pooled(se_a: f64, se_b: f64) -> f64 {
    (se_a * se_a + se_b * se_b).sqrt()
}

fn label_skew_trend() -> Result<Outcome> {
    let (accs, t) = run_grid(LABEL_SKEW)?;
    let (fm, fs) = stats(&accs, Method::FederatedSimclr);
    let (lm, ls) = stats(&accs, Method::LocalSimclr);
    let se = pooled(fs, ls);
    Ok(Outcome {
        pass: fm - lm > se && t < TREND_BUDGET,
        detail: format!("federated {fm:.4}±{fs:.4} vs local {lm:.4}±{ls:.4}, gap {:.4} > pooled SE {se:.4}, {:.0}s", fm - lm, t.as_secs_f64()),
    })
}

fn covariate_shift_trend() -> Result<Outcome> {
    let (accs, t) = run_grid(COVARIATE_SHIFT)?;
    let (fm, fs) = stats(&accs, Method::FederatedSimclr);
    let (lm, ls) = stats(&accs, Method::LocalSimclr);
    let se = pooled(fs, ls);
    Ok(Outcome {
        pass: lm >= fm - se && t < TREND_BUDGET,
        detail: format!("local {lm:.4}±{ls:.4} vs federated {fm:.4}±{fs:.4}, pooled SE {se:.4}, {:.0}s", t.as_secs_f64()),
    })
}

fn alpha_sweep_trend() -> Result<Outcome> {
    let cfg = ExperimentConfig::from_toml_str(ALPHA_SWEEP)?;
    let (accs, _) = run_grid(ALPHA_SWEEP)?;
    let mut alphas = cfg.grid.alphas.clone();
    alphas.sort_by(|a, b| b.total_cmp(a));
    let mean = |m: Method, a: f64| mean_and_se(&accs[&(m, PartitionMode::LabelSkew, a.to_bits())]).0;
    let gaps: Vec<f64> = alphas
        .iter()
        .map(|&a| mean(Method::FederatedSimclr, a) - mean(Method::LocalSimclr, a))
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1] >= w[0]);
    Ok(Outcome {
        pass: monotone && alphas.len() == 3,
        detail: format!(
            "alpha {:?} -> gap {:?}",
            alphas,
            gaps.iter().map(|g| format!("{g:+.4}")).collect::<Vec<_>>()
        ),
    })
}

fn semi_supervised_trend() -> Result<Outcome> {
    let (accs, _) = run_grid(SEMI_SUPERVISED)?;
    let (fm, fs) = stats(&accs, Method::FederatedSimclr);
    let (sm, ss) = stats(&accs, Method::Supervised);
    let se = pooled(fs, ss);
    Ok(Outcome {
        pass: fm - sm > se,
        detail: format!("semi-supervised {fm:.4}±{fs:.4} vs supervised {sm:.4}±{ss:.4}, gap {:.4}, pooled SE {se:.4}", fm - sm),
    })
}

fn determinism() -> Result<Outcome> {
    let text = "seeds = [0, 1]\n[dataset]\nn_per_class = 40\n[partition]\nnum_clients = 8\n[train]\nrounds = 15\nclients_per_round = 4\n[eval]\nevery = 5\n";
    let cfg = ExperimentConfig::from_toml_str(text)?;
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    for d in &dirs {
        run_experiment(&cfg, text, d.path(), 1)?;
    }
    let mut compared = 0;
    let mut identical = true;
    for cell in cfg.cells() {
        for seed in &cfg.seeds {
            let name = format!("{}/metrics_{seed}.csv", cell.name);
            let a = fs::read(dirs[0].path().join(&name))?;
            let b = fs::read(dirs[1].path().join(&name))?;
            identical &= a == b && !a.is_empty();
            compared += 1;
        }
    }
    let summary_same = fs::read(dirs[0].path().join("summary.csv"))? == fs::read(dirs[1].path().join("summary.csv"))?;
    Ok(Outcome {
        pass: identical && summary_same && compared > 0,
        detail: format!("{compared} metrics files compared byte for byte, summary identical: {summary_same}"),
    })
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("1 gradient suite", gradient_suite),
        ("2 chain-rule identity", chain_rule),
        ("3 bound suite", bound_suite),
        ("4 federated-centralized equivalence", equivalence),
        ("5 uv ownership", uv_ownership),
        ("6 label-skew trend", label_skew_trend),
        ("7 covariate-shift non-inferiority", covariate_shift_trend),
        ("8 alpha sweep gap", alpha_sweep_trend),
        ("9 semi-supervised trend", semi_supervised_trend),
        ("10 determinism", determinism),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!("{} [{name}] {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
