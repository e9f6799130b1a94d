//! Browser demo bindings. Every export returns a flat numeric array so the
//! page can draw it without a serialization layer.

use fcl_core::data::{generate_synthetic, partition, PartitionMode, PartitionSpec};
use fcl_core::experiment::{run_seed, ExperimentConfig};
use fcl_core::losses::Method;
use fcl_core::mi_oracle::{validate_infonce_bound, CriticTable, DiscreteJoint};
use fcl_core::Rng;
use wasm_bindgen::prelude::*;

pub const NUM_CLASSES: usize = 10;
pub const NUM_BINS: usize = 10;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Per client, `NUM_CLASSES` label counts followed by `NUM_BINS` rotation-bin
/// counts (all zero when the mode does not rotate).
#[wasm_bindgen]
pub fn partition_histograms(mode: &str, alpha: f64, num_clients: usize, seed: u32) -> Result<Vec<u32>, String> {
    let mode: PartitionMode = mode.parse().map_err(err)?;
    let seed = u64::from(seed);
    let ds = generate_synthetic(NUM_CLASSES, 16, 100, 2.0, &mut Rng::derive(seed, "data", 0)).map_err(err)?;
    let spec = PartitionSpec {
        mode,
        alpha,
        num_clients,
        num_rotation_bins: NUM_BINS,
        ..Default::default()
    };
    let clients = partition(&ds, &spec, &mut Rng::derive(seed, "partition", 0)).map_err(err)?;
    let mut out = Vec::with_capacity(num_clients * (NUM_CLASSES + NUM_BINS));
    for c in &clients {
        out.extend(c.label_histogram(NUM_CLASSES).iter().map(|&k| k as u32));
        let mut bins = [0u32; NUM_BINS];
        for b in c.sample_bins.iter().flatten() {
            bins[*b] += 1;
        }
        out.extend(bins);
    }
    Ok(out)
}

/// InfoNCE estimates with the optimal critic on a random discrete joint,
/// for `K = 1, 2, 4, …, 2^max_log2_k`. Layout: `[true_mi, (k, estimate,
/// std_error, ln k)…]`.
#[wasm_bindgen]
pub fn infonce_curve(num_clients: usize, support: usize, max_log2_k: u32, samples: usize, seed: u32) -> Result<Vec<f64>, String> {
    let mut rng = Rng::derive(u64::from(seed), "joint", 0);
    let joint = DiscreteJoint::random_views(num_clients, support, support, &mut rng).map_err(err)?;
    let critic = CriticTable::optimal(&joint).map_err(err)?;
    let mut out = Vec::new();
    for i in 0..=max_log2_k.min(12) {
        let k = 1usize << i;
        let c = validate_infonce_bound(&joint, &critic, k, samples, &mut rng).map_err(err)?;
        if out.is_empty() {
            out.push(c.true_mi);
        }
        out.extend([k as f64, c.bound_estimate, c.std_error, (k as f64).ln()]);
    }
    Ok(out)
}

fn demo_config(alpha: f64, rounds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.n_per_class = 60;
    cfg.partition.alpha = alpha;
    cfg.partition.num_clients = 10;
    cfg.train.rounds = rounds;
    cfg.train.clients_per_round = 5;
    cfg.train.batch_size = 64;
    cfg.train.server_lr = 3e-3;
    cfg.eval.every = (rounds / 10).max(1);
    cfg
}

/// Linear-probe test accuracy of local and federated SimCLR on a label-skew
/// split. Layout: `[(round, local_acc, federated_acc)…]` for each evaluated
/// round, starting at round 0.
#[wasm_bindgen]
pub fn training_curve(alpha: f64, rounds: usize, seed: u32) -> Result<Vec<f64>, String> {
    let mut curves = Vec::new();
    for method in [Method::LocalSimclr, Method::FederatedSimclr] {
        let mut cfg = demo_config(alpha, rounds);
        cfg.train.method = method;
        cfg.validate().map_err(err)?;
        let run = run_seed(&cfg, u64::from(seed), 1, None, None).map_err(err)?;
        let points: Vec<(usize, f64)> = run
            .metrics
            .iter()
            .filter_map(|m| Some((m.round, m.lp_test_acc?)))
            .collect();
        curves.push(points);
    }
    Ok(curves[0]
        .iter()
        .zip(&curves[1])
        .flat_map(|(&(r, local), &(_, fed))| [r as f64, local, fed])
        .collect())
}
