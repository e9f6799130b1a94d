use fcl_core::data::{generate_synthetic, partition, AugmentSpec, ClientDataset, PartitionSpec};
use fcl_core::federation::{
    client_rng, client_update, metrics_csv, run_federation, uv_accuracy, ClientUpdate, FederationConfig, NoHooks,
    RoundHooks, ServerOptimizer,
};
use fcl_core::losses::{compose_client_loss, ClientBatch, LossConfig, Method};
use fcl_core::model::{ModelDims, ModelParams};
use fcl_core::{Error, Rng};

fn dims(clients: usize) -> ModelDims {
    ModelDims {
        input_dim: 8,
        encoder_hidden: vec![16],
        z_dim: 8,
        projector_hidden: 16,
        proj_dim: 6,
        predictor_hidden: 0,
        num_clients: clients,
        num_classes: 4,
    }
}

fn setup(clients: usize, seed: u64) -> (Vec<ClientDataset>, ModelParams) {
    let ds = generate_synthetic(4, 8, 30, 2.0, &mut Rng::new(seed)).unwrap();
    let spec = PartitionSpec {
        num_clients: clients,
        ..Default::default()
    };
    let parts = partition(&ds, &spec, &mut Rng::new(seed + 1)).unwrap();
    (parts, ModelParams::init(&dims(clients), &mut Rng::new(seed + 2)).unwrap())
}

fn config(method: Method) -> FederationConfig {
    FederationConfig {
        rounds: 5,
        clients_per_round: 3,
        batch_size: 16,
        loss: LossConfig::new(method),
        eval_every: 0,
        ..Default::default()
    }
}

#[test]
fn zero_rounds_return_init() {
    let (clients, init) = setup(4, 0);
    let cfg = FederationConfig { rounds: 0, ..config(Method::FederatedSimclr) };
    let run = run_federation(&cfg, init.clone(), &clients, &mut NoHooks).unwrap();
    assert!(run.metrics.is_empty());
    assert_eq!(run.params, init);
}

#[test]
fn zero_local_lr_returns_received_params() {
    let (clients, init) = setup(4, 1);
    let cfg = FederationConfig { local_lr: 0.0, ..config(Method::FederatedSimclr) };
    let out = client_update(&init, &clients[2], &cfg, &mut Rng::new(0)).unwrap().unwrap();
    assert_eq!(out.params, init);
}

#[test]
fn single_full_batch_step_matches_manual_gradient() {
    let (clients, init) = setup(4, 2);
    let client = &clients[1];
    let cfg = FederationConfig {
        batch_size: client.len(),
        augment: AugmentSpec::identity(),
        ..config(Method::FederatedSimclr)
    };
    let out = client_update(&init, client, &cfg, &mut Rng::new(5)).unwrap().unwrap();
    assert_eq!(out.steps, 1);

    let mut order: Vec<usize> = (0..client.len()).collect();
    Rng::new(5).shuffle(&mut order);
    let x = client.x.select_rows(&order);
    let batch = ClientBatch {
        x1: x.clone(),
        x2: x,
        labels: order.iter().map(|&i| client.y[i]).collect(),
        labelled: vec![false; order.len()],
        client_id: client.client_id,
    };
    let grads = compose_client_loss(&init, &batch, &cfg.loss).unwrap().grads;
    let mut expected = init.clone();
    expected.axpy(-cfg.local_lr, &grads);
    expected.project_uv_row(client.client_id);
    let diff = out
        .params
        .flatten()
        .iter()
        .zip(expected.flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn other_clients_uv_rows_are_untouched() {
    let (clients, init) = setup(5, 3);
    let cfg = FederationConfig { local_epochs: 3, ..config(Method::FederatedSimclr) };
    let out = client_update(&init, &clients[3], &cfg, &mut Rng::new(1)).unwrap().unwrap();
    for r in 0..5 {
        let norm: f64 = out.params.uv_weights.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        if r != 3 {
            assert_eq!(out.params.uv_weights.row(r), init.uv_weights.row(r));
        }
    }
    assert_ne!(out.params.uv_weights.row(3), init.uv_weights.row(3));
}

#[derive(Default)]
struct Participation {
    rounds: Vec<Vec<usize>>,
    skipped: Vec<(usize, usize)>,
}

impl RoundHooks for Participation {
    fn on_aggregate(&mut self, _round: usize, participants: &[usize], _g: &[f64]) {
        self.rounds.push(participants.to_vec());
    }

    fn on_skipped_client(&mut self, round: usize, client: usize) {
        self.skipped.push((round, client));
    }
}

#[test]
fn sampling_has_no_duplicates() {
    let (clients, init) = setup(8, 4);
    let cfg = FederationConfig { rounds: 20, clients_per_round: 5, ..config(Method::LocalSimclr) };
    let mut hooks = Participation::default();
    run_federation(&cfg, init, &clients, &mut hooks).unwrap();
    assert_eq!(hooks.rounds.len(), 20);
    for ids in &hooks.rounds {
        let mut d = ids.clone();
        d.dedup();
        assert_eq!(d.len(), 5);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn clients_without_usable_samples_are_skipped() {
    let (clients, init) = setup(4, 5);
    // no labels anywhere: the supervised method has nothing to train on
    let cfg = FederationConfig { rounds: 2, clients_per_round: 4, ..config(Method::Supervised) };
    let mut hooks = Participation::default();
    let run = run_federation(&cfg, init.clone(), &clients, &mut hooks).unwrap();
    assert_eq!(hooks.skipped.len(), 8);
    assert!(hooks.rounds.is_empty());
    assert_eq!(run.params, init);
    assert!(run.metrics.iter().all(|m| m.participating_clients == 0));
}

#[test]
fn result_does_not_depend_on_thread_count() {
    let (clients, init) = setup(6, 6);
    let base = FederationConfig { rounds: 4, clients_per_round: 5, ..config(Method::FederatedSimclr) };
    let one = run_federation(&base, init.clone(), &clients, &mut NoHooks).unwrap();
    let four = run_federation(&FederationConfig { threads: 4, ..base }, init, &clients, &mut NoHooks).unwrap();
    assert_eq!(one.params, four.params);
    assert_eq!(metrics_csv(&one.metrics), metrics_csv(&four.metrics));
}

#[test]
fn server_state_persists_across_rounds() {
    let (clients, init) = setup(4, 7);
    let cfg = FederationConfig { rounds: 6, ..config(Method::LocalSimclr) };
    let run = run_federation(&cfg, init, &clients, &mut NoHooks).unwrap();
    assert_eq!(run.server.step_count, 6);
    assert!(run.server.adam_v.iter().all(|&v| v >= 0.0));
    assert_eq!(run.params.flatten(), run.server.params);
}

#[test]
fn invalid_config_is_rejected() {
    let (clients, init) = setup(4, 8);
    let cfg = FederationConfig { clients_per_round: 9, ..config(Method::LocalSimclr) };
    assert!(matches!(run_federation(&cfg, init.clone(), &clients, &mut NoHooks), Err(Error::Config(_))));
    let cfg = FederationConfig { server: ServerOptimizer::Averaging { lr: 0.0 }, ..config(Method::LocalSimclr) };
    assert!(run_federation(&cfg, init, &clients, &mut NoHooks).is_err());
}

#[test]
fn divergence_aborts_with_error() {
    let (clients, init) = setup(4, 9);
    let cfg = FederationConfig { local_lr: 1e300, rounds: 3, ..config(Method::FederatedSimclr) };
    assert!(run_federation(&cfg, init, &clients, &mut NoHooks).is_err());
}

struct CountUpdates(usize);

impl RoundHooks for CountUpdates {
    fn on_client_update(&mut self, _round: usize, _update: &ClientUpdate) {
        self.0 += 1;
    }
}

#[test]
fn client_streams_are_independent_of_schedule() {
    let a = client_rng(3, 7, 2).next_u64();
    assert_eq!(a, client_rng(3, 7, 2).next_u64());
    assert_ne!(a, client_rng(3, 7, 3).next_u64());
    assert_ne!(a, client_rng(3, 8, 2).next_u64());
    let (clients, init) = setup(4, 10);
    let mut hooks = CountUpdates(0);
    run_federation(&config(Method::LocalSimclr), init, &clients, &mut hooks).unwrap();
    assert_eq!(hooks.0, 15);
}

#[test]
fn client_id_accuracy_rises_above_chance() {
    let clients_n = 10;
    let mut before = 0.0;
    let mut after = 0.0;
    let seeds = [0u64, 1, 2];
    for &seed in &seeds {
        let ds = generate_synthetic(10, 16, 40, 2.0, &mut Rng::new(seed)).unwrap();
        let spec = PartitionSpec { num_clients: clients_n, alpha: 0.1, ..Default::default() };
        let clients = partition(&ds, &spec, &mut Rng::new(seed + 10)).unwrap();
        let init = ModelParams::init(&ModelDims { input_dim: 16, num_clients: clients_n, ..ModelDims::default() }, &mut Rng::new(seed + 20)).unwrap();
        before += uv_accuracy(&init, &clients).unwrap();
        let cfg = FederationConfig {
            rounds: 50,
            clients_per_round: 5,
            server: ServerOptimizer::Adam { lr: 3e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            seed,
            eval_every: 0,
            ..Default::default()
        };
        let run = run_federation(&cfg, init, &clients, &mut NoHooks).unwrap();
        after += uv_accuracy(&run.params, &clients).unwrap();
    }
    let n = seeds.len() as f64;
    let (before, after) = (before / n, after / n);
    assert!(after > 1.0 / clients_n as f64, "{after}");
    assert!(after > before, "{before} -> {after}");
}
