//! Federated training: client sampling, local SGD on the client objective,
//! averaging of parameter deltas, and a server optimizer that treats the
//! averaged delta as a gradient.

use std::fmt::Write as _;

use crate::data::{make_views, AugmentSpec, ClientDataset};
use crate::error::{Error, Result};
use crate::losses::{compose_client_loss, ClientBatch, LossConfig, Method};
use crate::model::ModelParams;
use crate::numerics::{Matrix, Rng};

/// Server-side update rule applied to the averaged delta.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ServerOptimizer {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    /// `params ← params − lr · delta`; with `lr = 1` this is plain FedAvg.
    /// Used to compare against centralized descent.
    Averaging { lr: f64 },
}

impl Default for ServerOptimizer {
    fn default() -> Self {
        ServerOptimizer::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationConfig {
    pub rounds: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    pub server: ServerOptimizer,
    pub loss: LossConfig,
    pub augment: AugmentSpec,
    pub seed: u64,
    /// Evaluate every this many rounds (and always after the last round);
    /// `0` evaluates only after the last round.
    pub eval_every: usize,
    /// Worker threads for client updates within a round.
    pub threads: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            clients_per_round: 10,
            local_epochs: 1,
            batch_size: 128,
            local_lr: 0.1,
            server: ServerOptimizer::default(),
            loss: LossConfig::new(Method::FederatedSimclr),
            augment: AugmentSpec::default(),
            seed: 0,
            eval_every: 10,
            threads: 1,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.clients_per_round == 0 || self.clients_per_round > num_clients {
            return Err(Error::config(format!(
                "clients_per_round must be in 1..={num_clients}, got {}",
                self.clients_per_round
            )));
        }
        if self.batch_size == 0 || self.local_epochs == 0 {
            return Err(Error::config("batch_size and local_epochs must be positive"));
        }
        if !(self.local_lr >= 0.0) {
            return Err(Error::config("local_lr must be >= 0"));
        }
        let server_ok = match self.server {
            ServerOptimizer::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
            ServerOptimizer::Averaging { lr } => lr > 0.0,
        };
        if !server_ok {
            return Err(Error::config("invalid server optimizer settings"));
        }
        if self.threads == 0 {
            return Err(Error::config("threads must be >= 1"));
        }
        self.augment.validate()
    }
}

/// Per-stream generator for one client in one round.
pub fn client_rng(seed: u64, round: usize, client: usize) -> Rng {
    Rng::derive(seed, "client", ((round as u64) << 32) | client as u64)
}

#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ModelParams,
    pub steps: usize,
    pub mean_total: f64,
    pub mean_contrastive: f64,
    pub mean_uv: f64,
    pub mean_label: f64,
}

/// Local training on one client. Returns `None` when the client has no
/// usable samples (no samples at all, or no labelled samples under the
/// supervised method).
pub fn client_update(
    global: &ModelParams,
    client: &ClientDataset,
    cfg: &FederationConfig,
    rng: &mut Rng,
) -> Result<Option<ClientUpdate>> {
    let s = client.client_id;
    let supervised = cfg.loss.method == Method::Supervised;
    let usable: Vec<usize> = (0..client.len()).filter(|&i| !supervised || client.labelled[i]).collect();
    if usable.is_empty() {
        return Ok(None);
    }
    let mut params = global.clone();
    let mut steps = 0;
    let (mut total, mut contrastive, mut uv, mut label) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..cfg.local_epochs {
        let mut order = usable.clone();
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let x = client.x.select_rows(chunk);
            let (x1, x2) = make_views(&x, &cfg.augment, rng)?;
            let batch = ClientBatch {
                x1,
                x2,
                labels: chunk.iter().map(|&i| client.y[i]).collect(),
                labelled: chunk.iter().map(|&i| client.labelled[i]).collect(),
                client_id: s,
            };
            let loss = compose_client_loss(&params, &batch, &cfg.loss)?;
            params.axpy(-cfg.local_lr, &loss.grads);
            params.project_uv_row(s);
            steps += 1;
            total += loss.total;
            contrastive += loss.contrastive;
            uv += loss.uv;
            label += loss.label;
        }
    }
    let n = steps as f64;
    Ok(Some(ClientUpdate {
        client_id: s,
        params,
        steps,
        mean_total: total / n,
        mean_contrastive: contrastive / n,
        mean_uv: uv / n,
        mean_label: label / n,
    }))
}

/// `Σ_s (global − client_s) / |S|`, accumulated in ascending client order.
pub fn aggregate_deltas(global: &[f64], clients: &[(usize, Vec<f64>)]) -> Result<Vec<f64>> {
    if clients.is_empty() {
        return Err(Error::config("no participating clients to aggregate"));
    }
    let mut order: Vec<&(usize, Vec<f64>)> = clients.iter().collect();
    order.sort_by_key(|(id, _)| *id);
    let n = clients.len() as f64;
    let mut g = vec![0.0; global.len()];
    for (_, params) in order {
        if params.len() != global.len() {
            return Err(Error::dims("aggregate_deltas", "client parameter length differs"));
        }
        for ((gi, &w), &c) in g.iter_mut().zip(global).zip(params) {
            *gi += (w - c) / n;
        }
    }
    Ok(g)
}

/// Flat parameters plus optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step_count: u64,
}

impl ServerState {
    pub fn new(params: Vec<f64>) -> Self {
        let n = params.len();
        Self {
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step_count: 0,
        }
    }
}

/// One Adam step with bias correction, using `g` as the gradient.
pub fn server_adam_step(state: &ServerState, g: &[f64], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<ServerState> {
    if g.len() != state.params.len() {
        return Err(Error::dims("server_adam_step", "gradient length differs from params"));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("pseudo-gradient coordinate {i}")));
    }
    let t = state.step_count + 1;
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    let mut next = state.clone();
    next.step_count = t;
    for i in 0..g.len() {
        let m = beta1 * state.adam_m[i] + (1.0 - beta1) * g[i];
        let v = beta2 * state.adam_v[i] + (1.0 - beta2) * g[i] * g[i];
        next.adam_m[i] = m;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("adam second moment, coordinate {i}")));
        }
        next.adam_v[i] = v;
        next.params[i] -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
    }
    Ok(next)
}

/// Applies the configured server optimizer.
pub fn server_step(state: &ServerState, g: &[f64], opt: &ServerOptimizer) -> Result<ServerState> {
    match *opt {
        ServerOptimizer::Adam { lr, beta1, beta2, eps } => server_adam_step(state, g, lr, beta1, beta2, eps),
        ServerOptimizer::Averaging { lr } => {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("pseudo-gradient coordinate {i}")));
            }
            let mut next = state.clone();
            next.step_count += 1;
            for (p, gi) in next.params.iter_mut().zip(g) {
                *p -= lr * gi;
            }
            Ok(next)
        }
    }
}

/// Summary of one communication round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub method: Method,
    pub loss_total: f64,
    pub loss_contrastive: f64,
    pub loss_uv: f64,
    pub loss_label: f64,
    pub lp_train_acc: Option<f64>,
    pub lp_test_acc: Option<f64>,
    pub participating_clients: usize,
    pub params_l2: f64,
}

pub const METRICS_HEADER: &str = "round,method,loss_total,loss_contrastive,loss_uv,loss_label,lp_train_acc,lp_test_acc,participating_clients,params_l2";

impl RoundMetrics {
    /// One CSV line (no newline). Missing accuracies are empty fields.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.method,
            self.loss_total,
            self.loss_contrastive,
            self.loss_uv,
            self.loss_label,
            opt(self.lp_train_acc),
            opt(self.lp_test_acc),
            self.participating_clients,
            self.params_l2
        )
    }
}

pub fn metrics_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Callbacks invoked by [`run_federation`].
pub trait RoundHooks {
    /// Evaluation at the configured cadence; returns `(train_acc, test_acc)`.
    fn evaluate(&mut self, _round: usize, _params: &ModelParams) -> Result<Option<(f64, f64)>> {
        Ok(None)
    }

    fn on_client_update(&mut self, _round: usize, _update: &ClientUpdate) {}

    /// Sees the averaged delta before the server step. `participants` is
    /// sorted.
    fn on_aggregate(&mut self, _round: usize, _participants: &[usize], _pseudo_grad: &[f64]) {}

    fn on_skipped_client(&mut self, _round: usize, _client: usize) {}

    fn on_round_end(&mut self, _metrics: &RoundMetrics, _params: &ModelParams) -> Result<()> {
        Ok(())
    }
}

/// Hooks that do nothing.
pub struct NoHooks;

impl RoundHooks for NoHooks {}

#[derive(Clone, Debug)]
pub struct FederationRun {
    pub metrics: Vec<RoundMetrics>,
    pub params: ModelParams,
    pub server: ServerState,
}

fn run_clients(
    global: &ModelParams,
    clients: &[ClientDataset],
    participants: &[usize],
    cfg: &FederationConfig,
    round: usize,
) -> Result<Vec<(usize, Option<ClientUpdate>)>> {
    let work = |id: usize| -> Result<(usize, Option<ClientUpdate>)> {
        let mut rng = client_rng(cfg.seed, round, id);
        Ok((id, client_update(global, &clients[id], cfg, &mut rng)?))
    };
    if cfg.threads <= 1 || participants.len() <= 1 {
        return participants.iter().map(|&id| work(id)).collect();
    }
    let chunk = participants.len().div_ceil(cfg.threads);
    let mut results: Vec<Result<Vec<(usize, Option<ClientUpdate>)>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = participants
            .chunks(chunk)
            .map(|ids| scope.spawn(move || ids.iter().map(|&id| work(id)).collect::<Result<Vec<_>>>()))
            .collect();
        for h in handles {
            results.push(h.join().expect("client worker panicked"));
        }
    });
    let mut out = Vec::with_capacity(participants.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Runs `cfg.rounds` rounds starting from `init`. Client `i` of `clients`
/// must have `client_id == i`.
pub fn run_federation(
    cfg: &FederationConfig,
    init: ModelParams,
    clients: &[ClientDataset],
    hooks: &mut dyn RoundHooks,
) -> Result<FederationRun> {
    cfg.validate(clients.len())?;
    if init.num_clients() != clients.len() {
        return Err(Error::config(format!(
            "model has {} uv rows for {} clients",
            init.num_clients(),
            clients.len()
        )));
    }
    if let Some((i, c)) = clients.iter().enumerate().find(|(i, c)| c.client_id != *i) {
        return Err(Error::config(format!("client at position {i} has id {}", c.client_id)));
    }
    let mut global = init;
    let mut server = ServerState::new(global.flatten());
    let mut metrics = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        let mut participants = Rng::derive(cfg.seed, "sampling", round as u64)
            .sample_without_replacement(clients.len(), cfg.clients_per_round);
        participants.sort_unstable();

        let results = run_clients(&global, clients, &participants, cfg, round)?;
        let mut deltas = Vec::with_capacity(results.len());
        let mut active = Vec::with_capacity(results.len());
        let (mut lt, mut lc, mut lu, mut ll) = (0.0, 0.0, 0.0, 0.0);
        for (id, update) in results {
            match update {
                Some(u) => {
                    hooks.on_client_update(round, &u);
                    lt += u.mean_total;
                    lc += u.mean_contrastive;
                    lu += u.mean_uv;
                    ll += u.mean_label;
                    active.push(id);
                    deltas.push((id, u.params.flatten()));
                }
                None => hooks.on_skipped_client(round, id),
            }
        }

        if !deltas.is_empty() {
            let g = aggregate_deltas(&server.params, &deltas)?;
            hooks.on_aggregate(round, &active, &g);
            server = server_step(&server, &g, &cfg.server)?;
            global = global.unflatten(&server.params)?;
            // Adam mixes coordinates of a row, so the rows leave the sphere
            global.project_uv_rows();
            server.params = global.flatten();
        }

        let evaluate_now = round == cfg.rounds || (cfg.eval_every > 0 && round % cfg.eval_every == 0);
        let lp = if evaluate_now { hooks.evaluate(round, &global)? } else { None };
        let n = active.len().max(1) as f64;
        let row = RoundMetrics {
            round,
            method: cfg.loss.method,
            loss_total: lt / n,
            loss_contrastive: lc / n,
            loss_uv: lu / n,
            loss_label: ll / n,
            lp_train_acc: lp.map(|v| v.0),
            lp_test_acc: lp.map(|v| v.1),
            participating_clients: active.len(),
            params_l2: global.l2_norm(),
        };
        hooks.on_round_end(&row, &global)?;
        metrics.push(row);
    }
    Ok(FederationRun {
        metrics,
        params: global,
        server,
    })
}

/// Fraction of each client's local samples whose client-ID logits pick the
/// right client, pooled over clients.
pub fn uv_accuracy(params: &ModelParams, clients: &[ClientDataset]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for c in clients {
        if c.is_empty() {
            continue;
        }
        let h = params.forward_encoder(&c.x)?.projector.output;
        let logits: Matrix = params.uv_logits(&h)?;
        correct += (0..logits.rows()).filter(|&r| logits.row_argmax(r) == c.client_id).count();
        total += c.len();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}
