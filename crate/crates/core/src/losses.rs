//! Batch objectives with analytic gradients.
//!
//! Every loss takes the two views' embeddings (row `k` of `z1` and row `k` of
//! `z2` come from the same datapoint) and returns the scalar loss together
//! with its gradient with respect to each input. Log-sum-exp is always
//! evaluated with max subtraction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GradFlow, Layer, Mlp, ModelParams};
use crate::numerics::{dot, row_l2_normalize, row_l2_normalize_backward, Matrix, NORM_EPS};

/// Cosine similarity divided by a temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Critic {
    pub temperature: f64,
}

impl Default for Critic {
    fn default() -> Self {
        Self { temperature: 0.5 }
    }
}

impl Critic {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { temperature })
    }

    pub fn score(&self, a: &[f64], b: &[f64]) -> f64 {
        let na = dot(a, a).sqrt().max(NORM_EPS);
        let nb = dot(b, b).sqrt().max(NORM_EPS);
        dot(a, b) / (na * nb) / self.temperature
    }
}

/// A loss over paired views and its input gradients.
#[derive(Clone, Debug)]
pub struct PairLoss {
    pub loss: f64,
    pub d_z1: Matrix,
    pub d_z2: Matrix,
}

impl PairLoss {
    fn zero(z1: &Matrix, z2: &Matrix) -> Self {
        Self {
            loss: 0.0,
            d_z1: Matrix::zeros(z1.rows(), z1.cols()),
            d_z2: Matrix::zeros(z2.rows(), z2.cols()),
        }
    }
}

fn check_pair(op: &'static str, z1: &Matrix, z2: &Matrix) -> Result<()> {
    if z1.shape() != z2.shape() {
        return Err(Error::dims(op, format!("views {:?} vs {:?}", z1.shape(), z2.shape())));
    }
    if z1.rows() == 0 {
        return Err(Error::config(format!("{op}: empty batch")));
    }
    Ok(())
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of each row, computed with max subtraction.
fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..logits.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// InfoNCE loss, the negated K-sample bound
/// `(1/K) Σ_k log[exp f(z1_k, z2_k) / ((1/K) Σ_j exp f(z1_j, z2_k))]`.
///
/// The bound never exceeds `log K`; with `K = 1` it is exactly zero.
pub fn infonce(z1: &Matrix, z2: &Matrix, critic: &Critic) -> Result<PairLoss> {
    check_pair("infonce", z1, z2)?;
    let k = z1.rows();
    let kf = k as f64;
    let n1 = row_l2_normalize(z1, NORM_EPS);
    let n2 = row_l2_normalize(z2, NORM_EPS);
    // scores[j][k] = f(z1_j, z2_k)
    let scores = n1.matmul_t(&n2)?.scaled(1.0 / critic.temperature);

    let mut loss = 0.0;
    let mut d_scores = Matrix::zeros(k, k);
    for col in 0..k {
        let column = (0..k).map(|j| scores.get(j, col));
        let lse = log_sum_exp(column.clone());
        loss -= (scores.get(col, col) - lse + kf.ln()) / kf;
        for j in 0..k {
            let p = (scores.get(j, col) - lse).exp();
            let delta = if j == col { 1.0 } else { 0.0 };
            d_scores.set(j, col, (p - delta) / kf);
        }
    }
    let inv_t = 1.0 / critic.temperature;
    let d_n1 = d_scores.matmul(&n2)?.scaled(inv_t);
    let d_n2 = d_scores.t_matmul(&n1)?.scaled(inv_t);
    Ok(PairLoss {
        loss,
        d_z1: row_l2_normalize_backward(z1, &d_n1, NORM_EPS),
        d_z2: row_l2_normalize_backward(z2, &d_n2, NORM_EPS),
    })
}

/// Client-ID loss and gradients. `d_uv` is masked: only row `client` of the
/// weight gradient is populated, since each client trains only its own row.
#[derive(Clone, Debug)]
pub struct UvLoss {
    pub loss: f64,
    pub d_z1: Matrix,
    pub d_z2: Matrix,
    pub d_uv: Matrix,
}

/// Cross-entropy of predicting `client` from both views through the
/// bias-free cosine head: `−(1/K) Σ_k [log r(s|z1_k) + log r(s|z2_k)]`.
pub fn uv_loss(z1: &Matrix, z2: &Matrix, uv_weights: &Matrix, client: usize) -> Result<UvLoss> {
    check_pair("uv_loss", z1, z2)?;
    if client >= uv_weights.rows() {
        return Err(Error::config(format!(
            "client id {client} out of range for {} uv rows",
            uv_weights.rows()
        )));
    }
    if z1.cols() != uv_weights.cols() {
        return Err(Error::dims(
            "uv_loss",
            format!("embedding width {} vs uv width {}", z1.cols(), uv_weights.cols()),
        ));
    }
    let kf = z1.rows() as f64;
    let mut loss = 0.0;
    let mut d_uv = Matrix::zeros(uv_weights.rows(), uv_weights.cols());
    let mut grads = Vec::with_capacity(2);
    for z in [z1, z2] {
        let n = row_l2_normalize(z, NORM_EPS);
        let logits = n.matmul_t(uv_weights)?;
        let mut d_logits = softmax_rows(&logits);
        for r in 0..logits.rows() {
            let row = logits.row(r);
            loss -= (row[client] - log_sum_exp(row.iter().cloned())) / kf;
            d_logits.row_mut(r)[client] -= 1.0;
        }
        d_logits.scale(1.0 / kf);
        let d_n = d_logits.matmul(uv_weights)?;
        // row `client` of d_logitsᵀ · n
        let owned = d_uv.row_mut(client);
        for r in 0..n.rows() {
            let coef = d_logits.get(r, client);
            for (o, v) in owned.iter_mut().zip(n.row(r)) {
                *o += coef * v;
            }
        }
        grads.push(row_l2_normalize_backward(z, &d_n, NORM_EPS));
    }
    let d_z2 = grads.pop().expect("two views");
    let d_z1 = grads.pop().expect("two views");
    Ok(UvLoss {
        loss,
        d_z1,
        d_z2,
        d_uv,
    })
}

/// Row indices of each label group, ordered by label.
fn label_groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut sorted: Vec<(usize, usize)> = labels.iter().enumerate().map(|(i, &y)| (y, i)).collect();
    sorted.sort_unstable();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for (y, i) in sorted {
        if last != Some(y) {
            groups.push(Vec::new());
            last = Some(y);
        }
        groups.last_mut().expect("pushed").push(i);
    }
    groups
}

/// Applies a pair loss within each label group and returns the
/// sample-weighted mean over the whole batch. Singleton groups contribute
/// zero: contrasting a point only against itself carries no signal.
fn grouped<F>(z1: &Matrix, z2: &Matrix, labels: &[usize], mut per_group: F) -> Result<PairLoss>
where
    F: FnMut(&Matrix, &Matrix) -> Result<PairLoss>,
{
    if labels.len() != z1.rows() {
        return Err(Error::dims(
            "grouped loss",
            format!("{} labels for {} rows", labels.len(), z1.rows()),
        ));
    }
    let n = z1.rows() as f64;
    let mut out = PairLoss::zero(z1, z2);
    for idx in label_groups(labels) {
        if idx.len() < 2 {
            continue;
        }
        let weight = idx.len() as f64 / n;
        let g = per_group(&z1.select_rows(&idx), &z2.select_rows(&idx))?;
        out.loss += weight * g.loss;
        out.d_z1.scatter_add_rows(&idx, &g.d_z1.scaled(weight));
        out.d_z2.scatter_add_rows(&idx, &g.d_z2.scaled(weight));
    }
    Ok(out)
}

/// InfoNCE restricted to negatives of the same class.
pub fn supervised_contrastive_infonce(
    z1: &Matrix,
    z2: &Matrix,
    labels: &[usize],
    critic: &Critic,
) -> Result<PairLoss> {
    check_pair("supervised_contrastive_infonce", z1, z2)?;
    grouped(z1, z2, labels, |a, b| infonce(a, b, critic))
}

#[derive(Clone, Debug)]
pub struct LabelLoss {
    pub loss: f64,
    pub d_z1: Matrix,
    pub d_z2: Matrix,
    pub d_head: Layer,
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::dims("labels", format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::config(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Mean cross-entropy of the label head, summed over both views.
pub fn label_ce_loss(z1: &Matrix, z2: &Matrix, labels: &[usize], head: &Layer) -> Result<LabelLoss> {
    check_pair("label_ce_loss", z1, z2)?;
    check_labels(labels, z1.rows(), head.output_dim())?;
    let kf = z1.rows() as f64;
    let mut d_head = Layer::zeros(head.input_dim(), head.output_dim());
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(2);
    for z in [z1, z2] {
        let logits = head.apply(z)?;
        let mut d_logits = softmax_rows(&logits);
        for (r, &y) in labels.iter().enumerate() {
            let row = logits.row(r);
            loss -= (row[y] - log_sum_exp(row.iter().cloned())) / kf;
            d_logits.row_mut(r)[y] -= 1.0;
        }
        d_logits.scale(1.0 / kf);
        d_head.weight.axpy(1.0, &z.t_matmul(&d_logits)?);
        d_head.bias.axpy(1.0, &d_logits.column_sums());
        grads.push(d_logits.matmul_t(&head.weight)?);
    }
    let d_z2 = grads.pop().expect("two views");
    let d_z1 = grads.pop().expect("two views");
    Ok(LabelLoss {
        loss,
        d_z1,
        d_z2,
        d_head,
    })
}

/// Spectral contrastive loss
/// `−2·mean_k ⟨z1_k, z2_k⟩ + mean_{k≠j} ⟨z1_k, z2_j⟩²` on raw embeddings.
pub fn spectral_loss(z1: &Matrix, z2: &Matrix) -> Result<PairLoss> {
    check_pair("spectral_loss", z1, z2)?;
    let k = z1.rows();
    let kf = k as f64;
    let gram = z1.matmul_t(z2)?;
    let pairs = if k > 1 { kf * (kf - 1.0) } else { 1.0 };
    let mut loss = 0.0;
    let mut d_gram = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let g = gram.get(i, j);
            if i == j {
                loss -= 2.0 * g / kf;
                d_gram.set(i, j, -2.0 / kf);
            } else {
                loss += g * g / pairs;
                d_gram.set(i, j, 2.0 * g / pairs);
            }
        }
    }
    Ok(PairLoss {
        loss,
        d_z1: d_gram.matmul(z2)?,
        d_z2: d_gram.t_matmul(z1)?,
    })
}

#[derive(Clone, Debug)]
pub struct SimSiamLoss {
    pub loss: f64,
    pub d_z1: Matrix,
    pub d_z2: Matrix,
    pub d_predictor: Mlp,
}

/// `½ mean_k [−cos(p1_k, t2_k)] + ½ mean_k [−cos(p2_k, t1_k)]` and its
/// gradients, where `t_k` and `p_k` are the per-row cosine normalizations.
fn neg_cosine(p: &Matrix, target: &Matrix, weight: f64) -> (f64, Matrix, Matrix) {
    let np = row_l2_normalize(p, NORM_EPS);
    let nt = row_l2_normalize(target, NORM_EPS);
    let mut loss = 0.0;
    for r in 0..p.rows() {
        loss -= weight * dot(np.row(r), nt.row(r));
    }
    let d_p = row_l2_normalize_backward(p, &nt.scaled(-weight), NORM_EPS);
    let d_t = row_l2_normalize_backward(target, &np.scaled(-weight), NORM_EPS);
    (loss, d_p, d_t)
}

/// Symmetric SimSiam loss `−½[cos(p1, sg(z2)) + cos(p2, sg(z1))]` with
/// `p = predictor(z)`. `targets` selects whether the targets are a
/// stop-gradient region.
pub fn simsiam_loss(z1: &Matrix, z2: &Matrix, predictor: &Mlp, targets: GradFlow) -> Result<SimSiamLoss> {
    check_pair("simsiam_loss", z1, z2)?;
    if predictor.is_empty() {
        return Err(Error::config("simsiam loss needs a predictor"));
    }
    let weight = 0.5 / z1.rows() as f64;
    let t1 = predictor.forward(z1)?;
    let t2 = predictor.forward(z2)?;
    let (l1, d_p1, d_target2) = neg_cosine(&t1.output, z2, weight);
    let (l2, d_p2, d_target1) = neg_cosine(&t2.output, z1, weight);
    let mut d_predictor = predictor.zeros_like();
    let mut d_z1 = predictor.backward(&t1, &d_p1, &mut d_predictor);
    let mut d_z2 = predictor.backward(&t2, &d_p2, &mut d_predictor);
    if targets == GradFlow::Tracked {
        d_z1.axpy(1.0, &d_target1);
        d_z2.axpy(1.0, &d_target2);
    }
    Ok(SimSiamLoss {
        loss: l1 + l2,
        d_z1,
        d_z2,
        d_predictor,
    })
}

/// Training objective run on each client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LocalSimclr,
    FederatedSimclr,
    Spectral,
    SpectralUv,
    Simsiam,
    SimsiamUv,
    Supervised,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::LocalSimclr,
        Method::FederatedSimclr,
        Method::Spectral,
        Method::SpectralUv,
        Method::Simsiam,
        Method::SimsiamUv,
        Method::Supervised,
    ];

    pub fn has_uv(self) -> bool {
        matches!(self, Method::FederatedSimclr | Method::SpectralUv | Method::SimsiamUv)
    }

    pub fn needs_predictor(self) -> bool {
        matches!(self, Method::Simsiam | Method::SimsiamUv)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LocalSimclr => "local_simclr",
            Method::FederatedSimclr => "federated_simclr",
            Method::Spectral => "spectral",
            Method::SpectralUv => "spectral_uv",
            Method::Simsiam => "simsiam",
            Method::SimsiamUv => "simsiam_uv",
            Method::Supervised => "supervised",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown method `{s}`")))
    }
}

/// Loss hyperparameters shared by all clients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub method: Method,
    /// Weight of the client-ID term; ignored by methods without it.
    pub uv_weight: f64,
    pub critic: Critic,
}

impl LossConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            uv_weight: 1.0,
            critic: Critic::default(),
        }
    }
}

/// Augmented views of one client minibatch. `labels` covers every row but is
/// only read where `labelled` is set.
#[derive(Clone, Debug)]
pub struct ClientBatch {
    pub x1: Matrix,
    pub x2: Matrix,
    pub labels: Vec<usize>,
    pub labelled: Vec<bool>,
    pub client_id: usize,
}

/// Value and gradient of a client objective, broken into its parts.
#[derive(Clone, Debug)]
pub struct ClientLoss {
    /// `contrastive + uv_weight · uv + label`.
    pub total: f64,
    /// Unlabelled term plus the per-class term on labelled rows.
    pub contrastive: f64,
    /// Unweighted client-ID term (zero for methods without it).
    pub uv: f64,
    pub label: f64,
    pub grads: ModelParams,
}

struct Term {
    loss: f64,
    d_z1: Matrix,
    d_z2: Matrix,
    d_predictor: Option<Mlp>,
}

fn unsupervised_term(method: Method, params: &ModelParams, h1: &Matrix, h2: &Matrix, critic: &Critic) -> Result<Term> {
    match method {
        Method::LocalSimclr | Method::FederatedSimclr => {
            let l = infonce(h1, h2, critic)?;
            Ok(Term { loss: l.loss, d_z1: l.d_z1, d_z2: l.d_z2, d_predictor: None })
        }
        Method::Spectral | Method::SpectralUv => {
            let l = spectral_loss(h1, h2)?;
            Ok(Term { loss: l.loss, d_z1: l.d_z1, d_z2: l.d_z2, d_predictor: None })
        }
        Method::Simsiam | Method::SimsiamUv => {
            let l = simsiam_loss(h1, h2, &params.predictor, GradFlow::Stopped)?;
            Ok(Term {
                loss: l.loss,
                d_z1: l.d_z1,
                d_z2: l.d_z2,
                d_predictor: Some(l.d_predictor),
            })
        }
        Method::Supervised => unreachable!("supervised has no unsupervised term"),
    }
}

/// Unsupervised term per label group, sample-weighted like [`grouped`].
fn grouped_term(
    method: Method,
    params: &ModelParams,
    h1: &Matrix,
    h2: &Matrix,
    labels: &[usize],
    critic: &Critic,
    grads: &mut ModelParams,
) -> Result<PairLoss> {
    let mut predictor_grads: Option<Mlp> = None;
    let out = grouped(h1, h2, labels, |a, b| {
        let t = unsupervised_term(method, params, a, b, critic)?;
        if let Some(dp) = t.d_predictor {
            // `grouped` scales the input gradients by the group weight, so the
            // predictor gradient gets the same factor here.
            let w = a.rows() as f64 / h1.rows() as f64;
            let acc = predictor_grads.get_or_insert_with(|| params.predictor.zeros_like());
            for (g, d) in acc.layers.iter_mut().zip(&dp.layers) {
                g.weight.axpy(w, &d.weight);
                g.bias.axpy(w, &d.bias);
            }
        }
        Ok(PairLoss { loss: t.loss, d_z1: t.d_z1, d_z2: t.d_z2 })
    })?;
    if let Some(pg) = predictor_grads {
        add_mlp(&mut grads.predictor, &pg, 1.0);
    }
    Ok(out)
}

fn add_mlp(acc: &mut Mlp, other: &Mlp, alpha: f64) {
    for (g, d) in acc.layers.iter_mut().zip(&other.layers) {
        g.weight.axpy(alpha, &d.weight);
        g.bias.axpy(alpha, &d.bias);
    }
}

/// Full client objective for one minibatch:
///
/// * unsupervised loss on the unlabelled rows,
/// * `uv_weight ·` client-ID loss on all rows, for methods with a UV head,
/// * unsupervised loss within each class on the labelled rows,
/// * label cross-entropy on the labelled rows (both views).
///
/// `Method::Supervised` keeps only the last term.
pub fn compose_client_loss(params: &ModelParams, batch: &ClientBatch, cfg: &LossConfig) -> Result<ClientLoss> {
    let method = cfg.method;
    if !(cfg.uv_weight >= 0.0) || !cfg.uv_weight.is_finite() {
        return Err(Error::config(format!("uv weight must be >= 0, got {}", cfg.uv_weight)));
    }
    let rows = batch.x1.rows();
    if batch.x2.shape() != batch.x1.shape() || batch.labelled.len() != rows {
        return Err(Error::dims(
            "compose_client_loss",
            format!(
                "x1 {:?}, x2 {:?}, {} mask entries",
                batch.x1.shape(),
                batch.x2.shape(),
                batch.labelled.len()
            ),
        ));
    }
    let labelled: Vec<usize> = (0..rows).filter(|&i| batch.labelled[i]).collect();
    let unlabelled: Vec<usize> = (0..rows).filter(|&i| !batch.labelled[i]).collect();
    if !labelled.is_empty() && batch.labels.len() != rows {
        return Err(Error::config("labelled rows present but labels missing"));
    }
    if method == Method::Supervised && labelled.is_empty() {
        return Err(Error::config("supervised method needs at least one labelled row"));
    }
    if method.needs_predictor() && params.predictor.is_empty() {
        return Err(Error::config(format!("{method} needs a predictor network")));
    }
    if batch.client_id >= params.num_clients() {
        return Err(Error::config(format!("client id {} out of range", batch.client_id)));
    }

    let t1 = params.forward_encoder(&batch.x1)?;
    let t2 = params.forward_encoder(&batch.x2)?;
    let (h1, h2) = (t1.projection(), t2.projection());
    let mut d_h1 = Matrix::zeros(h1.rows(), h1.cols());
    let mut d_h2 = Matrix::zeros(h2.rows(), h2.cols());
    let mut d_z1 = Matrix::zeros(t1.z().rows(), t1.z().cols());
    let mut d_z2 = Matrix::zeros(t2.z().rows(), t2.z().cols());
    let mut grads = params.zeros_like();
    let (mut contrastive, mut uv, mut label) = (0.0, 0.0, 0.0);

    if method != Method::Supervised {
        if !unlabelled.is_empty() {
            let t = unsupervised_term(
                method,
                params,
                &h1.select_rows(&unlabelled),
                &h2.select_rows(&unlabelled),
                &cfg.critic,
            )?;
            contrastive += t.loss;
            d_h1.scatter_add_rows(&unlabelled, &t.d_z1);
            d_h2.scatter_add_rows(&unlabelled, &t.d_z2);
            if let Some(dp) = t.d_predictor {
                add_mlp(&mut grads.predictor, &dp, 1.0);
            }
        }
        if !labelled.is_empty() {
            let ys: Vec<usize> = labelled.iter().map(|&i| batch.labels[i]).collect();
            let g = grouped_term(
                method,
                params,
                &h1.select_rows(&labelled),
                &h2.select_rows(&labelled),
                &ys,
                &cfg.critic,
                &mut grads,
            )?;
            contrastive += g.loss;
            d_h1.scatter_add_rows(&labelled, &g.d_z1);
            d_h2.scatter_add_rows(&labelled, &g.d_z2);
        }
        if method.has_uv() {
            let u = uv_loss(h1, h2, &params.uv_weights, batch.client_id)?;
            uv = u.loss;
            d_h1.axpy(cfg.uv_weight, &u.d_z1);
            d_h2.axpy(cfg.uv_weight, &u.d_z2);
            grads.uv_weights.axpy(cfg.uv_weight, &u.d_uv);
        }
    }

    if !labelled.is_empty() {
        let ys: Vec<usize> = labelled.iter().map(|&i| batch.labels[i]).collect();
        let l = label_ce_loss(
            &t1.z().select_rows(&labelled),
            &t2.z().select_rows(&labelled),
            &ys,
            &params.label_head,
        )?;
        label = l.loss;
        d_z1.scatter_add_rows(&labelled, &l.d_z1);
        d_z2.scatter_add_rows(&labelled, &l.d_z2);
        grads.label_head.weight.axpy(1.0, &l.d_head.weight);
        grads.label_head.bias.axpy(1.0, &l.d_head.bias);
    }

    params.backward(&t1, Some(&d_h1), Some(&d_z1), &mut grads);
    params.backward(&t2, Some(&d_h2), Some(&d_z2), &mut grads);

    let uv_term = if method.has_uv() { cfg.uv_weight * uv } else { 0.0 };
    let total = contrastive + uv_term + label;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("client {} loss", batch.client_id)));
    }
    Ok(ClientLoss {
        total,
        contrastive,
        uv,
        label,
        grads,
    })
}
