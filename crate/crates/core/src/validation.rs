//! Numerical validation suite: finite-difference gradient checks for every
//! loss, and exact-MI checks of the chain-rule identities and variational
//! bounds on random discrete joints.

use crate::error::{Error, Result};
use crate::losses::{
    compose_client_loss, infonce, label_ce_loss, simsiam_loss, spectral_loss, supervised_contrastive_infonce, uv_loss,
    ClientBatch, Critic, LossConfig, Method,
};
use crate::mi_oracle::{
    format_report, random_stochastic, validate_infonce_bound, validate_label_skew_bounds, validate_uv_bounds, BoundCheck, CriticTable,
    DiscreteJoint,
};
use crate::model::{GradFlow, Layer, Mlp, ModelDims, ModelParams};
use crate::numerics::{dot, finite_diff_grad, relative_error, row_l2_normalize, Matrix, Rng, NORM_EPS};

/// Largest accepted norm-wise relative error between analytic and
/// finite-difference gradients.
pub const GRAD_TOL: f64 = 1e-4;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Configurations with a ReLU pre-activation closer to zero than this are
/// redrawn, so the finite difference never straddles a kink.
pub const KINK_MARGIN: f64 = 1e-4;
pub const CHAIN_RULE_TOL: f64 = 1e-10;

const REL_FLOOR: f64 = 1e-8;
const MAX_BATCH: usize = 8;
const MAX_DIM: usize = 16;

/// A named gradient check. `run` draws one random configuration and returns
/// the relative error between analytic and numeric gradients.
#[derive(Clone, Copy)]
pub struct GradCheck {
    pub name: &'static str,
    pub run: fn(&mut Rng) -> Result<f64>,
}

impl std::fmt::Debug for GradCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GradCheck").field("name", &self.name).finish()
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).expect("sized")
}

fn batch_and_dim(rng: &mut Rng) -> (usize, usize) {
    (2 + rng.below(MAX_BATCH - 1), 2 + rng.below(MAX_DIM - 1))
}

fn critic(rng: &mut Rng) -> Critic {
    Critic::new(rng.uniform_range(0.2, 1.0)).expect("positive temperature")
}

/// Max relative error over several (analytic, numeric) pairs.
fn worst(pairs: &[(&Matrix, &Matrix)]) -> f64 {
    pairs
        .iter()
        .map(|(a, n)| relative_error(a.as_slice(), n.as_slice(), REL_FLOOR))
        .fold(0.0, f64::max)
}

fn fd<F: FnMut(&Matrix) -> f64>(f: F, x: &Matrix) -> Result<Matrix> {
    finite_diff_grad(f, x, FD_STEP)
}

fn check_infonce(rng: &mut Rng) -> Result<f64> {
    let (n, d) = batch_and_dim(rng);
    let (z1, z2, c) = (gaussian(n, d, rng), gaussian(n, d, rng), critic(rng));
    let l = infonce(&z1, &z2, &c)?;
    let n1 = fd(|m| infonce(m, &z2, &c).map_or(f64::NAN, |l| l.loss), &z1)?;
    let n2 = fd(|m| infonce(&z1, m, &c).map_or(f64::NAN, |l| l.loss), &z2)?;
    Ok(worst(&[(&l.d_z1, &n1), (&l.d_z2, &n2)]))
}

fn check_uv(rng: &mut Rng) -> Result<f64> {
    let (n, d) = batch_and_dim(rng);
    let clients = 2 + rng.below(4);
    let client = rng.below(clients);
    let (z1, z2) = (gaussian(n, d, rng), gaussian(n, d, rng));
    let w = row_l2_normalize(&gaussian(clients, d, rng), NORM_EPS);
    let l = uv_loss(&z1, &z2, &w, client)?;
    let n1 = fd(|m| uv_loss(m, &z2, &w, client).map_or(f64::NAN, |l| l.loss), &z1)?;
    let n2 = fd(|m| uv_loss(&z1, m, &w, client).map_or(f64::NAN, |l| l.loss), &z2)?;
    // Only the owning row is trained, so only its gradient is compared.
    let own = Matrix::from_vec(1, d, w.row(client).to_vec())?;
    let nw = fd(
        |row| {
            let mut w2 = w.clone();
            w2.row_mut(client).copy_from_slice(row.as_slice());
            uv_loss(&z1, &z2, &w2, client).map_or(f64::NAN, |l| l.loss)
        },
        &own,
    )?;
    let aw = Matrix::from_vec(1, d, l.d_uv.row(client).to_vec())?;
    Ok(worst(&[(&l.d_z1, &n1), (&l.d_z2, &n2), (&aw, &nw)]))
}

fn check_supervised_contrastive(rng: &mut Rng) -> Result<f64> {
    let (n, d) = batch_and_dim(rng);
    let (z1, z2, c) = (gaussian(n, d, rng), gaussian(n, d, rng), critic(rng));
    let labels: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
    let l = supervised_contrastive_infonce(&z1, &z2, &labels, &c)?;
    let n1 = fd(|m| supervised_contrastive_infonce(m, &z2, &labels, &c).map_or(f64::NAN, |l| l.loss), &z1)?;
    let n2 = fd(|m| supervised_contrastive_infonce(&z1, m, &labels, &c).map_or(f64::NAN, |l| l.loss), &z2)?;
    Ok(worst(&[(&l.d_z1, &n1), (&l.d_z2, &n2)]))
}

fn check_label_ce(rng: &mut Rng) -> Result<f64> {
    let (n, d) = batch_and_dim(rng);
    let classes = 2 + rng.below(5);
    let (z1, z2) = (gaussian(n, d, rng), gaussian(n, d, rng));
    let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
    let head = Layer {
        weight: gaussian(d, classes, rng),
        bias: gaussian(1, classes, rng),
    };
    let l = label_ce_loss(&z1, &z2, &labels, &head)?;
    let loss = |a: &Matrix, b: &Matrix, h: &Layer| label_ce_loss(a, b, &labels, h).map_or(f64::NAN, |l| l.loss);
    let n1 = fd(|m| loss(m, &z2, &head), &z1)?;
    let n2 = fd(|m| loss(&z1, m, &head), &z2)?;
    let nw = fd(|m| loss(&z1, &z2, &Layer { weight: m.clone(), bias: head.bias.clone() }), &head.weight)?;
    let nb = fd(|m| loss(&z1, &z2, &Layer { weight: head.weight.clone(), bias: m.clone() }), &head.bias)?;
    Ok(worst(&[(&l.d_z1, &n1), (&l.d_z2, &n2), (&l.d_head.weight, &nw), (&l.d_head.bias, &nb)]))
}

fn check_spectral(rng: &mut Rng) -> Result<f64> {
    let (n, d) = batch_and_dim(rng);
    let (z1, z2) = (gaussian(n, d, rng), gaussian(n, d, rng));
    let l = spectral_loss(&z1, &z2)?;
    let n1 = fd(|m| spectral_loss(m, &z2).map_or(f64::NAN, |l| l.loss), &z1)?;
    let n2 = fd(|m| spectral_loss(&z1, m).map_or(f64::NAN, |l| l.loss), &z2)?;
    Ok(worst(&[(&l.d_z1, &n1), (&l.d_z2, &n2)]))
}

fn min_row_norm(m: &Matrix) -> f64 {
    (0..m.rows()).map(|r| dot(m.row(r), m.row(r)).sqrt()).fold(f64::INFINITY, f64::min)
}

/// Predictor with every hidden pre-activation away from the ReLU kink.
fn smooth_predictor(d: usize, z1: &Matrix, z2: &Matrix, rng: &mut Rng) -> Result<Option<Mlp>> {
    let p = Mlp::glorot(&[d, 2 + rng.below(MAX_DIM - 1), d], rng);
    let (t1, t2) = (p.forward(z1)?, p.forward(z2)?);
    let margin = t1
        .min_abs_hidden_preactivation()
        .min(t2.min_abs_hidden_preactivation())
        .min(min_row_norm(&t1.output))
        .min(min_row_norm(&t2.output));
    Ok((margin >= KINK_MARGIN).then_some(p))
}

fn check_simsiam_tracked(rng: &mut Rng) -> Result<f64> {
    loop {
        let (n, d) = batch_and_dim(rng);
        let (z1, z2) = (gaussian(n, d, rng), gaussian(n, d, rng));
        let Some(p) = smooth_predictor(d, &z1, &z2, rng)? else { continue };
        let l = simsiam_loss(&z1, &z2, &p, GradFlow::Tracked)?;
        let n1 = fd(|m| simsiam_loss(m, &z2, &p, GradFlow::Tracked).map_or(f64::NAN, |l| l.loss), &z1)?;
        let n2 = fd(|m| simsiam_loss(&z1, m, &p, GradFlow::Tracked).map_or(f64::NAN, |l| l.loss), &z2)?;
        let nw = fd(
            |m| {
                let mut q = p.clone();
                q.layers[0].weight = m.clone();
                simsiam_loss(&z1, &z2, &q, GradFlow::Tracked).map_or(f64::NAN, |l| l.loss)
            },
            &p.layers[0].weight,
        )?;
        return Ok(worst(&[(&l.d_z1, &n1), (&l.d_z2, &n2), (&l.d_predictor.layers[0].weight, &nw)]));
    }
}

/// `−w Σ_k cos(predictor(z)_k, target_k)` with the target held fixed.
fn frozen_target_loss(z: &Matrix, target: &Matrix, p: &Mlp, w: f64) -> f64 {
    let Ok(out) = p.forward(z) else { return f64::NAN };
    let a = row_l2_normalize(&out.output, NORM_EPS);
    let b = row_l2_normalize(target, NORM_EPS);
    -(0..a.rows()).map(|r| w * dot(a.row(r), b.row(r))).sum::<f64>()
}

fn check_simsiam_stopped(rng: &mut Rng) -> Result<f64> {
    loop {
        let (n, d) = batch_and_dim(rng);
        let (z1, z2) = (gaussian(n, d, rng), gaussian(n, d, rng));
        let Some(p) = smooth_predictor(d, &z1, &z2, rng)? else { continue };
        let l = simsiam_loss(&z1, &z2, &p, GradFlow::Stopped)?;
        let w = 0.5 / n as f64;
        let n1 = fd(|m| frozen_target_loss(m, &z2, &p, w), &z1)?;
        let n2 = fd(|m| frozen_target_loss(m, &z1, &p, w), &z2)?;
        return Ok(worst(&[(&l.d_z1, &n1), (&l.d_z2, &n2)]));
    }
}

/// Whole client objective through the network, compared over all
/// parameters the analytic gradient claims to cover: other clients' UV rows
/// are excluded (masked by design), and for SimSiam only the predictor is
/// compared since the encoder sits behind the stop-gradient.
fn check_client_objective(method: Method, rng: &mut Rng) -> Result<f64> {
    loop {
        let n = 2 + rng.below(MAX_BATCH - 1);
        let dims = ModelDims {
            input_dim: 2 + rng.below(7),
            encoder_hidden: vec![2 + rng.below(7)],
            z_dim: 2 + rng.below(7),
            projector_hidden: 2 + rng.below(7),
            proj_dim: 2 + rng.below(5),
            predictor_hidden: if method.needs_predictor() { 2 + rng.below(7) } else { 0 },
            num_clients: 2 + rng.below(3),
            num_classes: 2 + rng.below(3),
        };
        let params = ModelParams::init(&dims, rng)?;
        let client = rng.below(dims.num_clients);
        let mut labelled: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        if method == Method::Supervised {
            labelled[0] = true;
        }
        let batch = ClientBatch {
            x1: gaussian(n, dims.input_dim, rng),
            x2: gaussian(n, dims.input_dim, rng),
            labels: (0..n).map(|_| rng.below(dims.num_classes)).collect(),
            labelled,
            client_id: client,
        };
        let t1 = params.forward_encoder(&batch.x1)?;
        let t2 = params.forward_encoder(&batch.x2)?;
        // cosine terms are not differentiable at a zero projection
        let mut margin = t1.min_abs_hidden_preactivation().min(t2.min_abs_hidden_preactivation());
        for t in [&t1, &t2] {
            margin = margin.min(min_row_norm(t.projection()));
            if method.needs_predictor() {
                let p = params.predictor.forward(t.projection())?;
                margin = margin.min(p.min_abs_hidden_preactivation()).min(min_row_norm(&p.output));
            }
        }
        if margin < KINK_MARGIN {
            continue;
        }

        let cfg = LossConfig {
            method,
            uv_weight: rng.uniform_range(0.5, 2.0),
            critic: critic(rng),
        };
        let analytic = compose_client_loss(&params, &batch, &cfg)?.grads.flatten();
        let theta = Matrix::from_vec(1, params.num_params(), params.flatten())?;
        let numeric = fd(
            |m| {
                params
                    .unflatten(m.as_slice())
                    .and_then(|p| compose_client_loss(&p, &batch, &cfg))
                    .map_or(f64::NAN, |l| l.total)
            },
            &theta,
        )?;

        let mut mask = params.zeros_like();
        if method.needs_predictor() {
            for layer in &mut mask.predictor.layers {
                layer.weight = Matrix::filled(layer.weight.rows(), layer.weight.cols(), 1.0);
                layer.bias = Matrix::filled(1, layer.bias.cols(), 1.0);
            }
        } else {
            for t in mask.tensors_mut() {
                *t = Matrix::filled(t.rows(), t.cols(), 1.0);
            }
            let uv = &mut mask.uv_weights;
            for r in (0..uv.rows()).filter(|&r| r != client) {
                uv.row_mut(r).fill(0.0);
            }
        }
        let keep = mask.flatten();
        let pick = |v: &[f64]| -> Vec<f64> { v.iter().zip(&keep).map(|(x, &k)| x * k).collect() };
        return Ok(relative_error(&pick(&analytic), &pick(numeric.as_slice()), REL_FLOOR));
    }
}

macro_rules! objective_check {
    ($fn_name:ident, $method:expr) => {
        fn $fn_name(rng: &mut Rng) -> Result<f64> {
            check_client_objective($method, rng)
        }
    };
}

objective_check!(obj_local_simclr, Method::LocalSimclr);
objective_check!(obj_federated_simclr, Method::FederatedSimclr);
objective_check!(obj_spectral, Method::Spectral);
objective_check!(obj_spectral_uv, Method::SpectralUv);
objective_check!(obj_simsiam, Method::Simsiam);
objective_check!(obj_simsiam_uv, Method::SimsiamUv);
objective_check!(obj_supervised, Method::Supervised);

/// Every loss and every client objective.
pub fn default_grad_checks() -> Vec<GradCheck> {
    vec![
        GradCheck { name: "infonce", run: check_infonce },
        GradCheck { name: "uv_loss", run: check_uv },
        GradCheck { name: "supervised_contrastive_infonce", run: check_supervised_contrastive },
        GradCheck { name: "label_ce", run: check_label_ce },
        GradCheck { name: "spectral", run: check_spectral },
        GradCheck { name: "simsiam_tracked", run: check_simsiam_tracked },
        GradCheck { name: "simsiam_stop_gradient", run: check_simsiam_stopped },
        GradCheck { name: "client_objective/local_simclr", run: obj_local_simclr },
        GradCheck { name: "client_objective/federated_simclr", run: obj_federated_simclr },
        GradCheck { name: "client_objective/spectral", run: obj_spectral },
        GradCheck { name: "client_objective/spectral_uv", run: obj_spectral_uv },
        GradCheck { name: "client_objective/simsiam", run: obj_simsiam },
        GradCheck { name: "client_objective/simsiam_uv", run: obj_simsiam_uv },
        GradCheck { name: "client_objective/supervised", run: obj_supervised },
    ]
}

/// Runs each check on `configs` random configurations and reports the worst
/// relative error per check.
pub fn run_grad_checks(checks: &[GradCheck], configs: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    let mut out = Vec::with_capacity(checks.len());
    for (i, check) in checks.iter().enumerate() {
        let mut rng = Rng::derive(seed, "gradcheck", i as u64);
        let mut max_err: f64 = 0.0;
        for _ in 0..configs {
            let err = (check.run)(&mut rng)?;
            max_err = if err.is_nan() { f64::INFINITY } else { max_err.max(err) };
        }
        out.push(BoundCheck {
            name: format!("grad/{} ({configs} configs)", check.name),
            true_value: max_err,
            bound_value: GRAD_TOL,
            slack: GRAD_TOL - max_err,
            pass: max_err < GRAD_TOL,
        });
    }
    Ok(out)
}

fn alphabet(rng: &mut Rng) -> usize {
    2 + rng.below(3)
}

fn summarize(name: String, cases: &[(f64, f64, bool)], slack_of: impl Fn(f64, f64) -> f64) -> BoundCheck {
    // report the tightest case
    let (t, b, _) = cases
        .iter()
        .copied()
        .min_by(|x, y| slack_of(x.0, x.1).total_cmp(&slack_of(y.0, y.1)))
        .unwrap_or((f64::NAN, f64::NAN, false));
    BoundCheck {
        name,
        true_value: t,
        bound_value: b,
        slack: slack_of(t, b),
        pass: !cases.is_empty() && cases.iter().all(|c| c.2),
    }
}

/// Chain-rule identities on `joints` random joints.
pub fn chain_rule_checks(joints: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    let mut rng = Rng::derive(seed, "chain_rule", 0);
    let mut global = Vec::with_capacity(joints);
    let mut label = Vec::with_capacity(joints);
    for _ in 0..joints {
        let j = DiscreteJoint::random_views(alphabet(&mut rng), alphabet(&mut rng), alphabet(&mut rng), &mut rng)?;
        let r = j.global_mi_chain_rule_residual()?.abs();
        global.push((r, CHAIN_RULE_TOL, r <= CHAIN_RULE_TOL));
        let conc = rng.uniform_range(0.3, 2.0);
        let j = DiscreteJoint::random_label_skew(alphabet(&mut rng), alphabet(&mut rng), alphabet(&mut rng), conc, &mut rng)?;
        let r = j.label_chain_rule_residual()?.abs();
        label.push((r, CHAIN_RULE_TOL, r <= CHAIN_RULE_TOL));
    }
    let slack = |t: f64, b: f64| b - t;
    Ok(vec![
        summarize(format!("chain_rule/global_mi residual ({joints} joints)"), &global, slack),
        summarize(format!("chain_rule/label_split residual ({joints} joints)"), &label, slack),
    ])
}

/// InfoNCE lower bound with random critics over `cases` joints, and with
/// the optimal critic at growing `K` on a fifth as many joints.
pub fn infonce_checks(cases: usize, num_samples: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    use crate::mi_oracle::Var;
    const KS: [usize; 5] = [1, 2, 4, 8, 16];
    const OPTIMAL_KS: [usize; 3] = [2, 8, 32];
    let mut rng = Rng::derive(seed, "infonce", 0);
    let mut random = Vec::with_capacity(cases);
    let mut log_k = Vec::with_capacity(cases);
    for i in 0..cases {
        let j = DiscreteJoint::random_views(alphabet(&mut rng), alphabet(&mut rng), alphabet(&mut rng), &mut rng)?;
        let k = KS[i % KS.len()];
        let critic = CriticTable::random(j.size(Var::View1)?, j.size(Var::View2)?, rng.uniform_range(0.5, 3.0), &mut rng);
        let c = validate_infonce_bound(&j, &critic, k, num_samples, &mut rng)?;
        random.push((c.true_mi, c.bound_estimate, c.holds));
        log_k.push(((k as f64).ln(), c.max_draw, c.within_log_k));
    }

    let mut optimal = Vec::new();
    let mut shrink = Vec::new();
    for _ in 0..(cases / 5).max(1) {
        let j = DiscreteJoint::random_views(alphabet(&mut rng), alphabet(&mut rng), alphabet(&mut rng), &mut rng)?;
        let critic = CriticTable::optimal(&j)?;
        let mut prev: Option<(f64, f64)> = None;
        for k in OPTIMAL_KS {
            let c = validate_infonce_bound(&j, &critic, k, num_samples, &mut rng)?;
            optimal.push((c.true_mi, c.bound_estimate, c.holds));
            log_k.push(((k as f64).ln(), c.max_draw, c.within_log_k));
            let gap = c.true_mi - c.bound_estimate;
            if let Some((prev_gap, prev_se)) = prev {
                let tol = 3.0 * (prev_se + c.std_error);
                shrink.push((prev_gap, gap, gap <= prev_gap + tol));
            }
            prev = Some((gap, c.std_error));
        }
    }
    // slack for a lower bound: how far it sits below the true value
    let below = |t: f64, b: f64| t - b;
    Ok(vec![
        summarize(format!("infonce/lower_bound_3se ({cases} joints+critics)"), &random, below),
        summarize(format!("infonce/optimal_critic ({} runs)", optimal.len()), &optimal, below),
        summarize(format!("infonce/optimal_gap_shrinks_in_k ({} steps)", shrink.len()), &shrink, below),
        summarize(format!("infonce/at_most_log_k ({} runs)", log_k.len()), &log_k, below),
    ])
}

/// Client-ID classifier bounds with random classifiers, plus equality at the
/// true posterior.
pub fn uv_checks(cases: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    let mut rng = Rng::derive(seed, "uv_bounds", 0);
    let mut lower = Vec::with_capacity(cases);
    let mut upper = Vec::with_capacity(cases);
    let mut equality = Vec::with_capacity(cases);
    for _ in 0..cases {
        let (ns, na, nb) = (alphabet(&mut rng), alphabet(&mut rng), alphabet(&mut rng));
        let j = DiscreteJoint::random_views(ns, na, nb, &mut rng)?;
        let r1 = random_stochastic(na, ns, rng.uniform_range(0.3, 3.0), &mut rng);
        let r2 = random_stochastic(nb, ns, rng.uniform_range(0.3, 3.0), &mut rng);
        let c = validate_uv_bounds(&j, &r1, &r2)?;
        lower.push((c.mi_z1_s, c.lower_bound, c.lower_holds));
        upper.push((c.mi_z1_s_given_z2, c.upper_bound, c.upper_holds));
        let post1 = j.client_posterior(crate::mi_oracle::Var::View1)?;
        let post2 = j.client_posterior(crate::mi_oracle::Var::View2)?;
        let c = validate_uv_bounds(&j, &post1, &post2)?;
        let gap = (c.mi_z1_s - c.lower_bound).abs();
        equality.push((c.mi_z1_s, c.lower_bound, gap <= 1e-12));
    }
    Ok(vec![
        summarize(format!("client_id/lower_bound ({cases} joints+classifiers)"), &lower, |t, b| t - b),
        summarize(format!("client_id/equality_at_posterior ({cases} joints)"), &equality, |t, b| 1e-12 - (t - b).abs()),
        summarize(format!("excess_client_id/upper_bound ({cases} joints+classifiers)"), &upper, |t, b| b - t),
    ])
}

/// Label-skew client-classification bound on the label information.
pub fn label_skew_checks(cases: usize, seed: u64) -> Result<Vec<BoundCheck>> {
    let mut rng = Rng::derive(seed, "label_skew_bound", 0);
    let mut out = Vec::with_capacity(cases);
    for _ in 0..cases {
        let (ns, ny, nz) = (alphabet(&mut rng), alphabet(&mut rng), alphabet(&mut rng));
        let conc = rng.uniform_range(0.2, 2.0);
        let j = DiscreteJoint::random_label_skew(ns, ny, nz, conc, &mut rng)?;
        let r1 = random_stochastic(nz, ns, rng.uniform_range(0.3, 3.0), &mut rng);
        let r2 = if rng.bernoulli(0.3) {
            // the best classifier makes the bound tightest
            r1.clone()
        } else {
            random_stochastic(nz, ns, rng.uniform_range(0.3, 3.0), &mut rng)
        };
        let (r1, r2) = if rng.bernoulli(0.3) {
            (
                j.client_posterior(crate::mi_oracle::Var::View1)?,
                j.client_posterior(crate::mi_oracle::Var::View2)?,
            )
        } else {
            (r1, r2)
        };
        let c = validate_label_skew_bounds(&j, &r1, &r2)?;
        out.push((c.lhs, c.rhs, c.holds));
    }
    Ok(vec![summarize(
        format!("label_skew/client_bound_on_label_mi ({cases} joints+classifiers)"),
        &out,
        |t, b| t - b,
    )])
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<BoundCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn text(&self) -> String {
        let mut out = format_report(&self.checks);
        out.push_str(if self.passed() { "\nall checks passed\n" } else { "\nSOME CHECKS FAILED\n" });
        out
    }
}

/// Sizes of the suite.
#[derive(Clone, Copy, Debug)]
pub struct SuiteSize {
    pub grad_configs: usize,
    pub chain_rule_joints: usize,
    pub bound_cases: usize,
    pub infonce_samples: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        Self {
            grad_configs: 20,
            chain_rule_joints: 100,
            bound_cases: 50,
            infonce_samples: 2000,
        }
    }
}

pub fn run_validation_suite_with(grad: &[GradCheck], size: SuiteSize, seed: u64) -> Result<ValidationReport> {
    let mut checks = run_grad_checks(grad, size.grad_configs, seed)?;
    checks.extend(chain_rule_checks(size.chain_rule_joints, seed)?);
    checks.extend(infonce_checks(size.bound_cases, size.infonce_samples, seed)?);
    checks.extend(uv_checks(size.bound_cases, seed)?);
    checks.extend(label_skew_checks(size.bound_cases, seed)?);
    if checks.iter().any(|c| c.name.is_empty()) {
        return Err(Error::Oracle("unnamed check".into()));
    }
    Ok(ValidationReport { checks })
}

pub fn run_validation_suite(seed: u64) -> Result<ValidationReport> {
    run_validation_suite_with(&default_grad_checks(), SuiteSize::default(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_grad_check_passes_a_few_configs() {
        let report = run_grad_checks(&default_grad_checks(), 3, 11).unwrap();
        for c in &report {
            assert!(c.pass, "{} err {}", c.name, c.true_value);
        }
    }

    fn broken(rng: &mut Rng) -> Result<f64> {
        let (n, d) = batch_and_dim(rng);
        let (z1, z2) = (gaussian(n, d, rng), gaussian(n, d, rng));
        let l = spectral_loss(&z1, &z2)?;
        let numeric = fd(|m| spectral_loss(m, &z2).map_or(f64::NAN, |l| l.loss), &z1)?;
        Ok(relative_error(l.d_z1.scaled(1.01).as_slice(), numeric.as_slice(), REL_FLOOR))
    }

    #[test]
    fn corrupted_gradient_fails_by_name() {
        let checks = [GradCheck { name: "corrupted_spectral", run: broken }];
        let size = SuiteSize {
            grad_configs: 2,
            chain_rule_joints: 3,
            bound_cases: 3,
            infonce_samples: 50,
        };
        let report = run_validation_suite_with(&checks, size, 0).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures().len(), 1, "{}", report.text());
        assert!(report.failures()[0].contains("corrupted_spectral"));
        assert!(report.text().contains("FAIL"));
    }
}
