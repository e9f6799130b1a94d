//! Exact mutual information on small discrete joints, and numerical checks
//! of the variational bounds used by the training objectives.
//!
//! All quantities are in nats.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Absolute tolerance for exact (enumerated) inequality checks.
pub const EXACT_TOL: f64 = 1e-12;

/// Largest supported alphabet per variable.
pub const MAX_ALPHABET: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    /// Client ID `s`.
    Client,
    /// Label `y`.
    Label,
    /// First-view representation `z1`.
    View1,
    /// Second-view representation `z2`.
    View2,
}

/// Explicit probability table over a few discrete variables, row-major in
/// the order of `vars`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    vars: Vec<Var>,
    dims: Vec<usize>,
    probs: Vec<f64>,
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

impl DiscreteJoint {
    pub fn new(vars: Vec<Var>, dims: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if vars.len() != dims.len() || vars.is_empty() {
            return Err(Error::config("joint needs one size per variable"));
        }
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(Error::config(format!("variable {v:?} listed twice")));
            }
        }
        if dims.iter().any(|&d| d == 0 || d > MAX_ALPHABET) {
            return Err(Error::config(format!("alphabet sizes must be in 1..={MAX_ALPHABET}")));
        }
        if probs.len() != dims.iter().product::<usize>() {
            return Err(Error::dims("DiscreteJoint::new", "table size does not match dims"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::config("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { vars, dims, probs })
    }

    /// Random `(s, z1, z2)` joint with Dirichlet(1) weights over all cells.
    pub fn random_views(n_s: usize, n_z1: usize, n_z2: usize, rng: &mut Rng) -> Result<Self> {
        let cells = n_s * n_z1 * n_z2;
        let probs = rng.dirichlet(&vec![1.0; cells]);
        Self::new(vec![Var::Client, Var::View1, Var::View2], vec![n_s, n_z1, n_z2], probs)
    }

    /// `p(s) p(y|s) p(z1|y) p(z2|y)`: the label-skew generative structure.
    pub fn label_skew(
        p_s: &[f64],
        p_y_given_s: &Matrix,
        p_z1_given_y: &Matrix,
        p_z2_given_y: &Matrix,
    ) -> Result<Self> {
        let (ns, ny) = p_y_given_s.shape();
        let nz1 = p_z1_given_y.cols();
        let nz2 = p_z2_given_y.cols();
        if p_s.len() != ns || p_z1_given_y.rows() != ny || p_z2_given_y.rows() != ny {
            return Err(Error::dims("label_skew joint", "factor shapes disagree"));
        }
        check_stochastic("p(y|s)", p_y_given_s)?;
        check_stochastic("p(z1|y)", p_z1_given_y)?;
        check_stochastic("p(z2|y)", p_z2_given_y)?;
        let mut probs = Vec::with_capacity(ns * ny * nz1 * nz2);
        for (s, &ps) in p_s.iter().enumerate() {
            for y in 0..ny {
                let psy = ps * p_y_given_s.get(s, y);
                for a in 0..nz1 {
                    for b in 0..nz2 {
                        probs.push(psy * p_z1_given_y.get(y, a) * p_z2_given_y.get(y, b));
                    }
                }
            }
        }
        Self::new(
            vec![Var::Client, Var::Label, Var::View1, Var::View2],
            vec![ns, ny, nz1, nz2],
            probs,
        )
    }

    /// Random label-skew joint; every factor is a Dirichlet(`conc`) draw.
    pub fn random_label_skew(
        n_s: usize,
        n_y: usize,
        n_z: usize,
        conc: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let p_s = rng.dirichlet(&vec![conc; n_s]);
        let p_y = random_stochastic(n_s, n_y, conc, rng);
        let p_z1 = random_stochastic(n_y, n_z, conc, rng);
        let p_z2 = random_stochastic(n_y, n_z, conc, rng);
        Self::label_skew(&p_s, &p_y, &p_z1, &p_z2)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn size(&self, var: Var) -> Result<usize> {
        self.position(var).map(|i| self.dims[i])
    }

    fn position(&self, var: Var) -> Result<usize> {
        self.vars
            .iter()
            .position(|&v| v == var)
            .ok_or_else(|| Error::config(format!("joint has no variable {var:?}")))
    }

    /// Marginal table over `keep`, row-major in the order given.
    pub fn marginal(&self, keep: &[Var]) -> Result<(Vec<usize>, Vec<f64>)> {
        let pos: Vec<usize> = keep.iter().map(|&v| self.position(v)).collect::<Result<_>>()?;
        let out_dims: Vec<usize> = pos.iter().map(|&p| self.dims[p]).collect();
        let mut out = vec![0.0; out_dims.iter().product()];
        let mut idx = vec![0usize; self.dims.len()];
        for &p in &self.probs {
            let mut flat = 0;
            for (&q, &d) in pos.iter().zip(&out_dims) {
                flat = flat * d + idx[q];
            }
            out[flat] += p;
            // odometer increment, last variable fastest
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < self.dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok((out_dims, out))
    }

    pub fn entropy(&self, vars: &[Var]) -> Result<f64> {
        let (_, p) = self.marginal(vars)?;
        Ok(-p.iter().map(|&q| xlogy(q, q)).sum::<f64>())
    }

    /// `I(A; B | C)` by direct enumeration of
    /// `Σ p(a,b,c) log[p(a,b|c) / (p(a|c) p(b|c))]`.
    pub fn exact_mi(&self, a: &[Var], b: &[Var], c: &[Var]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::config("mutual information needs non-empty variable sets"));
        }
        let all: Vec<Var> = a.iter().chain(b).chain(c).copied().collect();
        for (i, v) in all.iter().enumerate() {
            if all[..i].contains(v) {
                return Err(Error::config(format!("variable {v:?} appears in more than one set")));
            }
        }
        let (dims, p_abc) = self.marginal(&all)?;
        let na: usize = dims[..a.len()].iter().product();
        let nb: usize = dims[a.len()..a.len() + b.len()].iter().product();
        let nc: usize = dims[a.len() + b.len()..].iter().product();
        let mut p_ac = vec![0.0; na * nc];
        let mut p_bc = vec![0.0; nb * nc];
        let mut p_c = vec![0.0; nc];
        for ia in 0..na {
            for ib in 0..nb {
                for ic in 0..nc {
                    let p = p_abc[(ia * nb + ib) * nc + ic];
                    p_ac[ia * nc + ic] += p;
                    p_bc[ib * nc + ic] += p;
                    p_c[ic] += p;
                }
            }
        }
        let mut mi = 0.0;
        for ia in 0..na {
            for ib in 0..nb {
                for ic in 0..nc {
                    let p = p_abc[(ia * nb + ib) * nc + ic];
                    if p > 0.0 {
                        // p(a,b|c) / (p(a|c) p(b|c)) = p(a,b,c) p(c) / (p(a,c) p(b,c))
                        mi += p * (p * p_c[ic] / (p_ac[ia * nc + ic] * p_bc[ib * nc + ic])).ln();
                    }
                }
            }
        }
        // enumeration can undershoot zero by rounding
        Ok(mi.max(0.0))
    }

    /// Posterior `p(s | z)` as a `|Z| × |S|` table; rows with zero mass
    /// fall back to the prior.
    pub fn client_posterior(&self, view: Var) -> Result<Matrix> {
        let ns = self.size(Var::Client)?;
        let nz = self.size(view)?;
        let (_, p_zs) = self.marginal(&[view, Var::Client])?;
        let (_, p_s) = self.marginal(&[Var::Client])?;
        let mut out = Matrix::zeros(nz, ns);
        for z in 0..nz {
            let row = &p_zs[z * ns..(z + 1) * ns];
            let total: f64 = row.iter().sum();
            for s in 0..ns {
                out.set(z, s, if total > 0.0 { row[s] / total } else { p_s[s] });
            }
        }
        Ok(out)
    }

    /// Residual of `I(z1;z2) − [I(z1;z2|s) + I(z1;s) − I(z1;s|z2)]`.
    pub fn global_mi_chain_rule_residual(&self) -> Result<f64> {
        use Var::*;
        let lhs = self.exact_mi(&[View1], &[View2], &[])?;
        let rhs = self.exact_mi(&[View1], &[View2], &[Client])? + self.exact_mi(&[View1], &[Client], &[])?
            - self.exact_mi(&[View1], &[Client], &[View2])?;
        Ok(lhs - rhs)
    }

    /// Residual of the label-dependent split of the client-conditional MI,
    /// `I(z1;z2|s) − [I(z1;y|s) + I(z1;z2|y,s) − I(z1;y|s,z2)]`.
    pub fn label_chain_rule_residual(&self) -> Result<f64> {
        use Var::*;
        let lhs = self.exact_mi(&[View1], &[View2], &[Client])?;
        let rhs = self.exact_mi(&[View1], &[Label], &[Client])?
            + self.exact_mi(&[View1], &[View2], &[Label, Client])?
            - self.exact_mi(&[View1], &[Label], &[Client, View2])?;
        Ok(lhs - rhs)
    }
}

fn check_stochastic(name: &str, m: &Matrix) -> Result<()> {
    for r in 0..m.rows() {
        let row = m.row(r);
        if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("{name}: row {r} is not a distribution")));
        }
    }
    Ok(())
}

/// Row-stochastic matrix with Dirichlet(`conc`) rows.
pub fn random_stochastic(rows: usize, cols: usize, conc: f64, rng: &mut Rng) -> Matrix {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        data.extend(rng.dirichlet(&vec![conc; cols]));
    }
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Critic values `f(z1, z2)`, one `|Z1| × |Z2|` table per client or a single
/// table shared by all clients.
#[derive(Clone, Debug)]
pub struct CriticTable {
    tables: Vec<Matrix>,
}

impl CriticTable {
    pub fn shared(table: Matrix) -> Self {
        Self { tables: vec![table] }
    }

    pub fn per_client(tables: Vec<Matrix>) -> Self {
        Self { tables }
    }

    /// Gaussian critic values with standard deviation `scale`.
    pub fn random(n_z1: usize, n_z2: usize, scale: f64, rng: &mut Rng) -> Self {
        let data = (0..n_z1 * n_z2).map(|_| scale * rng.normal()).collect();
        Self::shared(Matrix::from_vec(n_z1, n_z2, data).expect("sized"))
    }

    /// `f_s(z1, z2) = log p(z1 | z2, s) − log p(z1 | s)`, the critic that
    /// makes the bound tight as `K` grows. The denominator contrasts `z1`
    /// candidates, so a plain `log p(z1 | z2, s)` would keep a `log p(z1 | s)`
    /// bias. Zero probabilities are floored at `1e-300`.
    pub fn optimal(joint: &DiscreteJoint) -> Result<Self> {
        let (dims, p) = joint.marginal(&[Var::Client, Var::View1, Var::View2])?;
        let (ns, na, nb) = (dims[0], dims[1], dims[2]);
        let mut tables = Vec::with_capacity(ns);
        for s in 0..ns {
            let cell = |a: usize, b: usize| p[(s * na + a) * nb + b];
            let p_s: f64 = (0..na).flat_map(|a| (0..nb).map(move |b| (a, b))).map(|(a, b)| cell(a, b)).sum();
            let mut t = Matrix::zeros(na, nb);
            for b in 0..nb {
                let col: f64 = (0..na).map(|a| cell(a, b)).sum();
                for a in 0..na {
                    let row: f64 = (0..nb).map(|bb| cell(a, bb)).sum();
                    let cond = if col > 0.0 { cell(a, b) / col } else { 0.0 };
                    let marg = if p_s > 0.0 { row / p_s } else { 0.0 };
                    t.set(a, b, cond.max(1e-300).ln() - marg.max(1e-300).ln());
                }
            }
            tables.push(t);
        }
        Ok(Self { tables })
    }

    fn value(&self, s: usize, a: usize, b: usize) -> f64 {
        let t = if self.tables.len() == 1 { &self.tables[0] } else { &self.tables[s] };
        t.get(a, b)
    }
}

/// Monte-Carlo check of the K-sample InfoNCE lower bound on `I(z1;z2|s)`.
#[derive(Clone, Debug)]
pub struct InfoNceCheck {
    pub k: usize,
    pub bound_estimate: f64,
    pub std_error: f64,
    pub true_mi: f64,
    /// Largest single-draw bound value; never above `log K`.
    pub max_draw: f64,
    /// `bound_estimate ≤ true_mi + 3·std_error`.
    pub holds: bool,
    pub within_log_k: bool,
}

/// Samples `num_samples` minibatches: `s ~ p(s)` then `K` pairs from
/// `p(z1, z2 | s)`, and averages the InfoNCE bound of each minibatch.
pub fn validate_infonce_bound(
    joint: &DiscreteJoint,
    critic: &CriticTable,
    k: usize,
    num_samples: usize,
    rng: &mut Rng,
) -> Result<InfoNceCheck> {
    if k == 0 || num_samples < 2 {
        return Err(Error::config("need K >= 1 and at least two Monte-Carlo samples"));
    }
    let (dims, p) = joint.marginal(&[Var::Client, Var::View1, Var::View2])?;
    let (ns, na, nb) = (dims[0], dims[1], dims[2]);
    for t in &critic.tables {
        if t.shape() != (na, nb) || !t.is_finite() {
            return Err(Error::config("critic table must be finite and |Z1| x |Z2|"));
        }
    }
    if critic.tables.len() != 1 && critic.tables.len() != ns {
        return Err(Error::config("critic needs one table or one per client"));
    }
    let p_s: Vec<f64> = (0..ns).map(|s| p[s * na * nb..(s + 1) * na * nb].iter().sum()).collect();
    let true_mi = joint.exact_mi(&[Var::View1], &[Var::View2], &[Var::Client])?;
    let kf = k as f64;

    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut max_draw = f64::NEG_INFINITY;
    let mut pairs = vec![(0usize, 0usize); k];
    for n in 0..num_samples {
        let s = rng.categorical(&p_s);
        let cond = &p[s * na * nb..(s + 1) * na * nb];
        for pair in pairs.iter_mut() {
            let cell = rng.categorical(cond);
            *pair = (cell / nb, cell % nb);
        }
        let mut value = 0.0;
        for &(a_k, b_k) in &pairs {
            let scores = pairs.iter().map(|&(a_j, _)| critic.value(s, a_j, b_k));
            let max = scores.clone().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + scores.map(|v| (v - max).exp()).sum::<f64>().ln();
            value += (critic.value(s, a_k, b_k) - (lse - kf.ln())) / kf;
        }
        max_draw = max_draw.max(value);
        let delta = value - mean;
        mean += delta / (n + 1) as f64;
        m2 += delta * (value - mean);
    }
    let var = m2 / (num_samples - 1) as f64;
    let std_error = (var / num_samples as f64).sqrt();
    Ok(InfoNceCheck {
        k,
        bound_estimate: mean,
        std_error,
        true_mi,
        max_draw,
        holds: mean <= true_mi + 3.0 * std_error,
        within_log_k: max_draw <= kf.ln() + EXACT_TOL,
    })
}

/// Client-ID classifier bounds on `I(z1; s)` (lower) and `I(z1; s | z2)`
/// (upper), evaluated exactly.
#[derive(Clone, Debug)]
pub struct UvBoundCheck {
    /// `E[log r(s|z1)] + H(s)`.
    pub lower_bound: f64,
    pub mi_z1_s: f64,
    /// `−E[log r(s|z2)]`.
    pub upper_bound: f64,
    pub mi_z1_s_given_z2: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// `E_{p(s, z)}[log r(s|z)]` for a `|Z| × |S|` classifier table.
fn expected_log_classifier(joint: &DiscreteJoint, view: Var, r: &Matrix) -> Result<f64> {
    let ns = joint.size(Var::Client)?;
    let nz = joint.size(view)?;
    if r.shape() != (nz, ns) {
        return Err(Error::dims("classifier", format!("expected {nz}x{ns}, got {:?}", r.shape())));
    }
    check_stochastic("classifier", r)?;
    let (_, p) = joint.marginal(&[view, Var::Client])?;
    Ok((0..nz)
        .flat_map(|z| (0..ns).map(move |s| (z, s)))
        .map(|(z, s)| xlogy(p[z * ns + s], r.get(z, s)))
        .sum())
}

pub fn validate_uv_bounds(joint: &DiscreteJoint, r_view1: &Matrix, r_view2: &Matrix) -> Result<UvBoundCheck> {
    let h_s = joint.entropy(&[Var::Client])?;
    let lower_bound = expected_log_classifier(joint, Var::View1, r_view1)? + h_s;
    let upper_bound = -expected_log_classifier(joint, Var::View2, r_view2)?;
    let mi_z1_s = joint.exact_mi(&[Var::View1], &[Var::Client], &[])?;
    let mi_z1_s_given_z2 = joint.exact_mi(&[Var::View1], &[Var::Client], &[Var::View2])?;
    Ok(UvBoundCheck {
        lower_bound,
        mi_z1_s,
        upper_bound,
        mi_z1_s_given_z2,
        lower_holds: lower_bound <= mi_z1_s + EXACT_TOL,
        upper_holds: mi_z1_s_given_z2 <= upper_bound + EXACT_TOL,
    })
}

/// Label-skew check `I(z1;y) + I(z2;y) ≥ E[log r(s|z1) + log r(s|z2)] + 2H(s)`.
#[derive(Clone, Debug)]
pub struct LabelSkewCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Errors if the joint is not label-skew structured, i.e. the views carry
/// information about `s` beyond what `y` does.
pub fn validate_label_skew_bounds(joint: &DiscreteJoint, r_view1: &Matrix, r_view2: &Matrix) -> Result<LabelSkewCheck> {
    use Var::*;
    let leak = joint.exact_mi(&[Client], &[View1, View2], &[Label])?;
    if leak > EXACT_TOL {
        return Err(Error::config(format!(
            "joint is not label-skew structured: I(s; z1, z2 | y) = {leak:e}"
        )));
    }
    let lhs = joint.exact_mi(&[View1], &[Label], &[])? + joint.exact_mi(&[View2], &[Label], &[])?;
    let rhs = expected_log_classifier(joint, View1, r_view1)?
        + expected_log_classifier(joint, View2, r_view2)?
        + 2.0 * joint.entropy(&[Client])?;
    Ok(LabelSkewCheck {
        lhs,
        rhs,
        holds: rhs <= lhs + EXACT_TOL,
    })
}

/// One line of a validation report.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub true_value: f64,
    pub bound_value: f64,
    /// Distance from the violating side; negative means violated.
    pub slack: f64,
    pub pass: bool,
}

/// Fixed-width text table of checks.
pub fn format_report(checks: &[BoundCheck]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<44} {:>14} {:>14} {:>14}  {}",
        "check", "true", "bound", "slack", "result"
    );
    for c in checks {
        let _ = writeln!(
            out,
            "{:<44} {:>14.6e} {:>14.6e} {:>14.6e}  {}",
            c.name,
            c.true_value,
            c.bound_value,
            c.slack,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Var::*;

    #[test]
    fn independent_variables_have_zero_mi() {
        let pa = [0.3, 0.7];
        let pb = [0.2, 0.5, 0.3];
        let probs: Vec<f64> = pa.iter().flat_map(|a| pb.iter().map(move |b| a * b)).collect();
        let j = DiscreteJoint::new(vec![View1, View2], vec![2, 3], probs).unwrap();
        assert!(j.exact_mi(&[View1], &[View2], &[]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn copied_bit_has_log2_mi() {
        let j = DiscreteJoint::new(vec![View1, View2], vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let mi = j.exact_mi(&[View1], &[View2], &[]).unwrap();
        assert!((mi - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn chain_rule_on_random_joint() {
        let j = DiscreteJoint::random_views(2, 2, 2, &mut Rng::new(1)).unwrap();
        assert!(j.global_mi_chain_rule_residual().unwrap().abs() < 1e-10);
    }

    #[test]
    fn rejects_overlap_and_bad_tables() {
        let j = DiscreteJoint::random_views(2, 3, 3, &mut Rng::new(2)).unwrap();
        assert!(matches!(j.exact_mi(&[View1], &[View1], &[]), Err(Error::Config(_))));
        assert!(matches!(j.exact_mi(&[View1], &[View2], &[View2]), Err(Error::Config(_))));
        assert!(DiscreteJoint::new(vec![View1], vec![2], vec![0.5, 0.6]).is_err());
        assert!(DiscreteJoint::new(vec![View1], vec![9], vec![1.0 / 9.0; 9]).is_err());
    }

    #[test]
    fn infonce_with_single_sample_is_zero() {
        let j = DiscreteJoint::random_views(2, 3, 3, &mut Rng::new(3)).unwrap();
        let critic = CriticTable::random(3, 3, 1.0, &mut Rng::new(4));
        let c = validate_infonce_bound(&j, &critic, 1, 100, &mut Rng::new(5)).unwrap();
        assert_eq!(c.bound_estimate, 0.0);
        assert!(c.holds && c.within_log_k);
    }

    #[test]
    fn true_posterior_makes_lower_bound_tight() {
        let j = DiscreteJoint::random_views(3, 4, 4, &mut Rng::new(6)).unwrap();
        let r1 = j.client_posterior(View1).unwrap();
        let r2 = j.client_posterior(View2).unwrap();
        let c = validate_uv_bounds(&j, &r1, &r2).unwrap();
        assert!((c.lower_bound - c.mi_z1_s).abs() < 1e-12);
        assert!(c.upper_holds);
    }

    #[test]
    fn uniform_classifier_with_uniform_clients_gives_zero_lower_bound() {
        let mut rng = Rng::new(7);
        let p_s = [0.25; 4];
        let p_y = random_stochastic(4, 3, 1.0, &mut rng);
        let p_z = random_stochastic(3, 5, 1.0, &mut rng);
        let j = DiscreteJoint::label_skew(&p_s, &p_y, &p_z, &p_z).unwrap();
        let uniform = Matrix::filled(5, 4, 0.25);
        let c = validate_uv_bounds(&j, &uniform, &uniform).unwrap();
        assert!(c.lower_bound.abs() < 1e-12);
        assert!(c.lower_holds);
    }

    #[test]
    fn label_skew_bounds_reject_other_joints() {
        // s and z1 directly dependent with y constant
        let probs = vec![0.5, 0.0, 0.0, 0.5];
        let j4 = DiscreteJoint::new(vec![Client, Label, View1, View2], vec![2, 1, 2, 1], probs).unwrap();
        let r = Matrix::filled(2, 2, 0.5);
        let r2 = Matrix::filled(1, 2, 0.5);
        assert!(matches!(validate_label_skew_bounds(&j4, &r, &r2), Err(Error::Config(_))));
    }

    #[test]
    fn label_chain_rule_holds() {
        let j = DiscreteJoint::random_label_skew(3, 3, 4, 1.0, &mut Rng::new(8)).unwrap();
        assert!(j.label_chain_rule_residual().unwrap().abs() < 1e-10);
    }

    #[test]
    fn report_marks_failures() {
        let checks = vec![BoundCheck {
            name: "x".into(),
            true_value: 1.0,
            bound_value: 2.0,
            slack: -1.0,
            pass: false,
        }];
        assert!(format_report(&checks).contains("FAIL"));
    }
}
