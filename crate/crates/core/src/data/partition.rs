//! The three client partitioners: label skew, covariate shift (feature
//! rotation) and their composition.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    LabelSkew,
    CovariateShift,
    JointShift,
}

impl PartitionMode {
    pub const ALL: [PartitionMode; 3] = [
        PartitionMode::LabelSkew,
        PartitionMode::CovariateShift,
        PartitionMode::JointShift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PartitionMode::LabelSkew => "label_skew",
            PartitionMode::CovariateShift => "covariate_shift",
            PartitionMode::JointShift => "joint_shift",
        }
    }
}

impl std::fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PartitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PartitionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown partition mode `{s}`")))
    }
}

/// How to split a dataset across clients.
///
/// `alpha` is the Dirichlet concentration before it is multiplied by the
/// prior (the label prior for label splits, the uniform bin prior for
/// rotation bins).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub alpha: f64,
    pub num_clients: usize,
    pub num_rotation_bins: usize,
    /// Upper end of the rotation range, split into equal bins. `TAU` covers
    /// the full circle; `0` disables rotation.
    pub max_angle: f64,
    pub labelled_fraction: f64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            mode: PartitionMode::LabelSkew,
            alpha: 0.1,
            num_clients: 20,
            num_rotation_bins: 10,
            max_angle: TAU,
            labelled_fraction: 0.0,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be positive and finite, got {}", self.alpha)));
        }
        if self.num_clients == 0 {
            return Err(Error::config("need at least one client"));
        }
        if ds.len() < self.num_clients {
            return Err(Error::config(format!(
                "{} samples cannot fill {} clients",
                ds.len(),
                self.num_clients
            )));
        }
        if self.num_rotation_bins == 0 {
            return Err(Error::config("need at least one rotation bin"));
        }
        if !(self.max_angle >= 0.0) {
            return Err(Error::config("max_angle must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.labelled_fraction) {
            return Err(Error::config("labelled_fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

/// One client's share of the training data.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    /// Rows of the partitioned dataset owned by this client.
    pub indices: Vec<usize>,
    /// Local features, rotated when the partition applies covariate shift.
    pub x: Matrix,
    pub y: Vec<usize>,
    /// Whether the label of each local sample may be used in training.
    pub labelled: Vec<bool>,
    /// Distinct rotation bins used by this client (sorted).
    pub rotation_bins: Vec<usize>,
    pub sample_bins: Vec<Option<usize>>,
    pub angles: Vec<f64>,
}

impl ClientDataset {
    fn from_indices(client_id: usize, indices: Vec<usize>, ds: &Dataset) -> Self {
        let n = indices.len();
        Self {
            client_id,
            x: ds.x.select_rows(&indices),
            y: indices.iter().map(|&i| ds.y[i]).collect(),
            indices,
            labelled: vec![false; n],
            rotation_bins: Vec::new(),
            sample_bins: vec![None; n],
            angles: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn label_histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut h = vec![0; num_classes];
        for &y in &self.y {
            h[y] += 1;
        }
        h
    }

    pub fn num_labelled(&self) -> usize {
        self.labelled.iter().filter(|&&l| l).count()
    }

    /// Marks the first `⌊fraction · n⌋` samples of a seeded local shuffle as
    /// labelled.
    fn assign_labelled(&mut self, fraction: f64, rng: &mut Rng) {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let k = (fraction * n as f64).floor() as usize;
        self.labelled = vec![false; n];
        for &i in &order[..k] {
            self.labelled[i] = true;
        }
    }
}

/// Rotates every coordinate pair `(2i, 2i + 1)` of `row` by `angle`.
pub fn rotate_pairs(row: &mut [f64], angle: f64) {
    let (s, c) = angle.sin_cos();
    for pair in row.chunks_exact_mut(2) {
        let (a, b) = (pair[0], pair[1]);
        pair[0] = c * a - s * b;
        pair[1] = s * a + c * b;
    }
}

pub fn partition(ds: &Dataset, spec: &PartitionSpec, rng: &mut Rng) -> Result<Vec<ClientDataset>> {
    match spec.mode {
        PartitionMode::LabelSkew => partition_label_skew(ds, spec, rng),
        PartitionMode::CovariateShift => partition_covariate_shift(ds, spec, rng),
        PartitionMode::JointShift => partition_joint_shift(ds, spec, rng),
    }
}

fn check_mode(spec: &PartitionSpec, expected: PartitionMode) -> Result<()> {
    if spec.mode != expected {
        return Err(Error::config(format!("partition spec has mode {}, expected {expected}", spec.mode)));
    }
    Ok(())
}

/// Dirichlet label skew with concentration `alpha · p(y)`.
///
/// Each client receives `⌊N / M⌋` samples. For client `i` a class mixture
/// `q ~ Dir(alpha · p(y))` is drawn, then samples are pulled one at a time
/// from class `c ~ q` restricted to classes whose pool is not yet exhausted
/// (a multinomial truncated to availability). Samples left over by the
/// integer division are dealt round-robin.
pub fn partition_label_skew(ds: &Dataset, spec: &PartitionSpec, rng: &mut Rng) -> Result<Vec<ClientDataset>> {
    check_mode(spec, PartitionMode::LabelSkew)?;
    label_skew_split(ds, spec, rng)
}

fn label_skew_split(ds: &Dataset, spec: &PartitionSpec, rng: &mut Rng) -> Result<Vec<ClientDataset>> {
    spec.validate(ds)?;
    let n = ds.len();
    let m = spec.num_clients;
    let counts = ds.class_counts();
    let concentration: Vec<f64> = counts
        .iter()
        .map(|&c| (spec.alpha * c as f64 / n as f64).max(f64::MIN_POSITIVE))
        .collect();
    let mut pools: Vec<Vec<usize>> = (0..ds.num_classes)
        .map(|c| (0..n).filter(|&i| ds.y[i] == c).collect())
        .collect();
    for pool in &mut pools {
        rng.shuffle(pool);
    }

    let quota = n / m;
    let mut assigned: Vec<Vec<usize>> = vec![Vec::with_capacity(quota + 1); m];
    for client in assigned.iter_mut() {
        let q = rng.dirichlet(&concentration);
        for _ in 0..quota {
            let mut w: Vec<f64> = q
                .iter()
                .zip(&pools)
                .map(|(&p, pool)| if pool.is_empty() { 0.0 } else { p })
                .collect();
            if !(w.iter().sum::<f64>() > 1e-300) {
                // the mixture has no mass left on any open pool
                w = pools.iter().map(|p| p.len() as f64).collect();
            }
            let c = rng.categorical(&w);
            client.push(pools[c].pop().expect("non-empty pool"));
        }
    }
    let mut next = 0;
    for pool in &mut pools {
        while let Some(i) = pool.pop() {
            assigned[next % m].push(i);
            next += 1;
        }
    }
    let mut clients: Vec<ClientDataset> = assigned
        .into_iter()
        .enumerate()
        .map(|(id, mut idx)| {
            idx.sort_unstable();
            ClientDataset::from_indices(id, idx, ds)
        })
        .collect();
    for c in &mut clients {
        c.assign_labelled(spec.labelled_fraction, rng);
    }
    Ok(clients)
}

fn iid_split(ds: &Dataset, spec: &PartitionSpec, rng: &mut Rng) -> Result<Vec<ClientDataset>> {
    spec.validate(ds)?;
    let m = spec.num_clients;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    rng.shuffle(&mut order);
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (pos, i) in order.into_iter().enumerate() {
        assigned[pos % m].push(i);
    }
    let mut clients: Vec<ClientDataset> = assigned
        .into_iter()
        .enumerate()
        .map(|(id, mut idx)| {
            idx.sort_unstable();
            ClientDataset::from_indices(id, idx, ds)
        })
        .collect();
    for c in &mut clients {
        c.assign_labelled(spec.labelled_fraction, rng);
    }
    Ok(clients)
}

/// Draws a bin mixture `Dir(alpha / B)` per client, then rotates each local
/// sample once by an angle uniform within a bin drawn from that mixture.
fn apply_rotations(clients: &mut [ClientDataset], spec: &PartitionSpec, rng: &mut Rng) -> Result<()> {
    let bins = spec.num_rotation_bins;
    let width = spec.max_angle / bins as f64;
    let concentration = vec![spec.alpha / bins as f64; bins];
    for client in clients.iter_mut() {
        if client.x.cols() % 2 != 0 {
            return Err(Error::config(format!(
                "rotation needs an even feature dimension, got {}",
                client.x.cols()
            )));
        }
        let q = rng.dirichlet(&concentration);
        let mut used = vec![false; bins];
        for r in 0..client.len() {
            let b = rng.categorical(&q);
            let angle = rng.uniform_range(b as f64 * width, (b + 1) as f64 * width);
            rotate_pairs(client.x.row_mut(r), angle);
            client.sample_bins[r] = Some(b);
            client.angles[r] = angle;
            used[b] = true;
        }
        client.rotation_bins = (0..bins).filter(|&b| used[b]).collect();
    }
    Ok(())
}

/// I.i.d. split followed by per-client rotation of the stored features.
pub fn partition_covariate_shift(
    ds: &Dataset,
    spec: &PartitionSpec,
    rng: &mut Rng,
) -> Result<Vec<ClientDataset>> {
    check_mode(spec, PartitionMode::CovariateShift)?;
    if ds.dim() % 2 != 0 {
        return Err(Error::config(format!("covariate shift needs an even dimension, got {}", ds.dim())));
    }
    let mut clients = iid_split(ds, spec, rng)?;
    apply_rotations(&mut clients, spec, rng)?;
    Ok(clients)
}

/// Label-skew split followed by the rotation corruption. With the same
/// generator state the label assignment equals [`partition_label_skew`].
pub fn partition_joint_shift(ds: &Dataset, spec: &PartitionSpec, rng: &mut Rng) -> Result<Vec<ClientDataset>> {
    check_mode(spec, PartitionMode::JointShift)?;
    if ds.dim() % 2 != 0 {
        return Err(Error::config(format!("joint shift needs an even dimension, got {}", ds.dim())));
    }
    let mut clients = label_skew_split(ds, spec, rng)?;
    apply_rotations(&mut clients, spec, rng)?;
    Ok(clients)
}
