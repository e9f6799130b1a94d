//! Synthetic datasets, non-i.i.d. client partitions and view augmentation.

mod io;
mod partition;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{row_l2_normalize, dot, Matrix, Rng, NORM_EPS};

pub use io::{read_dataset, write_dataset, write_manifest, DATASET_MAGIC, DATASET_VERSION};
pub use partition::{
    partition, partition_covariate_shift, partition_joint_shift, partition_label_skew, rotate_pairs,
    ClientDataset, PartitionMode, PartitionSpec,
};

/// Minimum pairwise angle between generated class means, in radians.
pub const MIN_MEAN_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

const MAX_MEAN_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, num_classes: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims("Dataset::new", format!("{} rows, {} labels", x.rows(), y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
            return Err(Error::config(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Self { x, y, num_classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Gaussian classes: `x = separation · μ_c + ε`, `ε ~ N(0, I)`, with unit
/// class means drawn at least [`MIN_MEAN_ANGLE`] apart. Rows are ordered by
/// class.
pub fn generate_synthetic(
    num_classes: usize,
    dim: usize,
    n_per_class: usize,
    class_separation: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if num_classes == 0 || n_per_class == 0 {
        return Err(Error::Generation("need at least one class and one sample per class".into()));
    }
    if dim < 2 {
        return Err(Error::Generation(format!("dim must be >= 2, got {dim}")));
    }
    if !(class_separation > 0.0) {
        return Err(Error::Generation(format!("class separation must be > 0, got {class_separation}")));
    }
    let min_cos = MIN_MEAN_ANGLE.cos();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    let mut attempts = 0;
    while means.len() < num_classes {
        attempts += 1;
        if attempts > MAX_MEAN_ATTEMPTS {
            return Err(Error::Generation(format!(
                "could not place {num_classes} class means {MIN_MEAN_ANGLE:.3} rad apart in {dim} dims"
            )));
        }
        let raw = Matrix::from_vec(1, dim, (0..dim).map(|_| rng.normal()).collect())?;
        let mu = row_l2_normalize(&raw, NORM_EPS).into_vec();
        if means.iter().all(|m| dot(m, &mu) <= min_cos) {
            means.push(mu);
        }
    }
    let n = num_classes * n_per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for (c, mu) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            data.extend(mu.iter().map(|m| class_separation * m + rng.normal()));
            y.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(n, dim, data)?, y, num_classes)
}

/// Stratified split; the first `⌊test_fraction · n_c⌋` shuffled samples of
/// each class go to the test set. Returns `(train, test)`.
pub fn split_train_test(ds: &Dataset, test_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::config(format!("test fraction must be in [0, 1), got {test_fraction}")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..ds.num_classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] == c).collect();
        rng.shuffle(&mut idx);
        let n_test = (test_fraction * idx.len() as f64).floor() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Parametric vector augmentation: Gaussian noise, then coordinate masking,
/// then a per-row scale drawn uniformly from `[scale_min, scale_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSpec {
    pub noise_sigma: f64,
    pub mask_prob: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            noise_sigma: 0.5,
            mask_prob: 0.2,
            scale_min: 0.8,
            scale_max: 1.2,
        }
    }
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self {
            noise_sigma: 0.0,
            mask_prob: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("augment noise_sigma must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.mask_prob) {
            return Err(Error::config("augment mask_prob must be in [0, 1)"));
        }
        if !(self.scale_min > 0.0) || self.scale_max < self.scale_min {
            return Err(Error::config("augment scale range must satisfy 0 < min <= max"));
        }
        Ok(())
    }

    fn apply(&self, x: &Matrix, rng: &mut Rng) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            let scale = rng.uniform_range(self.scale_min, self.scale_max);
            for v in out.row_mut(r) {
                if self.noise_sigma > 0.0 {
                    *v += self.noise_sigma * rng.normal();
                }
                if self.mask_prob > 0.0 && rng.bernoulli(self.mask_prob) {
                    *v = 0.0;
                }
                *v *= scale;
            }
        }
        out
    }
}

/// Two independent augmentations of the same rows.
pub fn make_views(batch_x: &Matrix, aug: &AugmentSpec, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
    aug.validate()?;
    let x1 = aug.apply(batch_x, rng);
    let x2 = aug.apply(batch_x, rng);
    Ok((x1, x2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(4, 6, 10, 2.0, &mut Rng::new(1)).unwrap();
        let b = generate_synthetic(4, 6, 10, 2.0, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![10; 4]);
    }

    #[test]
    fn generation_errors() {
        let mut rng = Rng::new(0);
        assert!(matches!(generate_synthetic(3, 4, 0, 1.0, &mut rng), Err(Error::Generation(_))));
        assert!(matches!(generate_synthetic(3, 1, 5, 1.0, &mut rng), Err(Error::Generation(_))));
        assert!(matches!(generate_synthetic(3, 4, 5, 0.0, &mut rng), Err(Error::Generation(_))));
        // ten directions 45 degrees apart do not fit in the plane
        assert!(matches!(generate_synthetic(10, 2, 5, 1.0, &mut rng), Err(Error::Generation(_))));
    }

    #[test]
    fn huge_separation_is_nearest_mean_separable() {
        let ds = generate_synthetic(5, 8, 40, 1e4, &mut Rng::new(2)).unwrap();
        // class means estimated from the data itself
        let mut means = vec![vec![0.0; 8]; 5];
        for (i, &c) in ds.y.iter().enumerate() {
            for (m, v) in means[c].iter_mut().zip(ds.x.row(i)) {
                *m += v / 40.0;
            }
        }
        let correct = (0..ds.len())
            .filter(|&i| {
                let row = ds.x.row(i);
                let best = (0..5)
                    .min_by(|&a, &b| {
                        let da: f64 = row.iter().zip(&means[a]).map(|(x, m)| (x - m).powi(2)).sum();
                        let db: f64 = row.iter().zip(&means[b]).map(|(x, m)| (x - m).powi(2)).sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                best == ds.y[i]
            })
            .count();
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn split_is_stratified_and_complete() {
        let ds = generate_synthetic(3, 4, 20, 1.0, &mut Rng::new(3)).unwrap();
        let (train, test) = split_train_test(&ds, 0.25, &mut Rng::new(4)).unwrap();
        assert_eq!(test.class_counts(), vec![5; 3]);
        assert_eq!(train.len() + test.len(), ds.len());
    }

    #[test]
    fn identity_augmentation_copies_input() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]);
        let (a, b) = make_views(&x, &AugmentSpec::identity(), &mut Rng::new(5)).unwrap();
        assert_eq!(a, x);
        assert_eq!(b, x);
    }

    #[test]
    fn augmentation_rejects_full_masking() {
        let aug = AugmentSpec {
            mask_prob: 1.0,
            ..AugmentSpec::identity()
        };
        assert!(make_views(&Matrix::zeros(1, 2), &aug, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn noise_only_views_are_unbiased() {
        let aug = AugmentSpec {
            noise_sigma: 0.7,
            ..AugmentSpec::identity()
        };
        let x = Matrix::filled(10_000, 1, 2.0);
        let (x1, _) = make_views(&x, &aug, &mut Rng::new(6)).unwrap();
        let mean = x1.as_slice().iter().map(|v| v - 2.0).sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 3.0 * 0.7 / 100.0, "{mean}");
    }
}
