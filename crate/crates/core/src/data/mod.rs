//! Datasets, splits, batching, standardization and file formats.

pub mod csit;
pub mod positions;
pub mod synthetic;

pub use csit::{load_csi_tensor, read_csit, save_csi_tensor, write_csit, AnyTensor};
pub use positions::{load_positions_csv, parse_positions_csv, save_positions_csv};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Role of a dataset inside a split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Full,
    Train,
    Validation,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitTag::Full => "full",
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        };
        f.write_str(s)
    }
}

/// Where the samples of a dataset came from: its split role and, per sample,
/// the index into the originally loaded or generated dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub tag: SplitTag,
    pub origin: Vec<usize>,
}

impl Provenance {
    pub fn full(n: usize) -> Self {
        Provenance { tag: SplitTag::Full, origin: (0..n).collect() }
    }
}

/// One mini-batch, carrying the original indices of its samples.
#[derive(Clone, Debug)]
pub struct Batch {
    pub features: Tensor<f32>,
    pub positions: Option<Tensor<f32>>,
    pub origin: Vec<usize>,
    pub tag: SplitTag,
}

pub trait Dataset: Sized {
    fn len(&self) -> usize;
    fn provenance(&self) -> &Provenance;
    fn features(&self) -> &Tensor<f32>;
    /// Sub-dataset of the given rows, re-tagged.
    fn select(&self, indices: &[usize], tag: SplitTag) -> Result<Self>;
    fn batch(&self, indices: &[usize]) -> Result<Batch>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tag(&self) -> SplitTag {
        self.provenance().tag
    }

    /// `[h, w]` of one sample.
    fn sample_shape(&self) -> [usize; 2] {
        let s = self.features().shape();
        [s[1], s[2]]
    }
}

fn check_features(features: &Tensor<f32>, what: &str) -> Result<()> {
    if features.ndim() != 3 {
        return Err(Error::dim(format!("{what} features"), "[n, h, w]", features.shape()));
    }
    if !features.is_finite() {
        return Err(Error::Domain(format!("{what} features contain NaN or infinite values")));
    }
    Ok(())
}

fn sub_provenance(p: &Provenance, indices: &[usize], tag: SplitTag) -> Provenance {
    Provenance { tag, origin: indices.iter().map(|&i| p.origin[i]).collect() }
}

#[derive(Clone, Debug)]
pub struct UnlabeledDataset {
    features: Tensor<f32>,
    provenance: Provenance,
}

impl UnlabeledDataset {
    /// Wraps `[n, h, w]` features; rejects non-finite values.
    pub fn new(features: Tensor<f32>) -> Result<Self> {
        check_features(&features, "unlabeled")?;
        let provenance = Provenance::full(features.dim(0));
        Ok(UnlabeledDataset { features, provenance })
    }

    /// Loads a CSIT file, averaging a trailing measurement axis if the
    /// tensor is 4-D.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_features(path.as_ref())?)
    }
}

impl Dataset for UnlabeledDataset {
    fn len(&self) -> usize {
        self.features.dim(0)
    }

    fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn features(&self) -> &Tensor<f32> {
        &self.features
    }

    fn select(&self, indices: &[usize], tag: SplitTag) -> Result<Self> {
        Ok(UnlabeledDataset {
            features: self.features.select_rows(indices)?,
            provenance: sub_provenance(&self.provenance, indices, tag),
        })
    }

    fn batch(&self, indices: &[usize]) -> Result<Batch> {
        Ok(Batch {
            features: self.features.select_rows(indices)?,
            positions: None,
            origin: indices.iter().map(|&i| self.provenance.origin[i]).collect(),
            tag: self.provenance.tag,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    features: Tensor<f32>,
    positions: Tensor<f32>,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(features: Tensor<f32>, positions: Tensor<f32>) -> Result<Self> {
        check_features(&features, "labeled")?;
        if positions.ndim() != 2 || positions.dim(1) != 3 || positions.dim(0) != features.dim(0) {
            return Err(Error::dim(
                "labeled positions",
                format!("[{}, 3]", features.dim(0)),
                positions.shape(),
            ));
        }
        if !positions.is_finite() {
            return Err(Error::Domain("positions contain NaN or infinite values".into()));
        }
        let provenance = Provenance::full(features.dim(0));
        Ok(LabeledDataset { features, positions, provenance })
    }

    pub fn load(features: impl AsRef<Path>, positions: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_features(features.as_ref())?, load_positions_csv(positions)?)
    }

    pub fn positions(&self) -> &Tensor<f32> {
        &self.positions
    }

    /// Drops the labels.
    pub fn unlabeled(&self) -> UnlabeledDataset {
        UnlabeledDataset { features: self.features.clone(), provenance: self.provenance.clone() }
    }
}

impl Dataset for LabeledDataset {
    fn len(&self) -> usize {
        self.features.dim(0)
    }

    fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn features(&self) -> &Tensor<f32> {
        &self.features
    }

    fn select(&self, indices: &[usize], tag: SplitTag) -> Result<Self> {
        Ok(LabeledDataset {
            features: self.features.select_rows(indices)?,
            positions: self.positions.select_rows(indices)?,
            provenance: sub_provenance(&self.provenance, indices, tag),
        })
    }

    fn batch(&self, indices: &[usize]) -> Result<Batch> {
        Ok(Batch {
            features: self.features.select_rows(indices)?,
            positions: Some(self.positions.select_rows(indices)?),
            origin: indices.iter().map(|&i| self.provenance.origin[i]).collect(),
            tag: self.provenance.tag,
        })
    }
}

fn load_features(path: &Path) -> Result<Tensor<f32>> {
    let t = load_csi_tensor(path)?.into_f32();
    match t.ndim() {
        3 => Ok(t),
        4 => average_measurements(&t),
        _ => Err(Error::dim(
            format!("features in {}", path.display()),
            "[n, h, w] or [n, h, w, m]",
            t.shape(),
        )),
    }
}

/// Mean over the trailing measurement axis.
pub fn average_measurements<T: Element>(raw: &Tensor<T>) -> Result<Tensor<T>> {
    if raw.ndim() < 2 {
        return Err(Error::dim("measurement averaging", "at least 2 axes", raw.shape()));
    }
    let m = raw.dim(raw.ndim() - 1);
    if m == 0 {
        return Err(Error::dim("measurement averaging", "m >= 1", raw.shape()));
    }
    let out_shape = raw.shape()[..raw.ndim() - 1].to_vec();
    let data = raw
        .data()
        .chunks_exact(m)
        .map(|c| T::from_f64_lossy(c.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / m as f64))
        .collect();
    Tensor::new(out_shape, data)
}

/// Split sizes: floor of `n · ratio` per split, the remainder going to the first.
pub fn split_sizes(n: usize, ratios: &[f64]) -> Result<Vec<usize>> {
    if ratios.is_empty() || ratios.len() > 3 {
        return Err(Error::config(format!("expected 1 to 3 split ratios, got {}", ratios.len())));
    }
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::config(format!("split ratios must be positive, got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::config(format!("split ratios must sum to 1, got {total}")));
    }
    let mut sizes: Vec<usize> = ratios.iter().map(|r| (n as f64 * r + 1e-9).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    sizes[0] += n.saturating_sub(assigned);
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::config(format!(
            "split {i} of {n} samples with ratios {ratios:?} would be empty"
        )));
    }
    Ok(sizes)
}

/// Seeded shuffle followed by contiguous slicing. Parts are tagged train,
/// validation, test in order.
pub fn split<D: Dataset>(dataset: &D, ratios: &[f64], seed: u64) -> Result<Vec<D>> {
    let n = dataset.len();
    let sizes = split_sizes(n, ratios)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tags = [SplitTag::Train, SplitTag::Validation, SplitTag::Test];
    let mut start = 0;
    sizes
        .iter()
        .zip(tags)
        .map(|(&size, tag)| {
            let part = dataset.select(&order[start..start + size], tag);
            start += size;
            part
        })
        .collect()
}

/// Index lists of the mini-batches of one epoch. The order depends only on
/// `(seed, epoch)`; the final short batch is kept.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    if n == 0 {
        return Err(Error::config("cannot batch an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub fn batches<'a, D: Dataset>(
    dataset: &'a D,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<impl Iterator<Item = Result<Batch>> + 'a> {
    let plan = batch_indices(dataset.len(), batch_size, seed, epoch)?;
    Ok(plan.into_iter().map(move |idx| dataset.batch(&idx)))
}

/// Minimum standard deviation used when standardizing.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-cell `(x − mean) / std`, or the identity when disabled.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<T = f32> {
    stats: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Element> Default for Standardizer<T> {
    fn default() -> Self {
        Self::disabled()
    }
}

impl<T: Element> Standardizer<T> {
    pub fn disabled() -> Self {
        Standardizer { stats: None }
    }

    /// Per-cell statistics over the leading (sample) axis.
    pub fn fit(samples: &Tensor<T>) -> Result<Self> {
        if samples.ndim() < 2 {
            return Err(Error::dim("standardizer fit", "[n, ...]", samples.shape()));
        }
        let n = samples.dim(0);
        let cells = samples.sample_len();
        let mut sum = vec![0.0f64; cells];
        for row in samples.data().chunks_exact(cells) {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v.to_f64().unwrap();
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0f64; cells];
        for row in samples.data().chunks_exact(cells) {
            for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v.to_f64().unwrap() - m;
                *acc += d * d;
            }
        }
        let shape = samples.sample_shape().to_vec();
        let mean_t = Tensor::new(shape.clone(), mean.iter().map(|&m| T::from_f64_lossy(m)).collect())?;
        let std_t = Tensor::new(
            shape,
            var.iter().map(|&v| T::from_f64_lossy((v / n as f64).sqrt().max(STD_FLOOR))).collect(),
        )?;
        Ok(Standardizer { stats: Some((mean_t, std_t)) })
    }

    /// Restores a fitted standardizer; stds are floored.
    pub fn from_stats(mean: Tensor<T>, std: Tensor<T>) -> Result<Self> {
        if mean.shape() != std.shape() {
            return Err(Error::dim("standardizer statistics", mean.shape(), std.shape()));
        }
        let floor = T::from_f64_lossy(STD_FLOOR);
        let std = std.map(|s| if s > floor { s } else { floor });
        Ok(Standardizer { stats: Some((mean, std)) })
    }

    pub fn enabled(&self) -> bool {
        self.stats.is_some()
    }

    /// `(mean, std)` when enabled.
    pub fn stats(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        self.stats.as_ref().map(|(m, s)| (m, s))
    }

    fn each(&self, x: &Tensor<T>, f: impl Fn(T, T, T) -> T) -> Result<Tensor<T>> {
        let Some((mean, std)) = &self.stats else {
            return Ok(x.clone());
        };
        if x.ndim() < 2 || x.sample_shape() != mean.shape() {
            return Err(Error::dim("standardizer input", format!("[batch, {:?}]", mean.shape()), x.shape()));
        }
        let cells = mean.len();
        let mut out = x.clone();
        for row in out.data_mut().chunks_exact_mut(cells) {
            for ((v, &m), &s) in row.iter_mut().zip(mean.data()).zip(std.data()) {
                *v = f(*v, m, s);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.each(x, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.each(x, |v, m, s| v * s + m)
    }

    pub fn cast<U: Element>(&self) -> Standardizer<U> {
        Standardizer { stats: self.stats.as_ref().map(|(m, s)| (m.cast(), s.cast())) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> LabeledDataset {
        let f = Tensor::from_fn(vec![n, 2, 2], |i| i as f32).unwrap();
        let p = Tensor::from_fn(vec![n, 3], |i| (i / 3) as f32).unwrap();
        LabeledDataset::new(f, p).unwrap()
    }

    #[test]
    fn averaging_examples() {
        let raw = Tensor::new(vec![1, 1, 1, 5], vec![1.0f64, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let avg = average_measurements(&raw).unwrap();
        assert_eq!(avg.shape(), &[1, 1, 1]);
        assert_eq!(avg.data(), &[3.0]);
        let same = Tensor::from_fn(vec![2, 3, 4, 5], |i| (i / 5) as f64 * 0.25).unwrap();
        let avg = average_measurements(&same).unwrap();
        assert!(avg.data().iter().enumerate().all(|(i, &v)| v == i as f64 * 0.25));
    }

    #[test]
    fn split_size_examples() {
        assert_eq!(split_sizes(10, &[0.8, 0.2]).unwrap(), vec![8, 2]);
        assert_eq!(split_sizes(100, &[0.9, 0.05, 0.05]).unwrap(), vec![90, 5, 5]);
        assert_eq!(split_sizes(7, &[0.5, 0.5]).unwrap(), vec![4, 3]);
        assert!(matches!(split_sizes(3, &[0.9, 0.05, 0.05]), Err(Error::Config(_))));
        assert!(split_sizes(10, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn split_tags_and_determinism() {
        let ds = toy(20);
        let a = split(&ds, &[0.9, 0.05, 0.05], 4).unwrap();
        let b = split(&ds, &[0.9, 0.05, 0.05], 4).unwrap();
        let tags: Vec<_> = a.iter().map(Dataset::tag).collect();
        assert_eq!(tags, vec![SplitTag::Train, SplitTag::Validation, SplitTag::Test]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.provenance(), y.provenance());
        }
        // rows travel with their labels
        for part in &a {
            for (k, &o) in part.provenance().origin.iter().enumerate() {
                assert_eq!(part.positions().row(k), ds.positions().row(o));
            }
        }
    }

    #[test]
    fn nested_split_keeps_original_indices() {
        let ds = toy(30);
        let parts = split(&ds, &[0.5, 0.5], 1).unwrap();
        let inner = split(&parts[0], &[0.8, 0.2], 2).unwrap();
        for part in &inner {
            for o in &part.provenance().origin {
                assert!(parts[0].provenance().origin.contains(o));
            }
        }
    }

    #[test]
    fn batch_examples() {
        let plan = batch_indices(130, 64, 1, 0).unwrap();
        assert_eq!(plan.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 64, 2]);
        assert_eq!(plan, batch_indices(130, 64, 1, 0).unwrap());
        assert_ne!(plan, batch_indices(130, 64, 1, 1).unwrap());
        assert!(batch_indices(0, 4, 0, 0).is_err());
        assert!(batch_indices(4, 0, 0, 0).is_err());

        let ds = toy(5);
        for b in batches(&ds, 1, 9, 3).unwrap() {
            let b = b.unwrap();
            let o = b.origin[0];
            assert_eq!(b.features.data(), ds.features().row(o));
        }
    }

    #[test]
    fn standardizer_examples() {
        let x = Tensor::new(vec![3, 2], vec![1.0f64, 5.0, 2.0, 5.0, 6.0, 5.0]).unwrap();
        let s = Standardizer::fit(&x).unwrap();
        let y = s.apply(&x).unwrap();
        for j in 0..2 {
            let mean: f64 = (0..3).map(|i| y.data()[i * 2 + j]).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-6);
        }
        assert!((0..3).all(|i| y.data()[i * 2 + 1] == 0.0));
        let back = s.invert(&y).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(Standardizer::<f64>::disabled().apply(&x).unwrap(), x);
    }

    #[test]
    fn non_finite_features_rejected() {
        let f = Tensor::new(vec![1, 1, 2], vec![1.0f32, f32::NAN]).unwrap();
        assert!(matches!(UnlabeledDataset::new(f), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 3usize..200, a in 1u32..9, seed in any::<u64>()) {
            let r = a as f64 / 10.0;
            let ratios = [r, 1.0 - r];
            let ds = toy(n);
            if let Ok(parts) = split(&ds, &ratios, seed) {
                let mut all: Vec<usize> = parts.iter().flat_map(|p| p.provenance().origin.clone()).collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn averaging_is_linear(c in -4.0f64..4.0, vals in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let raw = Tensor::new(vec![1, 2, 2, 3], vals).unwrap();
            let lhs = average_measurements(&raw.scale(c)).unwrap();
            let rhs = average_measurements(&raw).unwrap().scale(c);
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
