//! Forward evaluation of the training objectives: pointmap regression with
//! confidence weighting, the bidirectional InfoNCE matching loss, and the
//! ground-truth correspondence sampler that feeds it.
//!
//! Nothing here computes gradients.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grids::{
    ConfidenceMap, CorrespondenceSet, DescriptorGrid, GridSize, PixelCoord, PixelPair, PointMap,
};
use crate::nn_index::{squared_distance, Backend, IndexError, NnIndex};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_TAU: f64 = 0.07;
/// Correspondences per image pair fed to the matching loss.
pub const DEFAULT_SAMPLE_COUNT: usize = 4096;
/// Reciprocal 3D neighbours farther apart than this times the ground-truth
/// normalizer are not ground-truth correspondences.
pub const DEFAULT_GT_EPSILON: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(GridSize, GridSize),
    #[error("no pixel is valid in both pointmaps")]
    NoValidPixels,
    #[error("correspondence set is empty")]
    EmptyPairs,
    #[error("pair pixel {pixel} outside the {width}x{height} grid")]
    OutOfBounds {
        pixel: PixelCoord,
        width: usize,
        height: usize,
    },
    #[error("descriptor dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("every pixel pair is a true correspondence, no padding pair exists")]
    NoPaddingAvailable,
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub type LossResult<T> = Result<T, LossError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the `-log C` confidence regularizer.
    pub alpha: f64,
    /// Weight of the matching loss in the total.
    pub beta: f64,
    /// InfoNCE temperature.
    pub tau: f64,
    /// Tie the prediction normalizer to the ground truth one.
    pub metric_mode: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            tau: DEFAULT_TAU,
            metric_mode: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> LossResult<()> {
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(LossError::InvalidConfig(format!("alpha = {}", self.alpha)));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(LossError::InvalidConfig(format!("beta = {}", self.beta)));
        }
        if self.tau.is_nan() || self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(LossError::InvalidConfig(format!("tau = {}", self.tau)));
        }
        Ok(())
    }
}

/// Normalizers used by the regression loss: mean distance of the valid
/// points to the origin, for the prediction (`z`) and the ground truth
/// (`z_gt`). In metric mode `z` equals `z_gt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationReport {
    pub z: f64,
    pub z_gt: f64,
}

/// Per-pixel regression losses; pixels without a value are excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelLosses {
    size: GridSize,
    values: Vec<Option<f64>>,
}

impl PixelLosses {
    pub fn new(size: GridSize, values: Vec<Option<f64>>) -> Self {
        assert_eq!(values.len(), size.pixels());
        Self { size, values }
    }

    pub fn size(&self) -> GridSize {
        self.size
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }

    pub fn sum(&self) -> f64 {
        self.valid().sum()
    }
}

fn norm3(p: &[f32; 3]) -> f64 {
    p.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}

fn joint_valid<'a>(pred: &'a PointMap, gt: &'a PointMap) -> impl Iterator<Item = usize> + 'a {
    (0..gt.len()).filter(|&i| pred.valid()[i] && gt.valid()[i])
}

/// Regression loss of one view. See [`regression_loss_views`].
pub fn regression_loss(
    pred: &PointMap,
    gt: &PointMap,
    metric_mode: bool,
) -> LossResult<(PixelLosses, NormalizationReport)> {
    let (mut losses, report) = regression_loss_views(&[(pred, gt)], metric_mode)?;
    Ok((losses.remove(0), report))
}

/// Regression loss over several views sharing one pair of normalizers.
///
/// Each jointly valid pixel gets `|| pred / z - gt / z_gt ||`, where the
/// normalizers are mean distances to the origin over all jointly valid
/// pixels of all views, and `z = z_gt` in metric mode.
pub fn regression_loss_views(
    views: &[(&PointMap, &PointMap)],
    metric_mode: bool,
) -> LossResult<(Vec<PixelLosses>, NormalizationReport)> {
    let (mut sum_pred, mut sum_gt, mut count) = (0.0, 0.0, 0usize);
    for (pred, gt) in views {
        if pred.size() != gt.size() {
            return Err(LossError::ShapeMismatch(pred.size(), gt.size()));
        }
        for i in joint_valid(pred, gt) {
            sum_pred += norm3(&pred.points()[i]);
            sum_gt += norm3(&gt.points()[i]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(LossError::NoValidPixels);
    }
    let z_gt = sum_gt / count as f64;
    let z = if metric_mode {
        z_gt
    } else {
        sum_pred / count as f64
    };
    let losses = views
        .iter()
        .map(|(pred, gt)| {
            let mut values = vec![None; gt.len()];
            for i in joint_valid(pred, gt) {
                let (p, g) = (&pred.points()[i], &gt.points()[i]);
                let d: f64 = (0..3)
                    .map(|k| (p[k] as f64 / z - g[k] as f64 / z_gt).powi(2))
                    .sum();
                values[i] = Some(d.sqrt());
            }
            PixelLosses::new(gt.size(), values)
        })
        .collect();
    Ok((losses, NormalizationReport { z, z_gt }))
}

/// `sum_i C_i * l_i - alpha * log C_i` over the pixels that carry a loss.
pub fn confidence_loss(losses: &PixelLosses, conf: &ConfidenceMap, alpha: f64) -> LossResult<f64> {
    if losses.size() != conf.size() {
        return Err(LossError::ShapeMismatch(losses.size(), conf.size()));
    }
    Ok(losses
        .values()
        .iter()
        .zip(conf.values())
        .filter_map(|(l, &c)| l.map(|l| c as f64 * l - alpha * (c as f64).ln()))
        .sum())
}

/// Reciprocal nearest neighbours between two ground-truth pointmaps whose
/// distance is at most `epsilon` times the joint ground-truth normalizer.
pub fn gt_correspondences_from_pointmaps(
    gt1: &PointMap,
    gt2: &PointMap,
    epsilon: f64,
) -> LossResult<CorrespondenceSet> {
    if gt1.valid_count() == 0 || gt2.valid_count() == 0 {
        return Ok(CorrespondenceSet::empty());
    }
    let valid_norms = |m: &PointMap| -> (f64, usize) {
        m.points()
            .iter()
            .zip(m.valid())
            .filter(|(_, &v)| v)
            .fold((0.0, 0), |(s, n), (p, _)| (s + norm3(p), n + 1))
    };
    let (s1, n1) = valid_norms(gt1);
    let (s2, n2) = valid_norms(gt2);
    let z_gt = (s1 + s2) / (n1 + n2) as f64;
    let max_sq = (epsilon * z_gt).powi(2);

    let to2 = NnIndex::from_point_map(gt2, Backend::KdTree)?;
    let to1 = NnIndex::from_point_map(gt1, Backend::KdTree)?;
    let valid1: Vec<usize> = (0..gt1.len()).filter(|&i| gt1.valid()[i]).collect();
    let nn12 = to2.nearest_many(valid1.len(), |n| &gt1.points()[valid1[n]][..]);
    let targets: BTreeSet<u32> = nn12.iter().copied().collect();
    let targets: Vec<u32> = targets.into_iter().collect();
    let back = to1.nearest_many(targets.len(), |n| &gt2.points()[targets[n] as usize][..]);

    let mut pairs = Vec::new();
    for (&i, &j) in valid1.iter().zip(&nn12) {
        let t = targets.binary_search(&j).unwrap();
        if back[t] as usize != i {
            continue;
        }
        if squared_distance(&gt1.points()[i], &gt2.points()[j as usize]) <= max_sq {
            pairs.push((
                PixelCoord::from_linear(i, gt1.width()),
                PixelCoord::from_linear(j as usize, gt2.width()),
            ));
        }
    }
    Ok(CorrespondenceSet::new(pairs).expect("reciprocal pairs form a bijection"))
}

/// Exactly `n` pairs for the matching loss: `min(n, |gt|)` true pairs drawn
/// uniformly without replacement, then random pixel pairs flagged as
/// padding until the count is reached. Padding never equals a true pair.
pub fn sample_training_correspondences(
    gt: &CorrespondenceSet,
    n: usize,
    rng_seed: u64,
    size1: GridSize,
    size2: GridSize,
) -> LossResult<CorrespondenceSet> {
    let truth: Vec<PixelPair> = gt.true_pairs().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pairs: Vec<PixelPair> = if truth.len() <= n {
        truth.clone()
    } else {
        let mut chosen = index::sample(&mut rng, truth.len(), n).into_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|k| truth[k]).collect()
    };
    let true_count = pairs.len();
    if true_count < n {
        let forbidden: HashSet<PixelPair> = truth.iter().copied().collect();
        if (size1.pixels() * size2.pixels()) <= forbidden.len() {
            return Err(LossError::NoPaddingAvailable);
        }
        while pairs.len() < n {
            let a = PixelCoord::new(
                rng.random_range(0..size1.width as u32),
                rng.random_range(0..size1.height as u32),
            );
            let b = PixelCoord::new(
                rng.random_range(0..size2.width as u32),
                rng.random_range(0..size2.height as u32),
            );
            if !forbidden.contains(&(a, b)) {
                pairs.push((a, b));
            }
        }
    }
    let mut flags = vec![false; true_count];
    flags.resize(pairs.len(), true);
    Ok(CorrespondenceSet::with_padding(pairs, flags).expect("true pairs come from a bijection"))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Bidirectional InfoNCE over the pairs' candidate pools.
///
/// The pools hold every distinct image-1 (resp. image-2) pixel referenced by
/// any pair, padding included; only unflagged pairs contribute positive
/// terms. Logits are `D1_i . D2_j / tau`; the result is summed over pairs.
pub fn matching_loss(
    d1: &DescriptorGrid,
    d2: &DescriptorGrid,
    pairs: &CorrespondenceSet,
    tau: f64,
) -> LossResult<f64> {
    if pairs.is_empty() {
        return Err(LossError::EmptyPairs);
    }
    if d1.dim() != d2.dim() {
        return Err(LossError::DimensionMismatch(d1.dim(), d2.dim()));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(LossError::InvalidConfig(format!("tau = {tau}")));
    }
    pairs
        .check_bounds(d1.size(), d2.size())
        .map_err(|_| {
            let &(a, b) = pairs
                .pairs()
                .iter()
                .find(|(a, b)| !d1.contains(*a) || !d2.contains(*b))
                .unwrap();
            let (pixel, g) = if d1.contains(a) { (b, d2) } else { (a, d1) };
            LossError::OutOfBounds {
                pixel,
                width: g.width(),
                height: g.height(),
            }
        })?;
    let pool1: BTreeSet<PixelCoord> = pairs.pairs().iter().map(|p| p.0).collect();
    let pool2: BTreeSet<PixelCoord> = pairs.pairs().iter().map(|p| p.1).collect();
    let logit = |a: PixelCoord, b: PixelCoord| dot(d1.descriptor(a), d2.descriptor(b)) / tau;
    let mut total = 0.0;
    for &(i, j) in pairs.true_pairs() {
        let s = logit(i, j);
        let col = log_sum_exp(pool1.iter().map(|&k| logit(k, j)));
        let row = log_sum_exp(pool2.iter().map(|&k| logit(i, k)));
        total += (col - s).max(0.0) + (row - s).max(0.0);
    }
    Ok(total)
}

/// `conf + beta * matching`.
pub fn total_loss(conf_loss: f64, match_loss: f64, beta: f64) -> f64 {
    conf_loss + beta * match_loss
}
