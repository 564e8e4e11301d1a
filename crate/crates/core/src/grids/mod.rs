//! Dense per-pixel value types: descriptor fields, pointmaps, confidences
//! and pixel correspondence sets.
//!
//! All grids are stored row-major, pixel-major then channel, so the
//! descriptor of pixel `(u, v)` occupies `data[(v * width + u) * dim ..][..dim]`.
//! Grids with zero pixels are rejected everywhere.

mod io;

pub use io::{
    load_confidence_map, load_correspondences, load_descriptor_grid, load_label_grid,
    load_point_map, parse_text_correspondences, save_confidence_map, save_correspondences_binary,
    save_correspondences_text, save_descriptor_grid, save_label_grid, save_point_map,
};

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Tolerance on the per-pixel L2 norm when a grid claims to be normalized.
pub const NORMALIZED_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("non-finite value at pixel {pixel}")]
    NonFinite { pixel: PixelCoord },
    #[error("zero-norm descriptor at pixel {pixel}")]
    ZeroNorm { pixel: PixelCoord },
    #[error("descriptor at pixel {pixel} has norm {norm}, but the grid is flagged normalized")]
    NotNormalized { pixel: PixelCoord, norm: f64 },
    #[error("non-positive confidence {value} at pixel {pixel}")]
    NonPositiveConfidence { pixel: PixelCoord, value: f32 },
    #[error("empty grid ({height}x{width}x{dim})")]
    Empty {
        height: usize,
        width: usize,
        dim: usize,
    },
    #[error("data length {found} does not match shape (expected {expected})")]
    LengthMismatch { expected: usize, found: usize },
    #[error("pixel {pixel} appears twice on side {side} of the correspondence set")]
    DuplicatePixel { side: u8, pixel: PixelCoord },
    #[error("pixel {pixel} outside {width}x{height} grid")]
    OutOfBounds {
        pixel: PixelCoord,
        width: usize,
        height: usize,
    },
    #[error("correspondence flags length {flags} does not match {pairs} pairs")]
    FlagsMismatch { pairs: usize, flags: usize },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type GridResult<T> = Result<T, GridError>;

/// A pixel position: `u` is the column, `v` the row, both zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelCoord {
    pub u: u32,
    pub v: u32,
}

impl PixelCoord {
    pub const fn new(u: u32, v: u32) -> Self {
        Self { u, v }
    }

    pub fn from_linear(index: usize, width: usize) -> Self {
        Self {
            u: (index % width) as u32,
            v: (index / width) as u32,
        }
    }

    /// Row-major linear index `v * width + u`.
    pub fn linear(self, width: usize) -> usize {
        self.v as usize * width + self.u as usize
    }

    pub fn in_bounds(self, width: usize, height: usize) -> bool {
        (self.u as usize) < width && (self.v as usize) < height
    }
}

impl fmt::Display for PixelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// Width and height of a pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSize {
    pub width: usize,
    pub height: usize,
}

impl GridSize {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn pixels(self) -> usize {
        self.width * self.height
    }
}

fn check_shape(height: usize, width: usize, dim: usize, len: usize) -> GridResult<()> {
    if height == 0 || width == 0 || dim == 0 {
        return Err(GridError::Empty { height, width, dim });
    }
    let expected = height * width * dim;
    if len != expected {
        return Err(GridError::LengthMismatch {
            expected,
            found: len,
        });
    }
    Ok(())
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Dense `H x W x d` descriptor field.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl DescriptorGrid {
    /// Builds an unnormalized grid, checking shape and finiteness.
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f32>) -> GridResult<Self> {
        Self::from_parts(height, width, dim, data, false)
    }

    /// Builds a grid; when `normalized` is set every descriptor must have
    /// unit norm within [`NORMALIZED_TOLERANCE`].
    pub fn from_parts(
        height: usize,
        width: usize,
        dim: usize,
        data: Vec<f32>,
        normalized: bool,
    ) -> GridResult<Self> {
        check_shape(height, width, dim, data.len())?;
        let grid = Self {
            height,
            width,
            dim,
            data,
            normalized,
        };
        for (idx, desc) in grid.data.chunks_exact(dim).enumerate() {
            if desc.iter().any(|x| !x.is_finite()) {
                return Err(GridError::NonFinite {
                    pixel: PixelCoord::from_linear(idx, width),
                });
            }
            if normalized {
                let norm = l2_norm(desc);
                if (norm - 1.0).abs() > NORMALIZED_TOLERANCE {
                    return Err(GridError::NotNormalized {
                        pixel: PixelCoord::from_linear(idx, width),
                        norm,
                    });
                }
            }
        }
        Ok(grid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> GridSize {
        GridSize::new(self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn descriptor(&self, pixel: PixelCoord) -> &[f32] {
        self.descriptor_at(pixel.linear(self.width))
    }

    pub fn descriptor_at(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn contains(&self, pixel: PixelCoord) -> bool {
        pixel.in_bounds(self.width, self.height)
    }

    /// Returns a copy where every descriptor has unit L2 norm.
    pub fn normalized(&self) -> GridResult<Self> {
        normalize_descriptors(self)
    }
}

/// Scales every descriptor to unit L2 norm.
///
/// Norms are computed in f64; already-unit descriptors come back unchanged
/// up to one rounding of the division.
pub fn normalize_descriptors(grid: &DescriptorGrid) -> GridResult<DescriptorGrid> {
    let dim = grid.dim;
    let mut data = Vec::with_capacity(grid.data.len());
    for (idx, desc) in grid.data.chunks_exact(dim).enumerate() {
        let norm = l2_norm(desc);
        if norm == 0.0 || !norm.is_finite() {
            return Err(GridError::ZeroNorm {
                pixel: PixelCoord::from_linear(idx, grid.width),
            });
        }
        data.extend(desc.iter().map(|&x| (x as f64 / norm) as f32));
    }
    Ok(DescriptorGrid {
        height: grid.height,
        width: grid.width,
        dim,
        data,
        normalized: true,
    })
}

/// Dense 3D points with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    height: usize,
    width: usize,
    points: Vec<[f32; 3]>,
    valid: Vec<bool>,
}

impl PointMap {
    pub fn new(
        height: usize,
        width: usize,
        points: Vec<[f32; 3]>,
        valid: Vec<bool>,
    ) -> GridResult<Self> {
        check_shape(height, width, 1, points.len())?;
        if valid.len() != points.len() {
            return Err(GridError::LengthMismatch {
                expected: points.len(),
                found: valid.len(),
            });
        }
        for (idx, (p, &ok)) in points.iter().zip(&valid).enumerate() {
            if ok && p.iter().any(|x| !x.is_finite()) {
                return Err(GridError::NonFinite {
                    pixel: PixelCoord::from_linear(idx, width),
                });
            }
        }
        Ok(Self {
            height,
            width,
            points,
            valid,
        })
    }

    /// A pointmap with every pixel valid.
    pub fn all_valid(height: usize, width: usize, points: Vec<[f32; 3]>) -> GridResult<Self> {
        let valid = vec![true; points.len()];
        Self::new(height, width, points, valid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> GridSize {
        GridSize::new(self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn point(&self, pixel: PixelCoord) -> Option<[f32; 3]> {
        let idx = pixel.linear(self.width);
        self.valid[idx].then(|| self.points[idx])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Multiplies every point by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            points: self
                .points
                .iter()
                .map(|p| [p[0] * factor, p[1] * factor, p[2] * factor])
                .collect(),
            valid: self.valid.clone(),
        }
    }
}

/// Strictly positive per-pixel confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ConfidenceMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> GridResult<Self> {
        check_shape(height, width, 1, values.len())?;
        for (idx, &c) in values.iter().enumerate() {
            let pixel = PixelCoord::from_linear(idx, width);
            if !c.is_finite() {
                return Err(GridError::NonFinite { pixel });
            }
            if c <= 0.0 {
                return Err(GridError::NonPositiveConfidence { pixel, value: c });
            }
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn constant(height: usize, width: usize, value: f32) -> GridResult<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> GridSize {
        GridSize::new(self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// A pixel pair `(pixel in image 1, pixel in image 2)`.
pub type PixelPair = (PixelCoord, PixelCoord);

/// A partial bijection between the pixels of two grids.
///
/// Sets built for training may carry padding pairs flagged as false; only the
/// unflagged pairs have to respect the bijection.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorrespondenceSet {
    pairs: Vec<PixelPair>,
    false_padding: Option<Vec<bool>>,
}

impl CorrespondenceSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a set without flags, rejecting any pixel used twice on either side.
    pub fn new(pairs: Vec<PixelPair>) -> GridResult<Self> {
        check_bijection(pairs.iter())?;
        Ok(Self {
            pairs,
            false_padding: None,
        })
    }

    /// Builds a set where `false_padding[n]` marks pair `n` as a padding pair.
    pub fn with_padding(pairs: Vec<PixelPair>, false_padding: Vec<bool>) -> GridResult<Self> {
        if pairs.len() != false_padding.len() {
            return Err(GridError::FlagsMismatch {
                pairs: pairs.len(),
                flags: false_padding.len(),
            });
        }
        check_bijection(
            pairs
                .iter()
                .zip(&false_padding)
                .filter(|(_, &pad)| !pad)
                .map(|(p, _)| p),
        )?;
        Ok(Self {
            pairs,
            false_padding: Some(false_padding),
        })
    }

    /// Keeps the first occurrence of every pixel on both sides and drops
    /// later pairs that would break the bijection.
    pub fn from_pairs_first_wins(pairs: impl IntoIterator<Item = PixelPair>) -> Self {
        let mut seen1 = HashSet::new();
        let mut seen2 = HashSet::new();
        let pairs = pairs
            .into_iter()
            .filter(|&(a, b)| {
                if seen1.contains(&a) || seen2.contains(&b) {
                    return false;
                }
                seen1.insert(a);
                seen2.insert(b);
                true
            })
            .collect();
        Self {
            pairs,
            false_padding: None,
        }
    }

    pub fn pairs(&self) -> &[PixelPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn flags(&self) -> Option<&[bool]> {
        self.false_padding.as_deref()
    }

    pub fn is_false_padding(&self, index: usize) -> bool {
        self.false_padding.as_ref().is_some_and(|f| f[index])
    }

    /// Pairs that are not padding.
    pub fn true_pairs(&self) -> impl Iterator<Item = &PixelPair> + '_ {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(n, _)| !self.is_false_padding(*n))
            .map(|(_, p)| p)
    }

    pub fn true_count(&self) -> usize {
        self.true_pairs().count()
    }

    pub fn contains(&self, pair: &PixelPair) -> bool {
        self.pairs.contains(pair)
    }

    /// Pairs sorted by `(pixel 1, pixel 2)` in row-major order.
    pub fn sorted_pairs(&self) -> Vec<PixelPair> {
        let mut out = self.pairs.clone();
        out.sort_by_key(|(a, b)| ((a.v, a.u), (b.v, b.u)));
        out
    }

    pub fn check_bounds(&self, size1: GridSize, size2: GridSize) -> GridResult<()> {
        for &(a, b) in &self.pairs {
            for (p, s) in [(a, size1), (b, size2)] {
                if !p.in_bounds(s.width, s.height) {
                    return Err(GridError::OutOfBounds {
                        pixel: p,
                        width: s.width,
                        height: s.height,
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_bijection<'a>(pairs: impl Iterator<Item = &'a PixelPair>) -> GridResult<()> {
    let mut seen1 = HashSet::new();
    let mut seen2 = HashSet::new();
    for &(a, b) in pairs {
        if !seen1.insert(a) {
            return Err(GridError::DuplicatePixel { side: 1, pixel: a });
        }
        if !seen2.insert(b) {
            return Err(GridError::DuplicatePixel { side: 2, pixel: b });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(u: u32, v: u32) -> PixelCoord {
        PixelCoord::new(u, v)
    }

    #[test]
    fn normalize_three_four_five() {
        let g = DescriptorGrid::new(1, 1, 2, vec![3.0, 4.0]).unwrap();
        let n = normalize_descriptors(&g).unwrap();
        assert!(n.is_normalized());
        assert!((n.data()[0] - 0.6).abs() < 1e-6);
        assert!((n.data()[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn normalize_is_idempotent() {
        let g = DescriptorGrid::new(1, 3, 2, vec![0.6, 0.8, 1.0, 0.0, -0.28, 0.96]).unwrap();
        let once = normalize_descriptors(&g).unwrap();
        let twice = normalize_descriptors(&once).unwrap();
        for ((a, b), c) in g.data().iter().zip(once.data()).zip(twice.data()) {
            assert!((a - b).abs() < 1e-6);
            assert!((b - c).abs() < 1e-6);
        }
    }

    #[test]
    fn normalize_rejects_zero_descriptor() {
        let g = DescriptorGrid::new(1, 2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        match normalize_descriptors(&g) {
            Err(GridError::ZeroNorm { pixel }) => assert_eq!(pixel, p(1, 0)),
            other => panic!("expected zero-norm error, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_nan_grids_are_rejected() {
        assert!(matches!(
            DescriptorGrid::new(0, 0, 3, vec![]),
            Err(GridError::Empty { .. })
        ));
        match DescriptorGrid::new(1, 2, 1, vec![0.0, f32::NAN]) {
            Err(GridError::NonFinite { pixel }) => assert_eq!(pixel, p(1, 0)),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn normalized_flag_is_checked() {
        assert!(matches!(
            DescriptorGrid::from_parts(1, 1, 2, vec![1.0, 1.0], true),
            Err(GridError::NotNormalized { .. })
        ));
    }

    #[test]
    fn confidence_must_be_positive() {
        assert!(matches!(
            ConfidenceMap::new(1, 2, vec![1.0, 0.0]),
            Err(GridError::NonPositiveConfidence { .. })
        ));
    }

    #[test]
    fn correspondence_bijection_is_enforced() {
        assert!(CorrespondenceSet::new(vec![(p(0, 0), p(1, 1)), (p(1, 0), p(0, 1))]).is_ok());
        assert!(matches!(
            CorrespondenceSet::new(vec![(p(0, 0), p(1, 1)), (p(0, 0), p(0, 1))]),
            Err(GridError::DuplicatePixel { side: 1, .. })
        ));
        assert!(matches!(
            CorrespondenceSet::new(vec![(p(0, 0), p(1, 1)), (p(1, 0), p(1, 1))]),
            Err(GridError::DuplicatePixel { side: 2, .. })
        ));
    }

    #[test]
    fn padding_pairs_are_exempt_from_bijection() {
        let pairs = vec![(p(0, 0), p(1, 1)), (p(0, 0), p(0, 1)), (p(0, 0), p(0, 0))];
        let set = CorrespondenceSet::with_padding(pairs.clone(), vec![false, true, true]).unwrap();
        assert_eq!(set.true_count(), 1);
        assert!(CorrespondenceSet::with_padding(pairs, vec![false, false, true]).is_err());
    }

    #[test]
    fn first_wins_drops_conflicts() {
        let set = CorrespondenceSet::from_pairs_first_wins(vec![
            (p(0, 0), p(0, 0)),
            (p(0, 0), p(1, 0)),
            (p(1, 0), p(0, 0)),
            (p(1, 0), p(1, 0)),
        ]);
        assert_eq!(set.pairs(), &[(p(0, 0), p(0, 0)), (p(1, 0), p(1, 0))]);
    }
}
