//! Reciprocal (mutual nearest neighbour) matching between two descriptor
//! grids.
//!
//! [`full_reciprocal_matches`] scans every pixel of both grids and is the
//! reference for everything else. [`fast_reciprocal_matches`] walks the
//! nearest-neighbour graph from a sparse seed grid and only pays for the
//! pixels it visits. [`compute_basins`] labels every pixel of image 1 with the
//! reciprocal pair its walk ends in.

mod basins;
mod fast;
mod subsample;

pub use basins::{basins_from_graph, compute_basins, BasinMap};
pub use fast::{
    fast_reciprocal_matches, fast_reciprocal_matches_from_seeds, FastMatchConfig, MatchRunStats,
};
pub use subsample::{basin_biased_subsample, coverage_ellipse_area, naive_subsample};

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::grids::{CorrespondenceSet, DescriptorGrid, GridError, GridSize, PixelCoord};
use crate::nn_index::{Backend, IndexError, NnIndex};

/// Number of seeds used when the caller does not choose one.
pub const DEFAULT_K: usize = 3000;
/// Iteration cap of the fast walk when the caller does not choose one.
pub const DEFAULT_MAX_ITERS: usize = 10;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("descriptor dimensions differ: {d1} vs {d2}")]
    DimensionMismatch { d1: usize, d2: usize },
    #[error("descriptor grid {side} is not normalized")]
    NotNormalized { side: u8 },
    #[error("seed count {k} outside 1..={pixels}")]
    SeedCount { k: usize, pixels: usize },
    #[error("max_iters must be at least 1")]
    ZeroIterations,
    #[error("seed {pixel} outside the {width}x{height} grid")]
    SeedOutOfBounds {
        pixel: PixelCoord,
        width: usize,
        height: usize,
    },
    #[error("pair {0:?} is not the root of any basin")]
    NotABasinRoot((PixelCoord, PixelCoord)),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub type MatchResult<T> = Result<T, MatchError>;

pub(crate) fn check_pair(d1: &DescriptorGrid, d2: &DescriptorGrid) -> MatchResult<()> {
    if d1.dim() != d2.dim() {
        return Err(MatchError::DimensionMismatch {
            d1: d1.dim(),
            d2: d2.dim(),
        });
    }
    for (side, g) in [(1, d1), (2, d2)] {
        if !g.is_normalized() {
            return Err(MatchError::NotNormalized { side });
        }
    }
    Ok(())
}

/// Nearest-neighbour indices over both grids: `to_image2` answers queries
/// with image-1 descriptors, `to_image1` the other way round.
pub struct IndexPair {
    pub to_image2: NnIndex,
    pub to_image1: NnIndex,
}

impl IndexPair {
    pub fn build(d1: &DescriptorGrid, d2: &DescriptorGrid) -> MatchResult<Self> {
        check_pair(d1, d2)?;
        let backend = Backend::auto(d1.dim());
        Ok(Self {
            to_image2: NnIndex::from_descriptors(d2, backend)?,
            to_image1: NnIndex::from_descriptors(d1, backend)?,
        })
    }
}

/// The complete bipartite nearest-neighbour graph: every pixel has exactly
/// one outgoing edge to its nearest neighbour in the other image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NnGraph {
    size1: GridSize,
    size2: GridSize,
    nn12: Vec<u32>,
    nn21: Vec<u32>,
}

impl NnGraph {
    pub fn build(d1: &DescriptorGrid, d2: &DescriptorGrid) -> MatchResult<Self> {
        let indices = IndexPair::build(d1, d2)?;
        Ok(Self::from_indices(d1, d2, &indices))
    }

    pub fn from_indices(d1: &DescriptorGrid, d2: &DescriptorGrid, indices: &IndexPair) -> Self {
        let nn12 = indices
            .to_image2
            .nearest_many(d1.len(), |i| d1.descriptor_at(i));
        let nn21 = indices
            .to_image1
            .nearest_many(d2.len(), |j| d2.descriptor_at(j));
        Self {
            size1: d1.size(),
            size2: d2.size(),
            nn12,
            nn21,
        }
    }

    pub fn size1(&self) -> GridSize {
        self.size1
    }

    pub fn size2(&self) -> GridSize {
        self.size2
    }

    /// Linear index in image 2 of the nearest neighbour of each image-1 pixel.
    pub fn nn12(&self) -> &[u32] {
        &self.nn12
    }

    /// Linear index in image 1 of the nearest neighbour of each image-2 pixel.
    pub fn nn21(&self) -> &[u32] {
        &self.nn21
    }

    pub fn is_reciprocal(&self, i: usize, j: usize) -> bool {
        self.nn12[i] as usize == j && self.nn21[j] as usize == i
    }

    /// All reciprocal pairs, ordered by the image-1 pixel.
    pub fn reciprocal_pairs(&self) -> CorrespondenceSet {
        let pairs = self
            .nn12
            .iter()
            .enumerate()
            .filter(|&(i, &j)| self.nn21[j as usize] as usize == i)
            .map(|(i, &j)| {
                (
                    PixelCoord::from_linear(i, self.size1.width),
                    PixelCoord::from_linear(j as usize, self.size2.width),
                )
            })
            .collect();
        CorrespondenceSet::new(pairs).expect("reciprocal pairs form a bijection")
    }
}

/// Timing of a full reciprocal match.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullMatchTiming {
    pub build: Duration,
    pub search: Duration,
}

/// Every mutual nearest-neighbour pair between the two grids.
pub fn full_reciprocal_matches(
    d1: &DescriptorGrid,
    d2: &DescriptorGrid,
) -> MatchResult<CorrespondenceSet> {
    full_reciprocal_matches_timed(d1, d2).map(|(set, _)| set)
}

pub fn full_reciprocal_matches_timed(
    d1: &DescriptorGrid,
    d2: &DescriptorGrid,
) -> MatchResult<(CorrespondenceSet, FullMatchTiming)> {
    let start = Instant::now();
    let indices = IndexPair::build(d1, d2)?;
    let build = start.elapsed();
    let graph = NnGraph::from_indices(d1, d2, &indices);
    let set = graph.reciprocal_pairs();
    Ok((
        set,
        FullMatchTiming {
            build,
            search: start.elapsed() - build,
        },
    ))
}

/// Initial pixels of the fast walk, all in image 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    pixels: Vec<PixelCoord>,
    k: usize,
}

impl SeedSet {
    /// Seeds given explicitly; they must be distinct, in bounds, and no more than `k`.
    pub fn new(pixels: Vec<PixelCoord>, k: usize, size: GridSize) -> MatchResult<Self> {
        let mut seen = std::collections::HashSet::new();
        for &p in &pixels {
            if !p.in_bounds(size.width, size.height) {
                return Err(MatchError::SeedOutOfBounds {
                    pixel: p,
                    width: size.width,
                    height: size.height,
                });
            }
            if !seen.insert(p) {
                return Err(MatchError::Grid(GridError::DuplicatePixel { side: 1, pixel: p }));
            }
        }
        if pixels.len() > k {
            return Err(MatchError::SeedCount {
                k: pixels.len(),
                pixels: k,
            });
        }
        Ok(Self { pixels, k })
    }

    pub fn pixels(&self) -> &[PixelCoord] {
        &self.pixels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Regular grid of `k` seeds over an `height x width` image.
///
/// Uses `rows = ceil(sqrt(k * H / W))` and `cols = ceil(k / rows)` cells and
/// takes the pixel under each cell centre, row by row, stopping after `k`.
pub fn seed_grid(height: usize, width: usize, k: usize) -> MatchResult<SeedSet> {
    let pixels = height * width;
    if k == 0 || k > pixels {
        return Err(MatchError::SeedCount { k, pixels });
    }
    let rows = ((k as f64 * height as f64 / width as f64).sqrt().ceil() as usize).clamp(1, height);
    let cols = k.div_ceil(rows).min(width);
    let centre = |cell: usize, cells: usize, extent: usize| {
        ((2 * cell + 1) * extent / (2 * cells)) as u32
    };
    let mut out = Vec::with_capacity(k);
    'outer: for r in 0..rows {
        for c in 0..cols {
            if out.len() == k {
                break 'outer;
            }
            out.push(PixelCoord::new(
                centre(c, cols, width),
                centre(r, rows, height),
            ));
        }
    }
    Ok(SeedSet { pixels: out, k })
}
