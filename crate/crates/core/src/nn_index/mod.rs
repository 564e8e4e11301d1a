//! Exact nearest-neighbour search over the pixels of a grid.
//!
//! Two backends are available. Both return the pixel with the smallest
//! squared L2 distance and break ties by the smallest linear index, so the
//! choice of backend never changes a result. Distances read f32 inputs and
//! accumulate in f64, channel by channel, in the same order everywhere.

mod brute;
mod kdtree;

use rayon::prelude::*;
use thiserror::Error;

use crate::grids::{DescriptorGrid, PixelCoord, PointMap};

use self::brute::BruteForce;
use self::kdtree::KdTree;

/// Largest dimension for which a k-d tree may be built.
pub const KD_TREE_MAX_DIM: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("k-d tree backend requested for dimension {dim} (allowed up to {max})")]
    BackendMismatch { dim: usize, max: usize },
    #[error("query has dimension {found}, index has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot build an index over zero points")]
    Empty,
    #[error("query {index} contains a non-finite value")]
    NonFiniteQuery { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    BruteForce,
    KdTree,
}

impl Backend {
    /// k-d tree for low dimensions, exhaustive scan otherwise.
    pub fn auto(dim: usize) -> Self {
        if dim <= KD_TREE_MAX_DIM {
            Backend::KdTree
        } else {
            Backend::BruteForce
        }
    }
}

enum Storage {
    Brute(BruteForce),
    Kd(KdTree),
}

/// Squared L2 distance with f64 accumulation in channel order.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc
}

/// An immutable exact nearest-neighbour index over grid pixels.
pub struct NnIndex {
    dim: usize,
    width: usize,
    backend: Backend,
    storage: Storage,
}

impl NnIndex {
    /// Indexes every pixel of a descriptor grid.
    pub fn from_descriptors(grid: &DescriptorGrid, backend: Backend) -> Result<Self, IndexError> {
        let ids = (0..grid.len() as u32).collect();
        Self::build(grid.data(), grid.dim(), ids, grid.width(), backend)
    }

    /// Indexes the valid pixels of a pointmap.
    pub fn from_point_map(map: &PointMap, backend: Backend) -> Result<Self, IndexError> {
        let mut flat = Vec::with_capacity(map.valid_count() * 3);
        let mut ids = Vec::with_capacity(map.valid_count());
        for (idx, (p, &ok)) in map.points().iter().zip(map.valid()).enumerate() {
            if ok {
                flat.extend_from_slice(p);
                ids.push(idx as u32);
            }
        }
        Self::build(&flat, 3, ids, map.width(), backend)
    }

    /// Builds an index over `points` (row-major, `dim` values per point) where
    /// point `n` stands for the pixel with linear index `ids[n]`. `ids` must
    /// be strictly increasing.
    pub fn build(
        points: &[f32],
        dim: usize,
        ids: Vec<u32>,
        width: usize,
        backend: Backend,
    ) -> Result<Self, IndexError> {
        if ids.is_empty() || dim == 0 {
            return Err(IndexError::Empty);
        }
        assert_eq!(points.len(), ids.len() * dim, "points/ids length mismatch");
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let storage = match backend {
            Backend::BruteForce => Storage::Brute(BruteForce::new(points, dim, ids)),
            Backend::KdTree => {
                if dim > KD_TREE_MAX_DIM {
                    return Err(IndexError::BackendMismatch {
                        dim,
                        max: KD_TREE_MAX_DIM,
                    });
                }
                Storage::Kd(KdTree::new(points, dim, ids))
            }
        };
        Ok(Self {
            dim,
            width,
            backend,
            storage,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    fn check_query(&self, x: &[f32], index: usize) -> Result<(), IndexError> {
        if x.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFiniteQuery { index });
        }
        Ok(())
    }

    /// Nearest pixel to `x`.
    pub fn query(&self, x: &[f32]) -> Result<PixelCoord, IndexError> {
        self.check_query(x, 0)?;
        Ok(PixelCoord::from_linear(
            self.nearest_linear(x) as usize,
            self.width,
        ))
    }

    /// Linear index of the nearest pixel, without validation.
    pub fn nearest_linear(&self, x: &[f32]) -> u32 {
        match &self.storage {
            Storage::Brute(b) => b.nearest_tile(&[x])[0],
            Storage::Kd(t) => t.nearest(x),
        }
    }

    /// Nearest pixels for a row-major batch of queries (`dim` values each).
    /// Output order follows input order.
    pub fn batch_query(&self, xs: &[f32]) -> Result<Vec<PixelCoord>, IndexError> {
        if !xs.len().is_multiple_of(self.dim) {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: xs.len() % self.dim,
            });
        }
        for (n, x) in xs.chunks_exact(self.dim).enumerate() {
            self.check_query(x, n)?;
        }
        let n = xs.len() / self.dim;
        Ok(self
            .nearest_many(n, |i| &xs[i * self.dim..(i + 1) * self.dim])
            .into_iter()
            .map(|id| PixelCoord::from_linear(id as usize, self.width))
            .collect())
    }

    /// Nearest linear indices for `n` queries produced by `query(i)`.
    ///
    /// Work is split into fixed tiles, so the result does not depend on the
    /// number of threads.
    pub fn nearest_many<'q, F>(&self, n: usize, query: F) -> Vec<u32>
    where
        F: Fn(usize) -> &'q [f32] + Sync,
    {
        const TILE: usize = brute::QUERY_TILE;
        let tiles: Vec<Vec<u32>> = (0..n.div_ceil(TILE))
            .into_par_iter()
            .map(|t| {
                let range = t * TILE..((t + 1) * TILE).min(n);
                match &self.storage {
                    Storage::Brute(b) => {
                        let qs: Vec<&[f32]> = range.map(&query).collect();
                        b.nearest_tile(&qs)
                    }
                    Storage::Kd(tree) => range.map(|i| tree.nearest(query(i))).collect(),
                }
            })
            .collect();
        tiles.concat()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive scan with the documented tie-break.
    fn oracle(points: &[f32], dim: usize, x: &[f32]) -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let d = squared_distance(p, x);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f32> {
        (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn nearest_by_construction() {
        let idx = NnIndex::build(&[1.0, 0.0, 0.0, 1.0], 2, vec![0, 1], 2, Backend::BruteForce)
            .unwrap();
        assert_eq!(idx.query(&[0.9, 0.1]).unwrap(), PixelCoord::new(0, 0));
    }

    #[test]
    fn ties_go_to_smallest_index() {
        for backend in [Backend::BruteForce, Backend::KdTree] {
            let idx = NnIndex::build(&[1.0, 0.0, 1.0, 0.0], 2, vec![0, 1], 2, backend).unwrap();
            assert_eq!(idx.query(&[1.0, 0.0]).unwrap(), PixelCoord::new(0, 0));
        }
    }

    #[test]
    fn kd_tree_rejects_high_dimensions() {
        let pts = vec![0.0; 24 * 4];
        let err = NnIndex::build(&pts, 24, vec![0, 1, 2, 3], 2, Backend::KdTree).err();
        assert_eq!(
            err,
            Some(IndexError::BackendMismatch {
                dim: 24,
                max: KD_TREE_MAX_DIM
            })
        );
        assert!(NnIndex::build(&pts, 24, vec![0, 1, 2, 3], 2, Backend::BruteForce).is_ok());
    }

    #[test]
    fn query_dimension_is_checked() {
        let idx = NnIndex::build(&[0.0; 6], 3, vec![0, 1], 2, Backend::KdTree).unwrap();
        assert!(matches!(
            idx.query(&[0.0, 0.0]),
            Err(IndexError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            idx.query(&[0.0, f32::NAN, 0.0]),
            Err(IndexError::NonFiniteQuery { .. })
        ));
    }

    #[test]
    fn kd_tree_matches_brute_force_in_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(&mut rng, 1500, 3);
        let ids: Vec<u32> = (0..1500).collect();
        let kd = NnIndex::build(&pts, 3, ids.clone(), 50, Backend::KdTree).unwrap();
        let bf = NnIndex::build(&pts, 3, ids, 50, Backend::BruteForce).unwrap();
        for _ in 0..1000 {
            let q: Vec<f32> = (0..3).map(|_| rng.random_range(-1.2f32..1.2)).collect();
            let want = PixelCoord::from_linear(oracle(&pts, 3, &q), 50);
            assert_eq!(kd.query(&q).unwrap(), want);
            assert_eq!(bf.query(&q).unwrap(), want);
        }
    }

    #[test]
    fn brute_force_matches_oracle_in_24d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 256, 24);
        let idx = NnIndex::build(&pts, 24, (0..256).collect(), 16, Backend::BruteForce).unwrap();
        let queries = random_points(&mut rng, 500, 24);
        let batch = idx.batch_query(&queries).unwrap();
        for (q, got) in queries.chunks_exact(24).zip(&batch) {
            let want = PixelCoord::from_linear(oracle(&pts, 24, q), 16);
            assert_eq!(*got, want);
            assert_eq!(idx.query(q).unwrap(), want);
        }
    }

    #[test]
    fn batch_is_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 100, 5);
        let idx = NnIndex::build(&pts, 5, (0..100).collect(), 10, Backend::KdTree).unwrap();
        let queries = random_points(&mut rng, 40, 5);
        let batch = idx.batch_query(&queries).unwrap();
        let single = idx.batch_query(&queries[..5]).unwrap();
        assert_eq!(single[0], batch[0]);
        // reversing the batch reverses the answers
        let reversed: Vec<f32> = queries.chunks_exact(5).rev().flatten().copied().collect();
        let mut back = idx.batch_query(&reversed).unwrap();
        back.reverse();
        assert_eq!(back, batch);
    }

    #[test]
    fn point_map_index_skips_invalid_pixels() {
        let map = PointMap::new(
            1,
            3,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]],
            vec![false, true, true],
        )
        .unwrap();
        for backend in [Backend::BruteForce, Backend::KdTree] {
            let idx = NnIndex::from_point_map(&map, backend).unwrap();
            assert_eq!(idx.query(&[0.0, 0.0, 0.0]).unwrap(), PixelCoord::new(1, 0));
            assert_eq!(idx.query(&[4.0, 0.0, 0.0]).unwrap(), PixelCoord::new(2, 0));
        }
    }
}
