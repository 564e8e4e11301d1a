//! Fast reciprocal matching by walking the nearest-neighbour graph.
//!
//! Each seed `u` in image 1 is mapped to `v = NN2(u)` and back to
//! `u' = NN1(v)`. When `u' == u` the pair `(u, v)` is mutual and the walk is
//! retired. From the second iteration on, the image-2 side is checked too:
//! if `NN2(u)` equals the previous `v`, then `(u, v_prev)` is mutual. Walks
//! still active after `max_iters` iterations are dropped.
//!
//! Nearest neighbours are memoised per pixel, so walks that share a path
//! only pay for it once.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use crate::grids::{CorrespondenceSet, DescriptorGrid, PixelCoord};

use super::{
    seed_grid, IndexPair, MatchError, MatchResult, SeedSet, DEFAULT_K, DEFAULT_MAX_ITERS,
};

const UNKNOWN: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FastMatchConfig {
    pub k: usize,
    pub max_iters: usize,
}

impl Default for FastMatchConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

/// Per-run counters of the fast walk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchRunStats {
    /// `active_counts[t]` walks were active at the start of iteration `t + 1`.
    pub active_counts: Vec<usize>,
    /// Nearest-neighbour queries actually evaluated in each iteration.
    pub nn_queries: Vec<usize>,
    pub iterations_run: usize,
    /// Walks still active when the iteration cap was hit.
    pub dropped_walks: usize,
    /// For every seed, the 1-based iteration in which its walk reached a
    /// mutual pair, or `None` when it was dropped.
    pub seed_resolution: Vec<Option<u32>>,
    pub build_time: Duration,
    pub walk_time: Duration,
}

impl MatchRunStats {
    pub fn total_queries(&self) -> usize {
        self.nn_queries.iter().sum()
    }

    /// Fraction of seeds whose walk converged within `iters` iterations.
    pub fn resolved_fraction_within(&self, iters: u32) -> f64 {
        if self.seed_resolution.is_empty() {
            return 1.0;
        }
        let done = self
            .seed_resolution
            .iter()
            .filter(|r| r.is_some_and(|t| t <= iters))
            .count();
        done as f64 / self.seed_resolution.len() as f64
    }

    pub fn total_time(&self) -> Duration {
        self.build_time + self.walk_time
    }
}

struct Walk {
    seed: usize,
    u: u32,
    v_prev: Option<u32>,
}

/// Fast matching from a regular grid of `k` seeds in image 1.
///
/// `k` larger than the image is clamped to its pixel count.
pub fn fast_reciprocal_matches(
    d1: &DescriptorGrid,
    d2: &DescriptorGrid,
    k: usize,
    max_iters: usize,
) -> MatchResult<(CorrespondenceSet, MatchRunStats)> {
    if k == 0 {
        return Err(MatchError::SeedCount { k, pixels: d1.len() });
    }
    let seeds = seed_grid(d1.height(), d1.width(), k.min(d1.len()))?;
    fast_reciprocal_matches_from_seeds(d1, d2, &seeds, max_iters)
}

pub fn fast_reciprocal_matches_from_seeds(
    d1: &DescriptorGrid,
    d2: &DescriptorGrid,
    seeds: &SeedSet,
    max_iters: usize,
) -> MatchResult<(CorrespondenceSet, MatchRunStats)> {
    if max_iters == 0 {
        return Err(MatchError::ZeroIterations);
    }
    let start = Instant::now();
    let indices = IndexPair::build(d1, d2)?;
    for &p in seeds.pixels() {
        if !d1.contains(p) {
            return Err(MatchError::SeedOutOfBounds {
                pixel: p,
                width: d1.width(),
                height: d1.height(),
            });
        }
    }
    let build_time = start.elapsed();

    let (w1, w2) = (d1.width(), d2.width());
    let mut nn12 = vec![UNKNOWN; d1.len()];
    let mut nn21 = vec![UNKNOWN; d2.len()];
    let mut stats = MatchRunStats {
        seed_resolution: vec![None; seeds.len()],
        build_time,
        ..Default::default()
    };
    let mut walks: Vec<Walk> = seeds
        .pixels()
        .iter()
        .enumerate()
        .map(|(seed, p)| Walk {
            seed,
            u: p.linear(w1) as u32,
            v_prev: None,
        })
        .collect();
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    let mut collect = |u: u32, v: u32| {
        let pair = (
            PixelCoord::from_linear(u as usize, w1),
            PixelCoord::from_linear(v as usize, w2),
        );
        if seen.insert(pair) {
            pairs.push(pair);
        }
    };

    for t in 1..=max_iters {
        if walks.is_empty() {
            break;
        }
        stats.iterations_run = t;
        stats.active_counts.push(walks.len());
        let mut queries = resolve(&mut nn12, walks.iter().map(|w| w.u), |idx| {
            indices
                .to_image2
                .nearest_many(idx.len(), |n| d1.descriptor_at(idx[n] as usize))
        });
        walks.retain(|w| {
            let v = nn12[w.u as usize];
            if w.v_prev == Some(v) {
                collect(w.u, v);
                stats.seed_resolution[w.seed] = Some(t as u32);
                false
            } else {
                true
            }
        });
        queries += resolve(&mut nn21, walks.iter().map(|w| nn12[w.u as usize]), |idx| {
            indices
                .to_image1
                .nearest_many(idx.len(), |n| d2.descriptor_at(idx[n] as usize))
        });
        walks.retain_mut(|w| {
            let v = nn12[w.u as usize];
            let u_next = nn21[v as usize];
            if u_next == w.u {
                collect(w.u, v);
                stats.seed_resolution[w.seed] = Some(t as u32);
                false
            } else {
                w.u = u_next;
                w.v_prev = Some(v);
                true
            }
        });
        stats.nn_queries.push(queries);
    }
    stats.dropped_walks = walks.len();
    stats.walk_time = start.elapsed() - build_time;
    // distinct mutual pairs never share a pixel
    let set = CorrespondenceSet::new(pairs).expect("mutual pairs form a bijection");
    Ok((set, stats))
}

/// Fills `cache` for every requested node that is not known yet and returns
/// how many queries were evaluated. Requests are sorted and deduplicated, so
/// the evaluation order is fixed.
fn resolve<F>(cache: &mut [u32], nodes: impl Iterator<Item = u32>, search: F) -> usize
where
    F: FnOnce(&[u32]) -> Vec<u32>,
{
    let mut missing: Vec<u32> = nodes.filter(|&n| cache[n as usize] == UNKNOWN).collect();
    missing.sort_unstable();
    missing.dedup();
    if missing.is_empty() {
        return 0;
    }
    let found = search(&missing);
    for (&n, &nn) in missing.iter().zip(&found) {
        cache[n as usize] = nn;
    }
    missing.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::full_reciprocal_matches;

    fn unit_grid(h: usize, w: usize, d: usize, f: impl Fn(usize) -> Vec<f32>) -> DescriptorGrid {
        let data = (0..h * w).flat_map(f).collect();
        DescriptorGrid::new(h, w, d, data)
            .unwrap()
            .normalized()
            .unwrap()
    }

    #[test]
    fn identity_grids_converge_immediately() {
        let d = unit_grid(4, 4, 16, |i| {
            let mut e = vec![0.0; 16];
            e[i] = 1.0;
            e
        });
        let (m, stats) = fast_reciprocal_matches(&d, &d, 4, 10).unwrap();
        let seeds = seed_grid(4, 4, 4).unwrap();
        let want: Vec<_> = seeds.pixels().iter().map(|&s| (s, s)).collect();
        assert_eq!(m.pairs(), &want[..]);
        assert_eq!(stats.iterations_run, 1);
        assert_eq!(stats.active_counts, vec![4]);
        assert!(stats.seed_resolution.iter().all(|r| *r == Some(1)));
    }

    #[test]
    fn chain_walk_is_followed_to_its_root() {
        // 1-D descriptors along an arc; image 2 is shifted so walks have to
        // climb towards the most similar pair
        let angles1 = [0.0f32, 0.3, 0.6, 0.9];
        let angles2 = [0.05f32, 0.5, 0.95, 1.4];
        let d1 = unit_grid(1, 4, 2, |i| vec![angles1[i].cos(), angles1[i].sin()]);
        let d2 = unit_grid(1, 4, 2, |i| vec![angles2[i].cos(), angles2[i].sin()]);
        let full = full_reciprocal_matches(&d1, &d2).unwrap();
        let (fast, stats) = fast_reciprocal_matches(&d1, &d2, 4, 10).unwrap();
        assert_eq!(fast.sorted_pairs(), full.sorted_pairs());
        assert_eq!(stats.dropped_walks, 0);
    }

    #[test]
    fn rejects_zero_iterations_and_seeds() {
        let d = unit_grid(2, 2, 2, |i| vec![1.0, i as f32]);
        assert!(matches!(
            fast_reciprocal_matches(&d, &d, 1, 0),
            Err(MatchError::ZeroIterations)
        ));
        assert!(matches!(
            fast_reciprocal_matches(&d, &d, 0, 5),
            Err(MatchError::SeedCount { .. })
        ));
    }

    #[test]
    fn oversized_k_is_clamped() {
        let d = unit_grid(2, 3, 2, |i| vec![1.0, i as f32]);
        let (m, stats) = fast_reciprocal_matches(&d, &d, 3000, 10).unwrap();
        assert_eq!(stats.seed_resolution.len(), 6);
        assert_eq!(m.len(), 6);
    }
}
