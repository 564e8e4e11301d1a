//! Subsampling of a full reciprocal match set, uniformly or weighted by the
//! size of each pair's convergence basin.
//!
//! Both samplers draw without replacement from a ChaCha8 stream seeded with
//! `rng_seed`, and return the chosen pairs in their original order.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grids::CorrespondenceSet;

use super::basins::root_lookup;
use super::{BasinMap, MatchError, MatchResult};

fn pick(full: &CorrespondenceSet, mut chosen: Vec<usize>) -> CorrespondenceSet {
    chosen.sort_unstable();
    let pairs = chosen.into_iter().map(|n| full.pairs()[n]).collect();
    CorrespondenceSet::new(pairs).expect("subset of a bijection")
}

/// `min(k, |full|)` pairs chosen uniformly without replacement.
pub fn naive_subsample(full: &CorrespondenceSet, k: usize, rng_seed: u64) -> CorrespondenceSet {
    if k >= full.len() {
        return full.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    pick(full, index::sample(&mut rng, full.len(), k).into_vec())
}

/// `min(k, |full|)` pairs drawn one after another without replacement, each
/// draw with probability proportional to the size of the pair's basin.
pub fn basin_biased_subsample(
    full: &CorrespondenceSet,
    basins: &BasinMap,
    k: usize,
    rng_seed: u64,
) -> MatchResult<CorrespondenceSet> {
    let lookup = root_lookup(basins);
    let weights = full
        .pairs()
        .iter()
        .map(|pair| {
            lookup
                .get(pair)
                .map(|&b| basins.sizes()[b as usize] as f64)
                .ok_or(MatchError::NotABasinRoot(*pair))
        })
        .collect::<MatchResult<Vec<f64>>>()?;
    if k >= full.len() {
        return Ok(full.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let chosen = index::sample_weighted(&mut rng, full.len(), |n| weights[n], k)
        .expect("basin sizes are positive and finite")
        .into_vec();
    Ok(pick(full, chosen))
}

/// Area of the one-sigma ellipse of the image-1 match positions (pixel
/// centres): `pi * sqrt(det(cov))` with the population covariance. Zero for
/// fewer than two matches.
pub fn coverage_ellipse_area(matches: &CorrespondenceSet) -> f64 {
    let n = matches.len();
    if n < 2 {
        return 0.0;
    }
    let pts = || {
        matches
            .pairs()
            .iter()
            .map(|(a, _)| (a.u as f64 + 0.5, a.v as f64 + 0.5))
    };
    let (sx, sy) = pts().fold((0.0, 0.0), |(x, y), (u, v)| (x + u, y + v));
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for (u, v) in pts() {
        let (dx, dy) = (u - mx, v - my);
        xx += dx * dx;
        yy += dy * dy;
        xy += dx * dy;
    }
    let n = n as f64;
    let det = (xx / n) * (yy / n) - (xy / n).powi(2);
    std::f64::consts::PI * det.max(0.0).sqrt()
}
