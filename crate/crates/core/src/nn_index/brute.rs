//! Blocked exhaustive scan.
//!
//! Candidates are packed in blocks of `BLOCK` points stored channel-major, so
//! the innermost loop runs over contiguous candidates of one channel. A tile
//! of queries is scanned against each block while it is hot in cache.

pub(super) const QUERY_TILE: usize = 16;
const BLOCK: usize = 256;
const LANES: usize = 8;
const QUERY_GROUP: usize = 4;

pub(super) struct BruteForce {
    dim: usize,
    ids: Vec<u32>,
    /// `blocks[b][k * BLOCK + c]` is channel `k` of candidate `b * BLOCK + c`.
    blocks: Vec<Vec<f32>>,
}

impl BruteForce {
    pub(super) fn new(points: &[f32], dim: usize, ids: Vec<u32>) -> Self {
        let blocks = points
            .chunks(BLOCK * dim)
            .map(|chunk| {
                let count = chunk.len() / dim;
                let mut block = vec![0.0f32; BLOCK * dim];
                for c in 0..count {
                    for k in 0..dim {
                        block[k * BLOCK + c] = chunk[c * dim + k];
                    }
                }
                block
            })
            .collect();
        Self { dim, ids, blocks }
    }

    /// Nearest candidate ids for a tile of queries.
    pub(super) fn nearest_tile(&self, queries: &[&[f32]]) -> Vec<u32> {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { self.nearest_tile_avx2(queries) };
        }
        self.nearest_tile_portable(queries)
    }

    /// Same arithmetic as the portable path; only the instruction selection
    /// differs, so results are bit-identical.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn nearest_tile_avx2(&self, queries: &[&[f32]]) -> Vec<u32> {
        self.nearest_tile_portable(queries)
    }

    #[inline(always)]
    fn nearest_tile_portable(&self, queries: &[&[f32]]) -> Vec<u32> {
        let n = self.ids.len();
        let mut best_d = vec![f64::INFINITY; queries.len()];
        let mut best_i = vec![0usize; queries.len()];
        for (b, block) in self.blocks.iter().enumerate() {
            let base = b * BLOCK;
            let count = BLOCK.min(n - base);
            for q0 in (0..queries.len()).step_by(QUERY_GROUP) {
                // channel-major copy of the group; short groups repeat their
                // first query and ignore the copies
                let group: Vec<[f64; QUERY_GROUP]> = (0..self.dim)
                    .map(|k| {
                        std::array::from_fn(|g| {
                            queries.get(q0 + g).unwrap_or(&queries[q0])[k] as f64
                        })
                    })
                    .collect();
                let used = QUERY_GROUP.min(queries.len() - q0);
                for c0 in (0..count).step_by(LANES) {
                    let acc = self.lane_distances(block, c0, &group);
                    // candidates are visited in increasing id order, so a
                    // strict comparison keeps the smallest id among ties
                    for (g, row) in acc.iter().enumerate().take(used) {
                        for (l, &d) in row.iter().enumerate().take(count - c0) {
                            if d < best_d[q0 + g] {
                                best_d[q0 + g] = d;
                                best_i[q0 + g] = base + c0 + l;
                            }
                        }
                    }
                }
            }
        }
        best_i.into_iter().map(|i| self.ids[i]).collect()
    }

    /// Squared distances from each query of `group` to candidates
    /// `c0..c0 + LANES` of a block, accumulated in channel order.
    #[inline(always)]
    fn lane_distances(
        &self,
        block: &[f32],
        c0: usize,
        group: &[[f64; QUERY_GROUP]],
    ) -> [[f64; LANES]; QUERY_GROUP] {
        let mut acc = [[0.0f64; LANES]; QUERY_GROUP];
        for (k, xs) in group.iter().enumerate() {
            let col: &[f32; LANES] = block[k * BLOCK + c0..][..LANES].try_into().unwrap();
            let col = col.map(|y| y as f64);
            for (a, &xk) in acc.iter_mut().zip(xs) {
                for (a, &y) in a.iter_mut().zip(&col) {
                    let d = xk - y;
                    *a += d * d;
                }
            }
        }
        acc
    }
}
