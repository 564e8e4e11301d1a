//! Convergence basins of the nearest-neighbour walk.
//!
//! Composing the two nearest-neighbour maps gives a function on image-1
//! pixels, `f(i) = NN1(NN2(i))`. Each weakly connected piece of its graph
//! holds exactly one cycle; a fixed point of `f` is a mutual pair. Every
//! pixel belongs to the basin of the cycle its walk ends in.

use std::collections::HashMap;

use crate::grids::{CorrespondenceSet, DescriptorGrid, GridSize, PixelCoord, PixelPair};

use super::{MatchResult, NnGraph, SeedSet};

/// Basin label of every image-1 pixel plus per-basin root data.
///
/// Basins are numbered by the linear index of their root pixel in image 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasinMap {
    size: GridSize,
    labels: Vec<u32>,
    roots: Vec<PixelPair>,
    sizes: Vec<usize>,
    cycle_lengths: Vec<usize>,
}

impl BasinMap {
    pub fn size(&self) -> GridSize {
        self.size
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, pixel: PixelCoord) -> u32 {
        self.labels[pixel.linear(self.size.width)]
    }

    pub fn num_basins(&self) -> usize {
        self.roots.len()
    }

    pub fn roots(&self) -> &[PixelPair] {
        &self.roots
    }

    pub fn root(&self, basin: u32) -> PixelPair {
        self.roots[basin as usize]
    }

    /// Number of image-1 pixels in each basin.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of graph nodes (both images) on each root cycle; 2 for a
    /// mutual pair.
    pub fn cycle_lengths(&self) -> &[usize] {
        &self.cycle_lengths
    }

    pub fn is_reciprocal_root(&self, basin: u32) -> bool {
        self.cycle_lengths[basin as usize] == 2
    }

    /// Basin whose root is exactly `pair`.
    pub fn basin_of_root(&self, pair: &PixelPair) -> Option<u32> {
        let b = self.label(pair.0);
        (self.roots[b as usize] == *pair).then_some(b)
    }

    /// Mutual roots of the basins containing at least one seed, in seed order.
    pub fn roots_reached_by(&self, seeds: &SeedSet) -> CorrespondenceSet {
        let mut seen = vec![false; self.roots.len()];
        let mut pairs = Vec::new();
        for &s in seeds.pixels() {
            let b = self.label(s) as usize;
            if !seen[b] && self.cycle_lengths[b] == 2 {
                seen[b] = true;
                pairs.push(self.roots[b]);
            }
        }
        CorrespondenceSet::new(pairs).expect("distinct roots form a bijection")
    }
}

pub fn compute_basins(d1: &DescriptorGrid, d2: &DescriptorGrid) -> MatchResult<BasinMap> {
    Ok(basins_from_graph(&NnGraph::build(d1, d2)?))
}

pub fn basins_from_graph(graph: &NnGraph) -> BasinMap {
    const UNSEEN: u32 = u32::MAX;
    const ON_PATH: u32 = u32::MAX - 1;
    let n = graph.size1().pixels();
    let step = |i: usize| graph.nn21()[graph.nn12()[i] as usize] as usize;

    // provisional ids in discovery order; cycle_min holds the smallest
    // pixel of each cycle, used as the root
    let mut labels = vec![UNSEEN; n];
    let mut cycle_min: Vec<usize> = Vec::new();
    let mut cycle_len: Vec<usize> = Vec::new();
    let mut path = Vec::new();
    for start in 0..n {
        if labels[start] != UNSEEN {
            continue;
        }
        path.clear();
        let mut i = start;
        while labels[i] == UNSEEN {
            labels[i] = ON_PATH;
            path.push(i);
            i = step(i);
        }
        let label = if labels[i] == ON_PATH {
            let pos = path.iter().position(|&x| x == i).unwrap();
            let cycle = &path[pos..];
            cycle_min.push(*cycle.iter().min().unwrap());
            cycle_len.push(2 * cycle.len());
            (cycle_min.len() - 1) as u32
        } else {
            labels[i]
        };
        for &x in &path {
            labels[x] = label;
        }
    }

    let mut order: Vec<usize> = (0..cycle_min.len()).collect();
    order.sort_by_key(|&b| cycle_min[b]);
    let mut remap = vec![0u32; order.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new as u32;
    }
    let mut sizes = vec![0usize; order.len()];
    for l in labels.iter_mut() {
        *l = remap[*l as usize];
        sizes[*l as usize] += 1;
    }
    let (w1, w2) = (graph.size1().width, graph.size2().width);
    let roots = order
        .iter()
        .map(|&b| {
            let i = cycle_min[b];
            (
                PixelCoord::from_linear(i, w1),
                PixelCoord::from_linear(graph.nn12()[i] as usize, w2),
            )
        })
        .collect();
    let cycle_lengths = order.iter().map(|&b| cycle_len[b]).collect();
    BasinMap {
        size: graph.size1(),
        labels,
        roots,
        sizes,
        cycle_lengths,
    }
}

/// Maps every root pair of `basins` to its basin id.
pub(crate) fn root_lookup(basins: &BasinMap) -> HashMap<PixelPair, u32> {
    basins
        .roots()
        .iter()
        .enumerate()
        .map(|(b, &r)| (r, b as u32))
        .collect()
}
