//! Coarse-to-fine matching for images larger than the descriptor network's
//! working resolution.
//!
//! The images are first matched at a reduced resolution. Each image is then
//! tiled with overlapping windows; window pairs are picked greedily until the
//! chosen pairs contain most coarse matches, every picked pair is matched at
//! full resolution, and the results are mapped back and merged.
//!
//! Pixel positions map between resolutions through pixel centres: crop pixel
//! `a` of a window starting at `x0` with scale `s` covers the full-resolution
//! point `x0 + (a + 0.5) * s`, which lands in full pixel `floor` of that.

use std::collections::HashSet;
use std::error::Error as StdError;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::grids::{CorrespondenceSet, DescriptorGrid, GridSize, PixelCoord, PixelPair};
use crate::matcher::{fast_reciprocal_matches, MatchError, DEFAULT_K, DEFAULT_MAX_ITERS};

/// Largest side of a window and of the coarse working resolution.
pub const WINDOW_SIZE: usize = 512;
pub const WINDOW_OVERLAP: f64 = 0.5;
/// Fraction of coarse matches the selected window pairs must contain.
pub const DEFAULT_COVERAGE: f64 = 0.9;

pub type ProviderError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum C2fError {
    #[error("descriptor provider failed for image {image:?}, window {window}: {source}")]
    Provider {
        image: ImageId,
        window: Window,
        source: ProviderError,
    },
    #[error("match {pixel} lies outside the {width}x{height} crop")]
    OutOfWindow {
        pixel: PixelCoord,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    Match(#[from] MatchError),
}

pub type C2fResult<T> = Result<T, C2fError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageId {
    First,
    Second,
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)` in full-resolution
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Window {
    pub const fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// The whole image.
    pub const fn full(size: GridSize) -> Self {
        Self::new(0, 0, size.width, size.height)
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn size(&self) -> GridSize {
        GridSize::new(self.width(), self.height())
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x0, self.y0, self.x1, self.y1)
    }
}

/// Window start positions along one axis: side `min(target, extent)`,
/// stride `side * (1 - overlap)`, last window flush with the edge.
fn axis_starts(extent: usize, target: usize, overlap: f64) -> (usize, Vec<usize>) {
    let side = target.min(extent);
    let stride = ((side as f64 * (1.0 - overlap)).floor() as usize).max(1);
    let mut starts = vec![0];
    let mut pos = 0;
    while pos + side < extent {
        pos = (pos + stride).min(extent - side);
        starts.push(pos);
    }
    (side, starts)
}

/// Overlapping windows covering a `width x height` image, row by row.
pub fn make_window_grid(width: usize, height: usize, target: usize, overlap: f64) -> Vec<Window> {
    let (sx, xs) = axis_starts(width, target, overlap);
    let (sy, ys) = axis_starts(height, target, overlap);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| Window::new(x, y, x + sx, y + sy)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPair {
    pub w1: Window,
    pub w2: Window,
    /// Coarse matches with both endpoints inside the pair.
    pub covered: usize,
    /// Index of `w1` and `w2` in their window lists.
    pub index: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSelection {
    pub pairs: Vec<WindowPair>,
    pub covered_fraction: f64,
}

/// Full-resolution position of the centre of a coarse pixel.
fn upscale(p: PixelCoord, scale: (f64, f64)) -> (f64, f64) {
    ((p.u as f64 + 0.5) * scale.0, (p.v as f64 + 0.5) * scale.1)
}

/// Greedy window-pair selection.
///
/// Repeatedly adds the pair containing the most coarse matches not yet
/// covered (ties to the lowest `(w1, w2)` indices) until `coverage` of all
/// matches is reached or no pair adds anything.
pub fn select_window_pairs(
    windows1: &[Window],
    windows2: &[Window],
    coarse: &CorrespondenceSet,
    scale1: (f64, f64),
    scale2: (f64, f64),
    coverage: f64,
) -> WindowSelection {
    let total = coarse.len();
    if total == 0 {
        return WindowSelection {
            pairs: Vec::new(),
            covered_fraction: 0.0,
        };
    }
    let ends: Vec<((f64, f64), (f64, f64))> = coarse
        .pairs()
        .iter()
        .map(|&(a, b)| (upscale(a, scale1), upscale(b, scale2)))
        .collect();
    let inside = |w: &Window, p: (f64, f64)| w.contains_point(p.0, p.1);
    let members: Vec<Vec<Vec<usize>>> = windows1
        .iter()
        .map(|w1| {
            windows2
                .iter()
                .map(|w2| {
                    (0..total)
                        .filter(|&n| inside(w1, ends[n].0) && inside(w2, ends[n].1))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut done = vec![false; total];
    let mut covered = 0usize;
    let mut used = HashSet::new();
    let mut pairs = Vec::new();
    while (covered as f64) < coverage * total as f64 {
        let mut best: Option<((usize, usize), usize)> = None;
        for (i, row) in members.iter().enumerate() {
            for (j, m) in row.iter().enumerate() {
                if used.contains(&(i, j)) {
                    continue;
                }
                let gain = m.iter().filter(|&&n| !done[n]).count();
                if gain > best.map_or(0, |b| b.1) {
                    best = Some(((i, j), gain));
                }
            }
        }
        let Some(((i, j), gain)) = best else { break };
        used.insert((i, j));
        for &n in &members[i][j] {
            done[n] = true;
        }
        covered += gain;
        pairs.push(WindowPair {
            w1: windows1[i],
            w2: windows2[j],
            covered: members[i][j].len(),
            index: (i, j),
        });
    }
    WindowSelection {
        pairs,
        covered_fraction: covered as f64 / total as f64,
    }
}

/// Maps crop matches back to full-resolution image coordinates.
///
/// `res1`/`res2` are the crop grid sizes the matches were computed at.
pub fn map_to_original(
    matches: &CorrespondenceSet,
    w1: &Window,
    w2: &Window,
    res1: GridSize,
    res2: GridSize,
) -> C2fResult<Vec<PixelPair>> {
    let map = |p: PixelCoord, w: &Window, res: GridSize| -> C2fResult<PixelCoord> {
        if !p.in_bounds(res.width, res.height) {
            return Err(C2fError::OutOfWindow {
                pixel: p,
                width: res.width,
                height: res.height,
            });
        }
        let sx = w.width() as f64 / res.width as f64;
        let sy = w.height() as f64 / res.height as f64;
        let x = ((p.u as f64 + 0.5) * sx).floor() as usize;
        let y = ((p.v as f64 + 0.5) * sy).floor() as usize;
        Ok(PixelCoord::new(
            (w.x0 + x.min(w.width() - 1)) as u32,
            (w.y0 + y.min(w.height() - 1)) as u32,
        ))
    };
    matches
        .pairs()
        .iter()
        .map(|&(a, b)| Ok((map(a, w1, res1)?, map(b, w2, res2)?)))
        .collect()
}

/// Source of descriptor grids for image crops.
///
/// Implementations must be deterministic per `(image, window, resolution)`.
pub trait DescriptorProvider: Sync {
    fn descriptors(
        &self,
        image: ImageId,
        window: &Window,
        resolution: GridSize,
    ) -> Result<DescriptorGrid, ProviderError>;

    /// Providers that cannot serve concurrent calls return `true`.
    fn is_serial(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2fConfig {
    pub k: usize,
    pub max_iters: usize,
    pub coverage: f64,
    pub window_size: usize,
    pub overlap: f64,
    /// Largest side of the coarse pass.
    pub coarse_size: usize,
}

impl Default for C2fConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_iters: DEFAULT_MAX_ITERS,
            coverage: DEFAULT_COVERAGE,
            window_size: WINDOW_SIZE,
            overlap: WINDOW_OVERLAP,
            coarse_size: WINDOW_SIZE,
        }
    }
}

/// Coarse working resolution: largest side scaled down to `max_side`,
/// aspect preserved; smaller images are kept as they are.
pub fn coarse_resolution(size: GridSize, max_side: usize) -> GridSize {
    let largest = size.width.max(size.height);
    if largest <= max_side {
        return size;
    }
    let r = max_side as f64 / largest as f64;
    GridSize::new(
        ((size.width as f64 * r).round() as usize).max(1),
        ((size.height as f64 * r).round() as usize).max(1),
    )
}

#[derive(Debug, Clone)]
pub struct C2fOutput {
    /// Merged full-resolution matches.
    pub matches: CorrespondenceSet,
    /// Coarse matches in coarse-grid coordinates.
    pub coarse: CorrespondenceSet,
    /// Coarse matches mapped to full resolution.
    pub coarse_upscaled: CorrespondenceSet,
    pub selection: WindowSelection,
}

fn fetch(
    provider: &dyn DescriptorProvider,
    image: ImageId,
    window: &Window,
    resolution: GridSize,
) -> C2fResult<DescriptorGrid> {
    provider
        .descriptors(image, window, resolution)
        .map_err(|source| C2fError::Provider {
            image,
            window: *window,
            source,
        })
}

/// Coarse-to-fine matching with windows generated by [`make_window_grid`].
pub fn coarse_to_fine_match(
    provider: &dyn DescriptorProvider,
    size1: GridSize,
    size2: GridSize,
    config: &C2fConfig,
) -> C2fResult<C2fOutput> {
    let windows1 = make_window_grid(size1.width, size1.height, config.window_size, config.overlap);
    let windows2 = make_window_grid(size2.width, size2.height, config.window_size, config.overlap);
    coarse_to_fine_with_windows(provider, size1, size2, &windows1, &windows2, config)
}

/// Coarse-to-fine matching over caller-supplied window lists.
pub fn coarse_to_fine_with_windows(
    provider: &dyn DescriptorProvider,
    size1: GridSize,
    size2: GridSize,
    windows1: &[Window],
    windows2: &[Window],
    config: &C2fConfig,
) -> C2fResult<C2fOutput> {
    let full1 = Window::full(size1);
    let full2 = Window::full(size2);
    let c1 = fetch(
        provider,
        ImageId::First,
        &full1,
        coarse_resolution(size1, config.coarse_size),
    )?;
    let c2 = fetch(
        provider,
        ImageId::Second,
        &full2,
        coarse_resolution(size2, config.coarse_size),
    )?;
    let (coarse, _) = fast_reciprocal_matches(&c1, &c2, config.k, config.max_iters)?;
    let coarse_upscaled = CorrespondenceSet::from_pairs_first_wins(map_to_original(
        &coarse,
        &full1,
        &full2,
        c1.size(),
        c2.size(),
    )?);

    let scale = |full: GridSize, c: &DescriptorGrid| {
        (
            full.width as f64 / c.width() as f64,
            full.height as f64 / c.height() as f64,
        )
    };
    let selection = select_window_pairs(
        windows1,
        windows2,
        &coarse,
        scale(size1, &c1),
        scale(size2, &c2),
        config.coverage,
    );

    let match_pair = |pair: &WindowPair| -> C2fResult<Vec<PixelPair>> {
        let g1 = fetch(provider, ImageId::First, &pair.w1, pair.w1.size())?;
        let g2 = fetch(provider, ImageId::Second, &pair.w2, pair.w2.size())?;
        let (m, _) = fast_reciprocal_matches(&g1, &g2, config.k, config.max_iters)?;
        map_to_original(&m, &pair.w1, &pair.w2, g1.size(), g2.size())
    };
    let per_pair: Vec<Vec<PixelPair>> = if provider.is_serial() {
        selection
            .pairs
            .iter()
            .map(match_pair)
            .collect::<C2fResult<_>>()?
    } else {
        selection
            .pairs
            .par_iter()
            .map(match_pair)
            .collect::<C2fResult<_>>()?
    };
    let matches = CorrespondenceSet::from_pairs_first_wins(per_pair.into_iter().flatten());
    Ok(C2fOutput {
        matches,
        coarse,
        coarse_upscaled,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(u: u32, v: u32) -> PixelCoord {
        PixelCoord::new(u, v)
    }

    #[test]
    fn window_grid_wide_image() {
        let w = make_window_grid(1024, 512, 512, 0.5);
        let xs: Vec<_> = w.iter().map(|w| (w.x0, w.width(), w.height())).collect();
        assert_eq!(xs, vec![(0, 512, 512), (256, 512, 512), (512, 512, 512)]);
    }

    #[test]
    fn window_grid_single_tile() {
        assert_eq!(make_window_grid(512, 512, 512, 0.5), vec![Window::new(0, 0, 512, 512)]);
    }

    #[test]
    fn window_grid_edge_clamping() {
        let w = make_window_grid(700, 300, 512, 0.5);
        assert_eq!(
            w,
            vec![Window::new(0, 0, 512, 300), Window::new(188, 0, 700, 300)]
        );
    }

    #[test]
    fn greedy_hand_trace() {
        // 10 matches on a 1-D strip at x = 0..10 in both images. Pair A holds
        // matches 0..8, pair B holds 5..10 (3 shared with A), pair C holds 0.
        let coarse = CorrespondenceSet::new((0..10).map(|i| (p(i, 0), p(i, 0))).collect()).unwrap();
        let w1 = vec![
            Window::new(0, 0, 8, 1),
            Window::new(5, 0, 10, 1),
            Window::new(0, 0, 1, 1),
        ];
        let w2 = vec![Window::new(0, 0, 10, 1)];
        let sel = select_window_pairs(&w1, &w2, &coarse, (1.0, 1.0), (1.0, 1.0), 0.9);
        let picked: Vec<_> = sel.pairs.iter().map(|p| (p.index, p.covered)).collect();
        assert_eq!(picked, vec![((0, 0), 8), ((1, 0), 5)]);
        assert_eq!(sel.covered_fraction, 1.0);
    }

    #[test]
    fn greedy_stops_when_nothing_helps() {
        let coarse =
            CorrespondenceSet::new(vec![(p(0, 0), p(0, 0)), (p(9, 0), p(9, 0))]).unwrap();
        let w = vec![Window::new(0, 0, 5, 1)];
        let sel = select_window_pairs(&w, &w, &coarse, (1.0, 1.0), (1.0, 1.0), 0.9);
        assert_eq!(sel.pairs.len(), 1);
        assert_eq!(sel.covered_fraction, 0.5);
        let empty = select_window_pairs(&w, &w, &CorrespondenceSet::empty(), (1.0, 1.0), (1.0, 1.0), 0.9);
        assert!(empty.pairs.is_empty());
    }

    #[test]
    fn remap_identity_and_offset() {
        let m = CorrespondenceSet::new(vec![(p(3, 4), p(5, 6))]).unwrap();
        let full = Window::new(0, 0, 10, 10);
        let same = map_to_original(&m, &full, &full, full.size(), full.size()).unwrap();
        assert_eq!(same, vec![(p(3, 4), p(5, 6))]);

        let w = Window::new(256, 0, 266, 10);
        let shifted = map_to_original(&m, &w, &w, w.size(), w.size()).unwrap();
        assert_eq!(shifted, vec![(p(259, 4), p(261, 6))]);
    }

    #[test]
    fn remap_downscaled_crop() {
        // crop pixel a of a 2x downscaled crop covers full pixels 2a and 2a+1;
        // its centre 2a+1 lands in full pixel 2a+1
        let m = CorrespondenceSet::new(vec![(p(0, 0), p(4, 2))]).unwrap();
        let w = Window::new(100, 50, 120, 60);
        let res = GridSize::new(10, 5);
        let out = map_to_original(&m, &w, &w, res, res).unwrap();
        assert_eq!(out, vec![(p(101, 51), p(109, 55))]);
        let bad = CorrespondenceSet::new(vec![(p(10, 0), p(0, 0))]).unwrap();
        assert!(matches!(
            map_to_original(&bad, &w, &w, res, res),
            Err(C2fError::OutOfWindow { .. })
        ));
    }

    #[test]
    fn coarse_resolution_keeps_aspect() {
        assert_eq!(coarse_resolution(GridSize::new(1024, 768), 512), GridSize::new(512, 384));
        assert_eq!(coarse_resolution(GridSize::new(300, 200), 512), GridSize::new(300, 200));
    }
}
