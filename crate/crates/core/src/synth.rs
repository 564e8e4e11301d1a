//! Synthetic scenes with exact ground truth.
//!
//! A scene is an infinite random descriptor field ("canvas") built from
//! lattices of random vectors, bilinearly interpolated. View 1 samples the
//! canvas at its own pixel centres; view 2 samples it at pixel centres pushed
//! through a homography. Lattice values and per-pixel noise come from
//! SplitMix64 hashes of `(seed, layer, x, y, channel)`, so any crop of any
//! view can be regenerated independently and bit-identically.
//!
//! Ground truth pairs a view-2 pixel with the view-1 pixel containing its
//! warped centre. Pointmaps place the canvas on the plane `z = depth`, with
//! `pixel_size` metres per canvas pixel, in the frame of camera 1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarse2fine::{DescriptorProvider, ImageId, ProviderError, Window};
use crate::grids::{
    normalize_descriptors, CorrespondenceSet, DescriptorGrid, GridError, GridSize, PixelCoord,
    PointMap,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("view 2 maps entirely outside the canvas")]
    NoOverlap,
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub type SynthResult<T> = Result<T, SynthError>;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0u64, |h, &p| splitmix64(h ^ p.wrapping_mul(0xA24B_AED4_963E_E407)))
}

/// Uniform in `[-1, 1)` from the top 53 bits of a hash.
fn unit_uniform(h: u64) -> f64 {
    (h >> 11) as f64 * (2.0 / (1u64 << 53) as f64) - 1.0
}

/// Projective map from view-2 pixel coordinates to canvas coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Warp {
    /// Row-major 3x3 matrix.
    pub matrix: [f64; 9],
}

impl Warp {
    pub fn identity() -> Self {
        Self::similarity(1.0, 0.0, 0.0)
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::similarity(1.0, tx, ty)
    }

    /// `q -> scale * q + t`.
    pub fn similarity(scale: f64, tx: f64, ty: f64) -> Self {
        Self {
            matrix: [scale, 0.0, tx, 0.0, scale, ty, 0.0, 0.0, 1.0],
        }
    }

    pub fn then(&self, outer: &Warp) -> Warp {
        let (a, b) = (&outer.matrix, &self.matrix);
        let mut m = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                m[3 * r + c] = (0..3).map(|k| a[3 * r + k] * b[3 * k + c]).sum();
            }
        }
        Warp { matrix: m }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        let w = m[6] * x + m[7] * y + m[8];
        (
            (m[0] * x + m[1] * y + m[2]) / w,
            (m[3] * x + m[4] * y + m[5]) / w,
        )
    }

    fn denominator(&self, x: f64, y: f64) -> f64 {
        self.matrix[6] * x + self.matrix[7] * y + self.matrix[8]
    }
}

/// Warp as written in a scene file: `homography * (scale, translation)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    #[serde(default)]
    pub translation: [f64; 2],
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub homography: Option<[f64; 9]>,
}

fn one() -> f64 {
    1.0
}

impl Default for WarpSpec {
    fn default() -> Self {
        Self {
            translation: [0.0, 0.0],
            scale: 1.0,
            homography: None,
        }
    }
}

impl WarpSpec {
    pub fn to_warp(&self) -> Warp {
        let base = Warp::similarity(self.scale, self.translation[0], self.translation[1]);
        match self.homography {
            Some(matrix) => base.then(&Warp { matrix }),
            None => base,
        }
    }
}

/// Extra high-frequency texture added inside a canvas rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailLayer {
    pub length_scale: f64,
    pub amplitude: f64,
    /// `[x0, y0, x1, y1]` in canvas coordinates.
    pub region: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// `[width, height]` of the canvas; view 1 sits at its origin.
    pub canvas: [usize; 2],
    pub view1: [usize; 2],
    pub view2: [usize; 2],
    #[serde(default)]
    pub warp: WarpSpec,
    pub dim: usize,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Lattice spacing of the base texture, in canvas pixels.
    pub length_scale: f64,
    #[serde(default)]
    pub detail: Option<DetailLayer>,
    #[serde(default = "default_pixel_size")]
    pub pixel_size: f64,
    #[serde(default = "default_depth")]
    pub depth: f64,
}

fn default_pixel_size() -> f64 {
    0.01
}

fn default_depth() -> f64 {
    2.0
}

impl SceneSpec {
    /// Square views of `size` pixels on a same-sized canvas.
    pub fn square(size: usize, dim: usize, length_scale: f64, seed: u64) -> Self {
        Self {
            canvas: [size, size],
            view1: [size, size],
            view2: [size, size],
            warp: WarpSpec::default(),
            dim,
            sigma: 0.0,
            seed,
            length_scale,
            detail: None,
            pixel_size: default_pixel_size(),
            depth: default_depth(),
        }
    }

    pub fn with_warp(mut self, warp: WarpSpec) -> Self {
        self.warp = warp;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_detail(mut self, detail: DetailLayer) -> Self {
        self.detail = Some(detail);
        self
    }
}

fn view_key(view: ImageId) -> u64 {
    match view {
        ImageId::First => 1,
        ImageId::Second => 2,
    }
}

/// Everything [`generate_scene`] produces.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub d1: DescriptorGrid,
    pub d2: DescriptorGrid,
    pub gt: CorrespondenceSet,
    pub x1: PointMap,
    pub x2: PointMap,
}

/// A validated scene that can be sampled at any crop and resolution.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    warp: Warp,
}

impl Scene {
    pub fn new(spec: SceneSpec) -> SynthResult<Self> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if spec.dim < 2 {
            return bad("descriptor dimension must be at least 2");
        }
        if spec.sigma.is_nan() || spec.sigma < 0.0 {
            return bad("sigma must be non-negative");
        }
        if spec.length_scale.is_nan() || spec.length_scale <= 0.0 {
            return bad("length_scale must be positive");
        }
        if let Some(d) = &spec.detail {
            if d.length_scale.is_nan() || d.length_scale <= 0.0 {
                return bad("detail length_scale must be positive");
            }
        }
        if spec.view1.contains(&0) || spec.view2.contains(&0) || spec.canvas.contains(&0) {
            return bad("views and canvas must be non-empty");
        }
        if spec.view1[0] > spec.canvas[0] || spec.view1[1] > spec.canvas[1] {
            return bad("view 1 must fit inside the canvas");
        }
        let warp = spec.warp.to_warp();
        let det = warp.determinant();
        if !det.is_finite() || det.abs() < 1e-12 {
            return bad("warp is not invertible");
        }
        let [w2, h2] = spec.view2;
        let mut inside = false;
        for y in 0..h2 {
            for x in 0..w2 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                if warp.denominator(cx, cy) <= 0.0 {
                    return bad("warp sends part of view 2 behind the camera");
                }
                let (px, py) = warp.apply(cx, cy);
                inside |= px >= 0.0
                    && py >= 0.0
                    && px < spec.canvas[0] as f64
                    && py < spec.canvas[1] as f64;
            }
        }
        if !inside {
            return Err(SynthError::NoOverlap);
        }
        Ok(Self { spec, warp })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn warp(&self) -> &Warp {
        &self.warp
    }

    pub fn view_size(&self, view: ImageId) -> GridSize {
        let [w, h] = match view {
            ImageId::First => self.spec.view1,
            ImageId::Second => self.spec.view2,
        };
        GridSize::new(w, h)
    }

    /// Canvas position of a continuous point of a view.
    pub fn to_canvas(&self, view: ImageId, x: f64, y: f64) -> (f64, f64) {
        match view {
            ImageId::First => (x, y),
            ImageId::Second => self.warp.apply(x, y),
        }
    }

    fn lattice(&self, layer: u64, spacing: f64, x: f64, y: f64, out: &mut [f64], gain: f64) {
        let (gx, gy) = (x / spacing, y / spacing);
        let (fx, fy) = (gx.floor(), gy.floor());
        let (tx, ty) = (gx - fx, gy - fy);
        let (ix, iy) = (fx as i64, fy as i64);
        let corners = [
            (ix, iy, (1.0 - tx) * (1.0 - ty)),
            (ix + 1, iy, tx * (1.0 - ty)),
            (ix, iy + 1, (1.0 - tx) * ty),
            (ix + 1, iy + 1, tx * ty),
        ];
        for (c, o) in out.iter_mut().enumerate() {
            let mut v = 0.0;
            for &(cx, cy, w) in &corners {
                let h = hash_key(&[self.spec.seed, layer, cx as u64, cy as u64, c as u64]);
                v += w * unit_uniform(h);
            }
            *o += gain * v;
        }
    }

    /// Noise-free field value at a canvas position.
    pub fn field(&self, x: f64, y: f64, out: &mut [f64]) {
        out.fill(0.0);
        self.lattice(0, self.spec.length_scale, x, y, out, 1.0);
        if let Some(d) = &self.spec.detail {
            let [x0, y0, x1, y1] = d.region;
            if x >= x0 && x < x1 && y >= y0 && y < y1 {
                self.lattice(1, d.length_scale, x, y, out, d.amplitude);
            }
        }
    }

    /// Raw (unnormalized) descriptor of a continuous view position. Noise is
    /// keyed on the full-resolution pixel containing the position.
    fn raw_descriptor(&self, view: ImageId, x: f64, y: f64, out: &mut [f64]) {
        let (cx, cy) = self.to_canvas(view, x, y);
        self.field(cx, cy, out);
        if self.spec.sigma > 0.0 {
            let (px, py) = (x.floor() as i64 as u64, y.floor() as i64 as u64);
            let scale = self.spec.sigma * 3f64.sqrt();
            for (c, o) in out.iter_mut().enumerate() {
                let h = hash_key(&[self.spec.seed, 1000 + view_key(view), px, py, c as u64]);
                *o += scale * unit_uniform(h);
            }
        }
    }

    /// Descriptors of `window` (full-resolution bounds) resampled to
    /// `resolution`: crop pixel `(a, b)` reads the view at
    /// `(x0 + (a + 0.5) * ww / cw, y0 + (b + 0.5) * wh / ch)`.
    pub fn sample_window(
        &self,
        view: ImageId,
        window: &Window,
        resolution: GridSize,
    ) -> SynthResult<DescriptorGrid> {
        let d = self.spec.dim;
        let sx = window.width() as f64 / resolution.width as f64;
        let sy = window.height() as f64 / resolution.height as f64;
        let mut data = Vec::with_capacity(resolution.pixels() * d);
        let mut buf = vec![0.0; d];
        for b in 0..resolution.height {
            let y = window.y0 as f64 + (b as f64 + 0.5) * sy;
            for a in 0..resolution.width {
                let x = window.x0 as f64 + (a as f64 + 0.5) * sx;
                self.raw_descriptor(view, x, y, &mut buf);
                data.extend(buf.iter().map(|&v| v as f32));
            }
        }
        let raw = DescriptorGrid::new(resolution.height, resolution.width, d, data)?;
        Ok(normalize_descriptors(&raw)?)
    }

    /// Full-resolution descriptors of a whole view.
    pub fn view_descriptors(&self, view: ImageId) -> SynthResult<DescriptorGrid> {
        let size = self.view_size(view);
        self.sample_window(view, &Window::full(size), size)
    }

    /// Ground-truth pairs: each view-2 pixel goes to the view-1 pixel that
    /// contains its warped centre; when several compete for one pixel the
    /// closest centre wins.
    pub fn ground_truth(&self) -> CorrespondenceSet {
        let s1 = self.view_size(ImageId::First);
        let s2 = self.view_size(ImageId::Second);
        let mut cands = Vec::new();
        for y in 0..s2.height {
            for x in 0..s2.width {
                let (px, py) = self.warp.apply(x as f64 + 0.5, y as f64 + 0.5);
                if px < 0.0 || py < 0.0 || px >= s1.width as f64 || py >= s1.height as f64 {
                    continue;
                }
                let (u, v) = (px.floor(), py.floor());
                let dist = (px - u - 0.5).hypot(py - v - 0.5);
                cands.push((
                    dist,
                    PixelCoord::new(u as u32, v as u32),
                    PixelCoord::new(x as u32, y as u32),
                ));
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut pairs =
            CorrespondenceSet::from_pairs_first_wins(cands.into_iter().map(|(_, a, b)| (a, b)))
                .sorted_pairs();
        pairs.sort_by_key(|(_, b)| (b.v, b.u));
        CorrespondenceSet::new(pairs).expect("first-wins output is a bijection")
    }

    /// Continuous view-1 position of the centre of a view-2 pixel.
    pub fn true_position(&self, pixel2: PixelCoord) -> (f64, f64) {
        self.warp
            .apply(pixel2.u as f64 + 0.5, pixel2.v as f64 + 0.5)
    }

    /// Pointmap of a view, all pixels valid.
    pub fn point_map(&self, view: ImageId) -> SynthResult<PointMap> {
        let size = self.view_size(view);
        let ps = self.spec.pixel_size;
        let mut pts = Vec::with_capacity(size.pixels());
        for y in 0..size.height {
            for x in 0..size.width {
                let (cx, cy) = self.to_canvas(view, x as f64 + 0.5, y as f64 + 0.5);
                pts.push([(cx * ps) as f32, (cy * ps) as f32, self.spec.depth as f32]);
            }
        }
        Ok(PointMap::all_valid(size.height, size.width, pts)?)
    }
}

impl DescriptorProvider for Scene {
    fn descriptors(
        &self,
        image: ImageId,
        window: &Window,
        resolution: GridSize,
    ) -> Result<DescriptorGrid, ProviderError> {
        Ok(self.sample_window(image, window, resolution)?)
    }
}

pub fn generate_scene(spec: &SceneSpec) -> SynthResult<SceneData> {
    let scene = Scene::new(spec.clone())?;
    Ok(SceneData {
        d1: scene.view_descriptors(ImageId::First)?,
        d2: scene.view_descriptors(ImageId::Second)?,
        gt: scene.ground_truth(),
        x1: scene.point_map(ImageId::First)?,
        x2: scene.point_map(ImageId::Second)?,
    })
}

/// Two independent grids of i.i.d. Gaussian descriptors, normalized.
/// Draws come from a ChaCha8 stream seeded with `seed`: all of grid 1, then
/// all of grid 2.
pub fn generate_random_grids(
    height: usize,
    width: usize,
    dim: usize,
    seed: u64,
) -> SynthResult<(DescriptorGrid, DescriptorGrid)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> SynthResult<DescriptorGrid> {
        let data = (0..height * width * dim)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x as f32
            })
            .collect();
        Ok(normalize_descriptors(&DescriptorGrid::new(
            height, width, dim, data,
        )?)?)
    };
    let d1 = draw()?;
    let d2 = draw()?;
    Ok((d1, d2))
}
