//! Coarse-to-fine manifest: where the coarse and per-window descriptor grids
//! of an image pair live on disk.
//!
//! ```json
//! {
//!   "version": 1,
//!   "size1": [1024, 768],
//!   "size2": [1024, 768],
//!   "coarse": {"d1": "coarse1.dgrd", "d2": "coarse2.dgrd"},
//!   "windows1": [[0, 0, 512, 512], [256, 0, 768, 512]],
//!   "windows2": [[0, 0, 512, 512]],
//!   "grids": {"1:0,0,512,512": "w1_0.dgrd", "2:0,0,512,512": "w2_0.dgrd"}
//! }
//! ```
//!
//! Windows are `[x0, y0, x1, y1]` in full-resolution pixels. Grid keys are
//! `<image>:<x0>,<y0>,<x1>,<y1>`. Relative paths resolve against the
//! manifest's directory. `size1`/`size2` default to the extent of the
//! window lists.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use recimatch::coarse2fine::{DescriptorProvider, ImageId, ProviderError, Window};
use recimatch::grids::{load_descriptor_grid, DescriptorGrid, GridSize};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoarsePaths {
    pub d1: PathBuf,
    pub d2: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size1: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size2: Option<[usize; 2]>,
    pub coarse: CoarsePaths,
    pub windows1: Vec<[usize; 4]>,
    pub windows2: Vec<[usize; 4]>,
    pub grids: BTreeMap<String, PathBuf>,
}

fn default_version() -> u32 {
    MANIFEST_VERSION
}

pub fn grid_key(image: ImageId, w: &Window) -> String {
    let i = match image {
        ImageId::First => 1,
        ImageId::Second => 2,
    };
    format!("{i}:{},{},{},{}", w.x0, w.y0, w.x1, w.y1)
}

/// A validated manifest with absolute paths.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub size1: GridSize,
    pub size2: GridSize,
    pub coarse1: PathBuf,
    pub coarse2: PathBuf,
    pub windows1: Vec<Window>,
    pub windows2: Vec<Window>,
    grids: BTreeMap<String, PathBuf>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ManifestFile = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_file(file, base).map_err(|msg| CliError::Manifest {
            path: path.to_path_buf(),
            msg,
        })
    }

    pub fn from_file(file: ManifestFile, base: &Path) -> Result<Self, String> {
        if file.version != MANIFEST_VERSION {
            return Err(format!("unsupported version {}", file.version));
        }
        let windows = |list: &[[usize; 4]], name: &str| -> Result<Vec<Window>, String> {
            if list.is_empty() {
                return Err(format!("{name} is empty"));
            }
            list.iter()
                .map(|&[x0, y0, x1, y1]| {
                    if x0 < x1 && y0 < y1 {
                        Ok(Window::new(x0, y0, x1, y1))
                    } else {
                        Err(format!("{name}: degenerate window [{x0}, {y0}, {x1}, {y1}]"))
                    }
                })
                .collect()
        };
        let windows1 = windows(&file.windows1, "windows1")?;
        let windows2 = windows(&file.windows2, "windows2")?;
        let size = |given: Option<[usize; 2]>, ws: &[Window], name: &str| {
            let extent = GridSize::new(
                ws.iter().map(|w| w.x1).max().unwrap(),
                ws.iter().map(|w| w.y1).max().unwrap(),
            );
            match given {
                None => Ok(extent),
                Some([w, h]) if w >= extent.width && h >= extent.height => Ok(GridSize::new(w, h)),
                Some([w, h]) => Err(format!("{name} {w}x{h} is smaller than its windows")),
            }
        };
        let size1 = size(file.size1, &windows1, "size1")?;
        let size2 = size(file.size2, &windows2, "size2")?;
        let resolve = |p: &Path| base.join(p);
        let grids: BTreeMap<String, PathBuf> =
            file.grids.iter().map(|(k, p)| (k.clone(), resolve(p))).collect();
        for (image, ws) in [(ImageId::First, &windows1), (ImageId::Second, &windows2)] {
            for w in ws.iter() {
                let key = grid_key(image, w);
                if !grids.contains_key(&key) {
                    return Err(format!("no grid for window {key}"));
                }
            }
        }
        Ok(Self {
            size1,
            size2,
            coarse1: resolve(&file.coarse.d1),
            coarse2: resolve(&file.coarse.d2),
            windows1,
            windows2,
            grids,
        })
    }

    fn size(&self, image: ImageId) -> GridSize {
        match image {
            ImageId::First => self.size1,
            ImageId::Second => self.size2,
        }
    }
}

/// Serves the grids named by a manifest. Grids are returned at their stored
/// resolution; the coarse grid answers requests for the whole image at a
/// resolution other than full.
pub struct FileProvider {
    manifest: Manifest,
}

impl FileProvider {
    pub fn new(manifest: Manifest) -> Self {
        Self { manifest }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }
}

impl DescriptorProvider for FileProvider {
    fn descriptors(
        &self,
        image: ImageId,
        window: &Window,
        resolution: GridSize,
    ) -> Result<DescriptorGrid, ProviderError> {
        let whole = *window == Window::full(self.manifest.size(image));
        let coarse = match image {
            ImageId::First => &self.manifest.coarse1,
            ImageId::Second => &self.manifest.coarse2,
        };
        let key = grid_key(image, window);
        let path = match self.manifest.grids.get(&key) {
            Some(p) if !(whole && resolution != window.size()) => p,
            _ if whole => coarse,
            _ => return Err(format!("no grid for window {key}").into()),
        };
        load_descriptor_grid(path).map_err(|e| format!("{}: {e}", path.display()).into())
    }
}
