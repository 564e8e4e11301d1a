//! Bit-exact binary formats (`DGRD`, `PMAP`, `CONF`, `CORR`, `LABL`) and the text
//! correspondence format.
//!
//! Every binary file is little-endian. Headers are a 4-byte magic followed by
//! u32 fields; payloads are f32 in row-major pixel order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{
    ConfidenceMap, CorrespondenceSet, DescriptorGrid, GridError, GridResult, GridSize, PixelCoord,
    PointMap,
};

const DGRD_MAGIC: [u8; 4] = *b"DGRD";
const PMAP_MAGIC: [u8; 4] = *b"PMAP";
const CONF_MAGIC: [u8; 4] = *b"CONF";
const CORR_MAGIC: [u8; 4] = *b"CORR";
const LABL_MAGIC: [u8; 4] = *b"LABL";
const VERSION: u32 = 1;
const FLAG_NORMALIZED: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> GridResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(GridError::Truncated {
                expected: self.pos + n,
                found: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> GridResult<()> {
        let mut found = [0u8; 4];
        let avail = self.buf.len().min(4);
        found[..avail].copy_from_slice(&self.buf[..avail]);
        if avail < 4 || found != expected {
            return Err(GridError::BadMagic { expected, found });
        }
        self.pos = 4;
        Ok(())
    }

    fn u32(&mut self) -> GridResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> GridResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes_for(&self, count: usize, width: usize) -> GridResult<usize> {
        count.checked_mul(width).ok_or(GridError::Truncated {
            expected: usize::MAX,
            found: self.buf.len(),
        })
    }

    fn f32s(&mut self, count: usize) -> GridResult<Vec<f32>> {
        let bytes = self.take(self.bytes_for(count, 4)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    fn version(&mut self) -> GridResult<()> {
        match self.u32()? {
            VERSION => Ok(()),
            v => Err(GridError::UnsupportedVersion(v)),
        }
    }
}

fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> GridResult<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    fill(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_f32s(w: &mut dyn Write, values: &[f32]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_descriptor_grid(path: impl AsRef<Path>) -> GridResult<DescriptorGrid> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(DGRD_MAGIC)?;
    r.version()?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let flags = r.u32()?;
    let data = r.f32s(height.saturating_mul(width).saturating_mul(dim))?;
    DescriptorGrid::from_parts(height, width, dim, data, flags & FLAG_NORMALIZED != 0)
}

pub fn save_descriptor_grid(grid: &DescriptorGrid, path: impl AsRef<Path>) -> GridResult<()> {
    write_file(path.as_ref(), |w| {
        w.write_all(&DGRD_MAGIC)?;
        let flags = if grid.is_normalized() { FLAG_NORMALIZED } else { 0 };
        for field in [
            VERSION,
            grid.height() as u32,
            grid.width() as u32,
            grid.dim() as u32,
            flags,
        ] {
            w.write_all(&field.to_le_bytes())?;
        }
        write_f32s(w, grid.data())
    })
}

pub fn load_point_map(path: impl AsRef<Path>) -> GridResult<PointMap> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(PMAP_MAGIC)?;
    r.version()?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let n = height * width;
    let flat = r.f32s(n * 3)?;
    let mask = r.take(n)?;
    let points = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let mut valid = Vec::with_capacity(n);
    for (idx, &b) in mask.iter().enumerate() {
        match b {
            0 => valid.push(false),
            1 => valid.push(true),
            other => {
                return Err(GridError::Parse {
                    line: 0,
                    msg: format!(
                        "validity byte {other} at pixel {}",
                        PixelCoord::from_linear(idx, width)
                    ),
                })
            }
        }
    }
    PointMap::new(height, width, points, valid)
}

pub fn save_point_map(map: &PointMap, path: impl AsRef<Path>) -> GridResult<()> {
    write_file(path.as_ref(), |w| {
        w.write_all(&PMAP_MAGIC)?;
        for field in [VERSION, map.height() as u32, map.width() as u32] {
            w.write_all(&field.to_le_bytes())?;
        }
        for p in map.points() {
            write_f32s(w, p)?;
        }
        let mask: Vec<u8> = map.valid().iter().map(|&v| v as u8).collect();
        w.write_all(&mask)
    })
}

pub fn load_confidence_map(path: impl AsRef<Path>) -> GridResult<ConfidenceMap> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(CONF_MAGIC)?;
    r.version()?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let values = r.f32s(height.saturating_mul(width))?;
    ConfidenceMap::new(height, width, values)
}

pub fn save_confidence_map(map: &ConfidenceMap, path: impl AsRef<Path>) -> GridResult<()> {
    write_file(path.as_ref(), |w| {
        w.write_all(&CONF_MAGIC)?;
        for field in [VERSION, map.height() as u32, map.width() as u32] {
            w.write_all(&field.to_le_bytes())?;
        }
        write_f32s(w, map.values())
    })
}

/// Saves a `u32` label per pixel: magic `LABL`, version, height, width,
/// then the labels in row-major order.
pub fn save_label_grid(labels: &[u32], size: GridSize, path: impl AsRef<Path>) -> GridResult<()> {
    if labels.len() != size.pixels() {
        return Err(GridError::LengthMismatch {
            expected: size.pixels(),
            found: labels.len(),
        });
    }
    write_file(path.as_ref(), |w| {
        w.write_all(&LABL_MAGIC)?;
        for field in [VERSION, size.height as u32, size.width as u32] {
            w.write_all(&field.to_le_bytes())?;
        }
        for l in labels {
            w.write_all(&l.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn load_label_grid(path: impl AsRef<Path>) -> GridResult<(GridSize, Vec<u32>)> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(LABL_MAGIC)?;
    r.version()?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let bytes = r.take(r.bytes_for(height.saturating_mul(width), 4)?)?;
    let labels = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((GridSize::new(width, height), labels))
}

/// Loads a correspondence file, detecting the binary `CORR` format by its
/// magic and falling back to the text format otherwise.
pub fn load_correspondences(path: impl AsRef<Path>) -> GridResult<CorrespondenceSet> {
    let buf = fs::read(path)?;
    if buf.starts_with(&CORR_MAGIC) {
        parse_binary_correspondences(&buf)
    } else {
        let text = String::from_utf8(buf).map_err(|e| GridError::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        parse_text_correspondences(&text)
    }
}

fn parse_binary_correspondences(buf: &[u8]) -> GridResult<CorrespondenceSet> {
    let mut r = Reader::new(buf);
    r.magic(CORR_MAGIC)?;
    let count = r.u64()? as usize;
    let bytes = r.take(r.bytes_for(count, 16)?)?;
    let pairs = bytes
        .chunks_exact(16)
        .map(|c| {
            let f = |k: usize| u32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
            (PixelCoord::new(f(0), f(1)), PixelCoord::new(f(2), f(3)))
        })
        .collect();
    CorrespondenceSet::new(pairs)
}

/// Parses `u1 v1 u2 v2 [flag]` lines; `#` starts a comment. A flag of 1
/// marks a padding pair. When no line carries a flag the set is unflagged.
pub fn parse_text_correspondences(text: &str) -> GridResult<CorrespondenceSet> {
    let mut pairs = Vec::new();
    let mut flags = Vec::new();
    let mut any_flag = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| GridError::Parse {
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(err(format!("expected 4 or 5 fields, found {}", fields.len())));
        }
        let nums = fields[..4]
            .iter()
            .map(|f| f.parse::<u32>().map_err(|e| err(format!("{f:?}: {e}"))))
            .collect::<GridResult<Vec<u32>>>()?;
        let flag = match fields.get(4) {
            None => false,
            Some(&"0") => {
                any_flag = true;
                false
            }
            Some(&"1") => {
                any_flag = true;
                true
            }
            Some(f) => return Err(err(format!("flag must be 0 or 1, found {f:?}"))),
        };
        pairs.push((
            PixelCoord::new(nums[0], nums[1]),
            PixelCoord::new(nums[2], nums[3]),
        ));
        flags.push(flag);
    }
    if any_flag {
        CorrespondenceSet::with_padding(pairs, flags)
    } else {
        CorrespondenceSet::new(pairs)
    }
}

pub fn save_correspondences_text(set: &CorrespondenceSet, path: impl AsRef<Path>) -> GridResult<()> {
    write_file(path.as_ref(), |w| {
        writeln!(w, "# u1 v1 u2 v2{}", if set.flags().is_some() { " flag" } else { "" })?;
        for (n, (a, b)) in set.pairs().iter().enumerate() {
            match set.flags() {
                Some(f) => writeln!(w, "{} {} {} {} {}", a.u, a.v, b.u, b.v, f[n] as u8)?,
                None => writeln!(w, "{} {} {} {}", a.u, a.v, b.u, b.v)?,
            }
        }
        Ok(())
    })
}

/// Writes the binary `CORR` format. Padding flags are not representable
/// there, so flagged sets must use the text format.
pub fn save_correspondences_binary(
    set: &CorrespondenceSet,
    path: impl AsRef<Path>,
) -> GridResult<()> {
    if set.flags().is_some_and(|f| f.iter().any(|&x| x)) {
        return Err(GridError::Parse {
            line: 0,
            msg: "binary CORR files cannot carry padding flags".into(),
        });
    }
    write_file(path.as_ref(), |w| {
        w.write_all(&CORR_MAGIC)?;
        w.write_all(&(set.len() as u64).to_le_bytes())?;
        for (a, b) in set.pairs() {
            for x in [a.u, a.v, b.u, b.v] {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    })
}
