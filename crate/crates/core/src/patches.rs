//! Tiling large images into model-sized windows and averaging them back.
//!
//! `sub_window` tiles without overlap, reflect-padding the right and bottom
//! remainders. `slide_window` moves the window by a stride and clamps the
//! last row/column of windows to the image edge. `stitch` takes the
//! unweighted mean of every patch covering a pixel.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_gray, write_gray};
use crate::synth::GrayPatch;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patches: Vec<GrayPatch>,
    /// `(row, col)` of each patch's top-left corner on the padded canvas.
    pub origins: Vec<(usize, usize)>,
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub source_dims: (usize, usize),
    /// Canvas size including reflection padding; equals `source_dims` for
    /// slide-window grids.
    pub padded_dims: (usize, usize),
}

/// Geometry of a grid without pixel data, stored next to the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub source_dims: (usize, usize),
    pub padded_dims: (usize, usize),
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            window: self.window,
            stride: self.stride,
            source_dims: self.source_dims,
            padded_dims: self.padded_dims,
        }
    }

    /// Same geometry, new patch contents (e.g. translated patches).
    pub fn with_patches(&self, patches: Vec<GrayPatch>) -> Result<Self> {
        if patches.len() != self.patches.len() {
            return Err(Error::Shape {
                expected: vec![self.patches.len()],
                found: vec![patches.len()],
            });
        }
        Ok(Self {
            patches,
            ..self.clone()
        })
    }

    /// `patch_index,row,col,h,w` per patch.
    pub fn manifest_csv(&self) -> String {
        let mut out = String::from("patch_index,row,col,h,w\n");
        for (i, (r, c)) in self.origins.iter().enumerate() {
            let _ = writeln!(out, "{i},{r},{c},{},{}", self.window.0, self.window.1);
        }
        out
    }

    /// Writes `manifest.csv`, `grid.json` and one PGM per patch.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = dir.join("manifest.csv");
        std::fs::write(&manifest, self.manifest_csv()).map_err(|e| Error::io(&manifest, e))?;
        let geometry = dir.join("grid.json");
        let json = serde_json::to_string_pretty(&self.geometry())
            .map_err(|e| Error::format(e.to_string()))?;
        std::fs::write(&geometry, json).map_err(|e| Error::io(&geometry, e))?;
        for (i, p) in self.patches.iter().enumerate() {
            write_gray(&dir.join(patch_file_name(i)), p)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let geometry_path = dir.join("grid.json");
        let text =
            std::fs::read_to_string(&geometry_path).map_err(|e| Error::io(&geometry_path, e))?;
        let g: GridGeometry =
            serde_json::from_str(&text).map_err(|e| Error::format(e.to_string()))?;
        let manifest_path = dir.join("manifest.csv");
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let mut origins = Vec::new();
        let mut patches = Vec::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            let fields: Vec<usize> = line
                .split(',')
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(format!("manifest line {}: {e}", line_no + 1)))?;
            let [index, row, col, h, w] = fields[..] else {
                return Err(Error::format(format!(
                    "manifest line {} needs 5 fields",
                    line_no + 1
                )));
            };
            if index != origins.len() || (h, w) != g.window {
                return Err(Error::format(format!(
                    "manifest line {} is inconsistent",
                    line_no + 1
                )));
            }
            origins.push((row, col));
            patches.push(read_gray(&dir.join(patch_file_name(index)))?);
        }
        Ok(Self {
            patches,
            origins,
            window: g.window,
            stride: g.stride,
            source_dims: g.source_dims,
            padded_dims: g.padded_dims,
        })
    }
}

pub fn patch_file_name(index: usize) -> String {
    format!("patch_{index:05}.pgm")
}

/// Reflect-101 index into `0..n`.
fn reflect(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * n - 2 - i
    }
}

fn check_window(image: &GrayPatch, window: (usize, usize)) -> Result<()> {
    if window.0 == 0 || window.1 == 0 || window.0 > image.height || window.1 > image.width {
        return Err(Error::config(format!(
            "window {window:?} does not fit image {:?}",
            image.dims()
        )));
    }
    Ok(())
}

fn extract(image: &GrayPatch, origin: (usize, usize), window: (usize, usize)) -> GrayPatch {
    let mut pixels = Vec::with_capacity(window.0 * window.1);
    for r in 0..window.0 {
        let sr = reflect(origin.0 + r, image.height);
        for c in 0..window.1 {
            pixels.push(image.get(sr, reflect(origin.1 + c, image.width)));
        }
    }
    GrayPatch {
        height: window.0,
        width: window.1,
        pixels,
    }
}

/// Non-overlapping tiling; `ceil(H/h) * ceil(W/w)` patches.
pub fn sub_window(image: &GrayPatch, window: (usize, usize)) -> Result<PatchGrid> {
    check_window(image, window)?;
    let rows = image.height.div_ceil(window.0);
    let cols = image.width.div_ceil(window.1);
    let mut origins = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            origins.push((i * window.0, j * window.1));
        }
    }
    let patches = origins.iter().map(|o| extract(image, *o, window)).collect();
    Ok(PatchGrid {
        patches,
        origins,
        window,
        stride: window,
        source_dims: image.dims(),
        padded_dims: (rows * window.0, cols * window.1),
    })
}

fn axis_origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|o| o + window <= len)
        .collect();
    if out.last().is_none_or(|o| o + window < len) {
        out.push(len - window);
    }
    out
}

/// Strided overlapping tiling with the last window clamped to the edge.
pub fn slide_window(
    image: &GrayPatch,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<PatchGrid> {
    check_window(image, window)?;
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::config("stride must be at least 1"));
    }
    if stride.0 > window.0 || stride.1 > window.1 {
        return Err(Error::config(format!(
            "stride {stride:?} larger than window {window:?} leaves gaps"
        )));
    }
    let rows = axis_origins(image.height, window.0, stride.0);
    let cols = axis_origins(image.width, window.1, stride.1);
    let mut origins = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            origins.push((r, c));
        }
    }
    let patches = origins.iter().map(|o| extract(image, *o, window)).collect();
    Ok(PatchGrid {
        patches,
        origins,
        window,
        stride,
        source_dims: image.dims(),
        padded_dims: image.dims(),
    })
}

/// Averages overlapping patches and crops the padding away.
pub fn stitch(grid: &PatchGrid) -> Result<GrayPatch> {
    let (ph, pw) = grid.padded_dims;
    let (sh, sw) = grid.source_dims;
    if grid.patches.len() != grid.origins.len() || sh > ph || sw > pw {
        return Err(Error::config("inconsistent patch grid"));
    }
    let mut sum = vec![0.0; ph * pw];
    let mut count = vec![0u32; ph * pw];
    for (patch, &(r0, c0)) in grid.patches.iter().zip(&grid.origins) {
        if patch.dims() != grid.window || r0 + patch.height > ph || c0 + patch.width > pw {
            return Err(Error::Shape {
                expected: vec![grid.window.0, grid.window.1],
                found: vec![patch.height, patch.width],
            });
        }
        for r in 0..patch.height {
            for c in 0..patch.width {
                let k = (r0 + r) * pw + c0 + c;
                sum[k] += patch.get(r, c);
                count[k] += 1;
            }
        }
    }
    let mut pixels = Vec::with_capacity(sh * sw);
    for r in 0..sh {
        for c in 0..sw {
            let k = r * pw + c;
            if count[k] == 0 {
                return Err(Error::Internal(format!(
                    "pixel ({r}, {c}) not covered by any patch"
                )));
            }
            pixels.push(sum[k] / count[k] as f64);
        }
    }
    GrayPatch::new(sh, sw, pixels)
}

/// Number of patches covering each source pixel.
pub fn coverage(grid: &PatchGrid) -> Vec<u32> {
    let (sh, sw) = grid.source_dims;
    let mut count = vec![0u32; sh * sw];
    for &(r0, c0) in &grid.origins {
        for r in r0..(r0 + grid.window.0).min(sh) {
            for c in c0..(c0 + grid.window.1).min(sw) {
                count[r * sw + c] += 1;
            }
        }
    }
    count
}
