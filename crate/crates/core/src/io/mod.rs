//! File formats shared by the library and the CLI: sample CSVs, 8-bit
//! grayscale images, scatter plots, and the binary framing used by
//! checkpoints and latent files.

pub(crate) mod framing;

use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, Rgb, RgbImage};
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::synth::{GrayPatch, PointSet};

/// Rows of samples read from CSV, with the optional `label` column split off.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub data: Array2<f64>,
    pub labels: Option<Vec<u32>>,
}

fn column_names(dim: usize) -> Vec<String> {
    if dim == 2 {
        vec!["x".into(), "y".into()]
    } else {
        (0..dim).map(|i| format!("c{i}")).collect()
    }
}

/// CSV with `x,y` (or `c0..c{d-1}`) columns and an optional trailing `label`.
/// Values use the shortest representation that parses back to the same f64.
pub fn samples_to_csv(data: ArrayView2<f64>, labels: Option<&[u32]>) -> String {
    let mut header = column_names(data.ncols());
    if labels.is_some() {
        header.push("label".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, row) in data.rows().into_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        if let Some(l) = labels {
            fields.push(l[i].to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn point_set_to_csv(set: &PointSet) -> String {
    samples_to_csv(set.to_array().view(), Some(&set.labels))
}

pub fn samples_from_csv(text: &str) -> Result<Samples> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::format(format!("bad csv header: {e}")))?
        .clone();
    let label_col = headers.iter().position(|h| h == "label");
    let dim = headers.len() - usize::from(label_col.is_some());
    if dim == 0 {
        return Err(Error::format("csv has no data columns"));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(format!("csv row {}: {e}", line + 1)))?;
        if record.len() != headers.len() {
            return Err(Error::format(format!(
                "csv row {} has {} fields",
                line + 1,
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_col {
                labels.push(
                    field
                        .parse::<u32>()
                        .map_err(|e| Error::format(format!("csv row {} label: {e}", line + 1)))?,
                );
            } else {
                values.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::format(format!("csv row {}: {e}", line + 1)))?,
                );
            }
        }
    }
    let rows = values.len() / dim;
    let data =
        Array2::from_shape_vec((rows, dim), values).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(Samples {
        data,
        labels: label_col.map(|_| labels),
    })
}

pub fn read_samples(path: &Path) -> Result<Samples> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    samples_from_csv(&text)
}

/// Reads an 8-bit grayscale image (PGM, PNG, ...) into `[0, 1]`.
pub fn read_gray(path: &Path) -> Result<GrayPatch> {
    let img = image::open(path)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        .to_luma8();
    gray_from_image(&img)
}

pub fn gray_from_bytes(bytes: &[u8]) -> Result<GrayPatch> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::format(e.to_string()))?
        .to_luma8();
    gray_from_image(&img)
}

fn gray_from_image(img: &GrayImage) -> Result<GrayPatch> {
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    GrayPatch::new(h as usize, w as usize, pixels)
}

pub fn to_gray_image(patch: &GrayPatch) -> GrayImage {
    GrayImage::from_fn(patch.width as u32, patch.height as u32, |x, y| {
        let v = patch.get(y as usize, x as usize).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    })
}

/// Rounds to the nearest 8-bit level, the precision of saved images.
pub fn quantize_8bit(patch: &GrayPatch) -> GrayPatch {
    let pixels = patch
        .pixels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
        .collect();
    GrayPatch {
        pixels,
        ..patch.clone()
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(Error::config(format!(
            "unsupported image extension for {} (use .png or .pgm)",
            path.display()
        ))),
    }
}

/// Writes 8-bit PNG or PGM depending on the extension.
pub fn write_gray(path: &Path, patch: &GrayPatch) -> Result<()> {
    let format = format_for(path)?;
    to_gray_image(patch)
        .save_with_format(path, format)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

pub fn gray_to_png_bytes(patch: &GrayPatch) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    to_gray_image(patch)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::format(e.to_string()))?;
    Ok(out.into_inner())
}

/// Images side by side with a one-pixel gray gutter.
pub fn side_by_side(images: &[&GrayPatch]) -> Result<GrayPatch> {
    let height = images.iter().map(|p| p.height).max().unwrap_or(0);
    if height == 0 {
        return Err(Error::config("nothing to lay out"));
    }
    let width = images.iter().map(|p| p.width).sum::<usize>() + images.len() - 1;
    let mut out = GrayPatch::filled(height, width, 0.5);
    let mut col0 = 0;
    for img in images {
        for r in 0..img.height {
            for c in 0..img.width {
                out.set(r, col0 + c, img.get(r, c));
            }
        }
        col0 += img.width + 1;
    }
    Ok(out)
}

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [23, 190, 207],
];

/// Scatter of 2D points colored by label, drawn into a square PNG covering
/// `[-extent, extent]^2`.
pub fn scatter_png(
    path: &Path,
    points: ArrayView2<f64>,
    labels: &[u32],
    extent: f64,
    size: u32,
) -> Result<()> {
    if points.ncols() != 2 || labels.len() != points.nrows() {
        return Err(Error::Shape {
            expected: vec![labels.len(), 2],
            found: points.shape().to_vec(),
        });
    }
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    let to_px = |v: f64| ((v + extent) / (2.0 * extent) * (size - 1) as f64).round() as i64;
    for (row, label) in points.rows().into_iter().zip(labels) {
        let (px, py) = (to_px(row[0]), size as i64 - 1 - to_px(row[1]));
        let color = Rgb(PALETTE[*label as usize % PALETTE.len()]);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let (x, y) = (px + dx, py + dy);
                if (0..size as i64).contains(&x) && (0..size as i64).contains(&y) {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}
