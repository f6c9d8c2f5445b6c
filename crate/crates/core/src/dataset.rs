//! Datasets of visible vectors: the 16x16 handwritten-digit text format and
//! synthetic bars-and-stripes patterns.

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{QahmError, Result};
use crate::ising::MomentStats;
use crate::nets::{DeepNetwork, LayerWidths};

pub const DIGIT_SIDE: usize = 16;
pub const DIGIT_PIXELS: usize = DIGIT_SIDE * DIGIT_SIDE;
pub const DIGIT_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelKind {
    /// Real pixels in `[-1, 1]`, generated by the `tanh` head.
    Continuous,
    /// `±1` pixels, generated by Bernoulli units.
    Binary,
}

/// How a visible vector is laid out: pixels first, then class spins.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VisibleLayout {
    pub pixels: usize,
    pub pixel_kind: PixelKind,
    pub classes: usize,
    pub image_rows: usize,
    pub image_cols: usize,
}

impl VisibleLayout {
    pub fn digits() -> Self {
        VisibleLayout {
            pixels: DIGIT_PIXELS,
            pixel_kind: PixelKind::Continuous,
            classes: DIGIT_CLASSES,
            image_rows: DIGIT_SIDE,
            image_cols: DIGIT_SIDE,
        }
    }

    pub fn width(&self) -> usize {
        self.pixels + self.classes
    }

    /// Network widths for this layout and the given hidden widths.
    pub fn layer_widths(&self, hidden: Vec<usize>) -> Result<LayerWidths> {
        match self.pixel_kind {
            PixelKind::Continuous => LayerWidths::new(self.pixels, self.classes, hidden),
            PixelKind::Binary => LayerWidths::new(0, self.pixels + self.classes, hidden),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisibleRecord {
    pub pixels: Vec<f64>,
    /// One-hot `±1` class coding; empty for unlabeled data.
    pub class_spins: Vec<f64>,
}

impl VisibleRecord {
    pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
        (0..classes).map(|c| if c == label { 1.0 } else { -1.0 }).collect()
    }

    pub fn label(&self) -> Option<usize> {
        self.class_spins.iter().position(|&s| s > 0.0)
    }

    /// Pixels followed by class spins.
    pub fn visible(&self) -> Vec<f64> {
        let mut v = self.pixels.clone();
        v.extend_from_slice(&self.class_spins);
        v
    }
}

/// Affine map from a source pixel range to `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelRange {
    pub low: f64,
    pub high: f64,
}

impl PixelRange {
    pub fn rescale(&self, x: f64) -> f64 {
        2.0 * (x - self.low) / (self.high - self.low) - 1.0
    }

    pub fn restore(&self, p: f64) -> f64 {
        self.low + (p + 1.0) * (self.high - self.low) / 2.0
    }

    /// Picks `[0, 255]`, `[0, 2]` or `[-1, 1]` from the data extrema.
    pub fn detect(min: f64, max: f64) -> Result<Self> {
        let range = if min >= 0.0 && max > 2.0 && max <= 255.0 {
            PixelRange { low: 0.0, high: 255.0 }
        } else if min >= 0.0 && max <= 2.0 {
            PixelRange { low: 0.0, high: 2.0 }
        } else if min >= -1.0 && max <= 1.0 {
            PixelRange { low: -1.0, high: 1.0 }
        } else {
            return Err(QahmError::Format(format!(
                "pixel values span [{min}, {max}], which matches no known source range"
            )));
        };
        Ok(range)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub layout: VisibleLayout,
    pub records: Vec<VisibleRecord>,
    /// Hex SHA-256 of the source bytes, or of the generator parameters.
    pub source_hash: String,
    /// Source pixel range for files, when rescaling was applied.
    pub source_range: Option<PixelRange>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn visible_vectors(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(VisibleRecord::visible).collect()
    }

    /// Parses the digit text format: one record per line, an integer label
    /// 0-9 followed by 256 pixel values.
    pub fn parse_usps16(text: &str, name: &str) -> Result<Self> {
        let mut raw: Vec<(usize, Vec<f64>)> = Vec::new();
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for (ln, line) in text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())) {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let label_str = fields.next().unwrap();
            let label_val: f64 = label_str.parse().map_err(|_| QahmError::Parse {
                line: ln,
                message: format!("bad label `{label_str}`"),
            })?;
            if label_val.fract() != 0.0 || !(0.0..=9.0).contains(&label_val) {
                return Err(QahmError::Parse {
                    line: ln,
                    message: format!("label `{label_str}` is not an integer in 0..=9"),
                });
            }
            let pixels: Vec<f64> = fields
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| QahmError::Parse {
                            line: ln,
                            message: format!("bad pixel value `{s}`"),
                        })
                })
                .collect::<Result<_>>()?;
            if pixels.len() != DIGIT_PIXELS {
                return Err(QahmError::Format(format!(
                    "line {ln} has {} pixel values, expected {DIGIT_PIXELS}",
                    pixels.len()
                )));
            }
            for &p in &pixels {
                min = min.min(p);
                max = max.max(p);
            }
            raw.push((label_val as usize, pixels));
        }
        if raw.is_empty() {
            return Err(QahmError::Format("dataset has no records".into()));
        }
        let range = PixelRange::detect(min, max)?;
        info!(
            "{name}: {} records, source pixel range [{}, {}] (observed [{min}, {max}])",
            raw.len(),
            range.low,
            range.high
        );
        let records = raw
            .into_iter()
            .map(|(label, pixels)| VisibleRecord {
                pixels: pixels.into_iter().map(|p| range.rescale(p).clamp(-1.0, 1.0)).collect(),
                class_spins: VisibleRecord::one_hot(label, DIGIT_CLASSES),
            })
            .collect();
        Ok(Dataset {
            name: name.to_string(),
            layout: VisibleLayout::digits(),
            records,
            source_hash: sha256_hex(text.as_bytes()),
            source_range: Some(range),
        })
    }

    pub fn load_usps16(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| QahmError::io(path, e))?;
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "usps16".into());
        Self::parse_usps16(&text, &name)
    }

    /// Writes records back in the digit text format, pixels in `[-1, 1]`.
    pub fn to_usps16_text(&self) -> Result<String> {
        if self.layout.pixels != DIGIT_PIXELS || self.layout.classes != DIGIT_CLASSES {
            return Err(QahmError::Format("only 16x16 labelled datasets can be exported".into()));
        }
        let mut out = String::new();
        for r in &self.records {
            let label = r
                .label()
                .ok_or_else(|| QahmError::Format("record without a class".into()))?;
            write!(out, "{label}").unwrap();
            for p in &r.pixels {
                write!(out, " {p:.17e}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Every horizontal-bar and vertical-stripe pattern on a `rows x cols`
    /// grid, with the all-on and all-off images kept once.
    pub fn bars_and_stripes(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows > 16 || cols > 16 {
            return Err(QahmError::InvalidParameter(
                "bars-and-stripes needs 1 <= rows, cols <= 16".into(),
            ));
        }
        let mut patterns: Vec<Vec<f64>> = Vec::new();
        let spin = |b: bool| if b { 1.0 } else { -1.0 };
        for mask in 0..1usize << rows {
            patterns.push((0..rows * cols).map(|p| spin((mask >> (p / cols)) & 1 == 1)).collect());
        }
        for mask in 0..1usize << cols {
            let p: Vec<f64> = (0..rows * cols).map(|p| spin((mask >> (p % cols)) & 1 == 1)).collect();
            if !patterns.contains(&p) {
                patterns.push(p);
            }
        }
        Ok(Dataset {
            name: format!("bars-and-stripes-{rows}x{cols}"),
            layout: VisibleLayout {
                pixels: rows * cols,
                pixel_kind: PixelKind::Binary,
                classes: 0,
                image_rows: rows,
                image_cols: cols,
            },
            records: patterns
                .into_iter()
                .map(|pixels| VisibleRecord {
                    pixels,
                    class_spins: Vec::new(),
                })
                .collect(),
            source_hash: sha256_hex(format!("bars-and-stripes {rows} {cols}").as_bytes()),
            source_range: None,
        })
    }

    /// Deterministic shuffled split; `train_fraction` of the records go first.
    pub fn split<R: Rng + ?Sized>(&self, train_fraction: f64, rng: &mut R) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let cut = ((self.len() as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
        let pick = |ids: &[usize], suffix: &str| Dataset {
            name: format!("{}-{suffix}", self.name),
            layout: self.layout,
            records: ids.iter().map(|&i| self.records[i].clone()).collect(),
            source_hash: self.source_hash.clone(),
            source_range: self.source_range,
        };
        (pick(&idx[..cut], "train"), pick(&idx[cut..], "test"))
    }
}

/// Averages deepest-layer samples of the recognition network over all records.
pub fn empirical_moments<R: Rng + ?Sized>(
    dataset: &Dataset,
    recognition: &DeepNetwork,
    rng: &mut R,
) -> Result<MomentStats> {
    let n = recognition.widths().deepest();
    let mut m = MomentStats::zeros(n);
    for r in &dataset.records {
        let t = recognition.recognition_pass(&r.visible(), rng)?;
        m.accumulate(t.deepest().as_slice(), 1.0);
    }
    m.finish(dataset.len().max(1) as f64);
    Ok(m)
}
