//! Binary rasters on the unit square, plain-PBM input/output and the
//! built-in letter glyphs.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the built-in glyph rasters.
pub const GLYPH_RESOLUTION: usize = 64;
/// Stroke width of the built-in glyphs, in domain units.
pub const GLYPH_STROKE: f64 = 0.15;

/// A binary raster covering `[0,1]²`. Row 0 is the top edge (`y = 1`),
/// column 0 the left edge (`x = 0`), as in image files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2 {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask2 {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::invalid(format!(
                "mask of {width}×{height} needs {} cells, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Mask2 { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Mask2 {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Mask2 {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Centre of cell `(col, row)` in domain coordinates.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) / self.width as f64,
            1.0 - (row as f64 + 0.5) / self.height as f64,
        )
    }

    /// Cell containing `(x, y)`, clamped to the raster.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let col = ((x * self.width as f64).floor().max(0.0) as usize).min(self.width - 1);
        let row = (((1.0 - y) * self.height as f64).floor().max(0.0) as usize).min(self.height - 1);
        (col, row)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
            return false;
        }
        let (c, r) = self.cell_of(x, y);
        self.get(c, r)
    }

    /// Whether any set cell lies on the outer rim of the raster.
    pub fn touches_border(&self) -> bool {
        (0..self.width).any(|c| self.get(c, 0) || self.get(c, self.height - 1))
            || (0..self.height).any(|r| self.get(0, r) || self.get(self.width - 1, r))
    }

    /// Distance from `(x, y)` to the nearest set cell centre, searched within
    /// `reach`; `None` when no set cell is that close.
    pub fn distance_within(&self, x: f64, y: f64, reach: f64) -> Option<f64> {
        let (c0, r0) = self.cell_of(x, y);
        let rc = (reach * self.width as f64).ceil() as usize + 1;
        let rr = (reach * self.height as f64).ceil() as usize + 1;
        let mut best: Option<f64> = None;
        for r in r0.saturating_sub(rr)..=(r0 + rr).min(self.height - 1) {
            for c in c0.saturating_sub(rc)..=(c0 + rc).min(self.width - 1) {
                if self.get(c, r) {
                    let (cx, cy) = self.cell_center(c, r);
                    let d = ((cx - x).powi(2) + (cy - y).powi(2)).sqrt();
                    if d <= reach && best.is_none_or(|b| d < b) {
                        best = Some(d);
                    }
                }
            }
        }
        best
    }

    /// Plain (`P1`) portable bitmap text.
    pub fn to_pbm(&self, comment: Option<&str>) -> String {
        let mut out = String::from("P1\n");
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        let _ = writeln!(out, "{} {}", self.width, self.height);
        for r in 0..self.height {
            let row: Vec<&str> = (0..self.width).map(|c| if self.get(c, r) { "1" } else { "0" }).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_pbm(text: &str) -> Result<Self> {
        let bad = |detail: &str| Error::format("PBM mask", detail);
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace());
        if tokens.next() != Some("P1") {
            return Err(bad("missing P1 magic"));
        }
        let mut dim = || -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| bad("missing dimensions"))?
                .parse::<usize>()
                .map_err(|e| bad(&e.to_string()))
        };
        let width = dim()?;
        let height = dim()?;
        let mut bits = Vec::with_capacity(width * height);
        for tok in tokens {
            // Plain PBM allows digits without separators.
            for ch in tok.chars() {
                match ch {
                    '0' => bits.push(false),
                    '1' => bits.push(true),
                    other => return Err(bad(&format!("unexpected character {other:?}"))),
                }
            }
        }
        if bits.len() != width * height {
            return Err(bad(&format!("expected {} cells, found {}", width * height, bits.len())));
        }
        Mask2::new(width, height, bits)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mask2::from_pbm(&text)
    }

    pub fn write(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        std::fs::write(path, self.to_pbm(comment)).map_err(|e| Error::io(path, e))
    }
}

/// Built-in letter shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Glyph {
    A,
    C,
    Omega,
}

impl Glyph {
    pub const ALL: [Glyph; 3] = [Glyph::A, Glyph::C, Glyph::Omega];

    pub fn name(self) -> &'static str {
        match self {
            Glyph::A => "A",
            Glyph::C => "C",
            Glyph::Omega => "Omega",
        }
    }

    pub fn from_name(name: &str) -> Option<Glyph> {
        match name {
            "A" | "a" => Some(Glyph::A),
            "C" | "c" => Some(Glyph::C),
            "Omega" | "omega" | "Ω" => Some(Glyph::Omega),
            _ => None,
        }
    }

    fn strokes(self) -> Vec<Stroke> {
        match self {
            Glyph::A => vec![
                Stroke::Segment([0.5, 0.85], [0.18, 0.15]),
                Stroke::Segment([0.5, 0.85], [0.82, 0.15]),
                Stroke::Segment([0.31, 0.4], [0.69, 0.4]),
            ],
            Glyph::C => vec![Stroke::Arc {
                center: [0.5, 0.5],
                radius: 0.3,
                from: PI / 4.0,
                to: 7.0 * PI / 4.0,
            }],
            Glyph::Omega => {
                let center = [0.5, 0.56];
                let radius = 0.26;
                let open = 35f64.to_radians();
                let from = -PI / 2.0 + open;
                let to = 3.0 * PI / 2.0 - open;
                let right = [center[0] + radius * from.cos(), center[1] + radius * from.sin()];
                let left = [center[0] + radius * to.cos(), center[1] + radius * to.sin()];
                vec![
                    Stroke::Arc { center, radius, from, to },
                    Stroke::Segment(right, [right[0], 0.2]),
                    Stroke::Segment(left, [left[0], 0.2]),
                    Stroke::Segment([right[0], 0.2], [0.82, 0.2]),
                    Stroke::Segment([left[0], 0.2], [0.18, 0.2]),
                ]
            }
        }
    }

    /// Rasterizes the glyph: a cell is set when its centre lies within half
    /// a stroke width of one of the strokes.
    pub fn rasterize(self, resolution: usize, stroke: f64) -> Mask2 {
        let strokes = self.strokes();
        let mut mask = Mask2::empty(resolution, resolution);
        for r in 0..resolution {
            for c in 0..resolution {
                let (x, y) = mask.cell_center(c, r);
                mask.bits[r * resolution + c] = strokes.iter().any(|s| s.distance([x, y]) <= 0.5 * stroke);
            }
        }
        mask
    }

    pub fn mask(self) -> Mask2 {
        self.rasterize(GLYPH_RESOLUTION, GLYPH_STROKE)
    }
}

enum Stroke {
    Segment([f64; 2], [f64; 2]),
    /// Counter-clockwise arc from angle `from` to `to` (`to > from`).
    Arc { center: [f64; 2], radius: f64, from: f64, to: f64 },
}

impl Stroke {
    fn distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Stroke::Segment(a, b) => {
                let ab = [b[0] - a[0], b[1] - a[1]];
                let ap = [p[0] - a[0], p[1] - a[1]];
                let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
                ((ap[0] - t * ab[0]).powi(2) + (ap[1] - t * ab[1]).powi(2)).sqrt()
            }
            Stroke::Arc { center, radius, from, to } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let mut theta = dy.atan2(dx);
                while theta < from {
                    theta += 2.0 * PI;
                }
                if theta <= to {
                    ((dx * dx + dy * dy).sqrt() - radius).abs()
                } else {
                    let end = |a: f64| ((p[0] - center[0] - radius * a.cos()).powi(2) + (p[1] - center[1] - radius * a.sin()).powi(2)).sqrt();
                    end(from).min(end(to))
                }
            }
        }
    }
}
