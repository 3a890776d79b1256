//! Test media: a homogeneous background `n = 1` with an embedded inclusion
//! of constant index, returned as `m = n²`.

mod mask;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use mask::{Glyph, Mask2, GLYPH_RESOLUTION, GLYPH_STROKE};

use crate::error::{Error, Result};
use crate::grid::{Geometry, Lattice3, ScalarField3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Homogeneous,
    Ball,
    Letter,
}

/// Description of a phantom, as found in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    /// Index of the inclusion; the background index is 1.
    pub n_inclusion: f64,
    pub center: [f64; 3],
    pub radius: f64,
    /// Built-in glyph used when `mask_path` is not given.
    pub glyph: Glyph,
    pub mask_path: Option<PathBuf>,
    /// `z` range over which a letter mask is extruded.
    pub z_extent: [f64; 2],
    /// Width of the C² transition from the inclusion to the background.
    pub smoothing: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            kind: PhantomKind::Ball,
            n_inclusion: 1.5,
            center: [0.5, 0.5, 0.5],
            radius: 0.2,
            glyph: Glyph::A,
            mask_path: None,
            z_extent: [0.3, 0.7],
            smoothing: 0.0,
        }
    }
}

impl PhantomSpec {
    pub fn ball(center: [f64; 3], radius: f64, n_inclusion: f64) -> Self {
        PhantomSpec {
            kind: PhantomKind::Ball,
            center,
            radius,
            n_inclusion,
            ..PhantomSpec::default()
        }
    }

    pub fn letter(glyph: Glyph) -> Self {
        PhantomSpec {
            kind: PhantomKind::Letter,
            glyph,
            ..PhantomSpec::default()
        }
    }

    pub fn homogeneous() -> Self {
        PhantomSpec {
            kind: PhantomKind::Homogeneous,
            ..PhantomSpec::default()
        }
    }
}

/// C² step: 1 for `t ≤ 0`, 0 for `t ≥ 1`.
fn ramp(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    None,
    Ball { center: [f64; 3], radius: f64 },
    Extruded { mask: Mask2, z: [f64; 2] },
}

/// A validated phantom that can be sampled anywhere in space.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    shape: Shape,
    contrast: f64,
    smoothing: f64,
}

impl Phantom {
    pub fn from_spec(spec: &PhantomSpec, geometry: &Geometry) -> Result<Self> {
        geometry.validate()?;
        if !(spec.n_inclusion >= 1.0 && spec.n_inclusion.is_finite()) {
            return Err(Error::invalid(format!("inclusion index {} must be at least 1", spec.n_inclusion)));
        }
        if !(spec.smoothing >= 0.0 && spec.smoothing.is_finite()) {
            return Err(Error::invalid("smoothing width must be non-negative"));
        }
        let w = spec.smoothing;
        let shape = match spec.kind {
            PhantomKind::Homogeneous => Shape::None,
            PhantomKind::Ball => {
                let c = spec.center;
                let r = spec.radius + w;
                if !(spec.radius > 0.0) {
                    return Err(Error::invalid("ball radius must be positive"));
                }
                let inside = c[0] - r > 0.0
                    && c[0] + r < 1.0
                    && c[1] - r > 0.0
                    && c[1] + r < 1.0
                    && c[2] - r > geometry.z_bottom
                    && c[2] + r < geometry.z_top();
                if !inside {
                    return Err(Error::invalid(format!(
                        "ball of radius {} (+{w} smoothing) at {c:?} touches the domain boundary",
                        spec.radius
                    )));
                }
                Shape::Ball {
                    center: c,
                    radius: spec.radius,
                }
            }
            PhantomKind::Letter => {
                let mask = match &spec.mask_path {
                    Some(path) => Mask2::read(path)?,
                    None => spec.glyph.mask(),
                };
                if mask.count() == 0 {
                    return Err(Error::invalid("letter mask is empty"));
                }
                if mask.touches_border() {
                    return Err(Error::invalid("letter mask touches the lateral boundary"));
                }
                let [z1, z2] = spec.z_extent;
                if !(geometry.z_bottom < z1 - w && z1 < z2 && z2 + w < geometry.z_top()) {
                    return Err(Error::invalid(format!(
                        "extrusion range {:?} must lie strictly inside ({}, {})",
                        spec.z_extent,
                        geometry.z_bottom,
                        geometry.z_top()
                    )));
                }
                Shape::Extruded { mask, z: spec.z_extent }
            }
        };
        Ok(Phantom {
            shape,
            contrast: spec.n_inclusion * spec.n_inclusion - 1.0,
            smoothing: w,
        })
    }

    /// Inclusion weight in `[0, 1]` at `p`.
    fn weight(&self, p: [f64; 3]) -> f64 {
        let w = self.smoothing;
        match &self.shape {
            Shape::None => 0.0,
            Shape::Ball { center, radius } => {
                let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt();
                if d <= *radius {
                    1.0
                } else if w == 0.0 {
                    0.0
                } else {
                    ramp((d - radius) / w)
                }
            }
            Shape::Extruded { mask, z } => {
                let dz = if p[2] < z[0] {
                    z[0] - p[2]
                } else if p[2] > z[1] {
                    p[2] - z[1]
                } else {
                    0.0
                };
                if dz == 0.0 && mask.contains(p[0], p[1]) {
                    return 1.0;
                }
                if w == 0.0 || dz >= w {
                    return 0.0;
                }
                match mask.distance_within(p[0], p[1], w) {
                    Some(dxy) => ramp((dxy * dxy + dz * dz).sqrt() / w),
                    None => 0.0,
                }
            }
        }
    }

    /// `m = n²` at `p`.
    pub fn m_at(&self, p: [f64; 3]) -> f64 {
        1.0 + self.contrast * self.weight(p)
    }

    /// Whether `p` lies in the (unsmoothed) inclusion.
    pub fn in_inclusion(&self, p: [f64; 3]) -> bool {
        match &self.shape {
            Shape::None => false,
            Shape::Ball { center, radius } => {
                (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2) <= radius * radius
            }
            Shape::Extruded { mask, z } => p[2] >= z[0] && p[2] <= z[1] && mask.contains(p[0], p[1]),
        }
    }

    pub fn sample(&self, lattice: Lattice3) -> ScalarField3 {
        ScalarField3::from_fn(lattice, |p| self.m_at(p))
    }
}

/// `m` for a ball phantom on `lattice`.
pub fn make_ball(spec: &PhantomSpec, geometry: &Geometry, lattice: Lattice3) -> Result<ScalarField3> {
    if spec.kind != PhantomKind::Ball {
        return Err(Error::invalid("make_ball needs a ball specification"));
    }
    Ok(Phantom::from_spec(spec, geometry)?.sample(lattice))
}

/// `m` for an extruded letter phantom on `lattice`.
pub fn make_letter(spec: &PhantomSpec, geometry: &Geometry, lattice: Lattice3) -> Result<ScalarField3> {
    if spec.kind != PhantomKind::Letter {
        return Err(Error::invalid("make_letter needs a letter specification"));
    }
    Ok(Phantom::from_spec(spec, geometry)?.sample(lattice))
}
