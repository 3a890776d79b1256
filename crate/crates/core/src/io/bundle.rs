//! On-disk bundles of travel-time data and projected coefficients: a
//! directory holding a TOML manifest and F3D files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::f3d::{lattice_matches, F3d};
use crate::basis::{AlphaQuadrature, BasisSet};
use crate::dataprep::ProjectedData;
use crate::error::{Error, Result};
use crate::forward::{BoundaryRecord, Face, FaceLattice, FaceSamples, NoiseMode, SourceLine, TravelTimeData};
use crate::grid::{Geometry, GridSpec, Lattice3};

pub const MANIFEST: &str = "manifest.toml";

/// Noise applied to a travel-time bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRecord {
    pub delta: f64,
    pub seed: u64,
    pub mode: NoiseMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TravelTimeManifest {
    kind: String,
    detector_step: f64,
    geometry: Geometry,
    source_line: SourceLine,
    /// Source positions `α_s`, for reference.
    alphas: Vec<f64>,
    noise: Option<NoiseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectedManifest {
    kind: String,
    order: usize,
    alpha_min: f64,
    alpha_max: f64,
    quadrature_nodes: usize,
    k: usize,
    kz: usize,
    geometry: Geometry,
}

const TRAVEL_TIMES: &str = "travel-times";
const PROJECTED: &str = "projected-data";

pub fn write_manifest<T: Serialize>(dir: &Path, manifest: &T) -> Result<()> {
    let text = toml::to_string(manifest).map_err(|e| Error::format("manifest", e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<T> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(format!("manifest {}", path.display()), e.to_string()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn check_kind(found: &str, expected: &str, dir: &Path) -> Result<()> {
    if found != expected {
        return Err(Error::format(
            format!("manifest {}", dir.display()),
            format!("bundle holds `{found}`, expected `{expected}`"),
        ));
    }
    Ok(())
}

pub fn face_file(source: usize, face: Face) -> String {
    format!("s{source:03}_{}.f3d", face.name())
}

fn face_f3d(samples: &FaceSamples) -> F3d {
    let l = &samples.lattice;
    let lattice = Lattice3 {
        dims: [l.nu, l.nv, 1],
        origin: [l.u0, l.v0, 0.0],
        spacing: [l.du, l.dv, 1.0],
    };
    F3d {
        lattice,
        components: 1,
        values: samples.values.clone(),
    }
}

/// Writes one F3D per face and source plus the manifest.
pub fn write_travel_times(dir: &Path, data: &TravelTimeData, noise: Option<NoiseRecord>) -> Result<()> {
    create_dir(dir)?;
    for (s, record) in data.records.iter().enumerate() {
        for samples in &record.faces {
            face_f3d(samples).write(&dir.join(face_file(s, samples.face)))?;
        }
    }
    write_manifest(
        dir,
        &TravelTimeManifest {
            kind: TRAVEL_TIMES.into(),
            detector_step: data.detector_step,
            geometry: data.geometry,
            source_line: data.source_line,
            alphas: data.source_line.alphas(),
            noise,
        },
    )
}

pub fn read_travel_times(dir: &Path) -> Result<(TravelTimeData, Option<NoiseRecord>)> {
    let manifest: TravelTimeManifest = read_manifest(dir)?;
    check_kind(&manifest.kind, TRAVEL_TIMES, dir)?;
    let mut records = Vec::with_capacity(manifest.source_line.count);
    for s in 0..manifest.source_line.count {
        let mut faces = Vec::with_capacity(6);
        for face in Face::ALL {
            let expected = FaceLattice::new(face, &manifest.geometry, manifest.detector_step)?;
            let f = F3d::read(&dir.join(face_file(s, face)))?;
            let lattice = FaceLattice {
                nu: f.lattice.dims[0],
                nv: f.lattice.dims[1],
                u0: f.lattice.origin[0],
                v0: f.lattice.origin[1],
                du: f.lattice.spacing[0],
                dv: f.lattice.spacing[1],
            };
            if f.components != 1 || (lattice.nu, lattice.nv) != (expected.nu, expected.nv) {
                return Err(Error::format(
                    format!("face file {}", face_file(s, face)),
                    "detector lattice does not match the manifest",
                ));
            }
            faces.push(FaceSamples {
                face,
                lattice,
                values: f.values,
            });
        }
        records.push(BoundaryRecord { faces });
    }
    Ok((
        TravelTimeData {
            geometry: manifest.geometry,
            source_line: manifest.source_line,
            detector_step: manifest.detector_step,
            records,
        },
        manifest.noise,
    ))
}

fn top_lattice(grid: &GridSpec) -> Lattice3 {
    Lattice3 {
        dims: [grid.side(), grid.side(), 1],
        origin: [0.0, 0.0, grid.geometry.z_top()],
        spacing: [grid.h(), grid.h(), 1.0],
    }
}

pub fn write_projected(dir: &Path, data: &ProjectedData) -> Result<()> {
    create_dir(dir)?;
    let n = data.order();
    let top = top_lattice(&data.grid);
    for (name, values) in [("g_top", &data.g_top), ("gx_top", &data.gx_top), ("gy_top", &data.gy_top)] {
        F3d::new(top, n, values.clone())?.write(&dir.join(format!("{name}.f3d")))?;
    }
    F3d::from_coefficients(&data.gtilde).write(&dir.join("gtilde.f3d"))?;
    let (a, b) = data.basis.interval();
    write_manifest(
        dir,
        &ProjectedManifest {
            kind: PROJECTED.into(),
            order: n,
            alpha_min: a,
            alpha_max: b,
            quadrature_nodes: data.quadrature.len(),
            k: data.grid.k,
            kz: data.grid.kz,
            geometry: data.grid.geometry,
        },
    )
}

pub fn read_projected(dir: &Path) -> Result<ProjectedData> {
    let m: ProjectedManifest = read_manifest(dir)?;
    check_kind(&m.kind, PROJECTED, dir)?;
    let grid = GridSpec::new(m.geometry, m.k, m.kz)?;
    let basis = BasisSet::build(m.order, m.alpha_min, m.alpha_max)?;
    let quadrature = AlphaQuadrature::uniform(&basis, m.quadrature_nodes)?;
    let top = top_lattice(&grid);
    let read_top = |name: &str| -> Result<Vec<f64>> {
        let f = F3d::read(&dir.join(format!("{name}.f3d")))?;
        if f.components != m.order || !lattice_matches(&f.lattice, &top) {
            return Err(Error::format(format!("{name}.f3d"), "shape does not match the manifest"));
        }
        Ok(f.values)
    };
    let g_top = read_top("g_top")?;
    let gx_top = read_top("gx_top")?;
    let gy_top = read_top("gy_top")?;
    let gt = F3d::read(&dir.join("gtilde.f3d"))?;
    if gt.components != m.order {
        return Err(Error::format("gtilde.f3d", "component count does not match the manifest"));
    }
    let gtilde = gt.into_coefficients(grid)?;
    Ok(ProjectedData {
        grid,
        basis,
        quadrature,
        g_top,
        gx_top,
        gy_top,
        gtilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::prepare;
    use crate::forward::analytic_homogeneous;

    fn data() -> TravelTimeData {
        let g = Geometry::default();
        analytic_homogeneous(&g, &SourceLine::new(&g, 9).unwrap(), 0.25).unwrap()
    }

    #[test]
    fn travel_times_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = data();
        let noise = NoiseRecord {
            delta: 0.05,
            seed: 3,
            mode: NoiseMode::PerSource,
        };
        write_travel_times(dir.path(), &d, Some(noise)).unwrap();
        let (back, nb) = read_travel_times(dir.path()).unwrap();
        assert_eq!(back, d);
        assert_eq!(nb, Some(noise));
    }

    #[test]
    fn projected_data_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = Geometry::default();
        let p = prepare(&data(), GridSpec::new(g, 4, 4).unwrap(), 4).unwrap();
        write_projected(dir.path(), &p).unwrap();
        let back = read_projected(dir.path()).unwrap();
        assert_eq!(back.g_top, p.g_top);
        assert_eq!(back.gx_top, p.gx_top);
        assert_eq!(back.gy_top, p.gy_top);
        assert_eq!(back.gtilde, p.gtilde);
        assert_eq!(back.basis, p.basis);
        assert_eq!(back.quadrature, p.quadrature);
    }

    #[test]
    fn wrong_kind_and_missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_travel_times(dir.path(), &data(), None).unwrap();
        assert!(matches!(read_projected(dir.path()), Err(Error::Format { .. })));
        fs::remove_file(dir.path().join(face_file(2, Face::Top))).unwrap();
        assert!(matches!(read_travel_times(dir.path()), Err(Error::Io { .. })));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(read_travel_times(empty.path()), Err(Error::Io { .. })));
    }
}
