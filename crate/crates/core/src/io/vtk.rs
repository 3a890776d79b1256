//! Visualization exports: legacy VTK structured points and CSV slices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Axis, ScalarField3};

/// Legacy ASCII `STRUCTURED_POINTS` dataset with one scalar array.
pub fn vtk_string(field: &ScalarField3, name: &str, title: &str) -> String {
    let l = &field.lattice;
    let mut out = String::with_capacity(32 + field.values.len() * 12);
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(title.lines().next().unwrap_or(""));
    out.push_str("\nASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(out, "DIMENSIONS {} {} {}", l.dims[0], l.dims[1], l.dims[2]);
    let _ = writeln!(out, "ORIGIN {:?} {:?} {:?}", l.origin[0], l.origin[1], l.origin[2]);
    let _ = writeln!(out, "SPACING {:?} {:?} {:?}", l.spacing[0], l.spacing[1], l.spacing[2]);
    let _ = writeln!(out, "POINT_DATA {}", l.len());
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in &field.values {
        let _ = writeln!(out, "{v:?}");
    }
    out
}

pub fn write_vtk(path: &Path, field: &ScalarField3, name: &str, title: &str) -> Result<()> {
    fs::write(path, vtk_string(field, name, title)).map_err(|e| Error::io(path, e))
}

/// The plane `axis = index` as CSV: one row per value of the slower
/// remaining coordinate, one column per value of the faster one.
pub fn slice_csv(field: &ScalarField3, axis: Axis, index: usize) -> Result<String> {
    let [nx, ny, nz] = field.lattice.dims;
    // Lattice coordinates of (slice index, row, column).
    type Place = fn(usize, usize, usize) -> (usize, usize, usize);
    let (rows, cols, place): (usize, usize, Place) = match axis {
        Axis::X if index < nx => (nz, ny, |k, r, c| (k, c, r)),
        Axis::Y if index < ny => (nz, nx, |k, r, c| (c, k, r)),
        Axis::Z if index < nz => (ny, nx, |k, r, c| (c, r, k)),
        _ => return Err(Error::invalid(format!("slice index {index} outside the lattice along {axis:?}"))),
    };
    let mut out = String::new();
    for r in 0..rows {
        let row: Vec<String> = (0..cols).map(|c| {
                let (i, j, l) = place(index, r, c);
                format!("{:?}", field.get(i, j, l))
            }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_slice_csv(path: &Path, field: &ScalarField3, axis: Axis, index: usize) -> Result<()> {
    fs::write(path, slice_csv(field, axis, index)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Lattice3;

    fn field() -> ScalarField3 {
        let lattice = Lattice3 {
            dims: [3, 2, 2],
            origin: [0.0; 3],
            spacing: [0.5, 1.0, 1.0],
        };
        ScalarField3::from_fn(lattice, |p| p[0] + 10.0 * p[1] + 100.0 * p[2])
    }

    #[test]
    fn vtk_header_and_values() {
        let s = vtk_string(&field(), "n", "test");
        assert!(s.starts_with("# vtk DataFile Version 3.0\ntest\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS 3 2 2\n"));
        assert!(s.contains("POINT_DATA 12\nSCALARS n double 1\nLOOKUP_TABLE default\n0.0\n0.5\n1.0\n10.0\n"));
        assert_eq!(s.lines().count(), 10 + 12);
    }

    #[test]
    fn slices_have_the_expected_shape() {
        let f = field();
        assert_eq!(slice_csv(&f, Axis::Z, 1).unwrap(), "100.0,100.5,101.0\n110.0,110.5,111.0\n");
        assert_eq!(slice_csv(&f, Axis::Y, 0).unwrap(), "0.0,0.5,1.0\n100.0,100.5,101.0\n");
        assert_eq!(slice_csv(&f, Axis::X, 2).unwrap(), "1.0,11.0\n101.0,111.0\n");
        assert!(slice_csv(&f, Axis::X, 3).is_err());
    }
}
