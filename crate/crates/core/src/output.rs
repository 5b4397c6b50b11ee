//! Field snapshots as CSV at cell centres or legacy-VTK structured points.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::FieldFormat;
use crate::diagnostics::{Level, fmt_f64};
use crate::error::{Error, Result};
use crate::grid::GridTopology;

pub const FIELDS_HEADER: &str = "x,y,z,rho,u1,u2,u3,q";

/// One row per point of `Ω̃_h`; `u` and `q` are zero off `Ω_h`.
pub fn fields_csv(state: &Level, topo: &GridTopology) -> String {
    let mut s = String::with_capacity(96 * (topo.tilde.len() + 1));
    s.push_str(FIELDS_HEADER);
    s.push('\n');
    for &p in topo.tilde.points() {
        let c = topo.cell_center(p);
        let u = state.u.get(p);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(c[0]),
            fmt_f64(c[1]),
            fmt_f64(c[2]),
            fmt_f64(state.eta.get(p)),
            fmt_f64(u[0]),
            fmt_f64(u[1]),
            fmt_f64(u[2]),
            fmt_f64(state.q.get(p)),
        );
    }
    s
}

/// Structured points over the bounding box of `Ω̃_h`, origin at the first
/// cell centre. `mask` is 2 on `Ω_h`, 1 on the rest of `Ω̃_h`, 0 elsewhere.
pub fn fields_vtk(state: &Level, topo: &GridTopology, title: &str) -> String {
    let (lo, hi) = topo.tilde.bounds().expect("padded grid is nonempty");
    let dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let n = (dims[0] * dims[1] * dims[2]) as usize;
    let h = topo.h;
    let origin = topo.cell_center(lo);
    let mut s = String::with_capacity(64 * n);
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
    let _ = writeln!(s, "ORIGIN {} {} {}", fmt_f64(origin[0]), fmt_f64(origin[1]), fmt_f64(origin[2]));
    let _ = writeln!(s, "SPACING {} {} {}", fmt_f64(h), fmt_f64(h), fmt_f64(h));
    let _ = writeln!(s, "POINT_DATA {n}");

    // VTK orders points with x fastest
    let points = || {
        (lo[2]..=hi[2]).flat_map(move |z| (lo[1]..=hi[1]).flat_map(move |y| (lo[0]..=hi[0]).map(move |x| [x, y, z])))
    };
    let _ = writeln!(s, "SCALARS rho double 1\nLOOKUP_TABLE default");
    for p in points() {
        let v = if topo.tilde.contains(p) { state.eta.get(p) } else { 0.0 };
        let _ = writeln!(s, "{}", fmt_f64(v));
    }
    let _ = writeln!(s, "VECTORS velocity double");
    for p in points() {
        let u = state.u.get(p);
        let _ = writeln!(s, "{} {} {}", fmt_f64(u[0]), fmt_f64(u[1]), fmt_f64(u[2]));
    }
    let _ = writeln!(s, "SCALARS q double 1\nLOOKUP_TABLE default");
    for p in points() {
        let _ = writeln!(s, "{}", fmt_f64(state.q.get(p)));
    }
    let _ = writeln!(s, "SCALARS mask int 1\nLOOKUP_TABLE default");
    for p in points() {
        let m = if topo.omega.contains(p) {
            2
        } else if topo.tilde.contains(p) {
            1
        } else {
            0
        };
        let _ = writeln!(s, "{m}");
    }
    s
}

pub fn write_fields(state: &Level, topo: &GridTopology, format: FieldFormat, path: &Path) -> Result<()> {
    let text = match format {
        FieldFormat::Csv => fields_csv(state, topo),
        FieldFormat::Vtk => fields_vtk(state, topo, "densflow fields"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
