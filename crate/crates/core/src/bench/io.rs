//! CSV tables and legacy VTK output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::convergence::RunRecord;
use crate::error::{Error, Result};
use crate::spaces::ThFunction;

pub const CSV_HEADER: &str = "level,h,h_min,ndof_v,ndof_p,err_u_L1,err_y_L2,err_z_Linf,eta_st2,eta_stp,eta_adj_inf,div_term,total_bound,eoc_u,eoc_y,wall_s";

/// One CSV row, in header order.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    level: usize,
    h: f64,
    h_min: f64,
    ndof_v: usize,
    ndof_p: usize,
    #[serde(rename = "err_u_L1")]
    err_u_l1: f64,
    #[serde(rename = "err_y_L2")]
    err_y_l2: f64,
    #[serde(rename = "err_z_Linf")]
    err_z_linf: f64,
    eta_st2: f64,
    eta_stp: f64,
    eta_adj_inf: f64,
    div_term: f64,
    total_bound: f64,
    eoc_u: f64,
    eoc_y: f64,
    wall_s: f64,
}

impl From<&RunRecord> for CsvRow {
    fn from(r: &RunRecord) -> Self {
        CsvRow {
            level: r.level,
            h: r.h,
            h_min: r.h_min,
            ndof_v: r.ndof_v,
            ndof_p: r.ndof_p,
            err_u_l1: r.err_u_l1,
            err_y_l2: r.err_y_l2,
            err_z_linf: r.err_z_linf,
            eta_st2: r.eta_st2,
            eta_stp: r.eta_stp,
            eta_adj_inf: r.eta_adj_inf,
            div_term: r.div_term,
            total_bound: r.total_bound,
            eoc_u: r.eoc_u,
            eoc_y: r.eoc_y,
            wall_s: r.wall_s,
        }
    }
}

impl From<CsvRow> for RunRecord {
    fn from(r: CsvRow) -> Self {
        RunRecord {
            level: r.level,
            h: r.h,
            h_min: r.h_min,
            ndof_v: r.ndof_v,
            ndof_p: r.ndof_p,
            err_u_l1: r.err_u_l1,
            err_y_l2: r.err_y_l2,
            err_z_linf: r.err_z_linf,
            err_p_l2: f64::NAN,
            eta_st2: r.eta_st2,
            eta_stp: r.eta_stp,
            eta_adj_inf: r.eta_adj_inf,
            div_term: r.div_term,
            total_bound: r.total_bound,
            eoc_u: r.eoc_u,
            eoc_y: r.eoc_y,
            wall_s: r.wall_s,
            cost: f64::NAN,
            gap: f64::NAN,
            converged: false,
            interior_measure: f64::NAN,
        }
    }
}

fn write_rows<W: std::io::Write>(records: &[RunRecord], sink: W) -> csv::Result<W> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn csv_string(records: &[RunRecord]) -> String {
    let bytes = write_rows(records, Vec::new()).expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("CSV output is ASCII")
}

/// Fixed-width summary of the main columns for terminal output.
pub fn format_table(records: &[RunRecord]) -> String {
    let mut out = format!(
        "{:>5} {:>10} {:>8} {:>11} {:>11} {:>11} {:>11} {:>7} {:>7} {:>8}\n",
        "level", "h", "ndof", "err_u_L1", "err_y_L2", "err_z_Linf", "bound", "eoc_u", "eoc_y", "wall_s"
    );
    for r in records {
        let _ = writeln!(
            out,
            "{:>5} {:>10.4e} {:>8} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>7.3} {:>7.3} {:>8.2}",
            r.level,
            r.h,
            r.ndof_v + r.ndof_p,
            r.err_u_l1,
            r.err_y_l2,
            r.err_z_linf,
            r.total_bound,
            r.eoc_u,
            r.eoc_y,
            r.wall_s
        );
    }
    out
}

pub fn export_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    write_rows(records, file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("{other:?}")),
    })?;
    Ok(())
}

/// Parses a table written by [`export_csv`]. Columns not stored in the file are NaN.
pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(fs::File::open(path)?);
    let header = reader.headers().map_err(|e| Error::Config(e.to_string()))?;
    if header.iter().ne(CSV_HEADER.split(',')) {
        return Err(Error::Config(format!("unexpected CSV header {:?}", header.as_slice())));
    }
    reader
        .deserialize::<CsvRow>()
        .map(|row| row.map(RunRecord::from).map_err(|e| Error::Config(e.to_string())))
        .collect()
}

/// Legacy ASCII VTK of named velocity/pressure fields sharing one space. Every P2 triangle is
/// split into four linear triangles through its edge midpoints.
pub fn vtk_string(fields: &[(&str, &ThFunction)]) -> Result<String> {
    let Some((_, first)) = fields.first() else {
        return Err(Error::InvalidParameter("no fields to export".into()));
    };
    let s = &first.space;
    if fields.iter().any(|(_, f)| !std::sync::Arc::ptr_eq(&f.space, s)) {
        return Err(Error::InvalidParameter("exported fields live on different spaces".into()));
    }
    let nn = s.num_nodes();
    let nt = s.num_elements();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\nnsbang solution\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {nn} double");
    for n in 0..nn {
        let x = s.node_coords(n);
        let _ = writeln!(out, "{:.16e} {:.16e} 0", x[0], x[1]);
    }
    let _ = writeln!(out, "CELLS {} {}", 4 * nt, 16 * nt);
    for t in 0..nt {
        let [a, b, c, ab, bc, ca] = s.nodes(t);
        for tri in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
            let _ = writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2]);
        }
    }
    let _ = writeln!(out, "CELL_TYPES {}", 4 * nt);
    for _ in 0..4 * nt {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {nn}");
    for (name, f) in fields {
        let _ = writeln!(out, "VECTORS {name}_velocity double");
        for n in 0..nn {
            let (u, v) = (f.coeffs[s.velocity_dof(0, n)], f.coeffs[s.velocity_dof(1, n)]);
            let _ = writeln!(out, "{u:.16e} {v:.16e} 0");
        }
        let mut p = vec![0.0; nn];
        for (v, pv) in p.iter_mut().enumerate().take(s.num_pressure_dofs()) {
            *pv = f.coeffs[s.pressure_dof(v)];
        }
        for (e, &[a, b]) in s.edges.edges.iter().enumerate() {
            p[s.num_pressure_dofs() + e] = 0.5 * (p[a] + p[b]);
        }
        let _ = writeln!(out, "SCALARS {name}_pressure double 1\nLOOKUP_TABLE default");
        for v in p {
            let _ = writeln!(out, "{v:.16e}");
        }
    }
    Ok(out)
}

pub fn export_vtk(fields: &[(&str, &ThFunction)], path: &Path) -> Result<()> {
    fs::write(path, vtk_string(fields)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured, Rect};
    use crate::spaces::{build_space, interpolate_unmasked};

    fn record(k: usize) -> RunRecord {
        let x = 1.0 / 3.0 + k as f64;
        RunRecord {
            level: k,
            h: x.sqrt(),
            h_min: x.sqrt() / 7.0,
            ndof_v: 100 * k + 1,
            ndof_p: 10 * k + 3,
            err_u_l1: x.exp() * 1e-7,
            err_y_l2: std::f64::consts::PI * 1e-12,
            err_z_linf: 0.1 + 0.2,
            err_p_l2: 1.0,
            eta_st2: 1.0 / 7.0,
            eta_stp: f64::MIN_POSITIVE,
            eta_adj_inf: 123456.789,
            div_term: 0.0,
            total_bound: 2.0f64.sqrt(),
            eoc_u: if k == 0 { f64::NAN } else { 1.234 },
            eoc_y: -0.5,
            wall_s: 1e-3,
            cost: 0.0,
            gap: 0.0,
            converged: true,
            interior_measure: 0.0,
        }
    }

    fn same(a: f64, b: f64) -> bool {
        (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
    }

    #[test]
    fn table_has_one_line_per_record() {
        let recs: Vec<RunRecord> = (0..3).map(record).collect();
        assert_eq!(format_table(&recs).lines().count(), 4);
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(csv_string(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let recs: Vec<RunRecord> = (0..4).map(record).collect();
        export_csv(&recs, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!((a.level, a.ndof_v, a.ndof_p), (b.level, b.ndof_v, b.ndof_p));
            for (x, y) in [
                (a.h, b.h),
                (a.h_min, b.h_min),
                (a.err_u_l1, b.err_u_l1),
                (a.err_y_l2, b.err_y_l2),
                (a.err_z_linf, b.err_z_linf),
                (a.eta_st2, b.eta_st2),
                (a.eta_stp, b.eta_stp),
                (a.eta_adj_inf, b.eta_adj_inf),
                (a.div_term, b.div_term),
                (a.total_bound, b.total_bound),
                (a.eoc_u, b.eoc_u),
                (a.eoc_y, b.eoc_y),
                (a.wall_s, b.wall_s),
            ] {
                assert!(same(x, y), "{x} {y}");
            }
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "level,h\n0,1\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Config(_))));
    }

    #[test]
    fn zero_field_vtk() {
        let s = build_space(build_structured(2, 2, Rect::UNIT));
        let text = vtk_string(&[("state", &s.zero()), ("adjoint", &s.zero())]).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains(&format!("POINTS {} double", s.num_nodes())));
        assert!(text.contains(&format!("CELLS {} {}", 32, 128)));
        let data = &text[text.find("POINT_DATA").unwrap()..];
        let values: Vec<f64> = data
            .lines()
            .filter(|l| !l.starts_with(char::is_alphabetic))
            .flat_map(|l| l.split_whitespace().map(|v| v.parse::<f64>().unwrap()))
            .collect();
        assert_eq!(values.len(), 2 * (3 * s.num_nodes() + s.num_nodes()));
        assert!(values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vtk_pressure_is_linear_at_midpoints() {
        let s = build_space(build_structured(2, 2, Rect::UNIT));
        let f = interpolate_unmasked(&s, |x| [x[0], x[1]], |x| 2.0 * x[0] - x[1]);
        let text = vtk_string(&[("state", &f)]).unwrap();
        let data = &text[text.find("LOOKUP_TABLE default").unwrap()..];
        let p: Vec<f64> = data.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        for (n, v) in p.iter().enumerate() {
            let x = s.node_coords(n);
            assert!((v - (2.0 * x[0] - x[1])).abs() < 1e-14);
        }
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let r = export_csv(&[], Path::new("/nonexistent-dir/x/y.csv"));
        assert!(matches!(r, Err(Error::Io(_))));
    }
}
