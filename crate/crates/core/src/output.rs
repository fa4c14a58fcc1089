//! CSV serialization of simulation results.
//!
//! Numbers are written with 17 significant digits in scientific notation,
//! `.` as decimal separator and LF line endings, so identical arithmetic gives
//! identical bytes on every platform. Missing values are empty fields.

use std::io::{self, Write};

use crate::ensemble::{EnsembleStats, PositionHistogram, TrajectoryRecord};
use crate::friction::FrictionMap;
use crate::scan::{ScanResult, DEFAULT_SATURATION_LIMIT};

/// One CSV cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Field {
    Num(f64),
    Int(u64),
    Missing,
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl From<Option<f64>> for Field {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Field::Missing, Field::Num)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as u64)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v)
    }
}

impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Int(v as u64)
    }
}

/// `x` with 17 significant digits; non-finite values are written as `nan`,
/// `inf` or `-inf`.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn write_row<W: Write>(w: &mut W, fields: &[Field]) -> io::Result<()> {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        match f {
            Field::Num(x) => w.write_all(format_f64(*x).as_bytes())?,
            Field::Int(n) => write!(w, "{n}")?,
            Field::Missing => {}
        }
    }
    w.write_all(b"\n")
}

/// Writes a header line and then one line per row.
pub fn write_csv<W, I>(w: &mut W, header: &[&str], rows: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<Field>>,
{
    w.write_all(header.join(",").as_bytes())?;
    w.write_all(b"\n")?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        write_row(w, &row)?;
    }
    Ok(())
}

/// Columns `t, mean_intensity, e_kin, bunching` (energies in `ħω_R`).
pub fn write_time_series<W: Write>(w: &mut W, st: &EnsembleStats) -> io::Result<()> {
    let rows = (0..st.times.len()).map(|k| {
        vec![
            st.times[k].into(),
            st.intensity[k].into(),
            st.e_kin[k].into(),
            st.bunching[k].into(),
        ]
    });
    write_csv(w, &["t", "mean_intensity", "e_kin", "bunching"], rows)
}

/// Columns `traj, t, x, p, re_alpha, im_alpha`.
pub fn write_trajectories<W: Write>(w: &mut W, records: &[TrajectoryRecord]) -> io::Result<()> {
    let rows = records.iter().enumerate().flat_map(|(i, rec)| {
        rec.iter().map(move |(t, s)| {
            vec![
                i.into(),
                (*t).into(),
                s.x.into(),
                s.p.into(),
                s.alpha.re.into(),
                s.alpha.im.into(),
            ]
        })
    });
    write_csv(w, &["traj", "t", "x", "p", "re_alpha", "im_alpha"], rows)
}

/// One row per grid node, named after the two scan axes. `saturated` flags
/// `s·⟨|α|²⟩ ≥ 0.1`; failed nodes have empty observables.
pub fn write_scan<W: Write>(w: &mut W, r: &ScanResult) -> io::Result<()> {
    let header = [
        r.grid.axis1.axis.name(),
        r.grid.axis2.axis.name(),
        "intensity",
        "intensity_err",
        "e_kin",
        "e_kin_err",
        "e_kin_kappa",
        "bunching",
        "bunching_err",
        "cooling_time",
        "saturation",
        "saturated",
        "n_excluded",
        "ok",
    ];
    let mask = crate::scan::saturation_mask(r, DEFAULT_SATURATION_LIMIT);
    let rows = r.rows.iter().zip(mask).map(|(row, sat)| {
        vec![
            row.v1.into(),
            row.v2.into(),
            row.intensity.into(),
            row.intensity_err.into(),
            row.e_kin.into(),
            row.e_kin_err.into(),
            row.e_kin_kappa.into(),
            row.bunching.into(),
            row.bunching_err.into(),
            row.cooling_time.into(),
            row.saturation.into(),
            sat.into(),
            row.n_excluded.into(),
            row.error.is_none().into(),
        ]
    });
    write_csv(w, &header, rows)
}

/// Columns `delta_a, delta_c, f1, converged`.
pub fn write_friction_map<W: Write>(w: &mut W, map: &FrictionMap) -> io::Result<()> {
    let rows = map.nodes.iter().map(|n| {
        vec![
            n.delta_a.into(),
            n.delta_c.into(),
            n.f1.into(),
            n.converged().into(),
        ]
    });
    write_csv(w, &["delta_a", "delta_c", "f1", "converged"], rows)
}

/// Columns `x_lo, x_hi, x_center, count, density, potential,
/// potential_re_pos, potential_re_neg`. `density` is normalized to unit area.
pub fn write_histogram<W: Write>(w: &mut W, h: &PositionHistogram) -> io::Result<()> {
    let total = h.total() as f64;
    let centers = h.bin_centers();
    let rows = (0..h.counts.len()).map(|k| {
        let width = h.bin_edges[k + 1] - h.bin_edges[k];
        let density = if total > 0.0 {
            h.counts[k] as f64 / (total * width)
        } else {
            0.0
        };
        vec![
            h.bin_edges[k].into(),
            h.bin_edges[k + 1].into(),
            centers[k].into(),
            h.counts[k].into(),
            density.into(),
            h.potential[k].into(),
            h.potential_re_pos.as_ref().map(|v| v[k]).into(),
            h.potential_re_neg.as_ref().map(|v| v[k]).into(),
        ]
    });
    write_csv(
        w,
        &[
            "x_lo",
            "x_hi",
            "x_center",
            "count",
            "density",
            "potential",
            "potential_re_pos",
            "potential_re_neg",
        ],
        rows,
    )
}
