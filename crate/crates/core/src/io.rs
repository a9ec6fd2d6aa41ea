//! CSV emission with fixed column order and 17 significant digits.

use std::io::Write;

use crate::error::Result;
use crate::trajectory::Trajectory;

/// Formats a float with 17 significant digits, '.' as decimal separator.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

pub const TRAJECTORY_HEADER: &str = "t,f_gap,grad_norm_sq,dist_sq,flags";

/// Writes one trajectory. `flags` is a bitmask: 1 = epoch jump, 2 = divergence.
pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &Trajectory) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for i in 0..traj.len() {
        let o = &traj.observables[i];
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(traj.times[i]),
            fmt_f64(o.f_gap),
            fmt_f64(o.grad_norm_sq),
            fmt_f64(o.dist_sq),
            traj.flags[i]
        )?;
    }
    Ok(())
}

/// Writes a header row and numeric rows.
pub fn write_table_csv<W: Write>(out: &mut W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
