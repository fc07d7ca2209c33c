//! Plain-text and binary output. Every float is printed through one
//! formatter so identical runs produce identical bytes.

use std::io::{self, Write};

use rdcert_core::simulate::SimReport;

/// Canonical float rendering: 17 significant digits in scientific notation,
/// enough to reconstruct the exact bit pattern.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn kv(name: &str, x: f64) {
    println!("{name}={}", fmt_f64(x));
}

pub fn csv_header(m: usize) -> String {
    let mut line = String::from("t,L,Z,min_slack");
    for l in 1..=m {
        line.push_str(&format!(",min_w_{l}"));
    }
    for l in 1..=m {
        line.push_str(&format!(",mass_{l}"));
    }
    line
}

/// Monitor rows as CSV, one line per row, `\n` endings.
pub fn write_csv<W: Write>(out: &mut W, report: &SimReport) -> io::Result<()> {
    writeln!(out, "{}", csv_header(report.m))?;
    for row in &report.rows {
        let mut line = String::new();
        line.push_str(&fmt_f64(row.t));
        for v in [row.lyapunov, row.z, row.min_slack] {
            line.push(',');
            line.push_str(&fmt_f64(v));
        }
        for v in row.min_w.iter().chain(row.mass.iter()) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Snapshot records, concatenated: per record a header of `m` and the point
/// count as little-endian u64, the time as little-endian f64, then the field
/// values (component-major, position fastest) as little-endian f64.
pub fn write_snapshots<W: Write>(out: &mut W, report: &SimReport) -> io::Result<()> {
    for snap in &report.snapshots {
        out.write_all(&(report.m as u64).to_le_bytes())?;
        out.write_all(&(report.n_points as u64).to_le_bytes())?;
        out.write_all(&snap.t.to_le_bytes())?;
        for v in &snap.state {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}
