//! Deterministic CSV output: 17 significant digits, `.` as decimal point.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::harness::probe::SupportTable;
use crate::harness::study::ConvergenceReport;

pub const CSV_HEADER: &str = "n,h,error_final,error_sup,observed_order,wall_ms,newton_total";
pub const PROBE_HEADER: &str = "t,radius,radius_cells,growth_cells";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &report.rows {
        let order = r.observed_order.map(num).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.n,
            num(r.h),
            num(r.error_final),
            num(r.error_sup),
            order,
            num(r.wall_ms),
            r.newton_total
        );
    }
    s
}

pub fn format_probe_csv(table: &SupportTable) -> String {
    let mut s = String::from(PROBE_HEADER);
    s.push('\n');
    for r in &table.rows {
        let _ = writeln!(s, "{},{},{},{}", num(r.t), num(r.radius), num(r.radius_cells), num(r.growth_cells));
    }
    s
}

pub fn emit_csv(report: &ConvergenceReport, path: &Path) -> Result<()> {
    std::fs::write(path, format_csv(report))?;
    Ok(())
}

pub fn emit_probe_csv(table: &SupportTable, path: &Path) -> Result<()> {
    std::fs::write(path, format_probe_csv(table))?;
    Ok(())
}
