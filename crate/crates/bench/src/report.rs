use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::warn;

use mmroute::Family;

use crate::sweep::{SweepRow, RB_COMPARATORS};

/// Column names in output order. Wall times come last so that runs can be
/// compared byte for byte after dropping them.
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["tag", "rho", "lambda", "z_op"].iter().map(|s| s.to_string()).collect();
    h.extend(Family::ALL.iter().map(|f| format!("z_{f}")));
    h.extend(["z_obs", "lb_lbr", "lb_lbp"].iter().map(|s| s.to_string()));
    h.extend(Family::ALL.iter().map(|f| format!("dev_{f}")));
    h.extend(["dev_obs", "dev_lbr", "dev_lbp"].iter().map(|s| s.to_string()));
    h.extend(RB_COMPARATORS.iter().map(|f| format!("imp_rb_vs_{f}")));
    h.push("imp_rb_vs_obs".into());
    h.push("error".into());
    h.extend(["wall_op", "wall_obs"].iter().map(|s| s.to_string()));
    h.extend(Family::ALL.iter().map(|f| format!("wall_{f}")));
    h
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:e}"),
        _ => "NA".into(),
    }
}

fn record(row: &SweepRow, violations: &[String]) -> Vec<String> {
    let dev = |z: Option<f64>| z.and_then(|z| crate::sweep::percent_deviation(z, row.z_op?));
    let mut r = vec![row.tag.clone(), format!("{}", row.rho), num(Some(row.lambda)), num(row.z_op)];
    r.extend(Family::ALL.iter().map(|&f| num(row.z_of(f))));
    r.extend([num(row.z_obs), num(row.lb_lbr), num(row.lb_lbp)]);
    r.extend(Family::ALL.iter().map(|&f| num(row.deviation(f))));
    r.extend([num(dev(row.z_obs)), num(dev(row.lb_lbr)), num(dev(row.lb_lbp))]);
    r.extend(RB_COMPARATORS.iter().map(|&f| num(row.improvement_of_rb(f))));
    r.push(num(row
        .z_obs
        .zip(row.z_of(Family::Rb))
        .and_then(|(o, rb)| crate::sweep::rb_improvement(o, rb))));
    let mut errors: Vec<String> = row.error.iter().map(|e| e.to_string()).collect();
    errors.extend(violations.iter().map(|v| format!("invariant violated: {v}")));
    r.push(errors.join("; "));
    r.push(format!("{:.6}", row.wall_op));
    r.push(format!("{:.6}", row.wall_obs));
    r.extend(row.wall.iter().map(|w| format!("{w:.6}")));
    r
}

/// `sweep.csv` → `sweep.summary.txt`.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.txt")
}

/// Per-ρ summary: the best policy other than the optimum and RB's gap.
pub fn summary_lines(rows: &[SweepRow]) -> Vec<String> {
    rows.iter()
        .map(|row| {
            let head = format!("[{}] rho={}", row.tag, row.rho);
            if let Some(e) = &row.error {
                return format!("{head}: failed: {e}");
            }
            let best = Family::ALL
                .iter()
                .filter_map(|&f| Some((f, row.deviation(f)?)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let best = best.map_or("none".to_string(), |(f, d)| format!("{f} ({d:.4}%)"));
            let rb = row
                .deviation(Family::Rb)
                .map_or("NA".to_string(), |d| format!("{d:.4}%"));
            format!("{head}: best policy {best}, RB gap to optimum {rb}")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportStats {
    pub rows: usize,
    pub failed_rows: usize,
    pub violating_rows: usize,
}

/// Writes the CSV and its summary. With `append`, rows go after any that
/// are already in the file and the header is written only to a new file.
pub fn emit_report(rows: &[SweepRow], csv: &Path, append: bool) -> Result<ReportStats> {
    if rows.is_empty() {
        warn!("no rows to report; writing header only to {}", csv.display());
    }
    let fresh = !append || std::fs::metadata(csv).map_or(true, |m| m.len() == 0);
    let file = open(csv, append)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(csv_header())
            .with_context(|| format!("writing {}", csv.display()))?;
    }
    let mut stats = ReportStats { rows: rows.len(), failed_rows: 0, violating_rows: 0 };
    for row in rows {
        let violations = row.violations();
        if !violations.is_empty() {
            warn!("rho {}: {}", row.rho, violations.join("; "));
            stats.violating_rows += 1;
        }
        if row.error.is_some() {
            stats.failed_rows += 1;
        }
        w.write_record(record(row, &violations))
            .with_context(|| format!("writing {}", csv.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", csv.display()))?;

    let path = summary_path(csv);
    let mut s = open(&path, append)?;
    for line in summary_lines(rows) {
        writeln!(s, "{line}").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(stats)
}

fn open(path: &Path, append: bool) -> Result<File> {
    let mut o = OpenOptions::new();
    o.create(true);
    if append {
        o.append(true);
    } else {
        o.write(true).truncate(true);
    }
    o.open(path).with_context(|| format!("opening {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tag: &str, rho: f64) -> SweepRow {
        let mut r = SweepRow {
            tag: tag.into(),
            rho,
            lambda: rho * 2.0,
            z_op: Some(0.2),
            z_obs: Some(0.3),
            lb_lbr: Some(0.0),
            lb_lbp: Some(0.1),
            ..SweepRow::default()
        };
        r.z = [Some(0.25), Some(0.22), Some(0.24), Some(0.21), Some(0.201), Some(0.23)];
        r
    }

    #[test]
    fn header_matches_records() {
        let h = csv_header();
        assert_eq!(&h[..4], &["tag", "rho", "lambda", "z_op"]);
        assert_eq!(h.iter().position(|c| c == "error").unwrap(), 28);
        assert_eq!(record(&row("a", 1.0), &[]).len(), h.len());
    }

    #[test]
    fn writes_and_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit_report(&[row("e1", 0.7), row("e1", 0.8)], &path, false).unwrap();
        emit_report(&[row("e2", 0.7)], &path, true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("e1,0.7,"));
        assert!(lines[3].starts_with("e2,0.7,"));
        let summary = std::fs::read_to_string(summary_path(&path)).unwrap();
        assert_eq!(summary.lines().count(), 3);
        assert!(summary.contains("best policy rb"));
    }

    #[test]
    fn empty_rows_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let stats = emit_report(&[], &path, false).unwrap();
        assert_eq!(stats.rows, 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    }

    #[test]
    fn violations_are_flagged() {
        let mut r = row("x", 1.0);
        r.z[0] = Some(0.1);
        r.lb_lbp = Some(0.5);
        let v = r.violations();
        assert_eq!(v.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let stats = emit_report(&[r], &path, false).unwrap();
        assert_eq!(stats.violating_rows, 1);
        assert!(std::fs::read_to_string(&path).unwrap().contains("invariant violated"));
    }

    #[test]
    fn undefined_metrics_print_na() {
        let mut r = row("z", 1.0);
        r.z_op = Some(0.0);
        let rec = record(&r, &[]);
        assert_eq!(rec[csv_header().iter().position(|c| c == "dev_sq").unwrap()], "NA");
    }
}
