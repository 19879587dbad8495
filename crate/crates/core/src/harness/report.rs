use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::experiment::RunRecord;
use crate::error::Result;

/// Columns of the per-θ summary, in output order.
pub const SUMMARY_COLUMNS: &[&str] = &[
    "theta",
    "replicas",
    "consensus_fraction",
    "absorbed_fraction",
    "mean_interior_plus_fraction",
    "mean_core_density",
    "droplet_size_median",
    "droplet_size_p90",
    "droplet_size_max",
    "interior_elimination_fraction",
    "mean_elimination_time",
    "core_flips",
];

/// Aggregates over the replicas of one θ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub replicas: usize,
    pub consensus_fraction: f64,
    pub absorbed_fraction: f64,
    pub mean_interior_plus_fraction: f64,
    pub mean_core_density: f64,
    /// Quantiles of the per-replica largest droplet size.
    pub droplet_size_median: f64,
    pub droplet_size_p90: f64,
    pub droplet_size_max: usize,
    /// Eliminated interior droplets over all interior droplets (1 when none).
    pub interior_elimination_fraction: f64,
    pub mean_elimination_time: Option<f64>,
    pub core_flips: usize,
}

impl SweepRow {
    fn cell(&self, column: &str) -> String {
        match column {
            "theta" => self.theta.to_string(),
            "replicas" => self.replicas.to_string(),
            "consensus_fraction" => self.consensus_fraction.to_string(),
            "absorbed_fraction" => self.absorbed_fraction.to_string(),
            "mean_interior_plus_fraction" => self.mean_interior_plus_fraction.to_string(),
            "mean_core_density" => self.mean_core_density.to_string(),
            "droplet_size_median" => self.droplet_size_median.to_string(),
            "droplet_size_p90" => self.droplet_size_p90.to_string(),
            "droplet_size_max" => self.droplet_size_max.to_string(),
            "interior_elimination_fraction" => self.interior_elimination_fraction.to_string(),
            "mean_elimination_time" => self.mean_elimination_time.map(|t| t.to_string()).unwrap_or_default(),
            "core_flips" => self.core_flips.to_string(),
            other => panic!("unknown summary column {other}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-θ aggregates, folded over records sorted by (θ index, replica).
pub fn sweep_report(records: &[RunRecord], columns: &[String]) -> SweepTable {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.theta_index, r.replica));
    let mut rows = Vec::new();
    for group in sorted.chunk_by(|a, b| a.theta_index == b.theta_index) {
        let n = group.len();
        let frac = |f: &dyn Fn(&RunRecord) -> bool| group.iter().filter(|r| f(r)).count() as f64 / n as f64;
        let mut sizes: Vec<f64> = group.iter().map(|r| r.max_droplet_size as f64).collect();
        sizes.sort_by(f64::total_cmp);
        let interior: usize = group.iter().map(|r| r.interior_droplets).sum();
        let eliminated: usize = group.iter().map(|r| r.interior_droplets_eliminated).sum();
        let weighted_time: f64 = group
            .iter()
            .filter_map(|r| r.mean_elimination_time.map(|t| t * r.interior_droplets_eliminated as f64))
            .sum();
        rows.push(SweepRow {
            theta: group[0].theta,
            replicas: n,
            consensus_fraction: frac(&|r| r.interior_consensus),
            absorbed_fraction: frac(&|r| r.absorbed),
            mean_interior_plus_fraction: mean(group.iter().map(|r| r.interior_plus_fraction)).unwrap_or(0.0),
            mean_core_density: mean(group.iter().map(|r| r.core_density)).unwrap_or(0.0),
            droplet_size_median: quantile(&sizes, 0.5),
            droplet_size_p90: quantile(&sizes, 0.9),
            droplet_size_max: group.iter().map(|r| r.max_droplet_size).max().unwrap_or(0),
            interior_elimination_fraction: if interior == 0 { 1.0 } else { eliminated as f64 / interior as f64 },
            mean_elimination_time: (eliminated > 0).then(|| weighted_time / eliminated as f64),
            core_flips: group.iter().map(|r| r.core_flips).sum(),
        });
    }
    let columns = if columns.is_empty() {
        SUMMARY_COLUMNS.iter().map(|c| c.to_string()).collect()
    } else {
        SUMMARY_COLUMNS.iter().filter(|c| columns.iter().any(|x| x == *c)).map(|c| c.to_string()).collect()
    };
    SweepTable { columns, rows }
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(self.columns.iter().map(|c| row.cell(c)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let rows: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|row| {
                let full = serde_json::to_value(row).expect("row serializes");
                self.columns.iter().map(|c| (c.clone(), full[c.as_str()].clone())).collect()
            })
            .collect();
        serde_json::to_writer_pretty(out, &rows)?;
        Ok(())
    }

    /// Static plot of consensus fraction and mean core density against θ.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (480.0, 320.0, 40.0);
        let (lo, hi) = self
            .rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.theta), hi.max(r.theta)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let x = |t: f64| pad + (t - if lo.is_finite() { lo } else { 0.0 }) / span * (w - 2.0 * pad);
        let y = |v: f64| h - pad - v * (h - 2.0 * pad);
        let mut svg = String::new();
        let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#,
            h - pad,
            w - pad
        );
        let series: [(&str, &str, fn(&SweepRow) -> f64); 2] = [
            ("consensus fraction", "#1f77b4", |r| r.consensus_fraction),
            ("core density", "#d62728", |r| r.mean_core_density),
        ];
        for (i, (label, color, f)) in series.iter().enumerate() {
            let points: Vec<String> =
                self.rows.iter().map(|r| format!("{:.2},{:.2}", x(r.theta), y(f(r)))).collect();
            let _ = writeln!(svg, r#"<polyline points="{}" stroke="{color}" fill="none"/>"#, points.join(" "));
            for r in &self.rows {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x(r.theta), y(f(r)));
            }
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="12" fill="{color}">{label}</text>"#,
                pad + 8.0,
                pad + 14.0 * (i as f64 + 1.0)
            );
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12">theta</text>"#, w / 2.0, h - 8.0);
        svg.push_str("</svg>\n");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(theta_index: usize, replica: usize, consensus: bool, size: usize) -> RunRecord {
        RunRecord {
            spec_hash: "h".into(),
            theta_index,
            theta: 0.9 + theta_index as f64 * 0.05,
            replica,
            seed: 1,
            interior_consensus: consensus,
            interior_plus_fraction: if consensus { 1.0 } else { 0.5 },
            core_size: 10,
            core_density: 0.5,
            core_static_violations: 0,
            core_flips: 0,
            droplet_count: 1,
            max_droplet_size: size,
            interior_droplets: 1,
            interior_droplets_eliminated: usize::from(consensus),
            max_interior_droplet_size: size,
            mean_elimination_time: consensus.then_some(2.0),
            last_interior_flip: None,
            flips: 3,
            absorbed: consensus,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn empty_table_has_header() {
        let t = sweep_report(&[], &[]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("theta,replicas,consensus_fraction"));
    }

    #[test]
    fn single_replica_passes_through() {
        let t = sweep_report(&[record(0, 0, true, 4)], &[]);
        let row = &t.rows[0];
        assert_eq!(row.consensus_fraction, 1.0);
        assert_eq!(row.droplet_size_median, 4.0);
        assert_eq!(row.droplet_size_max, 4);
        assert_eq!(row.mean_elimination_time, Some(2.0));
    }

    #[test]
    fn groups_by_theta() {
        let recs = vec![record(1, 0, true, 1), record(0, 1, false, 9), record(0, 0, true, 3)];
        let t = sweep_report(&recs, &["theta".into(), "consensus_fraction".into()]);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].consensus_fraction, 0.5);
        assert_eq!(t.columns, vec!["theta", "consensus_fraction"]);
        assert!(t.to_svg().starts_with("<svg"));
    }
}
