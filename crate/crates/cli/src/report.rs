//! `report.csv`, `summary.csv`, `meta.toml` and SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use relubridge::stats::mean_std;

use crate::CliError;

pub const REPORT_HEADER: &str =
    "pair_id,component,K,sigma_hat,gap_dev_mid,deflection_mid,pm,pf,seed";
pub const SUMMARY_HEADER: &str = "series,x,mean,std,n";

/// One row of `report.csv`. `component` is -1 for count-only rows; missing
/// values are written as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub pair_id: usize,
    pub component: i64,
    pub k: usize,
    pub sigma_hat: Option<f64>,
    pub gap_dev_mid: Option<f64>,
    pub deflection_mid: Option<f64>,
    pub pm: Option<f64>,
    pub pf: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub series: String,
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl SummaryRow {
    pub fn new(series: impl Into<String>, x: f64, mean: f64, std: f64, n: usize) -> Self {
        SummaryRow {
            series: series.into(),
            x,
            mean,
            std,
            n,
        }
    }

    /// Mean and sample standard deviation of `values`.
    pub fn of(series: impl Into<String>, x: f64, values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        SummaryRow::new(series, x, mean, std, values.len())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
    /// Written to `meta.toml` in order.
    pub meta: Vec<(String, String)>,
}

impl ExperimentReport {
    pub fn series(&self, name: &str) -> Vec<&SummaryRow> {
        self.summary.iter().filter(|r| r.series == name).collect()
    }

    /// Mean of the first row of a series.
    pub fn value(&self, name: &str) -> Option<f64> {
        self.series(name).first().map(|r| r.mean)
    }

    pub fn series_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.summary {
            if !names.contains(&r.series) {
                names.push(r.series.clone());
            }
        }
        names
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.pair_id,
            r.component,
            r.k,
            opt(r.sigma_hat),
            opt(r.gap_dev_mid),
            opt(r.deflection_mid),
            opt(r.pm),
            opt(r.pf),
            r.seed
        );
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.series, r.x, r.mean, r.std, r.n);
    }
    s
}

fn bad_summary(line: usize, what: &str) -> CliError {
    CliError::Data(relubridge::Error::Malformed {
        path: "summary.csv".into(),
        detail: format!("line {line}: {what}"),
    })
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(bad_summary(1, "unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let [series, x, mean, std, n] = f.as_slice() else {
                return Err(bad_summary(i + 2, "expected 5 fields"));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad_summary(i + 2, "bad number"))
            };
            Ok(SummaryRow {
                series: series.to_string(),
                x: num(x)?,
                mean: num(mean)?,
                std: num(std)?,
                n: n.parse().map_err(|_| bad_summary(i + 2, "bad count"))?,
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A polyline of `(x, mean)` in a framed 640x400 canvas.
pub fn svg_plot(title: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(&mut finite.iter().map(|p| p.0));
    let (y0, y1) = span(&mut finite.iter().map(|p| p.1));
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let pts: Vec<String> = finite
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    for (label, x, y, anchor) in [
        (format!("{x0:.4}"), M, H - M + 18.0, "start"),
        (format!("{x1:.4}"), W - M, H - M + 18.0, "end"),
        (format!("{y0:.4}"), M - 4.0, H - M, "end"),
        (format!("{y1:.4}"), M - 4.0, M + 10.0, "end"),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="11">{label}</text>"#
        );
    }
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        pts.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| CliError::output(&p, e))
}

/// One SVG per summary series, named `<series>.svg`.
pub fn write_plots(summary: &[SummaryRow], dir: &Path) -> Result<Vec<String>, CliError> {
    let mut names = Vec::new();
    for r in summary {
        if !names.contains(&r.series) {
            names.push(r.series.clone());
        }
    }
    for name in &names {
        let pts: Vec<(f64, f64)> = summary
            .iter()
            .filter(|r| &r.series == name)
            .map(|r| (r.x, r.mean))
            .collect();
        write(dir, &format!("{name}.svg"), &svg_plot(name, &pts))?;
    }
    Ok(names)
}

pub fn meta_toml(meta: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        let _ = writeln!(s, "{k} = {}", toml_value(v));
    }
    s
}

fn toml_value(v: &str) -> String {
    if v.parse::<i64>().is_ok()
        || (v.parse::<f64>().is_ok_and(|f| f.is_finite()) && v.contains('.'))
    {
        v.to_owned()
    } else {
        format!("{:?}", v)
    }
}

pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<(), CliError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    write(dir, "report.csv", &report_csv(&report.rows))?;
    write(dir, "summary.csv", &summary_csv(&report.summary))?;
    write(dir, "meta.toml", &meta_toml(&report.meta))?;
    write_plots(&report.summary, dir)?;
    Ok(())
}
